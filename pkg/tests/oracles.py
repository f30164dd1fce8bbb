"""Reference implementations written independently of the package.

These use plain Python floats and textbook formulas so that the package's
vectorised code is checked against something that shares none of its code.
"""

import math


def adam_reference(grad_fn, w0, steps, eta=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam (Kingma & Ba, Algorithm 1). Returns the list of iterates."""
    w, m, v = float(w0), 0.0, 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        w = w - eta * m_hat / (math.sqrt(v_hat) + eps)
        out.append(w)
    return out


def rgb_to_hsv_reference(r, g, b):
    """Hue in degrees, saturation and value as fractions."""
    r, g, b = r / 255.0, g / 255.0, b / 255.0
    mx, mn = max(r, g, b), min(r, g, b)
    d = mx - mn
    if d == 0:
        h = 0.0
    elif mx == r:
        h = 60.0 * (((g - b) / d) % 6)
    elif mx == g:
        h = 60.0 * ((b - r) / d + 2)
    else:
        h = 60.0 * ((r - g) / d + 4)
    s = 0.0 if mx == 0 else d / mx
    return h, s, mx


def disc_aabb_distance(px, py, x0, y0, x1, y1):
    """Euclidean distance from a point to an axis-aligned rectangle."""
    dx = max(x0 - px, 0.0, px - x1)
    dy = max(y0 - py, 0.0, py - y1)
    return math.hypot(dx, dy)
