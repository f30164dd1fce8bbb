"""Colour-based ball detection on 320x240 RGB frames.

Pipeline: HSV threshold -> morphological opening -> Gaussian blur of the
mask -> re-binarize -> Hough circle voting.  Frames are ``uint8`` arrays
of shape (240, 320, 3); pixel (row, col) has its centre at integer
coordinates (x=col, y=row).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from follower._backend import kernels

FRAME_WIDTH = 320
FRAME_HEIGHT = 240
CENTER_X = FRAME_WIDTH // 2


class Proximity(enum.IntEnum):
    FAR = 0    # drawn green
    CLOSE = 1  # drawn red


@dataclass(frozen=True)
class HsvRange:
    h_lo: float = 45.0
    h_hi: float = 75.0
    s_lo: float = 0.4
    s_hi: float = 1.0
    v_lo: float = 0.3
    v_hi: float = 1.0

    def __post_init__(self):
        if self.s_lo > self.s_hi or self.v_lo > self.v_hi:
            raise ValueError("saturation/value bounds must satisfy lo <= hi")


@dataclass(frozen=True)
class VisionConfig:
    hsv_range: HsvRange = field(default_factory=HsvRange)
    threshold_radius_px: float = 40.0
    open_kernel: int = 5
    blur_kernel: int = 9
    blur_sigma: float = 2.0
    hough_r_min: int = 5
    hough_r_max: int = 110
    # Fixed vote floor; when None the floor is vote_fraction * 2*pi*r.
    hough_min_votes: Optional[float] = None
    hough_vote_fraction: float = 0.5

    def __post_init__(self):
        for k in (self.open_kernel, self.blur_kernel):
            if k < 1 or k % 2 == 0:
                raise ValueError("kernel sizes must be odd and >= 1")
        if not 0 < self.hough_r_min < self.hough_r_max < 120:
            raise ValueError("need 0 < hough_r_min < hough_r_max < 120")


@dataclass(frozen=True)
class Detection:
    x_angle: int
    y_px: int
    radius_px: int
    proximity: Proximity
    votes: int = 0

    def to_json(self) -> dict:
        return {
            "detected": True,
            "x_angle": self.x_angle,
            "y_px": self.y_px,
            "radius_px": self.radius_px,
            "proximity": self.proximity.name.lower(),
            "votes": self.votes,
        }


def check_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.shape != (FRAME_HEIGHT, FRAME_WIDTH, 3) or frame.dtype != np.uint8:
        raise ValueError(
            f"expected uint8 frame of shape {(FRAME_HEIGHT, FRAME_WIDTH, 3)}, "
            f"got {frame.dtype} {frame.shape}"
        )
    return frame


# ---------------------------------------------------------------- colour


def rgb_to_hsv(r: int, g: int, b: int) -> tuple[float, float, float]:
    """Hexcone RGB (0-255) -> (hue degrees, saturation, value)."""
    h, s, v = frame_to_hsv(np.array([[[r, g, b]]], dtype=np.uint8))
    return float(h[0, 0]), float(s[0, 0]), float(v[0, 0])


def frame_to_hsv(frame: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rgb = np.asarray(frame, dtype=np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    cmax = rgb.max(axis=-1)
    cmin = rgb.min(axis=-1)
    delta = cmax - cmin
    safe = np.where(delta > 0, delta, 1.0)

    h = np.zeros_like(cmax)
    rmax = (delta > 0) & (cmax == r)
    gmax = (delta > 0) & (cmax == g) & ~rmax
    bmax = (delta > 0) & ~rmax & ~gmax
    h[rmax] = (60.0 * (g - b) / safe)[rmax] % 360.0
    h[gmax] = (60.0 * (b - r) / safe + 120.0)[gmax]
    h[bmax] = (60.0 * (r - g) / safe + 240.0)[bmax]
    h[h >= 360.0] -= 360.0

    s = np.where(cmax > 0, delta / np.where(cmax > 0, cmax, 1.0), 0.0)
    return h, s, cmax


def threshold_mask(frame: np.ndarray, hsv_range: HsvRange) -> np.ndarray:
    """Boolean mask of pixels whose HSV lies inside ``hsv_range``.

    A range with ``h_lo > h_hi`` wraps through 0 degrees.
    """
    frame = np.asarray(frame)
    r, g, b = frame[..., 0], frame[..., 1], frame[..., 2]
    cmax = np.maximum(np.maximum(r, g), b)
    delta = cmax - np.minimum(np.minimum(r, g), b)
    v = cmax / 255.0
    s = np.where(cmax > 0, delta / np.maximum(cmax, 1), 0.0)
    mask = (
        (s >= hsv_range.s_lo) & (s <= hsv_range.s_hi)
        & (v >= hsv_range.v_lo) & (v <= hsv_range.v_hi)
    )
    # hue only for the (usually few) pixels that pass saturation and value
    h = frame_to_hsv(frame[mask])[0]
    if hsv_range.h_lo <= hsv_range.h_hi:
        hue_ok = (h >= hsv_range.h_lo) & (h <= hsv_range.h_hi)
    else:
        hue_ok = (h >= hsv_range.h_lo) | (h <= hsv_range.h_hi)
    mask[mask] = hue_ok
    return mask


# ---------------------------------------------------------------- filters


def _check_kernel(k: int) -> None:
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {k}")


def erode(mask: np.ndarray, kernel_px: int) -> np.ndarray:
    _check_kernel(kernel_px)
    return kernels.binary_erode(np.asarray(mask, dtype=np.uint8), kernel_px).astype(bool)


def dilate(mask: np.ndarray, kernel_px: int) -> np.ndarray:
    _check_kernel(kernel_px)
    return kernels.binary_dilate(np.asarray(mask, dtype=np.uint8), kernel_px).astype(bool)


def morphological_open(mask: np.ndarray, kernel_px: int) -> np.ndarray:
    """Square-element erosion then dilation; outside the image counts as 0."""
    return dilate(erode(mask, kernel_px), kernel_px)


def gaussian_taps(kernel_px: int, sigma: float) -> np.ndarray:
    _check_kernel(kernel_px)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = kernel_px // 2
    i = np.arange(-r, r + 1, dtype=np.float64)
    taps = np.exp(-(i * i) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def gaussian_blur(gray: np.ndarray, kernel_px: int, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge-clamped borders."""
    taps = gaussian_taps(kernel_px, sigma)
    r = kernel_px // 2
    img = np.asarray(gray, dtype=np.float64)
    for axis in (1, 0):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (r, r)
        padded = np.pad(img, pad, mode="edge")
        n = img.shape[axis]
        out = np.zeros_like(img)
        for s, t in enumerate(taps):
            out += t * padded.take(range(s, s + n), axis=axis)
        img = out
    return img


# ---------------------------------------------------------------- Hough


@lru_cache(maxsize=8)
def _rings(r_min: int, r_max: int):
    """Integer offsets per radius r: all (dy, dx) with r-0.5 < |(dy, dx)| <= r+0.5."""
    span = np.arange(-r_max - 1, r_max + 2)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    dist = np.sqrt(dy * dy + dx * dx)
    band = np.ceil(dist - 0.5 - 1e-9).astype(np.int64)
    all_dy, all_dx, ptr = [], [], [0]
    for r in range(r_min, r_max + 1):
        sel = band == r
        all_dy.append(dy[sel])
        all_dx.append(dx[sel])
        ptr.append(ptr[-1] + int(sel.sum()))
    return (
        np.concatenate(all_dy).astype(np.int32),
        np.concatenate(all_dx).astype(np.int32),
        np.asarray(ptr, dtype=np.int32),
    )


def boundary_pixels(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Set pixels with at least one clear in-image 4-neighbour."""
    m = np.asarray(mask, dtype=bool)
    clear_nb = np.zeros_like(m)
    clear_nb[1:, :] |= ~m[:-1, :]
    clear_nb[:-1, :] |= ~m[1:, :]
    clear_nb[:, 1:] |= ~m[:, :-1]
    clear_nb[:, :-1] |= ~m[:, 1:]
    ys, xs = np.nonzero(m & clear_nb)
    return ys, xs


def hough_circles(
    mask: np.ndarray,
    r_min: int,
    r_max: int,
    min_votes: Optional[float] = None,
    vote_fraction: float = 0.5,
) -> list[tuple[int, int, int, int]]:
    """Find circles in a binary mask.

    Returns ``(cx, cy, r, votes)`` tuples sorted by votes, strongest first.
    Boundary pixels vote on 1 px rings; the score of radius r is the sum
    of rings r-1 and r, i.e. a radial window of (r-1.5, r+0.5].  Boundary
    pixel centres of a filled disc of radius R lie in (R-1, R], which that
    window captures whole for r = round(R).  A cell qualifies when its votes
    reach ``min_votes`` (or, when that is None, ``vote_fraction * 2*pi*r``);
    qualifying cells are thinned by greedy suppression of any centre within
    ``r_min`` px of a stronger one.
    """
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    m = np.asarray(mask, dtype=bool)
    ys, xs = boundary_pixels(m)
    if ys.size == 0:
        return []
    h_img, w_img = m.shape

    # A circle collecting >= f*2*pi*r votes needs an arc of at least
    # f*2*pi*r/sqrt(2) (diagonal staircases carry sqrt(2) boundary pixels per
    # unit length); for f >= 0.5 that arc spans > 1.25 r along some axis.
    set_y, set_x = np.nonzero(m)
    extent = max(set_y.max() - set_y.min(), set_x.max() - set_x.min()) + 2
    if min_votes is None and vote_fraction >= 0.5:
        extent = math.ceil(extent / 1.25) + 1
    r_hi = int(min(r_max, extent))
    # No cell can collect more votes than there are boundary pixels.
    if min_votes is None:
        r_hi = min(r_hi, int(ys.size / (vote_fraction * 2.0 * math.pi)) + 1)
    elif ys.size < min_votes:
        return []
    if r_hi < r_min:
        return []
    y0 = max(0, int(set_y.min()) - r_hi)
    y1 = min(h_img, int(set_y.max()) + r_hi + 1)
    x0 = max(0, int(set_x.min()) - r_hi)
    x1 = min(w_img, int(set_x.max()) + r_hi + 1)

    ring_dy, ring_dx, ptr = _rings(int(r_min) - 1, int(r_max))
    ptr = ptr[: r_hi - r_min + 3]
    rings = kernels.hough_vote(
        ys.astype(np.int32), xs.astype(np.int32), ring_dy, ring_dx, ptr,
        y0, x0, y1 - y0, x1 - x0,
    )
    acc = rings[:-1] + rings[1:]

    radii = np.arange(r_min, r_hi + 1)
    if min_votes is None:
        floor = vote_fraction * 2.0 * math.pi * radii
    else:
        floor = np.full(radii.shape, float(min_votes))
    floor = np.maximum(floor, 1.0)
    live = np.nonzero(acc.reshape(len(radii), -1).max(axis=1) >= floor)[0]
    if live.size == 0:
        return []
    sub = acc[live]
    li, cy, cx = np.nonzero(sub >= floor[live][:, None, None])
    votes = sub[li, cy, cx]
    ri = live[li]
    # Strongest first; ties broken towards larger radius, then raster order.
    order = np.lexsort((cx, cy, -ri, -votes))

    kept: list[tuple[int, int, int, int]] = []
    r2 = float(r_min) ** 2
    for k in order:
        px, py = int(cx[k]) + x0, int(cy[k]) + y0
        if any((px - q[0]) ** 2 + (py - q[1]) ** 2 <= r2 for q in kept):
            continue
        kept.append((px, py, int(radii[ri[k]]), int(votes[k])))
    return kept


# ---------------------------------------------------------------- pipeline


def detection_mask(frame: np.ndarray, cfg: VisionConfig) -> np.ndarray:
    """The cleaned binary mask that Hough voting runs on."""
    mask = threshold_mask(check_frame(frame), cfg.hsv_range)
    mask = morphological_open(mask, cfg.open_kernel)
    out = np.zeros_like(mask)
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return out
    # Blur only around the blob: with a margin of two kernel radii the
    # crop's clamped border sees zeros, exactly like the full image.
    pad = 2 * (cfg.blur_kernel // 2) + 1
    y0, y1 = max(0, ys.min() - pad), min(mask.shape[0], ys.max() + pad + 1)
    x0, x1 = max(0, xs.min() - pad), min(mask.shape[1], xs.max() + pad + 1)
    blurred = gaussian_blur(mask[y0:y1, x0:x1] * 255.0, cfg.blur_kernel, cfg.blur_sigma)
    out[y0:y1, x0:x1] = blurred >= 128.0
    return out


def detect_object(frame: np.ndarray, cfg: VisionConfig = VisionConfig()) -> Optional[Detection]:
    """Locate the target ball; None means the object is not in view."""
    mask = detection_mask(frame, cfg)
    if not mask.any():
        return None
    found = hough_circles(
        mask, cfg.hough_r_min, cfg.hough_r_max,
        cfg.hough_min_votes, cfg.hough_vote_fraction,
    )
    if not found:
        return None
    cx, cy, r, votes = found[0]
    prox = Proximity.CLOSE if r > cfg.threshold_radius_px else Proximity.FAR
    return Detection(x_angle=cx, y_px=cy, radius_px=r, proximity=prox, votes=votes)


# ---------------------------------------------------------------- debug I/O

RED = (255, 0, 0)
GREEN = (0, 255, 0)


def circle_points(cx: int, cy: int, r: int) -> list[tuple[int, int]]:
    """Midpoint circle rasterisation, as (x, y) pairs."""
    pts = []
    x, y, d = r, 0, 1 - r
    while x >= y:
        for px, py in ((x, y), (y, x), (-y, x), (-x, y),
                       (-x, -y), (-y, -x), (y, -x), (x, -y)):
            pts.append((cx + px, cy + py))
        y += 1
        if d < 0:
            d += 2 * y + 1
        else:
            x -= 1
            d += 2 * (y - x) + 1
    return pts


def annotate(frame: np.ndarray, det: Optional[Detection]) -> np.ndarray:
    """Copy of ``frame`` with the detection circle burned in."""
    out = np.array(frame, dtype=np.uint8, copy=True)
    if det is None:
        return out
    color = RED if det.proximity == Proximity.CLOSE else GREEN
    h, w = out.shape[:2]
    for x, y in circle_points(det.x_angle, det.y_px, det.radius_px):
        if 0 <= x < w and 0 <= y < h:
            out[y, x] = color
    return out


def write_ppm(path, frame: np.ndarray) -> None:
    frame = np.asarray(frame, dtype=np.uint8)
    h, w = frame.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(frame).tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary (P6) PPM with maxval 255."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PPM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6)")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    pos += 1  # single whitespace after maxval
    body = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return body.reshape(h, w, 3).copy()
