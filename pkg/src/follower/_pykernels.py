"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``.

Signatures and results are identical; these are used when the extension
is not built or ``FOLLOWER_PURE_PYTHON`` is set.
"""

import numpy as np


def _shift_reduce(mask, k, axis, reduce):
    r = k // 2
    n = mask.shape[axis]
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(mask, pad, constant_values=0)
    out = padded.take(range(0, n), axis=axis)
    for s in range(1, k):
        out = reduce(out, padded.take(range(s, s + n), axis=axis))
    return out


def binary_erode(mask, k):
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    if k <= 1:
        return mask.copy()
    out = _shift_reduce(mask, k, 1, np.minimum)
    return np.ascontiguousarray(_shift_reduce(out, k, 0, np.minimum))


def binary_dilate(mask, k):
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    if k <= 1:
        return mask.copy()
    out = _shift_reduce(mask, k, 1, np.maximum)
    return np.ascontiguousarray(_shift_reduce(out, k, 0, np.maximum))


def hough_vote(ys, xs, ring_dy, ring_dx, ring_ptr, y0, x0, h, w):
    """Accumulate circle votes.

    Each point (ys[i], xs[i]) votes for every centre (y + dy, x + dx) on the
    ring of each radius index ``j`` (offsets ``ring_ptr[j]:ring_ptr[j+1]``).
    The accumulator covers rows ``y0..y0+h-1`` and columns ``x0..x0+w-1``.
    """
    n_r = len(ring_ptr) - 1
    acc = np.zeros((n_r, h, w), dtype=np.int32)
    ys = np.asarray(ys, dtype=np.int64) - y0
    xs = np.asarray(xs, dtype=np.int64) - x0
    if ys.size == 0:
        return acc
    flat = acc.reshape(-1)
    for j in range(n_r):
        dy = np.asarray(ring_dy[ring_ptr[j]:ring_ptr[j + 1]], dtype=np.int64)
        dx = np.asarray(ring_dx[ring_ptr[j]:ring_ptr[j + 1]], dtype=np.int64)
        cy = (ys[:, None] + dy[None, :]).ravel()
        cx = (xs[:, None] + dx[None, :]).ravel()
        ok = (cy >= 0) & (cy < h) & (cx >= 0) & (cx < w)
        idx = (j * h + cy[ok]) * w + cx[ok]
        flat += np.bincount(idx, minlength=flat.size).astype(np.int32)
    return acc
