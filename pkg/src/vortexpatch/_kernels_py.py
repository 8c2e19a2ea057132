"""Pure-numpy transport kernels; reference for and fallback to ``_kernels``."""

import numpy as np

LIMITERS = {"minmod": 0, "mc": 1, "superbee": 2}


def _limit(a, b, kind):
    same = a * b > 0
    aa, ab = np.abs(a), np.abs(b)
    if kind == 0:
        mag = np.minimum(aa, ab)
    elif kind == 1:
        mag = np.minimum(np.minimum(2 * aa, 2 * ab), 0.5 * (aa + ab))
    else:
        mag = np.maximum(np.minimum(2 * aa, ab), np.minimum(aa, 2 * ab))
    return np.where(same, np.sign(a) * mag, 0.0)


def _slopes(w, mask, axis, kind):
    n = w.shape[axis]
    lo = [slice(None)] * 2
    hi = [slice(None)] * 2
    lo[axis] = slice(0, n - 2)
    hi[axis] = slice(2, n)
    mid = [slice(None)] * 2
    mid[axis] = slice(1, n - 1)
    lo, mid, hi = tuple(lo), tuple(mid), tuple(hi)
    # outside neighbours mirror the cell itself, which zeroes the limited slope
    wl = np.where(mask[lo], w[lo], w[mid])
    wr = np.where(mask[hi], w[hi], w[mid])
    s = np.zeros_like(w)
    s[mid] = _limit(w[mid] - wl, wr - w[mid], kind)
    return s


def advection_rhs(w, mask, ux, uy, h, limiter):
    """``-div(u w)`` with limited MUSCL upwind face values.

    ``ux[i, j]`` is the normal velocity on the face between cells ``(i, j)``
    and ``(i+1, j)``; ``uy[i, j]`` between ``(i, j)`` and ``(i, j+1)``.
    Faces touching an exterior cell must carry zero velocity.
    """
    sx = _slopes(w, mask, 0, limiter)
    sy = _slopes(w, mask, 1, limiter)
    left = w[:-1, :] + 0.5 * sx[:-1, :]
    right = w[1:, :] - 0.5 * sx[1:, :]
    fx = np.where(ux > 0, ux * left, ux * right)
    low = w[:, :-1] + 0.5 * sy[:, :-1]
    high = w[:, 1:] - 0.5 * sy[:, 1:]
    fy = np.where(uy > 0, uy * low, uy * high)
    rhs = np.zeros_like(w)
    rhs[:-1, :] -= fx
    rhs[1:, :] += fx
    rhs[:, :-1] -= fy
    rhs[:, 1:] += fy
    return rhs / h
