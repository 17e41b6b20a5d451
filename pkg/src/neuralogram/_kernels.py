"""Fused inner loops for the two memory-bound hot spots.

Everything else in the network core is numpy + BLAS; these two kernels
replace multi-pass numpy expressions with single-pass loops (2-4x faster
on large parameter/gradient arrays).  Both are deterministic: plain
IEEE arithmetic in a fixed order, no fastmath, single-threaded.

If numba is unavailable the callers fall back to equivalent vectorized
numpy (same math, more memory passes).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected Adam step, in place, over flat arrays."""
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for i in range(p.size):
        gi = g[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= lr * (mi / bc1) / (np.sqrt(vi / bc2) + eps)


def adam_update_numpy(p, g, m, v, t, lr, beta1, beta2, eps):
    """Vectorized fallback with the same update formula."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * np.square(g)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


@njit(cache=True)
def col2im_stride1(dcols, dx):
    """Scatter-add column gradients back to the input, stride 1.

    dcols: (kh, kw, C, N, Ho, Wo); dx: (C, N, H, W), overwritten.
    """
    kh, kw = dcols.shape[0], dcols.shape[1]
    C, N, H, W = dx.shape
    Ho = H - kh + 1
    Wo = W - kw + 1
    for c in range(C):
        for n in range(N):
            for i in range(H):
                row = dx[c, n, i]
                for j in range(W):
                    row[j] = 0.0
                for a in range(kh):
                    ii = i - a
                    if ii < 0 or ii >= Ho:
                        continue
                    for b in range(kw):
                        src = dcols[a, b, c, n, ii]
                        hi = min(W, Wo + b)
                        for j in range(b, hi):
                            row[j] += src[j - b]


def col2im_numpy(dcols, dx, stride):
    """Fallback (and general-stride) scatter-add."""
    kh, kw = dcols.shape[0], dcols.shape[1]
    ho, wo = dcols.shape[4], dcols.shape[5]
    dx[:] = 0.0
    for a in range(kh):
        for b in range(kw):
            dx[:, :, a: a + ho * stride: stride,
               b: b + wo * stride: stride] += dcols[a, b]
