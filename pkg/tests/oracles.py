"""Independent reference computations used by the tests.

Nothing here imports the package's kernel or filter constructions; each
oracle recomputes its quantity from first principles.
"""
import math

import numpy as np

_GX, _GW = np.polynomial.legendre.leggauss(12)


def bspline_by_convolution(L, x):
    """Causal order-``L`` B-spline via ``beta_L(x) = int_0^1 beta_{L-1}(x - t) dt``.

    Each level splits ``[0, 1]`` where ``x - t`` crosses an integer so that
    Gauss-Legendre integrates polynomial pieces exactly.
    """
    x = np.asarray(x, dtype=float)
    if L == 1:
        return ((x >= 0.0) & (x < 1.0)).astype(float)
    frac = (x - np.floor(x))[..., None]
    u = 0.5 * (_GX + 1.0)
    # pieces [0, frac] and [frac, 1]; an empty piece has zero width
    t1, t2 = frac * u, frac + (1.0 - frac) * u
    v1 = bspline_by_convolution(L - 1, x[..., None] - t1)
    v2 = bspline_by_convolution(L - 1, x[..., None] - t2)
    return 0.5 * (frac[..., 0] * (v1 @ _GW) + (1.0 - frac[..., 0]) * (v2 @ _GW))


def cubic_prefilter_by_poles(k):
    """Centred cubic interpolation prefilter from its pole ``z0 = sqrt(3) - 2``.

    ``6 / (z + 4 + 1/z)`` expands to ``-6 z0 / (1 - z0^2) * z0^|k|``.
    """
    z0 = math.sqrt(3.0) - 2.0
    return -6.0 * z0 / (1.0 - z0 * z0) * z0 ** abs(int(k))


def brute_force_synthesis(coeffs, first, kernel_fn, h, x):
    """``sum_k c[k] phi(x/h - k)`` by an explicit loop over every stored coefficient."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    for i, c in enumerate(coeffs):
        out += c * kernel_fn(x / h - (first + i))
    return out
