"""Approximation operators on a scaled shift-invariant space.

Projection and interpolation produce a :class:`CoefficientField` ``c``; the
approximation is ``sum_k c[k] phi(x/h - k)``.  All operators assume a
separable (tensor-product) kernel.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal

from .dfilter import DiscreteFilter, dual_filter, filter_valid, prefilter
from .kernel import PiecewisePolyKernel, _multi_indices
from .spaces import GridSignal, simpson_weights

__all__ = [
    "CoefficientField",
    "CoverageError",
    "synthesize",
    "synthesize_grid",
    "synthesis_rows",
    "project",
    "interpolate",
    "Mollifier",
    "smoothing_kernel_weights",
    "smooth",
    "finite_difference",
    "directional_derivative",
]


class CoverageError(ValueError):
    """Evaluation point not covered by the stored coefficients."""


@dataclass(frozen=True)
class CoefficientField:
    values: np.ndarray
    first: tuple[int, ...]
    h: float
    kernel: PiecewisePolyKernel
    provenance: str = "manual"

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != self.kernel.dim:
            raise ValueError("coefficient array and kernel dimensions differ")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "first", tuple(int(i) for i in np.atleast_1d(self.first)))

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def last(self) -> tuple[int, ...]:
        return tuple(f + n - 1 for f, n in zip(self.first, self.values.shape))

    def covered_window(self) -> tuple[tuple[float, float], ...]:
        """Box on which every contributing coefficient is stored."""
        out = []
        for (a, b), f, l in zip(self.kernel.support, self.first, self.last):
            out.append(((f + b) * self.h, (l + a) * self.h))
        return tuple(out)

    def to_json(self) -> str:
        return json.dumps(
            {
                "h": self.h,
                "support": [list(self.first), list(self.last)],
                "values": self.values.tolist(),
                "provenance": self.provenance,
            }
        )


def _axis_weights(axis, t, first, n):
    """Banded synthesis matrix of one axis: rows ``t``, columns coefficient indices."""
    a, b = axis.support
    width = int(math.ceil(b - a)) + 1
    top = np.floor(t - a).astype(np.int64)
    ks = top[:, None] - np.arange(width)[None, :]
    vals = axis(t[:, None] - ks)
    idx = ks - first
    ok = (idx >= 0) & (idx < n)
    needed = vals != 0
    if np.any(needed & ~ok):
        raise CoverageError("evaluation points need coefficients outside the stored support")
    return np.clip(idx, 0, n - 1), np.where(ok, vals, 0.0)


def _apply_axis(arr, axis, idx, vals):
    moved = np.moveaxis(arr, axis, 0)
    out = np.zeros((idx.shape[0],) + moved.shape[1:])
    for w in range(idx.shape[1]):
        shape = (-1,) + (1,) * (moved.ndim - 1)
        out += vals[:, w].reshape(shape) * moved[idx[:, w]]
    return np.moveaxis(out, 0, axis)


def synthesize(c: CoefficientField, x) -> np.ndarray:
    """``sum_k c[k] phi(x/h - k)`` at arbitrary points (shape ``(..., d)``, or 1-D array if d = 1)."""
    x = np.asarray(x, dtype=float)
    d = c.dim
    scalar = x.ndim == 0
    pts = x.reshape(-1, d) if not (d == 1 and x.ndim <= 1) else np.atleast_1d(x)[:, None]
    t = pts / c.h
    total = np.ones((pts.shape[0], 1))
    parts = []
    for i, axis in enumerate(c.kernel.axes):
        parts.append(_axis_weights(axis, t[:, i], c.first[i], c.values.shape[i]))
    width = [p[0].shape[1] for p in parts]
    out = np.zeros(pts.shape[0])
    for offs in np.ndindex(*width):
        w = total[:, 0].copy()
        idx = []
        for i, o in enumerate(offs):
            w *= parts[i][1][:, o]
            idx.append(parts[i][0][:, o])
        out += w * c.values[tuple(idx)]
    if scalar:
        return out[0]
    shape = x.shape if (d == 1 and x.ndim <= 1) else x.shape[:-1]
    return out.reshape(shape)


def synthesis_rows(c: CoefficientField, T: float, m: int):
    """Row-block evaluator of the approximation on the grid of step ``h/m`` over ``[-T, T]^d``.

    Returns ``(block, n)`` where ``block(i0, i1)`` gives the approximation on
    grid rows ``i0 .. i1 - 1``; intended for :func:`siapprox.spaces.blockwise_norm`.
    """
    step = c.h / m
    n = int(round(2 * T / step)) + 1
    if abs((2 * T / step) - (n - 1)) > 1e-9 * n:
        raise ValueError("window not aligned with the synthesis grid")
    t = (-T + step * np.arange(n)) / c.h
    mats = [_axis_weights(axis, t, c.first[i], c.values.shape[i]) for i, axis in enumerate(c.kernel.axes)]
    # contract trailing axes once; rows are produced on demand
    rest = c.values
    for i in range(c.dim - 1, 0, -1):
        rest = _apply_axis(rest, i, *mats[i])
    idx0, val0 = mats[0]

    def block(i0, i1):
        return _apply_axis(rest, 0, idx0[i0:i1], val0[i0:i1])

    return block, n


def synthesize_grid(c: CoefficientField, T: float, m: int) -> GridSignal:
    """Approximation sampled on the aligned grid of step ``h/m`` over ``[-T, T]^d``."""
    block, n = synthesis_rows(c, T, m)
    return GridSignal(block(0, n), T, c.h / m, provenance=f"synthesis[{c.provenance}]")


def _kernel_m(h: float, step: float) -> int:
    m = h / step
    if abs(m - round(m)) > 1e-9 * m:
        raise ValueError(f"h = {h} is not an integer multiple of the grid step {step}")
    return int(round(m))


def _analysis_taps(axis, m: int) -> tuple[np.ndarray, float]:
    """Simpson taps of ``int g(t) phi(t) dt`` on the grid ``a + j/m`` over the support."""
    a, b = axis.support
    span = (b - a) * m
    if abs(span - round(span)) > 1e-9 or any(abs(((k - a) * m) % 2) > 1e-9 for k in axis.knots):
        raise ValueError("knots must fall on even Simpson panel boundaries; increase m")
    n = int(round(span)) + 1
    t = a + np.arange(n) / m
    # one-sided values at knots do not matter: B-splines are continuous except order 1,
    # whose jumps sit on panel ends where both sides are weighted by the rule
    vals = 0.5 * (axis(t) + axis(t - 1e-13)) if axis.degree == 0 else axis(t)
    return vals * simpson_weights(n, 1.0 / m), a


def _analysis_axis(arr, axis, taps, m, i0, k_first, n_k):
    """``out[k] = sum_j taps[j] * arr[i0 + m*(k - k_first) + j]`` along ``axis``."""
    moved = np.moveaxis(arr, axis, 0)
    out = np.zeros((n_k,) + moved.shape[1:])
    for j, w in enumerate(taps):
        if w == 0:
            continue
        start = i0 + j
        out += w * moved[start : start + m * (n_k - 1) + 1 : m]
    return np.moveaxis(out, 0, axis)


def _coeff_range(a, b, T, h):
    lo = math.ceil(-T / h - a - 1e-9)
    hi = math.floor(T / h - b + 1e-9)
    return lo, hi


def analysis_samples(f, kernel: PiecewisePolyKernel, h: float, *, T: float | None = None, m: int = 16, rows: int = 128):
    """``s[k] = h^-d int f(y) phi(y/h - k) dy`` for every ``k`` whose support lies in the window.

    ``f`` is a :class:`GridSignal` (its step sets ``m``) or a callable, in
    which case it is sampled on the aligned grid of step ``h/m`` over
    ``[-T, T]^d`` in row blocks.
    """
    d = kernel.dim
    if isinstance(f, GridSignal):
        if f.dim != d:
            raise ValueError("signal and kernel dimensions differ")
        T, m = f.T, _kernel_m(h, f.step)
    elif T is None:
        raise ValueError("a window T is required for callable signals")
    if m < 8:
        raise ValueError(f"need at least 8 grid points per h, got {m}")
    step = h / m
    n = int(round(2 * T / step)) + 1
    if abs(2 * T / step - (n - 1)) > 1e-9 * n:
        raise ValueError("window not aligned with h/m")
    taps, firsts, ranges = [], [], []
    for axis in kernel.axes:
        tp, a = _analysis_taps(axis, m)
        lo, hi = _coeff_range(a, axis.support[1], T, h)
        if hi < lo:
            raise ValueError("window too small for the kernel support")
        i0 = (lo + a) * h / step + T / step
        if abs(i0 - round(i0)) > 1e-6:
            raise ValueError("kernel support not aligned with the grid")
        taps.append(tp)
        firsts.append(int(round(i0)))
        ranges.append((lo, hi - lo + 1))
    ax = -T + step * np.arange(n)

    def rows_of(i0, i1):
        if isinstance(f, GridSignal):
            return np.asarray(f.values[i0:i1], dtype=float)
        if d == 1:
            return np.asarray(f(ax[i0:i1]), dtype=float)
        pts = np.stack(np.meshgrid(ax[i0:i1], *([ax] * (d - 1)), indexing="ij"), axis=-1)
        return np.asarray(f(pts), dtype=float)

    if d == 1:
        s = _analysis_axis(rows_of(0, n), 0, taps[0], m, firsts[0], ranges[0][0], ranges[0][1])
    else:
        # contract trailing axes block by block, then the first axis
        partial = np.empty((n,) + tuple(r[1] for r in ranges[1:]))
        for i0 in range(0, n, rows):
            i1 = min(n, i0 + rows)
            blk = rows_of(i0, i1)
            for ax_i in range(1, d):
                blk = _analysis_axis(blk, ax_i, taps[ax_i], m, firsts[ax_i], ranges[ax_i][0], ranges[ax_i][1])
            partial[i0:i1] = blk
        s = _analysis_axis(partial, 0, taps[0], m, firsts[0], ranges[0][0], ranges[0][1])
    return s, tuple(r[0] for r in ranges)


_FILTER_CACHE: dict[tuple[str, str, int], DiscreteFilter] = {}


def _cached(kind, kernel, N):
    key = (kind, kernel.to_json(), N)
    if key not in _FILTER_CACHE:
        _FILTER_CACHE[key] = (dual_filter if kind == "dual" else prefilter)(kernel, N)
    return _FILTER_CACHE[key]


def project(f, kernel: PiecewisePolyKernel, h: float, *, T: float | None = None, m: int = 16, N: int = 4096, dual: DiscreteFilter | None = None) -> CoefficientField:
    """Coefficients of the projection onto the scaled shift-invariant space.

    Two stages: analysis samples by knot-aligned Simpson quadrature, then
    filtering with the inverse autocorrelation (dual) filter.  Coefficients
    whose filter window would leave the signal's window are dropped.
    """
    s, first = analysis_samples(f, kernel, h, T=T, m=m)
    q = dual if dual is not None else _cached("dual", kernel, N)
    c, first_c = filter_valid(s, first, q)
    return CoefficientField(c, first_c, h, kernel, "projection")


def interpolate(f, kernel: PiecewisePolyKernel, h: float, *, T: float | None = None, N: int = 4096, pre: DiscreteFilter | None = None) -> CoefficientField:
    """Coefficients ``c = f(h .) * a`` of the interpolating approximation.

    ``f`` is a :class:`GridSignal` whose step divides ``h`` or a callable
    together with a window ``T``.  Samples are taken at every ``hk`` inside
    the window.
    """
    d = kernel.dim
    if isinstance(f, GridSignal):
        m = _kernel_m(h, f.step)
        T = f.T
        K = int(math.floor(T / h + 1e-9))
        off = (T - K * h) / f.step
        if abs(off - round(off)) > 1e-9:
            raise ValueError("sampling nodes h*k are not grid nodes")
        sl = slice(int(round(off)), int(round(off)) + 2 * K * m + 1, m)
        samples = np.asarray(f.values[(sl,) * d], dtype=float)
    else:
        if T is None:
            raise ValueError("a window T is required for callable signals")
        K = int(math.floor(T / h + 1e-9))
        ax = h * np.arange(-K, K + 1)
        if d == 1:
            samples = np.asarray(f(ax), dtype=float)
        else:
            pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1)
            samples = np.asarray(f(pts), dtype=float)
    a = pre if pre is not None else _cached("pre", kernel, N)
    c, first = filter_valid(samples, (-K,) * d, a)
    return CoefficientField(c, first, h, kernel, "interpolation")


@dataclass(frozen=True)
class Mollifier:
    """Normalised bump ``c * exp(-1 / (1 - |(u - center)/radius|^2))``.

    The support ``|u - center| < radius`` must lie inside ``[-1, 1]^d``.
    """

    dim: int = 1
    center: float | tuple[float, ...] = 0.0
    radius: float = 1.0

    def __post_init__(self):
        c = np.broadcast_to(np.asarray(self.center, dtype=float), (self.dim,))
        if self.radius <= 0 or np.any(np.abs(c) + self.radius > 1 + 1e-12):
            raise ValueError("mollifier support must lie inside [-1, 1]^d")
        object.__setattr__(self, "center", tuple(float(v) for v in c))

    @property
    def normalization(self) -> float:
        d = self.dim
        radial, _ = integrate.quad(lambda s: math.exp(-1 / (1 - s * s)) * s ** (d - 1), 0, 1, epsabs=1e-15, epsrel=1e-13)
        sphere = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
        return 1.0 / (sphere * radial * self.radius**d)

    def moments(self, order: int) -> dict[tuple[int, ...], float]:
        """``int u^l chi(u) du`` for every ``|l| <= order``."""
        d, r = self.dim, self.radius
        c = np.asarray(self.center)
        norm = self.normalization
        radial = [
            integrate.quad(lambda s, k=k: s ** (k + d - 1) * math.exp(-1 / (1 - s * s)), 0, 1, epsabs=1e-16, epsrel=1e-13)[0]
            for k in range(order + 1)
        ]

        def ball(l):
            # moment of the unit radial bump: zero unless every exponent is even
            if any(i % 2 for i in l):
                return 0.0
            ang = 2 * math.prod(math.gamma((i + 1) / 2) for i in l) / math.gamma((sum(l) + d) / 2)
            return norm * r**d * radial[sum(l)] * ang

        out = {}
        for n in range(order + 1):
            for l in _multi_indices(d, n):
                total = 0.0
                for k in np.ndindex(*(i + 1 for i in l)):
                    coef = math.prod(math.comb(li, ki) * c[j] ** (li - ki) * r**ki for j, (li, ki) in enumerate(zip(l, k)))
                    total += coef * ball(k)
                out[l] = total
        return out

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.dim == 1 and (u.ndim == 0 or u.shape[-1] != 1):
            r2 = ((u - self.center[0]) / self.radius) ** 2
        else:
            r2 = np.sum(((u - np.asarray(self.center)) / self.radius) ** 2, axis=-1)
        inside = r2 < 1
        out = np.zeros_like(r2)
        out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
        return self.normalization * out


def smoothing_kernel_weights(L: int) -> list[tuple[int, int]]:
    """Pairs ``(n, (-1)^(n-1) C(L, n))`` defining the smoothing kernel."""
    return [(n, (-1) ** (n - 1) * math.comb(L, n)) for n in range(1, L + 1)]


def _moment_corrected(taps, u, moments):
    """Smallest relative change of ``taps`` that makes its moments exact."""
    keys = list(moments)
    V = np.stack([np.prod(u ** np.asarray(l), axis=-1).ravel() for l in keys], axis=1)
    t = taps.ravel()
    G = V.T @ (t[:, None] * V)
    lam = np.linalg.solve(G, np.array([moments[l] for l in keys]) - V.T @ t)
    return (t * (1 + V @ lam)).reshape(taps.shape)


def smooth(f: GridSignal, h: float, L: int, chi: Mollifier | None = None) -> GridSignal:
    """Smoothed signal ``f * psi_h`` with ``psi_h = sum_n (-1)^(n-1) C(L,n) (nh)^-d chi(./(nh))``.

    Each scaled mollifier is sampled on the signal grid and its moments up
    to order ``L`` are corrected to the exact ones; plain sampling leaves a
    moment error that does not shrink with ``h`` and caps the rate.  The
    output lives on the window shrunk by ``L * h``.
    """
    d = f.dim
    chi = chi or Mollifier(d)
    if chi.dim != d:
        raise ValueError("mollifier and signal dimensions differ")
    m = _kernel_m(h, f.step)
    if 2 * chi.radius * m < 16:
        raise ValueError(f"h = {h} leaves fewer than 16 grid points across the mollifier support")
    T_out = f.T - L * h
    if T_out <= 0:
        raise ValueError("window too small for the smoothing margin")
    moments = chi.moments(L)
    out = 0.0
    for n, coef in smoothing_kernel_weights(L):
        r = n * m  # half-width of the scaled support in grid nodes
        u = np.arange(-r, r + 1) / m / n
        pts = u[:, None] if d == 1 else np.stack(np.meshgrid(*([u] * d), indexing="ij"), axis=-1)
        taps = chi(pts[..., 0] if d == 1 else pts)
        taps = _moment_corrected(taps / taps.sum(), pts, moments)
        conv = signal.convolve(f.values, taps, mode="valid", method="direct" if d == 1 else "auto")
        # conv covers [-T + n h, T - n h]; crop to the common window
        crop = (L - n) * m
        sl = (slice(crop, conv.shape[0] - crop),) * d
        out = out + coef * conv[sl]
    return GridSignal(out, T_out, f.step, None, f"smooth[{f.provenance}](h={h},L={L})", f.growth)


def finite_difference(f, u, L: int, x) -> np.ndarray:
    """``L``-th order backward difference ``sum_n (-1)^n C(L,n) f(x - n u)``."""
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    return sum((-1) ** n * math.comb(L, n) * np.asarray(f(x - n * u)) for n in range(L + 1))


def directional_derivative(f, u, L: int, x) -> np.ndarray:
    """``(u . grad)^L f(x)`` by multinomial expansion over analytic partials."""
    partial = getattr(f, "partial", None)
    if partial is None or L > getattr(f, "max_order", -1):
        raise ValueError(f"signal does not provide partial derivatives of order {L}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    d = u.size
    total = 0.0
    for l in _multi_indices(d, L):
        coef = math.factorial(L) / math.prod(math.factorial(i) for i in l)
        total = total + coef * np.prod(u ** np.asarray(l)) * partial(l)(x)
    return total
