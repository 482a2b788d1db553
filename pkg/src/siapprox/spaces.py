"""Weighted norms of grid signals and the operators they are built from.

Everything here works on :class:`GridSignal`, a uniform sampling of a
function over a symmetric box ``[-T, T]^d``.  Integrals use the composite
Simpson rule; sup-norms use the maximum over grid nodes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "weight",
    "GridSignal",
    "WeightedNormSpec",
    "NormResult",
    "HybridNormResult",
    "simpson_weights",
    "weighted_lp_norm",
    "sequence_norm",
    "hybrid_norm",
    "fd_weights",
    "derivative_magnitude",
    "fractional_derivative",
    "multiplier_derivatives",
    "blockwise_norm",
    "blockwise_norms",
]

TAIL_FLAG_FRACTION = 0.01


def weight(x, alpha: float) -> np.ndarray:
    """Sobolev weight ``(1 + |x|^2)^(alpha/2)``; ``x`` has shape ``(..., d)`` or is 1-D."""
    x = np.asarray(x, dtype=float)
    sq = x * x if x.ndim <= 1 else np.sum(x * x, axis=-1)
    return (1.0 + sq) ** (alpha / 2)


def _n_nodes(T: float, step: float) -> int:
    n = 2 * T / step
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ValueError(f"window half-width {T} is not a multiple of the step {step}")
    return int(round(n)) + 1


@dataclass(frozen=True)
class GridSignal:
    """Samples of a function on the grid ``-T + i * step``, ``i = 0 .. 2T/step``.

    ``source`` optionally carries the continuous object the samples came
    from (anything callable on points of shape ``(..., d)``); when it has a
    ``partial`` method, analytic derivatives are used instead of finite
    differences.  ``growth`` is ``(order, constant)`` with
    ``|f(x)| <= constant * <x>^order``.
    """

    values: np.ndarray
    T: float
    step: float
    source: Callable | None = field(default=None, repr=False)
    provenance: str = ""
    growth: tuple[float, float] | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values)
        n = _n_nodes(self.T, self.step)
        if any(s != n for s in v.shape):
            raise ValueError(f"expected {n} nodes per axis, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid signal contains NaN or Inf values")
        v = np.array(v, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def axis(self) -> np.ndarray:
        return -self.T + self.step * np.arange(self.n)

    def points(self) -> np.ndarray:
        ax = self.axis()
        if self.dim == 1:
            return ax
        return np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"), axis=-1)

    @classmethod
    def from_callback(cls, func, T: float, step: float, dim: int = 1, **kw) -> "GridSignal":
        n = _n_nodes(T, step)
        ax = -T + step * np.arange(n)
        if dim == 1:
            vals = func(ax)
        else:
            pts = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1)
            vals = func(pts)
        vals = np.broadcast_to(np.asarray(vals), (n,) * dim)
        kw.setdefault("source", func)
        kw.setdefault("growth", getattr(func, "growth", None))
        kw.setdefault("provenance", getattr(func, "name", "callback"))
        return cls(vals, T, step, **kw)

    def restrict(self, T: float) -> "GridSignal":
        """Sub-window ``[-T, T]^d`` (must be grid aligned)."""
        if T > self.T + 1e-12:
            raise ValueError("restriction window larger than the signal window")
        off = (self.T - T) / self.step
        if abs(off - round(off)) > 1e-9:
            raise ValueError("restriction window is not aligned with the grid")
        off = int(round(off))
        sl = (slice(off, self.n - off),) * self.dim
        return replace(self, values=self.values[sl], T=T)

    def with_values(self, values, **kw) -> "GridSignal":
        return replace(self, values=values, **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow([f"i{j}" for j in range(self.dim)] + ["value"])
        for idx in np.ndindex(self.values.shape):
            w.writerow([*idx, repr(float(np.real(self.values[idx])))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "dim": self.dim,
                "T": self.T,
                "step": self.step,
                "provenance": self.provenance,
                "values": np.real(self.values).tolist(),
            }
        )


@dataclass(frozen=True)
class WeightedNormSpec:
    """Which weighted norm to evaluate.

    ``sign = -1`` gives the growth-tolerant weight ``<x>^-alpha``, ``sign = +1``
    the growth-penalising weight ``<x>^alpha``.  ``T = None`` uses the whole
    window of the signal.
    """

    p: float = 2.0
    alpha: float = 0.0
    sign: int = -1
    T: float | None = None
    rule: str = "simpson"

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative; use sign for the direction")
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        if self.rule not in ("simpson", "trapezoid"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")

    @property
    def exponent(self) -> float:
        return self.sign * self.alpha


@dataclass(frozen=True)
class NormResult:
    norm: float
    tail_bound: float | None
    flagged: bool
    spec: WeightedNormSpec

    def to_json(self) -> str:
        return json.dumps(
            {
                "norm": self.norm,
                "tail_bound": self.tail_bound,
                "flagged": self.flagged,
                "p": self.spec.p,
                "alpha": self.spec.alpha,
                "sign": self.spec.sign,
                "T": self.spec.T,
                "rule": self.spec.rule,
            }
        )


def simpson_weights(n: int, step: float, rule: str = "simpson") -> np.ndarray:
    """Composite quadrature weights for ``n`` equispaced nodes."""
    w = np.full(n, step)
    w[0] = w[-1] = step / 2
    if rule == "trapezoid" or n < 3:
        return w
    if (n - 1) % 2:
        raise ValueError("composite Simpson needs an even number of panels")
    w = np.full(n, 2 * step / 3)
    w[1::2] = 4 * step / 3
    w[0] = w[-1] = step / 3
    return w


def _integrate(values: np.ndarray, step: float, rule: str) -> float:
    out = values
    for _ in range(values.ndim):
        w = simpson_weights(out.shape[0], step, rule)
        out = np.tensordot(w, out, axes=(0, 0))
    return float(out)


def _power_norm(a: np.ndarray, p: float, reduce) -> float:
    """``reduce(a**p) ** (1/p)`` for non-negative ``a``, scaled by ``max(a)`` so tiny or huge values neither underflow nor overflow."""
    s = float(np.max(a)) if a.size else 0.0
    if s == 0 or not math.isfinite(s):
        return s
    return s * reduce((a / s) ** p) ** (1 / p)


def _tail_bound(growth, exponent: float, p: float, T: float, d: int) -> float:
    """Bound on the weighted norm of ``f`` outside ``[-T, T]^d`` from its growth."""
    beta, C = growth
    if C == 0:
        return 0.0
    if math.isinf(p):
        if beta + exponent > 0:
            return math.inf
        return C * (1 + T * T) ** ((beta + exponent) / 2)
    gamma = (beta + exponent) * p
    if gamma + d >= 0:
        return math.inf
    sphere = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    return (C**p * sphere * T ** (gamma + d) / (-gamma - d)) ** (1 / p)


def _flagged(tail: float, norm: float, p: float) -> bool:
    """Whether the part of the norm outside the window may exceed 1% of it.

    For finite ``p`` the tail adds in ``p``-th powers, and the bound itself is
    compared with the windowed norm.  For ``p = inf`` the full norm is the
    larger of the windowed and outside sups, so only the excess counts.
    """
    if tail <= 0:
        return False
    if math.isinf(p):
        return bool(tail > (1 + TAIL_FLAG_FRACTION) * norm)
    return bool(tail > TAIL_FLAG_FRACTION * norm)


def weighted_lp_norm(f: GridSignal, spec: WeightedNormSpec) -> NormResult:
    """``(int |f(x) <x>^(sign*alpha)|^p dx)^(1/p)`` over the spec's window.

    The tail bound estimates what the window leaves out, from the signal's
    declared growth; the result is flagged when it may change the norm by
    more than 1%.
    """
    g = f if spec.T is None else f.restrict(spec.T)
    w = weight(g.points(), spec.exponent)
    integrand = np.abs(g.values) * w
    if math.isinf(spec.p):
        norm = float(np.max(integrand))
    else:
        norm = _power_norm(integrand, spec.p, lambda v: _integrate(v, g.step, spec.rule))
    tail = None
    flagged = False
    if g.growth is not None:
        tail = _tail_bound(g.growth, spec.exponent, spec.p, g.T, g.dim)
        flagged = _flagged(tail, norm, spec.p)
    return NormResult(norm, tail, flagged, spec)


def sequence_norm(c: np.ndarray, p: float, weights: np.ndarray | None = None) -> float:
    """Weighted ``l_p`` norm of a coefficient array."""
    a = np.abs(np.asarray(c))
    if weights is not None:
        a = a * weights
    if math.isinf(p):
        return float(np.max(a))
    return _power_norm(a, p, np.sum)


@dataclass(frozen=True)
class HybridNormResult:
    norm: float
    K: int
    tail_estimate: float


def hybrid_norm(f: GridSignal, p: float, alpha: float, K: int) -> HybridNormResult:
    """Mixed norm ``(int_[0,1]^d (sum_{|k|_inf<=K} |f(x+k)| <x+k>^alpha)^p dx)^(1/p)``.

    Uses the signal's callback when it has one, else folds the stored grid
    (which must then cover ``[-K-1, K+1]^d`` and have ``1/step`` integer).
    """
    d = f.dim
    m = 1.0 / f.step
    if abs(m - round(m)) > 1e-9:
        raise ValueError("hybrid norm needs 1/step to be an integer")
    m = int(round(m))
    cell = np.arange(m + 1) / m
    if f.source is None and f.T < K + 1:
        raise ValueError(f"window [-{f.T}, {f.T}] too small for fold radius {K}")
    shells = np.zeros((K + 1,) + (m + 1,) * d)
    cell_pts = np.stack(np.meshgrid(*([cell] * d), indexing="ij"), axis=-1)
    for k in np.ndindex(*([2 * K + 1] * d)):
        kk = np.asarray(k) - K
        pts = cell_pts + kk
        if f.source is not None:
            vals = np.asarray(f.source(pts if d > 1 else pts[..., 0]))
        else:
            idx = tuple(np.rint((pts[..., i] + f.T) / f.step).astype(int) for i in range(d))
            vals = f.values[idx]
        shells[int(np.max(np.abs(kk)))] += np.abs(vals) * weight(pts if d > 1 else pts[..., 0], alpha)
    total = shells.sum(axis=0)

    def reduce(a):
        if math.isinf(p):
            return float(np.max(a))
        return _power_norm(a, p, lambda v: _integrate(v, 1.0 / m, "simpson"))

    norm = reduce(total)
    last = reduce(shells[K])
    prev = reduce(shells[K - 1]) if K >= 1 else math.inf
    if last == 0:
        tail = 0.0
    elif prev > 0 and last < prev:
        q = last / prev
        tail = last * q / (1 - q)
    else:
        tail = math.inf
    return HybridNormResult(norm, K, tail)


def fd_weights(order: int, offsets: Sequence[float]) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative on ``offsets`` (unit step)."""
    s = np.asarray(offsets, dtype=float)
    n = s.size
    if n <= order:
        raise ValueError("stencil too small for the derivative order")
    A = np.vander(s, n, increasing=True).T / np.array([math.factorial(i) for i in range(n)])[:, None]
    rhs = np.zeros(n)
    rhs[order] = 1.0
    return np.linalg.solve(A, rhs)


def _fd_axis(values: np.ndarray, axis: int, order: int, step: float, acc: int):
    if order == 0:
        return values, 0
    half = (2 * ((order + 1) // 2) - 1 + acc) // 2
    n = values.shape[axis]
    size_side = order + acc
    if n < max(2 * half + 1, size_side):
        raise ValueError("grid too short for the finite-difference stencil")
    v = np.moveaxis(values, axis, 0)
    out = np.zeros_like(v, dtype=np.result_type(v, float))
    w = fd_weights(order, np.arange(-half, half + 1))
    for j, c in enumerate(w):
        out[half : n - half] += c * v[j : n - 2 * half + j]
    for i in list(range(half)) + list(range(n - half, n)):
        lo = min(max(i - size_side // 2, 0), n - size_side)
        offs = np.arange(lo, lo + size_side) - i
        ws = fd_weights(order, offs)
        out[i] = np.tensordot(ws, v[lo : lo + size_side], axes=(0, 0))
    return np.moveaxis(out / step**order, 0, axis), half


def _multinomial(l) -> int:
    return math.factorial(sum(l)) // math.prod(math.factorial(i) for i in l)


def derivative_magnitude(f: GridSignal, L: int, acc: int = 4) -> GridSignal:
    """Grid signal of ``sum_{|l| = L} (L! / l!) |d^l f|``.

    The multinomial weight counts every ordering of the partial derivatives,
    which makes ``|D_u^L f| <= |u|_inf^L * f^(L)`` hold pointwise.

    Uses ``f.source.partial`` when available, otherwise centred finite
    differences of accuracy ``acc`` with one-sided stencils in a boundary band
    that is recorded in the flags.
    """
    from .kernel import _multi_indices

    if acc < 4:
        raise ValueError("finite-difference accuracy order must be at least 4")
    d = f.dim
    partial = getattr(f.source, "partial", None)
    total = np.zeros(f.values.shape)
    flags = list(f.flags)
    if partial is not None:
        pts = f.points()
        for l in _multi_indices(d, L):
            total += _multinomial(l) * np.abs(np.asarray(partial(l)(pts)))
        prov = "analytic"
    else:
        band = 0
        for l in _multi_indices(d, L):
            out = f.values
            for axis, li in enumerate(l):
                out, b = _fd_axis(out, axis, li, f.step, acc)
                band = max(band, b)
            total += _multinomial(l) * np.abs(out)
        if band:
            flags.append(f"fd-boundary-band:{band}")
        prov = "finite-difference"
    growth = f.growth
    return GridSignal(total, f.T, f.step, None, f"{f.provenance}|D{L}:{prov}", growth, tuple(flags))


def fractional_derivative(f: GridSignal, r: float, alpha: float = 0.0, periodic: bool = False) -> GridSignal:
    """Apply the multiplier ``(1 + |w|^2)^(r/2)`` on the window's DFT grid.

    The window is treated as one period (the last node duplicates the first).
    Unless ``periodic`` is set, the result is flagged when
    ``|f(x) <x>^-alpha|`` on the boundary exceeds 1e-6 of its maximum.
    """
    d = f.dim
    flags = list(f.flags)
    if not periodic:
        mag = np.abs(f.values) * weight(f.points(), -alpha)
        edge = np.zeros(f.values.shape, dtype=bool)
        for axis in range(d):
            sl = [slice(None)] * d
            sl[axis] = [0, -1]
            edge[tuple(sl)] = True
        peak = float(np.max(mag))
        if peak > 0 and float(np.max(mag[edge])) > 1e-6 * peak:
            flags.append("wrap-around")
    core = f.values[(slice(0, -1),) * d]
    n = core.shape[0]
    w = 2 * np.pi * np.fft.fftfreq(n, d=f.step)
    grids = np.meshgrid(*([w] * d), indexing="ij")
    mult = (1.0 + sum(g * g for g in grids)) ** (r / 2)
    out = np.fft.ifftn(mult * np.fft.fftn(core))
    if np.isrealobj(f.values):
        out = out.real
    out = np.pad(out, [(0, 1)] * d, mode="wrap")
    return GridSignal(out, f.T, f.step, None, f"{f.provenance}|D^{r}:spectral", None, tuple(flags))


def multiplier_derivatives(r: float, omega: float, n: int) -> np.ndarray:
    """Derivatives ``m^(j)(omega)``, ``j = 0..n``, of ``m(w) = (1 + w^2)^(r/2)``.

    Uses the recurrence from ``(1 + w^2) m' = r w m`` differentiated ``j`` times.
    """
    out = np.zeros(n + 1)
    out[0] = (1 + omega * omega) ** (r / 2)
    s = 1 + omega * omega
    for j in range(n):
        # (1+w^2) m^(j+1) + 2 j w m^(j) + j(j-1) m^(j-1) = r (w m^(j) + j m^(j-1))
        prev = out[j - 1] if j >= 1 else 0.0
        out[j + 1] = (r * (omega * out[j] + j * prev) - 2 * j * omega * out[j] - j * (j - 1) * prev) / s
    return out


def blockwise_norm(block, n: int, step: float, T: float, dim: int, spec: WeightedNormSpec, beta: float | None = None, rows: int = 256, shell: float = 0.75) -> NormResult:
    """Weighted norm of a signal produced ``rows`` grid rows at a time.

    ``block(i0, i1)`` must return the values on grid rows ``i0 .. i1 - 1``
    (first axis) over the full extent of the remaining axes.  Used when the
    full ``n**dim`` grid does not fit in memory.  When ``beta`` is given the
    growth constant is estimated as ``max |f| <x>^-beta`` over the outer
    shell ``|x|_inf >= shell * T`` and a tail bound reported.
    """
    return blockwise_norms(lambda i0, i1: [block(i0, i1)], 1, n, step, T, dim, spec, beta, rows, shell)[0]


def blockwise_norms(block, count: int, n: int, step: float, T: float, dim: int, spec: WeightedNormSpec, beta: float | None = None, rows: int = 256, shell: float = 0.75) -> list[NormResult]:
    """Like :func:`blockwise_norm` for ``count`` signals produced together by ``block``."""
    if spec.T is not None and abs(spec.T - T) > 1e-12:
        raise ValueError("blockwise norms are evaluated over the full window")
    ax = -T + step * np.arange(n)
    w0 = simpson_weights(n, step, spec.rule)
    w1 = simpson_weights(n, step, spec.rule)
    acc = np.zeros(count)
    # running scale per result so the p-th powers stay in floating-point range
    scale = np.zeros(count)
    growth_c = np.zeros(count)
    for i0 in range(0, n, rows):
        i1 = min(n, i0 + rows)
        if dim == 1:
            pts = ax[i0:i1]
        else:
            pts = np.stack(np.meshgrid(ax[i0:i1], *([ax] * (dim - 1)), indexing="ij"), axis=-1)
        wt = weight(pts, spec.exponent)
        if beta is not None:
            outer = (np.abs(pts) if dim == 1 else np.max(np.abs(pts), axis=-1)) >= shell * T
            gw = weight(pts, -beta)[outer]
        for j, values in enumerate(block(i0, i1)):
            vals = np.abs(np.asarray(values))
            integrand = vals * wt
            if beta is not None and gw.size:
                growth_c[j] = max(growth_c[j], float(np.max(vals[outer] * gw)))
            if math.isinf(spec.p):
                acc[j] = max(acc[j], float(np.max(integrand)))
                continue
            top = float(np.max(integrand)) if integrand.size else 0.0
            if top > scale[j]:
                if scale[j] > 0:
                    acc[j] *= (scale[j] / top) ** spec.p
                scale[j] = top
            if scale[j] == 0:
                continue
            out = (integrand / scale[j]) ** spec.p
            for _ in range(dim - 1):
                out = np.tensordot(out, w1, axes=(-1, 0))
            acc[j] += float(np.dot(w0[i0:i1], out))
    results = []
    for j in range(count):
        norm = float(acc[j]) if math.isinf(spec.p) else float(scale[j]) * float(acc[j]) ** (1 / spec.p)
        tail, flagged = None, False
        if beta is not None:
            tail = _tail_bound((beta, float(growth_c[j])), spec.exponent, spec.p, T, dim)
            flagged = _flagged(tail, norm, spec.p)
        results.append(NormResult(norm, tail, flagged, spec))
    return results
