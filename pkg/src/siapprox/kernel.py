"""Piecewise-polynomial kernels: B-splines, tensor products, spectra.

A kernel is stored per axis as a list of breakpoints and, for every interval
between two consecutive breakpoints, the monomial coefficients of the local
polynomial ``sum_j c[j] * (x - knot_i)**j``.  Multivariate kernels are
separable tensor products of 1-D axes.

Evaluation is right-continuous at breakpoints and zero outside the support.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "Axis",
    "PiecewisePolyKernel",
    "bspline",
    "tensor_product",
    "centered",
    "hermite_kernel",
    "eval_deriv",
    "spectrum",
    "bspline_spectrum",
    "autocorrelation_sequence",
    "strang_fix_order",
    "ReproductionResidual",
    "polynomial_reproduction_residual",
]


@dataclass(frozen=True)
class Axis:
    """One separable factor of a kernel."""

    knots: np.ndarray
    coeffs: np.ndarray  # shape (n_intervals, degree + 1)
    exact: tuple[tuple[Fraction, ...], ...] | None = None

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if knots.ndim != 1 or knots.size < 2:
            raise ValueError("an axis needs at least two breakpoints")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if coeffs.shape[0] != knots.size - 1:
            raise ValueError("need one coefficient row per interval")
        knots.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def support(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def __call__(self, x, order: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if order < 0:
            raise ValueError("derivative order must be non-negative")
        if order > self.degree:
            raise ValueError(
                f"derivative of order {order} exceeds degree {self.degree}; "
                "the distributional derivative has a singular part"
            )
        idx = np.searchsorted(self.knots, x, side="right") - 1
        inside = (idx >= 0) & (idx < self.coeffs.shape[0])
        i = np.clip(idx, 0, self.coeffs.shape[0] - 1)
        u = x - self.knots[i]
        c = self.coeffs[i]
        out = np.zeros_like(u)
        # Horner on the differentiated local polynomial.
        for j in range(self.degree, order - 1, -1):
            out = out * u + c[..., j] * (math.factorial(j) / math.factorial(j - order))
        return np.where(inside, out, 0.0)

    def integral(self) -> float:
        widths = np.diff(self.knots)
        powers = np.arange(1, self.degree + 2)
        return float(np.sum(self.coeffs * widths[:, None] ** powers / powers))

    def shifted(self, offset: float) -> "Axis":
        return Axis(self.knots + offset, self.coeffs, self.exact)

    def moment_transform(self, omega: float, order: int = 0) -> complex:
        """Return ``int (-j x)**order * axis(x) * exp(-j omega x) dx``."""
        total = 0.0 + 0.0j
        nodes, weights = _gauss(self.degree + order + 1 + int(math.ceil(abs(omega) * np.max(np.diff(self.knots)))) + 16)
        for i, (a, b) in enumerate(zip(self.knots[:-1], self.knots[1:])):
            w = b - a
            u = 0.5 * w * (nodes + 1.0)
            x = a + u
            poly = np.polyval(self.coeffs[i, ::-1], u)
            integrand = (-1j * x) ** order * poly * np.exp(-1j * omega * x)
            total += 0.5 * w * np.sum(weights * integrand)
        return complex(total)


def _gauss(n: int):
    return np.polynomial.legendre.leggauss(int(n))


@dataclass(frozen=True)
class PiecewisePolyKernel:
    """Separable piecewise-polynomial kernel on R^d.

    ``kernel(x)`` accepts points of shape ``(..., d)``; for ``d == 1`` a plain
    array of abscissae is also accepted.
    """

    axes: tuple[Axis, ...]
    name: str = "kernel"
    order: int | None = field(default=None)  # B-spline order L when known

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def degree(self) -> tuple[int, ...]:
        return tuple(a.degree for a in self.axes)

    @property
    def support(self) -> tuple[tuple[float, float], ...]:
        return tuple(a.support for a in self.axes)

    def _split(self, x) -> list[np.ndarray]:
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim <= 1 or x.shape[-1] != 1):
            return [x]
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected points with last axis of size {self.dim}")
        return [x[..., i] for i in range(self.dim)]

    def __call__(self, x) -> np.ndarray:
        return self.deriv((0,) * self.dim, x)

    def deriv(self, multi_index: Sequence[int] | int, x) -> np.ndarray:
        if np.ndim(multi_index) == 0:
            multi_index = (int(multi_index),)
        if len(multi_index) != self.dim:
            raise ValueError("multi-index length must match kernel dimension")
        parts = self._split(x)
        out = np.ones(np.broadcast_shapes(*(p.shape for p in parts)))
        for axis, l, xi in zip(self.axes, multi_index, parts):
            out = out * axis(xi, l)
        return out

    def integral(self) -> float:
        return math.prod(a.integral() for a in self.axes)

    def shifted(self, offset) -> "PiecewisePolyKernel":
        offset = np.broadcast_to(np.asarray(offset, dtype=float), (self.dim,))
        return PiecewisePolyKernel(
            tuple(a.shifted(o) for a, o in zip(self.axes, offset)), self.name, self.order
        )

    def to_json(self, exact: bool = False) -> str:
        doc = {"dim": self.dim, "axes": []}
        for a in self.axes:
            entry = {"knots": a.knots.tolist(), "coeffs": a.coeffs.tolist()}
            if exact and a.exact is not None:
                entry["rational"] = [[[c.numerator, c.denominator] for c in row] for row in a.exact]
            doc["axes"].append(entry)
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str, name: str = "kernel") -> "PiecewisePolyKernel":
        doc = json.loads(text)
        axes = []
        for entry in doc["axes"]:
            exact = None
            if "rational" in entry:
                exact = tuple(tuple(Fraction(n, d) for n, d in row) for row in entry["rational"])
                coeffs = [[float(c) for c in row] for row in exact]
            else:
                coeffs = entry["coeffs"]
            axes.append(Axis(np.asarray(entry["knots"]), np.asarray(coeffs), exact))
        if len(axes) != doc["dim"]:
            raise ValueError("dim does not match number of axes")
        return cls(tuple(axes), name)


def _bspline_pieces(order_L: int) -> list[list[Fraction]]:
    """Local polynomials of the causal B-spline of order L on [j, j+1].

    Uses (p * beta0)(x) = F(x) - F(x - 1) with F an antiderivative of p.
    """
    pieces = [[Fraction(1)]]
    for _ in range(order_L - 1):
        # antiderivatives P_j(u) = int_0^u p_j, and their values at u = 1
        anti = [[Fraction(0)] + [c / (k + 1) for k, c in enumerate(p)] for p in pieces]
        at_one = [sum(P) for P in anti]
        n = len(pieces)
        deg = len(anti[0])
        new = []
        for j in range(n + 1):
            cur = anti[j] if j < n else [Fraction(0)] * deg
            prev = anti[j - 1] if j >= 1 else [Fraction(0)] * deg
            row = [c - p for c, p in zip(cur, prev)]
            if j >= 1:
                row[0] += at_one[j - 1]
            new.append(row)
        pieces = new
    return pieces


def bspline(order_L: int) -> PiecewisePolyKernel:
    """Causal B-spline of order ``L`` (degree ``L - 1``) supported on ``[0, L]``.

    Built by exact rational convolution of the unit indicator with itself.
    """
    if int(order_L) != order_L or order_L < 1:
        raise ValueError(f"B-spline order must be a positive integer, got {order_L!r}")
    order_L = int(order_L)
    pieces = _bspline_pieces(order_L)
    exact = tuple(tuple(p) for p in pieces)
    axis = Axis(np.arange(order_L + 1, dtype=float), np.array([[float(c) for c in p] for p in pieces]), exact)
    return PiecewisePolyKernel((axis,), name=f"bspline{order_L}", order=order_L)


def tensor_product(axes: Sequence[PiecewisePolyKernel]) -> PiecewisePolyKernel:
    if len(axes) == 0:
        raise ValueError("tensor product of an empty list")
    for k in axes:
        if k.dim != 1:
            raise ValueError("tensor factors must be one-dimensional")
    if len(axes) == 1:
        return axes[0]
    orders = {k.order for k in axes}
    order = orders.pop() if len(orders) == 1 else None
    name = "x".join(k.name for k in axes)
    return PiecewisePolyKernel(tuple(k.axes[0] for k in axes), name=name, order=order)


def centered(kernel: PiecewisePolyKernel) -> PiecewisePolyKernel:
    """Shift every axis so that its support is symmetric about the origin."""
    offsets = [-(a + b) / 2 for a, b in kernel.support]
    out = kernel.shifted(offsets)
    return PiecewisePolyKernel(out.axes, name=f"centered-{kernel.name}", order=kernel.order)


def hermite_kernel(func, dfunc, knots) -> PiecewisePolyKernel:
    """Piecewise-cubic Hermite kernel matching ``func`` and ``dfunc`` at ``knots``.

    Useful for building compactly supported approximations of arbitrary
    smooth profiles (e.g. a truncated Gaussian) that are not B-splines.
    """
    t = np.asarray(knots, dtype=float)
    y, dy = np.asarray(func(t), dtype=float), np.asarray(dfunc(t), dtype=float)
    w = np.diff(t)
    c0, c1 = y[:-1], dy[:-1]
    slope = np.diff(y) / w
    c2 = (3 * slope - 2 * dy[:-1] - dy[1:]) / w
    c3 = (dy[:-1] + dy[1:] - 2 * slope) / w**2
    axis = Axis(t, np.stack([c0, c1, c2, c3], axis=1))
    return PiecewisePolyKernel((axis,), name="hermite")


def eval_deriv(kernel: PiecewisePolyKernel, multi_index, x) -> np.ndarray:
    """Exact partial derivative ``d^l kernel(x)``, right-continuous at knots."""
    return kernel.deriv(multi_index, x)


def bspline_spectrum(order_L: int, omega) -> np.ndarray:
    """Closed-form Fourier transform ``((1 - e^{-jw}) / (jw))**L`` of the causal B-spline."""
    w = np.asarray(omega, dtype=float)
    small = np.abs(w) < 1e-8
    ws = np.where(small, 1.0, w)
    base = np.where(small, 1.0 - 0.5j * w, (1 - np.exp(-1j * ws)) / (1j * ws))
    return base**order_L


def spectrum(kernel: PiecewisePolyKernel, omega, multi_index=None) -> complex:
    """Partial derivative of the Fourier transform at a single frequency.

    Uses ``hat(phi)(w) = int phi(x) exp(-j <w, x>) dx`` and, for derivatives,
    ``d^l hat(phi) = F{(-j x)^l phi}``; each axis is integrated exactly up to
    the Gauss-Legendre rule accuracy.
    """
    omega = np.broadcast_to(np.asarray(omega, dtype=float), (kernel.dim,))
    if multi_index is None:
        multi_index = (0,) * kernel.dim
    elif np.ndim(multi_index) == 0:
        multi_index = (int(multi_index),)
    out = 1.0 + 0.0j
    for axis, w, l in zip(kernel.axes, omega, multi_index):
        out *= axis.moment_transform(float(w), int(l))
    return out


def autocorrelation_sequence(kernel: PiecewisePolyKernel, radius: int | None = None):
    """Samples ``a[k] = int phi(x) phi(x - k) dx`` for ``|k|_inf <= radius``.

    Computed per axis by Gauss-Legendre quadrature on the common refinement
    of the two knot sets, which is exact for the polynomial products.
    """
    from .dfilter import DiscreteFilter

    factors = []
    for axis in kernel.axes:
        lo, hi = axis.support
        width = int(math.ceil(hi - lo))
        K = width if radius is None else int(radius)
        nodes, weights = _gauss(axis.degree + 1)
        vals = np.zeros(2 * K + 1)
        for k in range(-K, K + 1):
            if abs(k) >= hi - lo:
                continue
            brk = np.union1d(axis.knots, axis.knots + k)
            brk = brk[(brk >= max(lo, lo + k)) & (brk <= min(hi, hi + k))]
            total = 0.0
            for a, b in zip(brk[:-1], brk[1:]):
                x = a + 0.5 * (b - a) * (nodes + 1.0)
                total += 0.5 * (b - a) * np.sum(weights * axis(x) * axis(x - k))
            vals[k + K] = total
        vals = 0.5 * (vals + vals[::-1])
        factors.append(DiscreteFilter(vals, (-K,)))
    return DiscreteFilter.separable(factors)


def strang_fix_order(kernel: PiecewisePolyKernel, max_L: int = 6, tol: float = 1e-10, k_max: int = 8) -> int:
    """Largest ``L <= max_L`` for which the Strang-Fix conditions hold numerically.

    Checks ``|hat(phi)(0)| > tol`` and ``|d^l hat(phi)(2 pi k)| <= tol`` for
    every ``|l| <= L - 1`` and every ``0 < |k|_inf <= k_max``.
    """
    d = kernel.dim
    if abs(spectrum(kernel, np.zeros(d))) <= tol:
        return 0
    ks = [k for k in itertools.product(range(-k_max, k_max + 1), repeat=d) if any(k)]
    # separable: d^l hat(phi)(w) is a product of axis moments, cache them
    cache: dict[tuple[int, float, int], complex] = {}

    def axis_value(i, w, l):
        key = (i, w, l)
        if key not in cache:
            cache[key] = kernel.axes[i].moment_transform(w, l)
        return cache[key]

    for L in range(1, max_L + 1):
        n = L - 1
        for l in _multi_indices(d, n):
            for k in ks:
                val = 1.0 + 0.0j
                for i in range(d):
                    val *= axis_value(i, 2 * math.pi * k[i], l[i])
                if abs(val) > tol:
                    return L - 1
    return max_L


def _multi_indices(d: int, n: int):
    """All multi-indices of length ``d`` with total order ``n``."""
    if d == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _multi_indices(d - 1, n - first):
            yield (first,) + rest


@dataclass(frozen=True)
class ReproductionResidual:
    residual: float
    truncation: int
    multi_index: tuple[int, ...]


def polynomial_reproduction_residual(kernel: PiecewisePolyKernel, prefilter, multi_index, grid, truncation: int = 40) -> ReproductionResidual:
    """Max over ``grid`` of ``|sum_{|k|<=K} k^l phi_int(x - k) - x^l|``.

    ``phi_int = sum_m prefilter[m] phi(. - m)``.  The double sum is rearranged
    into ``sum_n (k^l * prefilter)[n] phi(x - n)`` which is a finite sum.
    """
    from .dfilter import DiscreteFilter, convolve

    d = kernel.dim
    if np.ndim(multi_index) == 0:
        multi_index = (int(multi_index),)
    K = int(truncation)
    axes = [np.arange(-K, K + 1)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    mono = np.ones_like(mesh[0], dtype=float)
    for m, l in zip(mesh, multi_index):
        mono = mono * m.astype(float) ** l
    coeffs = convolve(DiscreteFilter(mono, (-K,) * d), prefilter)
    pts = np.asarray(grid, dtype=float)
    if d == 1 and (pts.ndim == 1):
        pts = pts[:, None]
    pts = pts.reshape(-1, d)
    total = np.zeros(pts.shape[0])
    for n, value in coeffs.entries():
        total += value * kernel(pts - np.asarray(n, dtype=float))
    target = np.prod(pts ** np.asarray(multi_index, dtype=float), axis=1)
    return ReproductionResidual(float(np.max(np.abs(total - target))), K, tuple(multi_index))
