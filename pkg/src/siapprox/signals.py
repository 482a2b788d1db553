"""Non-decaying test signals with closed-form derivatives.

Signals are sympy expressions in ``x1 .. xd``; partial derivatives are
differentiated symbolically on demand and compiled to numpy callables.
Every signal declares a growth order ``beta`` and a constant ``C`` with
``|f(x)| <= C <x>^beta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import sympy as sp

from .spaces import fd_weights, multiplier_derivatives, weight

__all__ = [
    "MAX_ORDER",
    "TestSignal",
    "SignalCheckError",
    "make_growing_oscillation",
    "make_random_trig_poly",
    "make_polynomial",
    "make_spectral",
    "make_signal",
    "FAMILIES",
]

MAX_ORDER = 8


class SignalCheckError(AssertionError):
    pass


def _round15(x: float) -> float:
    return float(f"{x:.15g}")


@dataclass(eq=False)
class TestSignal:
    """A smooth signal with analytic partials up to ``max_order``."""

    __test__ = False  # not a pytest class

    expr: sp.Expr
    dim: int
    growth: tuple[float, float]
    family: str
    params: dict = field(default_factory=dict)
    max_order: int = MAX_ORDER
    spectral: dict | None = None

    def __post_init__(self):
        self._cache: dict[tuple[int, ...], object] = {}

    @cached_property
    def symbols(self) -> tuple[sp.Symbol, ...]:
        return sp.symbols(" ".join(f"x{i + 1}" for i in range(self.dim)), real=True, seq=True)

    @property
    def name(self) -> str:
        return self.family

    def describe(self) -> dict:
        return {"family": self.family, "dim": self.dim, "growth": list(self.growth), **self.params}

    def partial(self, multi_index):
        """Numpy callable for ``d^l f``; points have shape ``(..., d)`` (or ``(...)`` if d = 1)."""
        if np.ndim(multi_index) == 0:
            multi_index = (int(multi_index),)
        l = tuple(int(i) for i in multi_index)
        if len(l) != self.dim:
            raise ValueError("multi-index length must match signal dimension")
        if sum(l) > self.max_order:
            raise ValueError(f"partials available up to order {self.max_order}")
        if l not in self._cache:
            e = self.expr
            for s, li in zip(self.symbols, l):
                if li:
                    e = sp.diff(e, s, li)
            fn = sp.lambdify(self.symbols, e, modules="numpy", cse=True)
            dim = self.dim

            def call(x, _fn=fn):
                x = np.asarray(x, dtype=float)
                if dim == 1:
                    x1 = x[..., 0] if (x.ndim >= 1 and x.shape[-1] == 1 and x.ndim > 1) else x
                    return np.broadcast_to(np.asarray(_fn(x1), dtype=float), x1.shape)
                parts = [x[..., i] for i in range(dim)]
                return np.broadcast_to(np.asarray(_fn(*parts), dtype=float), parts[0].shape)

            self._cache[l] = call
        return self._cache[l]

    def __call__(self, x):
        return self.partial((0,) * self.dim)(x)

    def fractional(self, r: float) -> "TestSignal":
        """Exact ``D^r f`` for signals built spectrally."""
        if self.spectral is None:
            raise ValueError(f"signal family {self.family!r} has no spectral form")
        return _spectral_fractional(self, r)

    def growth_ratio(self, T: float, n: int = 257) -> float:
        """Max of ``|f| / <x>^beta`` on the boundary shell ``|x|_inf = T``."""
        beta = self.growth[0]
        if self.dim == 1:
            pts = np.array([-T, T])
        else:
            s = np.linspace(-T, T, n)
            faces = []
            for i in range(self.dim):
                for side in (-T, T):
                    grid = np.stack(np.meshgrid(*([s] * (self.dim - 1)), indexing="ij"), axis=-1).reshape(-1, self.dim - 1)
                    faces.append(np.insert(grid, i, side, axis=1))
            pts = np.concatenate(faces)
        return float(np.max(np.abs(self(pts)) * weight(pts, -beta)))

    def envelope_ratio(self, T: float, shells: int | None = None) -> float:
        """Max of ``|f| / <x>^beta`` over the annulus ``T <= |x|_inf <= 2T``.

        Unlike :meth:`growth_ratio` this does not depend on the phase of an
        oscillation at one particular radius, so it is comparable across ``T``.
        """
        if shells is None:
            shells = 4097 if self.dim == 1 else 17
        return max(self.growth_ratio(t) for t in np.linspace(T, 2 * T, shells))

    def self_check(self, order: int | None = None, n_points: int = 100, T: float = 16.0, seed: int = 0, tol: float = 1e-6):
        """Compare every analytic partial against a 4th-order centred difference of the one below it.

        The discrepancy is measured relative to ``max(1, max |d^l f|)`` over the
        sample points; returns the worst value seen.
        """
        from .kernel import _multi_indices

        order = self.max_order if order is None else order
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-T, T, size=(n_points, self.dim))
        if self.dim == 1:
            pts = pts[:, 0]
        step = 1e-3
        offs = np.arange(-2, 3)
        w = fd_weights(1, offs)
        worst = 0.0
        for n in range(1, order + 1):
            for l in _multi_indices(self.dim, n):
                axis = next(i for i, li in enumerate(l) if li)
                lower = list(l)
                lower[axis] -= 1
                g = self.partial(tuple(lower))
                e = np.zeros(self.dim)
                e[axis] = step
                shift = e[0] if self.dim == 1 else e
                fd = sum(c * g(pts + o * shift) for c, o in zip(w, offs)) / step
                exact = self.partial(l)(pts)
                err = float(np.max(np.abs(fd - exact))) / max(1.0, float(np.max(np.abs(exact))))
                worst = max(worst, err)
                if err > tol:
                    raise SignalCheckError(f"{self.family}: partial {l} disagrees with finite differences by {err:.2e}")
        bound = self.growth[1]
        if self.growth_ratio(T) > bound * (1 + 1e-12):
            raise SignalCheckError(f"{self.family}: growth constant {bound} violated on |x| = {T}")
        return worst


def _envelope(symbols, beta):
    r2 = sum(s * s for s in symbols)
    return (1 + r2) ** (sp.nsimplify(beta) / 2)


def make_growing_oscillation(beta: float, omega0: float, dim: int = 1) -> TestSignal:
    """``<x>^beta * sin(omega0 * x1 + 0.3 * sum(x))``."""
    if beta < 0:
        raise ValueError("growth order must be non-negative")
    xs = sp.symbols(" ".join(f"x{i + 1}" for i in range(dim)), real=True, seq=True)
    phase = sp.Float(omega0) * xs[0] + sp.Rational(3, 10) * sum(xs)
    expr = _envelope(xs, beta) * sp.sin(phase)
    return TestSignal(expr, dim, (float(beta), 1.0), "growing_oscillation", {"beta": beta, "omega0": omega0})


def make_random_trig_poly(seed: int, K: int, beta: float, s: float = 2.0) -> TestSignal:
    """``<x>^beta * sum_k (a_k / k^s) sin(k x + phi_k)`` with seeded coefficients."""
    if K < 1:
        raise ValueError("need at least one harmonic")
    rng = np.random.default_rng(seed)
    amps = [_round15(a) for a in rng.uniform(-1.0, 1.0, K)]
    phases = [_round15(p) for p in rng.uniform(0.0, 2 * math.pi, K)]
    (x,) = sp.symbols("x1", real=True, seq=True)
    series = sum(sp.Float(a) / sp.Integer(k) ** sp.nsimplify(s) * sp.sin(k * x + sp.Float(p)) for k, (a, p) in enumerate(zip(amps, phases), start=1))
    expr = _envelope((x,), beta) * series
    C = float(sum(abs(a) / k**s for k, a in enumerate(amps, start=1)))
    params = {"seed": seed, "K": K, "beta": beta, "s": s, "amplitudes": amps, "phases": phases}
    return TestSignal(expr, 1, (float(beta), C), "random_trig_poly", params)


def make_polynomial(coeffs, dim: int | None = None) -> TestSignal:
    """Polynomial from ascending 1-D coefficients or a ``{multi_index: value}`` mapping."""
    if isinstance(coeffs, dict):
        terms = {tuple(np.atleast_1d(k).tolist()): float(v) for k, v in coeffs.items()}
    else:
        terms = {(i,): float(c) for i, c in enumerate(coeffs)}
    d = dim or len(next(iter(terms)))
    xs = sp.symbols(" ".join(f"x{i + 1}" for i in range(d)), real=True, seq=True)
    degree = max((sum(k) for k, v in terms.items() if v != 0), default=0)
    if degree > MAX_ORDER:
        raise ValueError(f"total degree {degree} exceeds {MAX_ORDER}")
    expr = sum(sp.Float(v) * sp.Mul(*[s**e for s, e in zip(xs, k)]) for k, v in terms.items())
    C = float(sum(abs(v) for v in terms.values()))
    params = {"coeffs": {",".join(map(str, k)): v for k, v in terms.items()}}
    return TestSignal(sp.sympify(expr), d, (float(degree), C), "polynomial", params)


def make_spectral(envelope, amplitudes, frequencies, phases=None) -> TestSignal:
    """``P(x) * sum_k a_k cos(w_k x + phi_k)`` with ``P`` a polynomial (ascending coefficients).

    Fractional derivatives of this family are exact, see :meth:`TestSignal.fractional`.
    """
    env = [float(c) for c in envelope]
    amps = [float(a) for a in amplitudes]
    freqs = [float(w) for w in frequencies]
    phs = [0.0] * len(amps) if phases is None else [float(p) for p in phases]
    if not (len(amps) == len(freqs) == len(phs)):
        raise ValueError("amplitudes, frequencies and phases must have equal length")
    (x,) = sp.symbols("x1", real=True, seq=True)
    P = sum(sp.Float(c) * x**i for i, c in enumerate(env))
    expr = P * sum(sp.Float(a) * sp.cos(sp.Float(w) * x + sp.Float(p)) for a, w, p in zip(amps, freqs, phs))
    degree = max((i for i, c in enumerate(env) if c != 0), default=0)
    C = sum(abs(c) for c in env) * sum(abs(a) for a in amps)
    params = {"envelope": env, "amplitudes": amps, "frequencies": freqs, "phases": phs}
    return TestSignal(expr, 1, (float(degree), C), "spectral", params, spectral=params)


def _spectral_fractional(sig: TestSignal, r: float) -> TestSignal:
    # D^r [P e^{iwx}] = e^{iwx} sum_j m^(j)(w) (-i)^j P^(j)(x) / j!
    spec = sig.spectral
    env = np.polynomial.Polynomial(spec["envelope"])
    n = env.degree()
    (x,) = sig.symbols
    terms = []
    C = 0.0
    for a, w, ph in zip(spec["amplitudes"], spec["frequencies"], spec["phases"]):
        mj = multiplier_derivatives(r, w, n)
        Q = np.zeros(n + 1, dtype=complex)
        for j in range(n + 1):
            dj = env.deriv(j).coef if j else env.coef
            Q[: dj.size] += mj[j] * (-1j) ** j * dj / math.factorial(j)
        re = sum(sp.Float(float(q.real)) * x**i for i, q in enumerate(Q))
        im = sum(sp.Float(float(q.imag)) * x**i for i, q in enumerate(Q))
        theta = sp.Float(w) * x + sp.Float(ph)
        terms.append(sp.Float(a) * (re * sp.cos(theta) - im * sp.sin(theta)))
        C += abs(a) * float(np.sum(np.abs(Q)))
    params = dict(sig.params, r=r)
    return TestSignal(sum(terms), 1, (sig.growth[0], C), f"D^{r}[{sig.family}]", params)


FAMILIES = {
    "growing_oscillation": lambda p: make_growing_oscillation(p.get("beta", 1.0), p.get("omega0", 1.0), p.get("dim", 1)),
    "random_trig_poly": lambda p: make_random_trig_poly(p.get("seed", 0), p.get("K", 4), p.get("beta", 0.0), p.get("s", 2.0)),
    "polynomial": lambda p: make_polynomial(p["coeffs"]),
    "spectral": lambda p: make_spectral(p.get("envelope", [1.0, 0.5]), p.get("amplitudes", [1.0, 0.5]), p.get("frequencies", [1.0, 2.3]), p.get("phases")),
}


def make_signal(family: str, params: dict | None = None) -> TestSignal:
    """Build a library signal from its string id and parameters."""
    try:
        factory = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown signal family {family!r}; choose from {sorted(FAMILIES)}") from None
    return factory(dict(params or {}))
