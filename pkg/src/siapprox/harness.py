"""Convergence experiments and identity suites.

A run sweeps the step ``h``, builds the approximation for each value,
measures the weighted error on a common interior window and fits the
log-log slope.  Reports serialize to JSON (deterministic apart from the
``timestamp`` field) and to a flat CSV.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import sympy as sp

from . import __version__
from .dfilter import convolve, dual_filter, prefilter, sample_kernel
from .kernel import (
    _multi_indices,
    autocorrelation_sequence,
    bspline,
    centered,
    polynomial_reproduction_residual,
    tensor_product,
)
from .operators import (
    Mollifier,
    directional_derivative,
    finite_difference,
    interpolate,
    project,
    smooth,
    synthesis_rows,
)
from .signals import TestSignal, make_polynomial, make_signal
from .spaces import GridSignal, WeightedNormSpec, blockwise_norms, weight

__all__ = [
    "ExperimentConfig",
    "HRecord",
    "SlopeFit",
    "ConvergenceReport",
    "fit_slope",
    "build_kernel",
    "build_signal",
    "run",
    "identity_checks",
    "CSV_COLUMNS",
]

MODES = ("projection", "interpolation", "smoothing", "identity-checks")
CSV_COLUMNS = ("h", "error", "rhs", "ratio", "flags")


@dataclass
class ExperimentConfig:
    mode: str = "projection"
    kernel: str = "bspline"
    order: int = 4
    dim: int = 1
    signal: str = "growing_oscillation"
    signal_params: dict = field(default_factory=lambda: {"beta": 1.0, "omega0": 1.0})
    seed: int = 0
    p: float = 2.0
    alpha: float = 2.5
    r: float = 1.1
    hs: list = field(default_factory=lambda: [2.0**-j for j in range(3, 9)])
    T: float = 128.0
    m: int = 16
    shrink: float | None = None  # extra interior margin; None means coverage-driven only
    mollifier_center: float = 0.3
    mollifier_radius: float = 0.7
    slope_band: float = 0.2
    ratio_band: float = 3.0
    out: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.kernel != "bspline":
            raise ValueError("only the 'bspline' kernel family is available")
        if self.order < 1:
            raise ValueError("kernel order must be at least 1")
        self.p = float(self.p)
        self.hs = [float(h) for h in self.hs]
        if any(b >= a for a, b in zip(self.hs, self.hs[1:])):
            raise ValueError("h list must be strictly decreasing")
        if self.m < 8 or self.m % 2:
            raise ValueError("grid refinement m must be an even integer >= 8")
        if self.mode == "interpolation" and not self.r > self.dim / self.p:
            raise ValueError(f"interpolation needs r > d/p, got r = {self.r}, d/p = {self.dim / self.p}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if data.get("p") in ("inf", "Infinity"):
            data["p"] = math.inf
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.p):
            d["p"] = "inf"
        return d


@dataclass
class HRecord:
    h: float
    error: float
    rhs: float
    ratio: float
    flags: list = field(default_factory=list)
    stability: float | None = None


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    residual: float
    used: list
    notes: list = field(default_factory=list)


def fit_slope(points) -> SlopeFit:
    """Least-squares line through ``(log h, log e)``; residual is the max absolute deviation.

    Points with ``e == 0`` are dropped with a note.  At least four usable
    points are required.
    """
    pts = [(float(h), float(e)) for h, e in points]
    notes = [f"dropped h={h:g}: zero error" for h, e in pts if e == 0]
    pts = [(h, e) for h, e in pts if e != 0]
    if any(e < 0 or h <= 0 for h, e in pts):
        raise ValueError("steps and errors must be positive")
    if len(pts) < 4:
        raise ValueError(f"need at least 4 points with nonzero error, got {len(pts)}")
    x = np.log([h for h, _ in pts])
    y = np.log([e for _, e in pts])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.max(np.abs(y - (slope * x + intercept))))
    return SlopeFit(float(slope), float(intercept), residual, [h for h, _ in pts], notes)


@dataclass
class ConvergenceReport:
    config: dict
    records: list
    fit: SlopeFit | None
    acceptance: dict
    diagnostics: dict
    inconclusive: bool
    version: str = __version__
    timestamp: str = ""

    @property
    def passed(self) -> bool:
        return (not self.inconclusive) and all(self.acceptance.values())

    def to_dict(self, timestamp: bool = True) -> dict:
        out = {
            "config": self.config,
            "records": [asdict(r) for r in self.records],
            "fit": None if self.fit is None else asdict(self.fit),
            "acceptance": self.acceptance,
            "passed": self.passed,
            "diagnostics": self.diagnostics,
            "inconclusive": self.inconclusive,
            "version": self.version,
        }
        if timestamp:
            out["timestamp"] = self.timestamp
        return out

    def to_json(self, timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(timestamp), sort_keys=True, indent=2, default=_json_default)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([repr(r.h), repr(r.error), repr(r.rhs), repr(r.ratio), ";".join(r.flags)])
        return buf.getvalue()


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def build_kernel(config: ExperimentConfig):
    """Centred B-spline of the configured order, tensorised to the configured dimension."""
    k = centered(bspline(config.order))
    return k if config.dim == 1 else tensor_product([k] * config.dim)


def build_signal(config: ExperimentConfig) -> TestSignal:
    params = dict(config.signal_params)
    if config.signal == "random_trig_poly":
        params.setdefault("seed", config.seed)
    if config.signal == "growing_oscillation":
        params.setdefault("dim", config.dim)
    sig = make_signal(config.signal, params)
    if sig.dim != config.dim:
        raise ValueError("signal dimension does not match the configured dimension")
    return sig


def _rows(func, T, step, n, d):
    ax = -T + step * np.arange(n)

    def block(i0, i1):
        if d == 1:
            return np.asarray(func(ax[i0:i1]))
        pts = np.stack(np.meshgrid(ax[i0:i1], *([ax] * (d - 1)), indexing="ij"), axis=-1)
        return np.asarray(func(pts))

    return block


def _magnitude(sig: TestSignal, L: int):
    """Pointwise ``f^(L)``: multinomially weighted sum of ``|d^l f|`` over ``|l| = L``."""
    terms = [(math.factorial(L) / math.prod(math.factorial(i) for i in l), sig.partial(l)) for l in _multi_indices(sig.dim, L)]
    return lambda x: sum(c * np.abs(g(x)) for c, g in terms)


def _window(hs, T, kernel, config, fields) -> float:
    """Largest window aligned with every step that all approximations cover."""
    h0 = max(hs)
    inner = min(min(b - a for a, b in fld.covered_window()) / 2 for fld in fields) if fields else T
    inner = min(inner, T) - (config.shrink or 0.0)
    return math.floor(inner / h0 + 1e-9) * h0


def _rows_multi(funcs, T, step, n, d):
    blocks = [_rows(f, T, step, n, d) for f in funcs]
    return lambda i0, i1: [b(i0, i1) for b in blocks]


def _norm_flags(res, label):
    return [f"tail:{label}"] if res.flagged else []


def run(config: ExperimentConfig, threads: int = 1) -> ConvergenceReport:
    """Execute a convergence experiment for every ``h`` in the sweep."""
    if config.mode == "identity-checks":
        raise ValueError("use identity_checks for the identity suites")
    L, d = config.order, config.dim
    sig = build_signal(config)
    kernel = build_kernel(config)
    beta = sig.growth[0]
    spec = WeightedNormSpec(p=config.p, alpha=config.alpha)
    hs = config.hs

    if config.mode == "projection":
        dual_filter(kernel)  # fail fast on inadmissible kernels
        build = lambda h: project(sig, kernel, h, T=config.T, m=config.m)
    elif config.mode == "interpolation":
        prefilter(kernel)
        build = lambda h: interpolate(sig, kernel, h, T=config.T)
    else:
        chi = Mollifier(d, config.mollifier_center, config.mollifier_radius)
        build = lambda h: smooth(GridSignal.from_callback(sig, config.T, h / config.m, d), h, L, chi)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(build, hs))

    if config.mode == "smoothing":
        Tw = math.floor((config.T - L * max(hs) - (config.shrink or 0.0)) / max(hs) + 1e-9) * max(hs)
    else:
        Tw = _window(hs, config.T, kernel, config, results)
    if Tw <= 0:
        raise ValueError("interior window is empty; enlarge T")

    target = sig.fractional(config.r) if config.mode == "interpolation" else sig
    rhs_fn = _magnitude(target, L)
    # h-independent norms are evaluated once on the coarsest measurement grid
    step0 = max(hs) / config.m
    n0 = int(round(2 * Tw / step0)) + 1
    fixed = [rhs_fn, sig] if config.mode == "projection" else [rhs_fn, target]
    rhs, ref = blockwise_norms(_rows_multi(fixed, Tw, step0, n0, d), 2, n0, step0, Tw, d, spec, beta)

    def measure(item):
        h, res = item
        step = h / config.m
        n = int(round(2 * Tw / step)) + 1
        f_rows = _rows(sig, Tw, step, n, d)
        if config.mode == "smoothing":
            approx = res.restrict(Tw).values
            approx_rows = lambda i0, i1: approx[i0:i1]
        else:
            approx_rows, _ = synthesis_rows(res, Tw, config.m)

        def both(i0, i1):
            a = approx_rows(i0, i1)
            return [a - f_rows(i0, i1), a]

        err, num = blockwise_norms(both, 2, n, step, Tw, d, spec, beta)
        flags = _norm_flags(err, "error") + _norm_flags(rhs, "rhs")
        stab = None
        if config.mode in ("projection", "interpolation"):
            stab = num.norm / ref.norm
            flags += _norm_flags(num, "approx") + _norm_flags(ref, "reference")
        ratio = err.norm / (h**L * rhs.norm) if rhs.norm > 0 else math.inf
        return HRecord(h, err.norm, rhs.norm, ratio, flags, stab)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        records = list(pool.map(measure, zip(hs, results)))
    report = _assemble(config, records, Tw)
    if config.mode == "interpolation":
        # the other regularity scale, reported without asserting any relation
        alt = blockwise_norms(_rows_multi([sig.fractional(config.r + L)], Tw, step0, n0, d), 1, n0, step0, Tw, d, spec, beta)[0]
        report.diagnostics["rhs_norm_D_r_plus_L"] = alt.norm
    return report


def _assemble(config, records, Tw) -> ConvergenceReport:
    L = config.order
    clean = [r for r in records if not r.flags]
    diagnostics = {"interior_T": Tw, "shrink": config.T - Tw, "clean_points": len(clean)}
    fit, inconclusive = None, False
    try:
        fit = fit_slope([(r.h, r.error) for r in clean])
    except ValueError as exc:
        inconclusive = True
        diagnostics["inconclusive_reason"] = str(exc)
    acceptance = {}
    if fit is not None:
        acceptance["slope"] = bool(abs(fit.slope - L) <= config.slope_band)
        ratios = [r.ratio for r in clean if r.h in fit.used]
        acceptance["ratio_band"] = bool(max(ratios) / min(ratios) < config.ratio_band)
        diagnostics["ratio_spread"] = max(ratios) / min(ratios)
        if len(fit.used) > 4:
            rest = [(r.h, r.error) for r in clean if r.h in fit.used and r.h != max(fit.used)]
            diagnostics["slope_without_largest_h"] = fit_slope(rest).slope
    stab = [(r.h, r.stability) for r in clean if r.stability is not None]
    if len(stab) >= 2:
        vals = np.array([s for _, s in stab])
        spread = float(vals.max() / vals.min() - 1)
        trend = float(np.polyfit(np.log([h for h, _ in stab]), np.log(vals), 1)[0])
        diagnostics["stability_spread"] = spread
        diagnostics["stability_trend"] = trend
        acceptance["stability"] = bool(spread < 0.5 and abs(trend) <= 0.1)
    return ConvergenceReport(
        config.to_dict(),
        records,
        fit,
        acceptance,
        diagnostics,
        inconclusive,
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    )


def _suite(value, tol, **extra) -> dict:
    return {"value": float(value), "tolerance": tol, "passed": bool(value <= tol), **extra}


def peano_suite(n_draws: int = 50, L: int = 3, seed: int = 0) -> dict:
    """``|Delta_u^L f(x) - int D_u^L f(x - t u) B(t) dt|`` for ``f = exp(sin x)``."""
    (x,) = sp.symbols("x1", real=True, seq=True)
    f = TestSignal(sp.exp(sp.sin(x)), 1, (0.0, math.e), "exp_sin")
    B = bspline(L)
    gx, gw = np.polynomial.legendre.leggauss(40)
    nodes = np.concatenate([j + (gx + 1) / 2 for j in range(L)])
    wts = np.concatenate([gw / 2] * L)
    rng = np.random.default_rng(seed)
    dL = f.partial((L,))
    worst = 0.0
    for _ in range(n_draws):
        x0, u = rng.uniform(-10, 10), rng.uniform(-1, 1)
        lhs = finite_difference(f, u, L, x0)
        rhs = np.sum(wts * u**L * dL(x0 - nodes * u) * B(nodes))
        worst = max(worst, abs(float(lhs) - float(rhs)))
    return _suite(worst, 1e-8, draws=n_draws)


def lemma2_suite(n_draws: int = 10_000, seed: int = 0) -> dict:
    """Count violations of ``|D_u^L f(x)| <= |u|_inf^L f^(L)(x)`` over random draws."""
    rng = np.random.default_rng(seed)
    library = [
        make_signal("growing_oscillation", {"beta": 1.0, "omega0": 1.3, "dim": 2}),
        make_signal("growing_oscillation", {"beta": 0.5, "omega0": 2.0, "dim": 1}),
        make_signal("random_trig_poly", {"seed": seed, "K": 5, "beta": 1.0}),
        make_polynomial({(1, 1): 1.0, (3, 0): -0.5, (0, 2): 2.0}),
    ]
    violations = 0
    per = n_draws // len(library)
    for i, sig in enumerate(library):
        n = per if i < len(library) - 1 else n_draws - per * (len(library) - 1)
        for L in range(1, 5):
            k = n // 4 + (1 if L <= n % 4 else 0)
            if k == 0:
                continue
            xs = rng.uniform(-20, 20, size=(k, sig.dim))
            us = rng.uniform(-2, 2, size=(k, sig.dim))
            pts = xs[:, 0] if sig.dim == 1 else xs
            mag = _magnitude(sig, L)(pts)
            lhs = np.array([directional_derivative(sig, u, L, xx if sig.dim > 1 else xx[0]) for u, xx in zip(us, xs)])
            bound = np.max(np.abs(us), axis=1) ** L * mag
            violations += int(np.sum(np.abs(lhs) > bound * (1 + 1e-12) + 1e-12))
    return {"value": violations, "tolerance": 0, "passed": violations == 0, "draws": n_draws}


def reproduction_suite(L: int = 4) -> dict:
    """Polynomial reproduction by the interpolant for every ``|l| <= L - 1``."""
    k = centered(bspline(L))
    a = prefilter(k)
    grid = np.linspace(-5, 5, 401)
    worst = max(polynomial_reproduction_residual(k, a, (l,), grid, truncation=60).residual for l in range(L))
    return _suite(worst, 1e-6, order=L)


def interpolating_suite(orders=(2, 3, 4), radius: int = 16) -> dict:
    """``max |phi_int(k) - delta[k]|`` for ``|k| <= radius``."""
    worst = 0.0
    for L in orders:
        s = sample_kernel(centered(bspline(L)))
        comp = convolve(prefilter(centered(bspline(L))), s)
        for kk in range(-radius, radius + 1):
            worst = max(worst, abs(comp[(kk,)] - (1.0 if kk == 0 else 0.0)))
    return _suite(worst, 1e-9, orders=list(orders))


def composition_suite(kind: str, orders=(2, 3, 4)) -> dict:
    """``q * a_phi = delta`` (dual) or ``a * phi[.] = delta`` (prefilter), entrywise."""
    worst = 0.0
    for L in orders:
        k = centered(bspline(L))
        base = autocorrelation_sequence(k) if kind == "dual" else sample_kernel(k)
        inv = dual_filter(k) if kind == "dual" else prefilter(k)
        comp = convolve(inv, base)
        for idx, v in comp.entries():
            worst = max(worst, abs(v - (1.0 if not any(idx) else 0.0)))
    return _suite(worst, 1e-10, orders=list(orders))


def scaling_suite(L: int = 2, p: float = 2.0, alpha: float = 2.5, T: float = 64.0, hs=None, m: int = 16) -> dict:
    """``|| J_h f (h .) ||_{l_p, <hk>^-alpha} h^(d/p) / ||f||_{L_p,-alpha}`` across the sweep."""
    hs = hs or [2.0**-j for j in range(3, 7)]
    sig = make_signal("growing_oscillation", {"beta": 1.0, "omega0": 1.0})
    chi = Mollifier(1, 0.0, 1.0)
    ref = GridSignal.from_callback(sig, T, min(hs) / m)
    w = weight(ref.points(), -alpha)
    fnorm = float(np.sum(np.abs(ref.values * w) ** p) * ref.step) ** (1 / p)
    ratios = []
    for h in hs:
        J = smooth(GridSignal.from_callback(sig, T, h / m), h, L, chi)
        nodes = J.values[::m] if abs((J.T / h) - round(J.T / h)) < 1e-9 else None
        if nodes is None:
            raise ValueError("smoothed window not aligned with h")
        hk = J.axis()[::m]
        seq = np.sum(np.abs(nodes * weight(hk, -alpha)) ** p) ** (1 / p)
        ratios.append(float(seq * h ** (1 / p) / fnorm))
    spread = max(ratios) / min(ratios) - 1
    return _suite(spread, 0.5, ratios=ratios, hs=hs)


def identity_checks(config: ExperimentConfig | None = None) -> dict:
    """Run every identity suite and aggregate pass/fail."""
    seed = 0 if config is None else config.seed
    suites = {
        "peano": peano_suite(seed=seed),
        "lemma2": lemma2_suite(seed=seed),
        "reproduction": reproduction_suite(),
        "interpolating": interpolating_suite(),
        "scaling": scaling_suite(),
        "dual_composition": composition_suite("dual"),
        "prefilter_composition": composition_suite("prefilter"),
    }
    return {"suites": suites, "passed": all(s["passed"] for s in suites.values()), "version": __version__}
