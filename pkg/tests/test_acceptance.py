"""End-to-end acceptance checks.

Each test records its outcome through the ``criterion`` fixture; a
``criterion N: PASS/FAIL`` line per criterion is printed in the terminal
summary.
"""
import math
import time

import numpy as np
import pytest

from siapprox.dfilter import prefilter
from siapprox.harness import ExperimentConfig, identity_checks, run
from siapprox.kernel import bspline, centered

from oracles import bspline_by_convolution, cubic_prefilter_by_poles

OSCILLATION = {"beta": 1.0, "omega0": 1.0}
SPECTRAL = {"envelope": [1.0, 0.5], "amplitudes": [1.0, 0.5], "frequencies": [1.0, 2.3]}
# window wide enough for the tail certificate of the slowest-decaying case (L = 2, p = 2)
T_1D = 512.0

pytestmark = pytest.mark.slow


@pytest.mark.parametrize("p", [2.0, math.inf], ids=["p2", "pinf"])
@pytest.mark.parametrize("L", [2, 3, 4])
def test_projection_rate(L, p, criterion):
    start = time.perf_counter()
    rep = run(ExperimentConfig(mode="projection", order=L, p=p, alpha=2.5, signal_params=OSCILLATION, T=T_1D))
    elapsed = time.perf_counter() - start
    slope = rep.fit.slope if rep.fit else float("nan")
    ok = (not rep.inconclusive) and abs(slope - L) <= 0.2 and elapsed < 120
    criterion(1, ok, f"L={L} p={p:g} slope={slope:.3f} {elapsed:.0f}s")
    assert ok, rep.to_json(timestamp=False)


@pytest.mark.parametrize("L", [2, 3, 4])
def test_interpolation_rate(L, criterion):
    rep = run(ExperimentConfig(mode="interpolation", order=L, signal="spectral", signal_params=SPECTRAL, p=2.0, alpha=2.5, r=1.1, T=T_1D))
    slope = rep.fit.slope if rep.fit else float("nan")
    spread = rep.diagnostics.get("ratio_spread", math.inf)
    ok = (not rep.inconclusive) and abs(slope - L) <= 0.2 and spread < 3.0
    criterion(2, ok, f"L={L} slope={slope:.3f} ratio spread={spread:.3f}")
    # the same runs measure interpolation stability against the computed D^r f norm
    stab = rep.acceptance.get("stability", False)
    criterion(4, stab, f"L={L} spread={rep.diagnostics.get('stability_spread', math.nan):.3g} trend={rep.diagnostics.get('stability_trend', math.nan):.3g}")
    assert ok and stab, rep.to_json(timestamp=False)


STABILITY_SIGNALS = [
    ("growing_oscillation", {"beta": 1.0, "omega0": 1.0}, 1.0),
    ("growing_oscillation", {"beta": 0.0, "omega0": 2.0}, 0.0),
    ("random_trig_poly", {"seed": 0, "K": 4, "beta": 1.0}, 1.0),
    ("polynomial", {"coeffs": [0.5, -1.0, 0.25]}, 2.0),
    ("spectral", SPECTRAL, 1.0),
]


@pytest.mark.parametrize("family,params,beta", STABILITY_SIGNALS, ids=[f"{s[0]}-{i}" for i, s in enumerate(STABILITY_SIGNALS)])
def test_projector_stability(family, params, beta, criterion):
    rep = run(ExperimentConfig(mode="projection", order=4, signal=family, signal_params=params, p=2.0, alpha=beta + 1.5, T=T_1D))
    spread = rep.diagnostics.get("stability_spread", math.inf)
    trend = rep.diagnostics.get("stability_trend", math.inf)
    clean = sum(1 for r in rep.records if not r.flags)
    ok = clean == len(rep.records) and spread < 0.5 and abs(trend) <= 0.1
    criterion(3, ok, f"{family} spread={spread:.3g} trend={trend:.3g}")
    assert ok


@pytest.mark.parametrize("L", [2, 3])
def test_smoothing_rate(L, criterion):
    rep = run(ExperimentConfig(mode="smoothing", order=L, p=2.0, alpha=2.5, signal_params=OSCILLATION, T=T_1D))
    slope = rep.fit.slope if rep.fit else float("nan")
    ok = (not rep.inconclusive) and abs(slope - L) <= 0.2
    criterion(5, ok, f"L={L} slope={slope:.3f}")
    assert ok


def test_identity_suites(criterion):
    res = identity_checks(ExperimentConfig())
    for name, suite in res["suites"].items():
        criterion(6, suite["passed"], f"{name}={suite['value']:.3g}")
    assert res["passed"], res


def test_oracle_equivalences(criterion):
    a = prefilter(centered(bspline(4)))
    pole = max(abs(a[k] - cubic_prefilter_by_poles(k)) for k in range(-20, 21))
    samples = 0.0
    # the nested-quadrature oracle allocates 12^(L-1) nodes per point, so stop at order 6
    for L in range(1, 7):
        k = np.arange(0, L + 1, dtype=float)
        samples = max(samples, float(np.max(np.abs(bspline(L)(k) - bspline_by_convolution(L, k)))))
    ok = pole <= 1e-10 and samples <= 1e-10
    criterion(7, ok, f"pole oracle={pole:.2e} integer samples={samples:.2e}")
    assert ok


def test_two_dimensional_smoke(criterion):
    start = time.perf_counter()
    cfg = ExperimentConfig(
        mode="projection",
        order=4,
        dim=2,
        signal_params=OSCILLATION,
        p=2.0,
        # the tail certificate in d = 2 needs (alpha - beta) p > d with room to spare
        alpha=5.0,
        hs=[2.0**-j for j in range(3, 7)],
        T=16.0,
        m=8,
        slope_band=0.4,
    )
    rep = run(cfg)
    elapsed = time.perf_counter() - start
    slope = rep.fit.slope if rep.fit else float("nan")
    ok = (not rep.inconclusive) and 3.6 <= slope <= 4.4 and elapsed < 600
    criterion(8, ok, f"slope={slope:.3f} {elapsed:.0f}s")
    assert ok, rep.to_json(timestamp=False)
