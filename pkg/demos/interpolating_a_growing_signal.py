"""Interpolate a signal that grows like |x| with a cubic B-spline.

Walks through the pieces: the integer samples of the centred cubic, the
prefilter that turns samples into coefficients, and the interpolant itself,
whose error shrinks like h^4 even though the signal is unbounded.
"""
import math

import numpy as np

from siapprox.dfilter import prefilter, sample_kernel
from siapprox.kernel import bspline, centered
from siapprox.operators import interpolate, synthesize
from siapprox.signals import make_growing_oscillation

cubic = centered(bspline(4))
print("integer samples of the centred cubic:", {k[0]: round(float(v), 6) for k, v in sample_kernel(cubic).entries()})

a = prefilter(cubic)
z0 = math.sqrt(3) - 2
print(f"prefilter support {a.start[0]}..{a.stop[0]}, decay ratio {a.decay.rho:.6f} (pole magnitude {abs(z0):.6f})")
print("a[0], a[1], a[2] =", [round(float(a[k]), 6) for k in range(3)])

f = make_growing_oscillation(beta=1.0, omega0=1.0)
print(f"\nsignal: <x> sin(1.3 x), growth order {f.growth[0]}")
print(f"{'h':>10} {'max error on [-20, 20]':>24} {'ratio':>8}")
prev = None
for h in [2.0**-j for j in range(2, 7)]:
    c = interpolate(f, cubic, h, T=64.0)
    x = np.linspace(-20, 20, 4001)
    err = np.max(np.abs(synthesize(c, x) - f(x)))
    ratio = "" if prev is None else f"{prev / err:8.2f}"
    print(f"{h:10.5f} {err:24.3e} {ratio}")
    prev = err
print("\nsuccessive ratios approach 2^4 = 16")
