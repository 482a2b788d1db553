"""Fractional derivatives as a Fourier multiplier.

For a spectral test signal the exact D^r f is available in closed form;
here it is compared with the discrete multiplier on a window over which
the signal is periodic, and the composition rule D^a D^b = D^(a+b) is
checked on the grid.
"""
import math

import numpy as np

from siapprox.signals import make_spectral
from siapprox.spaces import GridSignal, fractional_derivative

T = 16 * math.pi
sig = make_spectral([1.0], [1.0, 0.5], [1.0, 2.0])
f = GridSignal.from_callback(sig, T, 2 * T / 4096)

for r in (0.5, 1.1, 2.0):
    grid = fractional_derivative(f, r, periodic=True)
    exact = sig.fractional(r)(f.axis())
    print(f"r = {r}: max |DFT multiplier - closed form| = {np.max(np.abs(grid.values - exact)):.2e}")

a, b = 0.7, 0.4
two = fractional_derivative(fractional_derivative(f, a, periodic=True), b, periodic=True)
one = fractional_derivative(f, a + b, periodic=True)
print(f"composition D^{a} D^{b} vs D^{a + b}: {np.max(np.abs(two.values - one.values)):.2e}")
