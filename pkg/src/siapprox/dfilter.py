"""Finitely supported sequences on Z^d and their inversion.

A :class:`DiscreteFilter` stores a dense box of values together with the
integer index of its first entry.  Tensor-product filters additionally keep
their 1-D factors so that they can be applied axis by axis.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import signal

__all__ = [
    "Decay",
    "DiscreteFilter",
    "SymbolInversionError",
    "RieszBoundError",
    "TRUNCATION_THRESHOLD",
    "sample_kernel",
    "invert_symbol_periodic",
    "convolve",
    "dual_filter",
    "prefilter",
    "filter_valid",
]

TRUNCATION_THRESHOLD = 1e-14
NOISE_CEILING = 1e-12


class SymbolInversionError(ValueError):
    """The symbol of a filter is too small somewhere on the DFT grid."""

    def __init__(self, message, frequency, magnitude):
        super().__init__(message)
        self.frequency = frequency
        self.magnitude = magnitude


class RieszBoundError(SymbolInversionError):
    """The autocorrelation symbol is not bounded away from zero."""

    @property
    def minimum(self) -> float:
        return self.magnitude


@dataclass(frozen=True)
class Decay:
    """Geometric envelope ``|a[k]| <= C * rho**|k - center|_1``."""

    rho: float
    C: float
    center: tuple[int, ...] = ()

    def bound(self, k) -> float:
        k = np.atleast_1d(np.asarray(k))
        c = np.asarray(self.center or (0,) * k.size)
        return self.C * self.rho ** float(np.sum(np.abs(k - c)))


@dataclass(frozen=True)
class DiscreteFilter:
    values: np.ndarray
    start: tuple[int, ...]
    decay: Decay | None = None
    truncation: float = 0.0  # largest magnitude discarded when this filter was truncated
    factors: tuple["DiscreteFilter", ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype.kind not in "fc":
            v = v.astype(float)
        v = np.array(v, copy=True)
        start = tuple(int(s) for s in np.atleast_1d(self.start))
        if v.ndim != len(start):
            raise ValueError("start must give one index per dimension")
        if not np.all(np.isfinite(v)):
            raise ValueError("filter values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "start", start)

    @classmethod
    def from_dict(cls, entries: dict, dim: int | None = None) -> "DiscreteFilter":
        """Build from ``{k: value}`` where ``k`` is an int or a tuple of ints."""
        keys = [np.atleast_1d(k) for k in entries]
        d = dim or len(keys[0])
        lo = np.min(keys, axis=0)
        hi = np.max(keys, axis=0)
        dtype = complex if any(np.iscomplexobj(v) for v in entries.values()) else float
        vals = np.zeros(tuple(hi - lo + 1), dtype=dtype)
        for k, v in entries.items():
            vals[tuple(np.atleast_1d(k) - lo)] = v
        assert vals.ndim == d
        return cls(vals, tuple(lo))

    @classmethod
    def identity(cls, dim: int = 1) -> "DiscreteFilter":
        if dim == 1:
            return cls(np.ones(1), (0,))
        return cls.separable([cls.identity(1)] * dim)

    @classmethod
    def separable(cls, factors: Sequence["DiscreteFilter"]) -> "DiscreteFilter":
        factors = tuple(factors)
        if len(factors) == 1:
            return factors[0]
        vals = factors[0].values
        for f in factors[1:]:
            vals = np.multiply.outer(vals, f.values)
        decay = None
        if all(f.decay is not None for f in factors):
            decay = Decay(
                max(f.decay.rho for f in factors),
                math.prod(f.decay.C for f in factors),
                tuple(c for f in factors for c in f.decay.center),
            )
        start = tuple(s for f in factors for s in f.start)
        trunc = max(f.truncation for f in factors) * max(float(np.max(np.abs(f.values))) for f in factors)
        return cls(vals, start, decay, trunc, factors)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def stop(self) -> tuple[int, ...]:
        """Last stored index (inclusive)."""
        return tuple(s + n - 1 for s, n in zip(self.start, self.values.shape))

    def __getitem__(self, k):
        k = tuple(int(i) for i in np.atleast_1d(k))
        idx = tuple(i - s for i, s in zip(k, self.start))
        if any(i < 0 or i >= n for i, n in zip(idx, self.values.shape)):
            return 0.0
        return self.values[idx]

    def entries(self) -> Iterator[tuple[tuple[int, ...], float]]:
        """Nonzero entries as ``(k, value)`` pairs."""
        for idx in zip(*np.nonzero(self.values)):
            k = tuple(int(i) + s for i, s in zip(idx, self.start))
            yield k, self.values[idx]

    def symbol(self, omega) -> np.ndarray:
        """``sum_k a[k] exp(-j <omega, k>)`` at points of shape ``(..., d)``."""
        omega = np.asarray(omega, dtype=float)
        if self.dim == 1 and (omega.ndim == 0 or omega.shape[-1] != 1):
            omega = omega[..., None]
        out = np.zeros(omega.shape[:-1], dtype=complex)
        for k, v in self.entries():
            out += v * np.exp(-1j * (omega @ np.asarray(k, dtype=float)))
        return out

    def is_symmetric(self) -> bool:
        """True when ``a[k] == a[-k]`` holds exactly for every stored entry."""
        if any(s != -e for s, e in zip(self.start, self.stop)):
            return not np.any(self.values)
        return bool(np.array_equal(self.values, self.values[(slice(None, None, -1),) * self.dim]))

    def trimmed(self, threshold: float = 0.0) -> "DiscreteFilter":
        """Drop the outer layers whose entries are all ``<= threshold`` in magnitude."""
        mag = np.abs(self.values)
        keep = mag > threshold
        if not keep.any():
            return DiscreteFilter(np.zeros((1,) * self.dim), (0,) * self.dim)
        lo = [int(np.min(ix)) for ix in np.nonzero(keep)]
        hi = [int(np.max(ix)) for ix in np.nonzero(keep)]
        box = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
        dropped = float(np.max(mag[~keep], initial=0.0))
        vals = np.where(keep, self.values, 0)[box]
        start = tuple(s + a for s, a in zip(self.start, lo))
        return DiscreteFilter(vals, start, self.decay, max(self.truncation, dropped))

    def to_json(self) -> str:
        entries = [[*k, float(np.real(v))] for k, v in self.entries()]
        decay = None if self.decay is None else {"rho": self.decay.rho, "C": self.decay.C}
        return json.dumps({"dim": self.dim, "entries": entries, "decay": decay})

    @classmethod
    def from_json(cls, text: str) -> "DiscreteFilter":
        doc = json.loads(text)
        d = doc["dim"]
        entries = {tuple(int(i) for i in e[:d]): e[d] for e in doc["entries"]}
        if not entries:
            entries = {(0,) * d: 0.0}
        out = cls.from_dict(entries, d)
        if doc.get("decay"):
            out = DiscreteFilter(out.values, out.start, Decay(doc["decay"]["rho"], doc["decay"]["C"]))
        return out


def sample_kernel(kernel) -> DiscreteFilter:
    """Integer samples ``phi[k]`` of a compactly supported kernel."""
    factors = []
    for axis in kernel.axes:
        lo, hi = axis.support
        k = np.arange(math.ceil(lo), math.floor(hi) + 1)
        factors.append(DiscreteFilter(axis(k.astype(float)), (int(k[0]),)).trimmed())
    return DiscreteFilter.separable(factors)


def _estimate_decay(values: np.ndarray, center: int) -> Decay | None:
    """Fit ``|a[center + j]| ~ C rho^j`` on the clean part of the tail."""
    mag = np.abs(values)
    n = mag.size
    right = mag[center:]
    left = mag[: center + 1][::-1]
    m = min(right.size, left.size)
    env = np.maximum(right[:m], left[:m])
    j = np.nonzero(env > 1e-12)[0]
    if j.size < 4:
        return None
    j_hi = int(j[-1])
    js = np.arange(max(1, j_hi // 2), j_hi + 1)
    js = js[env[js] > 1e-12]
    if js.size < 3:
        return None
    slope = np.polyfit(js, np.log(env[js]), 1)[0]
    rho = float(np.exp(slope))
    if not 0 < rho < 1:
        return None
    k = np.abs(np.arange(n) - center)
    # C is fitted against a slightly smaller ratio so the bound also holds for
    # any rho within 1e-6 (relative) of the fit
    nz = mag > 0
    log_C = float(np.max(np.log(mag[nz]) - k[nz] * math.log(rho * (1 - 1e-6))))
    if log_C > 700.0:
        return None
    C = math.exp(log_C)
    return Decay(rho, C, (0,))


def invert_symbol_periodic(filt: DiscreteFilter, N: int = 4096, tol: float = 1e-12) -> DiscreteFilter:
    """Impulse response of ``1 / symbol`` by division on the ``N``-point DFT grid.

    The response is truncated to the smallest box (centred on the mirror of
    the input's centre) outside of which every entry is below
    ``TRUNCATION_THRESHOLD``, or below the measured rounding-noise floor when
    that is larger.  Raises :class:`SymbolInversionError` when the
    symbol drops below ``tol`` at some grid frequency.
    """
    if filt.factors is not None:
        return DiscreteFilter.separable([invert_symbol_periodic(f, N, tol) for f in filt.factors])
    d = filt.dim
    if any(n > N for n in filt.values.shape):
        raise ValueError("DFT size smaller than the filter support")
    grid = np.zeros((N,) * d, dtype=filt.values.dtype)
    for k, v in filt.entries():
        grid[tuple(i % N for i in k)] += v
    sym = np.fft.fftn(grid)
    mag = np.abs(sym)
    worst = np.unravel_index(np.argmin(mag), mag.shape)
    if mag[worst] < tol:
        freq = tuple(2 * np.pi * np.fft.fftfreq(N)[i] for i in worst)
        raise SymbolInversionError(
            f"symbol magnitude {mag[worst]:.3e} below {tol:.1e} at frequency {freq}",
            freq,
            float(mag[worst]),
        )
    inv = np.fft.ifftn(1.0 / sym)
    if np.isrealobj(filt.values):
        inv = inv.real
    center = tuple(-int(round((s + e) / 2)) for s, e in zip(filt.start, filt.stop))
    # reorder so that index 0 holds offset center - N//2
    shift = tuple(-(c - N // 2) for c in center)
    inv = np.roll(inv, shift, axis=tuple(range(d)))
    start = tuple(c - N // 2 for c in center)
    out = DiscreteFilter(inv, start)
    if filt.is_symmetric():
        # mirror about 0; the box [-N/2, N/2) has one unpaired entry
        v = inv[(slice(1, None),) * d]
        v = 0.5 * (v + v[(slice(None, None, -1),) * d])
        out = DiscreteFilter(v, tuple(s + 1 for s in start))
    # rounding noise can exceed the nominal threshold for ill-conditioned symbols;
    # it is measured on the far half of the box, where the true response is negligible
    far = np.abs(np.asarray(out.values))
    for axis in range(d):
        n_ax = far.shape[axis]
        far = np.take(far, np.r_[0 : n_ax // 4, n_ax - n_ax // 4 : n_ax], axis=axis)
    noise = 2.0 * float(np.max(far)) if far.size else 0.0
    if noise > NOISE_CEILING:
        # the far band carries real signal, not rounding noise
        noise = 0.0
    out = out.trimmed(max(TRUNCATION_THRESHOLD, noise))
    # re-centre the stored box so that truncation is symmetric about the centre
    radius = [max(c - s, e - c) for c, s, e in zip(center, out.start, out.stop)]
    box = DiscreteFilter(np.zeros(tuple(2 * r + 1 for r in radius), dtype=out.values.dtype), tuple(c - r for c, r in zip(center, radius)))
    vals = np.array(box.values)
    for k, v in out.entries():
        vals[tuple(i - s for i, s in zip(k, box.start))] = v
    decay = None
    if d == 1:
        decay = _estimate_decay(vals, radius[0])
        if decay is not None:
            decay = Decay(decay.rho, decay.C, center)
    return DiscreteFilter(vals, box.start, decay, out.truncation)


def convolve(a: DiscreteFilter, b: DiscreteFilter) -> DiscreteFilter:
    """Exact finite convolution; the support is the Minkowski sum."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    if a.factors is not None and b.factors is not None:
        return DiscreteFilter.separable([convolve(x, y) for x, y in zip(a.factors, b.factors)])
    vals = signal.convolve(a.values, b.values, method="direct")
    return DiscreteFilter(vals, tuple(x + y for x, y in zip(a.start, b.start)))


def dual_filter(kernel, N: int = 4096, tol: float = 1e-12) -> DiscreteFilter:
    """Inverse of the autocorrelation symbol of ``kernel`` (the dual-kernel prefilter)."""
    from .kernel import autocorrelation_sequence

    acf = autocorrelation_sequence(kernel)
    try:
        return invert_symbol_periodic(acf, N, tol)
    except SymbolInversionError as exc:
        raise RieszBoundError(
            f"autocorrelation symbol not bounded below: minimum {exc.magnitude:.3e}",
            exc.frequency,
            exc.magnitude,
        ) from exc


def prefilter(kernel, N: int = 4096, tol: float = 1e-12) -> DiscreteFilter:
    """Interpolation prefilter: inverse of the symbol of the integer samples."""
    return invert_symbol_periodic(sample_kernel(kernel), N, tol)


def filter_valid(values: np.ndarray, first: Sequence[int], filt: DiscreteFilter):
    """Convolve a coefficient array with ``filt``, keeping only exact outputs.

    ``values[i]`` holds the sequence at index ``first + i``.  Returns the
    filtered array and the index of its first entry; outputs that would need
    samples outside ``values`` are discarded.
    """
    values = np.asarray(values)
    first = tuple(int(f) for f in np.atleast_1d(first))
    factors = filt.factors if filt.factors is not None else None
    if factors is None and filt.dim > 1:
        vals = signal.convolve(values, filt.values, mode="valid", method="direct")
        m = filt.values.shape
        return vals, tuple(f + s + n - 1 for f, s, n in zip(first, filt.start, m))
    factors = factors or (filt,)
    out = values
    new_first = list(first)
    for axis, fac in enumerate(factors):
        taps = fac.values
        m = taps.size
        n_out = out.shape[axis] - m + 1
        if n_out <= 0:
            raise ValueError("coefficient array shorter than the filter")
        acc = np.zeros(out.shape[:axis] + (n_out,) + out.shape[axis + 1 :], dtype=np.result_type(out, taps))
        for j in range(m):
            # out[n] = sum_j taps[j] * values[n - j]  ->  valid window offset m - 1 - j
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(m - 1 - j, m - 1 - j + n_out)
            if taps[j] != 0:
                acc += taps[j] * out[tuple(sl)]
        out = acc
        new_first[axis] = new_first[axis] + fac.start[0] + m - 1
    return out, tuple(new_first)
