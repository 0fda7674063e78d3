"""Linear frequency-domain propagation of weak pulses through a comb medium.

The medium acts as a spectral filter ``H(nu) = exp(-D(nu)/2 - i phi(nu))``
where ``D`` is the comb optical depth and ``phi`` its Kramers-Kronig phase.
Time runs over ``[0, time_span)`` on a periodic grid; frequencies follow
numpy's FFT ordering.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .comb import CombSpec, comb_profile
from .errors import GridCoverageError

LN2 = math.log(2.0)
# Fraction of 1/delta on each side of the echo time used as the default window.
ECHO_HALF_WINDOW = 0.3


@dataclass(frozen=True)
class SimGrid:
    n_samples: int = 2**16
    time_span: float = 50e-6

    def __post_init__(self):
        n = self.n_samples
        if int(n) != n or n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"n_samples must be a power of two, got {n}")
        if not self.time_span > 0:
            raise ValueError("time_span must be > 0")

    @property
    def time_step(self) -> float:
        return self.time_span / self.n_samples

    @property
    def freq_step(self) -> float:
        return 1.0 / self.time_span

    @property
    def freq_span(self) -> float:
        return self.n_samples / self.time_span

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.time_step

    @property
    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.n_samples, self.time_step)

    def check_covers(self, comb: CombSpec) -> None:
        if self.freq_span < 4.0 * comb.bandwidth:
            raise GridCoverageError(
                f"frequency span {self.freq_span:.4g} Hz is below 4x the comb "
                f"bandwidth {comb.bandwidth:.4g} Hz"
            )
        if self.time_span <= 3.0 * comb.storage_time:
            raise GridCoverageError(
                f"time span {self.time_span:.4g} s must exceed 3x the echo time "
                f"{comb.storage_time:.4g} s"
            )

    def to_dict(self):
        return {"n_samples": self.n_samples, "time_span": self.time_span}


@dataclass(frozen=True, eq=False)
class TimeTrace:
    """Complex field envelope sampled on ``grid.times``."""

    grid: SimGrid
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.shape != (self.grid.n_samples,):
            raise ValueError(f"expected {self.grid.n_samples} samples, got {s.shape}")
        object.__setattr__(self, "samples", s)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    @property
    def energy(self) -> float:
        return float(np.sum(self.intensity) * self.grid.time_step)

    def spectrum(self) -> "Spectrum":
        return Spectrum(self.grid, np.fft.fft(self.samples) * self.grid.time_step)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Complex amplitude on ``grid.freqs`` (FFT order)."""

    grid: SimGrid
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.shape != (self.grid.n_samples,):
            raise ValueError(f"expected {self.grid.n_samples} samples, got {s.shape}")
        object.__setattr__(self, "samples", s)

    @property
    def freqs(self) -> np.ndarray:
        return self.grid.freqs

    def to_time(self) -> TimeTrace:
        return TimeTrace(self.grid, np.fft.ifft(self.samples) / self.grid.time_step)


def _causal_mask(n: int) -> np.ndarray:
    m = np.zeros(n)
    m[0] = 1.0
    m[1 : n // 2] = 2.0
    m[n // 2] = 1.0
    return m


def periodic_hilbert(x) -> np.ndarray:
    """Discrete Hilbert transform of a real sequence on a periodic grid.

    Returns ``y`` such that ``x + 1j*y`` is the DFT of a sequence supported on
    non-negative times, i.e. the response ``exp(-(x + 1j*y))`` is causal.
    A constant input maps to zero.
    """
    x = np.asarray(x, dtype=float)
    cep = np.fft.ifft(x)
    return np.fft.fft(cep * _causal_mask(x.size)).imag


def _optical_depth(comb: CombSpec, grid: SimGrid) -> np.ndarray:
    return comb_profile(comb, grid.freqs)


def transfer_function(comb: CombSpec, grid: SimGrid) -> Spectrum:
    """Complex field transmission of the comb medium on ``grid``."""
    grid.check_covers(comb)
    depth = _optical_depth(comb, grid)
    phase = periodic_hilbert(depth / 2.0)
    return Spectrum(grid, np.exp(-depth / 2.0 - 1j * phase))


def spectral_fwhm(trace: TimeTrace) -> float:
    """FWHM (Hz) of the power spectrum's main lobe, by linear interpolation."""
    power = np.fft.fftshift(np.abs(np.fft.fft(trace.samples)) ** 2)
    nu = np.fft.fftshift(trace.grid.freqs)
    return _fwhm(nu, power)


def _fwhm(x: np.ndarray, y: np.ndarray) -> float:
    i = int(np.argmax(y))
    half = y[i] / 2.0
    lo = i
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = i
    while hi < y.size - 1 and y[hi] > half:
        hi += 1
    xl = np.interp(half, [y[lo], y[lo + 1]], [x[lo], x[lo + 1]]) if lo < i else x[lo]
    xr = np.interp(half, [y[hi], y[hi - 1]], [x[hi], x[hi - 1]]) if hi > i else x[hi]
    return float(xr - xl)


def _check_input(trace: TimeTrace, comb: CombSpec) -> None:
    trace.grid.check_covers(comb)
    width = spectral_fwhm(trace)
    if width > comb.bandwidth / 4.0:
        warnings.warn(
            f"input spectral FWHM {width:.3g} Hz exceeds a quarter of the comb "
            f"bandwidth {comb.bandwidth:.3g} Hz",
            stacklevel=3,
        )


def propagate(trace: TimeTrace, comb: CombSpec) -> TimeTrace:
    """Field leaving the medium for input ``trace``."""
    _check_input(trace, comb)
    h = transfer_function(comb, trace.grid)
    out = np.fft.ifft(np.fft.fft(trace.samples) * h.samples)
    return TimeTrace(trace.grid, out)


def echo_components(trace: TimeTrace, comb: CombSpec, max_order: int = 2) -> list[TimeTrace]:
    """Split the output field into transmission (order 0) and echoes of order k.

    The log of the transfer function is the DFT of a causal cepstrum with lobes
    near delays ``k/delta``. Tagging lobe ``k`` with ``z**k`` and extracting
    power-series coefficients in ``z`` (by sampling ``z`` on roots of unity)
    gives the part of the response delayed by ``k`` comb periods. The sum of
    all components reproduces :func:`propagate` up to orders beyond the
    resolved ones.
    """
    _check_input(trace, comb)
    grid = trace.grid
    period = comb.storage_time
    depth = _optical_depth(comb, grid)
    cep = np.fft.ifft(depth / 2.0) * _causal_mask(grid.n_samples)
    order = np.floor(grid.times / period + 0.5).astype(int)
    order[grid.n_samples // 2 + 1 :] = 0  # acausal half is already zero
    n_lobes = int(order.max()) + 1
    lobes = np.empty((n_lobes, grid.n_samples), dtype=complex)
    for k in range(n_lobes):
        lobes[k] = np.fft.fft(np.where(order == k, cep, 0.0))

    m = 1 << max(5, int(math.ceil(math.log2(4 * (max_order + 1)))))
    roots = np.exp(2j * np.pi * np.arange(m) / m)
    powers = roots[:, None] ** np.arange(n_lobes)[None, :]
    spec_in = np.fft.fft(trace.samples)
    coeffs = np.zeros((max_order + 1, grid.n_samples), dtype=complex)
    for j in range(m):
        hj = np.exp(-(powers[j] @ lobes))
        coeffs += hj[None, :] * (roots[j] ** -np.arange(max_order + 1))[:, None]
    coeffs /= m
    return [TimeTrace(grid, np.fft.ifft(spec_in * c)) for c in coeffs]


def gaussian_pulse(grid: SimGrid, t0: float, fwhm: float, amplitude: complex = 1.0) -> TimeTrace:
    """Gaussian field envelope whose intensity FWHM is ``fwhm``."""
    if fwhm <= 0:
        raise ValueError("fwhm must be > 0")
    t = grid.times
    return TimeTrace(grid, amplitude * np.exp(-2.0 * LN2 * (t - t0) ** 2 / fwhm**2))


def peak_time(trace: TimeTrace, start: float, stop: float) -> float:
    """Time of the intensity maximum inside ``[start, stop]``, refined by a parabola."""
    t = trace.times
    inside = np.flatnonzero((t >= start) & (t <= stop))
    if inside.size == 0:
        raise ValueError("empty search window")
    y = trace.intensity
    i = int(inside[np.argmax(y[inside])])
    if 0 < i < y.size - 1:
        a, b, c = y[i - 1], y[i], y[i + 1]
        denom = a - 2.0 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    return float(t[i] + shift * trace.grid.time_step)


def default_echo_window(comb: CombSpec) -> float:
    return 2.0 * ECHO_HALF_WINDOW * comb.storage_time


def echo_efficiency(output: TimeTrace, reference: TimeTrace, echo_time: float, window: float) -> float:
    """Echo energy inside ``echo_time +/- window/2`` over the reference energy.

    ``reference`` is the same input sent through no medium; its intensity peak
    marks the input time, which must lie outside the window.
    """
    if output.grid != reference.grid:
        raise ValueError("output and reference live on different grids")
    if not window > 0:
        raise ValueError("echo window must be > 0")
    t = output.times
    mask = np.abs(t - echo_time) <= window / 2.0
    if not mask.any():
        raise ValueError("echo window contains no samples")
    t_in = t[int(np.argmax(reference.intensity))]
    if abs(t_in - echo_time) <= window / 2.0:
        raise ValueError("echo window overlaps the transmitted input pulse")
    total = float(np.sum(reference.intensity))
    if total <= 0:
        raise ValueError("reference carries no energy")
    return float(np.sum(output.intensity[mask]) / total)


def pulse_train_spectrum(
    n_pulses: int, separation: float, pulse_fwhm: float, grid: SimGrid, t_start: float | None = None
) -> Spectrum:
    """Power spectrum of ``n_pulses`` identical Gaussian pulses, ``separation`` apart.

    The returned samples are real (intensity); peaks repeat every
    ``1/separation`` Hz for two or more pulses.
    """
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    if pulse_fwhm <= 0 or separation <= 0:
        raise ValueError("separation and pulse_fwhm must be > 0")
    length = (n_pulses - 1) * separation + 6.0 * pulse_fwhm
    if length > grid.time_span:
        raise GridCoverageError(
            f"pulse train of {length:.4g} s does not fit in the {grid.time_span:.4g} s grid"
        )
    if t_start is None:
        t_start = 3.0 * pulse_fwhm
    t = grid.times
    centers = t_start + separation * np.arange(n_pulses)
    field = np.exp(-2.0 * LN2 * (t[:, None] - centers[None, :]) ** 2 / pulse_fwhm**2).sum(axis=1)
    power = np.abs(np.fft.fft(field) * grid.time_step) ** 2
    return Spectrum(grid, power)


def write_csv(obj: TimeTrace | Spectrum, path) -> None:
    """Write a trace or spectrum as ``t_or_nu,re,im`` rows (frequencies ascending)."""
    if isinstance(obj, TimeTrace):
        x, s = obj.times, obj.samples
    else:
        x, s = np.fft.fftshift(obj.freqs), np.fft.fftshift(obj.samples)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t_or_nu", "re", "im"])
        for xi, si in zip(x, s):
            w.writerow([repr(float(xi)), repr(float(si.real)), repr(float(si.imag))])


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["t_or_nu", "re", "im"]:
        raise ValueError(f"{path}: expected header t_or_nu,re,im")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    return data[:, 0], data[:, 1] + 1j * data[:, 2]


def _grid_from_axis(step: float, n: int) -> SimGrid:
    return SimGrid(n, step * n)


def read_time_trace(path) -> TimeTrace:
    x, s = _read_rows(Path(path))
    return TimeTrace(_grid_from_axis(x[1] - x[0], x.size), s)


def read_spectrum(path) -> Spectrum:
    x, s = _read_rows(Path(path))
    n = x.size
    grid = SimGrid(n, 1.0 / (x[1] - x[0]))
    return Spectrum(grid, np.fft.ifftshift(s))
