"""Three-level storage: control-pulse transfer, spin dephasing, total efficiency."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import integrate

from .comb import CombSpec, _from_mapping
from .errors import UnphysicalEfficiencyError

LN2 = math.log(2.0)
# Intensity FWHM time-bandwidth product of a transform-limited Gaussian.
GAUSSIAN_TBP = 2.0 * LN2 / math.pi
_SHAPES = ("square", "gaussian")


@dataclass(frozen=True)
class ControlPulseSpec:
    """Control pulse on the excited-to-storage transition.

    ``rabi_freq`` is an ordinary frequency in Hz (angular Rabi frequency is
    ``2*pi*rabi_freq``). For ``shape="gaussian"`` it is the peak Rabi
    frequency and ``duration`` the FWHM of the field envelope; such a pulse is
    treated as the square pulse of equal area and equal peak Rabi frequency.
    """

    rabi_freq: float
    duration: float
    shape: str = "square"

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise ValueError(f"shape must be one of {_SHAPES}, got {self.shape!r}")
        if not (math.isfinite(self.rabi_freq) and math.isfinite(self.duration)):
            raise ValueError("rabi_freq and duration must be finite")
        if self.rabi_freq < 0 or self.duration < 0:
            raise ValueError("rabi_freq and duration must be >= 0")

    @property
    def effective_duration(self) -> float:
        if self.shape == "gaussian":
            return self.duration * math.sqrt(math.pi / (4.0 * LN2))
        return self.duration

    @property
    def area(self) -> float:
        """Pulse area in radians."""
        return 2.0 * math.pi * self.rabi_freq * self.effective_duration

    def to_dict(self) -> dict[str, Any]:
        return {"rabi_freq": self.rabi_freq, "duration": self.duration, "shape": self.shape}

    @classmethod
    def from_dict(cls, data):
        return _from_mapping(cls, data, "control")


@dataclass(frozen=True)
class SpinParams:
    gamma_is: float
    t2_spin: float | None = None

    def __post_init__(self):
        if not self.gamma_is > 0:
            raise ValueError("gamma_is must be > 0")

    def to_dict(self):
        return {"gamma_is": self.gamma_is, "t2_spin": self.t2_spin}

    @classmethod
    def from_dict(cls, data):
        return _from_mapping(cls, data, "spin")


@dataclass(frozen=True)
class StorageScenario:
    """Full spin-wave storage run.

    ``transfer_efficiency`` overrides the modeled per-pulse transfer when a
    measured value is available.
    """

    comb: CombSpec
    input_fwhm: float
    control: ControlPulseSpec
    ts: float
    spin: SpinParams
    mode_overlap: float = 1.0
    transfer_efficiency: float | None = None

    def __post_init__(self):
        if not self.input_fwhm > 0:
            raise ValueError("input_fwhm must be > 0")
        if self.ts < 0:
            raise ValueError("ts must be >= 0")
        if not 0 < self.mode_overlap <= 1:
            raise ValueError("mode_overlap must lie in (0, 1]")
        if self.transfer_efficiency is not None and not 0 <= self.transfer_efficiency <= 1:
            raise ValueError("transfer_efficiency must lie in [0, 1]")

    @property
    def total_memory_time(self) -> float:
        return self.ts + self.comb.storage_time


def pi_pulse_duration(rabi_freq: float) -> float:
    """Square-pulse length giving complete resonant transfer."""
    if not rabi_freq > 0:
        raise ValueError("rabi_freq must be > 0")
    return 1.0 / (2.0 * rabi_freq)


def rabi_transfer_probability(control: ControlPulseSpec, detuning):
    """Population transferred by a square pulse at ``detuning`` (Hz)."""
    omega = 2.0 * math.pi * control.rabi_freq
    det = 2.0 * np.pi * np.asarray(detuning, dtype=float)
    gen2 = omega**2 + det**2
    safe = np.where(gen2 > 0, gen2, 1.0)
    p = omega**2 / safe * np.sin(np.sqrt(safe) * control.effective_duration / 2.0) ** 2
    p = np.where(gen2 > 0, p, 0.0)
    return float(p) if p.ndim == 0 else p


def input_spectral_fwhm(input_fwhm: float) -> float:
    """Power-spectrum FWHM (Hz) of a transform-limited Gaussian of intensity FWHM ``input_fwhm``."""
    return GAUSSIAN_TBP / input_fwhm


def effective_transfer_efficiency(input_fwhm: float, control: ControlPulseSpec) -> float:
    """Transfer probability averaged over the input pulse's power spectrum."""
    if not input_fwhm > 0:
        raise ValueError("input_fwhm must be > 0")
    width = input_spectral_fwhm(input_fwhm)
    a = 4.0 * LN2 / width**2

    def weight(x):
        return math.exp(-a * x * x)

    lim = 5.0 * width
    # Rabi oscillation in detuning has period ~1/duration; tell quad where the wiggles are.
    limit = max(200, int(4 * lim * control.effective_duration) + 50)
    num, _ = integrate.quad(
        lambda x: weight(x) * rabi_transfer_probability(control, x), -lim, lim, limit=limit
    )
    den, _ = integrate.quad(weight, -lim, lim)
    return min(1.0, max(0.0, num / den))


def spin_decay_factor(ts: float, spin: SpinParams) -> float:
    """Echo-height reduction after spin storage ``ts`` from Gaussian spin broadening."""
    if ts < 0:
        raise ValueError("ts must be >= 0")
    return math.exp(-((ts * spin.gamma_is * math.pi) ** 2) / (2.0 * LN2))


def three_level_efficiency(
    scenario: StorageScenario, eta_two_level: float, transfer_efficiency: float | None = None
) -> float:
    """Spin-wave echo efficiency built on the two-level echo.

    The transfer efficiency comes from, in order: the argument, the scenario's
    measured value, the spectral average of the control pulse.
    """
    if not 0 <= eta_two_level <= 1:
        raise ValueError("eta_two_level must lie in [0, 1]")
    eta_t = transfer_efficiency
    if eta_t is None:
        eta_t = scenario.transfer_efficiency
    if eta_t is None:
        eta_t = effective_transfer_efficiency(scenario.input_fwhm, scenario.control)
    return eta_two_level * eta_t**2 * spin_decay_factor(scenario.ts, scenario.spin) * scenario.mode_overlap


def extract_transfer_efficiency(eta3_at_ts0: float, eta2: float) -> float:
    """Per-pulse transfer efficiency from three- and two-level efficiencies.

    Both control pulses are taken as identical, so ``eta3 = eta2 * eta_T**2``.
    """
    if not eta2 > 0 or not eta3_at_ts0 > 0:
        raise ValueError("efficiencies must be > 0")
    if eta3_at_ts0 > eta2:
        raise UnphysicalEfficiencyError(
            f"three-level efficiency {eta3_at_ts0:g} exceeds two-level efficiency {eta2:g}"
        )
    return math.sqrt(eta3_at_ts0 / eta2)
