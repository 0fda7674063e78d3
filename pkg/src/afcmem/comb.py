"""Gaussian atomic frequency comb and the closed-form echo efficiency."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from .errors import ConfigError, FinesseError

FWHM_TO_SIGMA = 1.0 / math.sqrt(8.0 * math.log(2.0))

# Gaussian-dephasing constant of the closed-form efficiency.
_DEPHASING = 7.0


def _from_mapping(cls, data: dict[str, Any], where: str):
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class CombSpec:
    """Comb of ``n_teeth`` Gaussian absorption peaks on a flat background.

    Frequencies are detunings in Hz relative to the comb center.
    """

    d: float
    d0: float
    delta: float
    gamma_fwhm: float
    n_teeth: int = 9
    center_freq: float = 0.0

    def __post_init__(self):
        if not (self.d >= 0 and self.d0 >= 0):
            raise ValueError("optical depths d and d0 must be >= 0")
        if not (self.delta > 0 and self.gamma_fwhm > 0):
            raise ValueError("delta and gamma_fwhm must be > 0")
        if int(self.n_teeth) != self.n_teeth or self.n_teeth < 1 or self.n_teeth % 2 == 0:
            raise ValueError(f"n_teeth must be an odd integer >= 1, got {self.n_teeth}")
        if not math.isfinite(self.center_freq):
            raise ValueError("center_freq must be finite")
        if self.finesse <= 1.0:
            raise FinesseError(
                f"finesse {self.finesse:.4g} <= 1: teeth of width {self.gamma_fwhm:g} Hz "
                f"overlap at spacing {self.delta:g} Hz"
            )

    @property
    def finesse(self) -> float:
        return self.delta / self.gamma_fwhm

    @property
    def sigma(self) -> float:
        """Gaussian standard deviation of one tooth (Hz)."""
        return self.gamma_fwhm * FWHM_TO_SIGMA

    @property
    def bandwidth(self) -> float:
        return self.n_teeth * self.delta

    @property
    def storage_time(self) -> float:
        """Two-level echo delay 1/delta (s)."""
        return 1.0 / self.delta

    def tooth_positions(self) -> np.ndarray:
        half = (self.n_teeth - 1) // 2
        return self.center_freq + self.delta * np.arange(-half, half + 1)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CombSpec":
        return _from_mapping(cls, data, "comb")


@dataclass(frozen=True)
class MediumSpec:
    """Bulk absorber the comb is carved from."""

    alpha: float
    length: float
    inhom_broadening: float = 0.0
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.length <= 0:
            raise ValueError("length must be > 0")

    @property
    def optical_depth(self) -> float:
        return self.alpha * self.length

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "length": self.length,
            "inhom_broadening": self.inhom_broadening,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MediumSpec":
        return _from_mapping(cls, data, "medium")


def comb_profile(comb: CombSpec, nu):
    """Optical depth of the comb at detuning(s) ``nu`` (Hz)."""
    nu = np.asarray(nu, dtype=float)
    centers = comb.tooth_positions()
    two_s2 = 2.0 * comb.sigma**2
    flat = nu.reshape(-1, 1)
    peaks = np.exp(-((flat - centers) ** 2) / two_s2).sum(axis=1)
    out = comb.d * peaks.reshape(nu.shape) + comb.d0
    return float(out) if out.ndim == 0 else out


def afc_efficiency(d: float, finesse: float, d0: float = 0.0) -> float:
    """Forward two-level echo efficiency of a Gaussian comb.

    ``(d/F)**2 * exp(-7/F**2) * exp(-d/F) * exp(-d0)``
    """
    if finesse <= 0:
        raise ValueError(f"finesse must be > 0, got {finesse}")
    if d < 0 or d0 < 0:
        raise ValueError("optical depths must be >= 0")
    r = d / finesse
    return r * r * math.exp(-_DEPHASING / finesse**2) * math.exp(-r) * math.exp(-d0)


def optimal_finesse(d: float) -> float:
    """Finesse maximizing :func:`afc_efficiency` at peak depth ``d``.

    Setting the F-derivative of the log efficiency to zero gives
    ``2 F**2 - d F - 14 = 0``; the background ``d0`` only scales the efficiency.
    """
    if d < 0:
        raise ValueError("d must be >= 0")
    return (d + math.sqrt(d * d + 8.0 * 2.0 * _DEPHASING)) / 4.0


def multimode_capacity(comb: CombSpec) -> int:
    """Number of temporal modes the comb can hold: one per tooth."""
    return int(comb.n_teeth)


def capacity_for_bandwidth(bandwidth: float, delta: float) -> int:
    """Tooth count that fits in ``bandwidth`` at spacing ``delta``."""
    if bandwidth < 0 or delta <= 0:
        raise ValueError("bandwidth must be >= 0 and delta > 0")
    return int(math.floor(bandwidth / delta + 1e-9))
