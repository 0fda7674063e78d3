"""Parameter estimation from measured or simulated traces.

Three fitters share :class:`FitResult`:

* :func:`fit_gaussian_peak` for single echoes in an intensity trace,
* :func:`fit_comb` for comb absorption scans,
* :func:`fit_spin_linewidth` for echo-height decay versus spin storage time.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .comb import FWHM_TO_SIGMA
from .errors import DegenerateTraceError, NonDecayingError
from .leastsq import levenberg_marquardt

LN2 = math.log(2.0)
_FOUR_LN2 = 4.0 * LN2
MAX_ITER = 200


@dataclass
class FitResult:
    params: dict[str, float]
    sigmas: dict[str, float]
    residual_norm: float
    converged: bool
    n_iter: int
    derived: dict[str, float] = field(default_factory=dict)

    def to_dict(self):
        return {
            "params": dict(self.params),
            "sigmas": dict(self.sigmas),
            "derived": dict(self.derived),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True, eq=False)
class DecaySeries:
    """Echo heights versus spin storage time."""

    ts: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.ts, dtype=float)
        h = np.asarray(self.heights, dtype=float)
        if ts.shape != h.shape or ts.ndim != 1:
            raise ValueError("ts and heights must be 1-D arrays of equal length")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("ts must be strictly increasing")
        if np.any(h < 0):
            raise ValueError("echo heights must be >= 0")
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "heights", h)

    @classmethod
    def from_points(cls, points):
        ts, h = zip(*points)
        return cls(np.array(ts), np.array(h))


def _result(names, lm, derived=None) -> FitResult:
    cov = lm.covariance()
    sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    params = {k: float(v) for k, v in zip(names, lm.x)}
    sigmas = {k: float(v) for k, v in zip(names, sig)}
    rms = float(np.sqrt(np.mean(lm.residual**2)))
    return FitResult(params, sigmas, rms, bool(lm.converged), int(lm.n_iter), derived or {})


# -- single Gaussian peak ---------------------------------------------------


def gaussian_model(x, amplitude, center, fwhm, offset):
    return amplitude * np.exp(-_FOUR_LN2 * (x - center) ** 2 / fwhm**2) + offset


def _gaussian_jac(x, p):
    amp, c, w, _ = p
    e = np.exp(-_FOUR_LN2 * (x - c) ** 2 / w**2)
    return np.column_stack(
        [
            e,
            amp * e * 2 * _FOUR_LN2 * (x - c) / w**2,
            amp * e * 2 * _FOUR_LN2 * (x - c) ** 2 / w**3,
            np.ones_like(x),
        ]
    )


def _moments(x, y):
    """Moment-based starting point for a single peak on a flat offset."""
    k = max(1, x.size // 10)
    offset = float(np.mean(np.sort(y)[:k]))
    w = np.clip(y - offset, 0.0, None)
    amp = float(w.max())
    total = float(w.sum())
    center = float((w * x).sum() / total)
    var = float((w * (x - center) ** 2).sum() / total)
    step = float(np.median(np.diff(x)))
    fwhm = max(math.sqrt(max(var, 0.0)) / FWHM_TO_SIGMA, 2.0 * step)
    return np.array([amp, center, fwhm, offset])


def fit_gaussian_peak(x, y=None) -> FitResult:
    """Fit ``amplitude * exp(-4 ln2 (x-center)^2 / fwhm^2) + offset``.

    ``x`` may be a :class:`~afcmem.propagation.TimeTrace`, in which case its
    intensity is fitted against time.
    """
    if y is None:
        x, y = x.times, x.intensity
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 8 or x.shape != y.shape:
        raise DegenerateTraceError("need at least 8 samples of matching x and y")
    if np.ptp(y) <= 1e-12 * max(np.max(np.abs(y)), 1e-300):
        raise DegenerateTraceError("flat trace: no peak to fit")

    p0 = _moments(x, y)
    step = float(np.min(np.abs(np.diff(x))))
    lower = np.array([0.0, x.min(), step / 10.0, -np.inf])
    upper = np.array([np.inf, x.max(), 10.0 * np.ptp(x), np.inf])

    def resid(p):
        return gaussian_model(x, *p) - y

    lm = levenberg_marquardt(
        resid, p0, jac=lambda p: _gaussian_jac(x, p), lower=lower, upper=upper,
        scale=np.linalg.norm(y), max_iter=MAX_ITER,
    )
    return _result(["amplitude", "center", "fwhm", "offset"], lm)


# -- comb absorption scan ---------------------------------------------------


def comb_model(nu, d, d0, gamma_fwhm, delta, center, n_teeth, instrument_fwhm=0.0):
    """Gaussian comb, optionally convolved with a Gaussian instrument response.

    Convolution keeps each tooth Gaussian: widths add in quadrature and the
    tooth area is preserved.
    """
    g_obs = math.hypot(gamma_fwhm, instrument_fwhm) if instrument_fwhm else gamma_fwhm
    d_obs = d * gamma_fwhm / g_obs
    s = g_obs * FWHM_TO_SIGMA
    half = (n_teeth - 1) // 2
    j = np.arange(-half, half + 1)
    centers = center + delta * j
    return d_obs * np.exp(-((nu[:, None] - centers[None, :]) ** 2) / (2 * s * s)).sum(axis=1) + d0


def _periodogram(nu, excess, spacing):
    return np.sum(excess * np.exp(-2j * np.pi * nu / spacing))


def _comb_start(nu, od, delta_hint):
    d0 = float(np.percentile(od, 5))
    excess = od - d0
    # spacing: strongest first harmonic near the hint (searched a bit beyond +/-20 %)
    trial = delta_hint * np.linspace(0.75, 1.3, 1101)
    power = np.abs(np.exp(-2j * np.pi * nu[None, :] / trial[:, None]) @ excess)
    delta = float(trial[int(np.argmax(power))])
    c1 = _periodogram(nu, excess, delta)
    c_mod = np.angle(c1) / (2 * np.pi) * delta
    centroid = float(np.sum(excess * nu) / np.sum(excess)) if excess.sum() > 0 else nu.mean()
    center = c_mod + delta * round((centroid - c_mod) / delta)
    # harmonic ratio of a Gaussian train: |c2/c1| = exp(-3 (2 pi sigma / delta)^2 / 2)
    a1 = abs(c1)
    a2 = abs(_periodogram(nu, excess, delta / 2.0))
    gamma = delta / 3.0
    if a1 > 0 and 0 < a2 < a1:
        sig = delta / (2 * np.pi) * math.sqrt(2.0 * math.log(a1 / a2) / 3.0)
        gamma = float(np.clip(sig / FWHM_TO_SIGMA, delta / 50.0, delta / 1.2))
    d = max(float(od.max()) - d0, 1e-6)
    return np.array([d, d0, gamma, delta, center])


def fit_comb(
    nu, od, delta_hint: float, n_teeth: int | None = None, instrument_fwhm: float = 0.0
) -> FitResult:
    """Least-squares fit of a Gaussian comb to an optical-depth scan.

    Parameters
    ----------
    nu, od:
        Detuning (Hz) and optical depth samples.
    delta_hint:
        Tooth spacing guess, within about 20 % of the truth.
    n_teeth:
        Teeth in the model. By default, the teeth whose centers fall inside the
        scan, counted symmetrically about the central tooth.
    instrument_fwhm:
        FWHM (Hz) of a Gaussian instrument response to deconvolve. Zero fits the
        observed (broadened) teeth directly.
    """
    nu = np.asarray(nu, dtype=float)
    od = np.asarray(od, dtype=float)
    if nu.shape != od.shape or nu.size < 8:
        raise DegenerateTraceError("need at least 8 samples of matching nu and od")
    if not delta_hint > 0:
        raise ValueError("delta_hint must be > 0")
    if np.ptp(nu) < 2.0 * delta_hint:
        raise DegenerateTraceError("scan spans fewer than 3 teeth")
    if np.ptp(od) <= 1e-9 * max(np.max(np.abs(od)), 1e-300):
        raise DegenerateTraceError("flat absorption trace: no comb to fit")

    p0 = _comb_start(nu, od, delta_hint)
    if n_teeth is None:
        c, spacing = p0[4], p0[3]
        half = int(min(c - nu.min(), nu.max() - c) / spacing + 1e-9)
        n_teeth = 2 * half + 1
    if n_teeth < 3:
        raise DegenerateTraceError("fewer than 3 resolvable teeth")

    step = float(np.median(np.diff(np.sort(nu))))
    lower = np.array([0.0, 0.0, step / 10.0, 0.5 * delta_hint, nu.min()])
    upper = np.array([np.inf, np.inf, 2.0 * delta_hint, 1.5 * delta_hint, nu.max()])

    def resid(p):
        d, d0, g, delta, center = p
        return comb_model(nu, d, d0, g, delta, center, n_teeth, instrument_fwhm) - od

    lm = levenberg_marquardt(resid, p0, lower=lower, upper=upper, scale=np.linalg.norm(od),
                             max_iter=MAX_ITER)
    res = _result(["d", "d0", "gamma_fwhm", "delta", "center"], lm)
    p, s = res.params, res.sigmas
    fin = p["delta"] / p["gamma_fwhm"]
    fin_sigma = fin * math.hypot(s["delta"] / p["delta"], s["gamma_fwhm"] / p["gamma_fwhm"])
    res.derived = {"finesse": fin, "finesse_sigma": fin_sigma, "n_teeth": float(n_teeth)}
    return res


# -- spin linewidth from echo decay -----------------------------------------

_DECAY_COEF = math.pi**2 / (2.0 * LN2)


def decay_model(ts, amplitude, gamma_is):
    return amplitude * np.exp(-_DECAY_COEF * (ts * gamma_is) ** 2)


def fit_spin_linewidth(series: DecaySeries, method: str = "log", weights=None) -> FitResult:
    """Fit ``A exp(-ts^2 gamma_is^2 pi^2 / (2 ln 2))`` to an echo-height series.

    ``method="log"`` regresses ``log(height)`` on ``ts**2`` in closed form
    (optionally weighted); ``method="nonlinear"`` refines that by damped least
    squares on the heights themselves.
    """
    ts, h = series.ts, series.heights
    keep = h > 0
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} zero-height point(s)", stacklevel=2)
    ts, h = ts[keep], h[keep]
    w = np.ones_like(ts) if weights is None else np.asarray(weights, dtype=float)[keep]
    if ts.size < 3:
        raise NonDecayingError("need at least 3 non-zero points")
    if ts.size < 4:
        warnings.warn("fewer than 4 points: linewidth poorly constrained", stacklevel=2)

    x = ts**2
    y = np.log(h)
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    rate = -slope
    if not rate * np.ptp(x) > 1e-9:
        raise NonDecayingError("non-decaying series: heights do not fall with ts")
    if rate * np.ptp(x) < LN2:
        warnings.warn("series decays by less than a factor 2; linewidth poorly constrained",
                      stacklevel=2)

    gamma = math.sqrt(rate / _DECAY_COEF)
    amp = math.exp(intercept)
    resid_log = y - (intercept + slope * x)
    dof = max(ts.size - 2, 1)
    s2 = (w * resid_log**2).sum() / dof
    var_slope = s2 / sxx
    var_icpt = s2 * (1.0 / sw + xm**2 / sxx)
    sig_gamma = gamma / (2.0 * rate) * math.sqrt(var_slope)
    sig_amp = amp * math.sqrt(var_icpt)

    if method == "log":
        rms = float(np.sqrt(np.mean((decay_model(ts, amp, gamma) - h) ** 2)))
        return FitResult(
            {"A": amp, "gamma_is": gamma},
            {"A": sig_amp, "gamma_is": sig_gamma},
            rms, True, 1,
        )
    if method != "nonlinear":
        raise ValueError(f"unknown method {method!r}")

    def resid(p):
        return decay_model(ts, p[0], p[1]) - h

    def jac(p):
        a, g = p
        e = np.exp(-_DECAY_COEF * (ts * g) ** 2)
        return np.column_stack([e, -a * e * 2 * _DECAY_COEF * ts**2 * g])

    lm = levenberg_marquardt(resid, [amp, gamma], jac=jac, lower=[0.0, 0.0],
                             scale=np.linalg.norm(h), max_iter=MAX_ITER)
    return _result(["A", "gamma_is"], lm)


# -- file formats -----------------------------------------------------------


def read_xy_csv(path):
    """Two-column CSV with a header row; returns (x, y) arrays."""
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    try:
        float(rows[0][0])
        body = rows
    except ValueError:
        body = rows[1:]
    data = np.array([[float(r[0]), float(r[1])] for r in body])
    return data[:, 0], data[:, 1]


def write_xy_csv(path, x, y, header=("x", "y")):
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for a, b in zip(x, y):
            w.writerow([repr(float(a)), repr(float(b))])


def read_decay_csv(path) -> DecaySeries:
    ts, h = read_xy_csv(path)
    return DecaySeries(ts, h)
