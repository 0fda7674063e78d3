"""Pulse-sequence checks, scenario configuration, simulation runs and sweeps.

A scenario configuration is one JSON object::

    {
      "comb":     {"d": 0.54, "d0": 0.04, "delta": 250000.0, "gamma_fwhm": 165000.0,
                   "n_teeth": 9, "center_freq": 0.0},
      "medium":   {"alpha": 1.2, "length": 1.0, "inhom_broadening": 7e8, "metadata": {}},
      "control":  {"rabi_freq": 300000.0, "duration": 1.55e-6, "shape": "square"},
      "spin":     {"gamma_is": 69000.0, "t2_spin": 0.0155},
      "sequence": {"input_fwhm": 1.3e-6, "input_time": 6e-6,
                   "control1_time": 8e-6, "control2_time": 13e-6},
      "grid":     {"n_samples": 65536, "time_span": 5e-5},
      "storage":  {"mode_overlap": 0.4, "transfer_efficiency": 0.4}
    }

``medium``, ``grid`` and ``storage`` are optional. Times are in seconds,
frequencies in Hz. Control times are pulse centers.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from . import __version__
from .comb import CombSpec, MediumSpec, afc_efficiency, optimal_finesse
from .errors import ConfigError, ValidationError
from .propagation import (
    SimGrid,
    TimeTrace,
    default_echo_window,
    echo_efficiency,
    gaussian_pulse,
    propagate,
)
from .spinwave import (
    ControlPulseSpec,
    SpinParams,
    StorageScenario,
    effective_transfer_efficiency,
    input_spectral_fwhm,
    spin_decay_factor,
    three_level_efficiency,
)

SECTIONS = ("comb", "medium", "control", "spin", "sequence", "grid", "storage")
REQUIRED = ("comb", "control", "spin", "sequence")
SEQUENCE_KEYS = ("input_fwhm", "input_time", "control1_time", "control2_time")
STORAGE_KEYS = ("mode_overlap", "transfer_efficiency")

_SEVERITY_RANK = {"error": 0, "warning": 1}


@dataclass(frozen=True)
class SequencePlan:
    input_fwhm: float
    input_time: float
    control1_time: float
    control2_time: float
    control: ControlPulseSpec
    delta: float

    @property
    def ts(self) -> float:
        return self.control2_time - self.control1_time

    @property
    def echo_time(self) -> float:
        return self.input_time + 1.0 / self.delta + self.ts


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    field: str
    message: str

    def sort_key(self):
        return (_SEVERITY_RANK[self.severity], self.field, self.message)

    def __str__(self):
        return f"{self.severity}: {self.field}: {self.message}"


def validate_sequence(plan: SequencePlan) -> list[Diagnostic]:
    """Timing and bandwidth diagnostics for a spin-wave storage sequence.

    The input pulse and one control pulse have to fit inside the two-level
    echo time ``1/delta``. Counting the input as ``2 * input_fwhm`` wide, an
    overrun is a warning as long as ``input_fwhm + duration`` still fits, and
    an error beyond that. Errors sort before warnings, then by field name.
    """
    out: list[Diagnostic] = []

    def add(sev, fld, msg):
        out.append(Diagnostic(sev, fld, msg))

    ctrl = plan.control
    values = {
        "input_fwhm": plan.input_fwhm,
        "input_time": plan.input_time,
        "control1_time": plan.control1_time,
        "control2_time": plan.control2_time,
        "delta": plan.delta,
    }
    bad = [k for k, v in values.items() if not math.isfinite(v)]
    for k in bad:
        add("error", k, "not a finite number")
    if bad:
        return sorted(out, key=Diagnostic.sort_key)
    if plan.delta <= 0:
        add("error", "delta", "comb spacing must be > 0")
    if plan.input_fwhm <= 0:
        add("error", "input_fwhm", "input pulse width must be > 0")
    if ctrl.duration <= 0 or ctrl.rabi_freq <= 0:
        add("error", "control.duration", "zero-area control pulse")
    if plan.control1_time <= plan.input_time:
        add("error", "control1_time", "first control pulse must follow the input pulse")
    if plan.control2_time < plan.control1_time:
        add("error", "control2_time", "second control pulse precedes the first")
    if any(d.severity == "error" for d in out):
        return sorted(out, key=Diagnostic.sort_key)

    period = 1.0 / plan.delta
    tight = plan.input_fwhm + ctrl.duration
    loose = 2.0 * plan.input_fwhm + ctrl.duration
    if tight > period:
        add("error", "input_fwhm",
            f"input FWHM + control ({tight:.4g} s) exceeds the echo time 1/delta ({period:.4g} s)")
    elif loose > period:
        add("warning", "input_fwhm",
            f"2 x input FWHM + control ({loose:.4g} s) exceeds 1/delta ({period:.4g} s)")

    start = plan.control1_time - ctrl.duration / 2.0
    stop = plan.control1_time + ctrl.duration / 2.0
    if start < plan.input_time or stop > plan.input_time + period:
        add("error", "control1_time",
            "first control pulse must lie between the input pulse and its two-level echo")
    elif start < plan.input_time + plan.input_fwhm / 2.0 or stop > plan.input_time + period - plan.input_fwhm / 2.0:
        add("warning", "control1_time", "first control pulse overlaps the input or echo half-width")

    bw = input_spectral_fwhm(plan.input_fwhm)
    if bw > 2.0 * ctrl.rabi_freq:
        add("warning", "control.rabi_freq",
            f"input spectral FWHM {bw / 1e6:.3g} MHz exceeds the control bandwidth "
            f"2 x Rabi = {2 * ctrl.rabi_freq / 1e6:.3g} MHz")
    return sorted(out, key=Diagnostic.sort_key)


@dataclass
class ScenarioConfig:
    raw: dict[str, Any]
    comb: CombSpec
    control: ControlPulseSpec
    spin: SpinParams
    plan: SequencePlan
    grid: SimGrid
    medium: MediumSpec | None
    mode_overlap: float
    transfer_efficiency: float | None

    @property
    def scenario(self) -> StorageScenario:
        return StorageScenario(
            comb=self.comb,
            input_fwhm=self.plan.input_fwhm,
            control=self.control,
            ts=max(self.plan.ts, 0.0),
            spin=self.spin,
            mode_overlap=self.mode_overlap,
            transfer_efficiency=self.transfer_efficiency,
        )

    def digest(self) -> str:
        return config_digest(self.raw)


def config_digest(raw: dict[str, Any]) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _section(raw, name, allowed=None):
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected an object")
    if allowed is not None:
        unknown = sorted(set(sec) - set(allowed))
        if unknown:
            raise ConfigError(f"{name}: unknown key(s) {', '.join(unknown)}")
    return sec


def parse_config(raw: dict[str, Any]) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from a decoded JSON document."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(unknown)}")
    missing = [s for s in REQUIRED if s not in raw]
    if missing:
        raise ConfigError(f"missing section(s) {', '.join(missing)}")
    raw = copy.deepcopy(raw)

    def build(name, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: {exc}") from None

    comb = build("comb", lambda: CombSpec.from_dict(_section(raw, "comb")))
    control = build("control", lambda: ControlPulseSpec.from_dict(_section(raw, "control")))
    spin = build("spin", lambda: SpinParams.from_dict(_section(raw, "spin")))
    medium = None
    if "medium" in raw:
        medium = build("medium", lambda: MediumSpec.from_dict(_section(raw, "medium")))
    grid = build("grid", lambda: SimGrid(**_section(raw, "grid", ("n_samples", "time_span"))))

    seq = _section(raw, "sequence", SEQUENCE_KEYS)
    missing = [k for k in SEQUENCE_KEYS if k not in seq]
    if missing:
        raise ConfigError(f"sequence: missing key(s) {', '.join(missing)}")
    for k in SEQUENCE_KEYS:
        if not isinstance(seq[k], (int, float)) or isinstance(seq[k], bool):
            raise ConfigError(f"sequence.{k}: expected a number")
    plan = SequencePlan(control=control, delta=comb.delta, **{k: float(seq[k]) for k in SEQUENCE_KEYS})

    storage = _section(raw, "storage", STORAGE_KEYS)
    overlap = float(storage.get("mode_overlap", 1.0))
    if not 0 < overlap <= 1:
        raise ConfigError("storage.mode_overlap: must lie in (0, 1]")
    eta_t = storage.get("transfer_efficiency")
    if eta_t is not None:
        eta_t = float(eta_t)
        if not 0 <= eta_t <= 1:
            raise ConfigError("storage.transfer_efficiency: must lie in [0, 1]")
    return ScenarioConfig(raw, comb, control, spin, plan, grid, medium, overlap, eta_t)


def load_config(path) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(raw)


@dataclass
class ScenarioReport:
    two_level_efficiency: float
    two_level_analytic: float
    three_level_efficiency: float
    three_level_analytic: float
    transfer_efficiency: float
    spin_decay: float
    finesse: float
    echo_time: float
    total_memory_time: float
    warnings: list[str]
    provenance: dict[str, Any]
    timestamp: str = ""
    input_trace: TimeTrace | None = field(default=None, repr=False)
    output_trace: TimeTrace | None = field(default=None, repr=False)

    def to_dict(self, include_timestamp: bool = True) -> dict[str, Any]:
        d = {
            "two_level_efficiency": self.two_level_efficiency,
            "two_level_analytic": self.two_level_analytic,
            "three_level_efficiency": self.three_level_efficiency,
            "three_level_analytic": self.three_level_analytic,
            "transfer_efficiency": self.transfer_efficiency,
            "spin_decay": self.spin_decay,
            "finesse": self.finesse,
            "echo_time": self.echo_time,
            "total_memory_time": self.total_memory_time,
            "warnings": list(self.warnings),
            "provenance": dict(self.provenance),
        }
        if include_timestamp:
            d["timestamp"] = self.timestamp
        return d

    def to_json(self, include_timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(include_timestamp), indent=2, sort_keys=True) + "\n"


REPORT_COLUMNS = (
    "two_level_efficiency",
    "two_level_analytic",
    "three_level_efficiency",
    "three_level_analytic",
    "transfer_efficiency",
    "spin_decay",
    "finesse",
    "echo_time",
    "total_memory_time",
)


def run_scenario(config: ScenarioConfig | dict, seed: int | None = None) -> ScenarioReport:
    """Simulate the two-level echo and compose the spin-wave efficiency.

    Raises :class:`~afcmem.errors.ValidationError` when the pulse sequence has
    errors; warnings are carried into the report.
    """
    if isinstance(config, dict):
        config = parse_config(config)
    diags = validate_sequence(config.plan)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise ValidationError(errors)
    notes = [str(d) for d in diags]
    comb, plan = config.comb, config.plan
    if config.medium is not None and comb.d + comb.d0 > config.medium.optical_depth:
        notes.append(
            f"warning: comb: peak depth {comb.d + comb.d0:.3g} exceeds the medium depth "
            f"{config.medium.optical_depth:.3g}"
        )

    reference = gaussian_pulse(config.grid, plan.input_time, plan.input_fwhm)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        output = propagate(reference, comb)
    notes.extend(f"warning: propagation: {w.message}" for w in caught)

    two_level_echo = plan.input_time + comb.storage_time
    eta2 = echo_efficiency(output, reference, two_level_echo, default_echo_window(comb))
    eta2_analytic = afc_efficiency(comb.d, comb.finesse, comb.d0)

    scenario = config.scenario
    eta_t = config.transfer_efficiency
    if eta_t is None:
        eta_t = effective_transfer_efficiency(plan.input_fwhm, config.control)
    eta3 = three_level_efficiency(scenario, eta2, eta_t)
    eta3_analytic = three_level_efficiency(scenario, eta2_analytic, eta_t)

    return ScenarioReport(
        two_level_efficiency=eta2,
        two_level_analytic=eta2_analytic,
        three_level_efficiency=eta3,
        three_level_analytic=eta3_analytic,
        transfer_efficiency=eta_t,
        spin_decay=spin_decay_factor(scenario.ts, config.spin),
        finesse=comb.finesse,
        echo_time=plan.echo_time,
        total_memory_time=scenario.total_memory_time,
        warnings=notes,
        provenance={
            "config_digest": config.digest(),
            "package_version": __version__,
            "seed": seed,
        },
        timestamp=datetime.now(timezone.utc).isoformat(),
        input_trace=reference,
        output_trace=output,
    )


def set_path(raw: dict[str, Any], path: str, value: float) -> dict[str, Any]:
    """Copy of ``raw`` with the numeric field at dotted ``path`` replaced.

    ``sequence.ts`` is accepted as a shorthand that moves the second control
    pulse to ``control1_time + value``.
    """
    out = copy.deepcopy(raw)
    parts = path.split(".")
    if len(parts) != 2:
        raise ConfigError(f"unknown parameter path {path!r}")
    section, key = parts
    if path == "sequence.ts":
        seq = out.get("sequence", {})
        if "control1_time" not in seq:
            raise ConfigError("sequence.ts needs sequence.control1_time")
        seq["control2_time"] = seq["control1_time"] + float(value)
        return out
    sec = out.get(section)
    if not isinstance(sec, dict) or key not in sec:
        raise ConfigError(f"unknown parameter path {path!r}")
    if not isinstance(sec[key], (int, float)) or isinstance(sec[key], bool):
        raise ConfigError(f"parameter {path!r} is not numeric")
    if isinstance(sec[key], int) and float(value).is_integer():
        sec[key] = int(value)
    else:
        sec[key] = float(value)
    return out


def _with_optimal_finesse(raw):
    comb = raw["comb"]
    comb["gamma_fwhm"] = comb["delta"] / optimal_finesse(comb["d"])
    return raw


def sweep(
    config: ScenarioConfig | dict,
    path: str,
    values,
    optimal_finesse: bool = False,
    max_workers: int | None = None,
) -> list[dict[str, Any]]:
    """One report row per value, in the order of ``values``.

    With ``optimal_finesse`` every point sets the tooth width to the width
    maximizing the closed-form efficiency at that point's peak depth.
    """
    raw = config.raw if isinstance(config, ScenarioConfig) else config
    values = [float(v) for v in values]
    raws = []
    for v in values:
        r = set_path(raw, path, v)
        if optimal_finesse:
            r = _with_optimal_finesse(r)
        raws.append(r)
    configs = [parse_config(r) for r in raws]

    def one(cfg):
        return run_scenario(cfg)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        reports = list(pool.map(one, configs))
    rows = []
    for v, rep in zip(values, reports):
        row = {"parameter": path, "value": v}
        row.update({k: getattr(rep, k) for k in REPORT_COLUMNS})
        row["config_digest"] = rep.provenance["config_digest"]
        rows.append(row)
    return rows
