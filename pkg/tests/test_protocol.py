import copy
import json
from pathlib import Path

import numpy as np
import pytest

from afcmem.comb import afc_efficiency, optimal_finesse
from afcmem.errors import ConfigError, ValidationError
from afcmem.protocol import (
    REPORT_COLUMNS,
    Diagnostic,
    SequencePlan,
    config_digest,
    load_config,
    parse_config,
    run_scenario,
    set_path,
    sweep,
    validate_sequence,
)
from afcmem.spinwave import ControlPulseSpec, SpinParams, spin_decay_factor

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def op_raw():
    return json.loads((CONFIGS / "operating_point.json").read_text())


@pytest.fixture
def short_raw():
    return json.loads((CONFIGS / "two_level_2us.json").read_text())


def plan(input_fwhm, duration, period, rabi=300e3, t_in=6e-6, c1=None, c2=None):
    control = ControlPulseSpec(rabi, duration)
    c1 = t_in + period / 2 if c1 is None else c1
    return SequencePlan(input_fwhm, t_in, c1, c1 if c2 is None else c2, control, 1.0 / period)


def severities(diags):
    return {(d.severity, d.field) for d in diags}


# -- sequence validation -----------------------------------------------------


def test_operating_point_warns_only():
    diags = validate_sequence(plan(1.3e-6, 1.55e-6, 4e-6, c1=8e-6))
    assert diags
    assert all(d.severity == "warning" for d in diags)
    assert ("warning", "input_fwhm") in severities(diags)


def test_short_echo_time_needs_short_input():
    over = validate_sequence(plan(0.32e-6, 1.7e-6, 2e-6))
    assert ("error", "input_fwhm") in severities(over)
    under = validate_sequence(plan(0.29e-6, 1.7e-6, 2e-6))
    assert not any(d.severity == "error" for d in under)
    bandwidth = [d for d in under if d.field == "control.rabi_freq"]
    assert bandwidth and "MHz" in bandwidth[0].message


def test_zero_area_control_is_error():
    diags = validate_sequence(plan(1.3e-6, 0.0, 4e-6))
    assert ("error", "control.duration") in severities(diags)


def test_comfortable_sequence_is_clean():
    assert validate_sequence(plan(0.5e-6, 1e-6, 4e-6, rabi=2e6)) == []


def test_control_ordering_errors():
    p = plan(0.5e-6, 1e-6, 4e-6, rabi=2e6, c1=5e-6)
    assert ("error", "control1_time") in severities(validate_sequence(p))
    p = plan(0.5e-6, 1e-6, 4e-6, rabi=2e6, c1=8e-6, c2=7e-6)
    assert ("error", "control2_time") in severities(validate_sequence(p))


def test_control_outside_echo_window_is_error():
    p = plan(0.5e-6, 1e-6, 4e-6, rabi=2e6, c1=9.8e-6)  # ends after the echo at 10 us
    assert ("error", "control1_time") in severities(validate_sequence(p))


def test_non_finite_fields():
    p = plan(float("nan"), 1e-6, 4e-6)
    assert ("error", "input_fwhm") in severities(validate_sequence(p))


def test_diagnostics_sorted_and_inputs_untouched():
    p = plan(0.35e-6, 1.7e-6, 2e-6, c1=6.9e-6)
    before = copy.deepcopy(p)
    diags = validate_sequence(p)
    assert p == before
    assert diags == sorted(diags, key=Diagnostic.sort_key)
    assert validate_sequence(p) == diags
    ranks = [0 if d.severity == "error" else 1 for d in diags]
    assert ranks == sorted(ranks)


def test_plan_derived_times():
    p = plan(1.3e-6, 1.55e-6, 4e-6, c1=8e-6, c2=13e-6)
    assert p.ts == pytest.approx(5e-6)
    assert p.echo_time == pytest.approx(6e-6 + 4e-6 + 5e-6)


# -- configuration -------------------------------------------------------------


def test_unknown_keys_rejected(op_raw):
    bad = copy.deepcopy(op_raw)
    bad["comb"]["teeth"] = 9
    with pytest.raises(ConfigError, match="teeth"):
        parse_config(bad)
    bad = copy.deepcopy(op_raw)
    bad["extras"] = {}
    with pytest.raises(ConfigError, match="extras"):
        parse_config(bad)
    bad = copy.deepcopy(op_raw)
    bad["sequence"]["input_width"] = 1e-6
    with pytest.raises(ConfigError, match="input_width"):
        parse_config(bad)


def test_missing_section_rejected(op_raw):
    del op_raw["spin"]
    with pytest.raises(ConfigError, match="spin"):
        parse_config(op_raw)


def test_bad_values_name_the_section(op_raw):
    op_raw["comb"]["gamma_fwhm"] = 400e3  # finesse below 1
    with pytest.raises(ConfigError, match="comb"):
        parse_config(op_raw)


def test_json_error_reports_line(tmp_path, op_raw):
    text = json.dumps(op_raw, indent=2).splitlines()
    text[3] = text[3] + ","  # trailing comma
    path = tmp_path / "broken.json"
    path.write_text("\n".join(text))
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        load_config(path)


def test_digest_ignores_key_order(op_raw):
    shuffled = {k: dict(reversed(list(v.items()))) if isinstance(v, dict) else v
                for k, v in reversed(list(op_raw.items()))}
    assert config_digest(shuffled) == config_digest(op_raw)


def test_set_path(op_raw):
    out = set_path(op_raw, "comb.delta", 5e5)
    assert out["comb"]["delta"] == 5e5 and op_raw["comb"]["delta"] == 250000.0
    out = set_path(op_raw, "sequence.ts", 2e-6)
    assert out["sequence"]["control2_time"] == pytest.approx(10e-6)
    with pytest.raises(ConfigError):
        set_path(op_raw, "comb.nope", 1.0)
    with pytest.raises(ConfigError):
        set_path(op_raw, "control.shape", 1.0)


# -- scenario runs -------------------------------------------------------------


def test_operating_point_report(op_raw):
    rep = run_scenario(op_raw)
    assert 1e-4 <= rep.three_level_efficiency <= 2e-4
    assert 0 <= rep.two_level_efficiency <= 1
    assert rep.transfer_efficiency == 0.4
    assert rep.spin_decay == pytest.approx(0.4285, abs=1e-3)
    assert rep.echo_time == pytest.approx(6e-6 + 4e-6 + 5e-6)
    assert rep.total_memory_time == pytest.approx(9e-6)
    assert any("input_fwhm" in w for w in rep.warnings)
    assert rep.provenance["config_digest"] == config_digest(op_raw)


def test_ideal_storage_equals_two_level(op_raw):
    op_raw["storage"] = {"mode_overlap": 1.0, "transfer_efficiency": 1.0}
    op_raw["sequence"]["control2_time"] = op_raw["sequence"]["control1_time"]
    rep = run_scenario(op_raw)
    assert rep.three_level_efficiency == rep.two_level_efficiency
    assert rep.three_level_analytic == rep.two_level_analytic


def test_modeled_transfer_used_without_measurement(op_raw):
    del op_raw["storage"]["transfer_efficiency"]
    rep = run_scenario(op_raw)
    assert 0.3 < rep.transfer_efficiency < 0.9


def test_invalid_sequence_raises(op_raw):
    op_raw["control"]["duration"] = 0.0
    with pytest.raises(ValidationError) as info:
        run_scenario(op_raw)
    assert any(d.field == "control.duration" for d in info.value.diagnostics)


def test_medium_depth_warning(op_raw):
    op_raw["medium"]["alpha"] = 0.1
    rep = run_scenario(op_raw)
    assert any("medium depth" in w for w in rep.warnings)


def test_report_json_stable(op_raw):
    a = run_scenario(op_raw, seed=5).to_json(include_timestamp=False)
    b = run_scenario(op_raw, seed=5).to_json(include_timestamp=False)
    assert a == b
    assert "timestamp" not in json.loads(a)
    assert json.loads(a)["provenance"]["seed"] == 5


# -- sweeps ----------------------------------------------------------------------


def test_ts_sweep_follows_decay(op_raw):
    values = np.linspace(0, 10e-6, 6)
    rows = sweep(op_raw, "sequence.ts", values)
    spin = SpinParams(69e3)
    base = rows[0]["three_level_efficiency"]
    for row, ts in zip(rows, values):
        assert row["spin_decay"] == pytest.approx(spin_decay_factor(ts, spin), abs=1e-9)
        assert row["three_level_efficiency"] / base == pytest.approx(spin_decay_factor(ts, spin), abs=1e-9)


def test_echo_time_sweep_trend(short_raw):
    deltas = [1 / 2e-6, 1 / 3e-6, 1 / 4e-6, 1 / 5e-6]
    rows = sweep(short_raw, "comb.delta", deltas)
    fin = [r["finesse"] for r in rows]
    np.testing.assert_allclose(fin, [3.03, 2.02, 1.52, 1.21], atol=0.01)
    analytic = [r["two_level_analytic"] for r in rows]
    assert all(a > b for a, b in zip(analytic, analytic[1:]))
    assert analytic[0] >= 3 * analytic[-1]
    numeric = [r["two_level_efficiency"] for r in rows]
    assert all(a > b for a, b in zip(numeric, numeric[1:]))


def test_optimal_finesse_depth_sweep(short_raw):
    rows = sweep(short_raw, "comb.d", [0.54, 1.6], optimal_finesse=True)
    for row, d in zip(rows, (0.54, 1.6)):
        assert row["finesse"] == pytest.approx(optimal_finesse(d), rel=1e-12)
    ratio = rows[1]["two_level_analytic"] / rows[0]["two_level_analytic"]
    expected = afc_efficiency(1.6, optimal_finesse(1.6), 0.04) / afc_efficiency(0.54, optimal_finesse(0.54), 0.04)
    assert ratio == pytest.approx(expected, rel=1e-12)
    assert 5 < ratio < 15


def test_singleton_sweep_matches_run(op_raw):
    (row,) = sweep(op_raw, "spin.gamma_is", [69e3])
    rep = run_scenario(op_raw)
    for k in REPORT_COLUMNS:
        assert row[k] == getattr(rep, k)


def test_sweep_equals_independent_runs(short_raw):
    values = [0.3, 0.54, 0.8, 1.1]
    rows = sweep(short_raw, "comb.d", values, max_workers=4)
    for row, v in zip(rows, values):
        rep = run_scenario(set_path(short_raw, "comb.d", v))
        assert row["value"] == v
        for k in REPORT_COLUMNS:
            assert row[k] == getattr(rep, k)
