"""Acceptance criteria, one test each, reported through the ``criterion`` fixture."""

import itertools
import json
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from afcmem.cli import main
from afcmem.comb import CombSpec, afc_efficiency, comb_profile
from afcmem.estimation import DecaySeries, decay_model, fit_comb, fit_spin_linewidth
from afcmem.propagation import (
    SimGrid,
    TimeTrace,
    default_echo_window,
    echo_efficiency,
    gaussian_pulse,
    peak_time,
    propagate,
)
from afcmem.spinwave import (
    ControlPulseSpec,
    SpinParams,
    extract_transfer_efficiency,
    pi_pulse_duration,
    rabi_transfer_probability,
    spin_decay_factor,
)

from test_estimation import _broadened_scan, ref_scan

pytestmark = pytest.mark.acceptance

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "operating_point.json"


def test_closed_form_point(criterion):
    eta = afc_efficiency(0.54, 3.03, 0.04)
    ok = abs(eta - 0.0119) <= 2e-4
    assert criterion(1, ok, f"afc_efficiency(0.54, 3.03, 0.04) = {eta:.5f} (target 0.0119 +/- 0.0002)")


def test_numeric_vs_closed_form(criterion):
    # 81 teeth at 1 MHz: input spectrum (2.2 MHz) is below 1/10 of the 81 MHz comb
    grid = SimGrid(2**16, 64e-6)
    t0, fwhm, delta = 8e-6, 0.2e-6, 1e6
    ref = gaussian_pulse(grid, t0, fwhm)
    start = time.perf_counter()
    worst_ratio, worst_timing = 0.0, 0.0
    for d, f, d0 in itertools.product((0.1, 0.3, 0.54, 0.8), (2, 3, 5, 10), (0.0, 0.04)):
        comb = CombSpec(d, d0, delta, delta / f, n_teeth=81)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            out = propagate(ref, comb)
        eta = echo_efficiency(out, ref, t0 + 1 / delta, default_echo_window(comb))
        worst_ratio = max(worst_ratio, abs(eta / afc_efficiency(d, f, d0) - 1))
        t_echo = peak_time(out, t0 + 0.7 / delta, t0 + 1.3 / delta)
        worst_timing = max(worst_timing, abs(t_echo - (t0 + 1 / delta)) / grid.time_step)
    elapsed = time.perf_counter() - start
    ok = worst_ratio <= 0.15 and worst_timing <= 1.0 and elapsed < 60
    assert criterion(
        2, ok,
        f"32-point grid: max |eta_num/eta_closed - 1| = {worst_ratio:.3f} (<= 0.15), "
        f"max echo offset = {worst_timing:.2f} time steps (<= 1), {elapsed:.1f} s",
    )


def test_transfer_extraction(criterion):
    eta_t = extract_transfer_efficiency(0.0004, 0.0024)
    ok = abs(eta_t - 0.408) <= 0.001
    assert criterion(3, ok, f"extract_transfer_efficiency(0.04 %, 0.24 %) = {eta_t:.4f} (target 0.408 +/- 0.001)")


def test_pi_pulse_duration(criterion):
    tau = pi_pulse_duration(300e3)
    p = rabi_transfer_probability(ControlPulseSpec(300e3, tau), 0.0)
    ok = abs(tau - 1.667e-6) <= 1e-9 and abs(p - 1.0) < 1e-12
    assert criterion(4, ok, f"pi pulse at 300 kHz = {tau * 1e6:.4f} us, resonant transfer {p:.12f}")


def test_spin_linewidth_monte_carlo(criterion):
    ts = np.linspace(0.5e-6, 10e-6, 8)
    clean = decay_model(ts, 1.0, 69e3)
    hits = 0
    for seed in range(200):
        noisy = clean * (1 + 0.05 * np.random.default_rng(seed).standard_normal(ts.size))
        gamma = fit_spin_linewidth(DecaySeries(ts, noisy)).params["gamma_is"]
        hits += abs(gamma - 69e3) <= 3e3
    ok = hits >= 180
    assert criterion(5, ok, f"gamma_is within 69 +/- 3 kHz in {hits}/200 trials (need >= 180)")


def test_decay_half_time(criterion):
    spin = SpinParams(69e3)
    t_half = brentq(lambda t: spin_decay_factor(t, spin) - 0.5, 1e-6, 10e-6, xtol=1e-15)
    ok = abs(t_half - 4.52e-6) <= 0.01e-6
    assert criterion(6, ok, f"half-time at 69 kHz = {t_half * 1e6:.4f} us (target 4.52 +/- 0.01)")


def test_echo_time_trend(criterion):
    etas = [afc_efficiency(0.54, (1 / t) / 165e3, 0.04) for t in (2e-6, 3e-6, 4e-6, 5e-6)]
    decreasing = all(a > b for a, b in zip(etas, etas[1:]))
    ratio = etas[0] / etas[-1]
    ok = decreasing and ratio >= 3
    assert criterion(
        7, ok,
        "closed-form efficiency at 1/delta = 2,3,4,5 us: "
        + ", ".join(f"{e:.5f}" for e in etas) + f"; 2 us / 5 us = {ratio:.1f}",
    )


def test_comb_fit_round_trip(criterion):
    nu, od = ref_scan()
    res = fit_comb(nu, od, delta_hint=0.5e6)
    truth = {"d": 0.54, "d0": 0.04, "gamma_fwhm": 165e3, "delta": 0.5e6}
    worst = max(abs(res.params[k] / v - 1) for k, v in truth.items())
    center_ok = abs(res.params["center"]) <= 1e-3 * 165e3
    nu_b, od_b = _broadened_scan()
    gamma_b = fit_comb(nu_b, od_b, delta_hint=0.5e6).params["gamma_fwhm"]
    ok = worst <= 1e-3 and center_ok and abs(gamma_b - 193e3) <= 5e3 and res.converged
    assert criterion(
        8, ok,
        f"noiseless max relative error {worst:.1e} (<= 1e-3); "
        f"with 100 kHz kernel gamma = {gamma_b / 1e3:.1f} kHz (193 +/- 5)",
    )


def test_passive_and_causal(criterion):
    rng = np.random.default_rng(2024)
    grid = SimGrid(2**15, 50e-6)
    t = grid.times
    t0 = 8e-6
    worst_gain, worst_leak = 0.0, 0.0
    for _ in range(40):
        delta = rng.uniform(0.5e6, 2e6)
        comb = CombSpec(
            d=rng.uniform(0, 3), d0=rng.uniform(0, 1), delta=delta,
            gamma_fwhm=delta / rng.uniform(1.5, 6), n_teeth=int(rng.choice([1, 3, 9, 21, 41])),
        )
        fwhm = rng.uniform(0.1e-6, 1.5e-6)
        x = gaussian_pulse(grid, t0, fwhm)
        x = TimeTrace(grid, np.where(np.abs(t - t0) <= 3 * fwhm, x.samples, 0.0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = propagate(x, comb)
        worst_gain = max(worst_gain, out.energy / x.energy)
        leak = np.sum(out.intensity[t < t0 - 3 * fwhm]) / np.sum(out.intensity)
        worst_leak = max(worst_leak, leak)
    ok = worst_gain <= 1 + 1e-12 and worst_leak < 1e-8
    assert criterion(
        9, ok,
        f"40 random combs: max E_out/E_in = {worst_gain:.6f} (<= 1), "
        f"max pre-pulse leakage = {worst_leak:.1e} (< 1e-8)",
    )


def test_simulate_deterministic(criterion, tmp_path):
    outs = []
    for name in ("a", "b"):
        code = main(["simulate", "--config", str(CONFIG), "--out", str(tmp_path / name), "--seed", "1"])
        assert code == 0
        text = (tmp_path / name / "report.json").read_bytes()
        outs.append([l for l in text.splitlines() if b'"timestamp"' not in l])
    same_traces = (tmp_path / "a" / "output_trace.csv").read_bytes() == (tmp_path / "b" / "output_trace.csv").read_bytes()
    ok = outs[0] == outs[1] and same_traces
    digest = json.loads((tmp_path / "a" / "report.json").read_text())["provenance"]["config_digest"]
    assert criterion(10, ok, f"two simulate runs byte-identical excluding timestamp (digest {digest[:12]})")
