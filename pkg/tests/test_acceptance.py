"""Acceptance suite: one test per criterion, each printing a verdict line.

Desk configuration throughout unless a criterion says otherwise:
energies (0, 1), weights (0.3, 0.7), sigma = 1, T = 1, cutoff fraction
1e-3, exact route, fixed master seeds. Statistical criteria use
four-standard-error bands; identity criteria use machine-precision
tolerances; discretization thresholds were frozen after a pilot
convergence study (see scripts/pilot_convergence.py).
"""

import json

import numpy as np
import pytest

import finitecollapse as fc
from finitecollapse import verification as ver
from finitecollapse.cli import main as cli_main
from finitecollapse.ensemble import _draw_chunk_normals
from finitecollapse.paths import bridge_exact_from_normals

SE_FLOOR = 1e-12

ENSEMBLE_SEED = 20260301
INDEPENDENCE_SEED = 20260302
BAYES_SEED = 20260303
TIMECHANGE_SEED = 20260304
BRIDGE_SEED = 20260305
CONVERGENCE_SEED = 2024
INTEGRAL_SEED = 2025
CLI_SEED = 11


def report(number, name, passed, detail):
    print(f"criterion {number:02d} {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"criterion {number:02d} {name}: {detail}"


@pytest.fixture(scope="module")
def desk():
    system = fc.build_system([0.0, 1.0], [np.sqrt(0.3), np.sqrt(0.7)])
    schedule = fc.ReductionSchedule(1.0, 1.0)
    return system, schedule


@pytest.fixture(scope="module")
def desk_ensemble(desk):
    system, schedule = desk
    grid = fc.make_grid(1.0, 200, "uniform-in-t", 1e-3)
    return fc.run_ensemble(
        system, schedule, grid, 10_000, ENSEMBLE_SEED, n_workers=4
    )


@pytest.fixture(scope="module")
def convergence(desk):
    system, schedule = desk
    return ver.convergence_study(
        system, schedule, (2**10, 2**12, 2**14), 100, CONVERGENCE_SEED
    )


def test_01_reduction_timescale_formula():
    value = fc.reduction_timescale(2.8)
    ok = abs(value - 1.0) <= 1e-15
    report(1, "reduction-timescale-formula", ok, f"tau_R(2.8 MeV) = {value!r} s")


def test_02_born_law(desk, desk_ensemble):
    freq = desk_ensemble.terminal_frequencies[1]
    ok = abs(freq - 0.7) <= 0.0183
    report(2, "born-law", ok, f"freq(E=1) = {freq:.4f}, band 0.7 +- 0.0183")


def test_03_energy_martingale(desk, desk_ensemble):
    dev = np.abs(desk_ensemble.mean_H - 0.7)
    allowed = 4.0 * desk_ensemble.se_H + SE_FLOOR
    worst = float(np.max(dev - allowed))
    n_times = len(desk_ensemble.mean_H)
    ok = worst <= 0 and n_times >= 100
    report(3, "energy-martingale", ok, f"worst margin {worst:.2e} over {n_times} times")


def test_04_probability_martingale(desk, desk_ensemble):
    dev = np.abs(desk_ensemble.mean_pi[:, 1] - 0.7)
    allowed = 4.0 * desk_ensemble.se_pi[:, 1] + SE_FLOOR
    worst = float(np.max(dev - allowed))
    ok = worst <= 0
    report(4, "probability-martingale", ok, f"worst margin {worst:.2e}")


def test_05_variance_collapse(desk, desk_ensemble):
    system, schedule = desk
    summary = desk_ensemble
    ceiling = float(np.max(summary.mean_V - (0.21 + 4.0 * summary.se_V + SE_FLOOR)))

    t_max = summary.grid.t_max
    i_mid = int(np.argmin(np.abs(summary.grid.times - 0.5 * t_max)))
    i_late = int(np.argmin(np.abs(summary.grid.times - 0.999 * t_max)))
    strict = summary.mean_V[i_late] < summary.mean_V[i_mid]

    # analytic sentinel: one-hot terminal state has exactly zero variance
    grid = fc.make_grid(1.0, 16, "uniform-in-t", 1e-3).with_sentinel()
    bridge = fc.sample_bridge_exact(grid, 1.0, fc.SeedSpec(ENSEMBLE_SEED, 0))
    info = fc.information_process(1, bridge, schedule, system)
    sentinel_v = fc.reduction_path(info, system, schedule).variance[-1]

    ok = ceiling <= 0 and strict and sentinel_v == 0.0
    report(
        5,
        "variance-collapse",
        ok,
        f"ceiling margin {ceiling:.2e}, late {summary.mean_V[i_late]:.4f} < "
        f"mid {summary.mean_V[i_mid]:.4f}, sentinel V = {sentinel_v!r}",
    )


def test_06_bayes_equality(desk):
    system, schedule = desk
    result = ver.bayes_equality_test(system, schedule, 1000, BAYES_SEED)
    report(
        6,
        "bayes-softmax-equality",
        result.passed and result.statistic <= 1e-12,
        f"max relative gap {result.statistic:.2e} over 1000 triples",
    )


def test_07_timechange_identity(desk):
    system, schedule = desk
    sig_res, prob_res = ver.equivalence_test(
        system, schedule, 2**10, 100, TIMECHANGE_SEED
    )
    ok = sig_res.statistic <= 1e-10 and prob_res.statistic <= 1e-12
    report(
        7,
        "timechange-identity",
        ok,
        f"max signal gap {sig_res.statistic:.2e}, "
        f"max probability gap {prob_res.statistic:.2e}, 100 paths",
    )


def test_08_route_convergence(desk, convergence):
    gaps = convergence.rms_gaps
    decreasing = all(b < a for a, b in zip(gaps[:-1], gaps[1:]))
    ok = decreasing and gaps[-1] < 1e-2
    report(
        8,
        "route-convergence",
        ok,
        f"rms gaps {[f'{g:.3e}' for g in gaps]}, "
        f"ratios {[f'{r:.2f}' for r in convergence.gap_ratios]}, "
        f"agreement {convergence.classification_agreement}",
    )


def test_09_norm_preservation(desk, convergence):
    drifts = convergence.raw_drift_per_step
    monotone = all(b < a for a, b in zip(drifts[:-1], drifts[1:]))
    ok = convergence.renorm_max_dev <= 1e-12 and monotone
    report(
        9,
        "norm-preservation",
        ok,
        f"renormalized dev {convergence.renorm_max_dev:.2e}, "
        f"raw drift/step {[f'{d:.3e}' for d in drifts]}",
    )


def test_10_bridge_statistics():
    n = 100_000
    grid = fc.TimeGrid(1.0, np.array([0.0, 0.25, 0.5, 0.75]))
    values = np.empty((n, 4))
    for start in range(0, n, 4096):
        stop = min(start + 4096, n)
        normals = _draw_chunk_normals(BRIDGE_SEED, start, stop, 3)[1]
        values[start:stop] = bridge_exact_from_normals(grid, 1.0, normals)
    var_mid = float(values[:, 2].var(ddof=1))
    cov = float(np.cov(values[:, 1], values[:, 3])[0, 1])
    ok = abs(var_mid - 0.25) <= 0.05 * 0.25 and abs(cov - 0.0625) <= 0.10 * 0.0625
    report(
        10,
        "bridge-statistics",
        ok,
        f"Var(beta_T/2) = {var_mid:.5f} (target 0.25 +-5%), "
        f"Cov(beta_1/4, beta_3/4) = {cov:.5f} (target 0.0625 +-10%)",
    )


def test_11_independence(desk):
    system, schedule = desk
    # grid ending exactly at T/2 so the probe sits at the half horizon
    grid = fc.make_grid(1.0, 100, "uniform-in-t", 0.5)
    summary = fc.run_ensemble(
        system,
        schedule,
        grid,
        100_000,
        INDEPENDENCE_SEED,
        probe_times=[0.5],
        n_workers=4,
    )
    beta = summary.probe_bridge[:, 0]
    h_t = summary.terminal_energies
    products = (beta - beta.mean()) * (h_t - h_t.mean())
    cov = float(products.mean())
    se = float(products.std(ddof=1) / np.sqrt(summary.n_paths))
    ok = abs(cov) <= 4.0 * se
    report(
        11,
        "independence",
        ok,
        f"Cov(beta_T/2, H_T) = {cov:.2e}, 4 SE = {4 * se:.2e}, "
        f"Var(beta_T/2) = {beta.var(ddof=1):.5f}",
    )


def test_12_integral_form(desk):
    system, schedule = desk
    result = ver.integral_form_test(
        system, schedule, 2**14, 100, INTEGRAL_SEED, tolerance=1e-2
    )
    report(
        12,
        "integral-form-crosscheck",
        result.passed,
        f"worst amplitude gap {result.statistic:.2e} over 100 paths at 2^14 steps",
    )


def test_13_determinism(desk, tmp_path):
    config = {
        "system": {
            "energies": [0.0, 1.0],
            "amplitudes": [[0.5477225575051661, 0.0], [0.8366600265340756, 0.0]],
        },
        "schedule": {"T": 1.0, "sigma": 1.0},
        "grid": {"n_steps": 100, "scheme": "uniform-in-t", "epsilon_fraction": 1e-3},
        "ensemble": {"n_paths": 500, "master_seed": CLI_SEED},
        "route": "exact",
    }
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(config))
    code1 = cli_main(
        ["ensemble", "--config", str(cfg), "--out", str(tmp_path / "a"), "--threads", "1"]
    )
    code2 = cli_main(
        ["ensemble", "--config", str(cfg), "--out", str(tmp_path / "b"), "--threads", "4"]
    )
    bytes1 = (tmp_path / "a" / "summary.csv").read_bytes()
    bytes2 = (tmp_path / "b" / "summary.csv").read_bytes()
    ok = code1 == 0 and code2 == 0 and bytes1 == bytes2
    report(
        13,
        "ensemble-determinism",
        ok,
        f"summary.csv identical across thread counts ({len(bytes1)} bytes)",
    )
