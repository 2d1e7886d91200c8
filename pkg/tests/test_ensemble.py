import numpy as np
import pytest

import finitecollapse as fc
from finitecollapse.errors import ConfigurationError, UnsupportedInputError
from finitecollapse.verification import (
    born_test,
    independence_test,
    martingale_test,
    variance_decay_test,
)


def small_grid():
    return fc.make_grid(1.0, 64, "uniform-in-t", 1e-3)


def test_single_path_single_level(single_level_system, desk_schedule):
    summary = fc.run_ensemble(
        single_level_system, desk_schedule, small_grid(), 1, master_seed=1
    )
    assert np.all(summary.mean_H == 5.0)
    assert np.all(summary.mean_V == 0.0)
    assert np.all(summary.se_H == 0.0)
    assert summary.terminal_counts.tolist() == [1]


def test_ensemble_reproducible(desk_system, desk_schedule):
    a = fc.run_ensemble(desk_system, desk_schedule, small_grid(), 300, master_seed=5)
    b = fc.run_ensemble(desk_system, desk_schedule, small_grid(), 300, master_seed=5)
    assert np.array_equal(a.mean_H, b.mean_H)
    assert np.array_equal(a.se_pi, b.se_pi)
    assert np.array_equal(a.terminal_counts, b.terminal_counts)


def test_ensemble_thread_invariant(desk_system, desk_schedule):
    a = fc.run_ensemble(
        desk_system, desk_schedule, small_grid(), 3000, master_seed=5, n_workers=1
    )
    b = fc.run_ensemble(
        desk_system, desk_schedule, small_grid(), 3000, master_seed=5, n_workers=4
    )
    for field in ("mean_H", "se_H", "mean_V", "se_V", "mean_pi", "se_pi", "probe_bridge"):
        assert np.array_equal(getattr(a, field), getattr(b, field)), field


def test_ensemble_validation(desk_system, desk_schedule):
    with pytest.raises(ConfigurationError):
        fc.run_ensemble(desk_system, desk_schedule, small_grid(), 0, master_seed=1)
    with pytest.raises(ConfigurationError):
        fc.run_ensemble(
            desk_system, desk_schedule, small_grid(), 10, master_seed=1, route="magic"
        )
    with pytest.raises(ConfigurationError):
        fc.run_ensemble(
            desk_system,
            desk_schedule,
            small_grid().with_sentinel(),
            10,
            master_seed=1,
        )


def test_mean_pi_rows_normalized(desk_system, desk_schedule):
    summary = fc.run_ensemble(desk_system, desk_schedule, small_grid(), 500, master_seed=6)
    assert np.allclose(summary.mean_pi.sum(axis=1), 1.0, atol=1e-10)
    assert summary.terminal_energies is not None
    assert set(np.unique(summary.terminal_energies)) <= {0.0, 1.0}


def test_sde_route_statistics(desk_system, desk_schedule):
    # tail-free grid keeps the explicit scheme stable everywhere
    grid = fc.make_grid(1.0, 256, "uniform-in-t", 0.1)
    summary = fc.run_ensemble(
        desk_system, desk_schedule, grid, 2000, master_seed=31, route="sde", n_workers=2
    )
    assert summary.probe_bridge is None
    assert born_test(summary, desk_system).passed
    for result in martingale_test(summary):
        assert result.passed
    assert variance_decay_test(summary).passed
    with pytest.raises(UnsupportedInputError):
        independence_test(summary)


def exact_summary(desk_system, desk_schedule, n_paths=2000, seed=41):
    return fc.run_ensemble(
        desk_system, desk_schedule, small_grid(), n_paths, master_seed=seed, n_workers=2
    )


def test_exact_route_statistics(desk_system, desk_schedule):
    summary = exact_summary(desk_system, desk_schedule)
    assert born_test(summary, desk_system).passed
    for result in martingale_test(summary):
        assert result.passed
    assert variance_decay_test(summary).passed
    assert independence_test(summary).passed


def test_single_level_independence_degenerate(single_level_system, desk_schedule):
    # the 5% variance band presumes desk-scale path counts
    summary = fc.run_ensemble(
        single_level_system, desk_schedule, small_grid(), 20_000, master_seed=42
    )
    result = independence_test(summary)
    assert result.passed
    assert all(abs(c) == 0.0 for c in result.metadata["covariances"])


def test_born_synthetic_threshold(desk_system, desk_schedule):
    summary = exact_summary(desk_system, desk_schedule, n_paths=400)
    # exact frequencies pass
    summary.terminal_counts = np.array([120, 280])
    assert born_test(summary, desk_system).passed
    # a 10-standard-error excess fails
    shift = int(np.ceil(10 * np.sqrt(0.3 * 0.7 / 400) * 400))
    summary.terminal_counts = np.array([120 - shift, 280 + shift])
    assert not born_test(summary, desk_system).passed


def test_martingale_synthetic_drift_fails(desk_system, desk_schedule):
    summary = exact_summary(desk_system, desk_schedule, n_paths=400)
    drift = 10.0 * np.maximum(summary.se_H, 1e-6) * np.linspace(0, 1, len(summary.mean_H))
    summary.mean_H = summary.mean_H + drift
    energy_result = martingale_test(summary)[0]
    assert not energy_result.passed


def test_martingale_synthetic_constant_passes(desk_system, desk_schedule):
    summary = exact_summary(desk_system, desk_schedule, n_paths=400)
    summary.mean_H = np.full_like(summary.mean_H, 0.7)
    summary.mean_pi = np.tile(desk_system.born_weights, (len(summary.mean_H), 1))
    for result in martingale_test(summary):
        assert result.passed


def test_variance_synthetic_rise_fails(desk_system, desk_schedule):
    summary = exact_summary(desk_system, desk_schedule, n_paths=400)
    summary.mean_V = np.linspace(0.21, 0.5, len(summary.mean_V))
    assert not variance_decay_test(summary).passed
