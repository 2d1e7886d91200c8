"""Monte Carlo ensemble runner with deterministic aggregation.

Paths are split into fixed-size chunks; each chunk is computed from its
own counter-based random streams and reduced with numpy's pairwise
summation, and chunk partials are combined in chunk order. The result
is therefore bit-identical for a given (config, master_seed) no matter
how many worker threads run the chunks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UnsupportedInputError
from .exact import (
    ReductionSchedule,
    conditional_probabilities,
    moments_from_probabilities,
    terminal_from_uniform,
)
from .paths import SeedSpec, TimeGrid, bridge_exact_from_normals
from .sde import integrate_batch
from .system import QuantumSystem, energy_moments

ROUTE_EXACT = "exact"
ROUTE_SDE = "sde"

_MAX_CHUNK = 2048
# Cap on floats held per chunk; keeps the SDE route's per-time level
# weights bounded in memory on fine grids. Depends only on the problem
# shape, never on worker count, so aggregation stays deterministic.
_CHUNK_BUDGET = 4_000_000

DEFAULT_PROBE_FRACTIONS = (0.25, 0.5, 0.75)


@dataclass
class EnsembleSummary:
    """Cross-path statistics on a grid.

    ``probe_bridge`` holds, per path, the de-drifted signal
    ``xi_t - sigma*t*H_T`` at the probe times and ``terminal_energies``
    the sampled terminal energy per path; both are exact-route only
    (``None`` for the SDE route).
    """

    n_paths: int
    route: str
    grid: TimeGrid
    mean_H: np.ndarray
    se_H: np.ndarray
    mean_V: np.ndarray
    se_V: np.ndarray
    mean_pi: np.ndarray
    se_pi: np.ndarray
    terminal_counts: np.ndarray
    probe_times: np.ndarray
    probe_indices: np.ndarray
    probe_bridge: np.ndarray | None
    terminal_energies: np.ndarray | None
    initial_energy: float
    initial_variance: float

    @property
    def terminal_frequencies(self) -> np.ndarray:
        return self.terminal_counts / self.n_paths


def _chunk_size(grid: TimeGrid, n_levels: int) -> int:
    per_path = grid.n_times * max(n_levels, 1)
    return max(1, min(_MAX_CHUNK, _CHUNK_BUDGET // per_path))


def _draw_chunk_normals(master_seed: int, start: int, stop: int, n_normals: int):
    """Per-path uniform + normal block, in the documented draw order."""
    uniforms = np.empty(stop - start)
    normals = np.empty((stop - start, n_normals))
    for i, path_index in enumerate(range(start, stop)):
        gen = SeedSpec(master_seed, path_index).generator()
        uniforms[i] = gen.random()
        normals[i] = gen.standard_normal(n_normals)
    return uniforms, normals


def _exact_chunk(system, schedule, grid, master_seed, start, stop, probe_idx):
    times = grid.times
    uniforms, normals = _draw_chunk_normals(master_seed, start, stop, grid.n_times - 1)
    levels = terminal_from_uniform(uniforms, system.born_weights)
    beta = bridge_exact_from_normals(grid, schedule.horizon, normals)
    energies = system.spectrum.distinct_energies[levels]
    xi = (schedule.volatility * times) * energies[:, np.newaxis] + beta
    pi = conditional_probabilities(xi, times, system, schedule)
    H, V = moments_from_probabilities(pi, system)
    return {
        "counts": np.bincount(levels, minlength=system.n_levels).astype(np.int64),
        "sums": _moment_sums(H, V, pi),
        "probe_bridge": beta[:, probe_idx],
        "terminal_energies": energies,
    }


def _sde_chunk(system, schedule, grid, master_seed, start, stop):
    normals = _draw_chunk_normals(master_seed, start, stop, grid.n_times - 1)[1]
    dW = normals * np.sqrt(grid.steps)
    res = integrate_batch(system, schedule, grid, dW, store_probabilities=True)
    terminal = np.argmax(res["pi"][:, -1, :], axis=-1)
    return {
        "counts": np.bincount(terminal, minlength=system.n_levels).astype(np.int64),
        "sums": _moment_sums(res["H"], res["V"], res["pi"]),
        "probe_bridge": None,
        "terminal_energies": None,
    }


def _moment_sums(H, V, pi):
    return {
        "H": H.sum(axis=0),
        "H2": (H * H).sum(axis=0),
        "V": V.sum(axis=0),
        "V2": (V * V).sum(axis=0),
        "pi": pi.sum(axis=0),
        "pi2": (pi * pi).sum(axis=0),
    }


def _mean_se(total, total_sq, n):
    mean = total / n
    if n < 2:
        return mean, np.zeros_like(mean)
    var = np.maximum(total_sq - total * total / n, 0.0) / (n - 1)
    return mean, np.sqrt(var / n)


def run_ensemble(
    system: QuantumSystem,
    schedule: ReductionSchedule,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    route: str = ROUTE_EXACT,
    probe_times=None,
    n_workers: int = 1,
) -> EnsembleSummary:
    """Run ``n_paths`` independent realizations and aggregate statistics.

    The exact route samples the terminal level and a bridge per path and
    evaluates the closed-form law; the SDE route samples driving noise
    and integrates. Terminal classification uses the sampled level on
    the exact route and the dominant level weight at the last grid time
    on the SDE route. ``probe_times`` (defaulting to quarter points of
    the horizon) are snapped to the nearest grid times and used for the
    covariance samples.
    """
    if n_paths < 1:
        raise ConfigurationError(f"need at least one path, got {n_paths!r}")
    if route not in (ROUTE_EXACT, ROUTE_SDE):
        raise ConfigurationError(f"unknown route {route!r}")
    if grid.has_sentinel:
        raise ConfigurationError(
            "ensemble grids must stay below the horizon; "
            "terminal values are analytic"
        )
    if grid.horizon != schedule.horizon:
        raise ConfigurationError("grid and schedule horizons differ")

    if probe_times is None:
        probe_times = [f * schedule.horizon for f in DEFAULT_PROBE_FRACTIONS]
    probe_idx = np.array(
        [int(np.argmin(np.abs(grid.times - p))) for p in probe_times], dtype=np.intp
    )

    chunk = _chunk_size(grid, system.n_levels)
    bounds = [(s, min(s + chunk, n_paths)) for s in range(0, n_paths, chunk)]

    def compute(span):
        start, stop = span
        if route == ROUTE_EXACT:
            return _exact_chunk(
                system, schedule, grid, master_seed, start, stop, probe_idx
            )
        return _sde_chunk(system, schedule, grid, master_seed, start, stop)

    if n_workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            partials = list(pool.map(compute, bounds))
    else:
        partials = [compute(span) for span in bounds]

    counts = np.zeros(system.n_levels, dtype=np.int64)
    totals = None
    exact = route == ROUTE_EXACT
    probe_bridge = np.empty((n_paths, len(probe_idx))) if exact else None
    terminal_energies = np.empty(n_paths) if exact else None
    for (start, stop), part in zip(bounds, partials):
        counts += part["counts"]
        if totals is None:
            totals = part["sums"]
        else:
            for key, val in part["sums"].items():
                totals[key] = totals[key] + val
        if exact:
            probe_bridge[start:stop] = part["probe_bridge"]
            terminal_energies[start:stop] = part["terminal_energies"]

    mean_H, se_H = _mean_se(totals["H"], totals["H2"], n_paths)
    mean_V, se_V = _mean_se(totals["V"], totals["V2"], n_paths)
    mean_pi, se_pi = _mean_se(totals["pi"], totals["pi2"], n_paths)
    H0, V0 = energy_moments(system)
    return EnsembleSummary(
        n_paths=n_paths,
        route=route,
        grid=grid,
        mean_H=mean_H,
        se_H=se_H,
        mean_V=mean_V,
        se_V=se_V,
        mean_pi=mean_pi,
        se_pi=se_pi,
        terminal_counts=counts,
        probe_times=grid.times[probe_idx],
        probe_indices=probe_idx,
        probe_bridge=probe_bridge,
        terminal_energies=terminal_energies,
        initial_energy=H0,
        initial_variance=V0,
    )
