"""Closed-form route for the reduction dynamics.

The state at time ``t < T`` is determined by two pieces of exogenous
random data: the terminal level (drawn with the initial projection
weights) and an independent Brownian bridge ``beta`` pinned to zero at
``T``. The scalar information signal

    xi_t = sigma * t * E_terminal + beta_t

carries everything the state depends on. Conditioning on ``xi_t`` gives
the per-level reduction probabilities

    p_i(t) ~ pi_i * exp[(sigma*xi_t*E_i*T - sigma^2*E_i^2*t*T/2) / (T-t)]

from which the energy mean/variance and the full state vector follow.
The exponents grow like ``1/(T-t)`` near the horizon, so all weights
are evaluated in the log domain with max-exponent subtraction; the
horizon itself is served analytically by :func:`terminal_limit`. The
driving Brownian motion of the differential form of the dynamics is
recovered from the signal by

    W_t = xi_t + integral_0^t (xi_s - sigma*T*H_s) / (T-s) ds .
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .paths import (
    KIND_BRIDGE,
    KIND_RECONSTRUCTED,
    NoisePath,
    SeedSpec,
    TimeGrid,
    bridge_exact_from_normals,
    bridge_from_bm,
    brownian_from_normals,
)
from .system import QuantumSystem


@dataclass(frozen=True)
class ReductionSchedule:
    """Reduction horizon and volatility; the effective coupling is
    ``volatility * horizon / (horizon - t)``, singular at the horizon."""

    horizon: float
    volatility: float

    def __post_init__(self):
        if self.horizon <= 0:
            raise DomainError(f"horizon must be positive, got {self.horizon!r}")
        if self.volatility <= 0:
            raise DomainError(f"volatility must be positive, got {self.volatility!r}")

    def volatility_at(self, t):
        """Time-dependent coupling, defined for t < horizon only."""
        t = np.asarray(t, dtype=float)
        if np.any(t >= self.horizon) or np.any(t < 0):
            raise DomainError("coupling defined for 0 <= t < horizon")
        out = self.volatility * self.horizon / (self.horizon - t)
        return float(out) if out.ndim == 0 else out


@dataclass
class InformationPath:
    """Discretized information signal for one realization.

    ``terminal_level`` is the level the path reduces to; ``source_bm``
    keeps the generating Brownian motion when the underlying bridge was
    built pathwise from one (needed for time-change identity checks).
    """

    grid: TimeGrid
    values: np.ndarray
    terminal_level: int
    source_bm: NoisePath | None = field(default=None, repr=False)


@dataclass
class ReductionPath:
    """Per-time reduction probabilities, energy moments and state amplitudes."""

    grid: TimeGrid
    probabilities: np.ndarray
    energy: np.ndarray
    variance: np.ndarray
    amplitudes: np.ndarray


def terminal_from_uniform(u, weights: np.ndarray):
    """Map uniform draws in [0, 1) to level indices with the given weights.

    Zero-weight levels are never selected.
    """
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, u, side="right")
    return int(idx) if np.ndim(u) == 0 else idx


def sample_terminal_energy(system: QuantumSystem, seed: SeedSpec) -> int:
    """Draw the terminal level with the system's projection weights."""
    return terminal_from_uniform(seed.generator().random(), system.born_weights)


def information_process(
    terminal_level: int,
    bridge: NoisePath,
    schedule: ReductionSchedule,
    system: QuantumSystem,
) -> InformationPath:
    """Signal ``sigma * t * E_terminal + bridge_t`` on the bridge's grid."""
    if bridge.kind != KIND_BRIDGE:
        raise DomainError(f"expected a bridge path, got kind {bridge.kind!r}")
    if bridge.grid.horizon != schedule.horizon:
        raise DomainError(
            f"horizon mismatch: bridge {bridge.grid.horizon!r}, "
            f"schedule {schedule.horizon!r}"
        )
    energy = system.spectrum.distinct_energies[terminal_level]
    values = schedule.volatility * bridge.grid.times * energy + bridge.values
    return InformationPath(bridge.grid, values, terminal_level, source_bm=bridge.source)


def _check_times(t, T) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= T):
        raise DomainError(
            "formula evaluation needs 0 <= t < horizon; "
            "the horizon itself is served by terminal_limit"
        )
    return t


def log_weight_exponents(xi, t, system: QuantumSystem, schedule: ReductionSchedule):
    """Per-level log-weight exponents of the conditional law, shape (..., L).

    The exponent ``(sigma*xi*E_i*T - sigma^2*E_i^2*t*T/2) / (T-t)`` is
    factored through the stretch ``T/(T-t)`` with exactly the arithmetic
    of the asymptotic-model exponent, so the clock-change identity holds
    bitwise, not merely to rounding.
    """
    T = schedule.horizon
    sig = schedule.volatility
    t = _check_times(t, T)
    xi = np.asarray(xi, dtype=float)
    energies = system.spectrum.distinct_energies
    stretch = T / (T - t)
    eta = stretch * xi
    tau = stretch * t
    return (
        sig * eta[..., np.newaxis] * energies
        - 0.5 * sig**2 * tau[..., np.newaxis] * energies**2
    )


def conditional_probabilities(
    xi, t, system: QuantumSystem, schedule: ReductionSchedule
) -> np.ndarray:
    """Reduction probabilities conditional on the signal value ``xi`` at ``t``.

    Evaluated in the log domain with max-exponent subtraction, so the
    result stays finite arbitrarily close to the horizon. Zero-weight
    levels stay exactly zero. ``xi`` and ``t`` broadcast; the level axis
    is appended last.
    """
    exponents = log_weight_exponents(xi, t, system, schedule)
    with np.errstate(divide="ignore"):
        log_pi = np.where(system.born_weights > 0, np.log(system.born_weights), -np.inf)
    logw = log_pi + exponents
    logw -= logw.max(axis=-1, keepdims=True)
    p = np.exp(logw)
    p /= p.sum(axis=-1, keepdims=True)
    return p


def bayes_probabilities(
    xi, t, system: QuantumSystem, schedule: ReductionSchedule
) -> np.ndarray:
    """Reference evaluation of the same conditional law through explicit
    Gaussian densities.

    Conditional on terminal level ``i`` the signal at ``t`` is normal
    with mean ``sigma*t*E_i`` and variance ``t*(T-t)/T``; the posterior
    weights are ``pi_i`` times those densities. Evaluated literally, so
    it overflows/underflows where the log-domain route does not: valid
    for ``0 < t < T`` with exponents within double range. Kept as an
    independent cross-check route, not for production use.
    """
    T = schedule.horizon
    sig = schedule.volatility
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or np.any(t >= T):
        raise DomainError("density route needs 0 < t < horizon")
    xi = np.asarray(xi, dtype=float)
    energies = system.spectrum.distinct_energies
    spread = 2.0 * t * (T - t)
    dev = xi[..., np.newaxis] - sig * t[..., np.newaxis] * energies
    density = np.sqrt(T / (np.pi * spread))[..., np.newaxis] * np.exp(
        -(dev**2) * T / spread[..., np.newaxis]
    )
    w = system.born_weights * density
    return w / w.sum(axis=-1, keepdims=True)


def moments_from_probabilities(probabilities, system: QuantumSystem):
    """Energy mean and variance of a per-level probability vector.

    Accepts stacked vectors ``(..., L)``; scalars come back as floats.
    """
    p = np.asarray(probabilities, dtype=float)
    energies = system.spectrum.distinct_energies
    mean = p @ energies
    var = np.maximum(np.sum(p * (energies - mean[..., np.newaxis]) ** 2, axis=-1), 0.0)
    if p.ndim == 1:
        return float(mean), float(var)
    return mean, var


def state_vector(
    xi, t, system: QuantumSystem, schedule: ReductionSchedule
) -> np.ndarray:
    """State amplitudes in the eigenbasis at ``(xi, t)``.

    The amplitude along level ``i``'s projected direction is
    ``sqrt(p_i(t)) * exp(-1j*E_i*t)``; the result has unit norm by
    construction. Batched over leading axes of ``xi``/``t``.
    """
    p = conditional_probabilities(xi, t, system, schedule)
    t = np.asarray(t, dtype=float)
    level_of = system.spectrum.level_of_basis
    phases = np.exp(-1j * system.spectrum.basis_energies * t[..., np.newaxis])
    return np.sqrt(p[..., level_of]) * system.lueders_flat * phases


def terminal_limit(terminal_level: int, system: QuantumSystem, T: float) -> np.ndarray:
    """Analytic state exactly at the horizon: the phase-rotated projected
    state of the terminal level (one-hot probabilities, zero variance)."""
    if system.born_weights[terminal_level] <= 0:
        raise DomainError(
            f"level {terminal_level} has zero weight and cannot be a terminal state"
        )
    energy = system.spectrum.distinct_energies[terminal_level]
    return system.lueders_states[terminal_level] * np.exp(-1j * energy * T)


def reduction_path(
    info: InformationPath, system: QuantumSystem, schedule: ReductionSchedule
) -> ReductionPath:
    """Evaluate probabilities, moments and amplitudes along a signal path.

    A sentinel point at the horizon, if present, is filled analytically
    (exact one-hot probabilities and zero variance).
    """
    grid = info.grid
    t = grid.times
    n_formula = grid.n_times - 1 if grid.has_sentinel else grid.n_times

    probs = np.empty((grid.n_times, system.n_levels))
    amps = np.empty((grid.n_times, system.n_basis), dtype=complex)
    probs[:n_formula] = conditional_probabilities(
        info.values[:n_formula], t[:n_formula], system, schedule
    )
    amps[:n_formula] = state_vector(info.values[:n_formula], t[:n_formula], system, schedule)
    if grid.has_sentinel:
        k = info.terminal_level
        probs[-1] = 0.0
        probs[-1, k] = 1.0
        amps[-1] = terminal_limit(k, system, schedule.horizon)

    energy, variance = moments_from_probabilities(probs, system)
    if grid.has_sentinel:
        energy[-1] = system.spectrum.distinct_energies[info.terminal_level]
        variance[-1] = 0.0
    return ReductionPath(grid, probs, energy, variance, amps)


def reconstruct_values(
    xi: np.ndarray, energy: np.ndarray, times: np.ndarray, schedule: ReductionSchedule
) -> np.ndarray:
    """Driving-noise values from signal and energy arrays (batched form).

    ``xi`` and ``energy`` may carry leading batch axes over a shared
    time axis; left-point quadrature of the ordinary integral.
    """
    T = schedule.horizon
    integrand = (xi[..., :-1] - schedule.volatility * T * energy[..., :-1]) / (
        T - times[:-1]
    )
    steps = integrand * np.diff(times)
    running = np.concatenate(
        [np.zeros(steps.shape[:-1] + (1,)), np.cumsum(steps, axis=-1)], axis=-1
    )
    return xi + running


def reconstruct_noise(
    info: InformationPath, reduction: ReductionPath, schedule: ReductionSchedule
) -> NoisePath:
    """Recover the driving Brownian motion from the signal and energy paths.

    Left-point quadrature of the ordinary integral, consistent with the
    Ito discretization used elsewhere.
    """
    if info.grid is not reduction.grid and not np.array_equal(
        info.grid.times, reduction.grid.times
    ):
        raise DomainError("information and reduction paths must share one grid")
    if info.grid.has_sentinel:
        raise DomainError("driving noise is defined strictly below the horizon")
    values = reconstruct_values(
        info.values, reduction.energy, info.grid.times, schedule
    )
    return NoisePath(info.grid, values, KIND_RECONSTRUCTED)


def simulate_exact_path(
    system: QuantumSystem,
    schedule: ReductionSchedule,
    grid: TimeGrid,
    seed: SeedSpec,
    use_bm_bridge: bool = False,
) -> tuple[InformationPath, ReductionPath]:
    """One full closed-form realization on a grid.

    Per-path draw order (the reproducibility contract shared with the
    ensemble runner): one uniform for the terminal level, then one unit
    normal per grid step for the bridge. With ``use_bm_bridge`` the
    bridge is built pathwise from a Brownian motion (keeping the link
    needed by time-change checks) instead of by exact conditional
    sampling.
    """
    gen = seed.generator()
    level = terminal_from_uniform(gen.random(), system.born_weights)
    normals = gen.standard_normal(grid.n_times - 1)
    if use_bm_bridge:
        bridge = bridge_from_bm(brownian_from_normals(grid, normals), schedule.horizon)
    else:
        values = bridge_exact_from_normals(grid, schedule.horizon, normals)
        bridge = NoisePath(grid, values, KIND_BRIDGE)
    info = information_process(level, bridge, schedule, system)
    return info, reduction_path(info, system, schedule)
