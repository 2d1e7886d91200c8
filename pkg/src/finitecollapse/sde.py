"""Direct numerical route: Euler-Maruyama integration of the nonlinear
reduction equation, plus its integral-form cross-check.

Per eigenbasis index ``j`` with level energy ``E_j`` the state update is

    d psi_j = [-i*E_j - (1/8) * s_t^2 * (E_j - H_t)^2] * psi_j * dt
              + (1/2) * s_t * (E_j - H_t) * psi_j * dW_t

with ``s_t = sigma*T/(T-t)`` and ``H_t`` the energy expectation in the
current state. The continuous dynamics preserves the norm exactly; the
Euler map does not, so renormalization after every step is the default
(raw-norm mode is kept for drift diagnostics). Integration never
reaches the horizon: the coupling is singular there and terminal claims
belong to the exact route.

The integral form expresses the same solution as a positive operator
weight acting on the initial state: per level,

    log w_i = E_i * sum s(dW + s*H dt) - (1/2) * E_i^2 * sum s^2 dt

followed by a square root, the unitary phase and normalization. On a
shared noise path it must agree with the step-by-step integration to
discretization accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .exact import ReductionPath, ReductionSchedule
from .paths import KIND_BROWNIAN, KIND_DRIFTED, KIND_RECONSTRUCTED, NoisePath, TimeGrid
from .system import QuantumSystem

_DRIVING_KINDS = (KIND_BROWNIAN, KIND_RECONSTRUCTED)


@dataclass(frozen=True)
class IntegratorConfig:
    grid: TimeGrid
    schedule: ReductionSchedule
    renormalize_each_step: bool = True

    def __post_init__(self):
        if self.grid.horizon != self.schedule.horizon:
            raise ConfigurationError("grid and schedule horizons differ")
        if self.grid.has_sentinel:
            raise ConfigurationError("integration grids must stay below the horizon")


def _observables(amps: np.ndarray, basis_energies: np.ndarray, level_matrix: np.ndarray):
    """norm^2, energy mean, energy variance and level weights of a batch."""
    w = np.abs(amps) ** 2
    norm_sq = w.sum(axis=-1)
    pi = (w @ level_matrix) / norm_sq[..., np.newaxis]
    H = w @ basis_energies / norm_sq
    V = np.maximum(
        np.sum(w * (basis_energies - H[..., np.newaxis]) ** 2, axis=-1) / norm_sq, 0.0
    )
    return norm_sq, H, V, pi


def _euler_map(amps, t, dt, dW, basis_energies, schedule, renormalize):
    """One explicit Euler update; ``amps`` may carry batch axes, ``dW``
    one value per batch element."""
    T = schedule.horizon
    sig_t = schedule.volatility * T / (T - t)
    w = np.abs(amps) ** 2
    H = w @ basis_energies / w.sum(axis=-1)
    gap = basis_energies - np.asarray(H)[..., np.newaxis]
    drift = (-1j * basis_energies - 0.125 * sig_t**2 * gap**2) * amps
    diffusion = 0.5 * sig_t * gap * amps
    out = amps + drift * dt + diffusion * np.asarray(dW)[..., np.newaxis]
    if renormalize:
        out = out / np.linalg.norm(out, axis=-1, keepdims=True)
    return out


def euler_step(
    amplitudes: np.ndarray,
    t: float,
    dt: float,
    dW: float,
    system: QuantumSystem,
    schedule: ReductionSchedule,
    renormalize: bool = True,
) -> np.ndarray:
    """Advance a state vector by one explicit Euler step.

    The energy expectation entering the drift and diffusion uses the
    pre-step amplitudes. Raises :class:`DomainError` if the step crosses
    the horizon.
    """
    if t < 0 or t + dt >= schedule.horizon:
        raise DomainError("step must stay strictly below the horizon")
    amps = np.asarray(amplitudes, dtype=complex)
    return _euler_map(
        amps, t, dt, dW, system.spectrum.basis_energies, schedule, renormalize
    )


def _level_matrix(system: QuantumSystem) -> np.ndarray:
    level_of = system.spectrum.level_of_basis
    return (level_of[:, np.newaxis] == np.arange(system.n_levels)).astype(float)


def integrate_batch(
    system: QuantumSystem,
    schedule: ReductionSchedule,
    grid: TimeGrid,
    dW: np.ndarray,
    renormalize: bool = True,
    store_probabilities: bool = True,
    store_amplitudes: bool = False,
) -> dict:
    """Integrate a batch of paths sharing a grid.

    ``dW`` has shape ``(P, n_steps)``. Returns per-time arrays ``H``,
    ``V``, ``norm`` (post-renormalization when renormalizing) and,
    optionally, ``pi`` and the full amplitude history; final amplitudes
    are always included as ``amps_final``.
    """
    times = grid.times
    n_paths, n_steps = dW.shape
    if n_steps != grid.n_times - 1:
        raise DomainError("noise increments do not match the grid")
    basis_energies = system.spectrum.basis_energies
    level_matrix = _level_matrix(system)

    amps = np.broadcast_to(system.initial.amplitudes, (n_paths, system.n_basis)).copy()
    H = np.empty((n_paths, grid.n_times))
    V = np.empty_like(H)
    norm = np.empty_like(H)
    pi = np.empty((n_paths, grid.n_times, system.n_levels)) if store_probabilities else None
    amps_hist = (
        np.empty((n_paths, grid.n_times, system.n_basis), dtype=complex)
        if store_amplitudes
        else None
    )

    for k in range(grid.n_times):
        norm_sq, H[:, k], V[:, k], pi_k = _observables(amps, basis_energies, level_matrix)
        norm[:, k] = np.sqrt(norm_sq)
        if pi is not None:
            pi[:, k] = pi_k
        if amps_hist is not None:
            amps_hist[:, k] = amps
        if k < n_steps:
            amps = _euler_map(
                amps,
                times[k],
                times[k + 1] - times[k],
                dW[:, k],
                basis_energies,
                schedule,
                renormalize,
            )

    out = {"H": H, "V": V, "norm": norm, "amps_final": amps}
    if pi is not None:
        out["pi"] = pi
    if amps_hist is not None:
        out["amps"] = amps_hist
    return out


def integrate_sde(
    system: QuantumSystem, driving_noise: NoisePath, config: IntegratorConfig
) -> ReductionPath:
    """Integrate one path along its driving noise, recording level
    weights, energy moments and amplitudes at every grid time."""
    if driving_noise.kind not in _DRIVING_KINDS:
        raise DomainError(
            f"driving noise must be one of {_DRIVING_KINDS}, got {driving_noise.kind!r}"
        )
    if driving_noise.grid is not config.grid and not np.array_equal(
        driving_noise.grid.times, config.grid.times
    ):
        raise DomainError("driving noise and integrator config must share one grid")
    res = integrate_batch(
        system,
        config.schedule,
        config.grid,
        np.diff(driving_noise.values)[np.newaxis, :],
        renormalize=config.renormalize_each_step,
        store_probabilities=True,
        store_amplitudes=True,
    )
    return ReductionPath(
        config.grid, res["pi"][0], res["H"][0], res["V"][0], res["amps"][0]
    )


def _left_point_sums(noise: NoisePath, energy_path: np.ndarray, schedule: ReductionSchedule):
    t = noise.grid.times
    if len(energy_path) != len(t):
        raise DomainError("energy path does not match the noise grid")
    sig = schedule.volatility * schedule.horizon / (schedule.horizon - t[:-1])
    dW = np.diff(noise.values)
    dt = np.diff(t)
    H = np.asarray(energy_path)[:-1]
    return sig, dW, dt, H


def integral_form_state(
    driving_noise: NoisePath,
    energy_path: np.ndarray,
    system: QuantumSystem,
    schedule: ReductionSchedule,
) -> np.ndarray:
    """Terminal state via the integral-form weights on a shared noise path.

    ``energy_path`` supplies the energy expectation at each grid time
    (left-point values weight the quadrature). Exponentials are taken in
    the log domain; the normalization absorbs the scalar denominator of
    the operator weight.
    """
    sig, dW, dt, H = _left_point_sums(driving_noise, energy_path, schedule)
    drive = np.sum(sig * (dW + sig * H * dt))
    decay = np.sum(sig**2 * dt)
    energies = system.spectrum.distinct_energies
    logw = energies * drive - 0.5 * energies**2 * decay
    logw_basis = logw[system.spectrum.level_of_basis]
    t_max = driving_noise.grid.times[-1]
    amps = (
        system.initial.amplitudes
        * np.exp(0.5 * (logw_basis - logw_basis.max()))
        * np.exp(-1j * system.spectrum.basis_energies * t_max)
    )
    return amps / np.linalg.norm(amps)


def integral_form_normalization(
    driving_noise: NoisePath,
    energy_path: np.ndarray,
    system: QuantumSystem,
    schedule: ReductionSchedule,
) -> float:
    """Mean operator weight under the scalar normalization process.

    Equals 1 exactly in continuous time (the weight is normalized by
    construction); the discrete value drifts from 1 only by quadrature
    error, which makes it a convergence diagnostic.
    """
    sig, dW, dt, H = _left_point_sums(driving_noise, energy_path, schedule)
    drive = np.sum(sig * (dW + sig * H * dt))
    decay = np.sum(sig**2 * dt)
    log_phi = np.sum(sig * H * (dW + sig * H * dt)) - 0.5 * np.sum(sig**2 * H**2 * dt)
    energies = system.spectrum.distinct_energies
    logm = energies * drive - 0.5 * energies**2 * decay - log_phi
    return float(np.sum(system.born_weights * np.exp(logm)))


def drifted_noise(
    noise: NoisePath, energy_path: np.ndarray, schedule: ReductionSchedule
) -> NoisePath:
    """The drift-adjusted noise ``W + integral s*H dt`` (left-point)."""
    sig, _, dt, H = _left_point_sums(noise, energy_path, schedule)
    drift = np.concatenate([[0.0], np.cumsum(sig * H * dt)])
    return NoisePath(noise.grid, noise.values + drift, KIND_DRIFTED, source=noise)
