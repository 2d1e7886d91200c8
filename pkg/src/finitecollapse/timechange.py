"""Nonlinear clock map between the finite-horizon model and the
asymptotic collapse model.

The stretched clock ``tau = t*T/(T-t)`` maps ``[0, T)`` onto
``[0, inf)``. Under it the finite-horizon information signal becomes
the asymptotic one: scaling the signal by ``T/(T-t)`` and fast-
forwarding the underlying Brownian motion yield the same process

    eta_tau = sigma * tau * E_terminal + B_tau

two different ways, and with shared discretized increment sums the two
are algebraically identical, so the check below is a machine-precision
identity rather than a statistical test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UnsupportedInputError
from .exact import (
    InformationPath,
    ReductionSchedule,
    conditional_probabilities,
)
from .paths import KIND_BROWNIAN, NoisePath
from .system import QuantumSystem


@dataclass
class AsymptoticPath:
    """Fast-forwarded Brownian motion and information signal on the
    stretched clock; in bijection with a finite-horizon grid."""

    tau_grid: np.ndarray
    bm_values: np.ndarray
    eta_values: np.ndarray | None = None


def tau_of_t(t, T: float):
    """Stretched clock ``t*T/(T-t)``; increasing, unbounded as t -> T."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= T):
        raise DomainError("clock map defined for 0 <= t < horizon")
    out = (T / (T - t)) * t
    return float(out) if out.ndim == 0 else out


def t_of_tau(tau, T: float):
    """Inverse clock map ``tau*T/(tau+T)``, taking [0, inf) into [0, T)."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("stretched time must be nonnegative")
    out = tau * T / (tau + T)
    return float(out) if out.ndim == 0 else out


def fast_forward_bm(bm: NoisePath, T: float) -> AsymptoticPath:
    """Brownian motion on the stretched clock, built pathwise.

    Left-point discretization of ``sum_j T/(T - t_j) * dB_j`` evaluated
    at ``tau_k = tau_of_t(t_k)``; standard Brownian in law on the
    stretched clock.
    """
    if bm.kind != KIND_BROWNIAN:
        raise DomainError(f"expected a brownian path, got kind {bm.kind!r}")
    if bm.grid.horizon != T:
        raise DomainError(
            f"horizon mismatch: path has {bm.grid.horizon!r}, requested {T!r}"
        )
    if bm.grid.has_sentinel:
        raise DomainError("fast-forwarding needs a grid strictly below the horizon")
    t = bm.grid.times
    weighted = np.diff(bm.values) / (T - t[:-1])
    partial = np.concatenate([[0.0], np.cumsum(weighted)])
    return AsymptoticPath(tau_of_t(t, T), T * partial)


def asymptotic_information(
    terminal_level: int,
    path: AsymptoticPath,
    sigma: float,
    system: QuantumSystem,
) -> AsymptoticPath:
    """Attach the drifted signal ``sigma*tau*E_terminal + bm`` to a path."""
    energy = system.spectrum.distinct_energies[terminal_level]
    eta = (sigma * path.tau_grid) * energy + path.bm_values
    return AsymptoticPath(path.tau_grid, path.bm_values, eta)


def asymptotic_probabilities(
    eta, tau, system: QuantumSystem, sigma: float
) -> np.ndarray:
    """Reduction probabilities of the asymptotic model at ``(eta, tau)``.

    Log-domain softmax of ``log pi_i + sigma*E_i*eta - sigma^2*E_i^2*tau/2``;
    zero-weight levels stay exactly zero.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("stretched time must be nonnegative")
    eta = np.asarray(eta, dtype=float)
    energies = system.spectrum.distinct_energies
    exponents = (
        sigma * eta[..., np.newaxis] * energies
        - 0.5 * sigma**2 * tau[..., np.newaxis] * energies**2
    )
    with np.errstate(divide="ignore"):
        log_pi = np.where(system.born_weights > 0, np.log(system.born_weights), -np.inf)
    logw = log_pi + exponents
    logw -= logw.max(axis=-1, keepdims=True)
    p = np.exp(logw)
    p /= p.sum(axis=-1, keepdims=True)
    return p


@dataclass
class EquivalenceReport:
    """Worst-case discrepancies between the finite-horizon and
    asymptotic descriptions of one path."""

    max_eta_gap: float
    max_prob_gap: float
    grid_meta: dict

    def to_dict(self) -> dict:
        return {
            "max_eta_gap": self.max_eta_gap,
            "max_prob_gap": self.max_prob_gap,
            "grid_meta": dict(self.grid_meta),
        }


def equivalence_check(
    info: InformationPath, system: QuantumSystem, schedule: ReductionSchedule
) -> EquivalenceReport:
    """Compare the two constructions of the asymptotic signal on one path.

    Route (a) rescales the finite-horizon signal by ``T/(T-t)``; route
    (b) drifts the fast-forwarded Brownian motion. Both use the same
    discrete increment sums, so the signal gap is pure floating-point
    noise. The probability gap compares the finite-horizon conditional
    law against the asymptotic law evaluated at the rescaled signal,
    relative levelwise.
    """
    if info.source_bm is None:
        raise UnsupportedInputError(
            "equivalence check needs a pathwise Brownian source; "
            "build the bridge with bridge_from_bm"
        )
    if info.grid.has_sentinel:
        raise DomainError("equivalence check runs strictly below the horizon")
    T = schedule.horizon
    sigma = schedule.volatility
    t = info.grid.times
    stretch = T / (T - t)
    tau = stretch * t
    eta_a = stretch * info.values

    forwarded = fast_forward_bm(info.source_bm, T)
    asym = asymptotic_information(info.terminal_level, forwarded, sigma, system)
    max_eta_gap = float(np.max(np.abs(eta_a - asym.eta_values)))

    p_finite = conditional_probabilities(info.values, t, system, schedule)
    p_asym = asymptotic_probabilities(eta_a, tau, system, sigma)
    scale = np.maximum(p_finite, p_asym)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, np.abs(p_finite - p_asym) / scale, 0.0)
    max_prob_gap = float(rel.max())

    meta = {
        "n_steps": info.grid.n_times - 1,
        "scheme": info.grid.scheme,
        "epsilon_fraction": info.grid.epsilon_fraction,
        "horizon": T,
    }
    return EquivalenceReport(max_eta_gap, max_prob_gap, meta)
