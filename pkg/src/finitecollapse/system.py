"""Finite-dimensional quantum system in the energy eigenbasis.

The collapse dynamics implemented in this package commutes with the
Hamiltonian, so the energy eigenbasis is the canonical coordinate system
and the Hamiltonian is represented purely by its eigenvalues (no matrix
is ever formed). Eigenvalues within a tolerance are merged into one
degenerate level. Each level carries:

* a projection weight ``pi_i`` (the squared modulus of the normalized
  initial state on the level's eigenspace) -- the probability that the
  state reduces to that level, and
* the normalized projection of the initial state onto the eigenspace
  (the post-reduction state for that outcome).

Units are dimensionless with hbar = 1 throughout, except for
:func:`reduction_timescale` which is pinned to MeV and seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidStateError, InvalidSystemError

# Phenomenological energy scale for which the collapse timescale is one
# second, in MeV.
COLLAPSE_ENERGY_MEV = 2.8

_NORM_TOL = 1e-12


@dataclass(frozen=True)
class EnergySpectrum:
    """Distinct energy levels and the eigenbasis indices spanning each.

    ``distinct_energies`` is strictly increasing; ``level_index_sets``
    contains, per level, the sorted eigenbasis indices of its eigenspace.
    The index sets are disjoint and jointly cover ``range(n_basis)``.
    """

    distinct_energies: np.ndarray
    level_index_sets: tuple[np.ndarray, ...]

    @property
    def n_levels(self) -> int:
        return len(self.distinct_energies)

    @property
    def n_basis(self) -> int:
        return sum(len(s) for s in self.level_index_sets)

    @property
    def level_of_basis(self) -> np.ndarray:
        """Level index of each eigenbasis index, shape ``(n_basis,)``."""
        out = np.empty(self.n_basis, dtype=np.intp)
        for level, idx in enumerate(self.level_index_sets):
            out[idx] = level
        return out

    @property
    def basis_energies(self) -> np.ndarray:
        """Level energy of each eigenbasis index, shape ``(n_basis,)``."""
        return self.distinct_energies[self.level_of_basis]


@dataclass(frozen=True)
class InitialState:
    """Normalized initial amplitudes, one complex entry per eigenbasis index."""

    amplitudes: np.ndarray

    def __post_init__(self):
        norm_sq = float(np.sum(np.abs(self.amplitudes) ** 2))
        if abs(norm_sq - 1.0) > _NORM_TOL:
            raise InvalidStateError(f"amplitudes not normalized: |psi|^2 = {norm_sq!r}")


@dataclass(frozen=True)
class QuantumSystem:
    """Spectrum, initial state, reduction weights and projected states.

    ``born_weights[i]`` is the probability of reduction to level ``i``;
    ``lueders_states[i]`` is the normalized projection of the initial
    state onto that level's eigenspace (``None`` where the weight is
    zero, since the projection is undefined there).
    """

    spectrum: EnergySpectrum
    initial: InitialState
    born_weights: np.ndarray
    lueders_states: tuple[np.ndarray | None, ...]

    @property
    def n_levels(self) -> int:
        return self.spectrum.n_levels

    @property
    def n_basis(self) -> int:
        return self.spectrum.n_basis

    @property
    def lueders_flat(self) -> np.ndarray:
        """All projected states overlaid on the full eigenbasis.

        Entry ``j`` holds the component of level ``level_of_basis[j]``'s
        projected state at basis index ``j`` (zero for zero-weight
        levels). Used to expand per-level weights into eigenbasis
        amplitudes.
        """
        flat = np.zeros(self.n_basis, dtype=complex)
        for phi, idx in zip(self.lueders_states, self.spectrum.level_index_sets):
            if phi is not None:
                flat[idx] = phi[idx]
        return flat


def _merge_levels(energies: np.ndarray, tolerance: float) -> list[np.ndarray]:
    """Group indices of ``energies`` into clusters with gaps <= tolerance."""
    order = np.argsort(energies, kind="stable")
    groups: list[list[int]] = [[order[0]]]
    for prev, cur in zip(order[:-1], order[1:]):
        if energies[cur] - energies[prev] <= tolerance:
            groups[-1].append(cur)
        else:
            groups.append([cur])
    return [np.array(sorted(g), dtype=np.intp) for g in groups]


def build_system(
    energies,
    amplitudes,
    degeneracy_tolerance: float = 1e-9,
) -> QuantumSystem:
    """Build a :class:`QuantumSystem` from raw eigenvalues and amplitudes.

    Amplitudes are normalized; eigenvalues within ``degeneracy_tolerance``
    of each other (chained) are merged into a single level whose energy
    is the mean of the merged values.

    Raises :class:`InvalidSystemError` for empty or mismatched input and
    :class:`InvalidStateError` for a zero-norm amplitude vector.
    """
    energies = np.asarray(energies, dtype=float)
    amplitudes = np.asarray(amplitudes, dtype=complex)
    if energies.ndim != 1 or energies.size == 0:
        raise InvalidSystemError("energies must be a non-empty 1-D sequence")
    if amplitudes.shape != energies.shape:
        raise InvalidSystemError(
            f"amplitudes shape {amplitudes.shape} does not match "
            f"energies shape {energies.shape}"
        )
    norm = float(np.linalg.norm(amplitudes))
    if norm == 0.0:
        raise InvalidStateError("amplitudes have zero norm")
    psi0 = amplitudes / norm

    index_sets = _merge_levels(energies, degeneracy_tolerance)
    level_energies = np.array([energies[idx].mean() for idx in index_sets])
    spectrum = EnergySpectrum(level_energies, tuple(index_sets))

    weights = np.array([float(np.sum(np.abs(psi0[idx]) ** 2)) for idx in index_sets])
    # Renormalize away the last few ulps so the simplex invariant is exact
    # to 1e-12 regardless of input conditioning.
    weights = weights / weights.sum()

    lueders: list[np.ndarray | None] = []
    for idx, w in zip(index_sets, weights):
        if w > 0.0:
            phi = np.zeros_like(psi0)
            phi[idx] = psi0[idx]
            phi = phi / np.linalg.norm(phi)
            lueders.append(phi)
        else:
            lueders.append(None)

    return QuantumSystem(spectrum, InitialState(psi0), weights, tuple(lueders))


def born_weights(system: QuantumSystem) -> np.ndarray:
    """Reduction probability per level (squared projections of the initial state)."""
    return system.born_weights.copy()


def energy_moments(system: QuantumSystem) -> tuple[float, float]:
    """Mean and variance of the energy in the initial state."""
    pi = system.born_weights
    energies = system.spectrum.distinct_energies
    mean = float(pi @ energies)
    var = float(pi @ (energies - mean) ** 2)
    return mean, max(var, 0.0)


def reduction_timescale(delta_h_mev: float) -> float:
    """Characteristic reduction time, in seconds, for an initial energy
    uncertainty ``delta_h_mev`` given in MeV.

    Follows the phenomenological inverse-square law pinned so that an
    uncertainty of 2.8 MeV reduces in one second.
    """
    if delta_h_mev <= 0:
        raise DomainError(f"energy uncertainty must be positive, got {delta_h_mev!r}")
    return (COLLAPSE_ENERGY_MEV / delta_h_mev) ** 2
