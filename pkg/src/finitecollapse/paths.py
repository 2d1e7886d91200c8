"""Time grids and reproducible random path generation.

Grids discretize ``[0, T)`` and stop at ``t_max = T * (1 - epsilon)``
because the coupling ``sigma * T / (T - t)`` diverges at the horizon;
an optional sentinel point exactly at ``T`` is carried only for
closed-form terminal evaluation, never for path sampling or
integration. Random streams are counter-based: path ``k`` of master
seed ``s`` always produces the same draws, regardless of how many
other paths run or in what order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

UNIFORM_T = "uniform-in-t"
UNIFORM_TAU = "uniform-in-tau"

KIND_BROWNIAN = "brownian"
KIND_BRIDGE = "bridge"
KIND_RECONSTRUCTED = "reconstructed"
KIND_DRIFTED = "drifted"


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing times starting at 0, all below the horizon
    except an optional final sentinel exactly at the horizon."""

    horizon: float
    times: np.ndarray
    scheme: str = UNIFORM_T
    epsilon_fraction: float = 0.0

    def __post_init__(self):
        t = self.times
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("grid times must start at 0 and strictly increase")
        if t[-1] > self.horizon or np.any(t[:-1] >= self.horizon):
            raise ConfigurationError("grid times must stay below the horizon")

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def has_sentinel(self) -> bool:
        return bool(self.times[-1] == self.horizon)

    @property
    def t_max(self) -> float:
        """Largest grid time strictly below the horizon."""
        return float(self.times[-2] if self.has_sentinel else self.times[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    def with_sentinel(self) -> "TimeGrid":
        """Copy of the grid with the horizon appended as a final point."""
        if self.has_sentinel:
            return self
        times = np.append(self.times, self.horizon)
        return TimeGrid(self.horizon, times, self.scheme, self.epsilon_fraction)

    def restrict(self, n_steps: int) -> "TimeGrid":
        """Nested coarsening to ``n_steps`` steps (must divide the step count)."""
        if self.has_sentinel:
            raise ConfigurationError("cannot restrict a grid carrying a sentinel")
        fine = self.n_times - 1
        if n_steps < 1 or fine % n_steps != 0:
            raise ConfigurationError(
                f"{n_steps} steps is not a nested coarsening of {fine} steps"
            )
        stride = fine // n_steps
        return TimeGrid(
            self.horizon, self.times[::stride].copy(), self.scheme, self.epsilon_fraction
        )


@dataclass(frozen=True)
class SeedSpec:
    """Addresses one independent random stream per (master_seed, path_index)."""

    master_seed: int
    path_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ConfigurationError("master_seed must fit in 64 bits")
        if self.path_index < 0:
            raise ConfigurationError("path_index must be nonnegative")

    def generator(self) -> np.random.Generator:
        # Philox counter blocks of 2**128 draws keep per-path streams
        # disjoint without any spawn bookkeeping.
        bitgen = np.random.Philox(key=self.master_seed, counter=self.path_index << 128)
        return np.random.Generator(bitgen)


@dataclass
class NoisePath:
    """A sampled scalar path on a grid; ``values[0]`` is always 0.

    ``kind`` tags the law (brownian, bridge, reconstructed, drifted);
    ``source`` optionally keeps the Brownian path a bridge was built
    from, preserving the pathwise link needed by time-change identity
    checks.
    """

    grid: TimeGrid
    values: np.ndarray
    kind: str
    source: "NoisePath | None" = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.values) != self.grid.n_times:
            raise DomainError("values length does not match grid")
        if self.values[0] != 0.0:
            raise DomainError("paths start at 0")


def make_grid(
    T: float,
    n_steps: int,
    scheme: str = UNIFORM_T,
    epsilon_fraction: float = 1e-3,
) -> TimeGrid:
    """Build a grid of ``n_steps`` steps on ``[0, T*(1-epsilon_fraction)]``.

    ``uniform-in-t`` spaces points evenly in clock time; ``uniform-in-tau``
    spaces them evenly in the stretched clock ``tau = t*T/(T-t)`` and maps
    back, clustering points near the horizon where the dynamics is fast.
    """
    if T <= 0:
        raise ConfigurationError(f"horizon must be positive, got {T!r}")
    if n_steps < 2:
        raise ConfigurationError(f"need at least 2 steps, got {n_steps!r}")
    if not 0.0 < epsilon_fraction < 1.0:
        raise ConfigurationError(
            f"epsilon_fraction must lie in (0, 1), got {epsilon_fraction!r}"
        )
    t_max = T * (1.0 - epsilon_fraction)
    if scheme == UNIFORM_T:
        times = np.linspace(0.0, t_max, n_steps + 1)
    elif scheme == UNIFORM_TAU:
        tau_max = t_max * T / (T - t_max)
        tau = np.linspace(0.0, tau_max, n_steps + 1)
        times = tau * T / (tau + T)
    else:
        raise ConfigurationError(f"unknown grid scheme {scheme!r}")
    times[0] = 0.0
    return TimeGrid(T, times, scheme, epsilon_fraction)


def sample_brownian(grid: TimeGrid, seed: SeedSpec) -> NoisePath:
    """Standard Brownian motion at the grid times."""
    gen = seed.generator()
    return brownian_from_normals(grid, gen.standard_normal(grid.n_times - 1))


def brownian_from_normals(grid: TimeGrid, normals: np.ndarray) -> NoisePath:
    """Brownian path from pre-drawn unit normals (one per grid step)."""
    increments = np.sqrt(grid.steps) * normals
    values = np.concatenate([[0.0], np.cumsum(increments)])
    return NoisePath(grid, values, KIND_BROWNIAN)


def bridge_from_bm(bm: NoisePath, T: float) -> NoisePath:
    """Bridge pinned to 0 at ``T``, built pathwise from a Brownian motion.

    Uses the left-point discretization of the integral representation
    ``beta_t = (T - t) * sum_{j<k} dB_j / (T - t_j)``, which keeps the
    pathwise link to ``bm`` (stored as ``source``).
    """
    if bm.kind != KIND_BROWNIAN:
        raise DomainError(f"expected a brownian path, got kind {bm.kind!r}")
    if bm.grid.horizon != T:
        raise DomainError(
            f"horizon mismatch: path has {bm.grid.horizon!r}, requested {T!r}"
        )
    t = bm.grid.times
    weighted = np.diff(bm.values) / (T - t[:-1])
    partial = np.concatenate([[0.0], np.cumsum(weighted)])
    return NoisePath(bm.grid, (T - t) * partial, KIND_BRIDGE, source=bm)


def bridge_exact_from_normals(grid: TimeGrid, T: float, normals: np.ndarray) -> np.ndarray:
    """Bridge values from pre-drawn unit normals via exact conditional
    transitions; ``normals`` may carry leading batch dimensions
    ``(..., n_steps)`` and the result is ``(..., n_times)``."""
    t = grid.times
    out = np.zeros(normals.shape[:-1] + (grid.n_times,))
    for k in range(grid.n_times - 1):
        remain_next = T - t[k + 1]
        remain = T - t[k]
        mean = out[..., k] * (remain_next / remain)
        std = np.sqrt((t[k + 1] - t[k]) * remain_next / remain)
        out[..., k + 1] = mean + std * normals[..., k]
    return out


def sample_bridge_exact(grid: TimeGrid, T: float, seed: SeedSpec) -> NoisePath:
    """Bridge pinned to 0 at ``T``, exact in law at the grid points."""
    if grid.horizon != T:
        raise DomainError(f"horizon mismatch: grid has {grid.horizon!r}, requested {T!r}")
    gen = seed.generator()
    values = bridge_exact_from_normals(grid, T, gen.standard_normal(grid.n_times - 1))
    return NoisePath(grid, values, KIND_BRIDGE)
