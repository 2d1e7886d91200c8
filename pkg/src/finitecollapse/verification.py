"""Verification suites: the model's theorems as pass/fail checks.

Statistical checks use fixed four-standard-error bands (per-test false
failure probability below 1e-4); identity checks use machine-precision
tolerances; discretization checks use thresholds frozen from a pilot
convergence study. All suites are deterministic given a master seed.

Every result is reported as a worst-case margin: the statistic is the
largest observed excess over the allowed band, and the test passes when
it is at or below zero (identity and discretization checks instead
report the raw gap against its tolerance). A small absolute floor is
added to standard-error bands so that degenerate probes with zero
sampling error (e.g. the initial time) admit pure float roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import ROUTE_EXACT, EnsembleSummary, _draw_chunk_normals, run_ensemble
from .errors import ConfigurationError, UnsupportedInputError
from .exact import (
    ReductionSchedule,
    bayes_probabilities,
    conditional_probabilities,
    reconstruct_values,
    simulate_exact_path,
    terminal_from_uniform,
)
from .paths import (
    KIND_BROWNIAN,
    UNIFORM_T,
    NoisePath,
    SeedSpec,
    bridge_exact_from_normals,
    make_grid,
)
from .sde import integral_form_state, integrate_batch
from .system import QuantumSystem, build_system
from .timechange import equivalence_check

SE_FLOOR = 1e-12


@dataclass
class TestResult:
    name: str
    statistic: float
    threshold: float
    passed: bool
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "verdict": "pass" if self.passed else "fail",
            "metadata": self.metadata,
        }


@dataclass
class TestReport:
    results: list[TestResult]

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {
            "all_passed": self.all_passed,
            "results": [r.to_dict() for r in self.results],
        }


def _margin_result(name: str, margin: float, metadata: dict) -> TestResult:
    return TestResult(name, float(margin), 0.0, bool(margin <= 0.0), metadata)


def born_test(summary: EnsembleSummary, system: QuantumSystem) -> TestResult:
    """Terminal frequencies against the initial projection weights,
    within four binomial standard errors per positive-weight level."""
    pi = system.born_weights
    freq = summary.terminal_frequencies
    mask = pi > 0
    band = 4.0 * np.sqrt(pi[mask] * (1.0 - pi[mask]) / summary.n_paths)
    margin = np.max(np.abs(freq[mask] - pi[mask]) - band)
    meta = {
        "frequencies": freq.tolist(),
        "weights": pi.tolist(),
        "zero_weight_hits": int(summary.terminal_counts[~mask].sum()),
    }
    return _margin_result("born-law", margin, meta)


def martingale_test(summary: EnsembleSummary) -> list[TestResult]:
    """No drift in the mean energy or in any mean level weight."""
    dev_H = np.abs(summary.mean_H - summary.mean_H[0])
    margin_H = np.max(dev_H - (4.0 * summary.se_H + SE_FLOOR))
    worst_H = int(np.argmax(dev_H - 4.0 * summary.se_H))
    energy = _margin_result(
        "energy-martingale",
        margin_H,
        {"worst_time": float(summary.grid.times[worst_H]), "reference": float(summary.mean_H[0])},
    )

    dev_pi = np.abs(summary.mean_pi - summary.mean_pi[0])
    margin_pi = np.max(dev_pi - (4.0 * summary.se_pi + SE_FLOOR))
    probability = _margin_result(
        "probability-martingale",
        margin_pi,
        {"reference": summary.mean_pi[0].tolist()},
    )
    return [energy, probability]


def variance_decay_test(summary: EnsembleSummary) -> TestResult:
    """Mean energy variance stays below its initial value, decreases
    between consecutive probe times up to sampling error, and (when the
    initial variance is positive) is strictly lower late than at the
    midpoint."""
    V0 = summary.initial_variance
    ceiling = np.max(summary.mean_V - (V0 + 4.0 * summary.se_V + SE_FLOOR))
    rise = np.diff(summary.mean_V) - (
        4.0 * np.sqrt(summary.se_V[1:] ** 2 + summary.se_V[:-1] ** 2) + SE_FLOOR
    )
    margin = max(float(ceiling), float(np.max(rise)))

    meta = {"initial_variance": V0, "sentinel_variance": 0.0}
    if V0 > 0:
        t_max = summary.grid.t_max
        i_mid = int(np.argmin(np.abs(summary.grid.times - 0.5 * t_max)))
        i_late = int(np.argmin(np.abs(summary.grid.times - 0.999 * t_max)))
        strict = float(summary.mean_V[i_late] - summary.mean_V[i_mid])
        meta["late_vs_mid"] = strict
        meta["late_time"] = float(summary.grid.times[i_late])
        meta["mid_time"] = float(summary.grid.times[i_mid])
        margin = max(margin, strict)
    return _margin_result("variance-decay", margin, meta)


def independence_test(summary: EnsembleSummary) -> TestResult:
    """Zero covariance between the de-drifted signal and the terminal
    energy at every probe time, plus the bridge-variance profile."""
    if summary.probe_bridge is None or summary.terminal_energies is None:
        raise UnsupportedInputError("independence test needs exact-route probe samples")
    T = summary.grid.horizon
    n = summary.n_paths
    margins = []
    covs = []
    for j, t in enumerate(summary.probe_times):
        x = summary.probe_bridge[:, j]
        y = summary.terminal_energies
        products = (x - x.mean()) * (y - y.mean())
        cov = float(products.mean())
        se = float(products.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        margins.append(abs(cov) - (4.0 * se + SE_FLOOR))
        covs.append(cov)

        ref = t * (T - t) / T
        margins.append(abs(float(x.var(ddof=1)) - ref) - 0.05 * ref)
    meta = {"probe_times": summary.probe_times.tolist(), "covariances": covs}
    return _margin_result("independence", max(margins), meta)


def _random_system(rng: np.random.Generator) -> QuantumSystem:
    n = int(rng.integers(2, 5))
    energies = np.sort(rng.uniform(-2.0, 2.0, n))
    amplitudes = rng.normal(size=n) + 1j * rng.normal(size=n)
    return build_system(energies, amplitudes)


def bayes_equality_test(
    system: QuantumSystem,
    schedule: ReductionSchedule,
    n_samples: int = 1000,
    master_seed: int = 0,
    tolerance: float = 1e-12,
) -> TestResult:
    """Log-domain conditional law against the explicit Gaussian-density
    evaluation, on random signal/time/system triples.

    Times are kept inside (0.05 T, 0.95 T) so the literal density route
    stays within double range; the log-domain route has no such limit.
    """
    rng = np.random.default_rng(master_seed)
    T, sig = schedule.horizon, schedule.volatility
    worst = 0.0
    for i in range(n_samples):
        sys_i = system if i % 4 == 0 else _random_system(rng)
        t = float(rng.uniform(0.05, 0.95) * T)
        level = terminal_from_uniform(rng.random(), sys_i.born_weights)
        energy = sys_i.spectrum.distinct_energies[level]
        xi = sig * t * energy + rng.normal(0.0, np.sqrt(t * (T - t) / T))
        p_log = conditional_probabilities(xi, t, sys_i, schedule)
        p_density = bayes_probabilities(xi, t, sys_i, schedule)
        scale = np.maximum(p_log, p_density)
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(scale > 0, np.abs(p_log - p_density) / scale, 0.0)
        worst = max(worst, float(rel.max()))
    meta = {"n_samples": n_samples}
    return TestResult("bayes-equality", worst, tolerance, worst <= tolerance, meta)


@dataclass
class ConvergenceResult:
    """Pathwise route-consistency study on nested grids.

    The exact route is evaluated on the finest grid, its driving noise
    reconstructed there, and the step-by-step route rerun on each
    coarsening of the same noise. ``rms_gaps`` holds the RMS terminal
    energy gap per step count; the norm diagnostics come from rerunning
    without per-step renormalization.
    """

    step_counts: tuple
    rms_gaps: list
    gap_ratios: list
    classification_agreement: list
    renorm_max_dev: float
    raw_drift_per_step: list
    raw_signed_drift_per_step: list
    n_paths: int
    scheme: str
    epsilon_fraction: float

    def to_dict(self) -> dict:
        return {
            "step_counts": list(self.step_counts),
            "rms_gaps": self.rms_gaps,
            "gap_ratios": self.gap_ratios,
            "classification_agreement": self.classification_agreement,
            "renorm_max_dev": self.renorm_max_dev,
            "raw_drift_per_step": self.raw_drift_per_step,
            "raw_signed_drift_per_step": self.raw_signed_drift_per_step,
            "n_paths": self.n_paths,
            "scheme": self.scheme,
            "epsilon_fraction": self.epsilon_fraction,
        }


def convergence_study(
    system: QuantumSystem,
    schedule: ReductionSchedule,
    step_counts,
    n_paths: int,
    master_seed: int,
    scheme: str = UNIFORM_T,
    epsilon_fraction: float = 1e-3,
) -> ConvergenceResult:
    """Shared-randomness comparison of the two routes over grid refinements."""
    step_counts = tuple(int(s) for s in step_counts)
    for a, b in zip(step_counts[:-1], step_counts[1:]):
        if b <= a or b % a != 0:
            raise ConfigurationError(
                f"step counts must be an increasing refinement chain, got {step_counts}"
            )
    fine = make_grid(schedule.horizon, step_counts[-1], scheme, epsilon_fraction)
    times = fine.times
    level_of = system.spectrum.level_of_basis
    level_mat = (level_of[:, np.newaxis] == np.arange(system.n_levels)).astype(float)

    chunk = max(1, min(256, 2_000_000 // fine.n_times))
    sum_sq = np.zeros(len(step_counts))
    agree = np.zeros(len(step_counts), dtype=np.int64)
    renorm_dev = 0.0
    drift_sum = np.zeros(len(step_counts))
    signed_sum = np.zeros(len(step_counts))

    for start in range(0, n_paths, chunk):
        stop = min(start + chunk, n_paths)
        uniforms, normals = _draw_chunk_normals(
            master_seed, start, stop, fine.n_times - 1
        )
        levels = terminal_from_uniform(uniforms, system.born_weights)
        beta = bridge_exact_from_normals(fine, schedule.horizon, normals)
        energies = system.spectrum.distinct_energies[levels]
        xi = (schedule.volatility * times) * energies[:, np.newaxis] + beta
        probs = conditional_probabilities(xi, times, system, schedule)
        H_exact = probs @ system.spectrum.distinct_energies
        noise = reconstruct_values(xi, H_exact, times, schedule)

        for j, n_c in enumerate(step_counts):
            stride = step_counts[-1] // n_c
            grid_c = fine if stride == 1 else fine.restrict(n_c)
            dW = np.diff(noise[:, ::stride], axis=1)
            ren = integrate_batch(
                system, schedule, grid_c, dW, store_probabilities=False
            )
            gap = ren["H"][:, -1] - H_exact[:, -1]
            sum_sq[j] += float(gap @ gap)
            weights = np.abs(ren["amps_final"]) ** 2 @ level_mat
            agree[j] += int(np.sum(np.argmax(weights, axis=-1) == levels))
            renorm_dev = max(renorm_dev, float(np.max(np.abs(ren["norm"] - 1.0))))

            raw = integrate_batch(
                system,
                schedule,
                grid_c,
                dW,
                renormalize=False,
                store_probabilities=False,
            )
            dnorm = np.diff(raw["norm"], axis=1)
            drift_sum[j] += float(np.abs(dnorm).mean(axis=1).sum())
            dnorm_sq = np.diff(raw["norm"] ** 2, axis=1)
            signed_sum[j] += float(dnorm_sq.mean(axis=1).sum())

    rms = np.sqrt(sum_sq / n_paths)
    ratios = [float(rms[i] / rms[i + 1]) if rms[i + 1] > 0 else float("inf")
              for i in range(len(rms) - 1)]
    return ConvergenceResult(
        step_counts=step_counts,
        rms_gaps=rms.tolist(),
        gap_ratios=ratios,
        classification_agreement=(agree / n_paths).tolist(),
        renorm_max_dev=renorm_dev,
        raw_drift_per_step=(drift_sum / n_paths).tolist(),
        raw_signed_drift_per_step=(signed_sum / n_paths).tolist(),
        n_paths=n_paths,
        scheme=scheme,
        epsilon_fraction=epsilon_fraction,
    )


def convergence_test(study: ConvergenceResult, max_final_gap: float = 1e-2) -> TestResult:
    """Strictly decreasing RMS terminal-energy gaps with the finest gap
    under the frozen bound; decrement ratios are recorded, not asserted."""
    gaps = study.rms_gaps
    decreasing = all(b < a for a, b in zip(gaps[:-1], gaps[1:]))
    finest = gaps[-1]
    passed = decreasing and finest <= max_final_gap
    return TestResult(
        "route-convergence", float(finest), max_final_gap, passed, study.to_dict()
    )


def norm_preservation_test(study: ConvergenceResult, tolerance: float = 1e-12) -> TestResult:
    """Renormalized integration keeps unit norm to machine precision and
    the raw-mode per-step norm drift shrinks monotonically with dt."""
    drifts = study.raw_drift_per_step
    monotone = all(b < a for a, b in zip(drifts[:-1], drifts[1:]))
    passed = study.renorm_max_dev <= tolerance and monotone
    meta = {"raw_drift_per_step": drifts, "monotone": monotone}
    return TestResult("norm-preservation", study.renorm_max_dev, tolerance, passed, meta)


def integral_form_test(
    system: QuantumSystem,
    schedule: ReductionSchedule,
    n_steps: int,
    n_paths: int,
    master_seed: int,
    tolerance: float = 1e-2,
    scheme: str = UNIFORM_T,
    epsilon_fraction: float = 1e-3,
) -> TestResult:
    """Integral-form terminal state against step-by-step integration on
    matched noise; reports the worst per-component amplitude gap."""
    grid = make_grid(schedule.horizon, n_steps, scheme, epsilon_fraction)
    chunk = max(1, min(256, 2_000_000 // grid.n_times))
    worst = 0.0
    for start in range(0, n_paths, chunk):
        stop = min(start + chunk, n_paths)
        normals = _draw_chunk_normals(master_seed, start, stop, grid.n_times - 1)[1]
        dW = normals * np.sqrt(grid.steps)
        res = integrate_batch(system, schedule, grid, dW, store_probabilities=False)
        for i in range(stop - start):
            w_values = np.concatenate([[0.0], np.cumsum(dW[i])])
            noise = NoisePath(grid, w_values, KIND_BROWNIAN)
            amps_if = integral_form_state(noise, res["H"][i], system, schedule)
            gap = float(np.max(np.abs(amps_if - res["amps_final"][i])))
            worst = max(worst, gap)
    meta = {"n_steps": n_steps, "n_paths": n_paths}
    return TestResult("integral-form", worst, tolerance, worst <= tolerance, meta)


def equivalence_test(
    system: QuantumSystem,
    schedule: ReductionSchedule,
    n_steps: int,
    n_paths: int,
    master_seed: int,
    eta_tolerance: float = 1e-10,
    prob_tolerance: float = 1e-12,
    scheme: str = UNIFORM_T,
    epsilon_fraction: float = 1e-3,
) -> list[TestResult]:
    """Time-change identity over an ensemble of pathwise-linked paths."""
    grid = make_grid(schedule.horizon, n_steps, scheme, epsilon_fraction)
    max_eta = 0.0
    max_prob = 0.0
    for i in range(n_paths):
        info, _ = simulate_exact_path(
            system, schedule, grid, SeedSpec(master_seed, i), use_bm_bridge=True
        )
        report = equivalence_check(info, system, schedule)
        max_eta = max(max_eta, report.max_eta_gap)
        max_prob = max(max_prob, report.max_prob_gap)
    meta = {"n_steps": n_steps, "n_paths": n_paths}
    return [
        TestResult(
            "timechange-signal-identity", max_eta, eta_tolerance,
            max_eta <= eta_tolerance, meta,
        ),
        TestResult(
            "timechange-probability-identity", max_prob, prob_tolerance,
            max_prob <= prob_tolerance, meta,
        ),
    ]


@dataclass
class VerificationOptions:
    """Knobs for the full verification run; defaults are desk scale."""

    ensemble_steps: int = 200
    ensemble_paths: int = 10_000
    independence_steps: int = 100
    independence_paths: int = 100_000
    bayes_samples: int = 1000
    convergence_step_counts: tuple = (1024, 4096, 16384)
    convergence_paths: int = 100
    convergence_max_gap: float = 1e-2
    integral_form_tolerance: float = 1e-2
    equivalence_steps: int = 1024
    equivalence_paths: int = 100
    scheme: str = UNIFORM_T
    epsilon_fraction: float = 1e-3
    n_workers: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "VerificationOptions":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(
                f"verification: unknown option(s) {sorted(unknown)}"
            )
        opts = cls(**data)
        if opts.ensemble_steps < 100:
            raise ConfigurationError(
                "verification.ensemble_steps: need >= 100 probe times"
            )
        return opts


def run_verification(
    system: QuantumSystem,
    schedule: ReductionSchedule,
    master_seed: int,
    options: VerificationOptions | None = None,
) -> TestReport:
    """Run every suite and collect a report.

    Ensemble-based suites run on the exact route (the claims under test
    are the model's own laws); the convergence and integral-form suites
    exercise the step-by-step route against it. Each suite draws from
    its own seed offset so no random stream is reused across suites.
    """
    opts = options or VerificationOptions()
    results: list[TestResult] = []

    grid = make_grid(
        schedule.horizon, opts.ensemble_steps, opts.scheme, opts.epsilon_fraction
    )
    summary = run_ensemble(
        system,
        schedule,
        grid,
        opts.ensemble_paths,
        master_seed,
        route=ROUTE_EXACT,
        n_workers=opts.n_workers,
    )
    results.append(born_test(summary, system))
    results.extend(martingale_test(summary))
    results.append(variance_decay_test(summary))

    indep_grid = make_grid(
        schedule.horizon, opts.independence_steps, opts.scheme, opts.epsilon_fraction
    )
    indep = run_ensemble(
        system,
        schedule,
        indep_grid,
        opts.independence_paths,
        (master_seed + 1) % 2**64,
        route=ROUTE_EXACT,
        n_workers=opts.n_workers,
    )
    results.append(independence_test(indep))

    results.append(
        bayes_equality_test(
            system, schedule, opts.bayes_samples, (master_seed + 2) % 2**64
        )
    )

    study = convergence_study(
        system,
        schedule,
        opts.convergence_step_counts,
        opts.convergence_paths,
        (master_seed + 3) % 2**64,
        scheme=opts.scheme,
        epsilon_fraction=opts.epsilon_fraction,
    )
    results.append(convergence_test(study, opts.convergence_max_gap))
    results.append(norm_preservation_test(study))

    results.append(
        integral_form_test(
            system,
            schedule,
            opts.convergence_step_counts[-1],
            opts.convergence_paths,
            (master_seed + 4) % 2**64,
            tolerance=opts.integral_form_tolerance,
            scheme=opts.scheme,
            epsilon_fraction=opts.epsilon_fraction,
        )
    )
    results.extend(
        equivalence_test(
            system,
            schedule,
            opts.equivalence_steps,
            opts.equivalence_paths,
            (master_seed + 5) % 2**64,
            scheme=opts.scheme,
            epsilon_fraction=opts.epsilon_fraction,
        )
    )
    return TestReport(results)
