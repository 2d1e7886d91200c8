"""Simulation and verification of finite-time energy-based stochastic
state reduction.

Two solution routes are provided for the same dynamics: a closed-form
route driven by a sampled terminal level and an independent Brownian
bridge (:mod:`finitecollapse.exact`) and a direct Euler-Maruyama route
(:mod:`finitecollapse.sde`). A nonlinear clock map relates the
finite-horizon model to the asymptotic collapse model
(:mod:`finitecollapse.timechange`), and the statistical/numerical
verification suites turn the model's claims into pass/fail checks
(:mod:`finitecollapse.verification`).
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DomainError,
    InvalidStateError,
    InvalidSystemError,
    SimulationError,
    UnsupportedInputError,
)
from .system import (
    EnergySpectrum,
    InitialState,
    QuantumSystem,
    born_weights,
    build_system,
    energy_moments,
    reduction_timescale,
)
from .paths import (
    NoisePath,
    SeedSpec,
    TimeGrid,
    bridge_from_bm,
    make_grid,
    sample_bridge_exact,
    sample_brownian,
)
from .exact import (
    InformationPath,
    ReductionPath,
    ReductionSchedule,
    bayes_probabilities,
    conditional_probabilities,
    information_process,
    moments_from_probabilities,
    reconstruct_noise,
    reduction_path,
    sample_terminal_energy,
    simulate_exact_path,
    state_vector,
    terminal_limit,
)
from .sde import (
    IntegratorConfig,
    drifted_noise,
    euler_step,
    integral_form_normalization,
    integral_form_state,
    integrate_sde,
)
from .timechange import (
    AsymptoticPath,
    EquivalenceReport,
    asymptotic_information,
    asymptotic_probabilities,
    equivalence_check,
    fast_forward_bm,
    t_of_tau,
    tau_of_t,
)
from .ensemble import EnsembleSummary, run_ensemble
from .verification import (
    ConvergenceResult,
    TestReport,
    TestResult,
    VerificationOptions,
    bayes_equality_test,
    born_test,
    convergence_study,
    convergence_test,
    equivalence_test,
    independence_test,
    integral_form_test,
    martingale_test,
    norm_preservation_test,
    run_verification,
    variance_decay_test,
)

__all__ = [name for name in dir() if not name.startswith("_")]
