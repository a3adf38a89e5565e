"""Quantum metrology toolkit: truncated Fock-space models, Fisher information,
quantum Cramer-Rao bounds and Monte-Carlo estimator studies."""

__version__ = "0.1.0"

from .fisher import (  # noqa: E402
    DivergentFisherWarning, FisherReport, RankDeficientError, classical_fi, classical_fim,
    effective_fi, extraction_efficiency, fisher_report, qfi, qfi_generator, qfi_pure, qfim,
    reparametrize, rld_fim, rld_pure_d_invariant, scalar_bounds, sld,
)
from .fock import (  # noqa: E402
    DensityOperator, FockBasis, LinearOperator, Povm, StateVector, beam_splitter,
    build_mode_operators, build_povm, coherent_state, fixed_n_state, loss_channel, noon_state,
    outcome_distribution, phase_shifter, squeezed_vacuum, two_mode_squeezed,
)
from .models import (  # noqa: E402
    DensityModel, DiscreteModel, GaussianModel, OutcomeSample, ParamPoint, UnitaryModel,
    error_propagation, sample, state_at, state_derivative,
)
from .estimation import (  # noqa: E402
    BayesianPhaseEstimator, MaxLikelihoodEstimator, bayes_estimate, biased_crb_check,
    bootstrap_variance, crb_diagnostic, mc_study, mle_estimate,
)
from .scenarios import ScenarioReport, run_scenario  # noqa: E402
