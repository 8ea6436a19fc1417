"""Numerical checks of the law of the iterated logarithm for additive
functionals of exponentially mixing Markov processes (Ornstein-Uhlenbeck and
finite-state continuous-time chains)."""

from .corrector import OuCorrector, corrector_ctmc, corrector_quadrature, sigma_pairing
from .errors import DegenerateVarianceError, KindMismatchError, LilLabError, ValidationError
from .functionals import (
    additive_functional,
    exact_second_moment_ctmc,
    heyde_scott_diagnostics,
    martingale_decompose,
    martingale_property_test,
    simulate_path,
    simulate_paths,
)
from .lil import clt_proxy, discretization_gap, lil_envelope, sigma_triple
from .models import CtmcModel, OuModel, invariant_measure, load_model, two_state_chain
from .report import TOOL_VERSION as __version__
from .space import (
    DiscreteMeasure,
    EmpiricalMeasure,
    GaussianMeasure,
    LyapunovConfig,
    Metric,
    Observable,
    StatePoint,
    center_observable,
    eval_observable,
    moment,
)

__all__ = [
    "CtmcModel",
    "DegenerateVarianceError",
    "DiscreteMeasure",
    "EmpiricalMeasure",
    "GaussianMeasure",
    "KindMismatchError",
    "LilLabError",
    "LyapunovConfig",
    "Metric",
    "Observable",
    "OuCorrector",
    "OuModel",
    "StatePoint",
    "ValidationError",
    "additive_functional",
    "center_observable",
    "clt_proxy",
    "corrector_ctmc",
    "corrector_quadrature",
    "discretization_gap",
    "eval_observable",
    "exact_second_moment_ctmc",
    "heyde_scott_diagnostics",
    "invariant_measure",
    "lil_envelope",
    "load_model",
    "martingale_decompose",
    "martingale_property_test",
    "moment",
    "sigma_pairing",
    "sigma_triple",
    "simulate_path",
    "simulate_paths",
    "two_state_chain",
    "__version__",
]
