from .certify import (
    CesaroReport,
    ErgodicityReport,
    LipschitzReport,
    MixingCertificate,
    MomentReport,
    certify_contraction,
    certify_ergodicity,
    certify_moments,
    cesaro_convergence,
    estimate_contraction_rate,
    lipschitz_propagation_check,
    lyapunov_check,
    ou_lyapunov_constants,
)
from .distance import SinkhornResult, sinkhorn_w1, transport_plan, w1_discrete, w1_empirical_1d

__all__ = [
    "CesaroReport",
    "ErgodicityReport",
    "LipschitzReport",
    "MixingCertificate",
    "MomentReport",
    "SinkhornResult",
    "certify_contraction",
    "certify_ergodicity",
    "certify_moments",
    "cesaro_convergence",
    "estimate_contraction_rate",
    "lipschitz_propagation_check",
    "lyapunov_check",
    "ou_lyapunov_constants",
    "sinkhorn_w1",
    "transport_plan",
    "w1_discrete",
    "w1_empirical_1d",
]
