"""Convergence-rate certificates for gradient descent with relative gradient errors.

Frequency-domain (circle and Jury-Lee type) certificates, their time-domain
dissipation counterparts, and a simulation harness that checks them against
adversarial runs.
"""

from ._kernels import BACKEND_NAME
from .freqcert import Certificate, CertificateKind, certify, certify_at, certify_strongly_convex, rho_star_sector
from .rates import FunctionClass, ProblemSpec, RateRegime, RegimeKind, classify_regime, rho_gd, rho_gd_noisy

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "Certificate",
    "CertificateKind",
    "FunctionClass",
    "ProblemSpec",
    "RateRegime",
    "RegimeKind",
    "certify",
    "certify_at",
    "certify_strongly_convex",
    "classify_regime",
    "rho_gd",
    "rho_gd_noisy",
    "rho_star_sector",
]
