"""fracsep: certify separable solutions of coupled time-fractional
diffusion-convection-wave systems.

Layers, bottom up: specfun (Gamma / Mittag-Leffler), fracderiv (Caputo
calculus and singular convolution), basis (spatial function algebra),
operators (the cubic coupled operator), subspaces (invariant product-space
corpus and verifier), reduction (reduced fractional ODE systems, closed
forms, oracles, residual checks) and cli (batch entry point).
"""

from .errors import (
    CapabilityError,
    ConditioningError,
    DomainError,
    FracsepError,
    PrecisionError,
    RegimeError,
    StructuralError,
)
from .specfun import MLParams, gamma, ml_eval, ml_eval_batch

__all__ = [
    "CapabilityError",
    "ConditioningError",
    "DomainError",
    "FracsepError",
    "PrecisionError",
    "RegimeError",
    "StructuralError",
    "MLParams",
    "gamma",
    "ml_eval",
    "ml_eval_batch",
]

__version__ = "0.1.0"
