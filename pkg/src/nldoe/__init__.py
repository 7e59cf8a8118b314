"""Locally D-optimal exact designs for nonlinear multifactor regression models."""
from .core import (
    CandidateSet,
    Design,
    DesignRegion,
    Factor,
    Model,
    PriorTheta,
    hybrid_model,
    mechanistic_model,
    second_order_polynomial,
)
from .criterion import log_det, phi, relative_efficiency
from .errors import DomainError, EvaluationError, NldoeError, SearchError, SingularDesignError
from .expr import ExprModel
from .multiphase import ClosestDistances, cluster_quasi_replicates, multiphase
from .optim import nls_fit, nm_minimize
from .search import SearchConfig, continuous_cea, continuous_pea, discrete_cea, discrete_pea

__version__ = "0.1.0"

__all__ = [
    "CandidateSet",
    "ClosestDistances",
    "Design",
    "DesignRegion",
    "DomainError",
    "EvaluationError",
    "ExprModel",
    "Factor",
    "Model",
    "NldoeError",
    "PriorTheta",
    "SearchConfig",
    "SearchError",
    "SingularDesignError",
    "cluster_quasi_replicates",
    "continuous_cea",
    "continuous_pea",
    "discrete_cea",
    "discrete_pea",
    "hybrid_model",
    "log_det",
    "mechanistic_model",
    "multiphase",
    "nls_fit",
    "nm_minimize",
    "phi",
    "relative_efficiency",
    "second_order_polynomial",
]
