"""Search-based selection of composed image metamorphic relations for
testing neural classifiers.
"""

__version__ = "0.1.0"

from .data import LabeledDataset, augment, synthetic_digits
from .metrics import CoverageConfig, ObjectiveVector
from .model import MlpModel, certainty, fgsm, forward, load_model, save_model, train_toy
from .search import HomrsResult, Individual, ParetoFront, SearchConfig, SearchContext, homrs, nsga2
from .transforms import (
    DEFAULT_BOUNDS,
    HmrChain,
    TransformSpec,
    apply,
    apply_chain,
    expand_bounds,
    sample_spec,
)
from .uncertainty import CertaintyProfile, ValidityBound, is_valid, lower_bound, profile

__all__ = [
    "CertaintyProfile",
    "CoverageConfig",
    "DEFAULT_BOUNDS",
    "HmrChain",
    "HomrsResult",
    "Individual",
    "LabeledDataset",
    "MlpModel",
    "ObjectiveVector",
    "ParetoFront",
    "SearchConfig",
    "SearchContext",
    "TransformSpec",
    "ValidityBound",
    "apply",
    "apply_chain",
    "augment",
    "certainty",
    "expand_bounds",
    "fgsm",
    "forward",
    "homrs",
    "is_valid",
    "load_model",
    "lower_bound",
    "nsga2",
    "profile",
    "sample_spec",
    "save_model",
    "synthetic_digits",
    "train_toy",
]
