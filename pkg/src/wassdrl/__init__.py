"""Wasserstein distributionally robust learning.

Training, worst-case analysis and certification of linear, kernel and
neural-network hypotheses against Wasserstein ambiguity sets.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Dataset,
    FitResult,
    LinearHypothesis,
    LossSpec,
    SupportPolytope,
    Task,
    TransportCost,
    load_dataset,
    save_dataset,
)
from .errors import WassDRLError  # noqa: E402

__all__ = [
    "Dataset",
    "FitResult",
    "LinearHypothesis",
    "LossSpec",
    "SupportPolytope",
    "Task",
    "TransportCost",
    "WassDRLError",
    "load_dataset",
    "save_dataset",
]
