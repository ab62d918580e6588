"""Rate-distortion-cost regions for cascade source coding with a side-information vending machine."""

from .prob import CondKernel, FiniteAlphabet, JointPmf, compose, entropy, is_markov, marginalize, mutual_information
from .models import (
    BroadcastCRModel,
    CascadeVendingModel,
    ConstraintBudget,
    CostTable,
    DistortionTable,
    expected_cost,
    expected_distortion,
    hamming,
    validate_model,
)
from .search import NoFeasiblePoint, SearchConfig

__version__ = "0.1.0"
