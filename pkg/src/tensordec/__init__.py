"""Dense 3-way tensor decompositions, sparse low-rank completion, and a
weekly case-data pipeline built on them.

Tensors are plain ``numpy.ndarray`` objects of shape ``(I, J, K)``.
"""

__version__ = "0.1.0"

from .cp import cp_als, cp_reconstruct, relative_error
from .lrat import (
    LratConfig,
    LratDivergence,
    ObservationMask,
    estimate_lambda,
    estimated_rank,
    lrat_complete,
    lrat_fit,
    register_lambda_strategy,
    soft_threshold,
)
from .models import CPModel, FitTrace, TuckerModel
from .smals import SampleState, block_gradient, sampled_block_solve, smals
from .tensor import ShapeError, fold, khatri_rao, kronecker, mode_product, unfold
from .tucker import hooi, tucker_reconstruct

__all__ = [
    "CPModel", "FitTrace", "LratConfig", "LratDivergence", "ObservationMask", "SampleState",
    "ShapeError", "TuckerModel", "block_gradient", "cp_als", "cp_reconstruct", "estimate_lambda",
    "estimated_rank", "fold", "hooi", "khatri_rao", "kronecker", "lrat_complete", "lrat_fit",
    "mode_product", "register_lambda_strategy", "relative_error", "sampled_block_solve", "smals",
    "soft_threshold", "tucker_reconstruct", "unfold",
]
