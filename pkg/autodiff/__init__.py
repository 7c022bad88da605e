"""
Small reverse-mode differentiation engine over numpy arrays.
"""
from autodiff.tape import BACKWARD_RULES, Tape, Tensor, default_dtype, precision, set_default_dtype
from autodiff import ops
from autodiff.optim import Adam, AdamState, ParamGroup, adam_step
from autodiff.gradcheck import GradCheckReport, grad_check

__all__ = [
    "BACKWARD_RULES",
    "Tape",
    "Tensor",
    "default_dtype",
    "precision",
    "set_default_dtype",
    "ops",
    "Adam",
    "AdamState",
    "ParamGroup",
    "adam_step",
    "GradCheckReport",
    "grad_check",
]
