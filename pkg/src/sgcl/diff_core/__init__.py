from sgcl.diff_core.checkpoint import load_into, read_checkpoint, save_checkpoint
from sgcl.diff_core.gradcheck import GradCheckReport, grad_check
from sgcl.diff_core.optim import AdamState, MissingGradientError, adam_step
from sgcl.diff_core.params import ParameterStore, lstm_step
from sgcl.diff_core.tensor import ShapeError, Tensor

__all__ = [
    "AdamState",
    "GradCheckReport",
    "MissingGradientError",
    "ParameterStore",
    "ShapeError",
    "Tensor",
    "adam_step",
    "grad_check",
    "load_into",
    "lstm_step",
    "read_checkpoint",
    "save_checkpoint",
]
