from .tensor import Tensor, as_tensor
from .optim import AdamState, adam_step
from .gradcheck import grad_check
from .checkpoint import save_checkpoint, load_checkpoint, MAGIC
from . import ops

__all__ = [
    "Tensor", "as_tensor", "AdamState", "adam_step", "grad_check",
    "save_checkpoint", "load_checkpoint", "MAGIC", "ops",
]
