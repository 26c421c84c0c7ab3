from . import functional
from .tensor import Tensor, grad, no_grad

__all__ = ["Tensor", "grad", "no_grad", "functional"]
