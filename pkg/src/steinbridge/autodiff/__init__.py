from .engine import NonFiniteError, NonSmoothNestedGradError, Tensor, grad, no_grad, tensor
from .nn import MlpSpec, ParamStore, forward, forward_t, glorot_init, grad_input, grad_params
from .optim import AdamState, adam_step

__all__ = [
    "AdamState", "MlpSpec", "NonFiniteError", "NonSmoothNestedGradError", "ParamStore",
    "Tensor", "adam_step", "forward", "forward_t", "glorot_init", "grad", "grad_input",
    "grad_params", "no_grad", "tensor",
]
