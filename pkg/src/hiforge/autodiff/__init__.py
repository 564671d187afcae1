from .tensor import (
    Tensor,
    as_tensor,
    add,
    concat,
    dilate1d,
    div,
    exp,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    pad1d,
    power,
    reshape,
    sqrt,
    take,
    tensor_sum,
    transpose,
    unfold1d,
)
from .functional import (
    batch_norm,
    conv1d_depthwise,
    conv1d_pointwise,
    conv1d_transposed_depthwise,
    dropout,
    gelu,
    global_avg_pool,
    layer_norm,
    linear,
    sigmoid,
    softmax,
)
from .gradcheck import check_gradients, numerical_grad, relative_error

__all__ = [
    "Tensor",
    "as_tensor",
    "add",
    "concat",
    "dilate1d",
    "div",
    "exp",
    "log",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "pad1d",
    "power",
    "reshape",
    "sqrt",
    "take",
    "tensor_sum",
    "transpose",
    "unfold1d",
    "batch_norm",
    "conv1d_depthwise",
    "conv1d_pointwise",
    "conv1d_transposed_depthwise",
    "dropout",
    "gelu",
    "global_avg_pool",
    "layer_norm",
    "linear",
    "sigmoid",
    "softmax",
    "check_gradients",
    "numerical_grad",
    "relative_error",
]
