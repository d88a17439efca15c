"""Minimal dense-tensor engine with tape-based reverse-mode gradients."""
from . import kernels
from .gradcheck import finite_difference_gradients, max_relative_error, relative_error
from .ops import (
    ShapeError,
    add,
    broadcast_to,
    concat,
    conv2d,
    conv_output_size,
    conv_transpose2d,
    depthwise_conv1d,
    div,
    exp,
    getitem,
    glu,
    instance_norm,
    layer_norm,
    linear,
    log,
    matmul,
    mean,
    mul,
    neg,
    pointwise_conv1d,
    prelu,
    reshape,
    sigmoid,
    softmax,
    sub,
    sum,
    swish,
    transpose,
)
from .tensor import (
    PRECISIONS,
    ComputationTape,
    Tensor,
    TapeError,
    active_tape,
    as_tensor,
    backward,
    make_result,
    tape,
)

__all__ = [name for name in dir() if not name.startswith("_")]
