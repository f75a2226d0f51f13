from .gradcheck import GradCheckResult, grad_check
from .params import CHECKPOINT_FORMAT, NonFiniteGradientError, ParamStore, adagrad_step, clip_grad_norm
from .recurrent import add_lstm_params, lstm_cell, lstm_step, lstm_weights, run_bilstm, run_lstm
from .tensor import (
    DegenerateSoftmaxError,
    ShapeError,
    Tensor,
    abs_,
    add,
    as_tensor,
    clamp_min,
    concat,
    dropout,
    exp,
    gather,
    get_default_dtype,
    is_grad_enabled,
    log,
    masked_max,
    masked_softmax,
    matmul,
    minimum,
    mul,
    no_grad,
    precision,
    relu,
    scatter_add,
    set_default_dtype,
    sigmoid,
    softmax,
    stack,
    take_rows,
    tanh,
    where,
)
