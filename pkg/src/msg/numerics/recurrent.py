"""LSTM cell and masked (bi)directional unrolls built from tensor primitives."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .params import ParamStore
from .tensor import ShapeError, Tensor


def add_lstm_params(params: ParamStore, prefix: str, input_size: int, hidden: int, rng, init_range: float) -> None:
    # gate order along the 4*hidden axis: input, forget, output, cell candidate
    params.add(f"{prefix}.Wx", (input_size, 4 * hidden), rng, init_range)
    params.add(f"{prefix}.Wh", (hidden, 4 * hidden), rng, init_range)
    params.add(f"{prefix}.b", (4 * hidden,), rng, init_range)


def lstm_weights(params: ParamStore, prefix: str):
    return params[f"{prefix}.Wx"], params[f"{prefix}.Wh"], params[f"{prefix}.b"]


def lstm_cell(z: Tensor, h_prev: Tensor, c_prev: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Fused gate nonlinearities and state update; returns [h, c] along the last axis.

    ``z`` holds the pre-activations (N, 4H).  Rows with mask 0 copy
    ``h_prev`` / ``c_prev`` through unchanged.
    """
    hidden = h_prev.shape[-1]
    zd = z.data
    ifo = T._sigmoid_np(zd[..., : 3 * hidden])
    i, f, o = ifo[..., :hidden], ifo[..., hidden: 2 * hidden], ifo[..., 2 * hidden:]
    g = np.tanh(zd[..., 3 * hidden:])
    c = f * c_prev.data + i * g
    tc = np.tanh(c)
    h = o * tc
    if mask is not None:
        m = np.asarray(mask, dtype=zd.dtype).reshape(-1, 1)
        h = m * h + (1 - m) * h_prev.data
        c = m * c + (1 - m) * c_prev.data
    out = np.concatenate([h, c], axis=-1)

    def backward(grad):
        gh, gc = grad[..., :hidden], grad[..., hidden:]
        if mask is not None:
            gh_in, gc_in = gh * m, gc * m
        else:
            gh_in, gc_in = gh, gc
        dc = gc_in + gh_in * o * (1 - tc * tc)
        dz = np.concatenate([dc * g * i * (1 - i), dc * c_prev.data * f * (1 - f),
                             gh_in * tc * o * (1 - o), dc * i * (1 - g * g)], axis=-1)
        dc_prev = dc * f
        dh_prev = None
        if mask is not None:
            dc_prev = dc_prev + (1 - m) * gc
            dh_prev = (1 - m) * gh
        return dz, dh_prev, dc_prev

    return Tensor._make(out, (z, h_prev, c_prev), backward)


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, weights, x_proj: Tensor | None = None,
              mask: np.ndarray | None = None):
    """One LSTM update.  ``x_proj`` may carry a precomputed ``x @ Wx + b``."""
    wx, wh, b = weights
    hidden = wh.shape[0]
    if h_prev.shape[-1] != hidden or c_prev.shape[-1] != hidden:
        raise ShapeError(f"state width {h_prev.shape[-1]}/{c_prev.shape[-1]} does not match hidden size {hidden}")
    if x_proj is None:
        if x.shape[-1] != wx.shape[0]:
            raise ShapeError(f"input width {x.shape[-1]} does not match Wx {wx.shape}")
        x_proj = x @ wx + b
    hc = lstm_cell(x_proj + h_prev @ wh, h_prev, c_prev, mask)
    return hc[..., :hidden], hc[..., hidden:]


def run_lstm(x: Tensor, mask: np.ndarray, weights, reverse: bool = False):
    """Unroll over axis 1 of ``x`` (N, L, D).

    Padded steps (mask 0) carry the previous state through unchanged, so a
    reverse pass over right-padded sequences starts from the true last token.
    Returns stacked outputs (N, L, H) with padded positions zeroed, and the
    final (h, c).
    """
    wx, wh, b = weights
    n, length = x.shape[0], x.shape[1]
    hidden = wh.shape[0]
    xp = x @ wx + b
    h = Tensor(np.zeros((n, hidden), dtype=x.dtype))
    c = Tensor(np.zeros((n, hidden), dtype=x.dtype))
    outs = [None] * length
    steps = range(length - 1, -1, -1) if reverse else range(length)
    mask = np.asarray(mask, dtype=x.dtype)
    for t in steps:
        m = mask[:, t]
        h, c = lstm_step(None, h, c, weights, x_proj=xp[:, t], mask=None if m.all() else m)
        outs[t] = h
    out = T.stack(outs, axis=1) * mask[:, :, None]
    return out, (h, c)


def run_bilstm(x: Tensor, mask: np.ndarray, fwd_weights, bwd_weights):
    """Concatenate forward and backward unrolls: (N, L, 2H)."""
    fwd, (hf, _) = run_lstm(x, mask, fwd_weights)
    bwd, (hb, _) = run_lstm(x, mask, bwd_weights, reverse=True)
    return T.concat([fwd, bwd], axis=-1), (hf, hb)
