"""Encoder, decoders, channel feature branch and conformer building blocks.

Convolutional stacks use the (B, C, T, F) layout; conformers run on
(sequences, length, C) with channels last.
"""
from __future__ import annotations

import math

from ..numerics import (
    ShapeError,
    concat,
    conv2d,
    conv_transpose2d,
    depthwise_conv1d,
    glu,
    instance_norm,
    layer_norm,
    linear,
    matmul,
    pointwise_conv1d,
    prelu,
    reshape,
    softmax,
    swish,
    transpose,
)
from .config import ConfigError, ModelConfig


def _norm_prelu(x, params, norm, act):
    x = instance_norm(x, params[f"{norm}.gain"], params[f"{norm}.bias"])
    return prelu(x, params[f"{act}.slope"], axis=1)


# ---------------------------------------------------------------------------
# convolutional encoder / decoders
# ---------------------------------------------------------------------------

def dilated_dense_forward(x, params, prefix: str, dilations=(1, 2, 4, 8)):
    """Densely connected dilated conv stack on (B, C, T, F).

    Block i sees the concatenation of the input and every earlier block
    output; its 2x3 kernel is dilated along time with causal padding.
    """
    c = x.shape[1]
    skip = x
    out = x
    for i, d in enumerate(dilations):
        p = f"{prefix}.dense.{i}"
        w = params[f"{p}.conv.weight"]
        if w.shape[1] != skip.shape[1] or w.shape[0] != c:
            raise ShapeError(f"{p}: kernel {w.shape} expects {w.shape[1]} input channels, got {skip.shape[1]}")
        out = conv2d(skip, w, params[f"{p}.conv.bias"], dilation=(d, 1), padding=((d, 0), (1, 1)))
        out = _norm_prelu(out, params, f"{p}.norm", f"{p}.prelu")
        skip = concat([out, skip], axis=1)
    return out


def encoder_forward(packed, params, cfg: ModelConfig):
    """(B, T, F, 3) compressed input -> (B, C, T, ceil(F/2))."""
    if packed.ndim != 4 or packed.shape[-1] != 3:
        raise ShapeError(f"encoder expects (B, T, F, 3), got {packed.shape}")
    if packed.shape[2] != cfg.f_bins:
        raise ConfigError(f"input has {packed.shape[2]} frequency bins, config expects {cfg.f_bins}")
    x = transpose(packed, (0, 3, 1, 2))
    x = conv2d(x, params["encoder.in_conv.weight"], params["encoder.in_conv.bias"])
    x = _norm_prelu(x, params, "encoder.in_norm", "encoder.in_prelu")
    x = dilated_dense_forward(x, params, "encoder", cfg.dilations)
    x = conv2d(x, params["encoder.down_conv.weight"], params["encoder.down_conv.bias"],
               stride=(1, 2), padding=(0, 1))
    return _norm_prelu(x, params, "encoder.down_norm", "encoder.down_prelu")


def decoder_forward(x, params, cfg: ModelConfig, head: str):
    """One decoder head; ``mask`` -> (B, T, F), ``complex`` -> (B, T, F, 2)."""
    prefix = f"decoder.{head}"
    b, _, t, _ = x.shape
    h = dilated_dense_forward(x, params, prefix, cfg.dilations)
    h = conv_transpose2d(h, params[f"{prefix}.up_conv.weight"], params[f"{prefix}.up_conv.bias"],
                         stride=(1, 2), padding=(0, 1), output_size=(t, cfg.f_bins))
    h = _norm_prelu(h, params, f"{prefix}.up_norm", f"{prefix}.up_prelu")
    h = conv2d(h, params[f"{prefix}.out_conv.weight"], params[f"{prefix}.out_conv.bias"])
    if head == "mask":
        h = prelu(h, params[f"{prefix}.out_prelu.slope"], axis=1)
        return reshape(h, (b, t, cfg.f_bins))
    return transpose(h, (0, 2, 3, 1))


def decoders_forward(x, params, cfg: ModelConfig):
    return decoder_forward(x, params, cfg, "mask"), decoder_forward(x, params, cfg, "complex")


# ---------------------------------------------------------------------------
# channel feature branch
# ---------------------------------------------------------------------------

def conv_forward_block(x, params, prefix: str):
    """Pointwise C->2C, depthwise k=3, swish, pointwise 2C->C, residual."""
    h = pointwise_conv1d(x, params[f"{prefix}.pw1.weight"], params[f"{prefix}.pw1.bias"])
    h = depthwise_conv1d(h, params[f"{prefix}.dw.weight"], params[f"{prefix}.dw.bias"])
    h = swish(h)
    h = pointwise_conv1d(h, params[f"{prefix}.pw2.weight"], params[f"{prefix}.pw2.bias"])
    return x + h


def self_channel_attention(f_in, params, prefix: str, return_weights: bool = False):
    """Channel-by-channel attention over unfolded T-F positions.

    Q and K are ``f_in`` gated by a position-axis softmax of their own
    depthwise convolution; the C x C weights ``softmax(Q K^T)`` mix the
    channels of ``f_in`` and the input is added back.
    """
    if f_in.ndim != 3:
        raise ShapeError(f"self_channel_attention expects (B, C, N), got {f_in.shape}")
    gq = softmax(depthwise_conv1d(f_in, params[f"{prefix}.q_gate.weight"], params[f"{prefix}.q_gate.bias"]), axis=-1)
    gk = softmax(depthwise_conv1d(f_in, params[f"{prefix}.k_gate.weight"], params[f"{prefix}.k_gate.bias"]), axis=-1)
    q = f_in * gq
    k = f_in * gk
    weights = softmax(matmul(q, transpose(k, (0, 2, 1))), axis=-1)
    out = matmul(weights, f_in) + f_in
    return (out, weights) if return_weights else out


def cfb_forward(x, params, prefix: str):
    """(B, C, T, F') -> F_out of shape (B, C, T*F')."""
    b, c, t, f = x.shape
    h = reshape(x, (b, c, t * f))
    h = conv_forward_block(h, params, f"{prefix}.ff1")
    h = self_channel_attention(h, params, f"{prefix}.sca")
    return conv_forward_block(h, params, f"{prefix}.ff2")


# ---------------------------------------------------------------------------
# conformer
# ---------------------------------------------------------------------------

def _ln(x, params, name):
    return layer_norm(x, params[f"{name}.gain"], params[f"{name}.bias"])


def feed_forward(x, params, prefix: str):
    h = _ln(x, params, f"{prefix}.norm")
    h = swish(linear(h, params[f"{prefix}.lin1.weight"], params[f"{prefix}.lin1.bias"]))
    h = linear(h, params[f"{prefix}.lin2.weight"], params[f"{prefix}.lin2.bias"])
    return x + 0.5 * h


def fused_attention(x_f, f_seq, params, prefix: str, cfg: ModelConfig):
    """Multi-head attention whose query mixes the band and channel features.

    query input = alpha * LN(x_f) + beta * f_seq; keys and values are affine
    maps of ``f_seq`` alone.
    """
    if f_seq.shape != x_f.shape:
        raise ShapeError(f"fused_attention: channel features {f_seq.shape} do not match band features {x_f.shape}")
    n, length, c = x_f.shape
    heads = cfg.attention_heads
    d = c // heads
    q_in = cfg.alpha * _ln(x_f, params, f"{prefix}.norm") + cfg.beta * f_seq

    def split(h):
        return transpose(reshape(h, (n, length, heads, d)), (0, 2, 1, 3))

    q = split(linear(q_in, params[f"{prefix}.q.weight"], params[f"{prefix}.q.bias"]))
    k = split(linear(f_seq, params[f"{prefix}.k.weight"], params[f"{prefix}.k.bias"]))
    v = split(linear(f_seq, params[f"{prefix}.v.weight"], params[f"{prefix}.v.bias"]))
    scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(d))
    attn = matmul(softmax(scores, axis=-1), v)
    attn = reshape(transpose(attn, (0, 2, 1, 3)), (n, length, c))
    return x_f + linear(attn, params[f"{prefix}.out.weight"], params[f"{prefix}.out.bias"])


def conformer_conv_module(x, params, prefix: str):
    h = _ln(x, params, f"{prefix}.norm")
    h = glu(linear(h, params[f"{prefix}.pw1.weight"], params[f"{prefix}.pw1.bias"]), axis=-1)
    h = transpose(h, (0, 2, 1))
    h = depthwise_conv1d(h, params[f"{prefix}.dw.weight"], params[f"{prefix}.dw.bias"])
    h = transpose(h, (0, 2, 1))
    h = swish(_ln(h, params, f"{prefix}.dw_norm"))
    h = linear(h, params[f"{prefix}.pw2.weight"], params[f"{prefix}.pw2.bias"])
    return x + h


def conformer_forward(x, f_seq, params, prefix: str, cfg: ModelConfig):
    """Macaron conformer on (sequences, length, C).

    ``f_seq`` is the channel-branch output in the same layout, or ``None``
    to let the block attend to its own feed-forward output.
    """
    x_f = feed_forward(x, params, f"{prefix}.ffn1")
    h = fused_attention(x_f, x_f if f_seq is None else f_seq, params, f"{prefix}.attn", cfg)
    h = conformer_conv_module(h, params, f"{prefix}.conv")
    h = feed_forward(h, params, f"{prefix}.ffn2")
    return _ln(h, params, f"{prefix}.final_norm")


def _time_sequences(x):
    b, c, t, f = x.shape
    return reshape(transpose(x, (0, 3, 2, 1)), (b * f, t, c))


def _from_time_sequences(s, shape):
    b, c, t, f = shape
    return transpose(reshape(s, (b, f, t, c)), (0, 3, 2, 1))


def _freq_sequences(x):
    b, c, t, f = x.shape
    return reshape(transpose(x, (0, 2, 3, 1)), (b * t, f, c))


def _from_freq_sequences(s, shape):
    b, c, t, f = shape
    return transpose(reshape(s, (b, t, f, c)), (0, 3, 1, 2))


def band_branch_forward(x, f_out, params, prefix: str, cfg: ModelConfig):
    """Time conformer then frequency conformer, both reading the same ``f_out``."""
    shape = x.shape
    b, c, t, f = shape
    f_grid = None
    if f_out is not None:
        if f_out.shape != (b, c, t * f):
            raise ShapeError(f"band branch: F_out {f_out.shape} does not unfold to {shape}")
        f_grid = reshape(f_out, shape)
    h = x
    if cfg.enable_t_conformer:
        fs = None if f_grid is None else _time_sequences(f_grid)
        h = _from_time_sequences(conformer_forward(_time_sequences(h), fs, params, f"{prefix}.t_conformer", cfg), shape)
    if cfg.enable_f_conformer:
        fs = None if f_grid is None else _freq_sequences(f_grid)
        h = _from_freq_sequences(conformer_forward(_freq_sequences(h), fs, params, f"{prefix}.f_conformer", cfg), shape)
    return h
