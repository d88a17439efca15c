"""Full enhancement pipeline: waveform -> spectrum -> network -> waveform."""
from __future__ import annotations

import numpy as np

from ..numerics import ShapeError, Tensor, getitem, reshape
from ..signal import StftConfig, istft_op, pack_input, power_decompress_op, stft
from . import layers
from .config import ConfigError, ModelConfig
from .layers import band_branch_forward, decoders_forward, encoder_forward


def cadb_block_forward(x, cfg: ModelConfig, params, prefix: str):
    """One channel-aware dual-branch block; the CFB output is computed once and shared."""
    f_out = layers.cfb_forward(x, params, f"{prefix}.cfb") if cfg.enable_cfb else None
    if not (cfg.enable_t_conformer or cfg.enable_f_conformer):
        if f_out is None:
            raise ConfigError("block with CFB and both conformers disabled")
        return x + reshape(f_out, x.shape)
    return band_branch_forward(x, f_out, params, prefix, cfg)


def reconstruct(mask, complex_out, phase, magnitude, compress_exponent: float,
                stft_config: StftConfig, length: int) -> Tensor:
    """Combine the decoder heads with the noisy phase and invert to a waveform.

    Works in the compressed domain: real = complex_r + mask*|X|^c*cos(phase),
    imag likewise with sin, then expand the magnitude and run the iSTFT.
    """
    phase = np.asarray(phase)
    magnitude = np.asarray(magnitude)
    if mask.shape != phase.shape or magnitude.shape != phase.shape or complex_out.shape != phase.shape + (2,):
        raise ShapeError(f"reconstruct: mask {mask.shape}, complex {complex_out.shape}, "
                         f"phase {phase.shape}, magnitude {magnitude.shape} are not aligned")
    dtype = mask.dtype
    masked = mask * magnitude.astype(dtype)
    real = getitem(complex_out, (Ellipsis, 0)) + masked * np.cos(phase).astype(dtype)
    imag = getitem(complex_out, (Ellipsis, 1)) + masked * np.sin(phase).astype(dtype)
    real, imag = power_decompress_op(real, imag, compress_exponent)
    return istft_op(real, imag, stft_config, length)


def _as_batch(waveform) -> np.ndarray:
    x = np.asarray(waveform.data if isinstance(waveform, Tensor) else waveform, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    if x.ndim != 2:
        raise ShapeError(f"expected waveform (L,) or (B, L), got {x.shape}")
    return x


def prepare_input(waveform, cfg: ModelConfig, stft_config: StftConfig):
    spec = stft(_as_batch(waveform), stft_config)
    if spec.real.shape[-1] != cfg.f_bins:
        raise ConfigError(f"STFT gives {spec.real.shape[-1]} bins but the model expects f_bins={cfg.f_bins}")
    return pack_input(spec, cfg.compress_exponent)


def model_forward(waveform, cfg: ModelConfig, params, stft_config: StftConfig) -> Tensor:
    """Enhance a (B, L) or (L,) waveform; returns a (B, L) tensor."""
    net_in = prepare_input(waveform, cfg, stft_config)
    dtype = params.dtype
    x = encoder_forward(Tensor(net_in.packed.astype(dtype)), params, cfg)
    for n in range(cfg.num_blocks):
        x = cadb_block_forward(x, cfg, params, f"blocks.{n}")
    mask, complex_out = decoders_forward(x, params, cfg)
    return reconstruct(mask, complex_out, net_in.phase, net_in.packed[..., 0], cfg.compress_exponent,
                       stft_config, net_in.original_length)


def identity_forward(waveform, cfg: ModelConfig, stft_config: StftConfig, dtype=np.float64) -> Tensor:
    """Bypass the network: unit mask, zero complex correction."""
    net_in = prepare_input(waveform, cfg, stft_config)
    shape = net_in.phase.shape
    mask = Tensor(np.ones(shape, dtype=dtype))
    complex_out = Tensor(np.zeros(shape + (2,), dtype=dtype))
    return reconstruct(mask, complex_out, net_in.phase, net_in.packed[..., 0], cfg.compress_exponent,
                       stft_config, net_in.original_length)
