"""STFT analysis/synthesis, power-law compression and network input packing."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Tensor, as_tensor, getitem, make_result

WINDOWS = ("hann_sqrt", "hann", "hamming")


class StftError(ValueError):
    pass


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int = 16000
    n_fft: int = 400
    win_length: int = 400
    hop_length: int = 100
    window: str = "hann_sqrt"

    def __post_init__(self):
        if self.window not in WINDOWS:
            raise StftError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if not 0 < self.hop_length <= self.win_length <= self.n_fft:
            raise StftError(
                f"need 0 < hop_length ({self.hop_length}) <= win_length ({self.win_length}) <= n_fft ({self.n_fft})")
        if self.hop_length > self.n_fft // 2:
            raise StftError("hop_length must not exceed n_fft/2 (center padding would leave samples uncovered)")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    def num_frames(self, length: int) -> int:
        pad = self.n_fft // 2
        return 1 + (length + 2 * pad - self.n_fft) // self.hop_length

    def analysis_window(self) -> np.ndarray:
        return _window(self)

    def synthesis_window(self) -> np.ndarray:
        return _window(self)


def _window(config: StftConfig) -> np.ndarray:
    n = np.arange(config.win_length)
    if config.window == "hamming":
        w = 0.54 - 0.46 * np.cos(2 * np.pi * n / config.win_length)
    else:
        w = 0.5 - 0.5 * np.cos(2 * np.pi * n / config.win_length)
        if config.window == "hann_sqrt":
            w = np.sqrt(w)
    # centre the window inside an n_fft frame
    left = (config.n_fft - config.win_length) // 2
    out = np.zeros(config.n_fft)
    out[left:left + config.win_length] = w
    return out


def cola_profile(config: StftConfig) -> np.ndarray:
    """One hop period of sum_k w_a(n - k*hop) * w_s(n - k*hop)."""
    prod = config.analysis_window() * config.synthesis_window()
    hop = config.hop_length
    reps = -(-config.n_fft // hop)
    padded = np.zeros(reps * hop)
    padded[:config.n_fft] = prod
    return padded.reshape(reps, hop).sum(axis=0)


def check_cola(config: StftConfig, tol: float = 1e-6) -> bool:
    prof = cola_profile(config)
    return bool(np.ptp(prof) <= tol * max(1.0, abs(prof.mean())))


@dataclass
class ComplexSpectrogram:
    """Real/imaginary planes of shape (..., T, F) plus framing metadata."""

    real: np.ndarray
    imag: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    original_length: int = 0

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.real ** 2 + self.imag ** 2)

    @property
    def phase(self) -> np.ndarray:
        return np.arctan2(self.imag, self.real)

    @property
    def shape(self) -> tuple:
        return self.real.shape


@dataclass
class NetworkInput:
    packed: np.ndarray  # (B, T, F, 3): compressed magnitude, real, imag
    phase: np.ndarray   # (B, T, F), from the uncompressed spectrum
    config: StftConfig
    original_length: int
    compress_exponent: float


def stft(waveform, config: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Centre-padded (reflect), one-sided STFT of a mono waveform or a batch (B, L)."""
    x = np.asarray(waveform.data if isinstance(waveform, Tensor) else waveform, dtype=np.float64)
    if x.ndim not in (1, 2):
        raise StftError(f"stft expects (L,) or (B, L), got shape {x.shape}")
    length = x.shape[-1]
    if length < config.win_length:
        raise StftError(f"waveform has {length} samples; at least win_length={config.win_length} required")
    pad = config.n_fft // 2
    widths = [(0, 0)] * (x.ndim - 1) + [(pad, pad)]
    xp = np.pad(x, widths, mode="reflect")
    frames = np.lib.stride_tricks.sliding_window_view(xp, config.n_fft, axis=-1)[..., ::config.hop_length, :]
    spec = np.fft.rfft(frames * config.analysis_window(), axis=-1)
    return ComplexSpectrogram(np.ascontiguousarray(spec.real), np.ascontiguousarray(spec.imag), config, length)


def _ola(frames: np.ndarray, hop: int) -> np.ndarray:
    *lead, t, n = frames.shape
    out = np.zeros(tuple(lead) + (n + hop * (t - 1),), dtype=frames.dtype)
    for i in range(t):
        out[..., i * hop:i * hop + n] += frames[..., i, :]
    return out


def _window_sum(config: StftConfig, t: int) -> np.ndarray:
    prod = config.analysis_window() * config.synthesis_window()
    return _ola(np.broadcast_to(prod, (t, config.n_fft)), config.hop_length)


def _istft_normalizer(config: StftConfig, t: int, length: int):
    if not check_cola(config):
        raise StftError(f"window/hop pair violates COLA: {config}")
    pad = config.n_fft // 2
    wsum = _window_sum(config, t)[pad:pad + length]
    if wsum.shape[0] < length or np.any(wsum < 1e-10):
        raise StftError(f"{t} frames cannot cover {length} samples")
    return pad, 1.0 / wsum


def istft_op(real, imag, config: StftConfig, length: int) -> Tensor:
    """Differentiable inverse STFT of (..., T, F) planes to (..., length).

    The backward rule is the exact adjoint: window, overlap-add and
    normalization are linear, and the adjoint of ``irfft`` is ``rfft``
    with the interior bins doubled and scaled by 1/n_fft.
    """
    real, imag = as_tensor(real), as_tensor(imag)
    if real.shape != imag.shape or real.shape[-1] != config.n_bins:
        raise StftError(f"istft: planes {real.shape}/{imag.shape} do not match {config.n_bins} bins")
    t = real.shape[-2]
    pad, inv_wsum = _istft_normalizer(config, t, length)
    w_syn = config.synthesis_window()
    n_fft, hop = config.n_fft, config.hop_length
    dtype = real.dtype
    frames = np.fft.irfft(real.data + 1j * imag.data, n=n_fft, axis=-1) * w_syn
    y = _ola(frames, hop)[..., pad:pad + length] * inv_wsum
    bin_weight = np.full(config.n_bins, 2.0 / n_fft)
    bin_weight[0] = 1.0 / n_fft
    if n_fft % 2 == 0:
        bin_weight[-1] = 1.0 / n_fft

    def back(g):
        full = np.zeros(g.shape[:-1] + (n_fft + hop * (t - 1),), dtype=np.float64)
        full[..., pad:pad + length] = g * inv_wsum
        gframes = np.lib.stride_tricks.sliding_window_view(full, n_fft, axis=-1)[..., ::hop, :] * w_syn
        gspec = np.fft.rfft(gframes, axis=-1) * bin_weight
        return gspec.real.astype(dtype), gspec.imag.astype(dtype)

    return make_result("istft", (real, imag), y.astype(dtype), back)


def istft(spec: ComplexSpectrogram) -> np.ndarray:
    """Overlap-add synthesis trimmed to ``spec.original_length``."""
    if spec.original_length <= 0:
        raise StftError("istft needs original_length to be set")
    return istft_op(spec.real, spec.imag, spec.config, spec.original_length).data


def _check_exponent(c: float) -> None:
    if not 0 < c <= 1:
        raise ValueError(f"compression exponent must lie in (0, 1], got {c}")


def _rescale(real: np.ndarray, imag: np.ndarray, exponent: float):
    mag = np.sqrt(real ** 2 + imag ** 2)
    safe = np.where(mag < 1e-12, 1.0, mag)
    factor = np.where(mag < 1e-12, 0.0, safe ** (exponent - 1.0))
    return real * factor, imag * factor


def power_compress(spec: ComplexSpectrogram, c: float = 0.3) -> ComplexSpectrogram:
    """Map magnitude m -> m**c, keeping phase."""
    _check_exponent(c)
    r, i = _rescale(spec.real, spec.imag, c)
    return ComplexSpectrogram(r, i, spec.config, spec.original_length)


def power_decompress(spec: ComplexSpectrogram, c: float = 0.3) -> ComplexSpectrogram:
    _check_exponent(c)
    r, i = _rescale(spec.real, spec.imag, 1.0 / c)
    return ComplexSpectrogram(r, i, spec.config, spec.original_length)


def power_decompress_op(real, imag, c: float) -> tuple[Tensor, Tensor]:
    """Differentiable magnitude expansion m -> m**(1/c) on (real, imag) tensors."""
    _check_exponent(c)
    real, imag = as_tensor(real), as_tensor(imag)
    if real.shape != imag.shape:
        raise ValueError(f"power_decompress: shapes differ, {real.shape} vs {imag.shape}")
    p = 1.0 / c - 1.0
    r, i = real.data, imag.data
    m2 = r * r + i * i
    mag = np.sqrt(m2)
    tiny = mag < 1e-12
    safe = np.where(tiny, 1.0, mag)
    factor = np.where(tiny, 0.0, safe ** p)
    # d factor / d r = p * m**(p-2) * r
    dfac = np.where(tiny, 0.0, p * safe ** (p - 2.0))
    packed = np.stack([r * factor, i * factor])

    def back(g):
        gr, gi = g[0], g[1]
        common = (gr * r + gi * i) * dfac
        return gr * factor + common * r, gi * factor + common * i

    both = make_result("power_decompress", (real, imag), packed, back)
    return getitem(both, 0), getitem(both, 1)


def pack_input(spec: ComplexSpectrogram, c: float = 0.3) -> NetworkInput:
    """Compress, then stack (magnitude, real, imag) on a trailing channel axis."""
    comp = power_compress(spec, c)
    mag = np.sqrt(comp.real ** 2 + comp.imag ** 2)
    packed = np.stack([mag, comp.real, comp.imag], axis=-1)
    phase = spec.phase
    if packed.ndim == 3:
        packed, phase = packed[None], phase[None]
    return NetworkInput(packed, phase, spec.config, spec.original_length, c)
