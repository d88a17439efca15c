"""WAV I/O, SNR-controlled mixing, segmentation and the synthetic toy corpus."""
from __future__ import annotations

import json
import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SNR_GRID = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0)

_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    pass


def load_wav(path) -> tuple[np.ndarray, int]:
    """Read a RIFF/WAVE file as float64 samples in [-1, 1].

    Supports PCM 16-bit and IEEE float 32-bit; multi-channel files yield
    their first channel.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        size = struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        body = raw[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise WavError(f"{path}: fmt chunk too short ({size} bytes)")
            fmt = struct.unpack("<HHIIHH", body[:16])
            if fmt[0] == _EXTENSIBLE and size >= 26:
                fmt = (struct.unpack("<H", body[24:26])[0],) + fmt[1:]
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavError(f"{path}: missing data chunk")
    codec, channels, rate, _, _, bits = fmt
    if channels < 1:
        raise WavError(f"{path}: invalid channel count {channels}")
    if codec == _PCM and bits == 16:
        samples = np.frombuffer(data[:len(data) - len(data) % 2], dtype="<i2").astype(np.float64) / 32768.0
    elif codec == _IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(data[:len(data) - len(data) % 4], dtype="<f4").astype(np.float64)
    else:
        raise WavError(f"{path}: unsupported encoding (format tag {codec}, {bits} bits); "
                       "expected PCM 16-bit or IEEE float 32-bit")
    frames = len(samples) // channels
    return samples[:frames * channels].reshape(frames, channels)[:, 0].copy(), int(rate)


def quantize_pcm16(waveform) -> np.ndarray:
    """Clip to [-1, 1], scale by 32768 and round half away from zero."""
    x = np.clip(np.asarray(waveform, dtype=np.float64), -1.0, 1.0) * 32768.0
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(q, -32768, 32767).astype("<i2")


def save_wav(path, waveform, sample_rate: int) -> None:
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(sample_rate))
        fh.writeframes(quantize_pcm16(waveform).tobytes())


def power(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x)) if x.size else 0.0


def fit_length(noise, length: int, offset: int = 0) -> np.ndarray:
    """Loop (starting at ``offset``) or trim ``noise`` to ``length`` samples."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.size == 0:
        raise ValueError("noise signal is empty")
    idx = (offset + np.arange(length)) % noise.size
    return noise[idx]


def mix_at_snr(clean, noise, snr_db: float) -> tuple[np.ndarray, np.ndarray]:
    """Scale ``noise`` so that 10 log10(P_clean / P_noise) == ``snr_db``; return (noisy, scaled_noise)."""
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if clean.shape != noise.shape:
        raise ValueError(f"clean and noise lengths differ: {clean.shape} vs {noise.shape}")
    p_clean, p_noise = power(clean), power(noise)
    if p_clean == 0.0:
        raise ValueError("clean segment is silent")
    if p_noise == 0.0:
        raise ValueError("noise segment is silent")
    gain = np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    scaled = gain * noise
    return clean + scaled, scaled


def measured_snr(clean, scaled_noise) -> float:
    return 10.0 * np.log10(power(clean) / power(scaled_noise))


@dataclass
class MixtureSpec:
    clean: np.ndarray
    noise: np.ndarray
    snr_db: float
    segment_seconds: float = 4.0
    sample_rate: int = 16000
    key: str = ""

    def mixture(self) -> tuple[np.ndarray, np.ndarray]:
        """(noisy, clean) at the segment length."""
        n = int(round(self.segment_seconds * self.sample_rate))
        clean = np.zeros(n)
        m = min(n, len(self.clean))
        clean[:m] = self.clean[:m]
        noisy, _ = mix_at_snr(clean, fit_length(self.noise, n), self.snr_db)
        return noisy, clean


@dataclass(frozen=True)
class ToyCorpusConfig:
    num_examples: int = 16
    seed: int = 0
    segment_seconds: float = 0.5
    sample_rate: int = 16000
    min_tones: int = 1
    max_tones: int = 3
    min_fundamental: float = 150.0
    max_fundamental: float = 500.0
    noise: str = "white"  # white | pink | mixed

    def __post_init__(self):
        if self.num_examples < 1:
            raise ValueError("num_examples must be >= 1")
        if not 1 <= self.min_tones <= self.max_tones:
            raise ValueError("need 1 <= min_tones <= max_tones")
        if not 0 < self.min_fundamental <= self.max_fundamental:
            raise ValueError("need 0 < min_fundamental <= max_fundamental")
        if self.max_tones * self.max_fundamental >= 7500.0:
            raise ValueError("highest harmonic must stay below 7.5 kHz")
        if self.noise not in ("white", "pink", "mixed"):
            raise ValueError(f"noise must be white, pink or mixed, got {self.noise!r}")


def pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """1/f-power noise by spectral shaping of white noise."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spec.size, dtype=np.float64)
    f[0] = 1.0
    out = np.fft.irfft(spec / np.sqrt(f), n=n)
    return out / (np.std(out) + 1e-12)


def _envelope(n: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    # syllable-like bursts: a few raised-cosine bumps on a low floor
    t = np.arange(n) / sr
    env = np.full(n, 0.05)
    duration = n / sr
    for _ in range(int(rng.integers(1, 4))):
        centre = rng.uniform(0.1, 0.9) * duration
        width = rng.uniform(0.15, 0.4) * duration
        bump = np.clip(1.0 - np.abs(t - centre) / width, 0.0, None)
        env += rng.uniform(0.4, 1.0) * (0.5 - 0.5 * np.cos(np.pi * bump))
    return env


def make_toy_example(config: ToyCorpusConfig, index: int) -> MixtureSpec:
    rng = np.random.default_rng([config.seed, index])
    n = int(round(config.segment_seconds * config.sample_rate))
    t = np.arange(n) / config.sample_rate
    f0 = rng.uniform(config.min_fundamental, config.max_fundamental)
    n_tones = int(rng.integers(config.min_tones, config.max_tones + 1))
    clean = np.zeros(n)
    for k in range(1, n_tones + 1):
        clean += rng.uniform(0.3, 1.0) / k * np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi))
    clean *= _envelope(n, config.sample_rate, rng)
    clean *= 0.5 / (np.max(np.abs(clean)) + 1e-12)
    kind = config.noise if config.noise != "mixed" else ("white", "pink")[index % 2]
    noise = rng.standard_normal(n) if kind == "white" else pink_noise(n, rng)
    snr = float(SNR_GRID[int(rng.integers(len(SNR_GRID)))])
    return MixtureSpec(clean, noise, snr, config.segment_seconds, config.sample_rate, key=f"toy-{config.seed}-{index}")


def make_toy_corpus(config: ToyCorpusConfig) -> list[MixtureSpec]:
    """Harmonic tone complexes in white/pink noise at SNRs drawn from the grid."""
    return [make_toy_example(config, i) for i in range(config.num_examples)]


def segment(waveform, seconds: float, sample_rate: int = 16000, hop_seconds: float | None = None):
    """Cut into fixed-length segments, zero-padding the tail.

    Returns ``(segments, lengths)`` where ``lengths[i]`` is the number of
    real (unpadded) samples in segment i.
    """
    if seconds <= 0:
        raise ValueError("segment length must be positive")
    x = np.asarray(waveform, dtype=np.float64)
    size = int(round(seconds * sample_rate))
    hop = size if hop_seconds is None else int(round(hop_seconds * sample_rate))
    if hop <= 0:
        raise ValueError("hop must be positive")
    segments, lengths = [], []
    start = 0
    while True:
        chunk = x[start:start + size]
        seg = np.zeros(size)
        seg[:chunk.size] = chunk
        segments.append(seg)
        lengths.append(int(chunk.size))
        if start + size >= x.size:
            break
        start += hop
    return segments, lengths


def reassemble(segments, lengths) -> np.ndarray:
    """Inverse of :func:`segment` for the non-overlapping case."""
    return np.concatenate([np.asarray(s)[:n] for s, n in zip(segments, lengths)]) if segments else np.zeros(0)


def read_manifest(path) -> list[dict]:
    """Line-delimited JSON records with ``clean``, ``noise`` and ``snr_db``."""
    records = []
    base = Path(path).parent
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        missing = {"clean", "noise", "snr_db"} - rec.keys()
        if missing:
            raise ValueError(f"{path}:{lineno}: missing fields {sorted(missing)}")
        for key in ("clean", "noise"):
            p = Path(rec[key])
            rec[key] = str(p if p.is_absolute() else base / p)
        records.append(rec)
    return records


def load_manifest_corpus(path, segment_seconds: float = 4.0, seed: int = 0) -> list[MixtureSpec]:
    """Build mixtures from a manifest of real clean/noise WAV files."""
    out = []
    for i, rec in enumerate(read_manifest(path)):
        clean, sr = load_wav(rec["clean"])
        noise, sr_n = load_wav(rec["noise"])
        if sr != sr_n:
            raise WavError(f"sample rates differ: {rec['clean']} ({sr}) vs {rec['noise']} ({sr_n})")
        n = int(round(segment_seconds * sr))
        offset = int(np.random.default_rng([seed, i]).integers(max(1, noise.size)))
        out.append(MixtureSpec(clean[:n], fit_length(noise, n, offset), float(rec["snr_db"]),
                               segment_seconds, sr, key=Path(rec["clean"]).stem))
    return out
