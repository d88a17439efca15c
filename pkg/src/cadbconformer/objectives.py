"""SI-SNR training objective and SDR / SDRi evaluation metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import Tensor, as_tensor, broadcast_to, log, mean, reshape, sub
from .numerics import sum as tsum

EPS = 1e-8
CLAMP_DB = 60.0


@dataclass(frozen=True)
class MetricResult:
    value: float
    clamp_applied: bool = False

    def __float__(self) -> float:
        return self.value


def _clamped(db: float, ceiling: float) -> MetricResult:
    if not np.isfinite(db) or abs(db) > ceiling:
        bounded = math.copysign(ceiling, db) if not np.isnan(db) else -ceiling
        return MetricResult(bounded, True)
    return MetricResult(float(db), False)


def _pair(estimate, reference):
    est = np.asarray(estimate.data if isinstance(estimate, Tensor) else estimate, dtype=np.float64)
    ref = np.asarray(reference.data if isinstance(reference, Tensor) else reference, dtype=np.float64)
    if est.shape != ref.shape:
        raise ValueError(f"estimate and reference lengths differ: {est.shape} vs {ref.shape}")
    return est, ref


def si_snr(estimate, reference, zero_mean: bool = True, eps: float = EPS, clamp_db: float = CLAMP_DB) -> MetricResult:
    """Scale-invariant SNR in dB of a single pair of 1-D signals."""
    est, ref = _pair(estimate, reference)
    if zero_mean:
        est = est - est.mean()
        ref = ref - ref.mean()
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise ValueError("reference signal is identically zero")
    target = (float(np.dot(est, ref)) / ref_energy) * ref
    noise = est - target
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(float(np.dot(target, target)) / (float(np.dot(noise, noise)) + eps))
    return _clamped(db, clamp_db)


def si_snr_loss(estimate, reference, eps: float = EPS) -> Tensor:
    """Negative SI-SNR (dB), averaged over the batch; differentiable in ``estimate``.

    Accepts (L,) or (B, L). No clamp is applied so gradients stay alive.
    """
    estimate = as_tensor(estimate)
    ref = np.asarray(reference.data if isinstance(reference, Tensor) else reference, dtype=estimate.dtype)
    if estimate.shape != ref.shape:
        raise ValueError(f"estimate and reference lengths differ: {estimate.shape} vs {ref.shape}")
    if estimate.ndim == 1:
        estimate = reshape(estimate, (1, -1))
        ref = ref[None]
    b, n = estimate.shape
    ref = ref - ref.mean(axis=-1, keepdims=True)
    ref_energy = (ref * ref).sum(axis=-1, keepdims=True)
    if np.any(ref_energy == 0):
        raise ValueError("reference signal is identically zero")
    est = sub(estimate, broadcast_to(mean(estimate, axis=-1, keepdims=True), (b, n)))
    scale = tsum(est * ref, axis=-1, keepdims=True) / ref_energy
    target = broadcast_to(scale, (b, n)) * ref
    noise = est - target
    ratio = tsum(target * target, axis=-1) / (tsum(noise * noise, axis=-1) + eps)
    return mean(log(ratio)) * (-10.0 / math.log(10.0))


def sdr(estimate, reference, eps: float = EPS, clamp_db: float = CLAMP_DB) -> MetricResult:
    """Plain signal-to-distortion ratio 10 log10(|s|^2 / (|s_hat - s|^2 + eps))."""
    est, ref = _pair(estimate, reference)
    err = est - ref
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(float(np.dot(ref, ref)) / (float(np.dot(err, err)) + eps))
    return _clamped(db, clamp_db)


def sdri(estimate, noisy, reference, eps: float = EPS, clamp_db: float = CLAMP_DB) -> MetricResult:
    """SDR improvement of ``estimate`` over the unprocessed ``noisy`` mixture."""
    a = sdr(estimate, reference, eps, clamp_db)
    b = sdr(noisy, reference, eps, clamp_db)
    return MetricResult(a.value - b.value, a.clamp_applied or b.clamp_applied)


def si_snri(estimate, noisy, reference) -> MetricResult:
    a = si_snr(estimate, reference)
    b = si_snr(noisy, reference)
    return MetricResult(a.value - b.value, a.clamp_applied or b.clamp_applied)
