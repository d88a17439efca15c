"""Adam optimisation, the training loop, and evaluation."""
from __future__ import annotations

import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import MixtureSpec
from .model import ModelConfig, init_parameters, load_checkpoint, model_forward, save_checkpoint
from .model.network import identity_forward
from .model.params import ModelParameters
from .numerics import tape
from .objectives import sdri, si_snr_loss, si_snri
from .signal import StftConfig

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when the loss or a gradient becomes non-finite."""


@dataclass
class OptimizerState:
    lr: float
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    m: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    v: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    @classmethod
    def for_params(cls, params: ModelParameters, lr: float, betas=(0.9, 0.999), eps=1e-8) -> "OptimizerState":
        zeros = OrderedDict((k, np.zeros(t.shape, dtype=np.float64)) for k, t in params.items())
        return cls(lr=lr, betas=tuple(betas), eps=eps, m=zeros,
                   v=OrderedDict((k, z.copy()) for k, z in zeros.items()))


def global_norm(grads) -> float:
    return math.sqrt(math.fsum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def adam_step(params: ModelParameters, grads, state: OptimizerState, clip_norm: float | None = None) -> float:
    """Apply one Adam update in place and return the pre-clip gradient norm.

    ``grads`` maps parameter names to arrays. When ``clip_norm`` is set and
    the global L2 norm exceeds it, all gradients are scaled down together.
    """
    for name, g in grads.items():
        if name not in state.m:
            raise KeyError(f"optimizer has no state for parameter {name!r}")
        if g.shape != state.m[name].shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {state.m[name].shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in parameter {name!r}")
    norm = global_norm(grads)
    scale = clip_norm / norm if clip_norm is not None and clip_norm > 0 and norm > clip_norm else 1.0
    b1, b2 = state.betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64) * scale
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p = params[name]
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data.astype(np.float64) - update).astype(p.dtype)
    return norm


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 0.001
    lr_decay: float = 0.98
    epochs: int = 30
    batch_size: int = 4
    grad_clip_norm: float = 5.0
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be > 0")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.grad_clip_norm < 0:
            raise ValueError("grad_clip_norm must be >= 0 (0 disables clipping)")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")

    def lr_after(self, epochs_done: int) -> float:
        return self.initial_lr * self.lr_decay ** epochs_done


def _stack(corpus) -> tuple[np.ndarray, np.ndarray]:
    pairs = [m.mixture() for m in corpus]
    lengths = {p[0].size for p in pairs}
    if len(lengths) != 1:
        raise ValueError(f"corpus examples must share one length for batching, got {sorted(lengths)}")
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


@dataclass
class EvaluationReport:
    rows: list
    buckets: "OrderedDict[float, dict]"
    mean_si_snri: float
    mean_sdri: float

    def to_lines(self) -> list[str]:
        lines = ["key\tsnr_db\tsi_snri\tsdri"]
        lines += [f"{r['key']}\t{r['snr_db']:g}\t{r['si_snri']:.6f}\t{r['sdri']:.6f}" for r in self.rows]
        for snr, b in self.buckets.items():
            lines.append(f"bucket\t{snr:g}\t{b['si_snri']:.6f}\t{b['sdri']:.6f}")
        lines.append(f"mean\tall\t{self.mean_si_snri:.6f}\t{self.mean_sdri:.6f}")
        return lines


def _fmean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else float("nan")


def evaluate(source, corpus, model_config: ModelConfig | None = None, stft_config: StftConfig | None = None,
             identity: bool = False) -> EvaluationReport:
    """Per-example and per-SNR-bucket SI-SNRi / SDRi.

    ``source`` is a checkpoint path or a :class:`ModelParameters`. Examples
    are processed one at a time and sums use ``math.fsum``, so the result does
    not depend on corpus order.
    """
    if isinstance(source, (str, Path)):
        params, model_config, stored_stft = load_checkpoint(source, expected=model_config)
        if stft_config is not None and stft_config != stored_stft:
            from .model import CheckpointError
            raise CheckpointError(f"{source}: stored STFT config {stored_stft} does not match {stft_config}")
        stft_config = stored_stft
    else:
        params = source
        if model_config is None:
            raise ValueError("model_config is required when evaluating in-memory parameters")
    stft_config = stft_config or StftConfig()
    rows = []
    for ex in corpus:
        noisy, clean = ex.mixture()
        if identity:
            est = identity_forward(noisy, model_config, stft_config).data[0]
        else:
            est = model_forward(noisy, model_config, params, stft_config).data[0].astype(np.float64)
        rows.append({"key": ex.key, "snr_db": float(ex.snr_db),
                     "si_snri": si_snri(est, noisy, clean).value, "sdri": sdri(est, noisy, clean).value})
    rows.sort(key=lambda r: (r["key"], r["snr_db"]))
    buckets: OrderedDict[float, dict] = OrderedDict()
    for snr in sorted({r["snr_db"] for r in rows}):
        sel = [r for r in rows if r["snr_db"] == snr]
        buckets[snr] = {"count": len(sel), "si_snri": _fmean(r["si_snri"] for r in sel),
                        "sdri": _fmean(r["sdri"] for r in sel)}
    return EvaluationReport(rows, buckets, _fmean(r["si_snri"] for r in rows), _fmean(r["sdri"] for r in rows))


@dataclass
class TrainResult:
    params: ModelParameters
    history: list
    best_epoch: int
    best_path: Path | None = None
    last_path: Path | None = None
    log_path: Path | None = None


def _batch_loss(params, cfg, stft_config, noisy, clean, grad: bool):
    if not grad:
        return float(si_snr_loss(model_forward(noisy, cfg, params, stft_config), clean).item())
    params.zero_grad()
    with tape() as t:
        loss = si_snr_loss(model_forward(noisy, cfg, params, stft_config), clean)
        t.backward(loss)
        t.clear()
    return float(loss.item())


def train(model_config: ModelConfig, train_config: TrainConfig, corpus: list[MixtureSpec],
          val_corpus: list[MixtureSpec] | None = None, out_dir=None, stft_config: StftConfig | None = None,
          params: ModelParameters | None = None) -> TrainResult:
    """Train with SI-SNR loss and Adam; log one record per epoch (epoch 0 = before training).

    With ``out_dir`` set, writes ``metrics.jsonl``, ``best.ckpt`` (highest
    validation SI-SNRi, or lowest loss without a validation set) and
    ``last.ckpt``. A non-finite loss raises :class:`TrainingDiverged` after
    saving the pre-step parameters to ``last_good.ckpt``.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    stft_config = stft_config or StftConfig()
    if params is None:
        params = init_parameters(model_config, seed=train_config.seed)
    noisy_all, clean_all = _stack(corpus)
    out = Path(out_dir) if out_dir is not None else None
    log_path = best_path = last_path = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "metrics.jsonl"
        log_path.write_text("")
        best_path, last_path = out / "best.ckpt", out / "last.ckpt"

    def validate() -> float | None:
        if not val_corpus:
            return None
        return evaluate(params, val_corpus, model_config, stft_config).mean_si_snri

    def record(entry):
        history.append(entry)
        log.info("epoch %d step %d lr %.6g loss %.4f val_sisnri %s", entry["epoch"], entry["step"], entry["lr"],
                 entry["loss"], entry["val_sisnri"])
        if log_path is not None:
            with open(log_path, "a") as fh:
                fh.write(json.dumps(entry) + "\n")

    def score(entry):
        return entry["val_sisnri"] if entry["val_sisnri"] is not None else -entry["loss"]

    history: list = []
    n = len(corpus)
    bs = train_config.batch_size
    initial_losses = [_batch_loss(params, model_config, stft_config, noisy_all[i:i + bs], clean_all[i:i + bs], False)
                      for i in range(0, n, bs)]
    record({"epoch": 0, "step": 0, "lr": train_config.initial_lr, "loss": _fmean(initial_losses),
            "val_sisnri": validate()})
    best_epoch, best_score = 0, score(history[0])
    if out is not None:
        save_checkpoint(best_path, params, model_config, stft_config)

    state = OptimizerState.for_params(params, train_config.initial_lr)
    rng = np.random.default_rng(train_config.seed)
    clip = train_config.grad_clip_norm or None
    for epoch in range(1, train_config.epochs + 1):
        state.lr = train_config.lr_after(epoch - 1)
        order = rng.permutation(n)
        losses = []
        for i in range(0, n, bs):
            idx = order[i:i + bs]
            loss = _batch_loss(params, model_config, stft_config, noisy_all[idx], clean_all[idx], True)
            grads = params.grads()
            finite = math.isfinite(loss) and all(np.all(np.isfinite(g)) for g in grads.values())
            if not finite:
                bad = "loss" if not math.isfinite(loss) else next(
                    k for k, g in grads.items() if not np.all(np.isfinite(g)))
                if out is not None:
                    save_checkpoint(out / "last_good.ckpt", params, model_config, stft_config)
                raise TrainingDiverged(f"non-finite {bad} at epoch {epoch}, step {state.step + 1}")
            adam_step(params, grads, state, clip)
            losses.append(loss)
            if out is not None and train_config.checkpoint_every and state.step % train_config.checkpoint_every == 0:
                save_checkpoint(last_path, params, model_config, stft_config)
        entry = {"epoch": epoch, "step": state.step, "lr": state.lr, "loss": _fmean(losses),
                 "val_sisnri": validate()}
        record(entry)
        if score(entry) > best_score:
            best_epoch, best_score = epoch, score(entry)
            if out is not None:
                save_checkpoint(best_path, params, model_config, stft_config)
    if out is not None:
        save_checkpoint(last_path, params, model_config, stft_config)
    return TrainResult(params, history, best_epoch, best_path, last_path, log_path)
