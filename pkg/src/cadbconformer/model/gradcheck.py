"""End-to-end finite-difference check of the model gradient."""
from __future__ import annotations

import re
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..numerics import finite_difference_gradients, relative_error, tape
from ..objectives import si_snr_loss
from ..signal import StftConfig
from .config import ModelConfig
from .network import model_forward
from .params import _module_of, count_parameters, init_parameters

PARAM_CAP = 50_000

# Parameters whose gradient is identically zero by construction: biases that
# feed straight into an instance norm, key biases under a softmax over keys,
# and Self-CA gate biases under a softmax over positions. Both analytic and
# numeric gradients are pure round-off there, so a relative test is meaningless
# and they are checked against an absolute bound instead.
STRUCTURAL_ZERO = re.compile(
    r"(^encoder\.(in_conv|down_conv)\.bias$)"
    r"|(\.dense\.\d+\.conv\.bias$)"
    r"|(^decoder\.\w+\.up_conv\.bias$)"
    r"|(\.attn\.k\.bias$)"
    r"|(\.sca\.(q_gate|k_gate)\.bias$)"
)
ZERO_ATOL = 1e-6


class ParameterCapExceeded(ValueError):
    pass


@dataclass
class GradcheckReport:
    ablation: str
    module_errors: "OrderedDict[str, float]" = field(default_factory=OrderedDict)
    worst_param: str = ""
    worst_error: float = 0.0
    zero_max_abs: float = 0.0
    checked: int = 0
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.worst_error < self.tolerance and self.zero_max_abs < ZERO_ATOL


def is_structural_zero(name: str) -> bool:
    return STRUCTURAL_ZERO.search(name) is not None


def gradcheck_signals(length: int, seed: int):
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    clean = 0.5 * np.sin(0.3 * t) + 0.2 * np.sin(0.05 * t + 1.0)
    noisy = clean + 0.3 * rng.standard_normal(length)
    return noisy, clean


def model_gradcheck(cfg: ModelConfig, stft_config: StftConfig, seed: int = 0, length: int = 512,
                    extra_samples: int = 32, eps: float = 1e-6, tolerance: float = 1e-4,
                    param_cap: int = PARAM_CAP) -> GradcheckReport:
    """Compare tape gradients of the SI-SNR loss against central differences in double precision.

    One random coordinate of every parameter tensor is checked, plus
    ``extra_samples`` more drawn uniformly over all checkable coordinates.
    The default step is small because a larger one lets the perturbation
    carry some PReLU input across zero, and the kink then dominates the
    difference quotient.
    """
    n_params = count_parameters(cfg)
    if n_params > param_cap:
        raise ParameterCapExceeded(f"config has {n_params} parameters, gradcheck is capped at {param_cap}")
    params = init_parameters(cfg, seed=seed, dtype=np.float64)
    noisy, clean = gradcheck_signals(length, seed)

    def loss_fn():
        return si_snr_loss(model_forward(noisy, cfg, params, stft_config), clean[None])

    with tape() as t:
        loss = loss_fn()
        t.backward(loss)
        t.clear()

    rng = np.random.default_rng(seed + 1)
    picks: dict[str, set] = OrderedDict()
    pool = []
    for name, p in params.items():
        if is_structural_zero(name):
            continue
        picks[name] = {int(rng.integers(p.size))}
        pool += [(name, i) for i in range(p.size)]
    for k in rng.choice(len(pool), size=min(extra_samples, len(pool)), replace=False):
        name, i = pool[int(k)]
        picks[name].add(i)

    report = GradcheckReport(cfg.ablation, tolerance=tolerance)
    for name, p in params.items():
        if is_structural_zero(name):
            idx = sorted({int(rng.integers(p.size))})
        else:
            idx = sorted(picks[name])
        fd = finite_difference_gradients(lambda _: loss_fn(), p, eps=eps, indices=idx).reshape(-1)[idx]
        an = p.grad.reshape(-1)[idx]
        report.checked += len(idx)
        module = _module_of(name)
        if is_structural_zero(name):
            report.zero_max_abs = max(report.zero_max_abs, float(np.max(np.abs(an))), float(np.max(np.abs(fd))))
            report.module_errors.setdefault(module, 0.0)
            continue
        err = float(relative_error(an, fd).max())
        report.module_errors[module] = max(report.module_errors.get(module, 0.0), err)
        if err >= report.worst_error:
            report.worst_error, report.worst_param = err, name
    return report
