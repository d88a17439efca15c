"""``cadb`` command-line interface.

Exit codes: 0 success, 2 usage or I/O error, 3 checkpoint/config mismatch,
4 training diverged, 5 gradient check failed. ``CADB_LOG_LEVEL`` sets the
logging verbosity (default WARNING).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import configfile
from .data import WavError, load_manifest_corpus, load_wav, make_toy_corpus, save_wav
from .model import ABLATIONS, CheckpointError, ConfigError, count_parameters, load_checkpoint, model_forward
from .model.gradcheck import ParameterCapExceeded, model_gradcheck
from .model.params import parameter_breakdown
from .objectives import si_snr, si_snri
from .signal import StftError
from .trainer import TrainingDiverged, train

EXIT_OK, EXIT_USAGE, EXIT_CHECKPOINT, EXIT_DIVERGED, EXIT_GRADCHECK = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _human(n: int) -> str:
    return f"{n / 1e6:.2f}M" if n >= 1e6 else f"{n / 1e3:.1f}k"


def cmd_info(args) -> int:
    cfg = configfile.load(args.config)
    m = cfg.model
    total = count_parameters(m)
    print(f"config = {args.config}")
    print(f"ablation = {m.ablation}")
    print(f"f_bins = {m.f_bins}")
    print(f"f_half = {m.f_half}")
    print(f"channels = {m.channels}")
    print(f"num_blocks = {m.num_blocks}")
    for module, count in parameter_breakdown(m).items():
        print(f"params.{module} = {count}")
    print(f"params.total = {total}")
    print(f"params.total_human = {_human(total)}")
    for name in ABLATIONS:
        try:
            variant = count_parameters(m.with_ablation(name))
        except ConfigError:
            continue
        print(f"ablation.{name} = {variant}")
    return EXIT_OK


def cmd_enhance(args) -> int:
    try:
        noisy, sr = load_wav(args.input)
    except (OSError, WavError) as exc:
        raise UsageError(f"cannot read input {args.input}: {exc}") from None
    params, model_cfg, stft_cfg = load_checkpoint(
        args.checkpoint, expected=configfile.load(args.config).model if args.config else None)
    if args.config:
        wanted = configfile.load(args.config).stft
        if wanted != stft_cfg:
            raise CheckpointError(f"{args.checkpoint}: STFT settings differ from {args.config}")
    if sr != stft_cfg.sample_rate:
        raise UsageError(f"{args.input}: sample rate {sr} Hz, checkpoint expects {stft_cfg.sample_rate} Hz")
    if noisy.size <= stft_cfg.n_fft // 2:
        raise UsageError(f"{args.input}: {noisy.size} samples is too short for n_fft={stft_cfg.n_fft}")
    enhanced = model_forward(noisy, model_cfg, params, stft_cfg).data[0].astype(np.float64)
    try:
        save_wav(args.output, enhanced, sr)
    except OSError as exc:
        raise UsageError(f"cannot write output {args.output}: {exc.strerror or exc}") from None
    print(f"output = {args.output}")
    print(f"samples = {enhanced.size}")
    if args.reference:
        try:
            ref, ref_sr = load_wav(args.reference)
        except (OSError, WavError) as exc:
            raise UsageError(f"cannot read reference {args.reference}: {exc}") from None
        if ref.size != noisy.size or ref_sr != sr:
            raise UsageError(f"{args.reference}: length/sample rate differ from {args.input}")
        print(f"si_snr = {si_snr(enhanced, ref).value:.6f}")
        print(f"si_snri = {si_snri(enhanced, noisy, ref).value:.6f}")
    return EXIT_OK


def _split(corpus, fraction: float):
    if len(corpus) < 2:
        return corpus, []
    n_val = max(1, int(round(fraction * len(corpus))))
    return corpus[:-n_val], corpus[-n_val:]


def cmd_train(args) -> int:
    cfg = configfile.load(args.config)
    if args.toy:
        corpus = make_toy_corpus(cfg.toy)
        val = []
        if cfg.data.val_examples:
            val = make_toy_corpus(replace(cfg.toy, num_examples=cfg.data.val_examples, seed=cfg.data.val_seed))
    else:
        if not args.manifest:
            raise UsageError("train needs --toy or --manifest PATH")
        if not os.path.isfile(args.manifest):
            raise UsageError(f"manifest not found: {args.manifest}")
        try:
            corpus, val = _split(load_manifest_corpus(args.manifest, cfg.toy.segment_seconds, cfg.train.seed),
                                 cfg.data.val_fraction)
        except (OSError, WavError) as exc:
            raise UsageError(f"cannot load corpus from {args.manifest}: {exc}") from None
    if not corpus:
        raise UsageError("training corpus is empty")
    result = train(cfg.model, cfg.train, corpus, val, out_dir=args.out, stft_config=cfg.stft)
    last = result.history[-1]
    print(f"epochs = {last['epoch']}")
    print(f"final_loss = {last['loss']:.6f}")
    if last["val_sisnri"] is not None:
        print(f"final_val_sisnri = {last['val_sisnri']:.6f}")
    print(f"best_epoch = {result.best_epoch}")
    print(f"best_checkpoint = {result.best_path}")
    print(f"metrics = {result.log_path}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = configfile.load(args.config)
    g = cfg.gradcheck
    variants = ABLATIONS if args.ablation == "all" else (args.ablation,)
    count = count_parameters(cfg.model)
    if count > args.param_cap:
        raise UsageError(f"config has {count} parameters; gradcheck refuses to run above {args.param_cap}")
    failed = []
    for name in variants:
        report = model_gradcheck(cfg.model.with_ablation(name), cfg.stft, seed=g.seed, length=g.length,
                                 extra_samples=g.extra_samples, eps=g.eps, tolerance=g.tolerance,
                                 param_cap=args.param_cap)
        for module, err in report.module_errors.items():
            print(f"{name}.{module} = {err:.3e}")
        print(f"{name}.max_rel_error = {report.worst_error:.3e}")
        print(f"{name}.worst_param = {report.worst_param}")
        print(f"{name}.zero_grad_max_abs = {report.zero_max_abs:.3e}")
        print(f"{name}.status = {'pass' if report.passed else 'FAIL'}")
        if not report.passed:
            failed.append((name, report.worst_param, report.worst_error))
    if failed:
        for name, param, err in failed:
            print(f"gradcheck failed for {name}: worst parameter {param} ({err:.3e})", file=sys.stderr)
        return EXIT_GRADCHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cadb", description="Channel-aware dual-branch conformer speech enhancer.")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub.choices

    p = sub.add_parser("enhance", help="enhance a noisy WAV file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", help="config that the checkpoint must match")
    p.add_argument("--reference", help="clean WAV; prints SI-SNR and SI-SNRi")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True, help="config file or built-in name (toy, large, gradcheck)")
    p.add_argument("--out", required=True, help="output directory for checkpoints and metrics")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--toy", action="store_true", help="train on the synthetic tone corpus")
    mode.add_argument("--manifest", help="line-delimited JSON records: clean, noise, snr_db")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference check of the model gradient")
    p.add_argument("--config", default="gradcheck")
    p.add_argument("--ablation", default="all", choices=("all",) + ABLATIONS)
    p.add_argument("--param-cap", type=int, default=50_000, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("info", help="parameter counts and frequency layout")
    p.add_argument("--config", default="large")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CADB_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.subcommands[args.command].format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    except (configfile.ConfigFileError, ConfigError, StftError, ParameterCapExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
