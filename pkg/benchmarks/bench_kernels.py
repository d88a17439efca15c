"""Time the numba and pure-numpy convolution kernels on model-sized shapes.

    python benchmarks/bench_kernels.py [--repeat N] [--step]

Also checks that both backends agree to 1e-6 on every case.
"""
import argparse
import time

import numpy as np

from cadbconformer.numerics import kernels

# (name, batch, c_in, c_out, H, W, kernel, stride, dilation)
CASES = [
    ("dense d=1 toy", 4, 24, 8, 127, 65, (2, 3), (1, 1), (1, 1)),
    ("dense d=8 toy", 4, 40, 8, 134, 65, (2, 3), (8, 1), (8, 1)),
    ("down toy", 4, 8, 8, 126, 129, (1, 3), (1, 2), (1, 1)),
    ("dense d=4 large", 1, 204, 68, 405, 103, (2, 3), (1, 1), (4, 1)),
]


def _time(fn, repeat):
    fn()  # warm-up (and JIT compile)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_conv(repeat):
    rng = np.random.default_rng(0)
    print(f"{'case':<18}{'pass':<10}{'numba ms':>10}{'numpy ms':>10}{'ratio':>8}")
    for name, b, ci, co, h, w, (kh, kw), (sh, sw), (dh, dw) in CASES:
        xp = rng.standard_normal((b, ci, h, w)).astype(np.float32)
        wt = rng.standard_normal((co, ci, kh, kw)).astype(np.float32)
        ho = (h - dh * (kh - 1) - 1) // sh + 1
        wo = (w - dw * (kw - 1) - 1) // sw + 1
        g = rng.standard_normal((b, co, ho, wo)).astype(np.float32)
        passes = {
            "fwd": lambda: kernels.conv2d_forward(xp, wt, (sh, sw), (dh, dw), (ho, wo)),
            "bwd_in": lambda: kernels.conv2d_backward_input(g, wt, (sh, sw), (dh, dw), (h, w)),
            "bwd_w": lambda: kernels.conv2d_backward_weight(xp, g, (sh, sw), (dh, dw), (kh, kw)),
        }
        for label, fn in passes.items():
            times, outs = {}, {}
            for backend in kernels.BACKENDS:
                with kernels.use_backend(backend):
                    times[backend] = _time(fn, repeat)
                    outs[backend] = fn()
            a, c = outs["numba"], outs["numpy"]
            err = np.max(np.abs(a - c)) / max(1.0, float(np.max(np.abs(c))))
            assert err < 1e-6, f"{name} {label}: backends disagree ({err:.2e})"
            print(f"{name:<18}{label:<10}{times['numba'] * 1e3:>10.2f}{times['numpy'] * 1e3:>10.2f}"
                  f"{times['numpy'] / times['numba']:>8.2f}")


def bench_step(repeat):
    from cadbconformer import configfile
    from cadbconformer.data import make_toy_corpus
    from cadbconformer.model import init_parameters
    from cadbconformer.trainer import _batch_loss, _stack

    cfg = configfile.load("toy")
    params = init_parameters(cfg.model, seed=0)
    noisy, clean = _stack(make_toy_corpus(cfg.toy)[:cfg.train.batch_size])
    for backend in kernels.BACKENDS:
        with kernels.use_backend(backend):
            t = _time(lambda: _batch_loss(params, cfg.model, cfg.stft, noisy, clean, True), repeat)
        print(f"toy training step ({backend}): {t * 1e3:.1f} ms")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--step", action="store_true", help="also time a full toy training step")
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        print("numba is not installed; only the numpy backend is available")
        return
    bench_conv(args.repeat)
    if args.step:
        bench_step(max(1, args.repeat // 2))


if __name__ == "__main__":
    main()
