"""Benchmark the numba kernels against the pure-numpy fallback.

Times each hot kernel on training-shaped inputs plus one full train step per
backend. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 200]

Kernel backend selection inside the package is controlled by GCDLIB_BACKEND;
this script instead times both implementations side by side in one process.
"""

import argparse
import os
import time

import numpy as np

from gcdlib import kernels

BATCH, DIM, CLASSES = 256, 64, 10


def bench(fn, args, repeats):
    fn(*args)  # warm-up (and JIT compile for numba)
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def kernel_cases(rng):
    logits = rng.standard_normal((BATCH, CLASSES)) * 5
    probs_grad = rng.standard_normal((BATCH, CLASSES))
    feats = rng.standard_normal((BATCH, DIM))
    probs = np.abs(rng.random((BATCH, CLASSES))) + 1e-6
    w = rng.standard_normal((DIM, DIM))
    scores = np.round(rng.random(4096), 2)
    cost = rng.integers(0, 50, size=(64, 64)).astype(np.float64)
    y, norms = kernels.get_impl("numpy").l2norm_rows(feats)
    sig = kernels.get_impl("numpy").sigmoid(logits)
    return [
        ("softmax_rows", (logits,)),
        ("softmax_rows_bwd", (probs, probs_grad)),
        ("log_softmax_rows", (logits,)),
        ("l2norm_rows", (feats,)),
        ("l2norm_rows_bwd", (y, norms, feats)),
        ("sigmoid", (logits,)),
        ("sigmoid_bwd", (sig, probs_grad)),
        ("gelu", (feats,)),
        ("gelu_bwd", (feats, feats)),
        ("log_clamped", (probs, 1e-12)),
        ("log_clamped_bwd", (probs, 1e-12, probs_grad)),
        ("sgd_update", (w.copy(), w, np.zeros_like(w), 0.1, 0.9, 5e-5)),
        ("average_ranks", (scores,)),
        ("lap_min", (cost,)),
    ]


def bench_train_step(backend, steps):
    """Wall time per full training step under one backend (subprocess-free:
    re-dispatch by reloading the kernels module would be invasive, so this
    patches the dispatch table directly)."""
    impl = kernels.get_impl(backend)
    saved = {name: getattr(kernels, name) for name in kernels._KERNEL_NAMES}
    for name in kernels._KERNEL_NAMES:
        setattr(kernels, name, getattr(impl, name))
    try:
        from gcdlib.config import Config
        from gcdlib.data import AugConfig, sample_batch, synth_generate
        from gcdlib.model import init_model
        from gcdlib import trainer

        ds = synth_generate(CLASSES, 5, 100, DIM, 0.1, seed=0)
        cfg = Config(seed=0)
        state = init_model(ds.dim, CLASSES, 5, cfg, seed=0)
        rng = np.random.default_rng([0, 1])
        vel = {n: np.zeros_like(p.data) for n, p in state.params.items()}
        batch = sample_batch(ds, 128, 0.5, AugConfig(), rng)
        trainer.train_step(state, batch, cfg, 0.1, 0.07, vel)  # warm-up
        start = time.perf_counter()
        for _ in range(steps):
            batch = sample_batch(ds, 128, 0.5, AugConfig(), rng)
            trainer.train_step(state, batch, cfg, 0.1, 0.07, vel)
        return (time.perf_counter() - start) / steps
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--train-steps", type=int, default=50)
    args = parser.parse_args()

    backends = kernels.available_backends()
    if "numba" not in backends:
        print("numba unavailable; timing the numpy fallback only")

    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    header = f"{'kernel':<22}" + "".join(f"{b + ' (us)':>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, call_args in cases:
        times = []
        for backend in backends:
            fn = getattr(kernels.get_impl(backend), name)
            times.append(bench(fn, call_args, args.repeats))
        row = f"{name:<22}" + "".join(f"{t * 1e6:>14.1f}" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)

    print()
    for backend in backends:
        per_step = bench_train_step(backend, args.train_steps)
        print(f"full train step [{backend}]: {per_step * 1e3:.2f} ms "
              f"(batch 128, dim {DIM}, K={CLASSES})")


if __name__ == "__main__":
    main()
