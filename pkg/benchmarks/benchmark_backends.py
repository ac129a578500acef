"""Time the compiled kernel against the pure-python one.

Measures the operations that dominate a run: eval-mode forward, one fused
SGD step, and a full epoch over a synthetic training set. Run from the
repository root:

    python benchmarks/benchmark_backends.py
    python benchmarks/benchmark_backends.py --arch cnn_lstm --rows 1000
"""

import argparse
import statistics
import time

import numpy as np

from botuq.datasets import SynthSpec, synth_generate
from botuq.kernels import available_backends, pure
from botuq.models import ArchConfig, draw_masks, init_params, sgd_epoch


def build_kernel(module, arch: ArchConfig, n_steps: int, seed: int):
    k = module.Kernel(
        kind=pure.KIND_LSTM if arch.kind == "lstm" else pure.KIND_CNN_LSTM,
        n_steps=n_steps,
        embed_dim=arch.embed_dim,
        hidden=arch.hidden_size,
        conv_filters=arch.conv_filters,
        conv_kernel=arch.conv_kernel,
        pool=arch.pool_size,
    )
    k.load(init_params(arch, seed, n_steps).weights)
    return k


def best_of(repeats: int, fn) -> float:
    """Median of `repeats` timed runs, seconds. fn() does one full run."""
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def time_backend(module, arch: ArchConfig, d, calls: int, repeats: int, seed: int) -> dict:
    k = build_kernel(module, arch, d.n_features, seed)
    rng = np.random.default_rng(seed)
    xs = d.features[rng.integers(0, d.n_samples, size=calls)]
    ys = rng.integers(0, 2, size=calls)
    m1, m2 = draw_masks(k, np.random.default_rng(seed), arch.dropout_rate)

    k.forward(xs[0])  # warm caches before any clock starts
    k.sgd_step(xs[0], int(ys[0]), m1, m2, 0.01)

    def forward_loop():
        for x in xs:
            k.forward(x)

    def step_loop():
        for x, y in zip(xs, ys):
            k.sgd_step(x, int(y), m1, m2, 0.01)

    def epoch():
        sgd_epoch(
            k, d.features, d.labels, np.arange(d.n_samples),
            np.random.default_rng(seed), 0.01, arch.dropout_rate,
        )

    return {
        "forward": best_of(repeats, forward_loop) / calls,
        "sgd_step": best_of(repeats, step_loop) / calls,
        "epoch": best_of(repeats, epoch),
    }


def fmt_seconds(s: float) -> str:
    if s < 1e-3:
        return f"{s * 1e6:8.1f} us"
    if s < 1.0:
        return f"{s * 1e3:8.2f} ms"
    return f"{s:8.3f} s "


def report(arch: ArchConfig, rows: dict) -> None:
    print(f"\n{arch.kind}: hidden {arch.hidden_size}, embed {arch.embed_dim}")
    have_fast = "cython" in rows
    header = f"{'operation':<22}{'python':>12}"
    if have_fast:
        header += f"{'cython':>12}{'speedup':>10}"
    print(header)
    for op in ("forward", "sgd_step", "epoch"):
        line = f"{op:<22}{fmt_seconds(rows['python'][op]):>12}"
        if have_fast:
            ratio = rows["python"][op] / rows["cython"][op]
            line += f"{fmt_seconds(rows['cython'][op]):>12}{ratio:>9.1f}x"
        print(line)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--arch", choices=("lstm", "cnn_lstm", "both"), default="both")
    parser.add_argument("--rows", type=int, default=500, help="training rows for the epoch timing")
    parser.add_argument("--features", type=int, default=10)
    parser.add_argument("--hidden", type=int, default=10)
    parser.add_argument("--embed-dim", type=int, default=8)
    parser.add_argument("--calls", type=int, default=2000, help="per-op calls per repeat")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = {"python": pure}
    if "cython" in available_backends():
        from botuq.kernels import _fast

        backends["cython"] = _fast
    else:
        print("compiled backend not built (pip install -e . rebuilds it); timing python only")

    d = synth_generate(SynthSpec(args.rows, args.features, 4.0, 1.0, args.seed))
    kinds = ("lstm", "cnn_lstm") if args.arch == "both" else (args.arch,)
    for kind in kinds:
        kwargs = dict(kind=kind, hidden_size=args.hidden, embed_dim=args.embed_dim)
        if kind == "cnn_lstm":
            kwargs.update(conv_filters=16, conv_kernel=3)
        arch = ArchConfig(**kwargs)
        rows = {
            name: time_backend(module, arch, d, args.calls, args.repeats, args.seed)
            for name, module in backends.items()
        }
        report(arch, rows)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
