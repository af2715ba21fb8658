"""Compiled vs pure-Python kernel timings.

    python3 benchmarks/bench_kernels.py [--batch 32] [--seq-len 60] [--hidden 32] [--repeats 20]
"""
import argparse

from fatigue_seq import kernels
from fatigue_seq.bench import kernel_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--seq-len", type=int, default=60)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    if kernels.compiled_backend is None:
        print("compiled extension not built; only the Python timings are shown")
    print(f"{'kernel':<15}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}")
    for r in kernel_report(args.batch, args.seq_len, args.hidden, args.repeats):
        cy = f"{1e3 * r['compiled_seconds']:14.3f}" if r["compiled_seconds"] else f"{'-':>14}"
        sp = f"{r['speedup']:10.2f}" if r["speedup"] else f"{'-':>10}"
        print(f"{r['kernel']:<15}{1e3 * r['python_seconds']:12.3f}{cy}{sp}")


if __name__ == "__main__":
    main()
