"""Long-time Fano stability of the balanced NETR input, both models.

    python scripts/stability.py --r 6 --stop 100
"""
import argparse
import math

import numpy as np

from twmlab.quantum import ModelKind, observable_series


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--r", type=float, default=6.0)
    p.add_argument("--stop", type=float, default=100.0)
    p.add_argument("--count", type=int, default=5001)
    p.add_argument("--settle", type=float, default=10.0, help="gt after which the plateau is assessed")
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    t = np.linspace(0.0, args.stop, args.count)
    late = t >= args.settle
    runs = {
        "nondegenerate": observable_series(ModelKind.nondegenerate(), (args.r, args.r, args.r / math.sqrt(2)),
                                           t, workers=args.workers),
        "degenerate": observable_series(ModelKind.degenerate(), (args.r, args.r / 2), t, workers=args.workers),
    }
    for name, s in runs.items():
        print(f"{name}: {s.meta['basis_states']} basis states")
        for mode in s.modes:
            n, f = s.mean(mode)[late], s.fano_of(mode)[late]
            print(f"  mode {mode}: <n> {n.mean():9.4f}  rel std {n.std() / n.mean():.2e}"
                  f"  F mean {f.mean():.4f}  F std {f.std():.2e}  F ptp {np.ptp(f):.4f}")


if __name__ == "__main__":
    main()
