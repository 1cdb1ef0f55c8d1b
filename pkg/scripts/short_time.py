"""Residual of the cubic short-time law for F3: halving gt divides it by ~16.

    python scripts/short_time.py --r 1 2 4
"""
import argparse
import math

import numpy as np

from twmlab.analysis import short_time_fano
from twmlab.quantum import ModelKind, observable_series


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--r", nargs="+", type=float, default=[1.0, 2.0, 4.0])
    args = p.parse_args()

    for r in args.r:
        gts = np.array([0.0025, 0.005, 0.01, 0.02]) / r
        s = observable_series(ModelKind.nondegenerate(), (r, r, -1j * r), np.concatenate([[0.0], gts]),
                              eps_trunc=1e-14)
        resid = s.fano_of(3)[1:] - short_time_fano(r, r, r, math.pi / 2, gts)[2]
        ratios = resid[1:] / resid[:-1]
        print(f"r={r:g}  residuals " + " ".join(f"{v:.3e}" for v in resid)
              + "  ratios " + " ".join(f"{v:.2f}" for v in ratios))


if __name__ == "__main__":
    main()
