"""Sampled oscillation moments against their linearised closed forms.

    python scripts/moment_check.py --pairs 6,6 6,4 20,20 --n-traj 100000

Deviations shrink as the amplitudes grow; the closed forms are leading order.
"""
import argparse

from twmlab.ensemble import netr_moment_check


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--pairs", nargs="+", default=["6,6", "6,4", "12,8", "20,20"])
    p.add_argument("--n-traj", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    for pair in args.pairs:
        r1, r2 = (float(v) for v in pair.split(","))
        rep = netr_moment_check(r1, r2, args.n_traj, args.seed)
        z, rel = rep.z_scores(), rep.relative_deviation()
        print(f"r1={r1:g} r2={r2:g}  mean b = {rep.b_mean:+.4f} (spread {rep.b_spread:.3f})")
        for key in rep.predicted:
            print(f"  {key:12s} est {rep.estimated[key]:10.4f}  closed form {rep.predicted[key]:10.4f}"
                  f"  rel {rel[key]:+.4f}  z {z[key]:+6.2f}")


if __name__ == "__main__":
    main()
