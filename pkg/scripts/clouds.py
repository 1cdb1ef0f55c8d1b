"""Classical clouds against marginal Q functions: centroids and spreads.

    python scripts/clouds.py --r 6,4,0 --times 0 0.1 0.2 0.3 0.5 1

The cloud quadrature variance plus 1/4 is compared with the Q-grid variance.
"""
import argparse
import math

import numpy as np

from twmlab.ensemble import run_ensemble
from twmlab.quantum import ModelKind, coherent_state, evolve, husimi_marginal


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--r", default="6,4,0")
    p.add_argument("--times", nargs="+", type=float, default=[0, 0.1, 0.2, 0.3, 0.5, 1])
    p.add_argument("--n-traj", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=241)
    args = p.parse_args()

    r = tuple(float(v) for v in args.r.split(","))
    stats = run_ensemble(r, args.n_traj, [0.0], seed=args.seed, snapshots=args.times)
    state0 = coherent_state(ModelKind.nondegenerate(), r)
    half = max(r) + 6.0
    axis = np.linspace(-half, half, args.grid)
    grid = axis[None, :] + 1j * axis[:, None]
    print("  gt mode   z(Re mean) z(Im mean)  z(Re var)  z(Im var)")
    for t in args.times:
        state = evolve(state0, t)
        for k, mode in enumerate((1, 2, 3)):
            w = husimi_marginal(state, mode, axis, axis)
            w /= w.sum()
            mq = (grid * w).sum()
            cloud = stats.clouds[t][:, k]
            n = cloud.size
            z = []
            for part, m in ((np.real, mq.real), (np.imag, mq.imag)):
                z.append((part(cloud).mean() - m) / (part(cloud).std(ddof=1) / math.sqrt(n)))
            for part, m in ((np.real, mq.real), (np.imag, mq.imag)):
                vq = ((part(grid) - m) ** 2 * w).sum()
                vc = part(cloud).var(ddof=1)
                z.append((vc + 0.25 - vq) / (math.sqrt(2 / (n - 1)) * vc))
            print(f"{t:4g} {mode:4d}  " + "  ".join(f"{v:+9.2f}" for v in z))


if __name__ == "__main__":
    main()
