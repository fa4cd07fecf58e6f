"""Inject contradictory individuals into Family and compare single models
with the min-aggregated ensemble.

    python3 demos/paraconsistency.py --n-inc 0 5 --k 5 --steps 1000
"""

import argparse

import numpy as np

from falcon_alc.cli import BENCH_HEADER, bench_rows
from falcon_alc.datasets import builtin_family, family_config, family_name_queries


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-inc", type=int, nargs="+", default=[0, 5])
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--steps", type=int, default=1000)
    args = ap.parse_args()

    q = family_name_queries()
    rows = bench_rows(builtin_family(), family_config(steps=args.steps), args.n_inc,
                      [1, args.k], list(q.entailed), list(q.unprovable), {})
    print(" ".join(f"{h:>9}" for h in BENCH_HEADER))
    for r in rows:
        print(" ".join(f"{v:>9}" if isinstance(v, int) else f"{v:>9.3f}" for v in r))
    print("(Multi columns aggregate with min; avg_* columns average the single models)")


if __name__ == "__main__":
    np.set_printoptions(precision=3)
    main()
