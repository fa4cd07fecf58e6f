"""Train a small Family ensemble and classify the four showcase queries.

    python3 demos/family_open_world.py --k 5 --steps 2000
"""

import argparse

from falcon_alc import builtin_family, family_config, query_degree, train_ensemble
from falcon_alc.datasets import FAMILY_QUERIES, family_query


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ens = train_ensemble(builtin_family(), family_config(steps=args.steps), k=args.k,
                         base_seed=args.seed)
    print("final losses:", ", ".join(f"{v:.4f}" for v in ens.final_losses))
    for key, text in FAMILY_QUERIES.items():
        v = query_degree(ens.models, family_query(key))
        degrees = " ".join(f"{d:.2f}" for d in v.per_model)
        print(f"{v.classification:<11} {text}\n            per model: {degrees}")


if __name__ == "__main__":
    main()
