"""BPR-trained link prediction on the synthetic chain KG.

    python3 demos/ranking.py --steps 2000
"""

import argparse

from falcon_alc import TrainConfig, synthetic_kg, train_model
from falcon_alc.cli import ranking_queries
from falcon_alc.metrics import model_scorer, random_mrr_for, rank_metrics


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    data = synthetic_kg(seed=args.seed)
    model = train_model(data.ontology, TrainConfig(steps=args.steps, mode="ranking"),
                        seed=args.seed)
    queries = ranking_queries(data)
    for mode in ("raw", "filtered"):
        m = rank_metrics(model_scorer(model), queries, mode)
        cells = "  ".join(f"{k} {v:.3f}" for k, v in m.items())
        print(f"{mode:<9} {cells}  (random MRR {random_mrr_for(queries, mode):.3f})")


if __name__ == "__main__":
    main()
