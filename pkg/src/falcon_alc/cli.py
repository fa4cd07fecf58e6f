"""Command-line interface.

Every command writes its outputs plus ``manifest.json`` into ``--out``. The
manifest records the exact argument vector, the resolved configuration, the
ontology hash, the seeds and a sha256 per output file, so
``falcon rerun <manifest>`` can replay the run and verify it bit for bit.

Exit codes: 0 success, 1 other failure, 2 parse error, 3 configuration
error, 4 numeric failure during training, 5 rerun mismatch.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from .datasets import builtin_family, family_config, family_name_queries, synthetic_kg
from .entailment import (
    AGGREGATES,
    Thresholds,
    consistency_degree,
    instantiation_degree,
    query_degree,
    subsumption_degree,
)
from .interpreter import DEFAULT_EVAL_POOL, ModelHandle
from .metrics import (
    RankingQuery,
    auc,
    aupr,
    fmax,
    inject_inconsistency,
    mae_entailed,
    model_scorer,
    random_mrr_for,
    rank_metrics,
)
from .syntax import ParseError, Subsumption, parse_axiom, parse_concept, parse_ontology
from .training import (
    ConfigError,
    TrainConfig,
    TrainingError,
    load_config,
    train_ensemble,
)

log = logging.getLogger("falcon_alc")

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISMATCH = 0, 1, 2, 3, 4, 5
MANIFEST = "manifest.json"
TRAIN_FLAGS = ("tnorm", "dim", "lr", "steps", "alpha", "beta", "seed")


# ---------------------------------------------------------------------------
# run bookkeeping
# ---------------------------------------------------------------------------


class Run:
    """Collects output files for one command and writes the manifest."""

    def __init__(self, args: argparse.Namespace, argv: Sequence[str]):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.argv = list(argv)
        self.files: list[str] = []
        self.meta: dict = {"command": args.command}
        self.t0 = time.perf_counter()

    def write_text(self, name: str, text: str) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
        self.files.append(name)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, json.dumps(obj, indent=1, sort_keys=True) + "\n")

    def write_csv(self, name: str, header: Sequence[str], rows) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return self.write_text(name, buf.getvalue())

    def finish(self) -> None:
        manifest = {
            "argv": self.argv,
            **self.meta,
            "outputs": {f: _sha256(self.out / f) for f in self.files},
            "wall_clock_seconds": round(time.perf_counter() - self.t0, 3),
        }
        (self.out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n",
                                         encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# shared option handling
# ---------------------------------------------------------------------------


def _load_ontology(args):
    if getattr(args, "builtin", None) == "family":
        return builtin_family()
    if not getattr(args, "ontology", None):
        raise ConfigError("give --ontology PATH or --builtin family")
    return parse_ontology(Path(args.ontology).read_text(encoding="utf-8"))


def _config(args) -> tuple[TrainConfig, dict]:
    """Training config from the built-in preset, then ``--config``, then flags."""
    values: dict = {}
    if getattr(args, "builtin", None) == "family":
        values.update(family_config().to_dict())
    extra: dict = {}
    if getattr(args, "config", None):
        for key, value in load_config(args.config).items():
            (values if key in TrainConfig.__dataclass_fields__ else extra)[key] = value
    for key in TRAIN_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    cfg = TrainConfig.from_mapping(values)
    return cfg, extra


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _eval_options(args, extra: dict) -> dict:
    th = Thresholds(float(extra.get("entail_threshold", 0.7)),
                    float(extra.get("disprove_threshold", 0.7)))
    if args.thresholds:
        th = Thresholds.parse(args.thresholds)
    aggregate = args.aggregate or extra.get("aggregate", "min")
    if aggregate not in AGGREGATES:
        raise ConfigError(f"aggregate must be one of {AGGREGATES}")
    pool = args.eval_pool if args.eval_pool is not None else int(
        extra.get("eval_pool_size", DEFAULT_EVAL_POOL))
    if pool < 0:
        raise ConfigError("--eval-pool must be >= 0")
    return {"thresholds": th, "aggregate": aggregate, "pool_size": pool,
            "eval_pool_seed": args.seed if args.seed is not None else 0}


def _load_models(directory) -> list[ModelHandle]:
    paths = sorted(Path(directory).glob("model_*.json"))
    if not paths:
        raise ConfigError(f"no model_*.json checkpoints in {directory}")
    return [ModelHandle.load(p) for p in paths]


def _train(args, run: Run, ontology, cfg: TrainConfig, k: int, tag: str = ""):
    ens = train_ensemble(ontology, cfg, k=k, jobs=args.jobs)
    for i, m in enumerate(ens.models):
        run.write_text(f"{tag}model_{i:03d}.json", m.to_json())
        run.write_csv(f"{tag}loss_{i:03d}.csv", ("step", "loss"),
                      ((s, repr(v)) for s, v in enumerate(m.loss_trace)))
    return ens


def _record(run: Run, ontology, cfg: TrainConfig | None, seeds=None) -> None:
    run.meta["ontology_sha256"] = ontology.digest()
    if cfg is not None:
        run.meta["config"] = cfg.to_dict()
    if seeds is not None:
        run.meta["seeds"] = list(seeds)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_train(args, run: Run) -> int:
    onto = _load_ontology(args)
    cfg, _ = _config(args)
    if args.k < 1:
        raise ConfigError("-k must be >= 1")
    _record(run, onto, cfg, [cfg.seed + i for i in range(args.k)])
    ens = _train(args, run, onto, cfg, args.k)
    run.write_json("summary.json", {"final_losses": ens.final_losses})
    return EXIT_OK


def _query_lines(args) -> list[str]:
    lines = []
    if args.query:
        lines += args.query
    if args.query_file:
        lines += Path(args.query_file).read_text(encoding="utf-8").splitlines()
    lines = [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]
    if not lines:
        raise ConfigError("no queries given (use --query or --query-file)")
    return lines


def cmd_entail(args, run: Run) -> int:
    models = _load_models(args.models)
    _, extra = _config(args)
    opts = _eval_options(args, extra)
    sig = models[0].signature
    records = []
    for line in _query_lines(args):
        try:
            ax = parse_axiom(line, sig)
        except ParseError as exc:
            log.error("query %r: %s", line, exc)
            records.append({"query": line, "error": str(exc)})
            continue
        records.append(query_degree(models, ax, **opts).to_dict())
    run.meta["models"] = str(args.models)
    run.write_json("verdicts.json", records)
    print(json.dumps(records, indent=1))
    return EXIT_OK


def cmd_instantiate(args, run: Run) -> int:
    models = _load_models(args.models)
    _, extra = _config(args)
    opts = _eval_options(args, extra)
    sig = models[0].signature
    c = parse_concept(args.concept, sig)
    who = [args.individual] if args.individual else list(sig.individual_names)
    records = [instantiation_degree(models, c, a, **opts).to_dict() for a in who]
    run.meta["models"] = str(args.models)
    run.write_json("instances.json", records)
    print(json.dumps(records, indent=1))
    return EXIT_OK


def cmd_consistency(args, run: Run) -> int:
    models = _load_models(args.models)
    _, extra = _config(args)
    opts = _eval_options(args, extra)
    abox = _load_ontology(args)
    degree = consistency_degree(models, abox, opts["eval_pool_seed"], opts["pool_size"])
    run.write_json("consistency.json", {"degree": degree, "k": len(models)})
    print(json.dumps({"degree": degree}))
    return EXIT_OK


def cmd_inject(args, run: Run) -> int:
    onto = _load_ontology(args)
    seed = args.seed if args.seed is not None else 0
    inj = inject_inconsistency(onto, args.n, np.random.default_rng(seed))
    _record(run, onto, None, [seed])
    run.write_text("ontology.txt", inj.ontology.render())
    run.write_json("injection.json", inj.manifest())
    return EXIT_OK


def _labelled_queries(args, sig):
    if getattr(args, "builtin", None) == "family" and not args.positives:
        q = family_name_queries()
        return list(q.entailed), list(q.unprovable)
    if not (args.positives and args.negatives):
        raise ConfigError("bench needs --positives and --negatives files for custom ontologies")

    def read(path):
        out = []
        for ln in Path(path).read_text(encoding="utf-8").splitlines():
            if ln.strip() and not ln.strip().startswith("#"):
                ax = parse_axiom(ln, sig)
                if not isinstance(ax, Subsumption):
                    raise ConfigError(f"bench queries must be subsumptions: {ln!r}")
                out.append(ax)
        return out

    return read(args.positives), read(args.negatives)


def _scores(models, queries, opts) -> np.ndarray:
    return np.array([subsumption_degree(models, q.sub, q.sup, **opts).aggregate for q in queries])


def _metric_row(pos, neg) -> list[float]:
    labels = [True] * len(pos) + [False] * len(neg)
    scores = np.concatenate([pos, neg])
    return [mae_entailed(pos), auc(labels, scores), aupr(labels, scores), fmax(labels, scores)]


def bench_rows(ontology, cfg: TrainConfig, n_inc: Sequence[int], ks: Sequence[int],
               positives, negatives, opts: dict, jobs: int = 1):
    """One row per (N_inc, k): Multi metrics of the k-model ensemble and
    the average of the k single-model metrics."""
    rows = []
    for n in n_inc:
        inj = inject_inconsistency(ontology, n, np.random.default_rng([cfg.seed, n]))
        ens = train_ensemble(inj.ontology, cfg, k=max(ks), jobs=jobs)
        single = [(_scores([m], positives, opts), _scores([m], negatives, opts))
                  for m in ens.models]
        for k in ks:
            sub = ens.models[:k]
            multi = _metric_row(_scores(sub, positives, opts), _scores(sub, negatives, opts))
            avg = np.mean([_metric_row(p, q) for p, q in single[:k]], axis=0).tolist()
            rows.append([n, k] + multi + avg)
    return rows


BENCH_HEADER = ("n_inc", "k", "mae", "auc", "aupr", "fmax",
                "avg_mae", "avg_auc", "avg_aupr", "avg_fmax")


def cmd_bench(args, run: Run) -> int:
    onto = _load_ontology(args)
    cfg, extra = _config(args)
    opts = _eval_options(args, extra)
    n_inc, ks = _int_list(args.n_inc), _int_list(args.k_list)
    if not n_inc or not ks or min(ks) < 1 or min(n_inc) < 0:
        raise ConfigError("--n-inc needs values >= 0 and --k-list values >= 1")
    pos, neg = _labelled_queries(args, onto.signature)
    _record(run, onto, cfg, [cfg.seed + i for i in range(max(ks))])
    rows = bench_rows(onto, cfg, n_inc, ks, pos, neg, opts, args.jobs)
    run.write_csv("bench.csv", BENCH_HEADER, [[r[0], r[1]] + [repr(float(v)) for v in r[2:]]
                                              for r in rows])
    return EXIT_OK


def ranking_queries(dataset) -> list[RankingQuery]:
    names = tuple(dataset.ontology.signature.individual_names)
    out = []
    for t in dataset.test:
        known = frozenset(a.object for a in dataset.all_true
                          if a.relation == t.relation and a.subject == t.subject
                          and a.object != t.object)
        out.append(RankingQuery(t, names, known))
    return out


def cmd_rank(args, run: Run) -> int:
    data = synthetic_kg(seed=args.seed if args.seed is not None else 0)
    cfg, _ = _config(args)
    cfg = cfg.with_(mode="ranking")
    _record(run, data.ontology, cfg, [cfg.seed])
    ens = _train(args, run, data.ontology, cfg, 1)
    queries = ranking_queries(data)
    scorer = model_scorer(ens.models[0])
    result = {mode: rank_metrics(scorer, queries, mode) for mode in ("raw", "filtered")}
    result["random_mrr"] = {mode: random_mrr_for(queries, mode) for mode in ("raw", "filtered")}
    run.write_json("ranking.json", result)
    print(json.dumps(result, indent=1))
    return EXIT_OK


def cmd_rerun(args, run_unused=None) -> int:
    manifest_path = Path(args.manifest)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    argv = list(manifest["argv"])
    out = Path(args.out) if args.out else manifest_path.parent / "rerun"
    argv = _replace_flag(_replace_flag(argv, "--out", str(out)), "--jobs", "1")
    code = main(argv)
    if code != EXIT_OK:
        return code
    mismatched = [f for f, digest in manifest["outputs"].items()
                  if not (out / f).exists() or _sha256(out / f) != digest]
    if mismatched:
        print("outputs differ: " + ", ".join(mismatched), file=sys.stderr)
        return EXIT_MISMATCH
    print(f"all {len(manifest['outputs'])} outputs are bit-identical")
    return EXIT_OK


def _replace_flag(argv: list[str], flag: str, value: str) -> list[str]:
    out, i = [], 0
    while i < len(argv):
        if argv[i] == flag:
            i += 2
            continue
        if argv[i].startswith(flag + "="):
            i += 1
            continue
        out.append(argv[i])
        i += 1
    return out + [flag, value]


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, train: bool = True, source: bool = True,
            evaluate: bool = False) -> None:
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for ensemble training")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="key = value config file")
    if source:
        p.add_argument("--ontology", help="ontology file in the native syntax")
        p.add_argument("--builtin", choices=["family"], help="use a built-in ontology")
    if train:
        p.add_argument("--tnorm", choices=["goedel", "product", "lukasiewicz"])
        p.add_argument("--dim", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
    if evaluate:
        p.add_argument("--eval-pool", type=int, default=None, dest="eval_pool",
                       help="uniform anonymous points in the evaluation pool")
        p.add_argument("--aggregate", choices=list(AGGREGATES), default=None)
        p.add_argument("--thresholds", default=None,
                       help="entailed[,disproved] classification thresholds")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="falcon", description="Fuzzy ALC model generation "
                                 "and approximate reasoning.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="generate k models")
    _common(p)
    p.add_argument("-k", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("entail", help="classify axioms against trained models")
    _common(p, train=False, source=False, evaluate=True)
    p.add_argument("--models", required=True, help="directory of model_*.json checkpoints")
    p.add_argument("--query", action="append", help="axiom in the native syntax (repeatable)")
    p.add_argument("--query-file", dest="query_file")
    p.set_defaults(func=cmd_entail)

    p = sub.add_parser("instantiate", help="membership degrees of named individuals")
    _common(p, train=False, source=False, evaluate=True)
    p.add_argument("--models", required=True)
    p.add_argument("--concept", required=True)
    p.add_argument("--individual")
    p.set_defaults(func=cmd_instantiate)

    p = sub.add_parser("consistency", help="ABox consistency degree")
    _common(p, train=False, evaluate=True)
    p.add_argument("--models", required=True)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("inject", help="add contradictory individuals")
    _common(p, train=False)
    p.add_argument("-n", type=int, required=True)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("bench", help="paraconsistency sweep over N_inc and k")
    _common(p, evaluate=True)
    p.add_argument("--n-inc", dest="n_inc", default="0,1,5,10")
    p.add_argument("--k-list", dest="k_list", default="1,5,10")
    p.add_argument("--positives", help="entailed subsumptions, one per line")
    p.add_argument("--negatives", help="unprovable subsumptions, one per line")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rank", help="ranking-mode run on the synthetic KG")
    _common(p, source=False)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("rerun", help="replay a manifest and verify its outputs")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rerun)
    return ap


def _setup_logging() -> None:
    level = os.environ.get("FALCON_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "rerun":
            return args.func(args)
        run = Run(args, argv)
        code = args.func(args, run)
        run.finish()
        return code
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
