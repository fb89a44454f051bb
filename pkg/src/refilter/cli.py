"""Command-line surface: synth, build, rank, train, eval, curve, score,
scatter.

Every subcommand reads/writes plain data files, takes all configuration
via flags, honours a --config JSON file (explicit flags win), and falls
back to the REFILTER_SEED environment variable when no seed is given.
Exit status is nonzero exactly on error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import corpus_io, experiments, features, history, learner, vectorspace
from .corpus_io import SyntheticConfig
from .experiments import SplitSpec

EVAL_SETS = ("dev_balanced", "dev_unbalanced", "test_balanced", "test_unbalanced")
SPLIT_FILES = {
    "train": "train_ids.csv",
    "dev_balanced": "dev_balanced_ids.csv",
    "dev_unbalanced": "dev_unbalanced_ids.csv",
    "test_balanced": "test_balanced_ids.csv",
    "test_unbalanced": "test_unbalanced_ids.csv",
}


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("REFILTER_SEED")
    return int(env) if env else 0


def _add_dataclass_flags(parser: argparse.ArgumentParser, cls, skip=()) -> None:
    for f in fields(cls):
        if f.name in skip:
            continue
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f.name, type=type(f.default), default=f.default)


def _config_from_args(args, cls):
    return cls(**{f.name: getattr(args, f.name) for f in fields(cls)})


def _parse_feature_list(text: str) -> tuple[int, ...]:
    try:
        ids = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ValueError(f"invalid feature list {text!r}") from exc
    if not ids:
        raise ValueError("empty feature list")
    return ids


# ---------------------------------------------------------------------------
# shared pipeline plumbing


def _load_corpus(args) -> corpus_io.Corpus:
    return corpus_io.load_corpus_dir(args.corpus)


def _feature_context(args, corpus, hist) -> features.FeatureContext:
    if args.idf_source == "history":
        idf = vectorspace.build_idf(e.tokens for e in corpus.events)
    elif args.idf_source == "instances":
        idf = vectorspace.build_idf(i.tweet.tokens for i in corpus.instances)
    else:
        raise ValueError(f"unknown idf source {args.idf_source!r}")
    keywords = features.KeywordConfig.from_files(
        share_path=args.share_lexicon, good_path=args.good_lexicon, bad_path=args.bad_lexicon
    )
    return features.FeatureContext(corpus, hist, idf, keywords=keywords, cap=args.cap)


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--corpus", required=True, help="corpus directory")
    parser.add_argument("--idf-source", choices=("history", "instances"), default="history")
    parser.add_argument("--cap", type=int, default=history.DEFAULT_CAP,
                        help="history collection size cap")
    parser.add_argument("--share-lexicon", default=None)
    parser.add_argument("--good-lexicon", default=None)
    parser.add_argument("--bad-lexicon", default=None)


def _write_split_ids(splits: experiments.DatasetSplits, out_dir: Path) -> None:
    with open(out_dir / SPLIT_FILES["train"], "w", encoding="utf-8") as fh:
        fh.write("batch,instance_id\n")
        for b, batch in enumerate(splits.train_batches):
            for inst in batch:
                fh.write(f"{b},{inst.instance_id}\n")
    for name in EVAL_SETS:
        with open(out_dir / SPLIT_FILES[name], "w", encoding="utf-8") as fh:
            fh.write("instance_id\n")
            for inst in splits.eval_set(name):
                fh.write(f"{inst.instance_id}\n")


def _load_splits(args, corpus) -> experiments.DatasetSplits:
    split_dir = Path(args.splits)
    manifest = json.loads((split_dir / "manifest.json").read_text(encoding="utf-8"))
    spec = SplitSpec(**manifest["spec"])

    def instance(iid: int) -> corpus_io.Instance:
        inst = corpus.instance_by_id.get(iid)
        if inst is None:
            raise ValueError(f"split references unknown instance_id {iid}")
        return inst

    batches: list[list[corpus_io.Instance]] = [[] for _ in range(spec.train_batches)]
    lines = (split_dir / SPLIT_FILES["train"]).read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        b, iid = line.split(",")
        batches[int(b)].append(instance(int(iid)))

    def eval_list(name: str) -> list[corpus_io.Instance]:
        text = (split_dir / SPLIT_FILES[name]).read_text(encoding="utf-8").splitlines()
        return [instance(int(line)) for line in text[1:]]

    return experiments.DatasetSplits(
        train_batches=batches,
        dev_balanced=eval_list("dev_balanced"),
        dev_unbalanced=eval_list("dev_unbalanced"),
        test_balanced=eval_list("test_balanced"),
        test_unbalanced=eval_list("test_unbalanced"),
        spec=spec,
    )


def _hyper_from_args(args) -> learner.Hyper:
    return learner.Hyper(lam=args.reg_lambda, tol=args.tol, max_iter=args.max_iter)


def _add_hyper_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", dest="reg_lambda", type=float, default=learner.Hyper.lam)
    parser.add_argument("--tol", type=float, default=learner.Hyper.tol)
    parser.add_argument("--max-iter", type=int, default=learner.Hyper.max_iter)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    config = _config_from_args(args, SyntheticConfig)
    corpus = corpus_io.generate_synthetic(config, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus_io.write_corpus(corpus, *corpus_io.corpus_paths(out))
    manifest = {
        "seed": seed,
        "config": corpus_io.config_to_dict(config),
        "instances": len(corpus.instances),
        "events": len(corpus.events),
        "users": len(corpus.profiles),
    }
    (out / corpus_io.MANIFEST_FILE).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote corpus with {len(corpus.instances)} instances to {out}")
    return 0


def cmd_build(args) -> int:
    seed = _resolve_seed(args.seed)
    corpus = _load_corpus(args)
    spec_kwargs = {f.name: getattr(args, f.name) for f in fields(SplitSpec) if f.name != "seed"}
    # unbalanced defaults follow the 5%-positives convention for any batch size
    if spec_kwargs["unbalanced_neg_per_batch"] is None:
        spec_kwargs["unbalanced_neg_per_batch"] = spec_kwargs["batch_neg"]
    if spec_kwargs["unbalanced_pos_per_batch"] is None:
        spec_kwargs["unbalanced_pos_per_batch"] = max(
            1, min(spec_kwargs["batch_pos"], round(spec_kwargs["unbalanced_neg_per_batch"] / 19))
        )
    spec = SplitSpec(seed=seed, **spec_kwargs)
    splits = experiments.build_dataset(corpus, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_split_ids(splits, out)
    manifest = {
        "spec": {f.name: getattr(spec, f.name) for f in fields(SplitSpec)},
        "counts": {
            "train": len(splits.train_instances),
            "dev_balanced": len(splits.dev_balanced),
            "dev_unbalanced": len(splits.dev_unbalanced),
            "test_balanced": len(splits.test_balanced),
            "test_unbalanced": len(splits.test_unbalanced),
        },
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {spec.total_batches} batches to {out}")
    return 0


def cmd_rank(args) -> int:
    corpus = _load_corpus(args)
    hist = history.UserHistoryIndex(corpus)
    splits = _load_splits(args, corpus)
    ctx = _feature_context(args, corpus, hist)
    table = experiments.featurize(ctx, splits.train_instances)
    X, y = table.rows(splits.train_instances)
    ranking = experiments.rank_features(X, y, folds=args.folds)
    experiments.write_ranking(args.out, ranking)
    print(f"wrote ranking of {len(ranking)} features to {args.out}")
    return 0


def _selected_features(args) -> tuple[int, ...]:
    if args.features:
        return _parse_feature_list(args.features)
    if args.ranking:
        ranking = experiments.read_ranking(args.ranking)
        return tuple(rf.ft_id for rf in ranking[: args.top_m])
    raise ValueError("need either --features or --ranking with --top-m")


def cmd_train(args) -> int:
    corpus = _load_corpus(args)
    hist = history.UserHistoryIndex(corpus)
    splits = _load_splits(args, corpus)
    selected = _selected_features(args)
    ctx = _feature_context(args, corpus, hist)
    table = experiments.featurize(ctx, splits.train_instances)
    model = experiments.train_on_batches(
        splits, table, selected, _hyper_from_args(args), k=args.k
    )
    Path(args.out).write_text(learner.model_to_json(model) + "\n", encoding="utf-8")
    status = "converged" if model.converged else "hit max_iter"
    print(f"trained on features {list(selected)} ({status}, {model.n_iter} iterations)")
    return 0


def _load_model(path: str) -> learner.Model:
    return learner.model_from_json(Path(path).read_text(encoding="utf-8"))


def cmd_eval(args) -> int:
    corpus = _load_corpus(args)
    hist = history.UserHistoryIndex(corpus)
    splits = _load_splits(args, corpus)
    model = _load_model(args.model)
    insts = splits.eval_set(args.eval_set)
    ctx = _feature_context(args, corpus, hist)
    table = experiments.featurize(ctx, insts)
    X, y = table.rows(insts)
    metrics = experiments.evaluate(model, X, y, threshold=args.threshold)
    experiments.write_metrics(args.out, metrics)
    print(f"{args.eval_set}: precision={metrics.precision:.4f} "
          f"recall={metrics.recall:.4f} f1={metrics.f1:.4f}")
    return 0


def cmd_curve(args) -> int:
    corpus = _load_corpus(args)
    hist = history.UserHistoryIndex(corpus)
    splits = _load_splits(args, corpus)
    ctx = _feature_context(args, corpus, hist)
    table = experiments.featurize_splits(ctx, splits)
    ranking = experiments.read_ranking(args.ranking) if args.ranking else None
    points = experiments.incremental_eval(
        splits,
        table,
        top_m=args.top_m,
        hyper=_hyper_from_args(args),
        eval_set=args.eval_set,
        threshold=args.threshold,
        folds=args.folds,
        ranking=ranking,
    )
    experiments.write_curve(args.out, points)
    print(f"wrote {len(points)} curve points to {args.out}")
    return 0


def cmd_score(args) -> int:
    corpus = _load_corpus(args)
    hist = history.UserHistoryIndex(corpus)
    splits = _load_splits(args, corpus)
    model = _load_model(args.model)
    if args.split == "train":
        insts = splits.train_instances
    else:
        insts = splits.eval_set(args.split)
    ctx = _feature_context(args, corpus, hist)
    table = experiments.featurize(ctx, insts)
    X, _ = table.rows(insts)
    probs = learner.predict_proba_matrix(model, X)
    experiments.write_scores(args.out, [i.instance_id for i in insts], probs)
    print(f"scored {len(insts)} instances to {args.out}")
    return 0


def cmd_scatter(args) -> int:
    corpus = _load_corpus(args)
    hist = history.UserHistoryIndex(corpus)
    splits = _load_splits(args, corpus)
    model = _load_model(args.model)
    insts = splits.eval_set(args.eval_set)
    ctx = _feature_context(args, corpus, hist)
    table = experiments.featurize(ctx, insts)
    X, y = table.rows(insts)
    data = experiments.scatter_export(X, y, args.ft_a, args.ft_b, model, threshold=args.threshold)
    experiments.write_scatter(args.out, data)
    print(f"wrote {len(data.rows)} scatter rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="refilter",
        description="personalized global retweet filter: data, training, evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None,
                       help="JSON file with flag defaults (explicit flags win)")
        p.add_argument("--seed", type=int, default=None,
                       help="randomness seed (default: REFILTER_SEED or 0)")
        p.set_defaults(func=func)
        subparsers[name] = p
        return p

    p = add("synth", cmd_synth, "generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output corpus directory")
    _add_dataclass_flags(p, SyntheticConfig)

    p = add("build", cmd_build, "construct batched train/dev/test splits")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output split directory")
    _add_dataclass_flags(
        p, SplitSpec, skip=("seed", "unbalanced_pos_per_batch", "unbalanced_neg_per_batch")
    )
    p.add_argument("--unbalanced-pos-per-batch", dest="unbalanced_pos_per_batch",
                   type=int, default=None, help="default: 5%% positives for the batch size")
    p.add_argument("--unbalanced-neg-per-batch", dest="unbalanced_neg_per_batch",
                   type=int, default=None, help="default: batch-neg")

    p = add("rank", cmd_rank, "rank features by mean |pearson| to the label")
    _add_pipeline_flags(p)
    p.add_argument("--splits", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=10)

    p = add("train", cmd_train, "train the shared logistic-regression model")
    _add_pipeline_flags(p)
    p.add_argument("--splits", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--features", default=None, help="explicit feature ids, e.g. 10,43")
    p.add_argument("--ranking", default=None, help="ranking file for --top-m selection")
    p.add_argument("--top-m", type=int, default=10)
    p.add_argument("--k", type=int, default=None, help="train on first k batches only")
    _add_hyper_flags(p)

    p = add("eval", cmd_eval, "evaluate a model on one split")
    _add_pipeline_flags(p)
    p.add_argument("--splits", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--eval-set", choices=EVAL_SETS, default="dev_unbalanced")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = add("curve", cmd_curve, "incremental learning curve over train batches")
    _add_pipeline_flags(p)
    p.add_argument("--splits", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-m", type=int, default=10)
    p.add_argument("--ranking", default=None)
    p.add_argument("--eval-set", choices=EVAL_SETS, default="dev_unbalanced")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--folds", type=int, default=10)
    _add_hyper_flags(p)

    p = add("score", cmd_score, "per-instance retweet probabilities")
    _add_pipeline_flags(p)
    p.add_argument("--splits", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=("train",) + EVAL_SETS, default="dev_unbalanced")
    p.add_argument("--out", required=True)

    p = add("scatter", cmd_scatter, "two-feature scatter plus the learned separator")
    _add_pipeline_flags(p)
    p.add_argument("--splits", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--eval-set", choices=EVAL_SETS, default="dev_unbalanced")
    p.add_argument("--ft-a", type=int, required=True)
    p.add_argument("--ft-b", type=int, required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)

    return parser, subparsers


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()

    if "--config" in argv:
        config_path = argv[argv.index("--config") + 1]
        try:
            defaults = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"refilter: error: cannot read config {config_path}: {exc}", file=sys.stderr)
            return 1
        if not isinstance(defaults, dict):
            print("refilter: error: config file must hold a JSON object", file=sys.stderr)
            return 1
        for p in subparsers.values():
            p.set_defaults(**defaults)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # all operational failures map to exit 1
        print(f"refilter: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
