"""Experiment harness: dataset construction, feature ranking, metrics,
incremental training curves, and the plot-ready data file formats.

Dataset construction mirrors the collection rules of the target task:
negatives from senders the recipient never retweeted before, and from
senders with no posts in the prior week, are dropped; negatives are then
downsampled per recipient to match the positives; duplicate arrivals of a
tweet keep only the earliest; both class streams are temporally ordered
and cut into fixed-size batches that feed train/dev/test splits.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus_io import Corpus, Instance
from .features import FeatureContext, extract_matrix, fit_scaling, apply_scaling
from .history import WEEK_SECONDS, UserHistoryIndex
from .learner import Hyper, Model, predict_proba_matrix, train


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    batch_pos: int = 475
    batch_neg: int = 475
    train_batches: int = 120
    dev_batches: int = 10
    test_batches: int = 10
    unbalanced_pos_per_batch: int = 25
    unbalanced_neg_per_batch: int = 475
    seed: int = 0

    def validate(self) -> None:
        for name in ("batch_pos", "batch_neg", "train_batches", "dev_batches", "test_batches"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.unbalanced_pos_per_batch <= self.batch_pos:
            raise ValueError("unbalanced_pos_per_batch must be in 1..batch_pos")
        if not 0 < self.unbalanced_neg_per_batch <= self.batch_neg:
            raise ValueError("unbalanced_neg_per_batch must be in 1..batch_neg")

    @property
    def total_batches(self) -> int:
        return self.train_batches + self.dev_batches + self.test_batches


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float

    @staticmethod
    def from_counts(tp: int, fp: int, fn: int, tn: int) -> "Metrics":
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return Metrics(tp, fp, fn, tn, precision, recall, f1)


@dataclass(frozen=True)
class RankedFeature:
    ft_id: int
    pearson_r: float  # mean |r| across folds
    rank: int


@dataclass
class DatasetSplits:
    train_batches: list[list[Instance]]
    dev_balanced: list[Instance]
    dev_unbalanced: list[Instance]
    test_balanced: list[Instance]
    test_unbalanced: list[Instance]
    spec: SplitSpec

    @property
    def train_instances(self) -> list[Instance]:
        return [inst for batch in self.train_batches for inst in batch]

    def eval_set(self, name: str) -> list[Instance]:
        sets = {
            "dev_balanced": self.dev_balanced,
            "dev_unbalanced": self.dev_unbalanced,
            "test_balanced": self.test_balanced,
            "test_unbalanced": self.test_unbalanced,
        }
        if name not in sets:
            raise ValueError(f"unknown eval set {name!r}; one of {sorted(sets)}")
        return sets[name]


def _time_key(inst: Instance) -> tuple[int, int]:
    return (inst.timestamp, inst.instance_id)


def build_dataset(
    corpus: Corpus,
    spec: SplitSpec,
    hist: UserHistoryIndex | None = None,
) -> DatasetSplits:
    """Construct the batched train/dev/test splits from a labeled corpus."""
    spec.validate()
    if hist is None:
        hist = UserHistoryIndex(corpus)

    positives: list[Instance] = []
    negatives_by_recipient: dict[int, list[Instance]] = {}
    pos_count_by_recipient: dict[int, int] = {}
    for inst in corpus.instances:
        if inst.label:
            positives.append(inst)
            pos_count_by_recipient[inst.recipient_id] = (
                pos_count_by_recipient.get(inst.recipient_id, 0) + 1
            )
        else:
            # 'easy' negatives (sender never retweeted by the recipient
            # before this arrival) and negatives from senders with no
            # posts in the prior week are excluded
            if hist.interaction(inst.recipient_id, inst.sender_id, inst.timestamp).a_retweeted_b == 0:
                continue
            if not hist.has_posts_in(inst.sender_id, inst.timestamp, WEEK_SECONDS):
                continue
            negatives_by_recipient.setdefault(inst.recipient_id, []).append(inst)

    rng = random.Random(f"{spec.seed}:downsample")
    negatives: list[Instance] = []
    for recipient in sorted(negatives_by_recipient):
        negs = sorted(negatives_by_recipient[recipient], key=_time_key)
        quota = pos_count_by_recipient.get(recipient, 0)
        if len(negs) > quota:
            negs = rng.sample(negs, quota)
        negatives.extend(negs)

    def dedup(instances: Iterable[Instance]) -> list[Instance]:
        earliest: dict[tuple[int, int], Instance] = {}
        for inst in instances:
            key = (inst.recipient_id, inst.tweet_id)
            cur = earliest.get(key)
            if cur is None or _time_key(inst) < _time_key(cur):
                earliest[key] = inst
        return list(earliest.values())

    # duplicates are resolved across both classes: the earliest arrival of
    # a tweet at a recipient wins
    merged = dedup(positives + negatives)
    pos_stream = sorted((i for i in merged if i.label), key=_time_key)
    neg_stream = sorted((i for i in merged if not i.label), key=_time_key)

    wanted = spec.total_batches
    achievable = min(len(pos_stream) // spec.batch_pos, len(neg_stream) // spec.batch_neg)
    if achievable < wanted:
        raise DatasetError(
            f"corpus supports only {achievable} batches "
            f"({len(pos_stream)} positives / {len(neg_stream)} negatives after "
            f"filtering), {wanted} requested"
        )

    batches: list[list[Instance]] = []
    for i in range(wanted):
        pos_part = pos_stream[i * spec.batch_pos : (i + 1) * spec.batch_pos]
        neg_part = neg_stream[i * spec.batch_neg : (i + 1) * spec.batch_neg]
        batches.append(sorted(pos_part + neg_part, key=_time_key))

    train = batches[: spec.train_batches]
    dev = batches[spec.train_batches : spec.train_batches + spec.dev_batches]
    test = batches[spec.train_batches + spec.dev_batches :]

    def downsample(batch_list: list[list[Instance]], split: str) -> list[Instance]:
        out: list[Instance] = []
        for idx, batch in enumerate(batch_list):
            pos = sorted((i for i in batch if i.label), key=_time_key)
            neg = sorted((i for i in batch if not i.label), key=_time_key)
            brng = random.Random(f"{spec.seed}:unbalanced:{split}:{idx}")
            if len(pos) > spec.unbalanced_pos_per_batch:
                pos = brng.sample(pos, spec.unbalanced_pos_per_batch)
            if len(neg) > spec.unbalanced_neg_per_batch:
                neg = brng.sample(neg, spec.unbalanced_neg_per_batch)
            out.extend(sorted(pos + neg, key=_time_key))
        return out

    return DatasetSplits(
        train_batches=train,
        dev_balanced=[i for b in dev for i in b],
        dev_unbalanced=downsample(dev, "dev"),
        test_balanced=[i for b in test for i in b],
        test_unbalanced=downsample(test, "test"),
        spec=spec,
    )


# ---------------------------------------------------------------------------
# feature ranking


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation; 0 when either argument has no variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two equally long 1-d sequences")
    if x.size < 2:
        raise ValueError("pearson needs at least 2 points")
    # exactly-constant input has no variance even when the mean rounds
    if np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        return 0.0
    return float(xc @ yc) / denom


def rank_features(
    matrix: np.ndarray, labels: np.ndarray, folds: int = 10
) -> list[RankedFeature]:
    """Rank features by mean |pearson r| to the label across contiguous
    cross-validation folds (each fold's training portion is scored)."""
    if folds < 2:
        raise ValueError("folds must be at least 2")
    X = np.asarray(matrix, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n = X.shape[0]
    if n < folds:
        raise ValueError(f"cannot split {n} rows into {folds} folds")

    fold_slices = np.array_split(np.arange(n), folds)
    scores = np.zeros(X.shape[1])
    for fold in fold_slices:
        keep = np.ones(n, dtype=bool)
        keep[fold] = False
        Xf, yf = X[keep], y[keep]
        for j in range(X.shape[1]):
            scores[j] += abs(pearson(Xf[:, j], yf))
    scores /= folds

    order = sorted(range(X.shape[1]), key=lambda j: (-scores[j], j))
    return [
        RankedFeature(ft_id=j + 1, pearson_r=float(scores[j]), rank=pos + 1)
        for pos, j in enumerate(order)
    ]


# ---------------------------------------------------------------------------
# evaluation


def metrics_from_predictions(
    predictions: Sequence[bool] | np.ndarray, labels: Sequence[int] | np.ndarray
) -> Metrics:
    preds = np.asarray(predictions, dtype=bool)
    truth = np.asarray(labels, dtype=bool)
    if preds.shape != truth.shape:
        raise ValueError("predictions and labels differ in length")
    tp = int(np.sum(preds & truth))
    fp = int(np.sum(preds & ~truth))
    fn = int(np.sum(~preds & truth))
    tn = int(np.sum(~preds & ~truth))
    return Metrics.from_counts(tp, fp, fn, tn)


def evaluate(
    model: Model,
    vectors: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    threshold: float = 0.5,
) -> Metrics:
    """Score raw feature vectors with the model and count outcomes."""
    probs = predict_proba_matrix(model, vectors)
    return metrics_from_predictions(probs >= threshold, labels)


# ---------------------------------------------------------------------------
# featurization plumbing shared by the harness and the CLI


@dataclass(frozen=True)
class FeatureTable:
    """Raw feature rows for a set of instances, addressable by id."""

    ids: np.ndarray
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "_row_of", {int(i): r for r, i in enumerate(self.ids)}
        )

    def rows(self, instances: Sequence[Instance]) -> tuple[np.ndarray, np.ndarray]:
        idx = [self._row_of[inst.instance_id] for inst in instances]
        return self.X[idx], self.y[idx]


def featurize(ctx: FeatureContext, instances: Sequence[Instance]) -> FeatureTable:
    unique: dict[int, Instance] = {}
    for inst in instances:
        unique.setdefault(inst.instance_id, inst)
    ordered = list(unique.values())
    ids, X, y = extract_matrix(ctx, ordered)
    return FeatureTable(ids=ids, X=X, y=y)


def featurize_splits(ctx: FeatureContext, splits: DatasetSplits) -> FeatureTable:
    instances = (
        splits.train_instances
        + splits.dev_balanced
        + splits.test_balanced
        + splits.dev_unbalanced
        + splits.test_unbalanced
    )
    return featurize(ctx, instances)


# ---------------------------------------------------------------------------
# incremental training and evaluation


@dataclass(frozen=True)
class CurvePoint:
    k: int
    train_f1: float
    eval_f1: float


def train_on_batches(
    splits: DatasetSplits,
    table: FeatureTable,
    selected: Sequence[int],
    hyper: Hyper = Hyper(),
    k: int | None = None,
) -> Model:
    """Train on the first k train batches (all of them by default), with
    scaling fit on exactly those rows."""
    k = len(splits.train_batches) if k is None else k
    if not 1 <= k <= len(splits.train_batches):
        raise ValueError(f"k must be in 1..{len(splits.train_batches)}")
    insts = [inst for batch in splits.train_batches[:k] for inst in batch]
    X_raw, y = table.rows(insts)
    scaling = fit_scaling(X_raw)
    return train(apply_scaling(X_raw, scaling), y, selected, hyper, scaling)


def incremental_eval(
    splits: DatasetSplits,
    table: FeatureTable,
    top_m: int,
    hyper: Hyper = Hyper(),
    eval_set: str = "dev_unbalanced",
    threshold: float = 0.5,
    folds: int = 10,
    ranking: Sequence[RankedFeature] | None = None,
) -> list[CurvePoint]:
    """Learning curve: for every k, train on the first k batches and score
    a fixed evaluation set.

    The feature ranking is computed once on the full training set and
    reused for all k; scaling is re-fit on the first k batches each time.
    """
    if top_m < 1:
        raise ValueError("top_m must be at least 1")
    train_insts = splits.train_instances
    if ranking is None:
        X_all, y_all = table.rows(train_insts)
        ranking = rank_features(X_all, y_all, folds=folds)
    selected = [rf.ft_id for rf in ranking[:top_m]]

    eval_insts = splits.eval_set(eval_set)
    eval_X, eval_y = table.rows(eval_insts)

    points: list[CurvePoint] = []
    for k in range(1, len(splits.train_batches) + 1):
        model = train_on_batches(splits, table, selected, hyper, k=k)
        insts_k = [inst for batch in splits.train_batches[:k] for inst in batch]
        Xk, yk = table.rows(insts_k)
        train_f1 = evaluate(model, Xk, yk, threshold).f1
        eval_f1 = evaluate(model, eval_X, eval_y, threshold).f1
        points.append(CurvePoint(k=k, train_f1=train_f1, eval_f1=eval_f1))
    return points


# ---------------------------------------------------------------------------
# two-feature scatter export


@dataclass(frozen=True)
class ScatterData:
    ft_a: int
    ft_b: int
    w_a: float
    w_b: float
    intercept: float
    rows: list[tuple[float, float, int, int]]  # (x, y, label, predicted)


def scatter_export(
    eval_X: np.ndarray,
    eval_y: np.ndarray,
    ft_a: int,
    ft_b: int,
    model: Model,
    threshold: float = 0.5,
) -> ScatterData:
    """Per-instance coordinates on two features plus the model's separator.

    The model must have been trained on exactly these two features; the
    separator parameters refer to the scaled feature space the model was
    trained in.
    """
    if set(model.selected_features) != {ft_a, ft_b}:
        raise ValueError(
            f"model uses features {model.selected_features}, expected {{{ft_a}, {ft_b}}}"
        )
    w = {ft: float(wv) for ft, wv in zip(model.selected_features, model.weights)}
    probs = predict_proba_matrix(model, eval_X)
    preds = probs >= threshold
    rows = [
        (float(x[ft_a - 1]), float(x[ft_b - 1]), int(label), int(pred))
        for x, label, pred in zip(np.atleast_2d(eval_X), eval_y, preds)
    ]
    return ScatterData(
        ft_a=ft_a,
        ft_b=ft_b,
        w_a=w[ft_a],
        w_b=w[ft_b],
        intercept=float(model.intercept),
        rows=rows,
    )


# ---------------------------------------------------------------------------
# plot-ready output files (formats are part of the artifact's contract)


def _fmt(value: float) -> str:
    return repr(float(value))


def write_curve(path: str | Path, points: Sequence[CurvePoint]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,train_f1,eval_f1\n")
        for p in points:
            fh.write(f"{p.k},{_fmt(p.train_f1)},{_fmt(p.eval_f1)}\n")


def read_curve(path: str | Path) -> list[CurvePoint]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    out = []
    for line in lines[1:]:
        k, train_f1, eval_f1 = line.split(",")
        out.append(CurvePoint(int(k), float(train_f1), float(eval_f1)))
    return out


def write_metrics(path: str | Path, metrics: Metrics) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tp,fp,fn,tn,precision,recall,f1\n")
        fh.write(
            f"{metrics.tp},{metrics.fp},{metrics.fn},{metrics.tn},"
            f"{_fmt(metrics.precision)},{_fmt(metrics.recall)},{_fmt(metrics.f1)}\n"
        )


def write_ranking(path: str | Path, ranking: Sequence[RankedFeature]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ft_id,mean_abs_pearson,rank\n")
        for rf in ranking:
            fh.write(f"{rf.ft_id},{_fmt(rf.pearson_r)},{rf.rank}\n")


def read_ranking(path: str | Path) -> list[RankedFeature]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    out = []
    for line in lines[1:]:
        ft_id, score, rank = line.split(",")
        out.append(RankedFeature(int(ft_id), float(score), int(rank)))
    return out


def write_scatter(path: str | Path, data: ScatterData) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#separator,{_fmt(data.w_a)},{_fmt(data.w_b)},{_fmt(data.intercept)}\n")
        for x, yv, label, pred in data.rows:
            fh.write(f"{_fmt(x)},{_fmt(yv)},{label},{pred}\n")


def write_scores(path: str | Path, ids: Sequence[int], probabilities: Sequence[float]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("instance_id,probability\n")
        for iid, prob in zip(ids, probabilities):
            fh.write(f"{iid},{_fmt(prob)}\n")
