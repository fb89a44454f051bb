"""Encoded corpus model: the three-file dataset format plus a synthetic
corpus generator with a planted retweet signal.

A corpus is three UTF-8 JSON-lines files (one self-describing record per
line): user profiles, history events, and labeled instances. Words are
integer token ids; ids 0-5 are reserved for the pseudo-tokens produced by
text normalization. Field names are frozen in docs/FORMATS.md.
"""

from __future__ import annotations

import heapq
import json
import math
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import vectorspace
from .textnorm import NUM_TOKEN, SMILEY_TOKENS, URL_TOKEN

# reserved token ids for the normalization pseudo-tokens
PSEUDO_TOKEN_IDS: dict[str, int] = {
    URL_TOKEN: 0,
    NUM_TOKEN: 1,
    SMILEY_TOKENS["love"]: 2,
    SMILEY_TOKENS["positive"]: 3,
    SMILEY_TOKENS["negative"]: 4,
    SMILEY_TOKENS["neutral"]: 5,
}
FIRST_WORD_ID = 6

ACTIONS = ("authored", "retweeted", "seen")
_ACTION_RANK = {a: i for i, a in enumerate(ACTIONS)}

PROFILES_FILE = "profiles.jsonl"
HISTORY_FILE = "history.jsonl"
INSTANCES_FILE = "instances.jsonl"
MANIFEST_FILE = "manifest.json"


class CorpusError(ValueError):
    """Base class for corpus loading problems."""


class CorpusFormatError(CorpusError):
    """A record line that cannot be parsed; names the file and line."""


class CorpusIntegrityError(CorpusError):
    """A reference that does not resolve, or a duplicated identifier."""


@dataclass(frozen=True, slots=True)
class EncodedToken:
    """A vocabulary entry of the encoded release format."""

    token_id: int
    is_pseudo: bool


@dataclass(frozen=True, slots=True)
class UserProfile:
    user_id: int
    followers: int
    following: int
    statuses: int
    listed: int
    verified: bool
    account_age_days: int
    has_profile_url: bool
    klout: float
    klout_delta_1d: float = 0.0
    klout_delta_7d: float = 0.0
    klout_delta_30d: float = 0.0
    neighbours: frozenset[int] = frozenset()


@dataclass(frozen=True, slots=True)
class HistoryEvent:
    user_id: int
    tweet_id: int
    action: str
    timestamp: int
    tokens: tuple[int, ...]
    mentions_user: int | None = None


@dataclass(frozen=True, slots=True)
class EncodedTweet:
    """Normalized tweet content in integer-id form, plus surface flags."""

    tokens: tuple[int, ...]
    char_length: int
    has_url: bool = False
    has_photo: bool = False
    has_hashtag: bool = False
    has_exclamation: bool = False
    mentions: tuple[int, ...] = ()


@dataclass(frozen=True, slots=True)
class Instance:
    """One classification example: a tweet delivered to a recipient."""

    instance_id: int
    tweet_id: int
    author_id: int
    sender_id: int
    recipient_id: int
    timestamp: int
    label: bool
    tweet: EncodedTweet
    global_retweet_count: int = 0
    global_favourite_count: int = 0
    pos_counts: Mapping[str, int] | None = None


def _event_key(e: HistoryEvent) -> tuple:
    return (e.timestamp, e.user_id, _ACTION_RANK[e.action], e.tweet_id)


@dataclass
class Corpus:
    """An in-memory dataset: profiles, time-sorted events, instances."""

    profiles: dict[int, UserProfile]
    events: list[HistoryEvent]
    instances: list[Instance]

    def __post_init__(self) -> None:
        self.events = sorted(self.events, key=_event_key)
        self.instances = sorted(self.instances, key=lambda i: i.instance_id)
        self.instance_by_id = {i.instance_id: i for i in self.instances}


class Vocabulary:
    """String-token to integer-id mapping with the reserved pseudo ids."""

    def __init__(self) -> None:
        self._to_id: dict[str, int] = dict(PSEUDO_TOKEN_IDS)
        self._to_token: dict[int, str] = {v: k for k, v in PSEUDO_TOKEN_IDS.items()}

    def encode(self, tokens: Iterable[str]) -> tuple[int, ...]:
        out = []
        for tok in tokens:
            tid = self._to_id.get(tok)
            if tid is None:
                tid = len(self._to_id)
                self._to_id[tok] = tid
                self._to_token[tid] = tok
            out.append(tid)
        return tuple(out)

    def decode(self, ids: Iterable[int]) -> tuple[str, ...]:
        return tuple(self._to_token[i] for i in ids)

    def id_to_token(self) -> dict[int, str]:
        return dict(self._to_token)

    @staticmethod
    def is_pseudo_id(token_id: int) -> bool:
        return 0 <= token_id < FIRST_WORD_ID


# ---------------------------------------------------------------------------
# reading and writing


def corpus_paths(directory: str | Path) -> tuple[Path, Path, Path]:
    d = Path(directory)
    return d / PROFILES_FILE, d / HISTORY_FILE, d / INSTANCES_FILE


def _read_records(path: Path, required: Sequence[str]) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise CorpusFormatError(f"{path}:{lineno}: record is not an object")
            for key in required:
                if key not in record:
                    raise CorpusFormatError(f"{path}:{lineno}: missing field {key!r}")
            yield lineno, record


_PROFILE_REQUIRED = (
    "user_id", "followers", "following", "statuses", "listed", "verified",
    "account_age_days", "has_profile_url", "neighbours",
)
_EVENT_REQUIRED = ("user_id", "tweet_id", "action", "timestamp", "tokens")
_INSTANCE_REQUIRED = (
    "instance_id", "tweet_id", "author_id", "sender_id", "recipient_id",
    "timestamp", "label", "tokens", "char_length",
)


def load_corpus(
    profiles_path: str | Path,
    history_path: str | Path,
    instances_path: str | Path,
) -> Corpus:
    """Read the three record files into a validated, indexed corpus.

    Malformed lines raise CorpusFormatError naming the file and line;
    references to unknown users raise CorpusIntegrityError naming the id.
    """
    profiles: dict[int, UserProfile] = {}
    profiles_path = Path(profiles_path)
    for lineno, rec in _read_records(profiles_path, _PROFILE_REQUIRED):
        uid = int(rec["user_id"])
        if uid in profiles:
            raise CorpusIntegrityError(f"{profiles_path}: duplicate user_id {uid}")
        profiles[uid] = UserProfile(
            user_id=uid,
            followers=int(rec["followers"]),
            following=int(rec["following"]),
            statuses=int(rec["statuses"]),
            listed=int(rec["listed"]),
            verified=bool(rec["verified"]),
            account_age_days=int(rec["account_age_days"]),
            has_profile_url=bool(rec["has_profile_url"]),
            klout=float(rec.get("klout", 0.0)),
            klout_delta_1d=float(rec.get("klout_delta_1d", 0.0)),
            klout_delta_7d=float(rec.get("klout_delta_7d", 0.0)),
            klout_delta_30d=float(rec.get("klout_delta_30d", 0.0)),
            neighbours=frozenset(int(n) for n in rec["neighbours"]),
        )

    events: list[HistoryEvent] = []
    history_path = Path(history_path)
    for lineno, rec in _read_records(history_path, _EVENT_REQUIRED):
        action = rec["action"]
        if action not in ACTIONS:
            raise CorpusFormatError(f"{history_path}:{lineno}: unknown action {action!r}")
        mentions_user = rec.get("mentions_user")
        events.append(
            HistoryEvent(
                user_id=int(rec["user_id"]),
                tweet_id=int(rec["tweet_id"]),
                action=action,
                timestamp=int(rec["timestamp"]),
                tokens=tuple(int(t) for t in rec["tokens"]),
                mentions_user=None if mentions_user is None else int(mentions_user),
            )
        )

    instances: list[Instance] = []
    seen_ids: set[int] = set()
    instances_path = Path(instances_path)
    for lineno, rec in _read_records(instances_path, _INSTANCE_REQUIRED):
        iid = int(rec["instance_id"])
        if iid in seen_ids:
            raise CorpusIntegrityError(f"{instances_path}:{lineno}: duplicate instance_id {iid}")
        seen_ids.add(iid)
        label = rec["label"]
        if label not in (0, 1, True, False):
            raise CorpusFormatError(f"{instances_path}:{lineno}: label must be 0 or 1")
        pos_counts = rec.get("pos_counts")
        instances.append(
            Instance(
                instance_id=iid,
                tweet_id=int(rec["tweet_id"]),
                author_id=int(rec["author_id"]),
                sender_id=int(rec["sender_id"]),
                recipient_id=int(rec["recipient_id"]),
                timestamp=int(rec["timestamp"]),
                label=bool(label),
                tweet=EncodedTweet(
                    tokens=tuple(int(t) for t in rec["tokens"]),
                    char_length=int(rec["char_length"]),
                    has_url=bool(rec.get("has_url", False)),
                    has_photo=bool(rec.get("has_photo", False)),
                    has_hashtag=bool(rec.get("has_hashtag", False)),
                    has_exclamation=bool(rec.get("has_exclamation", False)),
                    mentions=tuple(int(m) for m in rec.get("mentions", ())),
                ),
                global_retweet_count=int(rec.get("global_retweet_count", 0)),
                global_favourite_count=int(rec.get("global_favourite_count", 0)),
                pos_counts=None if pos_counts is None else {k: int(v) for k, v in pos_counts.items()},
            )
        )

    corpus = Corpus(profiles=profiles, events=events, instances=instances)
    _check_integrity(corpus)
    return corpus


def load_corpus_dir(directory: str | Path) -> Corpus:
    return load_corpus(*corpus_paths(directory))


def _check_integrity(corpus: Corpus) -> None:
    known = corpus.profiles.keys()

    def need(uid: int, where: str) -> None:
        if uid not in known:
            raise CorpusIntegrityError(f"unknown user_id {uid} referenced by {where}")

    for uid, profile in corpus.profiles.items():
        if uid in profile.neighbours:
            raise CorpusIntegrityError(f"user {uid} lists itself as a neighbour")
        for n in profile.neighbours:
            need(n, f"neighbours of user {uid}")
    for e in corpus.events:
        need(e.user_id, f"history event on tweet {e.tweet_id}")
        if e.mentions_user is not None:
            need(e.mentions_user, f"mention in history event on tweet {e.tweet_id}")
    for inst in corpus.instances:
        where = f"instance {inst.instance_id}"
        need(inst.sender_id, f"sender of {where}")
        need(inst.recipient_id, f"recipient of {where}")
        need(inst.author_id, f"author of {where}")
        for m in inst.tweet.mentions:
            need(m, f"mention in {where}")
        if inst.sender_id == inst.recipient_id:
            raise CorpusIntegrityError(f"{where} has sender == recipient ({inst.sender_id})")


def _dump(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def write_corpus(
    corpus: Corpus,
    profiles_path: str | Path,
    history_path: str | Path,
    instances_path: str | Path,
) -> None:
    """Write the three record files with a deterministic field and row order."""
    with open(profiles_path, "w", encoding="utf-8") as fh:
        for uid in sorted(corpus.profiles):
            p = corpus.profiles[uid]
            fh.write(_dump({
                "user_id": p.user_id,
                "followers": p.followers,
                "following": p.following,
                "statuses": p.statuses,
                "listed": p.listed,
                "verified": int(p.verified),
                "account_age_days": p.account_age_days,
                "has_profile_url": int(p.has_profile_url),
                "klout": p.klout,
                "klout_delta_1d": p.klout_delta_1d,
                "klout_delta_7d": p.klout_delta_7d,
                "klout_delta_30d": p.klout_delta_30d,
                "neighbours": sorted(p.neighbours),
            }) + "\n")
    with open(history_path, "w", encoding="utf-8") as fh:
        for e in corpus.events:
            fh.write(_dump({
                "user_id": e.user_id,
                "tweet_id": e.tweet_id,
                "action": e.action,
                "timestamp": e.timestamp,
                "tokens": list(e.tokens),
                "mentions_user": e.mentions_user,
            }) + "\n")
    with open(instances_path, "w", encoding="utf-8") as fh:
        for inst in corpus.instances:
            record = {
                "instance_id": inst.instance_id,
                "tweet_id": inst.tweet_id,
                "author_id": inst.author_id,
                "sender_id": inst.sender_id,
                "recipient_id": inst.recipient_id,
                "timestamp": inst.timestamp,
                "label": int(inst.label),
                "tokens": list(inst.tweet.tokens),
                "char_length": inst.tweet.char_length,
                "has_url": int(inst.tweet.has_url),
                "has_photo": int(inst.tweet.has_photo),
                "has_hashtag": int(inst.tweet.has_hashtag),
                "has_exclamation": int(inst.tweet.has_exclamation),
                "mentions": list(inst.tweet.mentions),
                "global_retweet_count": inst.global_retweet_count,
                "global_favourite_count": inst.global_favourite_count,
                "pos_counts": None if inst.pos_counts is None else dict(inst.pos_counts),
            }
            fh.write(_dump(record) + "\n")


def write_corpus_dir(corpus: Corpus, directory: str | Path) -> None:
    Path(directory).mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, *corpus_paths(directory))


# ---------------------------------------------------------------------------
# synthetic corpora


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs of the synthetic corpus generator.

    Labels are sampled from a logistic model over four planted quantities
    (sender-history similarity, recipient-retweet-history similarity,
    capped recipient-to-author retweet count, author-is-neighbour flag);
    `signal_strength` is the shared coefficient magnitude, so 0 yields
    labels independent of all features with positive rate `retweet_rate`.
    """

    num_recipients: int = 30
    neighbours_per_user: int = 12
    vocab_size: int = 480
    topics: int = 6
    days: int = 30
    retweet_rate: float = 0.3
    signal_strength: float = 0.0
    posts_per_day: float = 2.5
    recipient_posts_per_day: float = 1.0
    publisher_pool: int = 0  # 0 means 2 * neighbours_per_user
    tweet_length_mean: float = 16.0
    forward_rate: float = 0.1  # share of publisher posts that pass on an older tweet
    mention_rate: float = 0.1
    topic_concentration: float = 0.02  # Dirichlet alpha of each topic's word distribution
    user_topics: int = 3  # each user posts a flat mixture over this many topics
    liked_topics: int = 2  # each recipient's seeded taste spans this many topics
    seed_tweets_per_topic: int = 2  # burn-in posts per (user, topic) that seed tastes
    start_timestamp: int = 1_400_000_000

    def validate(self) -> None:
        for name in ("num_recipients", "neighbours_per_user", "vocab_size", "topics", "days"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.retweet_rate < 1.0:
            raise ValueError("retweet_rate must lie in (0, 1)")
        if self.signal_strength < 0:
            raise ValueError("signal_strength must be non-negative")
        if not 0 < self.user_topics <= self.topics:
            raise ValueError("user_topics must be in 1..topics")
        if not 0 < self.liked_topics <= self.topics:
            raise ValueError("liked_topics must be in 1..topics")


def config_to_dict(config: SyntheticConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in fields(SyntheticConfig)}


def config_from_dict(data: Mapping) -> SyntheticConfig:
    known = {f.name for f in fields(SyntheticConfig)}
    return SyntheticConfig(**{k: v for k, v in data.items() if k in known})


# Planted-model shape: decision value of instance i (in creation order)
#   z_i = logit(retweet_rate) + drift_i + signal * sum_f w_f * (x_f - c_f)
# where each planted quantity x_f is a saturating [0, 1] normalization of
# one feature (similarities divided by PLANT_SIM_SCALE and capped, the
# recipient-to-author retweet count divided by its cap, the neighbour
# flag as is) and every coefficient has magnitude `signal`. The planted
# set covers the sender-history and recipient-retweet-history
# similarities, the week-windowed retweet similarity, the
# recipient-to-author retweet count, and the author-is-neighbour flag.
# The drift term is a slow, clamped stochastic-approximation correction,
# drift_{i+1} = drift_i - eta * (label_i - retweet_rate), which keeps the
# realized positive rate near the target despite the self-reinforcing
# planted features (a recipient's retweets feed the very histories the
# features are computed from). It is exactly replayable from the stored
# labels.
PLANT_HISTORY_CAP = 25
PLANT_RETWEET_COUNT_CAP = 2.0
PLANT_SIM_SCALE = 0.15
PLANT_ADAPT_RATE = 0.08
PLANT_DRIFT_LIMIT = 2.0
PLANT_WEEK = 7 * 86400
PLANT_WEIGHTS = {
    "sender_sim": -1.0,
    "retweet_sim": 1.0,
    "retweet_week_sim": 1.0,
    "retweet_count": 1.0,
    "author_neighbour": 1.0,
}
PLANT_CENTERS = {
    "sender_sim": 0.80,
    "retweet_sim": 0.65,
    "retweet_week_sim": 0.50,
    "retweet_count": 0.80,
    "author_neighbour": 0.80,
}
_RETWEET_DELAY = 60  # seconds between receiving a tweet and retweeting it


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@dataclass(frozen=True)
class PlantedModel:
    """The label model a synthetic corpus was sampled from."""

    signal_strength: float
    intercept: float
    target_rate: float
    weights: Mapping[str, float]
    centers: Mapping[str, float]
    history_cap: int = PLANT_HISTORY_CAP
    count_cap: float = PLANT_RETWEET_COUNT_CAP
    sim_scale: float = PLANT_SIM_SCALE
    adapt_rate: float = PLANT_ADAPT_RATE
    drift_limit: float = PLANT_DRIFT_LIMIT
    week: int = PLANT_WEEK

    def decision_value(self, planted: Mapping[str, float], drift: float = 0.0) -> float:
        z = self.intercept + drift
        for name, w in self.weights.items():
            z += self.signal_strength * w * (planted[name] - self.centers[name])
        return z

    def probability(self, planted: Mapping[str, float], drift: float = 0.0) -> float:
        return _sigmoid(self.decision_value(planted, drift))

    def next_drift(self, drift: float, label: bool) -> float:
        drift -= self.adapt_rate * ((1.0 if label else 0.0) - self.target_rate)
        return max(-self.drift_limit, min(self.drift_limit, drift))


def planted_model(config: SyntheticConfig) -> PlantedModel:
    return PlantedModel(
        signal_strength=config.signal_strength,
        intercept=math.log(config.retweet_rate / (1.0 - config.retweet_rate)),
        target_rate=config.retweet_rate,
        weights=dict(PLANT_WEIGHTS),
        centers=dict(PLANT_CENTERS),
    )


class _RollingStream:
    """Most-recent-`cap` docs of one user stream (optionally limited to a
    trailing time window), with a running vector sum."""

    __slots__ = ("cap", "window", "docs", "sums", "counts")

    def __init__(self, cap: int, window: int | None = None) -> None:
        self.cap = cap
        self.window = window
        self.docs: deque = deque()  # (timestamp, tweet_id, vec)
        self.sums: dict = {}
        self.counts: dict[int, int] = {}

    def _drop_oldest(self) -> None:
        _, old_id, old_vec = self.docs.popleft()
        for t, w in old_vec.items():
            self.sums[t] -= w
        left = self.counts[old_id] - 1
        if left:
            self.counts[old_id] = left
        else:
            del self.counts[old_id]

    def push(self, ts: int, tweet_id: int, vec: dict) -> None:
        self.docs.append((ts, tweet_id, vec))
        for t, w in vec.items():
            self.sums[t] = self.sums.get(t, 0.0) + w
        self.counts[tweet_id] = self.counts.get(tweet_id, 0) + 1
        if len(self.docs) > self.cap:
            self._drop_oldest()

    def mean_similarity(self, vec: dict, exclude_tweet_id: int, now: int) -> float:
        if self.window is not None:
            horizon = now - self.window
            while self.docs and self.docs[0][0] < horizon:
                self._drop_oldest()
        n = len(self.docs)
        if n == 0:
            return 0.0
        total = sum(w * self.sums.get(t, 0.0) for t, w in vec.items())
        dup = self.counts.get(exclude_tweet_id, 0)
        if dup:
            total -= dup * vectorspace.cosine(vec, vec)
            n -= dup
        if n <= 0:
            return 0.0
        return min(max(total / n, 0.0), 1.0)


@dataclass(frozen=True, slots=True)
class _Tweet:
    tweet_id: int
    author_id: int
    tokens: tuple[int, ...]
    tweet: EncodedTweet
    global_retweet_count: int
    global_favourite_count: int
    pos_counts: dict


def _planted_pos_counts(tokens: Sequence[int]) -> dict:
    """Deterministic stand-in for tagger output on encoded tokens."""
    nv = det = indet = 0
    for t in tokens:
        if t < FIRST_WORD_ID:
            continue
        h = (t * 2654435761) % 100
        if h < 45:
            nv += 1
        elif h < 52:
            det += 1
        elif h < 56:
            indet += 1
    return {"nouns_verbs": nv, "definite_articles": det, "indefinite_articles": indet}


def generate_synthetic(config: SyntheticConfig, seed: int) -> Corpus:
    """Sample a corpus whose labels follow the planted logistic model.

    Fully reproducible from `seed`. The random draws do not depend on
    `signal_strength`, so corpora generated at different strengths from
    the same seed share their timeline and differ only in labels and the
    retweet events those labels induce.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    n_rec = config.num_recipients
    pool = config.publisher_pool or 2 * config.neighbours_per_user
    recipients = list(range(1, n_rec + 1))
    publishers = list(range(n_rec + 1, n_rec + pool + 1))
    all_users = recipients + publishers

    # topics own disjoint vocabulary blocks, so cross-topic text similarity
    # is exactly zero and the planted signal separates cleanly
    block = config.vocab_size // config.topics
    topic_word = np.zeros((config.topics, config.vocab_size))
    for k in range(config.topics):
        lo = k * block
        hi = (k + 1) * block if k < config.topics - 1 else config.vocab_size
        topic_word[k, lo:hi] = rng.dirichlet(
            np.full(hi - lo, config.topic_concentration)
        )
    # each user posts a flat mixture over a small topic subset, so tweets
    # of a user are always well inside their own history (their novelty
    # quantity saturates) while still varying in topic
    user_topic_sets = {
        u: tuple(
            sorted(int(k) for k in rng.choice(config.topics, size=min(config.user_topics, config.topics), replace=False))
        )
        for u in all_users
    }
    # a recipient's taste: the topics its seeded retweet history starts on
    liked_topic_sets = {
        r: frozenset(
            int(k) for k in rng.choice(config.topics, size=min(config.liked_topics, config.topics), replace=False)
        )
        for r in recipients
    }

    follows: dict[int, tuple[int, ...]] = {}
    for r in recipients:
        candidates = np.array([u for u in all_users if u != r])
        k = min(config.neighbours_per_user, len(candidates))
        picked = rng.choice(candidates, size=k, replace=False)
        follows[r] = tuple(sorted(int(x) for x in picked))
    followers: dict[int, list[int]] = {u: [] for u in all_users}
    for r in recipients:
        for u in follows[r]:
            followers[u].append(r)
    for u in all_users:
        followers[u].sort()
    follow_sets = {r: set(ns) for r, ns in follows.items()}

    horizon = config.days * 86400
    moments: list[tuple[int, int]] = []
    for u in all_users:
        rate = config.recipient_posts_per_day if u <= n_rec else config.posts_per_day
        count = int(rng.poisson(rate * config.days))
        times = sorted(int(t) for t in rng.integers(0, horizon, size=count))
        moments.extend((config.start_timestamp + t, u) for t in times)
    moments.sort()

    plant = planted_model(config)
    signal = config.signal_strength
    drift = 0.0
    uniform_idf = vectorspace.IdfTable.uniform()

    # plant state, visible strictly before the current timestamp
    posts_streams: dict[int, _RollingStream] = {}
    retweet_streams: dict[int, _RollingStream] = {}
    retweet_week_streams: dict[int, _RollingStream] = {}
    retweet_counts: dict[tuple[int, int], int] = {}
    pending: list[tuple[int, int, str, tuple]] = []  # (ts, seq, kind, payload)
    pending_seq = 0

    def stream(table: dict, user: int, window: int | None = None) -> _RollingStream:
        s = table.get(user)
        if s is None:
            s = table[user] = _RollingStream(PLANT_HISTORY_CAP, window)
        return s

    def flush_before(ts: int) -> None:
        while pending and pending[0][0] < ts:
            ev_ts, _, kind, payload = heapq.heappop(pending)
            if kind == "post":
                user, tweet_id, vec = payload
                stream(posts_streams, user).push(ev_ts, tweet_id, vec)
            else:  # retweet by `user` of a tweet authored by `author`
                user, author, tweet_id, vec = payload
                stream(posts_streams, user).push(ev_ts, tweet_id, vec)
                stream(retweet_streams, user).push(ev_ts, tweet_id, vec)
                stream(retweet_week_streams, user, plant.week).push(ev_ts, tweet_id, vec)
                key = (user, author)
                retweet_counts[key] = retweet_counts.get(key, 0) + 1

    def push_pending(ts: int, kind: str, payload: tuple) -> None:
        nonlocal pending_seq
        heapq.heappush(pending, (ts, pending_seq, kind, payload))
        pending_seq += 1

    tweets: dict[int, _Tweet] = {}
    tweet_vecs: dict[int, dict] = {}
    buffer: deque[_Tweet] = deque(maxlen=500)
    events: list[HistoryEvent] = []
    instances: list[Instance] = []
    status_counts = {u: 0 for u in all_users}
    word_base = FIRST_WORD_ID

    def mint_tweet(u: int, topic: int, ts: int) -> _Tweet:
        length = 3 + int(rng.poisson(max(config.tweet_length_mean - 3.0, 0.0)))
        tokens = [
            word_base + int(t)
            for t in rng.choice(config.vocab_size, size=length, p=topic_word[topic])
        ]
        draws = rng.random(5)
        has_url = bool(draws[0] < 0.25)
        if draws[1] < 0.15:
            tokens.append(PSEUDO_TOKEN_IDS[NUM_TOKEN])
        mentioned: tuple[int, ...] = ()
        mention_target: int | None = None
        if followers[u] and rng.random() < config.mention_rate:
            mention_target = followers[u][int(rng.integers(0, len(followers[u])))]
            mentioned = (mention_target,)
        tweet_id = len(tweets) + 1
        token_tuple = tuple(tokens)
        tweet = _Tweet(
            tweet_id=tweet_id,
            author_id=u,
            tokens=token_tuple,
            tweet=EncodedTweet(
                tokens=token_tuple,
                char_length=int(6 * len(token_tuple)),
                has_url=has_url,
                has_photo=bool(draws[4] < 0.1),
                has_hashtag=bool(draws[2] < 0.2),
                has_exclamation=bool(draws[3] < 0.2),
                mentions=mentioned,
            ),
            global_retweet_count=int(rng.poisson(1 + 0.5 * len(followers[u]))),
            global_favourite_count=int(rng.poisson(1 + len(followers[u]))),
            pos_counts=_planted_pos_counts(token_tuple),
        )
        tweets[tweet_id] = tweet
        events.append(HistoryEvent(u, tweet_id, "authored", ts, token_tuple, mention_target))
        status_counts[u] += 1
        if signal > 0:
            vec = tweet_vecs.setdefault(
                tweet_id, vectorspace.vectorize(token_tuple, uniform_idf)
            )
            push_pending(ts, "post", (u, tweet_id, vec))
        return tweet

    # burn-in: every user posts a few tweets per topic shortly before the
    # main window, and recipients retweet the ones matching their taste;
    # this seeds retweet histories and sender-recipient counters so the
    # planted signal is visible from the first delivered instance
    seed_window = 3 * 86400
    for u in all_users:
        for topic in user_topic_sets[u]:
            for _ in range(config.seed_tweets_per_topic):
                ts = config.start_timestamp - seed_window + int(
                    rng.integers(0, seed_window - 2 * _RETWEET_DELAY)
                )
                tweet = mint_tweet(u, topic, ts)
                for r in followers[u]:
                    if topic in liked_topic_sets[r]:
                        rt_ts = ts + _RETWEET_DELAY
                        events.append(
                            HistoryEvent(r, tweet.tweet_id, "retweeted", rt_ts, tweet.tokens, None)
                        )
                        status_counts[r] += 1
                        if signal > 0:
                            push_pending(
                                rt_ts, "retweet", (r, u, tweet.tweet_id, tweet_vecs[tweet.tweet_id])
                            )

    for ts, u in moments:
        if signal > 0:
            flush_before(ts)

        forward = None
        if u > n_rec and buffer and rng.random() < config.forward_rate:
            forward = buffer[int(rng.integers(0, len(buffer)))]
            if forward.author_id == u:
                forward = None

        if forward is None:
            topic_set = user_topic_sets[u]
            topic = topic_set[int(rng.integers(0, len(topic_set)))]
            tweet = mint_tweet(u, topic, ts)
            buffer.append(tweet)
        else:
            tweet = forward
            events.append(HistoryEvent(u, tweet.tweet_id, "retweeted", ts, tweet.tokens, None))
            status_counts[u] += 1
            if signal > 0:
                vec = tweet_vecs.setdefault(
                    tweet.tweet_id, vectorspace.vectorize(tweet.tokens, uniform_idf)
                )
                push_pending(ts, "retweet", (u, tweet.author_id, tweet.tweet_id, vec))

        author = tweet.author_id
        for r in followers[u]:
            if r == author:
                continue
            label_draw = float(rng.random())
            if signal > 0:
                vec = tweet_vecs[tweet.tweet_id]
                planted = {
                    "sender_sim": min(
                        stream(posts_streams, u).mean_similarity(vec, tweet.tweet_id, ts)
                        / PLANT_SIM_SCALE,
                        1.0,
                    ),
                    "retweet_sim": min(
                        stream(retweet_streams, r).mean_similarity(vec, tweet.tweet_id, ts)
                        / PLANT_SIM_SCALE,
                        1.0,
                    ),
                    "retweet_week_sim": min(
                        stream(retweet_week_streams, r, plant.week).mean_similarity(
                            vec, tweet.tweet_id, ts
                        )
                        / PLANT_SIM_SCALE,
                        1.0,
                    ),
                    "retweet_count": min(retweet_counts.get((r, author), 0), PLANT_RETWEET_COUNT_CAP)
                    / PLANT_RETWEET_COUNT_CAP,
                    "author_neighbour": 1.0 if author in follow_sets[r] else 0.0,
                }
                p = plant.probability(planted, drift)
            else:
                p = config.retweet_rate
            label = label_draw < p
            if signal > 0:
                drift = plant.next_drift(drift, label)
            instance_id = len(instances) + 1
            instances.append(
                Instance(
                    instance_id=instance_id,
                    tweet_id=tweet.tweet_id,
                    author_id=author,
                    sender_id=u,
                    recipient_id=r,
                    timestamp=ts,
                    label=label,
                    tweet=tweet.tweet,
                    global_retweet_count=tweet.global_retweet_count,
                    global_favourite_count=tweet.global_favourite_count,
                    pos_counts=tweet.pos_counts,
                )
            )
            events.append(HistoryEvent(r, tweet.tweet_id, "seen", ts, tweet.tokens, None))
            if label:
                rt_ts = ts + _RETWEET_DELAY
                events.append(HistoryEvent(r, tweet.tweet_id, "retweeted", rt_ts, tweet.tokens, None))
                status_counts[r] += 1
                if signal > 0:
                    vec = tweet_vecs[tweet.tweet_id]
                    push_pending(rt_ts, "retweet", (r, author, tweet.tweet_id, vec))

    profiles: dict[int, UserProfile] = {}
    for u in all_users:
        followers_n = len(followers[u]) * 40 + int(rng.poisson(30))
        following_n = len(follows.get(u, ())) + int(rng.poisson(40))
        statuses = status_counts[u]
        listed = int(rng.poisson(1 + followers_n / 100))
        verified = bool(rng.random() < 0.12)
        age = int(rng.integers(120, 3200))
        has_url = bool(rng.random() < 0.4)
        # influence stand-in: log-scaled composite of audience and activity
        klout = min(100.0, 18.0 * math.log10(1 + followers_n) + 7.0 * math.log10(1 + statuses))
        deltas = rng.normal(0.0, 0.4, size=3)
        profiles[u] = UserProfile(
            user_id=u,
            followers=followers_n,
            following=following_n,
            statuses=statuses,
            listed=listed,
            verified=verified,
            account_age_days=age,
            has_profile_url=has_url,
            klout=round(klout, 4),
            klout_delta_1d=round(float(deltas[0]), 4),
            klout_delta_7d=round(float(deltas[1]), 4),
            klout_delta_30d=round(float(deltas[2]), 4),
            neighbours=frozenset(follows.get(u, ())),
        )

    corpus = Corpus(profiles=profiles, events=events, instances=instances)
    _check_integrity(corpus)
    return corpus


def planted_features(
    corpus: Corpus,
    instances: Sequence[Instance] | None = None,
    history_cap: int = PLANT_HISTORY_CAP,
    count_cap: float = PLANT_RETWEET_COUNT_CAP,
    sim_scale: float = PLANT_SIM_SCALE,
    week: int = PLANT_WEEK,
) -> list[dict[str, float]]:
    """Recompute the planted quantities for instances of a synthetic corpus.

    Independent of the generator's incremental bookkeeping: scans the
    written events directly, so it can serve as an oracle against them.
    """
    if instances is None:
        instances = corpus.instances

    posts: dict[int, list[tuple[int, int]]] = {}  # user -> [(ts, tweet_id)]
    retweets: dict[int, list[tuple[int, int]]] = {}
    author_of: dict[int, int] = {}
    for e in corpus.events:
        if e.action == "authored":
            author_of.setdefault(e.tweet_id, e.user_id)
    for inst in corpus.instances:
        author_of.setdefault(inst.tweet_id, inst.author_id)
    pair_retweet_times: dict[tuple[int, int], list[int]] = {}
    for e in corpus.events:
        if e.action == "authored":
            posts.setdefault(e.user_id, []).append((e.timestamp, e.tweet_id))
        elif e.action == "retweeted":
            posts.setdefault(e.user_id, []).append((e.timestamp, e.tweet_id))
            retweets.setdefault(e.user_id, []).append((e.timestamp, e.tweet_id))
            author = author_of.get(e.tweet_id)
            if author is not None:
                pair_retweet_times.setdefault((e.user_id, author), []).append(e.timestamp)

    tokens_of: dict[int, tuple[int, ...]] = {}
    for e in corpus.events:
        tokens_of.setdefault(e.tweet_id, e.tokens)
    for inst in corpus.instances:
        tokens_of.setdefault(inst.tweet_id, inst.tweet.tokens)

    uniform = vectorspace.IdfTable.uniform()
    vec_cache: dict[int, dict] = {}

    def vec_for(tweet_id: int) -> dict:
        v = vec_cache.get(tweet_id)
        if v is None:
            v = vec_cache[tweet_id] = vectorspace.vectorize(tokens_of[tweet_id], uniform)
        return v

    def recent(stream: list[tuple[int, int]], before: int, window: int | None = None) -> list[int]:
        hi = bisect_left(stream, before, key=lambda d: d[0])
        lo = 0
        if window is not None:
            lo = bisect_left(stream, before - window, 0, hi, key=lambda d: d[0])
        return [tid for _, tid in stream[max(lo, hi - history_cap):hi]]

    def mean_sim(tweet_id: int, members: list[int]) -> float:
        kept = [m for m in members if m != tweet_id]
        if not kept:
            return 0.0
        v = vec_for(tweet_id)
        total = sum(vectorspace.cosine(v, vec_for(m)) for m in kept)
        return min(max(total / len(kept), 0.0), 1.0)

    out = []
    for inst in instances:
        times = pair_retweet_times.get((inst.recipient_id, inst.sender_id), ())
        count = bisect_left(times, inst.timestamp)
        r_retweets = retweets.get(inst.recipient_id, [])
        sender_sim = mean_sim(
            inst.tweet_id, recent(posts.get(inst.sender_id, []), inst.timestamp)
        )
        retweet_sim = mean_sim(inst.tweet_id, recent(r_retweets, inst.timestamp))
        week_sim = mean_sim(inst.tweet_id, recent(r_retweets, inst.timestamp, week))
        out.append({
            "sender_sim": min(sender_sim / sim_scale, 1.0),
            "retweet_sim": min(retweet_sim / sim_scale, 1.0),
            "retweet_week_sim": min(week_sim / sim_scale, 1.0),
            "retweet_count": min(count, count_cap) / count_cap,
            "author_neighbour": 1.0
            if inst.author_id in corpus.profiles[inst.recipient_id].neighbours
            else 0.0,
        })
    return out


def planted_decision_values(
    corpus: Corpus,
    config: SyntheticConfig,
    instances: Sequence[Instance] | None = None,
) -> np.ndarray:
    """Decision values of the generator's own label model (its Bayes rule
    classifies positive exactly when the value is >= 0).

    The intercept drift is replayed from the stored labels over all
    instances in creation order, so the values match the probabilities the
    labels were actually sampled from.
    """
    model = planted_model(config)
    feats = planted_features(corpus)
    drift = 0.0
    z_by_id: dict[int, float] = {}
    for inst, f in zip(corpus.instances, feats):
        z_by_id[inst.instance_id] = model.decision_value(f, drift)
        if model.signal_strength > 0:
            drift = model.next_drift(drift, inst.label)
    wanted = corpus.instances if instances is None else instances
    return np.array([z_by_id[inst.instance_id] for inst in wanted])
