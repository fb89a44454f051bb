"""Sparse TF-IDF vectors and average cosine similarity.

Tokens may be strings (raw pipeline) or integer ids (encoded corpora);
anything hashable works. Document frequency is smoothed so unseen tokens
get a finite weight: idf = ln((N+1)/(df+1)) + 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

Token = Hashable
SparseVector = dict  # token -> weight, L2-normalized unless empty


@dataclass(frozen=True)
class IdfTable:
    """Document counts of a background corpus, queried for idf weights."""

    doc_count: int
    doc_frequency: Mapping[Token, int] = field(default_factory=dict)

    def idf(self, token: Token) -> float:
        df = self.doc_frequency.get(token, 0)
        return math.log((self.doc_count + 1) / (df + 1)) + 1.0

    @staticmethod
    def uniform() -> "IdfTable":
        """Empty-background table: every token weighs ln(1)+1 = 1."""
        return IdfTable(doc_count=0, doc_frequency={})


def build_idf(corpus: Iterable[Sequence[Token]]) -> IdfTable:
    """Count in how many documents each token appears (not occurrences)."""
    df: dict[Token, int] = {}
    n = 0
    for doc in corpus:
        n += 1
        for token in set(doc):
            df[token] = df.get(token, 0) + 1
    return IdfTable(doc_count=n, doc_frequency=df)


def vectorize(tokens: Sequence[Token], idf: IdfTable) -> SparseVector:
    """Raw term count times idf, L2-normalized. Empty input: zero vector."""
    if not tokens:
        return {}
    counts: dict[Token, int] = {}
    for token in tokens:
        counts[token] = counts.get(token, 0) + 1
    weights = {t: c * idf.idf(t) for t, c in counts.items()}
    norm = math.sqrt(sum(w * w for w in weights.values()))
    if norm == 0.0:
        return {}
    return {t: w / norm for t, w in weights.items()}


def cosine(u: SparseVector, v: SparseVector) -> float:
    """Dot product of already-normalized vectors; zero vector gives 0."""
    if len(u) > len(v):
        u, v = v, u
    return sum(w * v[t] for t, w in u.items() if t in v)


def avg_similarity(
    tweet: Sequence[Token],
    collection: Iterable[Sequence[Token]],
    idf: IdfTable,
) -> float:
    """Mean cosine between a tweet and each member of a collection.

    An empty collection carries no evidence of similarity and returns 0.
    """
    t_vec = vectorize(tweet, idf)
    total = 0.0
    n = 0
    for member in collection:
        total += cosine(t_vec, vectorize(member, idf))
        n += 1
    if n == 0:
        return 0.0
    return min(max(total / n, 0.0), 1.0)
