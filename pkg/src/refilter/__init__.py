"""refilter: a personalized global retweet filter.

One logistic-regression model shared across all recipients, fed with
recipient-specific feature vectors, so the same tweet can score
differently per recipient. Ships with an encoded corpus format, a
synthetic corpus generator with a planted signal, and an experiment
harness (feature ranking, incremental learning curves, metrics exports).
"""

__version__ = "0.1.0"

from .corpus_io import (  # noqa: F401
    Corpus,
    Instance,
    SyntheticConfig,
    UserProfile,
    generate_synthetic,
    load_corpus,
    load_corpus_dir,
    write_corpus,
    write_corpus_dir,
)
from .experiments import (  # noqa: F401
    DatasetSplits,
    Metrics,
    SplitSpec,
    build_dataset,
    evaluate,
    incremental_eval,
    pearson,
    rank_features,
)
from .features import FeatureContext, assemble, extract_matrix  # noqa: F401
from .history import UserHistoryIndex  # noqa: F401
from .learner import Hyper, Model, classify, predict_proba, train  # noqa: F401
from .textnorm import NormalizedTweet, normalize  # noqa: F401
from .vectorspace import IdfTable, avg_similarity, build_idf, vectorize  # noqa: F401
