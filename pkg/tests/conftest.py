"""Shared corpus-building helpers for the test suite."""

import pytest

from refilter.corpus_io import (
    Corpus,
    EncodedTweet,
    HistoryEvent,
    Instance,
    SyntheticConfig,
    UserProfile,
    generate_synthetic,
)


def make_profile(user_id, neighbours=(), **overrides):
    defaults = dict(
        user_id=user_id,
        followers=100,
        following=50,
        statuses=200,
        listed=3,
        verified=False,
        account_age_days=500,
        has_profile_url=False,
        klout=40.0,
        klout_delta_1d=0.1,
        klout_delta_7d=-0.2,
        klout_delta_30d=0.5,
        neighbours=frozenset(neighbours),
    )
    defaults.update(overrides)
    return UserProfile(**defaults)


def make_tweet(tokens=(10, 11, 12), **overrides):
    defaults = dict(
        tokens=tuple(tokens),
        char_length=6 * len(tokens),
        has_url=False,
        has_photo=False,
        has_hashtag=False,
        has_exclamation=False,
        mentions=(),
    )
    defaults.update(overrides)
    return EncodedTweet(**defaults)


def make_instance(
    instance_id,
    tweet_id,
    sender,
    recipient,
    timestamp,
    label=False,
    tokens=(10, 11, 12),
    author=None,
    **overrides,
):
    tweet_overrides = overrides.pop("tweet_overrides", {})
    return Instance(
        instance_id=instance_id,
        tweet_id=tweet_id,
        author_id=sender if author is None else author,
        sender_id=sender,
        recipient_id=recipient,
        timestamp=timestamp,
        label=label,
        tweet=make_tweet(tokens, **tweet_overrides),
        **overrides,
    )


def make_corpus(profiles, events=(), instances=()):
    return Corpus(
        profiles={p.user_id: p for p in profiles},
        events=list(events),
        instances=list(instances),
    )


@pytest.fixture(scope="session")
def small_signal_corpus():
    """A compact strong-signal synthetic corpus shared by slow-ish tests."""
    config = SyntheticConfig(
        num_recipients=10,
        neighbours_per_user=6,
        days=20,
        retweet_rate=0.35,
        signal_strength=8.0,
        posts_per_day=2.0,
    )
    return config, generate_synthetic(config, seed=404)
