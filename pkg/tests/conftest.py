import json
import math

import numpy as np
import pytest

from ptdi.models import SamplePool
from ptdi.schemas import PositionDist, TokenRecord


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write((row if isinstance(row, str) else json.dumps(row)) + "\n")
    return path


def make_pool(scores, labels=None, prefix="x"):
    ids = [f"{prefix}{i}" for i in range(len(scores))]
    return SamplePool.from_arrays(ids, np.asarray(scores, dtype=float), None if labels is None else np.asarray(labels))


def record(logprobs, text=None, positions=None, record_id="r"):
    return TokenRecord(id=record_id, token_logprobs=logprobs, text=text, positions=positions)


def position(probs, true_index=0, tail_mass=0.0):
    return PositionDist(probs=probs, true_index=true_index, tail_mass=tail_mass)


@pytest.fixture
def half():
    return math.log(0.5)


@pytest.fixture
def separated_pool():
    """60 members scored in [-20, -19), 60 non-members in [0, 1): the score separates them completely."""
    rng = np.random.default_rng(11)
    members = -20.0 + rng.random(60)
    nonmembers = rng.random(60)
    scores = np.concatenate([members, nonmembers])
    labels = np.concatenate([np.ones(60, dtype=np.int8), np.zeros(60, dtype=np.int8)])
    return make_pool(scores, labels, prefix="s")


@pytest.fixture
def balanced_pool():
    """100 samples, 50 members and 50 non-members with overlapping Gaussian scores."""
    rng = np.random.default_rng(3)
    scores = np.concatenate([rng.normal(-1.0, 1.0, 50), rng.normal(0.0, 1.0, 50)])
    labels = np.concatenate([np.ones(50, dtype=np.int8), np.zeros(50, dtype=np.int8)])
    return make_pool(scores, labels, prefix="b")


@pytest.fixture
def nonmember_pool():
    rng = np.random.default_rng(5)
    return make_pool(rng.normal(0.0, 1.0, 20), np.zeros(20, dtype=np.int8), prefix="n")
