import math
import zlib

import numpy as np
import pytest

from ptdi.errors import ScoreError
from ptdi.services.score_service import (
    ScorerSpec,
    loss,
    m_entropy,
    max_renyi_k,
    min_k,
    parse_scorer,
    perplexity,
    renyi_entropy,
    renyi_per_position,
    score_pool,
    zlib_ratio,
)
from tests.conftest import position, record

EXACT = 1e-9


# ----------------------------------------------------
# LOG-PROBABILITY SCORES
# ----------------------------------------------------
class TestPerplexity:
    def test_two_halves(self, half):
        assert perplexity(record([half, half])) == pytest.approx(4.0, abs=EXACT)

    def test_certain_tokens(self):
        assert perplexity(record([0.0, 0.0])) == 1.0

    def test_length_normalized(self, half):
        assert perplexity(record([half, half]), length_normalize=True) == pytest.approx(2.0, abs=EXACT)

    def test_overflow(self):
        with pytest.raises(ScoreError, match="overflows"):
            perplexity(record([-800.0]))

    def test_loss_is_log_of_normalized_perplexity(self):
        rec = record([-0.3, -1.2, -2.0])
        assert loss(rec) == pytest.approx(math.log(perplexity(rec, length_normalize=True)), abs=EXACT)

    def test_monotone_in_total_log_likelihood(self):
        assert perplexity(record([-0.1, -0.2])) < perplexity(record([-0.1, -0.9]))


class TestMinK:
    def test_half_lowest(self):
        assert min_k(record([-3.0, -1.0, -0.5, -0.1]), 50) == pytest.approx(2.0, abs=EXACT)

    def test_count_clamps_to_one(self):
        assert min_k(record([-2.0]), 10) == pytest.approx(2.0, abs=EXACT)

    def test_all_equal(self):
        assert min_k(record([-0.7] * 5), 100) == pytest.approx(0.7, abs=EXACT)

    def test_floor_of_fractional_count(self):
        # 10 tokens at 30% keeps exactly 3
        logprobs = [-float(i) for i in range(10)]
        assert min_k(record(logprobs), 30) == pytest.approx(8.0, abs=EXACT)

    @pytest.mark.parametrize("k", [0, -5, 100.5])
    def test_k_out_of_range(self, k):
        with pytest.raises(ScoreError):
            min_k(record([-1.0]), k)


class TestZlib:
    def test_ratio(self, half):
        text = "the quick brown fox"
        expected = 2 * math.log(2) / (8 * len(zlib.compress(text.encode("utf-8"))))
        assert zlib_ratio(record([half, half], text=text)) == pytest.approx(expected, abs=EXACT)

    def test_ratio_scales_with_compressed_size(self, half):
        short = record([half, half], text="a" * 50)
        varied = record([half, half], text="".join(chr(65 + (i * 7) % 26) for i in range(200)))
        short_len = len(zlib.compress(short.text.encode("utf-8")))
        varied_len = len(zlib.compress(varied.text.encode("utf-8")))
        assert zlib_ratio(short) * short_len == pytest.approx(zlib_ratio(varied) * varied_len, abs=EXACT)

    def test_text_required(self, half):
        with pytest.raises(ScoreError, match="text required for Zlib score"):
            zlib_ratio(record([half]))


# ----------------------------------------------------
# DISTRIBUTION SCORES
# ----------------------------------------------------
class TestMEntropy:
    def test_certain_correct_token(self):
        assert m_entropy(record([0.0], positions=[position([1.0])])) == pytest.approx(0.0, abs=EXACT)

    def test_coin_flip(self, half):
        rec = record([half], positions=[position([0.5, 0.5])])
        assert m_entropy(rec) == pytest.approx(0.6931471805599453, abs=EXACT)

    def test_mean_over_positions(self, half):
        one = record([half], positions=[position([0.5, 0.5])])
        two = record([half, half], positions=[position([0.5, 0.5]), position([0.5, 0.5])])
        assert m_entropy(two) == pytest.approx(m_entropy(one), abs=EXACT)

    def test_true_token_in_tail(self, half):
        rec = record([half], positions=[position([0.5], true_index=-1, tail_mass=0.5)])
        assert m_entropy(rec) == pytest.approx(math.log(2), abs=EXACT)

    def test_zero_probability_true_token(self):
        rec = record([-1.0], positions=[position([0.0, 1.0], true_index=0)])
        with pytest.raises(ScoreError, match="probability 0"):
            m_entropy(rec)

    def test_positions_required(self):
        with pytest.raises(ScoreError, match="positions required"):
            m_entropy(record([-1.0]))


class TestRenyi:
    @pytest.fixture
    def uniform4(self):
        return record([math.log(0.25)], positions=[position([0.25] * 4)])

    def test_uniform_flag_off(self, uniform4):
        assert renyi_entropy(uniform4, 0.5) == pytest.approx(-0.6931471805599453, abs=EXACT)

    def test_uniform_flag_on(self, uniform4):
        assert renyi_entropy(uniform4, 0.5, standard_normalization=True) == pytest.approx(1.3862943611198906, abs=EXACT)

    @pytest.mark.parametrize("gamma", [0.5, 2.0, 3.0])
    @pytest.mark.parametrize("flag", [False, True])
    def test_degenerate_distribution(self, gamma, flag):
        rec = record([0.0], positions=[position([1.0])])
        assert renyi_entropy(rec, gamma, flag) == pytest.approx(0.0, abs=EXACT)

    @pytest.mark.parametrize("gamma", [0.0, 1.0, -2.0])
    def test_invalid_gamma(self, uniform4, gamma):
        with pytest.raises(ScoreError, match="gamma"):
            renyi_entropy(uniform4, gamma)


class TestMaxRenyi:
    @pytest.fixture
    def mixed(self):
        positions = [position([0.25] * 4), position([0.9, 0.1]), position([0.5, 0.5])]
        return record([-1.0, -0.1, -0.7], positions=positions)

    def test_full_average(self, mixed):
        assert max_renyi_k(mixed, 100, 2.0) == pytest.approx(renyi_entropy(mixed, 2.0), abs=EXACT)

    def test_top_one_of_two(self):
        rec = record([-1.0, -0.1], positions=[position([0.25] * 4), position([0.9, 0.1])])
        values = renyi_per_position(rec, 2.0)
        assert max_renyi_k(rec, 50, 2.0) == pytest.approx(float(np.max(values)), abs=EXACT)

    def test_single_position(self):
        rec = record([-0.7], positions=[position([0.5, 0.5])])
        assert max_renyi_k(rec, 10, 0.5) == pytest.approx(renyi_entropy(rec, 0.5), abs=EXACT)


# ----------------------------------------------------
# SCORER GRAMMAR
# ----------------------------------------------------
class TestParseScorer:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("perplexity", ScorerSpec("perplexity")),
            ("perplexity,norm", ScorerSpec("perplexity", flag=True)),
            ("loss", ScorerSpec("loss")),
            ("zlib", ScorerSpec("zlib")),
            ("m_entropy", ScorerSpec("m_entropy")),
            ("min_k:20", ScorerSpec("min_k", k_percent=20.0)),
            ("renyi:2,std", ScorerSpec("renyi", gamma=2.0, flag=True)),
            ("max_renyi:10,0.5", ScorerSpec("max_renyi", k_percent=10.0, gamma=0.5)),
        ],
    )
    def test_valid(self, text, expected):
        spec = parse_scorer(text)
        assert spec == expected
        assert spec.describe() == text

    @pytest.mark.parametrize(
        "text",
        ["bogus", "renyi:1", "renyi", "min_k:0", "min_k:abc", "zlib:3", "max_renyi:10", "perplexity,fast"],
    )
    def test_invalid(self, text):
        with pytest.raises(ScoreError):
            parse_scorer(text)


# ----------------------------------------------------
# POOL SCORING
# ----------------------------------------------------
class TestScorePool:
    @pytest.fixture
    def records(self, half):
        return [record([half, half], record_id="a"), record([-0.1, -0.3], record_id="b")]

    def test_matches_per_record_calls(self, records):
        pool = score_pool(records, parse_scorer("perplexity"))
        assert pool.ids == ("a", "b")
        assert pool.scores.tolist() == [perplexity(records[0]), perplexity(records[1])]

    def test_partial_labels(self, records):
        pool = score_pool(records, parse_scorer("loss"), labels={"a": 1})
        assert not pool.fully_labeled
        assert pool.labels.tolist() == [1, -1]

    def test_error_names_record(self, records):
        with pytest.raises(ScoreError) as exc:
            score_pool(records, parse_scorer("zlib"))
        assert exc.value.record_id == "a"
        assert "record 'a'" in str(exc.value)

    def test_workers_keep_order(self, records):
        many = records + [record([-0.01 * i], record_id=f"r{i}") for i in range(1, 40)]
        single = score_pool(many, parse_scorer("min_k:50"))
        threaded = score_pool(many, parse_scorer("min_k:50"), workers=4)
        assert single.same_as(threaded)


# ----------------------------------------------------
# PROPERTIES ON RANDOM RECORDS
# ----------------------------------------------------
def _random_record(rng, index):
    length = int(rng.integers(1, 21))
    positions, logprobs = [], []
    for _ in range(length):
        vocab = int(rng.integers(2, 9))
        mass = rng.dirichlet(np.full(vocab + 1, 2.0))
        if rng.random() < 0.3:
            probs, tail = mass[:-1].tolist(), float(mass[-1])
            true_index = -1 if rng.random() < 0.2 else int(rng.integers(0, vocab))
        else:
            probs, tail = (mass[:-1] / mass[:-1].sum()).tolist(), 0.0
            true_index = int(rng.integers(0, vocab))
        p_true = tail if true_index == -1 else probs[true_index]
        positions.append(position(probs, true_index=true_index, tail_mass=tail))
        logprobs.append(min(0.0, math.log(p_true)))
    text = "".join(chr(97 + int(c)) for c in rng.integers(0, 26, int(rng.integers(5, 60))))
    return record(logprobs, text=text, positions=positions, record_id=f"r{index}")


@pytest.fixture(scope="module")
def random_records():
    rng = np.random.default_rng(20240)
    return [_random_record(rng, i) for i in range(1000)]


SCORER_TEXTS = [
    "perplexity",
    "perplexity,norm",
    "loss",
    "min_k:20",
    "zlib",
    "m_entropy",
    "renyi:0.5",
    "renyi:2,std",
    "max_renyi:10,2",
    "max_renyi:50,0.5,std",
]


class TestRandomRecordProperties:
    @pytest.mark.parametrize("text", SCORER_TEXTS)
    def test_scores_finite(self, random_records, text):
        scorer = parse_scorer(text)
        assert all(math.isfinite(scorer(rec)) for rec in random_records)

    def test_normalized_perplexity_is_geometric_mean(self, random_records):
        for rec in random_records:
            expected = perplexity(rec) ** (1.0 / rec.length)
            assert perplexity(rec, length_normalize=True) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("gamma", [0.5, 2.0, 3.0])
    def test_max_renyi_at_full_k_is_renyi(self, random_records, gamma):
        for rec in random_records:
            assert max_renyi_k(rec, 100, gamma) == pytest.approx(renyi_entropy(rec, gamma), abs=1e-12)

    @pytest.mark.parametrize("gamma", [0.5, 2.0, 3.0])
    def test_normalizations_differ_by_constant(self, random_records, gamma):
        for rec in random_records:
            flag_off = renyi_entropy(rec, gamma)
            flag_on = renyi_entropy(rec, gamma, standard_normalization=True)
            assert flag_on == pytest.approx(flag_off * (-1.0 / (1.0 - gamma)), abs=1e-12)

    @pytest.mark.parametrize("k", [10, 50, 100])
    def test_raising_logprobs_never_raises_scores(self, random_records, k):
        rng = np.random.default_rng(k)
        for rec in random_records:
            lift = rng.uniform(0.0, 1.0, rec.length)
            raised = record(np.minimum(0.0, np.asarray(rec.token_logprobs) + lift).tolist())
            assert perplexity(raised) <= perplexity(record(rec.token_logprobs))
            assert min_k(raised, k) <= min_k(rec, k)
