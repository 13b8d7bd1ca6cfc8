import math

import numpy as np
import pytest
from pydantic import ValidationError

from ptdi.errors import IngestionError, SplitError
from ptdi.schemas import PositionDist, SplitSpec, SubsampleMode
from ptdi.services.ingest_service import (
    _subsample_test,
    load_labels,
    load_scores,
    load_token_records,
    split_pool,
    split_pool_with_members,
    write_scores,
)
from ptdi.utils import derive_rng
from tests.conftest import make_pool, write_jsonl


# ----------------------------------------------------
# SCORE FILES
# ----------------------------------------------------
class TestLoadScores:
    def test_labeled_file(self, tmp_path):
        path = write_jsonl(tmp_path / "s.jsonl", [
            {"id": "a", "score": 1.5, "member": 0},
            {"id": "b", "score": -0.2, "member": 1},
        ])
        pool = load_scores(path)
        assert len(pool) == 2
        assert pool.fully_labeled
        assert pool.ids == ("a", "b")
        assert pool.scores.tolist() == [1.5, -0.2]

    def test_missing_member_is_unlabeled(self, tmp_path):
        path = write_jsonl(tmp_path / "s.jsonl", [
            {"id": "a", "score": 1.5, "member": 0},
            {"id": "b", "score": 0.3},
        ])
        assert not load_scores(path).fully_labeled

    def test_nan_score_names_line(self, tmp_path):
        path = write_jsonl(tmp_path / "s.jsonl", [
            {"id": "a", "score": 1.5},
            '{"id": "b", "score": NaN}',
        ])
        with pytest.raises(IngestionError) as exc:
            load_scores(path)
        assert exc.value.line == 2
        assert f"{path}:2:" in str(exc.value)

    def test_duplicate_id(self, tmp_path):
        path = write_jsonl(tmp_path / "s.jsonl", [{"id": "a", "score": 1.0}, {"id": "a", "score": 2.0}])
        with pytest.raises(IngestionError, match="duplicate id 'a'"):
            load_scores(path)

    def test_malformed_json(self, tmp_path):
        path = write_jsonl(tmp_path / "s.jsonl", ['{"id": "a", "score": 1.0}', "{not json"])
        with pytest.raises(IngestionError, match="malformed JSON"):
            load_scores(path)

    def test_member_outside_zero_one(self, tmp_path):
        path = write_jsonl(tmp_path / "s.jsonl", [{"id": "a", "score": 1.0, "member": 2}])
        with pytest.raises(IngestionError):
            load_scores(path)

    @pytest.mark.parametrize("row", [
        {"id": "a", "score": "1.5"},
        {"id": "a", "score": True},
        {"id": "a", "score": 1.5, "member": True},
        {"id": "a", "score": 1.5, "member": "1"},
        {"id": "a", "score": 1.5, "member": 1.0},
    ])
    def test_wrong_types_rejected(self, tmp_path, row):
        path = write_jsonl(tmp_path / "s.jsonl", [row])
        with pytest.raises(IngestionError) as exc:
            load_scores(path)
        assert exc.value.line == 1

    def test_integer_score_accepted(self, tmp_path):
        path = write_jsonl(tmp_path / "s.jsonl", [{"id": "a", "score": 2, "member": 0}])
        assert load_scores(path).scores.tolist() == [2.0]

    def test_blank_lines_skipped(self, tmp_path):
        path = write_jsonl(tmp_path / "s.jsonl", [{"id": "a", "score": 1.0}, "", {"id": "b", "score": 2.0}])
        assert len(load_scores(path)) == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestionError, match="cannot open"):
            load_scores(tmp_path / "absent.jsonl")

    def test_write_then_load_reproduces_pool(self, tmp_path):
        pool = make_pool([0.1, 1.0 / 3.0, -2.5e-17], [1, 0, 0])
        partial = make_pool([4.0, 5.0])
        write_scores(pool, tmp_path / "a.jsonl")
        write_scores(partial, tmp_path / "b.jsonl")
        assert load_scores(tmp_path / "a.jsonl").same_as(pool)
        assert load_scores(tmp_path / "b.jsonl").same_as(partial)
        assert '"member"' not in (tmp_path / "b.jsonl").read_text()


class TestLoadLabels:
    def test_labels(self, tmp_path):
        path = write_jsonl(tmp_path / "l.jsonl", [{"id": "a", "member": 1}, {"id": "b", "member": 0}])
        assert load_labels(path) == {"a": 1, "b": 0}

    def test_boolean_member_rejected(self, tmp_path):
        path = write_jsonl(tmp_path / "l.jsonl", [{"id": "a", "member": False}])
        with pytest.raises(IngestionError, match="integer 0 or 1"):
            load_labels(path)

    def test_duplicate(self, tmp_path):
        path = write_jsonl(tmp_path / "l.jsonl", [{"id": "a", "member": 1}, {"id": "a", "member": 0}])
        with pytest.raises(IngestionError, match="duplicate"):
            load_labels(path)


# ----------------------------------------------------
# TOKEN RECORDS
# ----------------------------------------------------
class TestTokenRecords:
    def test_minimal_record(self, tmp_path):
        path = write_jsonl(tmp_path / "r.jsonl", [{"id": "r", "token_logprobs": [-0.69, -0.69]}])
        (rec,) = load_token_records(path)
        assert rec.length == 2
        assert rec.positions is None

    def test_length_mismatch(self, tmp_path):
        dist = {"probs": [1.0], "true_index": 0}
        path = write_jsonl(tmp_path / "r.jsonl", [
            {"id": "r", "token_logprobs": [-0.1, -0.2], "positions": [dist, dist, dist]},
        ])
        with pytest.raises(IngestionError, match="length mismatch"):
            load_token_records(path)

    def test_probability_mass(self):
        with pytest.raises(ValidationError, match="probability mass"):
            PositionDist(probs=[0.5, 0.4], tail_mass=0.0, true_index=0)

    def test_tail_index_allowed_with_tail_mass(self):
        dist = PositionDist(probs=[0.5, 0.4], tail_mass=0.1, true_index=-1)
        assert dist.in_tail

    @pytest.mark.parametrize("logprobs", [[], [0.5], [float("-inf")]])
    def test_invalid_logprobs(self, tmp_path, logprobs):
        path = tmp_path / "r.jsonl"
        path.write_text('{"id": "r", "token_logprobs": %s}\n' % str(logprobs).replace("-inf", "-Infinity"))
        with pytest.raises(IngestionError):
            load_token_records(path)


# ----------------------------------------------------
# SPLIT PROTOCOL
# ----------------------------------------------------
class TestSplitPool:
    def test_default_split(self, balanced_pool):
        cal, test = split_pool(balanced_pool, SplitSpec(seed=1))
        assert len(test) == 50
        assert 10 <= len(cal) <= 40
        assert cal.nonmember_count == len(cal)
        assert not set(cal.ids) & set(test.ids)

    def test_same_seed_same_split(self, balanced_pool):
        first = split_pool(balanced_pool, SplitSpec(seed=42))
        second = split_pool(balanced_pool, SplitSpec(seed=42))
        assert first[0].same_as(second[0])
        assert first[1].same_as(second[1])

    def test_different_seed_different_split(self, balanced_pool):
        _, a = split_pool(balanced_pool, SplitSpec(seed=1))
        _, b = split_pool(balanced_pool, SplitSpec(seed=2))
        assert a.ids != b.ids

    def test_calibration_members_are_discarded(self, balanced_pool):
        cal, test = split_pool(balanced_pool, SplitSpec(seed=9, rho=None))
        assert len(cal) + len(test) < len(balanced_pool)

    def test_rho_shrinks_calibration(self, balanced_pool):
        cal, test = split_pool(balanced_pool, SplitSpec(seed=4, rho=0.2))
        assert len(cal) == 10
        assert len(test) == 50

    def test_empty_calibration(self):
        pool = make_pool([-1.0, -2.0, -3.0], [1, 1, 1])
        with pytest.raises(SplitError, match="empty calibration"):
            split_pool(pool, SplitSpec(seed=0))

    def test_unlabeled_pool(self):
        pool = make_pool([1.0, 2.0])
        with pytest.raises(SplitError, match="fully labeled"):
            split_pool(pool, SplitSpec(seed=0))

    def test_pi_test_keeps_test_size(self, balanced_pool):
        _, raw_test = split_pool(balanced_pool, SplitSpec(seed=5))
        _, test = split_pool(balanced_pool, SplitSpec(seed=5, pi_test=0.5))
        assert len(test) == raw_test.nonmember_count
        assert test.member_count == math.floor(0.5 * raw_test.nonmember_count + 0.5)

    def test_default_mode_is_fixed_size(self):
        labels = np.array([1] * 30 + [0] * 30 + [1] * 30 + [0] * 30, dtype=np.int8)
        pool = make_pool(np.arange(120, dtype=float), labels)
        _, raw_test = split_pool(pool, SplitSpec(seed=0))
        _, test = split_pool(pool, SplitSpec(seed=0, pi_test=0.5))
        assert SplitSpec(seed=0).subsample_mode == SubsampleMode.FIXED_SIZE
        assert len(test) == raw_test.nonmember_count


class TestSubsampleTest:
    @pytest.fixture
    def half(self):
        labels = np.array([1] * 30 + [0] * 20, dtype=np.int8)
        return make_pool(np.arange(50, dtype=float), labels)

    def _subsample(self, pool, pi, mode=SubsampleMode.MAX_SIZE):
        spec = SplitSpec(seed=0, pi_test=pi, subsample_mode=mode)
        idx = _subsample_test(pool, np.arange(len(pool)), spec, derive_rng(0))
        return pool.take(idx)

    def test_max_size_keeps_every_nonmember(self, half):
        test = self._subsample(half, 0.5)
        assert len(test) == 40
        assert test.member_count == 20
        assert test.nonmember_count == 20

    def test_max_size_limited_by_members(self, half):
        test = self._subsample(half, 0.9)
        assert test.member_count == 30
        assert test.nonmember_count == 3

    def test_fixed_size(self, half):
        test = self._subsample(half, 0.5, SubsampleMode.FIXED_SIZE)
        assert len(test) == 20
        assert test.member_count == 10

    def test_fixed_size_unattainable(self):
        pool = make_pool(np.arange(25, dtype=float), [1] * 5 + [0] * 20)
        with pytest.raises(SplitError, match="unattainable"):
            self._subsample(pool, 0.9, SubsampleMode.FIXED_SIZE)

    def test_no_members(self):
        pool = make_pool(np.arange(10, dtype=float), [0] * 10)
        with pytest.raises(SplitError, match="unattainable"):
            self._subsample(pool, 0.5)

    def test_indices_sorted_and_unique(self, half):
        spec = SplitSpec(seed=0, pi_test=0.3)
        idx = _subsample_test(half, np.arange(len(half)), spec, derive_rng(3))
        assert np.all(np.diff(idx) > 0)


class TestSplitWithMembers:
    def test_partition_of_calibration_half(self, balanced_pool):
        cal0, cal1, test = split_pool_with_members(balanced_pool, SplitSpec(seed=8, rho=None))
        assert cal0.nonmember_count == len(cal0)
        assert cal1.member_count == len(cal1)
        assert len(cal0) + len(cal1) == 50
        assert len(test) == 50
        assert not (set(cal0.ids) | set(cal1.ids)) & set(test.ids)

    def test_same_halves_as_plain_split(self, balanced_pool):
        spec = SplitSpec(seed=8, rho=None)
        cal, test = split_pool(balanced_pool, spec)
        cal0, _, test_m = split_pool_with_members(balanced_pool, spec)
        assert cal.same_as(cal0)
        assert test.same_as(test_m)

    def test_needs_members(self, nonmember_pool):
        with pytest.raises(SplitError, match="at least 2 members"):
            split_pool_with_members(nonmember_pool, SplitSpec(seed=0))


def test_counts_round_half_up():
    pool = make_pool(np.arange(10, dtype=float), [1] * 5 + [0] * 5)
    spec = SplitSpec(seed=0, pi_test=0.5, subsample_mode=SubsampleMode.FIXED_SIZE)
    idx = _subsample_test(pool, np.arange(10), spec, derive_rng(0))
    # 0.5 * 5 = 2.5 rounds up
    assert int(pool.labels[idx].sum()) == 3
    assert len(idx) == 5
