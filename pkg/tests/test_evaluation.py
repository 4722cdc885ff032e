import numpy as np
import pytest

from models.tensor import LabeledDataset, Tensor
from services.evaluation_service import (
    distance_matrix,
    distance_report,
    label_faults,
    label_faults_from_probs,
    parse_cutoffs,
    random_rauc_mean,
    rauc,
    rauc_by_type,
    rauc_table,
    write_distance_report,
)
from src.errors import CountMismatch, EmptyClassError, UndefinedRAUC
from utils.number_format import NumberFormatter
from utils.rng import SplitMix64


class TestRauc:
    @pytest.mark.parametrize("cutoff", [1, 2, 3, 10, None])
    def test_ideal_order_is_one(self, cutoff):
        flags = [0, 1, 0, 1, 1]
        assert rauc([1, 3, 4, 0, 2], flags, cutoff) == 1.0

    def test_six_sevenths(self):
        assert abs(rauc([0, 1, 2, 3], [1, 0, 1, 0]) - 6 / 7) <= 1e-12

    def test_worst_order(self):
        assert abs(rauc([1, 3, 0, 2], [1, 0, 1, 0]) - 3 / 7) <= 1e-12

    def test_cutoff_truncates_both_curves(self):
        assert rauc([0, 1, 2, 3], [1, 0, 1, 0], 2) == pytest.approx(2 / 3, abs=1e-12)
        assert rauc([0, 1, 2, 3], [1, 0, 1, 0], 50) == rauc([0, 1, 2, 3], [1, 0, 1, 0])

    def test_table_labels(self):
        table = rauc_table([0, 1, 2, 3], [1, 0, 1, 0], cutoffs=(2, None))
        assert list(table) == ["rauc_2", "rauc_all"]

    def test_random_mean_matches_expectation(self):
        flags = np.zeros(100, dtype=np.int64)
        flags[SplitMix64(1).permutation(100)[:20]] = 1
        # E[found(k)] = 0.2 k against the ideal curve min(k, 20)
        expected = sum(0.2 * k for k in range(1, 101)) / sum(min(k, 20) for k in range(1, 101))
        assert abs(random_rauc_mean(flags, shuffles=1000, seed=2) - expected) <= 0.03

    def test_swapping_a_fault_forward_never_hurts(self):
        rng = SplitMix64(3)
        for _ in range(50):
            flags = (rng.random(12) < 0.4).astype(np.int64)
            if not flags.any():
                continue
            order = rng.permutation(12)
            for pos in range(11):
                if flags[order[pos]] == 0 and flags[order[pos + 1]] == 1:
                    swapped = order.copy()
                    swapped[pos], swapped[pos + 1] = order[pos + 1], order[pos]
                    for cutoff in (3, 6, None):
                        assert rauc(swapped, flags, cutoff) >= rauc(order, flags, cutoff)

    def test_bounds(self):
        rng = SplitMix64(4)
        flags = np.array([0, 0, 1, 0, 1, 0, 0, 0])
        for _ in range(20):
            value = rauc(rng.permutation(8), flags)
            assert 0 < value <= 1

    def test_no_faults_is_undefined(self):
        with pytest.raises(UndefinedRAUC):
            rauc([0, 1], [0, 0])

    def test_order_must_be_a_permutation(self):
        with pytest.raises(CountMismatch):
            rauc([0, 0, 1], [1, 0, 0])
        with pytest.raises(CountMismatch):
            rauc([0, 1], [1, 0, 0])

    def test_cutoff_must_be_positive(self):
        with pytest.raises(ValueError):
            rauc([0, 1], [1, 0], 0)


class TestCutoffs:
    def test_parse(self):
        assert parse_cutoffs("100,500,1000,all") == (100, 500, 1000, None)
        assert parse_cutoffs(" ALL ") == (None,)

    @pytest.mark.parametrize("text", ["0", "abc", "", "5,-1"])
    def test_rejects_bad_values(self, text):
        with pytest.raises(ValueError):
            parse_cutoffs(text)


class TestRaucByType:
    def test_each_type_is_ranked_against_clean_cases(self):
        flags = [0, 1, 1, 0, 1, 0]
        types = [0, 1, 2, 0, 1, 2]
        table = rauc_by_type(range(6), flags, types)
        assert table[1] == pytest.approx(4 / 7, abs=1e-12)
        assert table[2] == pytest.approx(3 / 4, abs=1e-12)

    def test_type_without_faults_is_skipped(self):
        table = rauc_by_type([0, 1, 2, 3], [0, 1, 0, 0], [0, 1, 2, 2])
        assert list(table) == [1]


class TestFaultLabels:
    def test_correct_and_wrong_predictions(self):
        probs = [[0.9, 0.1], [0.2, 0.8]]
        assert label_faults_from_probs(probs, [0, 0]).tolist() == [0, 1]

    def test_ties_pick_the_lowest_class(self):
        probs = [[0.5, 0.5], [0.5, 0.5]]
        assert label_faults_from_probs(probs, [1, 0]).tolist() == [1, 0]

    def test_count_mismatch(self):
        with pytest.raises(CountMismatch):
            label_faults_from_probs([[1.0, 0.0]], [0, 1])

    def test_runs_the_model(self, identity_model):
        spec, weights = identity_model
        dataset = LabeledDataset(inputs=Tensor((3, 2), [2, 0, 0, 2, 1, 1]), labels=[0, 0, 1])
        assert label_faults(spec, weights, dataset).tolist() == [0, 1, 1]


class TestDistanceReport:
    def test_identical_points_have_zero_intra_distance(self):
        _, matrix, singleton = distance_matrix([[1.0, 1.0], [1.0, 1.0], [4.0, 5.0]], [0, 0, 1])
        assert matrix[0, 0] == 0.0
        assert singleton.tolist() == [False, True]

    def test_three_four_five(self, tmp_path):
        types, matrix, singleton = distance_matrix([[0.0, 0.0], [3.0, 4.0]], [0, 1])
        assert types.tolist() == [0, 1]
        assert matrix[0, 1] == matrix[1, 0] == 5.0
        assert singleton.all()
        out = tmp_path / "distance.csv"
        write_distance_report(out, [[0.0, 0.0], [3.0, 4.0]], [0, 1])
        assert out.read_text() == "type,0,1,singleton\n0,0,5,1\n1,5,0,1\n"

    def test_matches_brute_force(self):
        rng = SplitMix64(5)
        features = rng.normal(30 * 3).reshape(30, 3)
        labels = np.arange(30) % 3
        types, matrix, _ = distance_matrix(features, labels)
        for a in range(3):
            for b in range(3):
                total, count = 0.0, 0
                for i in range(30):
                    for j in range(30):
                        if labels[i] == a and labels[j] == b and i != j:
                            total += float(np.linalg.norm(features[i] - features[j]))
                            count += 1
                assert abs(matrix[a, b] - total / count) <= 1e-9

    def test_report_columns(self):
        frame = distance_report(SplitMix64(6).normal(12).reshape(6, 2), ["A", "A", "B", "B", "C", "C"])
        assert list(frame.columns) == ["type", "A", "B", "C", "singleton"]
        assert frame["singleton"].tolist() == [0, 0, 0]

    def test_needs_two_types(self):
        with pytest.raises(EmptyClassError):
            distance_matrix([[0.0], [1.0]], [0, 0])


class TestNumberFormat:
    def test_shortest_round_trip(self):
        assert NumberFormatter.format_float(0.1) == "0.1"
        assert NumberFormatter.format_float(np.float32(0.1)) == "0.1"
        assert NumberFormatter.format_float(5.0) == "5"
        assert NumberFormatter.format_float(float("inf")) == "inf"

    def test_ratio(self):
        assert NumberFormatter.format_ratio(6 / 7) == "0.857143"
