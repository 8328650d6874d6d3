import numpy as np
import pytest

from fairlens.analysis import (
    CorrelationTable,
    ModelRecord,
    correlation_table,
    knn_adjust,
    model_selection_experiment,
)
from fairlens.core import make_rng
from fairlens.fairness import Task


def _records(accuracies, metric=None, ids=None):
    metric = metric if metric is not None else accuracies
    ids = ids or [f"m{i}" for i in range(len(accuracies))]
    return [
        ModelRecord(
            model_id=i, source="test", metrics={"dci": m}, gbt_accuracy=a, unfairness=0.0
        )
        for i, a, m in zip(ids, accuracies, metric)
    ]


class TestKnnAdjust:
    def test_constant_metric_residuals_are_zero(self):
        records = _records([0.1, 0.3, 0.5, 0.7, 0.8, 0.9], metric=[0.4] * 6)
        assert knn_adjust(records, "dci", k=5) == [0.0] * 6

    def test_six_record_hand_example(self):
        # metric equals accuracy; the record at .1 subtracts mean(.2..6) = .4
        records = _records([0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
        adjusted = knn_adjust(records, "dci", k=5)
        assert adjusted[0] == pytest.approx(-0.3, abs=1e-12)

    def test_seven_record_interior_zero_with_self_included(self):
        records = _records([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7])
        adjusted = knn_adjust(records, "dci", k=5, include_self=True)
        assert adjusted[3] == pytest.approx(0.0, abs=1e-12)  # symmetric window
        assert adjusted[0] == pytest.approx(-0.2, abs=1e-12)
        assert adjusted[6] == pytest.approx(0.2, abs=1e-12)

    def test_distance_tie_breaks_toward_lower_model_id(self):
        # eighths are binary-exact: the middle record ties .125 and .875 at
        # distance .375 and m0 wins the tie
        records = _records([i / 8 for i in range(1, 8)])
        adjusted = knn_adjust(records, "dci", k=5)
        expected = 0.5 - (0.375 + 0.625 + 0.25 + 0.75 + 0.125) / 5
        assert adjusted[3] == pytest.approx(expected, abs=1e-12)

    def test_translation_equivariance(self):
        rng = make_rng(0)
        acc = rng.random(20)
        metric = rng.random(20)
        base = knn_adjust(_records(acc, metric), "dci")
        shifted = knn_adjust(_records(acc, metric + 123.4), "dci")
        np.testing.assert_allclose(shifted, base, atol=1e-9)

    def test_independent_metric_residuals_center_on_zero(self):
        rng = make_rng(1)
        records = _records(rng.random(500), rng.random(500))
        residuals = knn_adjust(records, "dci")
        assert abs(np.mean(residuals)) < 0.05

    def test_too_few_records_rejected(self):
        with pytest.raises(ValueError):
            knn_adjust(_records([0.1, 0.2, 0.3]), "dci", k=5)

    def test_missing_field_rejected(self):
        records = _records([0.1] * 6)
        records[2].metrics = {}
        with pytest.raises(ValueError):
            knn_adjust(records, "dci", k=5)


class TestCorrelationTable:
    def test_self_correlation_is_one(self):
        records = _records([0.1, 0.5, 0.3, 0.9])
        table = correlation_table(records, ["dci"], ["gbt_accuracy"])
        assert table.values[0, 0] == pytest.approx(1.0)

    def test_reversal_is_minus_one(self):
        records = _records([0.1, 0.5, 0.3, 0.9], metric=[-0.1, -0.5, -0.3, -0.9])
        table = correlation_table(records, ["dci"], ["gbt_accuracy"])
        assert table.values[0, 0] == pytest.approx(-1.0)

    def test_zero_variance_cell_is_nan_not_zero(self):
        records = _records([0.1, 0.5, 0.3, 0.9], metric=[1.0, 1.0, 1.0, 1.0])
        table = correlation_table(records, ["dci"], ["gbt_accuracy"])
        assert np.isnan(table.values[0, 0])

    def test_too_few_records_rejected(self):
        with pytest.raises(ValueError):
            correlation_table(_records([0.1, 0.2]), ["dci"], ["gbt_accuracy"])

    def test_out_of_range_values_rejected(self):
        with pytest.raises(ValueError):
            CorrelationTable(("a",), ("b",), np.array([[1.5]]))


def _selection_records(accs, unfs, ids=None):
    ids = ids or [f"m{i}" for i in range(len(accs))]
    return [
        ModelRecord(
            model_id=i, source="test",
            gbt_accuracy=a, unfairness=u,
            target_accuracy={0: a}, task_unfairness={(0, 1): u},
        )
        for i, a, u in zip(ids, accs, unfs)
    ]


class TestModelSelection:
    def test_aligned_orders_give_fraction_one(self):
        records = _selection_records([0.9, 0.8, 0.7], [0.1, 0.2, 0.3])
        groups = [(records, Task(0, 1))]
        frac = model_selection_experiment(groups, 200, make_rng(0))
        # best-accuracy model strictly fairer than the other two, ties itself
        assert frac == pytest.approx(1.0 - np.mean([0.5, 0.0, 0.0]), abs=0.08)

    def test_identical_records_give_half(self):
        records = _selection_records([0.5, 0.5, 0.5], [0.2, 0.2, 0.2])
        frac = model_selection_experiment([(records, Task(0, 1))], 500, make_rng(1))
        assert frac == 0.5

    def test_anti_aligned_orders_give_fraction_near_zero(self):
        records = _selection_records([0.9, 0.8, 0.7], [0.3, 0.2, 0.1])
        frac = model_selection_experiment([(records, Task(0, 1))], 300, make_rng(2))
        assert frac <= 0.4

    def test_deterministic_given_seed(self):
        records = _selection_records([0.9, 0.8, 0.7, 0.6], [0.1, 0.4, 0.2, 0.3])
        groups = [(records, Task(0, 1))]
        a = model_selection_experiment(groups, 400, make_rng(3))
        b = model_selection_experiment(groups, 400, make_rng(3))
        assert a == b
        assert 0.0 <= a <= 1.0

    def test_accuracy_tie_breaks_toward_lower_model_id(self):
        records = _selection_records([0.9, 0.9], [0.4, 0.0], ids=["a", "b"])
        # "a" wins the accuracy tie despite being less fair
        frac = model_selection_experiment([(records, Task(0, 1))], 400, make_rng(4))
        assert frac < 0.5

    def test_small_groups_rejected(self):
        with pytest.raises(ValueError):
            model_selection_experiment([([], Task(0, 1))], 10, make_rng(0))
        with pytest.raises(ValueError):
            model_selection_experiment(
                [(_selection_records([0.5], [0.1]), Task(0, 1))], 10, make_rng(0)
            )
