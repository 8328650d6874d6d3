"""Collection-level analyses over audited representations.

Operates on :class:`ModelRecord` rows: residual scores after subtracting the
mean of the k nearest neighbors in downstream accuracy, Spearman correlation
tables, and the accuracy-vs-random model selection experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimators import UndefinedCorrelationError, spearman
from .fairness import Task


@dataclass
class ModelRecord:
    """One audited representation and everything measured about it."""

    model_id: str
    source: str
    metrics: dict[str, float] = field(default_factory=dict)
    metric_errors: dict[str, str] = field(default_factory=dict)
    gbt_accuracy: float | None = None
    unfairness: float | None = None
    target_accuracy: dict[int, float] = field(default_factory=dict)
    task_unfairness: dict[tuple[int, int], float] = field(default_factory=dict)
    adjusted: dict[str, float] = field(default_factory=dict)
    error: str | None = None

    def value(self, field_name: str) -> float | None:
        """Look up a named score: a metric, unfairness, gbt_accuracy, or an
        adjusted_* field."""
        if field_name == "unfairness":
            return self.unfairness
        if field_name == "gbt_accuracy":
            return self.gbt_accuracy
        if field_name.startswith("adjusted_"):
            return self.adjusted.get(field_name)
        return self.metrics.get(field_name)


def knn_adjust(
    records: list[ModelRecord], field_name: str, k: int = 5, include_self: bool = False
) -> list[float]:
    """Residual of each record's score against its accuracy neighborhood.

    Neighbors are the k records closest in |downstream accuracy difference|,
    the record itself excluded unless ``include_self``; distance ties break
    toward the lower model_id.  The residual is value minus neighbor mean.
    """
    if len(records) < k + 1:
        raise ValueError(f"need at least {k + 1} records for k={k}, got {len(records)}")
    values = []
    accuracies = []
    for r in records:
        v = r.value(field_name)
        if v is None or r.gbt_accuracy is None:
            raise ValueError(f"record {r.model_id!r} lacks {field_name!r} or gbt_accuracy")
        values.append(float(v))
        accuracies.append(float(r.gbt_accuracy))
    out = []
    for i, r in enumerate(records):
        candidates = [
            (abs(accuracies[j] - accuracies[i]), records[j].model_id, j)
            for j in range(len(records))
            if include_self or j != i
        ]
        candidates.sort()
        neighbor_mean = float(np.mean([values[j] for _, _, j in candidates[:k]]))
        out.append(values[i] - neighbor_mean)
    return out


@dataclass(frozen=True)
class CorrelationTable:
    """Spearman coefficients with labels; NaN marks undefined cells."""

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValueError("values shape does not match labels")
        defined = v[~np.isnan(v)]
        if np.any(defined < -1 - 1e-12) or np.any(defined > 1 + 1e-12):
            raise ValueError("correlations must lie in [-1, 1]")
        object.__setattr__(self, "values", v)


def correlation_table(
    records: list[ModelRecord], x_fields: list[str], y_fields: list[str]
) -> CorrelationTable:
    """Spearman correlation for every (x, y) field pair over the records.

    Cells with zero rank variance are reported as NaN (absent), not zero.
    """
    if len(records) < 3:
        raise ValueError(f"need at least 3 records, got {len(records)}")
    columns: dict[str, np.ndarray] = {}
    for name in set(x_fields) | set(y_fields):
        vals = [r.value(name) for r in records]
        if any(v is None for v in vals):
            missing = [r.model_id for r, v in zip(records, vals) if v is None]
            raise ValueError(f"field {name!r} missing on records {missing}")
        columns[name] = np.asarray(vals, dtype=float)
    values = np.empty((len(x_fields), len(y_fields)))
    for i, xf in enumerate(x_fields):
        for j, yf in enumerate(y_fields):
            try:
                values[i, j] = spearman(columns[xf], columns[yf])
            except UndefinedCorrelationError:
                values[i, j] = np.nan
    return CorrelationTable(tuple(x_fields), tuple(y_fields), values)


def model_selection_experiment(
    groups: list[tuple[list[ModelRecord], Task]],
    trials: int,
    rng: np.random.Generator,
) -> float:
    """Fraction of trials where the accuracy-selected model is also fairer.

    Each group is (candidate records, task).  Per trial: sample a group, take
    the record with the highest downstream accuracy on the task's target
    (ties toward the lower model_id) and an independent uniformly random
    record; score 1 if the former has strictly lower task unfairness, 0.5 on
    a tie, 0 otherwise.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not groups or any(len(records) < 2 for records, _ in groups):
        raise ValueError("every group needs at least 2 records")
    prepared = []
    for records, task in groups:
        key = (task.target, task.sensitive)
        ranked = sorted(
            records,
            key=lambda r: (-r.target_accuracy[task.target], r.model_id),
        )
        best_unfairness = ranked[0].task_unfairness[key]
        pool = np.array([r.task_unfairness[key] for r in records])
        prepared.append((best_unfairness, pool))
    score = 0.0
    for _ in range(trials):
        best, pool = prepared[rng.integers(len(prepared))]
        other = pool[rng.integers(len(pool))]
        if best < other:
            score += 1.0
        elif best == other:
            score += 0.5
    return score / trials
