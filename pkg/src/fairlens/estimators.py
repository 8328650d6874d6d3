"""Information-theoretic and statistical primitives.

Entropy and mutual information are plug-in (maximum likelihood) estimates in
bits.  Continuous codes are discretized with equal-width bins before any
information quantity is computed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset


class UndefinedCorrelationError(ValueError):
    """Raised when a rank correlation is undefined (zero rank variance)."""


@dataclass(frozen=True)
class DiscreteDistribution:
    """Categorical distribution over a finite label set 0..K-1."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty 1-D vector")
        if np.any(p < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_counts(cls, counts: np.ndarray) -> "DiscreteDistribution":
        c = np.asarray(counts, dtype=float)
        total = c.sum()
        if total <= 0:
            raise ValueError("counts must have positive total")
        return cls(c / total)

    def __len__(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class MIMatrix:
    """Pairwise mutual information between code dims (rows) and factors
    (columns), in bits, plus the per-factor entropies."""

    mi: np.ndarray  # (num_codes, num_factors)
    factor_entropies: np.ndarray  # (num_factors,)

    def __post_init__(self) -> None:
        mi = np.asarray(self.mi, dtype=float)
        ents = np.asarray(self.factor_entropies, dtype=float)
        if mi.ndim != 2 or ents.shape != (mi.shape[1],):
            raise ValueError("mi must be (codes x factors) with one entropy per factor")
        if np.any(mi < -1e-9):
            raise ValueError("mutual information entries must be >= 0")
        if np.any(mi > ents[None, :] + 1e-9):
            raise ValueError("MI entry exceeds its factor entropy")
        mi = np.clip(mi, 0.0, None)
        mi.flags.writeable = False
        ents.flags.writeable = False
        object.__setattr__(self, "mi", mi)
        object.__setattr__(self, "factor_entropies", ents)

    @property
    def num_codes(self) -> int:
        return self.mi.shape[0]

    @property
    def num_factors(self) -> int:
        return self.mi.shape[1]


def discretize(values, bins: int) -> np.ndarray:
    """Equal-width binning over [min, max]; the top bin is right-closed.

    A constant input maps everything to bin 0.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("need at least one value")
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    if np.any(np.isnan(v)):
        raise ValueError("values contain NaN")
    lo, hi = v.min(), v.max()
    if lo == hi:
        return np.zeros(v.shape, dtype=np.int64)
    edges = lo + (hi - lo) * np.arange(1, bins) / bins
    return np.digitize(v, edges)


def entropy(counts) -> float:
    """Shannon entropy in bits of a histogram; 0*log0 = 0."""
    c = np.asarray(counts, dtype=float)
    if np.any(c < 0):
        raise ValueError("counts must be nonnegative")
    total = c.sum()
    if total <= 0:
        raise ValueError("counts must have positive total")
    p = c[c > 0] / total
    return float(-(p * np.log2(p)).sum())


def mutual_information(x, y) -> float:
    """Plug-in MI estimate in bits, clamped at 0.

    Summands are accumulated in sorted order so the result is exactly
    symmetric in its arguments.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"x and y must be 1-D of equal length, got {x.shape} vs {y.shape}")
    if x.size < 1:
        raise ValueError("need at least one observation")
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    nx = int(xi.max()) + 1
    ny = int(yi.max()) + 1
    joint = np.bincount(xi * ny + yi, minlength=nx * ny).reshape(nx, ny) / x.size
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    terms = joint[nz] * np.log2(joint[nz] / (px @ py)[nz])
    return max(0.0, float(np.sort(terms).sum()))


def mi_matrix(dataset: Dataset, bins: int = 20) -> MIMatrix:
    """MI between every (discretized code dim, raw factor) pair."""
    if dataset.num_rows < 2:
        raise ValueError("need at least 2 rows to estimate mutual information")
    num_codes = dataset.codes.shape[1]
    num_factors = dataset.factors.shape[1]
    binned = [discretize(dataset.codes[:, j], bins) for j in range(num_codes)]
    mi = np.empty((num_codes, num_factors))
    ents = np.empty(num_factors)
    for k in range(num_factors):
        col = dataset.factors[:, k]
        ents[k] = entropy(np.bincount(col))
        for j in range(num_codes):
            mi[j, k] = mutual_information(binned[j], col)
    # plug-in MI can exceed the factor entropy by rounding only
    mi = np.minimum(mi, ents[None, :] + 1e-12)
    return MIMatrix(mi, ents)


def total_variation(p, q) -> float:
    """Total variation distance, half the L1 distance between distributions."""
    p = p.probs if isinstance(p, DiscreteDistribution) else np.asarray(p, dtype=float)
    q = q.probs if isinstance(q, DiscreteDistribution) else np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"support mismatch: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def _fractional_ranks(v: np.ndarray) -> np.ndarray:
    """1-based ranks; ties receive the mean of their positions."""
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(a, b) -> float:
    """Spearman rank correlation with fractional ranks for ties."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be 1-D of equal length")
    if len(a) < 3:
        raise ValueError(f"need at least 3 observations, got {len(a)}")
    ra = _fractional_ranks(a)
    rb = _fractional_ranks(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    va = (da * da).sum()
    vb = (db * db).sum()
    if va == 0 or vb == 0:
        raise UndefinedCorrelationError("rank variance is zero on one side")
    return float((da * db).sum() / np.sqrt(va * vb))
