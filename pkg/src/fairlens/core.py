"""Domain types and seeded sampling primitives shared by every other module.

A generative world is a :class:`FactorSpace` (named discrete factors with
categorical priors) plus a :class:`RepresentationSource` that turns factor
assignments into real-valued code vectors.  All randomness flows through
``numpy.random.Generator`` objects created by :func:`make_rng`, so any result
is a pure function of its inputs and a seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

# Algorithm identifier recorded in reports so runs are replayable elsewhere.
RNG_ALGORITHM = "numpy:PCG64"


def make_rng(seed: int) -> np.random.Generator:
    """Return the project-wide generator (PCG64) for a given seed."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class FactorSpace:
    """Ordered discrete ground-truth factors with per-factor priors.

    Each factor has a name, a cardinality >= 2 and a categorical prior over
    its labels (uniform unless stated otherwise).
    """

    names: tuple[str, ...]
    cardinalities: tuple[int, ...]
    priors: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.names) != len(self.cardinalities):
            raise ValueError("names and cardinalities must have equal length")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"factor names must be unique, got {self.names}")
        if any(c < 2 for c in self.cardinalities):
            raise ValueError(f"every cardinality must be >= 2, got {self.cardinalities}")
        if len(self.priors) != len(self.cardinalities):
            raise ValueError("one prior per factor required")
        frozen = []
        for name, card, prior in zip(self.names, self.cardinalities, self.priors):
            p = np.asarray(prior, dtype=float)
            if p.shape != (card,):
                raise ValueError(f"prior for {name!r} must have length {card}")
            if np.any(p < 0):
                raise ValueError(f"prior for {name!r} has negative mass")
            if abs(p.sum() - 1.0) > 1e-12:
                raise ValueError(f"prior for {name!r} sums to {p.sum()!r}, not 1")
            p.flags.writeable = False
            frozen.append(p)
        object.__setattr__(self, "priors", tuple(frozen))

    @classmethod
    def uniform(cls, cardinalities: Sequence[int], names: Sequence[str] | None = None) -> "FactorSpace":
        """Build a space with uniform priors; names default to f0, f1, ..."""
        cards = tuple(int(c) for c in cardinalities)
        if names is None:
            names = tuple(f"f{i}" for i in range(len(cards)))
        priors = tuple(np.full(c, 1.0 / c) for c in cards)
        return cls(tuple(names), cards, priors)

    @property
    def num_factors(self) -> int:
        return len(self.cardinalities)

    def assignments(self) -> np.ndarray:
        """Enumerate all full assignments, shape (prod(cards), k)."""
        grids = np.meshgrid(*[np.arange(c) for c in self.cardinalities], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def assignment_weights(self, fixed: "FactorAssignment | None" = None) -> np.ndarray:
        """Prior weight of every full assignment; fixed slots contribute an
        indicator instead of their prior."""
        full = self.assignments()
        w = np.ones(len(full))
        for i, prior in enumerate(self.priors):
            if fixed is not None and fixed.mask[i]:
                w *= full[:, i] == fixed.values[i]
            else:
                w *= prior[full[:, i]]
        return w


@dataclass(frozen=True)
class FactorAssignment:
    """A (possibly partial) assignment of factor labels.

    ``mask[i]`` is True when factor i is fixed; unmasked values are ignored
    by samplers and resampled from the priors.
    """

    values: tuple[int, ...]
    mask: tuple[bool, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.mask):
            raise ValueError("values and mask must have equal length")

    @classmethod
    def free(cls, num_factors: int) -> "FactorAssignment":
        return cls((0,) * num_factors, (False,) * num_factors)

    @classmethod
    def fixing(cls, num_factors: int, fixed: Mapping[int, int]) -> "FactorAssignment":
        values = [0] * num_factors
        mask = [False] * num_factors
        for i, v in fixed.items():
            values[i] = int(v)
            mask[i] = True
        return cls(tuple(values), tuple(mask))

    def validate(self, space: FactorSpace) -> None:
        if len(self.values) != space.num_factors:
            raise ValueError(
                f"assignment has {len(self.values)} slots, space has {space.num_factors} factors"
            )
        for i, (v, m) in enumerate(zip(self.values, self.mask)):
            if m and not 0 <= v < space.cardinalities[i]:
                raise ValueError(
                    f"fixed value {v} out of range for factor {space.names[i]!r} "
                    f"(cardinality {space.cardinalities[i]})"
                )


@dataclass(frozen=True)
class Dataset:
    """Row-aligned factor labels and code vectors."""

    factors: np.ndarray  # (n, k) integer labels
    codes: np.ndarray  # (n, d) float codes

    def __post_init__(self) -> None:
        factors = np.asarray(self.factors)
        codes = np.asarray(self.codes, dtype=float)
        if factors.ndim != 2 or codes.ndim != 2:
            raise ValueError("factors and codes must be 2-D")
        if factors.shape[0] != codes.shape[0]:
            raise ValueError(
                f"row mismatch: {factors.shape[0]} factor rows vs {codes.shape[0]} code rows"
            )
        if not np.all(np.isfinite(codes)):
            raise ValueError("codes contain NaN or Inf")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "codes", codes)

    def check_against(self, space: FactorSpace) -> None:
        if self.factors.shape[1] != space.num_factors:
            raise ValueError("factor column count does not match space")
        for i, card in enumerate(space.cardinalities):
            col = self.factors[:, i]
            if col.min(initial=0) < 0 or col.max(initial=0) >= card:
                raise ValueError(f"factor column {i} outside [0, {card})")

    @property
    def num_rows(self) -> int:
        return self.factors.shape[0]


@dataclass(frozen=True)
class RepresentationSource:
    """Conditional sampler producing codes for (partially fixed) assignments.

    ``draw(space, n, fixed, rng)`` returns ``(factors, codes)`` with fixed
    slots respected exactly and free slots resampled.  ``mean_codes`` maps a
    factor matrix to noise-free codes and backs the exact-enumeration paths;
    it is None when no noise-free form exists.
    """

    code_dim: int
    draw: Callable[[FactorSpace, int, FactorAssignment, np.random.Generator], tuple[np.ndarray, np.ndarray]]
    mean_codes: Callable[[np.ndarray], np.ndarray] | None = None
    description: str = ""


def sample_factor_matrix(
    space: FactorSpace, fixed: FactorAssignment, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample n assignments: fixed slots kept, free slots drawn from priors."""
    fixed.validate(space)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    out = np.empty((n, space.num_factors), dtype=np.int64)
    for i, (card, prior) in enumerate(zip(space.cardinalities, space.priors)):
        if fixed.mask[i]:
            out[:, i] = fixed.values[i]
        else:
            out[:, i] = rng.choice(card, size=n, p=prior)
    return out


def sample_factors(
    space: FactorSpace, fixed: FactorAssignment, rng: np.random.Generator
) -> FactorAssignment:
    """Complete a partial assignment with independent prior draws."""
    row = sample_factor_matrix(space, fixed, 1, rng)[0]
    return FactorAssignment(tuple(int(v) for v in row), (True,) * space.num_factors)


def sample_batch(
    source: RepresentationSource,
    space: FactorSpace,
    n: int,
    fixed: FactorAssignment,
    rng: np.random.Generator,
) -> Dataset:
    """Draw n rows from a source under a (possibly partial) intervention."""
    fixed.validate(space)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    factors, codes = source.draw(space, n, fixed, rng)
    ds = Dataset(factors, codes)
    ds.check_against(space)
    if ds.codes.shape[1] != source.code_dim:
        raise ValueError(
            f"source produced {ds.codes.shape[1]} code dims, declared {source.code_dim}"
        )
    return ds


def encoder_source(
    space: FactorSpace,
    encode: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    mean_codes: Callable[[np.ndarray], np.ndarray] | None,
    code_dim: int,
    description: str = "",
) -> RepresentationSource:
    """Wrap an encoder function as a RepresentationSource.

    Free factor slots are drawn from the space priors, then ``encode`` maps
    the factor matrix to codes (drawing any observation noise from rng).
    """

    def draw(sp: FactorSpace, n: int, fixed: FactorAssignment, rng: np.random.Generator):
        factors = sample_factor_matrix(sp, fixed, n, rng)
        return factors, encode(factors, rng)

    return RepresentationSource(code_dim=code_dim, draw=draw, mean_codes=mean_codes, description=description)
