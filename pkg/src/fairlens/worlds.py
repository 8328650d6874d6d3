"""Synthetic generative worlds and encoders of tunable quality.

Two halves:

* an encoder family (identity, permutations, in-plane rotations, random
  orthogonal mixing, additive noise, dimension collapse) that stands in for
  trained representation models at desk scale, and
* an exactly solvable two-factor world where the observation is
  ``x = min(y, s)`` for independent Bernoulli target y and sensitive s.
  Everything about that world (joint, Bayes posterior, demographic-parity
  gaps, unfairness) is available both in closed form and by brute-force
  enumeration of the four (y, s) outcomes, so the two routes can be checked
  against each other to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FactorSpace, RepresentationSource, encoder_source, make_rng

_KINDS = ("identity", "permuted", "rotation", "random_linear", "noisy", "collapse")


@dataclass(frozen=True)
class EncoderSpec:
    """Declarative encoder description, JSON-friendly and composable.

    ``noisy`` and ``collapse`` wrap a base spec; the other kinds start from
    the identity map that scales factor i onto code dim i in [-1, 1].
    """

    kind: str
    code_dim: int | None = None
    perm: tuple[int, ...] | None = None  # permuted
    angle: float | None = None  # rotation, degrees in [0, 90]
    pairs: tuple[tuple[int, int], ...] | None = None  # rotation
    seed: int | None = None  # random_linear
    sigma: float | None = None  # noisy
    dropped: tuple[int, ...] | None = None  # collapse
    base: "EncoderSpec | None" = None  # noisy / collapse

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.kind == "permuted" and self.perm is None:
            raise ValueError("permuted encoder needs perm")
        if self.kind == "rotation":
            if self.angle is None or not 0.0 <= self.angle <= 90.0:
                raise ValueError(f"rotation angle must be in [0, 90], got {self.angle}")
            if not self.pairs:
                raise ValueError("rotation encoder needs at least one dim pair")
            flat = [i for pair in self.pairs for i in pair]
            if len(set(flat)) != len(flat):
                raise ValueError(f"rotation pairs must be disjoint, got {self.pairs}")
        if self.kind == "random_linear" and self.seed is None:
            raise ValueError("random_linear encoder needs a seed")
        if self.kind == "noisy":
            if self.sigma is None or self.sigma < 0:
                raise ValueError(f"noise sigma must be >= 0, got {self.sigma}")
            if self.base is None:
                raise ValueError("noisy encoder needs a base spec")
        if self.kind == "collapse":
            if self.dropped is None or len(self.dropped) == 0:
                raise ValueError("collapse encoder needs dropped dims")
            if len(set(self.dropped)) != len(self.dropped):
                raise ValueError("dropped dims must be distinct")
            if self.base is None:
                raise ValueError("collapse encoder needs a base spec")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.code_dim is not None:
            out["code_dim"] = self.code_dim
        if self.perm is not None:
            out["perm"] = list(self.perm)
        if self.angle is not None:
            out["angle"] = self.angle
        if self.pairs is not None:
            out["pairs"] = [list(p) for p in self.pairs]
        if self.seed is not None:
            out["seed"] = self.seed
        if self.sigma is not None:
            out["sigma"] = self.sigma
        if self.dropped is not None:
            out["dropped"] = list(self.dropped)
        if self.base is not None:
            out["base"] = self.base.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderSpec":
        return cls(
            kind=d["kind"],
            code_dim=d.get("code_dim"),
            perm=tuple(d["perm"]) if "perm" in d else None,
            angle=d.get("angle"),
            pairs=tuple(tuple(p) for p in d["pairs"]) if "pairs" in d else None,
            seed=d.get("seed"),
            sigma=d.get("sigma"),
            dropped=tuple(d["dropped"]) if "dropped" in d else None,
            base=cls.from_dict(d["base"]) if "base" in d else None,
        )


def _identity_map(space: FactorSpace, code_dim: int):
    cards = np.asarray(space.cardinalities, dtype=float)
    k = space.num_factors

    def mean(factors: np.ndarray) -> np.ndarray:
        codes = np.zeros((len(factors), code_dim))
        codes[:, :k] = 2.0 * factors / (cards - 1.0) - 1.0
        return codes

    return mean


def _orthogonal_matrix(dim: int, seed: int) -> np.ndarray:
    g = make_rng(seed).normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def _build_mean(spec: EncoderSpec, space: FactorSpace):
    """Return (noise-free map, code_dim, noise sigma per output dim)."""
    k = space.num_factors
    if spec.kind in ("identity", "permuted", "rotation", "random_linear"):
        dim = spec.code_dim if spec.code_dim is not None else k
        if dim < k:
            raise ValueError(f"code_dim {dim} < {k} factors; use a collapse encoder to drop dims")
        base = _identity_map(space, dim)
        if spec.kind == "identity":
            return base, dim, np.zeros(dim)
        if spec.kind == "permuted":
            perm = np.asarray(spec.perm)
            if sorted(spec.perm) != list(range(dim)):
                raise ValueError(f"perm {spec.perm} is not a permutation of 0..{dim - 1}")
            return (lambda f: base(f)[:, perm]), dim, np.zeros(dim)
        if spec.kind == "rotation":
            for i, j in spec.pairs:
                if not (0 <= i < dim and 0 <= j < dim):
                    raise ValueError(f"rotation pair ({i}, {j}) out of range for {dim} dims")
            theta = np.deg2rad(spec.angle)
            rot = np.eye(dim)
            for i, j in spec.pairs:
                rot[i, i] = rot[j, j] = np.cos(theta)
                rot[i, j] = -np.sin(theta)
                rot[j, i] = np.sin(theta)
            return (lambda f: base(f) @ rot.T), dim, np.zeros(dim)
        mat = _orthogonal_matrix(dim, spec.seed)
        return (lambda f: base(f) @ mat.T), dim, np.zeros(dim)
    if spec.kind == "noisy":
        base_mean, dim, base_sigma = _build_mean(spec.base, space)
        sigma = np.sqrt(base_sigma**2 + spec.sigma**2)
        return base_mean, dim, sigma
    # collapse
    base_mean, dim, base_sigma = _build_mean(spec.base, space)
    dropped = set(spec.dropped)
    if any(not 0 <= i < dim for i in dropped):
        raise ValueError(f"dropped dims {spec.dropped} out of range for {dim} dims")
    keep = np.array([i for i in range(dim) if i not in dropped], dtype=int)
    if len(keep) == 0:
        raise ValueError("collapse must leave at least one dim")
    return (lambda f: base_mean(f)[:, keep]), len(keep), base_sigma[keep]


def build_encoder(
    spec: EncoderSpec, space: FactorSpace, rng: np.random.Generator | None = None
) -> RepresentationSource:
    """Materialize an EncoderSpec as a RepresentationSource for a space.

    Observation noise (if any) is drawn from the sampling rng at draw time;
    the noise-free mean map backs the exact-enumeration paths.
    """
    mean, dim, sigma = _build_mean(spec, space)
    if np.any(sigma > 0):

        def encode(factors: np.ndarray, rng: np.random.Generator) -> np.ndarray:
            return mean(factors) + rng.normal(0.0, 1.0, (len(factors), dim)) * sigma

    else:

        def encode(factors: np.ndarray, rng: np.random.Generator) -> np.ndarray:
            return mean(factors)

    return encoder_source(space, encode, mean, dim, description=str(spec.to_dict()))


def standard_family(num_factors: int) -> list[tuple[str, EncoderSpec]]:
    """The shipped synthetic encoder family, ordered and named.

    Covers the full quality range: identity and permutations (disentangled),
    rotations at increasing angles, random orthogonal mixing, additive noise
    grades, and lossy collapses of mixed codes (strongly entangled).
    """
    if num_factors < 2:
        raise ValueError("need at least 2 factors")
    angles = (0, 15, 30, 45, 60, 75, 90)
    sigmas = (0.0, 0.1, 0.3)
    seeds = (0, 1, 2)
    pairs_all = tuple(
        (i, i + 1) for i in range(0, num_factors - 1, 2)
    )  # disjoint adjacent pairs

    def noisy(base: EncoderSpec, sigma: float) -> EncoderSpec:
        return base if sigma == 0.0 else EncoderSpec(kind="noisy", sigma=sigma, base=base)

    family: list[tuple[str, EncoderSpec]] = [("identity", EncoderSpec(kind="identity"))]
    for angle in angles:
        for sigma in sigmas:
            rot = EncoderSpec(kind="rotation", angle=float(angle), pairs=pairs_all)
            family.append((f"rot{angle}-n{sigma:g}", noisy(rot, sigma)))
    for seed in seeds:
        for sigma in sigmas:
            mix = EncoderSpec(kind="random_linear", seed=seed)
            family.append((f"mix{seed}-n{sigma:g}", noisy(mix, sigma)))
    for seed in seeds:
        for kept in range(1, num_factors):
            dropped = tuple(range(kept, num_factors))
            spec = EncoderSpec(
                kind="collapse", dropped=dropped, base=EncoderSpec(kind="random_linear", seed=seed)
            )
            family.append((f"mix{seed}-keep{kept}", spec))
    if num_factors >= 2:
        rot45 = EncoderSpec(kind="rotation", angle=45.0, pairs=pairs_all)
        family.append(
            ("rot45-drop0", EncoderSpec(kind="collapse", dropped=(0,), base=rot45))
        )
        if num_factors >= 4:
            family.append(
                ("rot45-drop02", EncoderSpec(kind="collapse", dropped=(0, 2), base=rot45))
            )
        for angle in (15, 45, 75):
            first = EncoderSpec(kind="rotation", angle=float(angle), pairs=((0, 1),))
            family.append((f"rotpair{angle}-n0", first))
            family.append((f"rotpair{angle}-n0.1", noisy(first, 0.1)))
    shift = tuple((i + 1) % num_factors for i in range(num_factors))
    reverse = tuple(reversed(range(num_factors)))
    family.append(("perm-shift", EncoderSpec(kind="permuted", perm=shift)))
    family.append(("perm-reverse", EncoderSpec(kind="permuted", perm=reverse)))
    family.append(("identity-n1", noisy(EncoderSpec(kind="identity"), 1.0)))
    family.append(("mix0-n1", noisy(EncoderSpec(kind="random_linear", seed=0), 1.0)))
    family.append(
        (
            "identity-drop-last",
            EncoderSpec(
                kind="collapse", dropped=(num_factors - 1,), base=EncoderSpec(kind="identity")
            ),
        )
    )
    return family


# ---------------------------------------------------------------------------
# Exactly solvable min-mixing world
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinMixingWorld:
    """Two independent Bernoulli factors observed through x = min(y, s).

    ``q`` is p(s=1), ``b`` is p(y=1); both strictly inside (0, 1).
    """

    q: float
    b: float

    def __post_init__(self) -> None:
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must satisfy 0 < q < 1, got {self.q}")
        if not 0.0 < self.b < 1.0:
            raise ValueError(f"b must satisfy 0 < b < 1, got {self.b}")


def joint_distribution(world: MinMixingWorld) -> np.ndarray:
    """Exact joint p[y, s, x]; cells with x != min(y, s) carry zero mass."""
    p = np.zeros((2, 2, 2))
    for y in (0, 1):
        for s in (0, 1):
            w = (world.b if y else 1.0 - world.b) * (world.q if s else 1.0 - world.q)
            p[y, s, min(y, s)] = w
    return p


def bayes_posterior(world: MinMixingWorld) -> np.ndarray:
    """p(y=1 | x) for x in {0, 1}; the x=1 cell identifies y exactly."""
    q, b = world.q, world.b
    return np.array([b * (1.0 - q) / (1.0 - q * b), 1.0])


def _decision_rule(world: MinMixingWorld, mode: str) -> np.ndarray:
    """p(yhat=1 | x) for the perfect classifier in the requested mode."""
    post = bayes_posterior(world)
    if mode == "stochastic":
        return post
    if mode == "argmax":
        # ties (posterior exactly 0.5) break toward label 0
        return (post > 0.5).astype(float)
    raise ValueError(f"mode must be 'stochastic' or 'argmax', got {mode!r}")


@dataclass(frozen=True)
class PredictionRates:
    """p(yhat=1) marginally and under each intervention on s."""

    marginal: float
    given_s0: float
    given_s1: float


def prediction_rates(world: MinMixingWorld, mode: str) -> PredictionRates:
    """Brute-force enumeration of the four (y, s) outcomes."""
    joint = joint_distribution(world)
    rule = _decision_rule(world, mode)
    p_s = joint.sum(axis=(0, 2))
    rate_by_s = np.array(
        [sum(joint[y, s, min(y, s)] * rule[min(y, s)] for y in (0, 1)) / p_s[s] for s in (0, 1)]
    )
    marginal = float(sum(joint[y, s, min(y, s)] * rule[min(y, s)] for y in (0, 1) for s in (0, 1)))
    return PredictionRates(marginal, float(rate_by_s[0]), float(rate_by_s[1]))


def dp_gap(world: MinMixingWorld, mode: str) -> float:
    """Demographic parity gap p(yhat=1 | s=1) - p(yhat=1 | s=0), enumerated."""
    rates = prediction_rates(world, mode)
    return rates.given_s1 - rates.given_s0


def marginal_gap(world: MinMixingWorld, mode: str) -> float:
    """Shift of the marginal rate against the s=0 group,
    p(yhat=1) - p(yhat=1 | s=0); equals TV(p(yhat), p(yhat | s=0)) here."""
    rates = prediction_rates(world, mode)
    return rates.marginal - rates.given_s0


def dp_gap_stochastic_exact(world: MinMixingWorld) -> float:
    """Closed form of the stochastic-mode DP gap: b(1-b)/(1-qb)."""
    q, b = world.q, world.b
    return b * (1.0 - b) / (1.0 - q * b)


def marginal_gap_stochastic_exact(world: MinMixingWorld) -> float:
    """Closed form of the stochastic-mode marginal shift: b*q*(1-b)/(1-qb)."""
    q, b = world.q, world.b
    return b * q * (1.0 - b) / (1.0 - q * b)


def unfairness_exact(world: MinMixingWorld, mode: str) -> float:
    """Mean total variation between the marginal prediction distribution and
    each interventional one, enumerated exactly."""
    rates = prediction_rates(world, mode)
    return 0.5 * (abs(rates.marginal - rates.given_s0) + abs(rates.marginal - rates.given_s1))


def unfairness_monte_carlo(
    world: MinMixingWorld, mode: str, n: int, rng: np.random.Generator
) -> float:
    """Monte Carlo estimate with n fresh interventional draws per s value.

    The marginal is the prior-weighted mixture of the interventional
    estimates, matching the sampling estimator used by the fairness module.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rule = _decision_rule(world, mode)
    rates = []
    for s in (0, 1):
        y = rng.random(n) < world.b
        x = np.minimum(y.astype(int), s)
        p1 = rule[x]
        if mode == "stochastic":
            yhat = rng.random(n) < p1
        else:
            yhat = p1 >= 1.0
        rates.append(yhat.mean())
    marginal = (1.0 - world.q) * rates[0] + world.q * rates[1]
    return 0.5 * (abs(marginal - rates[0]) + abs(marginal - rates[1]))


def min_mixing_space(world: MinMixingWorld) -> FactorSpace:
    """Factor space with target factor 'y' and sensitive factor 's'."""
    return FactorSpace(
        names=("y", "s"),
        cardinalities=(2, 2),
        priors=(np.array([1.0 - world.b, world.b]), np.array([1.0 - world.q, world.q])),
    )


def min_mixing_source(world: MinMixingWorld) -> RepresentationSource:
    """One-dimensional representation carrying the observation min(y, s)."""

    def mean(factors: np.ndarray) -> np.ndarray:
        return np.minimum(factors[:, 0], factors[:, 1]).astype(float)[:, None]

    space = min_mixing_space(world)
    return encoder_source(space, lambda f, rng: mean(f), mean, 1, description="min(y, s)")


class ArgmaxBayesClassifier:
    """Deterministic perfect classifier on the min-mixing observation."""

    def __init__(self, world: MinMixingWorld):
        self._rule = _decision_rule(world, "argmax")

    def predict(self, X: np.ndarray) -> np.ndarray:
        x = (np.asarray(X)[:, 0] > 0.5).astype(int)
        return (self._rule[x] >= 1.0).astype(int)


class StochasticBayesClassifier:
    """Posterior-sampling perfect classifier; exposes class probabilities so
    exact evaluation can integrate over its randomness."""

    def __init__(self, world: MinMixingWorld):
        self._rule = _decision_rule(world, "stochastic")

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        x = (np.asarray(X)[:, 0] > 0.5).astype(int)
        p1 = self._rule[x]
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(len(X)) < self.predict_proba(X)[:, 1]).astype(int)
