"""File formats and manifest-driven evaluation.

Three JSON/CSV surfaces:

* Manifest (JSON): factor space, representation sources (inline encoder
  specs or external code-table files), budgets, base seed.
* CodeTable (CSV): external representation dump with columns
  ``factor_<name>...`` then ``code_0..code_{d-1}``; strict, line-diagnosed
  parser.
* Report (JSON): one record per source with every score, reproducible
  byte-for-byte from (manifest, seed); all writes are atomic.

Per-source seeds are ``manifest.seed + source_index``, so evaluation order
and worker count never change any number.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .analysis import ModelRecord
from .classifiers import GbtConfig
from .core import FactorSpace, RepresentationSource
from .fairness import unfairness_score
from .metrics import METRIC_NAMES, MetricBudget, compute_all_metrics
from .worlds import EncoderSpec, build_encoder

SCHEMA_VERSION = 1
MAX_CODE_TABLE_ROWS = 1_000_000


@dataclass(frozen=True)
class SourceDecl:
    source_id: str
    encoder: EncoderSpec | None = None
    code_table: str | None = None

    def __post_init__(self) -> None:
        if (self.encoder is None) == (self.code_table is None):
            raise ValueError(
                f"source {self.source_id!r} must declare exactly one of encoder / code_table"
            )

    def describe(self) -> str:
        if self.encoder is not None:
            return "encoder:" + json.dumps(self.encoder.to_dict(), sort_keys=True)
        return f"code_table:{self.code_table}"


@dataclass(frozen=True)
class Manifest:
    seed: int
    output_dir: str
    space: FactorSpace
    sources: tuple[SourceDecl, ...]
    metric_budget: MetricBudget
    gbt_config: GbtConfig
    fairness_n: int

    def __post_init__(self) -> None:
        if not self.sources:
            raise ValueError("manifest needs at least one source")
        ids = [s.source_id for s in self.sources]
        if len(set(ids)) != len(ids):
            raise ValueError(f"source ids must be unique, got {ids}")
        if self.fairness_n < 1:
            raise ValueError("fairness_n must be >= 1")


def _space_to_dict(space: FactorSpace) -> dict:
    out: dict = {
        "factors": [
            {"name": n, "cardinality": c} for n, c in zip(space.names, space.cardinalities)
        ]
    }
    if any(np.ptp(p) > 0 for p in space.priors):
        out["priors"] = [list(map(float, p)) for p in space.priors]
    return out


def _space_from_dict(d: dict) -> FactorSpace:
    names = tuple(f["name"] for f in d["factors"])
    cards = tuple(int(f["cardinality"]) for f in d["factors"])
    if "priors" in d:
        priors = tuple(np.asarray(p, dtype=float) for p in d["priors"])
        return FactorSpace(names, cards, priors)
    return FactorSpace.uniform(cards, names)


def manifest_to_dict(m: Manifest) -> dict:
    sources = []
    for s in m.sources:
        entry: dict = {"id": s.source_id}
        if s.encoder is not None:
            entry["encoder"] = s.encoder.to_dict()
        else:
            entry["code_table"] = s.code_table
        sources.append(entry)
    budget = {
        "num_train_points": m.metric_budget.num_train_points,
        "num_eval_points": m.metric_budget.num_eval_points,
        "batch_size": m.metric_budget.batch_size,
        "bins": m.metric_budget.bins,
    }
    gbt = {
        "num_trees": m.gbt_config.num_trees,
        "max_depth": m.gbt_config.max_depth,
        "learning_rate": m.gbt_config.learning_rate,
        "train_size": m.gbt_config.train_size,
        "test_size": m.gbt_config.test_size,
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": m.seed,
        "output_dir": m.output_dir,
        "space": _space_to_dict(m.space),
        "sources": sources,
        "budgets": {"metrics": budget, "gbt": gbt, "fairness_n": m.fairness_n},
    }


def manifest_from_dict(d: dict, base_dir: str = ".") -> Manifest:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported manifest schema_version {d.get('schema_version')!r}")
    sources = []
    for entry in d["sources"]:
        if "encoder" in entry:
            sources.append(SourceDecl(entry["id"], encoder=EncoderSpec.from_dict(entry["encoder"])))
        else:
            path = entry["code_table"]
            resolved = path if os.path.isabs(path) else os.path.join(base_dir, path)
            if not os.path.exists(resolved):
                raise ValueError(f"code table for source {entry['id']!r} not found: {resolved}")
            sources.append(SourceDecl(entry["id"], code_table=path))
    budgets = d.get("budgets", {})
    return Manifest(
        seed=int(d["seed"]),
        output_dir=d.get("output_dir", "fairlens-out"),
        space=_space_from_dict(d["space"]),
        sources=tuple(sources),
        metric_budget=MetricBudget(**budgets.get("metrics", {})),
        gbt_config=GbtConfig(**budgets.get("gbt", {})),
        fairness_n=int(budgets.get("fairness_n", 10000)),
    )


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_manifest(m: Manifest, path: str) -> None:
    atomic_write_text(path, dump_json(manifest_to_dict(m)))


def load_manifest(path: str) -> Manifest:
    with open(path, encoding="utf-8") as f:
        d = json.load(f)
    return manifest_from_dict(d, base_dir=os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# CodeTable parsing and the empirical source it backs
# ---------------------------------------------------------------------------


def load_code_table(path: str, space: FactorSpace, max_rows: int = MAX_CODE_TABLE_ROWS):
    """Parse a code-table CSV against a declared factor space.

    Returns (factors, codes).  Every malformed cell is rejected with a
    line-numbered message.
    """
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if not header:
            raise ValueError(f"{path}: line 1: missing header row")
        cols = header.split(",")
        expected = [f"factor_{n}" for n in space.names]
        if cols[: len(expected)] != expected:
            raise ValueError(
                f"{path}: line 1: factor columns must be {expected}, got {cols[:len(expected)]}"
            )
        code_cols = cols[len(expected) :]
        d = len(code_cols)
        if d < 1 or code_cols != [f"code_{i}" for i in range(d)]:
            raise ValueError(
                f"{path}: line 1: code columns must be code_0..code_{{d-1}}, got {code_cols}"
            )
        factors, codes = [], []
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(cols):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(cols)} cells, got {len(cells)}"
                )
            try:
                frow = [int(c) for c in cells[: len(expected)]]
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: bad factor label: {exc}") from None
            for i, v in enumerate(frow):
                if not 0 <= v < space.cardinalities[i]:
                    raise ValueError(
                        f"{path}: line {lineno}: factor {space.names[i]!r} value {v} outside "
                        f"[0, {space.cardinalities[i]})"
                    )
            try:
                crow = [float(c) for c in cells[len(expected) :]]
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: bad code value: {exc}") from None
            if not all(np.isfinite(crow)):
                raise ValueError(f"{path}: line {lineno}: non-finite code value")
            factors.append(frow)
            codes.append(crow)
            if len(factors) > max_rows:
                raise ValueError(f"{path}: more than {max_rows} rows")
    if not factors:
        raise ValueError(f"{path}: no data rows")
    factors_arr = np.asarray(factors, dtype=np.int64)
    for i, name in enumerate(space.names):
        if len(np.unique(factors_arr[:, i])) < 2:
            raise ValueError(f"{path}: factor column {name!r} has fewer than 2 distinct values")
    return factors_arr, np.asarray(codes, dtype=float)


def empirical_source(factors: np.ndarray, codes: np.ndarray, space: FactorSpace) -> RepresentationSource:
    """Resampling source over stored (factors, codes) rows.

    Draws with fixed slots resample uniformly among matching rows, so free
    slots follow the empirical conditional distribution of the dump.  The
    noise-free mean code of a full assignment is the mean over its rows;
    assignments never observed have no mean and exact mode rejects them.
    """
    cards = space.cardinalities
    keys = np.ravel_multi_index(tuple(factors.T), cards)
    uniq, inverse = np.unique(keys, return_inverse=True)
    sums = np.zeros((len(uniq), codes.shape[1]))
    np.add.at(sums, inverse, codes)
    means = sums / np.bincount(inverse)[:, None]

    def draw(sp, n, fixed, rng):
        mask = np.ones(len(factors), dtype=bool)
        for i, (m, v) in enumerate(zip(fixed.mask, fixed.values)):
            if m:
                mask &= factors[:, i] == v
        rows = np.nonzero(mask)[0]
        if len(rows) == 0:
            fixed_desc = {i: v for i, (m, v) in enumerate(zip(fixed.mask, fixed.values)) if m}
            raise ValueError(f"code table has no rows matching intervention {fixed_desc}")
        idx = rows[rng.integers(0, len(rows), size=n)]
        return factors[idx], codes[idx]

    def mean_codes(assignments: np.ndarray) -> np.ndarray:
        k = np.ravel_multi_index(tuple(np.asarray(assignments).T), cards)
        pos = np.searchsorted(uniq, k)
        covered = (pos < len(uniq)) & (uniq[np.minimum(pos, len(uniq) - 1)] == k)
        if not covered.all():
            raise ValueError("code table does not cover every factor combination")
        return means[pos]

    return RepresentationSource(
        code_dim=codes.shape[1], draw=draw, mean_codes=mean_codes, description="code_table"
    )


# ---------------------------------------------------------------------------
# Per-source evaluation and report assembly
# ---------------------------------------------------------------------------


def build_source(decl: SourceDecl, space: FactorSpace, base_dir: str) -> RepresentationSource:
    if decl.encoder is not None:
        return build_encoder(decl.encoder, space)
    path = decl.code_table
    resolved = path if os.path.isabs(path) else os.path.join(base_dir, path)
    factors, codes = load_code_table(resolved, space)
    return empirical_source(factors, codes, space)


def evaluate_source(manifest: Manifest, index: int, base_dir: str = ".") -> dict:
    """Evaluate one manifest source into a JSON-ready record dict."""
    decl = manifest.sources[index]
    seed = manifest.seed + index
    record: dict = {
        "model_id": decl.source_id,
        "source": decl.describe(),
        "seed": seed,
        "metrics": {},
        "metric_errors": {},
        "gbt_accuracy": None,
        "unfairness": None,
        "target_accuracy": {},
        "task_unfairness": {},
        "adjusted": {},
        "error": None,
    }
    try:
        source = build_source(decl, manifest.space, base_dir)
    except Exception as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
        return record
    budget = MetricBudget(
        num_train_points=manifest.metric_budget.num_train_points,
        num_eval_points=manifest.metric_budget.num_eval_points,
        batch_size=manifest.metric_budget.batch_size,
        bins=manifest.metric_budget.bins,
        seed=seed,
    )
    gbt = GbtConfig(
        num_trees=manifest.gbt_config.num_trees,
        max_depth=manifest.gbt_config.max_depth,
        learning_rate=manifest.gbt_config.learning_rate,
        train_size=manifest.gbt_config.train_size,
        test_size=manifest.gbt_config.test_size,
        seed=seed,
    )
    scores, errors = compute_all_metrics(source, manifest.space, budget, gbt)
    record["metrics"] = {k: scores[k] for k in METRIC_NAMES if k in scores}
    record["metric_errors"] = errors
    try:
        fr = unfairness_score(source, manifest.space, gbt, manifest.fairness_n, seed=seed)
        record["gbt_accuracy"] = fr.gbt_accuracy
        record["unfairness"] = fr.unfairness
        record["target_accuracy"] = {str(t): a for t, a in sorted(fr.target_accuracy.items())}
        record["task_unfairness"] = {
            f"{t.target}|{t.sensitive}": u for t, u in sorted(
                fr.task_unfairness.items(), key=lambda kv: (kv[0].target, kv[0].sensitive)
            )
        }
    except Exception as exc:
        record["metric_errors"]["fairness"] = f"{type(exc).__name__}: {exc}"
    return record


def record_from_dict(d: dict) -> ModelRecord:
    return ModelRecord(
        model_id=d["model_id"],
        source=d.get("source", ""),
        metrics=dict(d.get("metrics", {})),
        metric_errors=dict(d.get("metric_errors", {})),
        gbt_accuracy=d.get("gbt_accuracy"),
        unfairness=d.get("unfairness"),
        target_accuracy={int(k): v for k, v in d.get("target_accuracy", {}).items()},
        task_unfairness={
            tuple(int(x) for x in k.split("|")): v
            for k, v in d.get("task_unfairness", {}).items()
        },
        adjusted=dict(d.get("adjusted", {})),
        error=d.get("error"),
    )


def load_report(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        report = json.load(f)
    if report.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema_version {report.get('schema_version')!r}")
    return report


def successful_records(report: dict) -> list[ModelRecord]:
    return [
        record_from_dict(r) for r in report["records"] if r.get("error") is None
    ]


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    def fmt(v) -> str:
        if v is None or (isinstance(v, float) and np.isnan(v)):
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")
