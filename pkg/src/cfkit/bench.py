"""Seeded benchmark harness: memory-based and latent factor MAE grids.

A plan is a small ``key = value`` file::

    name = memory-ml100k
    dataset = ml100k
    data = data/ml-100k/u.data
    ratio = 0.2
    seed = 0
    repeats = 1
    layout = memory
    arm.ub-cosine = user-knn metric=cosine neighbors=0 ref=0.75 tol=0.05

Arm lines are ``kind key=value ...`` (shell-style quoting). Repeat ``r``
uses split seed ``seed + r``; every arm of a repeat shares that split.
"""

from __future__ import annotations

import csv
import io
import math
import shlex
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import stats

from cfkit.errors import DomainError
from cfkit.factorization import TrainConfig, explainability_scores, train_emf, train_mf, train_nmf
from cfkit.metrics import fast_mae
from cfkit.neighborhood import predict_item_based_many, predict_user_based_many
from cfkit.ratings import FORMATS, load_matrix, split_holdout
from cfkit.similarity import build_similarity_model, default_min_overlap
from cfkit.svd import svd_fit

MEMORY_KINDS = ("user-knn", "item-knn")
FACTOR_KINDS = ("mf", "nmf", "emf", "svd")
LAYOUTS = ("memory", "factor", "flat")
NOT_APPLICABLE = "---"

PLAN_KEYS = {"name", "dataset", "data", "ratio", "seed", "repeats", "layout", "ttest"}
ARM_KEYS = {
    "metric", "neighbors", "min_overlap", "normalize", "k", "epochs", "alpha", "lambda",
    "beta", "lambda_expl", "theta", "neighbor_k", "expl_metric", "init_scale", "ref", "tol",
}
_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}

COLUMNS = ("dataset", "model", "config", "value", "seed")


# ---------------------------------------------------------------------------
# plans
# ---------------------------------------------------------------------------

@dataclass
class Arm:
    name: str
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def normalize(self) -> bool:
        return bool(self.params.get("normalize", False))

    @property
    def reference(self):
        return self.params.get("ref")

    @property
    def tolerance(self):
        return self.params.get("tol")

    @property
    def applicable(self) -> bool:
        return not (self.kind == "nmf" and self.normalize)

    def describe(self) -> str:
        keys = sorted(k for k in self.params if k not in ("ref", "tol"))
        return " ".join(f"{k}={self.params[k]}" for k in keys)


@dataclass
class BenchmarkPlan:
    name: str
    dataset: str = "ml100k"
    data: str = "data/ml-100k/u.data"
    ratio: float = 0.2
    seed: int = 0
    repeats: int = 1
    layout: str = "flat"
    arms: list = field(default_factory=list)
    ttest: tuple | None = None

    def __post_init__(self):
        if self.dataset not in FORMATS:
            raise DomainError(f"dataset must be one of {FORMATS}, got {self.dataset!r}")
        if self.layout not in LAYOUTS:
            raise DomainError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if self.repeats < 1:
            raise DomainError("repeats must be >= 1")
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise DomainError("arm names must be unique")
        if self.ttest is not None:
            if self.repeats < 2:
                raise DomainError("a t-test needs repeats >= 2")
            for a in self.ttest:
                if a not in names:
                    raise DomainError(f"t-test arm {a!r} is not in the plan")


def _convert(key, raw):
    if key == "normalize":
        if raw.lower() not in _BOOL:
            raise DomainError(f"normalize expects a boolean, got {raw!r}")
        return _BOOL[raw.lower()]
    if key in ("metric", "expl_metric"):
        return raw
    if key in ("neighbors", "min_overlap", "k", "epochs", "neighbor_k"):
        return int(raw)
    return float(raw)


def parse_arm(name: str, text: str) -> Arm:
    parts = shlex.split(text)
    if not parts:
        raise DomainError(f"arm {name!r} has no model kind")
    kind = parts[0]
    if kind not in MEMORY_KINDS + FACTOR_KINDS:
        raise DomainError(f"arm {name!r}: unknown model kind {kind!r}")
    params = {}
    for p in parts[1:]:
        key, sep, raw = p.partition("=")
        if not sep:
            raise DomainError(f"arm {name!r}: expected key=value, got {p!r}")
        if key not in ARM_KEYS:
            raise DomainError(f"arm {name!r}: unknown key {key!r}")
        try:
            params[key] = _convert(key, raw)
        except ValueError:
            raise DomainError(f"arm {name!r}: bad value for {key}: {raw!r}") from None
    return Arm(name, kind, params)


def parse_plan(text: str) -> BenchmarkPlan:
    fields, arms = {}, []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise DomainError(f"plan line {lineno}: expected key = value")
        if key.startswith("arm."):
            arms.append(parse_arm(key[4:], value))
        elif key in PLAN_KEYS:
            fields[key] = value
        else:
            raise DomainError(f"plan line {lineno}: unknown key {key!r}")
    if "name" not in fields:
        raise DomainError("plan needs a name")
    kw = {"name": fields["name"], "arms": arms}
    for key in ("dataset", "data", "layout"):
        if key in fields:
            kw[key] = fields[key]
    if "ratio" in fields:
        kw["ratio"] = float(fields["ratio"])
    for key in ("seed", "repeats"):
        if key in fields:
            kw[key] = int(fields[key])
    if "ttest" in fields:
        pair = tuple(s.strip() for s in fields["ttest"].split(","))
        if len(pair) != 2:
            raise DomainError("ttest expects two comma separated arm names")
        kw["ttest"] = pair
    return BenchmarkPlan(**kw)


def builtin_plans() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("cfkit.plans").iterdir()
                  if p.name.endswith(".cfg"))


def load_plan(path_or_name) -> BenchmarkPlan:
    """Read a plan file, or a built-in plan by name (see :func:`builtin_plans`)."""
    path = Path(path_or_name)
    if path.is_file():
        return parse_plan(path.read_text(encoding="utf-8"))
    name = str(path_or_name)
    if name in builtin_plans():
        return parse_plan(resources.files("cfkit.plans").joinpath(name + ".cfg")
                          .read_text(encoding="utf-8"))
    raise FileNotFoundError(f"no plan file or built-in plan named {name!r} "
                            f"(built-ins: {', '.join(builtin_plans())})")


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TTest:
    t: float
    dof: int
    p: float
    degenerate: bool = False


def two_sample_ttest(a, b) -> TTest:
    """Pooled-variance two-sample Student t test with a two-sided p value."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise DomainError("each sample needs at least two values")
    dof = a.size + b.size - 2
    diff = a.mean() - b.mean()
    pooled = (((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()) / dof
    se = math.sqrt(pooled * (1.0 / a.size + 1.0 / b.size))
    if se == 0.0:
        if diff == 0.0:
            return TTest(0.0, dof, 1.0, True)
        return TTest(math.copysign(math.inf, diff), dof, 0.0, True)
    t = float(diff / se)
    return TTest(t, dof, float(2.0 * stats.t.sf(abs(t), dof)))


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

@dataclass
class Row:
    dataset: str
    model: str
    config: str
    value: float | None
    seed: int
    elapsed: float = 0.0
    flag: str = ""


@dataclass
class BenchmarkTable:
    plan: BenchmarkPlan
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    ttest: TTest | None = None

    def values(self, arm: str) -> list:
        return [r.value for r in self.rows if r.model == arm]

    def mean(self, arm: str):
        vals = self.values(arm)
        if not vals or any(v is None for v in vals):
            return None
        return float(np.mean(vals))


class _SplitCache:
    """Similarity models shared by the arms of one repeat."""

    def __init__(self, train):
        self.train = train
        self._sims = {}

    def sims(self, orientation, metric, k, min_overlap):
        key = (orientation, metric, min_overlap)
        if key not in self._sims:
            size = self.train.m if orientation == "user_user" else self.train.n
            self._sims[key] = build_similarity_model(self.train, orientation, metric,
                                                     size, min_overlap)
        full = self._sims[key]
        return full if k == 0 else full.with_k(k)


def _train_config(arm: Arm, seed: int) -> TrainConfig:
    p = arm.params
    kw = {"seed": seed}
    for key in ("k", "epochs", "alpha", "beta", "lambda_expl", "init_scale"):
        if key in p:
            kw[key] = p[key]
    if "lambda" in p:
        kw["lambda_p"] = kw["lambda_q"] = p["lambda"]
    return TrainConfig(**kw)


def evaluate_arm(arm: Arm, split, cache: _SplitCache, seed: int) -> float | None:
    """Macro MAE of one arm on one split; ``None`` when not applicable."""
    if not arm.applicable:
        return None
    train = split.train
    users, items, actual = split.test_users, split.test_items, split.test_ratings
    p = arm.params
    if arm.kind in MEMORY_KINDS:
        orientation = "user_user" if arm.kind == "user-knn" else "item_item"
        metric = p.get("metric", "cosine")
        min_overlap = p.get("min_overlap", default_min_overlap(metric))
        sims = cache.sims(orientation, metric, p.get("neighbors", 0), min_overlap)
        predict = predict_user_based_many if arm.kind == "user-knn" else predict_item_based_many
        pred = predict(train, sims, users, items)[0]
    elif arm.kind == "svd":
        pred = svd_fit(train, p.get("k", 10), seed=seed).predict_many(users, items)
    else:
        cfg = _train_config(arm, seed)
        if arm.kind == "mf":
            model = train_mf(train, cfg, arm.normalize)
        elif arm.kind == "nmf":
            model = train_nmf(train, cfg)
        else:
            nk = p.get("neighbor_k", 50)
            metric = p.get("expl_metric", "cosine")
            sims = cache.sims("user_user", metric, nk, default_min_overlap(metric))
            W = explainability_scores(train, sims, "user_based", p.get("theta", 0.01), nk)
            model = train_emf(train, cfg, W, arm.normalize)
        pred = model.predict_many(users, items)
    return fast_mae(users, pred, actual)


def _deviation_note(arm: Arm, mean: float) -> str:
    return (f"{arm.name}: measured MAE {mean:.4f} lies outside the reference "
            f"{arm.reference:g} +/- {arm.tolerance:g}. The evaluation protocol behind "
            f"the reference value is not stated; the measured value is reported as is.")


def run_plan(plan: BenchmarkPlan, matrix=None) -> BenchmarkTable:
    """Run every arm on every repeat. ``matrix`` overrides loading ``plan.data``."""
    table = BenchmarkTable(plan)
    if not plan.arms:
        return table
    if matrix is None:
        matrix = load_matrix(plan.data, plan.dataset)
    for r in range(plan.repeats):
        seed = plan.seed + r
        split = split_holdout(matrix, plan.ratio, seed)
        cache = _SplitCache(split.train)
        for arm in plan.arms:
            start = time.perf_counter()
            value = evaluate_arm(arm, split, cache, seed)
            table.rows.append(Row(plan.dataset, arm.name, f"{arm.kind} {arm.describe()}",
                                  value, seed, time.perf_counter() - start))
    for arm in plan.arms:
        mean = table.mean(arm.name)
        flag = ""
        if not arm.applicable:
            flag = "not-applicable"
        elif arm.reference is not None and arm.tolerance is not None:
            if abs(mean - arm.reference) > arm.tolerance:
                flag = "deviation"
                table.notes.append(_deviation_note(arm, mean))
        for row in table.rows:
            if row.model == arm.name:
                row.flag = flag
    if plan.ttest is not None:
        a, b = plan.ttest
        table.ttest = two_sample_ttest(table.values(a), table.values(b))
    return table


def _check_kinds(plan, allowed, what):
    for arm in plan.arms:
        if arm.kind not in allowed:
            raise DomainError(f"{what} benchmark cannot run arm {arm.name!r} of kind {arm.kind}")


def run_memory_benchmark(plan: BenchmarkPlan, matrix=None) -> BenchmarkTable:
    _check_kinds(plan, MEMORY_KINDS, "memory")
    return run_plan(plan, matrix)


def run_factor_benchmark(plan: BenchmarkPlan, matrix=None) -> BenchmarkTable:
    _check_kinds(plan, FACTOR_KINDS, "factor")
    return run_plan(plan, matrix)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    return NOT_APPLICABLE if value is None else f"{value:.6f}"


def _header(elapsed):
    return list(COLUMNS) + (["elapsed_s"] if elapsed else []) + ["flag"]


def _cells(row: Row, elapsed):
    out = [row.dataset, row.model, row.config, _fmt(row.value), str(row.seed)]
    if elapsed:
        out.append(f"{row.elapsed:.3f}")
    return out + [row.flag]


def _ttest_line(table):
    t = table.ttest
    a, b = table.plan.ttest
    line = f"t-test {a} vs {b}: t={t.t:.4f} dof={t.dof} p={t.p:.3g}"
    return line + (" (zero variance)" if t.degenerate else "")


def _memory_grid(table):
    labels = {"euclidean": "Euclidean", "cosine": "Cosine", "pearson": "Pearson",
              "adjusted_cosine": "Adjusted cosine"}
    cells, metrics = {}, []
    for arm in table.plan.arms:
        metric = arm.params.get("metric", "cosine")
        if metric not in metrics:
            metrics.append(metric)
        cells[(metric, arm.kind)] = arm
    lines = ["| Metric | Dataset | User-based | Item-based |", "|---|---|---|---|"]
    for metric in metrics:
        row = [labels.get(metric, metric), table.plan.dataset]
        for kind in MEMORY_KINDS:
            arm = cells.get((metric, kind))
            row.append(_grid_cell(table, arm))
        lines.append("| " + " | ".join(row) + " |")
    return lines


def _factor_grid(table):
    kinds = [k for k in ("mf", "nmf", "emf", "svd") if any(a.kind == k for a in table.plan.arms)]
    cells = {(a.normalize, a.kind): a for a in table.plan.arms}
    lines = ["| Preprocessing | Dataset | " + " | ".join(k.upper() for k in kinds) + " |",
             "|---|---|" + "---|" * len(kinds)]
    for norm, label in ((False, "Raw ratings"), (True, "Normalized ratings")):
        row = [label, table.plan.dataset]
        for kind in kinds:
            arm = cells.get((norm, kind))
            if arm is None and kind == "nmf" and norm:
                row.append(NOT_APPLICABLE)
            else:
                row.append(_grid_cell(table, arm))
        lines.append("| " + " | ".join(row) + " |")
    return lines


def _grid_cell(table, arm):
    if arm is None:
        return ""
    mean = table.mean(arm.name)
    if mean is None:
        return NOT_APPLICABLE
    mark = " (!)" if any(r.flag == "deviation" for r in table.rows if r.model == arm.name) else ""
    return f"{mean:.4f}{mark}"


def emit_report(table: BenchmarkTable, format: str = "text", elapsed: bool = False) -> bytes:
    """Serialize a table as ``text``, ``csv`` or ``markdown`` (UTF-8 bytes).

    The elapsed-time column is opt-in so that a fixed plan and seed give
    byte-identical reports.
    """
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(_header(elapsed))
        for row in table.rows:
            writer.writerow(_cells(row, elapsed))
        return buf.getvalue().encode("utf-8")
    if format == "text":
        rows = [_header(elapsed)] + [_cells(r, elapsed) for r in table.rows]
        widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
        if table.ttest is not None:
            lines.append(_ttest_line(table))
        lines += [f"NOTE {n}" for n in table.notes]
        return ("\n".join(lines) + "\n").encode("utf-8")
    if format == "markdown":
        if table.plan.layout == "memory":
            lines = _memory_grid(table)
        elif table.plan.layout == "factor":
            lines = _factor_grid(table)
        else:
            lines = ["| " + " | ".join(_header(elapsed)) + " |",
                     "|" + "---|" * len(_header(elapsed))]
            lines += ["| " + " | ".join(_cells(r, elapsed)) + " |" for r in table.rows]
        extra = []
        if table.plan.repeats > 1 and table.plan.layout != "flat":
            extra.append(f"Values are means over {table.plan.repeats} seeded splits.")
        if table.ttest is not None:
            extra.append(_ttest_line(table))
        extra += [f"(!) {n}" for n in table.notes]
        if extra:
            lines += [""] + extra
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise DomainError(f"format must be text, csv or markdown, got {format!r}")
