"""Exhaustive feature-subset classification sweep.

Every nonempty subset of the 14 features is crossed with the recruitment
fields, roles, three coverage tiers (A, AB, ABC), and five classifier
configurations (a decision tree plus linear SVMs at C in {1.0, 0.5, 0.1,
0.02}).  With the full 14-feature mask space that is 16,383 x 2 x 2 x 3 x 5
= 982,980 tasks.  Training rows come from terms 1-4, test rows from term 5.

Tasks are independent and reproducible: each derives its own seed from the
global seed and its identity, the minority class is rebalanced by random
duplication, features are standardized for the SVM only, and results are
sorted canonically, so any worker count yields identical output files.  An
optional journal file makes interrupted sweeps resumable: one JSON line per
completed task, written atomically, with a torn trailing line ignored on
reload.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .graphs import FEATURE_ORDER, N_FEATURES
from .svm import train_svm
from .tree import train_decision_tree

logger = logging.getLogger(__name__)

PASSED = "passed"
FAILED = "failed"

COVERAGE_TIERS = ("A", "AB", "ABC")
_TIER_SECTIONS = {"A": {"A"}, "AB": {"A", "B"}, "ABC": {"A", "B", "C"}}

TRAIN_TERMS = (1, 2, 3, 4)
TEST_TERM = 5


@dataclass(frozen=True)
class FeatureMask:
    """Nonempty subset of the first ``n`` features, as a bit pattern where
    bit i selects FEATURE_ORDER[i]."""

    bits: int
    n: int = N_FEATURES

    def __post_init__(self) -> None:
        if self.bits <= 0:
            raise ValueError("empty feature mask")
        if self.bits >= (1 << self.n):
            raise ValueError(f"mask {self.bits:#x} exceeds {self.n} features")

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.bits >> i & 1)

    def bitstring(self, width: int = N_FEATURES) -> str:
        return "".join("1" if self.bits >> i & 1 else "0" for i in range(width))

    @classmethod
    def from_bitstring(cls, s: str) -> "FeatureMask":
        bits = sum(1 << i for i, ch in enumerate(s) if ch == "1")
        return cls(bits=bits, n=len(s))


def enumerate_masks(n: int) -> list[FeatureMask]:
    """All 2^n - 1 nonempty subsets in ascending bit-pattern order."""
    if not 1 <= n <= 30:
        raise ValueError("feature count out of range")
    return [FeatureMask(bits, n) for bits in range(1, 1 << n)]


@dataclass(frozen=True)
class ClassifierConfig:
    algorithm: str  # "decision_tree" | "svm"
    c: float | None = None

    def __post_init__(self) -> None:
        if self.algorithm == "svm":
            if self.c is None:
                raise ValueError("svm config needs a C value")
        elif self.algorithm == "decision_tree":
            if self.c is not None:
                raise ValueError("decision_tree config takes no C")
        else:
            raise ValueError(f"unknown algorithm: {self.algorithm}")

    def label(self) -> str:
        return self.algorithm if self.c is None else f"{self.algorithm}(C={self.c})"


DEFAULT_CONFIGS: tuple[ClassifierConfig, ...] = (
    ClassifierConfig("decision_tree"),
    ClassifierConfig("svm", 1.0),
    ClassifierConfig("svm", 0.5),
    ClassifierConfig("svm", 0.1),
    ClassifierConfig("svm", 0.02),
)


@dataclass(frozen=True)
class SweepTask:
    field: str
    role: str
    coverage: str
    mask: FeatureMask
    config: ClassifierConfig

    def key(self) -> str:
        c = "" if self.config.c is None else repr(self.config.c)
        return "|".join(
            [self.field, self.role, self.coverage, self.mask.bitstring(self.mask.n),
             self.config.algorithm, c]
        )


@dataclass(frozen=True)
class SweepGrid:
    fields: tuple[str, ...]
    roles: tuple[str, ...]
    coverages: tuple[str, ...] = COVERAGE_TIERS
    mask_bits: tuple[int, ...] = ()
    n_features: int = N_FEATURES
    configs: tuple[ClassifierConfig, ...] = DEFAULT_CONFIGS

    @classmethod
    def full(
        cls,
        fields: Sequence[str] = ("10/G1", "13/D4"),
        roles: Sequence[str] = ("FP", "AP"),
        n_features: int = N_FEATURES,
    ) -> "SweepGrid":
        return cls(
            fields=tuple(fields),
            roles=tuple(roles),
            mask_bits=tuple(range(1, 1 << n_features)),
            n_features=n_features,
        )

    def task_count(self) -> int:
        return (
            len(self.mask_bits)
            * len(self.fields)
            * len(self.roles)
            * len(self.coverages)
            * len(self.configs)
        )

    def iter_tasks(self) -> Iterator[SweepTask]:
        for field_code in self.fields:
            for role in self.roles:
                for coverage in self.coverages:
                    for bits in self.mask_bits:
                        mask = FeatureMask(bits, self.n_features)
                        for config in self.configs:
                            yield SweepTask(field_code, role, coverage, mask, config)


@dataclass(frozen=True)
class MetricsRow:
    """One labeled application row loaded from metrics.csv."""

    app_id: str
    field: str
    role: str
    term: int
    outcome: str
    coverage_section: str
    features: tuple[float, ...]


def load_metrics_csv(path: str | Path) -> list[MetricsRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for raw in reader:
            rows.append(
                MetricsRow(
                    app_id=raw["app_id"],
                    field=raw["field"],
                    role=raw["role"],
                    term=int(raw["term"]),
                    outcome=raw["outcome"],
                    coverage_section=raw["coverage_section"],
                    features=tuple(float(raw[name]) for name in FEATURE_ORDER),
                )
            )
    return rows


@dataclass
class SkippedCell:
    field: str
    role: str
    coverage: str
    reason: str


def split_by_term(
    rows: Sequence[MetricsRow],
) -> tuple[dict[tuple[str, str], tuple[list[MetricsRow], list[MetricsRow]]], list[SkippedCell]]:
    """Train on terms 1-4, test on term 5, partitioned by (field, role).

    Cells empty on either side are returned separately, with a warning.
    """
    cells: dict[tuple[str, str], tuple[list[MetricsRow], list[MetricsRow]]] = {}
    for row in rows:
        train, test = cells.setdefault((row.field, row.role), ([], []))
        if row.term in TRAIN_TERMS:
            train.append(row)
        elif row.term == TEST_TERM:
            test.append(row)
    skipped = []
    for (field_code, role), (train, test) in sorted(cells.items()):
        if not train or not test:
            side = "train" if not train else "test"
            reason = f"empty {side} split"
            logger.warning("skipping cell (%s, %s): %s", field_code, role, reason)
            skipped.append(SkippedCell(field_code, role, "*", reason))
    usable = {key: value for key, value in cells.items() if value[0] and value[1]}
    return usable, skipped


def oversample(X: np.ndarray, y: Sequence[str], seed: int) -> tuple[np.ndarray, list[str]]:
    """Balance classes by duplicating uniformly drawn minority rows.

    The output is the original rows in order followed by the synthetic
    copies; each synthetic row is bit-identical to some minority row.
    Deterministic for a fixed seed.
    """
    y = list(y)
    X = np.asarray(X, dtype=float)
    counts = {PASSED: y.count(PASSED), FAILED: y.count(FAILED)}
    if counts[PASSED] == 0 or counts[FAILED] == 0:
        raise ValueError("both classes must be nonempty")
    if counts[PASSED] == counts[FAILED]:
        return X.copy(), y
    minority = PASSED if counts[PASSED] < counts[FAILED] else FAILED
    deficit = abs(counts[PASSED] - counts[FAILED])
    minority_idx = np.asarray([i for i, label in enumerate(y) if label == minority])
    rng = np.random.default_rng(seed)
    draws = minority_idx[rng.integers(0, len(minority_idx), size=deficit)]
    X_out = np.vstack([X, X[draws]])
    y_out = y + [minority] * deficit
    return X_out, y_out


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        scaled = np.zeros_like(X)
        nonzero = self.std > 0
        scaled[:, nonzero] = (X[:, nonzero] - self.mean[nonzero]) / self.std[nonzero]
        return scaled


def standardize(
    train: np.ndarray, test: np.ndarray
) -> tuple[np.ndarray, np.ndarray, Scaler]:
    """Shift/scale by training mean and population standard deviation;
    zero-variance columns map to zero.  Test rows reuse training statistics."""
    train = np.asarray(train, dtype=float)
    scaler = Scaler(mean=train.mean(axis=0), std=train.std(axis=0))
    return scaler.transform(train), scaler.transform(test), scaler


@dataclass(frozen=True)
class EvalScores:
    p_passed: float
    r_passed: float
    f1_passed: float
    p_failed: float
    r_failed: float
    f1_failed: float
    weighted_f1: float


def evaluate(y_true: Sequence[str], y_pred: Sequence[str]) -> EvalScores:
    """Per-class precision/recall/F1 with the 0/0 -> 0 convention, plus the
    support-weighted mean of the two F1 values."""
    if len(y_true) != len(y_pred):
        raise ValueError("length mismatch")
    if not y_true:
        raise ValueError("empty test set")

    def rates(cls: str) -> tuple[float, float, float, int]:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p == cls)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != cls and p == cls)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p != cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return precision, recall, f1, tp + fn

    p_p, r_p, f1_p, sup_p = rates(PASSED)
    p_f, r_f, f1_f, sup_f = rates(FAILED)
    weighted = (sup_p * f1_p + sup_f * f1_f) / (sup_p + sup_f)
    return EvalScores(p_p, r_p, f1_p, p_f, r_f, f1_f, weighted)


@dataclass(frozen=True)
class SweepResult:
    task: SweepTask
    train_size: int
    test_size: int
    scores: EvalScores

    def sort_key(self):
        return (
            self.task.field,
            self.task.role,
            self.task.coverage,
            self.task.mask.bitstring(self.task.mask.n),
            self.task.config.algorithm,
            -1.0 if self.task.config.c is None else self.task.config.c,
        )


def task_seed(global_seed: int, task: SweepTask) -> int:
    digest = hashlib.sha256(f"{global_seed}|{task.key()}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _execute_task(
    Xtr: np.ndarray,
    ytr: list[str],
    Xte: np.ndarray,
    yte: list[str],
    task: SweepTask,
    global_seed: int,
) -> SweepResult:
    seed = task_seed(global_seed, task)
    X_balanced, y_balanced = oversample(Xtr, ytr, seed)
    cols = list(task.mask.indices())
    X_train = X_balanced[:, cols]
    X_test = Xte[:, cols]
    if task.config.algorithm == "svm":
        X_train, X_test, _ = standardize(X_train, X_test)
        model = train_svm(X_train, y_balanced, task.config.c)
        predictions = model.predict(X_test)
    else:
        model = train_decision_tree(X_train, y_balanced)
        predictions = model.predict(X_test)
    scores = evaluate(yte, predictions)
    return SweepResult(task=task, train_size=len(ytr), test_size=len(yte), scores=scores)


# picklable worker for process pools: payload carries one cell's arrays
def _run_chunk(payload: dict) -> list[dict]:
    Xtr = np.asarray(payload["Xtr"])
    ytr = list(payload["ytr"])
    Xte = np.asarray(payload["Xte"])
    yte = list(payload["yte"])
    seed = payload["seed"]
    out = []
    for field_code, role, coverage, bits, n, algorithm, c in payload["tasks"]:
        task = SweepTask(
            field=field_code,
            role=role,
            coverage=coverage,
            mask=FeatureMask(bits, n),
            config=ClassifierConfig(algorithm, c),
        )
        out.append(result_to_json(_execute_task(Xtr, ytr, Xte, yte, task, seed)))
    return out


def result_to_json(result: SweepResult) -> dict:
    scores = result.scores
    return {
        "field": result.task.field,
        "role": result.task.role,
        "coverage": result.task.coverage,
        "mask": result.task.mask.bitstring(result.task.mask.n),
        "algorithm": result.task.config.algorithm,
        "c": result.task.config.c,
        "train_size": result.train_size,
        "test_size": result.test_size,
        "p_passed": scores.p_passed,
        "r_passed": scores.r_passed,
        "f1_passed": scores.f1_passed,
        "p_failed": scores.p_failed,
        "r_failed": scores.r_failed,
        "f1_failed": scores.f1_failed,
        "weighted_f1": scores.weighted_f1,
    }


def result_from_json(obj: dict) -> SweepResult:
    task = SweepTask(
        field=obj["field"],
        role=obj["role"],
        coverage=obj["coverage"],
        mask=FeatureMask.from_bitstring(obj["mask"]),
        config=ClassifierConfig(obj["algorithm"], obj["c"]),
    )
    scores = EvalScores(
        obj["p_passed"], obj["r_passed"], obj["f1_passed"],
        obj["p_failed"], obj["r_failed"], obj["f1_failed"], obj["weighted_f1"],
    )
    return SweepResult(task=task, train_size=obj["train_size"], test_size=obj["test_size"], scores=scores)


class SweepJournal:
    """Append-only JSONL of completed tasks; a torn final line is dropped."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def load_completed(self) -> dict[str, SweepResult]:
        out: dict[str, SweepResult] = {}
        if not self.path.exists():
            return out
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                try:
                    obj = json.loads(line)
                    result = result_from_json(obj)
                except (json.JSONDecodeError, KeyError):
                    continue  # interrupted write
                out[result.task.key()] = result
        return out

    def append(self, results: Iterable[SweepResult]) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            for result in results:
                fh.write(json.dumps(result_to_json(result), sort_keys=True))
                fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())


@dataclass
class SweepOutcome:
    results: list[SweepResult]
    skipped: list[SkippedCell]


def run_sweep(
    rows: Sequence[MetricsRow],
    grid: SweepGrid,
    seed: int,
    f1_threshold: float = 0.700,
    jobs: int = 1,
    journal: SweepJournal | None = None,
) -> SweepOutcome:
    """Execute every grid task over the labeled rows.

    Rows are filtered per coverage tier, split by term, oversampled, and
    standardized (SVM only); each task derives its own seed from the global
    one.  Results come back canonically sorted and are identical for any
    ``jobs`` value.  Cells with an empty train or test side are reported in
    ``skipped``, never silently dropped.
    """
    cells, skipped = split_by_term(rows)
    completed = journal.load_completed() if journal else {}

    cell_payloads: dict[tuple[str, str, str], dict] = {}
    pending: dict[tuple[str, str, str], list[SweepTask]] = {}
    results: list[SweepResult] = list(completed.values())
    done_keys = set(completed)

    for field_code in grid.fields:
        for role in grid.roles:
            cell = cells.get((field_code, role))
            for coverage in grid.coverages:
                key3 = (field_code, role, coverage)
                if cell is None:
                    if any(r.field == field_code and r.role == role for r in rows):
                        continue  # already reported by split_by_term
                    skipped.append(SkippedCell(field_code, role, coverage, "no rows"))
                    continue
                sections = _TIER_SECTIONS[coverage]
                train = [r for r in cell[0] if r.coverage_section in sections]
                test = [r for r in cell[1] if r.coverage_section in sections]
                if not train or not test:
                    side = "train" if not train else "test"
                    skipped.append(
                        SkippedCell(field_code, role, coverage, f"empty {side} after coverage filter")
                    )
                    continue
                train_labels = [r.outcome for r in train]
                if len(set(train_labels)) < 2:
                    skipped.append(
                        SkippedCell(field_code, role, coverage, "single-class training split")
                    )
                    continue
                cell_payloads[key3] = {
                    "Xtr": np.asarray([r.features for r in train], dtype=float),
                    "ytr": train_labels,
                    "Xte": np.asarray([r.features for r in test], dtype=float),
                    "yte": [r.outcome for r in test],
                    "seed": seed,
                }
                tasks = [
                    SweepTask(field_code, role, coverage, FeatureMask(bits, grid.n_features), config)
                    for bits in grid.mask_bits
                    for config in grid.configs
                ]
                pending[key3] = [t for t in tasks if t.key() not in done_keys]

    if jobs <= 1:
        for key3, tasks in pending.items():
            payload = cell_payloads[key3]
            fresh = [
                _execute_task(payload["Xtr"], payload["ytr"], payload["Xte"], payload["yte"], t, seed)
                for t in tasks
            ]
            if journal:
                journal.append(fresh)
            results.extend(fresh)
    else:
        chunks = []
        for key3, tasks in pending.items():
            payload = cell_payloads[key3]
            step = max(1, len(tasks) // (jobs * 4) or 1)
            for start in range(0, len(tasks), step):
                part = tasks[start : start + step]
                chunks.append(
                    {
                        **payload,
                        "tasks": [
                            (t.field, t.role, t.coverage, t.mask.bits, t.mask.n,
                             t.config.algorithm, t.config.c)
                            for t in part
                        ],
                    }
                )
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for chunk_result in pool.map(_run_chunk, chunks):
                fresh = [result_from_json(obj) for obj in chunk_result]
                if journal:
                    journal.append(fresh)
                results.extend(fresh)

    results.sort(key=SweepResult.sort_key)
    good = sum(1 for r in results if r.scores.weighted_f1 >= f1_threshold)
    logger.info("sweep finished: %d results, %d at weighted F1 >= %.3f, %d skipped cells",
                len(results), good, f1_threshold, len(skipped))
    return SweepOutcome(results=results, skipped=skipped)


@dataclass
class UsageRow:
    field: str
    role: str
    good_count: int
    counts: tuple[int, ...]
    percentages: tuple[float, ...]
    flags: tuple[str, ...]


def feature_usage(
    results: Sequence[SweepResult],
    f1_threshold: float = 0.700,
    n_features: int = N_FEATURES,
) -> list[UsageRow]:
    """Per (field, role): how often each feature appears among the good
    classifiers (weighted F1 at or above the threshold, unrounded).

    Flags: ``significant`` above 50% use, ``irrelevant`` below 35%,
    ``neutral`` between.
    """
    if not results:
        raise ValueError("no results to rank")
    cells: dict[tuple[str, str], list[SweepResult]] = {}
    for result in results:
        cells.setdefault((result.task.field, result.task.role), []).append(result)
    out = []
    for (field_code, role), cell_results in sorted(cells.items()):
        good = [r for r in cell_results if r.scores.weighted_f1 >= f1_threshold]
        counts = [0] * n_features
        for result in good:
            for idx in result.task.mask.indices():
                counts[idx] += 1
        if good:
            percentages = [100.0 * count / len(good) for count in counts]
        else:
            percentages = [0.0] * n_features
        flags = tuple(
            "significant" if pct > 50.0 else "irrelevant" if pct < 35.0 else "neutral"
            for pct in percentages
        )
        out.append(
            UsageRow(
                field=field_code,
                role=role,
                good_count=len(good),
                counts=tuple(counts),
                percentages=tuple(percentages),
                flags=flags,
            )
        )
    return out


SWEEP_CSV_HEADER = [
    "field", "role", "coverage", "algorithm", "c", "mask",
    "train_size", "test_size",
    "p_passed", "r_passed", "f1_passed",
    "p_failed", "r_failed", "f1_failed",
    "weighted_f1",
]


def write_sweep_csv(results: Sequence[SweepResult], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_CSV_HEADER)
        for result in sorted(results, key=SweepResult.sort_key):
            scores = result.scores
            writer.writerow(
                [
                    result.task.field,
                    result.task.role,
                    result.task.coverage,
                    result.task.config.algorithm,
                    "" if result.task.config.c is None else repr(result.task.config.c),
                    result.task.mask.bitstring(result.task.mask.n),
                    result.train_size,
                    result.test_size,
                    f"{scores.p_passed:.6f}",
                    f"{scores.r_passed:.6f}",
                    f"{scores.f1_passed:.6f}",
                    f"{scores.p_failed:.6f}",
                    f"{scores.r_failed:.6f}",
                    f"{scores.f1_failed:.6f}",
                    f"{scores.weighted_f1:.6f}",
                ]
            )


def load_sweep_csv(path: str | Path) -> list[SweepResult]:
    results = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            results.append(
                SweepResult(
                    task=SweepTask(
                        field=row["field"],
                        role=row["role"],
                        coverage=row["coverage"],
                        mask=FeatureMask.from_bitstring(row["mask"]),
                        config=ClassifierConfig(
                            row["algorithm"], float(row["c"]) if row["c"] else None
                        ),
                    ),
                    train_size=int(row["train_size"]),
                    test_size=int(row["test_size"]),
                    scores=EvalScores(
                        p_passed=float(row["p_passed"]),
                        r_passed=float(row["r_passed"]),
                        f1_passed=float(row["f1_passed"]),
                        p_failed=float(row["p_failed"]),
                        r_failed=float(row["r_failed"]),
                        f1_failed=float(row["f1_failed"]),
                        weighted_f1=float(row["weighted_f1"]),
                    ),
                )
            )
    return results


def usage_csv_header(n_features: int = N_FEATURES) -> list[str]:
    names = FEATURE_ORDER[:n_features]
    header = ["field", "role", "good_count"]
    for name in names:
        header += [f"{name}_count", f"{name}_pct", f"{name}_flag"]
    return header


def write_usage_csv(rows: Sequence[UsageRow], path: str | Path, n_features: int = N_FEATURES) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(usage_csv_header(n_features))
        for row in rows:
            record = [row.field, row.role, row.good_count]
            for count, pct, flag in zip(row.counts, row.percentages, row.flags):
                record += [count, f"{pct:.2f}", flag]
            writer.writerow(record)
