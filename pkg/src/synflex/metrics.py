"""Measurement machinery: per-item memorization performance, the
label-shuffle memorized-item test, report assembly, rank correlations, and
repetition metrics.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from .errors import ConfigurationError, ShapeError


def item_accuracy(pred_readouts: np.ndarray, readout_index: int) -> float:
    """Fraction of predictions equal to the item's readout."""
    preds = np.asarray(pred_readouts)
    if preds.size == 0:
        raise ConfigurationError("empty test set")
    return float((preds == readout_index).mean())


def _shuffled_accuracies(preds: np.ndarray, labels: np.ndarray, per_item: np.ndarray,
                         n_items: int, n_shuffles: int, rng) -> np.ndarray:
    """Null accuracies per (shuffle, item): labels of the pooled test set are
    permuted and per-item accuracy recomputed against the permuted labels."""
    out = np.empty((n_shuffles, n_items))
    for s in range(n_shuffles):
        permuted = labels[rng.permutation(labels.shape[0])]
        hits = np.bincount(permuted[preds == permuted], minlength=n_items)
        out[s] = hits / per_item
    return out


def memorized_flags(preds_by_item: list[np.ndarray], n_shuffles: int = 1000,
                    criterion: int = 950, seed: int = 0):
    """Memorized flag per item: original accuracy strictly exceeds the
    shuffled-label accuracy in at least `criterion` of `n_shuffles`
    permutations of the pooled test labels. Returns (flags, accuracies)."""
    if n_shuffles < 1 or not (0 < criterion <= n_shuffles):
        raise ConfigurationError(
            f"need n_shuffles >= 1 and 0 < criterion <= n_shuffles, got {n_shuffles}, {criterion}")
    if any(len(p) == 0 for p in preds_by_item):
        raise ConfigurationError("empty test set for some item")
    n_items = len(preds_by_item)
    labels = np.concatenate([np.full(len(p), i, dtype=np.int64)
                             for i, p in enumerate(preds_by_item)])
    preds = np.concatenate([np.asarray(p, dtype=np.int64) for p in preds_by_item])
    per_item = np.array([len(p) for p in preds_by_item], dtype=np.float64)
    original = np.array([item_accuracy(p, i) for i, p in enumerate(preds_by_item)])
    rng = np.random.default_rng(seed)
    nulls = _shuffled_accuracies(preds, labels, per_item, n_items, n_shuffles, rng)
    wins = (original[None, :] > nulls).sum(axis=0)
    return wins >= criterion, original


def memorized_test(preds_by_item: list[np.ndarray], item_index: int,
                   n_shuffles: int = 1000, criterion: int = 950, seed: int = 0) -> bool:
    """Single-item view of memorized_flags (same pooled-shuffle null)."""
    flags, _ = memorized_flags(preds_by_item, n_shuffles=n_shuffles,
                               criterion=criterion, seed=seed)
    return bool(flags[item_index])


@dataclass
class MemoryReport:
    per_item_accuracy: list[float]
    memorized: list[bool]
    n_memorized: int
    mean_accuracy: float
    gross_memory: float
    chance_level: float

    def to_json(self) -> str:
        return json.dumps({
            "per_item_accuracy": self.per_item_accuracy,
            "memorized": self.memorized,
            "n_memorized": self.n_memorized,
            "mean_accuracy": self.mean_accuracy,
            "gross_memory": self.gross_memory,
            "chance_level": self.chance_level,
        }, indent=2, sort_keys=True)


def build_report(per_item_accuracy, memorized, n_readouts: int) -> MemoryReport:
    """Assemble the per-run memory report; gross memory is the plain sum of
    per-item accuracies."""
    acc = np.asarray(per_item_accuracy, dtype=np.float64)
    flags = np.asarray(memorized, dtype=bool)
    if acc.shape != flags.shape:
        raise ShapeError(f"accuracy and flags disagree: {acc.shape} vs {flags.shape}")
    return MemoryReport(
        per_item_accuracy=[float(a) for a in acc],
        memorized=[bool(m) for m in flags],
        n_memorized=int(flags.sum()),
        mean_accuracy=float(acc.mean()) if acc.size else math.nan,
        gross_memory=float(acc.sum()),
        chance_level=1.0 / n_readouts,
    )


# --- rank correlation ---------------------------------------------------------


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    ranks[order] = np.arange(1, len(values) + 1, dtype=np.float64)
    for v in np.unique(values):
        mask = values == v
        if mask.sum() > 1:
            ranks[mask] = ranks[mask].mean()
    return ranks


def _rank_pearson(rx: np.ndarray, ry: np.ndarray) -> float:
    cx = rx - rx.mean()
    cy = ry - ry.mean()
    denom = np.sqrt((cx ** 2).sum() * (cy ** 2).sum())
    return float((cx * cy).sum() / denom)


def spearman(x, y, exact_max_n: int = 8):
    """Spearman rho with midrank ties. Two-sided p: exact over all
    permutations when n <= exact_max_n, t-approximation otherwise.
    Constant input flags the result as undefined via (nan, nan)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"need equal-length vectors, got {x.shape} and {y.shape}")
    n = len(x)
    if n < 3:
        raise ConfigurationError(f"need at least 3 observations, got {n}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return math.nan, math.nan
    rx, ry = _midranks(x), _midranks(y)
    rho = _rank_pearson(rx, ry)
    if n <= exact_max_n:
        count, total = 0, 0
        for perm in itertools.permutations(range(n)):
            r = _rank_pearson(rx, ry[list(perm)])
            if abs(r) >= abs(rho) - 1e-12:
                count += 1
            total += 1
        return rho, count / total
    t = rho * math.sqrt((n - 2) / max(1.0 - rho * rho, 1e-300))
    p = 2.0 * float(sstats.t.sf(abs(t), df=n - 2))
    return rho, min(p, 1.0)


@dataclass
class CorrelationReport:
    rho_order: float
    rho_frequency: float
    p_order: float
    p_frequency: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def correlation_report(accuracies, order, frequencies) -> CorrelationReport:
    ro, po = spearman(accuracies, order)
    rf, pf = spearman(accuracies, frequencies)
    return CorrelationReport(rho_order=ro, rho_frequency=rf, p_order=po, p_frequency=pf)


# --- repetition metrics ---------------------------------------------------------


def repetition_metrics(rep_checkpoints: np.ndarray):
    """From per-repetition item accuracies (n_reps, n_items): the trace of the
    worst item per repetition, and the final max - min spread."""
    chk = np.asarray(rep_checkpoints, dtype=np.float64)
    if chk.ndim != 2 or chk.shape[0] < 1:
        raise ShapeError(f"need (n_reps, n_items) checkpoints, got {chk.shape}")
    min_trace = chk.min(axis=1)
    delta_performance = float(chk[-1].max() - chk[-1].min())
    return min_trace, delta_performance


# --- simple test statistics (aggregation plumbing) -------------------------------


def t_greater_than(values, reference: float):
    """One-sided one-sample t-test that mean(values) > reference."""
    res = sstats.ttest_1samp(np.asarray(values, dtype=np.float64), reference,
                             alternative="greater")
    return float(res.statistic), float(res.pvalue)


def t_two_sample(a, b, alternative: str = "two-sided"):
    """Two-sample t-test (pooled variance) between groups a and b."""
    res = sstats.ttest_ind(np.asarray(a, dtype=np.float64),
                           np.asarray(b, dtype=np.float64), alternative=alternative)
    return float(res.statistic), float(res.pvalue)
