"""Accuracy, unweighted (macro) F1, stratified Monte Carlo splits and the
exact one-sided Wilcoxon signed-rank test."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import kernels

EXACT_ENUMERATION_MAX_N = 20


def _class_indices(pred, truth, mask):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    # argmax returns the first maximum, so ties go to the lowest class index
    p = np.argmax(pred, axis=-1)
    t = np.argmax(truth, axis=-1) if truth.ndim == pred.ndim else truth.astype(np.int64)
    if mask is None:
        mask = np.ones(p.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != p.shape or t.shape != p.shape:
        raise ValueError(f"shape mismatch: predictions {p.shape}, truth {t.shape}, mask {mask.shape}")
    if not mask.any():
        raise ValueError("empty mask: no samples to score")
    return p[mask], t[mask]


def accuracy(pred, truth, mask=None) -> float:
    """Fraction of masked samples whose argmax matches the true class.

    ``pred`` is (..., k) probabilities; ``truth`` is either one-hot (..., k)
    or integer classes (...).
    """
    p, t = _class_indices(pred, truth, mask)
    return float(np.mean(p == t))


def confusion_matrix(pred_labels, true_labels, k: int) -> np.ndarray:
    """(k, k) counts with rows = true class, columns = predicted class."""
    idx = np.asarray(true_labels, dtype=np.int64) * k + np.asarray(pred_labels, dtype=np.int64)
    return np.bincount(idx, minlength=k * k).reshape(k, k)


def unweighted_f1(pred, truth, mask=None, k: int | None = None) -> float:
    """Mean of per-class F1 over all k classes.

    A class with precision + recall = 0 (including one absent from both
    truth and predictions) contributes 0 and still counts in the divisor.
    """
    if k is None:
        k = np.asarray(pred).shape[-1]
    p, t = _class_indices(pred, truth, mask)
    cm = confusion_matrix(p, t, k)
    tp = np.diag(cm)
    # 2PR / (P + R) written over integer counts: one rounding per class
    denom = cm.sum(axis=0) + cm.sum(axis=1)
    f1 = np.divide(2.0 * tp, denom, out=np.zeros(k), where=denom > 0)
    return float(f1.mean())


# -- Monte Carlo cross-validation --------------------------------------------

@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class SplitPlan:
    """Per-iteration train/validation/test index sets over a sample pool."""

    pool: np.ndarray
    splits: tuple[Split, ...]
    seed: int

    def __len__(self) -> int:
        return len(self.splits)

    def __getitem__(self, i: int) -> Split:
        return self.splits[i]

    def to_dict(self) -> dict:
        return {"seed": self.seed, "pool": self.pool.tolist(),
                "splits": [{"train": s.train.tolist(), "val": s.val.tolist(), "test": s.test.tolist()}
                           for s in self.splits]}


def stratified_counts(counts, frac: float) -> np.ndarray:
    """Split ``round(frac * sum(counts))`` across classes by largest remainder.

    Each class receives floor or ceil of its exact share, so per-class
    proportions hold within one sample.
    """
    counts = np.asarray(counts, dtype=np.int64)
    exact = frac * counts
    base = np.floor(exact).astype(np.int64)
    target = int(np.floor(frac * counts.sum() + 0.5))
    extra = target - int(base.sum())
    order = np.argsort(-(exact - base), kind="stable")
    base[order[:extra]] += 1
    return base


def monte_carlo_splits(labels, iterations: int, test_frac: float, val_frac: float,
                       seed: int = 0, pool=None) -> SplitPlan:
    """Stratified repeated random train/validation/test partitions.

    ``labels`` holds one integer class per sample in ``pool`` (default: all
    samples ``0..len(labels)-1``).  Each iteration draws a fresh partition:
    ``test_frac`` of every class goes to test, then ``val_frac`` of the
    remainder to validation.
    """
    labels = np.asarray(labels, dtype=np.int64)
    pool = np.arange(len(labels)) if pool is None else np.asarray(pool, dtype=np.int64)
    if len(pool) != len(labels):
        raise ValueError("pool and labels differ in length")
    if not 0.0 < test_frac < 1.0 or not 0.0 <= val_frac < 1.0:
        raise ValueError(f"fractions out of range: test={test_frac}, val={val_frac}")
    if iterations < 1:
        raise ValueError("need at least one iteration")
    classes, counts = np.unique(labels, return_counts=True)
    n_test = stratified_counts(counts, test_frac)
    n_val = stratified_counts(counts - n_test, val_frac)
    for c, n, nt, nv in zip(classes, counts, n_test, n_val):
        if n < 2 or n - nt - nv < 1:
            raise ValueError(f"class {c} has {n} samples, too few to stratify "
                             f"(test {nt}, validation {nv})")
    rng = np.random.default_rng(seed)
    members = [pool[labels == c] for c in classes]
    splits = []
    for _ in range(iterations):
        tr, va, te = [], [], []
        for idx, nt, nv in zip(members, n_test, n_val):
            perm = rng.permutation(idx)
            te.append(perm[:nt])
            va.append(perm[nt:nt + nv])
            tr.append(perm[nt + nv:])
        splits.append(Split(np.sort(np.concatenate(tr)), np.sort(np.concatenate(va)),
                            np.sort(np.concatenate(te))))
    return SplitPlan(pool=np.sort(pool), splits=tuple(splits), seed=seed)


# -- Wilcoxon signed-rank ----------------------------------------------------

@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # sum of ranks of positive differences
    pvalue: float
    n: int  # non-zero differences used


def _upper_tail_count(ranks2: np.ndarray, threshold2: int) -> int:
    if len(ranks2) <= EXACT_ENUMERATION_MAX_N:
        return kernels.signed_rank_upper_count(ranks2, threshold2)
    # larger n: same null distribution by convolution over doubled ranks
    dist = np.zeros(1, dtype=object)
    dist[0] = 1
    for r in ranks2:
        new = np.zeros(len(dist) + r, dtype=object)
        new[: len(dist)] += dist
        new[r:] += dist
        dist = new
    return int(dist[threshold2:].sum()) if threshold2 < len(dist) else 0


def wilcoxon_signed_rank(scores_a, scores_b) -> WilcoxonResult:
    """One-sided exact Wilcoxon signed-rank test of ``a > b``.

    Zero differences are dropped and tied |differences| share their average
    rank.  The p-value is the share of the 2**n equally likely sign
    assignments whose positive-rank sum reaches the observed one.
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired scores must be 1-D of equal length, got {a.shape} and {b.shape}")
    if len(a) < 5:
        raise ValueError(f"need at least 5 paired scores, got {len(a)}")
    d = a - b
    d = d[d != 0]
    if d.size == 0:
        raise ValueError("no information: all differences are zero")
    # round so that differences equal up to float noise tie
    ranks = rankdata(np.round(np.abs(d), 12))
    ranks2 = np.rint(2 * ranks).astype(np.int64)
    observed2 = int(ranks2[d > 0].sum())
    count = _upper_tail_count(ranks2, observed2)
    return WilcoxonResult(statistic=observed2 / 2.0, pvalue=count / 2.0 ** d.size, n=int(d.size))
