"""Accuracy, AUC-ROC, concept-leakage scores (OIS/NIS) and intervention metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .datagen import rng_for
from .errors import ConfigError, ContractError, DimensionError, UndefinedMetricError
from .model import forward, intervene


class UndefinedMetricWarning(UserWarning):
    pass


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise DimensionError("pred and truth differ in shape")
    return float(np.mean(pred == truth)) if pred.size else float("nan")


def concept_accuracy(c_prob, c_true, threshold: float = 0.5) -> float:
    c_prob, c_true = np.asarray(c_prob), np.asarray(c_true)
    if c_prob.shape != c_true.shape:
        raise DimensionError("c_prob and c_true differ in shape")
    return float(np.mean((c_prob > threshold) == (c_true > 0.5))) if c_prob.size else float("nan")


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC: (wins + 0.5 ties) / (P * N), exact for tied scores."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise DimensionError("scores and labels differ in length")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    _, inv = np.unique(s, return_inverse=True)
    pos_at = np.bincount(inv, weights=pos.astype(np.int64)).astype(np.int64)
    neg_at = np.bincount(inv, weights=(~pos).astype(np.int64)).astype(np.int64)
    neg_below = np.cumsum(neg_at) - neg_at
    wins = int((pos_at * neg_below).sum())
    ties = int((pos_at * neg_at).sum())
    return (wins + 0.5 * ties) / (n_pos * n_neg)


def _safe_auc(scores, labels) -> tuple[float, bool]:
    try:
        return auc_roc(scores, labels), False
    except UndefinedMetricError:
        return 0.5, True


# ---------------------------------------------------------------------------
# purity / OIS


@dataclass
class PurityMatrix:
    entries: np.ndarray
    # target concept columns that were constant (entries forced to 0.5)
    flagged: list[int] = field(default_factory=list)


def purity_matrix(reps, c_true) -> PurityMatrix:
    """pi[i, j]: orientation-corrected AUC of representation i for concept j."""
    reps = np.asarray(reps, dtype=np.float64)
    c_true = np.asarray(c_true)
    if reps.ndim != 2 or c_true.ndim != 2 or reps.shape[0] != c_true.shape[0]:
        raise DimensionError("reps [N×d] and c_true [N×k] must share N")
    d, k = reps.shape[1], c_true.shape[1]
    pi = np.full((d, k), 0.5)
    flagged = []
    for j in range(k):
        col = c_true[:, j]
        if col.min() == col.max():
            flagged.append(j)
            continue
        for i in range(d):
            a = auc_roc(reps[:, i], col)
            pi[i, j] = max(a, 1.0 - a)
    return PurityMatrix(pi, flagged)


def ois(c_pred_reps, c_true) -> float:
    """2 * ||pi(reps, c) - pi(c, c)||_F / k, in [0, 1]."""
    c_true = np.asarray(c_true)
    k = c_true.shape[1]
    if k < 2:
        raise ConfigError("OIS needs at least two concepts")
    pred = purity_matrix(c_pred_reps, c_true)
    oracle = purity_matrix(c_true, c_true)
    if pred.flagged:
        warnings.warn(f"constant concept columns {pred.flagged}; purity entries set to 0.5",
                      UndefinedMetricWarning, stacklevel=2)
    return float(2.0 * np.linalg.norm(pred.entries - oracle.entries) / k)


# ---------------------------------------------------------------------------
# NIS


def fit_logistic_probe(X, y, epochs: int = 200, lr: float = 0.05):
    """Full-batch gradient descent on standardized features; returns a scoring function."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Xs = (X - mean) / std
    w = np.zeros(X.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(epochs):
        p = 1.0 / (1.0 + np.exp(-(Xs @ w + b)))
        r = p - y
        w -= lr * (Xs.T @ r) / n
        b -= lr * r.mean()

    def score(Xn):
        return ((np.asarray(Xn, dtype=np.float64) - mean) / std) @ w + b

    return score


def fit_softmax_probe(X, y, n_classes: int, epochs: int = 500, lr: float = 0.5):
    """Multinomial logistic regression by full-batch gradient descent; returns a predict function."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Xs = (X - mean) / std
    W = np.zeros((X.shape[1], n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y]
    n = len(y)
    for _ in range(epochs):
        logits = Xs @ W + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        r = (p - onehot) / n
        W -= lr * Xs.T @ r
        b -= lr * r.sum(axis=0)

    def predict(Xn):
        return (((np.asarray(Xn, dtype=np.float64) - mean) / std) @ W + b).argmax(axis=1)

    return predict


def probe_accuracy(X_train, y_train, X_test, y_test, n_classes: int, epochs: int = 500, lr: float = 0.5) -> float:
    """Held-out accuracy of a linear softmax probe."""
    predict = fit_softmax_probe(X_train, y_train, n_classes, epochs, lr)
    return accuracy(predict(X_test), y_test)


def nis(c_pred_reps, c_true, beta_grid=None, seed: int = 0, probe_epochs: int = 200,
        probe_lr: float = 0.05, holdout: float = 0.3) -> float:
    """Niche impurity score, integrated over beta with the trapezoid rule.

    For concept i and threshold beta the niche is every j whose ground-truth
    purity pi(c, c)[j, i] >= beta; a logistic probe sees only the
    representations outside the niche and its held-out AUC for concept i is
    NI_i(beta). An empty outside set contributes 0.5.
    """
    reps = np.asarray(c_pred_reps, dtype=np.float64)
    c_true = np.asarray(c_true)
    grid = np.linspace(0.0, 1.0, 21) if beta_grid is None else np.asarray(beta_grid, dtype=np.float64)
    if grid.size == 0:
        raise ConfigError("beta grid is empty", key="beta_grid")
    if np.any(np.diff(grid) < 0) or grid.min() < 0 or grid.max() > 1:
        raise ConfigError("beta grid must be ascending within [0, 1]", key="beta_grid")
    n, k = c_true.shape
    if reps.shape != (n, k):
        raise DimensionError("reps must have one column per concept")
    oracle = purity_matrix(c_true, c_true).entries

    perm = rng_for(seed, "nis").permutation(n)
    n_test = max(1, int(round(holdout * n)))
    test, train = perm[:n_test], perm[n_test:]
    cache: dict[tuple[int, tuple[int, ...]], float] = {}
    flagged = False
    curve = []
    for beta in grid:
        total = 0.0
        for i in range(k):
            outside = tuple(j for j in range(k) if oracle[j, i] < beta)
            if not outside:
                total += 0.5
                continue
            key = (i, outside)
            if key not in cache:
                ytr = c_true[train, i]
                if ytr.min() == ytr.max():
                    cache[key], bad = 0.5, True
                else:
                    score = fit_logistic_probe(reps[np.ix_(train, outside)], ytr, probe_epochs, probe_lr)
                    cache[key], bad = _safe_auc(score(reps[np.ix_(test, outside)]), c_true[test, i])
                flagged |= bad
            total += cache[key]
        curve.append(total / k)
    if flagged:
        warnings.warn("some niche-impurity AUCs were undefined and set to 0.5",
                      UndefinedMetricWarning, stacklevel=2)
    if grid.size == 1:
        return float(curve[0])
    return float(np.trapezoid(curve, grid))


# ---------------------------------------------------------------------------
# interventions


@dataclass
class InterventionCurve:
    values: np.ndarray  # mean accuracy for 0..n intervened groups
    std: np.ndarray
    per_repeat: np.ndarray  # [repeats × (n+1)]
    seed: int = 0

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def repeats(self) -> int:
        return self.per_repeat.shape[0]


def intervention_curve(model, ds, repeats: int = 5, seed: int = 0) -> InterventionCurve:
    """Accuracy after intervening on g = 0..G random groups, averaged over repeats."""

    if model.intervention_percentiles is None:
        raise ContractError("model has no intervention percentiles; calibrate it first")
    if len(model.groups) != ds.n_groups:
        raise ContractError("model and dataset disagree on the concept groups")
    out = forward(model, ds.X)
    n_groups = len(model.groups)
    acc = np.zeros((repeats, n_groups + 1))
    for r in range(repeats):
        rng = rng_for(seed, f"intervention_repeat{r}")
        for g in range(n_groups + 1):
            chosen = rng.choice(n_groups, size=g, replace=False).tolist()
            edited = intervene(out, ds.C, chosen, model)
            acc[r, g] = accuracy(edited.y_logits.value.argmax(axis=1), ds.Y)
    return InterventionCurve(acc.mean(axis=0), acc.std(axis=0), acc, seed)


def _values(curve) -> np.ndarray:
    v = np.asarray(curve.values if isinstance(curve, InterventionCurve) else curve, dtype=np.float64)
    if v.ndim != 1 or len(v) < 2:
        raise ConfigError("an intervention curve needs at least two points (n >= 1)")
    return v


def auc_tti(curve) -> float:
    """(1/n) sum_{i=1..n} I(i)."""
    v = _values(curve)
    return float(v[1:].sum() / (len(v) - 1))


def nauc_tti(curve) -> float:
    """(1/n) sum_{i=1..n} (I(i) - I(i-1)); telescopes to (I(n) - I(0)) / n."""
    v = _values(curve)
    return float(np.diff(v).sum() / (len(v) - 1))


def average_ranks(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    ranks[order] = np.arange(1, len(x) + 1)
    uniq, inv = np.unique(x, return_inverse=True)
    sums = np.bincount(inv, weights=ranks)
    counts = np.bincount(inv)
    return (sums / counts)[inv]


def spearman(x, y) -> float:
    rx, ry = average_ranks(x), average_ranks(y)
    rx, ry = rx - rx.mean(), ry - ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    return float((rx * ry).sum() / denom) if denom > 0 else float("nan")


# ---------------------------------------------------------------------------
# reports


def metrics_report(values: dict[str, list[float]]) -> list[dict]:
    """One row per metric: mean over seeds, population std, and the seed count."""
    return [{"name": name, "value": float(np.mean(v)), "std": float(np.std(v)), "n_seeds": len(v)}
            for name, v in values.items()]


def write_metrics_report(values: dict[str, list[float]], csv_path, json_path=None) -> list[dict]:
    import csv
    import json

    rows = metrics_report(values)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "value", "std", "n_seeds"])
        for r in rows:
            w.writerow([r["name"], repr(r["value"]), repr(r["std"]), r["n_seeds"]])
    if json_path is not None:
        payload = {"metrics": rows, "per_seed": {k: [float(x) for x in v] for k, v in values.items()}}
        with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return rows
