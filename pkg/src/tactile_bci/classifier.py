"""Feature standardization and a from-scratch soft-margin linear SVM.

Training solves the L1-hinge dual by deterministic coordinate descent with
liblinear-style shrinking. The bias is carried as an augmented constant
feature (so the bias is regularized; documented). Per-instance costs are
C / (2 * n_class), which gives both classes equal total weight regardless
of the 1:3 class imbalance and makes the solution invariant under dataset
duplication.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SD_FLOOR = 1e-9


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    sd: np.ndarray


def fit_standardizer(features: np.ndarray) -> Standardizer:
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a 2-D feature matrix with at least 2 rows")
    mean = x.mean(axis=0)
    sd = x.std(axis=0)  # population convention
    sd = np.maximum(sd, SD_FLOOR)
    return Standardizer(mean, sd)


def standardize(stdzr: Standardizer, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    return (x - stdzr.mean) / stdzr.sd


@dataclass(frozen=True)
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    c: float
    decision_threshold: float = 0.0
    duality_gap: float = 0.0
    n_sweeps: int = 0


def _instance_costs(labels: np.ndarray, c: float) -> np.ndarray:
    n_pos = int(np.sum(labels > 0))
    n_neg = int(np.sum(labels < 0))
    costs = np.where(labels > 0, c / (2.0 * n_pos), c / (2.0 * n_neg))
    return costs


def train_linear_svm(features: np.ndarray, labels: np.ndarray, c: float = 1.0,
                     tol: float = 1e-8, max_sweeps: int = 100_000) -> LinearSvmModel:
    """Dual coordinate descent on the L1-hinge SVM with class-balanced costs.

    Deterministic: fixed cyclic sweep order over the active set, shrinking
    against the previous sweep's projected-gradient extremes, and a final
    full-set pass before accepting convergence.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("features must be n x d with one label per row")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both classes must be present")
    if c <= 0:
        raise ValueError("C must be positive")

    n = x.shape[0]
    xa = np.concatenate([x, np.ones((n, 1))], axis=1)  # augmented bias feature
    u = _instance_costs(y, c)
    q_diag = np.einsum("ij,ij->i", xa, xa)
    yx = xa * y[:, None]

    alpha = np.zeros(n)
    w = np.zeros(xa.shape[1])
    active = np.arange(n)
    pg_max_old = np.inf
    pg_min_old = -np.inf
    sweeps = 0

    while sweeps < max_sweeps:
        sweeps += 1
        pg_max = -np.inf
        pg_min = np.inf
        keep = []
        for i in active:
            g = yx[i] @ w - 1.0
            a = alpha[i]
            if a == 0.0:
                if g > pg_max_old:
                    continue  # shrink
                pg = min(g, 0.0)
            elif a == u[i]:
                if g < pg_min_old:
                    continue  # shrink
                pg = max(g, 0.0)
            else:
                pg = g
            keep.append(i)
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if pg != 0.0:
                new_a = min(max(a - g / q_diag[i], 0.0), u[i])
                if new_a != a:
                    alpha[i] = new_a
                    w += (new_a - a) * yx[i]
        active = np.asarray(keep, dtype=int)

        converged = max(pg_max, -pg_min, 0.0) <= tol if len(active) else True
        if converged:
            if len(active) == n:
                break
            active = np.arange(n)  # unshrink and confirm on the full set
            pg_max_old = np.inf
            pg_min_old = -np.inf
            continue
        pg_max_old = pg_max if pg_max > 0 else np.inf
        pg_min_old = pg_min if pg_min < 0 else -np.inf

    primal = 0.5 * w @ w + np.sum(u * np.maximum(0.0, 1.0 - yx @ w))
    dual = np.sum(alpha) - 0.5 * w @ w
    gap = primal - dual
    return LinearSvmModel(weights=w[:-1].copy(), bias=float(w[-1]), c=float(c),
                          duality_gap=float(gap), n_sweeps=sweeps)


def svm_objective(model: LinearSvmModel, features: np.ndarray, labels: np.ndarray) -> float:
    """Primal objective at the model's weights, for oracle comparisons."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    u = _instance_costs(y, model.c)
    w = np.concatenate([model.weights, [model.bias]])
    xa = np.concatenate([x, np.ones((len(x), 1))], axis=1)
    margins = y * (xa @ w)
    return float(0.5 * w @ w + np.sum(u * np.maximum(0.0, 1.0 - margins)))


def decision_score(model: LinearSvmModel, features: np.ndarray):
    """w . x + b for a single vector or each row of a matrix."""
    x = np.asarray(features, dtype=float)
    if x.shape[-1] != len(model.weights):
        raise ValueError(f"expected {len(model.weights)} features, got {x.shape[-1]}")
    return x @ model.weights + model.bias


def detect(model: LinearSvmModel, score: float) -> bool:
    return score > model.decision_threshold
