"""Comparison classifiers that consume tiling activity.

* online logistic regression, which can only learn from labeled samples;
* offline linear SVM with a graph-Laplacian penalty on the weights, where
  the graph is the channel Gramian of the tiling outputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit


# -- logistic regression ------------------------------------------------------

@dataclass
class LogRegState:
    w: np.ndarray
    b: float = 0.0
    lr: float = 0.1

    @classmethod
    def zeros(cls, m: int, lr: float = 0.1) -> "LogRegState":
        return cls(np.zeros(m), 0.0, lr)


def logistic_loss(w, b, h, z) -> float:
    """``log(1 + exp(-z (w.h + b)))`` for a label ``z`` in {-1, +1}."""
    return float(np.logaddexp(0.0, -z * (np.dot(w, h) + b)))


def logistic_grad(w, b, h, z) -> tuple[np.ndarray, float]:
    g = -z * expit(-z * (np.dot(w, h) + b))
    return g * np.asarray(h, dtype=float), float(g)


def logreg_step(state: LogRegState, h, z: int) -> tuple[float, LogRegState]:
    """Predict ``P(class=+1)``, then take one SGD step if the sample is labeled."""
    h = np.asarray(h, dtype=float)
    p = float(expit(state.w @ h + state.b))
    if z == 0:
        return p, state
    gw, gb = logistic_grad(state.w, state.b, h, z)
    return p, LogRegState(state.w - state.lr * gw, state.b - state.lr * gb, state.lr)


def logreg_margin(p: float) -> float:
    """Map a probability onto [-1, 1] so its sign is the predicted class."""
    return 2.0 * p - 1.0


# -- Laplacian graph ----------------------------------------------------------

@dataclass
class LaplacianGraph:
    S: np.ndarray
    L: np.ndarray

    @classmethod
    def from_adjacency(cls, S) -> "LaplacianGraph":
        S = np.asarray(S, dtype=float)
        return cls(S, np.diag(S.sum(axis=1)) - S)


def build_gramian(H) -> LaplacianGraph:
    """Adjacency ``S = H H^T / T`` (diagonal zeroed) and its Laplacian."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[1] < 1:
        raise ValueError(f"H must be an (m, T>=1) matrix, got shape {H.shape}")
    S = H @ H.T / H.shape[1]
    S = 0.5 * (S + S.T)
    np.fill_diagonal(S, 0.0)
    return LaplacianGraph.from_adjacency(S)


def laplacian_penalty_pairwise(w, S) -> float:
    """``sum_ij (w_i - w_j)^2 S_ij``, equal to ``2 w^T L w``."""
    w = np.asarray(w, dtype=float)
    return float(np.sum((w[:, None] - w[None, :]) ** 2 * S))


# -- Laplacian SVM ------------------------------------------------------------

@dataclass(frozen=True)
class SvmParams:
    lam: float = 1e-2
    mu: float = 10.0
    iters: int = 5000
    step: float = 0.1

    def __post_init__(self):
        if not self.lam >= 0 or not self.mu >= 0:
            raise ValueError(f"lam and mu must be >= 0 (got lam={self.lam}, mu={self.mu})")
        if self.iters < 1 or not self.step > 0:
            raise ValueError("iters must be >= 1 and step > 0")


def svm_objective(w, b, H_labeled, z_labeled, graph: LaplacianGraph, params: SvmParams) -> float:
    """Hinge loss over labeled columns plus ``lam |w|^2 + mu w^T L w``.

    ``H_labeled`` has one column per labeled sample.
    """
    w = np.asarray(w, dtype=float)
    margins = np.asarray(z_labeled) * (w @ np.asarray(H_labeled) + b)
    hinge = np.maximum(0.0, 1.0 - margins).sum()
    return float(hinge + params.lam * (w @ w) + params.mu * (w @ graph.L @ w))


@dataclass
class SvmResult:
    w: np.ndarray
    b: float
    objective: float
    trace: list


def svm_train(H_labeled, z_labeled, graph: LaplacianGraph, params: SvmParams,
              trace_every: int = 0) -> SvmResult:
    """Subgradient descent with step ``step / sqrt(k)`` and iterate averaging."""
    H = np.asarray(H_labeled, dtype=float)
    z = np.asarray(z_labeled, dtype=float)
    if set(np.unique(z)) != {-1.0, 1.0}:
        raise ValueError("Laplacian SVM needs at least one labeled sample of each class")
    m = H.shape[0]
    L2 = 2.0 * params.mu * graph.L
    w = np.zeros(m)
    b = 0.0
    w_avg = np.zeros(m)
    b_avg = 0.0
    trace = []
    for k in range(1, params.iters + 1):
        active = z * (w @ H + b) < 1.0
        za = z[active]
        gw = -(H[:, active] @ za) + 2.0 * params.lam * w + L2 @ w
        gb = -za.sum()
        rate = params.step / math.sqrt(k)
        w = w - rate * gw
        b = b - rate * gb
        w_avg += (w - w_avg) / k
        b_avg += (b - b_avg) / k
        if trace_every and k % trace_every == 0:
            trace.append((k, svm_objective(w_avg, b_avg, H, z, graph, params)))
    obj = svm_objective(w_avg, b_avg, H, z, graph, params)
    return SvmResult(w_avg, float(b_avg), obj, trace)


def svm_decision(result: SvmResult, H) -> np.ndarray:
    return result.w @ np.asarray(H, dtype=float) + result.b


# -- CSV ----------------------------------------------------------------------

def write_matrix_csv(path, M, prefix: str = "c"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"{prefix}{j}" for j in range(M.shape[1])])
        for row in M:
            wr.writerow([format(float(v), ".17g") for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        rows = [[float(v) for v in row] for row in rd]
    return np.array(rows, dtype=float)


def write_svm_csv(path, result: SvmResult):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["kind", "index", "value"])
        for j, v in enumerate(result.w):
            wr.writerow(["w", j, format(float(v), ".17g")])
        wr.writerow(["b", 0, format(result.b, ".17g")])
        for k, v in result.trace:
            wr.writerow(["objective", k, format(v, ".17g")])


def read_svm_csv(path) -> SvmResult:
    w, b, trace = {}, 0.0, []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            if row["kind"] == "w":
                w[int(row["index"])] = float(row["value"])
            elif row["kind"] == "b":
                b = float(row["value"])
            else:
                trace.append((int(row["index"]), float(row["value"])))
    wv = np.array([w[j] for j in range(len(w))])
    return SvmResult(wv, b, trace[-1][1] if trace else float("nan"), trace)
