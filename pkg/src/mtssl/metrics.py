"""Run logs and evaluation quantities."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ssl_neuron, tiling


def decision(y: float) -> int:
    """Sign of an output; exact zero is an abstention (0)."""
    return 1 if y > 0 else (-1 if y < 0 else 0)


@dataclass
class StepRecord:
    step: int
    z_true: int
    z: int
    y: float
    converged: bool = True


@dataclass
class RunLog:
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (step, w)
    meta: dict = field(default_factory=dict)

    def append(self, rec: StepRecord):
        if self.records and rec.step <= self.records[-1].step:
            raise ValueError("records must be strictly ordered by step")
        self.records.append(rec)

    def snapshot(self, step: int, w):
        self.snapshots.append((int(step), np.array(w, dtype=float)))

    def arrays(self):
        steps = np.array([r.step for r in self.records], dtype=int)
        z_true = np.array([r.z_true for r in self.records], dtype=int)
        z = np.array([r.z for r in self.records], dtype=int)
        y = np.array([r.y for r in self.records], dtype=float)
        return steps, z_true, z, y

    def __len__(self):
        return len(self.records)


def _errors(log: RunLog):
    steps, z_true, z, y = log.arrays()
    pred = np.sign(y).astype(int)
    return steps, (pred != z_true), z == 0


def stream_error(log: RunLog, window=None) -> float:
    """Error over unlabeled steps with ``start <= step < end``; abstentions count as errors."""
    steps, wrong, unlabeled = _errors(log)
    start, end = window if window is not None else (steps.min(initial=0), steps.max(initial=-1) + 1)
    sel = (steps >= start) & (steps < end) & unlabeled
    if not sel.any():
        raise ValueError(f"no unlabeled steps in window [{start}, {end})")
    return float(wrong[sel].mean())


def transition_window(log: RunLog, window: int = 100, threshold: float = 0.05):
    """``(first_label_step, end)`` of the transition period, or ``None``.

    ``end`` is the first step after which the trailing ``window``-step
    stream error stays below ``threshold`` for the rest of the log. ``None``
    when no label ever arrives or the error never settles.
    """
    steps, wrong, unlabeled = _errors(log)
    labeled = np.flatnonzero(~unlabeled)
    if labeled.size == 0:
        return None
    first = int(labeled[0])
    err = np.cumsum(np.where(unlabeled, wrong, 0))
    cnt = np.cumsum(unlabeled)
    lo = np.maximum(np.arange(len(steps)) - window, -1)
    e_win = err - np.where(lo >= 0, err[np.maximum(lo, 0)], 0)
    c_win = cnt - np.where(lo >= 0, cnt[np.maximum(lo, 0)], 0)
    rate = np.where(c_win > 0, e_win / np.maximum(c_win, 1), 0.0)
    bad = np.flatnonzero(rate[first:] >= threshold)
    if bad.size == 0:
        return int(steps[first]), int(steps[first])
    last_bad = first + int(bad[-1])
    if last_bad == len(steps) - 1:
        return None
    return int(steps[first]), int(steps[last_bad + 1])


def post_transition_error(log: RunLog, window: int = 100, threshold: float = 0.05):
    """``(error, n_steps)`` after the transition, or ``None`` if it never ends."""
    tw = transition_window(log, window, threshold)
    if tw is None:
        return None
    end = tw[1]
    steps = log.arrays()[0]
    try:
        err = stream_error(log, (end, int(steps[-1]) + 1))
    except ValueError:
        return None
    return err, int(steps[-1]) + 1 - end


@dataclass
class ModelSnapshot:
    tiling_params: tiling.TilingParams
    tiling_state: tiling.TilingState
    ssl_params: ssl_neuron.SslParams
    ssl_state: ssl_neuron.SslState


def model_outputs(snapshot: ModelSnapshot, samples) -> np.ndarray:
    """Outputs with the label channel silenced; each input relaxed from a cold start."""
    out = np.empty(len(samples))
    for i, s in enumerate(samples):
        act = tiling.infer(snapshot.tiling_state, s.x, snapshot.tiling_params)
        inp = ssl_neuron.LabeledInput(act.h, 0)
        out[i] = ssl_neuron.predict(snapshot.ssl_state, inp, snapshot.ssl_params)
    return out


def classification_error(outputs, z_true) -> float:
    pred = np.sign(np.asarray(outputs, dtype=float)).astype(int)
    return float(np.mean(pred != np.asarray(z_true)))


def test_error(snapshot: ModelSnapshot, test_samples) -> float:
    if len(test_samples) == 0:
        raise ValueError("empty test set")
    return classification_error(model_outputs(snapshot, test_samples),
                                [s.z_true for s in test_samples])


test_error.__test__ = False  # not a pytest test


def imbalance_fraction(predictions: Sequence[int]) -> float:
    """Majority-class share of the predictions, abstentions split evenly."""
    p = np.asarray(predictions)
    if p.size == 0:
        raise ValueError("empty prediction list")
    pos = np.count_nonzero(p > 0)
    neg = np.count_nonzero(p < 0)
    ties = p.size - pos - neg
    return float((max(pos, neg) + 0.5 * ties) / p.size)


def overlap_matrix(activities) -> np.ndarray:
    """Empirical ``E[h h^T]`` over a list of activity vectors."""
    A = np.atleast_2d(np.asarray(activities, dtype=float))
    if A.shape[0] == 0:
        raise ValueError("empty activity list")
    S = A.T @ A / A.shape[0]
    return 0.5 * (S + S.T)


def expected_w_drift(overlap, w, mu: float, eta: float) -> np.ndarray:
    """Mean weight change ``eta (mu S w - w)`` while the label channel is silent."""
    w = np.asarray(w, dtype=float)
    return eta * (mu * (np.asarray(overlap) @ w) - w)


def histogram(values, bins=(0.5, 0.6, 0.7, 0.8, 0.9, 1.0)) -> list:
    """Counts per bin ``[lo, hi)``; the last bin is closed on the right."""
    values = np.asarray(values, dtype=float)
    counts = []
    for k in range(len(bins) - 1):
        lo, hi = bins[k], bins[k + 1]
        last = k == len(bins) - 2
        sel = (values >= lo) & ((values <= hi) if last else (values < hi))
        counts.append(int(np.count_nonzero(sel)))
    return counts


# -- CSV ----------------------------------------------------------------------

def write_runlog(path, log: RunLog):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "z_true", "z", "y", "converged"])
        for r in log.records:
            wr.writerow([r.step, r.z_true, r.z, format(float(r.y), ".17g"), int(r.converged)])


def read_runlog(path) -> RunLog:
    log = RunLog()
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            log.append(StepRecord(int(row["step"]), int(row["z_true"]), int(row["z"]),
                                  float(row["y"]), bool(int(row["converged"]))))
    return log


def write_weights(path, log: RunLog):
    m = len(log.snapshots[0][1]) if log.snapshots else 0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step"] + [f"w{i}" for i in range(m)])
        for step, w in log.snapshots:
            wr.writerow([step] + [format(float(v), ".17g") for v in w])


def read_weights(path) -> list:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        return [(int(row[0]), np.array([float(v) for v in row[1:]])) for row in rd]


def load_runlog(directory, name: str = "runlog") -> RunLog:
    d = Path(directory)
    log = read_runlog(d / f"{name}.csv")
    wpath = d / ("weights.csv" if name == "runlog" else f"weights_{name}.csv")
    if wpath.exists():
        log.snapshots = read_weights(wpath)
    return log
