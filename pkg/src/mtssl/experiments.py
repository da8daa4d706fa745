"""Experiment runners: streaming runs, online vs offline, square imbalance, grid search."""

from __future__ import annotations

import csv
import itertools
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, baselines, datasets, kernels, metrics, ssl_neuron, tiling
from .config import ConfigError, ExperimentConfig, manifest_json

log = logging.getLogger(__name__)

NORM_SLACK = 0.05


def _map(fn, args, jobs: int):
    args = list(args)
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = [ex.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


# -- stream setup --------------------------------------------------------------

def label_heads(cfg: ExperimentConfig, samples, seed: int) -> dict:
    """Masked copies of the stream, one per label policy head."""
    lab = cfg.labels
    if lab.policy == "early_per_class":
        pol = datasets.early_per_class(samples, starts=lab.positions)
        return {"main": datasets.mask_labels(samples, pol)}
    if lab.policy == "fixed":
        return {"main": datasets.mask_labels(samples, datasets.FixedPoints(tuple(lab.positions)))}
    if lab.policy == "fraction":
        return {"main": datasets.mask_labels(samples, datasets.RandomFraction(lab.fraction), seed)}
    if lab.policy == "dataset":
        return {"main": list(samples)}
    heads = {}
    for k, count in enumerate(lab.counts):
        heads[f"n{count}"] = datasets.mask_labels(
            samples, datasets.RandomCount(int(count)), seed + k)
    return heads


@dataclass
class TilingStats:
    samples: int = 0
    not_converged: int = 0
    norm_violations: int = 0
    max_norm: float = 0.0
    mean_iterations: float = 0.0

    def add(self, act: tiling.TilingActivity):
        self.samples += 1
        self.not_converged += not act.converged
        nrm = float(np.linalg.norm(act.h))
        if nrm > 1.0 + NORM_SLACK:
            self.norm_violations += 1
            log.debug("activity norm %.4f exceeds 1", nrm)
        self.max_norm = max(self.max_norm, nrm)
        self.mean_iterations += (act.iterations - self.mean_iterations) / self.samples


def _prepare(cfg: ExperimentConfig, seeds: dict, samples):
    X = datasets.stack_inputs(samples)
    tparams = cfg.tiling_params(X.shape[1])
    state = tiling.init_tiling(tparams, seeds["tiling"], data=X)
    warm = None
    if cfg.tiling.pretrain:
        state, warm = tiling.train(state, X, tparams, passes=cfg.tiling.pretrain)
    return tparams, state, warm


# -- online run ------------------------------------------------------------------

@dataclass
class HeadResult:
    ssl: metrics.RunLog
    logreg: metrics.RunLog
    shadow: metrics.RunLog | None = None


@dataclass
class RepeatResult:
    repeat: int
    seeds: dict
    heads: dict
    tiling_params: tiling.TilingParams
    tiling_state: tiling.TilingState
    tiling_stats: TilingStats
    samples: list = field(repr=False, default_factory=list)
    H: np.ndarray | None = field(repr=False, default=None)


def run_online_repeat(cfg: ExperimentConfig, repeat: int, keep_activity: bool = False) -> RepeatResult:
    seeds = cfg.repeat_seeds(repeat)
    samples = datasets.generate(cfg.dataset_spec(seeds["data"]))
    heads_in = label_heads(cfg, samples, seeds["labels"])
    tparams, state, warm = _prepare(cfg, seeds, samples)
    sparams = cfg.ssl_params()
    shadow_params = None if cfg.ssl.shadow_rule == "none" else cfg.ssl_params(cfg.ssl.shadow_rule)
    m = tparams.m
    meta = {"repeat": repeat, "seed": cfg.experiment.seed, "config": cfg.digest()}
    names = list(heads_in)
    ssl_states = {k: ssl_neuron.SslState.zeros(m) for k in names}
    shadow_states = {k: ssl_neuron.SslState.zeros(m) for k in names}
    lr_states = {k: baselines.LogRegState.zeros(m, cfg.logreg.lr) for k in names}
    out = {k: HeadResult(metrics.RunLog(meta=dict(meta, head=k, model="ssl")),
                         metrics.RunLog(meta=dict(meta, head=k, model="logreg")),
                         metrics.RunLog(meta=dict(meta, head=k, model="shadow")) if shadow_params else None)
           for k in names}
    stats = TilingStats()
    every = cfg.experiment.snapshot_every
    H = np.empty((len(samples), m)) if keep_activity else None
    for t, s in enumerate(samples):
        act = tiling.infer(state, s.x, tparams, warm)
        warm = act
        stats.add(act)
        if H is not None:
            H[t] = act.h
        if not cfg.tiling.freeze:
            state = tiling.slow_update(state, act.h, s.x, tparams)
        for k in names:
            z = heads_in[k][t].z
            inp = ssl_neuron.LabeledInput(act.h, z)
            y, ssl_states[k] = ssl_neuron.step(ssl_states[k], inp, sparams)
            res = out[k]
            res.ssl.append(metrics.StepRecord(t, s.z_true, z, y, act.converged))
            if shadow_params is not None:
                ys, shadow_states[k] = ssl_neuron.step(shadow_states[k], inp, shadow_params)
                res.shadow.append(metrics.StepRecord(t, s.z_true, z, ys, act.converged))
            p, lr_states[k] = baselines.logreg_step(lr_states[k], act.h, z)
            res.logreg.append(metrics.StepRecord(t, s.z_true, z, baselines.logreg_margin(p), act.converged))
            if t % every == 0 or t == len(samples) - 1:
                res.ssl.snapshot(t, ssl_states[k].w)
                if res.shadow is not None:
                    res.shadow.snapshot(t, shadow_states[k].w)
                res.logreg.snapshot(t, lr_states[k].w)
    return RepeatResult(repeat, seeds, out, tparams, state, stats,
                        samples if keep_activity else [], H)


def head_summary(res: HeadResult) -> dict:
    summary = {"ssl_stream_error": metrics.stream_error(res.ssl),
               "logreg_stream_error": metrics.stream_error(res.logreg)}
    tw = metrics.transition_window(res.ssl)
    summary["transition"] = list(tw) if tw else None
    post = metrics.post_transition_error(res.ssl)
    summary["post_transition_error"] = post[0] if post else None
    summary["post_transition_steps"] = post[1] if post else 0
    if res.shadow is not None:
        summary["rule_agreement"] = rule_agreement(res.ssl, res.shadow)
    return summary


def rule_agreement(a: metrics.RunLog, b: metrics.RunLog, after: int | None = None) -> float | None:
    """Share of post-transition unlabeled steps where both logs predict the same sign."""
    if after is None:
        tw = metrics.transition_window(a)
        if tw is None:
            return None
        after = tw[1]
    sa, _, z, ya = a.arrays()
    _, _, _, yb = b.arrays()
    sel = (sa >= after) & (z == 0)
    if not sel.any():
        return None
    return float(np.mean(np.sign(ya[sel]) == np.sign(yb[sel])))


@dataclass
class OnlineResult:
    config: ExperimentConfig
    repeats: list

    def summary(self) -> dict:
        per = []
        for r in self.repeats:
            per.append({"repeat": r.repeat,
                        "tiling": vars(r.tiling_stats),
                        "heads": {k: head_summary(h) for k, h in r.heads.items()}})
        return {"repeats": per}


def run_online(cfg: ExperimentConfig, keep_activity: bool = False) -> OnlineResult:
    cfg.validate()
    reps = _map(run_online_repeat,
                [(cfg, r, keep_activity) for r in range(cfg.experiment.repeats)],
                cfg.experiment.jobs)
    reps.sort(key=lambda r: r.repeat)
    return OnlineResult(cfg, reps)


def _versions() -> dict:
    return {"mtssl": __version__, "numpy": np.__version__,
            "python": platform.python_version(), "kernel_backend": kernels.BACKEND}


def write_manifest(out: Path, cfg: ExperimentConfig, kind: str, summary: dict):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(cfg.dumps())
    doc = {"experiment": kind, "config": cfg.as_dict(), "config_digest": cfg.digest(),
           "seed": cfg.experiment.seed, "versions": _versions(), "summary": summary}
    (out / "manifest.json").write_text(manifest_json(doc))


def write_online(result: OnlineResult, out) -> Path:
    out = Path(out)
    for r in result.repeats:
        for k, h in r.heads.items():
            d = out / f"repeat_{r.repeat:03d}" / k
            d.mkdir(parents=True, exist_ok=True)
            metrics.write_runlog(d / "runlog.csv", h.ssl)
            metrics.write_weights(d / "weights.csv", h.ssl)
            metrics.write_runlog(d / "runlog_logreg.csv", h.logreg)
            metrics.write_weights(d / "weights_runlog_logreg.csv", h.logreg)
            if h.shadow is not None:
                metrics.write_runlog(d / "runlog_shadow.csv", h.shadow)
                metrics.write_weights(d / "weights_runlog_shadow.csv", h.shadow)
        tiling.save_snapshot(out / f"repeat_{r.repeat:03d}" / "tiling.snapshot",
                             r.tiling_params, r.tiling_state)
    write_manifest(out, result.config, "online", result.summary())
    return out


# -- tiling diagnostics ---------------------------------------------------------

def class_activity(H, z_true) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean activity on class +1 and class -1 rows of ``H``."""
    H = np.asarray(H, dtype=float)
    z = np.asarray(z_true)
    return H[z == 1].mean(axis=0), H[z == -1].mean(axis=0)


def straddling_channels(H, z_true, rel: float = 0.05) -> np.ndarray:
    """Channels whose mean activity exceeds ``rel * max activity`` on both classes."""
    H = np.asarray(H, dtype=float)
    mean_a, mean_b = class_activity(H, z_true)
    tau = rel * H.max(axis=0, initial=0.0)
    return np.flatnonzero((mean_a > tau) & (mean_b > tau))


def separation_report(result: "RepeatResult", rel: float = 0.05) -> dict:
    """Probe the final tiling on the repeat's own stream and count straddling channels."""
    if not result.samples:
        raise ValueError("repeat was run without keep_activity; no samples to probe")
    H = tiling.receptive_field_probe(result.tiling_state, [s.x for s in result.samples],
                                     result.tiling_params)
    z = np.array([s.z_true for s in result.samples])
    bad = straddling_channels(H, z, rel)
    return {"straddling": bad.tolist(), "uncovered": int(np.count_nonzero(H.sum(axis=1) == 0))}


# -- online vs offline ----------------------------------------------------------

@dataclass
class ComparisonRow:
    repeat: int
    step: int
    online_error: float
    offline_error: float  # nan when the SVM could not be trained


def compare_repeat(cfg: ExperimentConfig, repeat: int) -> list:
    seeds = cfg.repeat_seeds(repeat)
    samples = datasets.generate(cfg.dataset_spec(seeds["data"]))
    masked = label_heads(cfg, samples, seeds["labels"])["main"]
    test = datasets.generate(cfg.dataset_spec(seeds["test"], size=cfg.experiment.test_size))
    z_test = np.array([s.z_true for s in test])
    tparams, state, warm = _prepare(cfg, seeds, samples)
    sparams = cfg.ssl_params()
    svm_params = cfg.svm_params()
    ssl_state = ssl_neuron.SslState.zeros(tparams.m)
    H_seen = np.empty((len(samples), tparams.m))
    z_seen = np.array([s.z for s in masked])
    rows = []
    for t, s in enumerate(masked):
        act = tiling.infer(state, s.x, tparams, warm)
        warm = act
        H_seen[t] = act.h
        if not cfg.tiling.freeze:
            state = tiling.slow_update(state, act.h, s.x, tparams)
        _, ssl_state = ssl_neuron.step(ssl_state, ssl_neuron.LabeledInput(act.h, s.z), sparams)
        step = t + 1
        if step % cfg.experiment.eval_every:
            continue
        H_test = tiling.receptive_field_probe(state, [q.x for q in test], tparams)
        online = np.array([ssl_neuron.predict(ssl_state, ssl_neuron.LabeledInput(h, 0), sparams)
                           for h in H_test])
        online_err = metrics.classification_error(online, z_test)
        lab = z_seen[:step] != 0
        try:
            graph = baselines.build_gramian(H_seen[:step].T)
            fit = baselines.svm_train(H_seen[:step][lab].T, z_seen[:step][lab], graph, svm_params)
            offline_err = metrics.classification_error(baselines.svm_decision(fit, H_test.T), z_test)
        except ValueError as exc:
            log.info("repeat %d step %d: offline SVM skipped (%s)", repeat, step, exc)
            offline_err = float("nan")
        rows.append(ComparisonRow(repeat, step, online_err, offline_err))
    return rows


@dataclass
class ComparisonResult:
    config: ExperimentConfig
    rows: list

    def table(self) -> list:
        """Per-step means and standard deviations over repeats."""
        steps = sorted({r.step for r in self.rows})
        out = []
        for st in steps:
            on = np.array([r.online_error for r in self.rows if r.step == st])
            off = np.array([r.offline_error for r in self.rows if r.step == st])
            off_ok = off[~np.isnan(off)]
            out.append({
                "step": st,
                "online_mean": float(on.mean()), "online_std": float(on.std()),
                "offline_mean": float(off_ok.mean()) if off_ok.size else float("nan"),
                "offline_std": float(off_ok.std()) if off_ok.size else float("nan"),
                "offline_n": int(off_ok.size),
            })
        return out


def run_online_vs_offline(cfg: ExperimentConfig) -> ComparisonResult:
    cfg.validate()
    per = _map(compare_repeat, [(cfg, r) for r in range(cfg.experiment.repeats)], cfg.experiment.jobs)
    rows = [row for rep in per for row in rep]
    rows.sort(key=lambda r: (r.repeat, r.step))
    return ComparisonResult(cfg, rows)


_TABLE_COLS = ["step", "online_mean", "online_std", "offline_mean", "offline_std", "offline_n"]


def write_comparison(result: ComparisonResult, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(_TABLE_COLS)
        for row in result.table():
            wr.writerow([_fmt(row[c]) for c in _TABLE_COLS])
    with open(out / "comparison_runs.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["repeat", "step", "online_error", "offline_error"])
        for r in result.rows:
            wr.writerow([r.repeat, r.step, _fmt(r.online_error), _fmt(r.offline_error)])
    write_manifest(out, result.config, "compare-offline", {"table": result.table()})
    return out


def read_comparison(path) -> list:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k in ("step", "offline_n") else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def read_comparison_runs(path) -> list:
    with open(path, newline="") as fh:
        return [ComparisonRow(int(r["repeat"]), int(r["step"]), float(r["online_error"]),
                              float(r["offline_error"])) for r in csv.DictReader(fh)]


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


# -- square imbalance ------------------------------------------------------------

@dataclass
class SquareRepeat:
    repeat: int
    network: float
    laplacian: float
    drift_pairs: np.ndarray = field(repr=False, default=None)


def square_repeat(cfg: ExperimentConfig, repeat: int, drift_window: int = 0) -> SquareRepeat:
    seeds = cfg.repeat_seeds(repeat)
    samples = datasets.generate(cfg.dataset_spec(seeds["data"]))
    masked = label_heads(cfg, samples, seeds["labels"])["main"]
    tparams, state, warm = _prepare(cfg, seeds, samples)
    sparams = cfg.ssl_params()
    ssl_state = ssl_neuron.SslState.zeros(tparams.m)
    H = np.empty((len(samples), tparams.m))
    ws = np.empty((len(samples) + 1, tparams.m))
    ws[0] = ssl_state.w
    silent = np.zeros(len(samples), dtype=bool)
    for t, s in enumerate(masked):
        act = tiling.infer(state, s.x, tparams, warm)
        warm = act
        H[t] = act.h
        if not cfg.tiling.freeze:
            state = tiling.slow_update(state, act.h, s.x, tparams)
        inp = ssl_neuron.LabeledInput(act.h, s.z)
        silent[t] = s.z == 0 and abs(ssl_neuron.activation(ssl_state, inp, sparams)) < 1.0
        _, ssl_state = ssl_neuron.step(ssl_state, inp, sparams)
        ws[t + 1] = ssl_state.w
    z = np.array([s.z for s in masked])
    unl = z == 0
    H_final = tiling.receptive_field_probe(state, [s.x for s in samples], tparams)
    net_pred = np.sign(sparams.mu * (H_final[unl] @ ssl_state.w)).astype(int)
    graph = baselines.build_gramian(H_final.T)
    fit = baselines.svm_train(H_final[~unl].T, z[~unl], graph, cfg.svm_params())
    lap_pred = np.sign(baselines.svm_decision(fit, H_final[unl].T)).astype(int)
    pairs = None
    if drift_window:
        pairs = drift_pairs(H, ws, silent, sparams.mu, drift_window)
    return SquareRepeat(repeat, metrics.imbalance_fraction(net_pred),
                        metrics.imbalance_fraction(lap_pred), pairs)


def drift_pairs(H, ws, silent, mu: float, window: int) -> np.ndarray:
    """(observed, predicted) weight changes summed over silent, unsaturated windows.

    Prediction uses the overlap matrix of the window's own activity.
    """
    T = H.shape[0]
    out = []
    for start in range(0, T - window + 1, window):
        sl = slice(start, start + window)
        if not silent[sl].all():
            continue
        S = metrics.overlap_matrix(H[sl])
        pred = np.zeros(H.shape[1])
        for t in range(start, start + window):
            pred += metrics.expected_w_drift(S, ws[t], mu, 1.0 / (t + 1))
        obs = ws[start + window] - ws[start]
        out.append(np.column_stack([obs, pred]))
    if not out:
        return np.zeros((0, 2))
    return np.vstack(out)


@dataclass
class SquareResult:
    config: ExperimentConfig
    repeats: list
    bins: tuple = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

    def histogram(self) -> list:
        net = metrics.histogram([r.network for r in self.repeats], self.bins)
        lap = metrics.histogram([r.laplacian for r in self.repeats], self.bins)
        return [{"bin_lo": self.bins[k], "bin_hi": self.bins[k + 1], "network": net[k], "laplacian": lap[k]}
                for k in range(len(net))]

    def summary(self) -> dict:
        net = [r.network for r in self.repeats]
        lap = [r.laplacian for r in self.repeats]
        return {"network_median": float(np.median(net)), "laplacian_median": float(np.median(lap)),
                "histogram": self.histogram()}


def run_square_imbalance(cfg: ExperimentConfig, drift_window: int = 0) -> SquareResult:
    cfg.validate()
    if cfg.dataset.kind != "unit_square":
        raise ConfigError("square experiment needs dataset.kind = unit_square")
    reps = _map(square_repeat, [(cfg, r, drift_window) for r in range(cfg.experiment.repeats)],
                cfg.experiment.jobs)
    reps.sort(key=lambda r: r.repeat)
    return SquareResult(cfg, reps)


def write_square(result: SquareResult, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "imbalance.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["repeat", "network", "laplacian"])
        for r in result.repeats:
            wr.writerow([r.repeat, _fmt(r.network), _fmt(r.laplacian)])
    with open(out / "histogram.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["bin_lo", "bin_hi", "network", "laplacian"])
        for row in result.histogram():
            wr.writerow([_fmt(float(row["bin_lo"])), _fmt(float(row["bin_hi"])), row["network"], row["laplacian"]])
    write_manifest(out, result.config, "square", result.summary())
    return out


def read_imbalance(path) -> list:
    with open(path, newline="") as fh:
        return [(int(r["repeat"]), float(r["network"]), float(r["laplacian"])) for r in csv.DictReader(fh)]


def read_histogram(path) -> list:
    with open(path, newline="") as fh:
        return [(float(r["bin_lo"]), float(r["bin_hi"]), int(r["network"]), int(r["laplacian"]))
                for r in csv.DictReader(fh)]


# -- grid search ------------------------------------------------------------------

METRICS = ("ssl_stream", "logreg_stream", "online_test", "offline_test")


def _cell_score(cfg: ExperimentConfig, metric: str) -> float:
    if metric in ("ssl_stream", "logreg_stream"):
        res = run_online(cfg)
        key = "ssl" if metric == "ssl_stream" else "logreg"
        vals = [metrics.stream_error(getattr(h, key)) for r in res.repeats for h in r.heads.values()]
        return float(np.mean(vals))
    comp = run_online_vs_offline(cfg)
    final = max(r.step for r in comp.rows)
    col = "online_error" if metric == "online_test" else "offline_error"
    vals = [getattr(r, col) for r in comp.rows if r.step == final]
    return float(np.nanmean(vals))


def expand_grid(grid: dict) -> list:
    """Cartesian product of deduplicated values, as sorted ``(key, value)`` tuples."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must name at least one parameter with at least one value")
    keys = sorted(grid)
    values = [list(dict.fromkeys(grid[k])) for k in keys]
    cells = [tuple(zip(keys, combo)) for combo in itertools.product(*values)]
    return list(dict.fromkeys(cells))


@dataclass
class GridResult:
    best: tuple
    best_score: float
    best_config: ExperimentConfig
    cells: list  # (cell, score)


def grid_search(cfg: ExperimentConfig, grid, metric: str = "ssl_stream") -> GridResult:
    """Evaluate every cell; ties go to the lexicographically smallest parameter tuple."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    cells = expand_grid(grid) if isinstance(grid, dict) else list(dict.fromkeys(grid))
    if not cells:
        raise ValueError("empty grid")
    scored = []
    for cell in cells:
        score = _cell_score(cfg.with_overrides(dict(cell)), metric)
        log.info("grid cell %s -> %.4f", cell, score)
        scored.append((cell, score))
    best, best_score = min(scored, key=lambda cs: (math.inf if math.isnan(cs[1]) else cs[1],
                                                    tuple(v for _, v in cs[0])))
    return GridResult(best, best_score, cfg.with_overrides(dict(best)), scored)


def write_grid(result: GridResult, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    keys = [k for k, _ in result.cells[0][0]]
    with open(out / "grid.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(keys + ["score"])
        for cell, score in result.cells:
            wr.writerow([v for _, v in cell] + [_fmt(score)])
    write_manifest(out, result.best_config, "grid",
                   {"best": dict(result.best), "best_score": result.best_score})
    return out


def read_grid(path) -> list:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [({k: v for k, v in row.items() if k != "score"}, float(row["score"])) for row in rd]
