import math

import numpy as np
import pytest

from mtssl import experiments as ex
from mtssl import metrics
from mtssl.config import ConfigError, ExperimentConfig


def small(**over):
    base = {"dataset.size": 300, "tiling.m": 12, "experiment.seed": 3, "dataset.embed_scale": 0.7}
    base.update(over)
    return ExperimentConfig().with_overrides(base)


def files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_empty_dataset_rejected():
    with pytest.raises(ConfigError):
        ex.run_online(small(**{"dataset.size": 0}))


def test_online_run_deterministic_and_paired(tmp_path):
    cfg = small(**{"ssl.shadow_rule": "tanh", "experiment.repeats": 2})
    a = ex.write_online(ex.run_online(cfg), tmp_path / "a")
    b = ex.write_online(ex.run_online(cfg), tmp_path / "b")
    fa, fb = files(a), files(b)
    assert fa == fb
    assert "repeat_000/main/runlog.csv" in fa and "repeat_001/main/runlog_logreg.csv" in fa
    head = ex.run_online(cfg).repeats[0].heads["main"]
    sa, zta, za, _ = head.ssl.arrays()
    sb, ztb, zb, _ = head.logreg.arrays()
    assert np.array_equal(sa, sb) and np.array_equal(zta, ztb) and np.array_equal(za, zb)
    assert head.shadow is not None and len(head.shadow) == 300


def test_online_outputs_roundtrip(tmp_path):
    cfg = small()
    res = ex.run_online(cfg)
    out = ex.write_online(res, tmp_path)
    log = metrics.load_runlog(out / "repeat_000" / "main")
    assert log.records == res.repeats[0].heads["main"].ssl.records
    lr = metrics.load_runlog(out / "repeat_000" / "main", "runlog_logreg")
    assert len(lr.snapshots) == len(res.repeats[0].heads["main"].logreg.snapshots)


def test_snapshots_follow_schedule():
    res = ex.run_online(small(**{"experiment.snapshot_every": 100}))
    steps = [s for s, _ in res.repeats[0].heads["main"].ssl.snapshots]
    assert steps == [0, 100, 200, 299]


def test_count_heads_share_one_stream():
    cfg = small(**{"labels.policy": "counts", "labels.counts": "5,20"})
    rep = ex.run_online(cfg).repeats[0]
    assert sorted(rep.heads) == ["n20", "n5"]
    n5 = rep.heads["n5"].ssl.arrays()
    n20 = rep.heads["n20"].ssl.arrays()
    assert np.array_equal(n5[1], n20[1])
    assert np.count_nonzero(n5[2]) == 5 and np.count_nonzero(n20[2]) == 20


def test_parallel_matches_serial():
    cfg = small(**{"experiment.repeats": 2, "dataset.size": 150})
    serial = ex.run_online(cfg)
    par = ex.run_online(cfg.with_overrides({"experiment.jobs": 2}))
    for a, b in zip(serial.repeats, par.repeats):
        assert a.heads["main"].ssl.records == b.heads["main"].ssl.records


def test_freeze_keeps_tiling():
    rep = ex.run_online(small(**{"tiling.freeze": "true"}), keep_activity=True).repeats[0]
    assert rep.tiling_state.t == 0


def test_separation_report_needs_activity():
    rep = ex.run_online(small()).repeats[0]
    with pytest.raises(ValueError):
        ex.separation_report(rep)
    rep = ex.run_online(small(), keep_activity=True).repeats[0]
    rep_out = ex.separation_report(rep)
    assert set(rep_out) == {"straddling", "uncovered"}


def test_straddling_channels_definition():
    H = np.array([[1.0, 0.0, 0.5], [0.9, 0.0, 0.5], [0.0, 1.0, 0.1], [0.0, 0.8, 0.1]])
    z = np.array([1, 1, -1, -1])
    # channel 2 is active on both classes, channel 0 and 1 on one each
    assert ex.straddling_channels(H, z).tolist() == [2]


# -- online vs offline --------------------------------------------------------

def compare_cfg(**over):
    base = {"dataset.kind": "swiss_chessboard", "dataset.size": 400, "dataset.embed_scale": 1.0,
            "tiling.m": 20, "ssl.mu": 1, "labels.policy": "fraction", "labels.fraction": 0.1,
            "experiment.eval_every": 100, "experiment.test_size": 100, "svm.iters": 300}
    base.update(over)
    return ExperimentConfig().with_overrides(base)


def test_comparison_schedule_and_roundtrip(tmp_path):
    res = ex.run_online_vs_offline(compare_cfg())
    assert [r.step for r in res.rows] == [100, 200, 300, 400]
    assert all(0.0 <= r.online_error <= 1.0 for r in res.rows)
    out = ex.write_comparison(res, tmp_path)
    back = ex.read_comparison(out / "comparison.csv")
    assert back == res.table()
    runs = ex.read_comparison_runs(out / "comparison_runs.csv")
    assert [(r.repeat, r.step, r.online_error) for r in runs] == \
        [(r.repeat, r.step, r.online_error) for r in res.rows]


def test_comparison_missing_cells_when_one_class_seen():
    res = ex.run_online_vs_offline(compare_cfg(**{"labels.policy": "fixed", "labels.positions": "3"}))
    assert all(math.isnan(r.offline_error) for r in res.rows)
    assert all(row["offline_n"] == 0 for row in res.table())


# -- square ---------------------------------------------------------------------

def square_cfg(**over):
    base = {"dataset.kind": "unit_square", "dataset.size": 300, "dataset.embed_scale": 1.0,
            "tiling.m": 15, "ssl.mu": 10, "labels.policy": "dataset", "svm.iters": 500}
    base.update(over)
    return ExperimentConfig().with_overrides(base)


def test_square_single_repeat(tmp_path):
    res = ex.run_square_imbalance(square_cfg())
    assert len(res.repeats) == 1
    r = res.repeats[0]
    assert 0.5 <= r.network <= 1.0 and 0.5 <= r.laplacian <= 1.0
    out = ex.write_square(res, tmp_path)
    assert ex.read_imbalance(out / "imbalance.csv") == [(0, r.network, r.laplacian)]
    hist = ex.read_histogram(out / "histogram.csv")
    assert sum(h[2] for h in hist) == 1 and sum(h[3] for h in hist) == 1


def test_square_requires_square_dataset():
    with pytest.raises(ConfigError):
        ex.run_square_imbalance(small())


def test_drift_tracks_prediction():
    cfg = square_cfg(**{"dataset.size": 600, "tiling.m": 20})
    obs, pred = [], []
    for r in range(3):
        P = ex.square_repeat(cfg, r, drift_window=20).drift_pairs
        obs.append(P[:, 0])
        pred.append(P[:, 1])
    n = min(len(o) for o in obs)
    mean_obs = np.mean([o[:n] for o in obs], axis=0)
    mean_pred = np.mean([p[:n] for p in pred], axis=0)
    assert n > 0 and np.corrcoef(mean_obs, mean_pred)[0, 1] > 0.8


# -- grid ---------------------------------------------------------------------------

def test_expand_grid_dedupes_and_rejects_empty():
    cells = ex.expand_grid({"ssl.mu": [1, 1, 10], "tiling.m": [5]})
    assert cells == [(("ssl.mu", 1), ("tiling.m", 5)), (("ssl.mu", 10), ("tiling.m", 5))]
    with pytest.raises(ValueError):
        ex.expand_grid({})
    with pytest.raises(ValueError):
        ex.expand_grid({"ssl.mu": []})
    with pytest.raises(ValueError):
        ex.grid_search(small(), [])


def test_grid_single_cell_and_rerun(tmp_path):
    cfg = small(**{"dataset.size": 150})
    res = ex.grid_search(cfg, {"ssl.mu": [100]})
    assert dict(res.best) == {"ssl.mu": 100}
    standalone = ex.run_online(cfg.with_overrides({"ssl.mu": 100}))
    assert res.best_score == metrics.stream_error(standalone.repeats[0].heads["main"].ssl)
    out = ex.write_grid(res, tmp_path)
    assert ex.read_grid(out / "grid.csv") == [({"ssl.mu": "100"}, res.best_score)]


def test_grid_tie_break_is_lexicographic():
    cfg = small(**{"dataset.size": 120})
    res = ex.grid_search(cfg, {"experiment.name": ["zeta", "alpha", "mid"]})
    assert len({s for _, s in res.cells}) == 1
    assert dict(res.best) == {"experiment.name": "alpha"}


def test_grid_rejects_unknown_metric():
    with pytest.raises(ValueError):
        ex.grid_search(small(), {"ssl.mu": [1]}, metric="accuracy")
