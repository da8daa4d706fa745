import os
import subprocess
import sys

import numpy as np

from mtssl import datasets
from mtssl.cli import main

SMALL = ["--set", "dataset.size=150", "--set", "tiling.m=8", "--set", "dataset.embed_scale=0.7"]


def test_gen_writes_masked_stream(tmp_path):
    assert main(["gen", "--config", "two_moons", "--out", str(tmp_path), *SMALL]) == 0
    samples = datasets.read_csv(tmp_path / "dataset.csv")
    assert len(samples) == 150 and [s.z != 0 for s in samples].count(True) == 2
    assert (tmp_path / "manifest.json").exists() and (tmp_path / "config.cfg").exists()


def test_run_and_probe(tmp_path, capsys):
    assert main(["run", "--config", "two_moons", "--repeats", "1", "--out", str(tmp_path), *SMALL]) == 0
    assert "ssl" in capsys.readouterr().out
    snap = tmp_path / "repeat_000" / "tiling.snapshot"
    assert snap.exists()
    probes = tmp_path / "probes.csv"
    np.savetxt(probes, np.eye(3)[:2] * 0.5, delimiter=",")
    out = tmp_path / "h.csv"
    assert main(["probe", str(snap), "--probes", str(probes), "--output", str(out)]) == 0
    H = np.loadtxt(out, delimiter=",", skiprows=1)
    assert H.shape == (2, 8) and (H >= 0).all()


def test_compare_square_grid(tmp_path):
    cmp_args = ["--set", "dataset.kind=swiss_chessboard", "--set", "dataset.size=200",
                "--set", "tiling.m=10", "--set", "labels.policy=fraction",
                "--set", "experiment.eval_every=100", "--set", "experiment.test_size=50",
                "--set", "svm.iters=100"]
    assert main(["compare-offline", "--config", "compare_offline", "--repeats", "1",
                 "--out", str(tmp_path / "c"), *cmp_args]) == 0
    assert (tmp_path / "c" / "comparison.csv").exists()
    sq_args = ["--set", "dataset.size=150", "--set", "tiling.m=8", "--set", "svm.iters=100"]
    assert main(["square", "--config", "square", "--repeats", "2", "--out", str(tmp_path / "s"), *sq_args]) == 0
    assert (tmp_path / "s" / "histogram.csv").exists()
    assert main(["grid", "--config", "two_moons", "--repeats", "1", "--out", str(tmp_path / "g"),
                 "--param", "ssl.mu=10,1000", *SMALL]) == 0
    assert len((tmp_path / "g" / "grid.csv").read_text().splitlines()) == 3


def test_config_errors_exit_2(tmp_path):
    assert main(["run", "--config", "two_moons", "--set", "tiling.bogus=1", "--out", str(tmp_path)]) == 2
    assert main(["run", "--config", "no_such_preset", "--out", str(tmp_path)]) == 2
    assert main(["run", "--config", "two_moons", "--repeats", "0", "--out", str(tmp_path)]) == 2
    assert main(["grid", "--config", "two_moons", "--param", "tiling.bogus=1,2", "--out", str(tmp_path)]) == 2


def test_missing_snapshot_exit_1(tmp_path):
    assert main(["probe", str(tmp_path / "none.snapshot"), "--output", str(tmp_path / "o.csv")]) == 1


def test_fallback_backend_selected_by_env():
    env = dict(os.environ, MTSSL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import mtssl; print(mtssl.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
