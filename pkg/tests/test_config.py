import pytest

from mtssl import config
from mtssl.config import ConfigError, ExperimentConfig


def test_roundtrip_through_text():
    cfg = config.loads("tiling.m = 12\nssl.mu = 3.5  # comment\nlabels.positions = 4, 9\ntiling.freeze = yes\n")
    assert cfg.tiling.m == 12 and cfg.ssl.mu == 3.5
    assert cfg.labels.positions == [4, 9] and cfg.tiling.freeze is True
    again = config.loads(cfg.dumps())
    assert again == cfg and again.digest() == cfg.digest()


@pytest.mark.parametrize("text", ["tiling.nope = 1", "nosection.m = 1", "tiling.m = ten",
                                  "tiling.freeze = maybe", "justtext", "m = 3"])
def test_bad_lines_rejected(text):
    with pytest.raises(ConfigError):
        config.loads(text)


@pytest.mark.parametrize("key, value", [("experiment.repeats", 0), ("experiment.eval_every", 0),
                                        ("dataset.size", 0), ("tiling.m", 0), ("ssl.mu", -1),
                                        ("labels.policy", "some"), ("ssl.shadow_rule", "relu"),
                                        ("tiling.pretrain", -1), ("logreg.lr", 0), ("svm.lam", -1)])
def test_validation_errors(key, value):
    with pytest.raises(ConfigError):
        ExperimentConfig().with_overrides({key: value}).validate()


def test_overrides_do_not_mutate():
    base = ExperimentConfig()
    new = base.with_overrides({"tiling.m": 7, "tiling.eta": "0.05"})
    assert base.tiling.m == 40 and new.tiling.m == 7
    assert new.tiling_params(3).eta == 0.05


def test_repeat_seeds_deterministic_and_distinct():
    cfg = ExperimentConfig()
    a, b = cfg.repeat_seeds(0), cfg.repeat_seeds(1)
    assert a == ExperimentConfig().repeat_seeds(0)
    assert len(set(a.values())) == 4 and set(a.values()).isdisjoint(b.values())
    assert cfg.with_overrides({"experiment.seed": 1}).repeat_seeds(0) != a


def test_presets_load_and_validate():
    names = config.preset_names()
    for want in ("two_moons", "chessboard_coarse", "chessboard_med", "chessboard_fine", "square"):
        assert want in names
    for name in names:
        config.load(name).validate()


def test_preset_values():
    moons = config.load("two_moons")
    assert (moons.dataset.size, moons.tiling.m, moons.ssl.mu) == (2000, 40, 1000.0)
    assert moons.labels.policy == "early_per_class" and moons.labels.positions == [10, 20]
    assert moons.experiment.repeats == 10
    sq = config.load("square")
    assert (sq.tiling.m, sq.ssl.mu, sq.experiment.repeats, sq.dataset.kind) == (50, 10.0, 100, "unit_square")
    for name, g in (("coarse", 0.5), ("med", 0.25), ("fine", 0.125)):
        cb = config.load(f"chessboard_{name}")
        assert cb.dataset.granularity == g and cb.tiling.m == 200
        assert cb.labels.counts == [50, 100, 200]


def test_load_file_and_missing(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("tiling.m = 9\n")
    assert config.load(p).tiling.m == 9
    with pytest.raises(ConfigError):
        config.load(tmp_path / "missing.cfg")
