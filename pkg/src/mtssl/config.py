"""Experiment configuration: flat ``section.key = value`` files.

Lines starting with ``#`` are comments. Lists are comma separated. Every
key must name a field of one of the section dataclasses below; unknown
keys are rejected so that typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .baselines import SvmParams
from .datasets import DatasetSpec
from .ssl_neuron import SslParams
from .tiling import TilingParams


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSection:
    kind: str = "two_moons"
    size: int = 2000
    noise: float = 0.05
    granularity: float = 0.5
    embed: str = "sphere"
    embed_scale: float = 0.5
    corner_positions: list = field(default_factory=lambda: [10, 20])


@dataclass
class TilingSection:
    m: int = 40
    alpha: float = 0.9
    gamma_h: float = 10.0
    gamma_u: float = 0.05
    gamma_v: float = 1.0
    eta: str = "inv_t"
    eta_offset: int = 10
    max_fast_iters: int = 2000
    fast_tol: float = 1e-5
    warm: str = "carry"
    u_init: float = 0.1
    init: str = "samples"
    init_scale: float = 0.1
    pretrain: int = 0
    freeze: bool = False


@dataclass
class SslSection:
    mu: float = 1000.0
    rule: str = "clipped"
    # second neuron fed the same activity with the other output rule
    shadow_rule: str = "none"


@dataclass
class LogRegSection:
    lr: float = 0.1


@dataclass
class SvmSection:
    lam: float = 1e-2
    mu: float = 10.0
    iters: int = 5000
    step: float = 0.1


@dataclass
class LabelsSection:
    # early_per_class | fraction | counts | fixed | dataset
    policy: str = "early_per_class"
    positions: list = field(default_factory=lambda: [10, 20])
    fraction: float = 0.05
    counts: list = field(default_factory=lambda: [50, 100, 200])


@dataclass
class ExperimentSection:
    name: str = "experiment"
    seed: int = 0
    repeats: int = 1
    test_size: int = 2000
    eval_every: int = 500
    snapshot_every: int = 100
    out: str = "out"
    jobs: int = 1


SECTIONS = {
    "dataset": DatasetSection,
    "tiling": TilingSection,
    "ssl": SslSection,
    "logreg": LogRegSection,
    "svm": SvmSection,
    "labels": LabelsSection,
    "experiment": ExperimentSection,
}


@dataclass
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    tiling: TilingSection = field(default_factory=TilingSection)
    ssl: SslSection = field(default_factory=SslSection)
    logreg: LogRegSection = field(default_factory=LogRegSection)
    svm: SvmSection = field(default_factory=SvmSection)
    labels: LabelsSection = field(default_factory=LabelsSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    # -- validation and derived objects --------------------------------------

    def validate(self) -> "ExperimentConfig":
        try:
            spec = self.dataset_spec(0)
            self.tiling_params(spec.input_dim)
            self.ssl_params()
            self.svm_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.experiment.repeats < 1:
            raise ConfigError(f"experiment.repeats must be >= 1 (got {self.experiment.repeats})")
        if self.experiment.eval_every < 1:
            raise ConfigError(f"experiment.eval_every must be >= 1 (got {self.experiment.eval_every})")
        if self.experiment.snapshot_every < 1:
            raise ConfigError("experiment.snapshot_every must be >= 1")
        if self.experiment.test_size < 1:
            raise ConfigError("experiment.test_size must be >= 1")
        if self.tiling.pretrain < 0:
            raise ConfigError("tiling.pretrain must be >= 0")
        if self.labels.policy not in ("early_per_class", "fraction", "counts", "fixed", "dataset"):
            raise ConfigError(f"unknown labels.policy {self.labels.policy!r}")
        if self.ssl.shadow_rule not in ("none", "clipped", "tanh"):
            raise ConfigError(f"ssl.shadow_rule must be none, clipped or tanh (got {self.ssl.shadow_rule!r})")
        if not self.logreg.lr > 0:
            raise ConfigError("logreg.lr must be > 0")
        return self

    def dataset_spec(self, seed: int, size: int | None = None) -> DatasetSpec:
        d = self.dataset
        return DatasetSpec(kind=d.kind, size=d.size if size is None else size, noise=d.noise,
                           granularity=d.granularity, seed=int(seed), embed=d.embed,
                           embed_scale=d.embed_scale, corner_positions=tuple(d.corner_positions))

    def tiling_params(self, n: int) -> TilingParams:
        t = self.tiling
        eta = t.eta if t.eta == "inv_t" else float(t.eta)
        return TilingParams(m=t.m, n=n, alpha=t.alpha, gamma_h=t.gamma_h, gamma_u=t.gamma_u,
                            gamma_v=t.gamma_v, eta=eta, eta_offset=t.eta_offset,
                            max_fast_iters=t.max_fast_iters, fast_tol=t.fast_tol, warm=t.warm,
                            u_init=t.u_init, init=t.init, init_scale=t.init_scale)

    def ssl_params(self, rule: str | None = None) -> SslParams:
        return SslParams(mu=self.ssl.mu, rule=rule or self.ssl.rule)

    def svm_params(self) -> SvmParams:
        s = self.svm
        return SvmParams(lam=s.lam, mu=s.mu, iters=s.iters, step=s.step)

    def repeat_seeds(self, repeat: int) -> dict:
        """Independent integer seeds for one repeat, derived from the master seed."""
        child = np.random.SeedSequence(self.experiment.seed).spawn(repeat + 1)[repeat]
        names = ("data", "test", "tiling", "labels")
        return {k: int(s.generate_state(1)[0]) for k, s in zip(names, child.spawn(len(names)))}

    # -- (de)serialization ---------------------------------------------------

    def items(self):
        for sec in SECTIONS:
            obj = getattr(self, sec)
            for f in dataclasses.fields(obj):
                yield f"{sec}.{f.name}", getattr(obj, f.name)

    def dumps(self) -> str:
        return "".join(f"{k} = {_format_value(v)}\n" for k, v in self.items())

    def as_dict(self) -> dict:
        return {sec: dataclasses.asdict(getattr(self, sec)) for sec in SECTIONS}

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        cfg = loads(self.dumps())
        for key, value in overrides.items():
            _assign(cfg, key, value if isinstance(value, str) else _format_value(value))
        return cfg


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(raw: str, typ, key: str):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is list:
            return [_scalar(x) for x in raw.split(",") if x.strip()]
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from None


def _scalar(s: str):
    s = s.strip()
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def _assign(cfg: ExperimentConfig, key: str, raw: str):
    sec, _, name = key.partition(".")
    if sec not in SECTIONS or not name:
        raise ConfigError(f"unknown config key {key!r} (expected section.key with section in {list(SECTIONS)})")
    obj = getattr(cfg, sec)
    hints = typing.get_type_hints(type(obj))
    if name not in hints:
        raise ConfigError(f"unknown config key {key!r}; valid keys in [{sec}]: {sorted(hints)}")
    setattr(obj, name, _convert(raw, hints[name], key))


def loads(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {line!r}")
        key, _, value = line.partition("=")
        _assign(cfg, key.strip(), value)
    return cfg


def load(path) -> ExperimentConfig:
    """Read a config file, or a shipped preset by name (e.g. ``two_moons``)."""
    p = Path(path)
    if not p.exists():
        name = p.name if p.suffix == ".cfg" else p.name + ".cfg"
        preset = resources.files("mtssl").joinpath("presets", name)
        if not preset.is_file():
            raise ConfigError(f"no config file or preset named {str(path)!r}; presets: {preset_names()}")
        return loads(preset.read_text())
    return loads(p.read_text())


def preset_names() -> list:
    d = resources.files("mtssl").joinpath("presets")
    return sorted(f.name[:-4] for f in d.iterdir() if f.name.endswith(".cfg"))


def manifest_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")
