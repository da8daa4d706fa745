"""Seeded synthetic streams: two moons, Swiss-roll chessboard, unit square.

Generators return lists of :class:`Sample`. Raw coordinates are centred,
then optionally lifted onto the unit sphere by inverse stereographic
projection (``embed="sphere"``). Under that lift, thresholding inner
products picks out balls in the original coordinates, which is what the
tiling layer needs to form localized receptive fields.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

KINDS = ("two_moons", "swiss_chessboard", "unit_square")

ROLL_PHI0 = 1.5 * math.pi
ROLL_PHI1 = 4.5 * math.pi
ROLL_HEIGHT = 21.0


@dataclass
class Sample:
    x: np.ndarray
    z_true: int
    z: int = 0
    index: int = 0

    @property
    def labeled(self) -> bool:
        return self.z != 0


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "two_moons"
    size: int = 2000
    noise: float = 0.05
    granularity: float = 0.5
    seed: int = 0
    embed: str = "sphere"
    embed_scale: float = 0.5
    # unit square only: stream positions of the two corner points
    corner_positions: tuple = (10, 20)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; expected one of {KINDS}")
        if self.size < 1:
            raise ValueError(f"dataset size must be >= 1 (got {self.size})")
        if not self.noise >= 0:
            raise ValueError(f"noise must be >= 0 (got {self.noise})")
        if self.kind == "swiss_chessboard" and not self.granularity > 0:
            raise ValueError(f"granularity must be > 0 (got {self.granularity})")
        if self.embed not in ("sphere", "none"):
            raise ValueError(f"embed must be 'sphere' or 'none' (got {self.embed!r})")
        if not self.embed_scale > 0:
            raise ValueError(f"embed_scale must be > 0 (got {self.embed_scale})")

    @property
    def input_dim(self) -> int:
        raw = 3 if self.kind == "swiss_chessboard" else 2
        return raw + 1 if self.embed == "sphere" else raw


# -- geometry -----------------------------------------------------------------

def moon_point(theta, cls: int) -> np.ndarray:
    """Noise-free two-moons coordinates for angle ``theta`` in [0, pi]."""
    theta = np.asarray(theta, dtype=float)
    if cls == 1:
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=-1)


MOONS_CENTER = np.array([0.5, 0.25])


def _spiral_length(phi):
    return 0.5 * (phi * np.sqrt(1.0 + phi * phi) + np.arcsinh(phi))


def roll_arc_fraction(s) -> np.ndarray:
    """Normalized arc length along the roll for the uniform parameter ``s``."""
    phi = ROLL_PHI0 * (1.0 + 2.0 * np.asarray(s, dtype=float))
    l0, l1 = _spiral_length(ROLL_PHI0), _spiral_length(ROLL_PHI1)
    return (_spiral_length(phi) - l0) / (l1 - l0)


def roll_point(s, v) -> np.ndarray:
    """Swiss roll embedding of intrinsic coordinates, scaled to unit radius."""
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    phi = ROLL_PHI0 * (1.0 + 2.0 * s)
    pts = np.stack([phi * np.cos(phi), (v - 0.5) * ROLL_HEIGHT, phi * np.sin(phi)], axis=-1)
    return pts / ROLL_PHI1


def chessboard_label(s_arc, v_arc, g: float):
    parity = (np.floor(np.asarray(s_arc) / g) + np.floor(np.asarray(v_arc) / g)) % 2
    return np.where(parity == 0, 1, -1)


def sphere_lift(X, scale: float) -> np.ndarray:
    """Inverse stereographic projection of rows of ``X`` onto the unit sphere."""
    Z = np.atleast_2d(np.asarray(X, dtype=float)) / scale
    r2 = np.sum(Z * Z, axis=1, keepdims=True)
    return np.hstack([2.0 * Z, r2 - 1.0]) / (1.0 + r2)


def embed(X, spec: DatasetSpec) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if spec.embed == "sphere":
        return sphere_lift(X, spec.embed_scale)
    return X.copy()


# -- generators ---------------------------------------------------------------

def _check_kind(spec: DatasetSpec, kind: str):
    if spec.kind != kind:
        raise ValueError(f"spec.kind is {spec.kind!r}, expected {kind!r}")


def _samples(X, labels, z=None) -> list[Sample]:
    if z is None:
        z = np.zeros(len(labels), dtype=int)
    return [Sample(np.array(x), int(c), int(zz), i) for i, (x, c, zz) in enumerate(zip(X, labels, z))]


def two_moons_raw(spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Centred 2D coordinates and classes, before any lift."""
    _check_kind(spec, "two_moons")
    rng = np.random.default_rng(spec.seed)
    T = spec.size
    labels = np.where(np.arange(T) < (T + 1) // 2, 1, -1)
    rng.shuffle(labels)
    theta = rng.uniform(0.0, math.pi, T)
    X = np.where(labels[:, None] == 1, moon_point(theta, 1), moon_point(theta, -1))
    X = X + rng.normal(0.0, spec.noise, X.shape)
    return X - MOONS_CENTER, labels


def gen_two_moons(spec: DatasetSpec) -> list[Sample]:
    X, labels = two_moons_raw(spec)
    return _samples(embed(X, spec), labels)


def swiss_chessboard_raw(spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Roll coordinates, classes and intrinsic (s_arc, v) pairs."""
    _check_kind(spec, "swiss_chessboard")
    rng = np.random.default_rng(spec.seed)
    T = spec.size
    s = rng.uniform(0.0, 1.0, T)
    v = rng.uniform(0.0, 1.0, T)
    X = roll_point(s, v)
    if spec.noise > 0:
        X = X + rng.normal(0.0, spec.noise, X.shape)
    s_arc = roll_arc_fraction(s)
    labels = chessboard_label(s_arc, v, spec.granularity)
    return X, labels, np.column_stack([s_arc, v])


def gen_swiss_chessboard(spec: DatasetSpec) -> list[Sample]:
    X, labels, _ = swiss_chessboard_raw(spec)
    return _samples(embed(X, spec), labels)


SQUARE_CORNERS = ((np.array([0.05, 0.05]), 1), (np.array([0.95, 0.95]), -1))


def unit_square_raw(spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    _check_kind(spec, "unit_square")
    rng = np.random.default_rng(spec.seed)
    T = spec.size
    P = rng.uniform(0.0, 1.0, (T, 2))
    # reference split along the anti-diagonal, used only for accounting
    labels = np.where(P.sum(axis=1) < 1.0, 1, -1)
    z = np.zeros(T, dtype=int)
    P, labels, z = list(P), list(labels), list(z)
    for (corner, cls), pos in sorted(zip(SQUARE_CORNERS, spec.corner_positions), key=lambda t: t[1]):
        pos = min(int(pos), len(P))
        P.insert(pos, corner.copy())
        labels.insert(pos, cls)
        z.insert(pos, cls)
    return np.array(P) - 0.5, np.array(labels), np.array(z)


def gen_unit_square(spec: DatasetSpec) -> list[Sample]:
    X, labels, z = unit_square_raw(spec)
    return _samples(embed(X, spec), labels, z)


def generate(spec: DatasetSpec) -> list[Sample]:
    return {
        "two_moons": gen_two_moons,
        "swiss_chessboard": gen_swiss_chessboard,
        "unit_square": gen_unit_square,
    }[spec.kind](spec)


# -- label masking ------------------------------------------------------------

@dataclass(frozen=True)
class FixedPoints:
    indices: tuple = ()


@dataclass(frozen=True)
class RandomFraction:
    p: float = 0.05


@dataclass(frozen=True)
class RandomCount:
    count: int = 100


def mask_labels(samples: Sequence[Sample], policy, seed=None) -> list[Sample]:
    """Copy of ``samples`` with ``z = z_true`` at the selected positions, 0 elsewhere."""
    T = len(samples)
    if isinstance(policy, FixedPoints):
        chosen = set()
        for i in policy.indices:
            if not 0 <= int(i) < T:
                raise IndexError(f"label index {i} out of range for stream of length {T}")
            chosen.add(int(i))
    elif isinstance(policy, RandomFraction):
        if not 0.0 <= policy.p <= 1.0:
            raise ValueError(f"label fraction must lie in [0, 1] (got {policy.p})")
        k = int(round(policy.p * T))
        chosen = set(np.random.default_rng(seed).choice(T, size=k, replace=False).tolist())
    elif isinstance(policy, RandomCount):
        if not 0 <= policy.count <= T:
            raise ValueError(f"label count must lie in [0, {T}] (got {policy.count})")
        chosen = set(np.random.default_rng(seed).choice(T, size=policy.count, replace=False).tolist())
    else:
        raise TypeError(f"unknown label policy {policy!r}")
    return [Sample(s.x, s.z_true, s.z_true if i in chosen else 0, s.index)
            for i, s in enumerate(samples)]


def early_per_class(samples: Sequence[Sample], starts=(10, 20), classes=(1, -1)) -> FixedPoints:
    """One labeled point per class: the first of class ``classes[k]`` at or after ``starts[k]``."""
    picked = []
    for start, cls in zip(starts, classes):
        for i in range(int(start), len(samples)):
            if samples[i].z_true == cls and i not in picked:
                picked.append(i)
                break
        else:
            raise ValueError(f"no sample of class {cls} at or after position {start}")
    return FixedPoints(tuple(picked))


def stack_inputs(samples: Sequence[Sample]) -> np.ndarray:
    return np.vstack([s.x for s in samples])


# -- CSV ----------------------------------------------------------------------

def write_csv(path, samples: Sequence[Sample]):
    n = len(samples[0].x) if samples else 0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index"] + [f"x{i}" for i in range(n)] + ["z_true", "z"])
        for s in samples:
            wr.writerow([s.index] + [format(float(v), ".17g") for v in s.x] + [s.z_true, s.z])


def read_csv(path) -> list[Sample]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header[0] != "index" or header[-2:] != ["z_true", "z"]:
            raise ValueError(f"{path}: unexpected header {header}")
        n = len(header) - 3
        out = []
        for row in rd:
            out.append(Sample(np.array([float(v) for v in row[1:1 + n]]),
                              int(row[-2]), int(row[-1]), int(row[0])))
    return out
