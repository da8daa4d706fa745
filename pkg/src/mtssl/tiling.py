"""Online manifold-tiling layer.

Each sample is processed in two phases. The fast phase relaxes the
excitatory activity ``h``, the inhibitory activity ``u`` and the
excitatory-to-inhibitory weights ``V`` by projected gradient
descent-ascent-descent. The slow phase applies a Hebbian update to the
feedforward weights ``W`` and a homeostatic update to the bias ``b``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

SNAPSHOT_MAGIC = "MTSSL1"


@dataclass(frozen=True)
class TilingParams:
    """Layer sizes, threshold and step sizes.

    The fast loop settles at ``h = c+ / |c+|`` with ``c = Wx - sqrt(alpha) b``
    and is stable while ``gamma_h * |c+| < 2``. The default ``gamma_h`` suits
    drives of magnitude below about 0.1, which is where unit-norm inputs and
    small initial weights put them.
    """

    m: int
    n: int
    alpha: float = 0.9
    gamma_h: float = 10.0
    gamma_u: float = 0.05
    gamma_v: float = 1.0
    # float for a constant rate, "inv_t" for 1 / (t + eta_offset)
    eta: float | str = "inv_t"
    eta_offset: int = 10
    max_fast_iters: int = 2000
    fast_tol: float = 1e-5
    warm: str = "carry"
    u_init: float = 0.1
    init: str = "samples"
    init_scale: float = 0.1

    def __post_init__(self):
        problems = []
        if self.m < 1 or self.n < 1:
            problems.append(f"m and n must be >= 1 (got m={self.m}, n={self.n})")
        if not self.alpha >= 0:
            problems.append(f"alpha must be >= 0 (got {self.alpha})")
        for name in ("gamma_h", "gamma_u", "gamma_v"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0 (got {getattr(self, name)})")
        if isinstance(self.eta, str):
            if self.eta != "inv_t":
                problems.append(f"eta must be a number or 'inv_t' (got {self.eta!r})")
        elif not self.eta >= 0:
            problems.append(f"eta must be >= 0 (got {self.eta})")
        if self.eta_offset < 1:
            problems.append(f"eta_offset must be >= 1 (got {self.eta_offset})")
        if self.max_fast_iters < 1:
            problems.append(f"max_fast_iters must be >= 1 (got {self.max_fast_iters})")
        if not self.fast_tol >= 0:
            problems.append(f"fast_tol must be >= 0 (got {self.fast_tol})")
        if self.warm not in ("carry", "reset"):
            problems.append(f"warm must be 'carry' or 'reset' (got {self.warm!r})")
        if self.init not in ("uniform", "samples"):
            problems.append(f"init must be 'uniform' or 'samples' (got {self.init!r})")
        if not self.u_init >= 0:
            problems.append(f"u_init must be >= 0 (got {self.u_init})")
        if problems:
            raise ValueError("invalid TilingParams: " + "; ".join(problems))

    def learning_rate(self, t: int) -> float:
        if self.eta == "inv_t":
            return 1.0 / (t + self.eta_offset)
        return float(self.eta)


@dataclass
class TilingState:
    W: np.ndarray
    b: np.ndarray
    t: int = 0

    def copy(self) -> "TilingState":
        return TilingState(self.W.copy(), self.b.copy(), self.t)


@dataclass
class TilingActivity:
    h: np.ndarray
    u: np.ndarray
    V: np.ndarray
    iterations: int = 0
    converged: bool = True

    @classmethod
    def zeros(cls, m: int) -> "TilingActivity":
        return cls(np.zeros(m), np.zeros(m), np.zeros((m, m)))

    @classmethod
    def fresh(cls, params: TilingParams) -> "TilingActivity":
        """Starting point for a cold relaxation.

        ``u`` is seeded at ``u_init``: from ``u = V = 0`` the inhibitory
        loop never switches on and ``h`` grows without bound.
        """
        act = cls.zeros(params.m)
        act.u[:] = params.u_init
        return act

    def copy(self) -> "TilingActivity":
        return TilingActivity(self.h.copy(), self.u.copy(), self.V.copy(),
                              self.iterations, self.converged)


def _check_params(params: TilingParams):
    if not isinstance(params, TilingParams):
        raise TypeError("params must be TilingParams")


def _kmeanspp_rows(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    # D^2-weighted seeding; duplicates fall back to uniform picks
    T = data.shape[0]
    idx = [int(rng.integers(T))]
    d2 = np.full(T, np.inf)
    for _ in range(k - 1):
        d2 = np.minimum(d2, ((data - data[idx[-1]]) ** 2).sum(axis=1))
        total = d2.sum()
        if total > 0:
            idx.append(int(rng.choice(T, p=d2 / total)))
        else:
            idx.append(int(rng.integers(T)))
    return data[idx]


def init_tiling(params: TilingParams, seed, data: np.ndarray | None = None) -> TilingState:
    """Fresh layer state.

    ``init="uniform"`` draws W i.i.d. from U[0, init_scale] with b = 0.
    ``init="samples"`` seeds each row of W with a scaled input vector picked
    from ``data`` by D^2 sampling and sets b to match, so each channel starts
    as a cap around its seed point. Uniform seeding tends to leave parts of
    the manifold uncovered.
    """
    _check_params(params)
    rng = np.random.default_rng(seed)
    if params.init == "uniform":
        W = rng.uniform(0.0, params.init_scale, size=(params.m, params.n))
        b = np.zeros(params.m)
    else:
        if data is None:
            raise ValueError("init='samples' requires a data pool")
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != params.n or data.shape[0] < 1:
            raise ValueError(f"data pool must have shape (T>=1, {params.n}), got {data.shape}")
        W = params.init_scale * _kmeanspp_rows(data, params.m, rng)
        b = np.full(params.m, params.init_scale * math.sqrt(params.alpha))
    return TilingState(np.ascontiguousarray(W, dtype=float), b.astype(float), 0)


def drive(state: TilingState, x: np.ndarray, params: TilingParams) -> np.ndarray:
    """Feedforward input minus bias, ``W x - sqrt(alpha) b``."""
    return np.ascontiguousarray(state.W @ x - math.sqrt(params.alpha) * state.b)


def _check_x(state: TilingState, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (state.W.shape[1],):
        raise ValueError(f"x has shape {x.shape}, expected ({state.W.shape[1]},)")
    return x


def fast_step(state: TilingState, act: TilingActivity, x, params: TilingParams) -> TilingActivity:
    """One projected descent-ascent-descent step; ``act`` is not modified."""
    x = _check_x(state, x)
    m = state.W.shape[0]
    if act.h.shape != (m,) or act.u.shape != (m,) or act.V.shape != (m, m):
        raise ValueError("activity shapes do not match the layer")
    out = TilingActivity(
        np.array(act.h, dtype=float), np.array(act.u, dtype=float),
        np.array(act.V, dtype=float, order="C"), 1, True,
    )
    kernels.fast_step_inplace(drive(state, x, params), out.h, out.u, out.V,
                              params.gamma_h, params.gamma_u, params.gamma_v)
    return out


def infer(state: TilingState, x, params: TilingParams,
          warm: TilingActivity | None = None) -> TilingActivity:
    """Relax the fast variables for input ``x``.

    With ``warm`` given and ``params.warm == "carry"``, ``u`` and ``V`` start
    from ``warm`` and ``h`` from zero; otherwise from :meth:`TilingActivity.fresh`.
    Stops when the largest change in ``h`` or ``u`` drops below ``fast_tol``
    or after ``max_fast_iters`` steps; ``converged`` records which.
    """
    x = _check_x(state, x)
    m = params.m
    if warm is not None and params.warm == "carry":
        act = TilingActivity(np.zeros(m), np.array(warm.u, dtype=float),
                             np.array(warm.V, dtype=float, order="C"))
    else:
        act = TilingActivity.fresh(params)
    it, conv = kernels.relax_inplace(drive(state, x, params), act.h, act.u, act.V,
                                     params.gamma_h, params.gamma_u, params.gamma_v,
                                     params.max_fast_iters, params.fast_tol)
    act.iterations = int(it)
    act.converged = bool(conv)
    return act


def slow_update(state: TilingState, h, x, params: TilingParams) -> TilingState:
    """Hebbian step on W and homeostatic step on b; returns a new state."""
    x = _check_x(state, x)
    h = np.asarray(h, dtype=float)
    eta = params.learning_rate(state.t)
    W = state.W + eta * (np.outer(h, x) - state.W)
    b = state.b + eta * (math.sqrt(params.alpha) * h - state.b)
    return TilingState(W, b, state.t + 1)


def receptive_field_probe(state: TilingState, probes: Sequence, params: TilingParams) -> np.ndarray:
    """Row i holds the settled activity for ``probes[i]`` (cold start each)."""
    rows = [infer(state, p, params).h for p in probes]
    if not rows:
        return np.zeros((0, params.m))
    return np.vstack(rows)


def inner_objective(state: TilingState, x, h, u, V, params: TilingParams) -> float:
    """Per-sample saddle objective of the fast phase.

    ``-2 h.Wx + 2 sqrt(alpha) h.b - |u|^2 + 2 u.Vh - |V|_F^2``.
    ``fast_step`` moves ``h`` down the gradient and ``u``, ``V`` up it,
    each increment being half the gradient. Maximizing over ``V`` gives
    ``|u|^2 (|h|^2 - 1)``, so ``u`` acts as a multiplier for ``|h| <= 1``.
    """
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    u = np.asarray(u, dtype=float)
    V = np.asarray(V, dtype=float)
    return float(
        -2.0 * h @ (state.W @ x)
        + 2.0 * math.sqrt(params.alpha) * h @ state.b
        - u @ u
        + 2.0 * u @ (V @ h)
        - np.sum(V * V)
    )


def inner_gradients(state: TilingState, x, h, u, V, params: TilingParams):
    """Analytic gradients of :func:`inner_objective` in ``(h, u, V)``."""
    x = np.asarray(x, dtype=float)
    gh = -2.0 * (state.W @ x) + 2.0 * math.sqrt(params.alpha) * state.b + 2.0 * V.T @ u
    gu = -2.0 * u + 2.0 * V @ h
    gV = 2.0 * np.outer(u, h) - 2.0 * V
    return gh, gu, gV


def train(state: TilingState, inputs, params: TilingParams, passes: int = 1,
          warm: TilingActivity | None = None) -> tuple[TilingState, TilingActivity | None]:
    """Unsupervised passes over ``inputs``; returns the state and last activity."""
    for _ in range(passes):
        for x in inputs:
            warm = infer(state, x, params, warm)
            state = slow_update(state, warm.h, x, params)
    return state, warm


# -- snapshots ---------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dumps_snapshot(params: TilingParams, state: TilingState, ssl_w: np.ndarray | None = None,
                   extra: dict | None = None) -> str:
    lines = [SNAPSHOT_MAGIC, "params " + json.dumps(asdict(params), sort_keys=True)]
    if extra:
        lines.append("extra " + json.dumps(extra, sort_keys=True))
    lines.append(f"t {state.t}")
    m, n = state.W.shape
    lines.append(f"W {m} {n}")
    lines.extend(" ".join(_fmt(v) for v in row) for row in state.W)
    lines.append(f"b {m}")
    lines.append(" ".join(_fmt(v) for v in state.b))
    if ssl_w is not None:
        lines.append(f"w {len(ssl_w)}")
        lines.append(" ".join(_fmt(v) for v in ssl_w))
    return "\n".join(lines) + "\n"


@dataclass
class Snapshot:
    params: TilingParams
    state: TilingState
    ssl_w: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def loads_snapshot(text: str) -> Snapshot:
    lines = text.splitlines()
    if not lines or lines[0].strip() != SNAPSHOT_MAGIC:
        raise ValueError(f"not a tiling snapshot (missing {SNAPSHOT_MAGIC} header)")
    params = extra = state_t = W = b = w = None
    i = 1
    while i < len(lines):
        key, _, rest = lines[i].partition(" ")
        if key == "params":
            params = TilingParams(**json.loads(rest))
        elif key == "extra":
            extra = json.loads(rest)
        elif key == "t":
            state_t = int(rest)
        elif key == "W":
            m, n = (int(v) for v in rest.split())
            W = np.array([[float(v) for v in lines[i + 1 + r].split()] for r in range(m)]).reshape(m, n)
            i += m
        elif key == "b":
            b = np.array([float(v) for v in lines[i + 1].split()])
            i += 1
        elif key == "w":
            w = np.array([float(v) for v in lines[i + 1].split()])
            i += 1
        elif key:
            raise ValueError(f"unknown snapshot section {key!r}")
        i += 1
    if params is None or W is None or b is None or state_t is None:
        raise ValueError("incomplete snapshot")
    return Snapshot(params, TilingState(W, b, state_t), w, extra or {})


def save_snapshot(path, params: TilingParams, state: TilingState, ssl_w=None, extra=None):
    Path(path).write_text(dumps_snapshot(params, state, ssl_w, extra))


def load_snapshot(path) -> Snapshot:
    return loads_snapshot(Path(path).read_text())
