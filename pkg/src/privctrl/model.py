"""System model: private Markov input, controlled dynamics, quantized observations.

Two model kinds share one simulation interface:

* linear-gaussian — scalar error-state dynamics x' = a*x + b_y*y + b_u*u + w
  with a uniform mid-rise quantizer front end producing discrete observations.
* tabular-discrete — explicit stochastic kernels P(x'|x,y,u) and P(z|x) on
  finite alphabets, the enumeration-friendly kind every oracle test runs on.

Policies consumed by `rollout` follow a two-phase step protocol: the
quantizer phase sees the new observation and returns a distribution over
indices; the controller phase sees the sampled index (never the raw
observation) and returns a distribution over control values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import InvalidConfigError, InvalidInputError
from .rngs import substream

__all__ = [
    "MarkovChain", "UniformQuantizer", "LinearGaussianModel", "TabularModel",
    "QuadraticStageCost", "TableStageCost", "Trajectory", "TrajectoryBatch",
    "sample_private_path", "step", "observe", "rollout", "rollout_batch",
    "kp_baseline_controller", "KpBaselinePolicy",
    "model_from_config", "model_to_config", "cost_from_config",
]

_ROW_TOL = 1e-12


def _check_stochastic(mat: np.ndarray, name: str, tol: float = _ROW_TOL) -> None:
    if np.any(mat < 0):
        raise InvalidConfigError(f"{name} has negative entries")
    sums = mat.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise InvalidConfigError(f"{name} rows must sum to 1 within {tol}")


def _categorical(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling, vectorized over leading axes."""
    cdf = np.cumsum(probs, axis=-1)
    idx = np.sum(cdf < uniforms[..., None], axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


@dataclass(frozen=True)
class MarkovChain:
    """Finite private-input chain: states, transition rows, initial law."""

    states: np.ndarray
    transition: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", np.asarray(self.states, dtype=np.float64))
        object.__setattr__(self, "transition", np.asarray(self.transition, dtype=np.float64))
        object.__setattr__(self, "initial", np.asarray(self.initial, dtype=np.float64))
        n = self.states.shape[0]
        if self.transition.shape != (n, n):
            raise InvalidConfigError("transition must be square and match the state count")
        if self.initial.shape != (n,):
            raise InvalidConfigError("initial must match the state count")
        _check_stochastic(self.transition, "transition")
        _check_stochastic(self.initial[None, :], "initial")

    @property
    def n(self) -> int:
        return self.states.shape[0]

    def stationary(self) -> np.ndarray:
        """Left eigenvector of the transition matrix for eigenvalue 1."""
        vals, vecs = np.linalg.eig(self.transition.T)
        k = int(np.argmin(np.abs(vals - 1.0)))
        pi = np.real(vecs[:, k])
        pi = np.abs(pi)
        return pi / pi.sum()

    def sample_initial(self, uniforms: np.ndarray) -> np.ndarray:
        return _categorical(np.broadcast_to(self.initial, uniforms.shape + (self.n,)), uniforms)

    def sample_step(self, y_idx: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        return _categorical(self.transition[y_idx], uniforms)


def sample_private_path(chain: MarkovChain, T: int, rng: np.random.Generator) -> np.ndarray:
    """Sample y_1..y_T values from the chain."""
    if T < 1:
        raise InvalidInputError("T must be >= 1")
    idx = np.empty(T, dtype=np.intp)
    idx[0] = chain.sample_initial(rng.random(()))
    for t in range(1, T):
        idx[t] = chain.sample_step(idx[t - 1], rng.random(()))
    return chain.states[idx]


@dataclass(frozen=True)
class UniformQuantizer:
    """Uniform mid-rise quantizer on [lo, hi], saturating at the ends."""

    levels: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.levels < 2:
            raise InvalidConfigError("quantizer needs at least 2 levels")
        if not self.hi > self.lo:
            raise InvalidConfigError("quantizer range must have hi > lo")

    @property
    def delta(self) -> float:
        return (self.hi - self.lo) / self.levels

    def index(self, v: np.ndarray) -> np.ndarray:
        k = np.floor((np.asarray(v) - self.lo) / self.delta).astype(np.intp)
        return np.clip(k, 0, self.levels - 1)

    def value(self, k: np.ndarray) -> np.ndarray:
        return self.lo + (np.asarray(k, dtype=np.float64) + 0.5) * self.delta

    def edges(self) -> np.ndarray:
        """Cell boundaries with infinite outer edges (saturation)."""
        inner = self.lo + self.delta * np.arange(1, self.levels)
        return np.concatenate(([-np.inf], inner, [np.inf]))

    def cell_masses(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """P(index = k | x) for additive N(0, sigma^2) noise; shape (..., levels)."""
        e = self.edges()
        x = np.asarray(x, dtype=np.float64)[..., None]
        upper = ndtr((e[1:] - x) / sigma)
        lower = ndtr((e[:-1] - x) / sigma)
        return upper - lower


@dataclass(frozen=True)
class QuadraticStageCost:
    """c(x, u) = q*x^2 + r*u^2, terminal c(x) = q*x^2."""

    q: float = 1.0
    r: float = 0.01

    def evaluate(self, x, u):
        return self.q * np.square(x) + self.r * np.square(u)

    def terminal(self, x):
        return self.q * np.square(x)


@dataclass(frozen=True)
class TableStageCost:
    """Tabulated cost on (x-index, u-index) with a terminal column."""

    values: np.ndarray
    terminal_values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "terminal_values", np.asarray(self.terminal_values, dtype=np.float64))
        if np.any(self.values < 0) or np.any(self.terminal_values < 0):
            raise InvalidConfigError("stage costs must be nonnegative")

    def evaluate(self, x, u):
        return self.values[np.asarray(x, dtype=np.intp), np.asarray(u, dtype=np.intp)]

    def terminal(self, x):
        return self.terminal_values[np.asarray(x, dtype=np.intp)]


class LinearGaussianModel:
    """Scalar linear-Gaussian dynamics with a quantized noisy observation."""

    kind = "linear-gaussian"

    def __init__(self, a, b_y, b_u, sigma_w, sigma_v, quantizer: UniformQuantizer,
                 chain: MarkovChain, u_values, m: int, horizon: int):
        a = np.asarray(a, dtype=np.float64)
        b_y = np.asarray(b_y, dtype=np.float64)
        b_u = np.asarray(b_u, dtype=np.float64)
        if a.ndim not in (0, 2):
            raise InvalidConfigError("a must be a scalar or a square matrix")
        if a.ndim == 2:
            n = a.shape[0]
            if a.shape != (n, n) or b_y.shape[:1] != (n,) or b_u.shape[:1] != (n,):
                raise InvalidConfigError("system matrices have inconsistent shapes")
            raise InvalidConfigError("only scalar-state dynamics are simulated (n = 1)")
        if sigma_w <= 0 or sigma_v <= 0:
            raise InvalidConfigError("noise standard deviations must be positive")
        if m < 2:
            raise InvalidConfigError("quantization alphabet size M must be >= 2")
        u_values = np.asarray(u_values, dtype=np.float64)
        if u_values.size == 0:
            raise InvalidConfigError("control alphabet must be non-empty")
        self.a = float(a)
        self.b_y = float(b_y)
        self.b_u = float(b_u)
        self.sigma_w = float(sigma_w)
        self.sigma_v = float(sigma_v)
        self.quantizer = quantizer
        self.chain = chain
        self.u_values = u_values
        self.m = int(m)
        self.horizon = int(horizon)

    @property
    def nz(self) -> int:
        return self.quantizer.levels

    @property
    def nu(self) -> int:
        return self.u_values.shape[0]

    def initial_x(self, normals: np.ndarray) -> np.ndarray:
        # X_1 ~ N(0, sigma_w^2): documented default, the study never states it
        return self.sigma_w * normals

    def step_x(self, x, y_idx, u_idx, normals):
        y = self.chain.states[y_idx]
        u = self.u_values[u_idx]
        return self.a * x + self.b_y * y + self.b_u * u + self.sigma_w * normals

    def observe_x(self, x, normals):
        return self.quantizer.index(x + self.sigma_v * normals)

    def observation_masses(self, x) -> np.ndarray:
        return self.quantizer.cell_masses(x, self.sigma_v)


class TabularModel:
    """Finite-alphabet dynamics given by explicit stochastic kernels."""

    kind = "tabular-discrete"

    def __init__(self, kernel_x: np.ndarray, kernel_z: np.ndarray, initial_x: np.ndarray,
                 chain: MarkovChain, m: int, horizon: int, u_values=None):
        kernel_x = np.asarray(kernel_x, dtype=np.float64)
        kernel_z = np.asarray(kernel_z, dtype=np.float64)
        initial_x = np.asarray(initial_x, dtype=np.float64)
        if kernel_x.ndim != 4:
            raise InvalidConfigError("kernel_x must have shape (nx, ny, nu, nx)")
        nx, ny, nu, nx2 = kernel_x.shape
        if nx != nx2:
            raise InvalidConfigError("kernel_x first and last dimensions must agree")
        if ny != chain.n:
            raise InvalidConfigError("kernel_x private dimension must match the chain")
        if kernel_z.shape[0] != nx:
            raise InvalidConfigError("kernel_z must have shape (nx, nz)")
        if initial_x.shape != (nx,):
            raise InvalidConfigError("initial_x must have shape (nx,)")
        if nu == 0:
            raise InvalidConfigError("control alphabet must be non-empty")
        if m < 2:
            raise InvalidConfigError("quantization alphabet size M must be >= 2")
        _check_stochastic(kernel_x.reshape(-1, nx), "kernel_x")
        _check_stochastic(kernel_z, "kernel_z")
        _check_stochastic(initial_x[None, :], "initial_x")
        self.kernel_x = kernel_x
        self.kernel_z = kernel_z
        self.initial_x_dist = initial_x
        self.chain = chain
        self.m = int(m)
        self.horizon = int(horizon)
        self.u_values = (np.arange(nu, dtype=np.float64)
                         if u_values is None else np.asarray(u_values, dtype=np.float64))
        if self.u_values.shape != (nu,):
            raise InvalidConfigError("u_values must match the kernel control dimension")

    @property
    def nx(self) -> int:
        return self.kernel_x.shape[0]

    @property
    def nz(self) -> int:
        return self.kernel_z.shape[1]

    @property
    def nu(self) -> int:
        return self.kernel_x.shape[2]

    def initial_x(self, uniforms: np.ndarray) -> np.ndarray:
        return _categorical(np.broadcast_to(self.initial_x_dist, uniforms.shape + (self.nx,)), uniforms)

    def step_x(self, x, y_idx, u_idx, uniforms):
        rows = self.kernel_x[np.asarray(x, dtype=np.intp), y_idx, u_idx]
        return _categorical(rows, uniforms)

    def observe_x(self, x, uniforms):
        return _categorical(self.kernel_z[np.asarray(x, dtype=np.intp)], uniforms)

    def observation_masses(self, x) -> np.ndarray:
        return self.kernel_z[np.asarray(x, dtype=np.intp)]


def step(model, x, y, u, rng: np.random.Generator):
    """One dynamics transition with u given as a control value."""
    matches = np.nonzero(np.isclose(model.u_values, u, rtol=0, atol=1e-12))[0]
    if matches.size == 0:
        raise InvalidInputError(f"control value {u!r} is not in the alphabet")
    u_idx = np.full(np.shape(x), matches[0], dtype=np.intp)
    y_matches = np.nonzero(np.isclose(model.chain.states, y, rtol=0, atol=1e-12))[0]
    if y_matches.size == 0:
        raise InvalidInputError(f"private value {y!r} is not in the alphabet")
    y_idx = np.full(np.shape(x), y_matches[0], dtype=np.intp)
    if model.kind == "linear-gaussian":
        draws = rng.normal(size=np.shape(x))
    else:
        draws = rng.random(size=np.shape(x))
    return model.step_x(x, y_idx, u_idx, draws)


def observe(model, x, rng: np.random.Generator):
    """Sample the discrete observation of the state x."""
    if model.kind == "linear-gaussian":
        draws = rng.normal(size=np.shape(x))
    else:
        draws = rng.random(size=np.shape(x))
    return model.observe_x(x, draws)


@dataclass
class Trajectory:
    """One rollout: private path, states, observations, indices, controls, costs."""

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    u: np.ndarray
    stage_costs: np.ndarray
    y_idx: np.ndarray = field(default=None, repr=False)
    u_idx: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        T = len(self.y)
        for name in ("x", "z", "s", "u", "stage_costs"):
            if len(getattr(self, name)) != T:
                raise InvalidInputError(f"trajectory field {name} must have length {T}")

    @property
    def horizon(self) -> int:
        return len(self.y)

    def total_cost(self) -> float:
        return float(np.sum(self.stage_costs))


@dataclass
class TrajectoryBatch:
    """Struct-of-arrays batch of n rollouts sharing one horizon."""

    y_idx: np.ndarray    # (n, T) int
    x: np.ndarray        # (n, T)
    z: np.ndarray        # (n, T) int
    s: np.ndarray        # (n, T) int
    u_idx: np.ndarray    # (n, T) int
    stage_costs: np.ndarray  # (n, T)
    y_values: np.ndarray     # (ny,)
    u_values: np.ndarray     # (nu,)

    @property
    def n(self) -> int:
        return self.y_idx.shape[0]

    @property
    def horizon(self) -> int:
        return self.y_idx.shape[1]

    def mean_stage_cost(self) -> float:
        return float(self.stage_costs.mean())

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(
            y=self.y_values[self.y_idx[i]],
            x=self.x[i],
            z=self.z[i],
            s=self.s[i],
            u=self.u_values[self.u_idx[i]],
            stage_costs=self.stage_costs[i],
            y_idx=self.y_idx[i],
            u_idx=self.u_idx[i],
        )

    def __iter__(self) -> Iterator[Trajectory]:
        return (self.trajectory(i) for i in range(self.n))


def _check_policy_alphabets(model, policy) -> None:
    if policy.m != model.m or policy.nu != model.nu or policy.nz != model.nz:
        raise InvalidInputError(
            f"policy alphabets (M={policy.m}, nu={policy.nu}, nz={policy.nz}) do not match "
            f"model (M={model.m}, nu={model.nu}, nz={model.nz})"
        )


def rollout_batch(model, policy, cost, T: int, seed: int, n: int,
                  step_streams: Callable[[int], np.random.Generator] | None = None,
                  ) -> TrajectoryBatch:
    """Simulate n closed-loop rollouts in lockstep.

    Randomness is drawn per time step from counter-derived streams, so a
    batch is reproducible from (seed, n) alone and the realized prefix up to
    time t never depends on draws for later steps.
    """
    if T < 1:
        raise InvalidInputError("T must be >= 1")
    _check_policy_alphabets(model, policy)
    if step_streams is None:
        step_streams = lambda t: substream(seed, t)

    y_idx = np.empty((n, T), dtype=np.intp)
    z = np.empty((n, T), dtype=np.intp)
    s = np.empty((n, T), dtype=np.intp)
    u_idx = np.empty((n, T), dtype=np.intp)
    costs = np.empty((n, T), dtype=np.float64)
    continuous = model.kind == "linear-gaussian"
    x = np.empty((n, T), dtype=np.float64 if continuous else np.intp)

    state = policy.begin(n)
    xt = None
    yt = None
    for t in range(T):
        rng = step_streams(t)
        if t == 0:
            yt = model.chain.sample_initial(rng.random(n))
            xt = model.initial_x(rng.normal(size=n) if continuous else rng.random(n))
        else:
            yt = model.chain.sample_step(yt, rng.random(n))
            xt = model.step_x(xt, y_prev, u_prev, rng.normal(size=n) if continuous else rng.random(n))
        zt = model.observe_x(xt, rng.normal(size=n) if continuous else rng.random(n))
        s_probs, state = policy.quantizer_step(state, zt)
        st = _categorical(s_probs, rng.random(n))
        u_probs = policy.controller_dist(state, st)
        ut = _categorical(u_probs, rng.random(n))
        state = policy.commit(state, st, ut)

        y_idx[:, t] = yt
        x[:, t] = xt
        z[:, t] = zt
        s[:, t] = st
        u_idx[:, t] = ut
        if t == T - 1:
            costs[:, t] = cost.terminal(xt)
        else:
            costs[:, t] = cost.evaluate(xt, _u_for_cost(model, ut))
        y_prev, u_prev = yt, ut

    return TrajectoryBatch(y_idx, x, z, s, u_idx, costs,
                           y_values=model.chain.states, u_values=model.u_values)


def _u_for_cost(model, u_idx):
    # tabular costs index by u directly; continuous costs take the value
    if model.kind == "linear-gaussian":
        return model.u_values[u_idx]
    return u_idx


def rollout(model, policy, cost, T: int, seed: int,
            step_streams: Callable[[int], np.random.Generator] | None = None) -> Trajectory:
    """Simulate a single rollout (batch of one)."""
    batch = rollout_batch(model, policy, cost, T, seed, 1, step_streams=step_streams)
    return batch.trajectory(0)


class KpBaselinePolicy:
    """Proportional baseline: index pass-through quantizer, u = Kp * dequantized z.

    The motivating closed loop: the controller effectively acts on the raw
    quantized measurement, so the transmitted index must carry it verbatim
    (M >= observation level count).
    """

    def __init__(self, kp: float, model: LinearGaussianModel):
        if model.kind != "linear-gaussian":
            raise InvalidConfigError("the proportional baseline needs the linear-gaussian model")
        if model.m < model.nz:
            raise InvalidConfigError(
                f"baseline requires M >= observation levels ({model.m} < {model.nz})")
        self.kp = float(kp)
        self.m = model.m
        self.nu = model.nu
        self.nz = model.nz
        self._quantizer = model.quantizer
        self._u_values = model.u_values
        # precomputed control map per observation index: nearest alphabet member
        targets = self.kp * self._quantizer.value(np.arange(self.nz))
        self._u_map = np.argmin(np.abs(self._u_values[None, :] - targets[:, None]), axis=1)

    def begin(self, n: int):
        return {"z": np.zeros(n, dtype=np.intp)}

    def quantizer_step(self, state, z_idx):
        probs = np.zeros((len(z_idx), self.m))
        probs[np.arange(len(z_idx)), z_idx] = 1.0
        return probs, {"z": np.asarray(z_idx)}

    def controller_dist(self, state, s_idx):
        probs = np.zeros((len(s_idx), self.nu))
        probs[np.arange(len(s_idx)), self._u_map[s_idx]] = 1.0
        return probs

    def commit(self, state, s_idx, u_idx):
        return state

    # history-based protocol (enumeration, beliefs, adversary)
    def s_distribution(self, z_hist, s_hist, u_hist):
        probs = np.zeros(self.m)
        probs[z_hist[-1]] = 1.0
        return probs

    def u_distribution(self, s_hist, u_hist):
        probs = np.zeros(self.nu)
        probs[self._u_map[s_hist[-1]]] = 1.0
        return probs


def kp_baseline_controller(kp: float, model: LinearGaussianModel) -> KpBaselinePolicy:
    return KpBaselinePolicy(kp, model)


# ---------------------------------------------------------------------------
# configuration round-trip
# ---------------------------------------------------------------------------

def model_from_config(cfg: dict):
    """Build a model from its JSON configuration document."""
    kind = cfg.get("kind")
    chain = MarkovChain(
        states=np.asarray(cfg.get("y_values", list(range(len(cfg["initial"]))))),
        transition=np.asarray(cfg["transition"]),
        initial=np.asarray(cfg["initial"]),
    )
    horizon = int(cfg["T"])
    if kind == "linear-gaussian":
        lo, hi = cfg["obs_range"]
        u_levels = int(cfg["u_levels"])
        u_max = float(cfg["u_max"])
        return LinearGaussianModel(
            a=cfg["a"], b_y=cfg["b_y"], b_u=cfg["b_u"],
            sigma_w=cfg["sigma_w"], sigma_v=cfg["sigma_v"],
            quantizer=UniformQuantizer(int(cfg["obs_levels"]), float(lo), float(hi)),
            chain=chain,
            u_values=np.linspace(-u_max, u_max, u_levels),
            m=int(cfg["M"]),
            horizon=horizon,
        )
    if kind == "tabular-discrete":
        kx = cfg["kernel_x"]
        kz = cfg["kernel_z"]
        return TabularModel(
            kernel_x=np.asarray(kx["data"], dtype=np.float64).reshape(kx["dims"]),
            kernel_z=np.asarray(kz["data"], dtype=np.float64).reshape(kz["dims"]),
            initial_x=np.asarray(cfg["initial_x"]),
            chain=chain,
            m=int(cfg["M"]),
            horizon=horizon,
        )
    raise InvalidConfigError(f"unknown model kind: {kind!r}")


def model_to_config(model) -> dict:
    """Serialize a model to its JSON configuration document."""
    base = {
        "kind": model.kind,
        "transition": model.chain.transition.tolist(),
        "initial": model.chain.initial.tolist(),
        "y_values": model.chain.states.tolist(),
        "M": model.m,
        "T": model.horizon,
    }
    if model.kind == "linear-gaussian":
        base.update({
            "a": model.a, "b_y": model.b_y, "b_u": model.b_u,
            "sigma_w": model.sigma_w, "sigma_v": model.sigma_v,
            "obs_levels": model.quantizer.levels,
            "obs_range": [model.quantizer.lo, model.quantizer.hi],
            "u_levels": model.nu,
            "u_max": float(model.u_values[-1]),
        })
    else:
        base.update({
            "kernel_x": {"dims": list(model.kernel_x.shape), "data": model.kernel_x.ravel().tolist()},
            "kernel_z": {"dims": list(model.kernel_z.shape), "data": model.kernel_z.ravel().tolist()},
            "initial_x": model.initial_x_dist.tolist(),
        })
    return base


def cost_from_config(cfg: dict | None):
    """Build a stage cost from config; defaults to the quadratic study cost."""
    if cfg is None:
        return QuadraticStageCost()
    kind = cfg.get("kind", "quadratic")
    if kind == "quadratic":
        return QuadraticStageCost(q=float(cfg.get("q", 1.0)), r=float(cfg.get("r", 0.01)))
    if kind == "table":
        return TableStageCost(np.asarray(cfg["values"]), np.asarray(cfg["terminal"]))
    raise InvalidConfigError(f"unknown cost kind: {kind!r}")
