"""Parameterized stochastic joint quantizer-controller.

The policy factorizes as pi(s_t, u_t | history) = pi_e(s_t | z^t, s^{t-1},
u^{t-1}) * pi_c(u_t | s^t, u^{t-1}) and is realized by two single-layer
gated recurrences with separate parameters:

* the quantizer stream consumes (z_t, s_{t-1}, u_{t-1}) and feeds the
  index head (M logits);
* the controller stream consumes (s_{t-1}, u_{t-1}) only, and the control
  head reads its state concatenated with one-hot s_t, so control actions
  depend on the raw observation solely through the transmitted indices.

All math runs through the autodiff ops, which dispatch on argument type:
ndarray in, ndarray out (rollout-time, any float dtype); Node in, Node out
(taped, for gradients).
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import InvalidConfigError, InvalidInputError
from .rngs import substream

__all__ = [
    "ArchDescriptor", "PolicyOutput", "RecurrentJointPolicy", "TablePolicy",
    "GreedyControllerPolicy", "HistoryPolicyEvaluator", "init_policy",
    "sample_action", "make_deterministic_controller_head", "theta_to_arrays",
    "evaluator_for_theta", "save_checkpoint", "load_checkpoint",
]


@dataclass(frozen=True)
class ArchDescriptor:
    """Input widths and layer sizes; fixes the parameter layout."""

    nz: int
    m: int
    nu: int
    hidden: int = 32

    def __post_init__(self):
        if min(self.nz, self.nu, self.hidden) < 1 or self.m < 2:
            raise InvalidConfigError("architecture widths must be >= 1 (and M >= 2)")

    @property
    def enc_in(self) -> int:
        return self.nz + self.m + self.nu

    @property
    def ctl_in(self) -> int:
        return self.m + self.nu

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        h = self.hidden
        return {
            "enc_Wf": (self.enc_in + h, h), "enc_bf": (h,),
            "enc_Wc": (self.enc_in + h, h), "enc_bc": (h,),
            "ctl_Wf": (self.ctl_in + h, h), "ctl_bf": (h,),
            "ctl_Wc": (self.ctl_in + h, h), "ctl_bc": (h,),
            "head_s_W": (h, self.m), "head_s_b": (self.m,),
            "head_u_W": (h + self.m, self.nu), "head_u_b": (self.nu,),
        }

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())


@dataclass
class PolicyOutput:
    """One decision step: index distribution, per-index control rows, state."""

    s_dist: np.ndarray          # (M,)
    u_dist: np.ndarray          # (M, nu); row k conditions on s_t = k
    hidden: tuple               # (quantizer state, controller state)


def _one_hot(idx, size: int, dtype=np.float64) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.intp)
    out = np.zeros(idx.shape + (size,), dtype=dtype)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def _null_or_one_hot(idx, size: int, batch: int, dtype=np.float64) -> np.ndarray:
    # the t = 1 convention: absent symbols encode as all-zero vectors
    if idx is None:
        return np.zeros((batch, size), dtype=dtype)
    return _one_hot(idx, size, dtype=dtype)


def _cell(Wf, bf, Wc, bc, h, e):
    """Single gated recurrence: update gate + candidate."""
    he = ad.concat([e, h], axis=-1)
    f = ad.sigmoid(ad.matmul(he, Wf) + bf)
    hc = ad.concat([e, f * h], axis=-1)
    c = ad.tanh(ad.matmul(hc, Wc) + bc)
    return (1.0 - f) * h + f * c


class RecurrentJointPolicy:
    """Recurrent stochastic joint policy over (s_t, u_t)."""

    def __init__(self, arch: ArchDescriptor, params: ad.ParameterSet):
        expected = arch.param_shapes()
        if params.shapes() != expected:
            raise InvalidConfigError("parameter set does not match the architecture descriptor")
        if not np.all(np.isfinite(params.flat())):
            raise InvalidConfigError("policy parameters must be finite")
        self.arch = arch
        self.params = params
        self._caches: dict = {}

    # alphabet properties used by rollout/enumeration plumbing
    @property
    def m(self) -> int:
        return self.arch.m

    @property
    def nu(self) -> int:
        return self.arch.nu

    @property
    def nz(self) -> int:
        return self.arch.nz

    @property
    def theta(self) -> np.ndarray:
        return self.params.flat()

    def set_theta(self, theta: np.ndarray) -> None:
        if not np.all(np.isfinite(theta)):
            raise InvalidInputError("policy parameters must be finite")
        self.params.assign_flat(theta)
        self._caches = {}

    def copy(self) -> "RecurrentJointPolicy":
        return RecurrentJointPolicy(self.arch, self.params.copy())

    # ------------------------------------------------------------------
    # core math, dtype/tape generic
    # ------------------------------------------------------------------

    def _p(self, nodes, name):
        return self.params[name] if nodes is None else nodes[name]

    def _enc_step(self, nodes, h, z_idx, s_prev, u_prev, dtype=np.float64):
        batch = ad.value_of(h).shape[0]
        e = np.concatenate([
            _one_hot(z_idx, self.arch.nz, dtype),
            _null_or_one_hot(s_prev, self.arch.m, batch, dtype),
            _null_or_one_hot(u_prev, self.arch.nu, batch, dtype),
        ], axis=-1)
        return _cell(self._p(nodes, "enc_Wf"), self._p(nodes, "enc_bf"),
                     self._p(nodes, "enc_Wc"), self._p(nodes, "enc_bc"), h, e)

    def _ctl_step(self, nodes, g, s_prev, u_prev, dtype=np.float64):
        batch = ad.value_of(g).shape[0]
        d = np.concatenate([
            _null_or_one_hot(s_prev, self.arch.m, batch, dtype),
            _null_or_one_hot(u_prev, self.arch.nu, batch, dtype),
        ], axis=-1)
        return _cell(self._p(nodes, "ctl_Wf"), self._p(nodes, "ctl_bf"),
                     self._p(nodes, "ctl_Wc"), self._p(nodes, "ctl_bc"), g, d)

    def _s_logits(self, nodes, h):
        return ad.matmul(h, self._p(nodes, "head_s_W")) + self._p(nodes, "head_s_b")

    def _u_logits(self, nodes, g, s_idx, dtype=np.float64):
        gs = ad.concat([g, _one_hot(s_idx, self.arch.m, dtype)], axis=-1)
        return ad.matmul(gs, self._p(nodes, "head_u_W")) + self._p(nodes, "head_u_b")

    # ------------------------------------------------------------------
    # spec-level single-step interface
    # ------------------------------------------------------------------

    def forward(self, z_t: int, s_prev: int | None, u_prev: int | None,
                hidden: tuple | None = None) -> PolicyOutput:
        """One decision step; returns both heads and the advanced state."""
        a = self.arch
        if not (0 <= int(z_t) < a.nz):
            raise InvalidInputError(f"observation index {z_t} outside [0, {a.nz})")
        if s_prev is not None and not (0 <= int(s_prev) < a.m):
            raise InvalidInputError(f"index {s_prev} outside [0, {a.m})")
        if u_prev is not None and not (0 <= int(u_prev) < a.nu):
            raise InvalidInputError(f"control index {u_prev} outside [0, {a.nu})")
        if hidden is None:
            hidden = (np.zeros((1, a.hidden)), np.zeros((1, a.hidden)))
        h, g = hidden
        sp = None if s_prev is None else np.asarray([s_prev])
        up = None if u_prev is None else np.asarray([u_prev])
        h = self._enc_step(None, h, np.asarray([z_t]), sp, up)
        g = self._ctl_step(None, g, sp, up)
        s_dist = ad.softmax(self._s_logits(None, h))[0]
        all_s = np.arange(a.m)
        u_rows = ad.softmax(self._u_logits(None, np.repeat(g, a.m, axis=0), all_s))
        return PolicyOutput(s_dist=s_dist, u_dist=u_rows, hidden=(h, g))

    # ------------------------------------------------------------------
    # vectorized rollout protocol
    # ------------------------------------------------------------------

    def begin(self, n: int):
        a = self.arch
        return {"h": np.zeros((n, a.hidden)), "g": np.zeros((n, a.hidden)),
                "s": None, "u": None}

    def quantizer_step(self, state, z_idx):
        h = self._enc_step(None, state["h"], z_idx, state["s"], state["u"])
        g = self._ctl_step(None, state["g"], state["s"], state["u"])
        s_probs = ad.softmax(self._s_logits(None, h))
        return s_probs, {"h": h, "g": g, "s": state["s"], "u": state["u"]}

    def controller_dist(self, state, s_idx):
        return ad.softmax(self._u_logits(None, state["g"], s_idx))

    def commit(self, state, s_idx, u_idx):
        return {"h": state["h"], "g": state["g"], "s": np.asarray(s_idx), "u": np.asarray(u_idx)}

    # adversary particle-filter protocol: quantizer stream only
    def filter_begin(self, n: int):
        return np.zeros((n, self.arch.hidden))

    def filter_step(self, fstate, z_idx, s_prev: int | None, u_prev: int | None):
        n = fstate.shape[0]
        sp = None if s_prev is None else np.full(n, s_prev, dtype=np.intp)
        up = None if u_prev is None else np.full(n, u_prev, dtype=np.intp)
        h = self._enc_step(None, fstate, z_idx, sp, up)
        return ad.softmax(self._s_logits(None, h)), h

    # ------------------------------------------------------------------
    # history-tuple protocol (enumeration, beliefs); prefix-cached
    # ------------------------------------------------------------------

    def _default_evaluator(self) -> "HistoryPolicyEvaluator":
        ev = self._caches.get("evaluator")
        if ev is None:
            ev = HistoryPolicyEvaluator(self.arch, dict(self.params.as_arrays()))
            self._caches["evaluator"] = ev
        return ev

    def s_distribution(self, z_hist: Sequence[int], s_hist: Sequence[int],
                       u_hist: Sequence[int]) -> np.ndarray:
        return self._default_evaluator().s_distribution(z_hist, s_hist, u_hist)

    def u_distribution(self, s_hist: Sequence[int], u_hist: Sequence[int]) -> np.ndarray:
        return self._default_evaluator().u_distribution(s_hist, u_hist)

    # ------------------------------------------------------------------
    # taped objectives
    # ------------------------------------------------------------------

    def taped_objective(self, z: np.ndarray, s: np.ndarray, u: np.ndarray, *,
                        traj_weights: np.ndarray | None = None,
                        step_weights: np.ndarray | None = None,
                        quantizer_targets: np.ndarray | None = None,
                        include_controller: bool = True):
        """Weighted sum of step log-probabilities as a tape scalar.

        The recurrence replays the recorded context (z, s, u), all (B, T)
        index arrays. The quantizer head scores the recorded s_t, or
        `quantizer_targets` when given (imitation pretraining). Weights are
        per trajectory, or per (trajectory, step) via `step_weights`.
        Returns the scalar Node and the parameter Nodes to differentiate
        against.
        """
        z = np.asarray(z, dtype=np.intp)
        s = np.asarray(s, dtype=np.intp)
        u = np.asarray(u, dtype=np.intp)
        if not (z.shape == s.shape == u.shape) or z.ndim != 2:
            raise InvalidInputError("context arrays must share shape (B, T)")
        B, T = z.shape
        w = np.ones(B) if traj_weights is None else np.asarray(traj_weights, dtype=np.float64)
        if w.shape != (B,):
            raise InvalidInputError("traj_weights must have shape (B,)")
        if step_weights is not None:
            step_weights = np.asarray(step_weights, dtype=np.float64)
            if step_weights.shape != (B, T):
                raise InvalidInputError("step_weights must have shape (B, T)")
        nodes = self.params.as_nodes()
        h = np.zeros((B, self.arch.hidden))
        g = np.zeros((B, self.arch.hidden))
        total = ad.constant(0.0)
        s_prev = u_prev = None
        for t in range(T):
            h = self._enc_step(nodes, h, z[:, t], s_prev, u_prev)
            scored = s[:, t] if quantizer_targets is None else quantizer_targets[:, t]
            log_s = ad.pick(ad.log_softmax(self._s_logits(nodes, h)), scored)
            step_term = log_s
            if include_controller:
                g = self._ctl_step(nodes, g, s_prev, u_prev)
                log_u = ad.pick(ad.log_softmax(self._u_logits(nodes, g, s[:, t])), u[:, t])
                step_term = step_term + log_u
            wt = w if step_weights is None else step_weights[:, t]
            total = total + ad.sum_all(step_term * wt)
            s_prev, u_prev = s[:, t], u[:, t]
        return total, nodes

    def log_prob_gradient(self, z: Sequence[int], s: Sequence[int], u: Sequence[int]):
        """(log pi(tau), d/d theta log pi(tau)) for one trajectory context."""
        z = np.asarray(z, dtype=np.intp)[None, :]
        s = np.asarray(s, dtype=np.intp)[None, :]
        u = np.asarray(u, dtype=np.intp)[None, :]
        total, nodes = self.taped_objective(z, s, u)
        grads = ad.backward_map(total)
        return float(total.value), self.params.flat_grad(nodes, grads)


class HistoryPolicyEvaluator:
    """History-tuple evaluation of the recurrent policy with explicit arrays.

    Works in any float dtype (the arrays' dtype), which is what the
    finite-difference oracle needs: perturbed parameters must not round
    through float64 storage. Hidden states are cached per history prefix,
    so enumerating a history tree costs one cell step per node.
    """

    def __init__(self, arch: ArchDescriptor, arrays: dict[str, np.ndarray]):
        self.arch = arch
        self.arrays = arrays
        self.dtype = next(iter(arrays.values())).dtype
        self._hid_e: dict = {}
        self._hid_c: dict = {}
        # reuse the shared forward math through a parameter-dict "tape"
        self._host = RecurrentJointPolicy.__new__(RecurrentJointPolicy)
        self._host.arch = arch

    def _hidden_e(self, z_hist: tuple, s_hist: tuple, u_hist: tuple):
        t = len(z_hist)
        if len(s_hist) != t - 1 or len(u_hist) != t - 1:
            raise InvalidInputError("quantizer history lengths must be (t, t-1, t-1)")
        key = (z_hist, s_hist, u_hist)
        hit = self._hid_e.get(key)
        if hit is not None:
            return hit
        if t == 1:
            h = np.zeros((1, self.arch.hidden), dtype=self.dtype)
            sp = up = None
        else:
            h = self._hidden_e(z_hist[:-1], s_hist[:-1], u_hist[:-1])
            sp = np.asarray([s_hist[-1]])
            up = np.asarray([u_hist[-1]])
        h = self._host._enc_step(self.arrays, h, np.asarray([z_hist[-1]]), sp, up, self.dtype)
        self._hid_e[key] = h
        return h

    def _hidden_c(self, s_hist: tuple, u_hist: tuple):
        key = (s_hist, u_hist)
        hit = self._hid_c.get(key)
        if hit is not None:
            return hit
        if len(s_hist) == 0:
            g = np.zeros((1, self.arch.hidden), dtype=self.dtype)
        else:
            g = self._hidden_c(s_hist[:-1], u_hist[:-1])
            g = self._host._ctl_step(self.arrays, g, np.asarray([s_hist[-1]]),
                                     np.asarray([u_hist[-1]]), self.dtype)
        self._hid_c[key] = g
        return g

    def s_distribution(self, z_hist, s_hist, u_hist) -> np.ndarray:
        h = self._hidden_e(tuple(z_hist), tuple(s_hist), tuple(u_hist))
        return ad.softmax(self._host._s_logits(self.arrays, h))[0]

    def u_distribution(self, s_hist, u_hist) -> np.ndarray:
        s_hist, u_hist = tuple(s_hist), tuple(u_hist)
        if len(s_hist) != len(u_hist) + 1:
            raise InvalidInputError("controller history lengths must be (t, t-1)")
        g = self._hidden_c(s_hist[:-1], u_hist)
        return ad.softmax(self._host._u_logits(self.arrays, g, np.asarray([s_hist[-1]]),
                                               self.dtype))[0]


def theta_to_arrays(arch: ArchDescriptor, theta: np.ndarray, dtype=np.float64) -> dict[str, np.ndarray]:
    """Unflatten a parameter vector in the canonical layout, any float dtype."""
    theta = np.asarray(theta, dtype=dtype)
    if theta.shape != (arch.param_count(),):
        raise InvalidInputError(f"expected {arch.param_count()} parameters")
    arrays = {}
    offset = 0
    for name, shape in arch.param_shapes().items():
        size = int(np.prod(shape))
        arrays[name] = theta[offset:offset + size].reshape(shape).copy()
        offset += size
    return arrays


def evaluator_for_theta(arch: ArchDescriptor, theta: np.ndarray,
                        dtype=np.float64) -> HistoryPolicyEvaluator:
    return HistoryPolicyEvaluator(arch, theta_to_arrays(arch, theta, dtype))


class GreedyControllerPolicy:
    """Wrap a policy with an argmax controller head (quantizer unchanged).

    Restricting evaluation to the deterministic controller loses nothing:
    the objective is linear in each per-history control distribution, so an
    extreme point attains the optimum. Ties break to the lowest index.
    """

    def __init__(self, base):
        self.base = base
        self.m = base.m
        self.nu = base.nu
        self.nz = base.nz

    def begin(self, n):
        return self.base.begin(n)

    def quantizer_step(self, state, z_idx):
        return self.base.quantizer_step(state, z_idx)

    def controller_dist(self, state, s_idx):
        probs = self.base.controller_dist(state, s_idx)
        out = np.zeros_like(probs)
        out[np.arange(out.shape[0]), np.argmax(probs, axis=-1)] = 1.0
        return out

    def commit(self, state, s_idx, u_idx):
        return self.base.commit(state, s_idx, u_idx)

    def filter_begin(self, n):
        return self.base.filter_begin(n)

    def filter_step(self, fstate, z_idx, s_prev, u_prev):
        return self.base.filter_step(fstate, z_idx, s_prev, u_prev)

    def s_distribution(self, z_hist, s_hist, u_hist):
        return self.base.s_distribution(z_hist, s_hist, u_hist)

    def u_distribution(self, s_hist, u_hist):
        probs = self.base.u_distribution(s_hist, u_hist)
        out = np.zeros_like(probs)
        out[int(np.argmax(probs))] = 1.0
        return out


def make_deterministic_controller_head(policy) -> GreedyControllerPolicy:
    return GreedyControllerPolicy(policy)


def init_policy(arch: ArchDescriptor, seed: int) -> RecurrentJointPolicy:
    """Scaled-uniform cell weights; near-uniform output heads (logit scale 0.01)."""
    rng = substream(seed, 90)
    shapes = arch.param_shapes()
    arrays = {}
    for name, shape in shapes.items():
        if name.endswith(("bf", "bc", "_b")):
            arrays[name] = np.zeros(shape)
        elif name.startswith("head"):
            arrays[name] = rng.uniform(-0.01, 0.01, size=shape)
        else:
            fan_in, fan_out = shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return RecurrentJointPolicy(arch, ad.ParameterSet(arrays))


def sample_action(output: PolicyOutput, rng: np.random.Generator) -> tuple[int, int, float]:
    """Draw (s, u) from one policy step; returns the joint log-probability."""
    s_cdf = np.cumsum(output.s_dist)
    s = int(min(np.sum(s_cdf < rng.random()), output.s_dist.shape[0] - 1))
    u_row = output.u_dist[s]
    u_cdf = np.cumsum(u_row)
    u = int(min(np.sum(u_cdf < rng.random()), u_row.shape[0] - 1))
    return s, u, float(np.log(output.s_dist[s]) + np.log(u_row[u]))


class TablePolicy:
    """Behavioral policy with per-history conditional tables.

    Distributions are generated lazily: the logits for a history are a pure
    function of (seed, history), so the policy is deterministic without
    materializing every table. `sharpness` 0 gives the uniform policy.
    """

    def __init__(self, m: int, nu: int, nz: int, seed: int = 0, sharpness: float = 1.5):
        self.m = int(m)
        self.nu = int(nu)
        self.nz = int(nz)
        self.seed = int(seed)
        self.sharpness = float(sharpness)
        self._cache: dict = {}

    def _dist(self, kind: int, size: int, *history: tuple[int, ...]) -> np.ndarray:
        key = (kind, history)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if self.sharpness == 0.0:
            dist = np.full(size, 1.0 / size)
        else:
            code = 0
            radix = max(self.m, self.nu, self.nz) + 1
            for h in history:
                for v in h:
                    code = code * radix + (int(v) + 1)
                code = code * radix + radix - 1  # history separator
            rng = substream(self.seed, kind, code % (2**31), code // (2**31) % (2**31))
            logits = self.sharpness * rng.standard_normal(size)
            dist = np.exp(logits - logits.max())
            dist /= dist.sum()
        self._cache[key] = dist
        return dist

    def s_distribution(self, z_hist, s_hist, u_hist) -> np.ndarray:
        return self._dist(0, self.m, tuple(z_hist), tuple(s_hist), tuple(u_hist))

    def u_distribution(self, s_hist, u_hist) -> np.ndarray:
        return self._dist(1, self.nu, tuple(s_hist), tuple(u_hist))

    # vectorized rollout protocol: per-lane history tuples
    def begin(self, n: int):
        return [((), (), ()) for _ in range(n)]

    def quantizer_step(self, state, z_idx):
        new_state = []
        probs = np.empty((len(state), self.m))
        for i, (zh, sh, uh) in enumerate(state):
            zh = zh + (int(z_idx[i]),)
            probs[i] = self.s_distribution(zh, sh, uh)
            new_state.append((zh, sh, uh))
        return probs, new_state

    def controller_dist(self, state, s_idx):
        probs = np.empty((len(state), self.nu))
        for i, (zh, sh, uh) in enumerate(state):
            probs[i] = self.u_distribution(sh + (int(s_idx[i]),), uh)
        return probs

    def commit(self, state, s_idx, u_idx):
        return [(zh, sh + (int(s_idx[i]),), uh + (int(u_idx[i]),))
                for i, (zh, sh, uh) in enumerate(state)]

    def filter_begin(self, n: int):
        return [((), (), ()) for _ in range(n)]

    def filter_step(self, fstate, z_idx, s_prev, u_prev):
        probs = np.empty((len(fstate), self.m))
        new_state = []
        for i, (zh, sh, uh) in enumerate(fstate):
            if s_prev is not None:
                sh = sh + (int(s_prev),)
                uh = uh + (int(u_prev),)
            zh = zh + (int(z_idx[i]),)
            probs[i] = self.s_distribution(zh, sh, uh)
            new_state.append((zh, sh, uh))
        return probs, new_state


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "privctrl-checkpoint-v1"


def save_checkpoint(path, policy: RecurrentJointPolicy, *, kind: str = "policy",
                    seed: int = 0, step: int = 0, extra: dict | None = None) -> None:
    """Bit-exact parameter checkpoint: JSON header + base64 float64 payload."""
    a = policy.arch
    doc = {
        "format": CHECKPOINT_FORMAT,
        "kind": kind,
        "arch": {"nz": a.nz, "M": a.m, "nu": a.nu, "hidden": a.hidden},
        "seed": int(seed),
        "step": int(step),
        "theta_b64": base64.b64encode(
            np.ascontiguousarray(policy.theta, dtype="<f8").tobytes()).decode("ascii"),
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path, *, expected_kind: str = "policy"):
    """Load a checkpoint; returns (policy, header-dict)."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise InvalidConfigError(f"unrecognized checkpoint format in {path}")
    if doc.get("kind") != expected_kind:
        raise InvalidConfigError(f"checkpoint kind {doc.get('kind')!r} != {expected_kind!r}")
    a = doc["arch"]
    arch = ArchDescriptor(nz=int(a["nz"]), m=int(a["M"]), nu=int(a["nu"]), hidden=int(a["hidden"]))
    theta = np.frombuffer(base64.b64decode(doc["theta_b64"]), dtype="<f8").astype(np.float64)
    if theta.shape[0] != arch.param_count():
        raise InvalidConfigError("checkpoint parameter count does not match its architecture")
    policy = init_policy(arch, seed=0)
    policy.set_theta(theta)
    return policy, doc
