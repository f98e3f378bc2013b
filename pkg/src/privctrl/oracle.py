"""Exact ground truth on tiny fully-discrete instances.

Everything here works by exhaustive enumeration of the trajectory
distribution

    P(tau) = prod_t P(y_t|y_{t-1}) P(x_t|x_{t-1},y_{t-1},u_{t-1}) P(z_t|x_t)
                    pi_e(s_t|z^t,s^{t-1},u^{t-1}) pi_c(u_t|s^t,u^{t-1}),

stored as a dense tensor with one axis per (variable, time). On top of it:
exact mutual information and its chain-rule decomposition, per-event
information loss, the exact objective, two independent computations of the
policy gradient that must agree, and brute-force search over deterministic
policy grids. The stochastic estimators elsewhere in the package are tested
against these quantities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import (ImpossibleObservationError, InstanceTooLargeError,
                     InternalInconsistencyError, InvalidInputError,
                     UndefinedRatioError)
from .model import MarkovChain, TableStageCost, TabularModel
from .rngs import substream

__all__ = [
    "EnumeratedJoint", "enumerate_distribution", "exact_mutual_information",
    "exact_chain_decomposition", "exact_information_loss", "information_loss_table",
    "exact_objective", "exact_gradient", "weighted_score_sum",
    "expected_information_loss_gradient", "exact_classifier_posterior",
    "enumerated_belief", "enumerated_y_history_posterior", "smoothed_private_marginals",
    "GridPolicy", "MixedControllerPolicy", "deterministic_grids",
    "brute_force_policy_search", "random_tabular_instance", "ChainDecomposition",
]

DEFAULT_OUTCOME_CAP = 10**7


def _fsum(values) -> float:
    """Exact float64 summation; falls back to np.sum for wider dtypes."""
    arr = np.asarray(values)
    if arr.dtype == np.float64:
        return math.fsum(arr.ravel().tolist())
    return arr.sum()


@dataclass
class EnumeratedJoint:
    """Dense joint over (y^T, x^T, z^T, s^T, u^T).

    Axis layout: [y_1..y_T, x_1..x_T, z_1..z_T, s_1..s_T, u_1..u_T].
    """

    ny: int
    nx: int
    nz: int
    m: int
    nu: int
    T: int
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        total = _fsum(self.probs)
        if abs(total - 1.0) > 1e-12:
            raise InternalInconsistencyError(f"enumerated joint sums to {total!r}, not 1")

    # axis helpers, t is 1-based
    def ay(self, t: int) -> int:
        return t - 1

    def ax(self, t: int) -> int:
        return self.T + t - 1

    def az(self, t: int) -> int:
        return 2 * self.T + t - 1

    def asx(self, t: int) -> int:
        return 3 * self.T + t - 1

    def au(self, t: int) -> int:
        return 4 * self.T + t - 1

    @property
    def y_axes(self):
        return list(range(0, self.T))

    @property
    def x_axes(self):
        return list(range(self.T, 2 * self.T))

    @property
    def z_axes(self):
        return list(range(2 * self.T, 3 * self.T))

    @property
    def s_axes(self):
        return list(range(3 * self.T, 4 * self.T))

    @property
    def u_axes(self):
        return list(range(4 * self.T, 5 * self.T))

    @property
    def outcome_count(self) -> int:
        return self.probs.size

    def marginal(self, keep_axes) -> np.ndarray:
        keep = sorted(set(keep_axes))
        drop = tuple(a for a in range(self.probs.ndim) if a not in keep)
        return self.probs.sum(axis=drop)

    def probability(self, y, x, z, s, u) -> float:
        idx = tuple(y) + tuple(x) + tuple(z) + tuple(s) + tuple(u)
        return float(self.probs[idx])

    def outcomes(self):
        """Iterate ((y, x, z, s, u), prob) over positive-probability outcomes."""
        T = self.T
        for idx in np.argwhere(self.probs > 0):
            tup = tuple(int(v) for v in idx)
            yield (tup[:T], tup[T:2 * T], tup[2 * T:3 * T], tup[3 * T:4 * T], tup[4 * T:]), \
                float(self.probs[tuple(idx)])


def _expand(factor: np.ndarray, axes: list[int], ndim: int) -> np.ndarray:
    """Reshape a factor so its dimensions land on the given tensor axes."""
    order = np.argsort(axes)
    if not np.array_equal(order, np.arange(len(axes))):
        factor = np.transpose(factor, order)
        axes = sorted(axes)
    shape = [1] * ndim
    for ax, size in zip(axes, factor.shape):
        shape[ax] = size
    return factor.reshape(shape)


def _policy_s_factor(policy, t: int, nz: int, m: int, nu: int, dtype) -> np.ndarray:
    """pi_e(s_t | z^t, s^{t-1}, u^{t-1}) over all histories at time t."""
    shape = (nz,) * t + (m,) * (t - 1) + (nu,) * (t - 1) + (m,)
    out = np.empty(shape, dtype=dtype)
    for zh in itertools.product(range(nz), repeat=t):
        for sh in itertools.product(range(m), repeat=t - 1):
            for uh in itertools.product(range(nu), repeat=t - 1):
                out[zh + sh + uh] = np.asarray(policy.s_distribution(zh, sh, uh), dtype=dtype)
    return out


def _policy_u_factor(policy, t: int, m: int, nu: int, dtype) -> np.ndarray:
    """pi_c(u_t | s^t, u^{t-1}) over all histories at time t."""
    shape = (m,) * t + (nu,) * (t - 1) + (nu,)
    out = np.empty(shape, dtype=dtype)
    for sh in itertools.product(range(m), repeat=t):
        for uh in itertools.product(range(nu), repeat=t - 1):
            out[sh + uh] = np.asarray(policy.u_distribution(sh, uh), dtype=dtype)
    return out


def enumerate_distribution(model: TabularModel, policy, T: int | None = None,
                           cap: int = DEFAULT_OUTCOME_CAP, dtype=np.float64) -> EnumeratedJoint:
    """Exact joint of (Y^T, X^T, Z^T, S^T, U^T) under the given policy."""
    if model.kind != "tabular-discrete":
        raise InvalidInputError("enumeration requires a tabular model")
    T = model.horizon if T is None else int(T)
    ny, nx, nz, m, nu = model.chain.n, model.nx, model.nz, model.m, model.nu
    count = (ny * nx * nz * m * nu) ** T
    if count > cap:
        raise InstanceTooLargeError(f"{count} outcomes exceed the cap of {cap}")

    ndim = 5 * T
    off_y, off_x, off_z, off_s, off_u = 0, T, 2 * T, 3 * T, 4 * T
    p = np.ones((1,) * ndim, dtype=dtype)

    chain = model.chain
    for t in range(1, T + 1):
        if t == 1:
            p = p * _expand(chain.initial.astype(dtype), [off_y], ndim)
            p = p * _expand(model.initial_x_dist.astype(dtype), [off_x], ndim)
        else:
            p = p * _expand(chain.transition.astype(dtype),
                            [off_y + t - 2, off_y + t - 1], ndim)
            p = p * _expand(model.kernel_x.astype(dtype),
                            [off_x + t - 2, off_y + t - 2, off_u + t - 2, off_x + t - 1], ndim)
        p = p * _expand(model.kernel_z.astype(dtype), [off_x + t - 1, off_z + t - 1], ndim)
        s_factor = _policy_s_factor(policy, t, nz, m, nu, dtype)
        s_axes = list(range(off_z, off_z + t)) + list(range(off_s, off_s + t - 1)) \
            + list(range(off_u, off_u + t - 1)) + [off_s + t - 1]
        p = p * _expand(s_factor, s_axes, ndim)
        u_factor = _policy_u_factor(policy, t, m, nu, dtype)
        u_axes = list(range(off_s, off_s + t)) + list(range(off_u, off_u + t - 1)) + [off_u + t - 1]
        p = p * _expand(u_factor, u_axes, ndim)

    return EnumeratedJoint(ny=ny, nx=nx, nz=nz, m=m, nu=nu, T=T, probs=p)


# ---------------------------------------------------------------------------
# information quantities
# ---------------------------------------------------------------------------

def _conditional_mi(marg: np.ndarray, a_axes, b_axes, c_axes) -> float:
    """I(A; B | C) from a joint tensor over exactly the listed axes."""
    a_axes, b_axes, c_axes = list(a_axes), list(b_axes), list(c_axes)
    perm = c_axes + a_axes + b_axes
    if sorted(perm) != list(range(marg.ndim)):
        raise InvalidInputError("axis groups must partition the tensor")
    p = np.transpose(marg, perm)
    nc = int(np.prod([p.shape[i] for i in range(len(c_axes))], dtype=np.int64)) if c_axes else 1
    na = int(np.prod([p.shape[len(c_axes) + i] for i in range(len(a_axes))], dtype=np.int64)) if a_axes else 1
    nb = p.size // (nc * na)
    p = p.reshape(nc, na, nb)
    pc = p.sum(axis=(1, 2), keepdims=True)
    pca = p.sum(axis=2, keepdims=True)
    pcb = p.sum(axis=1, keepdims=True)
    mask = p > 0
    terms = np.zeros_like(p)
    terms[mask] = p[mask] * (
        np.log(p[mask]) + np.log(np.broadcast_to(pc, p.shape)[mask])
        - np.log(np.broadcast_to(pca, p.shape)[mask])
        - np.log(np.broadcast_to(pcb, p.shape)[mask])
    )
    return _fsum(terms)


def exact_mutual_information(joint: EnumeratedJoint) -> float:
    """I(S^T, U^T; Y^T) by direct summation over the enumerated joint."""
    marg = joint.marginal(joint.y_axes + joint.s_axes + joint.u_axes)
    T = joint.T
    return _conditional_mi(marg, a_axes=list(range(T, 3 * T)), b_axes=list(range(T)), c_axes=[])


@dataclass
class ChainDecomposition:
    """Per-step conditional MI terms and the vanishing cross terms."""

    terms: list            # I(S_t; Y^{t-1} | S^{t-1}, U^{t-1})
    cross_terms: list      # I(S_t, U_t; Y_t^T | S^{t-1}, U^{t-1}, Y^{t-1})
    control_terms: list    # I(U_t; Y^{t-1} | S^t, U^{t-1})

    @property
    def total(self) -> float:
        return math.fsum(self.terms)


def exact_chain_decomposition(joint: EnumeratedJoint) -> ChainDecomposition:
    """Additive expansion of the leakage: the per-step conditional MI series.

    The sum of `terms` equals I(S^T,U^T;Y^T); the causal cross terms and the
    control terms are identically zero under the causal information pattern
    and are returned so tests can assert it.
    """
    T = joint.T
    terms, cross_terms, control_terms = [], [], []
    for t in range(1, T + 1):
        # I(S_t; Y^{t-1} | S^{t-1}, U^{t-1})
        keep = joint.y_axes[:t - 1] + joint.s_axes[:t] + joint.u_axes[:t - 1]
        marg = joint.marginal(keep)
        ny_blk = t - 1
        a = [ny_blk + t - 1]                       # s_t
        b = list(range(ny_blk))                    # y^{t-1}
        c = list(range(ny_blk, ny_blk + t - 1)) + list(range(ny_blk + t, marg.ndim))
        terms.append(_conditional_mi(marg, a, b, c))

        # I(S_t, U_t; Y_t^T | S^{t-1}, U^{t-1}, Y^{t-1})
        keep = joint.y_axes + joint.s_axes[:t] + joint.u_axes[:t]
        marg = joint.marginal(keep)
        a = [T + t - 1, T + 2 * t - 1]             # s_t, u_t
        b = list(range(t - 1, T))                  # y_t..y_T
        c = list(range(t - 1)) + list(range(T, T + t - 1)) + list(range(T + t, T + 2 * t - 1))
        cross_terms.append(_conditional_mi(marg, a, b, c))

        # I(U_t; Y^{t-1} | S^t, U^{t-1})
        keep = joint.y_axes[:t - 1] + joint.s_axes[:t] + joint.u_axes[:t]
        marg = joint.marginal(keep)
        a = [ny_blk + t + t - 1]                   # u_t
        b = list(range(ny_blk))
        c = list(range(ny_blk, ny_blk + t)) + list(range(ny_blk + t, ny_blk + t + t - 1))
        control_terms.append(_conditional_mi(marg, a, b, c))
    return ChainDecomposition(terms, cross_terms, control_terms)


def information_loss_table(joint: EnumeratedJoint, t: int):
    """Per-event information loss at step t.

    Returns (values, probs, axes): tensors over (y^{t-1}, s^t, u^{t-1})
    event blocks (s_t is the last s axis), with `values` zero wherever the
    event has probability zero, and `axes` the corresponding axes of the
    full joint so callers can broadcast the table back onto outcome space.
    """
    keep = joint.y_axes[:t - 1] + joint.s_axes[:t] + joint.u_axes[:t - 1]
    marg = joint.marginal(keep)
    s_t_axis = 2 * (t - 1)
    y_axes = tuple(range(t - 1))
    den1 = marg.sum(axis=s_t_axis, keepdims=True)          # P(y, s^{t-1}, u)
    num2 = marg.sum(axis=y_axes, keepdims=True)            # P(s^t, u)
    den2 = num2.sum(axis=s_t_axis, keepdims=True)          # P(s^{t-1}, u)
    # wherever the event has positive probability every factor is positive
    mask = marg > 0
    values = np.zeros_like(marg)
    values[mask] = (np.log(marg[mask])
                    - np.log(np.broadcast_to(den1, marg.shape)[mask])
                    - np.log(np.broadcast_to(num2, marg.shape)[mask])
                    + np.log(np.broadcast_to(den2, marg.shape)[mask]))
    return values, marg, keep


def exact_information_loss(joint: EnumeratedJoint, t: int, s_t: int,
                           y_hist, s_hist, u_hist) -> float:
    """log P(s_t|y^{t-1},s^{t-1},u^{t-1}) - log P(s_t|s^{t-1},u^{t-1})."""
    y_hist, s_hist, u_hist = tuple(y_hist), tuple(s_hist), tuple(u_hist)
    if len(y_hist) != t - 1 or len(s_hist) != t - 1 or len(u_hist) != t - 1:
        raise InvalidInputError("history lengths must all be t-1")
    keep = joint.y_axes[:t - 1] + joint.s_axes[:t] + joint.u_axes[:t - 1]
    marg = joint.marginal(keep)
    cond1 = marg[y_hist + s_hist + (slice(None),) + u_hist]
    den1 = cond1.sum()
    marg_su = marg.sum(axis=tuple(range(t - 1)))
    cond2 = marg_su[s_hist + (slice(None),) + u_hist]
    den2 = cond2.sum()
    if den1 <= 0 or den2 <= 0:
        raise UndefinedRatioError("conditioning event has probability zero")
    num1, num2 = cond1[s_t], cond2[s_t]
    if num1 <= 0 and num2 <= 0:
        raise UndefinedRatioError("0/0 information-loss cell")
    if num1 <= 0:
        return -np.inf
    return float(np.log(num1 / den1) - np.log(num2 / den2))


# ---------------------------------------------------------------------------
# objective and gradients
# ---------------------------------------------------------------------------

def _stage_cost_matrix(cost, nx: int, nu: int, dtype=np.float64) -> np.ndarray:
    xi = np.arange(nx)[:, None]
    ui = np.arange(nu)[None, :]
    return np.asarray(cost.evaluate(xi, ui), dtype=dtype)


def exact_objective(model: TabularModel, policy, cost, lam: float,
                    T: int | None = None, cap: int = DEFAULT_OUTCOME_CAP,
                    dtype=np.float64, joint: EnumeratedJoint | None = None):
    """Sum_t E[c(X_t, U_t)] + lambda * I(S^T,U^T;Y^T), exactly."""
    if joint is None:
        joint = enumerate_distribution(model, policy, T, cap=cap, dtype=dtype)
    T = joint.T
    total = np.asarray(0.0, dtype=dtype)
    cmat = _stage_cost_matrix(cost, joint.nx, joint.nu, dtype)
    for t in range(1, T):
        marg = joint.marginal([joint.ax(t), joint.au(t)])
        total = total + _fsum(marg * cmat)
    term = np.asarray(cost.terminal(np.arange(joint.nx)), dtype=dtype)
    total = total + _fsum(joint.marginal([joint.ax(T)]) * term)
    if lam != 0.0:
        total = total + lam * exact_mutual_information(joint)
    return float(total) if np.dtype(dtype) == np.float64 else total


class _TapedPolicyEvaluator:
    """History-tree evaluation with taped parameters (Nodes), prefix-cached."""

    def __init__(self, policy):
        self.policy = policy
        self.nodes = policy.params.as_nodes()
        self._hid_e: dict = {}
        self._hid_c: dict = {}

    def hidden_e(self, zh: tuple, sh: tuple, uh: tuple):
        key = (zh, sh, uh)
        hit = self._hid_e.get(key)
        if hit is not None:
            return hit
        if len(zh) == 1:
            h = np.zeros((1, self.policy.arch.hidden))
            sp = up = None
        else:
            h = self.hidden_e(zh[:-1], sh[:-1], uh[:-1])
            sp, up = np.asarray([sh[-1]]), np.asarray([uh[-1]])
        h = self.policy._enc_step(self.nodes, h, np.asarray([zh[-1]]), sp, up)
        self._hid_e[key] = h
        return h

    def hidden_c(self, sh: tuple, uh: tuple):
        key = (sh, uh)
        hit = self._hid_c.get(key)
        if hit is not None:
            return hit
        if len(sh) == 0:
            g = np.zeros((1, self.policy.arch.hidden))
        else:
            g = self.hidden_c(sh[:-1], uh[:-1])
            g = self.policy._ctl_step(self.nodes, g, np.asarray([sh[-1]]), np.asarray([uh[-1]]))
        self._hid_c[key] = g
        return g

    def log_s_row(self, zh, sh, uh):
        h = self.hidden_e(zh, sh, uh)
        return ad.log_softmax(self.policy._s_logits(self.nodes, h))

    def log_u_row(self, sh_full, uh):
        g = self.hidden_c(sh_full[:-1], uh)
        return ad.log_softmax(self.policy._u_logits(self.nodes, g, np.asarray([sh_full[-1]])))


def weighted_score_sum(joint: EnumeratedJoint, policy, W: np.ndarray) -> np.ndarray:
    """Sum_tau W(tau) * d/d theta log pi_theta(tau), exactly.

    W is a tensor over full outcome space (broadcastable to it). The score
    of a trajectory decomposes into per-step head terms, so the sum groups
    by decision history; each distinct history contributes one tape node
    weighted by the marginal of W over its continuations.
    """
    W = np.broadcast_to(W, joint.probs.shape)
    T = joint.T
    taped = _TapedPolicyEvaluator(policy)
    total = ad.constant(0.0)
    for t in range(1, T + 1):
        # quantizer head: coefficient per (z^t, s^{t-1}, u^{t-1}, s_t)
        keep = joint.z_axes[:t] + joint.s_axes[:t] + joint.u_axes[:t - 1]
        coef = W.sum(axis=tuple(a for a in range(W.ndim) if a not in keep))
        for zh in itertools.product(range(joint.nz), repeat=t):
            for sh in itertools.product(range(joint.m), repeat=t - 1):
                for uh in itertools.product(range(joint.nu), repeat=t - 1):
                    vec = coef[zh + sh + (slice(None),) + uh]
                    if not np.any(vec):
                        continue
                    total = total + ad.sum_all(ad.constant(vec[None, :]) * taped.log_s_row(zh, sh, uh))
        # controller head: coefficient per (s^t, u^{t-1}, u_t)
        keep = joint.s_axes[:t] + joint.u_axes[:t]
        coef = W.sum(axis=tuple(a for a in range(W.ndim) if a not in keep))
        for sh in itertools.product(range(joint.m), repeat=t):
            for uh in itertools.product(range(joint.nu), repeat=t - 1):
                vec = coef[sh + uh]
                if not np.any(vec):
                    continue
                total = total + ad.sum_all(ad.constant(vec[None, :]) * taped.log_u_row(sh, uh))
    grads = ad.backward_map(total)
    return policy.params.flat_grad(taped.nodes, grads)


def exact_return_tensor(joint: EnumeratedJoint, cost, lam: float) -> np.ndarray:
    """R(tau) = sum_t c(x_t,u_t) + lam * c_i(event_t), over full outcome space."""
    T = joint.T
    R = np.zeros(joint.probs.shape)
    cmat = _stage_cost_matrix(cost, joint.nx, joint.nu)
    for t in range(1, T):
        R = R + _expand(cmat, [joint.ax(t), joint.au(t)], R.ndim)
    term = np.asarray(cost.terminal(np.arange(joint.nx)), dtype=np.float64)
    R = R + _expand(term, [joint.ax(T)], R.ndim)
    if lam != 0.0:
        for t in range(1, T + 1):
            values, _, axes = information_loss_table(joint, t)
            R = R + lam * _expand(values, axes, R.ndim)
    return R


def exact_gradient(model: TabularModel, policy, cost, lam: float,
                   T: int | None = None, eps: float = 1e-6, check_tol: float = 1e-5,
                   rel_floor: float = 1e-4, cap: int = DEFAULT_OUTCOME_CAP) -> dict:
    """Exact policy gradient two ways; they must agree.

    (i) the score form: Sum_tau P(tau) R(tau) grad log P_theta(tau) with the
        exact per-event information loss inside R;
    (ii) central finite differences of the exact objective, evaluated in
        extended precision so the eps=1e-6 differences stay meaningful.

    Raises InternalInconsistencyError when the max relative component error
    exceeds `check_tol` (denominator floored at `rel_floor`).
    """
    joint = enumerate_distribution(model, policy, T, cap=cap)
    R = exact_return_tensor(joint, cost, lam)
    g_score = weighted_score_sum(joint, policy, joint.probs * R)

    from .policy import evaluator_for_theta  # local import to avoid a cycle at module load

    theta = policy.theta.astype(np.longdouble)
    g_fd = np.empty(theta.shape[0])
    ld_eps = np.longdouble(eps)
    for i in range(theta.shape[0]):
        plus = theta.copy()
        plus[i] += ld_eps
        minus = theta.copy()
        minus[i] -= ld_eps
        j_plus = exact_objective(model, evaluator_for_theta(policy.arch, plus, np.longdouble),
                                 cost, lam, T, cap=cap, dtype=np.longdouble)
        j_minus = exact_objective(model, evaluator_for_theta(policy.arch, minus, np.longdouble),
                                  cost, lam, T, cap=cap, dtype=np.longdouble)
        g_fd[i] = float((j_plus - j_minus) / (2 * ld_eps))

    denom = np.maximum(np.maximum(np.abs(g_score), np.abs(g_fd)), rel_floor)
    max_rel = float(np.max(np.abs(g_score - g_fd) / denom))
    if max_rel > check_tol:
        raise InternalInconsistencyError(
            f"gradient routes disagree: max relative component error {max_rel:.3e}")
    return {"score_form": g_score, "finite_diff": g_fd, "max_rel_err": max_rel}


def expected_information_loss_gradient(joint: EnumeratedJoint, policy) -> np.ndarray:
    """E[grad_theta c_i] computed event by event; analytically the zero vector.

    For each event the two conditional log-probabilities are differentiated
    through their defining marginals (score-weighted enumeration), divided
    by the event marginals, and reweighted; the cancellation happens in the
    final sum, so the result is an honest numerical zero, not an identity
    collapsed on paper.
    """
    T = joint.T
    total = np.zeros(policy.params.size)
    grad_cache: dict = {}

    def marginal_grad(keep_axes, idx) -> tuple[float, np.ndarray]:
        key = (tuple(keep_axes), tuple(idx))
        hit = grad_cache.get(key)
        if hit is not None:
            return hit
        indicator = np.zeros(joint.probs.shape)
        sl = [slice(None)] * joint.probs.ndim
        for ax, v in zip(keep_axes, idx):
            sl[ax] = v
        indicator[tuple(sl)] = 1.0
        prob = float((joint.probs * indicator).sum())
        grad = weighted_score_sum(joint, policy, joint.probs * indicator)
        grad_cache[key] = (prob, grad)
        return prob, grad

    for t in range(1, T + 1):
        event_axes = joint.y_axes[:t - 1] + joint.s_axes[:t] + joint.u_axes[:t - 1]
        marg = joint.marginal(event_axes)
        for idx in np.argwhere(marg > 0):
            idx = tuple(int(v) for v in idx)
            p_event = float(marg[idx])
            y_part = idx[:t - 1]
            s_part = idx[t - 1:2 * t - 1]          # includes s_t last
            u_part = idx[2 * t - 1:]
            a1_axes = event_axes
            a2_axes = joint.y_axes[:t - 1] + joint.s_axes[:t - 1] + joint.u_axes[:t - 1]
            a3_axes = joint.s_axes[:t] + joint.u_axes[:t - 1]
            a4_axes = joint.s_axes[:t - 1] + joint.u_axes[:t - 1]
            p1, g1 = marginal_grad(a1_axes, y_part + s_part + u_part)
            p2, g2 = marginal_grad(a2_axes, y_part + s_part[:-1] + u_part)
            p3, g3 = marginal_grad(a3_axes, s_part + u_part)
            p4, g4 = marginal_grad(a4_axes, s_part[:-1] + u_part)
            total = total + p_event * (g1 / p1 - g2 / p2 - g3 / p3 + g4 / p4)
    return total


# ---------------------------------------------------------------------------
# classifier / belief / adversary cross-check helpers
# ---------------------------------------------------------------------------

def exact_classifier_posterior(joint: EnumeratedJoint, t: int, s_bar: int,
                               s_hist, u_hist, y_hist=None) -> float:
    """P(label = real | s_bar, histories) for the contrastive mixture.

    With balanced labels and the fake index uniform on M symbols, the
    posterior is P(s|h) / (P(s|h) + 1/M). Passing y_hist gives the
    w-classifier target; omitting it gives the xi target.
    """
    s_hist, u_hist = tuple(s_hist), tuple(u_hist)
    keep = joint.s_axes[:t] + joint.u_axes[:t - 1]
    if y_hist is not None:
        y_hist = tuple(y_hist)
        keep = joint.y_axes[:t - 1] + keep
    marg = joint.marginal(keep)
    prefix = (y_hist if y_hist is not None else ()) + s_hist
    cond = marg[prefix + (slice(None),) + u_hist]
    if cond.sum() <= 0:
        raise UndefinedRatioError("conditioning event has probability zero")
    p_s = cond[s_bar] / cond.sum()
    return float(p_s / (p_s + 1.0 / joint.m))


def enumerated_belief(joint: EnumeratedJoint, t: int, s_hist, u_hist,
                      tag: str = "quantizer", z1: int | None = None) -> dict:
    """P(x_t, y^{t-1}, z^t | conditioning) as {(x, y_hist, z_hist): prob}.

    tag "quantizer" conditions on (s^{t-1}, u^{t-1}); tag "controller" on
    (s^t, u^{t-1}). Passing z1 additionally conditions on the realized first
    observation (the rollout-time filtering convention).
    """
    s_hist, u_hist = tuple(s_hist), tuple(u_hist)
    n_s = len(s_hist)
    expected_s = t if tag == "controller" else t - 1
    if n_s != expected_s or len(u_hist) != t - 1:
        raise InvalidInputError(f"history lengths do not match tag {tag!r} at time {t}")
    keep = (joint.y_axes[:t - 1] + [joint.ax(t)] + joint.z_axes[:t]
            + joint.s_axes[:n_s] + joint.u_axes[:len(u_hist)])
    marg = joint.marginal(keep)
    # axis order after marginal: y^{t-1}, x_t, z^t, s-hist, u-hist
    sl = ([slice(None)] * (t - 1) + [slice(None)] + [slice(None)] * t
          + list(s_hist) + list(u_hist))
    block = marg[tuple(sl)]
    if z1 is not None:
        picker = [slice(None)] * block.ndim
        picker[t] = z1  # z_1 axis sits right after y^{t-1} and x_t
        sub = np.zeros_like(block)
        sub_idx = tuple(picker)
        sub[sub_idx] = block[sub_idx]
        block = sub
    total = block.sum()
    if total <= 0:
        raise UndefinedRatioError("conditioning event has probability zero")
    block = block / total
    atoms = {}
    for idx in np.argwhere(block > 0):
        idx = tuple(int(v) for v in idx)
        y_hist = idx[:t - 1]
        x = idx[t - 1]
        z_hist = idx[t:]
        atoms[(x, y_hist, z_hist)] = float(block[idx])
    return atoms


def enumerated_y_history_posterior(joint: EnumeratedJoint, t: int, s_hist, u_hist) -> dict:
    """P(y^t | s^t, u^t) as {y_hist: prob} (the adversary's posterior target)."""
    s_hist, u_hist = tuple(s_hist), tuple(u_hist)
    keep = joint.y_axes[:t] + joint.s_axes[:t] + joint.u_axes[:t]
    marg = joint.marginal(keep)
    block = marg[(slice(None),) * t + s_hist + u_hist]
    total = block.sum()
    if total <= 0:
        raise UndefinedRatioError("conditioning event has probability zero")
    block = block / total
    return {tuple(int(v) for v in idx): float(block[tuple(idx)])
            for idx in np.argwhere(block > 0)}


def smoothed_private_marginals(joint: EnumeratedJoint, s_seq, u_seq) -> np.ndarray:
    """P(y_t | s^T, u^T) for every t, shape (T, ny)."""
    s_seq, u_seq = tuple(s_seq), tuple(u_seq)
    T = joint.T
    marg = joint.marginal(joint.y_axes + joint.s_axes + joint.u_axes)
    block = marg[(slice(None),) * T + s_seq + u_seq]
    total = block.sum()
    if total <= 0:
        raise ImpossibleObservationError("observed (s, u) sequence has probability zero")
    block = block / total
    out = np.empty((T, joint.ny))
    for t in range(T):
        out[t] = block.sum(axis=tuple(a for a in range(T) if a != t))
    return out


# ---------------------------------------------------------------------------
# brute-force policy search over deterministic grids
# ---------------------------------------------------------------------------

class GridPolicy:
    """Deterministic memoryless maps: s_t = q[t](z_t), u_t = c[t](s_t)."""

    def __init__(self, q_map: np.ndarray, c_map: np.ndarray, m: int, nu: int, nz: int):
        self.q_map = np.asarray(q_map, dtype=np.intp)    # (T, nz)
        self.c_map = np.asarray(c_map, dtype=np.intp)    # (T, m)
        self.m, self.nu, self.nz = m, nu, nz

    def s_distribution(self, z_hist, s_hist, u_hist):
        probs = np.zeros(self.m)
        probs[self.q_map[len(z_hist) - 1, z_hist[-1]]] = 1.0
        return probs

    def u_distribution(self, s_hist, u_hist):
        probs = np.zeros(self.nu)
        probs[self.c_map[len(s_hist) - 1, s_hist[-1]]] = 1.0
        return probs


class MixedControllerPolicy:
    """Fixed quantizer map with a per-step mixture of two controller maps."""

    def __init__(self, q_map: np.ndarray, c1: np.ndarray, c2: np.ndarray,
                 weight: float, m: int, nu: int, nz: int):
        self.q_map = np.asarray(q_map, dtype=np.intp)
        self.c1 = np.asarray(c1, dtype=np.intp)
        self.c2 = np.asarray(c2, dtype=np.intp)
        self.weight = float(weight)
        self.m, self.nu, self.nz = m, nu, nz

    def s_distribution(self, z_hist, s_hist, u_hist):
        probs = np.zeros(self.m)
        probs[self.q_map[len(z_hist) - 1, z_hist[-1]]] = 1.0
        return probs

    def u_distribution(self, s_hist, u_hist):
        t = len(s_hist) - 1
        probs = np.zeros(self.nu)
        probs[self.c1[t, s_hist[-1]]] += self.weight
        probs[self.c2[t, s_hist[-1]]] += 1.0 - self.weight
        return probs


def deterministic_grids(model: TabularModel, T: int, max_count: int = 10**5,
                        seed: int = 0) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """All deterministic (quantizer, controller) maps, or a seeded subset.

    Candidate quantizers map z_t -> s_t per step; candidate controllers map
    s_t -> u_t per step. When the full grid exceeds `max_count` pairs, a
    deterministic random subset of each side is drawn (non-exhaustive).
    """
    nz, m, nu = model.nz, model.m, model.nu
    n_q = m ** (nz * T)
    n_c = nu ** (m * T)
    if n_q * n_c <= max_count:
        q_maps = [np.array(q, dtype=np.intp).reshape(T, nz)
                  for q in itertools.product(range(m), repeat=nz * T)]
        c_maps = [np.array(c, dtype=np.intp).reshape(T, m)
                  for c in itertools.product(range(nu), repeat=m * T)]
        return q_maps, c_maps
    rng = substream(seed, 31)
    side = max(2, int(np.sqrt(max_count)))
    q_maps = [rng.integers(0, m, size=(T, nz)) for _ in range(min(side, n_q))]
    c_maps = [rng.integers(0, nu, size=(T, m)) for _ in range(min(side, n_c))]
    return q_maps, c_maps


def brute_force_policy_search(model: TabularModel, cost, lam: float, T: int,
                              grids=None, cap: int = DEFAULT_OUTCOME_CAP,
                              max_count: int = 10**5) -> dict:
    """Exhaustively evaluate the exact objective over the policy grid."""
    T = model.horizon if T is None else T
    if grids is None:
        grids = deterministic_grids(model, T, max_count=max_count)
    q_maps, c_maps = grids
    if len(q_maps) * len(c_maps) > max_count:
        raise InstanceTooLargeError(
            f"{len(q_maps) * len(c_maps)} grid pairs exceed the cap of {max_count}")
    best = None
    for q in q_maps:
        for c in c_maps:
            pol = GridPolicy(q, c, model.m, model.nu, model.nz)
            value = exact_objective(model, pol, cost, lam, T, cap=cap)
            if best is None or value < best[0]:
                best = (value, q, c)
    return {"value": best[0], "q_map": best[1], "c_map": best[2]}


# ---------------------------------------------------------------------------
# random tiny instances
# ---------------------------------------------------------------------------

@dataclass
class TinyInstance:
    model: TabularModel
    policy: object
    cost: TableStageCost


def random_tabular_instance(seed: int, t_choices=(2, 3), size_choices=(2, 3),
                            sharpness: float = 1.5, max_cells: int = 200_000) -> TinyInstance:
    """Random enumerable instance: kernels, behavioral policy, stage cost.

    Sizes are drawn from `size_choices` and rejected until the dense outcome
    count fits in `max_cells`, which keeps identity sweeps over hundreds of
    instances fast.
    """
    from .policy import TablePolicy

    for attempt in range(64):
        rng = substream(seed, 11, attempt)
        T = int(rng.choice(t_choices))
        ny, nx, nz, m, nu = (int(rng.choice(size_choices)) for _ in range(5))
        if (ny * nx * nz * m * nu) ** T <= max_cells:
            break
    else:
        raise InstanceTooLargeError("could not draw an instance under the cell budget")

    def rows(shape_rows, k):
        return rng.dirichlet(np.ones(k), size=shape_rows)

    chain = MarkovChain(states=np.arange(ny, dtype=np.float64),
                        transition=rows(ny, ny), initial=rng.dirichlet(np.ones(ny)))
    model = TabularModel(
        kernel_x=rows((nx, ny, nu), nx),
        kernel_z=rows(nx, nz),
        initial_x=rng.dirichlet(np.ones(nx)),
        chain=chain, m=m, horizon=T,
    )
    policy = TablePolicy(m=m, nu=nu, nz=nz, seed=int(rng.integers(2**31)), sharpness=sharpness)
    cost = TableStageCost(values=rng.random((nx, nu)), terminal_values=rng.random(nx))
    return TinyInstance(model=model, policy=policy, cost=cost)
