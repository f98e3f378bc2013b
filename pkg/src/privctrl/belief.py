"""Belief-state filtering over (x_t, y^{t-1}, z^t) for tabular models.

A belief is a finite weighted support: the conditional distribution of the
state, the private history, and the observation history given the common
information. The quantizer's belief conditions on (s^{t-1}, u^{t-1}); the
controller's belief additionally conditions on s_t. Three update operators:

* phi_c reweights by the quantizer collection after s_t is transmitted;
* phi_e predicts through the private chain, dynamics, and observation
  kernels after u_t is applied;
* phi applies both at once (one fused formula) and must coincide with the
  composition phi_e(phi_c(.)) — the identity tests compare the two paths.

Beliefs over continuous states are out of scope: the classifier estimator
and the particle adversary cover the continuous model instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (ImpossibleObservationError, InvalidInputError,
                     UndefinedRatioError)
from .model import TabularModel

__all__ = [
    "BeliefState", "initial_belief", "initial_belief_joint", "update_phi_c",
    "update_phi_e", "update_phi_joint", "information_loss_from_belief",
    "expected_information_loss", "adversary_posterior",
    "quantizer_collection", "dump_atoms_jsonl", "load_atoms_jsonl",
]

Atom = tuple  # (x, y_hist, z_hist)

_NORM_TOL = 1e-10
DEFAULT_PRUNE = 1e-15


@dataclass(frozen=True)
class BeliefState:
    """Finite weighted support over (x, y-history, z-history) atoms."""

    atoms: dict = field(repr=False)
    tag: str = "quantizer"

    def __post_init__(self):
        if self.tag not in ("quantizer", "controller"):
            raise InvalidInputError(f"unknown belief tag {self.tag!r}")
        if not self.atoms:
            raise InvalidInputError("belief must have non-empty support")
        lengths = {(len(a[1]), len(a[2])) for a in self.atoms}
        if len(lengths) != 1:
            raise InvalidInputError("belief atoms must share history lengths")
        total = sum(self.atoms.values())
        if abs(total - 1.0) > _NORM_TOL:
            raise InvalidInputError(f"belief weights sum to {total!r}, not 1")
        if any(w < 0 for w in self.atoms.values()):
            raise InvalidInputError("belief weights must be nonnegative")

    @property
    def t(self) -> int:
        """Time index: a belief at t carries z-histories of length t."""
        return len(next(iter(self.atoms))[2])

    def weight(self, x: int, y_hist: tuple, z_hist: tuple) -> float:
        return self.atoms.get((x, tuple(y_hist), tuple(z_hist)), 0.0)

    def y_history_marginal(self) -> dict:
        out: dict = {}
        for (x, yh, zh), w in self.atoms.items():
            out[yh] = out.get(yh, 0.0) + w
        return out


def _normalized(atoms: dict, tag: str) -> BeliefState:
    total = sum(atoms.values())
    if total <= 0:
        raise ImpossibleObservationError("belief update has zero normalizer")
    return BeliefState({k: v / total for k, v in atoms.items()}, tag)


def initial_belief(model: TabularModel, z1: int) -> BeliefState:
    """Rollout-time filtering start: P(x_1 | z_1) on (x, (), (z_1,)) atoms."""
    if model.kind != "tabular-discrete":
        raise InvalidInputError("beliefs are implemented for tabular models only")
    if not (0 <= int(z1) < model.nz):
        raise InvalidInputError(f"observation {z1} outside the alphabet")
    weights = model.initial_x_dist * model.kernel_z[:, int(z1)]
    if weights.sum() <= 0:
        raise ImpossibleObservationError(f"z_1 = {z1} has probability zero")
    atoms = {(x, (), (int(z1),)): float(w)
             for x, w in enumerate(weights) if w > 0}
    return _normalized(atoms, "quantizer")


def initial_belief_joint(model: TabularModel) -> BeliefState:
    """Theorem-literal start: the joint law of (x_1, z_1), mass on every z_1."""
    if model.kind != "tabular-discrete":
        raise InvalidInputError("beliefs are implemented for tabular models only")
    atoms = {}
    for x in range(model.nx):
        for z in range(model.nz):
            w = float(model.initial_x_dist[x] * model.kernel_z[x, z])
            if w > 0:
                atoms[(x, (), (z,))] = w
    return _normalized(atoms, "quantizer")


def quantizer_collection(policy, s_hist, u_hist) -> Callable[[tuple], np.ndarray]:
    """Bind the policy's quantizer head to common information (s^{t-1}, u^{t-1})."""
    s_hist, u_hist = tuple(s_hist), tuple(u_hist)

    def q(z_hist: tuple) -> np.ndarray:
        return np.asarray(policy.s_distribution(tuple(z_hist), s_hist, u_hist))

    return q


def update_phi_c(belief: BeliefState, q, s_t: int) -> BeliefState:
    """Condition the quantizer belief on the transmitted index s_t."""
    if belief.tag != "quantizer":
        raise InvalidInputError("phi_c consumes a quantizer-tagged belief")
    atoms = {}
    for (x, yh, zh), w in belief.atoms.items():
        lik = float(q(zh)[s_t])
        if w * lik > 0:
            atoms[(x, yh, zh)] = w * lik
    if not atoms:
        raise ImpossibleObservationError(f"s_t = {s_t} has probability zero under the belief")
    return _normalized(atoms, "controller")


def update_phi_e(belief: BeliefState, u_t: int, model: TabularModel,
                 prune_threshold: float = DEFAULT_PRUNE) -> BeliefState:
    """Predict the controller belief through one dynamics step.

    Extends every atom by one (y_t, z_{t+1}) pair; the state coordinate is
    marginalized through the transition kernel. Mass is conserved, so no
    renormalization happens unless pruning removes atoms.
    """
    if belief.tag != "controller":
        raise InvalidInputError("phi_e consumes a controller-tagged belief")
    if not (0 <= int(u_t) < model.nu):
        raise InvalidInputError(f"control index {u_t} outside the alphabet")
    chain = model.chain
    atoms: dict = {}
    for (x, yh, zh), w in belief.atoms.items():
        y_dist = chain.initial if not yh else chain.transition[yh[-1]]
        for y_new in range(chain.n):
            p_y = w * float(y_dist[y_new])
            if p_y <= 0:
                continue
            trans = model.kernel_x[x, y_new, int(u_t)]
            for x_new in range(model.nx):
                p_x = p_y * float(trans[x_new])
                if p_x <= 0:
                    continue
                for z_new in range(model.nz):
                    p_z = p_x * float(model.kernel_z[x_new, z_new])
                    if p_z <= 0:
                        continue
                    key = (x_new, yh + (y_new,), zh + (z_new,))
                    atoms[key] = atoms.get(key, 0.0) + p_z
    pruned = {k: v for k, v in atoms.items() if v >= prune_threshold}
    if not pruned:
        pruned = atoms
    return _normalized(pruned, "quantizer")


def update_phi_joint(belief: BeliefState, q, controller_map, s_t: int,
                     model: TabularModel, prune_threshold: float = DEFAULT_PRUNE) -> BeliefState:
    """One fused transmit-and-predict update of the quantizer belief.

    `controller_map` realizes the control from the transmitted index,
    u_t = controller_map(s_t). Numerically identical to
    update_phi_e(update_phi_c(belief, q, s_t), u_t) — the composition
    identity; both code paths exist so tests can compare them.
    """
    if belief.tag != "quantizer":
        raise InvalidInputError("phi consumes a quantizer-tagged belief")
    u_t = int(controller_map(s_t))
    if not (0 <= u_t < model.nu):
        raise InvalidInputError(f"control index {u_t} outside the alphabet")
    chain = model.chain
    normalizer = 0.0
    lik = {}
    for (x, yh, zh), w in belief.atoms.items():
        l = float(q(zh)[s_t])
        lik[(x, yh, zh)] = l
        normalizer += w * l
    if normalizer <= 0:
        raise ImpossibleObservationError(f"s_t = {s_t} has probability zero under the belief")
    atoms: dict = {}
    for (x, yh, zh), w in belief.atoms.items():
        base = w * lik[(x, yh, zh)] / normalizer
        if base <= 0:
            continue
        y_dist = chain.initial if not yh else chain.transition[yh[-1]]
        for y_new in range(chain.n):
            p_y = base * float(y_dist[y_new])
            if p_y <= 0:
                continue
            trans = model.kernel_x[x, y_new, u_t]
            for x_new in range(model.nx):
                p_x = p_y * float(trans[x_new])
                if p_x <= 0:
                    continue
                for z_new in range(model.nz):
                    p_z = p_x * float(model.kernel_z[x_new, z_new])
                    if p_z <= 0:
                        continue
                    key = (x_new, yh + (y_new,), zh + (z_new,))
                    atoms[key] = atoms.get(key, 0.0) + p_z
    pruned = {k: v for k, v in atoms.items() if v >= prune_threshold}
    if not pruned:
        pruned = atoms
    return _normalized(pruned, "quantizer")


def information_loss_from_belief(belief: BeliefState, q, s_t: int, y_hist) -> float:
    """Pointwise information loss of (s_t, y-history) under the belief.

    log of P(s_t, y^{t-1}) over P(s_t) * P(y^{t-1}), all three marginals
    conditioned on the common information the belief encodes.
    """
    if belief.tag != "quantizer":
        raise InvalidInputError("information loss reads a quantizer-tagged belief")
    y_hist = tuple(y_hist)
    joint = 0.0
    p_s = 0.0
    p_y = 0.0
    for (x, yh, zh), w in belief.atoms.items():
        l = float(q(zh)[s_t]) * w
        p_s += l
        if yh == y_hist:
            joint += l
            p_y += w
    if p_s <= 0 or p_y <= 0:
        raise UndefinedRatioError("zero marginal for the requested (s_t, y-history)")
    if joint <= 0:
        return -np.inf
    return float(np.log(joint / (p_s * p_y)))


def expected_information_loss(belief: BeliefState, q) -> float:
    """E[c_i | common information]: the conditional MI leaked by s_t."""
    if belief.tag != "quantizer":
        raise InvalidInputError("information loss reads a quantizer-tagged belief")
    m = len(q(next(iter(belief.atoms))[2]))
    y_margs: dict = {}
    joint: dict = {}
    p_s = np.zeros(m)
    for (x, yh, zh), w in belief.atoms.items():
        row = np.asarray(q(zh)) * w
        p_s += row
        y_margs[yh] = y_margs.get(yh, 0.0) + w
        if yh in joint:
            joint[yh] = joint[yh] + row
        else:
            joint[yh] = row.copy()
    total = 0.0
    for yh, row in joint.items():
        mask = row > 0
        total += float(np.sum(row[mask] * (np.log(row[mask])
                                           - np.log(p_s[mask]) - np.log(y_margs[yh]))))
    return total


def adversary_posterior(belief: BeliefState) -> dict:
    """Marginalize the time-(t+1) quantizer belief onto private histories.

    The result maps y^t to P(y^t | s^t, u^t): what the curious party can
    infer from the transmitted indices and controls alone.
    """
    if belief.tag != "quantizer":
        raise InvalidInputError("the adversary posterior reads a quantizer-tagged belief")
    return belief.y_history_marginal()


def dump_atoms_jsonl(belief: BeliefState) -> str:
    """One atom per line: {'x': ..., 'y': [...], 'z': [...], 'w': ...}."""
    lines = []
    for (x, yh, zh) in sorted(belief.atoms):
        lines.append(json.dumps({"x": int(x), "y": list(yh), "z": list(zh),
                                 "w": belief.atoms[(x, yh, zh)]}))
    return "\n".join(lines) + "\n"


def load_atoms_jsonl(text: str, tag: str = "quantizer") -> BeliefState:
    atoms = {}
    for line in text.strip().splitlines():
        rec = json.loads(line)
        atoms[(rec["x"], tuple(rec["y"]), tuple(rec["z"]))] = rec["w"]
    return BeliefState(atoms, tag)
