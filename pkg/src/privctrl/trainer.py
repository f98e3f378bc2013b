"""Policy-gradient optimization of the privacy-aware objective.

Each iteration: sample a rollout batch under the current policy, refresh
the leakage classifiers a few gradient steps, score every trajectory with
R(tau) = sum_t [c_t + lambda * c_i_hat_t], and take one REINFORCE step

    g_hat = mean_tau (R(tau) - b) * grad_theta sum_t log pi_theta,

the whole-trajectory return times the whole-trajectory score (no
reward-to-go truncation unless explicitly enabled, so the enumeration
gradient test is an identity check). Evaluation freezes the policy,
replaces the controller head by its argmax, and reports cost, leakage, and
(wired in by the caller) adversary accuracy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DivergenceError, InvalidConfigError
from .mi import (ClassifierPair, build_contrastive_batch, information_loss_matrix,
                 train_classifiers)
from .model import TrajectoryBatch, rollout_batch
from .policy import RecurrentJointPolicy, make_deterministic_controller_head
from .rngs import derive_seed, substream

__all__ = ["TrainConfig", "TrainReport", "Momentum", "objective_estimate",
           "gradient_estimate", "policy_gradient_step", "pretrain_quantizer",
           "train", "evaluate"]


@dataclass
class TrainConfig:
    """Knobs of one training run; everything derives from `seed`."""

    lam: float = 0.0
    iterations: int = 400
    batch_size: int = 64
    policy_lr: float = 2e-3
    policy_momentum: float = 0.9
    classifier_lr: float = 0.5
    classifier_momentum: float = 0.9
    classifier_refresh_steps: int = 2
    classifier_hidden: int = 16
    baseline: str = "batch-mean"
    seed: int = 0
    eval_every: int = 0              # 0: no interim evaluations
    eval_rollouts: int = 500
    pretrain_steps: int = 150
    pretrain_lr: float = 0.2
    reward_to_go: bool = False       # documented departure when enabled

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidConfigError("lambda must be nonnegative")
        if self.policy_lr <= 0 or self.classifier_lr <= 0:
            raise InvalidConfigError("learning rates must be positive")
        if self.baseline not in ("none", "batch-mean"):
            raise InvalidConfigError(f"unknown baseline {self.baseline!r}")
        if self.baseline == "batch-mean" and self.batch_size < 2:
            raise InvalidConfigError("batch-mean baseline needs batch_size >= 2")
        if self.iterations < 0 or self.batch_size < 1:
            raise InvalidConfigError("iterations and batch size must be positive")


@dataclass
class TrainReport:
    """Per-iteration metric stream plus interim evaluations."""

    records: list = field(default_factory=list)
    evals: list = field(default_factory=list)
    total_wall_time: float = 0.0

    def append(self, **kv):
        self.records.append(dict(kv))

    @property
    def final_mean_cost(self) -> float:
        return self.records[-1]["mean_cost"] if self.records else float("nan")


class Momentum:
    """Plain SGD with momentum on a flat parameter vector."""

    def __init__(self, lr: float, momentum: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.velocity = None

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.velocity is None:
            self.velocity = np.zeros_like(theta)
        self.velocity = self.momentum * self.velocity + grad
        return theta - self.lr * self.velocity


def objective_estimate(batch: TrajectoryBatch, pair: ClassifierPair | None,
                       lam: float) -> tuple[float, np.ndarray]:
    """Batch objective value and the per-trajectory returns R(tau)."""
    returns = batch.stage_costs.sum(axis=1)
    if lam != 0.0:
        if pair is None:
            raise InvalidConfigError("lambda > 0 needs a classifier pair")
        returns = returns + lam * information_loss_matrix(pair, batch).sum(axis=1)
    return float(returns.mean()), returns


def gradient_estimate(policy: RecurrentJointPolicy, batch: TrajectoryBatch,
                      returns: np.ndarray, baseline: str = "batch-mean",
                      weights: np.ndarray | None = None,
                      lam_ci: np.ndarray | None = None,
                      reward_to_go: bool = False) -> np.ndarray:
    """Score-function gradient estimate of the minimization objective.

    `weights` are trajectory probabilities (default: empirical, 1/B each),
    so the same code path serves Monte-Carlo batches and full-enumeration
    identity tests. With `reward_to_go`, per-step returns-to-go replace the
    whole-trajectory return (requires `lam_ci`, the per-step reward matrix).
    """
    B = batch.n
    w = np.full(B, 1.0 / B) if weights is None else np.asarray(weights, dtype=np.float64)
    if not reward_to_go:
        b = float(np.sum(w * returns) / np.sum(w)) if baseline == "batch-mean" else 0.0
        total, nodes = policy.taped_objective(
            batch.z, batch.s, batch.u_idx, traj_weights=w * (returns - b))
    else:
        per_step = batch.stage_costs if lam_ci is None else batch.stage_costs + lam_ci
        togo = np.cumsum(per_step[:, ::-1], axis=1)[:, ::-1]
        if baseline == "batch-mean":
            togo = togo - np.sum(w[:, None] * togo, axis=0) / np.sum(w)
        total, nodes = policy.taped_objective(
            batch.z, batch.s, batch.u_idx, step_weights=w[:, None] * togo)
    grads = ad.backward_map(total)
    g = policy.params.flat_grad(nodes, grads)
    if not np.all(np.isfinite(g)):
        raise DivergenceError("policy gradient is not finite")
    return g


def policy_gradient_step(policy: RecurrentJointPolicy, batch: TrajectoryBatch,
                         returns: np.ndarray, optimizer: Momentum,
                         baseline: str = "batch-mean",
                         lam_ci: np.ndarray | None = None,
                         reward_to_go: bool = False) -> float:
    """One descent step in place; returns the gradient-estimate norm."""
    g = gradient_estimate(policy, batch, returns, baseline=baseline,
                          lam_ci=lam_ci, reward_to_go=reward_to_go)
    policy.set_theta(optimizer.step(policy.theta, g))
    return float(np.linalg.norm(g))


def imitation_targets(z: np.ndarray, nz: int, m: int) -> np.ndarray:
    """Coarsen observation indices onto the index alphabet: floor(z*M/nz)."""
    return np.minimum((z * m) // max(nz, 1), m - 1).astype(np.intp)


def pretrain_quantizer(model, policy: RecurrentJointPolicy, cost, config: TrainConfig) -> None:
    """Fit the quantizer head to imitate the coarsened front-end quantizer.

    Cross-entropy on rollouts sampled from the evolving policy; the
    controller stream receives no gradient. Gives the lambda = 0 run an
    informative, non-degenerate starting quantizer.
    """
    opt = Momentum(config.pretrain_lr, 0.9)
    B = max(16, config.batch_size)
    for k in range(config.pretrain_steps):
        batch = rollout_batch(model, policy, cost, model.horizon,
                              seed=derive_seed(config.seed, f"pretrain:{k}"), n=B)
        targets = imitation_targets(batch.z, model.nz, model.m)
        total, nodes = policy.taped_objective(
            batch.z, batch.s, batch.u_idx, quantizer_targets=targets,
            include_controller=False,
            traj_weights=np.full(B, 1.0 / (B * model.horizon)))
        g = policy.params.flat_grad(nodes, ad.backward_map(total))
        # ascend the imitation log-likelihood
        policy.set_theta(opt.step(policy.theta, -g))


def train(model, policy: RecurrentJointPolicy, pair: ClassifierPair | None,
          cost, config: TrainConfig) -> TrainReport:
    """Alternating loop: rollouts, classifier refresh, policy step, metrics."""
    report = TrainReport()
    opt = Momentum(config.policy_lr, config.policy_momentum)
    started = time.monotonic()
    if config.pretrain_steps > 0:
        pretrain_quantizer(model, policy, cost, config)
    for it in range(config.iterations):
        t_it = time.monotonic()
        batch = rollout_batch(model, policy, cost, model.horizon,
                              seed=derive_seed(config.seed, f"rollout:{it}"),
                              n=config.batch_size)
        leakage_mean = 0.0
        if pair is not None and config.classifier_refresh_steps > 0:
            contrastive = build_contrastive_batch(
                batch, model.m, substream(config.seed, 40, it))
            train_classifiers(pair, contrastive, steps=config.classifier_refresh_steps,
                              lr=config.classifier_lr, momentum=config.classifier_momentum)
        ci = None
        if pair is not None:
            ci = information_loss_matrix(pair, batch)
            leakage_mean = float(ci.sum(axis=1).mean())
        value, returns = objective_estimate(batch, pair, config.lam)
        try:
            grad_norm = policy_gradient_step(
                policy, batch, returns, opt, baseline=config.baseline,
                lam_ci=None if ci is None else config.lam * ci,
                reward_to_go=config.reward_to_go)
        except DivergenceError:
            report.append(iteration=it, mean_cost=float(batch.stage_costs.mean()),
                          mean_leakage=leakage_mean, objective=value,
                          grad_norm=float("nan"),
                          wall_time=time.monotonic() - t_it)
            raise
        report.append(iteration=it, mean_cost=float(batch.stage_costs.mean()),
                      mean_leakage=leakage_mean, objective=value,
                      grad_norm=grad_norm, wall_time=time.monotonic() - t_it)
        if config.eval_every and (it + 1) % config.eval_every == 0:
            metrics = evaluate(model, policy, pair, cost,
                               n_rollouts=config.eval_rollouts,
                               seed=derive_seed(config.seed, f"eval:{it}"))
            metrics["iteration"] = it
            report.evals.append(metrics)
    report.append_total = time.monotonic() - started
    return report


def evaluate(model, policy, pair: ClassifierPair | None, cost, n_rollouts: int,
             seed: int, lam: float = 0.0, adversary_fn=None) -> dict:
    """Frozen-policy metrics with the deterministic controller head.

    `adversary_fn(batch) -> (accuracy, se)` is wired in by the harness so
    this module stays independent of the adversary implementation.
    """
    greedy = make_deterministic_controller_head(policy)
    batch = rollout_batch(model, greedy, cost, model.horizon,
                          seed=derive_seed(seed, "evaluate"), n=n_rollouts)
    per_traj_cost = batch.stage_costs.mean(axis=1)
    out = {
        "mean_cost": float(per_traj_cost.mean()),
        "cost_se": float(per_traj_cost.std(ddof=1) / np.sqrt(n_rollouts)),
        "n_rollouts": int(n_rollouts),
    }
    if pair is not None:
        totals = information_loss_matrix(pair, batch).sum(axis=1)
        out["leakage"] = float(totals.mean())
        out["leakage_se"] = float(totals.std(ddof=1) / np.sqrt(n_rollouts))
        if lam:
            out["objective"] = out["mean_cost"] * model.horizon + lam * out["leakage"]
    if adversary_fn is not None:
        acc, acc_se = adversary_fn(batch)
        out["adversary_acc"] = float(acc)
        out["acc_se"] = float(acc_se)
    return out
