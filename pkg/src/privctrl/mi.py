"""Classifier-based estimation of the per-step information loss.

The log-likelihood ratio that defines the information loss is reduced to
two binary classification problems: mix the transmitted index s_t with an
independent uniform fake index under a fair coin label, and train

* w  to tell real from fake given (s_bar_t, y^{t-1}, s^{t-1}, u^{t-1});
* xi to tell real from fake given (s_bar_t, s^{t-1}, u^{t-1}).

At the optimum, logit(w) - logit(xi) evaluated at the real s_t equals the
information loss; averaging the per-step estimates over rollouts estimates
the total leakage. Both classifiers share the policy's gated recurrent
cell design with their own parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DivergenceError, InvalidInputError
from .model import TrajectoryBatch
from .policy import _cell, _one_hot
from .rngs import substream

__all__ = [
    "ClassifierArch", "RecurrentClassifier", "ClassifierPair", "ContrastiveBatch",
    "init_classifier_pair", "build_contrastive_batch", "train_classifiers",
    "classifier_logits", "estimate_information_loss", "information_loss_matrix",
    "estimate_total_leakage",
]

LOGIT_CLAMP = float(np.log((1.0 - 1e-6) / 1e-6))  # sigmoid output clamp at 1e-6


@dataclass(frozen=True)
class ClassifierArch:
    """Widths of one recurrent binary classifier."""

    in_width: int      # per-step history encoding width
    m: int             # mixed-index one-hot width at the head
    hidden: int = 16

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        h = self.hidden
        # one readout column per mixed-index value: the real-vs-fake logit
        # must couple the history features with WHICH index is queried
        return {
            "Wf": (self.in_width + h, h), "bf": (h,),
            "Wc": (self.in_width + h, h), "bc": (h,),
            "head_W": (h, self.m), "head_b": (self.m,),
        }


class RecurrentClassifier:
    """Maps (history encoding, mixed index) to a real-vs-fake logit."""

    def __init__(self, arch: ClassifierArch, params: ad.ParameterSet):
        if params.shapes() != arch.param_shapes():
            raise InvalidInputError("classifier parameters do not match the architecture")
        self.arch = arch
        self.params = params

    def logits(self, inputs: np.ndarray, s_bar: np.ndarray, nodes=None):
        """Per-step logits; inputs (B, T, in_width), s_bar (B, T) -> (B, T).

        Taped when `nodes` is given (a dict of parameter Nodes); plain
        ndarray math otherwise.
        """
        B, T, width = inputs.shape
        if width != self.arch.in_width:
            raise InvalidInputError(f"encoding width {width} != {self.arch.in_width}")
        p = self.params if nodes is None else nodes
        h = np.zeros((B, self.arch.hidden))
        cols = []
        for t in range(T):
            h = _cell(p["Wf"], p["bf"], p["Wc"], p["bc"], h, inputs[:, t])
            all_logits = ad.matmul(h, p["head_W"]) + p["head_b"]   # (B, M)
            cols.append(ad.reshape(ad.pick(all_logits, s_bar[:, t]), (B, 1)))
        if nodes is None:
            return np.concatenate(cols, axis=-1)
        return ad.concat(cols, axis=-1)

    @property
    def theta(self) -> np.ndarray:
        return self.params.flat()

    def set_theta(self, theta: np.ndarray) -> None:
        self.params.assign_flat(theta)


@dataclass
class ClassifierPair:
    """The (w, xi) pair; w additionally consumes the private history."""

    w: RecurrentClassifier
    xi: RecurrentClassifier
    ny: int
    m: int
    nu: int

    def encode_w(self, batch_like) -> np.ndarray:
        return _history_encoding(batch_like, self.ny, self.m, self.nu, include_y=True)

    def encode_xi(self, batch_like) -> np.ndarray:
        return _history_encoding(batch_like, self.ny, self.m, self.nu, include_y=False)


def init_classifier_pair(ny: int, m: int, nu: int, hidden: int = 16,
                         seed: int = 0) -> ClassifierPair:
    """Near-zero heads (outputs start at 0.5), scaled-uniform cells."""

    def build(in_width: int, sub: int) -> RecurrentClassifier:
        arch = ClassifierArch(in_width=in_width, m=m, hidden=hidden)
        rng = substream(seed, 70, sub)
        arrays = {}
        for name, shape in arch.param_shapes().items():
            if name.startswith("b") or name == "head_b":
                arrays[name] = np.zeros(shape)
            elif name == "head_W":
                arrays[name] = rng.uniform(-0.01, 0.01, size=shape)
            else:
                fan_in, fan_out = shape
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                arrays[name] = rng.uniform(-bound, bound, size=shape)
        return RecurrentClassifier(arch, ad.ParameterSet(arrays))

    return ClassifierPair(
        w=build(ny + m + nu, 0),
        xi=build(m + nu, 1),
        ny=ny, m=m, nu=nu,
    )


def _history_encoding(batch_like, ny: int, m: int, nu: int, include_y: bool) -> np.ndarray:
    """Per-step encoding of the lagged history (one-hot, zeros at t = 1).

    At step t the cell consumes (y_{t-1}, s_{t-1}, u_{t-1}); the mixed index
    enters at the head only, never the recurrence.
    """
    y_idx, s_idx, u_idx = batch_like
    B, T = s_idx.shape
    parts = []
    if include_y:
        parts.append(_one_hot(y_idx, ny))
    parts.append(_one_hot(s_idx, m))
    parts.append(_one_hot(u_idx, nu))
    enc = np.concatenate(parts, axis=-1)
    lagged = np.zeros_like(enc)
    lagged[:, 1:] = enc[:, :-1]
    return lagged


@dataclass
class ContrastiveBatch:
    """Labeled mixture samples, one per (trajectory, step)."""

    y_idx: np.ndarray     # (B, T) real private indices
    s_real: np.ndarray    # (B, T) transmitted indices
    u_idx: np.ndarray     # (B, T) control indices
    s_tilde: np.ndarray   # (B, T) independent uniform indices
    labels: np.ndarray    # (B, T) in {0, 1}, fair coin
    s_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        self.s_bar = np.where(self.labels == 1, self.s_real, self.s_tilde)

    @property
    def n_samples(self) -> int:
        return self.labels.size


def build_contrastive_batch(batch: TrajectoryBatch, m: int,
                            rng: np.random.Generator) -> ContrastiveBatch:
    """Mix each transmitted index with a uniform fake under a fair label."""
    B, T = batch.s.shape
    return ContrastiveBatch(
        y_idx=batch.y_idx,
        s_real=batch.s,
        u_idx=batch.u_idx,
        s_tilde=rng.integers(0, m, size=(B, T)),
        labels=(rng.random((B, T)) < 0.5).astype(np.intp),
    )


def _bce_objective(clf: RecurrentClassifier, inputs, s_bar, labels, nodes=None):
    """Mean of m*log p + (1-m)*log(1-p), computed stably from logits."""
    logits = clf.logits(inputs, s_bar, nodes=nodes)
    lab = labels.astype(np.float64)
    # log sigmoid(x) = -softplus(-x); log(1 - sigmoid(x)) = -softplus(x)
    pos = ad.softplus(-logits) * lab
    neg = ad.softplus(logits) * (1.0 - lab)
    return ad.sum_all(pos + neg) * (-1.0 / labels.size)


def train_classifiers(pair: ClassifierPair, batch: ContrastiveBatch, steps: int,
                      lr: float, momentum: float = 0.9,
                      validation: ContrastiveBatch | None = None,
                      window: int = 10) -> dict:
    """Gradient ascent on both cross-entropy objectives, in place.

    Returns per-classifier trailing objective curves. With a validation
    batch, warns when the trailing-window validation loss stops improving.
    """
    history = {"w": [], "xi": []}
    context = (batch.y_idx, batch.s_real, batch.u_idx)
    enc = {"w": pair.encode_w(context), "xi": pair.encode_xi(context)}
    val_enc = None
    if validation is not None:
        val_ctx = (validation.y_idx, validation.s_real, validation.u_idx)
        val_enc = {"w": pair.encode_w(val_ctx), "xi": pair.encode_xi(val_ctx)}
        val_curve = {"w": [], "xi": []}
    velocity = {"w": np.zeros(pair.w.params.size), "xi": np.zeros(pair.xi.params.size)}
    for name, clf in (("w", pair.w), ("xi", pair.xi)):
        for step in range(steps):
            nodes = clf.params.as_nodes()
            obj = _bce_objective(clf, enc[name], batch.s_bar, batch.labels, nodes=nodes)
            if not np.isfinite(obj.value):
                raise DivergenceError(f"classifier {name} objective became non-finite")
            grads = ad.backward_map(obj)
            g = clf.params.flat_grad(nodes, grads)
            velocity[name] = momentum * velocity[name] + g
            clf.set_theta(clf.theta + lr * velocity[name])
            history[name].append(float(obj.value))
            if val_enc is not None:
                val_obj = _bce_objective(clf, val_enc[name], validation.s_bar, validation.labels)
                val_curve[name].append(float(val_obj))
        if val_enc is not None and len(val_curve[name]) >= 2 * window:
            recent = np.mean(val_curve[name][-window:])
            earlier = np.mean(val_curve[name][-2 * window:-window])
            if recent < earlier - 1e-3:
                warnings.warn(f"classifier {name} validation objective degraded "
                              f"({earlier:.4f} -> {recent:.4f})", stacklevel=2)
    return history


def classifier_logits(pair: ClassifierPair, y_idx, s_ctx, u_idx, s_query) -> tuple[np.ndarray, np.ndarray]:
    """Clamped (w, xi) logits at the queried indices; all arrays (B, T)."""
    context = (y_idx, s_ctx, u_idx)
    lw = pair.w.logits(pair.encode_w(context), s_query)
    lx = pair.xi.logits(pair.encode_xi(context), s_query)
    return (np.clip(lw, -LOGIT_CLAMP, LOGIT_CLAMP),
            np.clip(lx, -LOGIT_CLAMP, LOGIT_CLAMP))


def information_loss_matrix(pair: ClassifierPair, batch: TrajectoryBatch) -> np.ndarray:
    """Estimated c_i at the real indices for every (trajectory, step)."""
    lw, lx = classifier_logits(pair, batch.y_idx, batch.s, batch.u_idx, batch.s)
    return lw - lx


def estimate_information_loss(pair: ClassifierPair, trajectory, t: int) -> float:
    """Per-step estimate for one trajectory (t is 1-based)."""
    y = np.asarray(trajectory.y_idx, dtype=np.intp)[None, :]
    s = np.asarray(trajectory.s, dtype=np.intp)[None, :]
    u = np.asarray(trajectory.u_idx, dtype=np.intp)[None, :]
    if not (1 <= t <= s.shape[1]):
        raise InvalidInputError(f"step {t} outside horizon {s.shape[1]}")
    lw, lx = classifier_logits(pair, y, s, u, s)
    return float(lw[0, t - 1] - lx[0, t - 1])


def estimate_total_leakage(pair: ClassifierPair, batch: TrajectoryBatch) -> tuple[float, float]:
    """Mean and standard error of the per-trajectory leakage totals."""
    totals = information_loss_matrix(pair, batch).sum(axis=1)
    mean = float(totals.mean())
    se = float(totals.std(ddof=1) / np.sqrt(len(totals))) if len(totals) > 1 else 0.0
    return mean, se
