"""MixPUL objective terms.

Score-level helpers return ``(value, d value / d scores)`` so that a training
step can run one forward pass over every batch and one backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixup import MixedBatch
from .nn import DivergenceError, Mlp


@dataclass(frozen=True)
class MixConfig:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    eta: float = 0.1
    warmup_epochs: int = 20

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("loss weights must be nonnegative")
        if not 0 <= self.eta <= 1:
            raise ValueError("margin must lie in [0, 1]")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be nonnegative")


def squared_error(scores, targets):
    """Mean of ``(target - score)**2`` and its gradient w.r.t. the scores."""
    diff = scores - targets
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def pairwise_hinge(scores_p, scores_u, eta: float):
    """Mean over all (p, u) pairs of ``max(0, f(u) - f(p) + eta)`` with gradients."""
    z = scores_u[None, :] - scores_p[:, None] + eta
    active = z > 0
    n = z.size
    value = float(np.sum(z[active]) / n)
    grad_u = active.sum(axis=0) / n
    grad_p = -active.sum(axis=1) / n
    return value, grad_p, grad_u


def consistency_loss(model: Mlp, batch: MixedBatch) -> float:
    return squared_error(model.forward(batch.inputs), batch.targets)[0]


def margin_loss(model: Mlp, x_p, x_u, eta: float) -> float:
    if len(x_p) == 0 or len(x_u) == 0:
        raise ValueError("margin loss needs nonempty positive and unlabeled batches")
    return pairwise_hinge(model.forward(x_p), model.forward(x_u), eta)[0]


@dataclass
class LossTerms:
    total: float
    pn: float
    u: float
    pu: float
    u_weight: float


def total_loss(model: Mlp, pn_batch: MixedBatch | None, u_batch: MixedBatch | None, x_p, x_u, config: MixConfig, epoch: int = 0, *, with_grad: bool = True):
    """``L_PN + beta * L_U + gamma * L_PU`` and its parameter gradients.

    During the first ``config.warmup_epochs`` epochs the unlabeled
    consistency term is switched off. ``pn_batch=None`` drops the supervised
    consistency term (training without reliable negatives).
    """
    u_weight = config.beta if epoch >= config.warmup_epochs else 0.0
    use_u = u_weight > 0 and u_batch is not None
    use_pu = config.gamma > 0

    blocks = []
    if pn_batch is not None:
        blocks.append(("pn", pn_batch.inputs))
    if use_u:
        blocks.append(("u", u_batch.inputs))
    if use_pu:
        blocks += [("p", np.asarray(x_p, dtype=np.float64)), ("x_u", np.asarray(x_u, dtype=np.float64))]

    grads_scores = {}
    pn = u = pu = 0.0
    if not blocks:
        return LossTerms(0.0, 0.0, 0.0, 0.0, u_weight), [np.zeros_like(p) for p in model.params()]

    stacked = np.concatenate([b for _, b in blocks])
    cache = model.forward_cached(stacked)
    offsets = np.cumsum([0] + [len(b) for _, b in blocks])
    scores = {name: cache.scores[offsets[i] : offsets[i + 1]] for i, (name, _) in enumerate(blocks)}

    if pn_batch is not None:
        pn, grads_scores["pn"] = squared_error(scores["pn"], pn_batch.targets)
    if use_u:
        u, g = squared_error(scores["u"], u_batch.targets)
        grads_scores["u"] = u_weight * g
    if use_pu:
        pu, gp, gu = pairwise_hinge(scores["p"], scores["x_u"], config.eta)
        grads_scores["p"] = config.gamma * gp
        grads_scores["x_u"] = config.gamma * gu

    total = pn + u_weight * u + config.gamma * pu
    if not np.isfinite(total):
        raise DivergenceError(f"non-finite loss {total}")
    terms = LossTerms(total, pn, u if use_u else 0.0, pu, u_weight)
    if not with_grad:
        return terms, None
    upstream = np.concatenate([grads_scores[name] for name, _ in blocks])
    return terms, model.backward_scores(cache, upstream)
