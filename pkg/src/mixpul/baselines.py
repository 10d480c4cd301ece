"""Prior-based PU risk estimators (uPU, nnPU) and the treat-unlabeled-as-negative baseline.

The risk estimators use the sigmoid loss ``l(z) = sigmoid(-z)`` on the
pre-sigmoid logit of the shared MLP, so ``l(z)`` is the loss of calling a
row positive and ``l(-z) = sigmoid(z)`` the loss of calling it negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset, PUDataset, TrainBatch
from .losses import squared_error
from .nn import DivergenceError, Mlp, sigmoid
from .training import TrainConfig, Trainer, TrainResult


@dataclass(frozen=True)
class RiskParts:
    """Positive risk and the (possibly negative) negative-class correction."""

    positive: float
    negative: float
    grad_p_positive: np.ndarray
    grad_p_negative: np.ndarray
    grad_u_negative: np.ndarray


def sigmoid_loss(z):
    return sigmoid(-np.asarray(z, dtype=np.float64))


def risk_parts(logits_p, logits_u, pi: float) -> RiskParts:
    """Split the unbiased risk into ``pi * E_P l(z)`` and ``E_U l(-z) - pi * E_P l(-z)``.

    Gradients are taken with respect to the logits.
    """
    if not 0 < pi < 1:
        raise ValueError(f"class prior {pi} must lie strictly in (0, 1)")
    zp = np.asarray(logits_p, dtype=np.float64)
    zu = np.asarray(logits_u, dtype=np.float64)
    if zp.size == 0 or zu.size == 0:
        raise ValueError("risk estimators need nonempty positive and unlabeled batches")
    sp, su = sigmoid(zp), sigmoid(zu)
    # d sigmoid(-z)/dz = -s(1-s); d sigmoid(z)/dz = s(1-s)
    dp = sp * (1.0 - sp)
    du = su * (1.0 - su)
    positive = pi * float(np.mean(1.0 - sp))
    negative = float(np.mean(su)) - pi * float(np.mean(sp))
    return RiskParts(positive, negative, -pi * dp / zp.size, -pi * dp / zp.size, du / zu.size)


def upu_risk(model: Mlp, x_p, x_u, pi: float) -> float:
    parts = risk_parts(model.logits(x_p), model.logits(x_u), pi)
    return parts.positive + parts.negative


def nnpu_risk(model: Mlp, x_p, x_u, pi: float) -> float:
    parts = risk_parts(model.logits(x_p), model.logits(x_u), pi)
    return parts.positive + max(0.0, parts.negative)


def risk_gradients(parts: RiskParts, non_negative: bool):
    """Logit gradients for one step.

    For nnPU with a negative correction term the step descends on the
    negation of that term instead of following the clamped risk.
    """
    if non_negative and parts.negative < 0:
        return -parts.grad_p_negative, -parts.grad_u_negative
    return parts.grad_p_positive + parts.grad_p_negative, parts.grad_u_negative


class RiskTrainer(Trainer):
    """uPU (``non_negative=False``) or nnPU training on the shared MLP."""

    uses_negatives = False

    def __init__(self, pu: PUDataset, config: TrainConfig, test: LabeledDataset | None = None, *, non_negative: bool = True):
        self.method = "nnpu" if non_negative else "upu"
        super().__init__(pu, config, test)
        self.non_negative = non_negative
        base = config.pi if config.pi is not None else pu.prior
        self.pi = base * config.pi_multiplier
        if not 0 < self.pi < 1:
            raise ValueError(f"supplied class prior {self.pi} must lie strictly in (0, 1)")
        self.report.manifest["pi_used"] = self.pi

    def step(self, batch: TrainBatch, epoch: int) -> dict:
        n_p = len(batch.x_p)
        cache = self.model.forward_cached(np.concatenate([batch.x_p, batch.x_u]))
        parts = risk_parts(cache.logits[:n_p], cache.logits[n_p:], self.pi)
        risk = parts.positive + (max(0.0, parts.negative) if self.non_negative else parts.negative)
        if not np.isfinite(risk):
            raise DivergenceError(f"non-finite risk {risk}")
        gp, gu = risk_gradients(parts, self.non_negative)
        self.opt.step(self.model, self.model.backward_cached(cache, np.concatenate([gp, gu])))
        return {"loss": risk}


class SupervisedTrainer(Trainer):
    """Squared error against the observed labels: unlabeled rows count as negatives."""

    method = "supervised"

    def step(self, batch: TrainBatch, epoch: int) -> dict:
        x = np.concatenate([batch.x_p, batch.x_u])
        targets = np.concatenate([np.ones(len(batch.x_p)), np.zeros(len(batch.x_u))])
        cache = self.model.forward_cached(x)
        loss, g = squared_error(cache.scores, targets)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss {loss}")
        self.opt.step(self.model, self.model.backward_scores(cache, g))
        return {"loss": loss}


def train_upu(pu: PUDataset, config: TrainConfig | None = None, test: LabeledDataset | None = None) -> TrainResult:
    return RiskTrainer(pu, config or TrainConfig(), test, non_negative=False).run()


def train_nnpu(pu: PUDataset, config: TrainConfig | None = None, test: LabeledDataset | None = None) -> TrainResult:
    return RiskTrainer(pu, config or TrainConfig(), test, non_negative=True).run()


def supervised_baseline(pu: PUDataset, config: TrainConfig | None = None, test: LabeledDataset | None = None) -> TrainResult:
    return SupervisedTrainer(pu, config or TrainConfig(), test).run()
