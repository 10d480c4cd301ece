"""Training configuration and the shared mini-batch training loop.

:class:`Trainer` owns the model, optimizer, EMA teacher, batch sampler and
per-epoch evaluation; subclasses only define one optimisation step.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mining
from .data import BatchSampler, LabeledDataset, PUDataset, TrainBatch
from .losses import MixConfig, total_loss
from .metrics import auc, error_rate
from .mixup import build_mixed_pn, build_mixed_unlabeled, guess_labels, sample_lambda
from .nn import DivergenceError, Ema, Mlp, Sgd
from .report import RunReport

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    # objective
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    eta: float = 0.1
    warmup_epochs: int = 20
    # optimisation
    lr: float = 1e-3
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 1e-4
    ema_decay: float = 0.999
    batch_size: int = 128
    epochs: int = 200
    hidden: tuple = (100, 100)
    # reliable negatives
    rn_method: str = "rand"
    rn_count: int | None = None
    use_rn: bool = True
    remine_each_epoch: bool = False
    # mixing
    shared_lambda: bool = True
    # evaluation: "ema" (teacher) or "student"
    eval_model: str = "ema"
    eval_every: int = 0  # extra test evaluations every N steps (0 = epoch ends only)
    seed: int = 0
    # prior-based baselines
    pi: float | None = None
    pi_multiplier: float = 1.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.eval_model not in ("ema", "student"):
            raise ValueError("eval_model must be 'ema' or 'student'")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs nonnegative")
        self.mix  # validates the objective settings

    @property
    def mix(self) -> MixConfig:
        return MixConfig(self.alpha, self.beta, self.gamma, self.eta, self.warmup_epochs)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def _parse_value(field_type: str, raw: str):
    raw = raw.strip()
    if raw.lower() in ("none", "null", ""):
        return None
    if "bool" in field_type:
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {raw!r}")
        return raw.lower() in ("true", "1", "yes")
    if "tuple" in field_type:
        return tuple(int(v) for v in raw.replace(",", " ").split())
    if "int" in field_type and "float" not in field_type:
        return int(raw)
    if "float" in field_type:
        return float(raw)
    return raw


def load_config(path, **overrides) -> TrainConfig:
    """Read a flat ``key = value`` file (``#`` starts a comment)."""
    types = {f.name: str(f.type) for f in dataclasses.fields(TrainConfig)}
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in types:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(types[key], raw)
    values.update(overrides)
    return TrainConfig.from_dict(values)


def dump_config(config: TrainConfig, path) -> None:
    lines = []
    for k, v in config.to_dict().items():
        if isinstance(v, list):
            v = ",".join(str(i) for i in v)
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")


class TrainingDiverged(RuntimeError):
    def __init__(self, message, report: RunReport):
        super().__init__(message)
        self.report = report


@dataclass
class TrainResult:
    model: Mlp
    teacher: Ema
    report: RunReport
    rn_indices: np.ndarray | None = field(default=None, repr=False)

    @property
    def eval_net(self) -> Mlp:
        return self.teacher.shadow if self.report.config.get("eval_model") == "ema" else self.model


class Trainer:
    method = "base"
    uses_negatives = False

    def __init__(self, pu: PUDataset, config: TrainConfig, test: LabeledDataset | None = None):
        self.pu = pu
        self.config = config
        self.test = test
        ss = np.random.SeedSequence(config.seed)
        init_ss, mine_ss, batch_ss, mix_ss = ss.spawn(4)
        self.mine_seed = int(mine_ss.generate_state(1)[0])
        self.batch_rng = np.random.default_rng(batch_ss)
        self.mix_rng = np.random.default_rng(mix_ss)
        sizes = [pu.n_features, *config.hidden, 1]
        self.model = Mlp.init(sizes, np.random.default_rng(init_ss))
        self.teacher = Ema(self.model, config.ema_decay)
        self.opt = Sgd(config.lr, config.momentum, config.weight_decay, config.nesterov)
        self.rn_indices = None
        self.iteration = 0
        self.report = RunReport(self.method, config.to_dict(), {"split": pu.manifest()})

    # -- hooks
    def step(self, batch: TrainBatch, epoch: int) -> dict:
        raise NotImplementedError

    def mine_negatives(self, epoch: int):
        cfg = self.config
        seed = self.mine_seed + epoch
        return mining.mine(self.pu, cfg.rn_method, cfg.rn_count, seed=seed, batch_size=cfg.batch_size)

    # -- evaluation
    @property
    def eval_net(self) -> Mlp:
        return self.teacher.shadow if self.config.eval_model == "ema" else self.model

    def evaluate(self) -> dict:
        net = self.eval_net
        out = {"train_error": error_rate(net.forward(self.pu.x), self.pu.y)}
        if self.test is not None:
            ts = net.forward(self.test.x)
            out["test_error"] = error_rate(ts, self.test.y)
            out["test_auc"] = auc(ts, self.test.y)
        return out

    def _trace_point(self, epoch_float: float) -> None:
        if self.test is None:
            return
        ts = self.eval_net.forward(self.test.x)
        self.report.trace.append(
            {"iteration": self.iteration, "epoch": epoch_float, "test_error": error_rate(ts, self.test.y), "test_auc": auc(ts, self.test.y)}
        )

    # -- loop
    def run(self) -> TrainResult:
        cfg = self.config
        if cfg.epochs == 0:
            return TrainResult(self.model, self.teacher, self.report)
        if self.uses_negatives and cfg.use_rn:
            self.rn_indices = self.mine_negatives(0)
            self.report.manifest["rn_indices"] = self.rn_indices.tolist()
        sampler = BatchSampler(self.pu, self.rn_indices, cfg.batch_size, self.batch_rng)
        spe = sampler.steps_per_epoch
        if cfg.eval_every:
            self._trace_point(0.0)
        for epoch in range(cfg.epochs):
            if epoch and self.uses_negatives and cfg.use_rn and cfg.remine_each_epoch:
                self.rn_indices = self.mine_negatives(epoch)
                sampler.set_negatives(self.rn_indices)
                self.report.manifest.setdefault("rn_remined_epochs", []).append(epoch)
            sums: dict = {}
            for k, batch in enumerate(sampler.epoch()):
                try:
                    terms = self.step(batch, epoch)
                except DivergenceError as exc:
                    self.report.status = "diverged"
                    self.report.notes.append(f"epoch {epoch}, iteration {self.iteration}: {exc}")
                    raise TrainingDiverged(str(exc), self.report) from exc
                self.teacher.update(self.model)
                self.iteration += 1
                for key, val in terms.items():
                    sums[key] = sums.get(key, 0.0) + val
                if cfg.eval_every and self.iteration % cfg.eval_every == 0:
                    self._trace_point(epoch + (k + 1) / spe)
            row = {"epoch": epoch + 1, "iteration": self.iteration}
            row.update({key: val / spe for key, val in sums.items()})
            row.update(self.evaluate())
            self.report.epochs.append(row)
        return TrainResult(self.model, self.teacher, self.report, self.rn_indices)


class MixPulTrainer(Trainer):
    """Supervised + unsupervised interpolation consistency with a P-vs-U margin loss."""

    method = "mixpul"
    uses_negatives = True

    def step(self, batch: TrainBatch, epoch: int) -> dict:
        cfg = self.config
        mix_cfg = cfg.mix
        B = batch.x_u.shape[0]
        lam = sample_lambda(cfg.alpha, self.mix_rng)
        lam_u = lam if cfg.shared_lambda else sample_lambda(cfg.alpha, self.mix_rng)
        pn_batch = None
        if batch.x_n is not None:
            pn_batch = build_mixed_pn(batch.x_p, batch.x_n, lam, self.mix_rng.permutation(B))
        u_batch = None
        if epoch >= cfg.warmup_epochs and cfg.beta > 0:
            soft = guess_labels(self.teacher, batch.x_u)
            u_batch = build_mixed_unlabeled(batch.x_u, soft, lam_u, self.mix_rng.permutation(B))
        terms, grads = total_loss(self.model, pn_batch, u_batch, batch.x_p, batch.x_u, mix_cfg, epoch)
        self.opt.step(self.model, grads)
        return {"loss": terms.total, "L_PN": terms.pn, "L_U": terms.u_weight * terms.u, "L_PU": terms.pu}


def train(pu: PUDataset, config: TrainConfig | None = None, test: LabeledDataset | None = None) -> TrainResult:
    """Train MixPUL on ``pu``; ``test`` (true labels) is used for reporting only."""
    return MixPulTrainer(pu, config or TrainConfig(), test).run()
