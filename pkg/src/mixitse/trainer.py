"""AdamW training loop with plateau halving and best-checkpoint selection."""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .datagen import Batch, SupervisedBatch, UnsupervisedBatch
from .dsp import StftConfig, Waveform, istft, stft
from .embedder import Embedder
from .errors import ConfigError, TrainingDiverged
from .losses import LossConfig, combine_unsupervised, semi_supervised_loss, spectral_loss, unsupervised_terms
from .metrics import MetricReport, PesqFn, evaluate_pair, mean_report
from .model import ModelParams, enhance, features, forward, mask_to_complex, save_checkpoint

log = logging.getLogger(__name__)

MODES = ("supervised", "unsupervised", "semi_supervised")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "supervised"
    lr_supervised: float = 1e-3
    lr_unsupervised: float = 5e-4
    weight_decay: float = 2e-5
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    plateau_patience_epochs: int = 20
    eval_every: int = 1
    epoch_size: int = 128
    batch_size: int = 4
    max_epochs: int = 10
    max_steps: int | None = None
    grad_clip: float | None = 5.0
    seed: int = 0
    exp_id: str | None = None
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(self.betas))
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossConfig(**self.loss))
        if self.mode not in MODES:
            raise ConfigError(f"unknown training mode {self.mode!r}")
        if self.lr_supervised <= 0 or self.lr_unsupervised <= 0:
            raise ConfigError("learning rates must be positive")
        if self.plateau_patience_epochs < 1 or self.eval_every < 1:
            raise ConfigError("patience and evaluation interval must be at least 1")
        if self.batch_size < 1 or self.epoch_size % self.batch_size or self.epoch_size < self.batch_size:
            raise ConfigError("epoch_size must be a positive multiple of batch_size")

    @property
    def base_lr(self) -> float:
        return self.lr_unsupervised if self.mode == "unsupervised" else self.lr_supervised

    @property
    def unsupervised_scale(self) -> float:
        """Factor on the unsupervised term in semi-supervised mode (its lr relative to the optimizer's)."""
        return self.lr_unsupervised / self.lr_supervised if self.mode == "semi_supervised" else 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


# ---------------------------------------------------------------------------
# optimizer


def adamw_update(param, grad, m, v, step: int, lr: float, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
    """One decoupled-weight-decay Adam update; returns ``(param, m, v)``. ``step`` counts from 1."""
    b1, b2 = betas
    m = b1 * m + (1 - b1) * grad
    v = b2 * v + (1 - b2) * grad * grad
    m_hat = m / (1 - b1**step)
    v_hat = v / (1 - b2**step)
    param = param - lr * m_hat / (np.sqrt(v_hat) + eps) - lr * weight_decay * param
    return param, m, v


@dataclass
class AdamW:
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 2e-5
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: ModelParams, grads: dict[str, np.ndarray], lr: float) -> None:
        """Update ``params`` in place.  Non-finite gradients are rejected before anything changes."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(f"non-finite gradient for {name}; step rejected")
        self.step_count += 1
        for name, g in grads.items():
            t = params[name]
            m = self.m.get(name, np.zeros_like(g))
            v = self.v.get(name, np.zeros_like(g))
            t.data, self.m[name], self.v[name] = adamw_update(
                t.data, g, m, v, self.step_count, lr, self.betas, self.eps, self.weight_decay
            )

    def preconditioned_delta(self, grads: dict[str, np.ndarray], lr: float, weight_decay: float | None = None,
                             params: ModelParams | None = None) -> dict[str, np.ndarray]:
        """Parameter change a gradient would cause under the current, frozen second moments.

        ``-lr * g / (sqrt(v_hat) + eps)`` per tensor, plus ``-lr * wd * param``
        when ``params`` is given.  Moments are not touched.
        """
        if self.step_count == 0:
            raise ConfigError("no second-moment estimate yet; take at least one step first")
        wd = self.weight_decay if weight_decay is None else weight_decay
        out = {}
        for name, g in grads.items():
            v_hat = self.v[name] / (1 - self.betas[1] ** self.step_count)
            delta = -lr * g / (np.sqrt(v_hat) + self.eps)
            if params is not None:
                delta = delta - lr * wd * params[name].data
            out[name] = delta
        return out

    def state_dict(self) -> dict:
        return {"step_count": self.step_count, "m": self.m, "v": self.v}


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


class PlateauScheduler:
    """Halve the learning-rate multiplier after ``patience`` epochs without dev improvement.

    The first reported score is the baseline (typically the untrained model).
    """

    def __init__(self, patience: int, factor: float = 0.5):
        if patience < 1:
            raise ConfigError("patience must be at least 1")
        self.patience = patience
        self.factor = factor
        self.multiplier = 1.0
        self.best = -math.inf
        self.stale_epochs = 0

    def step(self, score: float, epochs: int = 1) -> bool:
        """Record a dev score covering ``epochs`` epochs; returns True when this score is a new best."""
        if score > self.best:
            self.best = score
            self.stale_epochs = 0
            return True
        self.stale_epochs += epochs
        while self.stale_epochs >= self.patience:
            self.multiplier *= self.factor
            self.stale_epochs -= self.patience
        return False


# ---------------------------------------------------------------------------
# losses from batches


def supervised_objective(params: ModelParams, batch: SupervisedBatch, cfg: LossConfig) -> ad.Tensor:
    (mask,) = forward(params, features(batch.Y, cfg.c), branches=("speech",))
    S_hat = mask_to_complex(mask) * ad.Complex.constant(batch.Y)
    return spectral_loss(batch.S, S_hat, cfg)


def separate(params: ModelParams, Y: np.ndarray, c: float) -> list[ad.Complex]:
    """Complex outputs (speech, noise 1, noise 2) of a three-branch model."""
    masks = forward(params, features(Y, c))
    if len(masks) != 3:
        raise ConfigError("unsupervised training needs a model with three decoder branches")
    Yc = ad.Complex.constant(Y)
    return [mask_to_complex(m) * Yc for m in masks]


def unsupervised_objective(
    params: ModelParams, batch: UnsupervisedBatch, embedder: Embedder | None, cfg: LossConfig
) -> tuple[ad.Tensor, dict[str, ad.Tensor]]:
    mixture = batch.mixture
    terms = unsupervised_terms(separate(params, mixture.Y, cfg.c), mixture, embedder, cfg)
    return combine_unsupervised(terms, cfg), terms


def batch_objective(
    params: ModelParams, batch: Batch, config: TrainConfig, embedder: Embedder | None
) -> tuple[ad.Tensor, dict[str, float]]:
    """Total loss for one step and its logged components."""
    cfg = config.loss
    parts: dict[str, float] = {}
    if config.mode == "supervised":
        loss = supervised_objective(params, batch.supervised, cfg)
        parts["supervised"] = loss.item()
        return loss, parts
    unsup, terms = unsupervised_objective(params, batch.unsupervised, embedder, cfg)
    parts.update({k: v.item() for k, v in terms.items()})
    parts["unsupervised"] = unsup.item()
    if config.mode == "unsupervised":
        return unsup, parts
    sup = supervised_objective(params, batch.supervised, cfg)
    parts["supervised"] = sup.item()
    loss = semi_supervised_loss(sup, config.unsupervised_scale * unsup)
    return loss, parts


def gradients(params: ModelParams, loss: ad.Tensor) -> dict[str, np.ndarray]:
    return params.grads(loss)


# ---------------------------------------------------------------------------
# evaluation


def enhance_waveform(params: ModelParams, w: Waveform, stft_cfg: StftConfig, c: float = 0.3) -> Waveform:
    out = istft(enhance(params, stft(w, stft_cfg), c)).samples
    padded = np.zeros(len(w))
    padded[: len(out)] = out
    return Waveform(padded, w.sample_rate)


def evaluate(
    params: ModelParams,
    dev: Sequence[tuple[Waveform, Waveform]],
    stft_cfg: StftConfig,
    c: float = 0.3,
    pesq: PesqFn | None = None,
) -> MetricReport:
    """Mean metrics of the enhanced dev inputs against their references (frame-covered region only)."""
    reports = []
    for noisy, clean in dev:
        n = stft_cfg.num_samples(stft_cfg.num_frames(len(noisy)))
        est = enhance_waveform(params, noisy, stft_cfg, c)
        reports.append(
            evaluate_pair(Waveform(clean.samples[:n], clean.sample_rate), Waveform(est.samples[:n], est.sample_rate), pesq)
        )
    return mean_report(reports)


# ---------------------------------------------------------------------------
# loop


@dataclass
class TrainResult:
    params: ModelParams
    best_params: ModelParams
    best: dict | None
    log: list[dict]
    evals: list[dict]
    optimizer: AdamW
    scheduler: PlateauScheduler


class _JsonlSink:
    def __init__(self, path: Path | None):
        self.fh = open(path, "w") if path is not None else None

    def write(self, row: dict) -> None:
        if self.fh is not None:
            self.fh.write(json.dumps(row) + "\n")
            self.fh.flush()

    def close(self) -> None:
        if self.fh is not None:
            self.fh.close()


def train(
    config: TrainConfig,
    data: Iterable[Batch],
    params: ModelParams,
    embedder: Embedder | None = None,
    dev: Sequence[tuple[Waveform, Waveform]] | None = None,
    stft_cfg: StftConfig | None = None,
    out_dir: str | os.PathLike | None = None,
    pesq: PesqFn | None = None,
    metadata: dict | None = None,
) -> TrainResult:
    """Optimize ``params`` in place on the batch stream.

    Stops after ``max_epochs`` epochs or ``max_steps`` steps.  With a dev set
    the model is scored before training and every ``eval_every`` epochs;
    the learning rate halves on plateaus and the best-scoring parameters are
    kept (and written as checkpoints when ``out_dir`` is set, each carrying
    ``metadata``).
    """
    if dev and stft_cfg is None:
        raise ConfigError("dev evaluation needs an STFT config")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    sink = _JsonlSink(out / "train_log.jsonl" if out is not None else None)
    opt = AdamW(config.betas, config.adam_eps, config.weight_decay)
    sched = PlateauScheduler(config.plateau_patience_epochs)
    history: list[dict] = []
    evals: list[dict] = []
    best_params = params.copy()
    best: dict | None = None

    def run_eval(epoch: int, step: int) -> None:
        nonlocal best, best_params
        report = evaluate(params, dev, stft_cfg, config.loss.c, pesq)
        improved = sched.step(report.selection_score, config.eval_every if epoch else 0)
        entry = {"epoch": epoch, "step": step, **report.to_dict(), "lr_multiplier": sched.multiplier}
        if out is not None:
            ckpt = out / f"ckpt_epoch{epoch:04d}.json"
            save_checkpoint(ckpt, params, step, {**(metadata or {}), "epoch": epoch, **report.to_dict()})
            entry["checkpoint"] = str(ckpt)
        if improved:
            best, best_params = entry, params.copy()
            if out is not None:
                save_checkpoint(out / "best.json", params, step, {**(metadata or {}), "epoch": epoch, **report.to_dict()})
        entry["best"] = improved
        evals.append(entry)
        log.info("eval epoch %d: M=%.3f siSDR=%.2f CD=%.2f lr x%g", epoch, report.selection_score, report.sisdr, report.cd, sched.multiplier)

    if dev:
        run_eval(0, 0)
    step = 0
    epoch = 0
    try:
        for batch in data:
            if batch.epoch >= config.max_epochs or (config.max_steps is not None and step >= config.max_steps):
                break
            if batch.epoch != epoch:
                if dev and batch.epoch % config.eval_every == 0:
                    run_eval(batch.epoch, step)
                epoch = batch.epoch
            loss, parts = batch_objective(params, batch, config, embedder)
            if not math.isfinite(loss.item()):
                raise TrainingDiverged(f"non-finite loss {loss.item()} at step {step} ({parts})")
            grads = gradients(params, loss)
            grad_norm = float("nan")
            if config.grad_clip is not None:
                grads, grad_norm = clip_by_global_norm(grads, config.grad_clip)
            lr = config.base_lr * sched.multiplier
            opt.step(params, grads, lr)
            row = {"step": step, "epoch": batch.epoch, "mode": config.mode, "loss": loss.item(), **parts,
                   "grad_norm": grad_norm, "lr_multiplier": sched.multiplier}
            history.append(row)
            sink.write(row)
            step += 1
        if dev and step and (not evals or evals[-1]["step"] != step):
            run_eval(epoch + 1, step)
    finally:
        sink.close()
    if out is not None:
        with open(out / "evals.jsonl", "w") as fh:
            for e in evals:
                fh.write(json.dumps(e) + "\n")
    if best is None:
        best_params = params.copy()
    return TrainResult(params, best_params, best, history, evals, opt, sched)
