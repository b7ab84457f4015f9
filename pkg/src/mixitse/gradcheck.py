"""Finite-difference checks of reverse-mode gradients through the network and every loss."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .embedder import Embedder, EmbedderConfig
from .losses import (
    LossConfig,
    MixtureBatch,
    combine_unsupervised,
    disentanglement_loss,
    embedding_loss,
    mixit_loss,
    semi_supervised_loss,
    spectral_loss,
)
from .model import ModelConfig, ModelParams, features, forward, init_params, mask_to_complex

LOSSES = ("spectral", "mixit", "embedding", "disentanglement", "unsupervised", "semi_supervised")


def tiny_config() -> ModelConfig:
    return ModelConfig(num_layers=2, base_channels=4, num_gru=2, freq_bins=32, num_decoder_branches=3)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max|a - n| / max(max|a|, max|n|)``; 0 when both are identically zero."""
    a, n = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - n).max() / scale)


def central_difference(f: Callable[[], float], array: np.ndarray, index, h: float) -> float:
    """d f / d array[index] by central differences, restoring the entry afterwards."""
    old = array[index]
    array[index] = old + h
    up = f()
    array[index] = old - h
    down = f()
    array[index] = old
    return (up - down) / (2.0 * h)


def numerical_gradient(f: Callable[[], float], array: np.ndarray, h: float = 1e-6) -> np.ndarray:
    out = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        out[index] = central_difference(f, array, index, h)
    return out


def directional_difference(f: Callable[[], float], array: np.ndarray, direction: np.ndarray, h: float) -> float:
    base = array.copy()
    array[...] = base + h * direction
    up = f()
    array[...] = base - h * direction
    down = f()
    array[...] = base
    return (up - down) / (2.0 * h)


@dataclass
class GradcheckReport:
    errors: dict[str, dict[str, float]] = field(default_factory=dict)  # loss -> tensor -> error

    @property
    def max_error(self) -> float:
        return max((e for per in self.errors.values() for e in per.values()), default=0.0)

    def worst(self) -> tuple[str, str, float]:
        return max(((l, t, e) for l, per in self.errors.items() for t, e in per.items()), key=lambda x: x[2])


@dataclass
class Problem:
    """Random spectra and an embedder sized for ``cfg``."""

    cfg: ModelConfig
    loss_cfg: LossConfig
    embedder: Embedder
    S: np.ndarray
    Y_sup: np.ndarray
    mixture: MixtureBatch

    @classmethod
    def random(cls, cfg: ModelConfig, seed: int = 0, batch: int = 2, frames: int = 8,
               loss_cfg: LossConfig | None = None) -> "Problem":
        rng = np.random.default_rng(seed)

        def spectra():
            return rng.standard_normal((batch, cfg.freq_bins, frames)) + 1j * rng.standard_normal((batch, cfg.freq_bins, frames))

        S = spectra()
        Y_sup = S + 0.5 * spectra()
        mixture = MixtureBatch.from_parts(spectra(), 0.7 * spectra())
        embedder = Embedder(EmbedderConfig(num_mels=8, dim=6), cfg.freq_bins, 8000)
        return cls(cfg, loss_cfg or LossConfig(), embedder, S, Y_sup, mixture)

    def outputs(self, params: ModelParams, Y: np.ndarray, branches=None) -> list[ad.Complex]:
        masks = forward(params, features(Y, self.loss_cfg.c), branches)
        Yc = ad.Complex.constant(Y)
        return [mask_to_complex(m) * Yc for m in masks]

    def loss(self, name: str, params: ModelParams, unsup_scale: float = 0.5) -> ad.Tensor:
        c = self.loss_cfg
        if name == "spectral":
            (s_hat,) = self.outputs(params, self.Y_sup, ("speech",))
            return spectral_loss(self.S, s_hat, c)
        s, n1, n2 = self.outputs(params, self.mixture.Y)
        emb = self.embedder.embed_graph
        if name == "mixit":
            return mixit_loss(s, n1, n2, self.mixture, c)
        if name == "embedding":
            return embedding_loss(emb(s), self.embedder.embed_array(self.mixture.X))
        if name == "disentanglement":
            return disentanglement_loss(emb(s), emb(n1), emb(n2), c.dis_normalize)
        s_emb = emb(s)
        terms = {
            "mixit": mixit_loss(s, n1, n2, self.mixture, c),
            "emb": embedding_loss(s_emb, ad.Tensor(self.embedder.embed_array(self.mixture.X))),
            "dis": disentanglement_loss(s_emb, emb(n1), emb(n2), c.dis_normalize),
        }
        unsup = combine_unsupervised(terms, c)
        if name == "unsupervised":
            return unsup
        if name == "semi_supervised":
            (s_hat,) = self.outputs(params, self.Y_sup, ("speech",))
            return semi_supervised_loss(spectral_loss(self.S, s_hat, c), unsup_scale * unsup)
        raise ValueError(f"unknown loss {name!r}")


def check_model_gradients(
    cfg: ModelConfig | None = None,
    losses: tuple[str, ...] = LOSSES,
    seed: int = 0,
    samples_per_tensor: int = 12,
    full_below: int = 24,
    h: float = 1e-6,
) -> GradcheckReport:
    """Compare backprop with central differences for every parameter tensor and loss.

    Tensors with at most ``full_below`` entries are checked entry by entry.
    Larger ones are checked on ``samples_per_tensor`` entries (always including
    the largest analytic gradient) plus one random whole-tensor direction.
    The error per tensor is :func:`relative_error` over the checked values.
    """
    cfg = cfg or tiny_config()
    problem = Problem.random(cfg, seed)
    params = init_params(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    report = GradcheckReport()
    for name in losses:
        loss = problem.loss(name, params)
        grads = params.grads(loss)

        def f() -> float:
            return problem.loss(name, params).item()

        per: dict[str, float] = {}
        for tname, g in grads.items():
            data = params[tname].data
            if data.size <= full_below:
                per[tname] = relative_error(g, numerical_gradient(f, data, h))
                continue
            flat = rng.choice(data.size, size=min(samples_per_tensor, data.size), replace=False)
            flat = np.unique(np.append(flat, np.argmax(np.abs(g))))
            idx = [np.unravel_index(i, data.shape) for i in flat]
            analytic = np.array([g[i] for i in idx])
            numeric = np.array([central_difference(f, data, i, h) for i in idx])
            direction = rng.standard_normal(data.shape)
            analytic = np.append(analytic, np.sum(g * direction))
            numeric = np.append(numeric, directional_difference(f, data, direction, h))
            per[tname] = relative_error(analytic, numeric)
        report.errors[name] = per
    return report
