"""Training losses as differentiable scalars.

Spectral quantities are :class:`~mixitse.autodiff.Complex` values (numpy
complex arrays are accepted and treated as constants) with the last two axes
being (frequency, frame).  Any leading axes are batch items: per-item sums
over frequency and time are averaged over the batch.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .dsp import compressed_parts
from .embedder import Embedder, EmbeddingSequence
from .errors import ConfigError, InvalidInputError


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.3
    c: float = 0.3
    alpha_e: float = 0.004
    alpha_d: float = 0.0005
    eps: float = 1e-8
    dis_normalize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if not 0.0 < self.c <= 1.0:
            raise ConfigError(f"compression exponent must lie in (0, 1], got {self.c}")
        if self.alpha_e < 0 or self.alpha_d < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MixtureBatch:
    """Spectra of noisy recordings ``X``, extra noise ``N`` and their sum ``Y``."""

    X: np.ndarray
    N: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        if not (self.X.shape == self.N.shape == self.Y.shape):
            raise InvalidInputError("X, N and Y must share one shape")
        scale = max(np.abs(self.Y).max(), 1e-300)
        if np.abs(self.Y - (self.X + self.N)).max() > 1e-12 * scale:
            raise InvalidInputError("mixture is inconsistent: Y != X + N")

    @classmethod
    def from_parts(cls, X: np.ndarray, N: np.ndarray) -> "MixtureBatch":
        X, N = np.asarray(X, dtype=np.complex128), np.asarray(N, dtype=np.complex128)
        return cls(X, N, X + N)


def _same_shape(*values) -> None:
    shapes = {tuple(v.shape) for v in values}
    if len(shapes) != 1:
        raise InvalidInputError(f"shape mismatch: {sorted(shapes)}")


def _item_sum(t: ad.Tensor) -> ad.Tensor:
    return ad.sum_(t, axis=(-2, -1))


def _batch_mean(t: ad.Tensor) -> ad.Tensor:
    return ad.mean(t) if t.ndim else t


def spectral_loss_items(S, S_hat, cfg: LossConfig) -> ad.Tensor:
    """Per-item complex compressed spectral loss (one value per leading index)."""
    S, S_hat = ad.as_complex(S), ad.as_complex(S_hat)
    _same_shape(S, S_hat)
    if len(S.shape) < 2:
        raise InvalidInputError("spectra need (frequency, frame) axes")
    zs, ms = compressed_parts(S, cfg.c, cfg.eps)
    zh, mh = compressed_parts(S_hat, cfg.c, cfg.eps)
    dm = ms - mh
    dz = zs - zh
    magnitude = _item_sum(dm * dm)
    complex_term = _item_sum(dz.abs2())
    return (1.0 - cfg.lam) * magnitude + cfg.lam * complex_term


def spectral_loss(S, S_hat, cfg: LossConfig) -> ad.Tensor:
    return _batch_mean(spectral_loss_items(S, S_hat, cfg))


def mixit_assignments(S_hat, N1, N2, batch: MixtureBatch, cfg: LossConfig) -> tuple[ad.Tensor, ad.Tensor]:
    """Per-item losses of the two ways to assign the noise outputs to the inputs."""
    S_hat, N1, N2 = (ad.as_complex(z) for z in (S_hat, N1, N2))
    _same_shape(S_hat, N1, N2, batch.X)
    first = spectral_loss_items(S_hat + N1, batch.X, cfg) + spectral_loss_items(N2, batch.N, cfg)
    second = spectral_loss_items(S_hat + N2, batch.X, cfg) + spectral_loss_items(N1, batch.N, cfg)
    return first, second


def mixit_loss(S_hat, N1, N2, batch: MixtureBatch, cfg: LossConfig) -> ad.Tensor:
    """Mixture-invariant loss; the speech estimate is always paired with ``X``."""
    first, second = mixit_assignments(S_hat, N1, N2, batch, cfg)
    return _batch_mean(ad.minimum(first, second))


def _embedding_tensor(e) -> ad.Tensor:
    return ad.Tensor(e.vectors) if isinstance(e, EmbeddingSequence) else ad.tensor(e)


def embedding_loss(S_emb, X_emb) -> ad.Tensor:
    """Mean squared error over all frames and dimensions."""
    a, b = _embedding_tensor(S_emb), _embedding_tensor(X_emb)
    _same_shape(a, b)
    d = a - b
    return ad.mean(d * d)


def _flatten_items(e: ad.Tensor) -> ad.Tensor:
    if e.ndim < 2:
        raise InvalidInputError("embeddings need (frame, dim) axes")
    lead = e.shape[:-2]
    return ad.reshape(e, lead + (e.shape[-2] * e.shape[-1],))


def _normalized(v: ad.Tensor) -> ad.Tensor:
    norm = ad.sqrt(ad.sum_(v * v, axis=-1, keepdims=True) + 1e-24)
    return v / norm


def disentanglement_loss(S_emb, N1_emb, N2_emb, normalize: bool = True) -> ad.Tensor:
    """Sum of dot products between the speech embedding and each noise embedding.

    With ``normalize`` each flattened sequence is scaled to unit L2 norm first,
    which bounds the loss to [-2, 2].
    """
    s, n1, n2 = (_flatten_items(_embedding_tensor(e)) for e in (S_emb, N1_emb, N2_emb))
    _same_shape(s, n1, n2)
    if normalize:
        s, n1, n2 = _normalized(s), _normalized(n1), _normalized(n2)
    per_item = ad.sum_(s * n1, axis=-1) + ad.sum_(s * n2, axis=-1)
    return _batch_mean(per_item)


def unsupervised_terms(outputs, batch: MixtureBatch, embedder: Embedder | None, cfg: LossConfig) -> dict[str, ad.Tensor]:
    S_hat, N1, N2 = (ad.as_complex(z) for z in outputs)
    terms = {"mixit": mixit_loss(S_hat, N1, N2, batch, cfg)}
    if embedder is None:
        if cfg.alpha_e or cfg.alpha_d:
            raise ConfigError("embedding or disentanglement weight is set but no embedder was given")
        return terms
    s_emb = embedder.embed_graph(S_hat)
    x_emb = ad.Tensor(embedder.embed_array(batch.X))
    terms["emb"] = embedding_loss(s_emb, x_emb)
    terms["dis"] = disentanglement_loss(
        s_emb, embedder.embed_graph(N1), embedder.embed_graph(N2), normalize=cfg.dis_normalize
    )
    return terms


def combine_unsupervised(terms: dict[str, ad.Tensor], cfg: LossConfig) -> ad.Tensor:
    total = terms["mixit"]
    if "emb" in terms:
        total = total + cfg.alpha_e * terms["emb"]
    if "dis" in terms:
        total = total + cfg.alpha_d * terms["dis"]
    return total


def unsupervised_loss(outputs, batch: MixtureBatch, embedder: Embedder | None, cfg: LossConfig) -> ad.Tensor:
    """MixIT plus weighted embedding and disentanglement penalties."""
    return combine_unsupervised(unsupervised_terms(outputs, batch, embedder, cfg), cfg)


def semi_supervised_loss(supervised, unsupervised) -> ad.Tensor:
    sup, unsup = ad.tensor(supervised), ad.tensor(unsupervised)
    if sup.size != 1 or unsup.size != 1:
        raise InvalidInputError("semi-supervised loss combines two scalars")
    return sup + unsup
