"""Deterministic frame embedder standing in for a pretrained ASR encoder.

Each frame's power spectrum goes through a triangular mel filterbank, a log,
and a fixed random projection seeded from the config.  The same computation
runs on plain numpy spectra and on differentiable :class:`~mixitse.autodiff.Complex`
values, so embedding losses can train the enhancer.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np

from . import autodiff as ad
from .dsp import ComplexSpectrogram
from .errors import ConfigError, InvalidInputError

KINDS = ("logmel_projection",)


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "logmel_projection"
    num_mels: int = 16
    dim: int = 24
    seed: int = 1234
    log_eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown embedder kind {self.kind!r}; available: {KINDS}")
        if self.num_mels < 1 or self.dim < 1:
            raise ConfigError("num_mels and dim must be positive")
        if self.log_eps <= 0:
            raise ConfigError("log_eps must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EmbeddingSequence:
    vectors: np.ndarray  # [frame, dim]

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2:
            raise InvalidInputError(f"embedding sequence must be [frames, dim], got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("embedding contains non-finite values")
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def num_frames(self) -> int:
        return self.vectors.shape[0]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(num_mels: int, num_bins: int, sample_rate: int) -> np.ndarray:
    """Triangular filters on the mel scale, shape (num_mels, num_bins)."""
    freqs = np.linspace(0.0, sample_rate / 2.0, num_bins)
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), num_mels + 2))
    fb = np.zeros((num_mels, num_bins))
    for m in range(num_mels):
        lo, mid, hi = edges[m : m + 3]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
        if not fb[m].any():
            # filter narrower than the bin spacing: fall back to the nearest bin
            fb[m, np.argmin(np.abs(freqs - mid))] = 1.0
    return fb


class Embedder:
    """Log-mel + seeded projection embedder for spectra with ``num_bins`` bins."""

    def __init__(self, cfg: EmbedderConfig, num_bins: int, sample_rate: int):
        self.cfg = cfg
        self.num_bins = num_bins
        self.sample_rate = sample_rate

    @cached_property
    def filterbank(self) -> np.ndarray:
        return mel_filterbank(self.cfg.num_mels, self.num_bins, self.sample_rate)

    @cached_property
    def projection(self) -> np.ndarray:
        rng = np.random.default_rng(self.cfg.seed)
        return rng.standard_normal((self.cfg.num_mels, self.cfg.dim)) / np.sqrt(self.cfg.num_mels)

    def _check_bins(self, k: int) -> None:
        if k != self.num_bins:
            raise InvalidInputError(f"spectrum has {k} bins, embedder was built for {self.num_bins}")

    def embed_array(self, bins: np.ndarray) -> np.ndarray:
        """Embeddings of complex spectra ``[..., K, N]`` as ``[..., N, dim]``."""
        bins = np.asarray(bins)
        self._check_bins(bins.shape[-2])
        power = np.swapaxes(bins.real**2 + bins.imag**2, -1, -2)
        return np.log(power @ self.filterbank.T + self.cfg.log_eps) @ self.projection

    def embed_graph(self, z: ad.Complex) -> ad.Tensor:
        """Differentiable embeddings of a complex value ``[..., K, N]`` as ``[..., N, dim]``."""
        self._check_bins(z.shape[-2])
        nd = len(z.shape)
        axes = tuple(range(nd - 2)) + (nd - 1, nd - 2)
        power = ad.transpose(z.abs2(), axes)
        mel = ad.matmul(power, self.filterbank.T)
        return ad.matmul(ad.log(mel + self.cfg.log_eps), self.projection)

    def __call__(self, spec):
        return embed(spec, self)


def embed(spec, embedder: Embedder):
    """Embed a :class:`ComplexSpectrogram` (-> :class:`EmbeddingSequence`) or a graph value (-> Tensor)."""
    if isinstance(spec, ComplexSpectrogram):
        if spec.sample_rate != embedder.sample_rate:
            raise InvalidInputError("spectrogram sample rate differs from the embedder's")
        return EmbeddingSequence(embedder.embed_array(spec.bins))
    if isinstance(spec, ad.Complex):
        return embedder.embed_graph(spec)
    raise InvalidInputError(f"cannot embed {type(spec).__name__}")
