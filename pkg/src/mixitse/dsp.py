"""Waveform/spectrogram conversion, power-law compression and complex masking."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, InvalidInputError

DEFAULT_COMPRESSION = 0.3
COMPRESS_EPS = 1e-12


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidInputError(f"waveform must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise InvalidInputError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    frame_length: int = 256
    hop_length: int = 128
    window: str = "sqrt_hann"

    def __post_init__(self):
        if self.frame_length <= 0 or self.hop_length <= 0:
            raise ConfigError("frame_length and hop_length must be positive")
        if self.hop_length > self.frame_length:
            raise ConfigError("hop_length must not exceed frame_length")
        if self.window != "sqrt_hann":
            raise ConfigError(f"unsupported window {self.window!r}")

    @classmethod
    def for_rate(cls, sample_rate: int, frame_ms: float = 32.0, hop_ms: float = 16.0) -> "StftConfig":
        return cls(int(round(sample_rate * frame_ms / 1000)), int(round(sample_rate * hop_ms / 1000)))

    @property
    def num_bins(self) -> int:
        return self.frame_length // 2 + 1

    def analysis_window(self) -> np.ndarray:
        n = np.arange(self.frame_length)
        # periodic Hann, so the squared window overlap-adds to a constant
        return np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * n / self.frame_length))

    synthesis_window = analysis_window

    def cola_gain(self) -> float:
        """Constant overlap-add sum of analysis*synthesis windows, or raise if not constant."""
        prod = self.analysis_window() * self.synthesis_window()
        acc = np.zeros(self.hop_length)
        padded = np.concatenate([prod, np.zeros(-len(prod) % self.hop_length)])
        for chunk in padded.reshape(-1, self.hop_length):
            acc += chunk
        if np.ptp(acc) > 1e-10 * max(acc.max(), 1e-300) or acc.max() <= 0:
            raise ConfigError(
                f"window pair is not COLA at hop {self.hop_length} for frame {self.frame_length}"
            )
        return float(acc.mean())

    def num_frames(self, num_samples: int) -> int:
        return (num_samples - self.frame_length) // self.hop_length + 1

    def num_samples(self, num_frames: int) -> int:
        return (num_frames - 1) * self.hop_length + self.frame_length

    def interior(self, num_frames: int) -> slice:
        """Samples covered by the full window overlap (edges excluded)."""
        edge = self.frame_length - self.hop_length
        return slice(edge, self.num_samples(num_frames) - edge)


@dataclass(frozen=True)
class ComplexSpectrogram:
    """Complex STFT values indexed ``[k, n]`` (frequency bin, frame)."""

    bins: np.ndarray
    sample_rate: int
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128)
        if bins.ndim != 2:
            raise InvalidInputError(f"spectrogram must be 2-D [bins, frames], got {bins.shape}")
        if bins.shape[0] != self.config.num_bins:
            raise InvalidInputError(
                f"expected {self.config.num_bins} frequency bins for frame length "
                f"{self.config.frame_length}, got {bins.shape[0]}"
            )
        if not np.all(np.isfinite(bins)):
            raise InvalidInputError("spectrogram contains non-finite values")
        object.__setattr__(self, "bins", bins)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bins.shape

    @property
    def num_frames(self) -> int:
        return self.bins.shape[1]

    def with_bins(self, bins: np.ndarray) -> "ComplexSpectrogram":
        return ComplexSpectrogram(bins, self.sample_rate, self.config)


def stft(w: Waveform, cfg: StftConfig) -> ComplexSpectrogram:
    if len(w) < cfg.frame_length:
        raise InvalidInputError(
            f"waveform of {len(w)} samples is shorter than one frame ({cfg.frame_length})"
        )
    frames = np.lib.stride_tricks.sliding_window_view(w.samples, cfg.frame_length)[:: cfg.hop_length]
    bins = np.fft.rfft(frames * cfg.analysis_window(), axis=1).T
    return ComplexSpectrogram(bins, w.sample_rate, cfg)


def istft(spec: ComplexSpectrogram) -> Waveform:
    """Weighted overlap-add inverse; the output has ``(frames-1)*hop + frame`` samples."""
    cfg = spec.config
    gain = cfg.cola_gain()
    frames = np.fft.irfft(spec.bins.T, n=cfg.frame_length, axis=1) * cfg.synthesis_window()
    out = np.zeros(cfg.num_samples(spec.num_frames))
    for i, frame in enumerate(frames):
        out[i * cfg.hop_length : i * cfg.hop_length + cfg.frame_length] += frame
    return Waveform(out / gain, spec.sample_rate)


def _check_exponent(c: float, eps: float) -> None:
    if not 0.0 < c <= 1.0:
        raise InvalidInputError(f"compression exponent must lie in (0, 1], got {c}")
    if eps <= 0:
        raise InvalidInputError("eps must be positive")


def compress_array(z: np.ndarray, c: float = DEFAULT_COMPRESSION, eps: float = COMPRESS_EPS) -> np.ndarray:
    """``|z|^c * z/|z|`` with a smooth guard around ``z = 0``.

    Uses ``z * |z|^2 * (|z|^2 + eps^2)^((c-3)/2)``, which equals the plain form
    whenever ``|z| >> eps`` and goes to zero (with finite slope) at ``z = 0``.
    """
    _check_exponent(c, eps)
    z = np.asarray(z, dtype=np.complex128)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("compress: non-finite input")
    m2 = z.real**2 + z.imag**2
    return z * (m2 * (m2 + eps * eps) ** ((c - 3.0) / 2.0))


def compress(spec: ComplexSpectrogram, c: float = DEFAULT_COMPRESSION, eps: float = COMPRESS_EPS) -> ComplexSpectrogram:
    return spec.with_bins(compress_array(spec.bins, c, eps))


def compressed_parts(z: ad.Complex, c: float, eps: float) -> tuple[ad.Complex, ad.Tensor]:
    """Differentiable compression: returns the compressed complex value and its magnitude."""
    _check_exponent(c, eps)
    m2 = z.abs2()
    p = ad.pow(m2 + eps * eps, (c - 3.0) / 2.0)
    scale = m2 * p
    magnitude = ad.pow(m2, 1.5) * p
    return z.scale(scale), magnitude


def apply_mask(Y: ComplexSpectrogram, G: ComplexSpectrogram | np.ndarray) -> ComplexSpectrogram:
    g = G.bins if isinstance(G, ComplexSpectrogram) else np.asarray(G)
    if g.shape != Y.shape:
        raise InvalidInputError(f"mask shape {g.shape} does not match spectrogram {Y.shape}")
    return Y.with_bins(g * Y.bins)
