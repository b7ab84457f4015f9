"""Miniature CRUSE mask estimator with one or three decoder branches.

Layout inside the network is (batch, channel, time, freq).  The encoder
halves the frequency axis at every layer with a causal 2x3 convolution, a
bank of parallel GRUs runs over time on the flattened bottleneck, and each
decoder branch mirrors the encoder with transposed convolutions.  Encoder
features enter every decoder branch through its own 1x1 convolution and are
added before the mirrored decoder layer.
"""
from __future__ import annotations

import base64
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .dsp import ComplexSpectrogram, apply_mask, compress_array
from .errors import ConfigError, InvalidInputError

BRANCHES = ("speech", "noise1", "noise2")
CHECKPOINT_FORMAT = "mixitse-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 3
    base_channels: int = 4
    num_gru: int = 2
    input_channels: int = 2
    output_channels: int = 2
    num_decoder_branches: int = 1
    freq_bins: int = 129
    stride: tuple[int, int] = (1, 2)
    kernel: tuple[int, int] = (2, 3)
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "stride", tuple(self.stride))
        object.__setattr__(self, "kernel", tuple(self.kernel))
        if min(self.num_layers, self.base_channels, self.num_gru, self.freq_bins) < 1:
            raise ConfigError("num_layers, base_channels, num_gru and freq_bins must be positive")
        if self.input_channels != 2 or self.output_channels != 2:
            raise ConfigError("input and output channels carry (re, im) and must both be 2")
        if self.num_decoder_branches not in (1, 3):
            raise ConfigError("num_decoder_branches must be 1 or 3")
        if self.stride != (1, 2) or self.kernel != (2, 3):
            raise ConfigError("only stride (1, 2) with 2x3 kernels is supported")
        if self.bottleneck_features % self.num_gru:
            raise ConfigError(
                f"bottleneck size {self.bottleneck_features} is not divisible into {self.num_gru} GRU groups"
            )

    @property
    def encoder_channels(self) -> list[int]:
        return [self.base_channels * 2**i for i in range(self.num_layers)]

    @property
    def decoder_channels(self) -> list[int]:
        """Output channels of each decoder layer, deepest first."""
        return self.encoder_channels[::-1][1:] + [self.output_channels]

    @property
    def padded_bins(self) -> int:
        """Frequency size seen by the encoder: ``freq_bins`` rounded up to a multiple of 2**L."""
        q = self.stride[1] ** self.num_layers
        return -(-self.freq_bins // q) * q

    @property
    def bottleneck_bins(self) -> int:
        return self.padded_bins // self.stride[1] ** self.num_layers

    @property
    def bottleneck_features(self) -> int:
        return self.encoder_channels[-1] * self.bottleneck_bins

    @property
    def gru_size(self) -> int:
        return self.bottleneck_features // self.num_gru

    @property
    def branches(self) -> tuple[str, ...]:
        return BRANCHES[: self.num_decoder_branches]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stride"], d["kernel"] = list(self.stride), list(self.kernel)
        return d


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    kt, kf = cfg.kernel
    shapes: dict[str, tuple[int, ...]] = {}
    chans = [cfg.input_channels] + cfg.encoder_channels
    for i in range(cfg.num_layers):
        shapes[f"enc{i}.weight"] = (chans[i + 1], chans[i], kt, kf)
        shapes[f"enc{i}.bias"] = (chans[i + 1],)
    h = cfg.gru_size
    for j in range(cfg.num_gru):
        shapes[f"gru{j}.w_x"] = (h, 3 * h)
        shapes[f"gru{j}.w_h"] = (h, 3 * h)
        shapes[f"gru{j}.b_x"] = (3 * h,)
        shapes[f"gru{j}.b_h"] = (3 * h,)
    enc = cfg.encoder_channels
    for branch in cfg.branches:
        for d in range(cfg.num_layers):
            c_in = enc[cfg.num_layers - 1 - d]
            shapes[f"{branch}.skip{d}.weight"] = (c_in, c_in, 1, 1)
            shapes[f"{branch}.skip{d}.bias"] = (c_in,)
            shapes[f"{branch}.dec{d}.weight"] = (c_in, cfg.decoder_channels[d], kt, kf)
            shapes[f"{branch}.dec{d}.bias"] = (cfg.decoder_channels[d],)
    return shapes


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, ad.Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> ad.Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def grads(self, loss: ad.Tensor) -> dict[str, np.ndarray]:
        """Gradient of ``loss`` for every parameter (zeros where it does not depend on one)."""
        return dict(zip(self.tensors, ad.grad(loss, self.tensors.values())))

    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays(self.config, self.arrays())

    @classmethod
    def from_arrays(cls, cfg: ModelConfig, arrays: dict[str, np.ndarray]) -> "ModelParams":
        expected = param_shapes(cfg)
        if set(arrays) != set(expected):
            raise InvalidInputError("parameter names do not match the model configuration")
        tensors = {}
        for name, shape in expected.items():
            a = np.array(arrays[name], dtype=np.float64)
            if a.shape != shape:
                raise InvalidInputError(f"{name}: shape {a.shape} != expected {shape}")
            if not np.all(np.isfinite(a)):
                raise InvalidInputError(f"{name}: non-finite values")
            tensors[name] = ad.Tensor(a)
        return cls(cfg, tensors)


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Xavier-uniform weights, zero biases, drawn in a fixed name order from ``seed``."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("bias") or ".b_" in name:
            arrays[name] = np.zeros(shape)
            continue
        if ".w_" in name:  # GRU, per-gate fans
            fan_in, fan_out = shape[0], shape[1] // 3
        else:
            receptive = shape[2] * shape[3]
            fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        arrays[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams.from_arrays(cfg, arrays)


def identity_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Parameters whose speech mask is exactly 1 + 0j everywhere."""
    params = init_params(cfg, seed)
    last = cfg.num_layers - 1
    params[f"speech.dec{last}.weight"].data[...] = 0.0
    params[f"speech.dec{last}.bias"].data[...] = [1.0, 0.0]
    return params


def _as_input(y) -> tuple[ad.Tensor, bool]:
    y = ad.tensor(y)
    if y.ndim == 3:
        return ad.reshape(y, (1,) + y.shape), True
    if y.ndim == 4:
        return y, False
    raise InvalidInputError(f"network input must be [2, K, N] or [B, 2, K, N], got {y.shape}")


def forward(params: ModelParams, y, branches: tuple[str, ...] | None = None) -> list[ad.Tensor]:
    """Run the network on compressed input channels ``[B?, 2, K, N]``.

    Returns one unbounded complex mask per requested branch, each shaped like
    the input.  Only the requested decoder branches are evaluated.
    """
    cfg = params.config
    branches = cfg.branches if branches is None else tuple(branches)
    unknown = set(branches) - set(cfg.branches)
    if unknown:
        raise InvalidInputError(f"model has no branch {sorted(unknown)}")
    x, squeeze = _as_input(y)
    bsz, chans, bins, frames = x.shape
    if chans != cfg.input_channels or bins != cfg.freq_bins:
        raise InvalidInputError(
            f"input has {chans} channels x {bins} bins, model expects {cfg.input_channels} x {cfg.freq_bins}"
        )
    p = params.tensors
    slope = cfg.leaky_slope

    h = ad.transpose(x, (0, 1, 3, 2))
    if cfg.padded_bins != bins:
        h = ad.pad(h, ((0, 0), (0, 0), (0, 0), (0, cfg.padded_bins - bins)))
    skips = []
    for i in range(cfg.num_layers):
        h = ad.conv2d(h, p[f"enc{i}.weight"], p[f"enc{i}.bias"], cfg.stride, ((1, 0), (1, 1)))
        h = ad.leaky_relu(h, slope)
        skips.append(h)

    c_l, f_l = cfg.encoder_channels[-1], cfg.bottleneck_bins
    flat = ad.reshape(ad.transpose(h, (0, 2, 1, 3)), (bsz, frames, c_l * f_l))
    size = cfg.gru_size
    groups = [
        ad.gru(flat[:, :, j * size : (j + 1) * size], p[f"gru{j}.w_x"], p[f"gru{j}.w_h"], p[f"gru{j}.b_x"], p[f"gru{j}.b_h"])
        for j in range(cfg.num_gru)
    ]
    merged = groups[0] if len(groups) == 1 else ad.concat(groups, axis=2)
    bottleneck = ad.transpose(ad.reshape(merged, (bsz, frames, c_l, f_l)), (0, 2, 1, 3))

    masks = []
    for branch in branches:
        h = bottleneck
        for d in range(cfg.num_layers):
            skip = skips[cfg.num_layers - 1 - d]
            h = h + ad.conv2d(skip, p[f"{branch}.skip{d}.weight"], p[f"{branch}.skip{d}.bias"])
            h = ad.conv_transpose2d(
                h, p[f"{branch}.dec{d}.weight"], p[f"{branch}.dec{d}.bias"], cfg.stride, ((0, 1), (1, 0))
            )
            if d < cfg.num_layers - 1:
                h = ad.leaky_relu(h, slope)
        if cfg.padded_bins != bins:
            h = h[:, :, :, :bins]
        mask = ad.transpose(h, (0, 1, 3, 2))
        if squeeze:
            mask = ad.reshape(mask, mask.shape[1:])
        masks.append(mask)
    return masks


def features(Y: np.ndarray, c: float = 0.3) -> np.ndarray:
    """Compressed complex spectra ``[..., K, N]`` as real channels ``[..., 2, K, N]``."""
    z = compress_array(Y, c)
    return np.stack([z.real, z.imag], axis=-3)


def mask_to_complex(mask: ad.Tensor) -> ad.Complex:
    return ad.Complex(mask[..., 0, :, :], mask[..., 1, :, :])


def enhance(params: ModelParams, Y: ComplexSpectrogram, c: float = 0.3) -> ComplexSpectrogram:
    """Apply the speech-branch mask to ``Y``; the noise branches are never evaluated."""
    (mask,) = forward(params, features(Y.bins, c), branches=("speech",))
    G = mask.data[0] + 1j * mask.data[1]
    return apply_mask(Y, G)


# ---------------------------------------------------------------------------
# checkpoints


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "<f8", "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(entry: dict) -> np.ndarray:
    raw = base64.b64decode(entry["data"])
    return np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()


def save_checkpoint(path: str | os.PathLike, params: ModelParams, step: int, metadata: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": params.config.to_dict(),
        "step": int(step),
        "metadata": metadata or {},
        "params": {k: _encode(v) for k, v in params.arrays().items()},
    }
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> tuple[ModelParams, int, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise InvalidInputError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise InvalidInputError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    cfg = ModelConfig(**doc["model_config"])
    params = ModelParams.from_arrays(cfg, {k: _decode(v) for k, v in doc["params"].items()})
    return params, int(doc["step"]), doc.get("metadata", {})
