"""Synthetic corpora, mixing and batching for the three training modes.

Real corpora are replaced by seeded generators: ``synth_speech`` produces
harmonic, syllable-modulated pseudo speech and ``synth_noise`` a handful of
noise types.  A JSON manifest of WAV files can be used instead.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from itertools import count
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy import signal

from .audio_io import read_wav, write_wav
from .dsp import StftConfig, Waveform, stft
from .errors import ConfigError, InvalidInputError
from .losses import MixtureBatch

NOISE_KINDS = ("white", "pink", "babble_like", "hum")
TARGET_POLICIES = ("reverberant_target", "windowed_rir_target", "noisy_target")
MODES = ("supervised", "unsupervised", "semi_supervised")
ROLES = ("speech", "noise", "noisy_speech")
RIR_WINDOW_MS = 50.0
ACTIVE_THRESHOLD_DB = -40.0


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x))) if len(x) else 0.0


def _normalize_rms(x: np.ndarray, target: float) -> np.ndarray:
    r = _rms(x)
    return x if r == 0.0 else x * (target / r)


def active_rms(x: np.ndarray, sample_rate: int, threshold_db: float = ACTIVE_THRESHOLD_DB, frame_ms: float = 20.0) -> float:
    """RMS over frames whose energy is within ``threshold_db`` of the loudest frame."""
    x = np.asarray(x, dtype=np.float64)
    n = max(1, int(sample_rate * frame_ms / 1000))
    usable = len(x) // n * n
    if usable == 0:
        return _rms(x)
    energy = np.mean(x[:usable].reshape(-1, n) ** 2, axis=1)
    if energy.max() == 0.0:
        return 0.0
    active = energy >= energy.max() * 10.0 ** (threshold_db / 10.0)
    return float(np.sqrt(energy[active].mean()))


def spectral_flatness(w: Waveform, frame_length: int = 256) -> float:
    """Geometric over arithmetic mean of the frame-averaged power spectrum (DC excluded)."""
    spec = stft(w, StftConfig(frame_length, frame_length // 2)).bins
    power = np.mean(np.abs(spec) ** 2, axis=1)[1:] + 1e-20
    return float(np.exp(np.mean(np.log(power))) / np.mean(power))


# ---------------------------------------------------------------------------
# generators


def synth_speech(seed: int, seconds: float, sample_rate: int) -> Waveform:
    """Pseudo speech: drifting harmonic voicing with per-syllable formants and fricative bursts."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    nyq = sample_rate / 2

    f0_base = rng.uniform(90.0, 220.0)
    vib = 0.08 * np.sin(2 * np.pi * rng.uniform(0.3, 1.5) * t + rng.uniform(0, 2 * np.pi))
    walk = np.cumsum(rng.standard_normal(n)) / np.sqrt(sample_rate) * 0.05
    f0 = f0_base * (1.0 + vib + walk - walk.mean())
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate

    rate = rng.uniform(3.0, 6.0)
    syl_phase = rate * t + rng.uniform(0, 1)
    syl_index = np.floor(syl_phase).astype(int)
    num_syl = syl_index.max() + 1
    voiced_on = rng.random(num_syl) < 0.8
    env = np.sin(np.pi * (syl_phase - syl_index)) ** 1.5 * voiced_on[syl_index]

    num_h = max(1, int(0.9 * nyq / (f0_base * 1.15)))
    harmonics = np.arange(1, num_h + 1)
    formants = np.stack(
        [rng.uniform(300, 900, num_syl), rng.uniform(900, 2200, num_syl), rng.uniform(2200, 3400, num_syl)], axis=1
    )
    widths = np.array([90.0, 150.0, 250.0])
    gains = np.array([1.0, 0.6, 0.3])
    hf = harmonics[None, :] * f0_base  # (1, H)
    table = np.zeros((num_syl, num_h))
    for k in range(3):
        table += gains[k] * np.exp(-0.5 * ((hf - formants[:, k : k + 1]) / widths[k]) ** 2)
    table = (table + 0.02) / np.sqrt(harmonics)[None, :]
    amp = table[syl_index]  # (n, H)
    alias = harmonics[None, :] * f0[:, None] >= nyq
    amp[alias] = 0.0
    offsets = rng.uniform(0, 2 * np.pi, num_h)
    voiced = np.einsum("nh,nh->n", amp, np.sin(phase[:, None] * harmonics[None, :] + offsets[None, :]))
    x = voiced * env

    lo = min(0.3 * sample_rate, nyq * 0.6)
    sos = signal.butter(4, [lo, 0.95 * nyq], btype="bandpass", fs=sample_rate, output="sos")
    fric = signal.sosfilt(sos, rng.standard_normal(n))
    burst = np.zeros(n)
    for s in range(num_syl):
        if rng.random() < 0.35:
            start = int(s / rate * sample_rate)
            if start >= n:
                continue
            length = int(rng.uniform(0.03, 0.08) * sample_rate)
            seg = slice(start, min(n, start + length))
            burst[seg] = np.hanning(length + 2)[1 : seg.stop - seg.start + 1]
    x = x + 0.25 * _rms(voiced) * fric / max(_rms(fric), 1e-12) * burst

    if _rms(x) == 0.0:  # degenerate very short clip
        x = np.sin(phase)
    target = float(np.clip(rng.uniform(0.05, 0.2), 0.03, 0.3))
    return Waveform(_normalize_rms(x, target), sample_rate)


def synth_noise(seed: int, seconds: float, sample_rate: int, kind: str = "white", mains_hz: float = 50.0) -> Waveform:
    if kind not in NOISE_KINDS:
        raise InvalidInputError(f"unknown noise kind {kind!r}; choose from {NOISE_KINDS}")
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    if kind == "white":
        x = rng.standard_normal(n)
    elif kind == "pink":
        spec = np.fft.rfft(rng.standard_normal(n))
        f = np.arange(len(spec))
        spec[1:] /= np.sqrt(f[1:])
        spec[0] = 0.0
        x = np.fft.irfft(spec, n=n)
    elif kind == "babble_like":
        talkers = rng.integers(0, 2**31, size=int(rng.integers(4, 7)))
        x = sum(synth_speech(int(s), seconds, sample_rate).samples for s in talkers)
    else:
        t = np.arange(n) / sample_rate
        x = np.zeros(n)
        for h in range(1, 6):
            if h * mains_hz < sample_rate / 2:
                x += 0.5 ** (h - 1) * np.sin(2 * np.pi * h * mains_hz * t + rng.uniform(0, 2 * np.pi))
        x += 0.02 * rng.standard_normal(n)
    return Waveform(_normalize_rms(x, rng.uniform(0.05, 0.2)), sample_rate)


def synth_rir(seed: int, sample_rate: int, rt60: float | None = None) -> np.ndarray:
    """Direct path plus an exponentially decaying noise tail; the direct path has unit amplitude."""
    rng = np.random.default_rng(seed)
    rt60 = rng.uniform(0.2, 0.6) if rt60 is None else rt60
    length = max(2, int(rt60 * sample_rate))
    delay = int(rng.integers(int(0.002 * sample_rate), int(0.01 * sample_rate) + 1))
    t = np.arange(length - delay - 1) / sample_rate
    tail = rng.standard_normal(len(t)) * np.exp(-6.9 * t / rt60) * 0.3
    rir = np.zeros(length)
    rir[delay] = 1.0
    rir[delay + 1 :] = tail
    return rir


def window_rir(rir: np.ndarray, sample_rate: int, window_ms: float = RIR_WINDOW_MS) -> np.ndarray:
    """Keep the RIR up to ``window_ms`` after its direct-path peak (rectangular window)."""
    rir = np.asarray(rir, dtype=np.float64)
    peak = int(np.argmax(np.abs(rir)))
    out = rir.copy()
    out[peak + int(round(window_ms * sample_rate / 1000)) :] = 0.0
    return out


def _reverb(x: np.ndarray, rir: np.ndarray) -> np.ndarray:
    return signal.fftconvolve(x, rir)[: len(x)]


def fit_length(x: np.ndarray, n: int, offset: int = 0) -> np.ndarray:
    if len(x) == 0:
        raise InvalidInputError("cannot fit an empty signal")
    reps = -(-(offset + n) // len(x))
    return np.tile(x, reps)[offset : offset + n]


# ---------------------------------------------------------------------------
# mixing


@dataclass(frozen=True)
class MixSpec:
    snr_db: float
    seed: int = 0
    clip_seconds: float = 10.0
    rir: np.ndarray | None = field(default=None, compare=False)
    target_policy: str = "reverberant_target"

    def __post_init__(self):
        if self.target_policy not in TARGET_POLICIES:
            raise ConfigError(f"unknown target policy {self.target_policy!r}")
        if self.clip_seconds <= 0:
            raise ConfigError("clip_seconds must be positive")


@dataclass(frozen=True)
class SupervisedExample:
    input: Waveform
    target: Waveform


@dataclass(frozen=True)
class UnsupervisedExample:
    x: Waveform
    n: Waveform
    y: Waveform


def snr_gain(reference: np.ndarray, noise: np.ndarray, snr_db: float, sample_rate: int) -> float:
    """Gain for ``noise`` so that active RMS of ``reference`` over noise RMS equals ``snr_db``."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    noise_rms = _rms(noise)
    speech_rms = active_rms(reference, sample_rate)
    if noise_rms <= 0.0 or speech_rms <= 0.0:
        raise InvalidInputError("cannot scale to an SNR with a silent signal")
    return speech_rms / (noise_rms * 10.0 ** (snr_db / 20.0))


def measured_snr(reference: np.ndarray, noise: np.ndarray, sample_rate: int) -> float:
    return 20.0 * math.log10(active_rms(reference, sample_rate) / _rms(noise))


def mix(speech: Waveform, noise: Waveform, spec: MixSpec) -> SupervisedExample:
    """Reverberate speech (optional), add noise at ``spec.snr_db`` and pick the training target.

    ``noisy_target`` expects ``speech`` to be a noisy recording and trains
    towards it unchanged.
    """
    if speech.sample_rate != noise.sample_rate:
        raise InvalidInputError("speech and noise sample rates differ")
    sr = speech.sample_rate
    s = speech.samples
    rev = s if spec.rir is None else _reverb(s, spec.rir)
    if spec.target_policy == "windowed_rir_target" and spec.rir is not None:
        target = _reverb(s, window_rir(spec.rir, sr))
    else:
        target = rev
    nz = fit_length(noise.samples, len(s))
    gain = snr_gain(rev, nz, spec.snr_db, sr)
    return SupervisedExample(Waveform(rev + gain * nz, sr), Waveform(target, sr))


def make_unsupervised(x: Waveform, n: Waveform) -> UnsupervisedExample:
    if x.sample_rate != n.sample_rate:
        raise InvalidInputError("sample rates differ")
    if len(x) != len(n):
        raise InvalidInputError(f"length mismatch: {len(x)} vs {len(n)}")
    return UnsupervisedExample(x, n, Waveform(x.samples + n.samples, x.sample_rate))


# ---------------------------------------------------------------------------
# corpora and batching


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    manifest: str | None = None
    sample_rate: int = 8000
    clip_seconds: float = 1.0
    num_clean: int = 32
    num_noisy: int = 50
    num_noise: int = 16
    num_rir: int = 8
    num_dev: int = 8
    snr_range: tuple[float, float] = (-5.0, 20.0)
    recording_snr_range: tuple[float, float] = (0.0, 20.0)
    rir_prob: float = 0.5
    noise_kinds: tuple[str, ...] = NOISE_KINDS
    target_policy: str = "reverberant_target"
    supervised_source: str = "clean"

    def __post_init__(self):
        object.__setattr__(self, "snr_range", tuple(self.snr_range))
        object.__setattr__(self, "recording_snr_range", tuple(self.recording_snr_range))
        object.__setattr__(self, "noise_kinds", tuple(self.noise_kinds))
        if self.source not in ("synthetic", "manifest"):
            raise ConfigError(f"unknown data source {self.source!r}")
        if self.source == "manifest" and not self.manifest:
            raise ConfigError("manifest source needs a manifest path")
        if self.target_policy not in TARGET_POLICIES:
            raise ConfigError(f"unknown target policy {self.target_policy!r}")
        if self.supervised_source not in ("clean", "noisy"):
            raise ConfigError("supervised_source must be 'clean' or 'noisy'")
        if set(self.noise_kinds) - set(NOISE_KINDS):
            raise ConfigError(f"unknown noise kinds {set(self.noise_kinds) - set(NOISE_KINDS)}")
        if self.sample_rate <= 0 or self.clip_seconds <= 0:
            raise ConfigError("sample_rate and clip_seconds must be positive")
        if not 0.0 <= self.rir_prob <= 1.0:
            raise ConfigError("rir_prob must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("snr_range", "recording_snr_range", "noise_kinds"):
            d[k] = list(d[k])
        return d


@dataclass
class Corpus:
    clean: list[Waveform]
    noisy: list[Waveform]
    noise: list[Waveform]
    rirs: list[np.ndarray]
    dev: list[tuple[Waveform, Waveform]]  # (noisy input, clean reference)
    clean_rirs: list[np.ndarray | None] = field(default_factory=list)


def _seeds(rng: np.random.Generator, k: int) -> list[int]:
    return [int(s) for s in rng.integers(0, 2**31, size=k)]


def _noisy_recording(seed: int, cfg: DataConfig, rirs: list[np.ndarray]) -> Waveform:
    rng = np.random.default_rng(seed)
    s_seed, n_seed = _seeds(rng, 2)
    speech = synth_speech(s_seed, cfg.clip_seconds, cfg.sample_rate)
    kind = cfg.noise_kinds[int(rng.integers(len(cfg.noise_kinds)))]
    noise = synth_noise(n_seed, cfg.clip_seconds, cfg.sample_rate, kind)
    rir = rirs[int(rng.integers(len(rirs)))] if rirs and rng.random() < cfg.rir_prob else None
    snr = rng.uniform(*cfg.recording_snr_range)
    return mix(speech, noise, MixSpec(snr, seed, cfg.clip_seconds, rir)).input


def synthetic_corpus(cfg: DataConfig, seed: int) -> Corpus:
    rng = np.random.default_rng(seed)
    rirs = [synth_rir(s, cfg.sample_rate) for s in _seeds(rng, cfg.num_rir)]
    clean = [synth_speech(s, cfg.clip_seconds, cfg.sample_rate) for s in _seeds(rng, cfg.num_clean)]
    noise = []
    for i, s in enumerate(_seeds(rng, cfg.num_noise)):
        noise.append(synth_noise(s, cfg.clip_seconds, cfg.sample_rate, cfg.noise_kinds[i % len(cfg.noise_kinds)]))
    noisy = [_noisy_recording(s, cfg, rirs) for s in _seeds(rng, cfg.num_noisy)]
    dev = []
    for i, s in enumerate(_seeds(rng, cfg.num_dev)):
        r = np.random.default_rng(s)
        sp = synth_speech(int(r.integers(2**31)), cfg.clip_seconds, cfg.sample_rate)
        kind = cfg.noise_kinds[i % len(cfg.noise_kinds)]
        nz = synth_noise(int(r.integers(2**31)), cfg.clip_seconds, cfg.sample_rate, kind)
        ex = mix(sp, nz, MixSpec(r.uniform(0.0, 10.0), s, cfg.clip_seconds))
        dev.append((ex.input, ex.target))
    return Corpus(clean, noisy, noise, rirs, dev)


def _fit_clip(w: Waveform, n: int) -> Waveform:
    if len(w) >= n:
        return Waveform(w.samples[:n], w.sample_rate)
    return Waveform(np.concatenate([w.samples, np.zeros(n - len(w))]), w.sample_rate)


def load_manifest(path: str | os.PathLike) -> list[dict]:
    with open(path) as fh:
        entries = json.load(fh)
    if not isinstance(entries, list):
        raise ConfigError(f"{path}: manifest must be a JSON list")
    base = Path(path).parent
    out = []
    for e in entries:
        if not isinstance(e, dict) or "path" not in e or e.get("role") not in ROLES:
            raise ConfigError(f"{path}: bad manifest entry {e!r}")
        unknown = set(e) - {"path", "role", "rir_path"}
        if unknown:
            raise ConfigError(f"{path}: unknown manifest keys {sorted(unknown)}")
        resolved = dict(e)
        for key in ("path", "rir_path"):
            if key in e and not os.path.isabs(e[key]):
                resolved[key] = str(base / e[key])
        out.append(resolved)
    return out


def manifest_corpus(cfg: DataConfig, seed: int) -> Corpus:
    entries = load_manifest(cfg.manifest)
    n = int(round(cfg.clip_seconds * cfg.sample_rate))
    clean, clean_rirs, noisy, noise = [], [], [], []
    for e in entries:
        w = _fit_clip(read_wav(e["path"], cfg.sample_rate), n)
        if e["role"] == "speech":
            clean.append(w)
            clean_rirs.append(read_wav(e["rir_path"], cfg.sample_rate).samples if "rir_path" in e else None)
        elif e["role"] == "noisy_speech":
            noisy.append(w)
        else:
            noise.append(w)
    if not noise:
        raise ConfigError("manifest lists no noise clips")
    rng = np.random.default_rng(seed)
    held = min(cfg.num_dev, max(0, len(clean) - 1))
    dev = []
    for i in range(held):
        sp = clean.pop()
        clean_rirs.pop()
        nz = noise[i % len(noise)]
        ex = mix(sp, nz, MixSpec(rng.uniform(0.0, 10.0), seed, cfg.clip_seconds))
        dev.append((ex.input, ex.target))
    rirs = [r for r in clean_rirs if r is not None]
    return Corpus(clean, noisy, noise, rirs, dev, clean_rirs)


def build_corpus(cfg: DataConfig, seed: int) -> Corpus:
    return synthetic_corpus(cfg, seed) if cfg.source == "synthetic" else manifest_corpus(cfg, seed)


def write_corpus(corpus: Corpus, out_dir: str | os.PathLike, fmt: str = "float32") -> Path:
    """Write every clip as WAV plus ``manifest.json`` and ``dev_pairs.json``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for role, clips in (("speech", corpus.clean), ("noisy_speech", corpus.noisy), ("noise", corpus.noise)):
        for i, w in enumerate(clips):
            name = f"{role}_{i:04d}.wav"
            write_wav(out / name, w, fmt)
            entries.append({"path": name, "role": role})
    dev = []
    for i, (noisy, clean) in enumerate(corpus.dev):
        write_wav(out / f"dev_noisy_{i:04d}.wav", noisy, fmt)
        write_wav(out / f"dev_clean_{i:04d}.wav", clean, fmt)
        dev.append({"reference": f"dev_clean_{i:04d}.wav", "estimate": f"dev_noisy_{i:04d}.wav"})
    # unprocessed dev inputs against their references, usable as an evaluation baseline
    (out / "dev_pairs.json").write_text(json.dumps(dev, indent=1))
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(entries, indent=1))
    return manifest


@dataclass
class SupervisedBatch:
    Y: np.ndarray  # [B, K, N] complex input spectra
    S: np.ndarray  # [B, K, N] complex target spectra
    inputs: np.ndarray  # [B, samples]
    targets: np.ndarray


@dataclass
class UnsupervisedBatch:
    mixture: MixtureBatch
    x: np.ndarray  # [B, samples]
    n: np.ndarray


@dataclass
class Batch:
    epoch: int
    step: int
    supervised: SupervisedBatch | None = None
    unsupervised: UnsupervisedBatch | None = None


def _epoch_order(rng: np.random.Generator, pool: int, count_: int) -> list[int]:
    order: list[int] = []
    while len(order) < count_:
        order.extend(int(i) for i in rng.permutation(pool))
    return order[:count_]


def supervised_example(corpus: Corpus, cfg: DataConfig, rng: np.random.Generator, index: int) -> SupervisedExample:
    if cfg.supervised_source == "noisy":
        speech, rir = corpus.noisy[index], None
    else:
        speech = corpus.clean[index]
        rir = None
        if corpus.clean_rirs and corpus.clean_rirs[index] is not None:
            rir = corpus.clean_rirs[index]
        elif corpus.rirs and rng.random() < cfg.rir_prob:
            rir = corpus.rirs[int(rng.integers(len(corpus.rirs)))]
    noise = corpus.noise[int(rng.integers(len(corpus.noise)))]
    offset = int(rng.integers(len(noise)))
    noise = Waveform(fit_length(noise.samples, len(speech), offset), noise.sample_rate)
    spec = MixSpec(rng.uniform(*cfg.snr_range), index, cfg.clip_seconds, rir, cfg.target_policy)
    return mix(speech, noise, spec)


def unsupervised_example(corpus: Corpus, cfg: DataConfig, rng: np.random.Generator, index: int) -> UnsupervisedExample:
    x = corpus.noisy[index]
    noise = corpus.noise[int(rng.integers(len(corpus.noise)))]
    nz = fit_length(noise.samples, len(x), int(rng.integers(len(noise))))
    gain = snr_gain(x.samples, nz, rng.uniform(*cfg.snr_range), x.sample_rate)
    return make_unsupervised(x, Waveform(gain * nz, x.sample_rate))


def _spectra(waves: list[np.ndarray], sample_rate: int, stft_cfg: StftConfig) -> np.ndarray:
    return np.stack([stft(Waveform(w, sample_rate), stft_cfg).bins for w in waves])


def supervised_batch(examples: list[SupervisedExample], stft_cfg: StftConfig) -> SupervisedBatch:
    sr = examples[0].input.sample_rate
    inputs = [e.input.samples for e in examples]
    targets = [e.target.samples for e in examples]
    return SupervisedBatch(_spectra(inputs, sr, stft_cfg), _spectra(targets, sr, stft_cfg), np.stack(inputs), np.stack(targets))


def unsupervised_batch(examples: list[UnsupervisedExample], stft_cfg: StftConfig) -> UnsupervisedBatch:
    sr = examples[0].x.sample_rate
    xs = [e.x.samples for e in examples]
    ns = [e.n.samples for e in examples]
    X, N = _spectra(xs, sr, stft_cfg), _spectra(ns, sr, stft_cfg)
    return UnsupervisedBatch(MixtureBatch.from_parts(X, N), np.stack(xs), np.stack(ns))


def batch_iter(
    cfg: DataConfig,
    mode: str,
    batch_size: int,
    epoch_size: int,
    seed: int,
    stft_cfg: StftConfig,
    corpus: Corpus | None = None,
    num_epochs: int | None = None,
) -> Iterator[Batch]:
    """Deterministic stream of batches, ``epoch_size // batch_size`` per epoch.

    Each epoch draws from its own generator seeded by ``(seed, epoch)``, so
    the stream does not depend on how fast it is consumed.  Semi-supervised
    mode yields a supervised and an unsupervised sub-batch every step.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    if batch_size < 1 or epoch_size < batch_size or epoch_size % batch_size:
        raise ConfigError("epoch_size must be a positive multiple of batch_size")
    corpus = build_corpus(cfg, seed) if corpus is None else corpus
    want_sup = mode in ("supervised", "semi_supervised")
    want_unsup = mode in ("unsupervised", "semi_supervised")
    sup_pool = len(corpus.noisy) if cfg.supervised_source == "noisy" else len(corpus.clean)
    if want_sup and sup_pool == 0:
        raise ConfigError("no speech available for supervised batches")
    if want_unsup and not corpus.noisy:
        raise ConfigError("no noisy speech available for unsupervised batches")
    steps = epoch_size // batch_size
    epochs = count() if num_epochs is None else range(num_epochs)
    for epoch in epochs:
        rng = np.random.default_rng([seed, epoch])
        sup_order = _epoch_order(rng, sup_pool, epoch_size) if want_sup else []
        unsup_order = _epoch_order(rng, len(corpus.noisy), epoch_size) if want_unsup else []
        for step in range(steps):
            window = slice(step * batch_size, (step + 1) * batch_size)
            batch = Batch(epoch, step)
            if want_sup:
                batch.supervised = supervised_batch(
                    [supervised_example(corpus, cfg, rng, i) for i in sup_order[window]], stft_cfg
                )
            if want_unsup:
                batch.unsupervised = unsupervised_batch(
                    [unsupervised_example(corpus, cfg, rng, i) for i in unsup_order[window]], stft_cfg
                )
            yield batch
