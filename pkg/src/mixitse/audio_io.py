"""Mono WAV reading and writing (PCM 16-bit and 32-bit float)."""
from __future__ import annotations

import os
import warnings

import numpy as np
from scipy.io import wavfile

from .dsp import Waveform
from .errors import ConfigError, InvalidInputError

FORMATS = ("pcm16", "float32")


def read_wav(path: str | os.PathLike, expected_rate: int | None = None) -> Waveform:
    with warnings.catch_warnings():
        # scipy warns about unknown chunks (LIST/INFO) that we do not need
        warnings.simplefilter("ignore", wavfile.WavFileWarning)
        rate, data = wavfile.read(os.fspath(path))
    if data.ndim != 1:
        raise InvalidInputError(f"{path}: only mono audio is supported, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise InvalidInputError(f"{path}: unsupported sample format {data.dtype}")
    if expected_rate is not None and rate != expected_rate:
        raise ConfigError(f"{path}: sample rate {rate} Hz does not match configured {expected_rate} Hz")
    return Waveform(samples, rate)


def write_wav(path: str | os.PathLike, w: Waveform, fmt: str = "float32") -> None:
    if fmt == "pcm16":
        data = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif fmt == "float32":
        data = w.samples.astype(np.float32)
    else:
        raise ConfigError(f"unknown WAV format {fmt!r}; choose from {FORMATS}")
    wavfile.write(os.fspath(path), w.sample_rate, data)
