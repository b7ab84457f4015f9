"""Evaluation metrics and the checkpoint-selection score."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .dsp import StftConfig, Waveform, stft
from .errors import InvalidInputError

SISDR_EPS = 1e-10
CD_ORDER = 24
CD_SCALE = 10.0 / math.log(10.0)
SILENCE_DB = -60.0

# Optional PESQ-like plugin: (reference, estimate) -> score.  None means the term is 0.
PesqFn = Callable[[Waveform, Waveform], float]


def _pair(reference, estimate) -> tuple[np.ndarray, np.ndarray]:
    s = reference.samples if isinstance(reference, Waveform) else np.asarray(reference, dtype=np.float64)
    e = estimate.samples if isinstance(estimate, Waveform) else np.asarray(estimate, dtype=np.float64)
    if s.shape != e.shape:
        raise InvalidInputError(f"reference and estimate lengths differ: {s.shape} vs {e.shape}")
    return s, e


def sisdr(reference, estimate, eps: float = SISDR_EPS) -> float:
    """Scale-invariant SDR in dB.

    Both energies are guarded by ``eps * ||estimate||^2``, so the value stays
    exactly invariant to the estimate's gain and is capped at about
    ``+-10*log10(1/eps)`` (100 dB by default).  A silent estimate scores the floor.
    """
    s, e = _pair(reference, estimate)
    energy = float(s @ s)
    if energy == 0.0:
        raise InvalidInputError("siSDR reference is all zeros")
    alpha = float(e @ s) / energy
    target = alpha * s
    residual = target - e
    guard = eps * float(e @ e)
    if guard == 0.0:
        return -10.0 * math.log10((1.0 + eps) / eps)
    return 10.0 * math.log10((float(target @ target) + guard) / (float(residual @ residual) + guard))


def _cepstra(x: np.ndarray, cfg: StftConfig, order: int) -> tuple[np.ndarray, np.ndarray]:
    spec = stft(Waveform(x, 1), cfg).bins
    power = np.abs(spec) ** 2
    logmag = 0.5 * np.log(np.maximum(power, 1e-20))
    ceps = np.fft.irfft(logmag, n=cfg.frame_length, axis=0)[: order + 1]
    frame_db = 10.0 * np.log10(np.maximum(power.mean(axis=0), 1e-30))
    return ceps, frame_db


def cepstral_distance(
    reference,
    estimate,
    order: int = CD_ORDER,
    include_c0: bool = True,
    frame_length: int = 256,
    hop_length: int = 128,
) -> float:
    """Frame-averaged cepstral distance in dB.

    Per frame: ``10/ln10 * sqrt((c0 - c0')^2 + 2 * sum_{k=1..order} (ck - ck')^2)``.
    Frames more than 60 dB below the loudest frame of either signal are skipped.
    """
    s, e = _pair(reference, estimate)
    cfg = StftConfig(frame_length, hop_length)
    if len(s) < frame_length:
        raise InvalidInputError("signals are shorter than one analysis frame")
    cs, ds = _cepstra(s, cfg, order)
    ce, de = _cepstra(e, cfg, order)
    active = (ds > ds.max() + SILENCE_DB) & (de > de.max() + SILENCE_DB)
    active &= np.isfinite(ds) & np.isfinite(de) & (ds > -290) & (de > -290)
    if not active.any():
        raise InvalidInputError("no active frames to compare")
    diff = cs[:, active] - ce[:, active]
    sq = 2.0 * (diff[1:] ** 2).sum(axis=0)
    if include_c0:
        sq = sq + diff[0] ** 2
    return float(CD_SCALE * np.sqrt(sq).mean())


def selection_metric(sisdr_db: float, cd: float, pesq: float | None = None) -> float:
    """Checkpoint-selection score ``PESQ + 0.2 * siSDR - CD`` (PESQ term 0 when absent)."""
    return (0.0 if pesq is None else pesq) + 0.2 * sisdr_db - cd


@dataclass(frozen=True)
class MetricReport:
    sisdr: float
    cd: float
    pesq_proxy: float | None = None

    @property
    def selection_score(self) -> float:
        return selection_metric(self.sisdr, self.cd, self.pesq_proxy)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["selection_score"] = self.selection_score
        return d


def evaluate_pair(reference: Waveform, estimate: Waveform, pesq: PesqFn | None = None) -> MetricReport:
    n = min(len(reference), len(estimate))
    ref = Waveform(reference.samples[:n], reference.sample_rate)
    est = Waveform(estimate.samples[:n], estimate.sample_rate)
    return MetricReport(sisdr(ref, est), cepstral_distance(ref, est), None if pesq is None else pesq(ref, est))


def mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    if not reports:
        raise InvalidInputError("no reports to average")
    pesq = [r.pesq_proxy for r in reports]
    return MetricReport(
        float(np.mean([r.sisdr for r in reports])),
        float(np.mean([r.cd for r in reports])),
        None if any(p is None for p in pesq) else float(np.mean(pesq)),
    )


def select_best(entries: Iterable[dict], key: str = "selection_score") -> dict:
    """Entry with the highest score; the earliest one wins ties."""
    best = None
    for entry in entries:
        if best is None or entry[key] > best[key]:
            best = entry
    if best is None:
        raise InvalidInputError("empty checkpoint log")
    return best


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def write_csv(path, rows: Sequence[dict]) -> None:
    if not rows:
        raise InvalidInputError("nothing to write")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
