"""Assemble data, model and embedder from a :class:`RunConfig` and train."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .datagen import Corpus, batch_iter, build_corpus, unsupervised_batch, unsupervised_example
from .embedder import Embedder
from .losses import disentanglement_loss, mixit_loss
from .model import ModelParams, init_params
from .trainer import TrainResult, separate, train


@dataclass
class Run:
    config: RunConfig
    corpus: Corpus
    params: ModelParams
    embedder: Embedder | None


def make_embedder(cfg: RunConfig) -> Embedder | None:
    if cfg.train.mode == "supervised":
        return None
    return Embedder(cfg.embedder, cfg.stft.num_bins, cfg.data.sample_rate)


def prepare(cfg: RunConfig, corpus: Corpus | None = None, params: ModelParams | None = None) -> Run:
    corpus = build_corpus(cfg.data, cfg.train.seed) if corpus is None else corpus
    params = init_params(cfg.model, cfg.train.seed) if params is None else params
    return Run(cfg, corpus, params, make_embedder(cfg))


def run_training(cfg: RunConfig, out_dir: str | Path | None = None, corpus: Corpus | None = None,
                 params: ModelParams | None = None, pesq=None) -> TrainResult:
    run = prepare(cfg, corpus, params)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "config.json").write_text(cfg.to_json())
    data = batch_iter(cfg.data, cfg.train.mode, cfg.train.batch_size, cfg.train.epoch_size,
                      cfg.train.seed, cfg.stft, run.corpus)
    dev = run.corpus.dev or None
    return train(cfg.train, data, run.params, run.embedder, dev, cfg.stft, out_dir, pesq,
                 metadata={"run_config": cfg.to_dict()})


def unsupervised_scores(params: ModelParams, cfg: RunConfig, corpus: Corpus, embedder: Embedder,
                        seed: int = 0, batch_size: int = 10) -> dict[str, float]:
    """Post-hoc MixIT and normalized disentanglement losses over every noisy recording.

    Each recording is mixed with a noise clip drawn from ``seed``, so two
    models scored with the same seed see identical mixtures. Values are
    means over recordings (lower is better for both).
    """
    rng = np.random.default_rng(seed)
    examples = [unsupervised_example(corpus, cfg.data, rng, i) for i in range(len(corpus.noisy))]
    totals = {"mixit": 0.0, "dis": 0.0}
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        batch = unsupervised_batch(chunk, cfg.stft)
        s, n1, n2 = separate(params, batch.mixture.Y, cfg.loss.c)
        totals["mixit"] += mixit_loss(s, n1, n2, batch.mixture, cfg.loss).item() * len(chunk)
        dis = disentanglement_loss(embedder.embed_graph(s), embedder.embed_graph(n1), embedder.embed_graph(n2), True)
        totals["dis"] += dis.item() * len(chunk)
    return {k: v / len(examples) for k, v in totals.items()}


def write_summary(path: str | Path, result: TrainResult) -> None:
    Path(path).write_text(json.dumps({"best": result.best, "steps": len(result.log), "evals": result.evals}, indent=2))
