"""Training loops: Nesterov SGD on CTC loss, bucketed batching, and the
joint-training-then-fine-tune schedule.

Batches come from duration-sorted buckets whose order is shuffled per
epoch by seed; infeasible utterances inside a batch are skipped and
counted rather than raised, so long as at least one item is usable.
"""

from __future__ import annotations

import csv
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import model as model_mod
from .ctc import InfeasibleTarget, PosteriorGrid, ctc_loss
from .features import extract_features, read_feat, read_wav
from .vocab import GraphemeVocab, encode

logger = logging.getLogger(__name__)

MANIFEST_FIELDS = ("path", "transcript", "language", "duration_ms")
LANGUAGES = ("L1", "L2", "mixed")


class EmptyBatch(ValueError):
    pass


class AllInfeasible(ValueError):
    """Every utterance in the batch failed the CTC length precondition."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    momentum: float = 0.9
    nesterov: bool = True
    batch_size: int = 20
    epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    transcript: str
    language: str
    duration_ms: int


@dataclass(frozen=True)
class Example:
    frames: np.ndarray
    target: tuple[int, ...]
    duration_ms: int
    language: str


def save_manifest(entries: Sequence[ManifestEntry], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for e in entries:
            writer.writerow([e.path, e.transcript, e.language, e.duration_ms])


def load_manifest(path) -> list[ManifestEntry]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_FIELDS:
            raise ValueError(f"{path}: expected header {','.join(MANIFEST_FIELDS)}")
        return [
            ManifestEntry(
                row["path"], row["transcript"], row["language"], int(row["duration_ms"])
            )
            for row in reader
        ]


def load_examples(
    entries: Iterable[ManifestEntry],
    vocab: GraphemeVocab,
    base_dir=None,
    normalizer=None,
) -> list[Example]:
    """Load features per entry; .wav files go through extraction, .feat files
    are taken as ready-made (already normalized) features."""
    base = Path(base_dir) if base_dir is not None else Path(".")
    out = []
    for e in entries:
        p = Path(e.path)
        if not p.is_absolute():
            p = base / p
        if p.suffix == ".wav":
            frames = extract_features(read_wav(p))
            if normalizer is not None:
                frames = normalizer.apply(frames)
        else:
            frames = read_feat(p)
        out.append(Example(frames, tuple(encode(e.transcript, vocab)), e.duration_ms, e.language))
    return out


def make_batches(
    examples: Sequence[Example], batch_size: int, seed: int
) -> list[list[Example]]:
    """Duration-sorted buckets of batch_size; bucket order shuffled by seed,
    order within each bucket preserved."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = sorted(range(len(examples)), key=lambda i: (examples[i].duration_ms, i))
    buckets = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    random.Random(seed).shuffle(buckets)
    return [[examples[i] for i in bucket] for bucket in buckets]


class SgdTrainer:
    """SGD with momentum and optional Nesterov acceleration.

    v <- mu*v + g; step = g + mu*v when nesterov, else v. With mu = 0 both
    reduce to plain SGD.
    """

    def __init__(self, model: model_mod.ToyAcousticModel, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.velocity = {k: np.zeros_like(v) for k, v in model.params.items()}

    def step(self, batch: Sequence[Example]) -> tuple[float, int, dict[str, float]]:
        """One update from the mean CTC gradient over the feasible batch items.

        Returns (mean loss, count skipped as infeasible, per-language mean loss).
        """
        if not batch:
            raise EmptyBatch("batch has no items")
        total = {k: np.zeros_like(v) for k, v in self.model.params.items()}
        losses = []
        by_language: dict[str, list[float]] = {}
        skipped = 0
        for ex in batch:
            hs, logp = model_mod.forward_states(self.model, ex.frames)
            try:
                result = ctc_loss(PosteriorGrid(logp), ex.target)
            except InfeasibleTarget:
                skipped += 1
                continue
            grads = model_mod.backward(self.model, ex.frames, hs, result.grad)
            for k in total:
                total[k] += grads[k]
            losses.append(result.loss)
            by_language.setdefault(ex.language, []).append(result.loss)
        if not losses:
            raise AllInfeasible(f"all {len(batch)} items infeasible")

        cfg = self.cfg
        scale = 1.0 / len(losses)
        for k, p in self.model.params.items():
            g = total[k] * scale
            v = self.velocity[k]
            v *= cfg.momentum
            v += g
            step = g + cfg.momentum * v if cfg.nesterov else v
            p -= cfg.learning_rate * step
        lang_means = {k: float(np.mean(v)) for k, v in by_language.items()}
        return float(np.mean(losses)), skipped, lang_means


def train_epochs(
    model: model_mod.ToyAcousticModel,
    examples: Sequence[Example],
    cfg: TrainConfig,
    tag: str = "train",
) -> list[float]:
    """Standard epoch loop; returns per-epoch mean losses."""
    if not examples:
        raise ValueError("no training examples")
    trainer = SgdTrainer(model, cfg)
    history = []
    for epoch in range(cfg.epochs):
        batches = make_batches(examples, cfg.batch_size, cfg.seed + epoch)
        epoch_losses = []
        lang_sums: dict[str, list[float]] = {}
        skipped = 0
        for batch in batches:
            loss, n_skip, lang_means = trainer.step(batch)
            epoch_losses.append(loss)
            skipped += n_skip
            for lang, val in lang_means.items():
                lang_sums.setdefault(lang, []).append(val)
        mean_loss = float(np.mean(epoch_losses))
        history.append(mean_loss)
        per_lang = " ".join(
            f"{lang}={np.mean(vals):.4f}" for lang, vals in sorted(lang_sums.items())
        )
        logger.info(
            "%s epoch %d/%d loss=%.4f %s skipped=%d",
            tag, epoch + 1, cfg.epochs, mean_loss, per_lang, skipped,
        )
    return history


def run_joint_training(
    model: model_mod.ToyAcousticModel,
    l1_examples: Sequence[Example],
    l2_examples: Sequence[Example],
    cfg: TrainConfig,
) -> list[float]:
    """Train on the merged monolingual pool so batches interleave both
    languages; sequential per-language phases are deliberately not offered."""
    if not l1_examples or not l2_examples:
        raise ValueError("joint training requires non-empty sets for both languages")
    pool = list(l1_examples) + list(l2_examples)
    return train_epochs(model, pool, cfg, tag="joint")


def stratified_subset(examples: Sequence[Example], fraction: float) -> list[Example]:
    """Deterministic duration-stratified subset with floor(n*fraction) items."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return list(examples)
    order = sorted(range(len(examples)), key=lambda i: (examples[i].duration_ms, i))
    chosen = [
        i
        for pos, i in enumerate(order)
        if math.floor((pos + 1) * fraction) > math.floor(pos * fraction)
    ]
    return [examples[i] for i in sorted(chosen)]


def run_finetune(
    model: model_mod.ToyAcousticModel,
    cs_examples: Sequence[Example],
    cfg: TrainConfig,
    fraction: float = 1.0,
) -> list[float]:
    subset = stratified_subset(cs_examples, fraction)
    return train_epochs(model, subset, cfg, tag=f"finetune[{fraction:g}]")
