"""Glue between manifests on disk and the model modules."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from . import fusion
from .audiodsp import SpectroImage, wav_to_image
from .datamodel import MediaRecord, record_taxonomy
from .ingest import resolve_audio


def by_split(records: Sequence[MediaRecord], split: str) -> list[MediaRecord]:
    return [r for r in records if r.split == split]


def gold_labels(records: Sequence[MediaRecord]) -> list[int]:
    missing = [r.id for r in records if r.gold_label is None]
    if missing:
        raise ValueError(f"{len(missing)} records lack gold labels (first: {missing[0]})")
    return [r.gold_label for r in records]


def spectro_images(records: Sequence[MediaRecord], base_dir: str | Path) -> list[SpectroImage]:
    return [wav_to_image(resolve_audio(r, base_dir)) for r in records]


def fusion_inputs(records: Sequence[MediaRecord], base_dir: str | Path, vocab: dict[str, int],
                  cfg: fusion.FusionConfig) -> list[fusion.FusionInput]:
    return [fusion.build_input(r, img, vocab, cfg) for r, img in zip(records, spectro_images(records, base_dir))]


def train_fusion_on_manifest(records: Sequence[MediaRecord], base_dir: str | Path, cfg: fusion.FusionConfig,
                             hyper: fusion.TrainHyper) -> fusion.TrainState:
    train = by_split(records, "train")
    val = by_split(records, "validation")
    if not train or not val:
        raise ValueError("manifest needs nonempty train and validation splits")
    vocab = fusion.build_fusion_vocab(train)
    tx = {record_taxonomy(r) for r in records}
    if len(tx) != 1:
        raise ValueError("manifest mixes taxonomies")
    return fusion.train(fusion_inputs(train, base_dir, vocab, cfg), gold_labels(train),
                        fusion_inputs(val, base_dir, vocab, cfg), gold_labels(val),
                        cfg, vocab, hyper, tx.pop())


def predict_on_manifest(model: fusion.FusionModel, records: Sequence[MediaRecord], base_dir: str | Path):
    inputs = fusion_inputs(records, base_dir, model.vocab, model.config)
    return fusion.predict(model, [r.id for r in records], inputs)


def split_accuracy(scores, records: Sequence[MediaRecord], split: str = "test") -> float:
    recs = by_split(records, split)
    sub = scores.subset([r.id for r in recs])
    return float(np.mean(sub.predictions() == np.asarray(gold_labels(recs))))
