"""Shared types: label taxonomies, media records, score matrices and their file formats."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SIMPLEX_TOL = 1e-6
N_CLASSES = 6


class ValidationError(ValueError):
    """A value or file violates a data invariant."""


class ManifestParseError(ValidationError):
    def __init__(self, line_no: int, msg: str):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


class EmotionLabel(enum.IntEnum):
    anger = 0
    fear = 1
    happy = 2
    love = 3
    sad = 4
    surprise = 5


class IemocapLabel(enum.IntEnum):
    neutrality = 0
    sadness = 1
    anger = 2
    surprise = 3
    fear = 4
    happiness = 5


class Taxonomy(str, enum.Enum):
    youtube = "youtube"
    iemocap = "iemocap"

    @property
    def labels(self) -> type[enum.IntEnum]:
        return EmotionLabel if self is Taxonomy.youtube else IemocapLabel

    @property
    def names(self) -> list[str]:
        return [lab.name for lab in self.labels]


class Modality(str, enum.Enum):
    text = "text"
    audio = "audio"
    fused = "fused"


SPLITS = ("train", "validation", "test", "unlabeled")


def _check_simplex(probs: np.ndarray, tol: float = SIMPLEX_TOL) -> None:
    if probs.shape[0] != N_CLASSES:
        raise ValidationError(f"expected {N_CLASSES} class rows, got {probs.shape[0]}")
    if not np.all(np.isfinite(probs)):
        raise ValidationError("non-finite probability")
    if np.any(probs < -tol) or np.any(probs > 1 + tol):
        raise ValidationError("probability outside [0, 1]")
    sums = probs.sum(axis=0)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise ValidationError(f"column {int(bad[0])} sums to {sums[bad[0]]:.9g}, not 1")


@dataclass(frozen=True)
class EmotionVector:
    probs: np.ndarray
    taxonomy: Taxonomy = Taxonomy.youtube

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64).reshape(-1)
        _check_simplex(p[:, None])
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "taxonomy", Taxonomy(self.taxonomy))

    def argmax(self) -> int:
        return int(np.argmax(self.probs))


def normalize_to_simplex(raw: Sequence[float], taxonomy: Taxonomy = Taxonomy.youtube) -> EmotionVector:
    """Scale nonnegative raw class scores so they sum to one."""
    r = np.asarray(raw, dtype=np.float64)
    if r.shape != (N_CLASSES,):
        raise ValueError(f"expected {N_CLASSES} raw scores, got shape {r.shape}")
    if not np.all(np.isfinite(r)) or np.any(r < 0):
        raise ValueError("raw scores must be finite and nonnegative")
    total = r.sum()
    if total <= 0:
        raise ValueError("raw scores are all zero")
    return EmotionVector(r / total, taxonomy)


@dataclass(frozen=True)
class MediaRecord:
    id: str
    category: str = ""
    title: str = ""
    description: str = ""
    transcript: str = ""
    audio_path: str = ""
    gold_label: int | None = None
    split: str = "unlabeled"

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("record id must be a nonempty string")
        if self.split not in SPLITS:
            raise ValidationError(f"record {self.id}: unknown split {self.split!r}")
        if self.gold_label is not None:
            if isinstance(self.gold_label, bool) or not isinstance(self.gold_label, (int, np.integer)):
                raise ValidationError(f"record {self.id}: gold_label must be an integer")
            if not 0 <= int(self.gold_label) < N_CLASSES:
                raise ValidationError(f"record {self.id}: gold_label {self.gold_label} out of range")
            object.__setattr__(self, "gold_label", int(self.gold_label))

    @property
    def taxonomy(self) -> Taxonomy:
        return record_taxonomy(self)

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=False)


def record_taxonomy(record: MediaRecord) -> Taxonomy:
    # IEMOCAP-style items are tagged through their category; everything else is YouTube-1K style.
    return Taxonomy.iemocap if record.category == "iemocap" else Taxonomy.youtube


_RECORD_FIELDS = {f for f in MediaRecord.__dataclass_fields__}


def parse_manifest_lines(lines: Iterable[str]) -> list[MediaRecord]:
    records: list[MediaRecord] = []
    seen: dict[str, int] = {}
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestParseError(line_no, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ManifestParseError(line_no, "expected a JSON object")
        unknown = set(obj) - _RECORD_FIELDS
        if unknown:
            raise ManifestParseError(line_no, f"unknown fields {sorted(unknown)}")
        try:
            rec = MediaRecord(**obj)
        except (TypeError, ValidationError) as exc:
            raise ManifestParseError(line_no, str(exc)) from None
        if rec.id in seen:
            raise ManifestParseError(line_no, f"duplicate id {rec.id!r} (first seen on line {seen[rec.id]})")
        seen[rec.id] = line_no
        records.append(rec)
    return records


def load_manifest(path: str | Path) -> list[MediaRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest_lines(fh)


def save_manifest(records: Sequence[MediaRecord], path: str | Path) -> None:
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate record ids")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-class probabilities (rows) for a list of items (columns) from one modality."""

    values: np.ndarray
    modality: Modality
    item_ids: tuple[str, ...]
    taxonomy: Taxonomy = Taxonomy.youtube

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 1 and v.size == 0:
            v = v.reshape(N_CLASSES, 0)
        if v.ndim != 2:
            raise ValidationError("score values must be a 2-D array")
        ids = tuple(str(i) for i in self.item_ids)
        if v.shape[1] != len(ids):
            raise ValidationError(f"{v.shape[1]} columns but {len(ids)} item ids")
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate item ids")
        _check_simplex(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "item_ids", ids)
        object.__setattr__(self, "modality", Modality(self.modality))
        object.__setattr__(self, "taxonomy", Taxonomy(self.taxonomy))

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def column(self, i: int) -> EmotionVector:
        return EmotionVector(self.values[:, i], self.taxonomy)

    def predictions(self) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. ties go to the lowest class index
        return np.argmax(self.values, axis=0)

    def subset(self, ids: Sequence[str]) -> "ScoreMatrix":
        pos = {k: i for i, k in enumerate(self.item_ids)}
        try:
            cols = [pos[k] for k in ids]
        except KeyError as exc:
            raise ValidationError(f"id {exc.args[0]!r} not in score matrix") from None
        return ScoreMatrix(self.values[:, cols], self.modality, tuple(ids), self.taxonomy)


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def save_scores(matrix: ScoreMatrix, path: str | Path) -> None:
    _check_simplex(np.asarray(matrix.values))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"#modality={matrix.modality.value}\n")
        fh.write(f"#taxonomy={matrix.taxonomy.value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", *matrix.item_ids])
        for name, row in zip(matrix.taxonomy.names, matrix.values):
            w.writerow([name, *(_fmt(x) for x in row)])


def load_scores(path: str | Path) -> ScoreMatrix:
    meta: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        body = []
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key] = val
            else:
                body.append(line)
    try:
        modality = Modality(meta["modality"])
        taxonomy = Taxonomy(meta["taxonomy"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"{path}: missing or invalid #modality/#taxonomy header ({exc})") from None
    rows = list(csv.reader(body))
    if not rows or rows[0][:1] != ["label"]:
        raise ValidationError(f"{path}: missing 'label,<ids>' header row")
    ids = rows[0][1:]
    data = rows[1:]
    if [r[0] for r in data] != taxonomy.names:
        raise ValidationError(f"{path}: class rows must be {taxonomy.names}")
    try:
        values = np.array([[float(x) for x in r[1:]] for r in data], dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    values = values.reshape(N_CLASSES, len(ids))
    return ScoreMatrix(values, modality, tuple(ids), taxonomy)
