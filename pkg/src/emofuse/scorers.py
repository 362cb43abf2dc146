"""Unimodal emotion scorers: a pluggable interface plus trainable softmax-regression baselines."""

from __future__ import annotations

import csv
import json
import logging
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import audiodsp
from .datamodel import (
    N_CLASSES, EmotionVector, MediaRecord, Modality, ScoreMatrix, Taxonomy, normalize_to_simplex,
    record_taxonomy,
)
from .text import build_vocab, record_text, tokenize

log = logging.getLogger(__name__)


class DegenerateDataError(ValueError):
    pass


class TextScorer(Protocol):
    taxonomy: Taxonomy

    def score(self, text: str) -> EmotionVector:
        ...


class AudioScorer(Protocol):
    taxonomy: Taxonomy

    def score_features(self, features: np.ndarray) -> EmotionVector:
        ...


@dataclass(frozen=True)
class Hyper:
    l2: float = 1e-3
    epochs: int = 500
    lr: float = 0.5
    seed: int = 0


# -- softmax regression core ------------------------------------------------------

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def add_bias(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def loss_and_grad(W: np.ndarray, Xb: np.ndarray, Y: np.ndarray, l2: float) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus l2/2 * ||W[:, :-1]||^2 and its gradient.

    W is [K, D+1] with the bias in the last column; Xb is [N, D+1]; Y is one-hot [N, K].
    """
    P = softmax(Xb @ W.T)
    n = Xb.shape[0]
    ce = -np.sum(Y * np.log(np.maximum(P, 1e-300))) / n
    Wn = W[:, :-1]
    loss = ce + 0.5 * l2 * np.sum(Wn * Wn)
    grad = (P - Y).T @ Xb / n
    grad[:, :-1] += l2 * Wn
    return float(loss), grad


def fit_softmax_regression(X: np.ndarray, y: np.ndarray, hyper: Hyper) -> np.ndarray:
    """Full-batch proximal gradient descent.

    The cross-entropy step is explicit; the ridge penalty is applied as its
    exact proximal map W <- W / (1 + lr*l2), which keeps any l2 stable.
    """
    y = np.asarray(y, dtype=int)
    if np.unique(y).size < 2:
        raise DegenerateDataError("need at least two distinct gold classes to train")
    Xb = add_bias(np.asarray(X, dtype=np.float64))
    Y = np.eye(N_CLASSES)[y]
    rng = np.random.default_rng(hyper.seed)
    W = 0.01 * rng.standard_normal((N_CLASSES, Xb.shape[1]))
    shrink = 1.0 / (1.0 + hyper.lr * hyper.l2)
    for _ in range(hyper.epochs):
        _, g = loss_and_grad(W, Xb, Y, 0.0)
        W = W - hyper.lr * g
        W[:, :-1] *= shrink
    if not np.all(np.isfinite(W)):
        raise FloatingPointError("softmax regression diverged; lower lr")
    return W


def _labeled(records: Sequence[MediaRecord]) -> list[MediaRecord]:
    out = [r for r in records if r.gold_label is not None]
    if not out:
        raise DegenerateDataError("no labeled records")
    return out


def _taxonomy_of(records: Sequence[MediaRecord]) -> Taxonomy:
    taxa = {record_taxonomy(r) for r in records}
    if len(taxa) != 1:
        raise ValueError("records mix taxonomies")
    return taxa.pop()


# -- text baseline ------------------------------------------------------------------

@dataclass
class BaselineTextModel:
    vocabulary: dict[str, int]
    weights: np.ndarray  # [6, V+1]
    taxonomy: Taxonomy = Taxonomy.youtube

    def featurize(self, texts: Sequence[str]) -> np.ndarray:
        X = np.zeros((len(texts), len(self.vocabulary)))
        for i, t in enumerate(texts):
            for tok in tokenize(t):
                j = self.vocabulary.get(tok)
                if j is not None:
                    X[i, j] += 1.0
        return X

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        return softmax(add_bias(self.featurize(texts)) @ self.weights.T)

    def score(self, text: str) -> EmotionVector:
        return EmotionVector(self.predict_proba([text])[0], self.taxonomy)

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        _save_weights(self.weights, d / "weights.csv")
        (d / "model.json").write_text(json.dumps(
            {"kind": "text", "taxonomy": self.taxonomy.value, "vocabulary": self.vocabulary},
            indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "BaselineTextModel":
        d = Path(directory)
        meta = json.loads((d / "model.json").read_text(encoding="utf-8"))
        if meta.get("kind") != "text":
            raise ValueError(f"{d} does not hold a text model")
        return cls(meta["vocabulary"], _load_weights(d / "weights.csv"), Taxonomy(meta["taxonomy"]))


def train_text_baseline(records: Sequence[MediaRecord], hyper: Hyper = Hyper()) -> BaselineTextModel:
    recs = _labeled(records)
    texts = [record_text(r) for r in recs]
    vocab = build_vocab(texts, min_count=2)
    model = BaselineTextModel(vocab, np.zeros((N_CLASSES, len(vocab) + 1)), _taxonomy_of(recs))
    model.weights = fit_softmax_regression(model.featurize(texts), [r.gold_label for r in recs], hyper)
    return model


def score_text(model: TextScorer, records: Sequence[MediaRecord]) -> ScoreMatrix:
    ids = tuple(r.id for r in records)
    if isinstance(model, BaselineTextModel):
        vals = model.predict_proba([record_text(r) for r in records]).T
    else:
        vals = np.array([model.score(record_text(r)).probs for r in records]).reshape(-1, N_CLASSES).T
    return ScoreMatrix(vals.reshape(N_CLASSES, len(ids)), Modality.text, ids, model.taxonomy)


# -- audio baseline -----------------------------------------------------------------

@dataclass
class BaselineAudioModel:
    mean: np.ndarray  # [40]
    std: np.ndarray  # [40], >0
    weights: np.ndarray  # [6, 41]
    taxonomy: Taxonomy = Taxonomy.youtube
    flagged: tuple[int, ...] = ()  # zero-variance dims (std forced to 1)

    def standardize(self, F: np.ndarray) -> np.ndarray:
        return (F - self.mean) / self.std

    def predict_proba_features(self, F: np.ndarray) -> np.ndarray:
        F = np.atleast_2d(np.asarray(F, dtype=np.float64))
        return softmax(add_bias(self.standardize(F)) @ self.weights.T)

    def score_features(self, features: np.ndarray) -> EmotionVector:
        return EmotionVector(self.predict_proba_features(features)[0], self.taxonomy)

    def score(self, w: audiodsp.Waveform) -> EmotionVector:
        return self.score_features(audiodsp.summary_features(w))

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        _save_weights(self.weights, d / "weights.csv")
        (d / "model.json").write_text(json.dumps({
            "kind": "audio", "taxonomy": self.taxonomy.value,
            "feature_names": audiodsp.SUMMARY_FEATURE_NAMES,
            "mean": [float(x) for x in self.mean], "std": [float(x) for x in self.std],
            "flagged_zero_variance": list(self.flagged),
        }, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "BaselineAudioModel":
        d = Path(directory)
        meta = json.loads((d / "model.json").read_text(encoding="utf-8"))
        if meta.get("kind") != "audio":
            raise ValueError(f"{d} does not hold an audio model")
        return cls(np.array(meta["mean"]), np.array(meta["std"]), _load_weights(d / "weights.csv"),
                   Taxonomy(meta["taxonomy"]), tuple(meta.get("flagged_zero_variance", ())))


def audio_features(records: Sequence[MediaRecord], base_dir: str | Path = ".") -> np.ndarray:
    from .ingest import resolve_audio

    F = np.zeros((len(records), audiodsp.N_SUMMARY))
    for i, r in enumerate(records):
        F[i] = audiodsp.summary_features(audiodsp.load_wav(resolve_audio(r, base_dir)))
    return F


def fit_audio_features(F: np.ndarray, y: Sequence[int], hyper: Hyper, taxonomy: Taxonomy) -> BaselineAudioModel:
    F = np.asarray(F, dtype=np.float64)
    mean = F.mean(axis=0)
    std = F.std(axis=0)
    flagged = tuple(int(i) for i in np.flatnonzero(std <= 1e-12))
    if flagged:
        log.warning("zero-variance audio feature dims %s; using std=1", flagged)
    std = np.where(std <= 1e-12, 1.0, std)
    W = fit_softmax_regression((F - mean) / std, y, hyper)
    return BaselineAudioModel(mean, std, W, taxonomy, flagged)


def train_audio_baseline(records: Sequence[MediaRecord], hyper: Hyper = Hyper(), base_dir: str | Path = ".",
                         features: np.ndarray | None = None) -> BaselineAudioModel:
    recs = _labeled(records)
    F = audio_features(recs, base_dir) if features is None else features
    return fit_audio_features(F, [r.gold_label for r in recs], hyper, _taxonomy_of(recs))


def score_audio(model: AudioScorer, records: Sequence[MediaRecord], base_dir: str | Path = ".",
                features: np.ndarray | None = None) -> ScoreMatrix:
    ids = tuple(r.id for r in records)
    F = audio_features(records, base_dir) if features is None else features
    if isinstance(model, BaselineAudioModel):
        vals = model.predict_proba_features(F).T if len(ids) else np.zeros((N_CLASSES, 0))
    else:
        vals = np.array([model.score_features(f).probs for f in F]).reshape(-1, N_CLASSES).T
    return ScoreMatrix(vals.reshape(N_CLASSES, len(ids)), Modality.audio, ids, model.taxonomy)


# -- persistence ----------------------------------------------------------------------

def _save_weights(W: np.ndarray, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in W:
            w.writerow([repr(float(x)) for x in row])


def _load_weights(path: Path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        return np.array([[float(x) for x in row] for row in csv.reader(fh)], dtype=np.float64)


def load_model(directory: str | Path):
    kind = json.loads((Path(directory) / "model.json").read_text(encoding="utf-8")).get("kind")
    return {"text": BaselineTextModel, "audio": BaselineAudioModel}[kind].load(directory)


# -- external scorers ------------------------------------------------------------------

class SubprocessScorer:
    """Talks newline-delimited JSON to an external process.

    Each request is one line, {"text": ...} or {"features": [...]}, and each
    reply one line {"probs": [6 numbers]}. Replies are renormalized onto the simplex.
    """

    def __init__(self, argv: Sequence[str], taxonomy: Taxonomy = Taxonomy.youtube):
        self.taxonomy = Taxonomy(taxonomy)
        self._proc = subprocess.Popen(list(argv), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                      text=True, encoding="utf-8", bufsize=1)

    def _ask(self, payload: dict) -> EmotionVector:
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(json.dumps(payload) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError("external scorer closed its output")
        try:
            probs = json.loads(line)["probs"]
        except (ValueError, KeyError, TypeError):
            raise RuntimeError(f"bad reply from external scorer: {line!r}") from None
        return normalize_to_simplex(probs, self.taxonomy)

    def score(self, text: str) -> EmotionVector:
        return self._ask({"text": text})

    def score_features(self, features: np.ndarray) -> EmotionVector:
        return self._ask({"features": [float(x) for x in features]})

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
