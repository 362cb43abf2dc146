"""Cross-modal coherence: per-emotion Pearson correlation and central-tendency summaries."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datamodel import N_CLASSES, Modality, ScoreMatrix, Taxonomy


class AlignmentError(ValueError):
    pass


class UndefinedCorrelation(ValueError):
    pass


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    if x.size < 2:
        raise UndefinedCorrelation("need at least two observations")
    # a constant series can leave rounding residue in x - mean, so test it directly
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelation("zero variance in one of the series")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("zero variance in one of the series")
    r = float(dx @ dy) / (math.sqrt(sxx) * math.sqrt(syy))
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class CoherenceRow:
    emotion: str
    r: float | None  # None when undefined (zero variance)
    verdict: str  # "coherent" | "weak" | "undefined"


@dataclass(frozen=True)
class CoherenceReport:
    rows: tuple[CoherenceRow, ...]
    threshold: float
    n: int
    taxonomy: Taxonomy

    def coefficients(self) -> dict[str, float | None]:
        return {row.emotion: row.r for row in self.rows}

    def coherent(self) -> list[str]:
        return [row.emotion for row in self.rows if row.verdict == "coherent"]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["emotion", "r", "verdict", "n"])
            for row in self.rows:
                w.writerow([row.emotion, "" if row.r is None else format(row.r, ".12g"), row.verdict, self.n])

    def to_json(self) -> str:
        return json.dumps({
            "threshold": self.threshold, "n": self.n, "taxonomy": self.taxonomy.value,
            "rows": [{"emotion": r.emotion, "r": r.r, "verdict": r.verdict} for r in self.rows],
        }, indent=1)


def coherence_report(text: ScoreMatrix, audio: ScoreMatrix, threshold: float = 0.5) -> CoherenceReport:
    if text.item_ids != audio.item_ids:
        raise AlignmentError("text and audio score matrices must list the same item ids in the same order")
    if text.taxonomy != audio.taxonomy:
        raise AlignmentError("text and audio score matrices use different taxonomies")
    rows = []
    for e, name in enumerate(text.taxonomy.names):
        try:
            r = pearson(text.values[e], audio.values[e])
        except UndefinedCorrelation:
            rows.append(CoherenceRow(name, None, "undefined"))
            continue
        rows.append(CoherenceRow(name, r, "coherent" if r >= threshold else "weak"))
    return CoherenceReport(tuple(rows), threshold, text.n_items, text.taxonomy)


# -- central tendency -----------------------------------------------------------------

@dataclass(frozen=True)
class Tendency:
    mean: float
    median: float
    mode: float
    range: float


def median(values: Sequence[float]) -> float:
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size
    if n == 0:
        raise ValueError("median of empty sequence")
    mid = n // 2
    return float(v[mid]) if n % 2 else float((v[mid - 1] + v[mid]) / 2.0)


def histogram_mode(values: Sequence[float], bin_width: float = 0.05) -> float:
    """Center of the most populated bin of width `bin_width` over [0, 1]; ties go to the lowest bin.

    Bins are [k*w, (k+1)*w); the value 1.0 falls into the last bin.
    """
    n_bins = int(round(1.0 / bin_width))
    if not math.isclose(n_bins * bin_width, 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError("bin_width must divide 1")
    v = np.asarray(values, dtype=np.float64)
    # guard against x/w landing a hair below an integer, e.g. 0.15/0.05
    idx = np.clip(np.floor(v / bin_width + 1e-9).astype(int), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    k = int(np.argmax(counts))
    return (k + 0.5) * bin_width


def tendency(values: Sequence[float], bin_width: float = 0.05) -> Tendency:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("need at least one value")
    mean = math.fsum(v.tolist()) / v.size  # correctly rounded sum, independent of summation order
    return Tendency(mean, median(v), histogram_mode(v, bin_width), float(v.max() - v.min()))


@dataclass(frozen=True)
class TendencySummary:
    modality: Modality
    taxonomy: Taxonomy
    by_emotion: dict[str, Tendency]

    def rows(self) -> list[list]:
        return [[e, self.modality.value, t.mean, t.median, t.mode, t.range] for e, t in self.by_emotion.items()]


def tendency_summary(m: ScoreMatrix, bin_width: float = 0.05) -> TendencySummary:
    if m.n_items < 1:
        raise ValueError("tendency summary needs at least one item")
    return TendencySummary(m.modality, m.taxonomy,
                           {name: tendency(m.values[e], bin_width) for e, name in enumerate(m.taxonomy.names)})


def save_tendency_csv(summaries: Sequence[TendencySummary], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["emotion", "modality", "mean", "median", "mode", "range"])
        for s in summaries:
            for row in s.rows():
                w.writerow(row[:2] + [format(x, ".12g") for x in row[2:]])


# -- planted-correlation generator ------------------------------------------------------

def planted_score_streams(rho: Sequence[float], n: int, seed: int = 0,
                          taxonomy: Taxonomy = Taxonomy.youtube) -> tuple[ScoreMatrix, ScoreMatrix]:
    """Text/audio score matrices whose per-emotion Pearson correlation is `rho` in expectation.

    Each modality draws latent Gaussians g (per-emotion variances v, cross-modal
    covariance c_e), centers them across emotions so every column sums to a
    constant, and maps them to 1/6 + a*z with one global scale a per modality.
    Centering mixes the rows, so c is solved in closed form for the centered
    correlations to equal rho; the final affine map does not change Pearson r.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (N_CLASSES,) or np.any(np.abs(rho) >= 1):
        raise ValueError("rho must hold 6 correlations in (-1, 1)")
    K = N_CLASSES
    v = 1.0 + 8.0 * rho ** 2
    V = v.sum()
    # Var(z_e) = v_e (1 - 2/K) + V/K^2 ; Cov(z_e^t, z_e^a) = c_e (1 - 2/K) + C/K^2, with C = sum(c)
    var_z = v * (1 - 2 / K) + V / K ** 2
    b = rho * var_z
    C = b.sum() / ((1 - 2 / K) + 1 / K)
    c = (b - C / K ** 2) / (1 - 2 / K)
    d = c / v
    if np.any(np.abs(d) >= 1):
        raise ValueError("planted correlations not reachable with this construction")
    rng = np.random.default_rng(seed)
    e1 = rng.standard_normal((K, n))
    e2 = rng.standard_normal((K, n))
    sd = np.sqrt(v)[:, None]
    gt = sd * e1
    ga = sd * (d[:, None] * e1 + np.sqrt(1 - d[:, None] ** 2) * e2)
    out = []
    ids = tuple(f"item{i:05d}" for i in range(n))
    for g, mod in ((gt, Modality.text), (ga, Modality.audio)):
        z = g - g.mean(axis=0, keepdims=True)
        a = (1.0 / K) / np.abs(z).max() * 0.999 if n else 0.0
        vals = 1.0 / K + a * z
        out.append(ScoreMatrix(vals, mod, ids, taxonomy))
    return out[0], out[1]
