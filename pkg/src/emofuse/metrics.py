"""Classifier evaluation: confusion matrices, one-vs-rest ROC/AUROC and modality comparison."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .datamodel import N_CLASSES, ScoreMatrix, Taxonomy


class AlignmentError(ValueError):
    pass


class UndefinedAUC(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # [6, 6], rows actual, columns predicted
    taxonomy: Taxonomy = Taxonomy.youtube

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def per_class(self) -> dict[str, dict[str, int]]:
        """TP/FP/FN/TN of each class read one-vs-rest off the matrix."""
        c = self.counts
        tp = np.diag(c)
        fp = c.sum(axis=0) - tp
        fn = c.sum(axis=1) - tp
        tn = self.total - tp - fp - fn
        return {name: {"tp": int(tp[k]), "fp": int(fp[k]), "fn": int(fn[k]), "tn": int(tn[k])}
                for k, name in enumerate(self.taxonomy.names)}


def confusion(predictions: Sequence[int], gold: Sequence[int], taxonomy: Taxonomy = Taxonomy.youtube) -> ConfusionMatrix:
    p = np.asarray(predictions, dtype=int)
    g = np.asarray(gold, dtype=int)
    if p.shape != g.shape or p.ndim != 1:
        raise AlignmentError(f"{p.size} predictions vs {g.size} gold labels")
    if p.size == 0:
        raise ValueError("confusion matrix needs at least one item")
    for arr in (p, g):
        if arr.min() < 0 or arr.max() >= N_CLASSES:
            raise ValueError("label index out of range")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (g, p), 1)
    return ConfusionMatrix(counts, taxonomy)


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray  # descending; first is +inf
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    class_index: int = 0


def roc_auc(scores: Sequence[float], gold_binary: Sequence[bool], class_index: int = 0) -> RocCurve:
    """ROC by sweeping a threshold down through the distinct scores; tied scores move in one step.

    The trapezoid area is accumulated on integer counts and divided once by P*N.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(gold_binary, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise AlignmentError("scores and labels must be 1-D and equal length")
    P = int(y.sum())
    N = int(y.size - P)
    if P == 0 or N == 0:
        raise UndefinedAUC(f"class {class_index}: AUC undefined with {P} positives and {N} negatives")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last_of_group]
    fp = (last_of_group + 1) - tp
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    twice_area = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    return RocCurve(np.r_[np.inf, s[last_of_group]], fp / N, tp / P, twice_area / (2 * P * N), class_index)


def mann_whitney_auc(scores: Sequence[float], gold_binary: Sequence[bool]) -> float:
    """P(s+ > s-) + 0.5 P(s+ = s-) by direct pairwise counting."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(gold_binary, dtype=bool)
    pos, neg = s[y], s[~y]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedAUC("need positives and negatives")
    gt = int((pos[:, None] > neg[None, :]).sum())
    eq = int((pos[:, None] == neg[None, :]).sum())
    return (2 * gt + eq) / (2 * pos.size * neg.size)


@dataclass
class EvalReport:
    split: str
    modality: str
    item_ids: tuple[str, ...]
    accuracy: float
    confusion: ConfusionMatrix
    roc: dict[int, RocCurve]
    undefined_auc: tuple[int, ...]
    macro_auroc: float | None

    def to_dict(self) -> dict:
        names = self.confusion.taxonomy.names
        return {
            "split": self.split,
            "modality": self.modality,
            "taxonomy": self.confusion.taxonomy.value,
            "n": len(self.item_ids),
            "accuracy": self.accuracy,
            "macro_auroc": self.macro_auroc,
            "auroc_reduction": "macro one-vs-rest over classes with defined AUC",
            "auroc": {names[k]: c.auc for k, c in sorted(self.roc.items())},
            "roc_points": {names[k]: {"fpr": c.fpr.tolist(), "tpr": c.tpr.tolist()}
                           for k, c in sorted(self.roc.items())},
            "undefined_auroc": [names[k] for k in self.undefined_auc],
            "confusion": self.confusion.counts.tolist(),
            "per_class": self.confusion.per_class(),
            "item_ids": list(self.item_ids),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def roc_rows(self) -> list[list]:
        names = self.confusion.taxonomy.names
        rows = []
        for k, c in sorted(self.roc.items()):
            for th, f, t in zip(c.thresholds, c.fpr, c.tpr):
                rows.append([names[k], "inf" if np.isinf(th) else format(th, ".12g"),
                             format(f, ".12g"), format(t, ".12g")])
        return rows


def evaluate(scores: ScoreMatrix, gold: Sequence[int], split: str = "test") -> EvalReport:
    g = np.asarray(gold, dtype=int)
    if g.size != scores.n_items:
        raise AlignmentError(f"{scores.n_items} scored items vs {g.size} gold labels")
    pred = scores.predictions()
    cm = confusion(pred, g, scores.taxonomy)
    rocs, undefined = {}, []
    for k in range(N_CLASSES):
        try:
            rocs[k] = roc_auc(scores.values[k], g == k, k)
        except UndefinedAUC:
            undefined.append(k)
    macro = float(np.mean([c.auc for c in rocs.values()])) if rocs else None
    return EvalReport(split, scores.modality.value, scores.item_ids, cm.accuracy, cm, rocs, tuple(undefined), macro)


def report_from_dict(d: Mapping) -> dict:
    """Subset of an EvalReport JSON needed for comparisons."""
    return {k: d[k] for k in ("split", "modality", "accuracy", "macro_auroc", "per_class", "item_ids")}


# -- comparison ------------------------------------------------------------------------------

MODALITY_ORDER = ("audio", "text", "fused")


@dataclass
class ComparisonReport:
    table: dict[str, dict[str, float | None]]  # modality -> metric -> value
    winners: dict[str, str]
    per_class: dict[str, dict]
    fused_beats_unimodal: bool | None

    def to_dict(self) -> dict:
        return {"table": self.table, "winners": self.winners, "per_class": self.per_class,
                "fused_ge_each_unimodal": self.fused_beats_unimodal}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def render(self) -> str:
        """Plain-text table with percentages to one decimal."""
        metrics = ("validation_accuracy", "test_accuracy", "test_macro_auroc")
        lines = ["modality\t" + "\t".join(metrics)]
        for mod in [m for m in MODALITY_ORDER if m in self.table]:
            cells = []
            for met in metrics:
                val = self.table[mod].get(met)
                cells.append("n/a" if val is None else f"{100 * val:.1f}")
            lines.append(mod + "\t" + "\t".join(cells))
        lines.append("winner\t" + "\t".join(self.winners[m] for m in metrics))
        return "\n".join(lines)


def compare_modalities(reports: Mapping[str, Mapping[str, Mapping]]) -> ComparisonReport:
    """reports[modality][split] is an EvalReport dict (or EvalReport); splits 'validation' and 'test'.

    Each metric's winner is the modality with the highest value, or "tie" when several share it.
    """
    norm: dict[str, dict[str, dict]] = {}
    for mod, by_split in reports.items():
        norm[mod] = {sp: (r.to_dict() if isinstance(r, EvalReport) else dict(r)) for sp, r in by_split.items()}
    splits = {mod: {sp: tuple(r["item_ids"]) for sp, r in v.items()} for mod, v in norm.items()}
    ref = next(iter(splits.values()), {})
    for mod, s in splits.items():
        if s != ref:
            raise AlignmentError(f"{mod} was evaluated on different splits/items than the other modalities")

    table: dict[str, dict[str, float | None]] = {}
    per_class = {}
    for mod in sorted(norm):
        r = norm[mod]
        table[mod] = {
            "validation_accuracy": r.get("validation", {}).get("accuracy"),
            "test_accuracy": r.get("test", {}).get("accuracy"),
            "validation_macro_auroc": r.get("validation", {}).get("macro_auroc"),
            "test_macro_auroc": r.get("test", {}).get("macro_auroc"),
        }
        per_class[mod] = {sp: r[sp]["per_class"] for sp in sorted(r)}
    winners = {}
    for met in ("validation_accuracy", "test_accuracy", "validation_macro_auroc", "test_macro_auroc"):
        vals = {m: t[met] for m, t in table.items() if t[met] is not None}
        if not vals:
            winners[met] = "n/a"
            continue
        best = max(vals.values())
        top = sorted(m for m, v in vals.items() if v == best)
        winners[met] = top[0] if len(top) == 1 else "tie"
    flag = None
    if "fused" in table and table["fused"]["test_accuracy"] is not None:
        uni = [table[m]["test_accuracy"] for m in table if m != "fused" and table[m]["test_accuracy"] is not None]
        if uni:
            flag = all(table["fused"]["test_accuracy"] >= u for u in uni)
    return ComparisonReport(table, winners, per_class, flag)


def save_confusion_csv(cm: ConfusionMatrix, path: str | Path) -> None:
    names = cm.taxonomy.names
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["actual\\predicted", *names])
        for name, row in zip(names, cm.counts):
            w.writerow([name, *map(int, row)])


def save_roc_csv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "threshold", "fpr", "tpr"])
        w.writerows(report.roc_rows())
