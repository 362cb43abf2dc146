"""Tokenization shared by the text baseline and the fusion model."""

from __future__ import annotations

import re
from collections import Counter
from typing import Iterable

_SPLIT = re.compile(r"[\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return [t for t in _SPLIT.split(text.lower()) if t]


def record_text(record) -> str:
    return f"{record.title} {record.description} {record.transcript}"


def build_vocab(texts: Iterable[str], min_count: int = 2, specials: tuple[str, ...] = ()) -> dict[str, int]:
    counts = Counter(tok for t in texts for tok in tokenize(t))
    vocab = {s: i for i, s in enumerate(specials)}
    # sorted so the index assignment does not depend on dict iteration order
    for tok in sorted(t for t, c in counts.items() if c >= min_count):
        if tok not in vocab:
            vocab[tok] = len(vocab)
    return vocab
