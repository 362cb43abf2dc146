"""Dataset acquisition: YouTube Data API metadata and synthetic IEMOCAP-style fixtures."""

from __future__ import annotations

import json
import logging
import os
import urllib.error
import urllib.parse
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .audiodsp import DEFAULT_SR, Waveform, save_wav
from .datamodel import N_CLASSES, SIMPLEX_TOL, MediaRecord, Taxonomy, save_manifest
from .text import tokenize

log = logging.getLogger(__name__)

DEFAULT_KEY_ENV = "EMO_YT_API_KEY"
YT_API = "https://www.googleapis.com/youtube/v3"

# Subset of the public YouTube video category ids.
YT_CATEGORIES = {
    "1": "film and animation", "2": "autos and vehicles", "10": "music", "15": "pets and animals",
    "17": "sports", "19": "travel and events", "20": "games", "22": "people and blogs",
    "23": "comedy", "24": "entertainment", "25": "news and politics", "26": "howto and style",
    "27": "education", "28": "science and technology", "29": "nonprofits and activism",
}


class IngestError(RuntimeError):
    pass


class ConfigurationError(IngestError):
    pass


class QuotaError(IngestError):
    """HTTP 403 from the API: quota exhausted or key rejected."""


class ApiParseError(IngestError):
    pass


class HttpClient(Protocol):
    def get_json(self, url: str, params: dict) -> tuple[int, dict]:
        ...


class UrllibClient:
    """Minimal blocking client for the real API."""

    def __init__(self, timeout: float = 30.0):
        self.timeout = timeout

    def get_json(self, url: str, params: dict) -> tuple[int, dict]:
        full = url + "?" + urllib.parse.urlencode(params)
        try:
            with urllib.request.urlopen(full, timeout=self.timeout) as resp:
                return resp.status, json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            try:
                body = json.loads(exc.read().decode("utf-8"))
            except ValueError:
                body = {}
            return exc.code, body


@dataclass(frozen=True)
class YouTubeQuery:
    channel_ids: tuple[str, ...]
    max_videos: int = 50
    api_key_env: str = DEFAULT_KEY_ENV

    def __post_init__(self):
        if not self.channel_ids:
            raise ValueError("channel_ids must be nonempty")
        if self.max_videos < 1:
            raise ValueError("max_videos must be >= 1")
        object.__setattr__(self, "channel_ids", tuple(self.channel_ids))


def _check(status: int, body, what: str) -> dict:
    if status == 403:
        raise QuotaError(f"{what}: HTTP 403 (quota exhausted or API key rejected)")
    if status != 200:
        raise IngestError(f"{what}: HTTP {status}")
    if not isinstance(body, dict) or not isinstance(body.get("items", []), list):
        raise ApiParseError(f"{what}: malformed response")
    return body


def fetch_channel_videos(query: YouTubeQuery, http: HttpClient) -> list[MediaRecord]:
    """List up to `max_videos` videos across the query's channels, with title/description/category.

    Audio is not downloaded; `audio_path` stays empty.
    """
    key = os.environ.get(query.api_key_env)
    if not key:
        raise ConfigurationError(f"environment variable {query.api_key_env} is not set")

    video_ids: list[str] = []
    for channel in query.channel_ids:
        token = None
        while len(video_ids) < query.max_videos:
            params = {"part": "id", "channelId": channel, "type": "video", "order": "date",
                      "maxResults": min(50, query.max_videos - len(video_ids)), "key": key}
            if token:
                params["pageToken"] = token
            body = _check(*http.get_json(f"{YT_API}/search", params), f"search channel {channel}")
            try:
                for item in body.get("items", []):
                    vid = item["id"]["videoId"]
                    if vid not in video_ids:
                        video_ids.append(vid)
            except (KeyError, TypeError):
                raise ApiParseError(f"search channel {channel}: item without id.videoId") from None
            token = body.get("nextPageToken")
            if not token:
                break
        if len(video_ids) >= query.max_videos:
            break
    video_ids = video_ids[: query.max_videos]

    records = []
    for start in range(0, len(video_ids), 50):
        chunk = video_ids[start:start + 50]
        body = _check(*http.get_json(f"{YT_API}/videos",
                                     {"part": "snippet", "id": ",".join(chunk), "key": key}), "videos")
        by_id = {}
        for item in body.get("items", []):
            try:
                snip = item["snippet"]
                cat = str(snip.get("categoryId", ""))
                by_id[item["id"]] = MediaRecord(
                    id=item["id"],
                    category=YT_CATEGORIES.get(cat, cat),
                    title=str(snip.get("title", "")),
                    description=str(snip.get("description", "")),
                )
            except (KeyError, TypeError):
                raise ApiParseError("videos: item without id/snippet") from None
        records.extend(by_id[v] for v in chunk if v in by_id)
    log.info("fetched %d videos from %d channels", len(records), len(query.channel_ids))
    return records


# -- synthetic IEMOCAP-style data ---------------------------------------------

CLASS_F0 = (220.0, 262.0, 330.0, 392.0, 440.0, 494.0)
CLASS_AM = (2.0, 3.0, 4.5, 6.0, 8.0, 10.0)
CLIP_SECONDS = 1.0

FILLER = (
    "the a and so we it that was then you i they this there just about when what like "
    "well yeah um uh know think go went said going here now time day with for on at"
).split()

KEYWORDS = {
    Taxonomy.iemocap: (
        ("okay", "fine", "normal", "usual", "whatever"),
        ("sorry", "miss", "lost", "cry", "alone"),
        ("hate", "furious", "stupid", "damn", "unfair"),
        ("wow", "really", "unexpected", "suddenly", "whoa"),
        ("scared", "afraid", "danger", "worried", "panic"),
        ("great", "wonderful", "glad", "excited", "awesome"),
    ),
    Taxonomy.youtube: (
        ("hate", "furious", "stupid", "damn", "unfair"),
        ("scared", "afraid", "danger", "worried", "panic"),
        ("great", "wonderful", "glad", "excited", "awesome"),
        ("love", "darling", "adore", "sweet", "heart"),
        ("sorry", "miss", "lost", "cry", "alone"),
        ("wow", "really", "unexpected", "suddenly", "whoa"),
    ),
}


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a generated dataset.

    Informativeness is the per-item probability that a modality carries its
    item's class signal; otherwise the transcript is filler only and the audio
    is band-limited noise with no class pitch or modulation.
    """

    n_items: int = 600
    seed: int = 0
    class_balance: tuple[float, ...] = (1 / 6,) * 6
    text_informativeness: float = 0.6
    audio_informativeness: float = 0.6
    taxonomy: Taxonomy = Taxonomy.iemocap

    def __post_init__(self):
        bal = tuple(float(x) for x in self.class_balance)
        if len(bal) != N_CLASSES or min(bal) < 0 or abs(sum(bal) - 1) > SIMPLEX_TOL:
            raise ValueError("class_balance must be 6 probabilities summing to 1")
        for name in ("text_informativeness", "audio_informativeness"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.n_items < 0:
            raise ValueError("n_items must be >= 0")
        object.__setattr__(self, "class_balance", bal)
        object.__setattr__(self, "taxonomy", Taxonomy(self.taxonomy))


def synth_transcript(label: int, informative: bool, rng: np.random.Generator, taxonomy: Taxonomy) -> str:
    n = int(rng.integers(6, 15))
    words = list(rng.choice(FILLER, size=n))
    if informative:
        kw = KEYWORDS[taxonomy][label]
        k = int(rng.integers(2, 4))
        slots = rng.choice(n, size=k, replace=False)
        for s in slots:
            words[s] = kw[int(rng.integers(len(kw)))]
    return " ".join(words)


def synth_audio(pattern: int | None, rng: np.random.Generator, sr: int = DEFAULT_SR) -> np.ndarray:
    """Harmonic tone at the class pitch with a class-rate amplitude modulation plus light noise.

    pattern=None gives the uninformative clip: smoothed noise at a similar level.
    """
    t = np.arange(int(CLIP_SECONDS * sr)) / sr
    if pattern is None:
        noise = np.convolve(rng.standard_normal(t.size + 7), np.ones(8) / 8, mode="valid")
        return np.clip(0.25 * noise / noise.std(), -1.0, 32767 / 32768)
    f0 = CLASS_F0[pattern] * (1.0 + 0.01 * rng.uniform(-1, 1))
    am = CLASS_AM[pattern]
    phase = rng.uniform(0, 2 * np.pi, size=4)
    tone = sum(np.sin(2 * np.pi * f0 * (h + 1) * t + phase[h]) / (h + 1) for h in range(3))
    env = 0.5 * (1.0 + 0.8 * np.sin(2 * np.pi * am * t + phase[3]))
    x = 0.35 * env * tone / 1.84 + 0.01 * rng.standard_normal(t.size)
    return np.clip(x, -1.0, 32767 / 32768)


def assign_splits(n: int, rng: np.random.Generator) -> list[str]:
    n_train, n_val = int(0.7 * n), int(0.15 * n)
    order = rng.permutation(n)
    splits = [""] * n
    for rank, idx in enumerate(order):
        splits[idx] = "train" if rank < n_train else "validation" if rank < n_train + n_val else "test"
    return splits


def make_synthetic_dataset(spec: SyntheticSpec, out_dir: str | Path) -> list[MediaRecord]:
    """Write `manifest.jsonl` and `audio/<id>.wav` under out_dir and return the records."""
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    labels = rng.choice(N_CLASSES, size=spec.n_items, p=np.asarray(spec.class_balance))
    splits = assign_splits(spec.n_items, rng)
    category = "iemocap" if spec.taxonomy is Taxonomy.iemocap else "synthetic"
    records = []
    for i in range(spec.n_items):
        y = int(labels[i])
        text_ok = rng.random() < spec.text_informativeness
        audio_ok = rng.random() < spec.audio_informativeness
        pattern = y if audio_ok else None
        rid = f"syn{spec.seed}_{i:05d}"
        rel = f"audio/{rid}.wav"
        save_wav(Waveform(synth_audio(pattern, rng)), out / rel)
        records.append(MediaRecord(
            id=rid, category=category, transcript=synth_transcript(y, text_ok, rng, spec.taxonomy),
            audio_path=rel, gold_label=y, split=splits[i]))
    save_manifest(records, out / "manifest.jsonl")
    return records


def resolve_audio(record: MediaRecord, manifest_dir: str | Path) -> Path:
    p = Path(record.audio_path)
    return p if p.is_absolute() else Path(manifest_dir) / p


def token_label_mutual_information(records: Sequence[MediaRecord]) -> float:
    """Plug-in MI (nats) between gold label and transcript token, pooled over token occurrences."""
    joint: Counter = Counter()
    for r in records:
        if r.gold_label is None:
            continue
        for tok in tokenize(r.transcript):
            joint[(r.gold_label, tok)] += 1
    total = sum(joint.values())
    if total == 0:
        return 0.0
    py: Counter = Counter()
    pt: Counter = Counter()
    for (y, tok), c in joint.items():
        py[y] += c
        pt[tok] += c
    return float(sum(c / total * np.log(c * total / (py[y] * pt[tok])) for (y, tok), c in joint.items()))
