import hashlib

import numpy as np
import pytest

from emofuse.audiodsp import load_wav
from emofuse.datamodel import load_manifest
from emofuse.ingest import (
    CLASS_F0, ApiParseError, ConfigurationError, QuotaError, SyntheticSpec, YouTubeQuery, fetch_channel_videos,
    make_synthetic_dataset, synth_audio, token_label_mutual_information,
)


class MockHttp:
    """Serves canned search/videos payloads and records requests."""

    def __init__(self, items, status=200, page_size=50):
        self.items = items
        self.status = status
        self.page_size = page_size
        self.calls = []

    def get_json(self, url, params):
        self.calls.append((url, dict(params)))
        if self.status != 200:
            return self.status, {"error": {"code": self.status}}
        if url.endswith("/search"):
            start = int(params.get("pageToken", 0))
            size = min(self.page_size, int(params["maxResults"]))
            page = self.items[start:start + size]
            body = {"items": [{"id": {"kind": "youtube#video", "videoId": it["id"]}} for it in page]}
            if start + size < len(self.items):
                body["nextPageToken"] = str(start + size)
            return 200, body
        wanted = params["id"].split(",")
        return 200, {"items": [{"id": it["id"], "snippet": {"title": it["title"], "description": it["description"],
                                                             "categoryId": it["categoryId"]}}
                               for it in self.items if it["id"] in wanted]}


ITEMS = [
    {"id": "vid1", "title": "Match highlights", "description": "goals", "categoryId": "17"},
    {"id": "vid2", "title": "Election night", "description": "live", "categoryId": "25"},
    {"id": "vid3", "title": "Speedrun", "description": "any%", "categoryId": "20"},
]


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("EMO_YT_API_KEY", "test-key")


class TestFetch:
    def test_empty(self, api_key):
        assert fetch_channel_videos(YouTubeQuery(("c1",)), MockHttp([])) == []

    def test_fields_copied(self, api_key):
        recs = fetch_channel_videos(YouTubeQuery(("c1",)), MockHttp(ITEMS[:2]))
        assert [r.id for r in recs] == ["vid1", "vid2"]
        assert [r.title for r in recs] == ["Match highlights", "Election night"]
        assert [r.description for r in recs] == ["goals", "live"]
        assert [r.category for r in recs] == ["sports", "news and politics"]
        assert all(r.audio_path == "" for r in recs)

    def test_max_videos_truncates(self, api_key):
        recs = fetch_channel_videos(YouTubeQuery(("c1",), max_videos=1), MockHttp(ITEMS))
        assert [r.id for r in recs] == ["vid1"]

    def test_pagination(self, api_key):
        http = MockHttp(ITEMS, page_size=2)
        recs = fetch_channel_videos(YouTubeQuery(("c1",), max_videos=3), http)
        assert [r.id for r in recs] == ["vid1", "vid2", "vid3"]
        assert sum(u.endswith("/search") for u, _ in http.calls) == 2

    def test_key_sent(self, api_key):
        http = MockHttp(ITEMS[:1])
        fetch_channel_videos(YouTubeQuery(("c1",)), http)
        assert all(p["key"] == "test-key" for _, p in http.calls)

    def test_403(self, api_key):
        with pytest.raises(QuotaError):
            fetch_channel_videos(YouTubeQuery(("c1",)), MockHttp(ITEMS, status=403))

    def test_missing_env(self, monkeypatch):
        monkeypatch.delenv("EMO_YT_API_KEY", raising=False)
        with pytest.raises(ConfigurationError):
            fetch_channel_videos(YouTubeQuery(("c1",)), MockHttp(ITEMS))

    def test_malformed(self, api_key):
        class Broken(MockHttp):
            def get_json(self, url, params):
                return 200, {"items": [{"id": {"kind": "youtube#channel"}}]}

        with pytest.raises(ApiParseError):
            fetch_channel_videos(YouTubeQuery(("c1",)), Broken([]))

    def test_query_invariants(self):
        with pytest.raises(ValueError):
            YouTubeQuery(())
        with pytest.raises(ValueError):
            YouTubeQuery(("c",), max_videos=0)


def _tree_digest(root):
    h = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return h


class TestSynthetic:
    def test_empty(self, tmp_path):
        assert make_synthetic_dataset(SyntheticSpec(0, seed=1), tmp_path) == []
        assert (tmp_path / "manifest.jsonl").read_text() == ""

    def test_byte_determinism(self, tmp_path):
        spec = SyntheticSpec(30, seed=9)
        make_synthetic_dataset(spec, tmp_path / "a")
        make_synthetic_dataset(spec, tmp_path / "b")
        da, db = _tree_digest(tmp_path / "a"), _tree_digest(tmp_path / "b")
        assert da == db and len(da) == 31

    def test_records_and_audio(self, small_dataset):
        recs, d = small_dataset
        assert load_manifest(d / "manifest.jsonl") == recs
        w = load_wav(d / recs[0].audio_path)
        assert w.sample_rate == 16000 and len(w) == 16000
        assert np.abs(w.samples).max() <= 1.0

    def test_split_partition(self, small_dataset):
        recs, _ = small_dataset
        splits = [r.split for r in recs]
        assert set(splits) == {"train", "validation", "test"}
        assert (splits.count("train"), splits.count("validation"), splits.count("test")) == (84, 18, 18)

    def test_class_counts_within_three_sigma(self, tmp_path):
        recs = make_synthetic_dataset(SyntheticSpec(600, seed=4, audio_informativeness=0.0), tmp_path)
        counts = np.bincount([r.gold_label for r in recs], minlength=6)
        sigma = np.sqrt(600 * (1 / 6) * (5 / 6))
        assert np.all(np.abs(counts - 100) <= 3 * sigma), counts

    def test_invalid_balance(self):
        with pytest.raises(ValueError):
            SyntheticSpec(10, class_balance=(0.5, 0.5, 0.5, 0, 0, 0))

    def test_text_informativeness_raises_mutual_information(self, tmp_path):
        mi = []
        for p in (0.2, 0.9):
            recs = make_synthetic_dataset(
                SyntheticSpec(600, seed=11, text_informativeness=p, audio_informativeness=0.0), tmp_path / str(p))
            mi.append(token_label_mutual_information(recs))
        assert mi[1] > mi[0]

    def test_audio_carries_class_pitch_only_when_informative(self):
        rng = np.random.default_rng(0)
        for label in range(6):
            x = synth_audio(label, rng)
            spec = np.abs(np.fft.rfft(x))
            assert abs(np.argmax(spec) - CLASS_F0[label]) <= 6  # 1 Hz bins at 16 kHz / 16000 samples
        neutral = np.abs(np.fft.rfft(synth_audio(None, rng)))[:2000]
        # smoothed noise: in the pass band no bin towers over the rest the way a tone does
        assert neutral.max() < 6 * neutral.mean()

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            make_synthetic_dataset(SyntheticSpec(2), blocker / "sub")
