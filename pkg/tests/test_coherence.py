import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emofuse.coherence import (AlignmentError, UndefinedCorrelation, coherence_report, histogram_mode, median,
                               pearson, planted_score_streams, save_tendency_csv, tendency, tendency_summary)
from emofuse.datamodel import Modality, ScoreMatrix, Taxonomy

from conftest import random_simplex
from oracles import brute_median, brute_mode, exact_mean, pearson_definition

PLANTED = [0.8, 0.8, 0.7, 0.95, 0.05, 0.0]

grid = st.floats(-1e3, 1e3).map(lambda v: round(v, 6))
series = st.lists(grid, min_size=3, max_size=40)


def matrix(values, modality=Modality.text, ids=None):
    ids = ids or tuple(f"i{k}" for k in range(values.shape[1]))
    return ScoreMatrix(values, modality, ids, Taxonomy.youtube)


class TestPearson:
    def test_self(self, rng):
        x = rng.random(50)
        assert pearson(x, x) == pytest.approx(1.0, abs=1e-12)
        assert pearson(x, -x) == pytest.approx(-1.0, abs=1e-12)

    def test_hand_value(self):
        assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198, abs=1e-5)

    def test_undefined(self):
        with pytest.raises(UndefinedCorrelation):
            pearson([1, 1, 1], [1, 2, 3])
        with pytest.raises(UndefinedCorrelation):
            pearson([1.0], [2.0])

    def test_matches_definition(self, rng):
        for _ in range(50):
            x, y = rng.standard_normal(30), rng.standard_normal(30)
            assert abs(pearson(x, y) - pearson_definition(list(x), list(y))) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(series, st.data())
    def test_symmetric_bounded_affine(self, x, data):
        y = data.draw(st.lists(grid, min_size=len(x), max_size=len(x)))
        try:
            r = pearson(x, y)
        except UndefinedCorrelation:
            return
        assert -1 <= r <= 1
        assert r == pytest.approx(pearson(y, x), abs=1e-12)
        a = data.draw(st.floats(0.1, 10))
        b = data.draw(st.floats(-5, 5))
        try:
            r2 = pearson([a * v + b for v in x], y)
        except UndefinedCorrelation:
            return
        assert r2 == pytest.approx(r, abs=1e-9)


class TestCoherenceReport:
    def test_identical(self, rng):
        m = matrix(random_simplex(rng, 40))
        rep = coherence_report(m, matrix(m.values, Modality.audio))
        assert all(abs(r.r - 1) <= 1e-12 and r.verdict == "coherent" for r in rep.rows)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_planted_recovery(self, seed):
        t, a = planted_score_streams(PLANTED, 1000, seed)
        rep = coherence_report(t, a)
        for got, want in zip(rep.coefficients().values(), PLANTED):
            assert abs(got - want) <= 0.05
        assert rep.coherent() == ["anger", "fear", "happy", "love"]

    def test_planted_streams_are_simplex(self):
        t, a = planted_score_streams(PLANTED, 200, 3)
        for m in (t, a):
            assert m.values.min() >= 0
            np.testing.assert_allclose(m.values.sum(axis=0), 1.0, atol=1e-12)

    def test_misaligned(self, rng):
        v = random_simplex(rng, 3)
        with pytest.raises(AlignmentError):
            coherence_report(matrix(v, ids=("a", "b", "c")), matrix(v, Modality.audio, ids=("b", "a", "c")))

    def test_undefined_row_flagged(self, rng):
        v = random_simplex(rng, 10)
        v[:, :] = 1 / 6
        v[0], v[1] = v[0] + 0.05 * np.arange(10) / 10, v[1] - 0.05 * np.arange(10) / 10
        rep = coherence_report(matrix(v), matrix(v, Modality.audio))
        assert rep.rows[2].verdict == "undefined" and rep.rows[2].r is None
        assert rep.rows[0].verdict == "coherent"

    def test_verdict_scale_invariant(self):
        t, a = planted_score_streams(PLANTED, 300, 9)
        squeezed = matrix(1 / 6 + 0.5 * (a.values - 1 / 6), Modality.audio, a.item_ids)
        assert coherence_report(t, a).coherent() == coherence_report(t, squeezed).coherent()

    def test_outputs(self, tmp_path, rng):
        m = matrix(random_simplex(rng, 8))
        rep = coherence_report(m, matrix(m.values, Modality.audio))
        rep.to_csv(tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "emotion,r,verdict,n" and lines[1].startswith("anger,") and lines[1].endswith(",8")
        assert rep.to_json() == coherence_report(m, matrix(m.values, Modality.audio)).to_json()


class TestTendency:
    def test_uniform_single_item(self):
        t = tendency([1 / 6])
        assert t.mean == pytest.approx(1 / 6) and t.median == pytest.approx(1 / 6)
        assert t.range == 0 and t.mode == pytest.approx(0.175)

    def test_hand_row(self):
        t = tendency([0.1, 0.2, 0.3, 0.4])
        assert t.mean == pytest.approx(0.25, abs=1e-15) and t.median == pytest.approx(0.25, abs=1e-15)
        assert t.range == pytest.approx(0.3, abs=1e-15)

    def test_constant_row(self):
        t = tendency([0.3] * 5)
        assert t.mean == 0.3 and t.median == 0.3 and t.range == 0

    def test_bin_edges(self):
        assert histogram_mode([0.15]) == pytest.approx(0.175)
        assert histogram_mode([1.0]) == pytest.approx(0.975)
        assert histogram_mode([0.0, 0.06]) == pytest.approx(0.025)  # tie goes low

    def test_empty(self):
        with pytest.raises(ValueError):
            tendency([])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=12))
    def test_against_brute_force(self, xs):
        t = tendency(xs)
        assert t.mean == exact_mean(xs)
        assert t.median == brute_median(xs)
        assert t.mode == brute_mode(xs)
        assert t.range == max(xs) - min(xs)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 20).map(lambda k: k / 20), min_size=1, max_size=12))
    def test_mode_on_bin_boundaries(self, xs):
        assert histogram_mode(xs) == brute_mode(xs)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=12))
    def test_properties(self, xs):
        t = tendency(xs)
        lo, hi = min(xs), max(xs)
        assert lo <= t.median <= hi and t.range >= 0
        # the mode bin holds at least one point (its center may sit outside [min, max])
        assert any(abs(x - t.mode) <= 0.025 + 1e-12 for x in xs)
        cost = lambda c: math.fsum(abs(x - c) for x in xs)  # noqa: E731
        assert cost(median(xs)) <= min(cost(c) for c in xs) + 1e-12

    def test_summary_csv(self, tmp_path, rng):
        m = matrix(random_simplex(rng, 20))
        s = tendency_summary(m)
        assert list(s.by_emotion) == list(Taxonomy.youtube.names)
        save_tendency_csv([s], tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "emotion,modality,mean,median,mode,range" and len(lines) == 7
