"""Tests for the windowed symbolic transform and histogram distance."""

import math

import numpy as np
import pytest

from mvtransfer.distance import (
    BossParams,
    DistanceError,
    SfaParams,
    WordHistogram,
    boss_distance,
    default_sfa_params,
    sfa_fit,
    sfa_transform,
)


def naive_histogram(series, bins, params):
    """Reference transform written straight from the definition: explicit
    per-window loops, trigonometric sums term by term, breakpoint counting
    by comparison chain, duplicate-run collapsing."""
    x = [float(v) for v in series]
    w = params.window_length
    n_complex = params.word_length // 2
    first_freq = 1 if params.mean_normalize else 0
    words = []
    for start in range(len(x) - w + 1):
        window = x[start:start + w]
        if params.mean_normalize:
            total = 0.0
            for v in window:
                total += v
            mean = total / w
            window = [v - mean for v in window]
        values = []
        for freq in range(first_freq, first_freq + n_complex):
            re = 0.0
            im = 0.0
            for t in range(w):
                angle = (-2.0 * math.pi * freq * t) / w
                re += window[t] * math.cos(angle)
                im += window[t] * math.sin(angle)
            values.append(re)
            values.append(im)
        word = ""
        for pos, value in enumerate(values):
            symbol = 0
            for b in bins[pos]:
                if value >= b:
                    symbol += 1
            word += chr(ord("a") + symbol)
        words.append(word)
    collapsed = []
    for word in words:
        if not collapsed or collapsed[-1] != word:
            collapsed.append(word)
    counts = {}
    for word in collapsed:
        counts[word] = counts.get(word, 0) + 1
    return counts


def naive_boss(counts_a, counts_b):
    """Two-loop reference for the symmetrized histogram distance."""
    d_ab = 0.0
    for word in counts_a:
        d_ab += (counts_a[word] - counts_b.get(word, 0)) ** 2
    d_ba = 0.0
    for word in counts_b:
        d_ba += (counts_b[word] - counts_a.get(word, 0)) ** 2
    return 0.5 * (d_ab + d_ba)


class TestSfaParams:
    def test_rejects_odd_word_length(self):
        with pytest.raises(DistanceError, match="even"):
            SfaParams(window_length=8, word_length=3)

    def test_rejects_word_longer_than_window(self):
        with pytest.raises(DistanceError, match="exceeds"):
            SfaParams(window_length=4, word_length=6)

    def test_rejects_tiny_alphabet(self):
        with pytest.raises(DistanceError, match="alphabet"):
            SfaParams(window_length=8, alphabet_size=1)

    def test_defaults_scale_with_length(self):
        p = default_sfa_params(32)
        assert p.window_length == 8
        assert p.word_length == 4
        p = default_sfa_params(100)
        assert p.window_length == 25
        p = default_sfa_params(5)
        assert p.window_length == 5 and p.word_length == 4
        p = default_sfa_params(3)
        assert p.window_length == 3 and p.word_length == 2
        with pytest.raises(DistanceError):
            default_sfa_params(1)


class TestSfaFit:
    def test_constant_corpus_degenerates_to_zero(self):
        """Centred constant windows have all-zero coefficients, so every
        breakpoint collapses to 0."""
        params = SfaParams(window_length=4, word_length=4, alphabet_size=3)
        corpus = [np.full(10, 3.7) for _ in range(3)]
        bins = sfa_fit(corpus, params)
        assert bins.shape == (4, 2)
        assert np.all(bins == 0.0)

    def test_two_symbols_breakpoint_is_median(self):
        """With a 2-letter alphabet the single breakpoint per position is
        the sort-and-index median of that position's pooled values."""
        params = SfaParams(window_length=8, word_length=4, alphabet_size=2)
        rng = np.random.default_rng(10)
        corpus = [rng.normal(size=20) for _ in range(4)]
        bins = sfa_fit(corpus, params)

        # collect the coefficient pool with the naive per-window arithmetic
        pool = []
        for series in corpus:
            x = [float(v) for v in series]
            for start in range(len(x) - 8 + 1):
                window = x[start:start + 8]
                total = 0.0
                for v in window:
                    total += v
                mean = total / 8
                window = [v - mean for v in window]
                values = []
                for freq in (1, 2):
                    re = 0.0
                    im = 0.0
                    for t in range(8):
                        angle = (-2.0 * math.pi * freq * t) / 8
                        re += window[t] * math.cos(angle)
                        im += window[t] * math.sin(angle)
                    values.append(re)
                    values.append(im)
                pool.append(values)
        pool = np.array(pool)
        for p in range(4):
            ordered = sorted(pool[:, p])
            assert bins[p, 0] == ordered[len(ordered) // 2]

    def test_breakpoints_non_decreasing(self):
        rng = np.random.default_rng(11)
        for trial in range(10):
            params = SfaParams(
                window_length=int(rng.integers(4, 12)),
                word_length=4,
                alphabet_size=int(rng.integers(2, 8)),
            )
            corpus = [
                rng.normal(size=int(rng.integers(params.window_length, 40)))
                for _ in range(int(rng.integers(1, 5)))
            ]
            bins = sfa_fit(corpus, params)
            for row in bins:
                assert all(row[i] <= row[i + 1] for i in range(len(row) - 1))

    def test_window_longer_than_shortest_series(self):
        params = SfaParams(window_length=10, word_length=4)
        with pytest.raises(DistanceError, match="shortest"):
            sfa_fit([np.zeros(20), np.zeros(5)], params)

    def test_empty_corpus(self):
        with pytest.raises(DistanceError, match="non-empty"):
            sfa_fit([], SfaParams(window_length=4))


class TestSfaTransform:
    def test_deterministic_on_copies(self):
        rng = np.random.default_rng(12)
        params = SfaParams(window_length=8, word_length=4, alphabet_size=3)
        x = rng.normal(size=25)
        bins = sfa_fit([x], params)
        h1 = sfa_transform(x, bins, params)
        h2 = sfa_transform(x.copy(), bins, params)
        assert h1.counts == h2.counts

    def test_constant_series_single_word(self):
        """All windows identical, so duplicate collapsing leaves one word
        with count 1."""
        params = SfaParams(window_length=4, word_length=4, alphabet_size=3)
        x = np.full(12, 2.0)
        bins = sfa_fit([x], params)
        hist = sfa_transform(x, bins, params)
        assert len(hist.counts) == 1
        assert list(hist.counts.values()) == [1]

    def test_word_shape(self):
        rng = np.random.default_rng(13)
        params = SfaParams(window_length=8, word_length=6, alphabet_size=5)
        x = rng.normal(size=30)
        bins = sfa_fit([x], params)
        hist = sfa_transform(x, bins, params)
        for word, count in hist.counts.items():
            assert len(word) == 6
            assert all("a" <= ch <= "e" for ch in word)
            assert count >= 1

    def test_too_short_series(self):
        params = SfaParams(window_length=8, word_length=4)
        bins = np.zeros((4, 3))
        with pytest.raises(DistanceError, match="shorter"):
            sfa_transform(np.zeros(5), bins, params)

    def test_matches_naive_reference(self):
        """Word-for-word histogram equality with the straight-line
        reference, bins fitted on the series itself."""
        rng = np.random.default_rng(14)
        params = SfaParams(window_length=8, word_length=4, alphabet_size=3)
        for _ in range(25):
            x = rng.normal(size=int(rng.integers(8, 31)))
            bins = sfa_fit([x], params)
            assert sfa_transform(x, bins, params).counts == naive_histogram(x, bins, params)

    def test_matches_naive_reference_no_centering(self):
        rng = np.random.default_rng(15)
        params = SfaParams(
            window_length=6, word_length=4, alphabet_size=4, mean_normalize=False
        )
        for _ in range(15):
            corpus = [rng.normal(size=int(rng.integers(6, 25))) for _ in range(3)]
            bins = sfa_fit(corpus, params)
            for x in corpus:
                assert sfa_transform(x, bins, params).counts == naive_histogram(x, bins, params)


class TestBossDistance:
    def test_identical_histograms(self):
        h = WordHistogram(counts={"ab": 3, "ba": 1})
        assert boss_distance(h, h) == 0.0

    def test_one_sided_example(self):
        """{ab: 2} vs empty: half of (2-0)^2 plus an empty sum."""
        assert boss_distance(WordHistogram({"ab": 2}), WordHistogram({})) == 2.0

    def test_symmetry(self):
        rng = np.random.default_rng(16)
        for _ in range(20):
            ha, hb = _random_histograms(rng)
            assert boss_distance(ha, hb) == boss_distance(hb, ha)

    def test_matches_two_loop_reference(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            ha, hb = _random_histograms(rng)
            assert boss_distance(ha, hb) == pytest.approx(
                naive_boss(ha.counts, hb.counts), abs=1e-12
            )

    def test_rejects_nonpositive_counts(self):
        with pytest.raises(DistanceError, match="count"):
            WordHistogram(counts={"aa": 0})


def _random_histograms(rng):
    vocab = ["".join(c) for c in zip("abcab", "abcba")]
    ha = {w: int(rng.integers(1, 6)) for w in vocab if rng.random() < 0.6}
    hb = {w: int(rng.integers(1, 6)) for w in vocab if rng.random() < 0.6}
    return WordHistogram(ha), WordHistogram(hb)


class TestBossEndToEnd:
    def test_identical_series_zero_distance(self):
        rng = np.random.default_rng(18)
        params = SfaParams(window_length=8, word_length=4, alphabet_size=4)
        x = rng.normal(size=30)
        bins = sfa_fit([x], params)
        ha = sfa_transform(x, bins, params)
        hb = sfa_transform(x.copy(), bins, params)
        assert boss_distance(ha, hb) == 0.0

    def test_boss_params_carry_bins(self):
        params = SfaParams(window_length=4, word_length=2, alphabet_size=2)
        bp = BossParams(sfa=params, channel_bins=[np.zeros((2, 1))])
        assert bp.channel_bins[0].shape == (2, 1)
