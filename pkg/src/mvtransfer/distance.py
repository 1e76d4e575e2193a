"""Channel-wise series distances and the latent distance-vector set.

Two univariate distance measures are provided: dynamic time warping
(optionally band-constrained) and a bag-of-symbolic-words histogram
distance built on a windowed truncated Fourier transform with
equi-depth coefficient binning.  ``channel_pairwise_distances`` applies
either measure channel-by-channel to a pair of multivariate samples,
and ``build_latent_set`` collects those distance vectors over every
corresponding sample pair of a source/target view pair.

The windowed Fourier transform is computed by direct definition with
sequential accumulation (no FFT): window counts are tiny at this scale
and the straightforward arithmetic is exactly reproducible by a
reference reimplementation, which the test suite relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mvtransfer.dataset import MultiViewDataset


class DistanceError(ValueError):
    """Raised for invalid distance parameters or incompatible inputs."""


# ---------------------------------------------------------------------------
# dynamic time warping


@dataclass(frozen=True)
class DtwParams:
    """Warping options.  ``band_radius`` None means unconstrained."""

    band_radius: int | None = None

    def __post_init__(self):
        if self.band_radius is not None and self.band_radius < 0:
            raise DistanceError(f"band_radius must be >= 0, got {self.band_radius}")


def dtw_distance(x, y, params: DtwParams | None = None) -> float:
    """Minimum cumulative absolute-difference cost over monotone warp paths.

    Paths start at the first observation pair, end at the last, and move by
    unit steps in either or both series.  With a band radius r only cells
    with |i - j| <= r participate.
    """
    params = params or DtwParams()
    xs = [float(v) for v in np.asarray(x, dtype=np.float64).ravel()]
    ys = [float(v) for v in np.asarray(y, dtype=np.float64).ravel()]
    n, m = len(xs), len(ys)
    if n == 0 or m == 0:
        raise DistanceError("dtw_distance requires non-empty series")
    r = params.band_radius
    if r is not None and abs(n - m) > r:
        raise DistanceError(
            f"band radius {r} admits no warp path between lengths {n} and {m}"
        )
    inf = math.inf
    prev = [inf] * m
    for i in range(n):
        cur = [inf] * m
        lo = 0 if r is None else max(0, i - r)
        hi = m - 1 if r is None else min(m - 1, i + r)
        xi = xs[i]
        for j in range(lo, hi + 1):
            cost = abs(xi - ys[j])
            if i == 0 and j == 0:
                cur[j] = cost
                continue
            best = prev[j]  # step in x only
            if j > 0:
                if cur[j - 1] < best:
                    best = cur[j - 1]  # step in y only
                if prev[j - 1] < best:
                    best = prev[j - 1]  # diagonal step
            cur[j] = best + cost
        prev = cur
    result = prev[m - 1]
    if not math.isfinite(result):
        raise DistanceError("no feasible warp path (band too narrow)")
    return result


# ---------------------------------------------------------------------------
# windowed symbolic Fourier words


@dataclass(frozen=True)
class SfaParams:
    """Symbolic transform settings.

    ``word_length`` counts real coefficient components (two per retained
    complex coefficient), so it must be even.  With ``mean_normalize`` each
    window is centred first and the constant coefficient is skipped.
    """

    window_length: int
    word_length: int = 4
    alphabet_size: int = 4
    mean_normalize: bool = True

    def __post_init__(self):
        if self.window_length < 1:
            raise DistanceError(f"window_length must be positive, got {self.window_length}")
        if self.word_length < 2 or self.word_length % 2 != 0:
            raise DistanceError(
                f"word_length must be a positive even integer, got {self.word_length}"
            )
        if self.word_length > self.window_length:
            raise DistanceError(
                f"word_length {self.word_length} exceeds window_length {self.window_length}"
            )
        if not 2 <= self.alphabet_size <= 26:
            raise DistanceError(
                f"alphabet_size must lie in [2, 26], got {self.alphabet_size}"
            )


def default_sfa_params(series_length: int) -> SfaParams:
    """Standard settings scaled to a series length: window about a quarter
    of the series (at least 8, never longer than the series), 4 coefficient
    components, 4 symbols, mean-centred windows."""
    if series_length < 2:
        raise DistanceError(f"series of length {series_length} admits no symbolic words")
    w = min(series_length, max(8, math.ceil(series_length / 4)))
    l = 4 if w >= 4 else 2
    return SfaParams(window_length=w, word_length=l, alphabet_size=4, mean_normalize=True)


@dataclass
class WordHistogram:
    """Counts of symbolic words for one series, duplicates-collapsed."""

    counts: dict[str, int]

    def __post_init__(self):
        for word, count in self.counts.items():
            if count < 1:
                raise DistanceError(f"word {word!r} has non-positive count {count}")


def _trig_tables(params: SfaParams) -> tuple[list[list[float]], list[list[float]]]:
    """Cosine/sine basis rows for the retained coefficient frequencies."""
    w = params.window_length
    n_complex = params.word_length // 2
    first = 1 if params.mean_normalize else 0
    cos_rows, sin_rows = [], []
    for freq in range(first, first + n_complex):
        cos_rows.append([math.cos((-2.0 * math.pi * freq * t) / w) for t in range(w)])
        sin_rows.append([math.sin((-2.0 * math.pi * freq * t) / w) for t in range(w)])
    return cos_rows, sin_rows


def _window_coefficients(series: list[float], params: SfaParams, tables) -> list[list[float]]:
    """Real coefficient vectors (length word_length) for every window."""
    w = params.window_length
    cos_rows, sin_rows = tables
    out = []
    for start in range(len(series) - w + 1):
        window = series[start:start + w]
        if params.mean_normalize:
            total = 0.0
            for v in window:
                total += v
            mu = total / w
            window = [v - mu for v in window]
        coeffs = []
        for cos_row, sin_row in zip(cos_rows, sin_rows):
            re = 0.0
            im = 0.0
            for t in range(w):
                re += window[t] * cos_row[t]
                im += window[t] * sin_row[t]
            coeffs.append(re)
            coeffs.append(im)
        out.append(coeffs)
    return out


def _as_series_list(x) -> list[float]:
    arr = np.asarray(x, dtype=np.float64).ravel()
    return [float(v) for v in arr]


def sfa_fit(corpus, params: SfaParams) -> np.ndarray:
    """Equi-depth breakpoints per coefficient position over a series corpus.

    Returns a (word_length, alphabet_size - 1) matrix; row ``p`` holds the
    non-decreasing breakpoints for coefficient position ``p``, picked from
    the sorted pool of all windows' values at the depth quantiles.
    """
    series_list = [_as_series_list(s) for s in corpus]
    if not series_list:
        raise DistanceError("sfa_fit requires a non-empty corpus")
    shortest = min(len(s) for s in series_list)
    if shortest < params.window_length:
        raise DistanceError(
            f"window_length {params.window_length} exceeds shortest corpus series ({shortest})"
        )
    tables = _trig_tables(params)
    pool = []
    for series in series_list:
        pool.extend(_window_coefficients(series, params, tables))
    values = np.array(pool, dtype=np.float64)  # (total_windows, word_length)
    n = values.shape[0]
    a = params.alphabet_size
    bins = np.empty((params.word_length, a - 1), dtype=np.float64)
    for p in range(params.word_length):
        ordered = np.sort(values[:, p])
        for j in range(1, a):
            bins[p, j - 1] = ordered[(j * n) // a]
    return bins


def sfa_transform(x, bins: np.ndarray, params: SfaParams) -> WordHistogram:
    """Symbolic word histogram of one series under fitted breakpoints.

    Windows slide with stride 1; each yields a word of ``word_length``
    letters (letter = count of breakpoints at or below the coefficient);
    consecutive duplicate words collapse to one occurrence.
    """
    series = _as_series_list(x)
    if len(series) < params.window_length:
        raise DistanceError(
            f"series of length {len(series)} is shorter than window_length {params.window_length}"
        )
    bins = np.asarray(bins, dtype=np.float64)
    if bins.shape != (params.word_length, params.alphabet_size - 1):
        raise DistanceError(
            f"bins shape {bins.shape} incompatible with params "
            f"({params.word_length} x {params.alphabet_size - 1})"
        )
    tables = _trig_tables(params)
    words = []
    for coeffs in _window_coefficients(series, params, tables):
        letters = []
        for p, value in enumerate(coeffs):
            symbol = 0
            for breakpoint in bins[p]:
                if value >= breakpoint:
                    symbol += 1
            letters.append(chr(ord("a") + symbol))
        words.append("".join(letters))
    counts: dict[str, int] = {}
    previous = None
    for word in words:
        if word != previous:
            counts[word] = counts.get(word, 0) + 1
        previous = word
    return WordHistogram(counts=counts)


def boss_distance(hist_a: WordHistogram, hist_b: WordHistogram) -> float:
    """Symmetrized squared histogram difference.

    The one-sided form sums (count_a - count_b)^2 over the words present in
    the first histogram only; the two directions are averaged so the result
    is symmetric.
    """
    def one_sided(p: dict[str, int], q: dict[str, int]) -> float:
        total = 0.0
        for word, count in p.items():
            diff = count - q.get(word, 0)
            total += diff * diff
        return total

    a, b = hist_a.counts, hist_b.counts
    return 0.5 * (one_sided(a, b) + one_sided(b, a))


@dataclass
class BossParams:
    """Histogram-distance settings: transform params plus fitted per-channel
    breakpoints (``channel_bins[k]`` for channel k).  Without bins, each
    sample pair fits breakpoints on its own two channel series."""

    sfa: SfaParams
    channel_bins: list[np.ndarray] | None = None


# ---------------------------------------------------------------------------
# latent distance vectors


@dataclass
class ImportanceVector:
    """Per-channel distances between one source/target sample pair."""

    components: np.ndarray
    sample_id: str = ""

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=np.float64)
        if self.components.ndim != 1:
            raise DistanceError("components must be a flat vector")
        if not np.all(np.isfinite(self.components)) or np.any(self.components < 0):
            raise DistanceError(
                f"components must be non-negative and finite, got {self.components}"
            )

    @property
    def dimension(self) -> int:
        return self.components.shape[0]


@dataclass
class ImportanceLatentSet:
    """All per-sample distance vectors for one source/target view pair.

    ``vectors`` hold the values actually consumed downstream (length-
    normalized when ``normalize`` is on); ``raw_vectors`` always keep the
    unnormalized distances for inspection.
    """

    measure: str
    source_view: int
    target_view: int
    vectors: list[ImportanceVector]
    normalize: bool = True
    raw_vectors: list[ImportanceVector] | None = None

    def __post_init__(self):
        if len(self.vectors) < 2:
            raise DistanceError(f"need at least 2 vectors, got {len(self.vectors)}")
        dims = {v.dimension for v in self.vectors}
        if len(dims) != 1:
            raise DistanceError(f"vectors mix dimensions {sorted(dims)}")

    @property
    def dimension(self) -> int:
        return self.vectors[0].dimension

    @property
    def size(self) -> int:
        return len(self.vectors)

    def as_array(self) -> np.ndarray:
        return np.stack([v.components for v in self.vectors], axis=0)

    def to_json_dict(self) -> dict:
        payload = {
            "measure": self.measure,
            "source_view": self.source_view,
            "target_view": self.target_view,
            "K": self.dimension,
            "vectors": [[float(c) for c in v.components] for v in self.vectors],
            "normalize": self.normalize,
        }
        if self.raw_vectors is not None:
            payload["vectors_raw"] = [
                [float(c) for c in v.components] for v in self.raw_vectors
            ]
        return payload


def latent_set_from_json(payload: dict) -> ImportanceLatentSet:
    for key in ("measure", "source_view", "target_view", "K", "vectors"):
        if key not in payload:
            raise DistanceError(f"latent-set payload missing key {key!r}")
    vectors = [
        ImportanceVector(components=np.array(row, dtype=np.float64), sample_id=str(i))
        for i, row in enumerate(payload["vectors"])
    ]
    raw = None
    if payload.get("vectors_raw") is not None:
        raw = [
            ImportanceVector(components=np.array(row, dtype=np.float64), sample_id=str(i))
            for i, row in enumerate(payload["vectors_raw"])
        ]
    latent = ImportanceLatentSet(
        measure=str(payload["measure"]),
        source_view=int(payload["source_view"]),
        target_view=int(payload["target_view"]),
        vectors=vectors,
        normalize=bool(payload.get("normalize", True)),
        raw_vectors=raw,
    )
    if latent.dimension != int(payload["K"]):
        raise DistanceError(
            f"payload K={payload['K']} but vectors have dimension {latent.dimension}"
        )
    return latent


def _raw_channel_distances(source_sample, target_sample, measure, measure_params):
    source = np.asarray(source_sample, dtype=np.float64)
    target = np.asarray(target_sample, dtype=np.float64)
    if source.ndim != 2 or target.ndim != 2:
        raise DistanceError("samples must be 2-D (channels x time)")
    if source.shape[0] != target.shape[0]:
        raise DistanceError(
            f"channel counts differ: source {source.shape[0]} vs target {target.shape[0]}"
        )
    k = source.shape[0]
    values = np.empty(k, dtype=np.float64)
    if measure == "dtw":
        params = measure_params or DtwParams()
        if not isinstance(params, DtwParams):
            raise DistanceError(f"dtw measure expects DtwParams, got {type(params).__name__}")
        for c in range(k):
            values[c] = dtw_distance(source[c], target[c], params)
    elif measure == "boss":
        params = measure_params
        if params is None:
            params = default_sfa_params(min(source.shape[1], target.shape[1]))
        if isinstance(params, SfaParams):
            params = BossParams(sfa=params, channel_bins=None)
        if not isinstance(params, BossParams):
            raise DistanceError(
                f"boss measure expects BossParams or SfaParams, got {type(params).__name__}"
            )
        if params.channel_bins is not None and len(params.channel_bins) != k:
            raise DistanceError(
                f"{len(params.channel_bins)} channel bin matrices for {k} channels"
            )
        for c in range(k):
            if params.channel_bins is not None:
                bins = params.channel_bins[c]
            else:
                bins = sfa_fit([source[c], target[c]], params.sfa)
            hist_s = sfa_transform(source[c], bins, params.sfa)
            hist_t = sfa_transform(target[c], bins, params.sfa)
            values[c] = boss_distance(hist_s, hist_t)
    else:
        raise DistanceError(f"unknown measure {measure!r} (expected 'dtw' or 'boss')")
    return values, source.shape[1], target.shape[1]


def channel_pairwise_distances(
    source_sample,
    target_sample,
    measure: str,
    measure_params=None,
    normalize: bool = True,
    sample_id: str = "",
) -> ImportanceVector:
    """Per-channel distance vector between two matched multivariate samples.

    With ``normalize`` each component is divided by the mean of the two
    series lengths, so series duration does not dominate the comparison.
    """
    values, m_source, m_target = _raw_channel_distances(
        source_sample, target_sample, measure, measure_params
    )
    if normalize:
        values = values / ((m_source + m_target) / 2.0)
    return ImportanceVector(components=values, sample_id=sample_id)


def build_latent_set(
    dataset: MultiViewDataset,
    source_view: int,
    target_view: int,
    measure: str,
    measure_params=None,
    normalize: bool = True,
) -> ImportanceLatentSet:
    """Distance vectors for every corresponding sample pair, in sample order.

    For the histogram measure, breakpoints are fitted once per channel on
    the pooled channel series of both views, then reused for every pair.
    """
    v = dataset.n_views
    for name, idx in (("source_view", source_view), ("target_view", target_view)):
        if not 0 <= idx < v:
            raise DistanceError(f"{name} {idx} out of range for {v} views")
    if source_view == target_view:
        raise DistanceError("source_view and target_view must differ")
    k_source = dataset.channel_count(source_view)
    k_target = dataset.channel_count(target_view)
    if k_source != k_target:
        raise DistanceError(
            f"views disagree on channel count: {k_source} vs {k_target}"
        )

    if measure == "boss":
        measure_params = _fit_boss_params(dataset, source_view, target_view, measure_params)

    vectors = []
    raw_vectors = []
    for i, sid in enumerate(dataset.sample_ids):
        values, m_s, m_t = _raw_channel_distances(
            dataset.views[source_view][i], dataset.views[target_view][i],
            measure, measure_params,
        )
        raw_vectors.append(ImportanceVector(components=values.copy(), sample_id=sid))
        if normalize:
            values = values / ((m_s + m_t) / 2.0)
        vectors.append(ImportanceVector(components=values, sample_id=sid))
    return ImportanceLatentSet(
        measure=measure,
        source_view=source_view,
        target_view=target_view,
        vectors=vectors,
        normalize=normalize,
        raw_vectors=raw_vectors,
    )


def _fit_boss_params(dataset, source_view, target_view, measure_params) -> BossParams:
    """Resolve histogram-distance params, fitting pooled per-channel bins."""
    if isinstance(measure_params, BossParams) and measure_params.channel_bins is not None:
        return measure_params
    if isinstance(measure_params, BossParams):
        sfa = measure_params.sfa
    elif isinstance(measure_params, SfaParams):
        sfa = measure_params
    elif measure_params is None:
        shortest = min(
            min(dataset.lengths(source_view)), min(dataset.lengths(target_view))
        )
        sfa = default_sfa_params(shortest)
    else:
        raise DistanceError(
            f"boss measure expects BossParams or SfaParams, got {type(measure_params).__name__}"
        )
    k = dataset.channel_count(source_view)
    channel_bins = []
    for c in range(k):
        corpus = [sample[c] for sample in dataset.views[source_view]]
        corpus += [sample[c] for sample in dataset.views[target_view]]
        channel_bins.append(sfa_fit(corpus, sfa))
    return BossParams(sfa=sfa, channel_bins=channel_bins)
