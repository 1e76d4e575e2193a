"""Importance sampling, matrix-norm scoring, and epoch allocation.

Given a fitted density model over inter-view distance vectors, this module
draws a batch of latent samples, folds the batch into a matrix, reduces the
matrix to a scalar score through a matrix norm, and converts per-source-view
scores into an integer pretraining-epoch schedule.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .density import DensityModel, fit_density, save_density_model
from .distance import build_latent_set

POWER_ITERATION_TOLERANCE = 1e-10
POWER_ITERATION_MAX_STEPS = 10_000

NORM_KINDS = ("frobenius", "spectral", "entrywise_l1")
SAMPLING_MODES = ("vectors", "density_weights")


class NormConvergenceError(RuntimeError):
    """Raised when spectral power iteration exhausts its step budget."""


@dataclass(frozen=True)
class SamplingConfig:
    """Controls how latent batches are drawn and reduced to a score.

    ``sampling_mode`` selects what the batch matrix holds: ``vectors`` keeps
    the sampled latent vectors as rows (the default), while
    ``density_weights`` replaces each sampled vector with the model density
    evaluated at it, yielding a single-column matrix of weights.
    """

    batch_size: int = 1024
    seed: int = 0
    norm_kind: str = "frobenius"
    invert_importance: bool = False
    sampling_mode: str = "vectors"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.norm_kind not in NORM_KINDS:
            raise ValueError(
                f"unknown norm_kind {self.norm_kind!r}; expected one of {NORM_KINDS}"
            )
        if self.sampling_mode not in SAMPLING_MODES:
            raise ValueError(
                f"unknown sampling_mode {self.sampling_mode!r}; "
                f"expected one of {SAMPLING_MODES}"
            )


def draw_importance_matrix(model: DensityModel, config: SamplingConfig) -> np.ndarray:
    """Draw a seeded batch of latent samples as a (batch_size, K) matrix.

    In ``density_weights`` mode the result is instead the (batch_size, 1)
    column of density values at the sampled points.
    """
    samples = model.sample(config.batch_size, config.seed)
    if config.sampling_mode == "density_weights":
        weights = [np.exp(model.log_density(row)) for row in samples]
        matrix = np.asarray(weights, dtype=float).reshape(-1, 1)
    else:
        matrix = samples
    if not np.all(np.isfinite(matrix)):
        raise ValueError("sampled importance matrix contains non-finite entries")
    return matrix


def matrix_norm(
    matrix,
    kind: str = "frobenius",
    *,
    tolerance: float = POWER_ITERATION_TOLERANCE,
    max_iterations: int = POWER_ITERATION_MAX_STEPS,
) -> float:
    """Reduce a matrix to a non-negative scalar.

    ``frobenius`` is the square root of the sum of squared entries,
    ``entrywise_l1`` the sum of absolute entries, and ``spectral`` the
    largest singular value, found by power iteration on the Gram matrix.
    """
    values = np.asarray(matrix, dtype=float)
    if values.ndim != 2 or values.size == 0:
        raise ValueError("matrix must be 2-D and non-empty")
    if not np.all(np.isfinite(values)):
        raise ValueError("matrix entries must be finite")
    if kind == "frobenius":
        return float(np.sqrt(np.sum(values * values)))
    if kind == "entrywise_l1":
        return float(np.sum(np.abs(values)))
    if kind == "spectral":
        return _spectral_norm(values, tolerance, max_iterations)
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def _spectral_norm(matrix: np.ndarray, tolerance: float, max_iterations: int) -> float:
    """Largest singular value via power iteration on the K-by-K Gram matrix."""
    gram = matrix.T @ matrix
    rng = np.random.default_rng(0xA001)
    vector = rng.standard_normal(gram.shape[0])
    vector /= np.linalg.norm(vector)
    eigenvalue = float(vector @ gram @ vector)
    delta = np.inf
    for _ in range(max_iterations):
        product = gram @ vector
        length = float(np.linalg.norm(product))
        if length == 0.0:
            # The iterate is annihilated, which only happens when the Gram
            # matrix itself is (numerically) zero along every direction met.
            return 0.0
        vector = product / length
        updated = float(vector @ gram @ vector)
        delta = abs(updated - eigenvalue)
        if delta <= tolerance * max(1.0, abs(updated)):
            return float(np.sqrt(max(updated, 0.0)))
        eigenvalue = updated
    raise NormConvergenceError(
        f"power iteration did not converge within {max_iterations} iterations "
        f"(last eigenvalue change {delta:.3e}); the frobenius norm is a safe fallback"
    )


def allocate_epochs(scores, total_epochs: int) -> list[int]:
    """Split ``total_epochs`` across views proportionally to ``scores``.

    Real-valued proportional shares are rounded to integers with the
    largest-remainder method: every view first receives the floor of its
    share, then the leftover epochs go one each to the views with the
    largest fractional parts, ties favouring the lower index.  The result
    always sums to ``total_epochs`` exactly.

    All-zero scores carry no preference, so the budget is spread uniformly
    and a warning is emitted.
    """
    values = np.asarray(scores, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("scores must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(values)):
        raise ValueError("scores must be finite")
    if np.any(values < 0):
        raise ValueError("scores must be non-negative")
    if isinstance(total_epochs, bool) or not isinstance(total_epochs, (int, np.integer)):
        raise ValueError("total_epochs must be an integer")
    if total_epochs < 1:
        raise ValueError("total_epochs must be at least 1")

    total_score = float(values.sum())
    if total_score == 0.0:
        warnings.warn("all scores are zero; allocating epochs uniformly", UserWarning)
        values = np.ones_like(values)
        total_score = float(values.size)

    shares = values / total_score * total_epochs
    floors = np.floor(shares).astype(int)
    leftover = int(total_epochs - floors.sum())
    remainders = shares - floors
    order = sorted(range(values.size), key=lambda i: (-remainders[i], i))
    epochs = floors.copy()
    for index in order[:leftover]:
        epochs[index] += 1
    return [int(count) for count in epochs]


@dataclass(frozen=True)
class TransferSchedule:
    """Per-source-view scores and the integer epoch split they induce."""

    scores: tuple
    epochs: tuple
    total_epochs: int
    target_view: int

    def __post_init__(self):
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        object.__setattr__(self, "epochs", tuple(int(e) for e in self.epochs))
        if len(self.scores) != len(self.epochs):
            raise ValueError("scores and epochs must have matching lengths")
        if len(self.scores) == 0:
            raise ValueError("schedule must cover at least one source view")
        if not all(np.isfinite(s) for s in self.scores):
            raise ValueError("scores must be finite")
        if any(s < 0 for s in self.scores):
            raise ValueError("scores must be non-negative")
        if any(e < 0 for e in self.epochs):
            raise ValueError("epochs must be non-negative")
        if self.total_epochs < 0:
            raise ValueError("total_epochs must be non-negative")
        if sum(self.epochs) != self.total_epochs:
            raise ValueError("epochs must sum to total_epochs exactly")
        if self.target_view < 0:
            raise ValueError("target_view must be non-negative")


def build_transfer_schedule(scores, total_epochs: int, target_view: int) -> TransferSchedule:
    """Allocate epochs for the given scores and wrap the result."""
    epochs = allocate_epochs(scores, total_epochs)
    return TransferSchedule(
        scores=tuple(float(s) for s in np.asarray(scores, dtype=float)),
        epochs=tuple(epochs),
        total_epochs=int(total_epochs),
        target_view=int(target_view),
    )


def schedule_to_json_dict(
    schedule: TransferSchedule, measure: str, norm_kind: str, seeds: dict
) -> dict:
    """Lay out a schedule as the JSON payload consumed by the pipeline."""
    return {
        "target_view": schedule.target_view,
        "measure": measure,
        "norm": norm_kind,
        "scores": list(schedule.scores),
        "epochs": list(schedule.epochs),
        "total_epochs": schedule.total_epochs,
        "seeds": dict(seeds),
    }


def write_schedule_json(
    path, schedule: TransferSchedule, measure: str, norm_kind: str, seeds: dict
) -> None:
    """Write the schedule payload to ``path`` with stable formatting."""
    payload = schedule_to_json_dict(schedule, measure, norm_kind, seeds)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def score_source_view(
    dataset,
    source_view: int,
    target_view: int,
    measure: str,
    measure_params=None,
    density_override: str | None = None,
    sampling: SamplingConfig | None = None,
    *,
    kde_bandwidth="silverman",
    flow_config=None,
    artifact_dir=None,
) -> float:
    """Score one source view against the target view.

    Composes the full scoring chain: build the latent set of channel-wise
    distance vectors, fit a density model over it, draw a seeded importance
    batch, and reduce the batch to a scalar through the configured matrix
    norm.  With ``invert_importance`` the distance-flavoured score ``g`` is
    converted to the affinity ``1 / (1 + g)`` so that more similar views
    score higher.  When ``artifact_dir`` is given, the intermediate latent
    set and density model are persisted there as JSON.
    """
    config = sampling if sampling is not None else SamplingConfig()
    latent = build_latent_set(dataset, source_view, target_view, measure, measure_params)
    model = fit_density(
        latent,
        override=density_override,
        kde_bandwidth=kde_bandwidth,
        flow_config=flow_config,
    )
    matrix = draw_importance_matrix(model, config)
    score = matrix_norm(matrix, config.norm_kind)
    if config.invert_importance:
        score = 1.0 / (1.0 + score)
    if artifact_dir is not None:
        _persist_artifacts(artifact_dir, source_view, latent, model)
    return score


def _persist_artifacts(artifact_dir, source_view: int, latent, model: DensityModel) -> None:
    directory = Path(artifact_dir)
    directory.mkdir(parents=True, exist_ok=True)
    latent_path = directory / f"latent_view{source_view}.json"
    with open(latent_path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(latent.to_json_dict(), handle, indent=2)
        handle.write("\n")
    save_density_model(model, directory / f"density_view{source_view}.json")
