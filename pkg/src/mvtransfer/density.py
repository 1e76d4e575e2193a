"""Density estimation over latent distance vectors.

Low-dimensional sets (up to three channels) get a Gaussian-kernel
density estimate with a diagonal bandwidth matrix; higher-dimensional
sets get the invertible coupling flow.  ``fit_density`` applies the
dimension rule (overridable) and returns a tagged ``DensityModel`` that
exposes log-density evaluation and seeded sampling for either variant.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mvtransfer.flow import (
    FlowConfig,
    FlowModel,
    as_data_array,
    fit_flow,
    flow_from_json_dict,
    flow_inverse,
    flow_log_density,
    flow_to_json_dict,
    sample_flow,
)

KDE_MAX_DIMENSION = 3
BANDWIDTH_FLOOR = 1e-6


class DensityError(ValueError):
    """Raised for invalid density-estimation inputs or parameters."""


def select_density_method(dimension: int, override: str | None = None) -> str:
    """Dimension rule: kernel estimate up to 3 dimensions, flow above."""
    if dimension < 1:
        raise DensityError(f"dimension must be positive, got {dimension}")
    if override is not None:
        if override not in ("kde", "flow"):
            raise DensityError(f"unknown density method override {override!r}")
        return override
    return "kde" if dimension <= KDE_MAX_DIMENSION else "flow"


@dataclass
class KdeModel:
    """Gaussian-kernel mixture over the support points.

    ``bandwidth_diag`` holds the diagonal entries of the bandwidth matrix
    (per-dimension variances of the kernel).
    """

    support_points: np.ndarray
    bandwidth_diag: np.ndarray

    def __post_init__(self):
        self.support_points = np.atleast_2d(np.asarray(self.support_points, dtype=np.float64))
        self.bandwidth_diag = np.asarray(self.bandwidth_diag, dtype=np.float64).ravel()
        if self.support_points.size == 0:
            raise DensityError("support_points must be non-empty")
        if not np.all(np.isfinite(self.support_points)):
            raise DensityError("support_points contain non-finite values")
        if self.bandwidth_diag.shape[0] != self.support_points.shape[1]:
            raise DensityError(
                f"bandwidth has {self.bandwidth_diag.shape[0]} entries for "
                f"{self.support_points.shape[1]} dimensions"
            )
        if not np.all(self.bandwidth_diag > 0):
            raise DensityError("bandwidth entries must be strictly positive")

    @property
    def dimension(self) -> int:
        return self.support_points.shape[1]


def fit_kde(latent, bandwidth_rule="silverman") -> KdeModel:
    """Fit the kernel model with a per-dimension plug-in bandwidth.

    ``bandwidth_rule`` is "silverman", "scott", or a positive number used
    directly as the kernel standard deviation in every dimension.  A
    zero-variance dimension falls back to a fixed floor bandwidth with a
    warning instead of failing.
    """
    data = as_data_array(latent)
    n, d = data.shape
    if n < 2:
        raise DensityError(f"need at least 2 support points, got {n}")
    if isinstance(bandwidth_rule, str):
        sigma = data.std(axis=0, ddof=1)
        if bandwidth_rule == "silverman":
            factor = (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * n ** (-1.0 / (d + 4.0))
        elif bandwidth_rule == "scott":
            factor = n ** (-1.0 / (d + 4.0))
        else:
            raise DensityError(f"unknown bandwidth rule {bandwidth_rule!r}")
        widths = factor * sigma
    else:
        h = float(bandwidth_rule)
        if h <= 0:
            raise DensityError(f"fixed bandwidth must be positive, got {h}")
        widths = np.full(d, h)
    low = widths < BANDWIDTH_FLOOR
    if np.any(low):
        warnings.warn(
            f"bandwidth floored to {BANDWIDTH_FLOOR} in zero-variance dimension(s) "
            f"{np.nonzero(low)[0].tolist()}",
            stacklevel=2,
        )
        widths = np.where(low, BANDWIDTH_FLOOR, widths)
    return KdeModel(support_points=data, bandwidth_diag=widths ** 2)


def kde_log_density(model: KdeModel, point) -> float:
    """Log of the kernel mixture value, computed with log-sum-exp."""
    x = np.asarray(point, dtype=np.float64).ravel()
    if x.shape[0] != model.dimension:
        raise DensityError(f"point has dimension {x.shape[0]}, model {model.dimension}")
    if not np.all(np.isfinite(x)):
        raise DensityError("point contains non-finite values")
    diff = x - model.support_points
    exponents = -0.5 * (diff ** 2 / model.bandwidth_diag).sum(axis=1)
    peak = exponents.max()
    lse = peak + math.log(np.exp(exponents - peak).sum())
    n, d = model.support_points.shape
    norm = -math.log(n) - 0.5 * d * math.log(2.0 * math.pi) - 0.5 * float(
        np.log(model.bandwidth_diag).sum()
    )
    return norm + float(lse)


def sample_kde(model: KdeModel, count: int, seed: int) -> np.ndarray:
    """Mixture sampling: uniform support point plus kernel-shaped noise."""
    if count < 1:
        raise DensityError(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    n, d = model.support_points.shape
    picks = rng.integers(0, n, size=count)
    noise = rng.standard_normal((count, d)) * np.sqrt(model.bandwidth_diag)
    return model.support_points[picks] + noise


@dataclass
class DensityModel:
    """Tagged union over the two density variants."""

    variant: str
    dimension: int
    kde: KdeModel | None = None
    flow: FlowModel | None = None

    def __post_init__(self):
        if self.variant not in ("kde", "flow"):
            raise DensityError(f"unknown variant {self.variant!r}")
        present = {"kde": self.kde, "flow": self.flow}[self.variant]
        other = {"kde": self.flow, "flow": self.kde}[self.variant]
        if present is None or other is not None:
            raise DensityError("exactly one variant payload must be present")
        if self.variant == "kde" and self.kde.dimension != self.dimension:
            raise DensityError("kde dimension disagrees with the declared dimension")
        if self.variant == "flow" and self.flow.dimension != self.dimension:
            raise DensityError("flow dimension disagrees with the declared dimension")

    def log_density(self, point) -> float:
        if self.variant == "kde":
            return kde_log_density(self.kde, point)
        return flow_log_density(self.flow, point)

    def sample(self, count: int, seed: int) -> np.ndarray:
        if self.variant == "kde":
            return sample_kde(self.kde, count, seed)
        return sample_flow(self.flow, count, seed)


def fit_density(
    latent,
    override: str | None = None,
    kde_bandwidth="silverman",
    flow_config: FlowConfig | None = None,
) -> DensityModel:
    """Pick the method for the latent set's dimension and fit it."""
    data = as_data_array(latent)
    method = select_density_method(data.shape[1], override)
    if method == "kde":
        return DensityModel(
            variant="kde", dimension=data.shape[1], kde=fit_kde(data, kde_bandwidth)
        )
    model = fit_flow(data, flow_config or FlowConfig())
    return DensityModel(variant="flow", dimension=data.shape[1], flow=model)


def density_model_to_json_dict(model: DensityModel) -> dict:
    if model.variant == "kde":
        payload = {
            "support_points": model.kde.support_points.tolist(),
            "bandwidth_diag": model.kde.bandwidth_diag.tolist(),
        }
    else:
        payload = flow_to_json_dict(model.flow)
    return {"variant": model.variant, "dimension": model.dimension, model.variant: payload}


def density_model_from_json_dict(payload: dict) -> DensityModel:
    variant = payload.get("variant")
    if variant == "kde":
        body = payload["kde"]
        kde = KdeModel(
            support_points=np.array(body["support_points"], dtype=np.float64),
            bandwidth_diag=np.array(body["bandwidth_diag"], dtype=np.float64),
        )
        return DensityModel(variant="kde", dimension=int(payload["dimension"]), kde=kde)
    if variant == "flow":
        return DensityModel(
            variant="flow",
            dimension=int(payload["dimension"]),
            flow=flow_from_json_dict(payload["flow"]),
        )
    raise DensityError(f"unknown variant {variant!r} in serialized model")


def save_density_model(model: DensityModel, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(density_model_to_json_dict(model), fh)
        fh.write("\n")


def load_density_model(path) -> DensityModel:
    path = Path(path)
    if not path.is_file():
        raise DensityError(f"no density model file at {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DensityError(f"unparseable density model {path}: {exc}") from exc
    return density_model_from_json_dict(payload)


def evaluate_density_grid(
    model: DensityModel,
    mins,
    maxs,
    resolution: int,
    project_dims: list[int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate exp(log-density) over a regular 1-D or 2-D grid.

    For models with more than two dimensions, ``project_dims`` selects the
    one or two coordinates to sweep; the remaining coordinates stay fixed
    at the model's central point (support mean or inverse image of the
    latent origin), making the result an axis-aligned slice.  Returns the
    full d-dimensional grid points and the density at each.
    """
    dims = list(project_dims) if project_dims is not None else list(range(model.dimension))
    if len(dims) not in (1, 2):
        raise DensityError(
            f"grids are 1-D or 2-D only; got {len(dims)} swept dimensions "
            f"(model dimension {model.dimension} needs a projection)"
        )
    if len(set(dims)) != len(dims):
        raise DensityError(f"repeated projection dimensions {dims}")
    for k in dims:
        if not 0 <= k < model.dimension:
            raise DensityError(f"projection dimension {k} out of range")
    mins = np.asarray(mins, dtype=np.float64).ravel()
    maxs = np.asarray(maxs, dtype=np.float64).ravel()
    if mins.shape[0] != len(dims) or maxs.shape[0] != len(dims):
        raise DensityError(
            f"need {len(dims)} min/max bounds, got {mins.shape[0]}/{maxs.shape[0]}"
        )
    if np.any(mins >= maxs):
        raise DensityError(f"grid bounds reversed or empty: mins {mins}, maxs {maxs}")
    if resolution < 2:
        raise DensityError(f"resolution must be at least 2, got {resolution}")

    if model.variant == "kde":
        center = model.kde.support_points.mean(axis=0)
    else:
        center = flow_inverse(model.flow, np.zeros(model.dimension))
    axes = [np.linspace(mins[i], maxs[i], resolution) for i in range(len(dims))]
    if len(dims) == 1:
        grid = axes[0][:, None]
    else:
        a, b = np.meshgrid(axes[0], axes[1], indexing="ij")
        grid = np.column_stack([a.ravel(), b.ravel()])
    points = np.tile(center, (grid.shape[0], 1))
    for col, k in enumerate(dims):
        points[:, k] = grid[:, col]
    densities = np.array([math.exp(model.log_density(p)) for p in points])
    return points, densities
