"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np

from mvtransfer.dataset import MultiViewDataset


def make_random_dataset(
    rng: np.random.Generator,
    n_views: int = 2,
    n_samples: int = 6,
    channels: tuple[int, ...] | int = 2,
    length: int = 12,
    ragged: bool = False,
    n_classes: int = 2,
    with_groups: bool = False,
) -> MultiViewDataset:
    """Build a small random but valid dataset for structural tests."""
    if isinstance(channels, int):
        channels = (channels,) * n_views
    views = []
    for v in range(n_views):
        samples = []
        for _ in range(n_samples):
            m = length if not ragged else int(rng.integers(max(2, length - 4), length + 5))
            samples.append(rng.normal(size=(channels[v], m)))
        views.append(samples)
    sample_ids = [f"s{i:03d}" for i in range(n_samples)]
    labels = [f"c{i % n_classes}" for i in range(n_samples)]
    groups = None
    if with_groups:
        groups = {sid: f"g{i % 4}" for i, sid in enumerate(sample_ids)}
    return MultiViewDataset(views=views, labels=labels, sample_ids=sample_ids, groups=groups)
