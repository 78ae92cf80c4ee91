"""Distribution-free bootstrap of the real-world data in moment space."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSample
from .input_models import RealWorldDataset, empirical_moments, stack

# A zero-sd gamma resample has no moment inverse; redraw it a bounded number
# of times before giving up.
MAX_DEGENERATE_REDRAWS = 100


def resample_process(data: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw len(data) observations from data with replacement."""
    data = np.asarray(data)
    idx = rng.integers(0, data.size, size=data.size)
    return data[idx]


def bootstrap_moment_vector(
    dataset: RealWorldDataset, rng: np.random.Generator
) -> np.ndarray:
    """One bootstrap resampled moment vector.

    Processes are resampled independently in fixed order (process 1 first);
    gamma blocks that come back degenerate are redrawn.
    """
    blocks = []
    for data, fam, h in zip(
        dataset.samples, dataset.layout.families, dataset.layout.block_sizes
    ):
        for attempt in range(MAX_DEGENERATE_REDRAWS + 1):
            try:
                blocks.append(empirical_moments(resample_process(data, rng), h))
                break
            except DegenerateSample:
                if attempt == MAX_DEGENERATE_REDRAWS:
                    raise DegenerateSample(
                        f"{fam} process produced {MAX_DEGENERATE_REDRAWS} degenerate "
                        "resamples in a row"
                    )
    return stack(blocks, dataset.layout)


@dataclass(frozen=True)
class BootstrapMoments:
    """B bootstrap moment vectors plus a fingerprint of their source data."""

    vectors: np.ndarray  # (B, d)
    source_fingerprint: str

    @property
    def count(self) -> int:
        return self.vectors.shape[0]


def dataset_fingerprint(dataset: RealWorldDataset) -> str:
    digest = hashlib.sha256()
    for arr in dataset.samples:
        digest.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    return digest.hexdigest()[:16]


def generate(
    dataset: RealWorldDataset, B: int, rng: np.random.Generator
) -> BootstrapMoments:
    """B independent bootstrap moment vectors of the dataset."""
    if B < 1:
        raise ValueError("B must be at least 1")
    vectors = np.empty((B, dataset.layout.dim))
    for b in range(B):
        vectors[b] = bootstrap_moment_vector(dataset, rng)
    return BootstrapMoments(vectors, dataset_fingerprint(dataset))


__all__ = [
    "BootstrapMoments",
    "bootstrap_moment_vector",
    "dataset_fingerprint",
    "generate",
    "resample_process",
]
