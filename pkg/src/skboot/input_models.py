"""Parametric input models, moment coordinates, and synthetic data generation.

Each input process is a univariate parametric distribution characterized by
its first standardized moments: mean and standard deviation for gamma, mean
only for Bernoulli.  Stacking the per-process moment blocks yields the moment
vector that indexes the simulation response surface.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSample, InvalidMoment, LayoutMismatch

# Validity box used when moments are turned back into simulation parameters:
# a gamma block needs a strictly positive sd (relative floor) and a Bernoulli
# mean must stay away from 0/1 to keep the samplers non-degenerate.
GAMMA_SD_FLOOR = 1e-6
BERNOULLI_EPS = 1e-6


@dataclass(frozen=True)
class Gamma:
    """Gamma distribution with shape/scale parameterization (mean = shape*scale)."""

    shape: float
    scale: float
    block_size = 2
    family = "gamma"

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise InvalidMoment(
                f"gamma requires shape > 0 and scale > 0, got ({self.shape}, {self.scale})"
            )

    def moments(self) -> np.ndarray:
        return np.array([self.shape * self.scale, np.sqrt(self.shape) * self.scale])

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return rng.gamma(self.shape, self.scale, size=size)


@dataclass(frozen=True)
class Bernoulli:
    """Bernoulli distribution with success probability p."""

    p: float
    block_size = 1
    family = "bernoulli"

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise InvalidMoment(f"Bernoulli requires p in [0, 1], got {self.p}")

    def moments(self) -> np.ndarray:
        return np.array([self.p])

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(size) < self.p).astype(float)


Distribution = Gamma | Bernoulli


def moments_of(model: Distribution) -> np.ndarray:
    """Standardized-moment block of a distribution: (mean, sd) or (mean,)."""
    return model.moments()


def params_from_moments(family: str, block) -> Distribution:
    """Method-of-moments inverse of :func:`moments_of`.

    Raises InvalidMoment when the block lies outside the family's validity
    region.
    """
    block = np.asarray(block, dtype=float).ravel()
    if family == "gamma":
        if block.shape != (2,):
            raise LayoutMismatch(f"gamma block has size 2, got {block.shape}")
        mean, sd = block
        if mean <= 0 or sd <= 0:
            raise InvalidMoment(f"gamma moments must be positive, got ({mean}, {sd})")
        return Gamma(shape=(mean / sd) ** 2, scale=sd**2 / mean)
    if family == "bernoulli":
        if block.shape != (1,):
            raise LayoutMismatch(f"Bernoulli block has size 1, got {block.shape}")
        (mean,) = block
        if not (0.0 <= mean <= 1.0):
            raise InvalidMoment(f"Bernoulli mean must lie in [0, 1], got {mean}")
        return Bernoulli(p=mean)
    raise InvalidMoment(f"unknown family {family!r}")


@dataclass(frozen=True)
class Layout:
    """Block layout of a moment vector: one family tag per input process."""

    families: tuple[str, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        for fam in self.families:
            if fam not in ("gamma", "bernoulli"):
                raise LayoutMismatch(f"unknown family {fam!r}")
        if self.labels and len(self.labels) != len(self.families):
            raise LayoutMismatch("labels must match the number of processes")

    @property
    def n_processes(self) -> int:
        return len(self.families)

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(2 if f == "gamma" else 1 for f in self.families)

    @property
    def dim(self) -> int:
        return sum(self.block_sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        """Start index of each block within the stacked vector."""
        out, pos = [], 0
        for h in self.block_sizes:
            out.append(pos)
            pos += h
        return tuple(out)

    def slices(self) -> list[slice]:
        return [slice(o, o + h) for o, h in zip(self.offsets, self.block_sizes)]


def stack(blocks: list[np.ndarray], layout: Layout) -> np.ndarray:
    """Concatenate per-process moment blocks into one moment vector."""
    if len(blocks) != layout.n_processes:
        raise LayoutMismatch(
            f"expected {layout.n_processes} blocks, got {len(blocks)}"
        )
    arrs = []
    for block, h in zip(blocks, layout.block_sizes):
        a = np.asarray(block, dtype=float).ravel()
        if a.shape != (h,):
            raise LayoutMismatch(f"block of size {a.size} where {h} expected")
        arrs.append(a)
    return np.concatenate(arrs)


def unstack(x: np.ndarray, layout: Layout) -> list[np.ndarray]:
    """Split a moment vector back into its per-process blocks."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (layout.dim,):
        raise LayoutMismatch(f"vector of size {x.size} where d={layout.dim} expected")
    return [x[s].copy() for s in layout.slices()]


@dataclass(frozen=True)
class InputModelSet:
    """Ordered collection of input distributions with a shared layout."""

    models: tuple[Distribution, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.models:
            raise LayoutMismatch("at least one input process is required")
        if self.labels and len(self.labels) != len(self.models):
            raise LayoutMismatch("labels must match the number of models")

    @property
    def layout(self) -> Layout:
        return Layout(tuple(m.family for m in self.models), self.labels)

    def moment_vector(self) -> np.ndarray:
        """Stacked true moments of all processes (the point x_c)."""
        return stack([m.moments() for m in self.models], self.layout)


def models_from_moments(layout: Layout, x: np.ndarray, clamp: bool = False) -> InputModelSet:
    """Reconstruct an InputModelSet from a moment vector.

    With ``clamp=True`` the moments are first projected onto the validity box
    so that extreme design points still yield usable samplers.
    """
    blocks = unstack(x, layout)
    models = []
    for fam, block in zip(layout.families, blocks):
        if clamp:
            block = clamp_block(fam, block)
        models.append(params_from_moments(fam, block))
    return InputModelSet(tuple(models), layout.labels)


def clamp_block(family: str, block: np.ndarray) -> np.ndarray:
    """Project a moment block onto the validity box of its family."""
    block = np.asarray(block, dtype=float).copy()
    if family == "gamma":
        block[0] = max(block[0], GAMMA_SD_FLOOR)
        block[1] = max(block[1], GAMMA_SD_FLOOR * block[0])
    else:
        block[0] = min(max(block[0], BERNOULLI_EPS), 1.0 - BERNOULLI_EPS)
    return block


def in_validity_box(layout: Layout, x: np.ndarray) -> bool:
    """True iff every block of x satisfies its family's validity constraints."""
    for fam, block in zip(layout.families, unstack(x, layout)):
        if fam == "gamma":
            if block[0] <= 0 or block[1] < GAMMA_SD_FLOOR * block[0]:
                return False
        else:
            if not (BERNOULLI_EPS <= block[0] <= 1.0 - BERNOULLI_EPS):
                return False
    return True


@dataclass(frozen=True)
class RealWorldDataset:
    """Per-process i.i.d. observation vectors from the real-world system."""

    samples: tuple[np.ndarray, ...]
    layout: Layout
    _sizes: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.samples) != self.layout.n_processes:
            raise LayoutMismatch("one sample vector per input process required")
        sizes = []
        for arr, fam in zip(self.samples, self.layout.families):
            arr = np.asarray(arr, dtype=float)
            if arr.ndim != 1 or arr.size < 2:
                raise LayoutMismatch("each process needs at least 2 observations")
            if fam == "gamma" and np.any(arr <= 0):
                raise InvalidMoment("gamma-process observations must be positive")
            if fam == "bernoulli" and not np.all((arr == 0) | (arr == 1)):
                raise InvalidMoment("Bernoulli observations must be 0 or 1")
            sizes.append(arr.size)
        object.__setattr__(self, "_sizes", tuple(sizes))

    @property
    def sizes(self) -> tuple[int, ...]:
        return self._sizes


def sample_dataset(models: InputModelSet, m, rng: np.random.Generator) -> RealWorldDataset:
    """Draw m_l i.i.d. observations from each input process."""
    sizes = np.broadcast_to(np.asarray(m, dtype=int), (len(models.models),))
    samples = tuple(
        model.sample(int(size), rng) for model, size in zip(models.models, sizes)
    )
    return RealWorldDataset(samples, models.layout)


def empirical_moments(data: np.ndarray, h: int) -> np.ndarray:
    """Plug-in moment block of a sample: mean, and population sd when h=2.

    Raises DegenerateSample when a two-moment block has zero sd; such a block
    has no method-of-moments inverse.
    """
    data = np.asarray(data, dtype=float)
    if data.size < 2:
        raise LayoutMismatch("sample of length >= 2 required")
    if h == 1:
        return np.array([data.mean()])
    if h == 2:
        sd = data.std()  # divisor m: the plug-in functional of the EDF
        if sd == 0.0:
            raise DegenerateSample("zero standard deviation in a gamma block")
        return np.array([data.mean(), sd])
    raise LayoutMismatch(f"unsupported block size {h}")
