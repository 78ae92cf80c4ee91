"""Data-adaptive ellipsoidal design space and space-filling experiment design.

The design region is the smallest mean/covariance-shaped ellipsoid covering a
fraction q of an initial bootstrap moment cloud.  Its coverage is checked with
an exact binomial test against fresh resamples and the ellipsoid is refined on
rejection.  Design points are a Latin hypercube pushed through the polar
inverse-CDF map onto the ellipsoid interior.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg, special, stats

from . import bootstrap
from .errors import NoConvergence, SingularCovariance, ValidityStarvation
from .input_models import Layout, RealWorldDataset, in_validity_box

DEFAULT_COVERAGE = 0.99      # design-space coverage target q
DEFAULT_ALPHA_I = 0.005      # Type I error of the coverage test
DEFAULT_POWER = 0.95         # power at the alternative coverage
DEFAULT_P1 = 0.97            # alternative coverage probability
MAX_REFINEMENTS = 50
VALIDITY_REJECT_LIMIT = 0.90  # abort if more than 90% of candidates are invalid


@dataclass(frozen=True)
class Ellipsoid:
    """Region {x : (x-center)^T shape^-1 (x-center) <= threshold}."""

    center: np.ndarray
    shape: np.ndarray
    threshold: float
    refinements: int = 0

    def __post_init__(self):
        try:
            chol = linalg.cholesky(self.shape, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularCovariance("shape matrix is not positive definite") from exc
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def cholesky(self) -> np.ndarray:
        """Lower Cholesky factor L with shape = L L^T."""
        return self._chol

    def mahalanobis_sq(self, points: np.ndarray) -> np.ndarray:
        """Squared Mahalanobis distance of one point or a batch of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        z = linalg.solve_triangular(self._chol, (pts - self.center).T, lower=True)
        d2 = np.sum(z**2, axis=0)
        return d2 if np.asarray(points).ndim > 1 else d2[0]

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.mahalanobis_sq(points) <= self.threshold


def fit_ellipsoid(points: np.ndarray, q: float, refinements: int = 0) -> Ellipsoid:
    """Smallest mean/covariance-shaped ellipsoid covering a fraction q of points.

    The threshold is the empirical q-quantile of the points' squared
    Mahalanobis distances, so exactly ceil(q * n) points satisfy the
    inequality (up to ties).
    """
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    if n < d + 1:
        raise SingularCovariance(f"need at least d+1={d + 1} points, got {n}")
    center = points.mean(axis=0)
    shape = np.cov(points, rowvar=False, ddof=1).reshape(d, d)
    ell = Ellipsoid(center, shape, threshold=np.inf, refinements=refinements)
    d2 = np.sort(ell.mahalanobis_sq(points))
    threshold = d2[int(np.ceil(q * n)) - 1]
    return Ellipsoid(center, shape, float(threshold), refinements=refinements)


@dataclass(frozen=True)
class TestSizing:
    """Exact binomial sizing for the design-space coverage test."""

    B1: int
    c: int
    alpha_I: float
    power: float
    p0: float
    p1: float


@lru_cache(maxsize=None)
def size_binomial_test(
    alpha_I: float, power: float, p0: float, p1: float
) -> TestSizing:
    """Smallest sample size B1 (with its largest feasible threshold c) such that
    Pr{X <= c | B1, p0} <= alpha_I and Pr{X <= c | B1, p1} >= power.

    The test accepts the ellipsoid when more than c of B1 fresh bootstrap
    moments fall inside it.
    """
    if not (0 < p1 < p0 < 1):
        raise ValueError("need 0 < p1 < p0 < 1")
    if not (0 < alpha_I < 1 and 0 < power < 1):
        raise ValueError("alpha_I and power must lie in (0, 1)")
    B1 = 1
    while True:
        # Largest c with null CDF <= alpha_I; ppf gives the smallest k with
        # CDF >= alpha_I, so step down from there.
        c = int(stats.binom.ppf(alpha_I, B1, p0))
        while c >= 0 and stats.binom.cdf(c, B1, p0) > alpha_I:
            c -= 1
        if c >= 0 and stats.binom.cdf(c, B1, p1) >= power:
            return TestSizing(B1, c, alpha_I, power, p0, p1)
        B1 += 1


def validate_design_space(
    dataset: RealWorldDataset,
    q: float,
    rng: np.random.Generator,
    *,
    alpha_I: float = DEFAULT_ALPHA_I,
    power: float = DEFAULT_POWER,
    p1: float = DEFAULT_P1,
    B0: int | None = None,
    max_iters: int = MAX_REFINEMENTS,
) -> Ellipsoid:
    """Fit the design-space ellipsoid and accept it via the coverage test.

    Refinement loop: fit on the accumulated moment cloud, test against B1
    fresh resamples, and on rejection merge them into the cloud and refit.
    """
    d = dataset.layout.dim
    if B0 is None:
        B0 = max(1000, 20 * d)
    sizing = size_binomial_test(alpha_I, power, q, p1)
    cloud = bootstrap.generate(dataset, B0, rng).vectors
    for iteration in range(max_iters):
        ell = fit_ellipsoid(cloud, q, refinements=iteration)
        fresh = bootstrap.generate(dataset, sizing.B1, rng).vectors
        if int(np.count_nonzero(ell.contains(fresh))) > sizing.c:
            return ell
        cloud = np.vstack([cloud, fresh])
    raise NoConvergence(f"design space not accepted after {max_iters} refinements")


def _unit_ball_transform(u: np.ndarray) -> np.ndarray:
    """Map (0,1)^d rows onto the unit d-ball via the polar inverse CDFs.

    Column 0 drives the radius, columns 1..d-2 the polar angles (whose CDFs
    are symmetric regularized incomplete betas), and the last column the
    uniform azimuth.
    """
    u = np.asarray(u, dtype=float)
    n, d = u.shape
    if d == 1:
        return 2.0 * u - 1.0
    radius = u[:, 0] ** (1.0 / d)
    angles = np.empty((n, d - 1))
    for j in range(d - 2):
        # density of the j-th polar angle is proportional to sin^(d-2-j)
        a = 0.5 * (d - 1 - j)
        angles[:, j] = np.arccos(1.0 - 2.0 * special.betaincinv(a, a, u[:, j + 1]))
    angles[:, d - 2] = 2.0 * np.pi * u[:, d - 1]
    out = np.empty((n, d))
    sin_prod = np.ones(n)
    for j in range(d - 1):
        out[:, j] = sin_prod * np.cos(angles[:, j])
        sin_prod = sin_prod * np.sin(angles[:, j])
    out[:, d - 1] = sin_prod
    return radius[:, None] * out


def _rows_to_points(ell: Ellipsoid, rows: np.ndarray) -> np.ndarray:
    u = _unit_ball_transform(rows)
    return ell.center + np.sqrt(ell.threshold) * (u @ ell.cholesky.T)


def sample_in_ellipsoid(
    ell: Ellipsoid, k: int, rng: np.random.Generator
) -> np.ndarray:
    """k points uniform in the ellipsoid, stratified by a Latin hypercube."""
    if k < 1:
        raise ValueError("k must be at least 1")
    lhs = stats.qmc.LatinHypercube(d=ell.dim, seed=rng)
    return _rows_to_points(ell, lhs.random(k))


@dataclass(frozen=True)
class ExperimentDesign:
    """k design points inside the validated ellipsoid with n replications each."""

    points: np.ndarray  # (k, d)
    reps: int
    ellipsoid: Ellipsoid
    layout: Layout

    @property
    def k(self) -> int:
        return self.points.shape[0]

    def save_csv(self, path) -> None:
        """One row per design point: d moment columns plus the replication count."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{j + 1}" for j in range(self.points.shape[1])] + ["n"])
            for row in self.points:
                writer.writerow([repr(float(v)) for v in row] + [self.reps])


def build_design(
    dataset: RealWorldDataset,
    q: float,
    k: int,
    N: int,
    rng: np.random.Generator,
    **validate_kwargs,
) -> ExperimentDesign:
    """Validated ellipsoid plus a k-point space-filling design with n = N // k.

    Candidate points outside the moment validity box are rejected and redrawn
    through the same polar map rather than clipped, preserving the
    space-filling property.
    """
    if N < 2 * k:
        raise ValueError("budget N must allow at least 2 replications per point")
    layout = dataset.layout
    ell = validate_design_space(dataset, q, rng, **validate_kwargs)
    points = sample_in_ellipsoid(ell, k, rng)
    valid = np.array([in_validity_box(layout, x) for x in points])
    n_drawn, n_invalid = k, int(np.count_nonzero(~valid))
    while not valid.all():
        need = int(np.count_nonzero(~valid))
        fresh = _rows_to_points(ell, rng.random((need, ell.dim)))
        fresh_ok = np.array([in_validity_box(layout, x) for x in fresh])
        points[~valid] = fresh
        valid[np.flatnonzero(~valid)[fresh_ok]] = True
        n_drawn += need
        n_invalid += int(np.count_nonzero(~fresh_ok))
        if n_drawn >= 100 * k and n_invalid > VALIDITY_REJECT_LIMIT * n_drawn:
            raise ValidityStarvation(
                f"{n_invalid}/{n_drawn} candidate points violate the validity box"
            )
    return ExperimentDesign(points, reps=N // k, ellipsoid=ell, layout=layout)
