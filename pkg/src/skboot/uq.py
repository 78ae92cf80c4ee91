"""The end-to-end interval procedure: bootstrap the data, evaluate the fitted
metamodel at the bootstrap moments, and report CI0 (input uncertainty only),
CI+ (input plus metamodel uncertainty), and the variance decomposition."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import bootstrap, design as design_mod, queueing, sk
from .errors import InsufficientB, SingularTraffic, UndefinedStarvation
from .input_models import RealWorldDataset, models_from_moments

MAX_CONSECUTIVE_UNDEFINED = 10_000


@dataclass
class UQConfig:
    """Knobs of one full uncertainty-quantification run."""

    alpha: float = 0.05
    B: int = 2000
    q: float = design_mod.DEFAULT_COVERAGE
    k: int = 20
    N: int = 200
    reject_undefined: bool = True
    seed: int = 0
    sk_fit: sk.SKFitConfig = field(default_factory=sk.SKFitConfig)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.B < math.ceil(2.0 / self.alpha):
            raise ValueError("B too small for distinct percentile ranks")


def percentile_interval(values: np.ndarray, alpha: float) -> tuple[float, float]:
    """Bootstrap percentile interval from the order statistics of values."""
    values = np.asarray(values, dtype=float)
    B = values.size
    if B < math.ceil(2.0 / alpha):
        raise InsufficientB(f"B={B} cannot resolve alpha={alpha} percentile ranks")
    ordered = np.sort(values)
    lo = ordered[math.ceil(B * alpha / 2.0) - 1]
    hi = ordered[math.ceil(B * (1.0 - alpha / 2.0)) - 1]
    return float(lo), float(hi)


def variance_components(
    mu_b: np.ndarray, sig2p_b: np.ndarray, M_b: np.ndarray
) -> tuple[float, float, float, float]:
    """(total, input, metamodel) variance estimates and the input share ratio.

    Total and input variances are sample variances over the bootstrap draws;
    the metamodel component is the average predicted variance.
    """
    mu_b = np.asarray(mu_b, dtype=float)
    sig2p_b = np.asarray(sig2p_b, dtype=float)
    M_b = np.asarray(M_b, dtype=float)
    if mu_b.size < 2:
        raise ValueError("at least 2 bootstrap draws required")
    if np.any(sig2p_b < 0):
        raise ValueError("predicted variances must be nonnegative")
    sigma2_T = float(M_b.var(ddof=1))
    sigma2_I = float(mu_b.var(ddof=1))
    sigma2_M = float(sig2p_b.mean())
    ratio = 0.0 if sigma2_T == 0.0 else math.sqrt(sigma2_I) / math.sqrt(sigma2_T)
    return sigma2_T, sigma2_I, sigma2_M, ratio


@dataclass(frozen=True)
class UQResult:
    """Interval estimates, variance decomposition, and per-draw audit arrays."""

    ci0: tuple[float, float]
    ci_plus: tuple[float, float]
    sigma2_T: float
    sigma2_I: float
    sigma2_M: float
    ratio: float
    p_u_hat: float
    n_rejected_undefined: int
    mu_b: np.ndarray
    sig2p_b: np.ndarray
    M_b: np.ndarray
    model: sk.SKModel | None = None
    design: design_mod.ExperimentDesign | None = None

    def summary_dict(self) -> dict:
        return {
            "ci0_lo": self.ci0[0],
            "ci0_hi": self.ci0[1],
            "ci_plus_lo": self.ci_plus[0],
            "ci_plus_hi": self.ci_plus[1],
            "sigma2_T": self.sigma2_T,
            "sigma2_I": self.sigma2_I,
            "sigma2_M": self.sigma2_M,
            "ratio": self.ratio,
            "p_u_hat": self.p_u_hat,
            "n_rejected_undefined": self.n_rejected_undefined,
        }

    def save_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary_dict(), fh, indent=2)
            fh.write("\n")

    def save_detail(self, path) -> None:
        """Per-draw CSV: predicted mean, predicted variance, normal draw."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["b", "mu_b", "sig2p_b", "M_b"])
            for b in range(self.mu_b.size):
                writer.writerow(
                    [
                        b + 1,
                        repr(float(self.mu_b[b])),
                        repr(float(self.sig2p_b[b])),
                        repr(float(self.M_b[b])),
                    ]
                )


def draw_bootstrap_vectors(
    dataset: RealWorldDataset,
    topology: queueing.NetworkTopology | None,
    B: int,
    reject_undefined: bool,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """B bootstrap moment vectors, redrawing those that imply an undefined
    system when the rejection policy is on.  Returns (vectors, rejected count)."""
    layout = dataset.layout
    vectors = np.empty((B, layout.dim))
    rejected = 0
    for b in range(B):
        consecutive = 0
        while True:
            x = bootstrap.bootstrap_moment_vector(dataset, rng)
            if not reject_undefined or topology is None:
                break
            if queueing.is_defined(topology, x, layout):
                break
            rejected += 1
            consecutive += 1
            if consecutive >= MAX_CONSECUTIVE_UNDEFINED:
                raise UndefinedStarvation(
                    f"{consecutive} consecutive bootstrap moments were undefined"
                )
        vectors[b] = x
    return vectors, rejected


def estimate_unstable_fraction(
    topology: queueing.NetworkTopology, vectors: np.ndarray, layout
) -> float:
    """Fraction of moment vectors whose traffic solve is unstable."""
    unstable = 0
    for x in vectors:
        try:
            if queueing.is_unstable(topology, x, layout):
                unstable += 1
        except SingularTraffic:
            pass  # no steady state to speak of; not counted as unstable
    return unstable / len(vectors)


def aci_from_model(
    model: sk.SKModel,
    dataset: RealWorldDataset,
    topology: queueing.NetworkTopology | None,
    config: UQConfig,
    rng_boot: np.random.Generator,
    rng_noise: np.random.Generator,
    design: design_mod.ExperimentDesign | None = None,
) -> UQResult:
    """Bootstrap-and-predict phase on an already fitted metamodel."""
    vectors, rejected = draw_bootstrap_vectors(
        dataset, topology, config.B, config.reject_undefined, rng_boot
    )
    mu_b, sig2p_b = model.batch_predict(vectors)
    M_b = mu_b + np.sqrt(sig2p_b) * rng_noise.standard_normal(config.B)
    ci0 = percentile_interval(mu_b, config.alpha)
    ci_plus = percentile_interval(M_b, config.alpha)
    sigma2_T, sigma2_I, sigma2_M, ratio = variance_components(mu_b, sig2p_b, M_b)
    p_u = (
        estimate_unstable_fraction(topology, vectors, dataset.layout)
        if topology is not None
        else 0.0
    )
    return UQResult(
        ci0=ci0,
        ci_plus=ci_plus,
        sigma2_T=sigma2_T,
        sigma2_I=sigma2_I,
        sigma2_M=sigma2_M,
        ratio=ratio,
        p_u_hat=p_u,
        n_rejected_undefined=rejected,
        mu_b=mu_b,
        sig2p_b=sig2p_b,
        M_b=M_b,
        model=model,
        design=design,
    )


def simulate_design(
    design: design_mod.ExperimentDesign,
    topology: queueing.NetworkTopology,
    protocol: queueing.SimProtocol,
    rng: np.random.Generator,
) -> sk.SimSummary:
    """Run the replication budget at every design point."""
    ybar = np.empty(design.k)
    s2 = np.empty(design.k)
    for i, x in enumerate(design.points):
        models_i = models_from_moments(design.layout, x, clamp=True)
        ybar[i], s2[i], _ = queueing.replicate(
            topology, models_i, protocol, design.reps, rng
        )
    return sk.SimSummary(ybar, s2, np.full(design.k, design.reps))


def run_aci(
    dataset: RealWorldDataset,
    topology: queueing.NetworkTopology,
    protocol: queueing.SimProtocol,
    config: UQConfig,
) -> UQResult:
    """The full procedure: design, simulate, fit, bootstrap, report.

    All randomness is derived from config.seed through independent child
    streams, so identical configurations reproduce bitwise-identical results.
    """
    ss = np.random.SeedSequence(config.seed)
    rng_design, rng_sim, rng_boot, rng_noise = (
        np.random.default_rng(child) for child in ss.spawn(4)
    )
    design = design_mod.build_design(
        dataset, config.q, config.k, config.N, rng_design
    )
    summary = simulate_design(design, topology, protocol, rng_sim)
    model = sk.fit(design.points, summary, config.sk_fit)
    return aci_from_model(
        model, dataset, topology, config, rng_boot, rng_noise, design=design
    )
