"""Stochastic kriging: a Gaussian-correlation GP with per-point intrinsic
variance from replicated simulation output.

The trend is a constant beta0 profiled out by generalized least squares; the
spatial parameters (tau^2, theta) are fitted by multi-start Nelder-Mead on the
log scale.  Prediction returns the conditional mean and variance of the GP at
an arbitrary moment vector.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize, stats

from .errors import FitFailure, NumericalFailure

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)
NEGATIVE_VARIANCE_TOL = 1e-10  # relative to tau^2


@dataclass(frozen=True)
class SimSummary:
    """Replication summaries per design point: sample mean, variance, count."""

    ybar: np.ndarray
    s2: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        ybar = np.asarray(self.ybar, dtype=float)
        s2 = np.asarray(self.s2, dtype=float)
        n = np.asarray(self.n, dtype=int)
        if not (ybar.shape == s2.shape == n.shape) or ybar.ndim != 1:
            raise ValueError("ybar, s2, n must be 1-D arrays of equal length")
        if np.any(n < 2):
            raise ValueError("at least 2 replications per design point required")
        if np.any(s2 < 0):
            raise ValueError("sample variances must be nonnegative")
        object.__setattr__(self, "ybar", ybar)
        object.__setattr__(self, "s2", s2)
        object.__setattr__(self, "n", n)

    @property
    def intrinsic_variance(self) -> np.ndarray:
        """Diagonal of the plug-in matrix C: S^2(x_i) / n_i."""
        return self.s2 / self.n


@dataclass(frozen=True)
class SKHyper:
    beta0: float
    tau2: float
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).ravel()
        if self.tau2 <= 0:
            raise ValueError("tau2 must be positive")
        if np.any(theta < 0):
            raise ValueError("theta entries must be nonnegative")
        object.__setattr__(self, "theta", theta)


@dataclass
class SKFitConfig:
    n_starts: int = 10
    max_iter: int = 500
    fatol: float = 1e-8
    seed: int = 0


def gauss_corr(x: np.ndarray, xp: np.ndarray, theta: np.ndarray) -> float:
    """Product-form Gaussian correlation exp(-sum theta_j (x_j - x'_j)^2)."""
    diff = np.asarray(x, dtype=float) - np.asarray(xp, dtype=float)
    return float(np.exp(-np.dot(np.asarray(theta, dtype=float), diff**2)))


def _sq_dists(X: np.ndarray) -> np.ndarray:
    """(d, k, k) per-coordinate squared differences of the design points."""
    diff = X[:, None, :] - X[None, :, :]
    return np.transpose(diff**2, (2, 0, 1))


def _corr_from_sq(sq: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.exp(-np.tensordot(theta, sq, axes=1))


def _factor(
    tau2: float, theta: np.ndarray, X: np.ndarray, chat: np.ndarray, sq=None
):
    """Cholesky factor of Sigma + C with escalating diagonal jitter."""
    if sq is None:
        sq = _sq_dists(X)
    M = tau2 * _corr_from_sq(sq, theta)
    M[np.diag_indices_from(M)] += chat
    scale = float(np.mean(np.diag(M)))
    for delta in JITTER_LADDER:
        try:
            return linalg.cholesky(M + delta * scale * np.eye(M.shape[0]), lower=True)
        except linalg.LinAlgError:
            continue
    raise NumericalFailure("Sigma + C not factorizable after jitter escalation")


def _gls_parts(L: np.ndarray, ybar: np.ndarray):
    """beta0_hat, Fisher info 1'M^-1 1, and residual solve from a factor L."""
    ones = np.ones_like(ybar)
    Minv_ones = linalg.cho_solve((L, True), ones)
    Minv_y = linalg.cho_solve((L, True), ybar)
    fisher = float(ones @ Minv_ones)
    beta0 = float(ones @ Minv_y) / fisher
    return beta0, fisher, Minv_ones, Minv_y


def gls_beta0(
    tau2: float, theta: np.ndarray, X: np.ndarray, summary: SimSummary
) -> float:
    """Generalized-least-squares constant trend for fixed (tau2, theta)."""
    L = _factor(tau2, np.asarray(theta, dtype=float), X, summary.intrinsic_variance)
    return _gls_parts(L, summary.ybar)[0]


def log_likelihood(hyper: SKHyper, X: np.ndarray, summary: SimSummary) -> float:
    """Gaussian log-likelihood of the design-point sample means."""
    X = np.asarray(X, dtype=float)
    k = X.shape[0]
    L = _factor(hyper.tau2, hyper.theta, X, summary.intrinsic_variance)
    resid = summary.ybar - hyper.beta0
    alpha = linalg.cho_solve((L, True), resid)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return -0.5 * k * np.log(2.0 * np.pi) - 0.5 * logdet - 0.5 * float(resid @ alpha)


@dataclass(frozen=True)
class SKModel:
    """Fitted stochastic kriging metamodel with frozen factorization caches."""

    hyper: SKHyper
    X: np.ndarray
    ybar: np.ndarray
    chat: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        ybar = np.asarray(self.ybar, dtype=float)
        chat = np.asarray(self.chat, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "ybar", ybar)
        object.__setattr__(self, "chat", chat)
        L = _factor(self.hyper.tau2, self.hyper.theta, X, chat)
        resid = ybar - self.hyper.beta0
        w = linalg.cho_solve((L, True), resid)
        _, fisher, Minv_ones, _ = _gls_parts(L, ybar)
        object.__setattr__(self, "_L", L)
        object.__setattr__(self, "_w", w)
        object.__setattr__(self, "_fisher", fisher)
        object.__setattr__(self, "_Minv_ones", Minv_ones)

    @property
    def k(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def predict(self, x: np.ndarray) -> tuple[float, float]:
        """Conditional mean and variance of the GP at x."""
        mp, s2 = self.batch_predict(np.atleast_2d(np.asarray(x, dtype=float)))
        return float(mp[0]), float(s2[0])

    def batch_predict(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized predict over rows of xs; returns (means, variances)."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[0] == 0:
            return np.empty(0), np.empty(0)
        tau2 = self.hyper.tau2
        diff = xs[:, None, :] - self.X[None, :, :]  # (B, k, d)
        Sx = tau2 * np.exp(-(diff**2) @ self.hyper.theta)  # (B, k)
        mp = self.hyper.beta0 + Sx @ self._w
        V = linalg.cho_solve((self._L, True), Sx.T)  # (k, B)
        quad = np.einsum("bk,kb->b", Sx, V)
        eta = 1.0 - Sx @ self._Minv_ones
        s2 = tau2 - quad + eta**2 / self._fisher
        floor = -NEGATIVE_VARIANCE_TOL * tau2
        if np.any(s2 < floor):
            raise NumericalFailure(
                f"prediction variance {s2.min():.3e} below round-off tolerance"
            )
        return mp, np.maximum(s2, 0.0)

    def to_json(self) -> str:
        return json.dumps(
            {
                "beta0": self.hyper.beta0,
                "tau2": self.hyper.tau2,
                "theta": self.hyper.theta.tolist(),
                "X": self.X.tolist(),
                "ybar": self.ybar.tolist(),
                "chat": self.chat.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SKModel":
        rec = json.loads(text)
        hyper = SKHyper(rec["beta0"], rec["tau2"], np.array(rec["theta"]))
        return cls(hyper, np.array(rec["X"]), np.array(rec["ybar"]), np.array(rec["chat"]))


def _log_bounds(X: np.ndarray, summary: SimSummary) -> tuple[np.ndarray, np.ndarray]:
    """Search bounds for (log tau2, log theta_1..d) from data scales."""
    var_y = float(np.var(summary.ybar))
    if var_y <= 0:
        var_y = max(float(np.mean(summary.intrinsic_variance)), 1e-12)
    rho = X.max(axis=0) - X.min(axis=0)
    rho = np.where(rho > 0, rho, 1.0)
    lo = np.concatenate([[np.log(1e-6 * var_y)], np.log(1e-6 / rho**2)])
    hi = np.concatenate([[np.log(1e3 * var_y)], np.log(1e4 / rho**2)])
    return lo, hi


def fit(
    X: np.ndarray, summary: SimSummary, config: SKFitConfig | None = None
) -> SKModel:
    """Maximize the likelihood over (log tau2, log theta) with beta0 profiled.

    Multi-start derivative-free simplex search from a Latin hypercube over the
    log-parameter box; the best start wins.
    """
    if config is None:
        config = SKFitConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < X.shape[1] + 2:
        warnings.warn(
            f"only {X.shape[0]} design points for {X.shape[1]} dimensions; "
            "the hyperparameter fit is likely unreliable",
            stacklevel=2,
        )
    chat = summary.intrinsic_variance
    sq = _sq_dists(X)
    k = X.shape[0]
    lo, hi = _log_bounds(X, summary)

    def neg_profile_loglik(z: np.ndarray) -> float:
        z = np.clip(z, lo, hi)
        tau2 = np.exp(z[0])
        theta = np.exp(z[1:])
        try:
            L = _factor(tau2, theta, X, chat, sq=sq)
        except NumericalFailure:
            return 1e100
        beta0, _, _, _ = _gls_parts(L, summary.ybar)
        resid = summary.ybar - beta0
        alpha = linalg.cho_solve((L, True), resid)
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        return 0.5 * (k * np.log(2.0 * np.pi) + logdet + float(resid @ alpha))

    rng = np.random.default_rng(config.seed)
    starts = lo + stats.qmc.LatinHypercube(d=lo.size, seed=rng).random(
        config.n_starts
    ) * (hi - lo)
    best = None
    for z0 in starts:
        res = optimize.minimize(
            neg_profile_loglik,
            z0,
            method="Nelder-Mead",
            options={
                "maxiter": config.max_iter,
                "fatol": config.fatol,
                "xatol": 1e-8,
            },
        )
        if np.isfinite(res.fun) and res.fun < 1e99 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitFailure("all hyperparameter search starts failed numerically")
    z = np.clip(best.x, lo, hi)
    tau2 = float(np.exp(z[0]))
    theta = np.exp(z[1:])
    beta0 = gls_beta0(tau2, theta, X, summary)
    return SKModel(SKHyper(beta0, tau2, theta), X, summary.ybar, chat)
