"""Stochastic kriging: likelihood, GLS trend, fitting, and prediction."""
import numpy as np
import pytest

from skboot import sk
from skboot.errors import FitFailure


def _summary(ybar, s2, n):
    return sk.SimSummary(np.asarray(ybar, float), np.asarray(s2, float), np.asarray(n))


def _random_instance(rng, k, d):
    X = rng.uniform(-2.0, 2.0, size=(k, d))
    ybar = rng.normal(0.0, 3.0, size=k)
    s2 = rng.uniform(0.05, 0.5, size=k)
    n = rng.integers(2, 30, size=k)
    hyper = sk.SKHyper(
        beta0=rng.normal(),
        tau2=float(rng.uniform(0.5, 4.0)),
        theta=rng.uniform(0.1, 2.0, size=d),
    )
    return hyper, X, _summary(ybar, s2, n)


def _dense_matrices(hyper, X, summary):
    # naive dense evaluation of Sigma + C from first principles
    k = X.shape[0]
    Sigma = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            Sigma[i, j] = hyper.tau2 * sk.gauss_corr(X[i], X[j], hyper.theta)
    M = Sigma + np.diag(summary.s2 / summary.n)
    return Sigma, M


def _dense_loglik(hyper, X, summary):
    k = X.shape[0]
    _, M = _dense_matrices(hyper, X, summary)
    Minv = np.linalg.inv(M)
    r = summary.ybar - hyper.beta0
    sign, logdet = np.linalg.slogdet(M)
    assert sign > 0
    return -0.5 * k * np.log(2 * np.pi) - 0.5 * logdet - 0.5 * r @ Minv @ r


def _dense_gls(hyper, X, summary):
    _, M = _dense_matrices(hyper, X, summary)
    Minv = np.linalg.inv(M)
    ones = np.ones(X.shape[0])
    return (ones @ Minv @ summary.ybar) / (ones @ Minv @ ones)


def _dense_predict(hyper, X, summary, x):
    Sigma, M = _dense_matrices(hyper, X, summary)
    Minv = np.linalg.inv(M)
    ones = np.ones(X.shape[0])
    sx = np.array([hyper.tau2 * sk.gauss_corr(x, xi, hyper.theta) for xi in X])
    mp = hyper.beta0 + sx @ Minv @ (summary.ybar - hyper.beta0)
    eta = 1.0 - ones @ Minv @ sx
    s2 = hyper.tau2 - sx @ Minv @ sx + eta**2 / (ones @ Minv @ ones)
    return mp, s2


class TestGaussCorr:
    def test_zero_distance(self):
        assert sk.gauss_corr([1.0, 2.0], [1.0, 2.0], [0.5, 0.5]) == 1.0

    def test_flat_correlation(self):
        assert sk.gauss_corr([0.0, 0.0], [5.0, -3.0], [0.0, 0.0]) == 1.0

    def test_unit_case(self):
        assert sk.gauss_corr([0.0], [1.0], [1.0]) == pytest.approx(np.exp(-1.0))

    def test_product_form(self):
        r = sk.gauss_corr([0.0, 0.0], [1.0, 2.0], [0.3, 0.1])
        assert r == pytest.approx(np.exp(-0.3) * np.exp(-0.4))


class TestLogLikelihood:
    def test_single_point_formula(self):
        summary = _summary([2.0], [0.8], [4])
        hyper = sk.SKHyper(beta0=2.0, tau2=1.5, theta=np.array([1.0]))
        got = sk.log_likelihood(hyper, np.array([[0.0]]), summary)
        want = -0.5 * np.log(2 * np.pi) - 0.5 * np.log(1.5 + 0.2)
        assert got == pytest.approx(want, abs=1e-12)

    def test_translation_invariance(self, rng):
        hyper, X, summary = _random_instance(rng, 6, 2)
        base = sk.log_likelihood(hyper, X, summary)
        shifted_summary = _summary(summary.ybar + 7.5, summary.s2, summary.n)
        shifted_hyper = sk.SKHyper(hyper.beta0 + 7.5, hyper.tau2, hyper.theta)
        assert sk.log_likelihood(shifted_hyper, X, shifted_summary) == pytest.approx(
            base, abs=1e-9
        )

    def test_matches_dense_evaluation(self, rng):
        for _ in range(10):
            hyper, X, summary = _random_instance(rng, 5, 2)
            got = sk.log_likelihood(hyper, X, summary)
            assert got == pytest.approx(_dense_loglik(hyper, X, summary), rel=1e-8)


class TestGlsBeta0:
    def test_single_point(self):
        summary = _summary([3.7], [0.5], [5])
        assert sk.gls_beta0(2.0, [1.0], np.array([[0.0]]), summary) == pytest.approx(3.7)

    def test_iid_case_is_plain_mean(self):
        # far-apart points with theta huge: Sigma ~ tau2*I, C uniform,
        # so the GLS weights are equal
        X = np.array([[0.0], [100.0], [200.0]])
        summary = _summary([1.0, 2.0, 6.0], [0.3, 0.3, 0.3], [3, 3, 3])
        got = sk.gls_beta0(1.0, [5.0], X, summary)
        assert got == pytest.approx(3.0, abs=1e-10)

    def test_matches_dense_evaluation(self, rng):
        for _ in range(10):
            hyper, X, summary = _random_instance(rng, 5, 2)
            got = sk.gls_beta0(hyper.tau2, hyper.theta, X, summary)
            assert got == pytest.approx(_dense_gls(hyper, X, summary), rel=1e-8)

    def test_maximizes_likelihood_over_beta0(self, rng):
        hyper, X, summary = _random_instance(rng, 6, 2)
        beta_hat = sk.gls_beta0(hyper.tau2, hyper.theta, X, summary)
        best = sk.log_likelihood(
            sk.SKHyper(beta_hat, hyper.tau2, hyper.theta), X, summary
        )
        for delta in (-0.3, -0.01, 0.01, 0.3):
            other = sk.log_likelihood(
                sk.SKHyper(beta_hat + delta, hyper.tau2, hyper.theta), X, summary
            )
            assert other <= best + 1e-12


class TestPredict:
    def test_interpolates_noise_free_data(self, rng):
        X = np.linspace(0.0, 4.0, 9).reshape(-1, 1)
        y = np.sin(X.ravel())
        model = sk.SKModel(
            sk.SKHyper(0.0, 1.0, np.array([1.0])), X, y, np.zeros(9)
        )
        for xi, yi in zip(X, y):
            mp, s2 = model.predict(xi)
            assert mp == pytest.approx(yi, abs=1e-8)
            assert s2 <= 1e-8

    def test_far_field_limit(self, rng):
        hyper, X, summary = _random_instance(rng, 5, 2)
        model = sk.SKModel(hyper, X, summary.ybar, summary.intrinsic_variance)
        mp, s2 = model.predict(np.array([500.0, -500.0]))
        _, M = _dense_matrices(hyper, X, summary)
        fisher = np.ones(5) @ np.linalg.inv(M) @ np.ones(5)
        assert mp == pytest.approx(hyper.beta0, abs=1e-9)
        assert s2 == pytest.approx(hyper.tau2 + 1.0 / fisher, rel=1e-9)

    def test_single_point_hand_formula(self):
        hyper = sk.SKHyper(beta0=1.0, tau2=2.0, theta=np.array([0.7]))
        summary = _summary([4.0], [1.2], [3])
        model = sk.SKModel(hyper, np.array([[0.5]]), summary.ybar, summary.intrinsic_variance)
        x = np.array([1.3])
        r = sk.gauss_corr(x, [0.5], hyper.theta)
        c11 = 1.2 / 3
        w = 2.0 * r / (2.0 + c11)
        want_mp = 1.0 + w * (4.0 - 1.0)
        want_s2 = 2.0 - 2.0**2 * r**2 / (2.0 + c11) + (1.0 - w) ** 2 * (2.0 + c11)
        mp, s2 = model.predict(x)
        assert mp == pytest.approx(want_mp, rel=1e-12)
        assert s2 == pytest.approx(want_s2, rel=1e-12)

    def test_matches_dense_evaluation(self, rng):
        for _ in range(10):
            hyper, X, summary = _random_instance(rng, 6, 3)
            model = sk.SKModel(hyper, X, summary.ybar, summary.intrinsic_variance)
            x = rng.uniform(-2.0, 2.0, size=3)
            mp, s2 = model.predict(x)
            want_mp, want_s2 = _dense_predict(hyper, X, summary, x)
            assert mp == pytest.approx(want_mp, rel=1e-8)
            assert s2 == pytest.approx(want_s2, rel=1e-8)

    def test_batch_matches_loop(self, rng):
        hyper, X, summary = _random_instance(rng, 7, 2)
        model = sk.SKModel(hyper, X, summary.ybar, summary.intrinsic_variance)
        xs = rng.uniform(-2.0, 2.0, size=(50, 2))
        mp_b, s2_b = model.batch_predict(xs)
        for i, x in enumerate(xs):
            mp, s2 = model.predict(x)
            assert mp_b[i] == pytest.approx(mp, abs=1e-12)
            assert s2_b[i] == pytest.approx(s2, abs=1e-12)

    def test_empty_batch(self, rng):
        hyper, X, summary = _random_instance(rng, 4, 2)
        model = sk.SKModel(hyper, X, summary.ybar, summary.intrinsic_variance)
        mp, s2 = model.batch_predict(np.empty((0, 2)))
        assert mp.shape == (0,) and s2.shape == (0,)

    def test_variance_nonnegative_and_bounded(self, rng):
        hyper, X, summary = _random_instance(rng, 8, 2)
        model = sk.SKModel(hyper, X, summary.ybar, summary.intrinsic_variance)
        xs = rng.uniform(-3.0, 3.0, size=(200, 2))
        _, s2 = model.batch_predict(xs)
        assert np.all(s2 >= 0.0)
        _, M = _dense_matrices(hyper, X, summary)
        bound = hyper.tau2 + 1.0 / (np.ones(8) @ np.linalg.inv(M) @ np.ones(8))
        assert np.all(s2 <= bound + 1e-8)

    def test_translation_equivariance(self, rng):
        hyper, X, summary = _random_instance(rng, 6, 2)
        model = sk.SKModel(hyper, X, summary.ybar, summary.intrinsic_variance)
        shifted = sk.SKModel(
            sk.SKHyper(hyper.beta0 + 4.0, hyper.tau2, hyper.theta),
            X,
            summary.ybar + 4.0,
            summary.intrinsic_variance,
        )
        xs = rng.uniform(-2.0, 2.0, size=(20, 2))
        mp0, s20 = model.batch_predict(xs)
        mp1, s21 = shifted.batch_predict(xs)
        np.testing.assert_allclose(mp1, mp0 + 4.0, atol=1e-10)
        np.testing.assert_allclose(s21, s20, atol=1e-12)


class TestFit:
    def test_flat_surface(self):
        # constant response with injected zero noise: predictions constant
        X = np.linspace(0.0, 1.0, 8).reshape(-1, 1)
        summary = _summary(np.full(8, 3.0), np.zeros(8), np.full(8, 5))
        model = sk.fit(X, summary, sk.SKFitConfig(n_starts=4))
        mp, _ = model.batch_predict(np.array([[0.25], [0.77]]))
        np.testing.assert_allclose(mp, 3.0, atol=1e-6)

    def test_mle_dominates_truth(self, rng):
        # data from a known GP: the fitted likelihood cannot fall below the
        # truth's likelihood on the same sample
        true = sk.SKHyper(beta0=1.0, tau2=1.0, theta=np.array([5.0]))
        X = np.sort(rng.uniform(0.0, 2.0, size=40)).reshape(-1, 1)
        Sigma, _ = _dense_matrices(true, X, _summary(np.zeros(40), np.zeros(40), np.full(40, 2)))
        noise = 1e-4
        y = true.beta0 + np.linalg.cholesky(
            Sigma + 1e-12 * np.eye(40)
        ) @ rng.standard_normal(40) + np.sqrt(noise / 2) * rng.standard_normal(40)
        summary = _summary(y, np.full(40, noise), np.full(40, 2))
        model = sk.fit(X, summary)
        fitted = sk.log_likelihood(model.hyper, X, summary)
        true_beta = sk.gls_beta0(true.tau2, true.theta, X, summary)
        reference = sk.log_likelihood(
            sk.SKHyper(true_beta, true.tau2, true.theta), X, summary
        )
        assert fitted >= reference - 1e-6

    def test_permutation_invariance(self, rng):
        X = rng.uniform(0.0, 2.0, size=(12, 2))
        y = np.sin(X[:, 0]) + X[:, 1] + rng.normal(0, 0.05, 12)
        summary = _summary(y, np.full(12, 0.01), np.full(12, 4))
        model = sk.fit(X, summary, sk.SKFitConfig(n_starts=5))
        perm = rng.permutation(12)
        summary_p = _summary(y[perm], np.full(12, 0.01), np.full(12, 4))
        model_p = sk.fit(X[perm], summary_p, sk.SKFitConfig(n_starts=5))
        xs = rng.uniform(0.0, 2.0, size=(10, 2))
        mp0, s20 = model.batch_predict(xs)
        mp1, s21 = model_p.batch_predict(xs)
        np.testing.assert_allclose(mp1, mp0, atol=1e-8)
        np.testing.assert_allclose(s21, s20, atol=1e-8)

    def test_warns_on_tiny_design(self):
        X = np.random.default_rng(0).uniform(size=(3, 2))
        summary = _summary([1.0, 2.0, 3.0], [0.1, 0.1, 0.1], [2, 2, 2])
        with pytest.warns(UserWarning, match="design points"):
            sk.fit(X, summary, sk.SKFitConfig(n_starts=2))


class TestSerialization:
    def test_json_round_trip(self, rng):
        hyper, X, summary = _random_instance(rng, 5, 2)
        model = sk.SKModel(hyper, X, summary.ybar, summary.intrinsic_variance)
        back = sk.SKModel.from_json(model.to_json())
        xs = rng.uniform(-1.0, 1.0, size=(10, 2))
        np.testing.assert_allclose(
            back.batch_predict(xs)[0], model.batch_predict(xs)[0], rtol=1e-12
        )
        np.testing.assert_allclose(
            back.batch_predict(xs)[1], model.batch_predict(xs)[1], rtol=1e-12
        )


class TestSimSummary:
    def test_rejects_single_replication(self):
        with pytest.raises(ValueError):
            _summary([1.0], [0.1], [1])

    def test_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            _summary([1.0, 2.0], [0.1, -0.1], [2, 2])

    def test_intrinsic_variance(self):
        summary = _summary([1.0, 2.0], [0.4, 0.9], [4, 3])
        np.testing.assert_allclose(summary.intrinsic_variance, [0.1, 0.3])
