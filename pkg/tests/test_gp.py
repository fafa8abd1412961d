"""Posterior-inference tests, cross-checked against dense linear algebra."""

import numpy as np
import pytest

from tpbo import FreeKernelSpec, TunedKernel, expand_features, tuned_weights_oracle
from tpbo.gp import (
    ArdSeKernel,
    GpPosterior,
    Observations,
    SeKernel,
    weight_space_posterior_oracle,
)


def dense_posterior(kernel, X, y, noise_var, x):
    """Textbook posterior with plain numpy solves (independent route).

    Includes the same unconditional 1e-10 relative jitter the production
    factorization applies, so the two routes target the same matrix.
    """
    K = kernel(X, X) + noise_var * np.eye(len(y))
    K += 1e-10 * np.mean(np.diag(K)) * np.eye(len(y))
    kx = kernel(x[None, :], X)[0]
    sol = np.linalg.solve(K, y)
    mean = kx @ sol
    var = kernel.diag(x[None, :])[0] - kx @ np.linalg.solve(K, kx)
    return mean, var


class TestPosterior:
    def test_empty_posterior_is_prior(self):
        gp = GpPosterior(SeKernel(1.0), Observations.empty(2, 1e-6))
        mean, var = gp.posterior(np.array([0.3, -0.2]))
        assert mean == 0.0
        assert var == pytest.approx(1.0, rel=1e-12)

    def test_noiseless_interpolation(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, (12, 2))
        y = np.sin(3 * X[:, 0]) * np.cos(2 * X[:, 1])
        gp = GpPosterior.from_data(SeKernel(4.0), X, y, 0.0)
        for i in range(12):
            mean, var = gp.posterior(X[i])
            assert mean == pytest.approx(y[i], abs=1e-6)
            assert var <= 1e-6

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(1)
        kernel = SeKernel(2.0)
        X = rng.uniform(-1, 1, (15, 2))
        y = rng.normal(size=15)
        gp = GpPosterior.from_data(kernel, X, y, 1e-4)
        for _ in range(10):
            x = rng.uniform(-1, 1, 2)
            mean, var = gp.posterior(x)
            dm, dv = dense_posterior(kernel, X, y, 1e-4, x)
            assert mean == pytest.approx(dm, rel=1e-9, abs=1e-12)
            assert var == pytest.approx(dv, rel=1e-8, abs=1e-12)

    def test_incremental_equals_rebuild(self):
        rng = np.random.default_rng(2)
        kernel = SeKernel(1.5)
        X = rng.uniform(-1, 1, (8, 2))
        y = rng.normal(size=8)
        gp_inc = GpPosterior.from_data(kernel, X[:5], y[:5], 1e-6)
        for i in range(5, 8):
            gp_inc = gp_inc.add_observation(X[i], y[i])
        gp_full = GpPosterior.from_data(kernel, X, y, 1e-6)
        for _ in range(10):
            x = rng.uniform(-1, 1, 2)
            mi, vi = gp_inc.posterior(x)
            mf, vf = gp_full.posterior(x)
            assert mi == pytest.approx(mf, rel=1e-9, abs=1e-12)
            assert vi == pytest.approx(vf, rel=1e-9, abs=1e-12)

    def test_large_noise_shrinks_to_prior(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, (10, 2))
        y = rng.normal(size=10)
        gp = GpPosterior.from_data(SeKernel(1.0), X, y, 1e9)
        mean, var = gp.posterior(np.zeros(2))
        assert abs(mean) < 1e-6
        assert var == pytest.approx(1.0, rel=1e-6)

    def test_duplicate_points_succeed_via_jitter(self):
        X = np.array([[0.1, 0.2], [0.1, 0.2], [0.5, -0.5]])
        y = np.array([1.0, 1.0, -1.0])
        gp = GpPosterior.from_data(SeKernel(1.0), X, y, 0.0)
        mean, var = gp.posterior(np.array([0.1, 0.2]))
        assert np.isfinite(mean) and np.isfinite(var)
        assert var >= 0.0

    def test_variance_clamped_nonnegative(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(-1, 1, (20, 2))
        y = rng.normal(size=20)
        gp = GpPosterior.from_data(SeKernel(8.0), X, y, 0.0)
        _, var = gp.posterior_batch(X)
        assert np.all(var >= 0.0)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(5)
        kernel = ArdSeKernel([1.0, 4.0])
        X = rng.uniform(-1, 1, (9, 2))
        y = rng.normal(size=9)
        gp = GpPosterior.from_data(kernel, X, y, 1e-5)
        P = rng.uniform(-1, 1, (6, 2))
        means, vars_ = gp.posterior_batch(P)
        for i, p in enumerate(P):
            m, v = gp.posterior(p)
            assert means[i] == pytest.approx(m, rel=1e-13, abs=1e-15)
            assert vars_[i] == pytest.approx(v, rel=1e-13, abs=1e-15)


class TestWeightSpaceOracle:
    def test_prior_with_no_observations(self):
        spec = FreeKernelSpec(family="polynomial", degree=2, offset=1.0)
        exp = expand_features(spec, n=2, max_degree=2)
        x = np.array([0.4, -0.3])
        mean, var = weight_space_posterior_oracle(exp, Observations.empty(2, 1e-6), x)
        assert mean == 0.0
        # Prior variance equals the kernel's diagonal value.
        from tpbo import eval_free

        assert var == pytest.approx(eval_free(spec, 2, [x, x]), rel=1e-12)

    def test_function_space_equivalence_polynomial(self):
        rng = np.random.default_rng(6)
        spec = FreeKernelSpec(family="polynomial", degree=3, offset=0.7)
        aux = rng.uniform(-1, 1, (6, 2))
        alpha = rng.normal(size=6)
        t = TunedKernel(spec, aux, alpha)
        exp = expand_features(spec, n=2, max_degree=3)
        reweighted = exp.with_weights(tuned_weights_oracle(t, exp))
        X = rng.uniform(-1, 1, (7, 2))
        y = rng.normal(size=7)
        obs = Observations(X, y, 1e-4)
        gp = GpPosterior(t, obs)
        for _ in range(8):
            x = rng.uniform(-1, 1, 2)
            fm, fv = gp.posterior(x)
            wm, wv = weight_space_posterior_oracle(reweighted, obs, x)
            assert wm == pytest.approx(fm, rel=1e-8, abs=1e-10)
            assert wv == pytest.approx(fv, rel=1e-8, abs=1e-10)

    def test_large_noise_shrinks_to_prior(self):
        rng = np.random.default_rng(7)
        spec = FreeKernelSpec(family="polynomial", degree=2, offset=1.0)
        exp = expand_features(spec, n=2, max_degree=2)
        X = rng.uniform(-1, 1, (6, 2))
        y = rng.normal(size=6)
        x = np.array([0.2, 0.6])
        mean_big, var_big = weight_space_posterior_oracle(exp, Observations(X, y, 1e10), x)
        _, var_prior = weight_space_posterior_oracle(exp, Observations.empty(2, 1.0), x)
        assert abs(mean_big) < 1e-6
        assert var_big == pytest.approx(var_prior, rel=1e-6)
