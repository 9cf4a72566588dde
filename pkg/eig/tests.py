"""
EIG estimators: outer samples, inner likelihood/evidence estimates, value and gradient
"""

import numpy as np
from django.test import SimpleTestCase, tag
from scipy.stats import norm

from eig.estimators import (
    eig_grad_hat, eig_hat, evidence_hat, likelihood_grad_hat, likelihood_hat,
    nested_estimate, propagate_evidence, propagate_likelihood,
)
from eig.gamma import sample_gamma
from filtering.ensemble import NestedEnsemble, init_ensemble, posterior_summary
from filtering.jitter import JitterKernel
from ssm.exceptions import InvalidArgumentError
from ssm.rng import RngStream
from testbeds.lingauss import GaussianMoments, LinearGaussianModel, LinGaussConfig, lin_gauss_exact
from testbeds.sir import SirModel
from testbeds.source import SourceModel


def _quantile_ensemble(M, N, theta_mean=0.0, state_mean=0.0):
    """Deterministic standard-normal quantiles for both layers"""
    params = theta_mean + norm.ppf((np.arange(M) + 0.5) / M)[:, None]
    bank = state_mean + norm.ppf((np.arange(N) + 0.5) / N)[:, None]
    states = np.broadcast_to(bank, (M, N, 1))
    return NestedEnsemble(params, np.full(M, 1.0 / M), states, np.full((M, N), 1.0 / N))


def _zero_kernel(model, M=1):
    return JitterKernel(0.0, M, *model.param_bounds)


class _DesignFreeModel(LinearGaussianModel):
    """Observation model that ignores the design"""

    def log_observation(self, y, x, theta, xi):
        return super().log_observation(y, x, theta, [1.0])

    def sample_observation(self, x, theta, xi, gen):
        return super().sample_observation(x, theta, [1.0], gen)

    def grad_xi_log_observation(self, y, x, theta, xi):
        return np.zeros(np.broadcast_shapes(np.shape(y), np.shape(x)))


class GammaTests(SimpleTestCase):
    """Test outer sample construction"""

    def setUp(self):
        self.model = LinearGaussianModel()
        self.ens = init_ensemble(self.model, 4, 5, RngStream(0))

    def test_full_batch_uniform_weights(self):
        gamma = sample_gamma(self.ens, [1.0], self.model, 20, RngStream(1))
        self.assertEqual(len(gamma), 20)
        np.testing.assert_allclose(gamma.weights, np.full(20, 1 / 20))
        pairs = set(zip(gamma.m_index.tolist(), gamma.n_index.tolist()))
        self.assertEqual(len(pairs), 20)

    def test_zero_parameter_weight_keeps_sample_with_zero_weight(self):
        ens = NestedEnsemble([[0.0], [1.0]], [1.0, 0.0], [[[0.0]], [[1.0]]], [[1.0], [1.0]])
        gamma = sample_gamma(ens, [1.0], self.model, 2, RngStream(2))
        np.testing.assert_array_equal(gamma.weights, [1.0, 0.0])
        self.assertEqual(gamma[1].weight, 0.0)

    def test_subsample_renormalises(self):
        gamma = sample_gamma(self.ens, [1.0], self.model, 7, RngStream(3))
        self.assertAlmostEqual(gamma.weights.sum(), 1.0, delta=1e-9)
        self.assertEqual(len(set(zip(gamma.m_index.tolist(), gamma.n_index.tolist()))), 7)

    def test_deterministic(self):
        a = sample_gamma(self.ens, [1.0], self.model, 7, RngStream(4))
        b = sample_gamma(self.ens, [1.0], self.model, 7, RngStream(4))
        np.testing.assert_array_equal(a.pseudo_obs, b.pseudo_obs)
        np.testing.assert_array_equal(a.pred_state, b.pred_state)

    def test_batch_bounds(self):
        with self.assertRaises(InvalidArgumentError):
            sample_gamma(self.ens, [1.0], self.model, 21, RngStream(0))
        with self.assertRaises(InvalidArgumentError):
            sample_gamma(self.ens, [1.0], self.model, 0, RngStream(0))


class InnerEstimatorTests(SimpleTestCase):
    """Test L^ and Z^ and their gradients"""

    def setUp(self):
        self.model = LinearGaussianModel()

    def test_single_particle_likelihood_is_the_density(self):
        ens = _quantile_ensemble(1, 1)
        particles = propagate_likelihood(ens, [1.0], self.model, RngStream(0))
        expected = np.exp(self.model.log_observation([0.4], particles.states[0, 0], ens.params[0], [1.0]))
        value = likelihood_hat([0.4], 0, ens, [1.0], self.model, RngStream(0))
        self.assertAlmostEqual(value, float(expected), places=14)

    def test_state_free_observation(self):
        """Test xi = 0 makes L^ and Z^ equal the noise density of y"""
        ens = init_ensemble(self.model, 5, 6, RngStream(1))
        kernel = JitterKernel(1.0, 5, *self.model.param_bounds)
        expected = norm.pdf(0.7, scale=np.sqrt(self.model.config.r))
        self.assertAlmostEqual(likelihood_hat([0.7], 2, ens, [0.0], self.model, RngStream(1)), expected, places=12)
        self.assertAlmostEqual(evidence_hat([0.7], ens, [0.0], self.model, kernel, RngStream(1)), expected, places=12)

    def test_evidence_collapses_to_likelihood(self):
        """Test M = 1 with zero jitter and shared streams gives Z^ = L^"""
        ens = init_ensemble(self.model, 1, 40, RngStream(2))
        rng = RngStream(2, ('inner',))
        lik = likelihood_hat([0.3], 0, ens, [1.3], self.model, rng)
        evi = evidence_hat([0.3], ens, [1.3], self.model, _zero_kernel(self.model), rng)
        self.assertAlmostEqual(lik, evi, delta=1e-12 * lik)

    def test_bad_parameter_index(self):
        ens = init_ensemble(self.model, 2, 2, RngStream(0))
        with self.assertRaises(InvalidArgumentError):
            likelihood_hat([0.0], 2, ens, [1.0], self.model, RngStream(0))

    def test_single_particle_gradient(self):
        """Test N = 1 gives grad g + g grad log f with grad log f = 0"""
        ens = _quantile_ensemble(1, 1)
        particles = propagate_likelihood(ens, [0.8], self.model, RngStream(3))
        x, theta = particles.states[0, 0], ens.params[0]
        g = np.exp(self.model.log_observation([0.2], x, theta, [0.8]))
        expected = g * self.model.grad_xi_log_observation([0.2], x, theta, [0.8])
        np.testing.assert_allclose(
            likelihood_grad_hat([0.2], 0, ens, [0.8], self.model, RngStream(3), particles), expected, rtol=1e-12
        )

    def test_floored_density_has_zero_gradient(self):
        """Test an observation far in the tail is floored in value and flat in xi"""
        ens = _quantile_ensemble(1, 1)
        particles = propagate_likelihood(ens, [0.8], self.model, RngStream(3))
        raw = self.model.grad_xi_log_observation([1e3], particles.states[0, 0], ens.params[0], [0.8])
        self.assertTrue(np.all(np.abs(raw) > 0))
        value = likelihood_hat([1e3], 0, ens, [0.8], self.model, RngStream(3), particles)
        self.assertAlmostEqual(np.log(value), -700.0, places=9)
        np.testing.assert_array_equal(
            likelihood_grad_hat([1e3], 0, ens, [0.8], self.model, RngStream(3), particles), np.zeros(1)
        )

    def test_design_free_model_has_zero_gradients(self):
        model = _DesignFreeModel()
        ens = init_ensemble(model, 3, 4, RngStream(4))
        kernel = JitterKernel(1.0, 3, *model.param_bounds)
        from eig.estimators import evidence_grad_hat
        self.assertFalse(np.any(likelihood_grad_hat([0.1], 1, ens, [0.5], model, RngStream(4))))
        self.assertFalse(np.any(evidence_grad_hat([0.1], ens, [0.5], model, kernel, RngStream(4))))

    def test_likelihood_gradient_matches_finite_differences_sir(self):
        """Test grad L^ against differences of L^ with frozen particles"""
        model = SirModel()
        ens = init_ensemble(model, 3, 50, RngStream(5))
        xi = np.array([0.6, 0.4])
        particles = propagate_likelihood(ens, xi, model, RngStream(5, ('inner',)))
        y = [2.0, 1.0]
        analytic = likelihood_grad_hat(y, 1, ens, xi, model, None, particles)
        step = 1e-5
        numeric = np.zeros(2)
        for i in range(2):
            bump = np.zeros(2)
            bump[i] = step
            plus = likelihood_hat(y, 1, ens, xi + bump, model, None, particles)
            minus = likelihood_hat(y, 1, ens, xi - bump, model, None, particles)
            numeric[i] = (plus - minus) / (2 * step)
        self.assertLessEqual(np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic), 1e-5)

    def test_inner_permutation_invariance(self):
        ens = init_ensemble(self.model, 3, 30, RngStream(6))
        kernel = JitterKernel(1.0, 3, *self.model.param_bounds)
        lik = propagate_likelihood(ens, [1.0], self.model, RngStream(6))
        evi = propagate_evidence(ens, [1.0], self.model, kernel, RngStream(6))
        order = RngStream(6, ('perm',)).generator().permutation(30)
        lik_p = type(lik)(lik.params, lik.prev_states[:, order], lik.states[:, order], lik.log_weights[:, order])
        evi_p = type(evi)(evi.params, evi.prev_states[:, order], evi.states[:, order], evi.log_weights[:, order])
        for y in ([0.5], [-1.2]):
            self.assertAlmostEqual(
                likelihood_hat(y, 1, ens, [1.0], self.model, None, lik),
                likelihood_hat(y, 1, ens, [1.0], self.model, None, lik_p), delta=1e-12,
            )
            self.assertAlmostEqual(
                evidence_hat(y, ens, [1.0], self.model, kernel, None, evi),
                evidence_hat(y, ens, [1.0], self.model, kernel, None, evi_p), delta=1e-12,
            )
        gamma = sample_gamma(ens, [1.0], self.model, 90, RngStream(7))
        a = nested_estimate(gamma, lik, evi, [1.0], self.model).value
        b = nested_estimate(gamma, lik_p, evi_p, [1.0], self.model).value
        self.assertAlmostEqual(a, b, delta=1e-12)


class EigEstimateTests(SimpleTestCase):
    """Test the nested EIG value and gradient"""

    def setUp(self):
        self.model = LinearGaussianModel()

    def test_value_matches_gradient_run_bit_exactly(self):
        ens = init_ensemble(self.model, 6, 8, RngStream(0))
        kernel = JitterKernel(1.0, 6, *self.model.param_bounds)
        value = eig_hat(ens, [1.2], self.model, kernel, 30, RngStream(0, ('eig',)))
        estimate = eig_grad_hat(ens, [1.2], self.model, kernel, 30, RngStream(0, ('eig',)))
        self.assertEqual(value, estimate.value)
        self.assertEqual(estimate.gradient.shape, (1,))
        self.assertEqual((estimate.diagnostics.batch, estimate.diagnostics.M, estimate.diagnostics.N), (30, 6, 8))

    def test_value_within_log_ratio_range(self):
        ens = init_ensemble(self.model, 6, 8, RngStream(1))
        kernel = JitterKernel(1.0, 6, *self.model.param_bounds)
        estimate = eig_grad_hat(ens, [0.9], self.model, kernel, 48, RngStream(1))
        self.assertLessEqual(estimate.log_ratios.min(), estimate.value + 1e-12)
        self.assertGreaterEqual(estimate.log_ratios.max(), estimate.value - 1e-12)

    def test_single_theta_gives_zero(self):
        """Test L^ = Z^ under one parameter particle with zero jitter"""
        ens = init_ensemble(self.model, 1, 25, RngStream(2))
        estimate = eig_grad_hat(ens, [1.1], self.model, _zero_kernel(self.model), 25, RngStream(2))
        self.assertAlmostEqual(estimate.value, 0.0, delta=1e-12)
        np.testing.assert_allclose(estimate.gradient, [0.0], atol=1e-10)

    def test_design_free_model_has_zero_gradient(self):
        model = _DesignFreeModel()
        ens = init_ensemble(model, 4, 5, RngStream(3))
        estimate = eig_grad_hat(ens, [0.4], model, JitterKernel(1.0, 4, *model.param_bounds), 20, RngStream(3))
        np.testing.assert_array_equal(estimate.gradient, [0.0])

    def test_theta_free_observation_gives_small_eig(self):
        """Test |I^| < 0.05 when y does not depend on theta, over 20 replicates"""
        model = LinearGaussianModel(LinGaussConfig(coupling=0.0))
        kernel = JitterKernel(1.0, 100, *model.param_bounds)
        values = []
        for replicate in range(20):
            ens = init_ensemble(model, 100, 100, RngStream(replicate, ('ens',)))
            values.append(eig_hat(ens, [1.0], model, kernel, 100, RngStream(replicate, ('eig',))))
        self.assertLess(abs(np.mean(values)), 0.05)

    def test_sir_sub_estimators_stay_positive(self):
        """Test the clamp keeps log L^ and log Z^ finite at infection-free states"""
        model = SirModel()
        ens = init_ensemble(model, 4, 10, RngStream(4))
        dead = NestedEnsemble(ens.params, ens.param_weights, np.zeros_like(ens.states), ens.state_weights)
        kernel = JitterKernel.for_model(model, 2.0, 4)
        estimate = eig_grad_hat(dead, [0.5, 0.5], model, kernel, 40, RngStream(4))
        self.assertTrue(np.all(np.isfinite(estimate.diagnostics.log_likelihood_range)))
        self.assertTrue(np.all(np.isfinite(estimate.diagnostics.log_evidence_range)))
        self.assertTrue(np.all(np.isfinite(estimate.gradient)))


class GradientFidelityTests(SimpleTestCase):
    """
    Test the estimator gradient against finite differences of a frozen-sample objective.

    With the outer samples and inner particles frozen at xi0 (transitions do not
    depend on the design), the objective
        J(xi) = sum_l w_l g(y~_l | x~_l, xi) / g(y~_l | x~_l, xi0) * log(L^(y~_l; xi) / Z^(y~_l; xi))
    has gradient at xi0 equal to the estimator's gradient.
    """

    def _check(self, model, ens, xi0, kernel, batch, seed):
        stream = RngStream(seed, ('fd',))
        xi0 = np.asarray(xi0, dtype=float)
        gamma = sample_gamma(ens, xi0, model, batch, stream.child('gamma'))
        lik = propagate_likelihood(ens, xi0, model, stream.child('inner'))
        evi = propagate_evidence(ens, xi0, model, kernel, stream.child('inner'))
        analytic = nested_estimate(gamma, lik, evi, xi0, model).gradient
        self.assertTrue(np.allclose(
            analytic, eig_grad_hat(ens, xi0, model, kernel, batch, stream, gamma=gamma).gradient, rtol=1e-12, atol=1e-14
        ))

        base = model.log_observation(gamma.pseudo_obs, gamma.pred_state, gamma.theta, xi0)

        def objective(xi):
            ratio = np.exp(model.log_observation(gamma.pseudo_obs, gamma.pred_state, gamma.theta, xi) - base)
            log_ratios = nested_estimate(gamma, lik, evi, xi, model, gradient=False).log_ratios
            return float(np.sum(gamma.weights * ratio * log_ratios))

        step = 1e-4
        numeric = np.zeros_like(xi0)
        for i in range(xi0.shape[0]):
            bump = np.zeros_like(xi0)
            bump[i] = step
            numeric[i] = (objective(xi0 + bump) - objective(xi0 - bump)) / (2 * step)

        cosine = analytic @ numeric / (np.linalg.norm(analytic) * np.linalg.norm(numeric))
        self.assertGreaterEqual(cosine, 0.99)
        self.assertLessEqual(np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic), 0.02)

    def test_source_model(self):
        model = SourceModel()
        ens = init_ensemble(model, 10, 10, RngStream(20))
        self._check(model, ens, [0.4, -1.3], JitterKernel.for_model(model, 0.15, 10), 100, 20)

    def test_sir_model(self):
        model = SirModel()
        ens = init_ensemble(model, 10, 10, RngStream(21))
        self._check(model, ens, [0.7, 0.3], JitterKernel.for_model(model, 2.0, 10), 100, 21)

    def test_linear_gaussian_model(self):
        model = LinearGaussianModel()
        ens = init_ensemble(model, 10, 10, RngStream(22))
        self._check(model, ens, [1.4], JitterKernel.for_model(model, 1.0, 10), 100, 22)


@tag('oracle')
class LinearGaussianOracleTests(SimpleTestCase):
    """Test the inner and outer estimators against closed-form Gaussian quantities"""

    def setUp(self):
        self.model = LinearGaussianModel()
        self.config = self.model.config

    def _exact_for(self, ens):
        summary = posterior_summary(ens)
        state_var = float(np.var(ens.states[0, :, 0]))
        moments = GaussianMoments(
            mean=np.array([summary.param_mean[0], summary.state_mean[0]]),
            cov=np.diag([summary.param_cov[0, 0], state_var]),
        )
        return moments

    def test_likelihood_matches_predictive_density(self):
        """Test L^ with N = 10^4 within 1% of the Gaussian predictive density"""
        ens = _quantile_ensemble(1, 10_000, theta_mean=0.3)
        xi, y = 1.0, 0.6
        particles = propagate_likelihood(ens, [xi], self.model, RngStream(30))
        state_var = self.config.a ** 2 * np.var(ens.states[0, :, 0]) + self.config.q
        exact = norm.pdf(y, loc=xi * (self.config.coupling * 0.3), scale=np.sqrt(xi ** 2 * state_var + self.config.r))
        value = likelihood_hat([y], 0, ens, [xi], self.model, None, particles)
        self.assertLess(abs(value - exact) / exact, 0.01)

    def test_evidence_matches_marginal_predictive(self):
        """Test Z^ with M = N = 100 within 3 standard errors of the marginal predictive"""
        ens = init_ensemble(self.model, 100, 100, RngStream(31))
        kernel = _zero_kernel(self.model, 100)
        particles = propagate_evidence(ens, [1.0], self.model, kernel, RngStream(31))
        y = 0.5
        g = np.exp(self.model.log_observation([y], particles.states, particles.params[:, None, :], [1.0]))
        bank_means = g.mean(axis=1)
        se = bank_means.std(ddof=1) / np.sqrt(100)
        exact = norm.pdf(y, scale=np.sqrt(1.0 + self.config.a ** 2 + self.config.q + self.config.r))
        value = evidence_hat([y], ens, [1.0], self.model, kernel, None, particles)
        self.assertLess(abs(value - exact), 3 * se)

    def test_eig_matches_closed_form_and_improves_with_budget(self):
        """Test 5% accuracy at L' = 10^4, M = N = 100 and the error trend over M = N in {10, 30, 100}"""
        errors, standard_errors = [], []
        for size in (10, 30, 100):
            ens = _quantile_ensemble(size, size)
            exact, _ = lin_gauss_exact(self.config, self._exact_for(ens), [1.0])
            kernel = _zero_kernel(self.model, size)
            values = np.array([
                eig_hat(ens, [1.0], self.model, kernel, size * size, RngStream(replicate, ('ladder', size)))
                for replicate in range(20)
            ])
            errors.append(abs(values.mean() - exact))
            standard_errors.append(values.std(ddof=1) / np.sqrt(20))
            if size == 100:
                self.assertLessEqual(errors[-1] / exact, 0.05)
        for coarse, fine, se in zip(errors, errors[1:], standard_errors[1:]):
            self.assertLessEqual(fine, coarse + se)
