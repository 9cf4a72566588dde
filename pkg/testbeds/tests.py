"""
Testbed models: SIR diffusion, moving source, linear-Gaussian oracle
"""

import numpy as np
from django.test import SimpleTestCase, tag
from pydantic import ValidationError

from ssm.exceptions import InvalidArgumentError
from ssm.rng import RngStream
from testbeds.lingauss import (
    GaussianMoments, LinearGaussianModel, LinGaussConfig, kalman_filter, kalman_predict,
    kalman_update, lin_gauss_exact, predictive_moments,
)
from testbeds.registry import build_model, parse_model_config
from testbeds.sir import (
    SirConfig, SirModel, sir_em_step, sir_grad_xi_log_obs, sir_log_obs, sir_obs_rate,
    sir_project, sir_rates,
)
from testbeds.source import (
    SourceConfig, SourceModel, directivity, pointing_error, source_grad_xi_log_obs,
    source_log_obs, source_mu, source_step,
)


def _finite_difference(log_density, xi, step=1e-5):
    """Central differences of a vectorised log density w.r.t. each design coordinate"""
    gradient = np.zeros_like(xi)
    for i in range(xi.shape[-1]):
        bump = np.zeros_like(xi)
        bump[..., i] = step
        gradient[..., i] = (log_density(xi + bump) - log_density(xi - bump)) / (2 * step)
    return gradient


class SirTests(SimpleTestCase):
    """Test the two-group SIR rates, integrator and Poisson observations"""

    def setUp(self):
        self.config = SirConfig()
        self.state = np.array([195.0, 5.0, 195.0, 5.0])

    def test_rates_at_initial_condition(self):
        """Test lambda_1 and r_1 at the published parameters"""
        rates = sir_rates(self.state, [0.65, 0.55], [0.15, 0.15], self.config)
        self.assertAlmostEqual(rates[0], 3.16875)
        self.assertAlmostEqual(rates[1], 0.75)

    def test_disease_free_rates_vanish(self):
        rates = sir_rates([200.0, 0.0, 200.0, 0.0], [0.65, 0.55], [0.15, 0.15], self.config)
        np.testing.assert_array_equal(rates, np.zeros(4))

    def test_zero_noise_step_is_the_drift(self):
        """Test dS1 = -lambda_1 dtau and dI1 = (lambda_1 - r_1) dtau"""
        moved = sir_em_step(self.state, [0.65, 0.15], None, self.config, noise=np.zeros(4))
        self.assertAlmostEqual(moved[0] - self.state[0], -0.316875)
        self.assertAlmostEqual(moved[1] - self.state[1], 0.241875)

    def test_infection_free_state_is_absorbing(self):
        gen = RngStream(0).generator()
        state = np.array([200.0, 0.0, 180.0, 0.0])
        np.testing.assert_array_equal(sir_em_step(state, [0.65, 0.15], gen, self.config), state)

    def test_projection_clamps(self):
        projected = sir_project([210.0, 5.0, 100.0, 150.0], self.config)
        np.testing.assert_array_equal(projected, [200.0, 0.0, 100.0, 100.0])

    def test_observation_rate_and_zero_counts(self):
        """Test lambda_obs,1 = 1.1875 and log g(0, 0) = -sum(lambda)"""
        rate = sir_obs_rate(self.state, [0.5, 0.5], self.config)
        self.assertAlmostEqual(rate[0], 1.1875)
        self.assertAlmostEqual(sir_log_obs([0.0, 0.0], self.state, [0.5, 0.5], self.config), -rate.sum())

    def test_score_root_at_matching_count(self):
        state = np.array([100.0, 80.0, 195.0, 5.0])
        rate = sir_obs_rate(state, [0.5, 0.5], self.config)
        y = [round(rate[0]), 1.0]
        gradient = sir_grad_xi_log_obs(y, state, [0.5, 0.5], self.config)
        self.assertAlmostEqual(gradient[0], 0.0, places=9)

    def test_invalid_counts_rejected(self):
        for y in ([-1.0, 0.0], [0.5, 1.0]):
            with self.assertRaises(InvalidArgumentError):
                sir_log_obs(y, self.state, [0.5, 0.5], self.config)

    def test_config_validation(self):
        with self.assertRaises(ValidationError):
            SirConfig(mixing=((0.8, 0.1), (0.1, 0.9)))
        with self.assertRaises(ValidationError):
            SirConfig(populations=(0.0, 200.0))
        with self.assertRaises(ValidationError):
            SirConfig(prior_low=1.0, prior_high=0.5)

    def test_state_prior_is_the_initial_condition(self):
        model = SirModel()
        states = model.sample_state_prior((3, 2), RngStream(0).generator())
        self.assertEqual(states.shape, (3, 2, 4))
        np.testing.assert_array_equal(states[1, 1], self.state)


@tag('invariant')
class SirInvariantTests(SimpleTestCase):
    """Test feasibility and conservation over many random steps"""

    def test_feasibility_after_random_steps(self):
        config = SirConfig()
        gen = RngStream(1, ('sir-feasibility',)).generator()
        n = np.asarray(config.populations)
        susceptible = gen.uniform(0.0, 1.0, size=(100_000, 2)) * n
        infected = gen.uniform(0.0, 1.0, size=(100_000, 2)) * (n - susceptible)
        state = np.stack([susceptible[:, 0], infected[:, 0], susceptible[:, 1], infected[:, 1]], axis=-1)
        theta = gen.uniform(config.prior_low, config.prior_high, size=(100_000, 2))

        moved = sir_em_step(state, theta, gen, config)
        for g in range(2):
            s, i = moved[:, 2 * g], moved[:, 2 * g + 1]
            self.assertTrue(np.all((s >= 0) & (s <= n[g])))
            self.assertTrue(np.all((i >= 0) & (i <= n[g] - s)))
            recovered = n[g] - s - i
            np.testing.assert_allclose(s + i + recovered, n[g])

    def test_analytic_gradient_matches_finite_differences(self):
        config = SirConfig()
        gen = RngStream(2, ('sir-gradient',)).generator()
        count = 1000
        state = np.stack([
            gen.uniform(0, 100, count), gen.uniform(1, 100, count),
            gen.uniform(0, 100, count), gen.uniform(1, 100, count),
        ], axis=-1)
        xi = gen.uniform(0.1, 0.9, size=(count, 2))
        y = gen.poisson(sir_obs_rate(state, xi, config)).astype(float)

        numeric = _finite_difference(lambda d: sir_log_obs(y, state, d, config), xi)
        analytic = sir_grad_xi_log_obs(y, state, xi, config)
        for a, b in zip(analytic, numeric):
            self.assertLessEqual(np.linalg.norm(a - b), 1e-6 * max(np.linalg.norm(a), 1.0))


class SourceTests(SimpleTestCase):
    """Test the moving-source dynamics, directivity and log-normal observations"""

    def setUp(self):
        self.config = SourceConfig()

    def test_zero_noise_drift(self):
        """Test dp = (0.1, 0) and dphi = 0.03 at phi = 0"""
        moved = source_step([0.0, 0.0, 0.0], [1.0, 1.0], None, self.config, noise=np.zeros(3))
        np.testing.assert_allclose(moved, [0.1, 0.0, 0.03])
        moved = source_step([0.0, 0.0, np.pi / 2], [1.0, 1.0], None, self.config, noise=np.zeros(3))
        np.testing.assert_allclose(moved[:2], [0.0, 0.1], atol=1e-15)

    def test_heading_wraps(self):
        moved = source_step([0.0, 0.0, np.pi - 0.03], [1.0, 1.0], None, self.config, noise=np.array([0.0, 0.0, 0.1]))
        self.assertAlmostEqual(moved[2], -np.pi + 0.1)

    def test_mean_power_examples(self):
        """Test aligned, back-lobe and side-on sensors with the source at (3, 3)"""
        state = np.array([3.0, 3.0, 0.0])
        # both bearings: sensor (3, 0) sees pi/2, sensor (0, 3) sees 0
        aligned = source_mu(state, [np.pi / 2, 0.0], self.config)
        np.testing.assert_allclose(aligned, [0.1 + 5.0 / 9.1] * 2)
        self.assertAlmostEqual(aligned[0], 0.6495, places=4)
        back = source_mu(state, [-np.pi / 2, 0.0], self.config)
        self.assertAlmostEqual(back[0], 0.1)
        self.assertAlmostEqual(float(directivity(np.pi / 2, self.config)), 0.0625)

    def test_pointing_error(self):
        sensor = np.array(self.config.sensors[0])
        state = np.array([sensor[0] + np.cos(3.0), sensor[1] + np.sin(3.0), 0.0])
        errors = pointing_error([-3.0, 0.0], state, self.config)
        self.assertAlmostEqual(errors[0], np.degrees(2 * np.pi - 6.0), places=6)
        self.assertAlmostEqual(pointing_error([3.0, 0.0], state, self.config)[0], 0.0, places=6)
        self.assertAlmostEqual(pointing_error([3.0 - np.pi, 0.0], state, self.config)[0], 180.0, places=6)

    def test_pointing_error_undefined_on_sensor(self):
        with self.assertRaises(InvalidArgumentError):
            pointing_error([0.0, 0.0], [3.0, 0.0, 0.0], self.config)

    def test_nonpositive_observation_rejected(self):
        with self.assertRaises(InvalidArgumentError):
            source_log_obs([0.0, 1.0], [1.0, 1.0, 0.0], [0.0, 0.0], self.config)

    def test_config_validation(self):
        with self.assertRaises(ValidationError):
            SourceConfig(background=0.0)
        with self.assertRaises(ValidationError):
            SourceConfig(strengths=[5.0])
        with self.assertRaises(ValidationError):
            SourceConfig(process_var=(0.2, 0.0, 0.01))

    def test_fixed_design_faces_origin(self):
        design = SourceModel().fixed_design()
        np.testing.assert_allclose(design.values, [-np.pi, -np.pi / 2])
        self.assertTrue(design.satisfies_constraints())


@tag('invariant')
class SourceInvariantTests(SimpleTestCase):
    """Test directivity bounds, heading wrap and gradient fidelity"""

    def test_directivity_bounds(self):
        delta = np.linspace(-2 * np.pi, 2 * np.pi, 2001)
        for d in (0.0, 0.3, 0.99, 1.0):
            config = SourceConfig(directivity_d=d)
            values = directivity(delta, config)
            self.assertTrue(np.all((values >= 0.0) & (values <= 1.0)))
            self.assertAlmostEqual(float(directivity(0.0, config)), 1.0)

    def test_heading_stays_wrapped(self):
        model = SourceModel()
        gen = RngStream(5, ('heading',)).generator()
        state = model.sample_state_prior(1000, gen)
        theta = model.sample_param_prior(1000, gen)
        for _ in range(20):
            state = model.sample_transition(state, theta, None, gen)
            self.assertTrue(np.all((state[:, 2] > -np.pi) & (state[:, 2] <= np.pi)))

    def test_analytic_gradient_matches_finite_differences(self):
        config = SourceConfig()
        gen = RngStream(6, ('source-gradient',)).generator()
        count = 1000
        state = np.column_stack([gen.uniform(-2, 4, (count, 2)), gen.uniform(-np.pi, np.pi, count)])
        xi = gen.uniform(-np.pi, np.pi, size=(count, 2))
        y = np.exp(np.log(source_mu(state, xi, config)) + 0.3 * gen.normal(size=(count, 2)))

        numeric = _finite_difference(lambda d: source_log_obs(y, state, d, config), xi)
        analytic = source_grad_xi_log_obs(y, state, xi, config)
        for a, b in zip(analytic, numeric):
            self.assertLessEqual(np.linalg.norm(a - b), 1e-6 * max(np.linalg.norm(a), 1.0))


class LinearGaussianTests(SimpleTestCase):
    """Test the closed-form oracle"""

    def setUp(self):
        self.config = LinGaussConfig()

    def test_zero_gain_carries_no_information(self):
        eig, _ = lin_gauss_exact(self.config, GaussianMoments.prior(self.config), [0.0])
        self.assertEqual(eig, 0.0)

    def test_known_state_unit_gain(self):
        """Test EIG = 1/2 log 2 for unit prior, unit noise and a known state"""
        moments = GaussianMoments(mean=np.zeros(2), cov=np.diag([1.0, 0.0]))
        eig, _ = lin_gauss_exact(self.config, moments, [1.0], predict=False)
        self.assertAlmostEqual(eig, 0.5 * np.log(2.0))

    def test_more_noise_less_information(self):
        moments = GaussianMoments.prior(self.config)
        low, _ = lin_gauss_exact(self.config, moments, [1.0])
        high, _ = lin_gauss_exact(LinGaussConfig(r=2.0), moments, [1.0])
        self.assertLess(high, low)

    def test_known_theta_gives_zero_eig(self):
        config = LinGaussConfig(theta_var=0.0)
        eig, _ = lin_gauss_exact(config, GaussianMoments.prior(config), [1.5])
        self.assertAlmostEqual(eig, 0.0)

    def test_predictive_variance(self):
        predicted = kalman_predict(self.config, GaussianMoments.prior(self.config))
        _, var = predictive_moments(self.config, predicted, [2.0])
        # Var(theta) + a^2 Var(x0) + q, scaled by xi^2, plus r
        self.assertAlmostEqual(var, 4.0 * (1.0 + 0.81 + 0.1) + 1.0)

    def test_update_shrinks_theta_variance(self):
        moments = GaussianMoments.prior(self.config)
        updated = kalman_update(self.config, kalman_predict(self.config, moments), [0.7], [1.0])
        self.assertLess(updated.cov[0, 0], moments.cov[0, 0])
        filtered = kalman_filter(self.config, [[1.0]] * 5, [[0.3]] * 5)
        self.assertEqual(len(filtered), 5)
        self.assertTrue(np.all(np.diff([m.cov[0, 0] for m in filtered]) < 0))

    def test_analytic_gradient_matches_finite_differences(self):
        model = LinearGaussianModel()
        gen = RngStream(8).generator()
        x = gen.normal(size=(1000, 1))
        theta = gen.normal(size=(1000, 1))
        xi = gen.uniform(-2, 2, size=(1000, 1))
        y = model.sample_observation(x, theta, xi, gen)
        numeric = _finite_difference(lambda d: model.log_observation(y, x, theta, d), xi)
        analytic = model.grad_xi_log_observation(y, x, theta, xi)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-6)


class RegistryTests(SimpleTestCase):
    """Test model construction from config blocks"""

    def test_build_by_kind(self):
        self.assertIsInstance(build_model('sir'), SirModel)
        self.assertIsInstance(build_model({'kind': 'source', 'noise_var': 0.2}), SourceModel)
        self.assertIsInstance(build_model(LinGaussConfig()), LinearGaussianModel)

    def test_unknown_kind(self):
        with self.assertRaises(InvalidArgumentError):
            build_model('pendulum')
        with self.assertRaises(ValidationError):
            parse_model_config({'kind': 'pendulum'})

    def test_describe_round_trips(self):
        model = build_model('source')
        rebuilt = build_model(model.describe()['config'])
        self.assertEqual(rebuilt.config, model.config)
