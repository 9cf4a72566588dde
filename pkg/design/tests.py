"""
Design optimisation: Adam, stochastic gradient ascent, policies, static designs
"""

from types import SimpleNamespace

import numpy as np
from django.test import SimpleTestCase, tag

from design.adam import AdamConfig, AdamState, adam_step
from design.optimizer import optimize_design
from design.policies import DesignPolicy, PolicyTag, SearchBudget, random_design
from design.static import static_cost, static_optimize
from filtering.ensemble import init_ensemble
from filtering.jitter import JitterKernel
from ssm.exceptions import BudgetExceededError, InvalidArgumentError, NumericError
from ssm.reparam import transform_design
from ssm.rng import RngStream
from testbeds.lingauss import LinearGaussianModel
from testbeds.sir import SirModel
from testbeds.source import SourceModel


class _DesignFreeModel(LinearGaussianModel):
    """Observation model that ignores the design"""

    def log_observation(self, y, x, theta, xi):
        return super().log_observation(y, x, theta, [1.0])

    def sample_observation(self, x, theta, xi, gen):
        return super().sample_observation(x, theta, [1.0], gen)

    def grad_xi_log_observation(self, y, x, theta, xi):
        return np.zeros(np.broadcast_shapes(np.shape(y), np.shape(x)))


def _quadratic(optimum=0.3, noise=0.0):
    """Estimator stand-in whose objective is -(xi - optimum)^2 + 1"""

    def estimator(ens, xi, model, kernel, batch, rng):
        values = xi.values
        gradient = -2.0 * (values - optimum)
        if noise:
            gradient = gradient + noise * rng.generator().normal(size=values.shape)
        return SimpleNamespace(value=float(1.0 - np.sum((values - optimum) ** 2)), gradient=gradient)

    return estimator


def _constant_gradient(value):
    def estimator(ens, xi, model, kernel, batch, rng):
        return SimpleNamespace(value=0.0, gradient=np.full(xi.values.shape, value))
    return estimator


class AdamTests(SimpleTestCase):
    """Test the Adam update rule"""

    def test_first_step_moves_alpha_per_coordinate(self):
        config = AdamConfig(alpha=0.03, eps=1e-12)
        state = AdamState.initial(3, config)
        _, update = adam_step(state, np.array([0.3, -2.0, 5.0]))
        np.testing.assert_allclose(update, [0.03, -0.03, 0.03], rtol=1e-9)

    def test_zero_gradient_gives_zero_update(self):
        state, update = adam_step(AdamState.initial(2), np.zeros(2))
        np.testing.assert_array_equal(update, [0.0, 0.0])
        self.assertEqual(state.k, 1)

    def test_constant_gradient_update_tends_to_alpha(self):
        config = AdamConfig(alpha=0.01, eps=1e-10)
        state = AdamState.initial(1, config)
        for _ in range(500):
            state, update = adam_step(state, np.array([0.7]))
        self.assertAlmostEqual(float(update[0]), 0.01, delta=1e-6)

    def test_non_finite_gradient_raises(self):
        with self.assertRaises(NumericError) as ctx:
            adam_step(AdamState.initial(2), np.array([1.0, np.nan]))
        self.assertEqual(ctx.exception.term, 'gradient')
        self.assertEqual(ctx.exception.index, (1,))

    def test_shape_mismatch(self):
        with self.assertRaises(InvalidArgumentError):
            adam_step(AdamState.initial(2), np.ones(3))

    def test_max_step_clips(self):
        config = AdamConfig(alpha=1.0, max_step=0.1)
        _, update = adam_step(AdamState.initial(1, config), np.array([-4.0]))
        self.assertEqual(float(update[0]), -0.1)

    def test_exponential_schedule(self):
        config = AdamConfig(alpha=0.1, eps=1e-12, schedule='exponential', decay=0.5)
        state = AdamState.initial(1, config)
        state, first = adam_step(state, np.array([1.0]))
        state, second = adam_step(state, np.array([1.0]))
        self.assertAlmostEqual(float(first[0]), 0.1, places=9)
        self.assertAlmostEqual(float(second[0]), 0.05, places=9)

    def test_identical_gradients_give_identical_iterates(self):
        gradients = RngStream(4).generator().normal(size=(30, 2))
        runs = []
        for _ in range(2):
            state, latent, path = AdamState.initial(2), np.zeros(2), []
            for g in gradients:
                state, update = adam_step(state, g)
                latent = latent + update
                path.append(latent)
            runs.append(np.array(path))
        np.testing.assert_array_equal(runs[0], runs[1])

    def test_config_validation(self):
        with self.assertRaises(ValueError):
            AdamConfig(alpha=0.0)
        with self.assertRaises(ValueError):
            AdamConfig(beta1=1.0)


class OptimizeDesignTests(SimpleTestCase):
    """Test stochastic gradient ascent over designs"""

    def setUp(self):
        self.model = LinearGaussianModel()
        self.ens = init_ensemble(self.model, 5, 5, RngStream(0))
        self.kernel = JitterKernel.for_model(self.model, 0.1, 5)

    def test_quadratic_objective_converges(self):
        result = optimize_design(
            self.ens, self.model, self.kernel, 200, AdamConfig(alpha=0.03), RngStream(1),
            batch=1, estimator=_quadratic(),
        )
        self.assertAlmostEqual(float(result.design.values[0]), 0.3, delta=0.05)
        self.assertEqual(result.trace.shape, (200,))
        self.assertEqual(result.latents.shape, (201, 1))

    @tag('invariant')
    def test_ascent_improves_objective_in_most_runs(self):
        improved = 0
        for seed in range(50):
            result = optimize_design(
                self.ens, self.model, self.kernel, 50, AdamConfig(alpha=0.05), RngStream(seed),
                batch=1, estimator=_quadratic(noise=0.5),
            )
            final = 1.0 - (result.design.values[0] - 0.3) ** 2
            improved += final >= result.trace[0]
        self.assertGreaterEqual(improved, 45)

    def test_zero_gradient_returns_random_init(self):
        model = _DesignFreeModel()
        ens = init_ensemble(model, 4, 4, RngStream(2))
        result = optimize_design(ens, model, self.kernel, 1, None, RngStream(3), batch=16)
        expected = model.sample_random_design(RngStream(3).child('init').generator())
        np.testing.assert_array_equal(result.design.values, expected.values)

    def test_deterministic(self):
        a = optimize_design(self.ens, self.model, self.kernel, 5, None, RngStream(5), batch=10)
        b = optimize_design(self.ens, self.model, self.kernel, 5, None, RngStream(5), batch=10)
        np.testing.assert_array_equal(a.latents, b.latents)
        np.testing.assert_array_equal(a.trace, b.trace)

    def test_given_init_is_used(self):
        init = self.model.design_from_values([1.5])
        result = optimize_design(
            self.ens, self.model, self.kernel, 1, None, RngStream(6), batch=1,
            init=init, estimator=_constant_gradient(0.0),
        )
        np.testing.assert_array_equal(result.latents[0], [1.5])

    def test_numeric_failure_carries_trace(self):
        calls = []

        def estimator(ens, xi, model, kernel, batch, rng):
            calls.append(1)
            gradient = np.array([np.nan]) if len(calls) == 4 else np.array([1.0])
            return SimpleNamespace(value=float(len(calls)), gradient=gradient)

        with self.assertRaises(NumericError) as ctx:
            optimize_design(self.ens, self.model, self.kernel, 10, None, RngStream(7), batch=1, estimator=estimator)
        np.testing.assert_array_equal(ctx.exception.trace, [1.0, 2.0, 3.0])

    def test_multi_start(self):
        result = optimize_design(
            self.ens, self.model, self.kernel, 20, AdamConfig(alpha=0.05), RngStream(8),
            batch=1, estimator=_quadratic(), restarts=4, restart_iterations=10,
        )
        self.assertEqual(result.restart_values.shape, (4,))
        self.assertEqual(result.trace.shape, (20,))

    def test_invalid_iterations(self):
        with self.assertRaises(InvalidArgumentError):
            optimize_design(self.ens, self.model, self.kernel, 0, None, RngStream(9), batch=1)


@tag('invariant')
class ConstraintPreservationTests(SimpleTestCase):
    """Every iterate must satisfy its reparameterization constraint"""

    def test_sir_iterates_stay_on_simplex(self):
        model = SirModel()
        ens = init_ensemble(model, 5, 5, RngStream(0))
        kernel = JitterKernel.for_model(model, 0.1, 5)
        result = optimize_design(ens, model, kernel, 5, AdamConfig(alpha=0.3), RngStream(1), batch=10)
        for latent in result.latents:
            design = transform_design(latent, model.reparam, model.design_dim)
            self.assertTrue(design.satisfies_constraints())
            self.assertAlmostEqual(float(design.values.sum()), 1.0, delta=1e-9)

    def test_source_latents_are_wrapped(self):
        model = SourceModel()
        ens = init_ensemble(model, 3, 3, RngStream(2))
        kernel = JitterKernel.for_model(model, 0.1, 3)
        result = optimize_design(
            ens, model, kernel, 30, AdamConfig(alpha=1.0), RngStream(3),
            batch=1, estimator=_constant_gradient(1.0),
        )
        self.assertTrue(np.all(result.latents >= -np.pi))
        self.assertTrue(np.all(result.latents < np.pi))
        for latent in result.latents:
            self.assertTrue(transform_design(latent, model.reparam, model.design_dim).satisfies_constraints())


class RandomDesignTests(SimpleTestCase):
    """Test uniform designs over the constraint sets"""

    def test_sir_on_simplex(self):
        design = random_design(SirModel(), RngStream(0))
        self.assertAlmostEqual(float(design.values.sum()), 1.0, delta=1e-12)

    def test_source_angles_in_range(self):
        design = random_design(SourceModel(), RngStream(1))
        self.assertEqual(design.values.shape, (2,))
        self.assertTrue(np.all((design.values >= -np.pi) & (design.values < np.pi)))

    @tag('invariant')
    def test_sir_first_share_is_uniform(self):
        model = SirModel()
        gen = RngStream(2).generator()
        shares = [random_design(model, gen).values[0] for _ in range(10 ** 4)]
        self.assertAlmostEqual(float(np.mean(shares)), 0.5, delta=0.02)


class DesignPolicyTests(SimpleTestCase):
    """Test the policy wrappers used by the harness"""

    def setUp(self):
        self.model = SirModel()
        self.ens = init_ensemble(self.model, 3, 3, RngStream(0))
        self.kernel = JitterKernel.for_model(self.model, 0.1, 3)

    def test_fixed_policy(self):
        design, trace = DesignPolicy('fixed').propose(1, self.ens, self.model, self.kernel, RngStream(1))
        np.testing.assert_allclose(design.values, [0.5, 0.5])
        self.assertEqual(trace.size, 0)

    def test_random_policy_depends_on_stream_only(self):
        policy = DesignPolicy(PolicyTag.RANDOM)
        a, _ = policy.propose(1, self.ens, self.model, self.kernel, RngStream(2))
        b, _ = policy.propose(5, None, self.model, None, RngStream(2))
        np.testing.assert_array_equal(a.values, b.values)

    def test_static_policy(self):
        policy = DesignPolicy.static_from_values(self.model, [[0.2, 0.8], [0.9, 0.1]])
        policy.check_horizon(2)
        design, _ = policy.propose(2, self.ens, self.model, self.kernel, RngStream(3))
        np.testing.assert_allclose(design.values, [0.9, 0.1])
        with self.assertRaises(InvalidArgumentError):
            policy.check_horizon(3)
        with self.assertRaises(InvalidArgumentError):
            policy.propose(3, self.ens, self.model, self.kernel, RngStream(3))

    def test_static_policy_needs_designs(self):
        with self.assertRaises(InvalidArgumentError):
            DesignPolicy('static')

    def test_badpods_policy_needs_budget(self):
        with self.assertRaises(InvalidArgumentError):
            DesignPolicy('badpods').propose(1, self.ens, self.model, self.kernel, RngStream(4))

    def test_badpods_policy_returns_trace(self):
        budget = SearchBudget(K=3, batch=5)
        design, trace = DesignPolicy('badpods').propose(1, self.ens, self.model, self.kernel, RngStream(5), budget)
        self.assertEqual(trace.shape, (3,))
        self.assertTrue(design.satisfies_constraints())


class StaticOptimizeTests(SimpleTestCase):
    """Test offline optimisation of a design sequence"""

    def setUp(self):
        self.model = LinearGaussianModel()
        self.prior = init_ensemble(self.model, 5, 5, RngStream(0))
        self.kernel = JitterKernel.for_model(self.model, 0.1, 5)
        self.budget = SearchBudget(K=4, batch=10)

    def test_single_step_matches_optimize_design(self):
        static = static_optimize(self.model, self.prior, 1, self.budget, RngStream(1), kernel=self.kernel)
        single = optimize_design(
            self.prior, self.model, self.kernel, self.budget.K, self.budget.adam, RngStream(1), batch=self.budget.batch
        )
        self.assertEqual(len(static.designs), 1)
        np.testing.assert_allclose(static.designs[0].values, single.design.values, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(static.trace, single.trace, rtol=1e-12, atol=1e-15)

    def test_design_free_model_keeps_inits(self):
        model = _DesignFreeModel()
        init = tuple(model.design_from_values([v]) for v in (-1.0, 0.5, 1.7))
        result = static_optimize(model, self.prior, 3, self.budget, RngStream(2), kernel=self.kernel, init=init)
        np.testing.assert_array_equal([d.values[0] for d in result.designs], [-1.0, 0.5, 1.7])
        self.assertEqual(result.trace.shape, (4,))

    def test_multi_step_sequence(self):
        result = static_optimize(self.model, self.prior, 3, self.budget, RngStream(3), kernel=self.kernel)
        self.assertEqual(len(result.designs), 3)
        self.assertTrue(np.all(np.isfinite(result.trace)))
        again = static_optimize(self.model, self.prior, 3, self.budget, RngStream(3), kernel=self.kernel)
        np.testing.assert_array_equal(result.trace, again.trace)

    def test_cost_cap(self):
        cost = static_cost(3, 5, 5, self.budget)
        self.assertEqual(cost, 4 * 3 * 10 * (5 + 25))
        with self.assertRaises(BudgetExceededError) as ctx:
            static_optimize(self.model, self.prior, 3, self.budget, RngStream(4), kernel=self.kernel, cap=cost - 1)
        self.assertEqual(ctx.exception.cost, cost)

    def test_invalid_horizon(self):
        with self.assertRaises(InvalidArgumentError):
            static_optimize(self.model, self.prior, 0, self.budget, RngStream(5), kernel=self.kernel)


@tag('slow')
class SirAscentTrendTests(SimpleTestCase):
    """Desk-scale smoke check of the optimiser on the SIR model"""

    def test_trace_trends_upwards(self):
        model = SirModel()
        ens = init_ensemble(model, 50, 50, RngStream(0))
        kernel = JitterKernel.for_model(model, 0.1, 50)
        result = optimize_design(ens, model, kernel, 150, AdamConfig(alpha=0.03), RngStream(1), batch=500)
        averages = np.convolve(result.trace, np.ones(50) / 50, mode='valid')
        self.assertGreaterEqual(averages[-1], averages[0] - 0.02)
