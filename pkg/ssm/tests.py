"""
Core types, reparameterizations, random streams and model validation
"""

import numpy as np
from django.test import SimpleTestCase, tag

from ssm.base import as_shape
from ssm.exceptions import InvalidArgumentError
from ssm.reparam import (
    design_jacobian, latent_dimension, latent_from_values, latent_gradient,
    transform_design, wrap_heading, wrap_pi,
)
from ssm.rng import RngStream, as_generator, as_stream
from ssm.types import DesignVector, History, Observation, ParamVector, Reparam
from ssm.validation import validate_model
from testbeds.lingauss import LinearGaussianModel
from testbeds.sir import SirConfig, SirModel
from testbeds.source import SourceModel


class TransformDesignTests(SimpleTestCase):
    """Test the latent -> design transforms"""

    def test_simplex_zero_latent_is_even_split(self):
        """Test logistic(0) gives (0.5, 0.5)"""
        design = transform_design([0.0], Reparam.SIMPLEX, 2)
        np.testing.assert_allclose(design.values, [0.5, 0.5])
        self.assertTrue(design.satisfies_constraints())

    def test_angle_wraps_to_principal_interval(self):
        """Test 3pi/2 wraps to -pi/2"""
        design = transform_design([1.5 * np.pi], Reparam.ANGLE, 1)
        np.testing.assert_allclose(design.values, [-0.5 * np.pi])

    def test_simplex_saturates(self):
        """Test large latents push the split to (1, 0)"""
        design = transform_design([40.0], Reparam.SIMPLEX, 2)
        np.testing.assert_allclose(design.values, [1.0, 0.0], atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        """Test a d=2 simplex refuses two latents"""
        with self.assertRaises(InvalidArgumentError):
            transform_design([0.0, 1.0], Reparam.SIMPLEX, 2)
        with self.assertRaises(InvalidArgumentError):
            transform_design([np.nan], Reparam.ANGLE, 1)

    def test_softmax_simplex_for_three_components(self):
        design = transform_design([0.0, 0.0], Reparam.SIMPLEX, 3)
        np.testing.assert_allclose(design.values, [1 / 3, 1 / 3, 1 / 3])
        self.assertEqual(latent_dimension(Reparam.SIMPLEX, 3), 2)

    def test_latent_from_values_inverts_transform(self):
        for reparam, values in [
            (Reparam.SIMPLEX, [0.3, 0.7]),
            (Reparam.SIMPLEX, [0.2, 0.5, 0.3]),
            (Reparam.ANGLE, [1.0, -2.5]),
            (Reparam.UNCONSTRAINED, [4.2]),
        ]:
            latent = latent_from_values(values, reparam)
            np.testing.assert_allclose(transform_design(latent, reparam).values, values, atol=1e-12)

    def test_wrap_conventions(self):
        """Test designs use [-pi, pi) while headings use (-pi, pi]"""
        self.assertAlmostEqual(float(wrap_pi(np.pi)), -np.pi)
        self.assertAlmostEqual(float(wrap_heading(np.pi)), np.pi)
        self.assertAlmostEqual(float(wrap_heading(np.pi + 0.1)), -np.pi + 0.1)

    def test_wrap_stays_inside_interval_at_the_boundary(self):
        """Test angles one ulp past -pi and pi do not round onto the excluded end"""
        below = np.nextafter(-np.pi, -10)
        above = np.nextafter(np.pi, 10)
        self.assertLess(float(wrap_pi(below)), np.pi)
        self.assertGreater(float(wrap_heading(above)), -np.pi)
        angles = -np.pi - 1e-16 * np.arange(1, 50)
        wrapped = wrap_pi(angles)
        self.assertTrue(np.all((wrapped >= -np.pi) & (wrapped < np.pi)))
        headings = wrap_heading(-angles)
        self.assertTrue(np.all((headings > -np.pi) & (headings <= np.pi)))


@tag('invariant')
class ReparamInvariantTests(SimpleTestCase):
    """Test constraint preservation and the chain-rule factor"""

    def setUp(self):
        self.gen = RngStream(7, ('reparam',)).generator()

    def test_random_latents_satisfy_constraints(self):
        """Test 10^4 random latents per tag land in the constraint set"""
        cases = [(Reparam.SIMPLEX, 2), (Reparam.SIMPLEX, 4), (Reparam.ANGLE, 2), (Reparam.UNCONSTRAINED, 3)]
        for reparam, dim in cases:
            latents = self.gen.normal(scale=10.0, size=(10_000, latent_dimension(reparam, dim)))
            for latent in latents:
                self.assertTrue(transform_design(latent, reparam, dim).satisfies_constraints())

    def test_jacobian_matches_finite_differences(self):
        """Test the chain-rule factor against central differences at step 1e-5"""
        step = 1e-5
        cases = [(Reparam.SIMPLEX, [0.3]), (Reparam.SIMPLEX, [0.4, -1.1, 0.7]), (Reparam.ANGLE, [0.5, -1.0])]
        for reparam, latent in cases:
            latent = np.asarray(latent)
            jacobian = design_jacobian(latent, reparam)
            for i in range(latent.shape[0]):
                bump = np.zeros_like(latent)
                bump[i] = step
                plus = transform_design(latent + bump, reparam).values
                minus = transform_design(latent - bump, reparam).values
                numeric = (plus - minus) / (2 * step)
                error = np.linalg.norm(numeric - jacobian[:, i]) / np.linalg.norm(jacobian[:, i])
                self.assertLessEqual(error, 1e-6)

    def test_latent_gradient_applies_transpose(self):
        design = transform_design([0.0], Reparam.SIMPLEX, 2)
        # d/dl of (g1 s + g2 (1 - s)) at s = 1/2
        np.testing.assert_allclose(latent_gradient(design, [1.0, -1.0]), [0.5])
        with self.assertRaises(InvalidArgumentError):
            latent_gradient(design, [1.0])


class ValueTypeTests(SimpleTestCase):
    """Test the domain value types"""

    def test_param_vector_support(self):
        ParamVector([0.5, 0.5], 0.1, 1.0)
        with self.assertRaises(InvalidArgumentError):
            ParamVector([0.05, 0.5], 0.1, 1.0)

    def test_history_lengths_must_agree(self):
        design = transform_design([0.0], Reparam.SIMPLEX, 2)
        history = History().extend(design, Observation([1.0, 2.0]))
        self.assertEqual(history.length, 1)
        with self.assertRaises(InvalidArgumentError):
            History((design,), ())

    def test_design_vector_is_read_only(self):
        design = transform_design([0.0], Reparam.SIMPLEX, 2)
        self.assertIsInstance(design, DesignVector)
        with self.assertRaises(ValueError):
            design.values[0] = 1.0
        self.assertEqual(design.to_dict()['reparam'], 'simplex-sigmoid')

    def test_as_shape(self):
        self.assertEqual(as_shape(3), (3,))
        self.assertEqual(as_shape(()), ())
        self.assertEqual(as_shape((2, np.int64(4))), (2, 4))


@tag('invariant')
class RngStreamTests(SimpleTestCase):
    """Test the labeled stream contract"""

    def test_identical_paths_identical_draws(self):
        a = RngStream(11).child('filter', 3).generator().normal(size=5)
        b = RngStream(11, ('filter', 3)).generator().normal(size=5)
        np.testing.assert_array_equal(a, b)

    def test_distinct_paths_differ(self):
        root = RngStream(11)
        a = root.child('filter', 3).generator().normal(size=5)
        b = root.child('filter', 4).generator().normal(size=5)
        c = RngStream(12).child('filter', 3).generator().normal(size=5)
        self.assertFalse(np.array_equal(a, b))
        self.assertFalse(np.array_equal(a, c))

    def test_coercions(self):
        self.assertEqual(as_stream(5), RngStream(5))
        gen = np.random.default_rng(0)
        self.assertIs(as_generator(gen), gen)
        with self.assertRaises(TypeError):
            as_stream('seed')
        with self.assertRaises(ValueError):
            RngStream(1).child(-1).generator()

    def test_model_sampling_is_deterministic(self):
        """Test every sampler reproduces bit-identical draws from one path"""
        for model in (SirModel(), SourceModel(), LinearGaussianModel()):
            draws = []
            for _ in range(2):
                gen = RngStream(3, ('determinism', model.name)).generator()
                theta = model.sample_param_prior(4, gen)
                x0 = model.sample_state_prior((4, 5), gen)
                xi = model.sample_random_design(gen)
                x1 = model.sample_transition(x0, theta[:, None, :], xi.values, gen)
                y = model.sample_observation(x1[0, 0], theta[0], xi.values, gen)
                draws.append(np.concatenate([theta.ravel(), x1.ravel(), xi.values, y]))
            np.testing.assert_array_equal(draws[0], draws[1])


class _WrongGradientModel(LinearGaussianModel):
    def grad_xi_log_observation(self, y, x, theta, xi):
        return np.zeros(np.shape(y)[:-1] + (3,))


class ValidateModelTests(SimpleTestCase):
    """Test the model smoke checks"""

    def test_linear_gaussian_is_clean(self):
        """Test 100 probes on the Gaussian model report nothing"""
        report = validate_model(LinearGaussianModel(), 100, RngStream(0))
        self.assertTrue(report.ok)
        self.assertEqual(report.probes, 100)

    def test_wrong_gradient_dimension_flagged_on_every_probe(self):
        report = validate_model(_WrongGradientModel(), 100, 0)
        self.assertEqual(report.kinds(), {'grad_xi_log_observation': 100})

    def test_sir_clamp_keeps_infection_free_states_finite(self):
        """Test the rate floor removes zero-likelihood probes at I = 0"""
        self.assertTrue(validate_model(SirModel(), 50, 1).ok)
        unclamped = validate_model(SirModel(SirConfig(rate_floor=0.0)), 50, 1)
        self.assertIn('log_observation', unclamped.kinds())

    def test_source_model_is_clean(self):
        self.assertTrue(validate_model(SourceModel(), 50, 2).ok)

    def test_probe_budget_must_be_positive(self):
        with self.assertRaises(InvalidArgumentError):
            validate_model(LinearGaussianModel(), 0, 0)

    def test_zero_transition_gradient(self):
        """Test design-independent dynamics give exactly zero transition gradients"""
        gen = RngStream(4).generator()
        for model in (SirModel(), SourceModel(), LinearGaussianModel()):
            theta = model.sample_param_prior(6, gen)
            x0 = model.sample_state_prior(6, gen)
            xi = model.sample_random_design(gen)
            x1 = model.sample_transition(x0, theta, xi.values, gen)
            gradient = model.grad_xi_log_transition(x1, x0, theta, xi.values)
            self.assertEqual(gradient.shape, (6, model.design_dim))
            self.assertFalse(np.any(gradient))
