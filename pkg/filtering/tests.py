"""
Nested particle filter: ensembles, jittering, resampling, the update step, snapshots
"""

import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from filtering.ensemble import NestedEnsemble, init_ensemble, posterior_summary
from filtering.jitter import JitterKernel, jitter, reflect
from filtering.npf import bootstrap_step, npf_step, npf_update
from filtering.resampling import resample
from filtering.snapshot import SNAPSHOT_FIELDS, load_snapshot, save_snapshot
from ssm.exceptions import DegenerateWeightsError, InvalidArgumentError
from ssm.rng import RngStream
from testbeds.lingauss import LinearGaussianModel, LinGaussConfig, kalman_filter
from testbeds.sir import SirModel


def _uniform_ensemble(params, states):
    params = np.asarray(params, dtype=float)
    states = np.asarray(states, dtype=float)
    m, n = states.shape[:2]
    return NestedEnsemble(params, np.full(m, 1.0 / m), states, np.full((m, n), 1.0 / n))


class EnsembleTests(SimpleTestCase):
    """Test ensemble construction and summaries"""

    def test_init_weights_are_uniform(self):
        ens = init_ensemble(SirModel(), 3, 2, RngStream(0))
        np.testing.assert_allclose(ens.param_weights, [1 / 3] * 3)
        np.testing.assert_allclose(ens.state_weights, np.full((3, 2), 0.5))
        self.assertEqual(ens.t, 0)
        self.assertEqual(ens.states.shape, (3, 2, 4))

    def test_sir_params_in_prior_support(self):
        ens = init_ensemble(SirModel(), 500, 1, RngStream(1))
        self.assertTrue(np.all((ens.params >= 0.1) & (ens.params <= 1.0)))

    def test_init_is_deterministic(self):
        a = init_ensemble(LinearGaussianModel(), 4, 5, RngStream(2))
        b = init_ensemble(LinearGaussianModel(), 4, 5, RngStream(2))
        np.testing.assert_array_equal(a.params, b.params)
        np.testing.assert_array_equal(a.states, b.states)

    def test_invalid_sizes_and_weights(self):
        with self.assertRaises(InvalidArgumentError):
            init_ensemble(SirModel(), 0, 3, RngStream(0))
        with self.assertRaises(InvalidArgumentError):
            NestedEnsemble(np.zeros((2, 1)), [0.7, 0.7], np.zeros((2, 1, 1)), np.full((2, 1), 1.0))
        with self.assertRaises(InvalidArgumentError):
            NestedEnsemble(np.zeros((2, 1)), [0.5, 0.5], np.zeros((2, 2, 1)), [[1.0, 0.0], [0.4, 0.4]])

    def test_summary_of_identical_params(self):
        ens = _uniform_ensemble(np.full((4, 2), 0.3), np.zeros((4, 2, 1)))
        summary = posterior_summary(ens)
        np.testing.assert_allclose(summary.param_mean, [0.3, 0.3])
        np.testing.assert_allclose(summary.param_cov, np.zeros((2, 2)), atol=1e-15)

    def test_summary_of_two_points(self):
        """Test params {0, 2} with uniform weights give mean 1 and variance 1"""
        ens = _uniform_ensemble([[0.0], [2.0]], np.zeros((2, 1, 1)))
        summary = posterior_summary(ens)
        self.assertAlmostEqual(summary.param_mean[0], 1.0)
        self.assertAlmostEqual(summary.param_cov[0, 0], 1.0)

    def test_state_marginal_uses_joint_weights(self):
        ens = NestedEnsemble(
            params=[[0.0], [1.0]],
            param_weights=[0.25, 0.75],
            states=[[[0.0], [4.0]], [[8.0], [8.0]]],
            state_weights=[[0.5, 0.5], [1.0, 0.0]],
        )
        self.assertAlmostEqual(posterior_summary(ens).state_mean[0], 0.25 * 2.0 + 0.75 * 8.0)

    def test_prior_mean_large_sample(self):
        ens = init_ensemble(SirModel(), 10_000, 1, RngStream(3))
        np.testing.assert_allclose(posterior_summary(ens).param_mean, [0.55, 0.55], atol=0.01)


class JitterTests(SimpleTestCase):
    """Test the kernel scaling and reflection"""

    def test_variance_scaling(self):
        self.assertAlmostEqual(JitterKernel(2.0, 100, 0.1, 1.0).variance, 0.002)
        self.assertAlmostEqual(JitterKernel(0.15, 300, 0.5, 1.5).variance, 2.887e-5, places=8)

    def test_zero_variance_is_identity(self):
        params = np.array([[0.2, 0.9], [0.5, 0.5]])
        out = jitter(params, JitterKernel(0.0, 2, 0.1, 1.0), RngStream(0))
        np.testing.assert_array_equal(out, params)

    def test_reflection(self):
        np.testing.assert_allclose(reflect([1.1, 0.05, 2.05], 0.1, 1.0), [0.9, 0.15, 0.25])
        np.testing.assert_allclose(reflect([-1.0, 3.0], [0.0, -np.inf], [np.inf, 2.0]), [1.0, 1.0])
        np.testing.assert_allclose(reflect([5.0], -np.inf, np.inf), [5.0])

    def test_negative_scale_rejected(self):
        with self.assertRaises(InvalidArgumentError):
            JitterKernel(-1.0, 10, 0.0, 1.0)

    @tag('invariant')
    def test_support_preserved(self):
        """Test 10^5 jittered particles near the edges stay in the prior box"""
        gen = RngStream(4, ('support',)).generator()
        params = gen.choice([0.1, 1.0], size=(100_000, 2)) + gen.normal(scale=1e-3, size=(100_000, 2))
        params = np.clip(params, 0.1, 1.0)
        kernel = JitterKernel(50.0, 10, [0.1, 0.1], [1.0, 1.0])
        out = jitter(params, kernel, RngStream(4, ('jitter',)))
        self.assertTrue(np.all((out >= 0.1) & (out <= 1.0)))


class ResampleTests(SimpleTestCase):
    """Test ancestor selection"""

    def test_point_mass(self):
        for scheme in ('systematic', 'multinomial'):
            np.testing.assert_array_equal(resample([1.0, 0.0], 5, scheme, RngStream(0)), np.zeros(5))

    def test_systematic_even_split_is_a_permutation(self):
        for seed in range(20):
            indices = resample([0.5, 0.5], 2, 'systematic', RngStream(seed))
            self.assertEqual(sorted(indices.tolist()), [0, 1])

    def test_multinomial_frequency(self):
        indices = resample([0.25, 0.75], 100_000, 'multinomial', RngStream(5))
        self.assertAlmostEqual(np.mean(indices == 1), 0.75, delta=0.01)

    def test_degenerate_and_invalid_weights(self):
        with self.assertRaises(DegenerateWeightsError) as caught:
            resample([0.0, 0.0], 3, 'systematic', RngStream(0))
        self.assertEqual(caught.exception.level, 'resample')
        with self.assertRaises(InvalidArgumentError):
            resample([-0.1, 1.1], 3, 'systematic', RngStream(0))
        with self.assertRaises(ValueError):
            resample([0.5, 0.5], 3, 'stratified', RngStream(0))

    @tag('invariant')
    def test_unbiasedness(self):
        """Test mean occurrence counts over 10^4 trials match count * w_i"""
        weights = np.array([0.1, 0.2, 0.3, 0.4])
        count, trials = 10, 10_000
        for scheme in ('systematic', 'multinomial'):
            gen = RngStream(6, (scheme,)).generator()
            totals = np.zeros(4)
            for _ in range(trials):
                totals += np.bincount(resample(weights, count, scheme, gen), minlength=4)
            mean = totals / trials
            se = np.sqrt(count * weights * (1 - weights) / trials)
            self.assertTrue(np.all(np.abs(mean - count * weights) <= 3 * se), msg=f"{scheme}: {mean}")


class NpfStepTests(SimpleTestCase):
    """Test the nested update"""

    def setUp(self):
        self.model = LinearGaussianModel()
        self.kernel = JitterKernel(1.0, 20, *self.model.param_bounds)

    def test_weights_normalised_and_time_advances(self):
        ens = init_ensemble(self.model, 20, 15, RngStream(0))
        for t in range(5):
            ens = npf_step(ens, [0.4], [1.0], self.model, self.kernel, RngStream(0).child('filter', t))
            self.assertAlmostEqual(ens.param_weights.sum(), 1.0, delta=1e-9)
            np.testing.assert_allclose(ens.state_weights.sum(axis=1), 1.0, atol=1e-9)
        self.assertEqual(ens.t, 5)

    def test_concentrated_weights_copy_one_particle(self):
        """Test state weights [1, 0, 0] resample to three copies of the first particle"""
        # xi = 0 makes g independent of the state, so the prior weights survive
        update = bootstrap_step(
            states=[[0.0], [1.0], [2.0]], weights=[1.0, 0.0, 0.0], theta=[0.0], y=[0.3], xi=[0.0],
            model=self.model, rng=RngStream(1),
        )
        self.assertTrue(np.all(update.states == update.states[0]))
        np.testing.assert_allclose(update.weights, [1 / 3] * 3)

    def test_npf_reduces_to_bootstrap_filter(self):
        """Test point-mass prior and zero jitter reproduce the single-layer filter bit-exactly"""
        model = LinearGaussianModel(LinGaussConfig(theta_var=0.0, theta_mean=0.5))
        kernel = JitterKernel(0.0, 1, *model.param_bounds)
        ens = init_ensemble(model, 1, 50, RngStream(2))
        states, weights = ens.states[0], ens.state_weights[0]
        for t, y in enumerate([0.1, 0.8, -0.3, 1.2]):
            stream = RngStream(2).child('filter', t)
            ens, diagnostics = npf_update(ens, [y], [1.0], model, kernel, stream)
            single = bootstrap_step(states, weights, [0.5], [y], [1.0], model, stream.child('banks'))
            states, weights = single.states, single.weights
            np.testing.assert_array_equal(diagnostics.state_mean, single.filter_mean)
            np.testing.assert_array_equal(ens.states[0], states)

    def test_degenerate_levels(self):
        ens = init_ensemble(self.model, 4, 5, RngStream(3))
        with self.assertRaises(DegenerateWeightsError) as caught:
            npf_step(ens, [1e4], [1.0], self.model, self.kernel, RngStream(3))
        self.assertEqual(caught.exception.level, 'parameter')
        with self.assertRaises(DegenerateWeightsError) as caught:
            bootstrap_step(ens.states[0], ens.state_weights[0], ens.params[0], [1e4], [1.0], self.model, RngStream(3))
        self.assertEqual(caught.exception.level, 'state')

    def test_diagnostics(self):
        ens = init_ensemble(self.model, 30, 10, RngStream(4))
        _, diagnostics = npf_update(ens, [0.2], [1.0], self.model, self.kernel, RngStream(4))
        self.assertTrue(1.0 <= diagnostics.param_ess <= 30.0)
        self.assertEqual(diagnostics.param_mean.shape, (1,))
        self.assertEqual(diagnostics.dead_banks, 0)

    def test_step_is_deterministic(self):
        ens = init_ensemble(SirModel(), 6, 8, RngStream(5))
        kernel = JitterKernel.for_model(SirModel(), 2.0, 6)
        a = npf_step(ens, [2.0, 1.0], [0.5, 0.5], SirModel(), kernel, RngStream(5).child('filter', 0))
        b = npf_step(ens, [2.0, 1.0], [0.5, 0.5], SirModel(), kernel, RngStream(5).child('filter', 0))
        np.testing.assert_array_equal(a.params, b.params)
        np.testing.assert_array_equal(a.states, b.states)


@tag('invariant')
class PermutationTests(SimpleTestCase):
    """Test summaries do not depend on particle order"""

    def test_summary_permutation_invariant(self):
        gen = RngStream(7).generator()
        params = gen.normal(size=(12, 2))
        states = gen.normal(size=(12, 6, 3))
        param_weights = gen.dirichlet(np.ones(12))
        state_weights = gen.dirichlet(np.ones(6), size=12)
        base = posterior_summary(NestedEnsemble(params, param_weights, states, state_weights))

        outer = gen.permutation(12)
        inner = gen.permutation(6)
        permuted = NestedEnsemble(
            params[outer], param_weights[outer], states[outer][:, inner], state_weights[outer][:, inner]
        )
        other = posterior_summary(permuted)
        np.testing.assert_allclose(other.param_mean, base.param_mean, rtol=0, atol=1e-12)
        np.testing.assert_allclose(other.param_cov, base.param_cov, rtol=0, atol=1e-12)
        np.testing.assert_allclose(other.state_mean, base.state_mean, rtol=0, atol=1e-12)


@tag('oracle')
class KalmanOracleTests(SimpleTestCase):
    """Test the filter against the exact Kalman means on a linear-Gaussian run"""

    def test_filter_means_track_kalman(self):
        config = LinGaussConfig(theta_var=0.0, theta_mean=0.5, true_theta=0.5)
        model = LinearGaussianModel(config)
        kernel = JitterKernel(0.0, 1, *model.param_bounds)
        truth = RngStream(10, ('truth',)).generator()

        x = model.initial_true_state()
        designs, observations = [], []
        for _ in range(50):
            x = model.sample_transition(x, model.true_params(), [1.0], truth)
            designs.append([1.0])
            observations.append(model.sample_observation(x, model.true_params(), [1.0], truth))
        exact = kalman_filter(config, designs, observations)

        ens = init_ensemble(model, 1, 10_000, RngStream(10, ('init',)))
        scores = []
        for t, (xi, y) in enumerate(zip(designs, observations)):
            ens, diagnostics = npf_update(ens, y, xi, model, kernel, RngStream(10).child('filter', t))
            se = np.sqrt(exact[t].state_var / 10_000)
            scores.append(abs(diagnostics.state_mean[0] - exact[t].state_mean) / se)
        scores = np.array(scores)
        # Resampling inflates the Monte Carlo error beyond the iid standard error
        self.assertGreaterEqual(np.mean(scores <= 3.0), 0.9)
        self.assertLess(scores.max(), 6.0)


class SnapshotTests(SimpleTestCase):
    """Test ensemble checkpoints"""

    def test_round_trip_and_field_order(self):
        ens = init_ensemble(SirModel(), 3, 4, RngStream(8))
        with tempfile.TemporaryDirectory() as tmp:
            path = save_snapshot(ens, Path(tmp) / 'nested' / 'ens.json')
            self.assertEqual(tuple(json.loads(path.read_text())), SNAPSHOT_FIELDS)
            loaded = load_snapshot(path)
        np.testing.assert_array_equal(loaded.params, ens.params)
        np.testing.assert_array_equal(loaded.states, ens.states)
        self.assertEqual(loaded.t, ens.t)

    def test_missing_fields(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'bad.json'
            path.write_text(json.dumps({'t': 0}))
            with self.assertRaises(InvalidArgumentError):
                load_snapshot(path)
