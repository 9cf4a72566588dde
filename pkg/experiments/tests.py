"""
Experiments: configuration, the sequential harness, records, metrics,
aggregation and the management commands
"""

import json
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag

from experiments.aggregate import aggregate
from experiments.config import ExperimentConfig, load_config, load_config_file, parse_seeds
from experiments.harness import load_static_policy, run_sequential, save_static_designs
from experiments.metrics import bootstrap_bca_ci, delta_teig
from experiments.records import RunRecord, StepRecord, read_record
from ssm.exceptions import ExperimentFailure, InvalidArgumentError
from ssm.rng import RngStream
from testbeds.lingauss import LinearGaussianModel, LinGaussConfig


def _config(**changes):
    data = {
        'name': 'lg-test',
        'model': {'kind': 'lingauss'},
        'policy': 'badpods',
        'horizon': 4,
        'M': 8,
        'N': 8,
        'batch': 16,
        'K': 3,
        'eval_batch': 64,
        'jitter_scale': 0.1,
        'seeds': [0, 1],
    }
    data.update(changes)
    return load_config(data)


def _record(policy, seed, eigs, config_hash='h', states=None, pointing=None, designs=None):
    steps = []
    teig = 0.0
    for i, eig in enumerate(eigs):
        teig += eig
        steps.append(StepRecord(
            t=i + 1,
            design=np.array(designs[i] if designs is not None else [0.5, 0.5]),
            observation=np.array([1.0]),
            true_state=np.array(states[i] if states is not None else [float(i)]),
            eig=float(eig),
            teig=teig,
            param_mean=np.array([0.0]),
            param_var=np.array([1.0]),
            param_ess=1.0,
            param_rmse=0.0,
            state_rmse=0.0,
            log_evidence=0.0,
            pointing_error=None if pointing is None else np.array(pointing[i]),
        ))
    return RunRecord(
        name='synthetic', model='lingauss', policy=policy, seed=seed, config_hash=config_hash,
        horizon=len(eigs), M=1, N=1, eval_batch=1, K=1, batch=1, steps=steps,
    )


class _DesignFreeModel(LinearGaussianModel):
    """Observation ignores both the design and theta"""

    def __init__(self):
        super().__init__(LinGaussConfig(coupling=0.0, q=0.01, state_var=0.01))

    def log_observation(self, y, x, theta, xi):
        return super().log_observation(y, x, theta, [1.0])

    def sample_observation(self, x, theta, xi, gen):
        return super().sample_observation(x, theta, [1.0], gen)

    def grad_xi_log_observation(self, y, x, theta, xi):
        return np.zeros(np.broadcast_shapes(np.shape(y), np.shape(x)))


class _OutlierModel(LinearGaussianModel):
    """Emits an impossible ground-truth observation on its third call"""

    def __init__(self):
        super().__init__()
        self.truth_calls = 0

    def sample_observation(self, x, theta, xi, gen):
        if np.ndim(x) == 1:
            self.truth_calls += 1
            if self.truth_calls == 3:
                return np.array([1e6])
        return super().sample_observation(x, theta, xi, gen)


class ExperimentConfigTests(SimpleTestCase):
    """Test the YAML schema and the bundled presets"""

    def test_seed_formats(self):
        self.assertEqual(parse_seeds('0-3'), [0, 1, 2, 3])
        self.assertEqual(parse_seeds('1,4,6-7'), [1, 4, 6, 7])
        self.assertEqual(parse_seeds(5), [5])
        self.assertEqual(_config(seeds='2-4').seeds, [2, 3, 4])

    def test_round_trip(self):
        config = _config(optimizer={'alpha': 0.01, 'schedule': 'exponential'}, checkpoints=[2, 4])
        self.assertEqual(ExperimentConfig.from_yaml(config.to_yaml()), config)

    def test_zero_budget_names_the_field(self):
        with self.assertRaises(InvalidArgumentError) as ctx:
            _config(M=0)
        self.assertIn('M:', str(ctx.exception))

    def test_invalid_configs(self):
        for changes in ({'seeds': []}, {'batch': 65}, {'eval_batch': 100}, {'checkpoints': [5]},
                        {'policy': 'static'}, {'unknown': 1}, {'model': {'kind': 'nope'}}):
            with self.subTest(changes=changes):
                with self.assertRaises(InvalidArgumentError):
                    _config(**changes)

    def test_budget_defaults(self):
        config = _config(batch=None, eval_batch=None)
        self.assertEqual(config.outer_batch, 64)
        self.assertEqual(config.evaluation_batch, 64)
        self.assertEqual(config.search_budget.K, 3)

    def test_config_hash(self):
        base = _config()
        self.assertEqual(base.config_hash(), _config(policy='random', seeds=[7], K=9).config_hash())
        self.assertNotEqual(base.config_hash(), _config(M=9).config_hash())
        self.assertNotEqual(base.config_hash(), _config(eval_batch=32).config_hash())

    def test_presets_parse(self):
        names = sorted(p.stem for p in Path(settings.PRESETS_DIR).glob('*.yaml'))
        self.assertEqual(names, ['lingauss-desk', 'sir-desk', 'sir-paper', 'source-desk', 'source-paper'])
        for name in names:
            config = load_config_file(Path(settings.PRESETS_DIR) / f"{name}.yaml")
            self.assertEqual(config.name, name)

    def test_full_scale_presets_hold_reference_settings(self):
        sir = load_config_file(Path(settings.PRESETS_DIR) / 'sir-paper.yaml')
        self.assertEqual((sir.horizon, sir.M, sir.N, sir.K), (200, 100, 100, 500))
        self.assertEqual((sir.optimizer.alpha, sir.optimizer.eps, sir.jitter_scale), (0.03, 1e-6, 2.0))
        self.assertEqual(sir.outer_batch, 10 ** 4)
        self.assertEqual(len(sir.seeds), 50)
        source = load_config_file(Path(settings.PRESETS_DIR) / 'source-paper.yaml')
        self.assertEqual((source.horizon, source.M, source.N, source.K), (50, 300, 300, 300))
        self.assertEqual((source.optimizer.alpha, source.jitter_scale), (0.01, 0.15))


class HarnessTests(SimpleTestCase):
    """Test the sequential run"""

    def test_zero_horizon(self):
        record = run_sequential(_config(horizon=0), 0)
        self.assertEqual(record.length, 0)
        self.assertEqual(record.teig_at(0), 0.0)

    @tag('invariant')
    def test_rerun_is_bit_identical(self):
        a = run_sequential(_config(), 3).to_frame()
        b = run_sequential(_config(), 3).to_frame()
        self.assertEqual(list(a.columns), list(b.columns))
        np.testing.assert_array_equal(a.to_numpy(), b.to_numpy())

    @tag('invariant')
    def test_teig_is_the_sum_of_step_eigs(self):
        record = run_sequential(_config(), 4)
        self.assertEqual(record.length, 4)
        np.testing.assert_allclose(record.teig, np.cumsum(record.eig), rtol=0, atol=1e-12)

    def test_design_free_model_gives_same_teig_for_every_policy(self):
        model = _DesignFreeModel()
        badpods = run_sequential(_config(), 5, model=model)
        random = run_sequential(_config(policy='random'), 5, model=model)
        np.testing.assert_array_equal(badpods.teig, random.teig)
        self.assertEqual(badpods.trajectory_hash(), random.trajectory_hash())
        self.assertLess(abs(badpods.teig_at(4)), 0.05)

    def test_policies_share_the_state_path(self):
        model = LinearGaussianModel()
        fixed = run_sequential(_config(policy='fixed'), 6, model=model)
        random = run_sequential(_config(policy='random'), 6, model=model)
        self.assertEqual(fixed.trajectory_hash(), random.trajectory_hash())
        np.testing.assert_allclose(fixed.designs[:, 0], 1.0)

    def test_failure_carries_partial_record(self):
        with self.assertRaises(ExperimentFailure) as ctx:
            run_sequential(_config(policy='fixed'), 7, model=_OutlierModel())
        record = ctx.exception.record
        self.assertEqual(record.status, 'failed')
        self.assertEqual(record.length, 2)
        self.assertIn('t=3', record.failure)

    def test_static_designs_file(self):
        model = LinearGaussianModel()
        designs = [model.design_from_values([v]) for v in (0.5, -1.0, 2.0, 1.5)]
        with tempfile.TemporaryDirectory() as tmp:
            path = save_static_designs(Path(tmp) / 'static.json', designs, _config())
            policy = load_static_policy(path, model, 4)
            record = run_sequential(_config(policy='static', static_designs=str(path)), 0)
            with self.assertRaises(InvalidArgumentError):
                load_static_policy(path, model, 5)
        np.testing.assert_array_equal(record.designs[:, 0], [0.5, -1.0, 2.0, 1.5])
        self.assertEqual(len(policy.static_designs), 4)

    def test_source_records_pointing_errors(self):
        config = load_config({
            'name': 'src-test', 'model': {'kind': 'source'}, 'policy': 'random',
            'horizon': 2, 'M': 4, 'N': 4, 'K': 1, 'seeds': [0],
        })
        record = run_sequential(config, 0)
        errors = record.pointing_errors(2)
        self.assertEqual(errors.shape, (2,))
        self.assertTrue(np.all((errors >= 0) & (errors <= 180)))
        self.assertIn('pointing_2', record.columns())


class RecordTests(SimpleTestCase):
    """Test the CSV/JSON record files"""

    def test_sir_columns(self):
        config = load_config({
            'name': 'sir-test', 'model': {'kind': 'sir'}, 'policy': 'random',
            'horizon': 2, 'M': 4, 'N': 4, 'K': 1, 'seeds': [0],
        })
        record = run_sequential(config, 0)
        self.assertEqual(record.columns(), [
            't', 'xi_1', 'xi_2', 'y_1', 'y_2', 'x_1', 'x_2', 'x_3', 'x_4', 'eig', 'teig',
            'theta_mean_1', 'theta_mean_2', 'theta_var_1', 'theta_var_2',
            'param_ess', 'param_rmse', 'state_rmse', 'log_evidence',
        ])

    def test_write_and_read_back(self):
        record = run_sequential(_config(), 1)
        with tempfile.TemporaryDirectory() as tmp:
            csv_path, json_path = record.write(tmp)
            first = csv_path.read_bytes()
            loaded = read_record(csv_path)
            record.write(tmp)
            second = csv_path.read_bytes()
            header = json.loads(json_path.read_text())
        self.assertEqual(first, second)
        self.assertEqual(header['trajectory_hash'], record.trajectory_hash())
        self.assertEqual(loaded.stem, record.stem)
        np.testing.assert_array_equal(loaded.teig, record.teig)
        np.testing.assert_array_equal(loaded.designs, record.designs)
        for a, b in zip(loaded.steps, record.steps):
            np.testing.assert_array_equal(a.param_mean, b.param_mean)
            np.testing.assert_array_equal(a.true_state, b.true_state)

    def test_missing_sidecar(self):
        with tempfile.TemporaryDirectory() as tmp:
            csv_path, json_path = _record('random', 0, [0.1]).write(tmp)
            json_path.unlink()
            with self.assertRaises(InvalidArgumentError):
                read_record(csv_path)

    def test_checkpoint_bounds(self):
        record = _record('random', 0, [0.1, 0.2])
        with self.assertRaises(InvalidArgumentError):
            record.teig_at(3)


class DeltaTeigTests(SimpleTestCase):
    """Test TEIG differences between runs"""

    def test_against_itself(self):
        record = _record('badpods', 0, [0.3, 0.1, 0.4])
        for t in range(4):
            self.assertEqual(delta_teig(record, record, t), 0.0)

    def test_constant_gains(self):
        a = _record('badpods', 0, [0.1] * 10)
        b = _record('random', 0, [0.05] * 10)
        self.assertAlmostEqual(delta_teig(a, b, 10), 0.5, places=12)

    def test_mismatched_configs(self):
        with self.assertRaises(InvalidArgumentError):
            delta_teig(_record('badpods', 0, [0.1], 'h1'), _record('random', 0, [0.1], 'h2'), 1)
        with self.assertRaises(InvalidArgumentError):
            delta_teig(_record('badpods', 0, [0.1]), _record('random', 0, [0.1, 0.2]), 1)


class BootstrapTests(SimpleTestCase):
    """Test the BCa interval"""

    def test_identical_samples(self):
        self.assertEqual(bootstrap_bca_ci([2.5] * 10, rng=RngStream(0)), (2.5, 2.5))

    def test_too_few_samples(self):
        with self.assertRaises(InvalidArgumentError):
            bootstrap_bca_ci([1.0], rng=RngStream(0))

    def test_symmetric_samples(self):
        lo, hi = bootstrap_bca_ci(np.tile([-1.0, 1.0], 500), rng=RngStream(1))
        self.assertLess(lo, 0.0)
        self.assertGreater(hi, 0.0)
        self.assertLess(abs(lo + hi), 0.02)

    def test_deterministic(self):
        samples = RngStream(2).generator().exponential(size=40)
        self.assertEqual(bootstrap_bca_ci(samples, rng=RngStream(3)), bootstrap_bca_ci(samples, rng=RngStream(3)))

    def test_skewed_samples_shift_the_interval(self):
        samples = RngStream(4).generator().exponential(size=200)
        lo, hi = bootstrap_bca_ci(samples, rng=RngStream(5))
        mean = samples.mean()
        self.assertLess(lo, mean)
        self.assertGreater(hi, mean)
        self.assertGreater(hi - mean, mean - lo)

    @tag('oracle')
    def test_normal_theory_width(self):
        n = 1000
        half_width = 1.96 / np.sqrt(n)
        for trial in range(20):
            samples = RngStream(100).child(trial).generator().normal(size=n)
            lo, hi = bootstrap_bca_ci(samples, 0.95, 2000, RngStream(200).child(trial))
            with self.subTest(trial=trial):
                self.assertAlmostEqual((hi - lo) / 2.0, half_width, delta=0.2 * half_width)


class AggregateTests(SimpleTestCase):
    """Test multi-seed aggregation"""

    def test_single_seed_gives_degenerate_interval(self):
        report = aggregate([_record('badpods', 0, [0.2, 0.3])], [2])
        row = report.teig_row('badpods', 2)
        self.assertEqual((row['lo'], row['mean'], row['hi']), (0.5, 0.5, 0.5))

    def test_matched_seeds(self):
        records = [_record('badpods', s, [0.2 + 0.01 * s, 0.3]) for s in range(3)]
        records += [_record('random', s, [0.1, 0.1]) for s in range(3)]
        report = aggregate(records, [1, 2])
        self.assertEqual(report.policies, ['badpods', 'random'])
        rows = [r for r in report.delta_teig if r['t'] == 2]
        self.assertEqual(len(rows), 1)
        self.assertEqual(len(rows[0]['per_seed']), 3)
        self.assertAlmostEqual(rows[0]['per_seed'][1], 0.31, places=12)

    @tag('invariant')
    def test_interval_contains_mean(self):
        gen = RngStream(6).generator()
        records = [_record('badpods', s, gen.exponential(size=5)) for s in range(12)]
        report = aggregate(records, [1, 3, 5])
        for row in report.teig:
            self.assertLessEqual(row['lo'], row['mean'])
            self.assertLessEqual(row['mean'], row['hi'])

    def test_interval_is_the_bca_interval(self):
        """Test report bounds are exactly what the BCa routine returns"""
        gen = RngStream(8).generator()
        records = [_record('badpods', s, gen.lognormal(sigma=1.5, size=2)) for s in range(6)]
        report = aggregate(records, [2])
        samples = [r.teig_at(2) for r in records]
        expected = bootstrap_bca_ci(samples, 0.95, 2000, RngStream(0).child('bootstrap').child('teig', 'badpods', 2))
        row = report.teig_row('badpods', 2)
        self.assertEqual((row['lo'], row['hi']), expected)

    def test_rejections(self):
        with self.assertRaises(InvalidArgumentError):
            aggregate([], [1])
        with self.assertRaises(InvalidArgumentError):
            aggregate([_record('badpods', 0, [0.1])], [2])
        with self.assertRaises(InvalidArgumentError):
            aggregate([_record('badpods', 0, [0.1], 'h1'), _record('random', 0, [0.1], 'h2')], [1])
        with self.assertRaises(InvalidArgumentError):
            aggregate([_record('badpods', 0, [0.1], states=[[1.0]]), _record('random', 0, [0.1], states=[[2.0]])], [1])

    def test_pointing_quartiles_and_design_medians(self):
        records = [
            _record('badpods', s, [0.1], pointing=[[10.0 * s, 10.0 * s + 5.0]], designs=[[0.1 * s, 1.0]])
            for s in range(3)
        ]
        report = aggregate(records, [1])
        self.assertEqual(report.pointing[0]['median'], 12.5)
        self.assertEqual(report.pointing[0]['n'], 6)
        self.assertAlmostEqual(report.design_medians[0]['xi_1'], 0.1, places=12)

    def test_write(self):
        records = [_record(p, s, [0.1, 0.2]) for p in ('badpods', 'random') for s in range(2)]
        report = aggregate(records, [2])
        with tempfile.TemporaryDirectory() as tmp:
            names = sorted(p.name for p in report.write(tmp))
            loaded = json.loads((Path(tmp) / 'report.json').read_text())
        self.assertEqual(names, ['delta_teig.csv', 'design_medians.csv', 'report.json', 'teig.csv'])
        self.assertEqual(loaded['checkpoints'], [2])


class CommandTests(SimpleTestCase):
    """Test the management commands end to end on a small config"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.config_path = self.dir / 'lg.yaml'
        self.config_path.write_text(_config(horizon=3, seeds=[0, 1]).to_yaml())

    def tearDown(self):
        self.tmp.cleanup()

    def _call(self, *args, **kwargs):
        out = StringIO()
        call_command(*args, stdout=out, **kwargs)
        return out.getvalue()

    def test_run_writes_one_record_per_seed(self):
        out = self.dir / 'run'
        self._call('run', config=str(self.config_path), out=str(out), jobs=1)
        csvs = sorted(p.name for p in out.glob('*.csv'))
        self.assertEqual(csvs, ['lg-test_badpods_seed0000.csv', 'lg-test_badpods_seed0001.csv'])
        first = (out / csvs[0]).read_bytes()
        self._call('run', config=str(self.config_path), out=str(out), jobs=1)
        self.assertEqual((out / csvs[0]).read_bytes(), first)
        self.assertFalse((out / 'failures.json').exists())

    def test_run_rejects_invalid_config(self):
        bad = self.dir / 'bad.yaml'
        bad.write_text(self.config_path.read_text().replace('M: 8', 'M: 0'))
        with self.assertRaises(CommandError) as ctx:
            self._call('run', config=str(bad), out=str(self.dir / 'bad'))
        self.assertIn('M:', str(ctx.exception))

    def test_static_then_run_then_report(self):
        designs = self.dir / 'static.json'
        self._call('static', config=str(self.config_path), out=str(designs))
        self.assertEqual(len(json.loads(designs.read_text())['designs']), 3)

        out = self.dir / 'runs'
        self._call('run', config=str(self.config_path), out=str(out), policy='static', static_designs=str(designs))
        self._call('run', config=str(self.config_path), out=str(out), policy='random')
        text = self._call('report', str(out / '*.csv'), checkpoints=[1, 3], out=str(self.dir / 'report'))
        report = json.loads((self.dir / 'report' / 'report.json').read_text())
        self.assertEqual(report['policies'], ['static', 'random'])
        self.assertEqual([r['t'] for r in report['delta_teig']], [1, 3])
        self.assertIn('dTEIG', text)

    def test_report_rejects_mixed_configs(self):
        out = self.dir / 'mixed'
        self._call('run', config=str(self.config_path), out=str(out), seeds='0')
        other = self.dir / 'other.yaml'
        other.write_text(_config(horizon=3, eval_batch=32, name='lg-other').to_yaml())
        self._call('run', config=str(other), out=str(out), seeds='0')
        with self.assertRaises(CommandError) as ctx:
            self._call('report', str(out / '*.csv'))
        self.assertIn('lg-other_badpods_seed0000.csv', str(ctx.exception))

    def test_validate_model(self):
        text = self._call('validate_model', model='sir', probes=20)
        self.assertIn('no violations', text)


def _desk_runs(preset, policies, tmp):
    path = Path(settings.PRESETS_DIR) / preset
    config = load_config_file(path)
    records = {}
    for policy in policies:
        changes = {'policy': policy}
        if policy == 'static':
            designs = Path(tmp) / 'static.json'
            call_command('static', config=str(path), out=str(designs), stdout=StringIO())
            changes['static_designs'] = str(designs)
        run_config = config.with_overrides(**changes)
        records[policy] = [run_sequential(run_config, seed) for seed in config.seeds]
    return config, records


@tag('slow')
class DeskScaleOrderingTests(SimpleTestCase):
    """Desk-scale replications of the policy orderings"""

    def test_sir_ordering_and_design_structure(self):
        with tempfile.TemporaryDirectory() as tmp:
            config, records = _desk_runs('sir-desk.yaml', ['badpods', 'random', 'static'], tmp)
        final = config.horizon
        mean = {p: np.mean([r.teig_at(final) for r in runs]) for p, runs in records.items()}
        self.assertGreaterEqual(mean['badpods'], mean['random'])
        self.assertGreaterEqual(mean['badpods'], mean['static'])
        deltas = [delta_teig(a, b, final) for a, b in zip(records['badpods'], records['random'])]
        self.assertGreaterEqual(np.mean(deltas), 0.0)
        last_quarter = np.array([r.designs[-(final // 4):, 0] for r in records['badpods']])
        self.assertGreater(np.median(np.median(last_quarter, axis=0)), 0.5)

    def test_source_ordering_and_pointing(self):
        with tempfile.TemporaryDirectory() as tmp:
            config, records = _desk_runs('source-desk.yaml', ['badpods', 'random', 'static'], tmp)
        final = config.horizon
        mean = {p: np.mean([r.teig_at(final) for r in runs]) for p, runs in records.items()}
        self.assertGreaterEqual(mean['badpods'], mean['random'])
        self.assertGreaterEqual(mean['badpods'], mean['static'])
        pointing = {p: np.median(np.concatenate([r.pointing_errors(final) for r in runs])) for p, runs in records.items()}
        self.assertLess(pointing['badpods'], pointing['random'])
