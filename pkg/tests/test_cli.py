import csv
import io
import json
import math

import pytest

from config import Config
from database.db import ResultsDatabase
from handlers.errors import error_handler
from main import build_parser, run
from utils.exceptions import (ChecksumMismatch, ConfigError, InvalidParameter, NumericError, QuadratureFailure,
                              ValidationError)
from utils.helpers import manifest_path

# problema minuscolo: 3 classi 1x4x4, MLP con 8 neuroni nascosti
TINY = {
    'data': {'n_train': 60, 'n_test': 30, 'classes': 3, 'input_shape': [1, 4, 4], 'difficulty': 0.3, 'seed': 7},
    'model': {'arch': 'mlp', 'hidden': [8]},
    'train': {'epochs': 1, 'batch_size': 20},
    'table': {'n_grid': 20},
}


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / 'tiny.json'
    path.write_text(json.dumps(TINY), encoding='utf-8')
    return str(path)


class TestParser:
    def test_every_command_is_registered(self):
        _, handlers = build_parser()
        assert set(handlers) == {'density', 'sample', 'table-build', 'table-inspect', 'train', 'grid', 'prune',
                                 'geometry', 'kde', 'delta-sweep', 'ablation', 'toy'}

    def test_flags_map_to_config_keys(self):
        parser, _ = build_parser()
        args = parser.parse_args(['train', '--alpha', '1.2', '--c', '0.5', '--out', 'x.csv'])
        assert vars(args)['prior.alpha'] == 1.2
        assert vars(args)['train.prior_scale_c'] == 0.5
        assert vars(args)['output.out'] == 'x.csv'


class TestDensityAndSample:
    def test_density_to_stdout(self, capsys):
        assert run(['density', '--alpha', '1', '--gamma', '1', '--lo', '-5', '--hi', '5', '--points', '11']) == 0
        rows = _rows(capsys.readouterr().out)
        assert rows[0] == ['theta', 'density']
        assert len(rows) == 12
        theta, value = map(float, rows[6])
        assert theta == 0.0
        assert value == pytest.approx(1.0 / math.pi, rel=1e-12)
        # simmetria della curva
        assert float(rows[1][1]) == pytest.approx(float(rows[11][1]), rel=1e-12)

    def test_invalid_arguments_exit_one(self, capsys):
        assert run(['density', '--points', '0']) == 1
        assert run(['density', '--alpha', '2.5']) == 1
        assert run(['density', '--lo', '3', '--hi', '1']) == 1
        assert capsys.readouterr().out == ''

    def test_sample_is_byte_identical(self, tmp_path):
        first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
        assert run(['sample', '--alpha', '1.5', '--n', '50', '--seed', '3', '--out', str(first)]) == 0
        assert run(['sample', '--alpha', '1.5', '--n', '50', '--seed', '3', '--out', str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()
        assert len(_rows(first.read_text())) == 51

    def test_manifest_is_written_next_to_the_output(self, tmp_path):
        out = tmp_path / 'runs' / 'sample.csv'
        assert run(['sample', '--n', '5', '--seed', '11', '--out', str(out)]) == 0
        manifest = json.loads(manifest_path(out).read_text())
        assert manifest['command'] == 'sample'
        assert manifest['seed'] == 11
        assert manifest['config']['prior']['alpha'] == 1.5
        assert manifest['table_checksum'] is None


class TestTables:
    def test_build_then_inspect(self, tmp_path):
        table_path = tmp_path / 'cauchy.sdrt'
        build_out = tmp_path / 'build.csv'
        assert run(['table-build', '--alpha', '1', '--n-grid', '10', '--table-out', str(table_path),
                    '--out', str(build_out)]) == 0
        fields = dict(_rows(build_out.read_text())[1:])
        assert fields['path'] == str(table_path)
        assert int(fields['n_grid']) == 10

        inspect_out = tmp_path / 'inspect.csv'
        assert run(['table-inspect', str(table_path), '--out', str(inspect_out)]) == 0
        rows = _rows(inspect_out.read_text())
        assert rows[0] == ['key', 'theta', 'value']
        assert len(rows) == 22
        assert rows[11][0] == '0' and float(rows[11][2]) == 0.0
        assert json.loads(manifest_path(inspect_out).read_text())['table_checksum'] == fields['checksum']

    def test_rebuild_is_identical(self, tmp_path):
        a, b = tmp_path / 'a.sdrt', tmp_path / 'b.sdrt'
        for path in (a, b):
            assert run(['table-build', '--alpha', '1.5', '--n-grid', '8', '--table-out', str(path),
                        '--out', str(tmp_path / 'log.csv')]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_delta_flag_sets_the_grid(self, tmp_path):
        out = tmp_path / 'build.csv'
        assert run(['table-build', '--alpha', '1', '--delta', '0.1', '--table-out', str(tmp_path / 't.sdrt'),
                    '--out', str(out)]) == 0
        fields = dict(_rows(out.read_text())[1:])
        assert int(fields['n_grid']) == 8

    def test_corrupted_table_exits_two(self, tmp_path):
        path = tmp_path / 't.sdrt'
        assert run(['table-build', '--alpha', '1', '--n-grid', '6', '--table-out', str(path),
                    '--out', str(tmp_path / 'b.csv')]) == 0
        blob = bytearray(path.read_bytes())
        blob[60] ^= 0xFF
        path.write_bytes(bytes(blob))
        assert run(['table-inspect', str(path), '--out', str(tmp_path / 'i.csv')]) == 2
        assert not (tmp_path / 'i.csv').exists()


class TestConfigFile:
    def test_unknown_key_exits_one(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text(json.dumps({'prior': {'alpah': 1.0}}), encoding='utf-8')
        assert run(['density', '--config', str(path)]) == 1

    def test_malformed_json_exits_one(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text('{"prior": ', encoding='utf-8')
        assert run(['sample', '--config', str(path)]) == 1

    def test_flags_override_the_file(self, tmp_path, tiny_config):
        out = tmp_path / 'train.csv'
        assert run(['train', '--config', tiny_config, '--epochs', '2', '--prior', 'none', '--out', str(out)]) == 0
        manifest = json.loads(manifest_path(out).read_text())
        assert manifest['config']['train']['epochs'] == 2
        assert manifest['config']['data']['classes'] == 3
        assert len(_rows(out.read_text())) == 3


class TestTraining:
    def test_train_is_reproducible(self, tmp_path, tiny_config):
        outs = [tmp_path / 'a.csv', tmp_path / 'b.csv']
        for out in outs:
            assert run(['train', '--config', tiny_config, '--alpha', '1', '--c', '0.01', '--seed', '4',
                        '--out', str(out)]) == 0
        assert outs[0].read_bytes() == outs[1].read_bytes()
        assert json.loads(manifest_path(outs[0]).read_text())['table_checksum'] is not None

    def test_zero_scale_matches_no_prior(self, tmp_path, tiny_config):
        with_table, without = tmp_path / 'c0.csv', tmp_path / 'none.csv'
        assert run(['train', '--config', tiny_config, '--alpha', '1', '--c', '0', '--out', str(with_table)]) == 0
        assert run(['train', '--config', tiny_config, '--prior', 'none', '--out', str(without)]) == 0
        assert with_table.read_bytes() == without.read_bytes()

    def test_saved_checkpoint_feeds_the_analyses(self, tmp_path, tiny_config):
        checkpoint = tmp_path / 'model.sdck'
        assert run(['train', '--config', tiny_config, '--prior', 'laplace', '--c', '0.01',
                    '--save', str(checkpoint), '--out', str(tmp_path / 'train.csv')]) == 0
        assert checkpoint.exists()

        prune_out = tmp_path / 'prune.csv'
        assert run(['prune', '--config', tiny_config, '--checkpoint', str(checkpoint), '--out', str(prune_out)]) == 0
        curve = _rows(prune_out.read_text())[1:]
        assert [float(f) for f, _ in curve] == [0.0, 0.25, 0.5, 0.75, 0.9]

        kde_out = tmp_path / 'kde.csv'
        assert run(['kde', '--checkpoint', str(checkpoint), '--out', str(kde_out)]) == 0
        assert _rows(kde_out.read_text())[0] == ['weight', 'density']

    def test_analysis_without_checkpoint_exits_one(self, tiny_config):
        assert run(['prune', '--config', tiny_config]) == 1


class TestExperiments:
    def test_grid(self, tmp_path):
        config = dict(TINY, grid={'alphas': [2.0, 1.0], 'gammas': [1.0], 'cs': [0.0, 0.01], 'seeds': [0],
                                  'gaussian': False, 'laplace': True})
        path = tmp_path / 'grid.json'
        path.write_text(json.dumps(config), encoding='utf-8')
        out = tmp_path / 'grid.csv'
        assert run(['grid', '--config', str(path), '--out', str(out)]) == 0
        rows = _rows(out.read_text())
        header, body = rows[0], rows[1:]
        assert header[:5] == ['prior', 'alpha', 'gamma', 'c', 'seed']
        assert len(body) == 6
        assert [r[0] for r in body] == ['sas'] * 4 + ['laplace'] * 2
        assert all(r[-1] == 'ok' for r in body)

        checksums = json.loads(manifest_path(out).read_text())['table_checksums']
        assert set(checksums) == {'alpha=2,gamma=1', 'alpha=1,gamma=1'}
        build_out = tmp_path / 'build.csv'
        assert run(['table-build', '--config', str(path), '--alpha', '1', '--table-out', str(tmp_path / 'c.sdrt'),
                    '--out', str(build_out)]) == 0
        assert checksums['alpha=1,gamma=1'] == dict(_rows(build_out.read_text())[1:])['checksum']

    def test_delta_sweep_and_ablation(self, tmp_path):
        config = dict(TINY, grid={'n_grids': [4, 8], 'seeds': [0], 'batch_sizes': [20]})
        config['train'] = dict(TINY['train'], prior_scale_c=0.01)
        path = tmp_path / 'exp.json'
        path.write_text(json.dumps(config), encoding='utf-8')

        sweep_out = tmp_path / 'sweep.csv'
        assert run(['delta-sweep', '--config', str(path), '--out', str(sweep_out)]) == 0
        sweep = _rows(sweep_out.read_text())
        assert sweep[0][:3] == ['n_grid', 'delta', 'seed']
        assert [int(r[0]) for r in sweep[1:]] == [4, 8]
        sweep_manifest = json.loads(manifest_path(sweep_out).read_text())
        assert set(sweep_manifest['table_checksums']) == {'n_grid=4', 'n_grid=8'}
        assert sweep_manifest['table_checksum'] is not None

        ablation_out = tmp_path / 'ablation.csv'
        assert run(['ablation', '--config', str(path), '--out', str(ablation_out)]) == 0
        rows = _rows(ablation_out.read_text())[1:]
        assert len(rows) == 8
        assert json.loads(manifest_path(ablation_out).read_text())['table_checksum']

    def test_geometry_gaussian_circle(self, tmp_path):
        out = tmp_path / 'contour.csv'
        assert run(['geometry', '--alpha', '2', '--out', str(out)]) == 0
        rows = _rows(out.read_text())[1:]
        assert len(rows) == 65
        radii = [math.hypot(float(t1), float(t2)) for _, t1, t2 in rows]
        assert max(abs(r - 1.0) for r in radii) < 0.005

    def test_geometry_honours_a_zero_level(self, tmp_path):
        out = tmp_path / 'contour.csv'
        assert run(['geometry', '--alpha', '2', '--gamma', '0.1', '--kappa', '0', '--out', str(out)]) == 0
        assert json.loads(manifest_path(out).read_text())['config']['analysis']['kappa'] == 0.0
        # ln h(t) = ln h(0) - t^2 / (4 gamma^2): il livello 0 ha raggio sqrt(8 gamma^2 ln h(0))
        log_peak = -math.log(2.0 * 0.1 * math.sqrt(math.pi))
        expected = math.sqrt(8.0 * 0.01 * log_peak)
        radii = [math.hypot(float(t1), float(t2)) for _, t1, t2 in _rows(out.read_text())[1:]]
        assert max(abs(r - expected) for r in radii) < 0.005 * expected

    def test_toy(self, tmp_path):
        path = tmp_path / 'toy.json'
        path.write_text(json.dumps({'grid': {'alphas': [2.0, 1.0]}, 'analysis': {'resolution': 16}}),
                        encoding='utf-8')
        out = tmp_path / 'toy.csv'
        assert run(['toy', '--config', str(path), '--out', str(out)]) == 0
        rows = _rows(out.read_text())
        assert rows[0] == ['alpha', 'theta1', 'theta2']
        assert [float(r[0]) for r in rows[1:]] == [2.0, 1.0]


class TestResultsDatabase:
    def test_runs_are_recorded(self, tmp_path, monkeypatch):
        db_path = tmp_path / 'runs.db'
        monkeypatch.setattr(Config, 'RESULTS_DB', str(db_path))
        out = tmp_path / 'sample.csv'
        assert run(['sample', '--n', '4', '--seed', '2', '--out', str(out)]) == 0
        runs = ResultsDatabase(str(db_path)).get_recent_runs()
        assert len(runs) == 1
        assert runs[0]['command'] == 'sample'
        assert runs[0]['seed'] == 2
        assert runs[0]['output'] == str(out)

    def test_failed_run_is_not_recorded(self, tmp_path, monkeypatch):
        db_path = tmp_path / 'runs.db'
        monkeypatch.setattr(Config, 'RESULTS_DB', str(db_path))
        assert run(['sample', '--n', '0']) == 1
        assert not db_path.exists()


class TestErrorHandler:
    @pytest.mark.parametrize('exc, code', [
        (InvalidParameter("alpha"), 1),
        (ConfigError('prior.alpha', "fuori range"), 1),
        (QuadratureFailure("troppi pannelli"), 2),
        (ChecksumMismatch("crc"), 2),
        (RuntimeError("inatteso"), 2),
    ])
    def test_exit_codes(self, exc, code):
        assert error_handler(exc) == code

    def test_numeric_branch(self):
        assert issubclass(QuadratureFailure, NumericError)
        assert issubclass(NumericError, ArithmeticError)
        assert not issubclass(NumericError, ValidationError)
