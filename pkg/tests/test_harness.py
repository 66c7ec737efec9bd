import json

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from cli import main
from constants.constants import EXIT_ESTIMATION_ERROR, EXIT_INPUT_ERROR, EXIT_OK
from exceptions import (
    ConfigError,
    DimensionError,
    DomainError,
    InsufficientDataError,
    NoOracleError,
    ParseError,
)
from models import CoverageAggregates, ExperimentConfig, load_report, write_report
from models.reports import records_path
from services.dataset_loader import load_dataset, save_dataset
from services.experiment_service import ExperimentService
from services.validators import DataValidator


def _config(**overrides) -> ExperimentConfig:
    payload = {'model': {'kind': 'toy'}, 'theta_star': [0.0], 'n': 200, 'm': 500, 'replications': 4, 'seed': 99}
    payload.update(overrides)
    return ExperimentConfig.model_validate(payload)


def _write_config(tmp_path, config: ExperimentConfig, name='config.json'):
    path = tmp_path / name
    path.write_text(config.model_dump_json())
    return str(path)


def _strip_timing(records):
    return [r.model_dump(exclude={'seconds'}) for r in records]


# =============================================================================
# DATASET LOADER
# =============================================================================

def test_load_toy_dataset(mocks_dir, toy):
    data = load_dataset(mocks_dir / 'toy_ybar075.csv', toy)
    assert data.n == 40
    assert data.responses.mean() == pytest.approx(0.75)
    assert data.covariates.shape == (40, 0)


def test_load_autologistic_dataset(mocks_dir, lattice):
    data = load_dataset(mocks_dir / 'autologistic_2x2.csv', lattice)
    assert data.n == 8
    assert data.responses.shape == (8, 4)
    assert_allclose(data.covariates[:2, 0], [0.5, 1.0])


def test_empty_file(mocks_dir):
    with pytest.raises(ParseError) as info:
        load_dataset(mocks_dir / 'empty.csv')
    assert info.value.line == 1


def test_ragged_row_reports_its_line(mocks_dir):
    with pytest.raises(ParseError) as info:
        load_dataset(mocks_dir / 'ragged.csv')
    assert info.value.line == 3
    assert 'line 3' in str(info.value)


@pytest.mark.parametrize('content,line', [
    ('z\n1\n', 1),
    ('x1\n0.5\n', 1),
    ('y\n1\nabc\n', 3),
    ('y\n0.5\n', 2),
    ('y,x1\n1,0.5\n0,oops\n', 3),
])
def test_parse_errors(tmp_path, content, line):
    path = tmp_path / 'data.csv'
    path.write_text(content)
    with pytest.raises(ParseError) as info:
        load_dataset(path)
    assert info.value.line == line


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_dataset(tmp_path / 'nope.csv')


def test_header_only(tmp_path):
    path = tmp_path / 'data.csv'
    path.write_text('y\n')
    with pytest.raises(InsufficientDataError):
        load_dataset(path)


def test_blank_lines_are_skipped(tmp_path):
    path = tmp_path / 'data.csv'
    path.write_text('y\n1\n\n0\n')
    assert load_dataset(path).responses.ravel().tolist() == [1, 0]


def test_domain_checked_against_model(tmp_path, toy):
    path = tmp_path / 'data.csv'
    path.write_text('y\n1\n2\n')
    with pytest.raises(DomainError):
        load_dataset(path, toy)


def test_save_then_load(tmp_path, lattice, lattice_data):
    path = save_dataset(lattice_data, tmp_path / 'lattice.csv')
    assert path.read_text().splitlines()[0] == 'y1,y2,y3,y4,x1'
    data = load_dataset(path, lattice)
    assert np.array_equal(data.responses, lattice_data.responses)
    assert_allclose(data.covariates, lattice_data.covariates)


# =============================================================================
# VALIDATION AND CONFIG
# =============================================================================

def test_validate_seed():
    assert DataValidator.validate_seed(2 ** 64 - 1) == 2 ** 64 - 1
    for bad in (-1, 2 ** 64, 'seven'):
        with pytest.raises(ConfigError):
            DataValidator.validate_seed(bad)


def test_validate_covariate_law(toy, lattice):
    assert DataValidator.validate_covariate_law(None, toy).shape == (1, 0)
    assert_allclose(DataValidator.validate_covariate_law(None, lattice), [[1.0]])
    with pytest.raises(InsufficientDataError):
        DataValidator.validate_covariate_law([], lattice)
    with pytest.raises(DimensionError):
        DataValidator.validate_covariate_law([[1.0], [1.0, 2.0]], lattice)


def test_validate_sizes():
    DataValidator.validate_sizes(n=3, m=1)
    with pytest.raises(ConfigError):
        DataValidator.validate_sizes(m=0)


@pytest.mark.parametrize('overrides', [
    {'theta_star': [0.0, 1.0]},
    {'seed': -1},
    {'level': 1.0},
    {'replications': 0},
    {'n_grid': []},
    {'psi_grid': [[0.0], [1.0, 2.0]]},
    {'model': {'kind': 'autologistic'}},
    {'unknown_key': 1},
])
def test_invalid_configs(overrides):
    with pytest.raises(ValidationError):
        _config(**overrides)


def test_config_defaults_and_instrumental():
    config = ExperimentConfig.model_validate({'model': {'kind': 'autologistic', 'rows': 2, 'cols': 2}})
    assert config.theta_star is None
    instr = config.to_instrumental()
    assert_allclose(instr.psi, [0.0, 0.0])
    assert config.to_instrumental([0.1, 0.2]).kind == 'model_at'
    assert config.to_fit_options().grad_tol == pytest.approx(1e-8)


def test_config_from_file(mocks_dir, tmp_path):
    config = ExperimentConfig.from_file(mocks_dir / 'coverage_autologistic.json')
    assert config.to_model().param_dim == 2
    assert config.covariates == [[0.5], [1.0], [1.5]]
    with pytest.raises(ParseError):
        ExperimentConfig.from_file(tmp_path / 'missing.json')


# =============================================================================
# EXPERIMENTS
# =============================================================================

def test_single_coverage_replication():
    report = ExperimentService(_config(replications=1)).run_coverage()
    assert len(report.records) == 1
    record = report.records[0]
    assert record.status == 'ok'
    assert record.seconds is None
    assert report.aggregates.completed == 1
    assert report.aggregates.coverage[0] in (0.0, 1.0)


def test_coverage_is_deterministic_across_workers_and_R():
    serial = ExperimentService(_config(replications=6, workers=1)).run_coverage()
    threaded = ExperimentService(_config(replications=6, workers=3)).run_coverage()
    assert _strip_timing(serial.records) == _strip_timing(threaded.records)
    assert serial.aggregates == threaded.aggregates

    shorter = ExperimentService(_config(replications=3)).run_coverage()
    assert _strip_timing(shorter.records) == _strip_timing(serial.records[:3])


def test_coverage_aggregates_recomputable():
    report = ExperimentService(_config(replications=5)).run_coverage()
    assert CoverageAggregates.from_records(report.records, 1) == report.aggregates


def test_coverage_needs_theta_star_and_two_observations():
    with pytest.raises(ConfigError):
        ExperimentService(_config(theta_star=None)).run_coverage()
    with pytest.raises(InsufficientDataError):
        ExperimentService(_config(n=1)).run_coverage()


def test_coverage_records_timing_when_asked():
    report = ExperimentService(_config(replications=2, record_timing=True)).run_coverage()
    assert all(r.seconds is not None and r.seconds >= 0 for r in report.records)
    assert report.aggregates.mean_seconds is not None


def test_lattice_coverage_with_covariates(mocks_dir):
    config = ExperimentConfig.from_file(mocks_dir / 'coverage_autologistic.json')
    config = config.model_copy(update={'replications': 2, 'm': 2000})
    report = ExperimentService(config).run_coverage()
    assert report.aggregates.completed == 2
    assert all(len(r.theta_hat) == 2 for r in report.records)


def test_psi_sweep_single_point():
    report = ExperimentService(_config(psi_grid=[[0.0]], replications=5, m=400)).run_psi_sweep()
    assert len(report.points) == 1
    assert report.argmin_index == 0
    point = report.points[0]
    assert point.completed == 5
    assert_allclose(point.theory_variance, [4 / 400])
    assert len(report.records) == 5


def test_psi_sweep_restrictions():
    config = ExperimentConfig.model_validate({
        'model': {'kind': 'autologistic', 'rows': 2, 'cols': 2},
        'theta_star': [0.3, 0.2],
        'covariates': [[0.5], [1.0]],
        'psi_grid': [[0.0, 0.0]],
        'replications': 1, 'm': 50,
    })
    with pytest.raises(ConfigError):
        ExperimentService(config).run_psi_sweep()
    big = ExperimentConfig.model_validate({
        'model': {'kind': 'autologistic', 'rows': 5, 'cols': 5},
        'theta_star': [0.1, 0.1], 'replications': 1, 'm': 50,
    })
    with pytest.raises(NoOracleError):
        ExperimentService(big).run_psi_sweep()


def test_compare_schemes_coincide_for_one_observation():
    config = _config(theta_star=[1.0], instrumental={'kind': 'uniform'}, n_grid=[1], replications=3, m=300)
    report = ExperimentService(config).run_compare_schemes()
    for record in report.records:
        assert record.status == 'ok'
        assert record.mcml_error == pytest.approx(record.cappe_error, abs=1e-10)
    assert report.points[0].theory_log_weight_variance == pytest.approx(0.25)


def test_compare_schemes_zero_spread_when_h_is_the_model():
    config = _config(theta_star=[0.5], instrumental={'kind': 'model_at', 'psi': [0.5]},
                     n_grid=[1, 3], replications=2, m=200)
    report = ExperimentService(config).run_compare_schemes()
    for record in report.records:
        assert record.log_weight_variance == pytest.approx(0.0, abs=1e-20)
        assert record.cappe_error == pytest.approx(0.0, abs=1e-10)
        assert record.mean_log_norming_error == pytest.approx(0.0, abs=1e-10)
    assert report.slope == pytest.approx(0.0, abs=1e-20)
    assert [p.theory_log_weight_variance for p in report.points] == pytest.approx([0.0, 0.0], abs=1e-12)


def test_compare_schemes_records_the_log_norming_error():
    config = _config(theta_star=[0.8], instrumental={'kind': 'uniform'}, n_grid=[1, 4], replications=3, m=250)
    report = ExperimentService(config).run_compare_schemes()
    for record in report.records:
        assert record.mean_log_norming_error != 0.0
        assert record.mcml_error == pytest.approx(-record.n * record.mean_log_norming_error, rel=1e-9, abs=1e-12)


# =============================================================================
# REPORTS
# =============================================================================

def test_report_round_trip(tmp_path):
    report = ExperimentService(_config(replications=3)).run_coverage()
    path = write_report(report, tmp_path / 'coverage.json')
    assert load_report(path).model_dump() == report.model_dump()
    csv_lines = records_path(path).read_text().splitlines()
    assert len(csv_lines) == 4
    assert 'theta_hat_0' in csv_lines[0]


def test_load_report_errors(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{"kind": "nonsense"}')
    with pytest.raises(ParseError):
        load_report(path)
    path.write_text('not json')
    with pytest.raises(ParseError):
        load_report(path)


# =============================================================================
# CLI
# =============================================================================

def test_cli_fit_toy(mocks_dir, tmp_path, capsys):
    out = tmp_path / 'fit.json'
    code = main(['fit', '--data', str(mocks_dir / 'toy_ybar075.csv'), '--model', 'toy', '--psi', '0',
                 '--m', '1000000', '--seed', '7', '--out', str(out)])
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report['kind'] == 'fit'
    assert abs(report['theta_hat'][0] - np.log(3.0)) < 0.01
    assert report['ci_lower'][0] < report['theta_hat'][0] < report['ci_upper'][0]
    assert report['converged']
    assert load_report(out).theta_hat == report['theta_hat']
    assert not records_path(out).exists()


def test_cli_fit_lattice_uniform(mocks_dir, capsys):
    code = main(['fit', '--data', str(mocks_dir / 'autologistic_2x2.csv'), '--model', 'autologistic',
                 '--rows', '2', '--cols', '2', '--uniform', '--m', '20000'])
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report['instrumental'] == 'uniform'
    assert len(report['theta_hat']) == 2


def test_cli_empty_file_exits_2(mocks_dir, capsys):
    code = main(['fit', '--data', str(mocks_dir / 'empty.csv'), '--model', 'toy'])
    assert code == EXIT_INPUT_ERROR
    assert 'ParseError' in capsys.readouterr().err


def test_cli_degenerate_data_exits_3(mocks_dir, capsys):
    code = main(['fit', '--data', str(mocks_dir / 'toy_all_ones.csv'), '--model', 'toy', '--m', '1000'])
    assert code == EXIT_ESTIMATION_ERROR
    assert 'DegenerateDataError' in capsys.readouterr().err


def test_cli_coverage_needs_config(capsys):
    assert main(['coverage']) == EXIT_INPUT_ERROR
    assert 'ConfigError' in capsys.readouterr().err


def test_cli_bad_config_exits_2(tmp_path, capsys):
    path = tmp_path / 'config.json'
    path.write_text('{"model": {"kind": "toy"}, "seed": -5}')
    assert main(['coverage', '--config', str(path)]) == EXIT_INPUT_ERROR


def test_cli_finite_model_without_states_exits_2(tmp_path, capsys):
    path = tmp_path / 'config.json'
    path.write_text('{"model": {"kind": "finite"}, "theta_star": [0.0]}')
    assert main(['coverage', '--config', str(path)]) == EXIT_INPUT_ERROR
    assert 'states' in capsys.readouterr().err


def test_cli_coverage_with_overrides(tmp_path, capsys):
    config = _write_config(tmp_path, _config(replications=2))
    out = tmp_path / 'coverage.json'
    assert main(['coverage', '--config', config, '--seed', '5', '--workers', '2', '--out', str(out)]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report['config']['seed'] == 5
    assert report['config']['workers'] == 2
    assert len(report['records']) == 2
    assert records_path(out).exists()


def test_cli_psi_sweep_grid_from_flags(tmp_path, capsys):
    config = _write_config(tmp_path, _config(replications=2, m=200))
    code = main(['psi-sweep', '--config', config, '--psi=-1', '--psi=0', '--psi=1'])
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert [p['psi'] for p in report['points']] == [[-1.0], [0.0], [1.0]]


def test_cli_compare_schemes(tmp_path, capsys):
    config = _write_config(tmp_path, _config(theta_star=[1.0], instrumental={'kind': 'uniform'},
                                             replications=2, m=200))
    assert main(['compare-schemes', '--config', config, '--n-grid', '1,2']) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert [p['n'] for p in report['points']] == [1, 2]
