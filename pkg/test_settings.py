"""
Tests for configuration loading, validation and round-tripping
"""
import json
import os

import pytest

import settings
from dmet import FragmentPartition
from settings import ConfigError, defaults, deep_merge, dump_config, load_config, parse_config

DIMER_INPUT = {'hubbard': {'n_sites': 2, 't': 1.0, 'u': 4.0}}


@pytest.fixture
def fresh_defaults():
    settings._load_defaults.cache_clear()
    yield
    settings._load_defaults.cache_clear()


def test_defaults_file_matches_fallback(fresh_defaults):
    assert defaults() == settings.FALLBACK_DEFAULTS


def test_missing_defaults_file_uses_fallback(monkeypatch, tmp_path, fresh_defaults):
    monkeypatch.setattr(settings, 'CONFIG_PATH', str(tmp_path / 'absent.json'))
    assert defaults() == settings.FALLBACK_DEFAULTS


def test_broken_defaults_file_uses_fallback(monkeypatch, tmp_path, fresh_defaults):
    broken = tmp_path / 'defaults.json'
    broken.write_text('{not json')
    monkeypatch.setattr(settings, 'CONFIG_PATH', str(broken))
    assert defaults() == settings.FALLBACK_DEFAULTS


def test_defaults_are_copies():
    first = defaults()
    first['dmet']['tau'] = 1.0
    assert defaults()['dmet']['tau'] == 1e-5


def test_deep_merge():
    merged = deep_merge({'a': {'b': 1, 'c': 2}, 'd': 3}, {'a': {'b': 5}, 'e': 6})
    assert merged == {'a': {'b': 5, 'c': 2}, 'd': 3, 'e': 6}


def test_minimal_config_uses_defaults(tmp_path):
    cfg = parse_config({'input': DIMER_INPUT, 'method': 'fci'}, str(tmp_path))
    assert cfg.method == 'fci'
    assert cfg.inputs[0].label == 'hubbard2_t1_u4'
    assert cfg.dmet.tau == 1e-5
    assert cfg.dmet.eta == 1e-6
    assert cfg.vqe.epsilon == 1e-5
    assert cfg.csv == os.path.join(str(tmp_path), 'results.csv')
    assert cfg.trace_dir is None
    assert cfg.partition is None


def test_default_method_is_dmet_fci(tmp_path):
    cfg = parse_config({'input': DIMER_INPUT, 'partition': {'fragments': [[0], [1]]}}, str(tmp_path))
    assert cfg.method == 'dmet-fci'
    assert cfg.is_dmet
    assert cfg.solver_kind == 'fci'
    assert cfg.partition == FragmentPartition(((0,), (1,)))


def test_dmet_requires_partition(tmp_path):
    with pytest.raises(ConfigError) as excinfo:
        parse_config({'input': DIMER_INPUT, 'method': 'dmet-esvqe'}, str(tmp_path))
    assert "partition: required for DMET methods" in excinfo.value.errors


def test_errors_are_collected(tmp_path):
    data = {
        'input': DIMER_INPUT,
        'method': 'rhf',
        'dmet': {'foo': 1},
        'scf': {'max_iter': 'many'},
        'extra': True,
    }
    with pytest.raises(ConfigError) as excinfo:
        parse_config(data, str(tmp_path))
    errors = excinfo.value.errors
    assert "dmet.foo: unknown field" in errors
    assert "scf.max_iter: expected int, got str" in errors
    assert "extra: unknown field" in errors


def test_value_range_errors(tmp_path):
    with pytest.raises(ConfigError, match="eta"):
        parse_config({'input': DIMER_INPUT, 'method': 'rhf', 'dmet': {'eta': 2.0}}, str(tmp_path))


def test_fit_iterations_must_be_positive(tmp_path):
    with pytest.raises(ConfigError, match="dmet: fit_max_iter must be at least 1"):
        parse_config({'input': DIMER_INPUT, 'method': 'rhf',
                      'dmet': {'mode': 'correlation_fitting', 'fit_max_iter': 0}}, str(tmp_path))


def test_unknown_method(tmp_path):
    with pytest.raises(ConfigError, match="method"):
        parse_config({'input': DIMER_INPUT, 'method': 'ccsd'}, str(tmp_path))


def test_input_and_inputs_are_exclusive(tmp_path):
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config({'input': DIMER_INPUT, 'inputs': [DIMER_INPUT], 'method': 'rhf'}, str(tmp_path))
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config({'method': 'rhf'}, str(tmp_path))


def test_incomplete_hubbard(tmp_path):
    with pytest.raises(ConfigError) as excinfo:
        parse_config({'input': {'hubbard': {'n_sites': 2}}, 'method': 'rhf'}, str(tmp_path))
    assert "input.hubbard.t: required" in excinfo.value.errors
    assert "input.hubbard.u: required" in excinfo.value.errors


def test_integer_accepted_for_float_fields(tmp_path):
    cfg = parse_config({'input': {'hubbard': {'n_sites': 2, 't': 1, 'u': 4}}, 'method': 'rhf',
                        'dmet': {'gamma': 2}}, str(tmp_path))
    assert cfg.dmet.gamma == 2.0
    assert isinstance(cfg.inputs[0].hubbard.t, float)


def test_paths_resolve_against_config_directory(tmp_path):
    data = {
        'inputs': [{'fcidump': 'geometries/h2.fcidump'}],
        'method': 'fci',
        'output': {'csv': 'out/scan.csv', 'trace_dir': 'traces'},
    }
    path = tmp_path / 'scan.json'
    path.write_text(json.dumps(data))
    cfg = load_config(str(path))
    assert cfg.inputs[0].fcidump == str(tmp_path / 'geometries' / 'h2.fcidump')
    assert cfg.inputs[0].label == 'h2'
    assert cfg.csv == str(tmp_path / 'out' / 'scan.csv')
    assert cfg.trace_dir == str(tmp_path / 'traces')


def test_load_invalid_json(tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{"input": ')
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(path))


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / 'absent.json'))


def test_dump_is_a_fixed_point(tmp_path, h2_fcidump_path):
    data = {
        'inputs': [DIMER_INPUT, {'fcidump': h2_fcidump_path, 'label': 'h2'}],
        'partition': {'fragments': [[0], [1]]},
        'vqe': {'epsilon': 0.001},
    }
    cfg = parse_config(data, str(tmp_path))
    text = dump_config(cfg)
    assert text.endswith('\n')
    reparsed = parse_config(json.loads(text), str(tmp_path))
    assert reparsed == cfg
    assert dump_config(reparsed) == text


def test_input_loads_integrals(h2_fcidump_path, tmp_path):
    cfg = parse_config({'inputs': [DIMER_INPUT, {'fcidump': h2_fcidump_path}], 'method': 'fci'}, str(tmp_path))
    dimer, h2 = (spec.load() for spec in cfg.inputs)
    assert dimer.n_spatial == 2
    assert dimer.two_body[0, 0, 0, 0] == 4.0
    assert h2.n_electrons == 2
