"""
Tests for the qdmet command line: result rows, scans, exit codes and outputs
"""
import csv
import json

import numpy as np
import pytest

import qdmet
from conftest import H2_BOND, hydrogen_chain, single_pair, two_pair_chain
from fci import fci_ground_state
from integrals import save_fcidump
from models import CalculationRecord, open_session
from run_log import read_trace
from settings import InputSpec, parse_config

DIMER = {'hubbard': {'n_sites': 2, 't': 1.0, 'u': 4.0}}
FREE_DIMER = {'hubbard': {'n_sites': 2, 't': 1.0, 'u': 0.0}}
ODD_CHAIN = {'hubbard': {'n_sites': 3, 't': 1.0, 'u': 1.0}}


@pytest.fixture(autouse=True)
def log_dir(monkeypatch, tmp_path):
    monkeypatch.setenv('LOG_DIR', str(tmp_path / 'logs'))
    monkeypatch.delenv('QDMET_WORKERS', raising=False)


def write_config(tmp_path, data, name='config.json'):
    data = {'output': {'csv': 'results.csv'}, **data}
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def read_rows(path):
    with open(path, newline='') as f:
        return list(csv.DictReader(f))


def without_timing(rows):
    return [{k: v for k, v in row.items() if k != 'wall_seconds'} for row in rows]


# ============================================================================
# Rows
# ============================================================================

def test_fci_row(tmp_path):
    config = write_config(tmp_path, {'input': DIMER, 'method': 'fci'})
    assert qdmet.main(['run', config]) == qdmet.EXIT_OK
    (row,) = read_rows(tmp_path / 'results.csv')
    assert row['label'] == 'hubbard2_t1_u4'
    assert row['method'] == 'fci'
    assert row['energy_hartree'] == '-0.8284271247'
    assert row['mu_star'] == ''
    assert row['converged'] == 'true'
    assert row['n_qubits'] == '4'
    assert row['error'] == ''


def test_rhf_row(tmp_path):
    config = write_config(tmp_path, {'input': FREE_DIMER, 'method': 'rhf'})
    assert qdmet.main(['run', config]) == qdmet.EXIT_OK
    (row,) = read_rows(tmp_path / 'results.csv')
    assert row['energy_hartree'] == '-2.0000000000'
    assert row['n_qubits'] == '0'


def test_dmet_row(tmp_path):
    config = write_config(tmp_path, {'input': DIMER, 'partition': {'fragments': [[0], [1]]}})
    assert qdmet.main(['run', config]) == qdmet.EXIT_OK
    (row,) = read_rows(tmp_path / 'results.csv')
    assert row['method'] == 'dmet-fci'
    assert row['energy_hartree'] == '-0.8284271247'
    assert float(row['mu_star']) == 0.0
    assert row['n_qubits'] == '4'


def test_header_order(tmp_path):
    config = write_config(tmp_path, {'input': DIMER, 'method': 'rhf'})
    qdmet.main(['run', config])
    header = (tmp_path / 'results.csv').read_text().splitlines()[0]
    assert header == 'label,method,energy_hartree,mu_star,converged,n_qubits,wall_seconds,error'


def test_format_row():
    row = {'label': 'x', 'method': 'rhf', 'energy_hartree': -1.5, 'mu_star': None, 'converged': False,
           'n_qubits': 0, 'wall_seconds': 0.12345, 'error': ''}
    assert qdmet.format_row(row) == ['x', 'rhf', '-1.5000000000', '', 'false', '0', '0.123', '']


def test_compute_row_captures_errors(tmp_path):
    cfg = parse_config({'input': DIMER, 'method': 'fci'}, str(tmp_path))
    row = qdmet.compute_row(InputSpec(label='missing', fcidump=str(tmp_path / 'absent.fcidump')), cfg)
    assert row['error'].startswith('FileNotFoundError')
    assert row['energy_hartree'] is None
    assert qdmet.row_failed(row)


# ============================================================================
# Scans
# ============================================================================

def test_empty_scan_writes_header_only(tmp_path):
    config = write_config(tmp_path, {'inputs': [], 'method': 'rhf'})
    assert qdmet.main(['scan', config]) == qdmet.EXIT_OK
    assert (tmp_path / 'results.csv').read_text() == ','.join(qdmet.CSV_HEADER) + '\n'


def test_duplicate_inputs_give_identical_rows(tmp_path):
    config = write_config(tmp_path, {'inputs': [DIMER, DIMER], 'method': 'fci'})
    assert qdmet.main(['scan', config]) == qdmet.EXIT_OK
    first, second = without_timing(read_rows(tmp_path / 'results.csv'))
    assert first == second


def test_scan_is_deterministic(tmp_path):
    config = write_config(tmp_path, {'inputs': [DIMER, FREE_DIMER], 'method': 'fci'})
    qdmet.main(['scan', config])
    first = without_timing(read_rows(tmp_path / 'results.csv'))
    qdmet.main(['scan', config])
    assert without_timing(read_rows(tmp_path / 'results.csv')) == first


@pytest.fixture
def chain_scan(tmp_path):
    separations = [0.5, 1.0, 2.0, np.inf]
    inputs = []
    for separation in separations:
        path = tmp_path / f"chain_{separation}.fcidump"
        save_fcidump(two_pair_chain(separation), path)
        inputs.append({'fcidump': path.name})
    return write_config(tmp_path, {'inputs': inputs, 'method': 'dmet-fci',
                                   'partition': {'fragments': [[0, 1], [2, 3]]}})


def test_pair_chain_scan(tmp_path, chain_scan):
    assert qdmet.main(['scan', chain_scan]) == qdmet.EXIT_OK
    rows = read_rows(tmp_path / 'results.csv')
    assert [r['label'] for r in rows] == ['chain_0.5', 'chain_1.0', 'chain_2.0', 'chain_inf']
    energies = [float(r['energy_hartree']) for r in rows]
    separated = 2 * fci_ground_state(single_pair()).energy
    assert energies[-1] == pytest.approx(separated, abs=1e-8)
    assert abs(energies[2] - separated) < abs(energies[0] - separated)


def test_esvqe_agrees_with_fci_for_separated_pairs(tmp_path):
    save_fcidump(two_pair_chain(np.inf), tmp_path / 'separated.fcidump')
    config = write_config(tmp_path, {'input': {'fcidump': 'separated.fcidump'}, 'method': 'dmet-fci',
                                     'partition': {'fragments': [[0, 1], [2, 3]]}})
    assert qdmet.main(['run', config, '--output', str(tmp_path / 'fci.csv')]) == qdmet.EXIT_OK
    assert qdmet.main(['run', config, '--method', 'dmet-esvqe', '--output', str(tmp_path / 'vqe.csv')]) == 0
    (fci_row,) = read_rows(tmp_path / 'fci.csv')
    (vqe_row,) = read_rows(tmp_path / 'vqe.csv')
    assert vqe_row['method'] == 'dmet-esvqe'
    assert float(vqe_row['energy_hartree']) == pytest.approx(float(fci_row['energy_hartree']), abs=1e-4)


def h4_scan_config(tmp_path, h4_fcidumps, separations, method):
    return write_config(tmp_path, {
        'inputs': [{'fcidump': h4_fcidumps[s]} for s in separations],
        'method': method,
        'partition': {'fragments': [[0], [1], [2], [3]]},
    }, name=f'{method}.json')


def test_h4_scan_reaches_pair_limit(tmp_path, h4_fcidumps):
    separations = sorted(h4_fcidumps)
    config = h4_scan_config(tmp_path, h4_fcidumps, separations, 'dmet-fci')
    assert qdmet.main(['scan', config]) == qdmet.EXIT_OK
    rows = read_rows(tmp_path / 'results.csv')
    assert [r['label'] for r in rows] == [f'h4_{s:g}' for s in separations]
    assert all(r['n_qubits'] == '4' for r in rows)
    limit = 2 * fci_ground_state(hydrogen_chain([0.0, H2_BOND])).energy
    assert float(rows[-1]['energy_hartree']) == pytest.approx(limit, abs=1e-6)


def test_h4_scan_esvqe_agrees_with_fci(tmp_path, h4_fcidumps):
    separations = [1.4, 3.0, 25.0]
    energies = {}
    for method in ('dmet-fci', 'dmet-esvqe'):
        config = h4_scan_config(tmp_path, h4_fcidumps, separations, method)
        output = str(tmp_path / f'{method}.csv')
        qdmet.main(['scan', config, '--output', output])
        rows = read_rows(output)
        assert all(r['error'] == '' for r in rows)
        energies[method] = [float(r['energy_hartree']) for r in rows]
    assert len(energies['dmet-esvqe']) == 3
    np.testing.assert_allclose(energies['dmet-esvqe'], energies['dmet-fci'], atol=1e-4)


def test_parallel_scan_matches_serial(tmp_path):
    config = write_config(tmp_path, {'inputs': [DIMER, FREE_DIMER, {'hubbard': {'n_sites': 4, 't': 1.0, 'u': 2.0}}],
                                     'method': 'fci'})
    qdmet.main(['scan', config])
    serial = read_rows(tmp_path / 'results.csv')
    assert qdmet.main(['scan', config, '--parallel', '2']) == qdmet.EXIT_OK
    parallel = read_rows(tmp_path / 'results.csv')
    assert [r['label'] for r in parallel] == [r['label'] for r in serial]
    for a, b in zip(serial, parallel):
        assert float(a['energy_hartree']) == pytest.approx(float(b['energy_hartree']), abs=1e-9)


# ============================================================================
# Exit codes and run semantics
# ============================================================================

def test_scan_records_failures_and_continues(tmp_path):
    config = write_config(tmp_path, {'inputs': [ODD_CHAIN, FREE_DIMER], 'method': 'rhf'})
    assert qdmet.main(['scan', config]) == qdmet.EXIT_UNCONVERGED
    failed, ok = read_rows(tmp_path / 'results.csv')
    assert failed['error'].startswith('ValueError')
    assert failed['energy_hartree'] == ''
    assert failed['converged'] == 'false'
    assert ok['energy_hartree'] == '-2.0000000000'


def test_run_stops_at_first_failure(tmp_path):
    config = write_config(tmp_path, {'inputs': [ODD_CHAIN, FREE_DIMER], 'method': 'rhf'})
    assert qdmet.main(['run', config]) == qdmet.EXIT_UNCONVERGED
    assert len(read_rows(tmp_path / 'results.csv')) == 1


def test_run_appends(tmp_path):
    config = write_config(tmp_path, {'input': FREE_DIMER, 'method': 'rhf'})
    qdmet.main(['run', config])
    qdmet.main(['run', config])
    lines = (tmp_path / 'results.csv').read_text().splitlines()
    assert len(lines) == 3
    assert lines.count(','.join(qdmet.CSV_HEADER)) == 1


def test_unconverged_exit_code(tmp_path):
    config = write_config(tmp_path, {
        'input': {'hubbard': {'n_sites': 4, 't': 1.0, 'u': 2.0, 'n_electrons': 2}},
        'partition': {'fragments': [[0], [1], [2], [3]]},
        'dmet': {'mu_max_iter': 0},
    })
    assert qdmet.main(['run', config]) == qdmet.EXIT_UNCONVERGED
    (row,) = read_rows(tmp_path / 'results.csv')
    assert row['converged'] == 'false'
    assert row['energy_hartree'] != ''
    assert qdmet.main(['scan', config, '--allow-unconverged']) == qdmet.EXIT_OK



def test_exhausted_vqe_budget_exit_code(tmp_path):
    config = write_config(tmp_path, {
        'input': DIMER,
        'method': 'dmet-esvqe',
        'partition': {'fragments': [[0], [1]]},
        'vqe': {'max_evals': 1},
    })
    assert qdmet.main(['run', config]) == qdmet.EXIT_UNCONVERGED
    (row,) = read_rows(tmp_path / 'results.csv')
    assert row['converged'] == 'false'
    assert row['error'] == ''


@pytest.mark.parametrize('contents', ['{"input": ', json.dumps({'input': DIMER, 'method': 'rhf', 'dmet': {'foo': 1}})])
def test_invalid_config_exit_code(tmp_path, contents):
    path = tmp_path / 'bad.json'
    path.write_text(contents)
    assert qdmet.main(['run', str(path)]) == qdmet.EXIT_CONFIG
    assert not (tmp_path / 'results.csv').exists()


def test_missing_config_exit_code(tmp_path):
    assert qdmet.main(['run', str(tmp_path / 'absent.json')]) == qdmet.EXIT_CONFIG


def test_missing_fcidump_exit_code(tmp_path):
    config = write_config(tmp_path, {'input': {'fcidump': 'absent.fcidump'}, 'method': 'fci'})
    assert qdmet.main(['scan', config]) == qdmet.EXIT_CONFIG


def test_method_override_needs_partition(tmp_path):
    config = write_config(tmp_path, {'input': DIMER, 'method': 'fci'})
    assert qdmet.main(['run', config, '--method', 'dmet-fci']) == qdmet.EXIT_CONFIG


def test_no_command():
    assert qdmet.main([]) == qdmet.EXIT_CONFIG


def test_worker_count(monkeypatch):
    parser = qdmet.build_parser()
    assert qdmet._worker_count(parser.parse_args(['scan', 'x.json'])) == 1
    assert qdmet._worker_count(parser.parse_args(['scan', 'x.json', '--parallel', '5'])) == 5
    monkeypatch.setenv('QDMET_WORKERS', '3')
    assert qdmet._worker_count(parser.parse_args(['scan', 'x.json', '--parallel'])) == 3


# ============================================================================
# Traces and database
# ============================================================================

def test_trace_files(tmp_path):
    config = write_config(tmp_path, {
        'input': DIMER,
        'partition': {'fragments': [[0], [1]]},
        'output': {'csv': 'results.csv', 'trace_dir': 'traces'},
    })
    assert qdmet.main(['run', config]) == qdmet.EXIT_OK
    records = read_trace(str(tmp_path / 'traces' / '000_hubbard2_t1_u4.jsonl'))
    events = {r['event'] for r in records}
    assert {'scf', 'mu'} <= events


def test_rows_stored_in_database(tmp_path):
    database = f"sqlite:///{tmp_path / 'runs.db'}"
    config = write_config(tmp_path, {
        'inputs': [FREE_DIMER, ODD_CHAIN],
        'method': 'rhf',
        'output': {'csv': 'results.csv', 'database': database},
    })
    qdmet.main(['scan', config])
    session = open_session(database)()
    try:
        records = session.query(CalculationRecord).all()
        assert sorted(r.label for r in records) == ['hubbard2_t1_u0', 'hubbard3_t1_u1']
        assert sorted(r.status.value for r in records) == ['converged', 'failed']
    finally:
        session.close()
