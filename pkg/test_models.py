"""
Tests for stored calculation records
"""
from models import CalculationRecord, RunStatus, open_session, save_row


def make_row(**overrides):
    row = {'label': 'dimer', 'method': 'dmet-fci', 'energy_hartree': -0.8284271247, 'mu_star': 0.0,
           'converged': True, 'n_qubits': 4, 'wall_seconds': 0.25, 'error': ''}
    row.update(overrides)
    return row


def test_status_from_row():
    assert CalculationRecord.from_row(make_row()).status == RunStatus.CONVERGED
    assert CalculationRecord.from_row(make_row(converged=False)).status == RunStatus.UNCONVERGED
    failed = CalculationRecord.from_row(make_row(error='ValueError: odd electron count', energy_hartree=None))
    assert failed.status == RunStatus.FAILED
    assert failed.error == 'ValueError: odd electron count'


def test_empty_error_is_stored_as_null():
    assert CalculationRecord.from_row(make_row()).error is None


def test_save_and_query(tmp_path):
    sessions = open_session(f"sqlite:///{tmp_path / 'runs.db'}")
    first = save_row(sessions, make_row())
    save_row(sessions, make_row(label='h2', method='fci', mu_star=None, n_qubits=4))
    session = sessions()
    try:
        records = session.query(CalculationRecord).order_by(CalculationRecord.label).all()
        assert [r.label for r in records] == ['dimer', 'h2']
        assert records[0].id == first
        assert records[0].energy_hartree == -0.8284271247
        assert records[1].mu_star is None
        assert records[0].created_at is not None
    finally:
        session.close()


def test_repr():
    record = CalculationRecord.from_row(make_row())
    assert repr(record) == '<CalculationRecord dimer dmet-fci (converged)>'
