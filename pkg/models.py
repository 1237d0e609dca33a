"""
Database models for stored calculation results
"""
from datetime import datetime, timezone
from sqlalchemy import Column, String, DateTime, Integer, Float, Text, Enum, create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.ext.declarative import declarative_base
import enum
import uuid

Base = declarative_base()

class RunStatus(enum.Enum):
    """Outcome of one calculation row"""
    CONVERGED = "converged"
    UNCONVERGED = "unconverged"
    FAILED = "failed"

class CalculationRecord(Base):
    """One result row of a run or scan"""
    __tablename__ = 'calculations'

    id = Column(String(36), primary_key=True, default=lambda: str(uuid.uuid4()))
    label = Column(String(255), nullable=False, index=True)
    method = Column(String(20), nullable=False)

    # Results
    energy_hartree = Column(Float)
    mu_star = Column(Float)
    n_qubits = Column(Integer, default=0, nullable=False)
    wall_seconds = Column(Float)

    status = Column(Enum(RunStatus), nullable=False)
    error = Column(Text)  # Exception message for failed rows
    created_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))

    def __repr__(self):
        return f"<CalculationRecord {self.label} {self.method} ({self.status.value})>"

    @classmethod
    def from_row(cls, row):
        """Build a record from a CSV result row"""
        if row.get('error'):
            status = RunStatus.FAILED
        elif row.get('converged'):
            status = RunStatus.CONVERGED
        else:
            status = RunStatus.UNCONVERGED
        return cls(
            label=row['label'],
            method=row['method'],
            energy_hartree=row.get('energy_hartree'),
            mu_star=row.get('mu_star'),
            n_qubits=row.get('n_qubits') or 0,
            wall_seconds=row.get('wall_seconds'),
            status=status,
            error=row.get('error') or None,
        )

def open_session(database_url):
    """Create tables on first use and return a session factory"""
    engine = create_engine(database_url)
    Base.metadata.create_all(engine)
    return sessionmaker(bind=engine)

def save_row(session_factory, row):
    session = session_factory()
    try:
        record = CalculationRecord.from_row(row)
        session.add(record)
        session.commit()
        return record.id
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()
