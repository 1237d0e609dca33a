#!/usr/bin/env python3
"""
Batch driver for mean-field, FCI, ESVQE and DMET energy calculations.
Each configured input (FCIDUMP file or Hubbard model) becomes one CSV row.
"""

import argparse
import csv
import dataclasses
import logging
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from dmet import run_dmet
from fci import fci_ground_state
from meanfield import run_rhf
from models import open_session, save_row
from run_log import IterationLog
from settings import ConfigError, InputSpec, RunConfig, load_config
from vqe import run_esvqe

logger = logging.getLogger(__name__)

CSV_HEADER = ['label', 'method', 'energy_hartree', 'mu_star', 'converged', 'n_qubits', 'wall_seconds', 'error']

EXIT_OK = 0
EXIT_UNCONVERGED = 1
EXIT_CONFIG = 2


def setup_logging(level: Optional[str] = None) -> None:
    """Configure file and console logging once for the process"""
    log_dir = os.getenv('LOG_DIR', './logs')
    os.makedirs(log_dir, exist_ok=True)
    level = (level or os.getenv('LOG_LEVEL', 'INFO')).upper()

    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(f'{log_dir}/qdmet.log'),
            logging.StreamHandler()
        ]
    )


def _solve(ints, cfg: RunConfig, log: IterationLog) -> Dict[str, Any]:
    if cfg.method == 'rhf':
        state = run_rhf(ints, settings=cfg.scf)
        return {'energy_hartree': state.energy, 'converged': True, 'n_qubits': 0}
    if cfg.method == 'fci':
        result = fci_ground_state(ints, s_z=ints.ms2 / 2)
        return {'energy_hartree': result.energy, 'converged': True, 'n_qubits': 2 * ints.n_spatial}
    if cfg.method == 'vqe':
        result = run_esvqe(ints, cfg.vqe, log)
        return {'energy_hartree': result.energy, 'converged': result.outcome.converged,
                'n_qubits': result.n_qubits}
    result = run_dmet(ints, cfg.partition, cfg.solver_kind, cfg.dmet, cfg.vqe, log)
    return {'energy_hartree': result.total_energy, 'mu_star': result.mu_star,
            'converged': result.converged, 'n_qubits': result.n_qubits}


def trace_path(cfg: RunConfig, index: int, label: str) -> Optional[str]:
    if not cfg.trace_dir:
        return None
    safe = re.sub(r'[^A-Za-z0-9_.-]+', '_', label)
    return os.path.join(cfg.trace_dir, f"{index:03d}_{safe}.jsonl")


def compute_row(spec: InputSpec, cfg: RunConfig, trace: Optional[str] = None) -> Dict[str, Any]:
    """Run one input; exceptions become an error entry instead of propagating"""
    row = {'label': spec.label, 'method': cfg.method, 'energy_hartree': None, 'mu_star': None,
           'converged': False, 'n_qubits': 0, 'wall_seconds': 0.0, 'error': ''}
    started = time.perf_counter()
    try:
        ints = spec.load()
        with IterationLog(trace) as log:
            row.update(_solve(ints, cfg, log))
    except Exception as e:
        logger.error(f"{spec.label}: {cfg.method} failed: {e}")
        row['error'] = f"{type(e).__name__}: {e}"
    row['wall_seconds'] = time.perf_counter() - started
    if not row['error'] and not row['converged']:
        logger.warning(f"{spec.label}: {cfg.method} did not converge")
    return row


def format_row(row: Dict[str, Any]) -> List[str]:
    def number(value):
        return '' if value is None else f"{value:.10f}"

    return [
        row['label'],
        row['method'],
        number(row['energy_hartree']),
        number(row['mu_star']),
        'true' if row['converged'] else 'false',
        str(row['n_qubits']),
        f"{row['wall_seconds']:.3f}",
        row['error'],
    ]


class ResultWriter:
    """Single CSV writer; rows are flushed as soon as they are written"""

    def __init__(self, path: str, append: bool = False, database: Optional[str] = None):
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        write_header = not append or not os.path.exists(path) or os.path.getsize(path) == 0
        self._file = open(path, 'a' if append else 'w', newline='', encoding='utf-8')
        self._csv = csv.writer(self._file, lineterminator='\n')
        if write_header:
            self._csv.writerow(CSV_HEADER)
            self._file.flush()
        self._sessions = None
        if database:
            self._sessions = open_session(database)

    def write(self, row: Dict[str, Any]) -> None:
        self._csv.writerow(format_row(row))
        self._file.flush()
        logger.info(f"Wrote row {row['label']}: E={row['energy_hartree']}")
        if self._sessions is not None:
            try:
                save_row(self._sessions, row)
            except Exception as e:
                logger.error(f"Could not store row {row['label']} in database: {e}")

    def close(self) -> None:
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False


def row_failed(row: Dict[str, Any]) -> bool:
    return bool(row['error']) or not row['converged']


def execute(cfg: RunConfig, workers: int = 1, stop_on_error: bool = False, append: bool = False) -> List[Dict[str, Any]]:
    """
    Compute every input of cfg and write rows in input order.

    With workers > 1 the inputs run in a process pool; rows are still written
    strictly in input order, each as soon as it and its predecessors are done.
    """
    rows = []
    traces = [trace_path(cfg, i, spec.label) for i, spec in enumerate(cfg.inputs)]
    with ResultWriter(cfg.csv, append=append, database=cfg.database) as writer:
        if workers > 1 and len(cfg.inputs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(compute_row, spec, cfg, trace) for spec, trace in zip(cfg.inputs, traces)]
                for future in futures:
                    row = future.result()
                    writer.write(row)
                    rows.append(row)
                    if stop_on_error and row['error']:
                        for pending in futures:
                            pending.cancel()
                        break
        else:
            for spec, trace in zip(cfg.inputs, traces):
                row = compute_row(spec, cfg, trace)
                writer.write(row)
                rows.append(row)
                if stop_on_error and row['error']:
                    break
    return rows


def _missing_inputs(cfg: RunConfig) -> List[str]:
    return [spec.fcidump for spec in cfg.inputs if spec.fcidump is not None and not os.path.exists(spec.fcidump)]


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if args.method:
        changes['method'] = args.method
    if args.output:
        changes['csv'] = os.path.abspath(args.output)
    cfg = dataclasses.replace(cfg, **changes)
    if cfg.is_dmet and cfg.partition is None:
        raise ConfigError(["partition: required for DMET methods"])
    return cfg


def _worker_count(args) -> int:
    if args.parallel is None:
        return 1
    if args.parallel > 0:
        return args.parallel
    return int(os.getenv('QDMET_WORKERS', os.cpu_count() or 1))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Quantum-classical DMET energy calculations',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog='''
Examples:
  %(prog)s run hubbard.json                         # One row per configured input
  %(prog)s run h2.json --method fci                 # Override the configured method
  %(prog)s scan h4_curve.json --parallel 4          # Geometry scan on 4 processes
  %(prog)s scan h4_curve.json --allow-unconverged   # Exit 0 even with unconverged rows
        '''
    )
    subparsers = parser.add_subparsers(dest='command', help='Command to execute')

    for name, help_text in (('run', 'Run the configured method on each input, stop at the first failure'),
                            ('scan', 'Run every input of a scan, recording per-row failures')):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument('config', help='JSON configuration file')
        sub.add_argument('--method', choices=['rhf', 'fci', 'vqe', 'dmet-fci', 'dmet-esvqe'],
                         help='Override the configured method')
        sub.add_argument('--output', help='Override the CSV output path')
        sub.add_argument('--parallel', type=int, nargs='?', const=0, default=None, metavar='N',
                         help='Worker processes (QDMET_WORKERS or CPU count when N is omitted)')
        sub.add_argument('--allow-unconverged', action='store_true',
                         help='Exit 0 even when rows are unconverged or failed')
        sub.add_argument('--log-level', help='Override LOG_LEVEL')
    return parser


def main(argv=None) -> int:
    """Main entry point"""
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_CONFIG

    setup_logging(args.log_level)

    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except FileNotFoundError as e:
        logger.error(f"Configuration file not found: {e.filename}")
        return EXIT_CONFIG
    except ConfigError as e:
        for message in e.errors:
            logger.error(f"Invalid configuration: {message}")
        return EXIT_CONFIG

    missing = _missing_inputs(cfg)
    if missing:
        for path in missing:
            logger.error(f"Input file not found: {path}")
        return EXIT_CONFIG

    logger.info(f"{args.command}: {len(cfg.inputs)} input(s), method={cfg.method}, output={cfg.csv}")
    rows = execute(cfg, workers=_worker_count(args), stop_on_error=args.command == 'run',
                   append=args.command == 'run')

    failed = [row['label'] for row in rows if row_failed(row)]
    if failed:
        logger.warning(f"{len(failed)} of {len(rows)} row(s) failed or unconverged: {', '.join(failed)}")
        if not args.allow_unconverged:
            return EXIT_UNCONVERGED
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
