"""
JSON-lines iteration traces for SCF, chemical-potential, fitting and VQE loops
"""
import json
import logging
import os
import threading
import time
from typing import Any, Dict, List, Optional

import numpy as np

logger = logging.getLogger(__name__)

EVENTS = ('scf', 'mu', 'fit', 'vqe', 'screen')


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    return value


class IterationLog:
    """
    Append-only trace. Records are kept in memory and, when a path is given,
    written one JSON object per line as they arrive.
    """

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self.records: List[Dict[str, Any]] = []
        self._started = time.perf_counter()
        self._lock = threading.Lock()
        self._file = None
        if path:
            directory = os.path.dirname(path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            self._file = open(path, 'w', encoding='utf-8')

    def record(self, event: str, **fields) -> Dict[str, Any]:
        if event not in EVENTS:
            raise ValueError(f"Unknown trace event {event!r}")
        entry = {'event': event, **{k: _plain(v) for k, v in fields.items()}}
        with self._lock:
            entry['wall_time'] = round(time.perf_counter() - self._started, 6)
            self.records.append(entry)
            if self._file is not None:
                self._file.write(json.dumps(entry) + '\n')
                self._file.flush()
        return entry

    def events(self, event: str) -> List[Dict[str, Any]]:
        return [r for r in self.records if r['event'] == event]

    def close(self):
        if self._file is not None:
            self._file.close()
            self._file = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False


def read_trace(path: str) -> List[Dict[str, Any]]:
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]
