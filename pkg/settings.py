"""
Run configuration: JSON documents deep-merged over config/defaults.json and
validated into frozen dataclasses
"""
import copy
import json
import logging
import os
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

from dmet import DmetConfig, FragmentPartition
from integrals import IntegralSet, build_hubbard, read_fcidump
from meanfield import ScfSettings
from vqe import VqeConfig

logger = logging.getLogger(__name__)

# Path to configuration file
CONFIG_PATH = os.path.join(os.path.dirname(__file__), 'config', 'defaults.json')

METHODS = ('rhf', 'fci', 'vqe', 'dmet-fci', 'dmet-esvqe')

FALLBACK_DEFAULTS = {
    'method': 'dmet-fci',
    'scf': {'density_tol': 1e-10, 'max_iter': 200, 'damping': 0.5, 'use_diis': False, 'diis_space': 8},
    'dmet': {'tau': 1e-5, 'eta': 1e-6, 'mu_max_iter': 50, 'mu_step': 1e-4, 'gamma': 1.0,
             'mode': 'single_shot', 'fit_max_iter': 50, 'fit_tol': 1e-8, 'workers': 1},
    'vqe': {'epsilon': 1e-5, 'optimizer_tol': 1e-7, 'max_evals': 20000, 'bracket': 3.141592653589793,
            'screen_grid': 64, 'theta_tol': 1e-8, 'fd_step': 1e-6, 'analytic_gradient': False,
            'fine_tune': False, 'fine_tune_tol': 1e-6},
    'output': {'csv': 'results.csv', 'trace_dir': None, 'database': None},
}


class ConfigError(ValueError):
    """One or more field-level configuration problems"""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__('; '.join(self.errors))


@lru_cache(maxsize=1)
def _load_defaults() -> Dict[str, Any]:
    """Load defaults from JSON file, falling back to the in-code copy"""
    try:
        if os.path.exists(CONFIG_PATH):
            with open(CONFIG_PATH, 'r', encoding='utf-8') as f:
                return json.load(f)
    except Exception as e:
        logger.warning(f"Could not load defaults from {CONFIG_PATH}: {e}")
    return FALLBACK_DEFAULTS


def defaults() -> Dict[str, Any]:
    return copy.deepcopy(_load_defaults())


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclass(frozen=True)
class HubbardSpec:
    n_sites: int
    t: float
    u: float
    periodic: bool = False
    n_electrons: Optional[int] = None


@dataclass(frozen=True)
class InputSpec:
    label: str
    fcidump: Optional[str] = None
    hubbard: Optional[HubbardSpec] = None

    def load(self) -> IntegralSet:
        if self.fcidump is not None:
            return read_fcidump(self.fcidump)
        h = self.hubbard
        return build_hubbard(h.n_sites, h.t, h.u, periodic=h.periodic, n_electrons=h.n_electrons)

    def to_dict(self) -> Dict[str, Any]:
        if self.fcidump is not None:
            return {'label': self.label, 'fcidump': self.fcidump}
        return {'label': self.label, 'hubbard': asdict(self.hubbard)}


@dataclass(frozen=True)
class RunConfig:
    inputs: Tuple[InputSpec, ...]
    method: str
    partition: Optional[FragmentPartition]
    scf: ScfSettings
    dmet: DmetConfig
    vqe: VqeConfig
    csv: str
    trace_dir: Optional[str] = None
    database: Optional[str] = None

    @property
    def is_dmet(self) -> bool:
        return self.method.startswith('dmet-')

    @property
    def solver_kind(self) -> str:
        return self.method.split('-', 1)[1] if self.is_dmet else self.method


# ============================================================================
# Validation helpers
# ============================================================================

def _check_type(errors, path, value, expected):
    if expected is bool:
        ok = isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, expected)
    if not ok:
        errors.append(f"{path}: expected {expected.__name__}, got {type(value).__name__}")
    return ok


def _build_section(errors, name: str, cls, values: Any, **extra):
    if not isinstance(values, dict):
        errors.append(f"{name}: expected a table, got {type(values).__name__}")
        return None
    known = {f.name: f for f in fields(cls) if f.name not in extra}
    for key in sorted(set(values) - set(known)):
        errors.append(f"{name}.{key}: unknown field")
    kwargs = {}
    for key, f in known.items():
        if key not in values:
            continue
        expected = {'float': float, 'int': int, 'bool': bool, 'str': str}.get(getattr(f.type, '__name__', f.type))
        if expected is None or _check_type(errors, f"{name}.{key}", values[key], expected):
            kwargs[key] = float(values[key]) if expected is float else values[key]
    try:
        return cls(**kwargs, **extra)
    except (TypeError, ValueError) as e:
        errors.append(f"{name}: {e}")
        return None


def _resolve(path: str, base_dir: str) -> str:
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))


def _parse_input(errors, path: str, entry: Any, base_dir: str) -> Optional[InputSpec]:
    if not isinstance(entry, dict):
        errors.append(f"{path}: expected a table, got {type(entry).__name__}")
        return None
    sources = [k for k in ('fcidump', 'hubbard') if k in entry]
    if len(sources) != 1:
        errors.append(f"{path}: exactly one of 'fcidump' or 'hubbard' is required")
        return None
    for key in sorted(set(entry) - {'fcidump', 'hubbard', 'label'}):
        errors.append(f"{path}.{key}: unknown field")
    label = entry.get('label')
    if label is not None and not _check_type(errors, f"{path}.label", label, str):
        return None

    if 'fcidump' in entry:
        if not _check_type(errors, f"{path}.fcidump", entry['fcidump'], str):
            return None
        fcidump = _resolve(entry['fcidump'], base_dir)
        label = label or os.path.splitext(os.path.basename(fcidump))[0]
        return InputSpec(label=label, fcidump=fcidump)

    hubbard = entry['hubbard']
    if not isinstance(hubbard, dict):
        errors.append(f"{path}.hubbard: expected a table")
        return None
    before = len(errors)
    for key in ('n_sites', 't', 'u'):
        if key not in hubbard:
            errors.append(f"{path}.hubbard.{key}: required")
    for key in sorted(set(hubbard) - {'n_sites', 't', 'u', 'periodic', 'n_electrons'}):
        errors.append(f"{path}.hubbard.{key}: unknown field")
    if 'n_sites' in hubbard and _check_type(errors, f"{path}.hubbard.n_sites", hubbard['n_sites'], int):
        if hubbard['n_sites'] < 1:
            errors.append(f"{path}.hubbard.n_sites: must be at least 1")
    for key in ('t', 'u'):
        if key in hubbard:
            _check_type(errors, f"{path}.hubbard.{key}", hubbard[key], float)
    if 'periodic' in hubbard:
        _check_type(errors, f"{path}.hubbard.periodic", hubbard['periodic'], bool)
    if hubbard.get('n_electrons') is not None:
        _check_type(errors, f"{path}.hubbard.n_electrons", hubbard['n_electrons'], int)
    if len(errors) > before:
        return None
    spec = HubbardSpec(
        n_sites=hubbard['n_sites'],
        t=float(hubbard['t']),
        u=float(hubbard['u']),
        periodic=hubbard.get('periodic', False),
        n_electrons=hubbard.get('n_electrons'),
    )
    label = label or f"hubbard{spec.n_sites}_t{spec.t:g}_u{spec.u:g}"
    return InputSpec(label=label, hubbard=spec)


def _parse_partition(errors, value: Any) -> Optional[FragmentPartition]:
    if value is None:
        return None
    if not isinstance(value, dict) or 'fragments' not in value:
        errors.append("partition: expected a table with 'fragments'")
        return None
    for key in sorted(set(value) - {'fragments', 'inactive'}):
        errors.append(f"partition.{key}: unknown field")

    def _index_lists(name, lists):
        if not isinstance(lists, list) or not all(
                isinstance(g, list) and all(isinstance(i, int) and not isinstance(i, bool) for i in g)
                for g in lists):
            errors.append(f"partition.{name}: expected a list of integer lists")
            return None
        return tuple(tuple(g) for g in lists)

    fragments = _index_lists('fragments', value['fragments'])
    inactive = _index_lists('inactive', value.get('inactive', []))
    if fragments is None or inactive is None:
        return None
    if inactive and len(inactive) != len(fragments):
        errors.append(f"partition.inactive: {len(inactive)} lists for {len(fragments)} fragments")
        return None
    return FragmentPartition(fragments, inactive)


# ============================================================================
# Public API
# ============================================================================

def parse_config(data: Dict[str, Any], base_dir: str = '.') -> RunConfig:
    """Validate a configuration document; every problem is reported at once"""
    if not isinstance(data, dict):
        raise ConfigError([f"config: expected a table, got {type(data).__name__}"])
    merged = deep_merge(defaults(), data)
    errors: List[str] = []
    base_dir = os.path.abspath(base_dir)

    known = {'input', 'inputs', 'partition', 'method', 'scf', 'dmet', 'vqe', 'output'}
    for key in sorted(set(merged) - known):
        errors.append(f"{key}: unknown field")

    if ('input' in data) == ('inputs' in data):
        errors.append("input: exactly one of 'input' or 'inputs' is required")
        raw_inputs = []
    elif 'input' in data:
        raw_inputs = [('input', data['input'])]
    elif isinstance(data['inputs'], list):
        raw_inputs = [(f"inputs[{i}]", entry) for i, entry in enumerate(data['inputs'])]
    else:
        errors.append("inputs: expected a list")
        raw_inputs = []
    inputs = tuple(_parse_input(errors, path, entry, base_dir) for path, entry in raw_inputs)

    method = merged.get('method')
    if method not in METHODS:
        errors.append(f"method: must be one of {', '.join(METHODS)}, got {method!r}")

    partition = _parse_partition(errors, merged.get('partition'))
    if method in METHODS and method.startswith('dmet-') and partition is None and 'partition' not in merged:
        errors.append("partition: required for DMET methods")

    scf = _build_section(errors, 'scf', ScfSettings, merged.get('scf', {}))
    dmet = _build_section(errors, 'dmet', DmetConfig, merged.get('dmet', {}), scf=scf or ScfSettings())
    vqe = _build_section(errors, 'vqe', VqeConfig, merged.get('vqe', {}))

    output = merged.get('output', {})
    if not isinstance(output, dict):
        errors.append("output: expected a table")
        output = {}
    for key in sorted(set(output) - {'csv', 'trace_dir', 'database'}):
        errors.append(f"output.{key}: unknown field")
    csv_path = output.get('csv')
    if not isinstance(csv_path, str) or not csv_path:
        errors.append("output.csv: expected a file path")
    for key in ('trace_dir', 'database'):
        if output.get(key) is not None:
            _check_type(errors, f"output.{key}", output[key], str)

    if errors:
        raise ConfigError(errors)

    trace_dir = output.get('trace_dir')
    return RunConfig(
        inputs=inputs,
        method=method,
        partition=partition,
        scf=scf,
        dmet=dmet,
        vqe=vqe,
        csv=_resolve(csv_path, base_dir),
        trace_dir=_resolve(trace_dir, base_dir) if trace_dir else None,
        database=output.get('database'),
    )


def load_config(path: str) -> RunConfig:
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError([f"config: invalid JSON ({e})"])
    return parse_config(data, os.path.dirname(os.path.abspath(path)))


def config_to_dict(cfg: RunConfig) -> Dict[str, Any]:
    dmet = asdict(cfg.dmet)
    dmet.pop('scf')
    result = {
        'inputs': [spec.to_dict() for spec in cfg.inputs],
        'method': cfg.method,
        'scf': asdict(cfg.scf),
        'dmet': dmet,
        'vqe': asdict(cfg.vqe),
        'output': {'csv': cfg.csv, 'trace_dir': cfg.trace_dir, 'database': cfg.database},
    }
    if cfg.partition is not None:
        result['partition'] = {
            'fragments': [list(f) for f in cfg.partition.fragments],
            'inactive': [list(g) for g in cfg.partition.inactive],
        }
    return result


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), sort_keys=True, indent=2) + '\n'
