"""
Task configs in, run reports out: parsing, canonical digests and the
JSON/CSV writers used by the command line
"""
import csv
import dataclasses
import enum
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

import config
from src.core import ModelSpec, Seed, Site
from src.errors import InvariantViolation, ValidationError

logger = logging.getLogger(__name__)

TASKS = ('count', 'bound', 'resolvent', 'heat', 'walk', 'witness', 'continuum', 'verify')
FORMATS = ('json', 'csv')
METHOD_TAGS = ('closed_form', 'quadrature', 'series', 'dense', 'mc', 'calibrated')
# run bookkeeping, not computed quantities
BOOKKEEPING_KEYS = ('exit_code', 'wall_time', 'number', 'total', 'passed', 'failed')

# params each task cannot run without
_REQUIRED_PARAMS = {
    'count': (),
    'bound': ('bound_id',),
    'resolvent': (),
    'heat': ('t',),
    'walk': ('experiment',),
    'witness': ('functions',),
    'continuum': (),
    'verify': (),
}
_NEEDS_MODEL = ('count', 'bound', 'resolvent', 'heat', 'walk', 'witness')
_NEEDS_POTENTIAL = ('count', 'witness', 'continuum')


def jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become strings"""
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return 'nan' if math.isnan(value) else ('inf' if value > 0 else '-inf')
    if isinstance(value, Site):
        return list(value.coords)
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if hasattr(value, 'to_dict'):
        return jsonable(value.to_dict())
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return jsonable(dataclasses.asdict(value))
    if isinstance(value, Mapping):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        return [jsonable(v) for v in value]
    raise ValidationError(f"Cannot serialize {type(value).__name__} into a report")


def canonical_json(value: Any) -> str:
    """Sorted keys, no whitespace, ASCII only"""
    return json.dumps(jsonable(value), sort_keys=True, separators=(',', ':'), ensure_ascii=True)


def inputs_digest(data: Mapping[str, Any]) -> str:
    """sha256 of the canonical config, output section excluded"""
    payload = {k: v for k, v in data.items() if k != 'output'}
    return hashlib.sha256(canonical_json(payload).encode('ascii')).hexdigest()


def format_number(value: Any) -> str:
    """Shortest round-trip decimal for floats"""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return str(value)


def write_csv(path: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]):
    _ensure_parent(path)
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_number(v) for v in row])
    logger.debug(f"Wrote {len(rows)} CSV rows to {path}")


def _ensure_parent(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


@dataclass
class OutputSpec:
    path: Optional[str] = None
    format: str = 'json'

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValidationError(f"Unknown output format '{self.format}'", field='output.format')


@dataclass
class TaskConfig:
    """One validated task document"""

    task: str
    model: Optional[ModelSpec]
    potential: Optional[Dict[str, Any]]
    params: Dict[str, Any]
    seed: Seed
    output: OutputSpec
    raw: Dict[str, Any] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValidationError(f"Unknown task '{self.task}'; expected one of {', '.join(TASKS)}",
                                  field='task')
        for name in _REQUIRED_PARAMS[self.task]:
            if name not in self.params:
                raise ValidationError(f"Task '{self.task}' needs params.{name}", field=f'params.{name}')
        if self.task in _NEEDS_MODEL and self.model is None:
            raise ValidationError(f"Task '{self.task}' needs a model section", field='model')
        if self.task in _NEEDS_POTENTIAL and self.potential is None:
            raise ValidationError(f"Task '{self.task}' needs a potential section", field='potential')
        if self.potential is not None and not ({'kind', 'file', 'grid', 'square_well'} & set(self.potential)):
            raise ValidationError("potential needs one of kind, file, grid or square_well",
                                  field='potential')

    @property
    def digest(self) -> str:
        data = dict(self.raw)
        data['seed'] = self.seed.value
        return inputs_digest(data)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], seed_override: Optional[int] = None) -> 'TaskConfig':
        if not isinstance(data, Mapping):
            raise ValidationError("Task config must be a JSON object")
        if 'task' not in data:
            raise ValidationError("Task config needs a 'task' field", field='task')
        params = data.get('params') or {}
        if not isinstance(params, Mapping):
            raise ValidationError("params must be an object", field='params')
        output = data.get('output') or {}
        if not isinstance(output, Mapping):
            raise ValidationError("output must be an object", field='output')
        model = ModelSpec.from_dict(data['model']) if data.get('model') is not None else None
        try:
            seed = Seed(int(seed_override)) if seed_override is not None else Seed.resolve(data.get('seed'))
        except (TypeError, ValueError) as e:
            raise ValidationError(f"Bad seed: {e}", field='seed')
        return cls(
            task=data['task'],
            model=model,
            potential=dict(data['potential']) if data.get('potential') is not None else None,
            params=dict(params),
            seed=seed,
            output=OutputSpec(output.get('path'), output.get('format', 'json')),
            raw=dict(data),
        )

    @classmethod
    def from_text(cls, text: str, seed_override: Optional[int] = None) -> 'TaskConfig':
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValidationError(f"Malformed JSON: {e.msg}", line=e.lineno, column=e.colno)
        return cls.from_dict(data, seed_override)

    @classmethod
    def from_file(cls, path: str, seed_override: Optional[int] = None) -> 'TaskConfig':
        if not os.path.exists(path):
            raise ValidationError(f"Config file not found: {path}")
        with open(path, encoding='utf-8') as fh:
            return cls.from_text(fh.read(), seed_override)


@dataclass
class RunReport:
    """Echo of the task, its digest and its results"""

    task: str
    inputs_digest: str
    results: Dict[str, Any]
    tool_version: str = config.TOOL_VERSION
    wall_time: float = 0.0

    def results_json(self) -> str:
        """Deterministic payload; timings excluded"""
        return canonical_json(self.results)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'task': self.task,
            'inputs_digest': self.inputs_digest,
            'results': jsonable(self.results),
            'tool_version': self.tool_version,
            'wall_time': self.wall_time,
        }

    def csv_rows(self) -> List[List[Any]]:
        """Flattened key/value rows of the results"""
        rows: List[List[Any]] = []

        def walk(prefix: str, value: Any):
            if isinstance(value, Mapping):
                for key in sorted(value):
                    walk(f"{prefix}.{key}" if prefix else str(key), value[key])
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    walk(f"{prefix}[{i}]", item)
            else:
                rows.append([prefix, value])

        walk('', jsonable(self.results))
        return rows

    def write(self, path: str, fmt: str = 'json') -> str:
        if fmt not in FORMATS:
            raise ValidationError(f"Unknown output format '{fmt}'", field='output.format')
        _ensure_parent(path)
        if fmt == 'json':
            with open(path, 'w', encoding='utf-8') as fh:
                json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
                fh.write('\n')
        else:
            table = self.results.get('table') if isinstance(self.results, Mapping) else None
            if table:
                write_csv(path, table['columns'], table['rows'])
            else:
                write_csv(path, ['key', 'value'], self.csv_rows())
        logger.info(f"Report written to {path}")
        return path

    @classmethod
    def load(cls, path: str) -> 'RunReport':
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
        return cls(data['task'], data['inputs_digest'], data['results'],
                   data.get('tool_version', config.TOOL_VERSION), data.get('wall_time', 0.0))


def default_report_path(task: str, digest: str, fmt: str = 'json', output_dir: Optional[str] = None) -> str:
    return os.path.join(output_dir or config.OUTPUT_DIR, f"{task}_{digest[:12]}.{fmt}")


def untagged_numbers(results: Any, path: str = '', tagged: bool = False) -> List[str]:
    """Paths of numbers with no method tag on their group or any enclosing group"""
    missing: List[str] = []
    if isinstance(results, Mapping):
        tagged = tagged or 'method' in results
        for key, value in results.items():
            if key in BOOKKEEPING_KEYS:
                continue
            child = f"{path}.{key}" if path else str(key)
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                if not tagged:
                    missing.append(child)
            else:
                missing.extend(untagged_numbers(value, child, tagged))
    elif isinstance(results, list):
        for i, item in enumerate(results):
            if isinstance(item, (int, float)) and not isinstance(item, bool):
                if not tagged:
                    missing.append(f"{path}[{i}]")
            else:
                missing.extend(untagged_numbers(item, f"{path}[{i}]", tagged))
    return missing


def unknown_method_tags(results: Any) -> List[str]:
    """Method tags outside METHOD_TAGS, in document order"""
    unknown: List[str] = []
    if isinstance(results, Mapping):
        tag = results.get('method')
        if 'method' in results and tag not in METHOD_TAGS:
            unknown.append(str(tag))
        for value in results.values():
            unknown.extend(unknown_method_tags(value))
    elif isinstance(results, list):
        for item in results:
            unknown.extend(unknown_method_tags(item))
    return unknown


def audit_method_tags(results: Any):
    """
    Check that every number in a results payload carries a method tag

    Raises:
        InvariantViolation: an untagged number or a tag outside METHOD_TAGS
    """
    plain = jsonable(results)
    unknown = unknown_method_tags(plain)
    if unknown:
        raise InvariantViolation(f"Unknown method tag(s): {', '.join(sorted(set(unknown)))}")
    missing = untagged_numbers(plain)
    if missing:
        shown = ', '.join(missing[:5]) + (' ...' if len(missing) > 5 else '')
        raise InvariantViolation(f"{len(missing)} number(s) without a method tag: {shown}")
