"""
Domain types, lattice geometry, metrics and potential constructors
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

import config
from src.errors import FamilyMismatchError, ValidationError

logger = logging.getLogger(__name__)


class Family(str, Enum):
    """Operator families understood by the toolkit"""

    Z1 = 'Z1'
    Z2 = 'Z2'
    FRACTIONAL = 'Fractional'
    HIERARCHICAL = 'Hierarchical'
    GENERAL_GRAPH = 'GeneralGraph'


@dataclass(frozen=True, order=True)
class Site:
    """
    A lattice site.

    Z^d sites carry their coordinates; hierarchical and general-graph sites
    carry a single nonnegative index in ``coords[0]``.
    """

    coords: Tuple[int, ...]

    def __post_init__(self):
        coords = tuple(int(c) for c in self.coords)
        if not coords or len(coords) > 2:
            raise ValidationError(f"Site needs 1 or 2 coordinates, got {self.coords!r}")
        object.__setattr__(self, 'coords', coords)

    @classmethod
    def of(cls, *coords: int) -> 'Site':
        if len(coords) == 1 and isinstance(coords[0], (tuple, list)):
            coords = tuple(coords[0])
        return cls(tuple(coords))

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def index(self) -> int:
        return self.coords[0]

    @property
    def norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.coords))

    @property
    def linf(self) -> int:
        return max(abs(c) for c in self.coords)

    @property
    def l1(self) -> int:
        return sum(abs(c) for c in self.coords)

    def __add__(self, other: 'Site') -> 'Site':
        return Site(tuple(a + b for a, b in zip(self.coords, other.coords)))

    def __sub__(self, other: 'Site') -> 'Site':
        return Site(tuple(a - b for a, b in zip(self.coords, other.coords)))

    def __str__(self) -> str:
        return ' '.join(str(c) for c in self.coords)


def origin(dim: int = 1) -> Site:
    return Site((0,) * dim)


@dataclass(frozen=True)
class BoxSpec:
    """Finite truncation: sites with max-coordinate <= radius, exterior deleted"""

    radius: int = 0
    boundary: str = 'dirichlet'

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 0:
            raise ValidationError(f"Box radius must be a nonnegative integer, got {self.radius}",
                                  field='truncation.radius')
        if self.boundary != 'dirichlet':
            raise ValidationError("Only Dirichlet-outside truncation is supported",
                                  field='truncation.boundary')
        object.__setattr__(self, 'radius', int(self.radius))


_FAMILY_PARAMS = {
    Family.Z1: set(),
    Family.Z2: set(),
    Family.FRACTIONAL: {'alpha'},
    Family.HIERARCHICAL: {'nu', 'p', 'levels'},
    Family.GENERAL_GRAPH: {'generator_table', 'c0'},
}


@dataclass(frozen=True)
class ModelSpec:
    """Operator family plus its parameters and truncation"""

    family: Family
    truncation: BoxSpec = field(default_factory=BoxSpec)
    alpha: Optional[float] = None
    nu: Optional[int] = None
    p: Optional[float] = None
    levels: Optional[int] = None
    generator_table: Optional[Any] = None
    c0: Optional[float] = None

    def __post_init__(self):
        try:
            family = Family(self.family)
        except ValueError:
            raise ValidationError(f"Unknown family '{self.family}'", field='model.family')
        object.__setattr__(self, 'family', family)

        present = {name for name in ('alpha', 'nu', 'p', 'levels', 'generator_table', 'c0')
                   if getattr(self, name) is not None}
        required = _FAMILY_PARAMS[family]
        missing = required - present
        extra = present - required
        if missing:
            raise ValidationError(f"{family.value} requires {sorted(missing)}", field='model')
        if extra:
            raise ValidationError(f"{family.value} does not take {sorted(extra)}", field='model')

        if family == Family.FRACTIONAL and not 0 < self.alpha <= 1:
            raise ValidationError(f"alpha must lie in (0, 1], got {self.alpha}", field='model.alpha')
        if family == Family.HIERARCHICAL:
            if int(self.nu) != self.nu or self.nu < 2:
                raise ValidationError(f"nu must be an integer >= 2, got {self.nu}", field='model.nu')
            if not 0 < self.p < 1:
                raise ValidationError(f"p must lie in (0, 1), got {self.p}", field='model.p')
            if int(self.levels) != self.levels or self.levels < 1:
                raise ValidationError(f"levels must be an integer >= 1, got {self.levels}",
                                      field='model.levels')
            object.__setattr__(self, 'nu', int(self.nu))
            object.__setattr__(self, 'levels', int(self.levels))
        if family == Family.GENERAL_GRAPH and self.c0 <= 0:
            raise ValidationError(f"c0 must be positive, got {self.c0}", field='model.c0')

    @property
    def dim(self) -> int:
        return 2 if self.family == Family.Z2 else 1

    @property
    def radius(self) -> int:
        return self.truncation.radius

    @property
    def is_lattice(self) -> bool:
        """True for families living on Z^d with Euclidean coordinates"""
        return self.family in (Family.Z1, Family.Z2, Family.FRACTIONAL)

    def with_radius(self, radius: int) -> 'ModelSpec':
        return ModelSpec(self.family, BoxSpec(radius), self.alpha, self.nu, self.p,
                         self.levels, self.generator_table, self.c0)

    def with_levels(self, levels: int) -> 'ModelSpec':
        if self.family != Family.HIERARCHICAL:
            raise FamilyMismatchError("levels only apply to the hierarchical family")
        return ModelSpec(self.family, self.truncation, self.alpha, self.nu, self.p,
                         levels, self.generator_table, self.c0)

    def rank_weights(self, levels: Optional[int] = None) -> np.ndarray:
        """a_r = (1-p) p^(r-1) for r = 1..levels"""
        self.require(Family.HIERARCHICAL)
        n = levels or self.levels
        r = np.arange(1, n + 1)
        return (1.0 - self.p) * self.p ** (r - 1)

    def require(self, *families: Family):
        if self.family not in families:
            names = ', '.join(f.value for f in families)
            raise FamilyMismatchError(f"Operation needs family {names}, got {self.family.value}")

    def describe(self) -> Dict[str, Any]:
        data = {'family': self.family.value, 'radius': self.radius}
        for name in ('alpha', 'nu', 'p', 'levels', 'c0'):
            value = getattr(self, name)
            if value is not None:
                data[name] = value
        if self.generator_table is not None:
            data['generator_table'] = self.generator_table.describe()
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'ModelSpec':
        """Build from a task-config mapping"""
        if not isinstance(data, Mapping) or 'family' not in data:
            raise ValidationError("model section needs a 'family'", field='model.family')
        table = None
        if data.get('generator_table') is not None:
            from src.operators import GeneratorTable
            table = GeneratorTable.from_records(data['generator_table'])
        return cls(
            family=data['family'],
            truncation=BoxSpec(int(data.get('radius', 0))),
            alpha=data.get('alpha'),
            nu=data.get('nu'),
            p=data.get('p'),
            levels=data.get('levels'),
            generator_table=table,
            c0=data.get('c0'),
        )


def box_sites(model: ModelSpec) -> List[Site]:
    """Sites of the truncated model in canonical row order"""
    if model.family in (Family.Z1, Family.FRACTIONAL):
        r = model.radius
        return [Site((x,)) for x in range(-r, r + 1)]
    if model.family == Family.Z2:
        r = model.radius
        return [Site((a, b)) for a, b in itertools.product(range(-r, r + 1), repeat=2)]
    if model.family == Family.HIERARCHICAL:
        return [Site((i,)) for i in range(model.nu ** model.levels)]
    return list(model.generator_table.sites)


def site_index(sites: Sequence[Site]) -> Dict[Site, int]:
    return {site: i for i, site in enumerate(sites)}


def in_box(model: ModelSpec, site: Site) -> bool:
    if model.is_lattice:
        return site.dim == model.dim and site.linf <= model.radius
    if model.family == Family.HIERARCHICAL:
        return 0 <= site.index < model.nu ** model.levels
    return site in model.generator_table.site_set


def hier_distance(x: Site, y: Site, spec: ModelSpec) -> int:
    """Smallest rank r with x and y in the same rank-r cube"""
    spec.require(Family.HIERARCHICAL)
    a, b = x.index, y.index
    if a < 0 or b < 0:
        raise ValidationError(f"Hierarchical indices must be nonnegative, got {a}, {b}")
    r = 0
    while a != b:
        a //= spec.nu
        b //= spec.nu
        r += 1
    return r


def hier_rho(x: Site, y: Site, x0: Site, spec: ModelSpec) -> float:
    """p^(-max(d_h(x0,x), d_h(x0,y))/2) - 1"""
    d = max(hier_distance(x0, x, spec), hier_distance(x0, y, spec))
    return spec.p ** (-d / 2.0) - 1.0


@dataclass(frozen=True)
class ToleranceConfig:
    neg_threshold: float = field(default_factory=lambda: config.NEG_THRESHOLD)
    quad_tol: float = field(default_factory=lambda: config.QUAD_TOL)
    extrap_tol: float = field(default_factory=lambda: config.EXTRAP_TOL)
    box_growth_factor: float = field(default_factory=lambda: config.BOX_GROWTH_FACTOR)

    def __post_init__(self):
        for name in ('neg_threshold', 'quad_tol', 'extrap_tol'):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive", field=f'tolerance.{name}')
        if not self.box_growth_factor > 1:
            raise ValidationError("box_growth_factor must exceed 1",
                                  field='tolerance.box_growth_factor')


@dataclass(frozen=True)
class Seed:
    value: int = 0

    def __post_init__(self):
        if int(self.value) != self.value or not 0 <= self.value < 2 ** 64:
            raise ValidationError(f"Seed must be a 64-bit unsigned integer, got {self.value}",
                                  field='seed')
        object.__setattr__(self, 'value', int(self.value))

    def rng(self, *stream: int) -> np.random.Generator:
        """Independent generator for the given stream key"""
        return np.random.default_rng(np.random.SeedSequence([self.value, *stream]))

    @classmethod
    def resolve(cls, value: Optional[int] = None) -> 'Seed':
        """SPECTRAL_SEED from the environment wins over the config value"""
        if config.SPECTRAL_SEED not in (None, ''):
            return cls(int(config.SPECTRAL_SEED))
        return cls(int(value) if value is not None else 0)


@dataclass(frozen=True)
class Potential:
    """Finite-support nonnegative site -> value map"""

    entries: Mapping[Site, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        dims = set()
        for site, value in self.entries.items():
            if not isinstance(site, Site):
                site = Site.of(site)
            value = float(value)
            if not math.isfinite(value) and value != math.inf:
                raise ValidationError(f"Potential value at {site} is not a number")
            if value < 0:
                raise ValidationError(f"Potential must be nonnegative, got {value} at {site}")
            dims.add(site.dim)
            if value > 0:
                clean[site] = value
        if len(dims) > 1:
            raise ValidationError("Potential mixes sites of different dimensions")
        object.__setattr__(self, 'entries', dict(sorted(clean.items())))

    def __getitem__(self, site: Site) -> float:
        return self.entries.get(site, 0.0)

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    @property
    def support(self) -> List[Site]:
        return list(self.entries)

    def items(self) -> List[Tuple[Site, float]]:
        return list(self.entries.items())

    def values(self) -> np.ndarray:
        return np.fromiter(self.entries.values(), dtype=float, count=len(self.entries))

    @property
    def max_value(self) -> float:
        return max(self.entries.values(), default=0.0)

    @property
    def total(self) -> float:
        return float(sum(self.entries.values()))

    @property
    def radius(self) -> int:
        """Largest max-coordinate (or index) of the support"""
        return max((s.linf for s in self.entries), default=0)

    @property
    def dim(self) -> Optional[int]:
        for site in self.entries:
            return site.dim
        return None

    def scaled(self, factor: float) -> 'Potential':
        return Potential({s: factor * v for s, v in self.entries.items()})

    def plus(self, other: 'Potential') -> 'Potential':
        merged = dict(self.entries)
        for s, v in other.entries.items():
            merged[s] = merged.get(s, 0.0) + v
        return Potential(merged)

    def dominates(self, other: 'Potential') -> bool:
        return all(self[s] >= v for s, v in other.entries.items())

    def to_records(self) -> List[List[float]]:
        return [[*s.coords, v] for s, v in self.entries.items()]


def as_site(value: Any, dim: int) -> Site:
    if isinstance(value, Site):
        return value
    if isinstance(value, (int, np.integer)):
        return Site((int(value),) + (0,) * (dim - 1))
    return Site.of(tuple(value))


def make_potential(kind: str, params: Mapping[str, Any], seed: Optional[Seed] = None,
                   model: Optional[ModelSpec] = None) -> Potential:
    """
    Construct a potential.

    Args:
        kind: one of explicit, single_delta, power_law, random_uniform
        params: kind-specific parameters
        seed: randomness for random_uniform
        model: optional model; supplies dimension and hierarchical site range

    Returns:
        Potential
    """
    params = dict(params or {})
    dim = int(params.get('dim', model.dim if model is not None else 1))

    if kind == 'explicit':
        entries = params.get('entries', {})
        if isinstance(entries, Mapping):
            return Potential({as_site(k if not isinstance(k, str) else [int(c) for c in k.split()], dim): v
                              for k, v in entries.items()})
        return Potential({Site.of(tuple(rec[:-1])): rec[-1] for rec in entries})

    if kind == 'single_delta':
        v = float(params.get('v', 0.0))
        if v < 0:
            raise ValidationError(f"Delta amplitude must be nonnegative, got {v}", field='potential.v')
        return Potential({as_site(params.get('site', 0), dim): v})

    if kind == 'power_law':
        beta = float(params.get('beta', 1.0))
        s = float(params.get('s', 1.0))
        offset = float(params.get('offset', 1.0))
        radius = int(params.get('radius', 10))
        if beta <= 0 or s <= 0:
            raise ValidationError("power_law needs beta > 0 and s > 0", field='potential.params')
        rng_ = range(-radius, radius + 1)
        sites = [Site((a,)) for a in rng_] if dim == 1 else \
            [Site((a, b)) for a, b in itertools.product(rng_, repeat=2)]
        return Potential({site: beta / (offset + site.norm) ** s for site in sites})

    if kind == 'random_uniform':
        seed = seed or Seed()
        amplitude = float(params.get('amplitude', 1.0))
        density = float(params.get('density', 1.0))
        if amplitude < 0:
            raise ValidationError(f"Amplitude must be nonnegative, got {amplitude}",
                                  field='potential.amplitude')
        if model is not None and model.family == Family.HIERARCHICAL:
            count = int(params.get('count', model.nu ** model.levels))
            sites = [Site((i,)) for i in range(count)]
        else:
            radius = int(params.get('radius', 5))
            rng_ = range(-radius, radius + 1)
            sites = [Site((a,)) for a in rng_] if dim == 1 else \
                [Site((a, b)) for a, b in itertools.product(rng_, repeat=2)]
        rng = seed.rng(int(params.get('stream', 0)))
        values = rng.uniform(0.0, amplitude, size=len(sites))
        keep = rng.random(len(sites)) < density
        return Potential({s: float(v) for s, v, k in zip(sites, values, keep) if k})

    raise ValidationError(f"Unknown potential kind '{kind}'", field='potential.kind')


def load_potential_file(path: str) -> Potential:
    """Read `coord1 [coord2] value` records; '#' starts a comment"""
    entries: Dict[Site, float] = {}
    width = None
    with open(path, encoding='utf-8') as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) not in (2, 3) or (width is not None and len(tokens) != width):
                raise ValidationError(f"Bad potential record '{line}'", line=lineno)
            width = len(tokens)
            try:
                site = Site(tuple(int(t) for t in tokens[:-1]))
                entries[site] = float(tokens[-1])
            except ValueError:
                raise ValidationError(f"Unparseable potential record '{line}'", line=lineno)
    logger.debug(f"Loaded {len(entries)} potential records from {path}")
    return Potential(entries)


def save_potential_file(potential: Potential, path: str):
    with open(path, 'w', encoding='utf-8') as fh:
        fh.write('# coords value\n')
        for site, value in potential.items():
            fh.write(f"{site} {value!r}\n")


def restrict_potential(potential: Potential, model: ModelSpec) -> Potential:
    """The part of the potential inside the model's truncation"""
    return Potential({s: v for s, v in potential.items() if in_box(model, s)})
