"""
Upper bounds on N0(V) and on Lieb-Thirring sums: Bargmann forms with the
regularized resolvent, CLR forms with free and killed heat kernels, the
closed-form family estimates and their constant calibration
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from src.continuum1d import GridPotential, refined_tail_factor, small_gamma_constant
from src.core import Family, ModelSpec, Potential, Seed, Site, ToleranceConfig, hier_distance, \
    make_potential, origin
from src.errors import (DivergenceError, FamilyMismatchError, InvariantViolation, NumericalError,
                        ValidationError)
from src.families import get_family
from src.families.hierarchical import spectral_dim
from src.kernels import KillingSpec, c_sigma, regularized_resolvent_table, tail_time_integral
from src.spectra import box_count, n0_count

logger = logging.getLogger(__name__)

PROVENANCE = ('exact', 'calibrated', 'user')

CLOSED_BOUNDS = {
    'z2_log': (Family.Z2, ('C',)),
    'z2_refined': (Family.Z2, ('C1', 'C2')),
    'fractional_transient': (Family.FRACTIONAL, ('C',)),
    'fractional_recurrent': (Family.FRACTIONAL, ('C',)),
    'hier_uniform': (Family.HIERARCHICAL, ('C',)),
    'hier_transient': (Family.HIERARCHICAL, ('C',)),
    'z1_refined': (Family.Z1, ('C1', 'C2')),
}

LT_VARIANTS = ('lt_transient', 'lt_transient_weighted', 'lt_killed', 'lt_killed_weighted',
               'lt_killed_sigma0', 'lt_killed_weighted_sigma0', 'continuum_lt', 'continuum_small_gamma')
WEIGHTED_LT = ('lt_transient_weighted', 'lt_killed_weighted', 'lt_killed_weighted_sigma0')


@dataclass
class BoundReport:
    """Value of one bound with its per-site terms and constants"""

    bound_id: str
    value: float
    sigma: float
    n0_term: float
    contributions: Dict[Any, float] = field(default_factory=dict)
    constants: Dict[str, Tuple[float, str]] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    alternatives: Dict[str, float] = field(default_factory=dict)
    method: str = 'closed_form'

    def __post_init__(self):
        for name, (_, provenance) in self.constants.items():
            if provenance not in PROVENANCE:
                raise ValidationError(f"Unknown provenance '{provenance}' for constant {name}")
        if math.isnan(self.value):
            raise InvariantViolation(f"{self.bound_id} evaluated to NaN")
        if self.value < self.n0_term - 1e-12:
            raise InvariantViolation(
                f"{self.bound_id}: value {self.value} is below its base term {self.n0_term}")
        if math.isfinite(self.value):
            total = self.n0_term + math.fsum(self.contributions.values())
            if abs(total - self.value) > 1e-12 * max(1.0, abs(self.value)):
                raise InvariantViolation(
                    f"{self.bound_id}: contributions sum to {total}, value is {self.value}")

    @property
    def is_exact(self) -> bool:
        return all(p == 'exact' for _, p in self.constants.values())

    def to_dict(self) -> Dict[str, Any]:
        return {
            'bound_id': self.bound_id,
            'value': self.value,
            'sigma': self.sigma,
            'n0_term': self.n0_term,
            'method': self.method,
            'constants': {k: {'value': v, 'provenance': p} for k, (v, p) in self.constants.items()},
            'alternatives': dict(self.alternatives),
            'notes': list(self.notes),
        }

    def write_contributions(self, path: str):
        with open(path, 'w', newline='', encoding='utf-8') as fh:
            writer = csv.writer(fh)
            writer.writerow(['site', 'contribution'])
            for key, value in self.contributions.items():
                writer.writerow([str(key), repr(float(value))])


def _report(bound_id: str, n0_term: float, contributions: Dict[Any, float], sigma: float,
            **kwargs) -> BoundReport:
    value = n0_term + math.fsum(contributions.values())
    return BoundReport(bound_id, value, sigma, n0_term, contributions, **kwargs)


def default_anchor(model: ModelSpec) -> Site:
    """x0 used when the caller gives none"""
    if model.family == Family.GENERAL_GRAPH:
        return model.generator_table.sites[0]
    if model.family == Family.HIERARCHICAL:
        return Site((0,))
    return origin(model.dim)


def _product(v: float, weight: float) -> float:
    """v * weight with inf * 0 = 0"""
    if weight == 0.0:
        return 0.0
    return v * weight


# Bargmann-type bounds

def bargmann_general(model: ModelSpec, v: Potential, x0: Optional[Site] = None,
                     tol: Optional[ToleranceConfig] = None, override: bool = False) -> BoundReport:
    """
    N0(V) <= 1 + sum_x min(1, V(x) R-tilde(x, x0))

    Args:
        model: recurrent family (or override=True for a transient one)
        v: finite-support potential
        x0: anchor of the regularized resolvent
        tol: tolerances
        override: evaluate R-tilde even when the walk is transient

    Returns:
        BoundReport with exact constants
    """
    x0 = x0 or default_anchor(model)
    family = get_family(model)
    if not override and model.family != Family.GENERAL_GRAPH and not family.is_recurrent(model):
        raise DivergenceError("Bargmann bound needs a recurrent walk", family.name)
    table = regularized_resolvent_table(model, x0, v.support, tol, allow_transient=override)
    contributions = {x: min(1.0, _product(value, table[x])) for x, value in v.items()}
    logger.debug(f"Bargmann on {model.family.value}: {len(contributions)} sites, anchor {x0}")
    return _report('bargmann_general', 1.0, contributions, 0.0, method=table.method,
                   notes=[f"anchor {x0}"])


def bargmann_1d(v: Union[Potential, GridPotential], lattice: Optional[bool] = None) -> BoundReport:
    """1 + sum |x| V(x) on Z, or 1 + int |x| V(x) dx on the line"""
    if isinstance(v, GridPotential):
        if lattice:
            raise ValidationError("A grid potential lives on the line, not on Z")
        weights = v.trapezoid_weights()
        contributions = {float(x): float(w * abs(x) * value)
                         for x, w, value in zip(v.nodes, weights, v.values) if value > 0}
        return _report('bargmann_1d', 1.0, contributions, 0.0, method='quadrature',
                       notes=['continuum, trapezoid rule'])
    if v.dim not in (None, 1):
        raise ValidationError(f"bargmann_1d needs a 1-D potential, got dimension {v.dim}")
    contributions = {x: _product(value, float(abs(x.index))) for x, value in v.items()}
    return _report('bargmann_1d', 1.0, contributions, 0.0, notes=['lattice'])


def refined_bargmann_1d_continuum(v: GridPotential, sigma: float = 1.0,
                                  tol: Optional[ToleranceConfig] = None) -> BoundReport:
    """
    1 + (1/c(sigma)) [ (sigma pi)^-1/2 int_{x^2 V <= sigma} x^2 V^3/2
                       + int_{x^2 V > sigma} |x| V ]

    The alternative 'tail_factor' replaces both regions by the exact
    |x| V F(sigma / (x^2 V)) it majorizes.
    """
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}", field='sigma')
    c = c_sigma(sigma, tol)
    weights = v.trapezoid_weights()
    contributions: Dict[Any, float] = {}
    exact_terms = []
    for x, w, value in zip(v.nodes, weights, v.values):
        if value <= 0 or w == 0:
            continue
        x2v = x * x * value
        if x2v <= sigma:
            term = x * x * value ** 1.5 / math.sqrt(sigma * math.pi)
        else:
            term = abs(x) * value
        contributions[float(x)] = float(w * term / c)
        if x2v > 0:
            exact_terms.append(w * abs(x) * value * refined_tail_factor(sigma / x2v))
    alternative = 1.0 + math.fsum(exact_terms) / c
    return _report('refined_bargmann_1d', 1.0, contributions, sigma, method='quadrature',
                   constants={'c_sigma': (c, 'exact')},
                   alternatives={'tail_factor': alternative})


# CLR bounds

def clr_estimate(model: ModelSpec, v: Potential, sigma: float = 1.0,
                 killed: Optional[Union[KillingSpec, Site]] = None,
                 tol: Optional[ToleranceConfig] = None, box=None) -> BoundReport:
    """
    CLR estimate through heat-kernel tails.

    Unkilled (transient walks only):  (1/c(sigma)) sum V int_{sigma/V}^inf p0
    Dirichlet point x0:               1 + (1/c(sigma)) sum V int_{sigma/V}^inf p1
    Killing potential q:              N0(q) + (2/c(2 sigma)) sum V int_{sigma/V}^inf p1

    Raises:
        DivergenceError: unkilled on a recurrent walk
    """
    if sigma < 0:
        raise ValidationError(f"sigma must be nonnegative, got {sigma}", field='sigma')
    if isinstance(killed, Site):
        killed = KillingSpec(x0=killed)
    family = get_family(model)
    notes: List[str] = []

    if killed is None:
        if sigma == 0:
            raise ValidationError("The unkilled CLR estimate needs sigma > 0", field='sigma')
        if family.is_recurrent(model) and model.family != Family.GENERAL_GRAPH:
            raise DivergenceError("CLR right-hand side is infinite for a recurrent walk", family.name)
        n0_term, c, kernel, scale = 0.0, c_sigma(sigma, tol), 'p0', 1.0
        bound_id = 'clr'
    elif killed.kind == 'point':
        n0_term, c, kernel, scale = 1.0, c_sigma(sigma, tol), killed, 1.0
        bound_id = 'clr_dirichlet'
        notes.append(f"Dirichlet point {killed.x0}")
    else:
        n0_term = float(_killing_count(model, killed.q, tol))
        c, kernel, scale = c_sigma(2.0 * sigma, tol), killed, 2.0
        bound_id = 'clr_killed'
        notes.append(f"n0 = N0(q) = {int(n0_term)} computed on expanding boxes")

    contributions: Dict[Any, float] = {}
    method = 'closed_form'
    for x, value in v.items():
        lower = sigma / value if math.isfinite(value) else 0.0
        tail = tail_time_integral(model, kernel, x, lower, tol, box=box)
        method = tail.method
        contributions[x] = scale * _product(value, tail.value) / c
    logger.debug(f"{bound_id} on {model.family.value}: base {n0_term}, {len(contributions)} terms")
    return _report(bound_id, n0_term, contributions, sigma, method=method,
                   constants={'c_sigma': (c, 'exact')}, notes=notes)


def _killing_count(model: ModelSpec, q: Potential, tol: Optional[ToleranceConfig]) -> int:
    """N0(q); every infinite entry is a Dirichlet site and adds at most one"""
    finite = Potential({s: w for s, w in q.items() if math.isfinite(w)})
    deleted = len(q) - len(finite)
    if not finite:
        return deleted + (0 if deleted else 1)
    return n0_count(model, finite, tol).n0 + deleted


# Closed-form family bounds

def _bracket(x: Site) -> float:
    """<x> = 2 + |x|"""
    return 2.0 + x.norm


def _hier_geometric(model: ModelSpec, d: int) -> float:
    """sum_{s < d} (nu p)^-s"""
    q = 1.0 / (model.nu * model.p)
    if abs(q - 1.0) < 1e-12:
        return float(d)
    return (q ** d - 1.0) / (q - 1.0)


def _closed_terms(bound_id: str, model: ModelSpec, v: Potential, constants: Mapping[str, float],
                  params: Mapping[str, Any]) -> Tuple[float, Dict[Any, float], List[str]]:
    """(base, per-site terms, notes) of a closed-form bound at given constants"""
    x0 = params.get('x0') or default_anchor(model)
    notes: List[str] = []
    terms: Dict[Any, float] = {}

    if bound_id == 'z2_log':
        C = constants['C']
        for x, value in v.items():
            terms[x] = C * _product(value, math.log(_bracket(x - x0)))
        return 1.0, terms, notes

    if bound_id == 'z2_refined':
        C1, C2 = constants['C1'], constants['C2']
        sigma = float(params.get('sigma', 1.0))
        h = params.get('h')
        base = 1.0
        if h is not None:
            h = float(h)
            heavy = [x for x, value in v.items() if value >= h]
            base += len(heavy)
            notes.append(f"m = #{{V >= {h}}} = {len(heavy)}")
        for x, value in v.items():
            if h is not None and value >= h:
                continue
            bracket = _bracket(x - x0)
            if value < sigma / bracket:
                terms[x] = C1 * value * math.log(bracket) ** 2 / math.log(sigma / value)
            else:
                terms[x] = C2 * _product(value, math.log(bracket))
        return base, terms, notes

    if bound_id == 'fractional_transient':
        alpha = model.alpha
        if alpha >= 0.5:
            raise ValidationError(f"fractional_transient needs alpha < 1/2, got {alpha}",
                                  field='model.alpha')
        C = constants['C']
        for x, value in v.items():
            terms[x] = min(1.0, C * value ** (1.0 / (2.0 * alpha)))
        return 0.0, terms, notes

    if bound_id == 'fractional_recurrent':
        alpha = model.alpha
        C = constants['C']
        for x, value in v.items():
            r = abs((x - x0).index)
            if abs(alpha - 0.5) < 1e-12:
                weight = math.log1p(r)
            else:
                weight = ((1.0 + r) ** (2.0 * alpha - 1.0) - 1.0) / (2.0 * alpha - 1.0)
            terms[x] = min(1.0, C * _product(value, weight))
        if alpha < 0.5:
            notes.append("recurrent form evaluated for a transient alpha")
        return 1.0, terms, notes

    if bound_id == 'hier_uniform':
        s_h = spectral_dim(model.nu, model.p)
        if s_h >= 3.0:
            raise ValidationError(f"hier_uniform holds for s_h < 3, got {s_h:.4f}")
        if abs(s_h - 2.0) < 1e-12:
            notes.append("logarithmic branch, weight d_h")
        C = constants['C']
        heavy = 0
        for x, value in v.items():
            if value >= 1.0:
                heavy += 1
                continue
            terms[x] = C * value * _hier_geometric(model, hier_distance(x, x0, model))
        return 1.0 + heavy, terms, notes

    if bound_id == 'hier_transient':
        s_h = spectral_dim(model.nu, model.p)
        if s_h <= 2.0:
            raise DivergenceError("hier_transient needs nu p > 1", 'Hierarchical')
        C = constants['C']
        heavy = 0
        for x, value in v.items():
            if value >= 1.0:
                heavy += 1
                continue
            terms[x] = C * value ** (s_h / 2.0)
        return float(heavy), terms, notes

    if bound_id == 'z1_refined':
        C1, C2 = constants['C1'], constants['C2']
        sigma = float(params.get('sigma', 1.0))
        for x, value in v.items():
            r = abs((x - x0).index)
            if value * r * r <= sigma:
                terms[x] = C1 * r * r * value ** 1.5
            else:
                terms[x] = C2 * _product(value, float(r))
        return 1.0, terms, notes

    raise ValidationError(f"Unknown bound id '{bound_id}'", field='bound_id')


def _check_family(bound_id: str, model: ModelSpec):
    if bound_id not in CLOSED_BOUNDS:
        raise ValidationError(f"Unknown bound id '{bound_id}'", field='bound_id')
    family, _ = CLOSED_BOUNDS[bound_id]
    if model.family != family:
        raise FamilyMismatchError(f"{bound_id} applies to {family.value}, got {model.family.value}")


def _exact_alternatives(bound_id: str, model: ModelSpec, v: Potential,
                        params: Mapping[str, Any], tol: Optional[ToleranceConfig]) -> Dict[str, float]:
    """Exact-constant bounds that cover the same family"""
    family = get_family(model)
    x0 = params.get('x0') or default_anchor(model)
    try:
        if family.is_recurrent(model):
            return {'bargmann_general': bargmann_general(model, v, x0, tol).value}
        return {'clr': clr_estimate(model, v, float(params.get('sigma', 1.0)) or 1.0, tol=tol).value}
    except NumericalError as e:
        logger.warning(f"Exact alternative for {bound_id} unavailable: {e}")
        return {}


def family_closed_bound(bound_id: str, model: ModelSpec, v: Potential,
                        params: Optional[Mapping[str, Any]] = None,
                        tol: Optional[ToleranceConfig] = None) -> BoundReport:
    """
    Evaluate a closed-form family estimate.

    Args:
        bound_id: one of CLOSED_BOUNDS
        model: model of the matching family
        v: potential
        params: constants (C or C1/C2), sigma, h, x0, seed, corpus_size,
            alternatives (bool)

    Returns:
        BoundReport; constants the caller does not supply are calibrated
    """
    params = dict(params or {})
    _check_family(bound_id, model)
    names = CLOSED_BOUNDS[bound_id][1]
    constants: Dict[str, Tuple[float, str]] = {}
    if all(name in params for name in names):
        constants = {name: (float(params[name]), 'user') for name in names}
    else:
        calibration = calibrate_constant(bound_id, model, params=params, tol=tol)
        constants = {name: (calibration.constant, 'calibrated') for name in names}
    base, terms, notes = _closed_terms(bound_id, model, v, {k: c for k, (c, _) in constants.items()},
                                       params)
    alternatives = _exact_alternatives(bound_id, model, v, params, tol) \
        if params.get('alternatives', True) else {}
    if alternatives:
        notes.append(f"exact-constant alternative {next(iter(alternatives))} is authoritative")
    method = 'calibrated' if any(p == 'calibrated' for _, p in constants.values()) else 'closed_form'
    return _report(bound_id, base, terms, float(params.get('sigma', 0.0)), constants=constants,
                   notes=notes, alternatives=alternatives, method=method)


def hier_clr_bound(model: ModelSpec, v: Potential, C: float) -> BoundReport:
    """#{V >= 1} + C sum_{V < 1} V^(s_h/2) on a transient hierarchical lattice"""
    return family_closed_bound('hier_transient', model, v, {'C': C, 'alternatives': False})


# Calibration

@dataclass
class CalibrationResult:
    bound_id: str
    constant: float
    per_potential: List[float]
    counts: List[int]

    @property
    def corpus_size(self) -> int:
        return len(self.counts)


def calibration_corpus(model: ModelSpec, size: int = 25, seed: Optional[Seed] = None,
                       offset: int = 0, radius: int = 6, amplitude: float = 1.0) -> List[Potential]:
    """Seeded random potentials; offset selects a disjoint block of streams"""
    seed = seed or Seed()
    params = {'radius': radius, 'amplitude': amplitude, 'density': 0.5}
    if model.family == Family.HIERARCHICAL:
        params['count'] = min(model.nu ** model.levels, model.nu ** 4)
    return [make_potential('random_uniform', {**params, 'stream': offset + i}, seed, model)
            for i in range(size)]


def _minimal_constant(evaluate: Callable[[float], float], target: float, rel_tol: float = 1e-9) -> float:
    """Smallest C with evaluate(C) >= target; evaluate is nondecreasing"""
    if evaluate(0.0) >= target:
        return 0.0
    hi = 1.0
    while evaluate(hi) < target:
        hi *= 2.0
        if hi > 1e15:
            raise NumericalError(f"No constant reaches the count {target}: the bound saturates")
    lo = 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if evaluate(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def calibrate_constant(bound_id: str, model: ModelSpec, corpus: Optional[Sequence[Potential]] = None,
                       counts: Optional[Sequence[int]] = None,
                       params: Optional[Mapping[str, Any]] = None,
                       tol: Optional[ToleranceConfig] = None) -> CalibrationResult:
    """
    Smallest C for which the bound dominates N0 on every corpus potential.
    Two-constant bounds are fitted with C1 = C2 = C.
    """
    params = dict(params or {})
    _check_family(bound_id, model)
    if corpus is None:
        corpus = calibration_corpus(model, int(params.get('corpus_size', 25)),
                                    Seed.resolve(params.get('seed')))
    if counts is None:
        counts = [n0_count(model, v, tol).n0 for v in corpus]
    if len(counts) != len(corpus):
        raise ValidationError("corpus and counts differ in length")
    names = CLOSED_BOUNDS[bound_id][1]
    per_potential = []
    for v, count in zip(corpus, counts):
        def evaluate(c: float, v=v) -> float:
            base, terms, _ = _closed_terms(bound_id, model, v, {n: c for n in names}, params)
            return base + math.fsum(terms.values())
        per_potential.append(_minimal_constant(evaluate, count))
    constant = max(per_potential, default=0.0)
    logger.info(f"Calibrated {bound_id}: C = {constant:.6g} over {len(corpus)} potentials")
    return CalibrationResult(bound_id, constant, per_potential, list(counts))


@dataclass(frozen=True)
class QuasiClassicalRow:
    scale: float
    n0: int
    functional: float

    @property
    def ratio(self) -> float:
        return self.n0 / self.functional if self.functional > 0 else math.inf


def quasi_classical_ratio(model: ModelSpec, v: Potential, scales: Sequence[float],
                          box_radius: Optional[int] = None,
                          tol: Optional[ToleranceConfig] = None) -> List[QuasiClassicalRow]:
    """N0(a V) against a sum V ln<x> on one fixed box"""
    if not model.is_lattice:
        raise FamilyMismatchError("quasi_classical_ratio needs a lattice family")
    box = model.with_radius(box_radius if box_radius is not None else max(model.radius, v.radius + 4))
    weight = math.fsum(value * math.log(_bracket(x)) for x, value in v.items())
    rows = []
    for a in scales:
        n0 = box_count(box, v.scaled(a), tol)
        rows.append(QuasiClassicalRow(float(a), n0, a * weight))
        logger.debug(f"Quasi-classical scale {a}: N0 = {n0}, functional {a * weight:.6g}")
    return rows


def ratio_band(rows: Sequence[QuasiClassicalRow]) -> float:
    """max ratio / min ratio"""
    ratios = [r.ratio for r in rows if r.n0 > 0]
    if not ratios:
        return 1.0
    return max(ratios) / min(ratios)


# Lieb-Thirring bounds

def _check_lambda(values: np.ndarray, Lambda: float):
    if values.size and float(values.max()) > Lambda * (1.0 + 1e-12):
        raise ValidationError(f"V exceeds Lambda = {Lambda} (max V = {float(values.max())})",
                              field='Lambda')


def lieb_thirring_bound(variant: str, model: Optional[ModelSpec], v: Union[Potential, GridPotential],
                        gamma: float, Lambda: Optional[float] = None, sigma: float = 1.0,
                        x0: Optional[Site] = None,
                        tol: Optional[ToleranceConfig] = None) -> BoundReport:
    """
    Upper bound on S_gamma = sum |lambda_j|^gamma.

    Args:
        variant: lt_transient, lt_transient_weighted (unkilled, transient walks);
            lt_killed, lt_killed_weighted and their sigma = 0 limits lt_killed_sigma0,
            lt_killed_weighted_sigma0 (killed at x0, V <= Lambda); continuum_lt,
            continuum_small_gamma (the line, grid potential). The weighted forms
            carry 2 gamma Gamma(gamma) and a t^-gamma time weight.
        model: operator family (ignored by the continuum variants)
        v: potential
        gamma: exponent, > 0
        Lambda: pointwise bound on V, max V by default
        sigma: time cutoff parameter of the unkilled and non-limit killed forms
        x0: anchor / Dirichlet point

    Returns:
        BoundReport whose n0_term is Lambda^gamma for the killed variants
    """
    if variant not in LT_VARIANTS:
        raise ValidationError(f"Unknown Lieb-Thirring variant '{variant}'", field='variant')
    if not gamma > 0:
        raise ValidationError(f"gamma must be positive, got {gamma}", field='gamma')
    if variant in WEIGHTED_LT and gamma >= 1:
        raise ValidationError(f"{variant} needs gamma < 1, got {gamma}", field='gamma')

    if variant.startswith('continuum'):
        if not isinstance(v, GridPotential):
            raise ValidationError(f"{variant} needs a grid potential")
        Lambda = v.max_value if Lambda is None else Lambda
        _check_lambda(v.values, Lambda)
        weights = v.trapezoid_weights()
        if variant == 'continuum_lt':
            terms = {float(x): float(w * value ** (1.0 + gamma) * abs(x))
                     for x, w, value in zip(v.nodes, weights, v.values) if value > 0}
            constants = {}
        else:
            if gamma >= 0.5:
                raise ValidationError(f"continuum_small_gamma needs gamma < 1/2, got {gamma}",
                                      field='gamma')
            c = small_gamma_constant(gamma)
            factor = 2.0 * gamma * special.gamma(gamma) * c
            terms = {float(x): float(factor * w * value * abs(x) ** (1.0 - 2.0 * gamma))
                     for x, w, value in zip(v.nodes, weights, v.values) if value > 0}
            constants = {'c_gamma': (c, 'exact')}
        return _report(variant, Lambda ** gamma, terms, 0.0, method='quadrature', constants=constants)

    if model is None or not isinstance(v, Potential):
        raise ValidationError(f"{variant} needs a model and a lattice potential")
    x0 = x0 or default_anchor(model)
    values = v.values()
    gamma_factor = 2.0 * gamma * special.gamma(gamma)
    constants: Dict[str, Tuple[float, str]] = {}
    terms: Dict[Any, float] = {}
    method = 'closed_form'

    if variant in ('lt_transient', 'lt_transient_weighted'):
        if not sigma > 0:
            raise ValidationError("lt_transient and lt_transient_weighted need sigma > 0", field='sigma')
        family = get_family(model)
        if family.is_recurrent(model) and model.family != Family.GENERAL_GRAPH:
            raise DivergenceError(f"{variant} is infinite for a recurrent walk", family.name)
        c = c_sigma(sigma, tol)
        constants['c_sigma'] = (c, 'exact')
        for x, value in v.items():
            if variant == 'lt_transient':
                tail = tail_time_integral(model, 'p0', x, sigma / value, tol)
                terms[x] = value ** (1.0 + gamma) * tail.value / c
            else:
                tail = tail_time_integral(model, 'p0', x, sigma / value, tol, weight_power=gamma)
                terms[x] = gamma_factor * value * tail.value / c
            method = tail.method
        return _report(variant, 0.0, terms, sigma, method=method, constants=constants)

    Lambda = float(values.max()) if Lambda is None and values.size else (Lambda or 0.0)
    _check_lambda(values, Lambda)
    killing = KillingSpec(x0=x0)

    if variant == 'lt_killed_sigma0':
        table = regularized_resolvent_table(model, x0, v.support, tol)
        terms = {x: _product(value ** (1.0 + gamma), table[x]) for x, value in v.items()}
        method = table.method
        sigma = 0.0
    elif variant == 'lt_killed_weighted_sigma0':
        for x, value in v.items():
            tail = tail_time_integral(model, killing, x, 0.0, tol, weight_power=gamma)
            terms[x] = gamma_factor * _product(value, tail.value)
            method = tail.method
        sigma = 0.0
    else:
        if not sigma > 0:
            raise ValidationError(f"{variant} needs sigma > 0", field='sigma')
        c = c_sigma(sigma, tol)
        constants['c_sigma'] = (c, 'exact')
        for x, value in v.items():
            if variant == 'lt_killed':
                tail = tail_time_integral(model, killing, x, sigma / value, tol)
                terms[x] = _product(value ** (1.0 + gamma), tail.value) / c
            else:
                tail = tail_time_integral(model, killing, x, sigma / value, tol, weight_power=gamma)
                terms[x] = gamma_factor * _product(value, tail.value) / c
            method = tail.method
    return _report(variant, Lambda ** gamma, terms, sigma, method=method, constants=constants,
                   notes=[f"Dirichlet point {x0}", f"Lambda = {Lambda}"])
