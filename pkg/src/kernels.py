"""
Resolvent and heat kernels of the free operators, regularized resolvents,
killed kernels and their time integrals
"""
import logging
import math
import threading
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

import config
from src.core import BoxSpec, Family, ModelSpec, Potential, Site, ToleranceConfig, in_box
from src.errors import (DivergenceError, FamilyMismatchError, InvariantViolation, NumericalError,
                        ValidationError)
from src.families import DecayClass, extrapolate_to_zero, get_family, get_registry
from src.families.base import guarded_quad
from src.families.hierarchical import hier_heat, spectral_dim
from src.operators import SparseSymmetric, add_killing, assemble_h0, dirichlet_at

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResolventValue:
    lam: float
    x: Site
    y: Site
    value: float
    method: str

    def __post_init__(self):
        if self.lam > 0 and not self.value < 0:
            raise InvariantViolation(
                f"R_lambda({self.x}, {self.y}) = {self.value} is not negative at lambda = {self.lam}")

    def to_dict(self) -> Dict[str, Any]:
        return {'lambda': self.lam, 'x': list(self.x.coords), 'y': list(self.y.coords),
                'value': self.value, 'method': self.method}


@dataclass
class RegularizedResolvent:
    """R-tilde(x, x0) over a set of sites"""

    x0: Site
    table: Dict[Site, float]
    method: str = 'closed_form'

    def __post_init__(self):
        for site, value in self.table.items():
            if not math.isfinite(value) or value < -1e-9:
                raise InvariantViolation(f"R-tilde({site}, {self.x0}) = {value} is not finite and >= 0")
        if self.table.get(self.x0, 0.0) != 0.0:
            raise InvariantViolation(f"R-tilde({self.x0}, {self.x0}) must vanish")

    def __getitem__(self, site: Site) -> float:
        return self.table[site]

    def to_csv(self, path: str):
        with open(path, 'w', encoding='utf-8') as fh:
            for site, value in self.table.items():
                fh.write(f"{site} {value!r}\n")
        logger.info(f"Wrote {len(self.table)} R-tilde values to {path}")


@dataclass
class Green2DExpansion:
    """R_lambda(x, 0) = (1/4 pi) ln(lambda (1+|x|)^2) + u(x) + o(1) on Z^2"""

    u: Dict[Site, float]
    alpha_const: float
    v: Dict[Site, float]
    consistency: float = 0.0

    def to_csv(self, path: str):
        with open(path, 'w', encoding='utf-8') as fh:
            for site in self.u:
                fh.write(f"{site} {self.u[site]!r} {self.v[site]!r}\n")


@dataclass
class HeatDiagonal:
    model_tag: str
    x: Site
    samples: Dict[float, float]

    def __post_init__(self):
        for t, value in self.samples.items():
            if not 0.0 < value <= 1.0 + 1e-12:
                raise InvariantViolation(f"p0({t}, {self.x}, {self.x}) = {value} outside (0, 1]")

    def is_nonincreasing(self, slack: float = 1e-12) -> bool:
        values = [self.samples[t] for t in sorted(self.samples)]
        return all(b <= a + slack for a, b in zip(values, values[1:]))


@dataclass(frozen=True)
class KillingSpec:
    """Either a Dirichlet point x0 or a killing potential q"""

    x0: Optional[Site] = None
    q: Optional[Potential] = None

    def __post_init__(self):
        if (self.x0 is None) == (self.q is None):
            raise ValidationError("Killing needs exactly one of x0 or q", field='killing')

    @property
    def kind(self) -> str:
        return 'point' if self.x0 is not None else 'potential'

    def key(self) -> Tuple:
        if self.x0 is not None:
            return ('point', self.x0)
        return ('potential', tuple(self.q.items()))

    def sites(self) -> List[Site]:
        return [self.x0] if self.x0 is not None else self.q.support

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], dim: int = 1) -> 'KillingSpec':
        if 'x0' in data:
            return cls(x0=Site.of(data['x0']) if not isinstance(data['x0'], int)
                       else Site((data['x0'],) + (0,) * (dim - 1)))
        from src.core import make_potential
        return cls(q=make_potential('explicit', {'entries': data.get('q', {}), 'dim': dim}))


@dataclass
class TailIntegral:
    """int_lower^inf t^-w p(t, x, x) dt with its audit trail"""

    value: float
    quadrature_part: float
    tail_part: float
    horizon: float
    prefactor: float
    decay: DecayClass
    method: str

    def to_dict(self) -> Dict[str, Any]:
        return {'value': self.value, 'quadrature_part': self.quadrature_part,
                'tail_part': self.tail_part, 'horizon': self.horizon,
                'prefactor': self.prefactor, 'decay_power': self.decay.power,
                'decay_log_power': self.decay.log_power, 'method': self.method}


@dataclass
class LogPeriodicProfile:
    s_h: float
    phases: List[float]
    values: List[float]
    correlation: float
    max_deviation: float


# Free kernels

def _tol(tol: Optional[ToleranceConfig]) -> ToleranceConfig:
    return tol or ToleranceConfig()


def resolvent(model: ModelSpec, lam: float, x: Site, y: Site,
              tol: Optional[ToleranceConfig] = None) -> ResolventValue:
    """
    Resolvent kernel R_lambda(x, y) = -int e^(-lambda t) p0(t, x, y) dt

    Args:
        model: operator family
        lam: spectral parameter, lambda > 0
        x, y: sites

    Returns:
        ResolventValue (negative)
    """
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam}", field='lambda')
    family = get_family(model)
    family.check_site(model, x)
    family.check_site(model, y)
    value, method = family.resolvent(model, lam, x, y, _tol(tol))
    return ResolventValue(lam, x, y, value, method)


def dirichlet_resolvent_diag(model: ModelSpec, lam: float, x: Site, x0: Site,
                             tol: Optional[ToleranceConfig] = None) -> float:
    """R^(1)_lambda(x, x) = R(x, x) - R(x, x0)^2 / R(x0, x0); zero at x0"""
    if x == x0:
        return 0.0
    rxx = resolvent(model, lam, x, x, tol).value
    rx0 = resolvent(model, lam, x, x0, tol).value
    r00 = resolvent(model, lam, x0, x0, tol).value
    return rxx - rx0 * rx0 / r00


def regularized_resolvent(model: ModelSpec, x: Site, x0: Site,
                          tol: Optional[ToleranceConfig] = None,
                          allow_transient: bool = False) -> float:
    """
    R-tilde(x, x0) = 2 lim [R_lambda(x, x0) - R_lambda(x0, x0)] as lambda -> 0

    Raises DivergenceError for transient lattice and hierarchical walks unless
    allow_transient is set; general graphs always attempt the limit.
    """
    family = get_family(model)
    if not allow_transient and model.family != Family.GENERAL_GRAPH and not family.is_recurrent(model):
        raise DivergenceError("R-tilde is defined for recurrent walks only", family.name)
    family.check_site(model, x)
    family.check_site(model, x0)
    value, _ = family.regularized_resolvent(model, x, x0, _tol(tol))
    return value


def regularized_resolvent_table(model: ModelSpec, x0: Site, sites: Iterable[Site],
                                tol: Optional[ToleranceConfig] = None,
                                allow_transient: bool = False) -> RegularizedResolvent:
    """R-tilde on many sites; values are shared between symmetric offsets"""
    family = get_family(model)
    sites = list(sites)
    by_key: Dict[Any, Site] = {}
    for site in sites:
        by_key.setdefault(family.symmetry_key(model, site, x0), site)
    computed = get_registry().build_table(
        lambda s: regularized_resolvent(model, s, x0, tol, allow_transient), by_key.values())
    table = {s: computed[by_key[family.symmetry_key(model, s, x0)]] for s in sites}
    method = family.regularized_resolvent(model, x0, x0, _tol(tol))[1]
    return RegularizedResolvent(x0, table, method)


def c_sigma(sigma: float, tol: Optional[ToleranceConfig] = None) -> float:
    """c(sigma) = e^-sigma int_0^inf z e^-z / (z + sigma) dz"""
    if sigma < 0:
        raise ValidationError(f"sigma must be nonnegative, got {sigma}", field='sigma')
    if sigma == 0:
        return 1.0
    tol = _tol(tol)
    value = guarded_quad(lambda z: z * math.exp(-z) / (z + sigma), 0.0, math.inf,
                         tol.quad_tol, f"c({sigma})")
    return math.exp(-sigma) * value


def heat_kernel(model: ModelSpec, t: float, x: Site, y: Site,
                tol: Optional[ToleranceConfig] = None) -> float:
    if t < 0:
        raise ValidationError(f"t must be nonnegative, got {t}", field='t')
    if t == 0:
        return 1.0 if x == y else 0.0
    family = get_family(model)
    return family.heat_kernel(model, t, x, y, _tol(tol))[0]


def heat_diagonal(model: ModelSpec, t: float, x: Site,
                  tol: Optional[ToleranceConfig] = None) -> float:
    """p0(t, x, x)"""
    return heat_kernel(model, t, x, x, tol)


def heat_diagonal_samples(model: ModelSpec, x: Site, t_grid: Sequence[float],
                          tol: Optional[ToleranceConfig] = None) -> HeatDiagonal:
    samples = {float(t): heat_diagonal(model, t, x, tol) for t in t_grid}
    return HeatDiagonal(model.family.value, x, samples)


def spectral_dimension(model: ModelSpec) -> float:
    return get_family(model).spectral_dimension(model)


def is_recurrent(model: ModelSpec) -> bool:
    return get_family(model).is_recurrent(model)


def resolvent_row_sum(model: ModelSpec, lam: float, y: Site, radius: int,
                      tol: Optional[ToleranceConfig] = None) -> Tuple[float, str]:
    """
    sum_x R_lambda(x, y): explicit over max-distance <= radius plus a tail

    The Z^1 tail is summed in closed form; other lattices extrapolate the shell
    sums geometrically.
    """
    model.require(Family.Z1, Family.Z2, Family.FRACTIONAL)
    tol = _tol(tol)
    family = get_family(model)
    if model.family == Family.Z1:
        s = math.sqrt(lam * lam + 4.0 * lam)
        a = (2.0 + lam + s) / 2.0
        head = sum(resolvent(model, lam, y + Site((d,)), y, tol).value
                   for d in range(-radius, radius + 1))
        tail = -2.0 * a ** (-(radius + 1)) / (s * (1.0 - 1.0 / a))
        return head + tail, 'closed_form'

    cache: Dict[Any, float] = {}

    def value(x: Site) -> float:
        key = family.symmetry_key(model, x, y)
        if key not in cache:
            cache[key] = resolvent(model, lam, x, y, tol).value
        return cache[key]

    shells = []
    for d in range(radius + 1):
        if model.family == Family.Z2:
            ring = [Site((a, b)) for a in range(-d, d + 1) for b in range(-d, d + 1)
                    if max(abs(a), abs(b)) == d]
        else:
            ring = [Site((d,))] if d == 0 else [Site((d,)), Site((-d,))]
        shells.append(sum(value(y + s) for s in ring))
    head = float(sum(shells))
    ratio = shells[-1] / shells[-2] if len(shells) > 1 and shells[-2] else 0.0
    tail = shells[-1] * ratio / (1.0 - ratio) if 0.0 < ratio < 1.0 else 0.0
    return head + tail, 'quadrature'


# Killed kernels

def _time_weight(mu: np.ndarray, a: float, b: float, w: float) -> np.ndarray:
    """int_a^b t^-w e^(-mu t) dt for mu >= 0 and 0 <= w < 1"""
    mu = np.asarray(mu, dtype=float)
    out = np.empty_like(mu)
    zero = mu <= 0.0
    pos = ~zero
    if np.any(zero):
        out[zero] = (b ** (1.0 - w) - a ** (1.0 - w)) / (1.0 - w) if math.isfinite(b) else math.inf
    m = mu[pos]
    if w == 0.0:
        upper = np.exp(-m * b) if math.isfinite(b) else 0.0
        out[pos] = (np.exp(-m * a) - upper) / m
    else:
        s = 1.0 - w
        upper = special.gammaincc(s, m * b) if math.isfinite(b) else 0.0
        out[pos] = special.gamma(s) * m ** (-s) * (special.gammaincc(s, m * a) - upper)
    return out


def valid_horizon(model: ModelSpec) -> float:
    """Largest time at which the truncated killed kernel tracks the infinite one"""
    if model.family in (Family.Z1, Family.Z2):
        return (model.radius / 3.0) ** 2
    if model.family == Family.FRACTIONAL:
        return (model.radius / 3.0) ** (2.0 * model.alpha)
    if model.family == Family.HIERARCHICAL:
        return 0.1 * model.p ** (-model.levels)
    return math.inf


def default_killing_box(model: ModelSpec, sites: Sequence[Site]) -> ModelSpec:
    reach = max((s.linf for s in sites), default=0)
    if model.family in (Family.Z1, Family.FRACTIONAL):
        return model.with_radius(max(model.radius, 400, reach + 10))
    if model.family == Family.Z2:
        return model.with_radius(max(model.radius, 20, reach + 4))
    if model.family == Family.HIERARCHICAL:
        fit = int(math.log(config.DENSE_LIMIT) / math.log(model.nu))
        needed = 1
        while model.nu ** needed <= reach:
            needed += 1
        return model.with_levels(max(model.levels, needed, min(10, fit)))
    return model


class KilledSpectrum:
    """Eigendecomposition of H1 = H0 + q (or H0 with x0 deleted) on a box"""

    def __init__(self, box: ModelSpec, killing: KillingSpec):
        h0 = assemble_h0(box)
        if killing.kind == 'point':
            h1 = dirichlet_at(h0, killing.x0)
        else:
            infinite = [s for s, v in killing.q.items() if v == math.inf]
            finite = Potential({s: v for s, v in killing.q.items() if v != math.inf})
            h1 = add_killing(h0, finite)
            for site in infinite:
                h1 = dirichlet_at(h1, site)
        if h1.n > config.DENSE_LIMIT:
            raise NumericalError(f"Killed box of size {h1.n} exceeds the dense limit")
        self.box = box
        self.killing = killing
        self.operator: SparseSymmetric = h1
        self.eigenvalues, self.eigenvectors = np.linalg.eigh(h1.to_dense())
        self.horizon = valid_horizon(box)

    def weights(self, x: Site) -> Optional[np.ndarray]:
        """phi_k(x)^2, or None on a deleted site"""
        if x not in self.operator.index:
            return None
        return self.eigenvectors[self.operator.index[x]] ** 2

    def diagonal(self, x: Site, t: float) -> float:
        w = self.weights(x)
        if w is None:
            return 0.0
        return float(np.sum(w * np.exp(-self.eigenvalues * t)))

    def integral(self, x: Site, a: float, b: float, power: float = 0.0) -> float:
        w = self.weights(x)
        if w is None:
            return 0.0
        return float(np.sum(w * _time_weight(self.eigenvalues, a, b, power)))


_spectrum_cache: Dict[Tuple, KilledSpectrum] = {}
_cache_lock = threading.Lock()


def killed_spectrum(box: ModelSpec, killing: KillingSpec) -> KilledSpectrum:
    key = (box, killing.key())
    with _cache_lock:
        cached = _spectrum_cache.get(key)
    if cached is not None:
        return cached
    spectrum = KilledSpectrum(box, killing)
    with _cache_lock:
        if len(_spectrum_cache) >= 16:
            _spectrum_cache.clear()
        _spectrum_cache[key] = spectrum
    return spectrum


def killed_heat_diagonal(model: ModelSpec, killing: Union[KillingSpec, Site], t: float, x: Site,
                         box: Optional[BoxSpec] = None,
                         tol: Optional[ToleranceConfig] = None) -> float:
    """
    p1(t, x, x) of the killed semigroup

    Args:
        model: operator family
        killing: KillingSpec, or a bare site for a Dirichlet point
        t: time
        x: site
        box: truncation; must be large enough for t

    Returns:
        p1(t, x, x), between 0 and p0(t, x, x)
    """
    if not isinstance(killing, KillingSpec):
        killing = KillingSpec(x0=killing)
    if t < 0:
        raise ValidationError(f"t must be nonnegative, got {t}", field='t')
    if killing.kind == 'point' and x == killing.x0:
        return 0.0
    if t == 0:
        return 1.0
    family = get_family(model)
    if killing.kind == 'point' and box is None:
        closed = family.point_killed_kernel(model, killing.x0, x)
        if closed is not None:
            return closed(t)
    sites = killing.sites() + [x]
    if box is not None and model.is_lattice:
        boxed = model.with_radius(box.radius)
    elif model.is_lattice and box is None:
        spread = t ** (1.0 / (2.0 * model.alpha)) if model.family == Family.FRACTIONAL else math.sqrt(t)
        boxed = default_killing_box(model, sites)
        boxed = boxed.with_radius(max(boxed.radius, int(math.ceil(3.0 * spread))))
    else:
        boxed = default_killing_box(model, sites)
    if t > valid_horizon(boxed):
        raise ValidationError(
            f"Box {boxed.radius} is too small for t = {t} (valid up to {valid_horizon(boxed):.4g})",
            field='box')
    for site in sites:
        if not in_box(boxed, site):
            raise ValidationError(f"Site {site} lies outside the killing box")
    return killed_spectrum(boxed, killing).diagonal(x, t)


def _log_quad(f: Callable[[float], float], a: float, b: float, w: float, tol: float,
              what: str) -> float:
    """int_a^b t^-w f(t) dt, with t = e^u on [1, b]"""
    total = 0.0
    if a < 1.0:
        top = min(1.0, b)
        if w > 0 and a == 0.0:
            total += guarded_quad(f, 0.0, top, tol, what, weight='alg', wvar=(-w, 0.0))
        else:
            total += guarded_quad(lambda t: t ** (-w) * f(t), a, top, tol, what)
    lo = max(a, 1.0)
    if b > lo:
        total += guarded_quad(lambda u: math.exp(u * (1.0 - w)) * f(math.exp(u)),
                              math.log(lo), math.log(b), tol, what, limit=800)
    return total


def _fitted_tail(p: Callable[[float], float], decay: DecayClass, horizon: float,
                 lower: float, w: float) -> Tuple[float, float]:
    """Analytic tail from max(lower, horizon); returns (tail, prefactor)"""
    start = max(lower, horizon)
    value = p(horizon)
    if decay.log_power == 0.0 and horizon >= 4.0:
        beta = decay.power
        half = p(horizon / 2.0)
        # p ~ C t^-beta (1 + b/t)
        r = half * (horizon / 2.0) ** beta / (value * horizon ** beta) if value > 0 else 1.0
        b = horizon * (r - 1.0) / (2.0 - r) if r != 2.0 else 0.0
        if abs(b) > 0.5 * horizon:
            b = 0.0
        c = value * horizon ** beta / (1.0 + b / horizon)
        e = beta + w
        tail = c * (start ** (1.0 - e) / (e - 1.0) + b * start ** (-e) / e)
        return tail, c
    c = decay.prefactor(value, horizon)
    return decay.tail(c, start, w), c


def tail_time_integral(model: ModelSpec, kernel: Union[str, KillingSpec, Site], x: Site,
                       lower: float, tol: Optional[ToleranceConfig] = None,
                       weight_power: float = 0.0, box: Optional[BoxSpec] = None) -> TailIntegral:
    """
    int_lower^inf t^-w p(t, x, x) dt for the free kernel ('p0') or a killed one

    Raises:
        DivergenceError: the family's decay class makes the integral infinite
    """
    tol = _tol(tol)
    if lower < 0:
        raise ValidationError(f"lower must be nonnegative, got {lower}", field='lower')
    if not 0.0 <= weight_power < 1.0:
        raise ValidationError(f"weight power must lie in [0, 1), got {weight_power}")
    family = get_family(model)
    if isinstance(kernel, Site):
        kernel = KillingSpec(x0=kernel)
    killed = isinstance(kernel, KillingSpec)
    decay = family.tail_decay(model, killed)
    if not decay.converges(weight_power):
        raise DivergenceError(f"time integral of {'p1' if killed else 'p0'} diverges", family.name)
    if math.isinf(lower):
        return TailIntegral(0.0, 0.0, 0.0, lower, 0.0, decay, 'closed_form')

    if not killed:
        return _free_time_integral(model, x, lower, weight_power, decay, tol)

    if kernel.kind == 'point' and x == kernel.x0:
        return TailIntegral(0.0, 0.0, 0.0, 0.0, 0.0, decay, 'closed_form')

    closed = family.point_killed_kernel(model, kernel.x0, x) if kernel.kind == 'point' else None
    if closed is not None and box is None:
        reach = (x - kernel.x0).linf
        horizon = min(1e8, 1e4 * (reach * reach + 1.0))
        head = _log_quad(closed, lower, horizon, weight_power, tol.quad_tol,
                         f"killed kernel at {x}") if lower < horizon else 0.0
        tail, prefactor = _fitted_tail(closed, decay, horizon, lower, weight_power)
        return TailIntegral(head + tail, head, tail, horizon, prefactor, decay, 'closed_form')

    boxed = model.with_radius(box.radius) if (box is not None and model.is_lattice) else \
        default_killing_box(model, kernel.sites() + [x])
    spectrum = killed_spectrum(boxed, kernel)
    horizon = spectrum.horizon
    if math.isinf(horizon):
        value = spectrum.integral(x, lower, math.inf, weight_power)
        if not math.isfinite(value):
            raise DivergenceError("killed kernel keeps a zero mode", family.name)
        return TailIntegral(value, value, 0.0, horizon, 0.0, decay, 'dense')
    head = spectrum.integral(x, lower, horizon, weight_power) if lower < horizon else 0.0
    tail, prefactor = _fitted_tail(lambda t: spectrum.diagonal(x, t), decay, horizon, lower,
                                   weight_power)
    logger.debug(f"Killed tail at {x}: head {head:.6g}, tail {tail:.6g} from T = {horizon:.4g}")
    return TailIntegral(head + tail, head, tail, horizon, prefactor, decay, 'dense')


def _free_time_integral(model: ModelSpec, x: Site, lower: float, w: float, decay: DecayClass,
                        tol: ToleranceConfig) -> TailIntegral:
    """Transient p0 integrals, summed through the spectral representation"""
    if model.family == Family.HIERARCHICAL:
        nu, p = model.nu, model.p
        rate = nu * p ** (1.0 - w)
        count = int(math.ceil(80.0 / math.log(rate))) + 1
        if lower > 0:
            count += int(math.ceil(math.log(max(lower, 1.0)) / math.log(1.0 / p)))
        if count > 200000:
            raise NumericalError(f"Hierarchical time series converges too slowly (rate {rate})")
        s = np.arange(count)
        weights = (1.0 - 1.0 / nu) * float(nu) ** (-s.astype(float))
        value = float(np.sum(weights * _time_weight(p ** s, lower, math.inf, w)))
        return TailIntegral(value, value, 0.0, math.inf, 0.0, decay, 'series')

    if model.family == Family.FRACTIONAL:
        alpha = model.alpha
        from src.families.fractional import symbol

        def integrand(phi: float) -> float:
            if phi <= 0:
                return 0.0
            sym = symbol(phi, alpha)
            return float(_time_weight(np.array([sym]), lower, math.inf, w)[0]) \
                * phi ** (2.0 * alpha * (1.0 - w))

        value = guarded_quad(integrand, 0.0, math.pi, tol.quad_tol, "fractional p0 time integral",
                             weight='alg', wvar=(-2.0 * alpha * (1.0 - w), 0.0)) / math.pi
        return TailIntegral(value, value, 0.0, math.inf, 0.0, decay, 'quadrature')

    if model.family == Family.GENERAL_GRAPH:
        h0 = assemble_h0(model)
        values, vectors = np.linalg.eigh(h0.to_dense())
        weights = vectors[h0.index_of(x)] ** 2
        if np.any((values <= 1e-12) & (weights > 1e-14)):
            raise DivergenceError("p0 has a zero mode on this graph", 'GeneralGraph')
        value = float(np.sum(weights * _time_weight(values, lower, math.inf, w)))
        return TailIntegral(value, value, 0.0, math.inf, 0.0, decay, 'dense')

    raise DivergenceError("time integral of p0 diverges", model.family.value)


# Hierarchical and Z^2 diagnostics

def hier_log_periodic(model: ModelSpec, x: Site, t_grid: Sequence[float]) -> LogPeriodicProfile:
    """
    Samples of p(t, x, x) t^(s_h/2) against ln t / ln(1/p) mod 1, with the
    correlation between each sample and the one a period later
    """
    if model.family != Family.HIERARCHICAL:
        raise FamilyMismatchError("log-periodic profiles need the hierarchical family")
    nu, p = model.nu, model.p
    s_h = spectral_dim(nu, p)
    ts = np.asarray(sorted(float(t) for t in t_grid))
    if ts.size < 3 or ts[0] <= 0:
        raise ValidationError("t_grid needs at least three positive times", field='t_grid')

    def profile(t: float) -> float:
        return hier_heat(nu, p, t, 0) * t ** (s_h / 2.0)

    values = np.array([profile(t) for t in ts])
    shifted = np.array([profile(t / p) for t in ts])
    phases = np.mod(np.log(ts) / math.log(1.0 / p), 1.0)
    if np.std(values) == 0 or np.std(shifted) == 0:
        correlation = 1.0
    else:
        correlation = float(np.corrcoef(values, shifted)[0, 1])
    deviation = float(np.max(np.abs(values - shifted) / values))
    return LogPeriodicProfile(s_h, phases.tolist(), values.tolist(), correlation, deviation)


GREEN_ALPHA = -5.0 * math.log(2.0) / (4.0 * math.pi)


def green2d_expansion(x_range: int, tol: Optional[ToleranceConfig] = None,
                      sites: Optional[Iterable[Site]] = None) -> Green2DExpansion:
    """
    u(x) = lim [R_lambda(x, 0) - (1/4 pi) ln(lambda (1+|x|)^2)] on Z^2

    Each limit is extrapolated from lambda_k = lambda_0 2^-k with lambda_0 inside
    lambda (1+|x|)^2 ln(2+|x|) <= 1/2.
    """
    tol = _tol(tol)
    model = ModelSpec(Family.Z2)
    family = get_family(model)
    origin = Site((0, 0))
    if sites is None:
        sites = [Site((a, b)) for a in range(-x_range, x_range + 1)
                 for b in range(-x_range, x_range + 1)]
    sites = list(sites)

    def limit(site: Site) -> float:
        scale = (1.0 + site.norm) ** 2
        lam0 = 0.5 / (scale * math.log(2.0 + site.norm))

        def shifted(lam: float) -> float:
            return family.resolvent(model, lam, site, origin, tol)[0] \
                - math.log(lam * scale) / (4.0 * math.pi)

        value, _ = extrapolate_to_zero(shifted, lam0, tol.extrap_tol, basis='log')
        return value

    by_key: Dict[Any, Site] = {}
    for site in sites:
        by_key.setdefault(family.symmetry_key(model, site, origin), site)
    try:
        computed = get_registry().build_table(limit, by_key.values())
    except NumericalError as e:
        raise NumericalError(f"Green expansion extrapolation failed: {e}")
    u = {s: computed[by_key[family.symmetry_key(model, s, origin)]] for s in sites}
    alpha_const = u.get(origin, GREEN_ALPHA)
    v = {s: value - alpha_const for s, value in u.items()}
    if origin in v:
        v[origin] = 0.0

    worst = 0.0
    for site in list(by_key.values())[:8]:
        if site == origin:
            continue
        rtilde = family.regularized_resolvent(model, site, origin, tol)[0]
        predicted = math.log(1.0 + site.norm) / math.pi + 2.0 * v[site]
        worst = max(worst, abs(rtilde - predicted))
    return Green2DExpansion(u, alpha_const, v, worst)
