"""
Operator family base class and the numerical helpers the families share
"""
import logging
import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from src.core import Family, ModelSpec, Site, ToleranceConfig
from src.errors import DivergenceError, NonConvergenceError, NumericalError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecayClass:
    """Large-t law C t^(-power) (ln t)^(-log_power) of a heat-kernel diagonal"""

    power: float
    log_power: float = 0.0
    kind: str = 'power'

    def converges(self, weight_power: float = 0.0) -> bool:
        if self.kind == 'exponential':
            return True
        total = self.power + weight_power
        return total > 1.0 + 1e-12 or (abs(total - 1.0) <= 1e-12 and self.log_power > 1.0)

    def tail(self, prefactor: float, horizon: float, weight_power: float = 0.0) -> float:
        """Integral of prefactor * t^-(power+w) * ln^-log_power(t) over [horizon, inf)"""
        if self.kind == 'exponential':
            return 0.0
        total = self.power + weight_power
        log_t = math.log(horizon)
        if abs(total - 1.0) <= 1e-12:
            return prefactor * log_t ** (1.0 - self.log_power) / (self.log_power - 1.0)
        return prefactor * log_t ** (-self.log_power) * horizon ** (1.0 - total) / (total - 1.0)

    def prefactor(self, value: float, horizon: float) -> float:
        if self.kind == 'exponential':
            return 0.0
        return value * horizon ** self.power * math.log(horizon) ** self.log_power


def guarded_quad(f: Callable[[float], float], a: float, b: float, tol: float,
                 what: str, **kwargs) -> float:
    """scipy quad that turns an unmet tolerance into NumericalError"""
    limit = kwargs.pop('limit', 400)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        value, abserr = integrate.quad(f, a, b, epsabs=tol, epsrel=tol, limit=limit, **kwargs)
    if not math.isfinite(value) or abserr > 1e3 * tol * max(1.0, abs(value)):
        raise NumericalError(f"Quadrature failed for {what}: estimate {value}, error {abserr}")
    return value


def segmented_quad(f: Callable[[float], float], breakpoints: Sequence[float], tol: float,
                   what: str, wvar: Optional[float] = None) -> float:
    """Sum of quad over consecutive panels; cosine weight when wvar is given"""
    total = 0.0
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        if b <= a:
            continue
        if wvar:
            total += guarded_quad(f, a, b, tol, what, weight='cos', wvar=wvar)
        else:
            total += guarded_quad(f, a, b, tol, what)
    return total


def geometric_breakpoints(width: float, top: float = math.pi, extra: Sequence[float] = ()) -> List[float]:
    """0, w, 2w, 4w, ... up to top, merged with extra interior points"""
    points = {0.0, top}
    w = min(max(width, 1e-12), top)
    while w < top:
        points.add(w)
        w *= 2.0
    points.update(p for p in extra if 0.0 < p < top)
    return sorted(points)


def oscillation_breakpoints(frequency: int, top: float = math.pi, max_panels: int = 2000) -> List[float]:
    if frequency <= 1:
        return []
    step = max(math.pi / frequency, top / max_panels)
    return list(np.arange(step, top, step))


_BASES = {
    'log': (lambda lam: lam * math.log(1.0 / lam), lambda lam: lam),
    'power': (lambda lam: lam, lambda lam: lam * lam),
}


def extrapolate_to_zero(fn: Callable[[float], float], lam0: float, tol: float,
                        basis: str = 'log', max_halvings: int = 32,
                        min_lambda: float = 1e-10) -> Tuple[float, List[float]]:
    """
    Generalized Richardson extrapolation of fn(lambda) as lambda -> 0.

    fn is sampled on lambda_k = lam0 * 2^-k; on the latest window the model
    L + a*g1(lambda) + b*g2(lambda) is solved exactly, where (g1, g2) is the
    chosen correction basis. Stops once two consecutive estimates of L agree
    to within tol.

    Returns:
        (limit, history of accelerated estimates)
    """
    funcs = _BASES[basis]
    window = len(funcs) + 1
    lams: List[float] = []
    vals: List[float] = []
    history: List[float] = []
    for k in range(max_halvings + 1):
        lam = lam0 * 2.0 ** (-k)
        if lam < min_lambda:
            break
        lams.append(lam)
        vals.append(fn(lam))
        if len(vals) < window:
            continue
        rows = [[1.0] + [g(l) for g in funcs] for l in lams[-window:]]
        limit = float(np.linalg.solve(np.array(rows), np.array(vals[-window:]))[0])
        history.append(limit)
        if len(history) >= 2 and abs(history[-1] - history[-2]) < tol:
            return history[-1], history
    raise NonConvergenceError("lambda -> 0 extrapolation is not Cauchy", history[-2:])


class BaseFamily(ABC):
    """Base class for all operator families"""

    family: Family

    def __init__(self, name: str):
        self.name = name
        self.logger = logging.getLogger(f"{__name__}.{name}")

    @abstractmethod
    def assemble(self, model: ModelSpec):
        """Free operator H0 on the model's truncation"""
        pass

    @abstractmethod
    def resolvent(self, model: ModelSpec, lam: float, x: Site, y: Site,
                  tol: ToleranceConfig) -> Tuple[float, str]:
        """
        Resolvent kernel R_lambda(x, y) of the infinite model

        Returns:
            (value, method tag)
        """
        pass

    @abstractmethod
    def heat_kernel(self, model: ModelSpec, t: float, x: Site, y: Site,
                    tol: ToleranceConfig) -> Tuple[float, str]:
        """Transition density p0(t, x, y)"""
        pass

    @abstractmethod
    def regularized_resolvent(self, model: ModelSpec, x: Site, x0: Site,
                              tol: ToleranceConfig) -> Tuple[float, str]:
        """2 lim [R_lambda(x, x0) - R_lambda(x0, x0)] as lambda -> 0"""
        pass

    @abstractmethod
    def spectral_dimension(self, model: ModelSpec) -> float:
        pass

    def symmetry_key(self, model: ModelSpec, x: Site, y: Site):
        """Hashable key on which kernels between x and y depend"""
        return tuple(sorted((x, y)))

    def is_recurrent(self, model: ModelSpec) -> bool:
        return self.spectral_dimension(model) <= 2.0 + 1e-12

    def tail_decay(self, model: ModelSpec, killed: bool) -> DecayClass:
        """Decay class of p0 (killed=False) or of the point-killed p1"""
        d = self.spectral_dimension(model)
        if not killed or d > 2.0 + 1e-12:
            return DecayClass(d / 2.0)
        if abs(d - 2.0) <= 1e-12:
            return DecayClass(1.0, 2.0)
        return DecayClass(2.0 - d / 2.0)

    def point_killed_kernel(self, model: ModelSpec, x0: Site,
                            x: Site) -> Optional[Callable[[float], float]]:
        """Closed form of p1(t, x, x) for a Dirichlet point, when one exists"""
        return None

    def resolvent_at_zero(self, model: ModelSpec, x: Site, tol: ToleranceConfig) -> float:
        """|R_0(x, x)|: finite only for transient walks"""
        raise DivergenceError("R_0(x, x) is infinite for a recurrent walk", self.name)

    def check_site(self, model: ModelSpec, site: Site):
        if model.is_lattice and site.dim != model.dim:
            raise ValidationError(f"Site {site} has dimension {site.dim}, model needs {model.dim}")
        if not model.is_lattice and site.index < 0:
            raise ValidationError(f"Site index {site.index} is negative")
