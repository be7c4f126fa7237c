"""
One-dimensional continuum Schrodinger operator -d^2/dx^2 - V on the line:
grid potentials, Prufer node counting and the point-killed heat kernel
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
from scipy import integrate

from src.core import Site
from src.errors import InvariantViolation, NonConvergenceError, NumericalError, ValidationError
from src.families.base import guarded_quad
from src.operators import SparseSymmetric

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GridPotential:
    """Piecewise-linear V on ascending nodes, zero outside [nodes[0], nodes[-1]]"""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape:
            raise ValidationError("Grid nodes and values must be 1-D arrays of equal length")
        if nodes.size and np.any(np.diff(nodes) <= 0):
            raise ValidationError("Grid nodes must be strictly ascending")
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise ValidationError("Grid potential values must be finite and nonnegative")
        object.__setattr__(self, 'nodes', nodes)
        object.__setattr__(self, 'values', values)

    def __call__(self, x):
        if not self.nodes.size:
            return np.zeros_like(np.asarray(x, dtype=float))
        return np.interp(x, self.nodes, self.values, left=0.0, right=0.0)

    def __bool__(self) -> bool:
        return bool(np.any(self.values > 0))

    @property
    def extent(self) -> float:
        """X with the support inside [-X, X]"""
        if not self.nodes.size:
            return 0.0
        return float(max(abs(self.nodes[0]), abs(self.nodes[-1])))

    @property
    def max_value(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def trapezoid_weights(self) -> np.ndarray:
        """w with sum(w * f(nodes)) the trapezoid integral of f"""
        w = np.zeros_like(self.nodes)
        if self.nodes.size < 2:
            return w
        dx = np.diff(self.nodes)
        w[:-1] += dx / 2.0
        w[1:] += dx / 2.0
        return w

    def integrate(self, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        """Trapezoid integral of f(x, V(x)) over the grid"""
        if self.nodes.size < 2:
            return 0.0
        return float(integrate.trapezoid(f(self.nodes, self.values), self.nodes))

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], extent: float,
                      n: int = 4001) -> 'GridPotential':
        if extent <= 0 or n < 2:
            raise ValidationError("Grid needs a positive extent and at least two nodes")
        nodes = np.linspace(-extent, extent, n)
        return cls(nodes, np.asarray(fn(nodes), dtype=float))

    def scaled(self, factor: float) -> 'GridPotential':
        return GridPotential(self.nodes, factor * self.values)


def square_well(depth: float, half_width: float, ramp: float = 1e-9) -> GridPotential:
    """V = depth on [-a, a], with a vanishing ramp to zero at both edges"""
    if depth < 0 or half_width <= 0:
        raise ValidationError("Square well needs depth >= 0 and half_width > 0")
    a = half_width
    nodes = np.array([-a - ramp, -a, a, a + ramp])
    return GridPotential(nodes, np.array([0.0, depth, depth, 0.0]))


def load_grid_potential(path: str) -> GridPotential:
    """Read `x value` pairs, ascending x; '#' starts a comment"""
    xs: List[float] = []
    vs: List[float] = []
    with open(path, encoding='utf-8') as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise ValidationError(f"Expected 'x value', got '{line}'", line=lineno)
            try:
                x, v = float(tokens[0]), float(tokens[1])
            except ValueError:
                raise ValidationError(f"Unparseable grid record '{line}'", line=lineno)
            if xs and x <= xs[-1]:
                raise ValidationError(f"Grid nodes must ascend, {x} after {xs[-1]}", line=lineno)
            xs.append(x)
            vs.append(v)
    return GridPotential(np.array(xs), np.array(vs))


def save_grid_potential(v: GridPotential, path: str):
    with open(path, 'w', encoding='utf-8') as fh:
        fh.write('# x value\n')
        for x, value in zip(v.nodes, v.values):
            fh.write(f"{float(x)!r} {float(value)!r}\n")


# Node counting

@dataclass(frozen=True)
class PruferResult:
    node_count: int
    final_angle: float
    step: float = 0.0
    halvings: int = 0

    def __post_init__(self):
        if self.node_count < 0:
            raise InvariantViolation(f"Negative node count {self.node_count}")


def _mesh(v: GridPotential, step: float, pad: float) -> np.ndarray:
    """Integration points over [-X-pad, X+pad] that include every grid node"""
    x_max = v.extent + pad
    knots = np.unique(np.concatenate([[-x_max, x_max], v.nodes]))
    pieces = []
    for a, b in zip(knots[:-1], knots[1:]):
        m = max(1, int(math.ceil((b - a) / step)))
        pieces.append(np.linspace(a, b, m + 1)[:-1])
    pieces.append([knots[-1]])
    return np.concatenate(pieces)


def _angle(v: GridPotential, mesh: np.ndarray) -> float:
    """theta' = cos^2 theta + V sin^2 theta, RK4, from theta = pi/2"""
    theta = math.pi / 2.0

    def rhs(x: float, th: float) -> float:
        s = math.sin(th)
        c = math.cos(th)
        return c * c + float(v(x)) * s * s

    for a, b in zip(mesh[:-1], mesh[1:]):
        h = b - a
        k1 = rhs(a, theta)
        k2 = rhs(a + h / 2.0, theta + h * k1 / 2.0)
        k3 = rhs(a + h / 2.0, theta + h * k2 / 2.0)
        k4 = rhs(b, theta + h * k3)
        theta += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    if not math.isfinite(theta):
        raise NumericalError("Prufer angle integration produced a non-finite value")
    return theta


def _count_from_angle(theta: float) -> int:
    # zeros passed so far plus the one the linear exterior solution still has ahead
    return max(0, int(math.ceil(theta / math.pi - 0.5)))


def prufer_count(v: GridPotential, step: Optional[float] = None, pad: float = 1.0,
                 max_halvings: int = 8) -> PruferResult:
    """
    N0(V) from the winding of the bounded zero-energy solution

    Args:
        v: compactly supported grid potential
        step: initial RK4 step (scaled to the well by default)
        pad: zero-potential margin on both sides of the support
        max_halvings: step halvings allowed before giving up

    Returns:
        PruferResult once two consecutive step sizes give the same count
    """
    if not v:
        return PruferResult(0, math.pi / 2.0)
    if step is None:
        step = min(0.01, 0.1 / math.sqrt(max(v.max_value, 1e-12)), (v.extent + pad) / 200.0)
    previous = None
    counts = []
    for k in range(max_halvings + 1):
        h = step * 2.0 ** (-k)
        theta = _angle(v, _mesh(v, h, pad))
        count = _count_from_angle(theta)
        counts.append(count)
        logger.debug(f"Prufer step {h:.3g}: theta/pi = {theta / math.pi:.6f}, count {count}")
        if previous is not None and count == previous:
            return PruferResult(count, theta, h, k)
        previous = count
    raise NonConvergenceError("Prufer node count did not stabilize under step halving", counts[-2:])


def dense_count(v: GridPotential, h: Optional[float] = None, pad: Optional[float] = None,
                tau: float = 1e-10) -> int:
    """
    Negative eigenvalues of the second-difference operator minus V on a
    Neumann box [-X-pad, X+pad]
    """
    from src.spectra import count_below

    if not v:
        return 0
    width = max(v.nodes[-1] - v.nodes[0], 1e-12)
    h = h or 1e-3 * width
    pad = pad if pad is not None else 4.0 * v.extent + 2.0
    x_max = v.extent + pad
    xs = np.arange(-x_max, x_max + h / 2.0, h)
    n = xs.size
    main = np.full(n, 2.0 / (h * h))
    main[0] = main[-1] = 1.0 / (h * h)
    main -= v(xs)
    off = np.full(n - 1, -1.0 / (h * h))
    matrix = sp.diags([off, main, off], [-1, 0, 1], format='csr')
    sites = tuple(Site((i,)) for i in range(n))
    inertia = count_below(SparseSymmetric(matrix, sites), -tau)
    return inertia.negative + inertia.zero


# Point-killed heat kernel

def killed_kernel_1d(t: float, x: float) -> float:
    """p1(t, x, x) of the line with a Dirichlet point at 0"""
    if t <= 0:
        raise ValidationError(f"t must be positive, got {t}", field='t')
    return -math.expm1(-x * x / t) / math.sqrt(4.0 * math.pi * t)


def _scaled_killed_integral(upper: float, tol: float) -> float:
    """int_0^upper (1 - e^-u) u^(-3/2) du, the t-integral of p1 after t = x^2/u"""
    def smooth(u: float) -> float:
        return -math.expm1(-u) / u if u > 0 else 1.0

    if upper <= 1.0:
        return guarded_quad(smooth, 0.0, upper, tol, "killed kernel integral",
                            weight='alg', wvar=(-0.5, 0.0))
    head = guarded_quad(smooth, 0.0, 1.0, tol, "killed kernel integral", weight='alg', wvar=(-0.5, 0.0))
    if math.isinf(upper):
        # int_1^inf u^-3/2 du = 2
        return head + 2.0 - guarded_quad(lambda u: math.exp(-u) * u ** -1.5, 1.0, math.inf, tol,
                                         "killed kernel tail")
    return head + guarded_quad(lambda u: -math.expm1(-u) * u ** -1.5, 1.0, upper, tol,
                               "killed kernel integral")


def killed_time_integral_1d(x: float, lower: float = 0.0, tol: float = 1e-10) -> float:
    """int_lower^inf p1(t, x, x) dt; equals |x| at lower = 0"""
    if lower < 0:
        raise ValidationError(f"lower must be nonnegative, got {lower}", field='lower')
    a = x * x
    if a == 0 or math.isinf(lower):
        return 0.0
    upper = math.inf if lower == 0 else a / lower
    return abs(x) * _scaled_killed_integral(upper, tol) / (2.0 * math.sqrt(math.pi))


def refined_tail_factor(gamma: float, tol: float = 1e-10) -> float:
    """F(gamma) = int_gamma^inf (1 - e^(-1/tau)) / sqrt(4 pi tau) dtau"""
    if gamma < 0:
        raise ValidationError(f"gamma must be nonnegative, got {gamma}", field='gamma')
    return killed_time_integral_1d(1.0, gamma, tol)


def small_gamma_constant(gamma: float, tol: float = 1e-10) -> float:
    """c(gamma) = (1/(2 sqrt(pi))) int_0^inf (1 - e^(-1/s)) s^(-1/2-gamma) ds, 0 < gamma < 1/2"""
    if not 0.0 < gamma < 0.5:
        raise ValidationError(f"gamma must lie in (0, 1/2), got {gamma}", field='gamma')
    # u = 1/s turns it into int_0^inf (1 - e^-u) u^(gamma - 3/2) du
    a = gamma - 1.5

    def smooth(u: float) -> float:
        return -math.expm1(-u) / u if u > 0 else 1.0

    head = guarded_quad(smooth, 0.0, 1.0, tol, "c(gamma) head", weight='alg', wvar=(a + 1.0, 0.0))
    tail = guarded_quad(lambda u: -math.expm1(-u) * u ** a, 1.0, math.inf, tol, "c(gamma) tail")
    return (head + tail) / (2.0 * math.sqrt(math.pi))


# Bound verification

@dataclass(frozen=True)
class ContinuumComparison:
    count: int
    bargmann: float
    refined: float
    sigma: float

    def to_dict(self):
        return {'count': self.count, 'bargmann': self.bargmann, 'refined': self.refined,
                'sigma': self.sigma, 'method': 'quadrature'}


def verify_continuum_bounds(v: GridPotential, sigma: float = 1.0) -> ContinuumComparison:
    """
    Count bound states and check both Bargmann forms dominate

    Raises:
        InvariantViolation: a bound falls below the count
    """
    from src.bounds import bargmann_1d, refined_bargmann_1d_continuum

    count = prufer_count(v).node_count
    plain = bargmann_1d(v).value
    refined = refined_bargmann_1d_continuum(v, sigma).value
    logger.debug(f"Continuum count {count}, Bargmann {plain:.6g}, refined {refined:.6g} (sigma={sigma})")
    if count > plain + 1e-9 or count > refined + 1e-9:
        raise InvariantViolation(
            f"Continuum bound below count: count {count}, Bargmann {plain}, refined {refined}")
    return ContinuumComparison(count, plain, refined, sigma)
