"""
Constructive lower bounds on N0(V): single-delta eigenvalues, variational
test functions with certificates, and sparse multi-well potentials
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
from scipy.optimize import brentq

import config
from src.core import Family, ModelSpec, Potential, Site, ToleranceConfig, origin, \
    restrict_potential
from src.errors import DivergenceError, InvariantViolation, ValidationError
from src.families import get_family
from src.kernels import resolvent
from src.operators import SparseSymmetric, assemble_h, assemble_h0
from src.spectra import box_count

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Finitely supported function on the sites"""

    __test__ = False

    values: Dict[Site, float]

    def __post_init__(self):
        clean = {s: float(v) for s, v in self.values.items() if v != 0.0}
        object.__setattr__(self, 'values', clean)

    @property
    def support(self) -> frozenset:
        return frozenset(self.values)

    @property
    def norm_sq(self) -> float:
        return math.fsum(v * v for v in self.values.values())

    @property
    def reach(self) -> int:
        return max((s.linf for s in self.values), default=0)

    def translated(self, shift: Site) -> 'TestFunction':
        return TestFunction({s + shift: v for s, v in self.values.items()})

    def vector(self, h: SparseSymmetric) -> np.ndarray:
        vec = np.zeros(h.n)
        for site, value in self.values.items():
            vec[h.index_of(site)] = value
        return vec


@dataclass
class Certificate:
    """m negative eigenvalues of the form of H compressed to the test functions"""

    m: int
    rayleigh_values: List[float]
    supports_disjoint: bool
    quotients: List[float] = field(default_factory=list)
    box_radius: int = 0
    sites: List[List[int]] = field(default_factory=list)  # peak of each function
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.m != len(self.rayleigh_values):
            raise InvariantViolation(f"Certificate m = {self.m} with {len(self.rayleigh_values)} values")
        if any(v >= 0 for v in self.rayleigh_values):
            raise InvariantViolation("Certificate lists a nonnegative Rayleigh value")
        if not self.supports_disjoint:
            raise InvariantViolation("Certificate built on overlapping supports")

    def to_dict(self) -> Dict[str, Any]:
        return {'m': self.m, 'rayleigh': self.rayleigh_values, 'quotients': self.quotients,
                'sites': self.sites, 'box_radius': self.box_radius, 'notes': self.notes}


# Single well

def single_delta_eigenvalue(model: ModelSpec, v: float, site: Optional[Site] = None,
                            tol: Optional[ToleranceConfig] = None,
                            method: str = 'auto') -> Optional[float]:
    """
    The eigenvalue -lambda* of H0 - v delta_site, where v |R_lambda*(site, site)| = 1

    Args:
        model: operator family
        v: well depth, > 0
        site: well position (origin by default)
        method: 'auto' (closed form on Z^1), 'closed_form' or 'bisection'

    Returns:
        The negative eigenvalue, or None when a transient walk keeps v below
        the binding threshold
    """
    if not v > 0:
        raise ValidationError(f"Well depth must be positive, got {v}", field='v')
    site = site or (origin(model.dim) if model.is_lattice else Site((0,)))
    if method not in ('auto', 'closed_form', 'bisection'):
        raise ValidationError(f"Unknown method '{method}'", field='method')
    if method == 'closed_form' or (method == 'auto' and model.family == Family.Z1):
        model.require(Family.Z1)
        return -(math.sqrt(4.0 + v * v) - 2.0)

    family = get_family(model)

    def excess(lam: float) -> float:
        return v * abs(resolvent(model, lam, site, site, tol).value) - 1.0

    hi = max(v, 1e-12)
    lo = min(1e-3, hi / 2.0)
    while excess(lo) <= 0:
        if lo < 1e-14:
            try:
                r0 = family.resolvent_at_zero(model, site, tol or ToleranceConfig())
            except DivergenceError:
                r0 = math.inf
            if v * r0 <= 1.0:
                logger.debug(f"No bound state: v * R_0 = {v * r0:.6g} <= 1")
                return None
            break
        lo /= 8.0
    root = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return -root


# Test functions

def sine_bump_1d(k: int, side: int = 1) -> TestFunction:
    """sin(pi (x - a) / |L|) on L_k = [2^(k-1), 2^(k+2)], mirrored for side = -1"""
    if k < 1:
        raise ValidationError(f"k must be at least 1, got {k}", field='k')
    if side not in (1, -1):
        raise ValidationError(f"side must be +1 or -1, got {side}", field='side')
    a, b = 2 ** (k - 1), 2 ** (k + 2)
    length = b - a
    return TestFunction({Site((side * x,)): math.sin(math.pi * (x - a) / length) for x in range(a + 1, b)})


def disjoint_bumps(count: int = 5, first: int = 3) -> List[TestFunction]:
    """Sine bumps alternating between +x (k = first, first+3, ...) and -x (k = first+1, ...)"""
    bumps = []
    for i in range(count):
        k = first + 3 * (i // 2) + (i % 2)
        bumps.append(sine_bump_1d(k, 1 if i % 2 == 0 else -1))
    return bumps


def square_layer_2d(k: int, l: int) -> TestFunction:
    """
    1 on Q_l minus Q_k, decaying linearly to 0 on Q_2l minus Q_l; Q_m is the
    square |x|_inf <= m
    """
    if k < 0 or l < max(4 * k, 1):
        raise ValidationError(f"square layer needs l >= max(4k, 1), got k={k}, l={l}", field='l')
    values = {}
    for a in range(-2 * l, 2 * l + 1):
        for b in range(-2 * l, 2 * l + 1):
            r = max(abs(a), abs(b))
            if r <= k:
                continue
            values[Site((a, b))] = 1.0 if r <= l else (2.0 * l - r) / l
    return TestFunction(values)


def _covering_model(model: ModelSpec, functions: Sequence[TestFunction]) -> ModelSpec:
    if model.is_lattice:
        return model.with_radius(max((f.reach for f in functions), default=0) + 1)
    if model.family == Family.HIERARCHICAL:
        top = max((s.index for f in functions for s in f.values), default=0)
        levels = 1
        while model.nu ** levels <= top:
            levels += 1
        return model.with_levels(max(levels, model.levels))
    return model


def kinetic_energy(model: ModelSpec, f: TestFunction) -> float:
    """(H0 f, f)"""
    h0 = assemble_h0(_covering_model(model, [f]))
    return h0.quadratic_form(f.vector(h0))


def potential_energy(v: Potential, f: TestFunction) -> float:
    """(V f, f)"""
    return math.fsum(v[s] * value * value for s, value in f.values.items())


def auto_square_layer(v: Potential, k: int, l_max: int,
                      model: Optional[ModelSpec] = None) -> Optional[Tuple[TestFunction, int]]:
    """Double l from max(4k, 1) until (V psi, psi) > (-Delta psi, psi); None past l_max"""
    model = model or ModelSpec(Family.Z2)
    model.require(Family.Z2)
    l = max(4 * k, 1)
    while l <= l_max:
        f = square_layer_2d(k, l)
        kinetic = kinetic_energy(model, f)
        gain = potential_energy(v, f)
        logger.debug(f"Square layer k={k}, l={l}: kinetic {kinetic:.4g}, potential {gain:.4g}")
        if gain > kinetic:
            return f, l
        l *= 2
    return None


def nested_layers(v: Potential, count: int, l_max: int, k: int = 0) -> List[TestFunction]:
    """Disjoint square layers, each starting where the previous one ends"""
    layers = []
    for _ in range(count):
        found = auto_square_layer(v, k, l_max)
        if found is None:
            break
        f, l = found
        layers.append(f)
        k = 2 * l
    return layers


# Certificates

def _check_disjoint(functions: Sequence[TestFunction]):
    seen = set()
    for i, f in enumerate(functions):
        overlap = seen & f.support
        if overlap:
            raise ValidationError(f"Test function {i} overlaps earlier supports at {sorted(overlap)[0]}",
                                  field='functions')
        seen |= f.support


def certify_lower_bound(model: ModelSpec, v: Potential, functions: Sequence[TestFunction],
                        tol: Optional[ToleranceConfig] = None) -> Certificate:
    """
    Certify N0(V) >= m from disjointly supported test functions

    The form of H is compressed to their span; m counts eigenvalues of the
    pencil (Psi^T H Psi, Psi^T Psi) below -neg_threshold.

    Raises:
        ValidationError: supports overlap
    """
    tau = (tol or ToleranceConfig()).neg_threshold
    _check_disjoint(functions)
    if not functions:
        return Certificate(0, [], True)
    box = _covering_model(model, functions)
    h = assemble_h(box, restrict_potential(v, box))
    psi = np.column_stack([f.vector(h) for f in functions])
    form = psi.T @ (h.matrix @ psi)
    gram = psi.T @ psi
    quotients = [float(form[i, i] / gram[i, i]) for i in range(len(functions))]
    values = la.eigh(0.5 * (form + form.T), gram, eigvals_only=True)
    negative = [float(x) for x in values if x < -tau]
    logger.debug(f"Certificate on {len(functions)} functions: {len(negative)} below -{tau}")
    return Certificate(
        m=len(negative),
        rayleigh_values=negative,
        supports_disjoint=True,
        quotients=quotients,
        box_radius=box.levels if box.family == Family.HIERARCHICAL else box.radius,
        sites=[list(max(f.values, key=lambda s: abs(f.values[s])).coords) for f in functions],
    )


def check_certificate(model: ModelSpec, v: Potential, certificate: Certificate,
                      tol: Optional[ToleranceConfig] = None) -> int:
    """
    Dense count on the certificate's box

    Raises:
        InvariantViolation: the certificate claims more than the count
    """
    if model.family == Family.HIERARCHICAL:
        box = model.with_levels(certificate.box_radius)
    elif model.is_lattice:
        box = model.with_radius(certificate.box_radius)
    else:
        box = model
    count = box_count(box, restrict_potential(v, box), tol)
    if certificate.m > count:
        raise InvariantViolation(f"Certificate m = {certificate.m} exceeds the box count {count}")
    return count


# Sparse multi-well construction

@dataclass
class MultiwellResult:
    potential: Potential
    certificate: Certificate
    positions: List[Site]
    radii: List[int]
    notes: List[str] = field(default_factory=list)


def truncated_ground_state(model: ModelSpec, amplitude: float, tol: Optional[ToleranceConfig] = None,
                           max_radius: Optional[int] = None) -> Tuple[TestFunction, int, float]:
    """
    Ground state R_lambda(x, 0) of H0 - amplitude delta_0, cut to the ball of
    radius r; r grows until its Rayleigh quotient is below -lambda/2

    Returns:
        (truncated eigenfunction centred at the origin, r, lambda)
    """
    if not model.is_lattice:
        raise ValidationError("Multi-well construction needs a translation-invariant lattice family")
    eigenvalue = single_delta_eigenvalue(model, amplitude, origin(model.dim), tol)
    if eigenvalue is None:
        raise ValidationError(f"Amplitude {amplitude} binds no state for this family", field='amplitudes')
    lam = -eigenvalue
    cap = max_radius or config.FAMILY_BOX_LIMITS[model.family.value]
    family = get_family(model)
    well = Potential({origin(model.dim): amplitude})
    cache: Dict[Any, float] = {}
    r = 1
    while r <= cap:
        box = model.with_radius(r + 1)
        h = assemble_h(box, well)
        values = {}
        for s in h.sites:
            if s.linf > r:
                continue
            key = family.symmetry_key(model, s, origin(model.dim))
            if key not in cache:
                cache[key] = -resolvent(model, lam, s, origin(model.dim), tol).value
            values[s] = cache[key]
        f = TestFunction(values)
        vec = f.vector(h)
        quotient = h.quadratic_form(vec) / float(vec @ vec)
        if quotient < -lam / 2.0:
            return f, r, lam
        r = max(r + 1, int(math.ceil(r * 1.5)))
    raise ValidationError(f"No truncation radius up to {cap} for amplitude {amplitude}")


def sparse_multiwell(model: ModelSpec, amplitudes: Sequence[float],
                     tol: Optional[ToleranceConfig] = None,
                     max_radius: Optional[int] = None) -> MultiwellResult:
    """
    Place wells a_n delta_(x_n) along the first axis so the truncated ground
    states have disjoint supports; certify one eigenvalue per placed well
    """
    if not amplitudes or any(a <= 0 for a in amplitudes):
        raise ValidationError("amplitudes must be a nonempty positive list", field='amplitudes')
    if any(b > a for a, b in zip(amplitudes, amplitudes[1:])):
        raise ValidationError("amplitudes must be nonincreasing", field='amplitudes')
    dim = model.dim
    entries: Dict[Site, float] = {}
    functions: List[TestFunction] = []
    positions: List[Site] = []
    radii: List[int] = []
    notes: List[str] = []
    frontier = None
    cap = max_radius or config.FAMILY_BOX_LIMITS[model.family.value]
    for amplitude in amplitudes:
        try:
            f, r, lam = truncated_ground_state(model, amplitude, tol, cap)
        except ValidationError as e:
            notes.append(f"stopped at amplitude {amplitude}: {e}")
            break
        centre = 0 if frontier is None else frontier + r + 1
        if centre + r > cap:
            notes.append(f"stopped at amplitude {amplitude}: well at {centre} leaves the box limit {cap}")
            break
        position = Site((centre,) + (0,) * (dim - 1))
        entries[position] = amplitude
        functions.append(f.translated(position))
        positions.append(position)
        radii.append(r)
        frontier = centre + r
        logger.debug(f"Well {amplitude} at {position}: radius {r}, lambda {lam:.6g}")
    potential = Potential(entries)
    certificate = certify_lower_bound(model, potential, functions, tol)
    certificate.notes.extend(notes)
    return MultiwellResult(potential, certificate, positions, radii, notes)
