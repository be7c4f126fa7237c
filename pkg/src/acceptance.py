"""
Acceptance suite run by `verify`: exact-formula reproduction, oracle
agreement and bound dominance checks, grouped by module
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import scipy.sparse as sp
from scipy import special

import config
from src.bounds import (bargmann_general, calibrate_constant, calibration_corpus, clr_estimate,
                        lieb_thirring_bound, quasi_classical_ratio, ratio_band)
from src.continuum1d import GridPotential, dense_count, prufer_count, square_well, \
    verify_continuum_bounds
from src.core import Family, ModelSpec, Potential, Seed, Site, hier_distance, make_potential
from src.errors import InvariantViolation, NumericalError, SpectralError, ValidationError
from src.families import extrapolate_to_zero
from src.kernels import (heat_diagonal, hier_log_periodic, regularized_resolvent, resolvent,
                         resolvent_row_sum)
from src.operators import SparseSymmetric, assemble_h0, fractional_coefficients
from src.spectra import count_below, free_spectrum, n0_count
from src.walks import WalkConfig, hitting_cdf_experiment, laplace_hitting_exact, laplace_hitting_mc
from src.witnesses import (certify_lower_bound, check_certificate, disjoint_bumps, nested_layers,
                           single_delta_eigenvalue)

logger = logging.getLogger(__name__)

Z1 = ModelSpec(Family.Z1)
Z2 = ModelSpec(Family.Z2)
O1 = Site((0,))
O2 = Site((0, 0))

# corpus streams, kept apart per criterion
_STREAM_MATRICES = 4000
_STREAM_Z1_CORPUS = 5000
_STREAM_Z2_CORPUS = 5500
_STREAM_CONTINUUM = 14000
_STREAM_LT = 15000
_STREAM_CLR = 16000


def _require(condition: bool, message: str):
    if not condition:
        raise InvariantViolation(message)


@dataclass
class Criterion:
    number: int
    name: str
    suite: str
    check: Callable[[Seed], Dict[str, Any]]
    method: str = 'dense'


@dataclass
class CriterionResult:
    number: int
    name: str
    suite: str
    status: str
    message: str = ''
    details: Dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0
    exit_code: int = 0
    method: str = 'dense'

    @property
    def passed(self) -> bool:
        return self.status == 'pass'

    def to_dict(self) -> Dict[str, Any]:
        return {
            'number': self.number,
            'name': self.name,
            'suite': self.suite,
            'status': self.status,
            'message': self.message,
            'details': self.details,
            'wall_time': self.wall_time,
            'method': self.method,
        }


@dataclass
class VerifySummary:
    """Outcome of one verify run"""

    selector: str
    results: List[CriterionResult]

    @property
    def passed(self) -> int:
        return sum(1 for r in self.results if r.passed)

    @property
    def failures(self) -> List[CriterionResult]:
        return [r for r in self.results if not r.passed]

    @property
    def exit_code(self) -> int:
        return max((r.exit_code for r in self.results), default=0)

    def raise_for_failures(self):
        """InvariantViolation naming the first failed criterion"""
        if self.failures:
            first = self.failures[0]
            raise InvariantViolation(f"criterion {first.number} ({first.name}) failed: {first.message}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'selector': self.selector,
            'total': len(self.results),
            'passed': self.passed,
            'failed': [r.number for r in self.failures],
            'exit_code': self.exit_code,
            'criteria': [r.to_dict() for r in self.results],
        }


# Kernels

def check_z1_resolvent(seed: Seed) -> Dict[str, Any]:
    lam = 0.5
    h0 = assemble_h0(Z1.with_radius(200))
    rhs = np.zeros(h0.n)
    rhs[h0.index_of(O1)] = 1.0
    column = np.linalg.solve(h0.to_dense() + lam * np.eye(h0.n), rhs)
    worst = 0.0
    for x in range(-20, 21):
        site = Site((x,))
        dense = -column[h0.index_of(site)]
        worst = max(worst, abs(resolvent(Z1, lam, site, O1).value - dense) / abs(dense))
    _require(worst <= 1e-8, f"closed form differs from dense inversion by {worst:.3g} (relative)")
    r00 = resolvent(Z1, lam, O1, O1).value
    _require(abs(r00 + 2.0 / 3.0) <= 1e-12, f"R(0,0) = {r00!r}, expected -2/3")
    return {'max_relative_error': worst, 'r00': r00}


def check_sum_rule(seed: Seed) -> Dict[str, Any]:
    total, method = resolvent_row_sum(Z1, 0.5, O1, 50)
    _require(abs(total + 2.0) <= 1e-6, f"sum_x R(x, 0) = {total!r}, expected -2")
    return {'sum': total, 'method': method}


def _z1_rtilde_extrapolated(x: int) -> float:
    """2 [R(x,0) - R(0,0)] extrapolated in mu = sqrt(lambda)"""
    site = Site((x,))

    def difference(mu: float) -> float:
        lam = mu * mu
        return 2.0 * (resolvent(Z1, lam, site, O1).value - resolvent(Z1, lam, O1, O1).value)

    value, _ = extrapolate_to_zero(difference, 0.05 / (1.0 + abs(x)), 1e-9, basis='power')
    return value


def check_regularized_resolvents(seed: Seed) -> Dict[str, Any]:
    worst = 0.0
    for x in range(-20, 21):
        closed = regularized_resolvent(Z1, Site((x,)), O1)
        extrapolated = _z1_rtilde_extrapolated(x)
        worst = max(worst, abs(closed - abs(x)), abs(extrapolated - abs(x)))
    _require(worst <= 1e-6, f"Z1 R-tilde deviates from |x| by {worst:.3g}")

    z2 = regularized_resolvent(Z2, Site((1, 0)), O2)
    _require(abs(z2 - 0.5) <= 1e-6, f"Z2 R-tilde((1,0),0) = {z2!r}, expected 0.5")

    frac = regularized_resolvent(ModelSpec(Family.FRACTIONAL, alpha=0.5), Site((1,)), O1)
    _require(abs(frac - 4.0 / math.pi) <= 1e-6, f"fractional R-tilde(1,0) = {frac!r}, expected 4/pi")

    hier = ModelSpec(Family.HIERARCHICAL, nu=2, p=0.5, levels=6)
    hier_worst = 0.0
    for i in range(1, 2 ** 6):
        site = Site((i,))
        value = regularized_resolvent(hier, site, O1)
        hier_worst = max(hier_worst, abs(value - (hier_distance(site, O1, hier) + 1)))
    _require(hier_worst <= 1e-10, f"hierarchical R-tilde deviates from d_h + 1 by {hier_worst:.3g}")
    return {'z1_max_error': worst, 'z2': z2, 'fractional': frac, 'hier_max_error': hier_worst}


def check_log_periodicity(seed: Seed) -> Dict[str, Any]:
    model = ModelSpec(Family.HIERARCHICAL, nu=2, p=0.3, levels=8)
    profile = hier_log_periodic(model, O1, np.logspace(2.0, 6.0, 200))
    _require(profile.correlation >= 0.99,
             f"log-period self-correlation {profile.correlation:.4f} is below 0.99")
    return {'correlation': profile.correlation, 'deviation': profile.max_deviation}


def check_fractional_asymptotics(seed: Seed) -> Dict[str, Any]:
    half = ModelSpec(Family.FRACTIONAL, alpha=0.5)
    scaled = heat_diagonal(half, 1e4, O1) * 1e4
    _require(abs(scaled * math.pi - 1.0) <= 0.02, f"alpha=1/2: p t = {scaled:.6g}, expected 1/pi")

    model = ModelSpec(Family.FRACTIONAL, alpha=0.75)
    ts = np.logspace(3.0, 5.0, 9)
    values = np.array([heat_diagonal(model, t, O1) for t in ts])
    slope = float(np.polyfit(np.log(ts), np.log(values), 1)[0])
    _require(abs(slope + 2.0 / 3.0) <= 0.02, f"alpha=0.75: fitted exponent {-slope:.4f}, expected 2/3")
    prefactor = special.gamma(2.0 / 3.0) / (1.5 * math.pi)
    ratio = heat_diagonal(model, 1e4, O1) * 1e4 ** (2.0 / 3.0) / prefactor
    _require(abs(ratio - 1.0) <= 0.03, f"alpha=0.75: prefactor ratio {ratio:.4f}")
    return {'alpha_half_scaled': scaled, 'exponent': -slope, 'prefactor_ratio': ratio}


# Operators

def check_hierarchical_spectrum(seed: Seed) -> Dict[str, Any]:
    p, levels = 0.3, 8
    spectrum = np.array(free_spectrum(ModelSpec(Family.HIERARCHICAL, nu=2, p=p, levels=levels),
                                     conservative=True))
    expected = [0.0]
    for k in range(1, levels + 1):
        expected += [p ** (k - 1) - p ** levels] * 2 ** (levels - k)
    expected = np.sort(np.array(expected))
    _require(spectrum.size == expected.size, f"{spectrum.size} eigenvalues, expected {expected.size}")
    worst = float(np.max(np.abs(np.sort(spectrum) - expected)))
    _require(worst <= 1e-10, f"hierarchical spectrum deviates by {worst:.3g}")
    return {'max_error': worst, 'size': int(spectrum.size)}


def check_generator_criterion(seed: Seed) -> Dict[str, Any]:
    largest = {}
    for alpha in (0.3, 0.5, 0.9):
        coefficients = fractional_coefficients(alpha, 50)
        largest[alpha] = float(np.max(coefficients.t[1:]))
        _require(largest[alpha] <= 1e-9,
                 f"alpha={alpha}: off-diagonal coefficient {largest[alpha]:.3g} is positive")
    steep = fractional_coefficients(1.5, 50)
    largest[1.5] = float(np.max(steep.t[1:]))
    _require(largest[1.5] > 1e-6, "alpha=1.5 should have a positive off-diagonal coefficient")
    return {'max_offdiagonal': largest}


# Spectra

def check_inertia(seed: Seed) -> Dict[str, Any]:
    sizes = []
    for i in range(100):
        rng = seed.rng(_STREAM_MATRICES, i)
        n = int(rng.integers(5, 301))
        a = sp.random(n, n, density=min(1.0, 3.0 / n + 0.02), format='csr', random_state=rng,
                      data_rvs=rng.standard_normal)
        matrix = a + a.T + float(rng.normal()) * sp.identity(n, format='csr')
        h = SparseSymmetric(matrix, tuple(Site((j,)) for j in range(n)))
        expected = int(np.sum(np.linalg.eigvalsh(h.to_dense()) < 0.0))
        got = count_below(h, 0.0).negative
        _require(got == expected, f"matrix {i} (n={n}): inertia {got}, dense {expected}")
        sizes.append(n)
    return {'matrices': len(sizes), 'largest': max(sizes)}


def check_single_well(seed: Seed) -> Dict[str, Any]:
    exact = -(math.sqrt(13.0) - 2.0)
    summary = n0_count(Z1.with_radius(30), Potential({O1: 3.0}))
    dense = summary.negative_eigenvalues[0]
    _require(abs(dense - exact) <= 1e-6, f"dense ground state {dense!r}, expected {exact!r}")
    bisected = single_delta_eigenvalue(Z1, 3.0, method='bisection')
    _require(abs(bisected - exact) <= 1e-10, f"bisection ground state {bisected!r}, expected {exact!r}")
    counts = {}
    for v in (1.0, 3.0, 10.0):
        counts[f"Z1:{v}"] = n0_count(Z1.with_radius(30), Potential({O1: v})).n0
    for v in (2.0, 4.0):
        counts[f"Z2:{v}"] = n0_count(Z2.with_radius(30), Potential({O2: v})).n0
    wrong = {k: c for k, c in counts.items() if c != 1}
    _require(not wrong, f"single wells with count != 1: {wrong}")
    return {'dense': dense, 'bisection': bisected, 'counts': counts}


# Bounds

def _random_potential(seed: Seed, stream: int, radius: int, dim: int = 1,
                      density: float = 0.5) -> Potential:
    amplitude = float(seed.rng(stream, 1).uniform(0.2, 3.0))
    return make_potential('random_uniform', {'radius': radius, 'amplitude': amplitude,
                                             'density': density, 'stream': stream, 'dim': dim}, seed)


def check_bargmann_dominance(seed: Seed) -> Dict[str, Any]:
    tightest = math.inf
    for i in range(200):
        v = _random_potential(seed, _STREAM_Z1_CORPUS + i, 1 + i % 15)
        if not v:
            continue
        n0 = n0_count(Z1, v).n0
        bound = bargmann_general(Z1, v).value
        _require(n0 <= bound, f"Z1 potential {i}: N0 = {n0} exceeds the Bargmann bound {bound}")
        tightest = min(tightest, bound - n0)
    model = Z2.with_radius(20)
    for i in range(50):
        v = _random_potential(seed, _STREAM_Z2_CORPUS + i, 1 + i % 6, dim=2)
        if not v:
            continue
        n0 = n0_count(model, v).n0
        bound = bargmann_general(model, v).value
        _require(n0 <= bound, f"Z2 potential {i}: N0 = {n0} exceeds the Bargmann bound {bound}")
        tightest = min(tightest, bound - n0)
    return {'min_slack': tightest}


def check_lieb_thirring(seed: Seed) -> Dict[str, Any]:
    model = Z1.with_radius(20)
    tightest = math.inf
    for i in range(50):
        v = _random_potential(seed, _STREAM_LT + i, 1 + i % 8, density=0.6)
        if not v:
            continue
        for gamma in (0.25, 0.5, 1.0):
            s_gamma = n0_count(model, v, gamma=gamma).s_gamma
            second = 'lt_killed_weighted_sigma0' if gamma < 1.0 else 'lt_killed'
            variants = ('lt_killed_sigma0', second)
            for variant in variants:
                bound = lieb_thirring_bound(variant, model, v, gamma).value
                _require(s_gamma <= bound + 1e-12,
                         f"potential {i}, gamma={gamma}: S = {s_gamma} exceeds {variant} = {bound}")
                tightest = min(tightest, bound - s_gamma)
    return {'min_slack': tightest}


def check_killed_clr(seed: Seed) -> Dict[str, Any]:
    worst = 0.0
    for i in range(20):
        v = _random_potential(seed, _STREAM_CLR + i, 1 + i % 10)
        if not v:
            continue
        value = clr_estimate(Z1, v, sigma=0.0, killed=O1).value
        expected = math.fsum(abs(x.index) * w for x, w in v.items())
        error = abs(value - 1.0 - expected)
        worst = max(worst, error)
        _require(error <= 1e-6 * max(1.0, expected),
                 f"potential {i}: killed CLR - 1 = {value - 1.0!r}, sum |x| V = {expected!r}")
    return {'max_error': worst}


def check_calibration_stability(seed: Seed) -> Dict[str, Any]:
    constants = {}
    for bound_id, model in (('z2_log', Z2.with_radius(20)),
                            ('hier_uniform', ModelSpec(Family.HIERARCHICAL, nu=2, p=0.3, levels=5))):
        first = calibrate_constant(bound_id, model, calibration_corpus(model, 25, seed, offset=0))
        second = calibrate_constant(bound_id, model, calibration_corpus(model, 25, seed, offset=25))
        a, b = first.constant, second.constant
        change = abs(a - b) / max(a, b) if max(a, b) > 0 else 0.0
        constants[bound_id] = {'first': a, 'second': b, 'relative_change': change}
        _require(change < 0.2, f"{bound_id}: calibrated constants {a:.6g} and {b:.6g} differ by "
                               f"{100 * change:.1f}%")

    radius, level = 60, 16.0
    flat = Potential({Site((a, b)): level / radius ** 2
                      for a in range(-radius, radius + 1) for b in range(-radius, radius + 1)})
    rows = quasi_classical_ratio(Z2, flat, (1.0, 10.0, 100.0))
    band = ratio_band(rows)
    _require(band <= 2.0, f"quasi-classical ratios {[round(r.ratio, 6) for r in rows]} span a factor {band:.3f}")
    return {'constants': constants, 'ratios': [r.ratio for r in rows], 'band': band}


# Walks

def check_laplace_hitting(seed: Seed) -> Dict[str, Any]:
    z1 = laplace_hitting_mc(WalkConfig(Z1, Site((1,)), 200.0, seed=seed, n_walks=10000), O1, 0.5)
    _require(z1.within(0.5, 3.0), f"Z1: MC {z1.estimate:.5f} +- {z1.std_error:.2g}, expected 0.5")
    target = laplace_hitting_exact(Z2, Site((2, 0)), O2, 0.5)
    z2 = laplace_hitting_mc(WalkConfig(Z2, Site((2, 0)), 200.0, seed=seed, n_walks=4000), O2, 0.5)
    _require(z2.within(target, 3.0), f"Z2: MC {z2.estimate:.5f} +- {z2.std_error:.2g}, expected {target:.5f}")
    return {'z1': z1.to_dict(), 'z2': z2.to_dict(), 'z2_exact': target}


def check_hitting_cdf(seed: Seed) -> Dict[str, Any]:
    distance = 40
    cfg = WalkConfig(Z2, Site((distance, 0)), float(distance) ** 4, seed=seed, n_walks=2000)
    rows = {row.alpha: row for row in hitting_cdf_experiment(distance, (2.0, 4.0), cfg)}
    upper, lower = rows[4.0].empirical, rows[2.0].empirical
    _require(0.35 <= upper <= 0.65, f"P(ln tau / ln|x| <= 4) = {upper:.4f} outside [0.35, 0.65]")
    _require(lower <= 0.15, f"P(ln tau / ln|x| <= 2) = {lower:.4f} exceeds 0.15")
    return {'p_le_2': lower, 'p_le_4': upper, 'censored': rows[4.0].censored_fraction}


# Witnesses

def check_witnesses(seed: Seed) -> Dict[str, Any]:
    v1 = make_potential('power_law', {'beta': 1.0, 's': 1.0, 'offset': 1.0, 'radius': 2048})
    certificate = certify_lower_bound(Z1, v1, disjoint_bumps(5, 3))
    _require(certificate.m == 5, f"Z1 certificate m = {certificate.m}, expected 5")
    z1_count = check_certificate(Z1, v1, certificate)

    v2 = make_potential('power_law', {'beta': 50.0, 's': 2.0, 'offset': 2.0, 'radius': 130, 'dim': 2})
    layers = nested_layers(v2, 3, 64)
    certificate2 = certify_lower_bound(Z2, v2, layers)
    _require(certificate2.m >= 3, f"Z2 certificate m = {certificate2.m}, expected at least 3")
    z2_count = check_certificate(Z2, v2, certificate2)
    return {'z1': {'m': certificate.m, 'count': z1_count},
            'z2': {'m': certificate2.m, 'count': z2_count, 'box_radius': certificate2.box_radius}}


# Continuum

def _bump_corpus(seed: Seed, size: int) -> List[GridPotential]:
    corpus = []
    for i in range(size):
        rng = seed.rng(_STREAM_CONTINUUM, i)
        wells = [(rng.uniform(-2.0, 2.0), rng.uniform(0.3, 1.5), rng.uniform(0.5, 8.0))
                 for _ in range(int(rng.integers(1, 4)))]

        def fn(x, wells=wells):
            return sum(h * np.clip(1.0 - ((x - c) / w) ** 2, 0.0, None) for c, w, h in wells)

        corpus.append(GridPotential.from_function(fn, 4.0, 801))
    return corpus


def check_continuum(seed: Seed) -> Dict[str, Any]:
    counts = {}
    for depth in (1.0, 10.0):
        well = square_well(depth, 1.0)
        oracle = int(math.ceil(2.0 * math.sqrt(depth) / math.pi))
        count = prufer_count(well).node_count
        _require(count == oracle, f"square well {depth}: Prufer count {count}, oracle {oracle}")
        counts[depth] = {'prufer': count, 'oracle': oracle, 'dense': dense_count(well)}
    checked = 0
    for v in _bump_corpus(seed, 20):
        for sigma in (0.5, 1.0, 2.0):
            verify_continuum_bounds(v, sigma)
            checked += 1
    return {'square_wells': counts, 'comparisons': checked}


CRITERIA: List[Criterion] = [
    Criterion(1, 'z1_resolvent_closed_form', 'kernels', check_z1_resolvent, 'closed_form'),
    Criterion(2, 'resolvent_sum_rule', 'kernels', check_sum_rule, 'closed_form'),
    Criterion(3, 'regularized_resolvents', 'kernels', check_regularized_resolvents, 'quadrature'),
    Criterion(4, 'inertia_vs_dense', 'spectra', check_inertia),
    Criterion(5, 'bargmann_dominance', 'bounds', check_bargmann_dominance),
    Criterion(6, 'single_well_exactness', 'spectra', check_single_well),
    Criterion(7, 'hierarchical_spectrum', 'operators', check_hierarchical_spectrum),
    Criterion(8, 'hierarchical_log_periodicity', 'kernels', check_log_periodicity, 'series'),
    Criterion(9, 'fractional_asymptotics', 'kernels', check_fractional_asymptotics, 'quadrature'),
    Criterion(10, 'generator_criterion', 'operators', check_generator_criterion, 'quadrature'),
    Criterion(11, 'laplace_hitting_identity', 'walks', check_laplace_hitting, 'mc'),
    Criterion(12, 'hitting_cdf_limit', 'walks', check_hitting_cdf, 'mc'),
    Criterion(13, 'lower_bound_witnesses', 'witnesses', check_witnesses),
    Criterion(14, 'continuum_prufer', 'continuum1d', check_continuum, 'quadrature'),
    Criterion(15, 'lieb_thirring_dominance', 'bounds', check_lieb_thirring),
    Criterion(16, 'killed_clr_reconciliation', 'bounds', check_killed_clr, 'closed_form'),
    Criterion(17, 'calibration_stability', 'bounds', check_calibration_stability, 'calibrated'),
]


def select_criteria(selector: Optional[str] = None) -> List[Criterion]:
    """
    Criteria for a selector: None or 'all', a suite name, or comma-separated
    criterion numbers
    """
    if selector in (None, '', 'all'):
        return list(CRITERIA)
    if selector in config.VERIFY_SUITES:
        return [c for c in CRITERIA if c.suite == selector]
    try:
        numbers = {int(part) for part in selector.split(',')}
    except ValueError:
        raise ValidationError(f"Unknown suite '{selector}'; expected one of "
                              f"{', '.join(config.VERIFY_SUITES)} or criterion numbers", field='suite')
    chosen = [c for c in CRITERIA if c.number in numbers]
    if len(chosen) != len(numbers):
        raise ValidationError(f"Unknown criterion in '{selector}'", field='suite')
    return chosen


def run_criterion(criterion: Criterion, seed: Seed) -> CriterionResult:
    start = time.time()
    try:
        details = criterion.check(seed)
        status, message, code = 'pass', '', 0
    except SpectralError as e:
        details = {}
        status = 'fail' if isinstance(e, InvariantViolation) else 'error'
        message, code = str(e), e.exit_code
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
        details = {}
        status, message, code = 'error', f"{type(e).__name__}: {e}", NumericalError.exit_code
    elapsed = time.time() - start
    if status == 'pass':
        logger.info(f"✅ [{criterion.number:2d}] {criterion.name} ({elapsed:.1f}s)")
    else:
        logger.error(f"❌ [{criterion.number:2d}] {criterion.name}: {message}")
    return CriterionResult(criterion.number, criterion.name, criterion.suite, status, message,
                           details, elapsed, code, criterion.method)


def run_suite(selector: Optional[str] = None, seed: Optional[Seed] = None) -> VerifySummary:
    """
    Run the selected acceptance criteria

    Args:
        selector: suite name, criterion numbers, or None for everything
        seed: seed of every random corpus in the suite

    Returns:
        VerifySummary; exit_code is 3 when a criterion fails
    """
    seed = seed or Seed.resolve()
    criteria = select_criteria(selector)
    logger.info(f"Running {len(criteria)} acceptance criteria (selector: {selector or 'all'})")
    results = [run_criterion(c, seed) for c in criteria]
    return VerifySummary(selector or 'all', results)
