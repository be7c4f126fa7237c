"""
Negative-eigenvalue counting: dense spectra, inertia, box-stabilized N0,
Birman-Schwinger counts and Lieb-Thirring sums
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

import config
from src.core import Family, ModelSpec, Potential, ToleranceConfig
from src.errors import InvariantViolation, NonConvergenceError, NumericalError, ValidationError
from src.families import get_family
from src.operators import SparseSymmetric, assemble_h, assemble_h0

logger = logging.getLogger(__name__)


@dataclass
class SpectrumSummary:
    """Negative spectrum of H = H0 - V on the stabilized box"""

    negative_eigenvalues: List[float]
    near_zero_count: int
    n0: int
    s_gamma: Optional[float] = None
    box_radius_used: Optional[int] = None
    previous_radius: Optional[int] = None
    counts: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.negative_eigenvalues = sorted(float(v) for v in self.negative_eigenvalues)
        if self.n0 != len(self.negative_eigenvalues):
            raise InvariantViolation(
                f"n0 = {self.n0} but {len(self.negative_eigenvalues)} eigenvalues were listed")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n0': self.n0,
            'near_zero': self.near_zero_count,
            'eigenvalues': self.negative_eigenvalues,
            's_gamma': self.s_gamma,
            'box_radius_used': self.box_radius_used,
            'previous_radius': self.previous_radius,
            'method': 'dense',
        }


@dataclass(frozen=True)
class InertiaResult:
    """Sylvester inertia of H - shift*I"""

    negative: int
    zero: int
    positive: int
    shift: float

    @property
    def n(self) -> int:
        return self.negative + self.zero + self.positive


def dense_spectrum(h: SparseSymmetric) -> List[float]:
    """All eigenvalues, ascending"""
    if h.n > config.DENSE_LIMIT:
        raise NumericalError(f"Dense eigensolve of size {h.n} exceeds the limit {config.DENSE_LIMIT}")
    if h.n == 0:
        return []
    return [float(v) for v in np.linalg.eigvalsh(h.to_dense())]


def _zero_tol(matrix) -> float:
    scale = abs(matrix).max() if matrix.nnz else 1.0
    return 64.0 * np.finfo(float).eps * max(1.0, scale)


def _ldl_inertia(dense: np.ndarray, tiny: float):
    """Inertia from the Bunch-Kaufman block diagonal"""
    _, d, _ = la.ldl(dense, lower=True)
    neg = zero = pos = 0
    i, n = 0, d.shape[0]
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            values = np.linalg.eigvalsh(d[i:i + 2, i:i + 2])
            i += 2
        else:
            values = [d[i, i]]
            i += 1
        for v in values:
            if v < -tiny:
                neg += 1
            elif v > tiny:
                pos += 1
            else:
                zero += 1
    return neg, zero, pos


def _lu_inertia(matrix: sp.csc_matrix, tiny: float):
    """Inertia from an unpivoted symmetric-mode LU: signs of diag(U)"""
    lu = splu(matrix, permc_spec='MMD_AT_PLUS_A', diag_pivot_thresh=0.0,
              options={'SymmetricMode': True, 'Equil': False})
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise NumericalError("LU pivoting broke symmetry")
    u = lu.U.diagonal()
    return int(np.sum(u < -tiny)), int(np.sum(np.abs(u) <= tiny)), int(np.sum(u > tiny))


def _inertia(h: SparseSymmetric, shift: float):
    shifted = h.matrix - shift * sp.identity(h.n, format='csr')
    tiny = _zero_tol(shifted)
    dense_enough = h.matrix.nnz > 0.25 * h.n * h.n and h.n <= config.DENSE_LIMIT
    if h.n <= config.LDL_DENSE_LIMIT or dense_enough:
        return _ldl_inertia(shifted.toarray(), tiny)
    return _lu_inertia(shifted.tocsc(), tiny)


def count_below(h: SparseSymmetric, shift: float, tau: Optional[float] = None) -> InertiaResult:
    """
    Count eigenvalues of h below shift from the inertia of h - shift*I

    Args:
        h: symmetric matrix
        shift: spectral shift
        tau: perturbation used when the factorization stalls

    Returns:
        InertiaResult
    """
    if h.n == 0:
        return InertiaResult(0, 0, 0, shift)
    try:
        neg, zero, pos = _inertia(h, shift)
        return InertiaResult(neg, zero, pos, shift)
    except (RuntimeError, NumericalError, la.LinAlgError) as e:
        tau = tau or config.NEG_THRESHOLD
        logger.debug(f"Factorization at shift {shift} failed ({e}); retrying at +-{tau}")
    try:
        below, _, _ = _inertia(h, shift - tau)
        below_hi, zero_hi, _ = _inertia(h, shift + tau)
    except (RuntimeError, NumericalError, la.LinAlgError) as e:
        raise NumericalError(f"Inertia factorization broke down near shift {shift}: {e}")
    zero = below_hi + zero_hi - below
    return InertiaResult(below, zero, h.n - below - zero, shift)


def _count_nonpositive(h: SparseSymmetric, tau: float) -> int:
    """#{eigenvalues <= -tau}"""
    inertia = count_below(h, -tau)
    return inertia.negative + inertia.zero


def box_count(model: ModelSpec, v: Potential, tol: Optional[ToleranceConfig] = None) -> int:
    """N0 on the model's own truncation, without box growth"""
    tau = (tol or ToleranceConfig()).neg_threshold
    return _count_nonpositive(assemble_h(model, v), tau)


def _negative_eigenvalues(h: SparseSymmetric, n0: int, tau: float) -> List[float]:
    if n0 == 0:
        return []
    if h.n <= config.DENSE_LIMIT:
        values = np.asarray(dense_spectrum(h))
    else:
        values = eigsh(h.matrix.tocsc(), k=min(n0 + 1, h.n - 1), which='SA',
                       return_eigenvectors=False)
    values = np.sort(values)
    return [float(v) for v in values[:n0]]


def _box_schedule(model: ModelSpec, v: Potential, tol: ToleranceConfig,
                  max_box: Optional[int]) -> List[ModelSpec]:
    """Nested truncations the count is stabilized over"""
    if model.family == Family.GENERAL_GRAPH:
        return [model]
    if model.family == Family.HIERARCHICAL:
        needed = 1
        while model.nu ** needed <= v.radius:
            needed += 1
        cap = min(max_box or config.MAX_HIER_LEVELS, config.MAX_HIER_LEVELS)
        start = max(model.levels, needed)
        return [model.with_levels(l) for l in range(start, max(cap, start) + 1)]
    cap = config.FAMILY_BOX_LIMITS[model.family.value]
    if max_box:
        cap = min(cap, max_box)
    radius = max(model.radius, v.radius + 4)
    schedule = []
    while radius <= cap:
        schedule.append(model.with_radius(radius))
        radius = max(radius + 1, int(math.ceil(radius * tol.box_growth_factor)))
    if not schedule:
        raise ValidationError(f"Potential support radius {v.radius} exceeds the box cap {cap}")
    return schedule


def _extent(model: ModelSpec) -> int:
    return model.levels if model.family == Family.HIERARCHICAL else model.radius


def n0_count(model: ModelSpec, v: Potential, tol: Optional[ToleranceConfig] = None,
             gamma: Optional[float] = None, max_box: Optional[int] = None) -> SpectrumSummary:
    """
    N0(V) on expanding boxes until two consecutive counts agree

    Args:
        model: operator family; its radius (or levels) is the first box
        v: finite-support potential
        tol: tolerances (thresholds and box growth factor)
        gamma: also report S_gamma when given
        max_box: tighter cap on the box radius (or hierarchical levels)

    Returns:
        SpectrumSummary
    """
    tol = tol or ToleranceConfig()
    tau = tol.neg_threshold
    schedule = _box_schedule(model, v, tol, max_box)
    counts: Dict[int, int] = {}
    previous: Optional[int] = None
    prev_box: Optional[ModelSpec] = None
    for box in schedule:
        h = assemble_h(box, v)
        count = _count_nonpositive(h, tau)
        counts[_extent(box)] = count
        logger.debug(f"{box.family.value} box {_extent(box)}: {count} eigenvalues <= -{tau}")
        if previous is not None and count < previous:
            raise InvariantViolation(
                f"Count fell from {previous} to {count} when the box grew to {_extent(box)}")
        if box.family == Family.GENERAL_GRAPH or (previous is not None and count == previous):
            eigenvalues = _negative_eigenvalues(h, count, tau)
            upper = count_below(h, tau)
            near_zero = upper.negative + upper.zero - count
            summary = SpectrumSummary(
                negative_eigenvalues=eigenvalues,
                near_zero_count=near_zero,
                n0=count,
                box_radius_used=_extent(box),
                previous_radius=_extent(prev_box) if prev_box is not None else None,
                counts=counts,
            )
            if gamma is not None:
                summary.s_gamma = lieb_thirring_sum(summary, gamma)
            return summary
        previous, prev_box = count, box
    last = list(counts.values())[-2:]
    raise NonConvergenceError(f"N0 did not stabilize up to box {_extent(schedule[-1])}", last)


def birman_schwinger_count(model: ModelSpec, v: Potential, lam: float,
                           tol: Optional[ToleranceConfig] = None) -> int:
    """
    #{eigenvalues >= 1 of V^1/2 (H0 + lambda)^-1 V^1/2} = #{eigenvalues of H <= -lambda}
    """
    if lam <= 0:
        raise ValidationError(f"lambda must be positive, got {lam}", field='lambda')
    if not v:
        return 0
    if not math.isfinite(v.max_value):
        raise ValidationError("Birman-Schwinger needs a finite potential")
    kernel = birman_schwinger_matrix(model, v, lam, tol)
    values = np.linalg.eigvalsh(kernel)
    return int(np.sum(values >= 1.0))


def birman_schwinger_matrix(model: ModelSpec, v: Potential, lam: float,
                            tol: Optional[ToleranceConfig] = None) -> np.ndarray:
    tol = tol or ToleranceConfig()
    family = get_family(model)
    sites = v.support
    roots = np.sqrt(v.values())
    cache: Dict[Any, float] = {}
    kernel = np.empty((len(sites), len(sites)))
    for i, x in enumerate(sites):
        for j in range(i, len(sites)):
            key = family.symmetry_key(model, x, sites[j])
            if key not in cache:
                cache[key] = -family.resolvent(model, lam, x, sites[j], tol)[0]
            kernel[i, j] = kernel[j, i] = roots[i] * cache[key] * roots[j]
    return kernel


def lieb_thirring_sum(summary: SpectrumSummary, gamma: float) -> float:
    """S_gamma = sum |lambda_j|^gamma over the negative eigenvalues"""
    if gamma <= 0:
        raise ValidationError(f"gamma must be positive, got {gamma}", field='gamma')
    return float(sum(abs(v) ** gamma for v in summary.negative_eigenvalues))


def free_spectrum(model: ModelSpec, conservative: bool = False) -> List[float]:
    """Spectrum of H0 on the model's own truncation; conservative selects the
    row-sum-zero hierarchical cube"""
    if conservative:
        model.require(Family.HIERARCHICAL)
        return dense_spectrum(get_family(model).assemble(model, conservative=True))
    return dense_spectrum(assemble_h0(model))
