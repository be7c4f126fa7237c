"""
Assembly of finite symmetric matrices for the operator families and their
perturbations: potential subtraction, killing, Dirichlet deletion.
"""
import logging
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy import integrate, special
from scipy.sparse.csgraph import connected_components

import config
from src.core import ModelSpec, Potential, Site, site_index
from src.errors import NumericalError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SparseSymmetric:
    """Symmetric sparse matrix with site labels on its rows"""

    matrix: sp.csr_matrix
    sites: Tuple[Site, ...]

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=float)
        m.sum_duplicates()
        m.eliminate_zeros()
        if m.shape[0] != m.shape[1] or m.shape[0] != len(self.sites):
            raise ValidationError(f"Matrix shape {m.shape} does not match {len(self.sites)} sites")
        if m.nnz and not np.all(np.isfinite(m.data)):
            raise ValidationError("Matrix has non-finite entries")
        asym = abs(m - m.T)
        scale = max(1.0, abs(m).max() if m.nnz else 1.0)
        if asym.nnz and asym.max() > 1e-12 * scale:
            raise ValidationError("Matrix is not symmetric")
        object.__setattr__(self, 'matrix', m)
        object.__setattr__(self, 'sites', tuple(self.sites))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def index(self) -> Dict[Site, int]:
        return site_index(self.sites)

    def index_of(self, site: Site) -> int:
        try:
            return self.index[site]
        except KeyError:
            raise ValidationError(f"Site {site} lies outside the truncation")

    @property
    def entries(self) -> List[Tuple[int, int, float]]:
        """Upper-triangle (row, col, value) triplets"""
        upper = sp.triu(self.matrix).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return [(int(upper.row[i]), int(upper.col[i]), float(upper.data[i])) for i in order]

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def trace(self) -> float:
        return float(self.matrix.diagonal().sum())

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def quadratic_form(self, vector: np.ndarray) -> float:
        return float(vector @ (self.matrix @ vector))

    @classmethod
    def from_dense(cls, array: np.ndarray, sites: Sequence[Site]) -> 'SparseSymmetric':
        return cls(sp.csr_matrix(np.asarray(array, dtype=float)), tuple(sites))

    def export_text(self, path: str):
        """Triplet export: header `n nnz`, then 0-based `row col value` upper triangle"""
        triplets = self.entries
        with open(path, 'w', encoding='utf-8') as fh:
            fh.write(f"{self.n} {len(triplets)}\n")
            for row, col, value in triplets:
                fh.write(f"{row} {col} {value!r}\n")
        logger.info(f"Exported {self.n}x{self.n} matrix with {len(triplets)} entries to {path}")


def _site_from_record(value: Any) -> Site:
    if isinstance(value, Site):
        return value
    if isinstance(value, (list, tuple)):
        return Site.of(tuple(value))
    return Site((int(value),))


@dataclass(frozen=True, eq=False)
class GeneratorTable:
    """User-supplied generator h(x, y) on a finite site set"""

    pairs: Mapping[Tuple[Site, Site], float]

    def __post_init__(self):
        sym: Dict[Tuple[Site, Site], float] = {}
        for (x, y), value in self.pairs.items():
            x, y = _site_from_record(x), _site_from_record(y)
            value = float(value)
            for key in ((x, y), (y, x)):
                if key in sym and abs(sym[key] - value) > 1e-12 * max(1.0, abs(value)):
                    raise ValidationError(f"Generator table is not symmetric at {x}, {y}",
                                          field='model.generator_table')
                sym[key] = value
        object.__setattr__(self, 'pairs', sym)

    @cached_property
    def sites(self) -> Tuple[Site, ...]:
        return tuple(sorted({x for x, _ in self.pairs}))

    @cached_property
    def site_set(self) -> frozenset:
        return frozenset(self.sites)

    def to_matrix(self) -> sp.csr_matrix:
        index = site_index(self.sites)
        rows, cols, vals = [], [], []
        for (x, y), value in self.pairs.items():
            rows.append(index[x])
            cols.append(index[y])
            vals.append(value)
        n = len(self.sites)
        return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()

    def row_defects(self) -> np.ndarray:
        """Sum of each row: zero on the infinite model, deleted mass when truncated"""
        return np.asarray(self.to_matrix().sum(axis=1)).ravel()

    def validate(self, c0: float, tol: float = 1e-12):
        """Check the generator conditions, naming the offending row"""
        m = self.to_matrix()
        scale = max(1.0, c0)
        for (x, y), value in self.pairs.items():
            if x != y and value > tol * scale:
                raise ValidationError(f"Off-diagonal h({x}, {y}) = {value} is positive",
                                      field=f'model.generator_table[{x}]')
        diag = m.diagonal()
        defects = self.row_defects()
        for i, site in enumerate(self.sites):
            if diag[i] > c0 + tol * scale:
                raise ValidationError(f"Diagonal h({site}, {site}) = {diag[i]} exceeds c0 = {c0}",
                                      field=f'model.generator_table[{site}]')
            if defects[i] < -tol * scale:
                raise ValidationError(f"Row {site} sums to {defects[i]} < 0",
                                      field=f'model.generator_table[{site}]')
        offdiag = m - sp.diags(diag)
        n_components, _ = connected_components(abs(offdiag) > 0, directed=False)
        if n_components != 1:
            raise ValidationError(f"Generator graph has {n_components} components, needs one",
                                  field='model.generator_table')

    def describe(self) -> Dict[str, Any]:
        return {'sites': len(self.sites), 'entries': len(self.pairs)}

    @classmethod
    def from_records(cls, records: Iterable[Sequence[Any]]) -> 'GeneratorTable':
        """Records are [x, y, value] with x, y integers or coordinate lists"""
        pairs = {}
        for rec in records:
            if len(rec) != 3:
                raise ValidationError(f"Generator record {rec!r} needs [x, y, value]",
                                      field='model.generator_table')
            pairs[(_site_from_record(rec[0]), _site_from_record(rec[1]))] = float(rec[2])
        return cls(pairs)

    @classmethod
    def chain(cls, radius: int) -> 'GeneratorTable':
        """Z^1 Laplacian on [-radius, radius] with the exterior deleted"""
        pairs = {}
        for x in range(-radius, radius + 1):
            pairs[(Site((x,)), Site((x,)))] = 2.0
            if x < radius:
                pairs[(Site((x,)), Site((x + 1,)))] = -1.0
        return cls(pairs)


@dataclass(frozen=True)
class FractionalCoefficients:
    """Toeplitz coefficients t(0..bandwidth) of the symbol (4 sin^2(phi/2))^alpha"""

    alpha: float
    t: np.ndarray
    method: str = 'quadrature'

    @property
    def bandwidth(self) -> int:
        return len(self.t) - 1

    def __call__(self, k: int) -> float:
        k = abs(int(k))
        return float(self.t[k]) if k <= self.bandwidth else 0.0

    @property
    def symbol_defect(self) -> float:
        """t(0) + 2 sum t(k): the mass carried by offsets beyond the bandwidth"""
        return float(self.t[0] + 2.0 * self.t[1:].sum())

    def as_dict(self) -> Dict[int, float]:
        out = {0: float(self.t[0])}
        for k in range(1, self.bandwidth + 1):
            out[k] = out[-k] = float(self.t[k])
        return out


def fractional_series(alpha: float, bandwidth: int) -> np.ndarray:
    """Exact coefficients from the Gamma-ratio recurrence"""
    t = np.empty(bandwidth + 1)
    t[0] = special.gamma(2 * alpha + 1) / special.gamma(alpha + 1) ** 2
    for k in range(bandwidth):
        t[k + 1] = t[k] * (k - alpha) / (k + alpha + 1)
    return t


def fractional_coefficients(alpha: float, bandwidth: int, tol: Optional[float] = None,
                            method: str = 'quadrature') -> FractionalCoefficients:
    """
    Fourier coefficients of the fractional Laplacian symbol.

    Args:
        alpha: power in (0, 2)
        bandwidth: largest offset kept
        tol: absolute quadrature tolerance (config.QUAD_TOL by default)
        method: 'quadrature' or 'series'

    Returns:
        FractionalCoefficients
    """
    if not 0 < alpha < 2:
        raise ValidationError(f"alpha must lie in (0, 2), got {alpha}", field='alpha')
    if bandwidth < 1:
        raise ValidationError(f"bandwidth must be >= 1, got {bandwidth}", field='bandwidth')
    if method == 'series':
        return FractionalCoefficients(alpha, fractional_series(alpha, bandwidth), 'series')
    if method != 'quadrature':
        raise ValidationError(f"Unknown coefficient method '{method}'")

    tol = tol or config.QUAD_TOL
    symbol = lambda phi: (4.0 * np.sin(phi / 2.0) ** 2) ** alpha
    t = np.empty(bandwidth + 1)
    with warnings.catch_warnings():
        warnings.simplefilter('error', integrate.IntegrationWarning)
        try:
            t[0] = integrate.quad(symbol, 0.0, np.pi, epsabs=tol, epsrel=tol, limit=200)[0] / np.pi
            for k in range(1, bandwidth + 1):
                t[k] = integrate.quad(symbol, 0.0, np.pi, weight='cos', wvar=k,
                                      epsabs=tol, limit=400)[0] / np.pi
        except integrate.IntegrationWarning as e:
            raise NumericalError(f"Symbol quadrature failed for alpha={alpha}: {e}")
    return FractionalCoefficients(alpha, t, 'quadrature')


def assemble_h0(model: ModelSpec) -> SparseSymmetric:
    """Free operator of the model on its truncation"""
    from src.families import get_family
    return get_family(model).assemble(model)


def _diagonal_vector(h: SparseSymmetric, v: Potential, what: str) -> np.ndarray:
    vec = np.zeros(h.n)
    for site, value in v.items():
        if site not in h.index:
            raise ValidationError(f"{what} support site {site} escapes the box")
        vec[h.index[site]] = value
    return vec


def subtract_potential(h0: SparseSymmetric, v: Potential) -> SparseSymmetric:
    """H = H0 - V"""
    vec = _diagonal_vector(h0, v, 'Potential')
    if not np.all(np.isfinite(vec)):
        raise ValidationError("Potential must be finite to subtract")
    return SparseSymmetric(h0.matrix - sp.diags(vec), h0.sites)


def add_killing(h0: SparseSymmetric, q: Potential) -> SparseSymmetric:
    """H1 = H0 + q; infinite killing goes through dirichlet_at"""
    vec = _diagonal_vector(h0, q, 'Killing')
    if not np.all(np.isfinite(vec)):
        raise ValidationError("Infinite killing rate: use dirichlet_at for that site")
    return SparseSymmetric(h0.matrix + sp.diags(vec), h0.sites)


def dirichlet_at(h0: SparseSymmetric, x0: Site) -> SparseSymmetric:
    """Delete the row and column of x0"""
    i = h0.index_of(x0)
    keep = np.r_[0:i, i + 1:h0.n]
    reduced = h0.matrix[keep][:, keep]
    return SparseSymmetric(reduced, tuple(s for s in h0.sites if s != x0))


def assemble_h(model: ModelSpec, v: Potential) -> SparseSymmetric:
    return subtract_potential(assemble_h0(model), v)
