"""
Hierarchical Laplacian on the nu-adic cubes

Sites are integers; d_h(x, y) is the smallest rank r with x // nu^r == y // nu^r.
A jump of rank r has probability a_r = (1-p) p^(r-1) and lands uniformly in
the rank-r cube. Kernels use the eigenvalues p^s of the infinite model:
    p(t, x, x) = (1 - 1/nu) sum_{s>=0} nu^-s e^(-p^s t)
    p(t, x, y) = -e^(-p^(r-1) t) / nu^r + sum_{s>=r} (nu^-s - nu^-s-1) e^(-p^s t),  r = d_h
"""
import math
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from src.core import Family, ModelSpec, Site, ToleranceConfig, box_sites, hier_distance
from src.errors import DivergenceError, ValidationError
from src.operators import SparseSymmetric
from .base import BaseFamily


def distance_matrix(nu: int, levels: int) -> np.ndarray:
    idx = np.arange(nu ** levels)
    dist = np.zeros((idx.size, idx.size), dtype=np.int8)
    for k in range(levels):
        block = idx // nu ** k
        dist += block[:, None] != block[None, :]
    return dist


def spectral_dim(nu: int, p: float) -> float:
    """s_h = 2 ln(nu) / ln(1/p)"""
    return 2.0 * math.log(nu) / math.log(1.0 / p)


def _ranks(nu: int, p: float, scale: float) -> np.ndarray:
    """Ranks s = 0..S covering the eigenvalues p^s that matter at the given time scale"""
    s_star = math.log(max(scale, 1.0)) / math.log(1.0 / p)
    return np.arange(int(math.ceil(s_star + 80.0 / math.log(nu))) + 1)


def _level_weights(nu: int, r: int, s: np.ndarray) -> np.ndarray:
    """Spectral weight of e^(-p^s t) in p(t, x, y) for d_h(x, y) = r >= 1"""
    w = np.where(s >= r, nu ** (-s.astype(float)) - nu ** (-s.astype(float) - 1.0), 0.0)
    w[s == r - 1] = -float(nu) ** (-r)
    return w


def hier_heat(nu: int, p: float, t: float, r: int) -> float:
    s = _ranks(nu, p, t)
    decay = np.exp(-p ** s * t)
    if r == 0:
        return float((1.0 - 1.0 / nu) * np.sum(nu ** (-s.astype(float)) * decay))
    return float(np.sum(_level_weights(nu, r, s) * decay))


def hier_resolvent(nu: int, p: float, lam: float, r: int) -> float:
    s = _ranks(nu, p, 1.0 / lam)
    inv = 1.0 / (lam + p ** s)
    if r == 0:
        return float(-(1.0 - 1.0 / nu) * np.sum(nu ** (-s.astype(float)) * inv))
    return float(-np.sum(_level_weights(nu, r, s) * inv))


def infinite_diagonal(nu: int, p: float) -> float:
    """H0(x, x) = sum_{r>=1} a_r (1 - nu^-r) = 1 - (1 - p) / (nu - p)"""
    return 1.0 - (1.0 - p) / (nu - p)


def hier_rtilde(nu: int, p: float, r: int) -> float:
    """2 [(1 - 1/nu) sum_{s<r-1} (nu p)^-s + (nu p)^-(r-1)]"""
    if r == 0:
        return 0.0
    q = 1.0 / (nu * p)
    head = sum(q ** s for s in range(r - 1))
    return 2.0 * ((1.0 - 1.0 / nu) * head + q ** (r - 1))


class HierarchicalFamily(BaseFamily):
    """Dyson-type hierarchical Laplacian restricted to the rank-levels cube"""

    family = Family.HIERARCHICAL

    def __init__(self):
        super().__init__('Hierarchical')

    def assemble(self, model: ModelSpec, conservative: bool = False) -> SparseSymmetric:
        """
        H0 on the rank-levels cube

        The default keeps the diagonal of the infinite lattice, so jumps of rank
        above levels are killed and the matrix is the compression of H0 to the
        cube. With conservative=True those jumps are dropped instead and rows
        sum to zero.
        """
        nu, levels = model.nu, model.levels
        a = model.rank_weights()
        r = np.arange(1, levels + 1)
        per_rank = a / float(nu) ** r
        # off[d] = -sum_{r >= d} a_r / nu^r
        off = np.zeros(levels + 1)
        off[1:] = -np.cumsum(per_rank[::-1])[::-1]
        dense = off[distance_matrix(nu, levels)]
        if conservative:
            diagonal = float(np.sum(a * (1.0 - float(nu) ** (-r))))
        else:
            diagonal = infinite_diagonal(nu, model.p)
        np.fill_diagonal(dense, diagonal)
        self.logger.debug(f"Assembled hierarchical cube nu={nu} levels={levels} "
                          f"({'conservative' if conservative else 'killed'})")
        return SparseSymmetric(sp.csr_matrix(dense), tuple(box_sites(model)))

    def resolvent(self, model: ModelSpec, lam: float, x: Site, y: Site,
                  tol: ToleranceConfig) -> Tuple[float, str]:
        return hier_resolvent(model.nu, model.p, lam, hier_distance(x, y, model)), 'series'

    def heat_kernel(self, model: ModelSpec, t: float, x: Site, y: Site,
                    tol: ToleranceConfig) -> Tuple[float, str]:
        return hier_heat(model.nu, model.p, t, hier_distance(x, y, model)), 'series'

    def regularized_resolvent(self, model: ModelSpec, x: Site, x0: Site,
                              tol: ToleranceConfig) -> Tuple[float, str]:
        return hier_rtilde(model.nu, model.p, hier_distance(x, x0, model)), 'series'

    def spectral_dimension(self, model: ModelSpec) -> float:
        return spectral_dim(model.nu, model.p)

    def symmetry_key(self, model: ModelSpec, x: Site, y: Site):
        return hier_distance(x, y, model)

    def is_recurrent(self, model: ModelSpec) -> bool:
        return model.nu * model.p <= 1.0 + 1e-12

    def resolvent_at_zero(self, model: ModelSpec, x: Site, tol: ToleranceConfig) -> float:
        q = 1.0 / (model.nu * model.p)
        if q >= 1.0 - 1e-12:
            raise DivergenceError(f"R_0(x, x) is infinite for nu*p = {model.nu * model.p} <= 1",
                                  self.name)
        return (1.0 - 1.0 / model.nu) / (1.0 - q)

    def check_site(self, model: ModelSpec, site: Site):
        if site.dim != 1 or site.index < 0:
            raise ValidationError(f"Hierarchical sites are nonnegative integers, got {site}")
