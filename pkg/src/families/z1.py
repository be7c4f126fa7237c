"""
Nearest-neighbour Laplacian on Z^1
"""
import math
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy import special

from src.core import Family, ModelSpec, Site, ToleranceConfig, box_sites
from src.errors import ValidationError
from src.operators import SparseSymmetric
from .base import BaseFamily


def z1_resolvent(lam: float, distance: int) -> float:
    """R_lambda(x, y) = -a^(-|x-y|) / sqrt(lambda^2 + 4 lambda)"""
    s = math.sqrt(lam * lam + 4.0 * lam)
    a = (2.0 + lam + s) / 2.0
    return -math.exp(-abs(distance) * math.log(a)) / s


def z1_heat(t: float, distance: int) -> float:
    """p0(t, x, y) = e^(-2t) I_|x-y|(2t)"""
    return float(special.ive(abs(distance), 2.0 * t))


class Z1Family(BaseFamily):
    """Z^1 with h(x, x) = 2, h(x, x+-1) = -1"""

    family = Family.Z1

    def __init__(self):
        super().__init__('Z1')

    def assemble(self, model: ModelSpec) -> SparseSymmetric:
        sites = box_sites(model)
        n = len(sites)
        matrix = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], shape=(n, n),
                          format='csr')
        self.logger.debug(f"Assembled Z1 chain with {n} sites")
        return SparseSymmetric(matrix, tuple(sites))

    def resolvent(self, model: ModelSpec, lam: float, x: Site, y: Site,
                  tol: ToleranceConfig) -> Tuple[float, str]:
        return z1_resolvent(lam, x.index - y.index), 'closed_form'

    def heat_kernel(self, model: ModelSpec, t: float, x: Site, y: Site,
                    tol: ToleranceConfig) -> Tuple[float, str]:
        return z1_heat(t, x.index - y.index), 'closed_form'

    def regularized_resolvent(self, model: ModelSpec, x: Site, x0: Site,
                              tol: ToleranceConfig) -> Tuple[float, str]:
        return float(abs(x.index - x0.index)), 'closed_form'

    def spectral_dimension(self, model: ModelSpec) -> float:
        return 1.0

    def symmetry_key(self, model: ModelSpec, x: Site, y: Site):
        return abs(x.index - y.index)

    def point_killed_kernel(self, model: ModelSpec, x0: Site,
                            x: Site) -> Optional[Callable[[float], float]]:
        # reflection through x0
        d = abs(x.index - x0.index)
        return lambda t: float(special.ive(0, 2.0 * t) - special.ive(2 * d, 2.0 * t))

    def check_site(self, model: ModelSpec, site: Site):
        if site.dim != 1:
            raise ValidationError(f"Z1 sites have one coordinate, got {site}")
