"""
Nearest-neighbour Laplacian on Z^2

One Fourier coordinate is integrated exactly by residues:
    int e^{i n phi} / (A - 2 cos phi) dphi = 2 pi r^|n| / sqrt(A^2 - 4),
    r = 2 / (A + sqrt(A^2 - 4)),
which leaves a single integral over the other angle.
"""
import math
from typing import Tuple

import numpy as np
import scipy.sparse as sp
from scipy import special

from src.core import Family, ModelSpec, Site, ToleranceConfig, box_sites
from src.errors import ValidationError
from src.operators import SparseSymmetric
from .base import BaseFamily, geometric_breakpoints, oscillation_breakpoints, segmented_quad
from .z1 import z1_heat


def _offsets(x: Site, y: Site) -> Tuple[int, int]:
    """(larger, smaller) absolute coordinate offset"""
    d = [abs(a - b) for a, b in zip(x.coords, y.coords)]
    return max(d), min(d)


def _root_terms(lam: float, phi: float) -> Tuple[float, float]:
    """sqrt(A^2 - 4) and log r for A = 2 + lam + 4 sin^2(phi/2)"""
    s = math.sin(phi / 2.0) ** 2
    root = math.sqrt((lam + 4.0 * s) * (4.0 + lam + 4.0 * s))
    a = 2.0 + lam + 4.0 * s
    return root, -math.log((a + root) / 2.0)


def diagonal_resolvent_closed_form(lam: float) -> float:
    """R_lambda(0, 0) through the complete elliptic integral"""
    k = 4.0 / (4.0 + lam)
    return -2.0 / (math.pi * (4.0 + lam)) * float(special.ellipk(k * k))


class Z2Family(BaseFamily):
    """Z^2 with h(x, x) = 4 and -1 on the four neighbours"""

    family = Family.Z2

    def __init__(self):
        super().__init__('Z2')

    def assemble(self, model: ModelSpec) -> SparseSymmetric:
        n = 2 * model.radius + 1
        chain = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], shape=(n, n))
        eye = sp.identity(n)
        matrix = (sp.kron(chain, eye) + sp.kron(eye, chain)).tocsr()
        self.logger.debug(f"Assembled Z2 box with {n * n} sites")
        return SparseSymmetric(matrix, tuple(box_sites(model)))

    def resolvent(self, model: ModelSpec, lam: float, x: Site, y: Site,
                  tol: ToleranceConfig) -> Tuple[float, str]:
        n1, n2 = _offsets(x, y)

        def integrand(phi: float) -> float:
            root, log_r = _root_terms(lam, phi)
            return math.exp(n1 * log_r) / root

        width = min(math.sqrt(lam), 1.0) / max(n1, 1)
        points = geometric_breakpoints(width)
        value = segmented_quad(integrand, points, tol.quad_tol, f"Z2 resolvent at {x}",
                               wvar=n2 or None)
        return -value / math.pi, 'quadrature'

    def heat_kernel(self, model: ModelSpec, t: float, x: Site, y: Site,
                    tol: ToleranceConfig) -> Tuple[float, str]:
        # coordinate generators commute
        d1, d2 = (a - b for a, b in zip(x.coords, y.coords))
        return z1_heat(t, d1) * z1_heat(t, d2), 'closed_form'

    def regularized_resolvent(self, model: ModelSpec, x: Site, x0: Site,
                              tol: ToleranceConfig) -> Tuple[float, str]:
        n1, n2 = _offsets(x, x0)
        if n1 == 0:
            return 0.0, 'quadrature'

        def integrand(phi: float) -> float:
            root, log_r = _root_terms(0.0, phi)
            return (2.0 * math.sin(n2 * phi / 2.0) ** 2
                    - math.cos(n2 * phi) * math.expm1(n1 * log_r)) / root

        points = geometric_breakpoints(1.0 / n1, extra=oscillation_breakpoints(n2))
        value = segmented_quad(integrand, points, tol.quad_tol, f"Z2 R-tilde at {x}")
        return 2.0 * value / math.pi, 'quadrature'

    def spectral_dimension(self, model: ModelSpec) -> float:
        return 2.0

    def symmetry_key(self, model: ModelSpec, x: Site, y: Site):
        return _offsets(x, y)

    def check_site(self, model: ModelSpec, site: Site):
        if site.dim != 2:
            raise ValidationError(f"Z2 sites have two coordinates, got {site}")
