"""
Fractional power (-Delta)^alpha of the Z^1 Laplacian, 0 < alpha <= 1
"""
import math
from typing import Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import toeplitz

from src.core import Family, ModelSpec, Site, ToleranceConfig, box_sites
from src.errors import DivergenceError, ValidationError
from src.operators import FractionalCoefficients, SparseSymmetric, fractional_series
from .base import (BaseFamily, geometric_breakpoints, guarded_quad, oscillation_breakpoints,
                   segmented_quad)


def symbol(phi: float, alpha: float) -> float:
    return (2.0 * math.sin(phi / 2.0)) ** (2.0 * alpha)


def adaptive_coefficients(alpha: float, max_offset: int, rel_tol: float) -> FractionalCoefficients:
    """Series coefficients up to the first offset below rel_tol * t(0), at most max_offset"""
    full = fractional_series(alpha, max(max_offset, 1))
    small = np.nonzero(np.abs(full[1:]) < rel_tol * abs(full[0]))[0]
    bandwidth = int(small[0]) if small.size else max(max_offset, 1)
    return FractionalCoefficients(alpha, full[:max(bandwidth, 1) + 1], 'series')


class FractionalFamily(BaseFamily):
    """Symmetric Toeplitz operator with symbol (4 sin^2(phi/2))^alpha"""

    family = Family.FRACTIONAL

    def __init__(self):
        super().__init__('Fractional')

    def assemble(self, model: ModelSpec) -> SparseSymmetric:
        sites = box_sites(model)
        n = len(sites)
        coeffs = adaptive_coefficients(model.alpha, n - 1, ToleranceConfig().quad_tol)
        column = np.zeros(n)
        width = min(coeffs.bandwidth, n - 1)
        column[:width + 1] = coeffs.t[:width + 1]
        if width < n - 1:
            self.logger.debug(f"Toeplitz band cut at {width}, dropped symbol mass {coeffs.symbol_defect:.3e}")
        return SparseSymmetric(sp.csr_matrix(toeplitz(column)), tuple(sites))

    def resolvent(self, model: ModelSpec, lam: float, x: Site, y: Site,
                  tol: ToleranceConfig) -> Tuple[float, str]:
        alpha = model.alpha
        d = abs(x.index - y.index)
        points = geometric_breakpoints(lam ** (1.0 / (2.0 * alpha)))
        value = segmented_quad(lambda phi: 1.0 / (lam + symbol(phi, alpha)), points,
                               tol.quad_tol, f"fractional resolvent at {x}", wvar=d or None)
        return -value / math.pi, 'quadrature'

    def heat_kernel(self, model: ModelSpec, t: float, x: Site, y: Site,
                    tol: ToleranceConfig) -> Tuple[float, str]:
        d = abs(x.index - y.index)
        if t == 0:
            return (1.0 if d == 0 else 0.0), 'closed_form'
        alpha = model.alpha
        points = geometric_breakpoints(min(1.0, t ** (-1.0 / (2.0 * alpha))))
        value = segmented_quad(lambda phi: math.exp(-t * symbol(phi, alpha)), points,
                               tol.quad_tol, f"fractional heat kernel at t={t}", wvar=d or None)
        return value / math.pi, 'quadrature'

    def regularized_resolvent(self, model: ModelSpec, x: Site, x0: Site,
                              tol: ToleranceConfig) -> Tuple[float, str]:
        d = abs(x.index - x0.index)
        if d == 0:
            return 0.0, 'quadrature'
        alpha = model.alpha
        points = geometric_breakpoints(1.0 / d, extra=oscillation_breakpoints(d))
        value = segmented_quad(lambda phi: 2.0 * math.sin(d * phi / 2.0) ** 2 / symbol(phi, alpha),
                               points, tol.quad_tol, f"fractional R-tilde at {x}")
        return 2.0 * value / math.pi, 'quadrature'

    def spectral_dimension(self, model: ModelSpec) -> float:
        return 1.0 / model.alpha

    def symmetry_key(self, model: ModelSpec, x: Site, y: Site):
        return abs(x.index - y.index)

    def resolvent_at_zero(self, model: ModelSpec, x: Site, tol: ToleranceConfig) -> float:
        alpha = model.alpha
        if alpha >= 0.5:
            raise DivergenceError(f"R_0(x, x) is infinite for alpha = {alpha} >= 1/2", self.name)
        # phi^(-2 alpha) endpoint singularity goes into the weight
        smooth = lambda phi: phi ** (2.0 * alpha) / symbol(phi, alpha) if phi > 0 else 1.0
        value = guarded_quad(smooth, 0.0, math.pi, tol.quad_tol, "fractional R_0",
                             weight='alg', wvar=(-2.0 * alpha, 0.0))
        return value / math.pi

    def check_site(self, model: ModelSpec, site: Site):
        if site.dim != 1:
            raise ValidationError(f"Fractional sites have one coordinate, got {site}")
