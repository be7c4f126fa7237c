"""
User-supplied generator on a finite graph
"""
import math
from typing import Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply, spsolve

from src.core import Family, ModelSpec, Site, ToleranceConfig
from src.errors import DivergenceError, ValidationError
from src.operators import SparseSymmetric
from .base import BaseFamily, DecayClass, extrapolate_to_zero


class GeneralGraphFamily(BaseFamily):
    """H0 = h(x, y) from a GeneratorTable, validated against the declared c0"""

    family = Family.GENERAL_GRAPH

    def __init__(self):
        super().__init__('GeneralGraph')

    def assemble(self, model: ModelSpec) -> SparseSymmetric:
        table = model.generator_table
        table.validate(model.c0)
        self.logger.debug(f"Assembled generator table with {len(table.sites)} sites")
        return SparseSymmetric(table.to_matrix(), table.sites)

    def _column(self, model: ModelSpec, lam: float, y: Site) -> Tuple[np.ndarray, SparseSymmetric]:
        h0 = self.assemble(model)
        rhs = np.zeros(h0.n)
        rhs[h0.index_of(y)] = 1.0
        shifted = (h0.matrix + lam * sp.identity(h0.n, format='csr')).tocsc()
        return np.atleast_1d(spsolve(shifted, rhs)), h0

    def resolvent(self, model: ModelSpec, lam: float, x: Site, y: Site,
                  tol: ToleranceConfig) -> Tuple[float, str]:
        column, h0 = self._column(model, lam, y)
        return -float(column[h0.index_of(x)]), 'dense'

    def heat_kernel(self, model: ModelSpec, t: float, x: Site, y: Site,
                    tol: ToleranceConfig) -> Tuple[float, str]:
        h0 = self.assemble(model)
        start = np.zeros(h0.n)
        start[h0.index_of(y)] = 1.0
        evolved = expm_multiply(-t * h0.matrix.tocsc(), start)
        return float(evolved[h0.index_of(x)]), 'dense'

    def regularized_resolvent(self, model: ModelSpec, x: Site, x0: Site,
                              tol: ToleranceConfig) -> Tuple[float, str]:
        if x == x0:
            return 0.0, 'dense'

        def difference(lam: float) -> float:
            column, h0 = self._column(model, lam, x0)
            return 2.0 * float(column[h0.index_of(x0)] - column[h0.index_of(x)])

        value, history = extrapolate_to_zero(difference, 1e-2, tol.extrap_tol, basis='log')
        self.logger.debug(f"R-tilde({x}, {x0}) extrapolated over {len(history)} steps")
        return value, 'dense'

    def is_recurrent(self, model: ModelSpec) -> bool:
        """A finite graph is recurrent iff no row leaks mass"""
        defects = model.generator_table.row_defects()
        return bool(np.all(np.abs(defects) <= 1e-12 * max(1.0, model.c0)))

    def spectral_dimension(self, model: ModelSpec) -> float:
        # conservative: p0 tends to 1/n; leaking: exponential decay
        return 0.0 if self.is_recurrent(model) else math.inf

    def tail_decay(self, model: ModelSpec, killed: bool) -> DecayClass:
        if not killed and self.is_recurrent(model):
            return DecayClass(0.0)
        return DecayClass(math.inf, kind='exponential')

    def resolvent_at_zero(self, model: ModelSpec, x: Site, tol: ToleranceConfig) -> float:
        if self.is_recurrent(model):
            raise DivergenceError("R_0(x, x) is infinite on a conservative finite graph", self.name)
        column, h0 = self._column(model, 0.0, x)
        return float(column[h0.index_of(x)])

    def check_site(self, model: ModelSpec, site: Site):
        if site not in model.generator_table.site_set:
            raise ValidationError(f"Site {site} is not in the generator table")
