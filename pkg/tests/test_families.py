"""Tests for the operator family kernels"""
import math
import numpy as np
import pytest
from scipy import integrate

from src.core import BoxSpec, Family, ModelSpec, Site
from src.errors import DivergenceError, NonConvergenceError
from src.families import extrapolate_to_zero, get_family, get_registry
from src.families.hierarchical import hier_heat, hier_resolvent, hier_rtilde, spectral_dim
from src.families.z1 import z1_heat, z1_resolvent
from src.families.z2 import diagonal_resolvent_closed_form
from src.operators import assemble_h0


class TestRegistry:

    def test_all_families_registered(self):
        registry = get_registry()
        assert set(registry.families) == set(Family)

    def test_build_table_keeps_order(self):
        sites = [Site((i,)) for i in (5, 1, 3)]
        table = get_registry().build_table(lambda s: float(s.index), sites, max_workers=2)
        assert list(table) == sites
        assert table[Site((3,))] == 3.0


class TestZ1Family:

    def test_resolvent_closed_form(self):
        """Test R_lambda(0, 0) = -1 / sqrt(lambda^2 + 4 lambda)"""
        assert math.isclose(z1_resolvent(1.0, 0), -1.0 / math.sqrt(5.0))

    def test_resolvent_matches_dense_inverse(self, tol):
        """Test against (H0 + lambda)^-1 on a large box"""
        model = ModelSpec(Family.Z1, BoxSpec(200))
        h0 = assemble_h0(model).to_dense()
        inverse = np.linalg.inv(h0 + 0.3 * np.eye(h0.shape[0]))
        for d in (0, 1, 5):
            assert math.isclose(-inverse[200, 200 + d], z1_resolvent(0.3, d), rel_tol=1e-9)

    def test_heat_kernel_sums_to_one(self):
        """Test sum_y p0(t, x, y) = 1"""
        total = sum(z1_heat(2.0, d) for d in range(-60, 61))
        assert math.isclose(total, 1.0, rel_tol=1e-12)

    def test_laplace_transform(self, tol):
        """Test R_lambda = -int e^(-lambda t) p0 dt"""
        integral, _ = integrate.quad(lambda t: math.exp(-0.5 * t) * z1_heat(t, 2), 0, math.inf, limit=200)
        assert math.isclose(-integral, z1_resolvent(0.5, 2), rel_tol=1e-7)

    def test_regularized_is_distance(self, z1, tol):
        family = get_family(z1)
        assert family.regularized_resolvent(z1, Site((7,)), Site((2,)), tol) == (5.0, 'closed_form')

    def test_recurrent(self, z1):
        assert get_family(z1).is_recurrent(z1)


class TestZ2Family:

    def test_diagonal_matches_elliptic(self, z2, tol):
        """Test quadrature against the elliptic-integral closed form"""
        value, method = get_family(z2).resolvent(z2, 0.2, Site((0, 0)), Site((0, 0)), tol)
        assert method == 'quadrature'
        assert math.isclose(value, diagonal_resolvent_closed_form(0.2), rel_tol=1e-7)

    def test_resolvent_symmetries(self, z2, tol):
        family = get_family(z2)
        a = family.resolvent(z2, 0.1, Site((2, 1)), Site((0, 0)), tol)[0]
        b = family.resolvent(z2, 0.1, Site((-1, 2)), Site((0, 0)), tol)[0]
        assert math.isclose(a, b, rel_tol=1e-9)

    def test_heat_kernel_factorizes(self, z2, tol):
        value, _ = get_family(z2).heat_kernel(z2, 1.5, Site((1, 2)), Site((0, 0)), tol)
        assert math.isclose(value, z1_heat(1.5, 1) * z1_heat(1.5, 2))

    def test_regularized_nearest_neighbour(self, z2, tol):
        """Test R-tilde(e1, 0) = 1/2"""
        value, _ = get_family(z2).regularized_resolvent(z2, Site((1, 0)), Site((0, 0)), tol)
        assert math.isclose(value, 0.5, rel_tol=1e-7)

    def test_regularized_grows_logarithmically(self, z2, tol):
        family = get_family(z2)
        near = family.regularized_resolvent(z2, Site((4, 0)), Site((0, 0)), tol)[0]
        far = family.regularized_resolvent(z2, Site((16, 0)), Site((0, 0)), tol)[0]
        assert math.isclose(far - near, math.log(4.0) / math.pi, rel_tol=0.02)


class TestFractionalFamily:

    def test_regularized_nearest_neighbour(self, fractional, tol):
        """Test R-tilde(1, 0) = 4/pi at alpha = 1/2"""
        value, _ = get_family(fractional).regularized_resolvent(fractional, Site((1,)), Site((0,)), tol)
        assert math.isclose(value, 4.0 / math.pi, rel_tol=1e-6)

    def test_resolvent_negative(self, fractional, tol):
        value, method = get_family(fractional).resolvent(fractional, 0.1, Site((3,)), Site((0,)), tol)
        assert value < 0
        assert method == 'quadrature'

    def test_transient_below_half(self, tol):
        model = ModelSpec(Family.FRACTIONAL, BoxSpec(10), alpha=0.3)
        family = get_family(model)
        assert not family.is_recurrent(model)
        assert family.resolvent_at_zero(model, Site((0,)), tol) > 0

    def test_recurrent_resolvent_at_zero_diverges(self, fractional, tol):
        with pytest.raises(DivergenceError):
            get_family(fractional).resolvent_at_zero(fractional, Site((0,)), tol)


class TestHierarchicalFamily:

    def test_spectral_dimension(self):
        assert math.isclose(spectral_dim(2, 0.5), 2.0)
        assert math.isclose(spectral_dim(4, 0.5), 4.0)

    def test_heat_diagonal_at_zero(self):
        """Test p(0, x, x) = 1"""
        assert math.isclose(hier_heat(2, 0.5, 0.0, 0), 1.0, rel_tol=1e-12)

    def test_heat_kernel_conserves_mass(self):
        """Test sum_y p(t, x, y) = 1 over ranks"""
        t = 3.0
        total = hier_heat(2, 0.5, t, 0)
        for r in range(1, 60):
            total += 2 ** (r - 1) * hier_heat(2, 0.5, t, r)
        assert math.isclose(total, 1.0, rel_tol=1e-9)

    def test_resolvent_laplace_transform(self):
        integral, _ = integrate.quad(lambda t: math.exp(-0.7 * t) * hier_heat(3, 0.25, t, 2),
                                     0, math.inf, limit=400)
        assert math.isclose(-integral, hier_resolvent(3, 0.25, 0.7, 2), rel_tol=1e-6)

    def test_rtilde_recurrent_equals_distance_plus_one(self):
        """Test R-tilde = d + 1 at nu = 2, p = 1/2"""
        for d in range(1, 8):
            assert math.isclose(hier_rtilde(2, 0.5, d), d + 1.0)
        assert hier_rtilde(2, 0.5, 0) == 0.0

    def test_rtilde_matches_extrapolation(self, tol):
        """Test the closed form against 2 [R(x, x0) - R(x0, x0)] as lambda -> 0"""
        value, _ = extrapolate_to_zero(
            lambda lam: 2.0 * (hier_resolvent(2, 0.5, lam, 3) - hier_resolvent(2, 0.5, lam, 0)),
            1e-2, 1e-8, basis='log')
        assert math.isclose(value, hier_rtilde(2, 0.5, 3), rel_tol=1e-5)

    def test_transient_resolvent_at_zero(self, transient_hierarchical, tol):
        family = get_family(transient_hierarchical)
        assert not family.is_recurrent(transient_hierarchical)
        assert math.isclose(family.resolvent_at_zero(transient_hierarchical, Site((0,)), tol),
                            (1 - 0.25) / (1 - 0.5))


class TestGeneralGraphFamily:

    def test_resolvent_matches_inverse(self, chain_records, tol):
        from src.operators import GeneratorTable
        model = ModelSpec(Family.GENERAL_GRAPH, generator_table=GeneratorTable.from_records(chain_records),
                          c0=2.0)
        h0 = assemble_h0(model).to_dense()
        inverse = np.linalg.inv(h0 + np.eye(5))
        value, method = get_family(model).resolvent(model, 1.0, Site((0,)), Site((3,)), tol)
        assert method == 'dense'
        assert math.isclose(value, -inverse[0, 3])

    def test_conservative_graph_recurrent(self, chain_records):
        from src.operators import GeneratorTable
        model = ModelSpec(Family.GENERAL_GRAPH, generator_table=GeneratorTable.from_records(chain_records),
                          c0=2.0)
        assert get_family(model).is_recurrent(model)


class TestExtrapolation:

    def test_log_basis(self):
        """Test a known limit with a lambda log lambda correction"""
        value, history = extrapolate_to_zero(lambda lam: 3.0 + 2.0 * lam * math.log(1.0 / lam) + lam,
                                             0.1, 1e-10, basis='log')
        assert math.isclose(value, 3.0, abs_tol=1e-9)
        assert len(history) >= 2

    def test_power_basis(self):
        value, _ = extrapolate_to_zero(lambda lam: -1.0 + 0.5 * lam + lam * lam, 0.5, 1e-12, basis='power')
        assert math.isclose(value, -1.0, abs_tol=1e-10)

    def test_non_cauchy(self):
        """Test divergent samples raise with the last values"""
        with pytest.raises(NonConvergenceError) as exc:
            extrapolate_to_zero(lambda lam: math.log(lam), 0.1, 1e-12, max_halvings=6)
        assert len(exc.value.last_values) == 2
