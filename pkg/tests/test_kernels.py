"""Tests for resolvents, heat kernels and time integrals"""
import math
import os
import pytest
from scipy import special

from src.core import BoxSpec, Potential, Site
from src.errors import DivergenceError, FamilyMismatchError, InvariantViolation, ValidationError
from src.families.z1 import z1_heat
from src.kernels import (GREEN_ALPHA, KillingSpec, ResolventValue, c_sigma, dirichlet_resolvent_diag,
                         green2d_expansion, heat_diagonal_samples, heat_kernel, hier_log_periodic,
                         is_recurrent, killed_heat_diagonal, regularized_resolvent,
                         regularized_resolvent_table, resolvent, resolvent_row_sum,
                         spectral_dimension, tail_time_integral)


class TestResolvent:

    def test_negative_with_method(self, z1):
        value = resolvent(z1, 0.5, Site((0,)), Site((3,)))
        assert value.value < 0
        assert value.method == 'closed_form'
        assert value.to_dict()['x'] == [0]

    def test_nonnegative_value_is_violation(self):
        """Test the sign invariant"""
        with pytest.raises(InvariantViolation):
            ResolventValue(0.5, Site((0,)), Site((0,)), 0.1, 'closed_form')

    def test_lambda_must_be_positive(self, z1):
        with pytest.raises(ValidationError):
            resolvent(z1, 0.0, Site((0,)), Site((0,)))

    def test_site_dimension_checked(self, z2):
        with pytest.raises(ValidationError):
            resolvent(z2, 0.5, Site((0,)), Site((0, 0)))

    def test_dirichlet_diagonal(self, z1):
        """Test R^(1) vanishes at x0 and lies between R and 0"""
        assert dirichlet_resolvent_diag(z1, 0.1, Site((0,)), Site((0,))) == 0.0
        killed = dirichlet_resolvent_diag(z1, 0.1, Site((4,)), Site((0,)))
        free = resolvent(z1, 0.1, Site((4,)), Site((4,))).value
        assert free < killed < 0


class TestRegularizedResolvent:

    def test_z1_is_distance(self, z1):
        assert regularized_resolvent(z1, Site((-6,)), Site((1,))) == 7.0

    def test_transient_needs_override(self, transient_hierarchical):
        """Test R-tilde refuses a transient walk by default"""
        with pytest.raises(DivergenceError):
            regularized_resolvent(transient_hierarchical, Site((3,)), Site((0,)))
        value = regularized_resolvent(transient_hierarchical, Site((3,)), Site((0,)), allow_transient=True)
        assert value > 0

    def test_table_shares_symmetric_offsets(self, z2):
        sites = [Site((1, 0)), Site((0, 1)), Site((-1, 0)), Site((0, 0))]
        table = regularized_resolvent_table(z2, Site((0, 0)), sites)
        assert table[Site((0, 0))] == 0.0
        assert table[Site((1, 0))] == table[Site((0, 1))] == table[Site((-1, 0))]
        assert table.method == 'quadrature'

    def test_table_to_csv(self, z1, temp_dir):
        path = os.path.join(temp_dir, 'rtilde.txt')
        regularized_resolvent_table(z1, Site((0,)), [Site((x,)) for x in range(-2, 3)]).to_csv(path)
        with open(path) as f:
            lines = f.read().splitlines()
        assert lines[0] == '-2 2.0'
        assert len(lines) == 5

    def test_hierarchical_table(self, hierarchical):
        """Test R-tilde = d_h + 1 at nu = 2, p = 1/2"""
        table = regularized_resolvent_table(hierarchical, Site((0,)), [Site((i,)) for i in range(8)])
        assert math.isclose(table[Site((1,))], 2.0)
        assert math.isclose(table[Site((7,))], 4.0)


class TestHeatKernel:

    def test_time_zero_is_delta(self, z1):
        assert heat_kernel(z1, 0.0, Site((0,)), Site((0,))) == 1.0
        assert heat_kernel(z1, 0.0, Site((0,)), Site((1,))) == 0.0

    def test_negative_time(self, z1):
        with pytest.raises(ValidationError):
            heat_kernel(z1, -1.0, Site((0,)), Site((0,)))

    def test_diagonal_decreasing(self, z2, hierarchical):
        """Test p0(t, x, x) decreases in t"""
        for model, x in ((z2, Site((0, 0))), (hierarchical, Site((0,)))):
            samples = heat_diagonal_samples(model, x, [0.5, 1.0, 4.0, 16.0, 64.0])
            assert samples.is_nonincreasing()

    def test_diagonal_decay_rate(self, z1):
        """Test p0(t, 0, 0) ~ (4 pi t)^-1/2"""
        t = 400.0
        assert math.isclose(heat_kernel(z1, t, Site((0,)), Site((0,))) * math.sqrt(4 * math.pi * t),
                            1.0, rel_tol=1e-3)

    def test_spectral_dimensions(self, z1, z2, fractional, transient_hierarchical):
        assert spectral_dimension(z1) == 1.0
        assert spectral_dimension(z2) == 2.0
        assert math.isclose(spectral_dimension(fractional), 2.0)
        assert is_recurrent(z2)
        assert not is_recurrent(transient_hierarchical)


class TestCSigma:

    def test_sigma_zero(self):
        assert c_sigma(0.0) == 1.0

    def test_matches_exponential_integral(self):
        """Test c(1) = e^-1 (1 - e E1(1))"""
        expected = math.exp(-1.0) * (1.0 - math.e * special.exp1(1.0))
        assert math.isclose(c_sigma(1.0), expected, rel_tol=1e-7)

    def test_decreasing(self):
        assert c_sigma(0.5) > c_sigma(1.0) > c_sigma(2.0) > 0

    def test_negative_sigma(self):
        with pytest.raises(ValidationError):
            c_sigma(-0.1)


class TestRowSum:

    def test_z1_closed_form(self, z1):
        """Test sum_x R_lambda(x, y) = -1/lambda"""
        total, method = resolvent_row_sum(z1, 0.2, Site((0,)), 20)
        assert method == 'closed_form'
        assert math.isclose(total, -5.0, rel_tol=1e-10)

    def test_z2_shells(self, z2):
        total, method = resolvent_row_sum(z2, 1.0, Site((0, 0)), 12)
        assert method == 'quadrature'
        assert math.isclose(total, -1.0, rel_tol=1e-3)

    def test_hierarchical_rejected(self, hierarchical):
        with pytest.raises(FamilyMismatchError):
            resolvent_row_sum(hierarchical, 1.0, Site((0,)), 3)


class TestKilledKernels:

    def test_killing_spec_needs_one(self):
        with pytest.raises(ValidationError):
            KillingSpec()
        with pytest.raises(ValidationError):
            KillingSpec(x0=Site((0,)), q=Potential({Site((1,)): 1.0}))

    def test_killing_spec_from_dict(self):
        assert KillingSpec.from_dict({'x0': 2}, dim=2).x0 == Site((2, 0))
        spec = KillingSpec.from_dict({'q': {'1': 0.5}})
        assert spec.kind == 'potential'
        assert spec.q[Site((1,))] == 0.5

    def test_point_killed_closed_form(self, z1):
        """Test the reflection formula on Z^1"""
        t, d = 3.0, 2
        expected = z1_heat(t, 0) - z1_heat(t, 2 * d)
        assert math.isclose(killed_heat_diagonal(z1, Site((0,)), t, Site((d,))), expected)

    def test_box_spectrum_matches_closed_form(self, z1):
        """Test the dense killed kernel against the reflection formula"""
        closed = killed_heat_diagonal(z1, Site((0,)), 2.0, Site((3,)))
        boxed = killed_heat_diagonal(z1, Site((0,)), 2.0, Site((3,)), box=BoxSpec(60))
        assert math.isclose(closed, boxed, rel_tol=1e-9)

    def test_killed_below_free(self, z2):
        killing = KillingSpec(q=Potential({Site((0, 0)): 1.0}))
        t, x = 2.0, Site((1, 0))
        assert 0 < killed_heat_diagonal(z2, killing, t, x) < heat_kernel(z2, t, x, x)

    def test_zero_at_dirichlet_point(self, z1):
        assert killed_heat_diagonal(z1, Site((0,)), 5.0, Site((0,))) == 0.0

    def test_box_too_small(self, z1):
        with pytest.raises(ValidationError, match='too small'):
            killed_heat_diagonal(z1, Site((0,)), 500.0, Site((1,)), box=BoxSpec(10))


class TestTailIntegral:

    def test_recurrent_free_integral_diverges(self, z1):
        with pytest.raises(DivergenceError):
            tail_time_integral(z1, 'p0', Site((0,)), 1.0)

    def test_transient_hierarchical_green(self, transient_hierarchical):
        """Test int_0^inf p0 dt = |R_0(x, x)|"""
        result = tail_time_integral(transient_hierarchical, 'p0', Site((0,)), 0.0)
        assert result.method == 'series'
        assert math.isclose(result.value, 1.5, rel_tol=1e-10)

    def test_point_killed_integral_is_distance(self, z1):
        """Test int_0^inf p1(t, x, x) dt = |x - x0| on Z^1"""
        result = tail_time_integral(z1, Site((0,)), Site((3,)), 0.0)
        assert math.isclose(result.value, 3.0, rel_tol=1e-3)
        assert result.to_dict()['method'] == 'closed_form'

    def test_lower_limit_shrinks_integral(self, transient_hierarchical):
        full = tail_time_integral(transient_hierarchical, 'p0', Site((0,)), 0.0).value
        tail = tail_time_integral(transient_hierarchical, 'p0', Site((0,)), 5.0).value
        assert 0 < tail < full

    def test_weight_power_range(self, transient_hierarchical):
        with pytest.raises(ValidationError):
            tail_time_integral(transient_hierarchical, 'p0', Site((0,)), 0.0, weight_power=1.0)


class TestHierarchicalProfile:

    def test_log_periodic(self, hierarchical):
        """Test t^(s_h/2) p(t, x, x) repeats when t is divided by p"""
        profile = hier_log_periodic(hierarchical, Site((0,)), [100.0 * 1.3 ** k for k in range(12)])
        assert math.isclose(profile.s_h, 2.0)
        assert profile.max_deviation < 1e-8
        assert profile.correlation > 0.99
        assert all(0.0 <= phase < 1.0 for phase in profile.phases)

    def test_needs_hierarchical(self, z1):
        with pytest.raises(FamilyMismatchError):
            hier_log_periodic(z1, Site((0,)), [1.0, 2.0, 3.0])

    def test_needs_three_times(self, hierarchical):
        with pytest.raises(ValidationError):
            hier_log_periodic(hierarchical, Site((0,)), [1.0, 2.0])


@pytest.mark.slow
class TestGreen2D:

    def test_origin_constant(self):
        """Test u(0) = -5 ln 2 / (4 pi)"""
        expansion = green2d_expansion(1)
        assert math.isclose(expansion.alpha_const, GREEN_ALPHA, abs_tol=1e-5)
        assert expansion.v[Site((0, 0))] == 0.0
        assert expansion.consistency < 1e-4
