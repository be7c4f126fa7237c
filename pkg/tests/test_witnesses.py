"""Tests for variational lower bounds"""
import math
import pytest

from src.core import BoxSpec, Family, ModelSpec, Potential, Site
from src.errors import FamilyMismatchError, InvariantViolation, ValidationError
from src.kernels import resolvent
from src.witnesses import (Certificate, TestFunction, auto_square_layer, certify_lower_bound,
                           check_certificate, disjoint_bumps, kinetic_energy, nested_layers,
                           potential_energy, sine_bump_1d, single_delta_eigenvalue,
                           sparse_multiwell, square_layer_2d, truncated_ground_state)


def _square(radius, value=1.0):
    return Potential({Site((a, b)): value for a in range(-radius, radius + 1)
                      for b in range(-radius, radius + 1)})


class TestSingleDelta:

    def test_z1_closed_form(self, z1):
        assert math.isclose(single_delta_eigenvalue(z1, 1.0), -(math.sqrt(5.0) - 2.0))

    def test_bisection_matches_closed_form(self, z1):
        """Test root finding on v |R_lambda(0, 0)| = 1"""
        value = single_delta_eigenvalue(z1, 0.7, method='bisection')
        assert math.isclose(value, -(math.sqrt(4.0 + 0.49) - 2.0), rel_tol=1e-9)

    def test_z2_always_binds(self, z2):
        value = single_delta_eigenvalue(z2, 2.0)
        assert value < 0
        assert math.isclose(2.0 * abs(resolvent(z2, -value, Site((0, 0)), Site((0, 0))).value), 1.0,
                            rel_tol=1e-8)

    def test_transient_threshold(self, transient_hierarchical):
        """Test v R_0 <= 1 binds nothing when R_0 = 3/2"""
        assert single_delta_eigenvalue(transient_hierarchical, 0.5) is None
        assert single_delta_eigenvalue(transient_hierarchical, 2.0) < 0

    def test_closed_form_needs_z1(self, z2):
        with pytest.raises(FamilyMismatchError):
            single_delta_eigenvalue(z2, 1.0, method='closed_form')

    def test_depth_positive(self, z1):
        with pytest.raises(ValidationError):
            single_delta_eigenvalue(z1, 0.0)


class TestTestFunctions:

    def test_sine_bump_support(self):
        """Test the bump lives strictly inside (2^(k-1), 2^(k+2))"""
        bump = sine_bump_1d(3)
        assert min(s.index for s in bump.support) == 5
        assert max(s.index for s in bump.support) == 31
        mirrored = sine_bump_1d(3, side=-1)
        assert max(s.index for s in mirrored.support) == -5

    def test_bump_arguments(self):
        with pytest.raises(ValidationError):
            sine_bump_1d(0)
        with pytest.raises(ValidationError):
            sine_bump_1d(2, side=0)

    def test_disjoint_bumps(self):
        bumps = disjoint_bumps()
        assert len(bumps) == 5
        seen = set()
        for bump in bumps:
            assert not (seen & bump.support)
            seen |= bump.support

    def test_square_layer(self):
        """Test value 1 inside Q_l and the linear ramp outside"""
        layer = square_layer_2d(1, 4)
        assert Site((1, 1)) not in layer.support
        assert layer.values[Site((2, 0))] == 1.0
        assert layer.values[Site((6, 0))] == 0.5
        assert Site((8, 0)) not in layer.support

    def test_square_layer_needs_wide_l(self):
        with pytest.raises(ValidationError):
            square_layer_2d(1, 3)

    def test_energies(self, z1):
        delta = TestFunction({Site((0,)): 1.0})
        assert kinetic_energy(z1, delta) == 2.0
        assert potential_energy(Potential({Site((0,)): 3.0}), delta) == 3.0

    def test_auto_square_layer(self):
        """Test the first l whose potential energy beats the kinetic energy"""
        found = auto_square_layer(_square(3), 0, 64)
        assert found is not None
        _, l = found
        assert l == 2

    def test_auto_square_layer_gives_up(self):
        assert auto_square_layer(_square(1, 0.01), 0, 8) is None

    def test_nested_layers_stop(self):
        layers = nested_layers(_square(3), 3, 64)
        assert len(layers) == 1


class TestCertificates:

    def test_single_well(self, z1):
        """Test (H delta, delta) = 2 - V(0)"""
        cert = certify_lower_bound(z1, Potential({Site((0,)): 3.0}), [TestFunction({Site((0,)): 1.0})])
        assert cert.m == 1
        assert math.isclose(cert.rayleigh_values[0], -1.0)
        assert check_certificate(z1, Potential({Site((0,)): 3.0}), cert) >= 1

    def test_shallow_well_certifies_nothing(self, z1, delta_z1):
        cert = certify_lower_bound(z1, delta_z1, [TestFunction({Site((0,)): 1.0})])
        assert cert.m == 0

    def test_overlap_rejected(self, z1):
        f = TestFunction({Site((0,)): 1.0, Site((1,)): 1.0})
        g = TestFunction({Site((1,)): 1.0})
        with pytest.raises(ValidationError, match='overlaps'):
            certify_lower_bound(z1, Potential({Site((0,)): 3.0}), [f, g])

    def test_certificate_invariants(self):
        with pytest.raises(InvariantViolation):
            Certificate(1, [0.5], True)
        with pytest.raises(InvariantViolation):
            Certificate(2, [-0.5], True)

    def test_check_certificate_catches_overclaim(self, z1, delta_z1):
        """Test a certificate claiming more states than the box holds"""
        cert = Certificate(2, [-1.0, -0.5], True, box_radius=5)
        with pytest.raises(InvariantViolation):
            check_certificate(z1, delta_z1, cert)

    def test_bumps_on_slowly_decaying_potential(self, z1):
        """Test each bump certifies one state under V = 1/(1+|x|)"""
        v = Potential({Site((x,)): 1.0 / (1.0 + abs(x)) for x in range(-300, 301)})
        bumps = disjoint_bumps(count=3)
        cert = certify_lower_bound(z1, v, bumps)
        assert cert.m == 3
        assert check_certificate(z1, v, cert) >= 3

    def test_empty_function_list(self, z1, delta_z1):
        assert certify_lower_bound(z1, delta_z1, []).m == 0


class TestMultiwell:

    def test_truncated_ground_state(self, z1):
        f, r, lam = truncated_ground_state(z1, 1.0)
        assert math.isclose(lam, math.sqrt(5.0) - 2.0)
        assert r >= 1
        assert Site((0,)) in f.support

    def test_needs_lattice(self, hierarchical):
        with pytest.raises(ValidationError):
            truncated_ground_state(hierarchical, 1.0)

    def test_one_state_per_well(self, z1):
        result = sparse_multiwell(z1, [2.0, 1.5, 1.0])
        assert result.certificate.m == 3
        indices = [p.index for p in result.positions]
        assert indices == sorted(indices)
        assert check_certificate(z1, result.potential, result.certificate) >= 3

    def test_z2_wells(self):
        model = ModelSpec(Family.Z2, BoxSpec(5))
        result = sparse_multiwell(model, [3.0, 3.0])
        assert result.certificate.m == 2
        assert all(p.dim == 2 for p in result.positions)

    def test_amplitudes_validated(self, z1):
        with pytest.raises(ValidationError):
            sparse_multiwell(z1, [])
        with pytest.raises(ValidationError):
            sparse_multiwell(z1, [1.0, 2.0])

    def test_box_limit_note(self, z1):
        """Test placement stops at the radius cap"""
        result = sparse_multiwell(z1, [0.2] * 6, max_radius=30)
        assert result.certificate.m == len(result.positions) < 6
        assert result.notes
