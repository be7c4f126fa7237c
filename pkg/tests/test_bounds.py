"""Tests for the eigenvalue-count and Lieb-Thirring bounds"""
import csv
import math
import os
import numpy as np
import pytest

from src.bounds import (BoundReport, QuasiClassicalRow, bargmann_1d, bargmann_general,
                        calibrate_constant, calibration_corpus, clr_estimate, family_closed_bound,
                        hier_clr_bound, lieb_thirring_bound, quasi_classical_ratio, ratio_band,
                        refined_bargmann_1d_continuum)
from src.continuum1d import GridPotential, square_well
from src.core import Family, ModelSpec, Potential, Site
from src.errors import (DivergenceError, FamilyMismatchError, InvariantViolation, NumericalError,
                        ValidationError)
from src.kernels import KillingSpec, c_sigma
from src.spectra import n0_count


class TestBoundReport:

    def test_contributions_must_sum(self):
        with pytest.raises(InvariantViolation):
            BoundReport('x', 3.0, 0.0, 1.0, {Site((0,)): 1.0})

    def test_value_below_base(self):
        """Test a value under the base term is rejected"""
        with pytest.raises(InvariantViolation):
            BoundReport('x', 0.5, 0.0, 1.0)

    def test_unknown_provenance(self):
        with pytest.raises(ValidationError):
            BoundReport('x', 1.0, 0.0, 1.0, constants={'C': (1.0, 'guessed')})

    def test_to_dict_and_contributions(self, temp_dir):
        report = BoundReport('x', 1.5, 0.0, 1.0, {Site((2,)): 0.5}, constants={'C': (0.5, 'user')})
        data = report.to_dict()
        assert data['constants']['C'] == {'value': 0.5, 'provenance': 'user'}
        assert not report.is_exact
        path = os.path.join(temp_dir, 'terms.csv')
        report.write_contributions(path)
        with open(path, newline='') as f:
            rows = list(csv.reader(f))
        assert rows == [['site', 'contribution'], ['2', '0.5']]


class TestBargmann:

    def test_z1_general_is_distance_weighted(self, z1):
        """Test 1 + sum min(1, V(x) |x - x0|)"""
        v = Potential({Site((3,)): 0.1, Site((-20,)): 0.2})
        report = bargmann_general(z1, v)
        assert math.isclose(report.value, 1.0 + 0.3 + 1.0)
        assert report.method == 'closed_form'

    def test_dominates_count(self, z1):
        v = Potential({Site((x,)): 0.4 for x in range(-4, 5)})
        assert bargmann_general(z1, v).value >= n0_count(z1, v).n0

    def test_z2_dominates_count(self, z2):
        v = Potential({Site((1, 0)): 0.8, Site((-2, 3)): 0.5})
        assert bargmann_general(z2, v).value >= n0_count(z2, v).n0

    def test_hierarchical(self, hierarchical):
        """Test R-tilde = d + 1 on the recurrent hierarchical lattice"""
        v = Potential({Site((1,)): 0.1, Site((6,)): 0.05})
        report = bargmann_general(hierarchical, v)
        assert math.isclose(report.value, 1.0 + 0.1 * 2 + 0.05 * 4)

    def test_transient_rejected(self, transient_hierarchical):
        with pytest.raises(DivergenceError):
            bargmann_general(transient_hierarchical, Potential({Site((1,)): 0.1}))

    def test_one_dimensional_lattice(self):
        report = bargmann_1d(Potential({Site((2,)): 0.25, Site((0,)): 5.0}))
        assert report.value == 1.5
        assert report.contributions[Site((0,))] == 0.0

    def test_one_dimensional_continuum(self):
        """Test the trapezoid integral of |x| V"""
        v = GridPotential(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 0.0]))
        assert math.isclose(bargmann_1d(v).value, 2.0)

    def test_one_dimensional_rejects_2d(self):
        with pytest.raises(ValidationError):
            bargmann_1d(Potential({Site((1, 1)): 1.0}))

    def test_refined_continuum(self):
        """Test the refined form and its exact alternative"""
        v = GridPotential.from_function(lambda x: 2.0 * np.exp(-x * x), 6.0)
        report = refined_bargmann_1d_continuum(v, sigma=1.0)
        assert report.constants['c_sigma'][0] == c_sigma(1.0)
        assert report.alternatives['tail_factor'] <= report.value + 1e-9
        assert report.value >= 1.0

    def test_refined_sigma_positive(self):
        with pytest.raises(ValidationError):
            refined_bargmann_1d_continuum(square_well(1.0, 1.0), sigma=0.0)


class TestCLR:

    def test_unkilled_recurrent_diverges(self, z1, delta_z1):
        with pytest.raises(DivergenceError):
            clr_estimate(z1, delta_z1)

    def test_unkilled_transient(self, transient_hierarchical):
        """Test against N0 = 1: the Birman-Schwinger matrix at 0 is [[0.75, 0.25], [0.25, 3]]"""
        v = Potential({Site((0,)): 0.5, Site((9,)): 2.0})
        report = clr_estimate(transient_hierarchical, v)
        assert report.bound_id == 'clr'
        assert report.n0_term == 0.0
        assert report.method == 'series'
        n0 = n0_count(transient_hierarchical, v).n0
        assert n0 == 1
        assert report.value >= n0

    def test_dirichlet_point(self, z1):
        """Test the point-killed form on Z^1"""
        v = Potential({Site((3,)): 1.0, Site((-2,)): 0.5})
        report = clr_estimate(z1, v, killed=Site((0,)))
        assert report.bound_id == 'clr_dirichlet'
        assert report.n0_term == 1.0
        assert report.value >= n0_count(z1, v).n0

    def test_killing_potential(self, z1):
        """Test the base term is N0(q)"""
        q = Potential({Site((0,)): 1.0})
        v = Potential({Site((2,)): 0.5})
        report = clr_estimate(z1, v, killed=KillingSpec(q=q))
        assert report.bound_id == 'clr_killed'
        assert report.n0_term == 1.0
        assert report.constants['c_sigma'][0] == c_sigma(2.0)

    def test_unkilled_needs_sigma(self, transient_hierarchical):
        with pytest.raises(ValidationError):
            clr_estimate(transient_hierarchical, Potential({Site((0,)): 1.0}), sigma=0.0)


class TestClosedFormBounds:

    def test_family_mismatch(self, z1, delta_z1):
        with pytest.raises(FamilyMismatchError):
            family_closed_bound('z2_log', z1, delta_z1, {'C': 1.0})

    def test_unknown_bound(self, z1, delta_z1):
        with pytest.raises(ValidationError):
            family_closed_bound('z3_log', z1, delta_z1)

    def test_user_constant(self, z2):
        """Test 1 + C sum V log<x> with a given constant"""
        v = Potential({Site((3, 4)): 0.5})
        report = family_closed_bound('z2_log', z2, v, {'C': 1.0, 'alternatives': False})
        assert math.isclose(report.value, 1.0 + 0.5 * math.log(7.0))
        assert report.constants['C'] == (1.0, 'user')
        assert report.method == 'closed_form'

    def test_exact_alternative_attached(self, z2):
        v = Potential({Site((1, 0)): 0.5})
        report = family_closed_bound('z2_log', z2, v, {'C': 1.0})
        assert 'bargmann_general' in report.alternatives
        assert any('authoritative' in note for note in report.notes)

    def test_z2_refined_heavy_sites(self, z2):
        """Test sites with V >= h move into the base term"""
        v = Potential({Site((0, 0)): 3.0, Site((2, 0)): 0.01})
        report = family_closed_bound('z2_refined', z2, v,
                                     {'C1': 1.0, 'C2': 1.0, 'h': 1.0, 'alternatives': False})
        assert report.n0_term == 2.0
        assert Site((0, 0)) not in report.contributions

    def test_fractional_transient_needs_small_alpha(self, fractional, delta_z1):
        with pytest.raises(ValidationError):
            family_closed_bound('fractional_transient', fractional, delta_z1, {'C': 1.0})

    def test_fractional_recurrent_log_weight(self, fractional):
        v = Potential({Site((4,)): 0.1})
        report = family_closed_bound('fractional_recurrent', fractional, v,
                                     {'C': 1.0, 'alternatives': False})
        assert math.isclose(report.value, 1.0 + 0.1 * math.log(5.0))

    def test_hier_transient_needs_transience(self, hierarchical):
        with pytest.raises(DivergenceError):
            family_closed_bound('hier_transient', hierarchical, Potential({Site((0,)): 0.5}), {'C': 1.0})

    def test_hier_clr(self, transient_hierarchical):
        """Test #{V >= 1} + C sum V^(s_h/2) with s_h = 4"""
        v = Potential({Site((0,)): 2.0, Site((1,)): 0.25})
        report = hier_clr_bound(transient_hierarchical, v, 1.0)
        assert math.isclose(report.value, 1.0 + 0.0625)

    def test_hier_uniform(self, hierarchical):
        v = Potential({Site((0,)): 2.0, Site((3,)): 0.5})
        report = family_closed_bound('hier_uniform', hierarchical, v, {'C': 1.0, 'alternatives': False})
        # nu p = 1, so the geometric weight is d_h(3, 0) = 2
        assert math.isclose(report.value, 2.0 + 0.5 * 2.0)
        assert any('logarithmic' in note for note in report.notes)


class TestCalibration:

    def test_corpus_repeatable(self, z1, seed):
        a = calibration_corpus(z1, 4, seed)
        b = calibration_corpus(z1, 4, seed)
        assert len(a) == 4
        assert [v.items() for v in a] == [v.items() for v in b]

    def test_minimal_constant(self, z1):
        """Test C = 1/3 makes 1 + C * 3 V reach a count of 2"""
        v = Potential({Site((3,)): 1.0})
        result = calibrate_constant('z1_refined', z1, corpus=[v], counts=[2])
        assert math.isclose(result.constant, 1.0 / 3.0, rel_tol=1e-8)
        assert result.corpus_size == 1

    def test_base_term_suffices(self, z1, delta_z1):
        result = calibrate_constant('z1_refined', z1, corpus=[delta_z1], counts=[1])
        assert result.constant == 0.0

    def test_saturating_bound(self, z1, delta_z1):
        """Test a term that no constant can raise"""
        with pytest.raises(NumericalError):
            calibrate_constant('z1_refined', z1, corpus=[delta_z1], counts=[2])

    def test_mismatched_lengths(self, z1, delta_z1):
        with pytest.raises(ValidationError):
            calibrate_constant('z1_refined', z1, corpus=[delta_z1], counts=[1, 2])

    def test_calibrated_bound_dominates_corpus(self, z2, seed):
        corpus = calibration_corpus(z2, 3, seed, radius=3)
        result = calibrate_constant('z2_log', z2, corpus=corpus)
        for v, count in zip(corpus, result.counts):
            report = family_closed_bound('z2_log', z2, v, {'C': result.constant, 'alternatives': False})
            assert report.value >= count - 1e-9


class TestQuasiClassical:

    def test_rows(self, z1):
        v = Potential({Site((x,)): 0.5 for x in range(-3, 4)})
        rows = quasi_classical_ratio(z1, v, [1.0, 4.0], box_radius=20)
        assert [r.scale for r in rows] == [1.0, 4.0]
        assert rows[0].n0 <= rows[1].n0
        assert ratio_band(rows) >= 1.0

    def test_needs_lattice(self, hierarchical):
        with pytest.raises(FamilyMismatchError):
            quasi_classical_ratio(hierarchical, Potential({Site((0,)): 1.0}), [1.0])

    def test_band_without_states(self):
        assert ratio_band([QuasiClassicalRow(1.0, 0, 0.5)]) == 1.0


class TestLiebThirring:

    def test_unknown_variant(self, z1, delta_z1):
        with pytest.raises(ValidationError):
            lieb_thirring_bound('lt', z1, delta_z1, 1.0)

    def test_weighted_needs_gamma_below_one(self, transient_hierarchical):
        with pytest.raises(ValidationError):
            lieb_thirring_bound('lt_transient_weighted', transient_hierarchical,
                                Potential({Site((0,)): 1.0}), 1.0)

    def test_transient_form_diverges_when_recurrent(self, z1, delta_z1):
        with pytest.raises(DivergenceError):
            lieb_thirring_bound('lt_transient', z1, delta_z1, 1.0)

    def test_killed_sigma0_closed_form(self, z1):
        """Test Lambda^gamma + sum V^(1+gamma) |x - x0| on Z^1"""
        v = Potential({Site((3,)): 1.0})
        report = lieb_thirring_bound('lt_killed_sigma0', z1, v, 1.0)
        assert math.isclose(report.value, 1.0 + 3.0)
        summary = n0_count(z1, v, gamma=1.0)
        assert report.value >= summary.s_gamma

    def test_killed_dominates_sum(self, z1):
        v = Potential({Site((2,)): 1.5, Site((-3,)): 0.7})
        report = lieb_thirring_bound('lt_killed', z1, v, 1.0)
        assert report.n0_term == 1.5
        assert report.value >= n0_count(z1, v, gamma=1.0).s_gamma

    def test_lambda_must_bound_v(self, z1):
        with pytest.raises(ValidationError, match='Lambda'):
            lieb_thirring_bound('lt_killed', z1, Potential({Site((2,)): 2.0}), 1.0, Lambda=1.0)

    def test_transient_form(self, transient_hierarchical):
        v = Potential({Site((0,)): 1.5, Site((5,)): 0.3})
        report = lieb_thirring_bound('lt_transient', transient_hierarchical, v, 1.0)
        assert report.n0_term == 0.0
        assert report.value >= n0_count(transient_hierarchical, v, gamma=1.0).s_gamma

    def test_continuum_variants(self):
        v = square_well(4.0, 1.0)
        report = lieb_thirring_bound('continuum_lt', None, v, 1.0)
        assert report.n0_term == 4.0
        small = lieb_thirring_bound('continuum_small_gamma', None, v, 0.25)
        assert 'c_gamma' in small.constants

    def test_continuum_small_gamma_range(self):
        with pytest.raises(ValidationError):
            lieb_thirring_bound('continuum_small_gamma', None, square_well(1.0, 1.0), 0.5)

    def test_continuum_needs_grid(self, delta_z1):
        with pytest.raises(ValidationError):
            lieb_thirring_bound('continuum_lt', None, delta_z1, 1.0)
