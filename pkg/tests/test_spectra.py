"""Tests for eigenvalue counting"""
import math
import numpy as np
import pytest
import scipy.sparse as sp

from src.core import BoxSpec, Family, ModelSpec, Potential, Site
from src.errors import NonConvergenceError, NumericalError, ValidationError
from src.families import get_family
from src.operators import SparseSymmetric, assemble_h, assemble_h0
from src.spectra import (birman_schwinger_count, box_count, count_below, dense_spectrum,
                         free_spectrum, lieb_thirring_sum, n0_count)
from src.witnesses import single_delta_eigenvalue


def _sites(n):
    return [Site((i,)) for i in range(n)]


class TestCountBelow:

    def test_matches_eigenvalues(self):
        """Test inertia against eigvalsh on a random symmetric matrix"""
        rng = np.random.default_rng(3)
        a = rng.normal(size=(30, 30))
        dense = a + a.T
        h = SparseSymmetric.from_dense(dense, _sites(30))
        values = np.linalg.eigvalsh(dense)
        for shift in (-2.0, 0.0, 1.5):
            result = count_below(h, shift)
            assert result.negative == int(np.sum(values < shift))
            assert result.n == 30

    def test_sparse_path_matches_dense(self, monkeypatch):
        """Test the LU inertia on a banded matrix"""
        monkeypatch.setattr('config.LDL_DENSE_LIMIT', 10)
        model = ModelSpec(Family.Z1, BoxSpec(40))
        h = assemble_h(model, Potential({Site((0,)): 3.0, Site((5,)): 2.0}))
        values = np.linalg.eigvalsh(h.to_dense())
        assert count_below(h, 0.0).negative == int(np.sum(values < 0))

    def test_zero_eigenvalue_counted_as_zero(self):
        h = SparseSymmetric.from_dense(np.diag([-1.0, 0.0, 2.0]), _sites(3))
        result = count_below(h, 0.0)
        assert (result.negative, result.zero, result.positive) == (1, 1, 1)

    def test_empty_matrix(self):
        h = SparseSymmetric(sp.csr_matrix((0, 0)), ())
        assert count_below(h, 0.0).n == 0


class TestDenseSpectrum:

    def test_free_z1_spectrum(self):
        """Test 2 - 2 cos(k pi / (n + 1)) on the Dirichlet chain"""
        model = ModelSpec(Family.Z1, BoxSpec(3))
        n = 7
        expected = sorted(2 - 2 * math.cos(k * math.pi / (n + 1)) for k in range(1, n + 1))
        assert np.allclose(free_spectrum(model), expected)

    def test_size_limit(self, monkeypatch):
        monkeypatch.setattr('config.DENSE_LIMIT', 5)
        with pytest.raises(NumericalError):
            dense_spectrum(assemble_h0(ModelSpec(Family.Z1, BoxSpec(3))))


class TestN0Count:

    def test_single_delta_z1(self, z1, delta_z1):
        """Test one bound state at -(sqrt(4 + v^2) - 2)"""
        summary = n0_count(z1, delta_z1)
        assert summary.n0 == 1
        assert math.isclose(summary.negative_eigenvalues[0], -(math.sqrt(5.0) - 2.0), rel_tol=1e-9)
        assert summary.box_radius_used > summary.previous_radius

    def test_counts_nondecreasing_in_box(self, z1):
        v = Potential({Site((x,)): 0.6 for x in range(-6, 7)})
        summary = n0_count(z1, v)
        counts = list(summary.counts.values())
        assert counts == sorted(counts)
        assert summary.n0 == counts[-1] == counts[-2]

    def test_monotone_in_potential(self, z1):
        """Test V <= W gives N0(V) <= N0(W)"""
        v = Potential({Site((x,)): 0.3 for x in range(-5, 6)})
        w = v.plus(Potential({Site((x,)): 0.4 for x in range(-5, 6)}))
        assert n0_count(z1, v).n0 <= n0_count(z1, w).n0

    def test_zero_potential(self, z1):
        summary = n0_count(z1, Potential())
        assert summary.n0 == 0
        assert summary.negative_eigenvalues == []

    def test_s_gamma(self, z1, delta_z1):
        summary = n0_count(z1, delta_z1, gamma=1.0)
        assert math.isclose(summary.s_gamma, math.sqrt(5.0) - 2.0, rel_tol=1e-9)

    def test_hierarchical_levels(self, hierarchical):
        """Test the count stabilizes over levels"""
        v = Potential({Site((0,)): 2.0, Site((5,)): 2.0})
        summary = n0_count(hierarchical, v)
        assert summary.n0 == 2
        assert summary.box_radius_used >= hierarchical.levels

    def test_general_graph_single_box(self, chain_records):
        from src.operators import GeneratorTable
        model = ModelSpec(Family.GENERAL_GRAPH, generator_table=GeneratorTable.from_records(chain_records),
                          c0=2.0)
        summary = n0_count(model, Potential({Site((2,)): 0.5}))
        assert summary.n0 == 1
        assert summary.previous_radius is None

    def test_support_beyond_cap(self, z1):
        v = Potential({Site((50,)): 1.0})
        with pytest.raises(ValidationError):
            n0_count(z1, v, max_box=20)

    def test_nonconvergence(self):
        """Test a cap that leaves no second box to compare against"""
        v = Potential({Site((x,)): 1.0 / (1 + abs(x)) for x in range(-30, 31)})
        with pytest.raises(NonConvergenceError):
            n0_count(ModelSpec(Family.Z1), v, max_box=40)

    def test_to_dict_tagged(self, z1, delta_z1):
        data = n0_count(z1, delta_z1).to_dict()
        assert data['method'] == 'dense'
        assert data['n0'] == 1


class TestHierarchicalThreshold:
    """nu = 2, p = 0.8: transient, R_0(0, 0) = 4/3, so a single well binds iff v > 3/4"""

    @pytest.fixture
    def model(self):
        return ModelSpec(Family.HIERARCHICAL, nu=2, p=0.8, levels=4)

    def test_threshold_is_inverse_green(self, model, tol):
        assert math.isclose(get_family(model).resolvent_at_zero(model, Site((0,)), tol), 4.0 / 3.0)

    @pytest.mark.parametrize('v', [0.01, 0.3, 0.7])
    def test_weak_well_binds_nothing(self, model, v):
        summary = n0_count(model, Potential({Site((0,)): v}))
        assert summary.n0 == 0
        assert single_delta_eigenvalue(model, v) is None

    def test_strong_well_binds_once(self, model):
        """Test the cube eigenvalue sits above the infinite-lattice one"""
        summary = n0_count(model, Potential({Site((0,)): 1.0}))
        assert summary.n0 == 1
        exact = single_delta_eigenvalue(model, 1.0)
        assert exact < 0
        assert exact - 1e-9 <= summary.negative_eigenvalues[0] < 0

    def test_counts_grow_with_levels(self, model):
        v = Potential({Site((0,)): 0.9, Site((3,)): 0.9})
        counts = [box_count(model.with_levels(levels), v) for levels in range(2, 9)]
        assert counts == sorted(counts)
        assert counts[-1] <= 2


class TestBirmanSchwinger:

    def test_matches_direct_count(self, z1):
        """Test #{lambda_j <= -lambda} both ways"""
        v = Potential({Site((0,)): 2.0, Site((6,)): 1.5, Site((-4,)): 1.0})
        summary = n0_count(z1, v)
        for lam in (0.05, 0.3, 1.0):
            direct = sum(1 for e in summary.negative_eigenvalues if e <= -lam)
            assert birman_schwinger_count(z1, v, lam) == direct

    def test_rejects_nonpositive_lambda(self, z1, delta_z1):
        with pytest.raises(ValidationError):
            birman_schwinger_count(z1, delta_z1, 0.0)

    def test_empty_potential(self, z1):
        assert birman_schwinger_count(z1, Potential(), 0.1) == 0


class TestHelpers:

    def test_box_count_no_growth(self, delta_z1):
        assert box_count(ModelSpec(Family.Z1, BoxSpec(10)), delta_z1) == 1

    def test_lieb_thirring_sum_needs_positive_gamma(self, z1, delta_z1):
        summary = n0_count(z1, delta_z1)
        with pytest.raises(ValidationError):
            lieb_thirring_sum(summary, 0.0)
