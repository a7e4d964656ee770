import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.distance import cdist, pdist

from infillgp.design import (Design, FeatureSpec, check_distinct, feature_rows, features, grid_design,
                             index_set, index_set_size, stratified_design)
from infillgp.errors import InfeasibleEstimationError, ValidationError
from infillgp.quadvar import even_omega


class TestGrid:
    def test_two_point_midpoints(self):
        np.testing.assert_allclose(grid_design(2, 1).points[:, 0], [0.25, 0.75])

    def test_square_grid(self):
        g = grid_design(20, 2)
        assert g.n == 400
        np.testing.assert_allclose(g.points[0], [1 / 40, 1 / 40])

    def test_zero_offset(self):
        np.testing.assert_allclose(grid_design(3, 1, 0.0).points[:, 0], [0, 1 / 3, 2 / 3])

    @pytest.mark.parametrize("kw", [dict(m=1, d=1), dict(m=3, d=0), dict(m=3, d=1, offset=1.0)])
    def test_preconditions(self, kw):
        with pytest.raises(ValidationError):
            grid_design(**kw)

    def test_equispaced_flag(self):
        assert grid_design(5, 2).is_equispaced
        assert not stratified_design(5, 2, 1).is_equispaced


class TestStratified:
    @given(st.integers(2, 12), st.integers(1, 3), st.integers(0, 2 ** 32))
    def test_points_in_own_cell(self, m, d, seed):
        if m ** d > 2000:
            return
        ds = stratified_design(m, d, seed)
        lo = (ds.multi_indices() - 1) / m
        assert np.all(ds.points >= lo) and np.all(ds.points < lo + 1 / m)

    def test_deterministic(self):
        assert stratified_design(9, 2, 42) == stratified_design(9, 2, 42)
        assert stratified_design(9, 2, 42) != stratified_design(9, 2, 43)

    def test_distinct(self):
        ds = stratified_design(10, 2, 7)
        assert ds.n == 100
        assert pdist(ds.points).min() > 0
        check_distinct(ds.points)

    def test_duplicates_detected(self):
        with pytest.raises(ValidationError):
            check_distinct(np.array([[0.1, 0.2], [0.3, 0.4], [0.1, 0.2]]))

    def test_bad_offsets_rejected(self):
        with pytest.raises(ValidationError):
            Design(d=1, m=3, delta=np.array([[0.0], [1.0], [0.5]]))
        with pytest.raises(ValidationError):
            Design(d=1, m=3, delta=np.zeros((4, 1)))


class TestAddressing:
    @given(st.integers(2, 7), st.integers(1, 3))
    def test_round_trip(self, m, d):
        g = grid_design(m, d)
        flat = np.arange(g.n)
        multi = g.multi_index(flat)
        np.testing.assert_array_equal(g.flat_index(multi), flat)
        np.testing.assert_array_equal(multi, g.multi_indices())

    def test_first_axis_slowest(self):
        g = grid_design(3, 2)
        np.testing.assert_array_equal(g.multi_indices()[:4], [[1, 1], [1, 2], [1, 3], [2, 1]])


class TestDensity:
    @pytest.mark.parametrize("d", [1, 2])
    def test_fill_distance_shrinks(self, d):
        probe = (np.indices((37,) * d).reshape(d, -1).T + 0.31) / 37
        fill = []
        for m in (4, 8, 16):
            pts = stratified_design(m, d, 3).points
            fill.append(cdist(probe, pts).min(axis=1).max())
        assert fill[0] > fill[1] > fill[2]


class TestFeatures:
    def test_quadratic_in_two_dimensions(self):
        fs = FeatureSpec("polynomial", 2)
        np.testing.assert_array_equal(feature_rows(fs, [[0.0, 0.0]])[0], [1, 0, 0, 0, 0, 0])
        np.testing.assert_array_equal(feature_rows(fs, [[1.0, 1.0]])[0], np.ones(6))
        s1, s2 = 0.3, 0.7
        np.testing.assert_allclose(feature_rows(fs, [[s1, s2]])[0], [1, s1, s2, s1 ** 2, s1 * s2, s2 ** 2])

    def test_cubic_in_one_dimension(self):
        s = np.array([[0.2], [0.9]])
        np.testing.assert_allclose(feature_rows(FeatureSpec("polynomial", 3), s),
                                   np.hstack([s ** 0, s, s ** 2, s ** 3]))

    def test_design_matrix_shape(self):
        assert features(FeatureSpec("polynomial", 2), grid_design(6, 2)).shape == (36, 6)

    def test_custom(self):
        fs = FeatureSpec("custom", functions=(lambda p: np.ones(len(p)), lambda p: np.sin(p[:, 0])),
                         names=("one", "sin"))
        assert fs.p(1) == 2
        np.testing.assert_allclose(feature_rows(fs, [[0.5]])[0], [1, np.sin(0.5)])
        with pytest.raises(ValidationError):
            fs.to_dict()

    def test_round_trip(self):
        fs = FeatureSpec("polynomial", 3)
        assert FeatureSpec.from_dict(fs.to_dict()) == fs

    @pytest.mark.parametrize("kw", [dict(kind="spline"), dict(degree=-1), dict(kind="custom")])
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            FeatureSpec(**kw)


class TestIndexSet:
    def test_enumeration(self):
        s0 = index_set(0, 10, 1, 1, 2)
        np.testing.assert_array_equal(s0.members[:, 0], np.arange(1, 7))
        assert len(index_set(1, 10, 1, 1, 2)) == 5

    def test_empty_is_infeasible(self):
        with pytest.raises(InfeasibleEstimationError):
            index_set(0, 4, 1, 1, 2)
        with pytest.raises(InfeasibleEstimationError):
            index_set(1, 5, 1, 1, 2)

    @given(st.integers(0, 1), st.integers(6, 30), st.integers(1, 3), st.integers(1, 2),
           st.sampled_from([2, 4]))
    def test_cardinality(self, u, m, d, ell, omega):
        size = index_set_size(u, m, d, ell, omega)
        top = m - 2 * ell * omega
        expect = (top - u) * top ** (d - 1) if top - u > 0 else 0
        assert size == expect
        if size and size < 5000:
            s = index_set(u, m, d, ell, omega)
            assert len(s) == size
            assert s.members.min() >= 1 and s.members[:, 0].max() + u <= top

    @pytest.mark.parametrize("kw", [dict(u=2), dict(omega=3), dict(ell=0)])
    def test_invalid(self, kw):
        args = dict(u=0, m=20, d=1, ell=1, omega=2) | kw
        with pytest.raises(ValidationError):
            index_set(**args)

    def test_coverage_tends_to_one(self):
        fracs = []
        for m in (50, 200, 800, 3200):
            om = even_omega(m, 0.3)
            fracs.append(index_set_size(1, m, 2, 1, om) / m ** 2)
        assert all(a < b for a, b in zip(fracs, fracs[1:]))
        assert fracs[-1] > 0.9
