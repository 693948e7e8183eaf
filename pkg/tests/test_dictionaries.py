import math

import numpy as np
import pytest

from nearfield.geometry import ArrayGeometry, InvalidDirectionError
from nearfield.dictionaries import (Dictionary, GridError, ParameterGrid,
                                    angle_grid, angle_dictionary, coherence,
                                    distance_grid, distance_dictionary)


def brute_force_coherence(columns):
    worst = 0.0
    for i in range(columns.shape[1]):
        for j in range(columns.shape[1]):
            if i != j:
                worst = max(worst, abs(np.vdot(columns[:, i], columns[:, j])))
    return worst


def test_angle_grid_endpoints_and_center():
    grid = angle_grid(3, 0.4)
    assert grid.values.tolist() == [-0.4, 0.0, 0.4]


def test_angle_grid_spacing():
    grid = angle_grid(17, 0.49)
    assert np.allclose(np.diff(grid.values), 0.06125)
    assert grid.values[8] == 0.0


def test_angle_grid_ambiguity_guard():
    with pytest.raises(GridError):
        angle_grid(9, 0.6)          # beyond lambda/(4d) at d = lambda/2
    angle_grid(9, 0.6, d_over_lambda=0.25)  # looser bound with sparser array


def test_angle_grid_symmetric_about_zero():
    for count in (4, 9, 16):
        grid = angle_grid(count, 0.45)
        assert np.allclose(grid.values + grid.values[::-1], 0.0)


def test_angle_dictionary_zero_column_constant():
    grid = angle_grid(9, 0.45)
    dic = angle_dictionary(17, grid, doubled=True)
    zero_col = dic.columns[:, 4]
    assert np.allclose(zero_col, 1.0 / math.sqrt(17))


def test_angle_dictionary_opposite_columns_real_inner_product():
    grid = angle_grid(9, 0.45)
    dic = angle_dictionary(17, grid, doubled=True)
    inner = np.vdot(dic.columns[:, 1], dic.columns[:, 7])  # -omega vs +omega
    assert abs(inner.imag) < 1e-12


def test_angle_dictionary_unit_norms():
    for doubled in (False, True):
        dic = angle_dictionary(33, angle_grid(16, 0.49), doubled=doubled)
        norms = np.linalg.norm(dic.columns, axis=0)
        assert np.allclose(norms, 1.0, atol=1e-12)


def test_coherence_matches_brute_force():
    dic = angle_dictionary(33, angle_grid(16, 0.49), doubled=True)
    assert coherence(dic) == pytest.approx(brute_force_coherence(dic.columns))
    assert coherence(dic) < 0.6


def test_coherence_orthonormal_and_duplicate():
    grid = ParameterGrid("azimuth", np.linspace(-0.4, 0.4, 8))
    dic = Dictionary(np.eye(8, dtype=complex), grid)
    assert coherence(dic) == pytest.approx(0.0, abs=1e-12)
    dup = Dictionary(np.column_stack([np.eye(8, dtype=complex)[:, 0]] * 2),
                     ParameterGrid("azimuth", np.array([-0.1, 0.1])))
    assert coherence(dup) == pytest.approx(1.0)


def test_coherence_requires_two_columns():
    dic = Dictionary(np.ones((4, 1), dtype=complex) / 2.0,
                     ParameterGrid("azimuth", np.array([0.0])))
    with pytest.raises(ValueError):
        coherence(dic)


@pytest.mark.parametrize("axis_length", [17, 33])
def test_dft_spacing_gives_low_leakage(axis_length):
    # Grid spacing lambda/(2 d N) makes doubled columns DFT-orthogonal.
    spacing = 1.0 / axis_length
    count = axis_length
    omega_max = spacing * (count - 1) / 2
    grid = angle_grid(count, omega_max)
    assert np.allclose(np.diff(grid.values), spacing)
    dic = angle_dictionary(axis_length, grid, doubled=True)
    assert coherence(dic) < 0.3


def test_distance_grid_reciprocal_values():
    grid = distance_grid(10.0, 80.0, 4)
    assert np.allclose(grid.values, [10.0, 14.1176470588, 24.0, 80.0])


def test_distance_grid_two_points():
    grid = distance_grid(10.0, 80.0, 2)
    assert grid.values.tolist() == [10.0, 80.0]


def test_distance_grid_far_field_marker_last():
    grid = distance_grid(10.0, 80.0, 4, include_far_field=True)
    assert math.isinf(grid.values[-1])
    assert grid.count == 5


def test_distance_grid_validation():
    with pytest.raises(GridError):
        distance_grid(10.0, 5.0, 4)
    with pytest.raises(GridError):
        distance_grid(10.0, 80.0, 1)


def test_distance_dictionary_self_match():
    geom = ArrayGeometry(9, 9, 0.005, 0.01)
    grid = distance_grid(0.06, 0.6, 6)
    dic = distance_dictionary(geom, (0.21, -0.07), grid)
    from nearfield.channel import steering_fresnel_cosines
    target = steering_fresnel_cosines(geom, 0.21, -0.07, grid.values[2]).reshape(-1)
    target /= np.linalg.norm(target)
    corr = np.abs(dic.columns.conj().T @ target)
    assert corr[2] == pytest.approx(1.0)
    assert int(np.argmax(corr)) == 2


def test_distance_dictionary_far_field_column_planar():
    geom = ArrayGeometry(9, 9, 0.005, 0.01)
    grid = distance_grid(0.06, 0.6, 3, include_far_field=True)
    dic = distance_dictionary(geom, (0.3, 0.1), grid)
    from nearfield.channel import steering_planar_cosines
    planar = steering_planar_cosines(geom, 0.3, 0.1).reshape(-1)
    planar /= np.linalg.norm(planar)
    assert np.allclose(dic.columns[:, -1], planar)


def test_distance_dictionary_degenerate_aperture():
    geom = ArrayGeometry(1, 1, 0.005, 0.01)
    dic = distance_dictionary(geom, (0.0, 0.0), distance_grid(1.0, 5.0, 4))
    assert coherence(dic) == pytest.approx(1.0)


def test_distance_dictionary_rejects_bad_cosines():
    geom = ArrayGeometry(9, 9, 0.005, 0.01)
    with pytest.raises(InvalidDirectionError):
        distance_dictionary(geom, (0.9, 0.5), distance_grid(1.0, 5.0, 4))


def full_scale_geom():
    return ArrayGeometry(129, 65, 0.005, 0.01)


def test_reciprocal_sampling_equalizes_neighbor_correlations():
    # Far-apart reciprocal columns decorrelate more than near ones under
    # uniform-in-r sampling; neighbor correlations stay within 2x under
    # reciprocal sampling versus >5x variation for uniform spacing.
    geom = full_scale_geom()
    for spacing, expect_flat in (("reciprocal", True), ("uniform", False)):
        grid = distance_grid(2.0, 80.0, 16, spacing=spacing)
        dic = distance_dictionary(geom, (0.0, 0.0), grid)
        neigh = np.array([
            abs(np.vdot(dic.columns[:, i], dic.columns[:, i + 1]))
            for i in range(grid.count - 1)
        ])
        ratio = neigh.max() / neigh.min()
        if expect_flat:
            assert ratio < 2.0
        else:
            assert ratio > 5.0


def test_extreme_distance_columns_less_correlated_than_neighbors():
    geom = full_scale_geom()
    grid = distance_grid(10.0, 80.0, 16)
    dic = distance_dictionary(geom, (0.0, 0.0), grid)

    def corr(r_a, r_b):
        ia = int(np.argmin(np.abs(grid.values - r_a)))
        ib = int(np.argmin(np.abs(grid.values - r_b)))
        return abs(np.vdot(dic.columns[:, ia], dic.columns[:, ib]))

    assert corr(10.0, 80.0) < corr(70.0, 80.0)
