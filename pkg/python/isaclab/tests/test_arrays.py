# Copyright (c) 2020, ISACLAB DEVELOPERS.

import math

import numpy as np
import pytest

from isaclab.arrays import (
    AnglePair,
    grid_indices,
    ula_derivatives,
    ula_steering,
    upa_derivatives,
    upa_factor_steering,
    upa_steering,
)

_angles = [
    AnglePair.from_degrees(40.0, 108.0),
    AnglePair.from_degrees(-35.0, 100.0),
    AnglePair.from_degrees(0.0, 90.0),
    AnglePair(0.3, -1.1),
]
_grids = [(1, 1), (2, 2), (2, 3), (6, 6)]
_eps = 1e-6


def derivative_tester(steering, derivatives, angles):
    analytic = derivatives(angles)
    for i, d in enumerate(analytic):
        step = np.zeros(2)
        step[i] = _eps
        plus = steering(AnglePair(*(np.array(angles) + step)))
        minus = steering(AnglePair(*(np.array(angles) - step)))
        numeric = (plus - minus) / (2 * _eps)
        scale = max(np.linalg.norm(d), 1.0)
        assert np.linalg.norm(d - numeric) / scale <= 1e-5


@pytest.mark.parametrize("t_x", [1, 4, 8])
@pytest.mark.parametrize("angles", _angles)
def test_ula_steering(t_x, angles):
    a = ula_steering(angles, t_x, math.pi)
    assert a.shape == (t_x,)
    assert a[0] == 1
    np.testing.assert_allclose(np.abs(a), 1.0)
    expected = np.exp(
        1j
        * math.pi
        * np.arange(t_x)
        * math.sin(angles[0])
        * math.cos(angles[1])
    )
    np.testing.assert_allclose(a, expected)


@pytest.mark.parametrize("t_x", [0, -1, 2.5])
def test_ula_steering_rejects_bad_sizes(t_x):
    with pytest.raises(ValueError):
        ula_steering(_angles[0], t_x, math.pi)


def test_grid_indices():
    k_x, k_y = grid_indices(2, 3)
    np.testing.assert_array_equal(k_x, [0, 0, 0, 1, 1, 1])
    np.testing.assert_array_equal(k_y, [0, 1, 2, 0, 1, 2])


@pytest.mark.parametrize("grid", _grids)
@pytest.mark.parametrize("angles", _angles)
def test_upa_kronecker_factorization(grid, angles):
    n_x, n_y = grid
    np.testing.assert_allclose(
        upa_steering(angles, n_x, n_y, math.pi),
        upa_factor_steering(angles, n_x, n_y, math.pi),
        atol=1e-12,
    )


def test_upa_broadside_is_all_ones():
    b = upa_steering(AnglePair(0.0, 0.7), 3, 3, math.pi)
    np.testing.assert_allclose(b, np.ones(9))


@pytest.mark.parametrize("angles", _angles)
@pytest.mark.parametrize("t_x", [2, 8])
def test_ula_derivatives(angles, t_x):
    derivative_tester(
        lambda a: ula_steering(a, t_x, math.pi),
        lambda a: ula_derivatives(a, t_x, math.pi),
        angles,
    )


@pytest.mark.parametrize("angles", _angles)
@pytest.mark.parametrize("grid", _grids[1:])
def test_upa_derivatives(angles, grid):
    n_x, n_y = grid
    derivative_tester(
        lambda a: upa_steering(a, n_x, n_y, math.pi),
        lambda a: upa_derivatives(a, n_x, n_y, math.pi),
        angles,
    )


def test_angle_pair_degrees():
    pair = AnglePair.from_degrees(30.0, 120.0)
    assert pair.horizontal_rad == pytest.approx(math.pi / 6)
    assert pair.to_degrees() == pytest.approx((30.0, 120.0))
