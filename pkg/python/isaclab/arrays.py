# Copyright (c) 2020, ISACLAB DEVELOPERS.
"""
Steering vectors of the BS uniform linear array and the STAR-RIS uniform
planar array, and their analytic angle derivatives.
"""
import math
from typing import NamedTuple

import numpy as np


class AnglePair(NamedTuple):
    horizontal_rad: float
    vertical_rad: float

    @classmethod
    def from_degrees(cls, horizontal_deg, vertical_deg):
        return cls(math.radians(horizontal_deg), math.radians(vertical_deg))

    def to_degrees(self):
        return (
            math.degrees(self.horizontal_rad),
            math.degrees(self.vertical_rad),
        )


def _check_dims(**dims):
    for name, value in dims.items():
        if int(value) != value or value < 1:
            raise ValueError(f"{name} must be a positive integer, got {value}")


def ula_phase(angles, t_x):
    h, v = angles
    return np.arange(t_x) * math.sin(h) * math.cos(v)


def ula_steering(angles, t_x, eta_bs):
    """
    BS array response, entry m = exp(j*eta_bs*m*sin(h)*cos(v)).
    """
    _check_dims(t_x=t_x)
    return np.exp(1j * eta_bs * ula_phase(angles, t_x))


def ula_derivatives(angles, t_x, eta_bs):
    """
    Returns (da/dh, da/dv) of ``ula_steering``.
    """
    h, v = angles
    a = ula_steering(angles, t_x, eta_bs)
    m = np.arange(t_x)
    dh = 1j * eta_bs * m * math.cos(h) * math.cos(v) * a
    dv = -1j * eta_bs * m * math.sin(h) * math.sin(v) * a
    return dh, dv


def grid_indices(n_x, n_y):
    """
    Row-major grid multipliers k_x = e_x (x) 1_{n_y}, k_y = 1_{n_x} (x) e_y.
    """
    _check_dims(n_x=n_x, n_y=n_y)
    k_x = np.kron(np.arange(n_x), np.ones(n_y))
    k_y = np.kron(np.ones(n_x), np.arange(n_y))
    return k_x, k_y


def upa_wavevector(angles, n_x, n_y):
    h, v = angles
    k_x, k_y = grid_indices(n_x, n_y)
    return k_x * math.sin(h) * math.cos(v) + k_y * math.sin(h) * math.sin(v)


def upa_steering(angles, n_x, n_y, eta_ris):
    return np.exp(1j * eta_ris * upa_wavevector(angles, n_x, n_y))


def upa_factor_steering(angles, n_x, n_y, eta_ris):
    """
    Same response as ``upa_steering`` built as the Kronecker product of the
    per-axis factors b_x (x) b_y.
    """
    _check_dims(n_x=n_x, n_y=n_y)
    h, v = angles
    b_x = np.exp(1j * eta_ris * np.arange(n_x) * math.sin(h) * math.cos(v))
    b_y = np.exp(1j * eta_ris * np.arange(n_y) * math.sin(h) * math.sin(v))
    return np.kron(b_x, b_y)


def upa_wavevector_derivatives(angles, n_x, n_y):
    h, v = angles
    k_x, k_y = grid_indices(n_x, n_y)
    dk_h = k_x * math.cos(h) * math.cos(v) + k_y * math.cos(h) * math.sin(v)
    dk_v = -k_x * math.sin(h) * math.sin(v) + k_y * math.sin(h) * math.cos(v)
    return dk_h, dk_v


def upa_derivatives(angles, n_x, n_y, eta_ris):
    """
    Returns (db/dh, db/dv) of ``upa_steering``.
    """
    b = upa_steering(angles, n_x, n_y, eta_ris)
    dk_h, dk_v = upa_wavevector_derivatives(angles, n_x, n_y)
    return 1j * eta_ris * dk_h * b, 1j * eta_ris * dk_v * b
