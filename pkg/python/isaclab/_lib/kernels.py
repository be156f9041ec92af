# Copyright (c) 2020, ISACLAB DEVELOPERS.
import math

import numpy as np
from numba import njit


@njit(cache=True)
def fmcw_block(chirp_length, n_chips, carrier_norm, sweep_norm, amplitudes):
    """
    Samples s(l) = A_tau(l) * cos(2 pi fc l + pi (B/L) l^2), l = 0..L-1,
    with chip tau(l) = floor(l / T_c), T_c = L / n_chips. Frequencies are
    normalized by the sample rate.
    """
    out = np.empty(chirp_length)
    t_c = chirp_length // n_chips
    rate = math.pi * sweep_norm / chirp_length
    for l in range(chirp_length):
        tau = l // t_c
        phase = 2.0 * math.pi * carrier_norm * l + rate * l * l
        out[l] = amplitudes[tau] * math.cos(phase)
    return out


@njit(cache=True)
def real_embedding(x):
    """[[Re X, -Im X], [Im X, Re X]] of a complex square matrix."""
    n = x.shape[0]
    out = np.empty((2 * n, 2 * n))
    for i in range(n):
        for j in range(n):
            re = x[i, j].real
            im = x[i, j].imag
            out[i, j] = re
            out[i + n, j + n] = re
            out[i, j + n] = -im
            out[i + n, j] = im
    return out
