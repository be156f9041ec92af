# Copyright (c) 2020, ISACLAB DEVELOPERS.
"""
Joint communication and sensing transmit frame.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from isaclab._lib import fmcw_block
from isaclab.channels import complex_normal

logger = logging.getLogger(__name__)

SIDES = ("T", "R")


@dataclass(frozen=True, eq=False)
class TransmitFrame:
    W: np.ndarray
    comm_symbols: np.ndarray
    sense_symbols: np.ndarray
    X: np.ndarray
    R_x: np.ndarray

    @property
    def chirp_length(self):
        return self.X.shape[1]


def _chip_count(chirp_length, n_chips):
    if n_chips < 1 or chirp_length % n_chips:
        raise ValueError(
            f"chirp length {chirp_length} is not divisible by the "
            f"number of chips {n_chips}"
        )
    return chirp_length // n_chips


def _normalized(carrier_hz, bandwidth_hz, sample_rate_hz):
    fs = bandwidth_hz if sample_rate_hz is None else sample_rate_hz
    if not fs > 0:
        raise ValueError(f"sample rate must be positive, got {fs}")
    return carrier_hz / fs, bandwidth_hz / fs


def fmcw_chirp(
    l,
    chirp_length,
    n_chips,
    carrier_hz,
    bandwidth_hz,
    amplitudes,
    sample_rate_hz=None,
):
    """
    One FMCW sample.

    Parameters
    ----------
    l : int
        Sample index, 0 <= l < chirp_length.
    chirp_length : int
        Samples per chirp L.
    n_chips : int
        Chips per chirp L_c; must divide ``chirp_length``.
    carrier_hz, bandwidth_hz : float
        Carrier and swept bandwidth.
    amplitudes : sequence of {-1, +1}
        Chip signs A_tau, one per chip.
    sample_rate_hz : float, optional
        Defaults to ``bandwidth_hz``.
    """
    t_c = _chip_count(chirp_length, n_chips)
    if not 0 <= l < chirp_length:
        raise ValueError(f"sample index {l} outside [0, {chirp_length})")
    fc, bw = _normalized(carrier_hz, bandwidth_hz, sample_rate_hz)
    tau = l // t_c
    phase = 2 * math.pi * fc * l + math.pi * bw / chirp_length * l * l
    return amplitudes[tau] * math.cos(phase)


def fmcw_stream(config, amplitudes, sample_rate_hz=None):
    """Whole chirp block for one sensing stream."""
    _chip_count(config.chirp_length, config.coherence_length)
    fc, bw = _normalized(
        config.carrier_frequency_hz, config.bandwidth_hz, sample_rate_hz
    )
    return fmcw_block(
        config.chirp_length,
        config.coherence_length,
        fc,
        bw,
        np.asarray(amplitudes, dtype=np.float64),
    )


def effective_channel(role, side, index, channels, state):
    """
    Composite BS-to-entity channel as seen through the surface.

    ``role`` is "user" or "target"; ``index`` is the entity's position in
    the scenario.
    """
    if side not in SIDES:
        raise ValueError(f"unknown side tag {side!r}")
    G = channels.G
    if role == "user":
        h = channels.h_ris[index]
        if side == "T":
            return (h * state.z_t) @ G
        return (h * state.z_r) @ G + channels.g_direct[index]
    if role == "target":
        if side == "T":
            return (channels.b_target[index] * state.z_t) @ G
        b_tilde = channels.b_tilde(index)
        return channels.a_target[index] + (b_tilde * state.z_r) @ G
    raise ValueError(f"unknown role {role!r}")


def all_effective_channels(channels, state):
    """Users first, then targets, in scenario order."""
    users = [
        effective_channel("user", side, k, channels, state)
        for k, side in enumerate(channels.user_sides)
    ]
    targets = [
        effective_channel("target", side, m, channels, state)
        for m, side in enumerate(channels.target_sides)
    ]
    return users + targets


def matched_beamformers(effective_channels, p_bs, k, m):
    """
    Column j = sqrt(P_BS/(K+M)) * conj(h_j) / ||h_j||.
    """
    if len(effective_channels) != k + m:
        raise ValueError(
            f"expected {k + m} effective channels, got "
            f"{len(effective_channels)}"
        )
    per_stream = math.sqrt(p_bs / (k + m))
    columns = []
    for j, h in enumerate(effective_channels):
        norm = np.linalg.norm(h)
        if norm == 0:
            raise ValueError(f"effective channel {j} is zero")
        columns.append(per_stream * np.conj(h) / norm)
    return np.column_stack(columns)


def beamformers_for_state(config, channels, state):
    return matched_beamformers(
        all_effective_channels(channels, state),
        config.bs_power_watts,
        len(channels.user_sides),
        len(channels.target_sides),
    )


def transmit_covariance(W):
    return W @ W.conj().T


def assemble_frame(W, n_users, config, rng, chirp_length=None):
    """
    Draws unit-power Gaussian data symbols for the first ``n_users`` beams
    and FMCW chirps with random chip signs for the remaining sensing beams.
    """
    L = config.chirp_length if chirp_length is None else chirp_length
    _chip_count(L, config.coherence_length)
    n_sense = W.shape[1] - n_users
    comm = complex_normal(rng, (n_users, L))
    sense = np.empty((n_sense, L))
    for i in range(n_sense):
        signs = rng.choice([-1.0, 1.0], size=config.coherence_length)
        stream = fmcw_block(
            L,
            config.coherence_length,
            config.carrier_frequency_hz / config.bandwidth_hz,
            1.0,
            signs,
        )
        # cos^2 averages 1/2
        sense[i] = math.sqrt(2.0) * stream
    X = W @ np.vstack([comm, sense])
    return TransmitFrame(
        W=W,
        comm_symbols=comm,
        sense_symbols=sense,
        X=X,
        R_x=transmit_covariance(W),
    )


def write_waveform(frame, path, stream=0):
    """Writes one sensing stream as CSV with columns l, value."""
    values = frame.sense_symbols[stream] / math.sqrt(2.0)
    pd.DataFrame({"l": np.arange(values.shape[0]), "value": values}).to_csv(
        path, index=False, float_format="%.12g"
    )
