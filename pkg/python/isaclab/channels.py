# Copyright (c) 2020, ISACLAB DEVELOPERS.
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from isaclab.arrays import ula_steering, upa_steering

logger = logging.getLogger(__name__)


def make_rng(seed, trial=0):
    """
    Counter-based generator for one Monte Carlo trial. Streams for distinct
    (seed, trial) pairs are independent, so trials can run in any order.
    """
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([int(seed), int(trial)]))
    )


def complex_normal(rng, shape):
    """CN(0, 1) samples: real and imaginary parts each of variance 1/2."""
    return (
        rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    ) / math.sqrt(2.0)


def path_loss(d_m, alpha0, rho):
    if not d_m > 0:
        raise ValueError(f"distance must be positive, got {d_m}")
    return alpha0 * d_m ** (-rho)


def rician_sample(los, alpha, kappa, rng):
    """
    sqrt(alpha) * (sqrt(k/(1+k)) * LOS + sqrt(1/(1+k)) * NLOS)
    """
    los = np.asarray(los)
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if not kappa >= 0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    nlos = complex_normal(rng, los.shape)
    if math.isinf(kappa):
        w_los, w_nlos = 1.0, 0.0
    else:
        w_los = math.sqrt(kappa / (1.0 + kappa))
        w_nlos = math.sqrt(1.0 / (1.0 + kappa))
    return math.sqrt(alpha) * (w_los * los + w_nlos * nlos)


def radar_round_trip(lambda_m, rcs_m2, d_m):
    """
    Round-trip amplitude sqrt(lambda^2 * rcs / ((4 pi)^3 d^4)).
    """
    if not lambda_m > 0:
        raise ValueError(f"wavelength must be positive, got {lambda_m}")
    if not d_m > 0:
        raise ValueError(f"distance must be positive, got {d_m}")
    if rcs_m2 < 0:
        raise ValueError(f"radar cross section must be >= 0, got {rcs_m2}")
    return math.sqrt(lambda_m ** 2 * rcs_m2 / ((4 * math.pi) ** 3 * d_m ** 4))


@dataclass(frozen=True, eq=False)
class ChannelDraw:
    """
    One Monte Carlo realization.

    Users and targets are indexed in scenario order; entries that do not
    exist on an entity's side (BS links of Side-T entities) are ``None``.
    """

    G: np.ndarray
    G_los: np.ndarray
    g_direct: Tuple[Optional[np.ndarray], ...]
    h_ris: Tuple[np.ndarray, ...]
    h_los: Tuple[np.ndarray, ...]
    a_target: Tuple[Optional[np.ndarray], ...]
    b_target: Tuple[np.ndarray, ...]
    beta_ris: Tuple[float, ...]
    beta_bs: Tuple[Optional[float], ...]
    user_sides: Tuple[str, ...]
    target_sides: Tuple[str, ...]
    alpha_bs_ris: float
    alpha_ris_user: Tuple[float, ...]
    kappa: float

    @property
    def n_elements(self):
        return self.G.shape[0]

    @property
    def bs_antennas(self):
        return self.G.shape[1]

    def b_tilde(self, m):
        """Side-R RIS steering rescaled so that beta_BS factors out."""
        return math.sqrt(self.beta_ris[m] / self.beta_bs[m]) * self.b_target[m]


def draw_channels(config, scenario, rng):
    t_x = config.bs_antennas
    n_x, n_y = config.ris_grid
    kappa = config.rician_factor_linear
    alpha0 = config.reference_path_loss_linear
    rho = config.path_loss_exponent
    lam = config.wavelength_m

    def bs(angles):
        return ula_steering(angles, t_x, config.eta_bs)

    def ris(angles):
        return upa_steering(angles, n_x, n_y, config.eta_ris)

    alpha_bs_ris = path_loss(config.bs_ris_distance_m, alpha0, rho)
    G_los = np.outer(ris(config.ris_aoa).conj(), bs(config.bs_ris_aod))
    G = rician_sample(G_los, alpha_bs_ris, kappa, rng)

    g_direct, h_ris, h_los, alpha_ris_user = [], [], [], []
    for user in scenario.users:
        los = ris(user.aod_ris)
        alpha = path_loss(user.distance_ris_m, alpha0, rho)
        h_los.append(los)
        alpha_ris_user.append(alpha)
        h_ris.append(rician_sample(los, alpha, kappa, rng))
        if user.side == "R":
            g_direct.append(
                rician_sample(
                    bs(user.aod_bs),
                    path_loss(user.distance_bs_m, alpha0, rho),
                    kappa,
                    rng,
                )
            )
        else:
            g_direct.append(None)

    a_target, b_target, beta_ris, beta_bs = [], [], [], []
    rcs = config.radar_cross_section_m2
    for target in scenario.targets:
        b_target.append(ris(target.aod_ris))
        beta_ris.append(radar_round_trip(lam, rcs, target.distance_ris_m))
        if target.side == "R":
            a_target.append(bs(target.aod_bs))
            beta_bs.append(radar_round_trip(lam, rcs, target.distance_bs_m))
        else:
            a_target.append(None)
            beta_bs.append(None)

    return ChannelDraw(
        G=G,
        G_los=G_los,
        g_direct=tuple(g_direct),
        h_ris=tuple(h_ris),
        h_los=tuple(h_los),
        a_target=tuple(a_target),
        b_target=tuple(b_target),
        beta_ris=tuple(beta_ris),
        beta_bs=tuple(beta_bs),
        user_sides=tuple(u.side for u in scenario.users),
        target_sides=tuple(t.side for t in scenario.targets),
        alpha_bs_ris=alpha_bs_ris,
        alpha_ris_user=tuple(alpha_ris_user),
        kappa=kappa,
    )
