# Copyright (c) 2020, ISACLAB DEVELOPERS.
"""
Fisher information and Cramer-Rao bounds for the two-dimensional angle of
departure of a sensing target.

The echo of a target is modelled as beta F X plus white noise, with F the
round-trip kernel seen by the BS and beta the complex path amplitude. The
unknowns are the two angles and the real and imaginary parts of beta;
the amplitude is a nuisance parameter and is removed through the Schur
complement.
"""
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from isaclab.arrays import (
    ula_derivatives,
    ula_steering,
    upa_steering,
    upa_wavevector_derivatives,
)
from isaclab.isaclab import UnidentifiableGeometryError
from isaclab.link_metrics import NoiseModel, target_noise_variance

logger = logging.getLogger(__name__)

ANGLE_NAMES = ("horizontal", "vertical")

# relative eigenvalue floor below which the angle information is singular
_IDENTIFIABILITY_TOL = 1e-12


@dataclass(frozen=True)
class TargetParams:
    """zeta = [angle_h, angle_v, Re beta, Im beta]; angles in radians."""

    angle_h: float
    angle_v: float
    beta: complex

    @property
    def zeta(self):
        return np.array(
            [self.angle_h, self.angle_v, self.beta.real, self.beta.imag]
        )


@dataclass(frozen=True, eq=False)
class FimBlocks:
    J_pp: np.ndarray
    J_pb: np.ndarray
    J_bb: np.ndarray

    @property
    def J(self):
        return np.block([[self.J_pp, self.J_pb], [self.J_pb.T, self.J_bb]])

    def schur(self):
        return self.J_pp - self.J_pb @ np.linalg.solve(self.J_bb, self.J_pb.T)


@dataclass(frozen=True, eq=False)
class CrbReport:
    crb_matrix: np.ndarray
    root_crb_deg: Tuple[float, float]
    params: TargetParams = None


def b_matrix_derivatives(angles, n_x, n_y, eta_ris):
    """
    B = b^H b for the RIS response b and its derivatives in both angles,
    dB = j eta (B diag(dk) - diag(dk) B).
    """
    b = upa_steering(angles, n_x, n_y, eta_ris)
    B = np.outer(b.conj(), b)
    dk_h, dk_v = upa_wavevector_derivatives(angles, n_x, n_y)

    def derivative(dk):
        return 1j * eta_ris * (B * dk[None, :] - dk[:, None] * B)

    return B, derivative(dk_h), derivative(dk_v)


def fim_blocks(F, Fdot_h, Fdot_v, R_x, beta, L, sigma2):
    """
    Fisher information of [angle_h, angle_v, Re beta, Im beta] for the
    echo beta F X observed over ``L`` samples, X X^H = L R_x.
    """
    if not sigma2 > 0:
        raise ValueError(f"noise variance must be positive, got {sigma2}")
    if L < 1:
        raise ValueError(f"sample count must be >= 1, got {L}")
    scale = 2.0 * L / sigma2
    dots = (Fdot_h, Fdot_v)

    J_pp = np.empty((2, 2))
    J_pb = np.empty((2, 2))
    for i, Fi in enumerate(dots):
        for k, Fk in enumerate(dots):
            J_pp[i, k] = (
                scale
                * abs(beta) ** 2
                * np.trace(Fi.conj().T @ Fk @ R_x).real
            )
        cross = np.conj(beta) * np.trace(Fi.conj().T @ F @ R_x)
        J_pb[i, 0] = scale * cross.real
        J_pb[i, 1] = scale * (1j * cross).real
    J_bb = scale * np.trace(F.conj().T @ F @ R_x).real * np.eye(2)
    return FimBlocks(J_pp=J_pp, J_pb=J_pb, J_bb=J_bb)


def crb_aod(blocks, params=None):
    """
    Angle CRB [J_pp - J_pb J_bb^-1 J_bp]^-1.

    Raises
    ------
    UnidentifiableGeometryError
        If the amplitude carries no information or the Schur complement is
        singular; the error names the near-null angle direction.
    """
    J_bb = blocks.J_bb[0, 0]
    if not J_bb > 0:
        raise UnidentifiableGeometryError(
            "echo carries no energy; target amplitude is unidentifiable",
            direction="amplitude",
        )
    S = blocks.schur()
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    if w[0] <= _IDENTIFIABILITY_TOL * max(abs(w[-1]), 1e-300):
        null = V[:, 0]
        direction = ANGLE_NAMES[int(np.argmax(np.abs(null)))]
        raise UnidentifiableGeometryError(
            f"angle information is singular along "
            f"[{null[0]:.3g}, {null[1]:.3g}] ({direction})",
            direction=direction,
        )
    crb = np.linalg.inv(S)
    crb = 0.5 * (crb + crb.T)
    root = tuple(math.degrees(math.sqrt(x)) for x in np.diag(crb))
    return CrbReport(crb_matrix=crb, root_crb_deg=root, params=params)


def _side_t_kernels(m, placement, channels, state, config):
    n_x, n_y = config.ris_grid
    B, dB_h, dB_v = b_matrix_derivatives(
        placement.aod_ris, n_x, n_y, config.eta_ris
    )
    # Phi_t G
    pg = state.z_t[:, None] * channels.G
    F = pg.conj().T @ B @ pg
    return (
        F,
        pg.conj().T @ dB_h @ pg,
        pg.conj().T @ dB_v @ pg,
        channels.beta_ris[m],
        placement.aod_ris,
    )


def _side_r_kernels(m, placement, channels, state, config):
    a = ula_steering(placement.aod_bs, config.bs_antennas, config.eta_bs)
    da_h, da_v = ula_derivatives(
        placement.aod_bs, config.bs_antennas, config.eta_bs
    )
    g = a + (channels.b_tilde(m) * state.z_r) @ channels.G

    def kernel_derivative(dg):
        return np.outer(dg.conj(), g) + np.outer(g.conj(), dg)

    return (
        np.outer(g.conj(), g),
        kernel_derivative(da_h),
        kernel_derivative(da_v),
        channels.beta_bs[m],
        placement.aod_bs,
    )


def crb_for_target(
    side, m, placement, channels, state, R_x, config, noise=None
):
    """
    Root-CRB of target ``m`` (scenario index) with placement
    ``placement``. Side-T angles are the RIS departure angles, Side-R
    angles the BS departure angles.
    """
    if channels.target_sides[m] != side:
        raise ValueError(f"target {m} is not on side {side}")
    if noise is None:
        noise = NoiseModel.from_config(config)
    if side == "T":
        kernels = _side_t_kernels(m, placement, channels, state, config)
    else:
        kernels = _side_r_kernels(m, placement, channels, state, config)
    F, F_h, F_v, beta, angles = kernels
    sigma2 = target_noise_variance(m, state, channels, noise)
    blocks = fim_blocks(F, F_h, F_v, R_x, beta, config.chirp_length, sigma2)
    params = TargetParams(angles[0], angles[1], complex(beta))
    report = crb_aod(blocks, params)
    logger.debug(
        "target %d (%s): root CRB %.4g / %.4g deg",
        m,
        side,
        *report.root_crb_deg,
    )
    return report
