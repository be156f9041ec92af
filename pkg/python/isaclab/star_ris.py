# Copyright (c) 2020, ISACLAB DEVELOPERS.
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from isaclab.isaclab import InfeasibleScenarioError

logger = logging.getLogger(__name__)

_FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LiftedState:
    Z_t: np.ndarray
    Z_r: np.ndarray


@dataclass(frozen=True, eq=False)
class StarRisState:
    """
    Coefficients of the hybrid surface.

    ``z_t`` are the active transmissive coefficients (|z_t| >= 1) and
    ``z_r`` the passive reflective ones (|z_r| = 1). The two sides use
    separate amplifiers and are independent.
    """

    z_t: np.ndarray
    z_r: np.ndarray

    @classmethod
    def uniform(cls, n_elements, p_a):
        """Full budget spread evenly, zero phase on both sides."""
        amplitude = p_a / math.sqrt(n_elements)
        return cls(
            z_t=np.full(n_elements, amplitude, dtype=complex),
            z_r=np.ones(n_elements, dtype=complex),
        )

    @classmethod
    def passive(cls, n_elements):
        return cls.uniform(n_elements, math.sqrt(n_elements))

    @property
    def n_elements(self):
        return self.z_t.shape[0]

    def lifted(self):
        return LiftedState(
            Z_t=np.outer(self.z_t, self.z_t.conj()),
            Z_r=np.outer(self.z_r, self.z_r.conj()),
        )

    def violations(self, p_a):
        """Returns the names of the constraints this state breaks."""
        bad = []
        if np.any(np.abs(np.abs(self.z_r) - 1.0) > _FEASIBILITY_TOL):
            bad.append("|z_r| = 1")
        if np.any(np.abs(self.z_t) < 1.0 - _FEASIBILITY_TOL):
            bad.append("|z_t| >= 1")
        if np.sum(np.abs(self.z_t) ** 2) > p_a ** 2 * (1 + _FEASIBILITY_TOL):
            bad.append("sum |z_t|^2 <= P_A^2")
        return bad

    def is_feasible(self, p_a):
        return not self.violations(p_a)


def amplification_factor(state):
    return float(np.linalg.norm(state.z_t))


def ris_power(state, G, R_x, echo_kernels, noise_var, noise_var_v2=None):
    """
    Power drawn by the active transmissive elements,

        Tr(Phi_t G R_x G^H Phi_t^H) + sum_m Tr(Psi_m G R_x G^H Psi_m^H)
        + sigma_v1^2 sum_m Tr(Psi_m Psi_m^H) + sigma_v2^2 Tr(Phi_t^H Phi_t)

    with Psi_m = Phi_t^H B_m Phi_t.

    Parameters
    ----------
    state : StarRisState
    G : ndarray (N, T_x)
        BS to RIS channel.
    R_x : ndarray (T_x, T_x)
        Transmit covariance.
    echo_kernels : ndarray (N, N) or sequence of them
        Side-T echo kernels B_m = b_m^H b_m, without the round-trip
        amplitude. Every amplified echo is counted.
    noise_var : float
        Thermal noise variance sigma_v1^2 riding on the echo pass.
    noise_var_v2 : float, optional
        Thermal noise variance sigma_v2^2 of the forward pass. Defaults to
        ``noise_var``.
    """
    z = state.z_t
    if G.shape[0] != z.shape[0] or R_x.shape != (G.shape[1], G.shape[1]):
        raise ValueError(
            f"dimension mismatch: z_t {z.shape}, G {G.shape}, R_x {R_x.shape}"
        )
    if noise_var_v2 is None:
        noise_var_v2 = noise_var
    if isinstance(echo_kernels, np.ndarray) and echo_kernels.ndim == 2:
        echo_kernels = [echo_kernels]

    incident = G @ R_x @ G.conj().T
    total = np.sum(np.abs(z) ** 2 * np.diag(incident).real)

    for B in echo_kernels:
        if B.shape != (z.shape[0], z.shape[0]):
            raise ValueError(f"echo kernel shape {B.shape} does not match N")
        psi = z.conj()[:, None] * B * z[None, :]
        total += np.trace(psi @ incident @ psi.conj().T).real
        total += noise_var * np.linalg.norm(psi, "fro") ** 2
    total += noise_var_v2 * np.sum(np.abs(z) ** 2)
    return float(total)


def project_feasible(raw_zt, raw_zr, p_a):
    """
    Repairs raw coefficients so that |z_r| = 1, |z_t| >= 1 and
    sum |z_t|^2 <= p_a^2, keeping every phase.

    Amplitudes below one are raised to one. If the budget is then exceeded
    the amplitudes above the floor are scaled down by a common factor.
    """
    raw_zt = np.asarray(raw_zt, dtype=complex)
    raw_zr = np.asarray(raw_zr, dtype=complex)
    n = raw_zt.shape[0]
    if raw_zr.shape != (n,):
        raise ValueError("z_t and z_r must have the same length")
    if p_a ** 2 < n * (1 - _FEASIBILITY_TOL):
        raise InfeasibleScenarioError(
            f"amplification budget below unit-gain floor "
            f"(P_A^2 = {p_a ** 2:g} < N = {n})"
        )

    z_r = np.exp(1j * np.angle(raw_zr))
    phase_t = np.exp(1j * np.angle(raw_zt))
    mag = np.abs(raw_zt)
    clipped = np.maximum(mag, 1.0)

    budget = p_a ** 2
    if np.sum(clipped ** 2) > budget * (1 + _FEASIBILITY_TOL):

        def excess(scale):
            return np.sum(np.maximum(scale * mag, 1.0) ** 2) - budget

        if excess(0.0) >= 0:
            clipped = np.ones(n)
        else:
            scale = brentq(excess, 0.0, 1.0, xtol=1e-14)
            clipped = np.maximum(scale * mag, 1.0)
            # brentq lands within xtol of the root, possibly above it
            over = np.sum(clipped ** 2)
            if over > budget:
                clipped = np.maximum(clipped * math.sqrt(budget / over), 1.0)
        logger.debug("rescaled z_t to the amplification budget %g", p_a)

    return StarRisState(z_t=clipped * phase_t, z_r=z_r)
