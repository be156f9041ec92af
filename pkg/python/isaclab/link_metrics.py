# Copyright (c) 2020, ISACLAB DEVELOPERS.
"""
Received signals and SINR expressions for users and sensing echoes.

Two families are provided for the targets: the exact forms evaluate the
echo powers with the transmit covariance directly, the bound forms are the
trace expressions that are linear in the lifted surface variables and are
what the optimizer works with.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from isaclab.channels import complex_normal, make_rng
from isaclab.star_ris import amplification_factor, ris_power

logger = logging.getLogger(__name__)

REGIMES = ("low", "high", "exact")
RECEIVED_KINDS = ("user_T", "user_R", "echo_T", "echo_R")

# the exact regime estimates the propagated noise from this many draws
NOISE_SAMPLES = 10000


@dataclass(frozen=True)
class NoiseModel:
    static_var: float
    thermal_v1: float
    thermal_v2: float
    regime: str = "low"

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown noise regime {self.regime!r}")
        for name in ("static_var", "thermal_v1", "thermal_v2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @classmethod
    def from_config(cls, config, regime="auto"):
        if regime == "auto":
            regime = select_noise_regime(config)
        s = config.noise_power_watts
        return cls(static_var=s, thermal_v1=s, thermal_v2=s, regime=regime)


def select_noise_regime(config, p_a=None):
    """
    "low" while the amplified thermal noise is negligible (N <= 49 and
    P_A <= 25 sqrt(N)), "high" beyond.
    """
    n = config.n_elements
    p_a = config.amplification_factor if p_a is None else p_a
    if n <= 49 and p_a <= 25.0 * math.sqrt(n) * (1 + 1e-12):
        return "low"
    return "high"


def echo_kernel(b):
    """B = b^H b for a row steering vector b."""
    return np.outer(b.conj(), b)


def lifted_echo_kernel(b, G):
    """
    M = B o conj(G G^H), so that ||b diag(z) G||^2 = z^H M z = Tr(M zz^H).
    """
    return echo_kernel(b) * (G @ G.conj().T).conj()


def user_kernel(h, G, w):
    """V with |h diag(z) G w|^2 = Tr(V zz^H)."""
    c = h * (G @ w)
    return np.outer(c.conj(), c)


def _covariance(frame):
    return frame if isinstance(frame, np.ndarray) else frame.R_x


def _quad(u, R):
    return float((u @ R @ u.conj()).real)


def _tr(A, B):
    return float(np.trace(A @ B).real)


def side_t_echo_channel(m, channels, state):
    return (channels.b_target[m] * state.z_t) @ channels.G


def side_r_composite(m, channels, state):
    """f = sqrt(beta_BS) (a + b_tilde diag(z_r) G)."""
    g = channels.a_target[m] + (channels.b_tilde(m) * state.z_r) @ channels.G
    return math.sqrt(channels.beta_bs[m]) * g


def _targets(channels, side):
    return [m for m, s in enumerate(channels.target_sides) if s == side]


def _check_side(kind, index, sides, side):
    if index >= len(sides) or sides[index] != side:
        raise ValueError(f"{kind} {index} is not on side {side}")


def noise_variance_approx(
    regime, state, channels, noise, m=None, rng=None, samples=NOISE_SAMPLES
):
    """
    Variance of the noise riding on the Side-T echo of target ``m``.

    ``low`` returns the static variance. ``high`` returns the closed form
    for the amplified thermal noise,
    sigma^2 sum_n |Psi(n,n)|^2 alpha (k/(1+k) sum_u |G_LOS(n,u)|^2 + 1/(1+k)),
    with Psi = Phi_t^H B_m Phi_t. ``exact`` propagates ``samples`` noise
    draws and returns the per-entry empirical variance.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown noise regime {regime!r}")
    if regime == "low":
        return noise.static_var
    if m is None:
        side_t = _targets(channels, "T")
        if not side_t:
            return noise.static_var
        m = side_t[0]

    z = state.z_t
    B = echo_kernel(channels.b_target[m])
    psi = z.conj()[:, None] * B * z[None, :]
    kappa = channels.kappa
    if regime == "high":
        los_w = 1.0 if math.isinf(kappa) else kappa / (1.0 + kappa)
        nlos_w = 0.0 if math.isinf(kappa) else 1.0 / (1.0 + kappa)
        row_gain = np.sum(np.abs(channels.G_los) ** 2, axis=1)
        return float(
            noise.thermal_v1
            * channels.alpha_bs_ris
            * np.sum(np.abs(np.diag(psi)) ** 2 * (los_w * row_gain + nlos_w))
        )

    rng = make_rng(0) if rng is None else rng
    G = channels.G
    n = z.shape[0]
    v1 = math.sqrt(noise.thermal_v1) * complex_normal(rng, (n, samples))
    v2 = math.sqrt(noise.thermal_v2) * complex_normal(rng, (n, samples))
    ns = math.sqrt(noise.static_var) * complex_normal(
        rng, (G.shape[1], samples)
    )
    total = G.conj().T @ (psi @ v1 + z.conj()[:, None] * v2) + ns
    return float(np.mean(np.abs(total) ** 2))


def target_noise_variance(m, state, channels, noise, rng=None):
    if channels.target_sides[m] == "T":
        return noise_variance_approx(
            noise.regime, state, channels, noise, m=m, rng=rng
        )
    return noise.static_var


def user_noise_variance(k, channels, noise, p_a):
    """
    sigma_nc^2 plus the amplifier noise reaching a Side-T user,
    sigma_v1^2 P_A^2 alpha (k/(1+k) ||h_LOS||^2 / N + 1/(1+k)).
    Side-R users see the static noise only.
    """
    if channels.user_sides[k] != "T":
        return noise.static_var
    kappa = channels.kappa
    h_los = channels.h_los[k]
    per_element = np.sum(np.abs(h_los) ** 2) / h_los.shape[0]
    if math.isinf(kappa):
        spread = per_element
    else:
        spread = kappa / (1.0 + kappa) * per_element + 1.0 / (1.0 + kappa)
    return noise.static_var + (
        noise.thermal_v1 * p_a ** 2 * channels.alpha_ris_user[k] * spread
    )


# Exact target SINRs


def _echo_power_t(j, channels, state, R):
    u = side_t_echo_channel(j, channels, state)
    return channels.beta_ris[j] ** 2 * float(np.vdot(u, u).real) * _quad(u, R)


def _echo_power_r(j, channels, state, R):
    f = side_r_composite(j, channels, state)
    return float(np.vdot(f, f).real) * _quad(f, R)


def sinr_target_T_exact(m, frame, channels, state, noise, noise_var=None):
    _check_side("target", m, channels.target_sides, "T")
    R = _covariance(frame)
    if noise_var is None:
        noise_var = target_noise_variance(m, state, channels, noise)
    desired = _echo_power_t(m, channels, state, R)
    interference = sum(
        _echo_power_r(j, channels, state, R) for j in _targets(channels, "R")
    )
    interference += sum(
        _echo_power_t(j, channels, state, R)
        for j in _targets(channels, "T")
        if j != m
    )
    return desired / (interference + noise_var)


def sinr_target_R_exact(m, frame, channels, state, noise):
    _check_side("target", m, channels.target_sides, "R")
    R = _covariance(frame)
    desired = _echo_power_r(m, channels, state, R)
    interference = sum(
        _echo_power_r(j, channels, state, R)
        for j in _targets(channels, "R")
        if j != m
    )
    interference += sum(
        _echo_power_t(j, channels, state, R) for j in _targets(channels, "T")
    )
    return desired / (interference + noise.static_var)


# Trace-bound target SINRs


def side_t_level(j, channels, Z_t, p_a, p_tx):
    """P_A^2 beta^2 Tr(Q Z_t) Tr(R_x), Q = M^2."""
    M = lifted_echo_kernel(channels.b_target[j], channels.G)
    return p_a ** 2 * channels.beta_ris[j] ** 2 * _tr(M @ M, Z_t) * p_tx


def side_r_level(j, channels, Z_r, p_tx):
    """8 beta_BS^2 Tr(R_x) (||a||^4 + N Tr(Q Z_r)), Q = M_tilde^2."""
    M = lifted_echo_kernel(channels.b_tilde(j), channels.G)
    a = channels.a_target[j]
    n = channels.n_elements
    a4 = float(np.vdot(a, a).real) ** 2
    return 8.0 * channels.beta_bs[j] ** 2 * p_tx * (a4 + n * _tr(M @ M, Z_r))


def _checked_covariance(R_x, channels):
    R_x = _covariance(R_x)
    if R_x.shape != (channels.bs_antennas, channels.bs_antennas):
        raise ValueError(f"R_x has shape {R_x.shape}")
    return R_x


def _exact_interference(side, m, channels, state, R):
    """Exact echo power of every target other than ``m`` on ``side``."""
    total = 0.0
    for j in _targets(channels, "R"):
        if not (side == "R" and j == m):
            total += _echo_power_r(j, channels, state, R)
    for j in _targets(channels, "T"):
        if not (side == "T" and j == m):
            total += _echo_power_t(j, channels, state, R)
    return total


def sinr_target_T_level(
    m, R_x, channels, state, noise, p_a=None, noise_var=None
):
    """
    Ratio of trace levels for a Side-T target: every echo, the desired one
    and the interferers, enters through its trace upper bound. This is the
    quantity the relaxation constrains.
    """
    _check_side("target", m, channels.target_sides, "T")
    R_x = _checked_covariance(R_x, channels)
    p_a = amplification_factor(state) if p_a is None else p_a
    if noise_var is None:
        noise_var = target_noise_variance(m, state, channels, noise)
    p_tx = float(np.trace(R_x).real)
    Z_t = state.lifted().Z_t
    desired = side_t_level(m, channels, Z_t, p_a, p_tx)
    interference = 0.0
    for j in _targets(channels, "R"):
        f = side_r_composite(j, channels, state)
        interference += float(np.vdot(f, f).real) ** 2 * p_tx
    for j in _targets(channels, "T"):
        if j != m:
            interference += side_t_level(j, channels, Z_t, p_a, p_tx)
    return desired / (interference + noise_var)


def sinr_target_R_level(m, R_x, channels, state, noise, p_a=None):
    """Ratio of trace levels for a Side-R target."""
    _check_side("target", m, channels.target_sides, "R")
    R_x = _checked_covariance(R_x, channels)
    p_a = amplification_factor(state) if p_a is None else p_a
    p_tx = float(np.trace(R_x).real)
    lifted = state.lifted()
    desired = side_r_level(m, channels, lifted.Z_r, p_tx)
    interference = sum(
        side_r_level(j, channels, lifted.Z_r, p_tx)
        for j in _targets(channels, "R")
        if j != m
    )
    interference += sum(
        side_t_level(j, channels, lifted.Z_t, p_a, p_tx)
        for j in _targets(channels, "T")
    )
    return desired / (interference + noise.static_var)


def sinr_target_T_bound(
    m, R_x, channels, state, noise, p_a=None, noise_var=None
):
    """
    Upper bound on ``sinr_target_T_exact``: the trace level of the desired
    echo over the exact interference and noise. The level dominates the
    exact desired power, so the bound holds for any number of targets.
    """
    _check_side("target", m, channels.target_sides, "T")
    R_x = _checked_covariance(R_x, channels)
    p_a = amplification_factor(state) if p_a is None else p_a
    if noise_var is None:
        noise_var = target_noise_variance(m, state, channels, noise)
    p_tx = float(np.trace(R_x).real)
    desired = side_t_level(m, channels, state.lifted().Z_t, p_a, p_tx)
    interference = _exact_interference("T", m, channels, state, R_x)
    return desired / (interference + noise_var)


def sinr_target_R_bound(m, R_x, channels, state, noise):
    """Upper bound on ``sinr_target_R_exact``, built like the Side-T one."""
    _check_side("target", m, channels.target_sides, "R")
    R_x = _checked_covariance(R_x, channels)
    p_tx = float(np.trace(R_x).real)
    desired = side_r_level(m, channels, state.lifted().Z_r, p_tx)
    interference = _exact_interference("R", m, channels, state, R_x)
    return desired / (interference + noise.static_var)


# Users


def sinr_user_T(k, W, channels, state, noise, p_a=None):
    """Trace form with the lifted transmissive coefficients."""
    _check_side("user", k, channels.user_sides, "T")
    p_a = amplification_factor(state) if p_a is None else p_a
    Z_t = state.lifted().Z_t
    h = channels.h_ris[k]
    terms = [
        _tr(user_kernel(h, channels.G, W[:, j]), Z_t)
        for j in range(W.shape[1])
    ]
    desired = terms[k]
    interference = sum(terms) - desired
    noise_var = user_noise_variance(k, channels, noise, p_a)
    return desired / (interference + noise_var)


def sinr_user_T_norm(k, W, channels, state, noise, p_a=None):
    """Same quantity as ``sinr_user_T`` from the composite channel norms."""
    _check_side("user", k, channels.user_sides, "T")
    p_a = amplification_factor(state) if p_a is None else p_a
    gains = np.abs((channels.h_ris[k] * state.z_t) @ channels.G @ W) ** 2
    desired = gains[k]
    interference = np.sum(gains) - desired
    noise_var = user_noise_variance(k, channels, noise, p_a)
    return desired / (interference + noise_var)


def _user_r_ratio(k, h_eff, W, noise):
    gains = np.abs(h_eff @ W) ** 2
    desired = gains[k]
    return desired / (np.sum(gains) - desired + noise.static_var)


def sinr_user_R_approx(k, W, channels, noise):
    """The reflected path is dropped; only the direct BS link counts."""
    _check_side("user", k, channels.user_sides, "R")
    return _user_r_ratio(k, channels.g_direct[k], W, noise)


def sinr_user_R_exact(k, W, channels, state, noise):
    _check_side("user", k, channels.user_sides, "R")
    h_eff = (channels.h_ris[k] * state.z_r) @ channels.G + channels.g_direct[k]
    return _user_r_ratio(k, h_eff, W, noise)


# Sample-level signals


@dataclass(frozen=True, eq=False)
class ReceivedBlock:
    total: np.ndarray
    terms: Dict[str, np.ndarray]


def _noise(rng, var, shape):
    if var == 0:
        return np.zeros(shape, dtype=complex)
    return math.sqrt(var) * complex_normal(rng, shape)


def _symbols(frame):
    return np.vstack([frame.comm_symbols, frame.sense_symbols])


def synthesize_received(kind, index, frame, channels, state, noise, rng):
    """
    Sample-level received block for a user (length L) or the BS echo of a
    target (T_x by L), split into its named terms.
    """
    if kind not in RECEIVED_KINDS:
        raise ValueError(f"unknown received signal kind {kind!r}")
    W = frame.W
    S = _symbols(frame)
    L = S.shape[1]
    X = W @ S
    G = channels.G
    n = channels.n_elements
    terms = {}

    if kind.startswith("user"):
        side = kind[-1]
        _check_side("user", index, channels.user_sides, side)
        h = channels.h_ris[index]
        if side == "T":
            h_eff = (h * state.z_t) @ G
        else:
            h_eff = (h * state.z_r) @ G + channels.g_direct[index]
        beams = h_eff @ W
        terms["desired"] = beams[index] * S[index]
        terms["interference"] = beams @ S - terms["desired"]
        if side == "T":
            v1 = _noise(rng, noise.thermal_v1, (n, L))
            terms["thermal"] = (h * state.z_t) @ v1
        terms["static"] = _noise(rng, noise.static_var, L)
    else:
        side = kind[-1]
        _check_side("target", index, channels.target_sides, side)

        def t_echo(j):
            u = side_t_echo_channel(j, channels, state)
            return channels.beta_ris[j] * np.outer(u.conj(), u @ X)

        def r_echo(j):
            f = side_r_composite(j, channels, state)
            return np.outer(f.conj(), f @ X)

        own = t_echo if side == "T" else r_echo
        terms["desired"] = own(index)
        interference = np.zeros((channels.bs_antennas, L), dtype=complex)
        for j in _targets(channels, "T"):
            if not (side == "T" and j == index):
                interference += t_echo(j)
        for j in _targets(channels, "R"):
            if not (side == "R" and j == index):
                interference += r_echo(j)
        terms["interference"] = interference
        if side == "T":
            z = state.z_t
            B = echo_kernel(channels.b_target[index])
            psi = z.conj()[:, None] * B * z[None, :]
            v1 = _noise(rng, noise.thermal_v1, (n, L))
            v2 = _noise(rng, noise.thermal_v2, (n, L))
            terms["thermal_v1"] = G.conj().T @ (psi @ v1)
            terms["thermal_v2"] = G.conj().T @ (z.conj()[:, None] * v2)
        terms["static"] = _noise(
            rng, noise.static_var, (channels.bs_antennas, L)
        )

    total = sum(terms.values())
    return ReceivedBlock(total=total, terms=terms)


# Reports


@dataclass(frozen=True, eq=False)
class MetricsReport:
    user_names: Tuple[str, ...]
    user_sides: Tuple[str, ...]
    user_sinr: np.ndarray
    target_names: Tuple[str, ...]
    target_sides: Tuple[str, ...]
    target_sinr_bound: np.ndarray
    target_sinr_exact: np.ndarray
    target_noise_var: np.ndarray
    user_noise_var: np.ndarray
    regime: str
    p_ris: float

    @property
    def min_target_sinr(self):
        return float(np.min(self.target_sinr_bound))


def target_bound_sinrs(config, channels, state, R_x, noise, noise_vars=None):
    """Per-target bound SINRs in scenario order."""
    p_a = config.amplification_factor
    out = []
    for m, side in enumerate(channels.target_sides):
        if side == "T":
            nv = None if noise_vars is None else noise_vars[m]
            out.append(
                sinr_target_T_bound(
                    m, R_x, channels, state, noise, p_a=p_a, noise_var=nv
                )
            )
        else:
            out.append(sinr_target_R_bound(m, R_x, channels, state, noise))
    return np.array(out)


def target_level_sinrs(config, channels, state, R_x, noise):
    """Per-target level ratios, the objective of the relaxation."""
    p_a = config.amplification_factor
    return np.array(
        [
            sinr_target_T_level(m, R_x, channels, state, noise, p_a=p_a)
            if side == "T"
            else sinr_target_R_level(m, R_x, channels, state, noise, p_a=p_a)
            for m, side in enumerate(channels.target_sides)
        ]
    )


def side_t_echo_kernels(channels):
    """B_m for every Side-T target, as consumed by ``ris_power``."""
    return [
        echo_kernel(channels.b_target[m]) for m in _targets(channels, "T")
    ]


def evaluate_metrics(
    config, scenario, channels, state, W, regime="auto", rng=None
):
    """
    All per-entity SINRs (bound and exact), noise variances and P_RIS for
    one state and beamforming matrix.
    """
    noise = NoiseModel.from_config(config, regime)
    p_a = config.amplification_factor
    R_x = W @ W.conj().T

    target_noise = np.array(
        [
            target_noise_variance(m, state, channels, noise, rng=rng)
            for m in range(len(channels.target_sides))
        ]
    )
    bound = target_bound_sinrs(
        config, channels, state, R_x, noise, target_noise
    )
    exact = []
    for m, side in enumerate(channels.target_sides):
        if side == "T":
            exact.append(
                sinr_target_T_exact(
                    m, R_x, channels, state, noise, noise_var=target_noise[m]
                )
            )
        else:
            exact.append(sinr_target_R_exact(m, R_x, channels, state, noise))

    users, user_noise = [], []
    for k, side in enumerate(channels.user_sides):
        user_noise.append(user_noise_variance(k, channels, noise, p_a))
        if side == "T":
            users.append(sinr_user_T(k, W, channels, state, noise, p_a=p_a))
        else:
            sinr = sinr_user_R_approx(k, W, channels, noise)
            if sinr < config.comm_sinr_threshold_linear:
                logger.warning(
                    "user %s below the SINR threshold (%.3g < %.3g)",
                    scenario.users[k].name,
                    sinr,
                    config.comm_sinr_threshold_linear,
                )
            users.append(sinr)

    p_ris = ris_power(
        state,
        channels.G,
        R_x,
        side_t_echo_kernels(channels),
        noise.thermal_v1,
        noise.thermal_v2,
    )
    return MetricsReport(
        user_names=tuple(u.name for u in scenario.users),
        user_sides=channels.user_sides,
        user_sinr=np.array(users),
        target_names=tuple(t.name for t in scenario.targets),
        target_sides=channels.target_sides,
        target_sinr_bound=bound,
        target_sinr_exact=np.array(exact),
        target_noise_var=target_noise,
        user_noise_var=np.array(user_noise),
        regime=noise.regime,
        p_ris=p_ris,
    )
