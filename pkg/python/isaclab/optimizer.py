# Copyright (c) 2020, ISACLAB DEVELOPERS.
"""
Max-min design of the surface coefficients.

Every round fixes the beamformers from the current state, linearizes the
target and user SINR constraints in the lifted variables and finds, by
bisection over feasibility problems, the largest common SINR level the
relaxation supports. The lifted solution is then mapped back to feasible
coefficients.

Within one feasibility problem the transmissive block is carried as
Z_t / P_A^2 so that its trace is at most one, next to the reflective
block Z_r and a scalar margin s. Every soft row reads

    g_i(Z) - n_i s >= rhs_i - n_i

with n_i chosen so that the reference state meets the row at s = 0; the
relaxation is feasible for the level t exactly when the optimal margin
reaches one.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from isaclab import sdp
from isaclab.isaclab import InfeasibleScenarioError
from isaclab.link_metrics import (
    NoiseModel,
    lifted_echo_kernel,
    side_r_composite,
    side_t_echo_kernels,
    sinr_user_R_approx,
    sinr_user_T,
    target_level_sinrs,
    target_noise_variance,
    user_kernel,
    user_noise_variance,
)
from isaclab.star_ris import StarRisState, project_feasible, ris_power
from isaclab.waveforms import beamformers_for_state

logger = logging.getLogger(__name__)

DEFAULT_ROUNDS = 3
DEFAULT_BISECT_TOL = 1e-2

_ZT, _ZR, _MARGIN = 0, 1, 2
_MAX_DOUBLINGS = 60
_MAX_BISECTIONS = 60


@dataclass(frozen=True, eq=False)
class QMatrices:
    """
    Data of the lifted SINR constraints for one round.

    ``q_t`` and ``q_r`` map a target index to its squared lifted echo
    kernel (Side-T targets through b, Side-R targets through b_tilde),
    ``a_gram`` holds A_m = a^H a for Side-R targets and ``f_r`` the
    composite Side-R echo channels frozen at ``state``. ``v_user`` maps a
    Side-T user to its kernels, one per beam.
    """

    q_t: Dict[int, np.ndarray]
    q_r: Dict[int, np.ndarray]
    a_gram: Dict[int, np.ndarray]
    f_r: Dict[int, np.ndarray]
    g_bar: np.ndarray
    v_user: Dict[int, List[np.ndarray]]
    W: np.ndarray
    state: StarRisState
    channels: object

    @property
    def R_x(self):
        return self.W @ self.W.conj().T

    @property
    def p_tx(self):
        return float(np.sum(np.abs(self.W) ** 2))


def assemble_q_matrices(channels, state, W):
    """
    Builds the lifted kernels for ``channels`` with the Side-R coupling
    (and the beamformers ``W``) taken at ``state``.
    """
    n = channels.n_elements
    if state.n_elements != n:
        raise ValueError(
            f"state has {state.n_elements} elements, channels have {n}"
        )
    if W.shape[0] != channels.bs_antennas:
        raise ValueError(f"W has shape {W.shape}")

    q_t, q_r, a_gram, f_r = {}, {}, {}, {}
    for m, side in enumerate(channels.target_sides):
        if side == "T":
            M = lifted_echo_kernel(channels.b_target[m], channels.G)
            q_t[m] = M @ M
        else:
            M = lifted_echo_kernel(channels.b_tilde(m), channels.G)
            q_r[m] = M @ M
            a = channels.a_target[m]
            a_gram[m] = np.outer(a.conj(), a)
            f_r[m] = side_r_composite(m, channels, state)

    v_user = {
        k: [
            user_kernel(channels.h_ris[k], channels.G, W[:, j])
            for j in range(W.shape[1])
        ]
        for k, side in enumerate(channels.user_sides)
        if side == "T"
    }
    return QMatrices(
        q_t=q_t,
        q_r=q_r,
        a_gram=a_gram,
        f_r=f_r,
        g_bar=channels.G @ channels.G.conj().T,
        v_user=v_user,
        W=W,
        state=state,
        channels=channels,
    )


@dataclass(frozen=True, eq=False)
class _Row:
    label: str
    coefficients: Dict[int, np.ndarray]
    rhs: float


def _soft_rows(t, q, config, noise):
    """Target rows first (scenario order), then Side-T users."""
    ch = q.channels
    p_a2 = config.amplification_factor ** 2
    p = q.p_tx
    n = ch.n_elements

    t_mat = {
        m: p_a2 ** 2 * ch.beta_ris[m] ** 2 * p * Q for m, Q in q.q_t.items()
    }
    r_mat = {
        m: 8.0 * ch.beta_bs[m] ** 2 * p * n * Q for m, Q in q.q_r.items()
    }
    r_const = {
        m: 8.0 * ch.beta_bs[m] ** 2 * p * np.trace(A).real ** 2
        for m, A in q.a_gram.items()
    }
    frozen_r = sum(
        float(np.vdot(f, f).real) ** 2 * p for f in q.f_r.values()
    )

    rows = []
    for m, side in enumerate(ch.target_sides):
        if side == "T":
            noise_var = target_noise_variance(m, q.state, ch, noise)
            lhs = t_mat[m] - t * sum(
                (t_mat[j] for j in t_mat if j != m),
                np.zeros((n, n), dtype=complex),
            )
            rows.append(
                _Row(f"target {m} (T)", {_ZT: lhs}, t * (frozen_r + noise_var))
            )
        else:
            lhs_r = r_mat[m] - t * sum(
                (r_mat[j] for j in r_mat if j != m),
                np.zeros((n, n), dtype=complex),
            )
            coefficients = {_ZR: lhs_r}
            if t_mat:
                coefficients[_ZT] = -t * sum(t_mat.values())
            rhs = (
                t
                * (
                    sum(c for j, c in r_const.items() if j != m)
                    + noise.static_var
                )
                - r_const[m]
            )
            rows.append(_Row(f"target {m} (R)", coefficients, rhs))

    r_th = config.comm_sinr_threshold_linear
    for k, kernels in q.v_user.items():
        others = sum(
            (V for j, V in enumerate(kernels) if j != k),
            np.zeros((n, n), dtype=complex),
        )
        lhs = p_a2 * (kernels[k] - r_th * others)
        rhs = r_th * user_noise_variance(
            k, ch, noise, config.amplification_factor
        )
        rows.append(_Row(f"user {k} (T)", {_ZT: lhs}, rhs))
    return rows


def _reference_blocks(q, config):
    lifted = q.state.lifted()
    return [lifted.Z_t / config.amplification_factor ** 2, lifted.Z_r]


def _row_value(row, blocks):
    return sum(
        float(np.trace(A @ blocks[b]).real)
        for b, A in row.coefficients.items()
    )


def build_feasibility_sdp(t, q, config, noise):
    """
    Feasibility problem for the common SINR level ``t``.

    Blocks are [Z_t / P_A^2, Z_r, s]. There are M + K_T soft rows followed
    by the hard rows diag(Z_r) = 1, diag(Z_t) >= 1 and Tr(Z_t) <= P_A^2.
    The objective maximizes the margin s.
    """
    if t < 0:
        raise ValueError(f"SINR level must be nonnegative, got {t}")
    n = q.channels.n_elements
    p_a2 = config.amplification_factor ** 2
    problem = sdp.SdpProblem([n, n, 1])
    problem.set_objective(_MARGIN, np.ones((1, 1)))

    reference = _reference_blocks(q, config)
    for row in _soft_rows(t, q, config, noise):
        scale = abs(_row_value(row, reference)) + abs(row.rhs)
        if scale == 0:
            scale = max(
                (np.linalg.norm(A) for A in row.coefficients.values()),
                default=1.0,
            )
        coefficients = dict(row.coefficients)
        coefficients[_MARGIN] = -scale * np.ones((1, 1))
        problem.add_constraint(
            coefficients, ">=", row.rhs - scale, row.label
        )

    for i in range(n):
        unit = np.zeros((n, n))
        unit[i, i] = 1.0
        problem.add_constraint({_ZR: unit}, "=", 1.0, f"|z_r[{i}]| = 1")
    for i in range(n):
        unit = np.zeros((n, n))
        unit[i, i] = 1.0
        problem.add_constraint(
            {_ZT: unit}, ">=", 1.0 / p_a2, f"|z_t[{i}]| >= 1"
        )
    problem.add_constraint({_ZT: np.eye(n)}, "<=", 1.0, "amplification budget")
    return problem


@dataclass(frozen=True, eq=False)
class SdrIterate:
    Z_t: np.ndarray
    Z_r: np.ndarray
    t: float
    t_upper: float
    status: str
    state: Optional[StarRisState] = None
    achieved: float = math.nan
    defect_t: float = math.nan
    defect_r: float = math.nan
    bracket_solves: int = 0
    sdp_solves: int = 0
    solver_iterations: int = 0
    trajectory: Tuple[float, ...] = ()
    side_r_users_ok: Tuple[bool, ...] = ()

    @property
    def gap(self):
        return self.t - self.achieved


class _Oracle:
    """Solves the feasibility problem for a level, reusing iterates."""

    def __init__(self, q, config, noise, sdp_tol, max_iter):
        self.q = q
        self.config = config
        self.noise = noise
        self.sdp_tol = sdp_tol
        self.max_iter = max_iter
        self.warm = None
        self.solves = 0
        self.iterations = 0

    def __call__(self, t):
        problem = build_feasibility_sdp(t, self.q, self.config, self.noise)
        solution = sdp.solve(
            problem,
            tol=self.sdp_tol,
            max_iter=self.max_iter,
            warm_start=self.warm,
        )
        self.solves += 1
        self.iterations += solution.iterations
        self.warm = solution
        margin = float(solution.blocks[_MARGIN][0, 0].real)
        if solution.status == "max-iters":
            logger.warning(
                "feasibility solve at t=%.6g hit the iteration cap; "
                "treated as infeasible",
                t,
            )
        feasible = (
            solution.status == "optimal"
            and margin >= 1.0 - 10.0 * self.sdp_tol
        )
        logger.debug(
            "t=%.6g: margin %.6f (%s)", t, margin, solution.status
        )
        return feasible, solution, problem


def _worst_row(problem, solution):
    lo, hi = problem.bounds()
    _, rows = problem.evaluate(solution.blocks)
    margin = float(solution.blocks[_MARGIN][0, 0].real)
    worst, worst_label = np.inf, None
    for i, con in enumerate(problem.constraints):
        s_coef = con.coefficients[_MARGIN]
        if s_coef is None:
            continue
        scale = -float(s_coef[0, 0].real)
        # g(Z) - rhs, relative to the row scale
        slack = (rows[i] + scale * margin - lo[i] - scale) / scale
        if slack < worst:
            worst, worst_label = slack, con.label
    return worst_label


def max_min_bisection(
    q,
    config,
    noise,
    t_lo=None,
    t_hi=None,
    bisect_tol=DEFAULT_BISECT_TOL,
    sdp_tol=sdp.DEFAULT_TOL,
    max_iter=sdp.DEFAULT_MAX_ITER,
):
    """
    Largest common target SINR level supported by the relaxation.

    ``t_lo`` defaults to the minimum level SINR of the reference state and
    ``t_hi`` is found by doubling. Bisection stops once the bracket is
    within ``bisect_tol`` relative to its lower end.

    Returns
    -------
    SdrIterate
        Blocks at the last feasible level (Z_t rescaled to its physical
        units), ``t`` the feasible level and ``t_upper`` the smallest level
        found infeasible.
    """
    n = q.channels.n_elements
    p_a = config.amplification_factor
    if p_a ** 2 < n * (1 - 1e-12):
        raise InfeasibleScenarioError(
            f"amplification budget below unit-gain floor "
            f"(P_A^2 = {p_a ** 2:g} < N = {n})"
        )
    if not bisect_tol > 0:
        raise ValueError(f"bisect_tol must be positive, got {bisect_tol}")
    oracle = _Oracle(q, config, noise, sdp_tol, max_iter)

    if t_lo is None:
        levels = target_level_sinrs(
            config, q.channels, q.state, q.R_x, noise
        )
        t_lo = float(np.min(levels))
    feasible, best, problem = oracle(t_lo)
    if not feasible and t_lo > 0:
        logger.info("reference level %.6g not certified, trying 0", t_lo)
        t_lo = 0.0
        feasible, best, problem = oracle(t_lo)
    if not feasible:
        label = _worst_row(problem, best)
        raise InfeasibleScenarioError(
            f"no feasible surface configuration at the SINR floor; "
            f"most violated constraint: {label}"
        )
    trajectory = [t_lo]

    if t_hi is None:
        t_hi = 2.0 * t_lo if t_lo > 0 else 1e-9
        for _ in range(_MAX_DOUBLINGS):
            feasible, solution, _ = oracle(t_hi)
            trajectory.append(t_hi)
            if not feasible:
                break
            t_lo, best = t_hi, solution
            t_hi *= 2.0
        else:
            raise InfeasibleScenarioError(
                f"SINR level unbounded above ({t_hi:g}); check the scenario"
            )
    bracket_solves = oracle.solves

    for _ in range(_MAX_BISECTIONS):
        if t_hi - t_lo <= bisect_tol * max(t_lo, 1e-300):
            break
        t_mid = 0.5 * (t_lo + t_hi)
        feasible, solution, _ = oracle(t_mid)
        trajectory.append(t_mid)
        if feasible:
            t_lo, best = t_mid, solution
        else:
            t_hi = t_mid
        logger.info("bisection bracket [%.6g, %.6g]", t_lo, t_hi)

    return SdrIterate(
        Z_t=p_a ** 2 * best.blocks[_ZT],
        Z_r=best.blocks[_ZR],
        t=t_lo,
        t_upper=t_hi,
        status=best.status,
        bracket_solves=bracket_solves,
        sdp_solves=oracle.solves - bracket_solves,
        solver_iterations=oracle.iterations,
        trajectory=tuple(trajectory),
    )


class OptimizationResult(NamedTuple):
    state: StarRisState
    W: np.ndarray
    history: List[SdrIterate]


def _min_level(config, channels, state, W, noise):
    R_x = W @ W.conj().T
    levels = target_level_sinrs(config, channels, state, R_x, noise)
    return float(np.min(levels))


def _users_meet_threshold(config, channels, state, W, noise):
    r_th = config.comm_sinr_threshold_linear
    return all(
        sinr_user_T(
            k, W, channels, state, noise, p_a=config.amplification_factor
        )
        >= r_th * (1 - 1e-6)
        for k, side in enumerate(channels.user_sides)
        if side == "T"
    )


def _side_r_user_check(config, channels, W, noise):
    ok = []
    for k, side in enumerate(channels.user_sides):
        if side != "R":
            continue
        sinr = sinr_user_R_approx(k, W, channels, noise)
        ok.append(sinr >= config.comm_sinr_threshold_linear)
        if not ok[-1]:
            logger.warning(
                "Side-R user %d misses the SINR threshold (%.3g)", k, sinr
            )
    return tuple(ok)


def _recover(iterate, config, channels, W, noise, randomize, rng):
    p_a = config.amplification_factor
    rec_t = sdp.rank_one_recovery(iterate.Z_t)
    rec_r = sdp.rank_one_recovery(iterate.Z_r)
    state = project_feasible(rec_t.vector, rec_r.vector, p_a)
    if randomize:

        def project(z_t):
            return project_feasible(z_t, rec_r.vector, p_a)

        def objective(candidate):
            return _min_level(config, channels, candidate, W, noise)

        drawn, value = sdp.gaussian_randomization(
            iterate.Z_t, objective, project, rng
        )
        if value > objective(state):
            state = drawn
    return replace(
        iterate,
        state=state,
        achieved=_min_level(config, channels, state, W, noise),
        defect_t=rec_t.defect,
        defect_r=rec_r.defect,
    )


def optimize_star_ris(
    config,
    scenario,
    channels,
    rounds=DEFAULT_ROUNDS,
    noise=None,
    bisect_tol=DEFAULT_BISECT_TOL,
    sdp_tol=sdp.DEFAULT_TOL,
    max_iter=sdp.DEFAULT_MAX_ITER,
    randomize=False,
    rng=None,
):
    """
    Alternates beamforming and surface design for ``rounds`` rounds.

    The uniform full-budget state is both the starting point and a
    candidate: the returned state is the candidate with the best minimum
    target level SINR under its own matched beamformers, preferring
    candidates that keep every Side-T user above the threshold.

    Returns
    -------
    OptimizationResult
        ``(state, W, history)`` with one ``SdrIterate`` per round.
    """
    if rounds < 0:
        raise ValueError(f"rounds must be nonnegative, got {rounds}")
    if noise is None:
        noise = NoiseModel.from_config(config)
    if randomize and rng is None:
        rng = np.random.default_rng(0)
    n = config.n_elements
    p_a = config.amplification_factor
    if p_a ** 2 < n * (1 - 1e-12):
        raise InfeasibleScenarioError(
            f"amplification budget below unit-gain floor "
            f"(P_A^2 = {p_a ** 2:g} < N = {n})"
        )

    def score(candidate):
        W = beamformers_for_state(config, channels, candidate)
        meets = _users_meet_threshold(config, channels, candidate, W, noise)
        return (meets, _min_level(config, channels, candidate, W, noise)), W

    state = StarRisState.uniform(n, p_a)
    best_key, best_W = score(state)
    best_state = state
    history = []
    for r in range(rounds):
        W = beamformers_for_state(config, channels, state)
        q = assemble_q_matrices(channels, state, W)
        iterate = max_min_bisection(
            q,
            config,
            noise,
            bisect_tol=bisect_tol,
            sdp_tol=sdp_tol,
            max_iter=max_iter,
        )
        iterate = _recover(iterate, config, channels, W, noise, randomize, rng)
        iterate = replace(
            iterate,
            side_r_users_ok=_side_r_user_check(config, channels, W, noise),
        )
        history.append(iterate)
        logger.info(
            "round %d: relaxed %.6g, achieved %.6g, defects %.3g / %.3g",
            r,
            iterate.t,
            iterate.achieved,
            iterate.defect_t,
            iterate.defect_r,
        )
        state = iterate.state
        key, W_state = score(state)
        if key > best_key:
            best_key, best_W, best_state = key, W_state, state
    return OptimizationResult(best_state, best_W, history)


def hybrid_ris_power(config, channels, state, W, noise=None):
    """P_RIS of ``state`` under ``W`` with the thermal noise of ``config``."""
    if noise is None:
        noise = NoiseModel.from_config(config)
    return ris_power(
        state,
        channels.G,
        W @ W.conj().T,
        side_t_echo_kernels(channels),
        noise.thermal_v1,
        noise.thermal_v2,
    )


def passive_config(config, p_ris):
    """
    Total-power-matched passive reference: unit transmissive amplitudes
    and the hybrid amplifier power moved to the BS.
    """
    if p_ris < 0:
        raise ValueError(f"P_RIS must be nonnegative, got {p_ris}")
    return config.with_overrides(
        amplification_scale=1.0,
        bs_power_watts=config.bs_power_watts + p_ris,
    )


def passive_baseline(
    config, scenario, channels, p_ris=None, noise_regime="auto", **options
):
    """
    Optimizes the passive reference for one channel draw.

    When ``p_ris`` is not given the hybrid design is run first and its
    P_RIS is used. Returns the passive configuration with its
    ``OptimizationResult``.
    """
    if p_ris is None:
        noise = NoiseModel.from_config(config, noise_regime)
        hybrid = optimize_star_ris(
            config, scenario, channels, noise=noise, **options
        )
        p_ris = hybrid_ris_power(
            config, channels, hybrid.state, hybrid.W, noise
        )
    passive = passive_config(config, p_ris)
    noise = NoiseModel.from_config(passive, noise_regime)
    return passive, optimize_star_ris(
        passive, scenario, channels, noise=noise, **options
    )
