# Copyright (c) 2020, ISACLAB DEVELOPERS.

import math

import numpy as np
import pytest

from isaclab.channels import (
    complex_normal,
    draw_channels,
    make_rng,
    rician_sample,
)
from isaclab.config import DEFAULT_SCENARIO, load_default, load_scenario
from isaclab.link_metrics import (
    NoiseModel,
    echo_kernel,
    evaluate_metrics,
    lifted_echo_kernel,
    noise_variance_approx,
    select_noise_regime,
    side_r_composite,
    side_r_level,
    side_t_echo_channel,
    side_t_level,
    sinr_target_R_bound,
    sinr_target_R_exact,
    sinr_target_R_level,
    sinr_target_T_bound,
    sinr_target_T_exact,
    sinr_target_T_level,
    sinr_user_R_approx,
    sinr_user_R_exact,
    sinr_user_T,
    sinr_user_T_norm,
    synthesize_received,
    target_bound_sinrs,
    target_level_sinrs,
    user_kernel,
    user_noise_variance,
)
from isaclab.star_ris import StarRisState, project_feasible
from isaclab.waveforms import assemble_frame, beamformers_for_state

_seeds = list(range(8))


def random_instance(seed, n=4, scenario_text=None):
    if scenario_text is None:
        config, scenario = load_default()
    else:
        config, scenario = load_scenario(scenario_text)
    config = config.with_overrides(n_elements=n)
    rng = make_rng(seed)
    channels = draw_channels(config, scenario, rng)
    p_a = config.amplification_factor
    state = project_feasible(
        p_a / math.sqrt(n) * complex_normal(rng, n),
        complex_normal(rng, n),
        p_a,
    )
    W = beamformers_for_state(config, channels, state)
    noise = NoiseModel.from_config(config, "low")
    return config, scenario, channels, state, W, noise


def single_target_text():
    with open(DEFAULT_SCENARIO) as f:
        text = f.read()
    start = text.index('[[targets]]\nname = "O_R"')
    end = text.index('[[targets]]\nname = "O_T"')
    return text[:start] + text[end:]


@pytest.mark.parametrize("seed", _seeds)
def test_lifted_echo_kernel(seed):
    rng = make_rng(seed)
    b = np.exp(1j * rng.uniform(0, 2 * np.pi, 5))
    G = complex_normal(rng, (5, 3))
    z = complex_normal(rng, 5)
    direct = np.linalg.norm((b * z) @ G) ** 2
    M = lifted_echo_kernel(b, G)
    np.testing.assert_allclose(M, M.conj().T, atol=1e-12)
    assert (z.conj() @ M @ z).real == pytest.approx(direct, rel=1e-9)
    Z = np.outer(z, z.conj())
    assert np.trace(M @ Z).real == pytest.approx(direct, rel=1e-9)


def test_lifted_echo_kernel_identity_channel():
    M = lifted_echo_kernel(np.ones(4), np.eye(4))
    np.testing.assert_allclose(M, np.eye(4))
    np.testing.assert_allclose(echo_kernel(np.ones(3)), np.ones((3, 3)))


@pytest.mark.parametrize("seed", _seeds)
def test_user_kernel(seed):
    rng = make_rng(seed)
    h = complex_normal(rng, 4)
    G = complex_normal(rng, (4, 3))
    w = complex_normal(rng, 3)
    z = complex_normal(rng, 4)
    direct = abs((h * z) @ G @ w) ** 2
    V = user_kernel(h, G, w)
    Z = np.outer(z, z.conj())
    assert np.trace(V @ Z).real == pytest.approx(direct, rel=1e-9)


@pytest.mark.parametrize("seed", _seeds)
def test_user_T_trace_matches_norm(seed):
    config, _, ch, state, W, noise = random_instance(seed)
    noise = NoiseModel.from_config(config, "high")
    trace = sinr_user_T(1, W, ch, state, noise)
    norm = sinr_user_T_norm(1, W, ch, state, noise)
    assert trace == pytest.approx(norm, rel=1e-10)


@pytest.mark.parametrize("seed", _seeds)
def test_echo_levels_dominate_exact_powers(seed):
    config, _, ch, state, W, _ = random_instance(seed)
    R = W @ W.conj().T
    p = np.trace(R).real
    lifted = state.lifted()
    p_a = config.amplification_factor

    u = side_t_echo_channel(1, ch, state)
    exact_t = ch.beta_ris[1] ** 2 * np.vdot(u, u).real * (
        u @ R @ u.conj()
    ).real
    assert side_t_level(1, ch, lifted.Z_t, p_a, p) >= exact_t

    f = side_r_composite(0, ch, state)
    exact_r = np.vdot(f, f).real * (f @ R @ f.conj()).real
    assert side_r_level(0, ch, lifted.Z_r, p) >= exact_r


@pytest.mark.parametrize("seed", _seeds)
def test_single_target_bound_dominates_exact(seed):
    config, _, ch, state, W, noise = random_instance(
        seed, scenario_text=single_target_text()
    )
    R = W @ W.conj().T
    exact = sinr_target_T_exact(0, R, ch, state, noise)
    bound = sinr_target_T_bound(
        0, R, ch, state, noise, p_a=config.amplification_factor
    )
    assert bound >= exact > 0


def test_target_sinrs_positive_and_sided():
    config, _, ch, state, W, noise = random_instance(0)
    R = W @ W.conj().T
    assert sinr_target_R_exact(0, R, ch, state, noise) > 0
    assert sinr_target_R_bound(0, R, ch, state, noise) > 0
    with pytest.raises(ValueError):
        sinr_target_T_exact(0, R, ch, state, noise)
    with pytest.raises(ValueError):
        sinr_target_R_bound(1, R, ch, state, noise)
    with pytest.raises(ValueError):
        sinr_target_T_bound(1, np.eye(3), ch, state, noise)


def test_user_R_forms():
    config, _, ch, state, W, noise = random_instance(1)
    approx = sinr_user_R_approx(0, W, ch, noise)
    exact = sinr_user_R_exact(0, W, ch, state, noise)
    assert approx > 0 and exact > 0
    with pytest.raises(ValueError):
        sinr_user_R_approx(1, W, ch, noise)


def test_user_noise_variance():
    config, _, ch, state, W, _ = random_instance(2)
    noise = NoiseModel(1e-11, 1e-11, 1e-11)
    assert user_noise_variance(0, ch, noise, 40.0) == 1e-11
    small = user_noise_variance(1, ch, noise, 10.0)
    large = user_noise_variance(1, ch, noise, 40.0)
    assert 1e-11 < small < large


@pytest.mark.parametrize(
    "n, scale, regime",
    [(36, 20.0, "low"), (36, 25.0, "low"), (36, 30.0, "high"),
     (49, 25.0, "low"), (64, 10.0, "high")],
)
def test_select_noise_regime(n, scale, regime):
    config, _ = load_default()
    config = config.with_overrides(n_elements=n, amplification_scale=scale)
    assert select_noise_regime(config) == regime
    assert NoiseModel.from_config(config).regime == regime


def test_noise_model_rejects():
    with pytest.raises(ValueError):
        NoiseModel(1.0, 1.0, 1.0, regime="medium")
    with pytest.raises(ValueError):
        NoiseModel(-1.0, 1.0, 1.0)


def test_noise_regimes():
    config, _, ch, state, W, _ = random_instance(3)
    noise = NoiseModel(1e-11, 1e-11, 1e-11)
    low = noise_variance_approx("low", state, ch, noise, m=1)
    assert low == 1e-11
    high = noise_variance_approx("high", state, ch, noise, m=1)
    twice = noise_variance_approx(
        "high", state, ch, NoiseModel(1e-11, 2e-11, 1e-11), m=1
    )
    assert high > 0
    assert twice == pytest.approx(2 * high)
    exact = noise_variance_approx(
        "exact", state, ch, noise, m=1, rng=make_rng(0), samples=2000
    )
    assert exact > 1e-11
    with pytest.raises(ValueError):
        noise_variance_approx("loud", state, ch, noise)


def test_synthesize_received_terms():
    config, scenario, ch, state, W, _ = random_instance(4)
    frame = assemble_frame(W, 2, config, make_rng(1))
    noise = NoiseModel(1e-11, 1e-11, 1e-11)
    for kind, index in [
        ("user_T", 1),
        ("user_R", 0),
        ("echo_T", 1),
        ("echo_R", 0),
    ]:
        block = synthesize_received(
            kind, index, frame, ch, state, noise, make_rng(2)
        )
        np.testing.assert_allclose(
            block.total, sum(block.terms.values()), atol=1e-18
        )
        assert "desired" in block.terms and "static" in block.terms
    with pytest.raises(ValueError):
        synthesize_received("echo_X", 0, frame, ch, state, noise, None)
    with pytest.raises(ValueError):
        synthesize_received("user_T", 0, frame, ch, state, noise, None)


def test_evaluate_metrics():
    config, scenario, ch, state, W, _ = random_instance(6)
    report = evaluate_metrics(config, scenario, ch, state, W)
    assert report.user_names == ("U_R", "U_T")
    assert report.target_names == ("O_R", "O_T")
    assert report.user_sinr.shape == (2,)
    assert report.target_sinr_bound.shape == (2,)
    assert report.target_sinr_exact.shape == (2,)
    assert report.regime == "low"
    assert report.p_ris > 0
    assert report.min_target_sinr == pytest.approx(
        np.min(report.target_sinr_bound)
    )
    np.testing.assert_allclose(report.target_noise_var, 1e-11)


def test_bounds_dominate_exact_with_interference():
    for seed in range(200):
        config, _, ch, state, W, noise = random_instance(seed)
        R = W @ W.conj().T
        p_a = config.amplification_factor
        bound_t = sinr_target_T_bound(1, R, ch, state, noise, p_a=p_a)
        exact_t = sinr_target_T_exact(1, R, ch, state, noise)
        assert bound_t >= exact_t > 0, seed
        bound_r = sinr_target_R_bound(0, R, ch, state, noise)
        exact_r = sinr_target_R_exact(0, R, ch, state, noise)
        assert bound_r >= exact_r > 0, seed


@pytest.mark.parametrize("seed", _seeds)
def test_level_ratios_below_bounds(seed):
    config, _, ch, state, W, noise = random_instance(seed, n=9)
    R = W @ W.conj().T
    levels = target_level_sinrs(config, ch, state, R, noise)
    bounds = target_bound_sinrs(config, ch, state, R, noise)
    assert np.all(levels > 0)
    assert np.all(levels <= bounds * (1 + 1e-12))
    p_a = config.amplification_factor
    r_level = sinr_target_R_level(0, R, ch, state, noise, p_a=p_a)
    t_level = sinr_target_T_level(1, R, ch, state, noise, p_a=p_a)
    assert list(levels) == pytest.approx([r_level, t_level])


def test_user_noise_variance_formula():
    config, _, ch, _, _, _ = random_instance(5)
    noise = NoiseModel(2e-11, 3e-11, 5e-11)
    p_a = 12.0
    h_los = ch.h_los[1]
    kappa = ch.kappa
    spread = kappa / (1 + kappa) * np.sum(np.abs(h_los) ** 2) / 4 + 1 / (
        1 + kappa
    )
    expected = 2e-11 + 3e-11 * p_a ** 2 * ch.alpha_ris_user[1] * spread
    assert user_noise_variance(1, ch, noise, p_a) == pytest.approx(expected)


def test_user_noise_variance_averages_channel_draws():
    # amplifier noise at a Side-T user is h diag(z_t) v1
    config, _, ch, _, _, _ = random_instance(6)
    noise = NoiseModel(1e-11, 1e-11, 1e-11)
    p_a, draws = 8.0, 40000
    state = StarRisState.uniform(4, p_a)
    rng = make_rng(12)
    los = np.broadcast_to(ch.h_los[1], (draws, 4))
    h = rician_sample(los, ch.alpha_ris_user[1], ch.kappa, rng)
    thermal = noise.thermal_v1 * np.sum(
        np.abs(h) ** 2 * np.abs(state.z_t) ** 2, axis=1
    )
    sampled = noise.static_var + np.mean(thermal)
    assert user_noise_variance(1, ch, noise, p_a) == pytest.approx(
        sampled, rel=0.03
    )


def test_user_thermal_term_variance():
    config, _, ch, state, W, _ = random_instance(7)
    frame = assemble_frame(W, 2, config, make_rng(3), chirp_length=20000)
    noise = NoiseModel(1e-11, 4e-11, 1e-11)
    block = synthesize_received(
        "user_T", 1, frame, ch, state, noise, make_rng(4)
    )
    expected = 4e-11 * np.sum(np.abs(ch.h_ris[1] * state.z_t) ** 2)
    assert np.mean(np.abs(block.terms["thermal"]) ** 2) == pytest.approx(
        expected, rel=0.08
    )
    assert np.mean(np.abs(block.terms["static"]) ** 2) == pytest.approx(
        1e-11, rel=0.08
    )


def test_synthesize_received_noiseless():
    config, _, ch, state, W, _ = random_instance(8)
    frame = assemble_frame(W, 2, config, make_rng(5))
    quiet = NoiseModel(0.0, 0.0, 0.0)
    S = np.vstack([frame.comm_symbols, frame.sense_symbols])

    user = synthesize_received("user_T", 1, frame, ch, state, quiet, None)
    beams = (ch.h_ris[1] * state.z_t) @ ch.G @ W
    np.testing.assert_allclose(user.total, beams @ S, atol=1e-18)
    np.testing.assert_allclose(user.terms["desired"], beams[1] * S[1])
    assert not np.any(user.terms["thermal"])

    echo = synthesize_received("echo_T", 1, frame, ch, state, quiet, None)
    u = (ch.b_target[1] * state.z_t) @ ch.G
    own = ch.beta_ris[1] * np.outer(u.conj(), u @ W @ S)
    np.testing.assert_allclose(echo.terms["desired"], own, atol=1e-18)
    np.testing.assert_allclose(
        echo.total, own + echo.terms["interference"], atol=1e-18
    )


def test_exact_regime_close_to_static_for_passive_surface():
    config, _, ch, _, _, _ = random_instance(9)
    noise = NoiseModel.from_config(config, "exact")
    state = StarRisState.passive(4)
    exact = noise_variance_approx(
        "exact", state, ch, noise, m=1, rng=make_rng(1), samples=10000
    )
    low = noise_variance_approx("low", state, ch, noise, m=1)
    assert exact == pytest.approx(low, rel=0.1)


@pytest.mark.parametrize("theta", [0.3, 2.0, -1.1])
def test_global_transmissive_phase(theta):
    config, _, ch, state, W, noise = random_instance(10)
    turned = StarRisState(z_t=state.z_t * np.exp(1j * theta), z_r=state.z_r)
    R = W @ W.conj().T
    p_a = config.amplification_factor
    assert sinr_user_T(1, W, ch, state, noise) == pytest.approx(
        sinr_user_T(1, W, ch, turned, noise), rel=1e-10
    )
    assert sinr_target_T_exact(1, R, ch, state, noise) == pytest.approx(
        sinr_target_T_exact(1, R, ch, turned, noise), rel=1e-10
    )
    assert sinr_target_T_bound(
        1, R, ch, state, noise, p_a=p_a
    ) == pytest.approx(
        sinr_target_T_bound(1, R, ch, turned, noise, p_a=p_a), rel=1e-10
    )
    assert sinr_target_R_bound(0, R, ch, state, noise) == pytest.approx(
        sinr_target_R_bound(0, R, ch, turned, noise), rel=1e-10
    )


def twin_target_text():
    with open(DEFAULT_SCENARIO) as f:
        text = f.read()
    start = text.index('[[targets]]\nname = "O_R"')
    end = text.index('[[targets]]\nname = "O_T"')
    twin = text[end:].replace('name = "O_T"', 'name = "O_T2"')
    return text[:start] + text[end:] + "\n" + twin


def test_twin_targets_share_sinr():
    config, scenario, ch, state, W, noise = random_instance(
        11, scenario_text=twin_target_text()
    )
    assert ch.target_sides == ("T", "T")
    R = W @ W.conj().T
    p_a = config.amplification_factor
    exact = [sinr_target_T_exact(m, R, ch, state, noise) for m in (0, 1)]
    bound = [
        sinr_target_T_bound(m, R, ch, state, noise, p_a=p_a) for m in (0, 1)
    ]
    assert exact[0] == pytest.approx(exact[1], rel=1e-10)
    assert bound[0] == pytest.approx(bound[1], rel=1e-10)
