# Copyright (c) 2020, ISACLAB DEVELOPERS.

import math

import numpy as np
import pytest

from isaclab.config import (
    DEFAULT_SCENARIO,
    db_to_linear,
    dbm_to_watts,
    linear_to_db,
    load_default,
    load_scenario,
    load_scenario_file,
    watts_to_dbm,
)
from isaclab.isaclab import ConfigError

with open(DEFAULT_SCENARIO) as f:
    _default_text = f.read()


def scenario_tester(replacements, message):
    text = _default_text
    for old, new in replacements:
        assert old in text
        text = text.replace(old, new)
    with pytest.raises(ConfigError) as excinfo:
        load_scenario(text)
    assert message in str(excinfo.value)
    assert excinfo.value.errcode == 1


def test_default_scenario_values():
    config, scenario = load_default()
    assert config.n_elements == 36
    assert config.bs_antennas == 8
    assert config.ris_grid == (6, 6)
    assert config.amplification_factor == pytest.approx(120.0)
    assert config.bs_power_watts == pytest.approx(10.0)
    assert config.noise_power_watts == pytest.approx(1e-11)
    assert config.reference_path_loss_linear == pytest.approx(1e-3)
    assert config.rician_factor_linear == pytest.approx(10 ** 0.3)
    assert config.chip_length == 10
    assert config.eta_bs == pytest.approx(math.pi)
    assert config.wavelength_m == pytest.approx(299792458.0 / 3.315e9)
    assert [u.name for u in scenario.users] == ["U_R", "U_T"]
    assert [t.name for t in scenario.targets] == ["O_R", "O_T"]
    assert (scenario.k_r, scenario.k_t) == (1, 1)
    assert (scenario.m_r, scenario.m_t) == (1, 1)
    assert scenario.users_on("R") == [0]
    assert scenario.targets_on("T") == [1]
    assert scenario.targets[1].aod_bs is None
    assert "bandwidth_hz" in config.defaulted
    assert "comm_sinr_threshold_db" in config.defaulted
    assert "chirp_length" not in config.defaulted


@pytest.mark.parametrize("x", [-30.0, 0.0, 3.0, 20.0])
def test_unit_helpers(x):
    assert linear_to_db(db_to_linear(x)) == pytest.approx(x)
    assert watts_to_dbm(dbm_to_watts(x)) == pytest.approx(x)
    assert dbm_to_watts(x) == pytest.approx(db_to_linear(x) * 1e-3)


@pytest.mark.parametrize(
    "replacements, message",
    [
        (
            [("bs_antennas = 8", "bs_antennas = 8\nbeam_count = 2")],
            "beam_count",
        ),
        ([("bs_antennas = 8", "bs_antennas = 0")], "bs_antennas"),
        ([("ris_grid = [6, 6]", "ris_grid = [6]")], "ris_grid"),
        ([("coherence_length = 100", "coherence_length = 300")], "chirp"),
        (
            [
                (
                    "rician_factor_db = 3.0",
                    "rician_factor_db = 3.0\nrician_factor_linear = 2.0",
                )
            ],
            "rician_factor_db",
        ),
        ([("bs_power_db = 10.0\n", "")], "bs_power_db"),
        ([("noise_power_dbm = -80.0\n", "")], "noise_power_dbm"),
        (
            [
                (
                    'side = "T"\ndistance_ris_m = 18.0',
                    'side = "T"\ndistance_bs_m = 3.0\ndistance_ris_m = 18.0',
                )
            ],
            "distance_bs_m",
        ),
        ([('side = "T"\ndistance_ris_m = 18.0', 'side = "X"\n')], "side"),
        ([("distance_ris_m = 17.0", "distance_ris_m = -1.0")], "distance"),
        ([("aod_ris_deg = [40.0, 108.0]", "aod_ris_deg = [40.0]")], "aod"),
        ([("[link]", "[link]\nheight_m = 3.0")], "height_m"),
        ([("[system]", "[extra]\nx = 1\n\n[system]")], "extra"),
        ([("amplification_scale = 20.0", "amplification_scale = -1.0")], ""),
    ],
)
def test_invalid_scenarios(replacements, message):
    scenario_tester(replacements, message)


def test_linear_rician_factor():
    text = _default_text.replace(
        "rician_factor_db = 3.0", "rician_factor_linear = 2.0"
    )
    config, _ = load_scenario(text)
    assert config.rician_factor_linear == pytest.approx(2.0)


def test_unparsable_document():
    with pytest.raises(ConfigError):
        load_scenario("[system\nbs_antennas = ")


def test_missing_file():
    with pytest.raises(ConfigError) as excinfo:
        load_scenario_file("/nonexistent/scenario.toml")
    assert excinfo.value.errcode == 1


def test_absolute_amplification_factor():
    text = _default_text.replace(
        "amplification_scale = 20.0", "amplification_factor = 60.0"
    )
    config, _ = load_scenario(text)
    assert config.amplification_scale == pytest.approx(10.0)
    assert config.amplification_factor == pytest.approx(60.0)


@pytest.mark.parametrize("n", [4, 9, 16, 49])
def test_with_overrides_square_grid(n):
    config, _ = load_default()
    changed = config.with_overrides(n_elements=n, bs_power_db=20.0)
    side = int(math.isqrt(n))
    assert changed.ris_grid == (side, side)
    assert changed.bs_power_watts == pytest.approx(100.0)
    assert changed.amplification_factor == pytest.approx(20.0 * side)
    # the original is untouched
    assert config.n_elements == 36


def test_with_overrides_rejects_non_square():
    config, _ = load_default()
    with pytest.raises(ConfigError):
        config.with_overrides(n_elements=10)


def test_link_defaults_recorded():
    start = _default_text.index("[link]")
    end = _default_text.index("[[users]]")
    config, _ = load_scenario(_default_text[:start] + _default_text[end:])
    assert "link.distance_m" in config.defaulted
    assert config.bs_ris_distance_m == pytest.approx(5.0)
    np.testing.assert_allclose(
        config.ris_aoa, np.radians([30.0, 100.0]), rtol=1e-12
    )
