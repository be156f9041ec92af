# Copyright (c) 2020, ISACLAB DEVELOPERS.
"""
Scenario documents and system parameters.

A scenario is a TOML document with a ``[system]`` table, an optional
``[link]`` table for the BS to STAR-RIS hop and ``[[users]]`` /
``[[targets]]`` arrays. Quantities given in dB or dBm are converted to
linear units here and nowhere else.
"""
import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import toml

from isaclab.arrays import AnglePair
from isaclab.isaclab import ConfigError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299792458.0
SIDES = ("T", "R")

DEFAULT_SCENARIO = os.path.join(
    os.path.dirname(__file__), "data", "two_sided.toml"
)

_SYSTEM_REQUIRED = (
    "carrier_frequency_hz",
    "bs_antennas",
    "ris_grid",
    "noise_power_dbm",
    "coherence_length",
    "reference_path_loss_db",
    "path_loss_exponent",
    "radar_cross_section_m2",
)
_SYSTEM_ONE_OF = (
    ("rician_factor_db", "rician_factor_linear"),
    ("bs_power_db", "bs_power_watts"),
)
_SYSTEM_DEFAULTS = {
    "chirp_length": 1000,
    "bandwidth_hz": 100e6,
    "amplification_scale": 20.0,
    "comm_sinr_threshold_db": -10.0,
    "element_spacing_bs": 0.5,
    "element_spacing_ris": 0.5,
}
_SYSTEM_KEYS = (
    set(_SYSTEM_REQUIRED)
    | {k for group in _SYSTEM_ONE_OF for k in group}
    | set(_SYSTEM_DEFAULTS)
    | {"amplification_factor"}
)
_LINK_DEFAULTS = {
    "distance_m": 5.0,
    "aod_bs_deg": [60.0, 90.0],
    "aoa_ris_deg": [30.0, 100.0],
}
_ENTITY_KEYS = {
    "name",
    "side",
    "distance_bs_m",
    "distance_ris_m",
    "aod_bs_deg",
    "aod_ris_deg",
}


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def dbm_to_watts(x_dbm):
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watts_to_dbm(x_watts):
    return 10.0 * np.log10(x_watts) + 30.0


@dataclass(frozen=True)
class SystemConfig:
    carrier_frequency_hz: float
    bs_antennas: int
    ris_grid: Tuple[int, int]
    rician_factor_linear: float
    noise_power_watts: float
    coherence_length: int
    chirp_length: int
    bandwidth_hz: float
    reference_path_loss_linear: float
    path_loss_exponent: float
    radar_cross_section_m2: float
    bs_power_watts: float
    amplification_scale: float
    comm_sinr_threshold_linear: float
    element_spacings: Tuple[float, float] = (0.5, 0.5)
    bs_ris_distance_m: float = 5.0
    bs_ris_aod: AnglePair = AnglePair(0.0, 0.0)
    ris_aoa: AnglePair = AnglePair(0.0, 0.0)
    defaulted: Tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        _validate_system(self)

    @property
    def n_elements(self):
        return self.ris_grid[0] * self.ris_grid[1]

    @property
    def amplification_factor(self):
        """P_A = sqrt(sum |xi_t,n|^2), stored as a multiple of sqrt(N)."""
        return self.amplification_scale * math.sqrt(self.n_elements)

    @cached_property
    def wavelength_m(self):
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def eta_bs(self):
        # 2*pi*d/lambda with d expressed in wavelengths
        return 2.0 * math.pi * self.element_spacings[0]

    @property
    def eta_ris(self):
        return 2.0 * math.pi * self.element_spacings[1]

    @property
    def chip_length(self):
        return self.chirp_length // self.coherence_length

    def with_overrides(
        self,
        amplification_scale=None,
        bs_power_db=None,
        bs_power_watts=None,
        n_elements=None,
        ris_grid=None,
    ):
        """
        Returns a copy with sweep axes replaced. ``n_elements`` must be a
        perfect square and maps onto a square grid.
        """
        changes = {}
        if amplification_scale is not None:
            changes["amplification_scale"] = float(amplification_scale)
        if bs_power_db is not None:
            changes["bs_power_watts"] = db_to_linear(float(bs_power_db))
        if bs_power_watts is not None:
            changes["bs_power_watts"] = float(bs_power_watts)
        if n_elements is not None:
            side = math.isqrt(int(n_elements))
            if side * side != int(n_elements):
                raise ConfigError(
                    f"n_elements must be a perfect square, got {n_elements}"
                )
            changes["ris_grid"] = (side, side)
        if ris_grid is not None:
            changes["ris_grid"] = tuple(int(n) for n in ris_grid)
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class EntityPlacement:
    name: str
    side: str
    distance_ris_m: float
    aod_ris: AnglePair
    distance_bs_m: Optional[float] = None
    aod_bs: Optional[AnglePair] = None


@dataclass(frozen=True)
class Scenario:
    users: Tuple[EntityPlacement, ...]
    targets: Tuple[EntityPlacement, ...]

    def __post_init__(self):
        if len(self.users) < 1:
            raise ConfigError("users: at least one user is required")
        if len(self.targets) < 1:
            raise ConfigError("targets: at least one target is required")

    def _count(self, entities, side):
        return sum(1 for e in entities if e.side == side)

    @property
    def k_r(self):
        return self._count(self.users, "R")

    @property
    def k_t(self):
        return self._count(self.users, "T")

    @property
    def m_r(self):
        return self._count(self.targets, "R")

    @property
    def m_t(self):
        return self._count(self.targets, "T")

    def users_on(self, side):
        return [i for i, u in enumerate(self.users) if u.side == side]

    def targets_on(self, side):
        return [i for i, t in enumerate(self.targets) if t.side == side]


def _validate_system(cfg):
    positive = {
        "carrier_frequency_hz": cfg.carrier_frequency_hz,
        "noise_power": cfg.noise_power_watts,
        "bandwidth_hz": cfg.bandwidth_hz,
        "reference_path_loss": cfg.reference_path_loss_linear,
        "radar_cross_section_m2": cfg.radar_cross_section_m2,
        "bs_power": cfg.bs_power_watts,
        "amplification_scale": cfg.amplification_scale,
        "comm_sinr_threshold": cfg.comm_sinr_threshold_linear,
        "bs_ris_distance_m": cfg.bs_ris_distance_m,
        "element_spacing_bs": cfg.element_spacings[0],
        "element_spacing_ris": cfg.element_spacings[1],
    }
    for name, value in positive.items():
        if not (np.isfinite(value) and value > 0):
            raise ConfigError(f"{name} must be positive (got {value})")
    if cfg.rician_factor_linear < 0 or np.isnan(cfg.rician_factor_linear):
        raise ConfigError(
            f"rician_factor must be nonnegative "
            f"(got {cfg.rician_factor_linear})"
        )
    if cfg.path_loss_exponent < 0:
        raise ConfigError(
            f"path_loss_exponent must be nonnegative "
            f"(got {cfg.path_loss_exponent})"
        )
    _check_count("bs_antennas", cfg.bs_antennas)
    if len(cfg.ris_grid) != 2:
        raise ConfigError(f"ris_grid must be [n_x, n_y] (got {cfg.ris_grid})")
    for n in cfg.ris_grid:
        _check_count("ris_grid", n)
    _check_count("coherence_length", cfg.coherence_length)
    _check_count("chirp_length", cfg.chirp_length)
    if cfg.chirp_length % cfg.coherence_length:
        raise ConfigError(
            f"chirp_length ({cfg.chirp_length}) must be a multiple of "
            f"coherence_length ({cfg.coherence_length})"
        )


def _check_count(name, value):
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ConfigError(f"{name} must be a positive integer (got {value})")


def _number(table, key, where):
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number (got {value!r})")
    if not math.isfinite(value):
        raise ConfigError(f"{where}.{key} must be finite (got {value!r})")
    return float(value)


def _angles(table, key, where):
    value = table[key]
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(isinstance(x, (int, float)) for x in value)
        or not all(math.isfinite(x) for x in value)
    ):
        raise ConfigError(
            f"{where}.{key} must be [horizontal, vertical] degrees "
            f"(got {value!r})"
        )
    return AnglePair.from_degrees(*value)


def _reject_unknown(table, allowed, where):
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _parse_system(table, link):
    where = "system"
    _reject_unknown(table, _SYSTEM_KEYS, where)
    for key in _SYSTEM_REQUIRED:
        if key not in table:
            raise ConfigError(f"{where}.{key} is required")
    defaulted = []

    picked = {}
    for group in _SYSTEM_ONE_OF:
        present = [k for k in group if k in table]
        if len(present) != 1:
            raise ConfigError(
                f"{where}: exactly one of {' / '.join(group)} is required"
            )
        picked[group[0]] = present[0]

    def get(key):
        if key in table:
            return table[key]
        defaulted.append(key)
        return _SYSTEM_DEFAULTS[key]

    if picked["rician_factor_db"] == "rician_factor_db":
        kappa = db_to_linear(_number(table, "rician_factor_db", where))
    else:
        kappa = _number(table, "rician_factor_linear", where)

    if picked["bs_power_db"] == "bs_power_db":
        p_bs = db_to_linear(_number(table, "bs_power_db", where))
    else:
        p_bs = _number(table, "bs_power_watts", where)

    grid = table["ris_grid"]
    if not isinstance(grid, list) or len(grid) != 2:
        raise ConfigError(f"{where}.ris_grid must be [n_x, n_y] (got {grid})")
    n_elements = grid[0] * grid[1] if all(
        isinstance(n, int) for n in grid
    ) else 0

    if "amplification_factor" in table and "amplification_scale" in table:
        raise ConfigError(
            f"{where}: give amplification_factor or amplification_scale, "
            "not both"
        )
    if "amplification_factor" in table:
        p_a = _number(table, "amplification_factor", where)
        if n_elements < 1 or p_a <= 0:
            raise ConfigError(
                f"amplification_factor must be positive (got {p_a})"
            )
        scale = p_a / math.sqrt(n_elements)
    else:
        scale = float(get("amplification_scale"))

    for key in ("chirp_length", "bandwidth_hz", "comm_sinr_threshold_db"):
        if key in table:
            _number(table, key, where)
    spacing = (
        float(get("element_spacing_bs")),
        float(get("element_spacing_ris")),
    )

    return SystemConfig(
        carrier_frequency_hz=_number(table, "carrier_frequency_hz", where),
        bs_antennas=table["bs_antennas"],
        ris_grid=tuple(grid),
        rician_factor_linear=kappa,
        noise_power_watts=dbm_to_watts(
            _number(table, "noise_power_dbm", where)
        ),
        coherence_length=table["coherence_length"],
        chirp_length=get("chirp_length"),
        bandwidth_hz=float(get("bandwidth_hz")),
        reference_path_loss_linear=db_to_linear(
            -_number(table, "reference_path_loss_db", where)
        ),
        path_loss_exponent=_number(table, "path_loss_exponent", where),
        radar_cross_section_m2=_number(
            table, "radar_cross_section_m2", where
        ),
        bs_power_watts=p_bs,
        amplification_scale=scale,
        comm_sinr_threshold_linear=db_to_linear(
            float(get("comm_sinr_threshold_db"))
        ),
        element_spacings=spacing,
        bs_ris_distance_m=link["distance_m"],
        bs_ris_aod=link["aod_bs"],
        ris_aoa=link["aoa_ris"],
        defaulted=tuple(defaulted) + tuple(link["defaulted"]),
    )


def _parse_link(table):
    where = "link"
    _reject_unknown(table, _LINK_DEFAULTS, where)
    merged = dict(_LINK_DEFAULTS)
    merged.update(table)
    defaulted = [f"link.{k}" for k in _LINK_DEFAULTS if k not in table]
    return {
        "distance_m": _number(merged, "distance_m", where),
        "aod_bs": _angles(merged, "aod_bs_deg", where),
        "aoa_ris": _angles(merged, "aoa_ris_deg", where),
        "defaulted": defaulted,
    }


def _parse_entity(table, where, default_name):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a table")
    _reject_unknown(table, _ENTITY_KEYS, where)
    side = table.get("side")
    if side not in SIDES:
        raise ConfigError(f"{where}.side must be 'T' or 'R' (got {side!r})")
    for key in ("distance_ris_m", "aod_ris_deg"):
        if key not in table:
            raise ConfigError(f"{where}.{key} is required")
    bs_keys = [k for k in ("distance_bs_m", "aod_bs_deg") if k in table]
    if side == "T" and bs_keys:
        raise ConfigError(
            f"{where}: Side-T entities have no direct BS link "
            f"({', '.join(bs_keys)} not allowed)"
        )
    if side == "R" and len(bs_keys) != 2:
        raise ConfigError(
            f"{where}: Side-R entities require distance_bs_m and aod_bs_deg"
        )
    distances = {
        k: _number(table, k, where)
        for k in ("distance_ris_m", "distance_bs_m")
        if k in table
    }
    for key, value in distances.items():
        if value <= 0:
            raise ConfigError(f"{where}.{key} must be positive (got {value})")
    return EntityPlacement(
        name=str(table.get("name", default_name)),
        side=side,
        distance_ris_m=distances["distance_ris_m"],
        aod_ris=_angles(table, "aod_ris_deg", where),
        distance_bs_m=distances.get("distance_bs_m"),
        aod_bs=_angles(table, "aod_bs_deg", where) if side == "R" else None,
    )


def load_scenario(text):
    """
    Parses a scenario document.

    Parameters
    ----------
    text : str
        TOML document with ``[system]``, optional ``[link]``, ``[[users]]``
        and ``[[targets]]``.

    Returns
    -------
    (SystemConfig, Scenario)

    Raises
    ------
    ConfigError
        On parse failures, missing or unknown keys and invariant
        violations. The message names the offending field.
    """
    try:
        doc = toml.loads(text)
    except (toml.TomlDecodeError, TypeError) as e:
        raise ConfigError(f"cannot parse scenario document: {e}")

    _reject_unknown(doc, {"system", "link", "users", "targets"}, "document")
    if "system" not in doc:
        raise ConfigError("system section is required")
    link = _parse_link(doc.get("link", {}))
    config = _parse_system(doc["system"], link)

    users = tuple(
        _parse_entity(u, f"users[{i}]", f"user{i}")
        for i, u in enumerate(doc.get("users", []))
    )
    targets = tuple(
        _parse_entity(t, f"targets[{i}]", f"target{i}")
        for i, t in enumerate(doc.get("targets", []))
    )
    scenario = Scenario(users=users, targets=targets)
    if config.defaulted:
        logger.info("defaulted keys: %s", ", ".join(config.defaulted))
    return config, scenario


def load_scenario_file(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read scenario file {path}: {e}")
    return load_scenario(text)


def load_default():
    return load_scenario_file(DEFAULT_SCENARIO)
