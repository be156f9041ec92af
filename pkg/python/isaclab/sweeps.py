# Copyright (c) 2020, ISACLAB DEVELOPERS.
"""
Seeded Monte Carlo sweeps and single-scenario evaluation.
"""
import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from isaclab import sdp
from isaclab.channels import draw_channels, make_rng
from isaclab.config import linear_to_db, watts_to_dbm
from isaclab.isaclab import IsacLabError, UnidentifiableGeometryError
from isaclab.link_metrics import NoiseModel, evaluate_metrics
from isaclab.optimizer import (
    DEFAULT_BISECT_TOL,
    DEFAULT_ROUNDS,
    optimize_star_ris,
    passive_baseline,
)
from isaclab.sensing_crb import crb_for_target
from isaclab.star_ris import StarRisState

logger = logging.getLogger(__name__)

SCHEMA = "isaclab-sweep/1"
SCHEMES = ("hybrid", "passive")
NUMERIC_AXES = ("amplification_scale", "bs_power_db", "n_elements")
AXES = NUMERIC_AXES + ("scheme",)
DEFAULT_TRIALS = 100
DEFAULT_SEED = 42

_N_GRID = (9, 16, 25, 36, 49)
_BS_POWERS = (5.0, 10.0, 15.0, 20.0)


@dataclass(frozen=True)
class SolverOptions:
    rounds: int = DEFAULT_ROUNDS
    bisect_tol: float = DEFAULT_BISECT_TOL
    sdp_tol: float = sdp.DEFAULT_TOL
    max_iter: int = sdp.DEFAULT_MAX_ITER
    noise_regime: str = "auto"
    randomize: bool = False
    optimize: bool = True

    def optimizer_kwargs(self):
        return dict(
            rounds=self.rounds,
            bisect_tol=self.bisect_tol,
            sdp_tol=self.sdp_tol,
            max_iter=self.max_iter,
            randomize=self.randomize,
        )


@dataclass(frozen=True)
class SweepSpec:
    """
    Cartesian product of ``axes`` with every other axis fixed by ``fixed``.
    Axis values are kept sorted so that rows come out in axis order.
    """

    figure: str
    axes: Tuple[Tuple[str, Tuple], ...]
    fixed: Dict[str, object] = field(default_factory=dict)
    trials: int = DEFAULT_TRIALS
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        for name, values in self.axes:
            if name not in AXES:
                raise ValueError(f"unknown sweep axis {name!r}")
            if name == "scheme":
                if any(v not in SCHEMES for v in values):
                    raise ValueError(f"unknown scheme in {values}")
            elif not all(math.isfinite(v) for v in values):
                raise ValueError(f"axis {name} has non-finite values")
            if list(values) != sorted(values):
                raise ValueError(f"axis {name} values must be sorted")

    def points(self):
        names = [name for name, _ in self.axes]
        for combo in itertools.product(*(v for _, v in self.axes)):
            point = dict(self.fixed)
            point.update(zip(names, combo))
            point.setdefault("scheme", "hybrid")
            yield point


def _scales(*values):
    return tuple(float(v) for v in values)


def figure_spec(figure, trials=DEFAULT_TRIALS, seed=DEFAULT_SEED):
    """Named sweep definition for the ``--figure`` choices."""
    scales = _scales(5, 10, 15, 20, 25, 30)
    n36 = {"n_elements": 36}
    specs = {
        "fig3": (
            (("amplification_scale", scales), ("bs_power_db", _BS_POWERS)),
            n36,
        ),
        "fig4a": (
            (("amplification_scale", scales),),
            dict(n36, bs_power_db=10.0),
        ),
        "fig4b": (
            (("bs_power_db", _BS_POWERS),),
            dict(n36, amplification_scale=20.0),
        ),
        "fig5": (
            (
                ("amplification_scale", _scales(15, 20, 25)),
                ("n_elements", _N_GRID),
            ),
            {"bs_power_db": 10.0},
        ),
        "fig6": (
            (
                ("bs_power_db", (10.0, 20.0)),
                ("n_elements", _N_GRID),
                ("scheme", SCHEMES),
            ),
            {"amplification_scale": 20.0},
        ),
        "fig7": (
            (
                ("amplification_scale", _scales(15, 20, 25)),
                ("n_elements", (16, 36, 49)),
            ),
            {"bs_power_db": 10.0},
        ),
        "fig8": (
            (("n_elements", _N_GRID), ("scheme", SCHEMES)),
            {"amplification_scale": 20.0, "bs_power_db": 20.0},
        ),
        "fig9": (
            (("bs_power_db", _BS_POWERS), ("n_elements", (16, 36, 49))),
            {"amplification_scale": 20.0},
        ),
    }
    if figure not in specs:
        raise ValueError(
            f"unknown figure {figure!r}; expected one of {sorted(specs)}"
        )
    axes, fixed = specs[figure]
    return SweepSpec(figure, axes, dict(fixed), trials=trials, seed=seed)


FIGURES = (
    "fig3",
    "fig4a",
    "fig4b",
    "fig5",
    "fig6",
    "fig7",
    "fig8",
    "fig9",
)


def _extra_points(spec):
    # fig5 also compares against the passive reference at the top budget
    if spec.figure != "fig5":
        return []
    return [
        {
            "amplification_scale": 25.0,
            "n_elements": n,
            "bs_power_db": 10.0,
            "scheme": "passive",
        }
        for n in _N_GRID
    ]


def sweep_points(spec):
    return list(spec.points()) + _extra_points(spec)


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    config: object
    scenario: object
    scheme: str
    metrics: object
    crb: Dict[str, Optional[object]]
    state: StarRisState
    W: np.ndarray
    history: List = field(default_factory=list)

    def row(self):
        """Metric columns in dB / dBm / degrees."""
        m = self.metrics
        out = {}
        for name, sinr in zip(m.user_names, m.user_sinr):
            out[f"{name}_sinr_db"] = linear_to_db(sinr)
        for i, name in enumerate(m.target_names):
            out[f"{name}_sinr_bound_db"] = linear_to_db(
                m.target_sinr_bound[i]
            )
            out[f"{name}_sinr_exact_db"] = linear_to_db(
                m.target_sinr_exact[i]
            )
            report = self.crb.get(name)
            if report is None:
                h, v = math.nan, math.nan
            else:
                h, v = report.root_crb_deg
            out[f"{name}_root_crb_h_deg"] = h
            out[f"{name}_root_crb_v_deg"] = v
        p_ris = m.p_ris if self.scheme == "hybrid" else math.nan
        out["p_ris_dbm"] = watts_to_dbm(p_ris) if p_ris > 0 else math.nan
        total = self.config.bs_power_watts + (
            0.0 if math.isnan(p_ris) else p_ris
        )
        out["p_total_dbm"] = watts_to_dbm(total)
        last = self.history[-1] if self.history else None
        out["defect_t"] = last.defect_t if last else math.nan
        out["defect_r"] = last.defect_r if last else math.nan
        out["sdp_solves"] = sum(
            it.bracket_solves + it.sdp_solves for it in self.history
        )
        out["solver_iterations"] = sum(
            it.solver_iterations for it in self.history
        )
        out["min_sinr_relaxed_db"] = (
            linear_to_db(last.t) if last and last.t > 0 else math.nan
        )
        return out

    def format(self):
        m = self.metrics
        lines = [
            f"scheme: {self.scheme}",
            f"noise regime: {m.regime}",
            f"N = {self.config.n_elements}, "
            f"P_A = {self.config.amplification_factor:.4g}, "
            f"P_BS = {linear_to_db(self.config.bs_power_watts):.2f} dB",
        ]
        for name, side, sinr in zip(m.user_names, m.user_sides, m.user_sinr):
            lines.append(
                f"user {name} ({side}): SINR {linear_to_db(sinr):.3f} dB"
            )
        for i, name in enumerate(m.target_names):
            report = self.crb.get(name)
            crb = (
                "unidentifiable"
                if report is None
                else "root CRB {:.4g} / {:.4g} deg".format(
                    *report.root_crb_deg
                )
            )
            lines.append(
                f"target {name} ({m.target_sides[i]}): SINR bound "
                f"{linear_to_db(m.target_sinr_bound[i]):.3f} dB, exact "
                f"{linear_to_db(m.target_sinr_exact[i]):.3f} dB, {crb}"
            )
        if self.scheme == "hybrid":
            lines.append(f"P_RIS: {watts_to_dbm(m.p_ris):.3f} dBm")
        return "\n".join(lines)


def _design(config, scenario, channels, scheme, options):
    """Returns the configuration the design is evaluated under."""
    kwargs = options.optimizer_kwargs()
    if not options.optimize:
        # zero rounds keeps the uniform full-budget state
        kwargs["rounds"] = 0
    if scheme == "hybrid":
        noise = NoiseModel.from_config(config, options.noise_regime)
        return config, optimize_star_ris(
            config, scenario, channels, noise=noise, **kwargs
        )
    return passive_baseline(
        config,
        scenario,
        channels,
        noise_regime=options.noise_regime,
        **kwargs,
    )


def evaluate_channels(
    config, scenario, channels, scheme="hybrid", options=None, rng=None
):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    options = SolverOptions() if options is None else options
    eval_config, (state, W, history) = _design(
        config, scenario, channels, scheme, options
    )
    metrics = evaluate_metrics(
        eval_config,
        scenario,
        channels,
        state,
        W,
        regime=options.noise_regime,
        rng=rng,
    )
    noise = NoiseModel.from_config(eval_config, options.noise_regime)
    R_x = W @ W.conj().T
    crb = {}
    for m, target in enumerate(scenario.targets):
        try:
            crb[target.name] = crb_for_target(
                target.side,
                m,
                target,
                channels,
                state,
                R_x,
                eval_config,
                noise=noise,
            )
        except UnidentifiableGeometryError as e:
            logger.warning("target %s: %s", target.name, e)
            crb[target.name] = None
    return EvaluationReport(
        config=eval_config,
        scenario=scenario,
        scheme=scheme,
        metrics=metrics,
        crb=crb,
        state=state,
        W=W,
        history=list(history),
    )


def evaluate_once(config, scenario, seed, scheme="hybrid", options=None):
    """One channel draw, the full design pipeline and every metric."""
    channels = draw_channels(config, scenario, make_rng(seed))
    return evaluate_channels(
        config,
        scenario,
        channels,
        scheme=scheme,
        options=options,
        rng=make_rng(seed, 1),
    )


def _point_config(config, point):
    return config.with_overrides(
        **{k: point[k] for k in NUMERIC_AXES if k in point}
    )


def _empty_metrics(scenario):
    out = {}
    for u in scenario.users:
        out[f"{u.name}_sinr_db"] = math.nan
    for t in scenario.targets:
        for suffix in (
            "sinr_bound_db",
            "sinr_exact_db",
            "root_crb_h_deg",
            "root_crb_v_deg",
        ):
            out[f"{t.name}_{suffix}"] = math.nan
    for key in (
        "p_ris_dbm",
        "p_total_dbm",
        "defect_t",
        "defect_r",
        "sdp_solves",
        "solver_iterations",
        "min_sinr_relaxed_db",
    ):
        out[key] = math.nan
    return out


def run_trial(spec, index, point, trial, config, scenario, options):
    """
    One (point, trial) row. Errors of the pipeline are recorded in the
    ``status`` column with NaN metrics.
    """
    row = {
        "schema": SCHEMA,
        "row_type": "trial",
        "figure": spec.figure,
        "point": index,
        "trial": trial,
    }
    for axis in AXES:
        row[axis] = point.get(axis, math.nan)
    metrics = _empty_metrics(scenario)
    try:
        cfg = _point_config(config, point)
        rng = make_rng(spec.seed, trial)
        channels = draw_channels(cfg, scenario, rng)
        report = evaluate_channels(
            cfg,
            scenario,
            channels,
            scheme=point["scheme"],
            options=options,
            rng=rng,
        )
        metrics.update(report.row())
        row["status"] = "ok"
    except IsacLabError as e:
        logger.warning(
            "%s point %d trial %d: %s", spec.figure, index, trial, e
        )
        row["status"] = type(e).__name__
    row.update(metrics)
    row["seed"] = spec.seed
    row["defaulted"] = ";".join(config.defaulted)
    return row


def _run_task(task):
    return run_trial(*task)


def default_workers():
    """Worker count from PARALLEL_LEVEL; 0 or unset runs serially."""
    value = os.environ.get("PARALLEL_LEVEL", "")
    try:
        return max(int(value), 0) if value else 0
    except ValueError:
        logger.warning("ignoring PARALLEL_LEVEL=%r", value)
        return 0


def _mean_row(trials):
    first = trials[0]
    row = dict(first)
    row["row_type"] = "mean"
    row["trial"] = math.nan
    n_ok = sum(r["status"] == "ok" for r in trials)
    row["status"] = "ok" if n_ok == len(trials) else f"{n_ok}/{len(trials)} ok"
    skip = {"schema", "row_type", "figure", "point", "trial", "seed"}
    skip.update(AXES)
    for key, value in first.items():
        if key in skip or isinstance(value, str):
            continue
        values = np.array([r[key] for r in trials], dtype=float)
        if np.all(np.isnan(values)):
            row[key] = math.nan
        else:
            row[key] = float(np.nanmean(values))
    return row


def run_sweep(spec, config, scenario, options=None, workers=None):
    """
    Runs every (point, trial) of ``spec`` and returns the rows as a
    DataFrame: the trial rows of each point followed by its mean row.
    """
    options = SolverOptions() if options is None else options
    workers = default_workers() if workers is None else workers
    points = sweep_points(spec)
    tasks = [
        (spec, i, point, trial, config, scenario, options)
        for i, point in enumerate(points)
        for trial in range(spec.trials)
    ]
    logger.info(
        "%s: %d points x %d trials on %s",
        spec.figure,
        len(points),
        spec.trials,
        f"{workers} workers" if workers else "one process",
    )
    if workers:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(_run_task, tasks))
    else:
        rows = [_run_task(task) for task in tasks]
    rows.sort(key=lambda r: (r["point"], r["trial"]))

    out = []
    for i in range(len(points)):
        trials = [r for r in rows if r["point"] == i]
        out.extend(trials)
        out.append(_mean_row(trials))
    return pd.DataFrame(out)


def sweep_to_csv(frame, path):
    frame.to_csv(path, index=False, float_format="%.12g")


def mean_rows(frame):
    return frame[frame["row_type"] == "mean"].reset_index(drop=True)
