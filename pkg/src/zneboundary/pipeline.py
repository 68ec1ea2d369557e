"""End-to-end experiment pipeline shared by the CLI commands.

A run flows sweep -> boundary -> fit:

    sweep     evaluates the MSE-difference grid (exact engine or Monte Carlo
              with persisted raw counts),
    boundary  extracts one crossing estimate per budget,
    fit       produces the JSON report: regime classification, boundary fit,
              variance/bias regressions, constant-level check, and bootstrap
              intervals when raw counts exist.

All artifacts are plain CSV plus one JSON report; column orders are fixed.
Re-running any stage with the same configuration and seed reproduces every
byte (reports embed the configuration hash).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .boundary import (
    CrossingEstimate,
    auto_window,
    find_crossing_arrays,
    theoretical_boundary,
)
from .config import SCHEMA_VERSION, ExperimentConfig
from .errors import ConfigError, FitError, RegimeError
from .fits import constant_check, fit_bias, fit_boundary, fit_variance_exponent, predict_slope
from .models import MonomialBalanceModel
from .mse import CountTable, exact_delta, sample_count_table, deltas_from_counts
from .resample import bootstrap_pipeline, count_pipeline

__all__ = [
    "SweepResult",
    "build_grids",
    "run_sweep",
    "crossings_from_sweep",
    "build_report",
    "write_delta_csv",
    "read_delta_csv",
    "write_crossings_csv",
    "read_crossings_csv",
    "write_variance_csv",
]


@dataclass
class SweepResult:
    """MSE-difference grid for a budget ladder, plus raw counts if sampled."""

    budgets: tuple[float, ...]
    eps_grids: tuple[tuple[float, ...], ...]
    delta: np.ndarray           # (n_budgets, n_eps)
    std_err: np.ndarray | None  # Monte Carlo only
    source: str
    counts: CountTable | None


def build_grids(cfg: ExperimentConfig) -> list[np.ndarray]:
    """One strength grid per budget, from the pre-registered grid section."""
    model, rule = cfg.model(), cfg.rule()
    if cfg.grid["mode"] == "explicit":
        eps = np.asarray([float(e) for e in cfg.grid["eps"]])
        return [eps for _ in cfg.budgets]
    span = tuple(float(s) for s in cfg.grid["span"])
    ppd = int(cfg.grid["points_per_decade"])
    return [
        auto_window(model, rule, budget, span=span, points_per_decade=ppd)
        for budget in cfg.budgets
    ]


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Evaluate the MSE-difference grid with the configured engine."""
    model, rule = cfg.model(), cfg.rule()
    grids = build_grids(cfg)
    if cfg.is_monte_carlo:
        table = sample_count_table(
            model, rule, [int(b) for b in cfg.budgets],
            [g.tolist() for g in grids], cfg.replicates, cfg.seed,
            realloc=cfg.realloc,
        )
        delta, std_err = deltas_from_counts(table, rule.coeffs, model.mean(0.0))
        return SweepResult(
            budgets=cfg.budgets, eps_grids=table.eps_grids, delta=delta,
            std_err=std_err, source="monte_carlo", counts=table,
        )
    delta = np.empty((len(cfg.budgets), len(grids[0])))
    for b_idx, budget in enumerate(cfg.budgets):
        for e_idx, eps in enumerate(grids[b_idx]):
            delta[b_idx, e_idx] = exact_delta(
                model, rule, float(eps), float(budget), realloc=cfg.realloc
            ).delta
    return SweepResult(
        budgets=cfg.budgets,
        eps_grids=tuple(tuple(float(e) for e in g) for g in grids),
        delta=delta, std_err=None, source="exact", counts=None,
    )


def crossings_from_sweep(sweep: SweepResult) -> list[CrossingEstimate]:
    return [
        find_crossing_arrays(
            np.asarray(sweep.eps_grids[b_idx]), sweep.delta[b_idx], float(budget)
        )
        for b_idx, budget in enumerate(sweep.budgets)
    ]


# ---------------------------------------------------------------------------
# CSV artifacts (fixed column orders; one leading comment line carries the
# schema version and pre-registration marker)

def _schema_comment(cfg: ExperimentConfig | None) -> str:
    parts = [f"# zneboundary-schema={SCHEMA_VERSION}"]
    if cfg is not None:
        parts.append(f"config_hash={cfg.hash()}")
        parts.append("pre_registered=true")
    return " ".join(parts)


def _data_lines(fh):
    return (line for line in fh if not line.startswith("#"))


def write_delta_csv(path, sweep: SweepResult, cfg: ExperimentConfig | None = None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_schema_comment(cfg) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["B", "eps", "delta", "std_err", "source"])
        for b_idx, budget in enumerate(sweep.budgets):
            for e_idx, eps in enumerate(sweep.eps_grids[b_idx]):
                err = "" if sweep.std_err is None else repr(float(sweep.std_err[b_idx, e_idx]))
                writer.writerow(
                    [repr(float(budget)), repr(float(eps)),
                     repr(float(sweep.delta[b_idx, e_idx])), err, sweep.source]
                )


def read_delta_csv(path) -> SweepResult:
    budgets: list[float] = []
    rows: dict[float, list[tuple[float, float, float | None]]] = {}
    source = "exact"
    with open(path, newline="") as fh:
        for row in csv.DictReader(_data_lines(fh)):
            budget = float(row["B"])
            if budget not in rows:
                budgets.append(budget)
                rows[budget] = []
            err = float(row["std_err"]) if row["std_err"] else None
            rows[budget].append((float(row["eps"]), float(row["delta"]), err))
            source = row["source"]
    if not budgets:
        raise ConfigError(f"delta table {path} is empty")
    eps_grids, deltas, errs = [], [], []
    for budget in budgets:
        cells = rows[budget]
        eps_grids.append(tuple(c[0] for c in cells))
        deltas.append([c[1] for c in cells])
        errs.append([c[2] for c in cells])
    has_err = errs[0][0] is not None
    return SweepResult(
        budgets=tuple(budgets), eps_grids=tuple(eps_grids),
        delta=np.asarray(deltas),
        std_err=np.asarray(errs, dtype=float) if has_err else None,
        source=source, counts=None,
    )


def write_crossings_csv(
    path, crossings: list[CrossingEstimate], cfg: ExperimentConfig | None = None
) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_schema_comment(cfg) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["B", "eps_star", "status", "bracket_lo", "bracket_hi"])
        for c in crossings:
            writer.writerow([
                repr(float(c.budget)),
                "" if c.eps_star is None else repr(float(c.eps_star)),
                c.status,
                "" if c.bracket_lo is None else repr(float(c.bracket_lo)),
                "" if c.bracket_hi is None else repr(float(c.bracket_hi)),
            ])


def read_crossings_csv(path) -> list[CrossingEstimate]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(_data_lines(fh)):
            out.append(CrossingEstimate(
                budget=float(row["B"]),
                eps_star=float(row["eps_star"]) if row["eps_star"] else None,
                status=row["status"],
                bracket_lo=float(row["bracket_lo"]) if row["bracket_lo"] else None,
                bracket_hi=float(row["bracket_hi"]) if row["bracket_hi"] else None,
            ))
    if not out:
        raise ConfigError(f"crossing table {path} is empty")
    return out


def write_variance_csv(path, cfg: ExperimentConfig, n_points: int = 60) -> bool:
    """Plot-ready exact variance curve over the pre-registered window."""
    window = cfg.variance_window()
    model = cfg.model()
    if window is None or isinstance(model, MonomialBalanceModel):
        return False
    grid = np.geomspace(window[0], window[1], n_points)
    with open(path, "w", newline="") as fh:
        fh.write(_schema_comment(cfg) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["eps", "variance"])
        for eps in grid:
            writer.writerow([repr(float(eps)), repr(float(model.variance(float(eps))))])
    return True


# ---------------------------------------------------------------------------
# report

def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def build_report(
    cfg: ExperimentConfig,
    crossings: list[CrossingEstimate],
    counts: CountTable | None,
) -> dict:
    """Assemble the JSON run report; the single source for fitted numbers."""
    model, rule = cfg.model(), cfg.rule()
    report: dict = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "config": cfg.raw,
        "config_hash": cfg.hash(),
        "pre_registered": {
            "grid": cfg.grid,
            "windows": cfg.windows,
            "declared_before_fit": True,
        },
        "model_declared": model.declared(),
    }

    try:
        regime = theoretical_boundary(model, rule, allocation=cfg.realloc)
        report["regime"] = regime.as_dict()
    except RegimeError as err:
        regime = None
        report["regime"] = {"error": str(err)}

    report["crossings"] = [
        {
            "B": c.budget, "eps_star": c.eps_star, "status": c.status,
            "bracket_lo": c.bracket_lo, "bracket_hi": c.bracket_hi,
        }
        for c in crossings
    ]

    try:
        boundary_fit = fit_boundary(crossings)
        report["boundary_fit"] = boundary_fit.as_dict()
    except FitError as err:
        boundary_fit = None
        report["boundary_fit"] = {"error": str(err)}

    var_fit = bias_fit = None
    var_win, bias_win = cfg.variance_window(), cfg.bias_window()
    sampled = not isinstance(model, MonomialBalanceModel)
    if sampled and var_win:
        var_fit = fit_variance_exponent(model, var_win, int(cfg.windows.get("n_points", 40)))
        report["variance_fit"] = var_fit.as_dict()
        try:
            report["predicted_slope"] = predict_slope(var_fit.q_hat)
        except FitError as err:
            report["predicted_slope"] = {"error": str(err)}
    if sampled and bias_win:
        bias_fit = fit_bias(model, bias_win, int(cfg.windows.get("n_points", 40)))
        report["bias_fit"] = bias_fit.as_dict()

    if boundary_fit and var_fit and bias_fit and regime and regime.c_pq:
        try:
            check = constant_check(
                boundary_fit, var_fit, bias_fit, rule, regime.c_pq,
                allocation=cfg.realloc,
            )
            report["constant_check"] = check.as_dict()
        except FitError as err:
            report["constant_check"] = {"error": str(err)}

    if counts is not None:
        point_stats = count_pipeline(
            counts, variance_window=var_win, bias_window=bias_win
        )
        report["count_estimates"] = point_stats
        if cfg.bootstrap:
            results = bootstrap_pipeline(
                counts,
                cfg.bootstrap["statistics"],
                int(cfg.bootstrap["n_replicates"]),
                int(cfg.bootstrap["seed"]),
                level=float(cfg.bootstrap["level"]),
                variance_window=var_win,
                bias_window=bias_win,
            )
            report["bootstrap"] = [r.as_dict() for r in results]

    return _jsonable(report)
