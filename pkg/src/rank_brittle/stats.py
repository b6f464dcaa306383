"""Aggregation of metric records: grouped summaries, dummy-coded OLS,
scatter export, and the model x class brittleness heatmap.

The regression is a fixed-effects approximation: response on dummy-coded
model and perturbation class, reference level first alphabetically,
solved by QR. Raw long-format export lets external tools fit richer
models on the same records.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sps
from scipy.linalg import solve_triangular

from .metrics import MetricsRecord, write_metrics_csv

FACTOR_NAMES = ("model_id", "perturbation_class", "perturbation_type")
RESPONSES = ("instability", "brittleness")


class InsufficientFactorLevelsError(ValueError):
    pass


class RankDeficientDesignError(ValueError):
    pass


@dataclass(frozen=True)
class StatSummary:
    mean: float
    median: float
    std: float
    min: float
    max: float


@dataclass(frozen=True)
class GroupStats:
    count: int
    instability: StatSummary
    brittleness: StatSummary


@dataclass(frozen=True)
class SummaryTable:
    group_by: tuple[str, ...]
    rows: dict[tuple[str, ...], GroupStats]


def _summary(values: np.ndarray) -> StatSummary:
    values = np.sort(values)  # fixed reduction order: permutation-invariant sums
    return StatSummary(
        mean=float(np.mean(values)),
        median=float(np.median(values)),
        std=float(np.std(values)),  # population std: one record has spread 0
        min=float(np.min(values)),
        max=float(np.max(values)),
    )


def summarize(records: Sequence[MetricsRecord], group_by: Sequence[str]) -> SummaryTable:
    """Exact per-group summaries of instability and brittleness."""
    if not records:
        raise ValueError("no records to summarize")
    for f in group_by:
        if f not in FACTOR_NAMES:
            raise ValueError(f"unknown factor {f!r}")
    groups: dict[tuple[str, ...], list[MetricsRecord]] = {}
    for r in records:
        key = tuple(getattr(r, f) for f in group_by)
        groups.setdefault(key, []).append(r)
    rows = {}
    for key in sorted(groups):
        recs = groups[key]
        rows[key] = GroupStats(
            count=len(recs),
            instability=_summary(np.array([r.instability for r in recs], dtype=np.float64)),
            brittleness=_summary(np.array([r.brittleness for r in recs], dtype=np.float64)),
        )
    return SummaryTable(group_by=tuple(group_by), rows=rows)


@dataclass(frozen=True)
class Coefficient:
    estimate: float
    std_error: float
    t_statistic: float
    p_value: float


@dataclass(frozen=True)
class RegressionResult:
    response: str
    intercept: float
    intercept_se: float
    intercept_t: float
    intercept_p: float
    coefficients: dict[str, Coefficient]
    n: int
    df_resid: int
    r_squared: float
    reference_levels: dict[str, str]


def fit_fixed_effects(
    records: Sequence[MetricsRecord], response: str = "instability"
) -> RegressionResult:
    """OLS of the response on dummy-coded model_id and perturbation_class.

    Factors with a single level contribute no dummies; it is an error
    for every factor to be single-level. Solved via QR; p-values from
    the t distribution with n - params degrees of freedom.
    """
    if response not in RESPONSES:
        raise ValueError(f"unknown response {response!r}")
    if not records:
        raise ValueError("no records to fit")
    y = np.array([getattr(r, response) for r in records], dtype=np.float64)
    n = len(records)

    columns: list[np.ndarray] = [np.ones(n, dtype=np.float64)]
    names: list[str] = ["intercept"]
    reference_levels: dict[str, str] = {}
    for factor in ("model_id", "perturbation_class"):
        values = np.array([getattr(r, factor) for r in records])
        levels = sorted(set(values.tolist()))
        if len(levels) < 2:
            continue
        reference_levels[factor] = levels[0]
        for level in levels[1:]:
            columns.append((values == level).astype(np.float64))
            names.append(f"{factor}[{level}]")
    if not reference_levels:
        raise InsufficientFactorLevelsError(
            "insufficient factor levels: model_id and perturbation_class "
            "each have a single level"
        )
    x = np.column_stack(columns)
    params = x.shape[1]
    if n <= params:
        raise ValueError(f"n={n} must exceed parameter count {params}")

    q, r = np.linalg.qr(x)
    diag = np.abs(np.diag(r))
    tol = max(x.shape) * np.finfo(np.float64).eps * (diag.max() if diag.size else 0.0)
    aliased = [names[i] for i in np.flatnonzero(diag <= tol)]
    if aliased:
        raise RankDeficientDesignError(
            f"rank-deficient design; aliased levels: {', '.join(aliased)}"
        )
    beta = solve_triangular(r, q.T @ y)
    resid = y - x @ beta
    rss = float(resid @ resid)
    df = n - params
    sigma2 = rss / df
    r_inv = solve_triangular(r, np.eye(params))
    cov = sigma2 * (r_inv @ r_inv.T)
    se = np.sqrt(np.diag(cov))
    t_stats = beta / se
    p_values = 2.0 * sps.t.sf(np.abs(t_stats), df)

    mean_y = float(np.mean(y))
    tss = float(((y - mean_y) ** 2).sum())
    r_squared = 1.0 if tss == 0.0 else min(max(1.0 - rss / tss, 0.0), 1.0)

    coefficients = {
        names[i]: Coefficient(
            estimate=float(beta[i]),
            std_error=float(se[i]),
            t_statistic=float(t_stats[i]),
            p_value=float(p_values[i]),
        )
        for i in range(1, params)
    }
    return RegressionResult(
        response=response,
        intercept=float(beta[0]),
        intercept_se=float(se[0]),
        intercept_t=float(t_stats[0]),
        intercept_p=float(p_values[0]),
        coefficients=coefficients,
        n=n,
        df_resid=df,
        r_squared=r_squared,
        reference_levels=reference_levels,
    )


@dataclass(frozen=True)
class ScatterRow:
    model_id: str
    normalized_distance: float
    instability: float
    flags: frozenset[str]


def scatter_table(records: Sequence[MetricsRecord], inter: float) -> list[ScatterRow]:
    """Per-record (intra / inter, instability) pairs for external plotting."""
    if inter <= 0.0:
        raise ValueError(f"inter-query distance must be positive, got {inter}")
    return [
        ScatterRow(
            model_id=r.model_id,
            normalized_distance=r.intra_distance / inter,
            instability=r.instability,
            flags=r.flags,
        )
        for r in records
    ]


@dataclass(frozen=True)
class HeatmapTable:
    models: tuple[str, ...]
    classes: tuple[str, ...]
    values: dict[tuple[str, str], float]  # absent key = empty cell
    counts: dict[tuple[str, str], int]


def brittleness_heatmap(records: Sequence[MetricsRecord]) -> HeatmapTable:
    """Mean brittleness per (model, class); empty cells stay missing.

    Cell means are taken from summarize() so they agree bit-for-bit with
    the grouped summary of the same records.
    """
    table = summarize(records, ["model_id", "perturbation_class"])
    models = tuple(sorted({r.model_id for r in records}))
    classes = tuple(sorted({r.perturbation_class for r in records}))
    values = {key: gs.brittleness.mean for key, gs in table.rows.items()}
    counts = {key: gs.count for key, gs in table.rows.items()}
    return HeatmapTable(models=models, classes=classes, values=values, counts=counts)


def write_summary_csv(table: SummaryTable, path: str | Path) -> None:
    metric_cols = [
        f"{metric}_{stat}"
        for metric in ("instability", "brittleness")
        for stat in ("mean", "median", "std", "min", "max")
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(table.group_by) + ["count"] + metric_cols)
        for key in sorted(table.rows):
            gs = table.rows[key]
            stats_vals = [
                getattr(gs.instability, s) for s in ("mean", "median", "std", "min", "max")
            ] + [
                getattr(gs.brittleness, s) for s in ("mean", "median", "std", "min", "max")
            ]
            writer.writerow(list(key) + [gs.count] + [repr(v) for v in stats_vals])


def write_regression_json(result: RegressionResult, path: str | Path) -> None:
    obj = {
        "response": result.response,
        "intercept": result.intercept,
        "intercept_se": result.intercept_se,
        "intercept_t": result.intercept_t,
        "intercept_p": result.intercept_p,
        "coefficients": {
            name: {
                "estimate": c.estimate,
                "std_error": c.std_error,
                "t_statistic": c.t_statistic,
                "p_value": c.p_value,
            }
            for name, c in result.coefficients.items()
        },
        "n": result.n,
        "df_resid": result.df_resid,
        "r_squared": result.r_squared,
        "reference_levels": result.reference_levels,
    }
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", "utf-8")


def write_scatter_csv(rows: Sequence[ScatterRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model_id", "normalized_distance", "instability", "flags"])
        for row in rows:
            writer.writerow(
                [
                    row.model_id,
                    repr(row.normalized_distance),
                    repr(row.instability),
                    "|".join(sorted(row.flags)),
                ]
            )


MISSING_CELL = "NA"


def write_heatmap_csv(table: HeatmapTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model_id"] + list(table.classes))
        for model in table.models:
            row: list[str] = [model]
            for cls in table.classes:
                val = table.values.get((model, cls))
                row.append(MISSING_CELL if val is None else repr(val))
            writer.writerow(row)


def write_heatmap_long_csv(table: HeatmapTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model_id", "perturbation_class", "mean_brittleness", "count"])
        for model in table.models:
            for cls in table.classes:
                val = table.values.get((model, cls))
                writer.writerow(
                    [
                        model,
                        cls,
                        MISSING_CELL if val is None else repr(val),
                        table.counts.get((model, cls), 0),
                    ]
                )


def write_long_format_csv(records: Sequence[MetricsRecord], path: str | Path) -> None:
    """One row per record, for external statistics tools."""
    write_metrics_csv(records, path)
