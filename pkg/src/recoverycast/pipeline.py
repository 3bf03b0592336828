"""Stage execution: base -> reference -> recovery -> evaluate.

Each stage reads its inputs from files (the raw data or upstream stage
CSVs) and writes plain CSV artifacts, so any stage can be rerun in isolation
from cached upstream outputs and every intermediate stays auditable. Within
a stage, destination-level work runs in a process pool; outputs are written
single-threaded in destination-sorted order, and all randomness flows from
the config seed through named substreams, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import combine as combine_mod
from . import evaluation
from . import hierarchy as hier_mod
from . import recovery as recovery_mod
from . import signals as signals_mod
from .config import PipelineConfig
from .errors import RecoverycastError, StageError
from .models import arima as arima_mod
from .models.base import ForecastResult, ModelSpec
from .models.decomposition import decompose
from .models.smoothing import fit_holt, fit_holt_winters, fit_ses
from .models.zoo import ValidationRow, fit_forecast, validate_models
from .rng import substream
from .series import MonthKey, MonthlySeries, format_number, impute, load_csv, write_csv

STAGES = ("base", "reference", "recovery", "evaluate")

F_IMPUTED = "arrivals_imputed.csv"
F_SMATRIX = "s_matrix.csv"
F_VALIDATION = "validation_metrics.csv"
F_WEIGHTS = "weights.csv"
F_BASE = "base_forecasts.csv"
F_REFERENCE = "reference_forecasts.csv"
F_CURVES = "recovery_curves.csv"
F_POINT = "point_forecasts.csv"
F_INTERVAL = "interval_forecasts.csv"
F_SCORES = "scores_coefficients.csv"
F_POINT_METRICS = "point_metrics.csv"
F_INTERVAL_METRICS = "interval_metrics.csv"
F_BENCHMARK = "benchmark_metrics.csv"
F_SUMMARY = "summary.md"
F_MANIFEST = "run_manifest.json"


@dataclass
class StageOutcome:
    files: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    def write(self, out_dir: Path) -> None:
        payload = {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "stage_timings_sec": {k: round(v, 3) for k, v in self.timings.items()},
            "warnings": self.warnings,
            "outputs": sorted(self.outputs),
        }
        with open(out_dir / F_MANIFEST, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    return "" if x is None else format_number(float(x))


def _parallel_map(fn, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Base stage
# ---------------------------------------------------------------------------


def _fit_leaf(args) -> tuple[str, dict, dict, dict]:
    """Process-pool worker: fit every univariate spec twice (train, full)."""
    dest, train, full, spec_dicts, val_h, full_h, seed = args
    val_fc: dict[str, ForecastResult] = {}
    full_fc: dict[str, ForecastResult] = {}
    errors: dict[str, str] = {}
    for entry in spec_dicts:
        spec = ModelSpec(entry["family"], entry.get("params") or {}, model_id=entry["id"])
        for phase, series, horizon, sink in (
            ("validation", train, val_h, val_fc),
            ("full", full, full_h, full_fc),
        ):
            try:
                rng = substream(seed, "fit", dest, spec.model_id, phase)
                sink[spec.model_id] = fit_forecast(series, spec, horizon, rng=rng)
            except RecoverycastError as exc:
                errors[spec.model_id] = str(exc)
    return dest, val_fc, full_fc, errors


def _family_forecast(y: np.ndarray, family: str, horizon: int):
    """(mean path, one-step residuals) for the reconciliation base family."""
    if family == "ses":
        mean, _, resid, _ = fit_ses(y, horizon)
    elif family == "holt":
        mean, _, resid, _ = fit_holt(y, horizon)
    elif family == "holt_winters":
        mean, _, resid, _ = fit_holt_winters(y, horizon)
    elif family == "arima":
        fit = arima_mod.fit_auto(y)
        mean, _ = arima_mod.forecast(fit, horizon)
        resid = fit.residuals
    else:
        raise StageError("base", f"unsupported hierarchical base family {family!r}")
    return np.maximum(mean, 0.0), np.asarray(resid)


class _NodeFits:
    """Per-phase cache of (path, residuals) fits for hierarchy nodes.

    Leaf paths already produced by the univariate zoo are reused when the
    requested family matches a configured model; everything else is fitted
    once and memoized, so top-down variants sharing a family do not refit.
    """

    def __init__(self, node_series, horizon, leaf_paths_by_family):
        self.node_series = node_series
        self.horizon = horizon
        self.leaf_paths = leaf_paths_by_family
        self.cache: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}

    def path_resid(self, node: str, family: str) -> tuple[np.ndarray, np.ndarray]:
        key = (node, family)
        if key not in self.cache:
            self.cache[key] = _family_forecast(
                self.node_series[node].to_array(), family, self.horizon
            )
        return self.cache[key]

    def leaf_path(self, leaf: str, family: str) -> np.ndarray:
        reuse = self.leaf_paths.get(family, {}).get(leaf)
        if reuse is not None:
            return reuse
        return self.path_resid(leaf, family)[0]


def _hierarchical_paths(
    entry: dict,
    hierarchy: hier_mod.Hierarchy,
    fits: _NodeFits,
    horizon: int,
    train_window: tuple[MonthKey, MonthKey],
) -> dict[str, np.ndarray]:
    """Per-destination reconciled paths for one hierarchical method."""
    method = entry["method"]
    family = entry.get("base_family", "ses")
    nodes = hierarchy.nodes
    m = hierarchy.m
    leaves = hierarchy.bottom

    if method in ("td_forecast_prop", "td_hist_prop"):
        top_path, _ = fits.path_resid(nodes[0], family)
        if method == "td_hist_prop":
            leaf_hist = np.vstack(
                [fits.node_series[leaf].window(*train_window).to_array() for leaf in leaves]
            )
            totals = leaf_hist.sum(axis=0)
            ok = totals > 0
            shares = leaf_hist[:, ok] / totals[ok]
            p = shares.mean(axis=1)
            p = p / p.sum()
            bottom = np.outer(p, top_path)
        else:
            leaf_paths = np.vstack([fits.leaf_path(leaf, family) for leaf in leaves])
            sums = leaf_paths.sum(axis=0)
            bottom = np.empty((m, horizon))
            for h in range(horizon):
                p = leaf_paths[:, h] / sums[h] if sums[h] > 0 else np.full(m, 1.0 / m)
                bottom[:, h] = p * top_path[h]
        return {leaf: bottom[i] for i, leaf in enumerate(leaves)}

    if method in ("mint", "wls"):
        base = np.empty((hierarchy.n, horizon))
        resids = []
        for i, node in enumerate(nodes):
            path, resid = fits.path_resid(node, family)
            base[i] = path
            resids.append(resid)
        t_min = min(len(r) for r in resids)
        R = np.vstack([r[-t_min:] for r in resids]).T
        W = hier_mod.shrink_covariance(R)
        G = hier_mod.mint_G(hierarchy, W) if method == "mint" else hier_mod.wls_G(hierarchy, W)
        rec = hier_mod.reconcile(hierarchy, G, base)
        bottom = np.maximum(rec[hierarchy.n - m :, :], 0.0)
        return {leaf: bottom[i] for i, leaf in enumerate(leaves)}

    raise StageError("base", f"unknown hierarchical method {method!r}")


def _as_result(path: np.ndarray, origin: MonthKey, model_id: str) -> ForecastResult:
    return ForecastResult(
        origin=origin,
        horizon=len(path),
        mean=tuple(np.maximum(np.asarray(path, dtype=float), 0.0)),
        model_id=model_id,
    )


def stage_base(config: PipelineConfig, out_dir: Path) -> StageOutcome:
    outcome = StageOutcome()
    cal = config.calendar
    raw = load_csv(config.data["arrivals"])
    leaves = config.destinations
    missing = [d for d in leaves if d not in raw]
    if missing:
        raise StageError("base", f"arrivals missing for destinations {missing}")

    # impute leaves, then trim everything to the common span
    imputed: dict[str, MonthlySeries] = {}
    masks: dict[str, list] = {}
    for dest in leaves:
        s = raw[dest]
        masks[dest] = list(s.missing_mask())
        if not s.is_complete():
            outcome.warnings.append(f"base[{dest}]: imputed {int(np.sum(s.missing_mask()))} months")
        imputed[dest] = impute(s) if not s.is_complete() else s
    common_start = max(s.start for s in imputed.values())
    common_end = min(s.end for s in imputed.values())
    if common_end < cal.reference_start.plus(-1):
        raise StageError(
            "base",
            f"arrivals must reach {cal.reference_start.plus(-1)}, got {common_end}",
        )
    series = {d: imputed[d].window(common_start, common_end) for d in leaves}
    write_csv(
        series,
        out_dir / F_IMPUTED,
        imputed={
            d: masks[d][raw[d].index_of(common_start) : raw[d].index_of(common_end) + 1]
            for d in leaves
        },
    )
    outcome.files.append(F_IMPUTED)

    hierarchy = hier_mod.build_summing_matrix(config.hierarchy)
    node_series: dict[str, MonthlySeries] = dict(series)
    leaf_matrix = np.vstack([series[d].to_array() for d in hierarchy.bottom])
    for i, node in enumerate(hierarchy.nodes[: hierarchy.n - hierarchy.m]):
        agg = hierarchy.S[i] @ leaf_matrix
        node_series[node] = MonthlySeries(common_start, tuple(agg), name=node)

    _write_rows(
        out_dir / F_SMATRIX,
        ["node", *hierarchy.bottom],
        [[node, *(int(v) for v in hierarchy.S[i])] for i, node in enumerate(hierarchy.nodes)],
    )
    outcome.files.append(F_SMATRIX)

    # split at the configured boundaries
    if not (common_start < cal.train_end < cal.validation_end <= common_end):
        raise StageError("base", "train/validation boundaries outside the common span")
    trains = {n: s.window(common_start, cal.train_end) for n, s in node_series.items()}
    fulls = {n: s.window(common_start, cal.validation_end) for n, s in node_series.items()}
    val_h = cal.train_end.months_until(cal.validation_end)
    full_h = cal.base_horizon
    shift = cal.calendar_shift_months

    # univariate fits, leaf-parallel
    jobs = [
        (dest, trains[dest], fulls[dest], config.models, val_h, full_h, config.seed)
        for dest in leaves
    ]
    results = _parallel_map(_fit_leaf, jobs, config.workers)
    val_uni = {dest: v for dest, v, _, _ in results}
    full_uni = {dest: f for dest, _, f, _ in results}
    fit_errors = {dest: e for dest, _, _, e in results}
    for dest in leaves:
        for mid, msg in sorted(fit_errors[dest].items()):
            outcome.warnings.append(f"base[{dest}]: {mid} failed: {msg}")

    # hierarchical methods, each fit on train (validation phase) and full;
    # leaf paths from the univariate pass are reused by family
    family_of = {e["id"]: e["family"] for e in config.models}
    val_leaf_paths: dict[str, dict[str, np.ndarray]] = {}
    full_leaf_paths: dict[str, dict[str, np.ndarray]] = {}
    for dest in leaves:
        for mid, fc in val_uni[dest].items():
            val_leaf_paths.setdefault(family_of[mid], {})[dest] = np.asarray(fc.mean)
        for mid, fc in full_uni[dest].items():
            full_leaf_paths.setdefault(family_of[mid], {})[dest] = np.asarray(fc.mean)
    val_fits = _NodeFits(trains, val_h, val_leaf_paths)
    full_fits = _NodeFits(fulls, full_h, full_leaf_paths)

    val_hier: dict[str, dict[str, np.ndarray]] = {d: {} for d in leaves}
    full_hier: dict[str, dict[str, np.ndarray]] = {d: {} for d in leaves}
    for entry in config.hierarchical:
        try:
            v_paths = _hierarchical_paths(
                entry, hierarchy, val_fits, val_h, (common_start, cal.train_end)
            )
            f_paths = _hierarchical_paths(
                entry, hierarchy, full_fits, full_h, (common_start, cal.train_end)
            )
        except RecoverycastError as exc:
            outcome.warnings.append(f"base: hierarchical {entry['id']} failed: {exc}")
            continue
        for dest in leaves:
            val_hier[dest][entry["id"]] = v_paths[dest]
            full_hier[dest][entry["id"]] = f_paths[dest]

    # validation table per destination (univariate + hierarchical rows)
    combo_spec = combine_mod.CombinationSpec(
        method=config.combination["method"],
        lam=float(config.combination["lambda"]),
        keep_fraction=float(config.combination["keep_fraction"]),
    )
    val_rows: dict[str, list[ValidationRow]] = {}
    retained: dict[str, list[str]] = {}
    weights: dict[str, combine_mod.CombinationWeights] = {}
    validation_csv: list[list] = []

    pooled = bool(config.combination.get("pooled"))
    pooled_rows: dict[str, list[float]] = {}

    for dest in leaves:
        train_s, val_s = trains[dest], node_series[dest].window(
            cal.train_end.plus(1), cal.validation_end
        )
        extra = dict(val_uni[dest])
        for mid, path in val_hier[dest].items():
            extra[mid] = _as_result(path, cal.train_end, mid)
        rows = validate_models(train_s, val_s, [], extra_forecasts=extra, season=config.mase_season)
        for mid, msg in sorted(fit_errors[dest].items()):
            rows.append(ValidationRow(mid, np.nan, np.nan, np.nan, error=msg))
        val_rows[dest] = rows
        if pooled:
            for row in rows:
                pooled_rows.setdefault(row.model_id, []).append(row.mase)

    if pooled:
        pooled_table = [
            ValidationRow(mid, np.nan, np.nan, float(np.mean(v)) if np.all(np.isfinite(v)) else np.nan)
            for mid, v in pooled_rows.items()
        ]
        global_retained = combine_mod.screen_models(pooled_table, combo_spec.keep_fraction)

    for dest in leaves:
        rows = val_rows[dest]
        ids = global_retained if pooled else combine_mod.screen_models(rows, combo_spec.keep_fraction)
        ids = [i for i in ids if i in val_uni[dest] or i in val_hier[dest]]
        retained[dest] = ids
        val_actual = node_series[dest].window(cal.train_end.plus(1), cal.validation_end).to_array()
        F = np.vstack(
            [
                np.asarray(val_uni[dest][mid].mean)
                if mid in val_uni[dest]
                else val_hier[dest][mid]
                for mid in ids
            ]
        )
        weights[dest] = combine_mod.fit_weights(F, val_actual, ids, combo_spec)

        # audit rows: every combination method scored on the validation window
        for method in ("simple", "error_weighted", "stack_lasso", "stack_ridge"):
            if method == combo_spec.method:
                w_m = weights[dest]
            else:
                spec_m = combine_mod.CombinationSpec(
                    method, lam=combo_spec.lam, keep_fraction=combo_spec.keep_fraction
                )
                w_m = combine_mod.fit_weights(F, val_actual, ids, spec_m)
            path = combine_mod.combine(F, ids, w_m)
            mape_v, _ = evaluation.mape(path, val_actual)
            rows.append(
                ValidationRow(
                    f"combo_{method}",
                    evaluation.rmse(path, val_actual),
                    mape_v,
                    evaluation.mase(path, val_actual, trains[dest].to_array(), season=config.mase_season),
                )
            )
        for row in sorted(rows, key=lambda r: r.model_id):
            validation_csv.append(
                [dest, row.model_id, _fmt_nan(row.rmse), _fmt_nan(row.mape), _fmt_nan(row.mase), row.error]
            )

    _write_rows(
        out_dir / F_VALIDATION,
        ["destination", "model_id", "rmse", "mape", "mase", "note"],
        validation_csv,
    )
    outcome.files.append(F_VALIDATION)

    _write_rows(
        out_dir / F_WEIGHTS,
        ["destination", "model_id", "weight"],
        [
            [dest, mid, format_number(weights[dest].weights[mid])]
            for dest in leaves
            for mid in retained[dest]
        ],
    )
    outcome.files.append(F_WEIGHTS)

    # full-phase base forecasts on the shifted (post-break) calendar
    base_csv: list[list] = []
    for dest in leaves:
        per_model: dict[str, ForecastResult] = {}
        for mid, fc in full_uni[dest].items():
            per_model[mid] = fc.shifted(shift)
        for mid, path in full_hier[dest].items():
            per_model[mid] = _as_result(path, cal.validation_end, mid).shifted(shift)

        ids = [i for i in retained[dest] if i in per_model]
        if not ids:
            raise StageError("base", "no retained model survived the full refit", dest)
        if len(ids) < len(retained[dest]):
            dropped = sorted(set(retained[dest]) - set(ids))
            outcome.warnings.append(f"base[{dest}]: retained models missing after refit: {dropped}")
        F = np.vstack([np.asarray(per_model[mid].mean) for mid in ids])
        combined = combine_mod.combine(F, ids, weights[dest])
        per_model["combined"] = _as_result(combined, cal.validation_end, "combined").shifted(shift)

        for mid in sorted(per_model):
            fc = per_model[mid]
            for h, m in enumerate(fc.months()):
                base_csv.append(
                    [
                        dest,
                        mid,
                        m.year,
                        m.month,
                        format_number(fc.mean[h]),
                        _fmt(fc.lower80[h] if fc.lower80 else None),
                        _fmt(fc.upper80[h] if fc.upper80 else None),
                    ]
                )
    _write_rows(
        out_dir / F_BASE,
        ["destination", "model_id", "year", "month", "mean", "lower80", "upper80"],
        base_csv,
    )
    outcome.files.append(F_BASE)
    return outcome


def _fmt_nan(x: float) -> str:
    return "" if not np.isfinite(x) else format_number(x)


# ---------------------------------------------------------------------------
# Reference stage
# ---------------------------------------------------------------------------


def _load_keywords(path: Optional[str]) -> dict[str, list[signals_mod.KeywordSeries]]:
    if not path or not Path(path).exists():
        return {}
    rows: dict[tuple[str, str], dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            key = (rec["destination"], rec["keyword"])
            idx = MonthKey(int(rec["year"]), int(rec["month"])).index
            rows.setdefault(key, {})[idx] = float(rec["volume"])
    out: dict[str, list[signals_mod.KeywordSeries]] = {}
    for (dest, kw), per in sorted(rows.items()):
        lo, hi = min(per), max(per)
        values = tuple(per.get(i) for i in range(lo, hi + 1))
        series = MonthlySeries(MonthKey.from_index(lo), values, name=kw)
        out.setdefault(dest, []).append(signals_mod.KeywordSeries(kw, series))
    return out


def _load_flights(path: Optional[str]) -> dict[str, signals_mod.FlightSeries]:
    if not path or not Path(path).exists():
        return {}
    rows: dict[str, dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            idx = MonthKey(int(rec["year"]), int(rec["month"])).index
            rows.setdefault(rec["destination"], {})[idx] = float(rec["flights"])
    out = {}
    for dest, per in sorted(rows.items()):
        lo, hi = min(per), max(per)
        values = tuple(per.get(i) for i in range(lo, hi + 1))
        out[dest] = signals_mod.FlightSeries(
            dest, MonthlySeries(MonthKey.from_index(lo), values, name=f"{dest}:flights")
        )
    return out


def _reference_worker(args):
    dest, arrivals, keywords, flights, horizon, threshold, lag = args
    try:
        ref = signals_mod.reference_forecast(
            arrivals,
            horizon,
            keywords=keywords,
            flights=flights,
            threshold=threshold,
            lag=lag,
            destination=dest,
        )
        return dest, ref.path, ref.index_path, ref.flight_path, ref.warnings
    except RecoverycastError as exc:
        return dest, None, None, None, [f"{dest}: no signal ({exc})"]


def stage_reference(config: PipelineConfig, out_dir: Path) -> StageOutcome:
    outcome = StageOutcome()
    cal = config.calendar
    raw = load_csv(config.data["arrivals"])
    keywords = _load_keywords(config.data.get("keywords"))
    flights = _load_flights(config.data.get("flights"))
    if config.data.get("flights") and not flights:
        outcome.warnings.append("reference: flights file missing or empty; flight branch disabled")
    if config.data.get("keywords") and not keywords:
        outcome.warnings.append("reference: keywords file missing or empty; index branch disabled")

    horizon = cal.reference_horizon
    jobs = []
    for dest in config.destinations:
        s = raw.get(dest)
        if s is None:
            raise StageError("reference", "no arrivals series", dest)
        if s.end < cal.reference_start.plus(-1):
            raise StageError(
                "reference", f"arrivals end {s.end}, before {cal.reference_start.plus(-1)}", dest
            )
        arrivals = s.window(s.start, cal.reference_start.plus(-1))
        jobs.append(
            (
                dest,
                arrivals,
                keywords.get(dest),
                flights.get(dest),
                horizon,
                float(config.signals["threshold"]),
                int(config.signals["lag"]),
            )
        )
    results = _parallel_map(_reference_worker, jobs, config.workers)

    # fallback for destinations with no usable signal: the combined base path
    base_paths = None
    rows: list[list] = []
    months = [cal.reference_start.plus(i) for i in range(horizon)]
    for dest, path, index_path, flight_path, warns in results:
        outcome.warnings.extend(warns)
        if path is None:
            if base_paths is None:
                base_paths = _load_base_forecasts(out_dir)
            combined = base_paths.get((dest, "combined"))
            if combined is None:
                raise StageError("reference", "no signal and no base fallback", dest)
            path = np.array([combined.at(m) for m in months])
            outcome.warnings.append(f"reference[{dest}]: fell back to the combined base path")
        for i, m in enumerate(months):
            rows.append(
                [
                    dest,
                    m.year,
                    m.month,
                    format_number(path[i]),
                    _fmt(index_path[i] if index_path is not None else None),
                    _fmt(flight_path[i] if flight_path is not None else None),
                ]
            )
    _write_rows(
        out_dir / F_REFERENCE,
        ["destination", "year", "month", "reference", "index_branch", "flight_branch"],
        rows,
    )
    outcome.files.append(F_REFERENCE)
    return outcome


# ---------------------------------------------------------------------------
# Recovery stage
# ---------------------------------------------------------------------------


def _load_base_forecasts(out_dir: Path) -> dict[tuple[str, str], ForecastResult]:
    path = out_dir / F_BASE
    if not path.exists():
        raise StageError("recovery", f"{F_BASE} not found; run the base stage first")
    acc: dict[tuple[str, str], dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            key = (rec["destination"], rec["model_id"])
            entry = acc.setdefault(key, {})
            idx = MonthKey(int(rec["year"]), int(rec["month"])).index
            entry[idx] = (
                float(rec["mean"]),
                float(rec["lower80"]) if rec["lower80"] else None,
                float(rec["upper80"]) if rec["upper80"] else None,
            )
    out = {}
    for key, per in acc.items():
        idxs = sorted(per)
        mean = tuple(per[i][0] for i in idxs)
        lower = tuple(per[i][1] for i in idxs)
        upper = tuple(per[i][2] for i in idxs)
        has_bounds = all(v is not None for v in lower)
        out[key] = ForecastResult(
            origin=MonthKey.from_index(idxs[0] - 1),
            horizon=len(mean),
            mean=mean,
            lower80=lower if has_bounds else None,
            upper80=upper if has_bounds else None,
            model_id=key[1],
        )
    return out


def _load_reference(out_dir: Path) -> dict[str, ForecastResult]:
    path = out_dir / F_REFERENCE
    if not path.exists():
        raise StageError("recovery", f"{F_REFERENCE} not found; run the reference stage first")
    acc: dict[str, dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            idx = MonthKey(int(rec["year"]), int(rec["month"])).index
            acc.setdefault(rec["destination"], {})[idx] = float(rec["reference"])
    out = {}
    for dest, per in acc.items():
        idxs = sorted(per)
        out[dest] = ForecastResult(
            origin=MonthKey.from_index(idxs[0] - 1),
            horizon=len(idxs),
            mean=tuple(per[i] for i in idxs),
            model_id="reference",
        )
    return out


def _load_retained(out_dir: Path) -> dict[str, list[str]]:
    path = out_dir / F_WEIGHTS
    if not path.exists():
        raise StageError("recovery", f"{F_WEIGHTS} not found; run the base stage first")
    retained: dict[str, list[str]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            retained.setdefault(rec["destination"], []).append(rec["model_id"])
    return retained


def _load_scores(path: Optional[str]) -> dict[str, dict]:
    if not path or not Path(path).exists():
        return {}
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out[rec["destination"]] = {
                "policy": int(rec["policy"]),
                "distance": int(rec["distance"]),
                "recovery": int(rec["recovery"]),
                "r": float(rec["r"]) if rec.get("r") else None,
            }
    return out


def stage_recovery(config: PipelineConfig, out_dir: Path) -> StageOutcome:
    outcome = StageOutcome()
    cal = config.calendar
    base = _load_base_forecasts(out_dir)
    reference = _load_reference(out_dir)
    retained = _load_retained(out_dir)
    scores = _load_scores(config.data.get("scores"))

    imputed_path = out_dir / F_IMPUTED
    if imputed_path.exists():
        arrivals = load_csv(imputed_path)
    else:
        arrivals = {d: impute(s) for d, s in load_csv(config.data["arrivals"]).items()}

    hist_lo, hist_hi = cal.history_window
    n = cal.recovery_grid
    mid_arg = float(hist_lo.plus(-1).months_until(cal.logistic_mid))
    post_arg = float(hist_lo.plus(-1).months_until(cal.logistic_post))

    curve_rows: list[list] = []
    point_rows: list[list] = []
    interval_rows: list[list] = []
    score_rows: list[list] = []

    for dest in config.destinations:
        combined = base.get((dest, "combined"))
        ref = reference.get(dest)
        if combined is None or ref is None:
            raise StageError("recovery", "missing base or reference forecasts", dest)
        series = arrivals.get(dest)
        if series is None:
            raise StageError("recovery", "missing arrivals history", dest)

        # recovery coefficient
        mode = config.recovery["coefficient_mode"]
        override = config.recovery.get("coefficient_override")
        entry = scores.get(dest)
        if override is not None:
            coef = recovery_mod.RecoveryCoefficient(dest, float(override), source="table")
            avg = entry and recovery_mod.DestinationScores(
                dest, entry["policy"], entry["distance"], entry["recovery"]
            ).average
        elif entry is None:
            coef = recovery_mod.RecoveryCoefficient(dest, 1.0, source="table")
            avg = None
            outcome.warnings.append(f"recovery[{dest}]: no scores; coefficient defaults to 1.0")
        else:
            ds = recovery_mod.DestinationScores(dest, entry["policy"], entry["distance"], entry["recovery"])
            avg = ds.average
            if mode == "table" and entry["r"] is not None:
                coef = recovery_mod.RecoveryCoefficient(dest, entry["r"], source="table")
            else:
                coef = recovery_mod.coefficient_from_scores(ds)
        score_rows.append(
            [
                dest,
                entry["policy"] if entry else "",
                entry["distance"] if entry else "",
                entry["recovery"] if entry else "",
                _fmt(avg),
                format_number(coef.r),
                coef.source,
            ]
        )

        # seasonal factors from the pre-break history
        pre_break = series.window(series.start, cal.validation_end)
        factors = recovery_mod.SeasonalFactors.from_decomposition(
            decompose(pre_break, "multiplicative")
        )

        anchor = recovery_mod.anchors(
            combined, ref, coef.r, factors, cal.reference_end, cal.recovery_end
        )
        hist_vals = []
        floor_warned = False
        for i in range(hist_lo.months_until(hist_hi) + 1):
            m = hist_lo.plus(i)
            v = series.at(m)
            if v is None or v <= 0:
                v = max(v or 0.0, 1e-6 * anchor.initial)
                floor_warned = True
            hist_vals.append(v / factors.at(m.month))
        if floor_warned:
            outcome.warnings.append(f"recovery[{dest}]: non-positive history months floored")
        ref_months = [cal.reference_start.plus(i) for i in range(cal.reference_horizon)]
        ref_detr = [ref.at(m) / factors.at(m.month) for m in ref_months]

        inputs = recovery_mod.CurveInputs(
            destination=dest,
            start=cal.recovery_start,
            n=n,
            seasonal=factors,
            initial=anchor.initial,
            terminal=anchor.terminal,
            history_detrended=tuple(hist_vals),
            reference_detrended=tuple(ref_detr),
            logistic_mid=(mid_arg, combined.at(cal.logistic_mid) / factors.at(cal.logistic_mid.month)),
            logistic_post=(post_arg, combined.at(cal.logistic_post) / factors.at(cal.logistic_post.month)),
            logistic_terminal=combined.at(cal.recovery_end) / factors.at(cal.recovery_end.month),
        )
        result = recovery_mod.build_curve(inputs)
        outcome.warnings.extend(f"recovery: {w}" for w in result.warnings)
        curve = result.curve

        bound_models = [
            base[(dest, mid)]
            for mid in retained.get(dest, [])
            if (dest, mid) in base and base[(dest, mid)].has_bounds
        ]
        try:
            lower, upper, warns = recovery_mod.interval_path(
                inputs,
                curve,
                bound_models,
                coef.r,
                cal.recovery_end,
                cal.logistic_mid,
                cal.logistic_post,
            )
            outcome.warnings.extend(f"recovery: {w}" for w in warns)
        except recovery_mod.NoBounds:
            lower = upper = np.asarray(curve.point_path)
            outcome.warnings.append(f"recovery[{dest}]: no bounded models; zero-width interval")

        for i, m in enumerate(curve.months()):
            curve_rows.append(
                [
                    dest,
                    m.year,
                    m.month,
                    format_number(curve.trend_linear[i]),
                    format_number(curve.trend_quadratic[i]),
                    format_number(curve.trend_logistic[i]),
                    format_number(curve.trend_mean[i]),
                    format_number(curve.seasonal[i]),
                    format_number(curve.point_path[i]),
                    format_number(lower[i]),
                    format_number(upper[i]),
                ]
            )
            point_rows.append([dest, m.year, m.month, format_number(curve.point_path[i])])
            interval_rows.append(
                [dest, m.year, m.month, format_number(lower[i]), format_number(upper[i])]
            )

    _write_rows(
        out_dir / F_CURVES,
        [
            "destination",
            "year",
            "month",
            "trend_linear",
            "trend_quadratic",
            "trend_logistic",
            "trend_mean",
            "seasonal",
            "point",
            "lower80",
            "upper80",
        ],
        curve_rows,
    )
    _write_rows(out_dir / F_POINT, ["destination", "year", "month", "point"], point_rows)
    _write_rows(
        out_dir / F_INTERVAL,
        ["destination", "year", "month", "lower80", "upper80"],
        interval_rows,
    )
    _write_rows(
        out_dir / F_SCORES,
        ["destination", "policy", "distance", "recovery", "average", "r", "source"],
        score_rows,
    )
    outcome.files += [F_CURVES, F_POINT, F_INTERVAL, F_SCORES]
    return outcome


# ---------------------------------------------------------------------------
# Evaluate stage
# ---------------------------------------------------------------------------


def _load_point_paths(out_dir: Path, filename: str, value_col: str) -> dict[str, dict[int, float]]:
    path = out_dir / filename
    if not path.exists():
        raise StageError("evaluate", f"{filename} not found; run the recovery stage first")
    acc: dict[str, dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            idx = MonthKey(int(rec["year"]), int(rec["month"])).index
            acc.setdefault(rec["destination"], {})[idx] = float(rec[value_col])
    return acc


def stage_evaluate(config: PipelineConfig, out_dir: Path) -> StageOutcome:
    outcome = StageOutcome()
    cal = config.calendar
    actuals_path = config.data.get("actuals")
    if not actuals_path:
        raise StageError("evaluate", "config.data.actuals is required for evaluation")
    actuals = load_csv(actuals_path)

    points = _load_point_paths(out_dir, F_POINT, "point")
    lowers = _load_point_paths(out_dir, F_INTERVAL, "lower80")
    uppers = _load_point_paths(out_dir, F_INTERVAL, "upper80")

    window = [
        cal.evaluation_start.plus(i)
        for i in range(cal.evaluation_start.months_until(cal.recovery_end) + 1)
    ]
    origin = cal.evaluation_start.plus(-1)

    point_paths: dict[str, ForecastResult] = {}
    interval_paths: dict[str, tuple] = {}
    for dest, per in points.items():
        mean = [per.get(m.index) for m in window]
        if any(v is None for v in mean):
            raise StageError("evaluate", "point forecasts do not cover the window", dest)
        point_paths[dest] = ForecastResult(origin, len(window), tuple(mean), model_id="pipeline")
        interval_paths[dest] = (
            [lowers[dest][m.index] for m in window],
            [uppers[dest][m.index] for m in window],
        )

    rep = evaluation.report(point_paths, interval_paths, actuals, season=config.mase_season)
    evaluation.write_point_metrics(rep, out_dir / F_POINT_METRICS)
    evaluation.write_interval_metrics(rep, out_dir / F_INTERVAL_METRICS)

    # seasonal-naive benchmark from the input arrivals over the same window
    raw = load_csv(config.data["arrivals"])
    bench_paths: dict[str, ForecastResult] = {}
    for dest in sorted(point_paths):
        s = raw.get(dest)
        if s is None:
            continue
        s = impute(s) if not s.is_complete() else s
        horizon = s.end.months_until(window[-1])
        fc = fit_forecast(s, ModelSpec("seasonal_naive"), horizon)
        mean = [fc.at(m) for m in window]
        bench_paths[dest] = ForecastResult(origin, len(window), tuple(mean), model_id="seasonal_naive")
    bench = evaluation.report(bench_paths, None, actuals, season=config.mase_season)
    evaluation.write_point_metrics(bench, out_dir / F_BENCHMARK)

    summary = [
        "# Evaluation summary",
        "",
        f"Window: {window[0]}..{window[-1]}",
        "",
        "## Pipeline forecasts",
        "",
        evaluation.markdown_summary(rep),
        "## Seasonal-naive benchmark",
        "",
        evaluation.markdown_summary(bench),
    ]
    (out_dir / F_SUMMARY).write_text("\n".join(summary), encoding="utf-8")
    outcome.files += [F_POINT_METRICS, F_INTERVAL_METRICS, F_BENCHMARK, F_SUMMARY]
    return outcome


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

_STAGE_FN = {
    "base": stage_base,
    "reference": stage_reference,
    "recovery": stage_recovery,
    "evaluate": stage_evaluate,
}


def run(config: PipelineConfig, out_dir: str | Path, stages: Optional[list[str]] = None) -> RunManifest:
    """Execute the pipeline stages in order and write the run manifest.

    ``stages`` defaults to every stage (evaluate is skipped with a warning
    when no actuals file is configured). Stage failures abort with the stage
    name and destination; per-destination soft failures surface as warnings.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config_hash=config.config_hash(), seed=config.seed)

    todo = list(stages) if stages else list(STAGES)
    for stage in todo:
        if stage not in _STAGE_FN:
            raise StageError(stage, f"unknown stage; expected one of {STAGES}")
        if stage == "evaluate" and not config.data.get("actuals"):
            manifest.warnings.append("evaluate skipped: no actuals file configured")
            continue
        t0 = time.perf_counter()
        outcome = _STAGE_FN[stage](config, out)
        manifest.timings[stage] = time.perf_counter() - t0
        manifest.warnings.extend(outcome.warnings)
        manifest.outputs.extend(outcome.files)
    manifest.write(out)
    return manifest
