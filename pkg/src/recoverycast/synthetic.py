"""Synthetic dataset generator for self-contained pipeline runs.

Each destination gets a trending, multiplicatively seasonal arrivals series
that collapses at a structural break and then climbs back toward a
suppressed fraction of its no-break trajectory. Keyword series lead arrivals
by one month (so lag screening has a known answer), flight counts track
arrivals with a noisy load factor, and a few destinations ship without
flight data to exercise the index-only fallback. The no-break counterfactual
and the suppression factor are stored alongside the data for scoring.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import substream
from .series import MonthKey, format_number

REGION_NAMES = ("region_a", "region_b", "region_c", "region_d", "region_e", "region_f")


@dataclass(frozen=True)
class SyntheticSpec:
    destinations: int = 20
    years: int = 8  # pre-break history length
    break_month: MonthKey = MonthKey(2020, 1)
    recovery_shape: str = "linear"  # linear | quadratic | logistic
    suppression: float = 0.7  # terminal level relative to the no-break path
    input_end: MonthKey = MonthKey(2023, 1)  # last arrivals month shipped as input
    signals_end: MonthKey = MonthKey(2023, 6)  # last keyword/flight month
    recovery_data_start: MonthKey = MonthKey(2023, 2)  # first climbing month
    recovery_target: MonthKey = MonthKey(2024, 7)  # month where suppression is reached
    truth_end: MonthKey = MonthKey(2024, 12)
    hole_fraction: float = 0.02
    flightless: int = 4  # destinations without flight data
    seasonal_amplitude: float | None = None  # None draws per destination

    def __post_init__(self):
        if self.recovery_shape not in ("linear", "quadratic", "logistic"):
            raise ValueError(f"unknown recovery shape {self.recovery_shape!r}")
        if not 0 < self.suppression <= 1.5:
            raise ValueError("suppression must be in (0, 1.5]")
        if self.destinations < 1 or self.years < 3:
            raise ValueError("need at least 1 destination and 3 years of history")

    @property
    def history_start(self) -> MonthKey:
        return MonthKey(self.break_month.year - self.years, 1)


@dataclass
class SyntheticDataset:
    spec: SyntheticSpec
    seed: int
    regions: dict = field(default_factory=dict)  # region -> [destinations]
    truth: dict = field(default_factory=dict)  # destination -> full truth values
    arrivals: dict = field(default_factory=dict)  # destination -> input values (with holes)
    keywords: dict = field(default_factory=dict)  # destination -> {keyword: values}
    flights: dict = field(default_factory=dict)  # destination -> values (may be absent)
    start: MonthKey = MonthKey(2012, 1)


def _progress(u: np.ndarray, shape: str) -> np.ndarray:
    """Normalized recovery progress on [0, 1] for normalized time u."""
    if shape == "linear":
        return u
    if shape == "quadratic":
        return u**2
    # logistic, rescaled so progress(0)=0 and progress(1)=1
    raw = 1.0 / (1.0 + np.exp(-8.0 * (u - 0.5)))
    lo, hi = 1.0 / (1.0 + np.exp(4.0)), 1.0 / (1.0 + np.exp(-4.0))
    return (raw - lo) / (hi - lo)


def generate(spec: SyntheticSpec, seed: int) -> SyntheticDataset:
    ds = SyntheticDataset(spec=spec, seed=seed, start=spec.history_start)
    names = [f"dest_{i + 1:02d}" for i in range(spec.destinations)]

    # round-robin region assignment keeps group sizes within one of each other
    regions: dict[str, list[str]] = {}
    for i, name in enumerate(names):
        region = REGION_NAMES[i % min(len(REGION_NAMES), spec.destinations)]
        regions.setdefault(region, []).append(name)
    ds.regions = {r: regions[r] for r in REGION_NAMES if r in regions}

    n_months = spec.history_start.months_until(spec.truth_end) + 1
    t = np.arange(n_months, dtype=float)
    months = [spec.history_start.plus(i) for i in range(n_months)]
    i_break = spec.history_start.months_until(spec.break_month)
    i_climb = spec.history_start.months_until(spec.recovery_data_start)
    i_target = spec.history_start.months_until(spec.recovery_target)

    rng_pick = substream(seed, "synthetic", "flightless")
    flightless = set(rng_pick.choice(names, size=min(spec.flightless, len(names)), replace=False))

    for name in names:
        rng = substream(seed, "synthetic", name)
        level = float(np.exp(rng.uniform(np.log(8e3), np.log(2e5))))
        growth = float(rng.uniform(0.002, 0.006))
        amp = spec.seasonal_amplitude if spec.seasonal_amplitude is not None else float(rng.uniform(0.1, 0.3))
        phase = float(rng.uniform(0, 12))
        noise_sd = float(rng.uniform(0.02, 0.05))

        month_no = np.array([m.month for m in months], dtype=float)
        seasonal = 1.0 + amp * np.sin(2 * np.pi * (month_no - phase) / 12.0)
        seasonal = seasonal / np.mean(seasonal)
        counterfactual = level * (1.0 + growth * t) * seasonal
        noise = np.exp(rng.normal(0.0, noise_sd, n_months))

        collapse = float(rng.uniform(0.02, 0.06))
        p0 = float(rng.uniform(0.08, 0.15))
        factor = np.ones(n_months)
        factor[i_break:i_climb] = collapse
        u = np.clip((np.arange(n_months) - i_climb) / max(i_target - i_climb, 1), 0.0, 1.0)
        ramp = p0 + (spec.suppression - p0) * _progress(u, spec.recovery_shape)
        factor[i_climb:] = ramp[i_climb:]

        truth = np.maximum(np.round(counterfactual * factor * noise), 0.0)
        ds.truth[name] = truth

        # input arrivals: truncated at input_end, a few interior pre-break holes
        n_input = spec.history_start.months_until(spec.input_end) + 1
        values: list = [float(v) for v in truth[:n_input]]
        n_holes = int(spec.hole_fraction * i_break)
        if n_holes > 0:
            holes = rng.choice(np.arange(2, i_break - 2), size=n_holes, replace=False)
            for h in holes:
                values[int(h)] = None
        ds.arrivals[name] = values

        # keywords lead arrivals by one month; the third keyword is noise
        n_sig = spec.history_start.months_until(spec.signals_end) + 1
        lead = truth[1 : n_sig + 1]
        kw = {}
        for j, scale_rng in enumerate((0.004, 0.009)):
            c = scale_rng * float(rng.uniform(0.7, 1.3))
            kw[f"{name}_kw{j + 1}"] = np.maximum(
                np.round(c * lead * np.exp(rng.normal(0, 0.05, n_sig)) + rng.uniform(1, 3)), 1.0
            )
        kw[f"{name}_noise"] = np.round(rng.uniform(20, 80, n_sig))
        ds.keywords[name] = kw

        if name not in flightless:
            load = float(rng.uniform(120, 220))
            ds.flights[name] = np.maximum(
                np.round(truth[:n_sig] / load * np.exp(rng.normal(0, 0.08, n_sig))), 1.0
            )
    return ds


# ---------------------------------------------------------------------------
# File emission
# ---------------------------------------------------------------------------


def _write_long(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_dataset(ds: SyntheticDataset, out_dir: str | Path) -> dict[str, str]:
    """Write all input files plus ground truth; returns the path map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = ds.spec
    start = ds.start

    def month(i: int) -> MonthKey:
        return start.plus(i)

    rows = []
    for dest in sorted(ds.arrivals):
        for i, v in enumerate(ds.arrivals[dest]):
            m = month(i)
            rows.append([dest, m.year, m.month, "" if v is None else format_number(v)])
    _write_long(out / "arrivals.csv", ["destination", "year", "month", "arrivals"], rows)

    rows = []
    for dest in sorted(ds.keywords):
        for kw in sorted(ds.keywords[dest]):
            for i, v in enumerate(ds.keywords[dest][kw]):
                m = month(i)
                rows.append([dest, kw, m.year, m.month, format_number(v)])
    _write_long(out / "keywords.csv", ["destination", "keyword", "year", "month", "volume"], rows)

    rows = []
    for dest in sorted(ds.flights):
        for i, v in enumerate(ds.flights[dest]):
            m = month(i)
            rows.append([dest, m.year, m.month, format_number(v)])
    _write_long(out / "flights.csv", ["destination", "year", "month", "flights"], rows)

    rows = []
    for dest in sorted(ds.truth):
        for i, v in enumerate(ds.truth[dest]):
            m = month(i)
            rows.append([dest, m.year, m.month, format_number(v)])
    _write_long(out / "actuals.csv", ["destination", "year", "month", "arrivals"], rows)

    # judgment scores reverse-engineered from the known suppression factor
    avg_target = (spec.suppression - 0.45) / 0.10
    base = int(np.clip(round(avg_target), 1, 5))
    rows = []
    for dest in sorted(ds.truth):
        rows.append([dest, base, base, base, format_number(spec.suppression)])
    _write_long(out / "scores.csv", ["destination", "policy", "distance", "recovery", "r"], rows)

    truth_meta = {
        "seed": ds.seed,
        "recovery_shape": spec.recovery_shape,
        "suppression": spec.suppression,
        "break_month": str(spec.break_month),
        "history_start": str(start),
        "regions": ds.regions,
        "flightless": sorted(set(ds.truth) - set(ds.flights)),
    }
    with open(out / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth_meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return {
        "arrivals": str(out / "arrivals.csv"),
        "keywords": str(out / "keywords.csv"),
        "flights": str(out / "flights.csv"),
        "actuals": str(out / "actuals.csv"),
        "scores": str(out / "scores.csv"),
        "truth": str(out / "truth.json"),
    }
