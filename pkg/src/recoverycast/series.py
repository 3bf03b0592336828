"""Calendar-aware monthly series: the carrier type for everything else.

A :class:`MonthlySeries` is an immutable, contiguous monthly vector anchored
at a :class:`MonthKey`. Values may be missing (None); :func:`impute` fills
holes with a local-linear-trend Kalman smoother. CSV ingestion uses a long
format of ``destination,year,month,arrivals`` rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import AllMissing, DuplicateObservation, OutOfRange, SchemaError

MONTHS_PER_YEAR = 12


@dataclass(frozen=True, order=True)
class MonthKey:
    """A calendar month. Ordering and arithmetic are exact integer math."""

    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= MONTHS_PER_YEAR:
            raise ValueError(f"month must be in 1..12, got {self.month}")

    @property
    def index(self) -> int:
        """Months since 0000-01; total order consistent with the calendar."""
        return self.year * MONTHS_PER_YEAR + (self.month - 1)

    @classmethod
    def from_index(cls, idx: int) -> "MonthKey":
        return cls(idx // MONTHS_PER_YEAR, idx % MONTHS_PER_YEAR + 1)

    @classmethod
    def parse(cls, text: str) -> "MonthKey":
        """Parse ``YYYY-MM`` (also accepts the compact ``YYYYMM`` form)."""
        t = text.strip()
        if "-" in t:
            y, m = t.split("-", 1)
        elif len(t) == 6 and t.isdigit():
            y, m = t[:4], t[4:]
        else:
            raise ValueError(f"cannot parse month {text!r}")
        return cls(int(y), int(m))

    def plus(self, months: int) -> "MonthKey":
        return MonthKey.from_index(self.index + months)

    def months_until(self, other: "MonthKey") -> int:
        """Signed month distance, other - self."""
        return other.index - self.index

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


@dataclass(frozen=True)
class MonthlySeries:
    """Contiguous monthly observations starting at ``start``.

    ``values[i]`` belongs to month ``start + i``. Missing observations are
    None; present values must be non-negative.
    """

    start: MonthKey
    values: tuple = field()
    name: str = ""

    def __post_init__(self):
        vals = tuple(None if v is None else float(v) for v in self.values)
        if len(vals) < 1:
            raise ValueError("series must contain at least one month")
        for v in vals:
            if v is not None and (not np.isfinite(v) or v < 0):
                raise ValueError(f"present values must be finite and >= 0, got {v}")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> MonthKey:
        return self.start.plus(len(self) - 1)

    def months(self) -> list[MonthKey]:
        return [self.start.plus(i) for i in range(len(self))]

    def index_of(self, key: MonthKey) -> int:
        i = self.start.months_until(key)
        if not 0 <= i < len(self):
            raise OutOfRange(f"{key} outside series span {self.start}..{self.end}")
        return i

    def at(self, key: MonthKey) -> Optional[float]:
        return self.values[self.index_of(key)]

    def window(self, first: MonthKey, last: MonthKey) -> "MonthlySeries":
        """Sub-series covering first..last inclusive."""
        i, j = self.index_of(first), self.index_of(last)
        if j < i:
            raise OutOfRange(f"window {first}..{last} is empty")
        return MonthlySeries(first, self.values[i : j + 1], self.name)

    def to_array(self) -> np.ndarray:
        """Float array with NaN in missing positions."""
        return np.array([np.nan if v is None else v for v in self.values], dtype=float)

    def is_complete(self) -> bool:
        return all(v is not None for v in self.values)

    def missing_mask(self) -> np.ndarray:
        return np.array([v is None for v in self.values], dtype=bool)

    def with_values(self, values: Sequence[Optional[float]]) -> "MonthlySeries":
        return MonthlySeries(self.start, tuple(values), self.name)


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation boundary months, both inclusive endpoints."""

    train_end: MonthKey
    validation_end: MonthKey

    def __post_init__(self):
        if not self.train_end < self.validation_end:
            raise ValueError("train_end must precede validation_end")


def split(series: MonthlySeries, spec: SplitSpec) -> tuple[MonthlySeries, MonthlySeries]:
    """Cut ``series`` into (train, validation) at the given boundaries.

    Train runs from the series start through ``train_end``; validation from
    the following month through ``validation_end``. Both boundaries must lie
    inside the series span. Observations are carried over bit-identically.
    """
    train = series.window(series.start, spec.train_end)
    validation = series.window(spec.train_end.plus(1), spec.validation_end)
    return train, validation


# ---------------------------------------------------------------------------
# Missing-value imputation: local-linear-trend state space + RTS smoothing
# ---------------------------------------------------------------------------


def llt_variances(values: np.ndarray) -> tuple[float, float, float]:
    """Method-of-moments variances for the local-linear-trend model.

    The model is y_t = mu_t + eps, mu_t = mu_{t-1} + beta_{t-1} + xi,
    beta_t = beta_{t-1} + zeta. Second differences of y have autocovariances
    g0 = s_zeta + 2 s_xi + 6 s_eps, g1 = -s_xi - 4 s_eps, g2 = s_eps, which
    we invert on runs of consecutive present values. Estimates are floored
    at a small fraction of the observation variance so the smoother stays
    well posed on degenerate inputs.
    """
    present = values[np.isfinite(values)]
    scale = float(np.var(present)) if present.size > 1 else 1.0
    floor = max(scale, 1.0) * 1e-8

    d2 = []
    for i in range(2, len(values)):
        if np.isfinite(values[i]) and np.isfinite(values[i - 1]) and np.isfinite(values[i - 2]):
            d2.append(values[i] - 2 * values[i - 1] + values[i - 2])
    d2 = np.asarray(d2)
    if d2.size < 3:
        base = max(scale * 0.1, floor)
        return base, base * 0.1, base * 0.01

    g0 = float(np.mean(d2 * d2))
    g1 = float(np.mean(d2[1:] * d2[:-1]))
    g2 = float(np.mean(d2[2:] * d2[:-2]))

    s_eps = max(g2, floor)
    s_xi = max(-g1 - 4 * s_eps, floor)
    s_zeta = max(g0 - 2 * s_xi - 6 * s_eps, floor)
    return s_eps, s_xi, s_zeta


def _llt_smooth(y: np.ndarray, s_eps: float, s_xi: float, s_zeta: float) -> np.ndarray:
    """Fixed-interval (RTS) smoothed level path for a local-linear-trend model.

    NaNs in ``y`` are treated as missing observations: the filter step is
    skipped and the smoother interpolates through them.
    """
    T_mat = np.array([[1.0, 1.0], [0.0, 1.0]])
    Q = np.diag([s_xi, s_zeta])
    Z = np.array([1.0, 0.0])
    n = len(y)

    first = int(np.flatnonzero(np.isfinite(y))[0])
    x = np.array([y[first], 0.0])
    scale = max(s_eps, s_xi, s_zeta, 1.0)
    P = np.diag([scale * 1e8, scale * 1e8])  # approximately diffuse start

    xf = np.zeros((n, 2))
    Pf = np.zeros((n, 2, 2))
    xp = np.zeros((n, 2))
    Pp = np.zeros((n, 2, 2))

    for t in range(n):
        if t == 0:
            x_pred, P_pred = x, P
        else:
            x_pred = T_mat @ xf[t - 1]
            P_pred = T_mat @ Pf[t - 1] @ T_mat.T + Q
        xp[t], Pp[t] = x_pred, P_pred
        if np.isfinite(y[t]):
            S = Z @ P_pred @ Z + s_eps
            K = P_pred @ Z / S
            innov = y[t] - Z @ x_pred
            xf[t] = x_pred + K * innov
            Pf[t] = P_pred - np.outer(K, Z) @ P_pred
        else:
            xf[t], Pf[t] = x_pred, P_pred

    xs = np.zeros((n, 2))
    xs[-1] = xf[-1]
    Ps = Pf[-1]
    for t in range(n - 2, -1, -1):
        J = Pf[t] @ T_mat.T @ np.linalg.pinv(Pp[t + 1])
        xs[t] = xf[t] + J @ (xs[t + 1] - xp[t + 1])
        Ps = Pf[t] + J @ (Ps - Pp[t + 1]) @ J.T
    return xs[:, 0]


def impute(series: MonthlySeries) -> MonthlySeries:
    """Fill missing months with the smoothed local-linear-trend level.

    Present values are passed through unchanged; imputed values are clamped
    at zero since arrivals are counts. Raises AllMissing when fewer than two
    observations are present.
    """
    y = series.to_array()
    present = np.isfinite(y)
    if present.sum() < 2:
        raise AllMissing(f"series {series.name!r} has {int(present.sum())} present values")
    if present.all():
        return series

    s_eps, s_xi, s_zeta = llt_variances(y)
    level = _llt_smooth(y, s_eps, s_xi, s_zeta)
    out = [v if v is not None else max(0.0, float(level[i])) for i, v in enumerate(series.values)]
    return series.with_values(out)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("destination", "year", "month", "arrivals")


def load_csv(path: str | Path) -> dict[str, MonthlySeries]:
    """Read a long-format arrivals CSV into one series per destination.

    Rows may arrive in any order; months between a destination's first and
    last observed month that have no row become missing values. An optional
    trailing ``kind`` column (written by :func:`write_csv`) is ignored.
    """
    rows: dict[str, dict[int, Optional[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header[:4]) != CSV_COLUMNS:
            raise SchemaError(f"expected header {','.join(CSV_COLUMNS)}", row=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 4:
                raise SchemaError("expected at least 4 columns", row=lineno)
            dest = row[0].strip()
            if not dest:
                raise SchemaError("empty destination", row=lineno)
            try:
                key = MonthKey(int(row[1]), int(row[2]))
            except (ValueError, TypeError) as exc:
                raise SchemaError(f"bad year/month: {exc}", row=lineno) from None
            raw = row[3].strip()
            if raw == "":
                value: Optional[float] = None
            else:
                try:
                    value = float(raw)
                except ValueError:
                    raise SchemaError(f"bad arrivals value {raw!r}", row=lineno) from None
                if not np.isfinite(value) or value < 0:
                    raise SchemaError(f"arrivals must be >= 0, got {raw}", row=lineno)
            per = rows.setdefault(dest, {})
            if key.index in per:
                raise DuplicateObservation(f"duplicate observation for {dest} {key}")
            per[key.index] = value

    out: dict[str, MonthlySeries] = {}
    for dest in sorted(rows):
        per = rows[dest]
        lo, hi = min(per), max(per)
        values = [per.get(i) for i in range(lo, hi + 1)]
        out[dest] = MonthlySeries(MonthKey.from_index(lo), tuple(values), name=dest)
    return out


def write_csv(
    series_map: Mapping[str, MonthlySeries],
    path: str | Path,
    imputed: Mapping[str, Iterable[bool]] | None = None,
) -> None:
    """Write series in the long format with a ``kind`` column.

    ``imputed`` optionally flags positions filled by :func:`impute`; those
    rows carry kind ``imputed``, everything else ``actual``. Destinations and
    months are written in sorted order so identical inputs produce identical
    bytes.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*CSV_COLUMNS, "kind"])
        for dest in sorted(series_map):
            s = series_map[dest]
            flags = list(imputed[dest]) if imputed and dest in imputed else [False] * len(s)
            for i, key in enumerate(s.months()):
                v = s.values[i]
                writer.writerow(
                    [
                        dest,
                        key.year,
                        key.month,
                        "" if v is None else format_number(v),
                        "imputed" if flags[i] else "actual",
                    ]
                )


def format_number(x: float) -> str:
    """Shortest exact decimal form; integers drop the trailing ``.0``."""
    f = float(x)
    if f.is_integer() and abs(f) < 1e15:
        return str(int(f))
    return repr(f)
