"""Building sensor CSV ingestion, gap imputation and per-feature moment statistics."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, InputError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ColumnRoleMap:
    """Binds CSV column names to the quantities the COP equation needs."""

    timestamp_col: str
    setpoint_col: str
    t_in_col: str
    t_out_col: str
    pump_speed_col: str
    energy_col: str
    flow_factor_col: str | None = None
    exogenous_cols: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "exogenous_cols", tuple(self.exogenous_cols))
        named = self.named_columns()
        if len(set(named)) != len(named):
            raise ConfigError(f"column roles must name distinct columns, got {named}")
        if self.setpoint_col in self.exogenous_cols:
            raise ConfigError(f"set-point column {self.setpoint_col!r} cannot be exogenous")

    @property
    def factor_roles(self) -> dict[str, str]:
        """COP factor name -> column, in emulator model order."""
        roles = {"pump_speed": self.pump_speed_col}
        if self.flow_factor_col is not None:
            roles["flow_factor"] = self.flow_factor_col
        roles.update(t_in=self.t_in_col, t_out=self.t_out_col, energy=self.energy_col)
        return roles

    def named_columns(self) -> list[str]:
        cols = [self.timestamp_col, self.setpoint_col, self.t_in_col, self.t_out_col,
                self.pump_speed_col, self.energy_col]
        if self.flow_factor_col is not None:
            cols.append(self.flow_factor_col)
        return cols + list(self.exogenous_cols)

    def required_columns(self) -> list[str]:
        return [c for c in self.named_columns() if c not in self.exogenous_cols]

    @classmethod
    def from_dict(cls, d: Mapping) -> ColumnRoleMap:
        try:
            return cls(
                timestamp_col=d["timestamp_col"],
                setpoint_col=d["setpoint_col"],
                t_in_col=d["t_in_col"],
                t_out_col=d["t_out_col"],
                pump_speed_col=d["pump_speed_col"],
                energy_col=d["energy_col"],
                flow_factor_col=d.get("flow_factor_col"),
                exogenous_cols=tuple(d.get("exogenous_cols", ())),
            )
        except KeyError as exc:
            raise ConfigError(f"column role map is missing {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        return {
            "timestamp_col": self.timestamp_col,
            "setpoint_col": self.setpoint_col,
            "t_in_col": self.t_in_col,
            "t_out_col": self.t_out_col,
            "pump_speed_col": self.pump_speed_col,
            "energy_col": self.energy_col,
            "flow_factor_col": self.flow_factor_col,
            "exogenous_cols": list(self.exogenous_cols),
        }


@dataclass(frozen=True)
class FeatureStats:
    mean: float
    std: float
    skew: float
    kurtosis: float
    n: int


@dataclass(frozen=True, eq=False)
class BuildingTimeSeries:
    """Ordered sensor records for one building.

    ``values`` is a (k, c) float array over ``columns`` (the timestamp column is
    held separately in ``timestamps``); NaN marks a missing cell.
    """

    columns: tuple[str, ...]
    values: np.ndarray
    timestamps: tuple[str, ...]
    roles: ColumnRoleMap
    dropped: tuple[str, ...] = field(default=())
    ts_position: int = 0  # where the timestamp sat in the source header

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        if values.ndim != 2 or values.shape != (len(self.timestamps), len(self.columns)):
            raise InputError(
                f"values shape {values.shape} does not match "
                f"{len(self.timestamps)} rows x {len(self.columns)} columns")
        if len(self.timestamps) < 2:
            raise InputError(f"a building series needs at least 2 rows, got {len(self.timestamps)}")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def feature_order(self) -> tuple[str, ...]:
        return self.columns

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())

    def index(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise InputError(f"column {column!r} not in series") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def row(self, t: int) -> dict[str, float]:
        return dict(zip(self.columns, self.values[t].tolist()))

    @property
    def header(self) -> list[str]:
        cols = list(self.columns)
        cols.insert(self.ts_position, self.roles.timestamp_col)
        return cols

    def with_values(self, values: np.ndarray) -> BuildingTimeSeries:
        return replace(self, values=values)


def parse_timestamp(text: str) -> float:
    """ISO-8601 string or numeric epoch -> seconds."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        # naive stamps are compared among themselves only
        return (dt - datetime(1970, 1, 1)).total_seconds()
    return dt.timestamp()


def _cell(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        return math.nan
    return v if math.isfinite(v) else math.nan


def load_csv(path: str | Path, roles: ColumnRoleMap) -> BuildingTimeSeries:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"source file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    for name in roles.named_columns():
        if name not in header:
            raise ConfigError(f"{path}: declared column {name!r} not in header")
    ts_idx = header.index(roles.timestamp_col)
    data_cols = [h for i, h in enumerate(header) if i != ts_idx]
    body = rows[1:]
    if not body:
        raise InputError(f"{path}: no data rows")

    stamps, times, values = [], [], []
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise InputError(f"{path}: row {i} has {len(r)} cells, header has {len(header)}")
        try:
            times.append(parse_timestamp(r[ts_idx]))
        except ValueError:
            raise InputError(f"{path}: unparseable timestamp {r[ts_idx]!r} at row {i}") from None
        stamps.append(r[ts_idx].strip())
        values.append([_cell(c) for j, c in enumerate(r) if j != ts_idx])

    t = np.asarray(times)
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise InputError(f"{path}: timestamps not strictly increasing at row {int(bad[0]) + 1}")
    return BuildingTimeSeries(tuple(data_cols), np.asarray(values, dtype=float), tuple(stamps), roles,
                              ts_position=ts_idx)


def _fill(col: np.ndarray) -> np.ndarray:
    out = col.copy()
    ok = ~np.isnan(out)
    # forward fill: index of the last valid entry at or before each position
    idx = np.where(ok, np.arange(len(out)), 0)
    np.maximum.accumulate(idx, out=idx)
    out = out[idx]
    # backward fill for the leading gap
    first = int(np.argmax(ok))
    out[:first] = out[first]
    return out


def impute(series: BuildingTimeSeries) -> BuildingTimeSeries:
    """Forward-fill then backward-fill each column; all-missing columns are dropped."""
    keep, cols, dropped = [], [], list(series.dropped)
    required = set(series.roles.required_columns())
    for j, name in enumerate(series.columns):
        col = series.values[:, j]
        if np.isnan(col).all():
            if name in required:
                raise InputError(f"role column {name!r} has no values; cannot impute a COP factor")
            dropped.append(name)
            log.warning("dropping all-missing column %r", name)
            continue
        keep.append(_fill(col) if np.isnan(col).any() else col)
        cols.append(name)
    roles = series.roles
    if dropped and any(c in roles.exogenous_cols for c in dropped):
        roles = replace(roles, exogenous_cols=tuple(c for c in roles.exogenous_cols if c not in dropped))
    return BuildingTimeSeries(tuple(cols), np.column_stack(keep), series.timestamps, roles, tuple(dropped),
                              min(series.ts_position, len(cols)))


def moment_stats(x: Sequence[float] | np.ndarray) -> FeatureStats:
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        raise InputError(f"moment statistics need at least 2 samples, got {n}")
    mean = float(x.mean())
    d = x - mean
    m2 = float(np.mean(d**2))
    if m2 <= 0.0 or np.ptp(x) == 0.0:
        return FeatureStats(mean, 0.0, 0.0, 0.0, n)
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    return FeatureStats(mean, math.sqrt(m2), m3 / m2**1.5, m4 / m2**2 - 3.0, n)


def compute_feature_stats(series: BuildingTimeSeries, column: str) -> FeatureStats:
    col = series.column(column)
    if np.isnan(col).any():
        raise InputError(f"column {column!r} still has missing values; impute first")
    return moment_stats(col)


def feature_matrix(series: BuildingTimeSeries, order: Sequence[str] | None = None) -> np.ndarray:
    """Rows of X laid out in ``order`` (defaults to the series' feature order)."""
    if order is None:
        return np.array(series.values)
    return np.column_stack([series.column(c) for c in order])
