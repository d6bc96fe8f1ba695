"""Loading, validation, detrending and pruning of hourly plant/demand series.

File layout::

    plants.csv   id,technology,lat,lon,invest_cost_per_kw,om_cost_per_kw_year
    outputs.csv  timestamp,<id1>,<id2>,...      per-unit hourly output
    demand.csv   timestamp,demand_mw
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.ndimage import maximum_filter1d

from .errors import DatasetError, GapError, ValidationError
from .stats import correlation_matrix

PLANT_COLUMNS = ["id", "technology", "lat", "lon", "invest_cost_per_kw", "om_cost_per_kw_year"]
DEMAND_COLUMNS = ["timestamp", "demand_mw"]
TECHNOLOGIES = ("wind", "pv")
HOURS_PER_DAY = 24


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PlantSeries:
    id: str
    technology: str
    lat: float
    lon: float
    output: np.ndarray = field(repr=False)
    invest_cost: float = 0.0
    om_cost: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "output", _frozen(self.output))
        if self.technology not in TECHNOLOGIES:
            raise ValidationError(f"plant {self.id}: unknown technology {self.technology!r}")
        if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"plant {self.id}: coordinates ({self.lat}, {self.lon}) out of range")
        out = self.output
        if out.size and (not np.all(np.isfinite(out)) or out.min() < 0.0 or out.max() > 1.0):
            raise ValidationError(f"plant {self.id}: per-unit output outside [0, 1]")

    @property
    def mean(self) -> float:
        return float(self.output.mean())


@dataclass(frozen=True)
class DemandSeries:
    values: np.ndarray = field(repr=False)
    peak: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.size and self.values.min() <= 0.0:
            raise ValidationError("demand values must be positive")
        if self.peak <= 0.0:
            raise ValidationError("peak load must be positive")

    @property
    def mean_mw(self) -> float:
        return float(self.values.mean() * self.peak)

    def mw(self) -> np.ndarray:
        return self.values * self.peak


@dataclass(frozen=True)
class DemandGen:
    """Demand recast as a generator with negative output and capacity P_L."""

    output: np.ndarray = field(repr=False)
    capacity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "output", _frozen(self.output))

    @property
    def capacity_factor(self) -> float:
        return float(self.output.mean())

    @property
    def is_flat(self) -> bool:
        return bool(np.ptp(self.output) == 0.0)


@dataclass(frozen=True)
class Dataset:
    plants: tuple
    demand: DemandSeries | None
    timestamps: pd.DatetimeIndex

    @property
    def n_steps(self) -> int:
        return len(self.timestamps)

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.plants]

    def calendar(self) -> np.ndarray:
        """Per-step ``(year, month, hour)`` rows."""
        ts = self.timestamps
        return np.column_stack([ts.year, ts.month, ts.hour]).astype(int)

    def replace(self, **kw) -> "Dataset":
        from dataclasses import replace

        return replace(self, **kw)


def _parse_timestamps(values, source) -> pd.DatetimeIndex:
    try:
        ts = pd.DatetimeIndex(pd.to_datetime(pd.Series(values), format="ISO8601"))
    except (ValueError, TypeError) as exc:
        raise DatasetError(f"{source}: unparseable timestamp ({exc})") from exc
    return ts


def check_hourly(ts: pd.DatetimeIndex, source: str = "series") -> None:
    """Raise GapError on a missing hour, DatasetError on any other irregularity."""
    if len(ts) < 2:
        return
    step = pd.Timedelta(hours=1)
    diffs = ts[1:] - ts[:-1]
    bad = np.flatnonzero(diffs != step)
    if bad.size == 0:
        return
    i = bad[0]
    if diffs[i] <= pd.Timedelta(0):
        raise DatasetError(f"{source}: timestamps not strictly increasing at {ts[i + 1]}")
    if diffs[i] % step == pd.Timedelta(0):
        raise GapError(ts[i] + step, f"{source}: missing hourly timestamp {(ts[i] + step).isoformat()}")
    raise DatasetError(f"{source}: non-hourly step between {ts[i]} and {ts[i + 1]}")


def read_plants(plants_path, outputs_path):
    meta = pd.read_csv(plants_path, dtype={"id": str, "technology": str})
    if list(meta.columns) != PLANT_COLUMNS:
        raise DatasetError(f"{plants_path}: header must be {','.join(PLANT_COLUMNS)}")
    if meta["id"].duplicated().any():
        raise DatasetError(f"{plants_path}: duplicate plant ids")
    out = pd.read_csv(outputs_path, dtype={"timestamp": str})
    if not len(out.columns) or out.columns[0] != "timestamp":
        raise DatasetError(f"{outputs_path}: first column must be timestamp")
    ids = list(meta["id"])
    missing = [i for i in ids if i not in out.columns]
    if missing:
        raise DatasetError(f"{outputs_path}: no output column for plants {missing}")
    ts = _parse_timestamps(out["timestamp"], outputs_path)
    check_hourly(ts, str(outputs_path))
    plants = []
    for row in meta.itertuples(index=False):
        col = pd.to_numeric(out[row.id], errors="coerce").to_numpy(dtype=float)
        if np.isnan(col).any():
            raise ValidationError(f"plant {row.id}: missing or non-numeric output")
        bad = np.flatnonzero((col < 0.0) | (col > 1.0))
        if bad.size:
            raise ValidationError(
                f"plant {row.id}: output {col[bad[0]]} at {ts[bad[0]]} outside [0, 1]")
        plants.append(PlantSeries(id=row.id, technology=str(row.technology).strip().lower(),
                                  lat=float(row.lat), lon=float(row.lon), output=col,
                                  invest_cost=float(row.invest_cost_per_kw),
                                  om_cost=float(row.om_cost_per_kw_year)))
    return tuple(plants), ts


def read_demand(demand_path):
    df = pd.read_csv(demand_path, dtype={"timestamp": str})
    if list(df.columns) != DEMAND_COLUMNS:
        raise DatasetError(f"{demand_path}: header must be {','.join(DEMAND_COLUMNS)}")
    ts = _parse_timestamps(df["timestamp"], demand_path)
    check_hourly(ts, str(demand_path))
    mw = pd.to_numeric(df["demand_mw"], errors="coerce").to_numpy(dtype=float)
    if np.isnan(mw).any():
        raise ValidationError(f"{demand_path}: missing or non-numeric demand")
    return mw, ts


def load_dataset(plants_path, outputs_path, demand_path=None, window_days: int | None = 3) -> Dataset:
    """Read and align plant outputs and (optionally) demand.

    Demand is detrended with ``detrend_demand``; ``window_days=None`` only
    divides by the overall peak.
    """
    plants, ts = read_plants(plants_path, outputs_path)
    demand = None
    if demand_path is not None:
        mw, dts = read_demand(demand_path)
        if len(dts) != len(ts):
            raise DatasetError(f"demand has {len(dts)} steps, plant outputs have {len(ts)}")
        if not dts.equals(ts):
            raise DatasetError("demand and plant timestamps are not aligned")
        if window_days is None:
            if mw.min() <= 0.0:
                raise ValidationError("demand must be positive")
            demand = DemandSeries(values=mw / mw.max(), peak=float(mw.max()))
        else:
            demand = detrend_demand(mw, window_days)
    return Dataset(plants=plants, demand=demand, timestamps=ts)


def detrend_demand(raw, window_days: int = 3) -> DemandSeries:
    """Divide each hour by the maximum over the surrounding ``±window_days``.

    The window is centred and truncated at the series ends. ``peak`` keeps
    the raw maximum in MW as the normalization anchor.
    """
    raw = np.asarray(raw, dtype=float)
    if window_days < 1:
        raise ValidationError("window_days must be >= 1")
    if raw.size == 0 or not np.all(np.isfinite(raw)) or raw.min() <= 0.0:
        raise ValidationError("raw demand must be positive")
    half = window_days * HOURS_PER_DAY
    local_max = maximum_filter1d(raw, size=2 * half + 1, mode="nearest")
    return DemandSeries(values=raw / local_max, peak=float(raw.max()))


def prune_correlated(plants, threshold: float = 0.99):
    """Drop plants until no pair has Pearson correlation above ``threshold``.

    The most correlated pair is resolved first; the plant with the higher
    mean output survives, then the lexicographically smaller id.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValidationError("threshold must lie in (0, 1]")
    plants = list(plants)
    if len(plants) < 2:
        return tuple(plants)
    Y = np.column_stack([p.output for p in plants])
    alive = list(range(len(plants)))
    while len(alive) > 1:
        r = correlation_matrix(Y[:, alive])
        iu, ju = np.triu_indices(len(alive), k=1)
        vals = r[iu, ju]
        over = np.flatnonzero(vals > threshold)
        if over.size == 0:
            break
        # highest correlation first, ties by pair position
        top = over[np.lexsort((ju[over], iu[over], -vals[over]))[0]]
        a, b = plants[alive[iu[top]]], plants[alive[ju[top]]]
        keep_a = a.mean > b.mean or (a.mean == b.mean and a.id < b.id)
        drop = ju[top] if keep_a else iu[top]
        del alive[drop]
    return tuple(plants[i] for i in alive)


def build_demandgen(demand: DemandSeries, peak_mw: float | None = None) -> DemandGen:
    return DemandGen(output=-demand.values, capacity=float(demand.peak if peak_mw is None else peak_mw))


def flat_demandgen(level: float, n_steps: int, peak_mw: float = 1.0) -> DemandGen:
    """Constant DemandGen at ``level`` (per unit of ``peak_mw``)."""
    if not 0.0 < level <= 1.0:
        raise ValidationError("flat demand level must lie in (0, 1]")
    return DemandGen(output=np.full(n_steps, -float(level)), capacity=float(peak_mw))
