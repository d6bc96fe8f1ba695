"""Deterministic synthetic wind/PV/demand datasets for tests and demos."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .ingest import Dataset, PlantSeries, detrend_demand

TABLE1_COSTS = {"wind": (4800.0, 90.0), "pv": (3500.0, 50.0)}


def _ar1(rng, n, rho, size=None):
    shape = (n,) if size is None else (n, size)
    eps = rng.standard_normal(shape) * np.sqrt(1 - rho**2)
    out = np.empty(shape)
    out[0] = rng.standard_normal(shape[1:] if size else None)
    for t in range(1, n):
        out[t] = rho * out[t - 1] + eps[t]
    return out


def make_dataset(n_wind=3, n_pv=2, n_days=60, seed=0, start="2015-01-01", demand_mw=1000.0,
                 growth=0.05, detrend_window=3):
    """Return ``(Dataset, raw_demand_mw)`` with plausible hourly profiles.

    Wind plants share a regional weather factor whose weight decays with
    distance; PV follows a clear-sky arc shifted by longitude with daily
    cloudiness. Demand has diurnal, weekly and linear growth components.
    """
    rng = np.random.default_rng(seed)
    T = n_days * 24
    ts = pd.date_range(start, periods=T, freq="h")
    hour = ts.hour.to_numpy()
    doy = ts.dayofyear.to_numpy()
    season = np.cos(2 * np.pi * (doy - 15) / 365.25)
    regional = _ar1(rng, T, 0.97)
    plants = []
    for i in range(n_wind):
        lat, lon = rng.uniform(-30, -3), rng.uniform(-55, -35)
        local = _ar1(rng, T, 0.95)
        w = rng.uniform(0.3, 0.8)
        phase = rng.uniform(0, 24)
        diurnal = 0.6 * np.cos(2 * np.pi * (hour - phase) / 24)
        latent = rng.uniform(-0.6, 0.4) + w * regional + np.sqrt(1 - w**2) * local + diurnal + 0.3 * season
        out = 1 / (1 + np.exp(-1.6 * latent))
        out = np.clip(out * rng.uniform(0.85, 1.0), 0, 1)
        inv, om = TABLE1_COSTS["wind"]
        plants.append(PlantSeries(id=f"W{i + 1:02d}", technology="wind", lat=lat, lon=lon,
                                  output=np.round(out, 6), invest_cost=inv, om_cost=om))
    days = T // 24
    for i in range(n_pv):
        lat, lon = rng.uniform(-30, -3), rng.uniform(-60, -35)
        shift = (lon + 45) / 15.0
        daylen = 12 + 1.2 * np.sin(np.radians(-lat)) * season
        rise = 12 - daylen / 2 + shift
        arc = np.clip(np.sin(np.pi * (hour - rise) / daylen), 0, None)
        arc[(hour < rise) | (hour > rise + daylen)] = 0.0
        cloud = np.repeat(np.clip(0.75 + 0.2 * _ar1(rng, days, 0.6), 0.2, 1.0), 24)[:T]
        out = np.clip(arc * cloud * rng.uniform(0.8, 0.95), 0, 1)
        inv, om = TABLE1_COSTS["pv"]
        plants.append(PlantSeries(id=f"S{i + 1:02d}", technology="pv", lat=lat, lon=lon,
                                  output=np.round(out, 6), invest_cost=inv, om_cost=om))
    dow = ts.dayofweek.to_numpy()
    shape = 1 + 0.18 * np.sin(2 * np.pi * (hour - 9) / 24) + 0.08 * np.sin(2 * np.pi * (hour - 14) / 12)
    weekly = np.where(dow >= 5, 0.88, 1.0)
    trend = 1 + growth * np.arange(T) / max(T, 1)
    noise = 1 + 0.02 * _ar1(rng, T, 0.9)
    raw = np.round(demand_mw * shape * weekly * trend * noise, 3)
    demand = detrend_demand(raw, detrend_window)
    return Dataset(plants=tuple(plants), demand=demand, timestamps=ts), raw


def write_dataset(ds: Dataset, raw_demand, directory) -> dict:
    """Write the three CSV inputs; returns their paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = pd.DataFrame({
        "id": [p.id for p in ds.plants],
        "technology": [p.technology for p in ds.plants],
        "lat": [round(p.lat, 4) for p in ds.plants],
        "lon": [round(p.lon, 4) for p in ds.plants],
        "invest_cost_per_kw": [p.invest_cost for p in ds.plants],
        "om_cost_per_kw_year": [p.om_cost for p in ds.plants],
    })
    stamps = ds.timestamps.strftime("%Y-%m-%dT%H:%M:%S")
    out = pd.DataFrame({"timestamp": stamps, **{p.id: p.output for p in ds.plants}})
    dem = pd.DataFrame({"timestamp": stamps, "demand_mw": raw_demand})
    paths = {"plants": d / "plants.csv", "outputs": d / "outputs.csv", "demand": d / "demand.csv"}
    meta.to_csv(paths["plants"], index=False)
    out.to_csv(paths["outputs"], index=False)
    dem.to_csv(paths["demand"], index=False)
    return paths
