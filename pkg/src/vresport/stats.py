"""Capacity factors, covariance/correlation matrices and plant distances."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DatasetError, DegenerateSeriesError, ValidationError

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class CovMatrix:
    labels: tuple[str, ...]
    values: np.ndarray

    def __getitem__(self, pair):
        i, j = (self.labels.index(k) if isinstance(k, str) else k for k in pair)
        return self.values[i, j]

    def is_psd(self) -> bool:
        ev = np.linalg.eigvalsh(self.values)
        return bool(ev[0] >= -1e-8 * max(ev[-1], 0.0))


def capacity_factor(series) -> float:
    s = np.asarray(series, dtype=float)
    if s.size == 0:
        raise ValidationError("capacity factor of an empty series")
    return float(s.mean())


def _stack(plants, demandgen=None):
    cols = [np.asarray(p.output, dtype=float) for p in plants]
    labels = [p.id for p in plants]
    if demandgen is not None:
        cols.append(np.asarray(demandgen.output, dtype=float))
        labels.append("DemandGen")
    lengths = {c.shape[0] for c in cols}
    if len(lengths) > 1:
        raise DatasetError(f"series lengths differ: {sorted(lengths)}")
    return np.column_stack(cols), tuple(labels)


def covariance_matrix(plants, demandgen=None, ddof: int = 0) -> CovMatrix:
    """Covariance of plant outputs, DemandGen appended last when given.

    ``ddof=0`` (default) treats the series as the whole population.
    """
    Y, labels = _stack(plants, demandgen)
    dev = Y - Y.mean(axis=0)
    cov = dev.T @ dev / (Y.shape[0] - ddof)
    cov = 0.5 * (cov + cov.T)
    return CovMatrix(labels=labels, values=cov)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DatasetError("pearson needs equal-length series")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt(da @ da)
    nb = np.sqrt(db @ db)
    if na == 0.0 or nb == 0.0:
        raise DegenerateSeriesError("pearson correlation of a constant series")
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))


def correlation_matrix(Y: np.ndarray) -> np.ndarray:
    """Pearson matrix of the columns of ``Y``; constant columns correlate 0."""
    dev = Y - Y.mean(axis=0)
    norm = np.sqrt((dev * dev).sum(axis=0))
    safe = np.where(norm > 0, norm, 1.0)
    r = (dev.T @ dev) / np.outer(safe, safe)
    r[norm == 0, :] = 0.0
    r[:, norm == 0] = 0.0
    np.fill_diagonal(r, 1.0)
    return np.clip(r, -1.0, 1.0)


def geo_distance(p, q) -> float:
    """Great-circle distance in km between two ``(lat, lon)`` pairs."""
    lat1, lon1 = np.radians(p[0]), np.radians(p[1])
    lat2, lon2 = np.radians(q[0]), np.radians(q[1])
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return float(2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(min(1.0, h))))


def distance_matrix(plants) -> np.ndarray:
    n = len(plants)
    D = np.zeros((n, n))
    for i, j in combinations(range(n), 2):
        D[i, j] = D[j, i] = geo_distance((plants[i].lat, plants[i].lon),
                                         (plants[j].lat, plants[j].lon))
    return D


def write_correlation_csv(path, plants) -> None:
    """Pairwise dump ``id_a,id_b,pearson,km`` for inspection."""
    Y, _ = _stack(plants)
    r = correlation_matrix(Y)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id_a", "id_b", "pearson", "km"])
        for i, j in combinations(range(len(plants)), 2):
            km = geo_distance((plants[i].lat, plants[i].lon), (plants[j].lat, plants[j].lon))
            w.writerow([plants[i].id, plants[j].id, f"{r[i, j]:.10g}", f"{km:.6f}"])
