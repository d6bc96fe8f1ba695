"""Post-processing of solved portfolios.

Shares used by the diversity indices are generation shares
(plant mean output over portfolio mean output); plants below
``SHARE_FLOOR`` are treated as absent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError, DegeneratePortfolioError, InfeasibleRiskError
from .models import FrontierPoint, cvar_oracle, var_oracle
from .stats import distance_matrix

SHARE_FLOOR = 1e-6
QUANTILES = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)


@dataclass(frozen=True)
class DiversityReport:
    gd: float
    ed: float
    hhi: float
    inv_hhi: float


@dataclass(frozen=True)
class RiskReport:
    scale_factor: float
    installed_after: float
    cost_per_demand_mwh: float
    var_q: float
    cvar_q: float
    mean_excess_fraction: float


def cv_ratio(point: FrontierPoint) -> float:
    """Coefficient of variation: SD per capacity over capacity factor."""
    cf = point.cf
    if not cf > 0:
        raise DegeneratePortfolioError("coefficient of variation needs a positive capacity factor")
    return point.achieved_sd / cf


def sharpe(point: FrontierPoint) -> float:
    sd = point.achieved_sd
    return point.cf / sd if sd > 0 else math.inf


def min_cv_index(points) -> int:
    """Index of the lowest-CV point (first one on ties)."""
    cvs = [cv_ratio(p) if p.ok else math.inf for p in points]
    return int(np.argmin(cvs))


def generation_shares(point: FrontierPoint, plants) -> np.ndarray:
    mu = np.array([p.mean for p in plants])
    gen = point.capacities * mu
    total = gen.sum()
    if total <= 0:
        raise DegeneratePortfolioError("portfolio has no generation")
    return gen / total


def diversity(point: FrontierPoint, plants) -> DiversityReport:
    """Geographic (km) and profile-distance means plus HHI."""
    if len(plants) != len(point.capacities):
        raise ConfigError("plant list does not match the portfolio")
    w = generation_shares(point, plants)
    active = np.flatnonzero(w >= SHARE_FLOOR)
    if active.size == 0:
        raise DegeneratePortfolioError("empty portfolio")
    w = w[active] / w[active].sum()
    sub = [plants[i] for i in active]
    D = distance_matrix(sub)
    Y = np.vstack([p.output for p in sub])
    E = cdist(Y, Y)
    hhi = float(w @ w)
    return DiversityReport(gd=float(w @ D @ w), ed=float(w @ E @ w), hhi=hhi, inv_hhi=1.0 / hhi)


def portfolio_generation(point: FrontierPoint, plants) -> np.ndarray:
    """Hourly portfolio output in MW."""
    Y = np.column_stack([p.output for p in plants])
    return Y @ point.capacities


def normalize_to_risk(point: FrontierPoint, plants, demand_mw, q: float = 0.05,
                      omega: float = 0.0, max_iter: int = 100) -> RiskReport:
    """Scale all capacities by one factor until the full-series lower-tail
    balance mean equals ``omega``.

    Bisection on the scale; the balance is non-decreasing in it because
    generation is non-negative.
    """
    G = portfolio_generation(point, plants)
    L = np.asarray(demand_mw, dtype=float)
    if L.shape != G.shape:
        raise ConfigError("demand and generation lengths differ")
    mean_L = float(L.mean())
    if not G.mean() > 0:
        raise DegeneratePortfolioError("portfolio has no mean output")

    def f(s):
        return cvar_oracle(s * G - L, q) - omega

    lo, hi = 0.0, 2.0 * mean_L / float(G.mean())
    s_max = 1e6
    if f(lo) >= 0:
        hi = lo
    else:
        while f(hi) < 0:
            lo, hi = hi, 2.0 * hi
            if hi > s_max:
                raise InfeasibleRiskError(f"no scale below {s_max:g} reaches the risk target")
        tol = 1e-4 * mean_L
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            if f(mid) < 0:
                lo = mid
            else:
                hi = mid
            if f(hi) <= tol and hi - lo <= 1e-12 * hi:
                break
    s = hi
    bal = s * G - L
    gen_cost = point.cost_per_mwh * point.mean_output
    return RiskReport(scale_factor=s, installed_after=s * point.installed,
                      cost_per_demand_mwh=s * gen_cost / mean_L,
                      var_q=var_oracle(bal, q), cvar_q=cvar_oracle(bal, q),
                      mean_excess_fraction=float(bal.mean()) / mean_L)


def order_quantile(values, p: float) -> float:
    """Order-statistic quantile: the ``ceil(p n)``-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float))
    k = max(1, int(math.ceil(p * v.size - 1e-12)))
    return float(v[k - 1])


def balance_stats(point: FrontierPoint, plants, demand_mw, q: float = 0.05, scale: float = 1.0,
                  quantiles=QUANTILES) -> dict:
    """Balance ``(scale*G - L) / mean(L)`` in percent: mean, VaR_q, quantiles."""
    L = np.asarray(demand_mw, dtype=float)
    bal = 100.0 * (scale * portfolio_generation(point, plants) - L) / L.mean()
    return {
        "mean_excess_pct": float(bal.mean()),
        "var_q_pct": var_oracle(bal, q),
        "cvar_q_pct": cvar_oracle(bal, q),
        "quantiles": {p: order_quantile(bal, p) for p in quantiles},
    }


@dataclass
class AppendixAReport:
    min_cv_shared: bool
    dominated_points: list
    cv_index: int
    low_sd_points: list
    converted_sd: list = field(repr=False, default_factory=list)
    min_sd_g: float = float("nan")
    min_cv_gap: float = float("nan")

    @property
    def low_sd_dominated(self) -> bool:
        """Every frontier-C point below the min-CV SD is dominated."""
        return set(self.low_sd_points) <= set(self.dominated_points)


def verify_appendix_a(frontier_c, frontier_g, rtol: float = 1e-6) -> AppendixAReport:
    """Compare a fixed-capacity frontier (C) with a fixed-generation one (G).

    Each C point's SD is rescaled to G's fixed generation:
    ``sd_G = sd_C / cf * G_F / C_F``. A C point is dominated when some G
    point has an SD lower by more than ``rtol`` (relative) and a capacity
    factor at least as high.
    """
    if not frontier_c or not frontier_g:
        raise ConfigError("both frontiers need points")
    if list(frontier_c[0].ids) != list(frontier_g[0].ids):
        raise ConfigError("frontiers were solved on different plant universes")
    pc = [p for p in frontier_c if p.ok]
    pg = [p for p in frontier_g if p.ok]
    C_F = float(np.mean([p.installed for p in pc]))
    G_F = float(np.mean([p.mean_output for p in pg]))
    sd_c = np.array([p.sd for p in pc])
    cf_c = np.array([p.cf for p in pc])
    conv = sd_c / cf_c * G_F / C_F
    cv = sd_c / C_F / cf_c
    cv_idx = int(np.argmin(cv))
    sd_g = np.array([p.sd for p in pg])
    cf_g = np.array([p.cf for p in pg])
    g_min = float(sd_g.min())
    shared = int(np.argmin(conv)) == cv_idx and g_min <= conv[cv_idx] * (1 + rtol)
    dominated = []
    for i in range(len(pc)):
        better = (sd_g < conv[i] * (1 - rtol)) & (cf_g >= cf_c[i] * (1 - 1e-9))
        if np.any(better):
            dominated.append(pc[i].index)
    low = [pc[i].index for i in range(len(pc)) if sd_c[i] < sd_c[cv_idx] * (1 - 1e-12)]
    return AppendixAReport(min_cv_shared=bool(shared), dominated_points=dominated,
                           cv_index=pc[cv_idx].index, low_sd_points=low,
                           converted_sd=conv.tolist(), min_sd_g=g_min,
                           min_cv_gap=float(conv[cv_idx] / g_min - 1.0))
