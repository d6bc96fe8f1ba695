"""Scenario programs, levelized costs and efficient-frontier sweeps.

All programs are assembled per unit of the DemandGen capacity P_L (the peak
load), so P_L = 1 inside the solver and capacities are scaled back to MW
when frontier points are reported.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import solver
from .errors import ConfigError, DatasetError, DegeneratePlantError, SolveError, ValidationError
from .ingest import DemandGen, flat_demandgen
from .sampling import SamplePlan
from .stats import covariance_matrix

KINDS = ("Trad_Flat", "Trad_Obs", "Cost_Flat", "Cost_Obs", "Cost_Flat_lcpv", "CVaR_Flat", "CVaR_Obs")
HOURS_PER_YEAR_THOUSANDS = 8.76  # kW -> MWh/yr conversion at CF = 1
TIEBREAK_WEIGHT = 1e-6


@dataclass(frozen=True)
class Finance:
    discount_rate: float = 0.08
    lifetime_years: dict = field(default_factory=lambda: {"wind": 25, "pv": 25})

    def lifetime(self, technology: str) -> int:
        return int(self.lifetime_years[technology])


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    n_frontier_points: int = 51
    beta: float = 0.05
    omega: float = 0.0
    M: int = 3000
    finance: Finance = field(default_factory=Finance)
    pv_cost_multiplier: float | None = None
    fixed_generation: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError(f"beta={self.beta} outside the valid range (0, 1)")
        if self.n_frontier_points < 2:
            raise ConfigError("n_frontier_points must be >= 2")
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if self.pv_cost_multiplier is None:
            object.__setattr__(self, "pv_cost_multiplier", 0.5 if self.kind == "Cost_Flat_lcpv" else 1.0)
        if self.pv_cost_multiplier <= 0:
            raise ConfigError("pv_cost_multiplier must be positive")
        if self.finance.discount_rate < 0:
            raise ConfigError("discount_rate must be >= 0")

    @property
    def family(self) -> str:
        return self.kind.split("_")[0]

    @property
    def observed(self) -> bool:
        return self.kind.endswith("_Obs")


def crf(rate: float, years: int) -> float:
    """Capital recovery factor."""
    if years < 1:
        raise ValidationError("lifetime must be at least one year")
    if rate < 0:
        raise ValidationError("discount rate must be non-negative")
    if rate == 0.0:
        return 1.0 / years
    g = (1.0 + rate) ** years
    return rate * g / (g - 1.0)


def lcoe(plant, finance: Finance = Finance(), pv_cost_multiplier: float = 1.0) -> float:
    """Levelized cost in currency/MWh from per-kW investment and O&M."""
    cf = plant.mean
    if cf <= 0.0:
        raise DegeneratePlantError(f"plant {plant.id} has zero capacity factor")
    mult = pv_cost_multiplier if plant.technology == "pv" else 1.0
    invest = plant.invest_cost * mult
    om = plant.om_cost * mult
    annual = invest * crf(finance.discount_rate, finance.lifetime(plant.technology)) + om
    return annual / (HOURS_PER_YEAR_THOUSANDS * cf)


@dataclass
class ModelInputs:
    """Per-unit quantities shared by every program of a scenario."""

    ids: list
    mu: np.ndarray
    cost: np.ndarray
    Y: np.ndarray
    cov: np.ndarray
    cov_L: np.ndarray
    var_L: float
    yL: np.ndarray | None
    mu_L: float
    peak_mw: float


def prepare_inputs(scenario: ScenarioConfig, plants, demandgen: DemandGen | None) -> ModelInputs:
    if not plants:
        raise ConfigError("empty plant set")
    T = {p.output.size for p in plants}
    if demandgen is not None:
        T.add(demandgen.output.size)
    if len(T) != 1:
        raise DatasetError(f"series lengths differ: {sorted(T)}")
    Y = np.column_stack([p.output for p in plants])
    mu = Y.mean(axis=0)
    cost = np.array([lcoe(p, scenario.finance, scenario.pv_cost_multiplier) for p in plants])
    cm = covariance_matrix(plants, demandgen).values
    N = len(plants)
    if demandgen is not None:
        cov, cov_L, var_L = cm[:N, :N], cm[:N, N], float(cm[N, N])
        yL, mu_L, peak = np.asarray(demandgen.output), demandgen.capacity_factor, demandgen.capacity
    else:
        cov, cov_L, var_L = cm, np.zeros(N), 0.0
        yL, mu_L, peak = None, -1.0, 1.0
    return ModelInputs(ids=[p.id for p in plants], mu=mu, cost=cost, Y=Y, cov=cov, cov_L=cov_L,
                       var_L=var_L, yL=yL, mu_L=mu_L, peak_mw=float(peak))


def cvar_block(Ys: np.ndarray, yLs: np.ndarray, beta: float, omega: float):
    """Rows over ``[P (N), alpha, Z (M)]`` bounding the lower-tail balance mean.

    ``alpha - Ys @ P - Z_m <= yLs_m`` per sample and
    ``-alpha + sum(Z) / (beta M) <= -omega``.
    """
    M, N = Ys.shape
    per_sample = sp.hstack([-sp.csr_matrix(Ys), sp.csr_matrix(np.ones((M, 1))), -sp.identity(M)])
    tail = np.zeros(N + 1 + M)
    tail[N] = -1.0
    tail[N + 1:] = 1.0 / (beta * M)
    G = sp.vstack([per_sample, sp.csr_matrix(tail)]).tocsr()
    h = np.append(np.asarray(yLs, dtype=float), -omega)
    return G, h


def effective_demandgen(scenario: ScenarioConfig, plants, demandgen: DemandGen | None):
    """Flat kinds see a constant DemandGen at the given profile's mean level."""
    if scenario.observed:
        return demandgen
    if demandgen is None:
        if scenario.family != "CVaR":
            return None
        return flat_demandgen(1.0, len(plants[0].output))
    return flat_demandgen(-demandgen.capacity_factor, demandgen.output.size, demandgen.capacity)


def assemble(scenario: ScenarioConfig, plants, demandgen: DemandGen | None = None,
             plan: SamplePlan | None = None, sigma_cap: float | None = None,
             inputs: ModelInputs | None = None) -> solver.ConvexProgram:
    """Build the scenario's program (per unit of peak load).

    ``sigma_cap`` is the standard-deviation bound in per-unit; ``None``
    leaves the variance row unbounded.
    """
    if scenario.observed and demandgen is None:
        raise ConfigError(f"{scenario.kind} requires a DemandGen")
    if scenario.family == "CVaR" and plan is None:
        raise ConfigError(f"{scenario.kind} requires a SamplePlan")
    demandgen = effective_demandgen(scenario, plants, demandgen)
    d = inputs if inputs is not None else prepare_inputs(scenario, plants, demandgen)
    N = len(d.ids)
    bound = np.inf if sigma_cap is None else float(sigma_cap) ** 2
    labels = list(d.ids)

    if scenario.family == "Trad":
        n = N
        c = -d.mu
        A_eq, b_eq = np.ones((1, N)), np.array([1.0])
        G = h = None
        lower = np.zeros(N)
    elif scenario.family == "Cost":
        n = N
        c = d.cost * d.mu
        if scenario.observed:
            K = -d.mu_L
        elif scenario.fixed_generation is not None:
            K = scenario.fixed_generation
        else:
            K = -d.mu_L if demandgen is not None else 1.0
        A_eq, b_eq = d.mu.reshape(1, -1), np.array([K])
        G = h = None
        lower = np.zeros(N)
    else:
        idx = plan.indices
        if idx.size and (idx.max() >= d.Y.shape[0] or idx.min() < 0):
            raise ConfigError("sample plan indexes outside the series")
        M = idx.size
        n = N + 1 + M
        c = np.zeros(n)
        c[:N] = d.cost * d.mu
        G, h = cvar_block(d.Y[idx], d.yL[idx], scenario.beta, scenario.omega / d.peak_mw)
        A_eq = b_eq = None
        lower = np.zeros(n)
        lower[N] = -np.inf
        labels += ["alpha"] + [f"Z{int(t)}" for t in idx]

    lin = None
    if np.any(d.cov_L != 0.0):
        lin = np.zeros(n)
        lin[:N] = 2.0 * d.cov_L
    quad = solver.QuadConstraint(Q=d.cov, bound=bound, lin=lin, const=d.var_L)
    prog = solver.ConvexProgram(c=c, A_eq=A_eq, b_eq=b_eq, A_ub=G, b_ub=h, lower=lower,
                                quad=quad, labels=labels)
    prog.check()
    return prog


def cvar_oracle(balance, q: float) -> float:
    """Mean of the lowest ``q`` fraction of ``balance`` (fractional tail mass)."""
    b = np.sort(np.asarray(balance, dtype=float))
    if b.size == 0:
        raise ValidationError("empty balance vector")
    if not 0.0 < q <= 1.0:
        raise ValidationError("tail fraction must lie in (0, 1]")
    mass = q * b.size
    k = min(int(math.floor(mass + 1e-12)), b.size)
    total = b[:k].sum()
    frac = mass - k
    if frac > 1e-12 and k < b.size:
        total += frac * b[k]
    return float(total / mass)


def var_oracle(balance, q: float) -> float:
    """Lower ``q``-quantile as an order statistic: the ``ceil(qT)``-th smallest value."""
    b = np.sort(np.asarray(balance, dtype=float))
    k = max(1, int(math.ceil(q * b.size - 1e-12)))
    return float(b[k - 1])


def cvar_linearized(balance, q: float, tol: float = 1e-10):
    """Lower-tail CVaR from the auxiliary-variable program.

    Maximizes ``alpha - sum(Z)/(qT)`` subject to ``Z_t >= alpha - balance_t``
    and ``Z >= 0``, built with the same rows the CVaR scenarios use (no
    plants). Returns ``(value, alpha, Z)``.
    """
    b = np.asarray(balance, dtype=float)
    T = b.size
    G, h = cvar_block(np.zeros((T, 0)), b, q, 0.0)
    G = G[:-1]
    h = h[:-1]
    c = np.full(T + 1, 1.0 / (q * T))
    c[0] = -1.0
    lower = np.zeros(T + 1)
    lower[0] = -np.inf
    prog = solver.ConvexProgram(c=c, A_ub=G, b_ub=h, lower=lower)
    sol = solver.solve(prog, tol=tol)
    if not sol.ok:
        raise SolveError(f"CVaR linearization did not converge ({sol.status})")
    alpha, Z = float(sol.x[0]), sol.x[1:]
    return alpha - Z.sum() / (q * T), alpha, Z


@dataclass
class FrontierPoint:
    index: int
    sigma_cap: float
    ids: list
    capacities: np.ndarray
    sd: float
    mean_output: float
    installed: float
    cost_per_mwh: float
    status: str
    objective: float
    alpha: float | None = None
    kkt: dict = field(default_factory=dict)

    @property
    def shares(self) -> np.ndarray:
        return self.capacities / self.installed if self.installed > 0 else self.capacities * 0.0

    @property
    def achieved_sd(self) -> float:
        """Standard deviation per unit of installed capacity."""
        return self.sd / self.installed if self.installed > 0 else float("nan")

    @property
    def cf(self) -> float:
        return self.mean_output / self.installed if self.installed > 0 else float("nan")

    @property
    def ok(self) -> bool:
        return self.status == solver.OPTIMAL


def _make_point(index, sigma_cap_pu, sol, prog, d: ModelInputs) -> FrontierPoint:
    N = len(d.ids)
    P = np.maximum(sol.x[:N], 0.0)
    var = max(prog.quad.form(sol.x), 0.0)
    gen = float(P @ d.mu)
    cost = float(P @ (d.cost * d.mu)) / gen if gen > 0 else float("nan")
    scale = d.peak_mw
    alpha = float(sol.x[N]) * scale if prog.n_vars > N else None
    return FrontierPoint(index=index, sigma_cap=sigma_cap_pu * scale, ids=list(d.ids),
                         capacities=P * scale, sd=math.sqrt(var) * scale, mean_output=gen * scale,
                         installed=float(P.sum()) * scale, cost_per_mwh=cost, status=sol.status,
                         objective=sol.objective, alpha=alpha, kkt=dict(sol.kkt_residuals))


def frontier_sweep(scenario: ScenarioConfig, plants, demandgen: DemandGen | None = None,
                   plan: SamplePlan | None = None, threads: int = 1) -> list[FrontierPoint]:
    """Solve the scenario on an evenly spaced grid of SD caps.

    The grid runs from the minimum-variance SD to the SD of the solution
    without a variance bound, both inclusive; those two endpoint solutions
    are the first and last points. Points come back in ascending cap order.
    """
    d = prepare_inputs(scenario, plants, effective_demandgen(scenario, plants, demandgen))
    prog = assemble(scenario, plants, demandgen, plan, inputs=d)

    lo = solver.min_variance(prog, cost_weight=TIEBREAK_WEIGHT)
    if not lo.ok:
        raise SolveError(f"{scenario.kind}: minimum-variance solve failed ({lo.status}); "
                         "the linear constraints admit no portfolio")
    hi = solver.unconstrained_sd_endpoint(prog)
    sd_lo = math.sqrt(max(prog.quad.form(lo.x), 0.0))
    if hi.ok:
        sd_hi = max(math.sqrt(max(prog.quad.form(hi.x), 0.0)), sd_lo)
    else:
        sd_hi = sd_lo
    n = scenario.n_frontier_points
    grid = np.linspace(sd_lo, sd_hi, n)
    lo_sol = solver.Solution(x=lo.x, objective=float(prog.c @ lo.x), status=lo.status,
                             kkt_residuals=lo.kkt_residuals, iterations=lo.iterations)
    degenerate = sd_hi - sd_lo <= 1e-9 * max(sd_hi, 1e-300)

    def run(i):
        if i == 0:
            return lo_sol
        if i == n - 1 and hi.ok:
            return hi
        if degenerate:
            return hi if hi.ok else lo_sol
        return solver.solve(prog.with_sd_cap(grid[i]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sols = list(pool.map(run, range(n)))
    else:
        sols = [run(i) for i in range(n)]
    return [_make_point(i, grid[i], s, prog, d) for i, s in enumerate(sols)]
