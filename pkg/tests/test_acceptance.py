"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the "acceptance criteria" section at the end of
the pytest run.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from conftest import FIXTURE_DIR, record
from oracles import GridOracle, calendar_for, local_grid, moments, random_universe, simplex_grid
from vresport import solver
from vresport.analysis import diversity, normalize_to_risk, verify_appendix_a
from vresport.cli import main as cli_main
from vresport.ingest import PlantSeries, flat_demandgen
from vresport.models import (KINDS, FrontierPoint, ScenarioConfig, assemble, cvar_linearized,
                             cvar_oracle, effective_demandgen, frontier_sweep)
from vresport.sampling import lhs_sample

# ---------------------------------------------------------------- 1


def _solver_vs_grid(kind, seed, T=240, M=60):
    rng = np.random.default_rng(seed)
    plants, dg = random_universe(rng, T=T)
    sc = ScenarioConfig(kind=kind, M=M)
    plan = lhs_sample(T, calendar_for(T), M=M, seed=seed) if sc.family == "CVaR" else None
    edg = effective_demandgen(sc, plants, dg)
    K = -dg.capacity_factor
    kw = {"pv_mult": sc.pv_cost_multiplier}
    if sc.family == "CVaR":
        Y = np.column_stack([p.output for p in plants])
        kw.update(Ys=Y[plan.indices], yLs=np.asarray(edg.output)[plan.indices], beta=sc.beta)
    orc = GridOracle(sc.family, plants, edg, np.inf, K=K, **kw)

    # SD cap drawn inside the oracle's own attainable range
    W = simplex_grid(0.005)
    s_cvar = None
    if sc.family == "Trad":
        sd = np.sqrt(orc._variance(W, 1.0))
        hi = sd[np.argmax(W @ orc.mu)]
    elif sc.family == "Cost":
        P = K * W / orc.mu
        sd = np.sqrt(np.einsum("ij,jk,ik->i", P, orc.S, P) + 2 * P @ orc.sL + orc.vL)
        hi = sd[np.argmin(P @ (orc.cost * orc.mu))]
    else:
        s_cvar = orc.cvar_scale(W)
        fin = np.isfinite(s_cvar)
        s0 = np.where(fin, s_cvar, 0.0)
        sd = np.where(fin, np.sqrt(np.maximum(orc._variance(W, s0), 0.0)), np.inf)
        hi = sd[np.argmin(s_cvar * (W @ (orc.cost * orc.mu)))]
    lo = sd.min()
    orc.sigma = lo + rng.uniform(0.2, 0.8) * (hi - lo)
    best, _ = orc.best(s_cvar=s_cvar)
    t0 = time.perf_counter()
    sol = solver.solve(assemble(sc, plants, dg, plan, sigma_cap=orc.sigma))
    return sol, best, time.perf_counter() - t0


def test_criterion_1_solver_matches_grid_oracle():
    t0 = time.perf_counter()
    worst, failures, solve_time = {}, [], 0.0
    for kind in KINDS:
        worst[kind] = 0.0
        for seed in range(50):
            sol, best, dt = _solver_vs_grid(kind, seed)
            solve_time += dt
            rel = abs(sol.objective - best) / abs(best)
            worst[kind] = max(worst[kind], rel)
            if not sol.ok or rel > 1e-3:
                failures.append((kind, seed, sol.status, rel))

    # two assets, variances 1 and 4, uncorrelated: weights proportional to 1/variance
    prog = solver.ConvexProgram(c=np.zeros(2), A_eq=np.ones((1, 2)), b_eq=[1.0],
                                quad=solver.QuadConstraint(Q=np.diag([1.0, 4.0]), bound=np.inf))
    mv = solver.min_variance(prog)
    closed = np.abs(mv.x - [0.8, 0.2]).max()
    elapsed = time.perf_counter() - t0
    ok = not failures and mv.ok and closed <= 1e-6 and elapsed < 120
    record(1, ok, f"350 instances, worst rel gap {max(worst.values()):.2e} (tol 1e-3), "
                  f"2-asset error {closed:.1e} (tol 1e-6), {elapsed:.0f}s total, "
                  f"{solve_time:.1f}s in solver (limit 120s)")
    assert not failures, failures
    assert closed <= 1e-6
    assert elapsed < 120


# ---------------------------------------------------------------- 2


def test_criterion_2_cvar_linearization_matches_oracle():
    rng = np.random.default_rng(2)
    T = 500
    worst, alpha_misses = 0.0, []
    for i in range(100):
        Y = rng.uniform(0.0, 1.0, (T, 3))
        P = rng.uniform(0.0, 2.0, 3)
        L = rng.uniform(0.3, 1.5, T)
        bal = Y @ P - L
        b = np.sort(bal)
        for q in (0.01, 0.05, 0.2):
            value, alpha, _ = cvar_linearized(bal, q)
            worst = max(worst, abs(value - cvar_oracle(bal, q)))
            k = int(math.ceil(q * T - 1e-12))
            # optimal alpha set is [b_(k), b_(k+1)] for integral qT
            if not b[k - 1] - 1e-8 <= alpha <= b[min(k, T - 1)] + 1e-8:
                alpha_misses.append((i, q, alpha))
    ok = worst <= 1e-8 and not alpha_misses
    record(2, ok, f"300 cases, max |linearized - oracle| {worst:.1e} (tol 1e-8), "
                  f"alpha outside VaR bracket: {len(alpha_misses)}")
    assert worst <= 1e-8
    assert not alpha_misses


# ---------------------------------------------------------------- 3


def test_criterion_3_flat_demand_equivalence(bundled):
    ds, dg = bundled
    flat = flat_demandgen(-dg.capacity_factor, ds.n_steps, dg.capacity)
    obs = frontier_sweep(ScenarioConfig("Cost_Obs"), ds.plants, flat)
    ref = frontier_sweep(ScenarioConfig("Cost_Flat"), ds.plants, flat)
    diff = max(np.abs(a.shares - b.shares).max() for a, b in zip(obs, ref))
    ok = len(obs) == len(ref) and diff <= 1e-5 and all(p.ok for p in obs + ref)
    record(3, ok, f"{len(obs)} points, max share difference {diff:.1e} (tol 1e-5)")
    assert ok


# ---------------------------------------------------------------- 4


def _grid_truth(plants, frontier_c, rtol=1e-6):
    """Dominated frontier-C points by weight enumeration (step 0.01).

    The 0.01 grid is refined around its own min-CV weight vector (four
    levels, factor ten each) so dominating portfolios closer than the grid
    spacing to the min-CV portfolio are represented.
    """
    Y, mu, S, _, _ = moments(plants, None)

    def cv(W):
        return np.sqrt(np.einsum("ij,jk,ik->i", W, S, W)) / (W @ mu)

    W = simplex_grid(0.01)
    h = 0.01
    for _ in range(4):
        W = np.vstack([W, local_grid(W[np.argmin(cv(W))], 2 * h, h / 10)])
        h /= 10
    cvw, muw = cv(W), W @ mu
    out = []
    for p in frontier_c:
        w = p.capacities / p.installed
        cvp, mup = math.sqrt(w @ S @ w) / (w @ mu), w @ mu
        if np.any((cvw < cvp * (1 - rtol)) & (muw >= mup * (1 - 1e-9))):
            out.append(p.index)
    return out


def test_criterion_4_min_cv_and_domination():
    a_gaps, b_fail, subset_fail = [], [], []
    for u in range(20):
        rng = np.random.default_rng(1000 + u)
        plants, _ = random_universe(rng, equal_costs=True)
        fc = frontier_sweep(ScenarioConfig("Trad_Flat"), plants)
        fg = frontier_sweep(ScenarioConfig("Cost_Flat"), plants)
        rep = verify_appendix_a(fc, fg)

        # (a) exact min-CV portfolio along frontier C (CV is unimodal along
        # the frontier), converted to generation normalization, against the
        # minimum SD of frontier G
        prog = assemble(ScenarioConfig("Trad_Flat"), plants)
        mu = np.array([p.mean for p in plants])

        def cv_at(s):
            x = solver.solve(prog.with_sd_cap(s)).x
            return math.sqrt(max(prog.quad.form(x), 0.0)) / (x @ mu)

        r = minimize_scalar(cv_at, bounds=(fc[0].sigma_cap, fc[-1].sigma_cap), method="bounded",
                            options={"xatol": 1e-10})
        converted = r.fun * fg[0].mean_output
        a_gaps.append(abs(converted / fg[0].sd - 1.0))
        if not rep.min_cv_shared:
            a_gaps[-1] = math.inf

        # (b) LowSD points flagged, and the flags equal grid-enumeration truth
        if not rep.low_sd_dominated:
            subset_fail.append(u)
        if _grid_truth(plants, fc) != rep.dominated_points:
            b_fail.append(u)
    ok = max(a_gaps) <= 1e-6 and not b_fail and not subset_fail
    record(4, ok, f"20 universes, (a) max rel gap min-CV vs min SD(G) {max(a_gaps):.1e} (tol 1e-6); "
                  f"(b) LowSD not flagged in {len(subset_fail)}, mismatch with grid truth in "
                  f"{len(b_fail)}")
    assert ok, (a_gaps, b_fail, subset_fail)


# ---------------------------------------------------------------- 5


def test_criterion_5_frontier_shape(bundled):
    ds, dg = bundled
    plan = lhs_sample(ds.n_steps, ds.calendar(), M=600, seed=0)
    bad = []
    for kind in KINDS:
        pts = frontier_sweep(ScenarioConfig(kind), ds.plants, dg, plan)
        caps = np.array([p.sigma_cap for p in pts])
        obj = np.array([p.objective for p in pts])
        scale = np.maximum(1.0, np.abs(obj[:-1]))
        rise = np.max((obj[1:] - obj[:-1]) / scale)
        if len(pts) != 51 or np.any(np.diff(caps) <= 0) or rise > 1e-6 or not all(p.ok for p in pts):
            bad.append((kind, len(pts), float(rise)))
    record(5, not bad, f"7 kinds x 51 points, ascending caps, objective rises beyond 1e-6: {bad or 'none'}")
    assert not bad


# ---------------------------------------------------------------- 6 and 9 share one fixture year


@pytest.fixture(scope="module")
def year_sweeps(year_fixture):
    ds, dg = year_fixture
    plan = lhs_sample(ds.n_steps, ds.calendar(), M=3000, seed=0)
    out = {k: frontier_sweep(ScenarioConfig(k, n_frontier_points=11), ds.plants, dg, plan)
           for k in ("CVaR_Flat", "CVaR_Obs")}
    out["Cost_Flat"] = frontier_sweep(ScenarioConfig("Cost_Flat"), ds.plants, dg)
    return ds, dg, out


def test_criterion_6_same_risk_scaling(year_sweeps):
    ds, dg, sweeps = year_sweeps
    plants = ds.plants
    mean_L = None
    worst_cvar, worst_s = 0.0, 0.0
    for kind in ("CVaR_Flat", "CVaR_Obs"):
        edg = effective_demandgen(ScenarioConfig(kind), plants, dg)
        L = -np.asarray(edg.output) * edg.capacity
        mean_L = L.mean()
        for p in sweeps[kind]:
            rr = normalize_to_risk(p, plants, L)
            worst_cvar = max(worst_cvar, abs(rr.cvar_q) / mean_L)
            worst_s = max(worst_s, abs(rr.scale_factor - 1.0))
    # also on frontier portfolios that were not sized for risk
    for p in sweeps["Cost_Flat"][::10]:
        rr = normalize_to_risk(p, plants, ds.demand.mw())
        worst_cvar = max(worst_cvar, abs(rr.cvar_q) / ds.demand.mw().mean())
    ok = worst_cvar <= 1e-4 and worst_s <= 0.05
    record(6, ok, f"max |CVaR5% after scaling| / mean demand {worst_cvar:.1e} (tol 1e-4); "
                  f"CVaR-portfolio rescale factors within {100 * worst_s:.2f}% of 1 (tol 5%)")
    assert ok


def test_criterion_9_cvar_frontier_above_cost_flat(year_sweeps):
    """Evaluated with SD per installed capacity, the normalization used for
    frontier comparisons; the same check in SD per mean generation is
    reported alongside."""
    ds, dg, sweeps = year_sweeps
    cvar, flat = sweeps["CVaR_Flat"], sweeps["Cost_Flat"]
    x = np.array([p.achieved_sd for p in flat])
    y = np.array([p.cost_per_mwh for p in flat])
    assert np.all(np.diff(x) > 0)
    sd_c = np.array([p.achieved_sd for p in cvar])
    inside = (sd_c >= x.min()) & (sd_c <= x.max())
    # linear interpolation of a convex cost curve can only overstate the Cost_Flat cost
    cheaper = [i for i in np.flatnonzero(inside)
               if cvar[i].cost_per_mwh < np.interp(sd_c[i], x, y) * (1 - 1e-6)]
    subset = sd_c.min() >= x.min() and sd_c.max() <= x.max() and (
        sd_c.min() > x.min() or sd_c.max() < x.max())

    # SD per mean generation: Cost_Flat re-solved at each CVaR point's exact ratio
    sc = ScenarioConfig("Cost_Flat")
    prog = assemble(sc, ds.plants, dg)
    K = -effective_demandgen(sc, ds.plants, dg).capacity_factor
    mu = np.array([p.mean for p in ds.plants])
    cheaper_cv = []
    for p in cvar:
        sol = solver.solve(prog.with_sd_cap(p.sd / p.mean_output * K))
        P = sol.x[:len(mu)]
        if p.cost_per_mwh < sol.objective / (P @ mu) * (1 - 1e-6):
            cheaper_cv.append(p.index)
    cv_c = [p.sd / p.mean_output for p in cvar]
    cv_f = [p.sd / p.mean_output for p in flat]
    subset_cv = min(cv_c) >= min(cv_f) and max(cv_c) <= max(cv_f) and (
        min(cv_c) > min(cv_f) or max(cv_c) < max(cv_f))

    ok = not cheaper and subset
    record(9, ok, f"SD/installed: CVaR range [{sd_c.min():.4f}, {sd_c.max():.4f}] vs Cost_Flat "
                  f"[{x.min():.4f}, {x.max():.4f}] strict subset={subset}, points cheaper than "
                  f"Cost_Flat {len(cheaper)}/{int(inside.sum())} comparable; SD/mean-generation: "
                  f"subset={subset_cv}, cheaper {len(cheaper_cv)}/{len(cvar)}")
    assert not cheaper
    assert subset, "CVaR_Flat SD range is not inside the Cost_Flat range"


# ---------------------------------------------------------------- 7


def _point(plants, P):
    mu = np.array([p.mean for p in plants])
    return FrontierPoint(index=0, sigma_cap=0.0, ids=[p.id for p in plants], capacities=np.asarray(P),
                         sd=0.0, mean_output=float(P @ mu), installed=float(np.sum(P)),
                         cost_per_mwh=0.0, status=solver.OPTIMAL, objective=0.0)


def test_criterion_7_diversity_identities():
    rng = np.random.default_rng(7)
    inv_err, ed_max, gd_err = 0.0, 0.0, 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 11))
        T = 48
        outs = rng.uniform(0.05, 1.0, (n, T))
        plants = [PlantSeries(id=f"P{i}", technology="wind", lat=rng.uniform(-60, 60),
                              lon=rng.uniform(-170, 170), output=outs[i]) for i in range(n)]
        mu = outs.mean(axis=1)
        # equal generation shares
        inv_err = max(inv_err, abs(diversity(_point(plants, 1.0 / mu), plants).inv_hhi - n))
        # identical profiles at distinct sites
        twins = [PlantSeries(id=p.id, technology="wind", lat=p.lat, lon=p.lon, output=outs[0])
                 for p in plants]
        ed_max = max(ed_max, diversity(_point(twins, rng.uniform(0.1, 2, n)), twins).ed)
        # relabeling
        P = rng.uniform(0.0, 2.0, n) * (rng.uniform(size=n) > 0.2) + 1e-3
        perm = rng.permutation(n)
        g1 = diversity(_point(plants, P), plants).gd
        g2 = diversity(_point([plants[i] for i in perm], P[perm]), [plants[i] for i in perm]).gd
        gd_err = max(gd_err, abs(g1 - g2) / max(g1, 1.0))
    ok = inv_err <= 1e-9 and ed_max == 0.0 and gd_err <= 1e-12
    record(7, ok, f"1000 portfolios, max |1/HHI - N| {inv_err:.1e}, max ED for identical profiles "
                  f"{ed_max:.1e}, max relabeling GD change {gd_err:.1e}")
    assert ok


# ---------------------------------------------------------------- 8


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "manifest.json"}


def test_criterion_8_determinism(tmp_path):
    cfg = (FIXTURE_DIR / "cost_flat.toml").read_text().replace(
        '"plants.csv"', f'"{FIXTURE_DIR / "plants.csv"}"').replace(
        '"outputs.csv"', f'"{FIXTURE_DIR / "outputs.csv"}"').replace(
        '"demand.csv"', f'"{FIXTURE_DIR / "demand.csv"}"')
    cfg += '\n[scenario.CVaR_Obs]\nkind = "CVaR_Obs"\n\n[scenario.Trad_Obs]\nkind = "Trad_Obs"\n'
    path = tmp_path / "run.toml"
    path.write_text(cfg)
    runs = {}
    for name, threads in (("a", 1), ("b", 1), ("c", 8)):
        code = cli_main(["run", "--config", str(path), "--out", str(tmp_path / name), "--seed", "11",
                         "--points", "21", "--threads", str(threads)])
        assert code == 0
        runs[name] = _tree(tmp_path / name)
    same_seed = runs["a"] == runs["b"]
    same_threads = runs["a"] == runs["c"]
    ok = same_seed and same_threads and len(runs["a"]) >= 10
    record(8, ok, f"{len(runs['a'])} output files byte-identical across repeat={same_seed}, "
                  f"threads 1 vs 8={same_threads} (manifest.json holds timings and is excluded)")
    assert ok
