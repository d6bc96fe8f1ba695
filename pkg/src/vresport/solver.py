"""Primal-dual interior-point solver for the portfolio programs.

Every model in the package reduces to::

    minimize    c @ x
    subject to  A_eq @ x == b_eq
                A_ub @ x <= b_ub
                x[:k] @ Q @ x[:k] + lin @ x + const <= bound      (optional)
                x >= lower                                         (-inf = free)

The quadratic row is the portfolio variance, ``k`` the number of plant
capacities. Newton systems are solved in augmented (sparse, symmetric
indefinite) form so the per-sample CVaR rows never produce a dense normal
matrix.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"

TARGET_TOL = 1e-8
ACCEPT_TOL = 1e-6
MAX_ITERATIONS = 200

_DENSE_LIMIT = 400
_BLOWUP = 1e12


@dataclass
class QuadConstraint:
    """``x[:k] @ Q @ x[:k] + lin @ x + const <= bound``."""

    Q: np.ndarray
    bound: float
    lin: np.ndarray | None = None
    const: float = 0.0

    @property
    def k(self) -> int:
        return self.Q.shape[0]

    def form(self, x: np.ndarray) -> float:
        """Value of the quadratic form without the bound."""
        xk = x[: self.k]
        v = float(xk @ self.Q @ xk) + self.const
        if self.lin is not None:
            v += float(self.lin @ x)
        return v

    def grad(self, x: np.ndarray) -> np.ndarray:
        g = np.zeros(x.shape[0]) if self.lin is None else np.array(self.lin, dtype=float)
        g[: self.k] += 2.0 * (self.Q @ x[: self.k])
        return g


@dataclass
class ConvexProgram:
    c: np.ndarray
    A_eq: object = None
    b_eq: np.ndarray | None = None
    A_ub: object = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    quad: QuadConstraint | None = None
    labels: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.shape[0]
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n)
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n)
        if self.lower is None:
            self.lower = np.zeros(n)
        self.lower = np.asarray(self.lower, dtype=float)
        if self.lower.shape != (n,):
            raise ValueError("lower bounds must have one entry per variable")
        if self.quad is not None:
            q = self.quad
            q.Q = np.asarray(q.Q, dtype=float)
            if q.Q.ndim != 2 or q.Q.shape[0] != q.Q.shape[1] or q.k > n:
                raise ValueError("quadratic form must be square over a leading sub-vector")
            if q.lin is not None:
                q.lin = np.asarray(q.lin, dtype=float)
                if q.lin.shape != (n,):
                    raise ValueError("quadratic linear part must have one entry per variable")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def n_ub(self) -> int:
        return self.A_ub.shape[0]

    def with_sd_cap(self, sigma: float) -> "ConvexProgram":
        if self.quad is None:
            raise ValueError("program has no variance constraint")
        quad = dataclasses.replace(self.quad, bound=float(sigma) ** 2)
        return dataclasses.replace(self, quad=quad)

    def without_quad(self) -> "ConvexProgram":
        return dataclasses.replace(self, quad=None)

    def check(self, rtol: float = 1e-8) -> None:
        """Raise ValueError when the variance form is not symmetric PSD."""
        if self.quad is None:
            return
        Q = self.quad.Q
        if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise ValueError("variance form is not symmetric")
        ev = np.linalg.eigvalsh(0.5 * (Q + Q.T))
        if ev.size and ev[0] < -rtol * max(ev[-1], 0.0) - 1e-300:
            raise ValueError(f"variance form is not PSD (min eigenvalue {ev[0]:.3e})")

    def variance(self, x: np.ndarray) -> float:
        return self.quad.form(np.asarray(x, dtype=float))

    def to_lp_text(self) -> str:
        """Plain-text LP-style dump for cross-checking with external solvers."""
        names = self.labels or [f"x{j}" for j in range(self.n_vars)]

        def expr(coefs):
            terms = [f"{v:+.17g} {names[j]}" for j, v in enumerate(coefs) if v != 0.0]
            return " ".join(terms) if terms else "0"

        lines = ["Minimize", f" obj: {expr(self.c)}", "Subject To"]
        A = self.A_eq.toarray()
        for i in range(self.n_eq):
            lines.append(f" e{i}: {expr(A[i])} = {self.b_eq[i]:.17g}")
        G = self.A_ub.toarray()
        for i in range(self.n_ub):
            lines.append(f" u{i}: {expr(G[i])} <= {self.b_ub[i]:.17g}")
        if self.quad is not None:
            q = self.quad
            sq = []
            for i in range(q.k):
                for j in range(q.k):
                    if q.Q[i, j] != 0.0:
                        sq.append(f"{q.Q[i, j]:+.17g} {names[i]} * {names[j]}")
            lin = expr(q.lin) if q.lin is not None else "0"
            lines.append(f" var: {lin} + [ {' '.join(sq)} ] <= {q.bound - q.const:.17g}")
        lines.append("Bounds")
        for j, lb in enumerate(self.lower):
            lines.append(f" {names[j]} free" if not np.isfinite(lb) else f" {names[j]} >= {lb:.17g}")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class Solution:
    x: np.ndarray
    objective: float
    status: str
    kkt_residuals: dict = field(default_factory=dict)
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _rows(M, rhs, n):
    if M is None:
        return sp.csr_matrix((0, n)), np.zeros(0)
    M = sp.csr_matrix(M, dtype=float)
    if M.shape[1] != n:
        raise ValueError(f"constraint rows have {M.shape[1]} columns, expected {n}")
    rhs = np.asarray(rhs, dtype=float).reshape(-1)
    if rhs.shape[0] != M.shape[0]:
        raise ValueError("right-hand side length does not match constraint rows")
    return M, rhs


def _row_scale(M):
    if M.shape[0] == 0:
        return np.ones(0)
    big = np.asarray(abs(M).max(axis=1).todense()).ravel()
    big[big == 0.0] = 1.0
    return 1.0 / big


def _interior_point(p: ConvexProgram, P=None, tol=TARGET_TOL, accept=ACCEPT_TOL,
                    max_iter=MAX_ITERATIONS):
    """Mehrotra predictor-corrector on the slack form of ``p``.

    ``P`` adds ``x[:kP] @ P @ x[:kP]`` to the objective (min-variance solves).
    Returns ``(x, status, residuals, iterations)`` with status in
    {optimal, max_iter, diverged}.
    """
    n = p.n_vars
    cs = max(1.0, np.abs(p.c).max(initial=0.0))
    if P is not None:
        cs = max(cs, np.abs(P).max(initial=0.0))
    c = p.c / cs
    Pm = None if P is None else np.asarray(P, dtype=float) / cs
    kP = 0 if Pm is None else Pm.shape[0]

    ra = _row_scale(p.A_eq)
    A = sp.diags(ra) @ p.A_eq if p.n_eq else p.A_eq
    b = p.b_eq * ra
    rg = _row_scale(p.A_ub)
    G = (sp.diags(rg) @ p.A_ub).tocsr() if p.n_ub else p.A_ub
    h = p.b_ub * rg

    quad = p.quad
    if quad is not None:
        lin = quad.lin if quad.lin is not None else np.zeros(n)
        qs = 1.0 / max(np.abs(quad.Q).max(initial=0.0), np.abs(lin).max(initial=0.0),
                       abs(quad.bound - quad.const), 1e-12)
        Qs = quad.Q * qs
        lins = lin * qs
        cq = (quad.const - quad.bound) * qs
        kq = quad.k
    mq = 1 if quad is not None else 0

    lb = p.lower
    ib = np.flatnonzero(np.isfinite(lb))
    m_e, m_g, m_b = A.shape[0], G.shape[0], ib.size
    m_tot = m_g + m_b + mq

    trace = 0.0
    if quad is not None and kq:
        trace = max(trace, np.trace(Qs) / kq)
    if Pm is not None and kP:
        trace = max(trace, np.trace(Pm) / kP)
    delta = 1e-10 * max(trace, 1.0)
    delta_e = 1e-12

    x = np.zeros(n)
    x[ib] = lb[ib] + 1.0
    y = np.zeros(m_e)
    s_g = np.maximum(h - G @ x, 1.0)
    z_g = np.ones(m_g)
    z_b = np.ones(m_b)
    if quad is not None:
        s_q = max(-(x[:kq] @ Qs @ x[:kq] + lins @ x + cq), 1.0)
        z_q = 1.0
    else:
        s_q, z_q = 0.0, 0.0

    norm_b = 1.0 + max(np.abs(b).max(initial=0.0), np.abs(h).max(initial=0.0))
    norm_c = 1.0 + np.abs(c).max(initial=0.0)
    status = MAX_ITER
    res = {}
    best = None
    it = 0
    for it in range(max_iter + 1):
        xb = x[ib] - lb[ib]
        grad_f = c.copy()
        if Pm is not None:
            grad_f[:kP] += 2.0 * (Pm @ x[:kP])
        r_d = grad_f - np.bincount(ib, weights=z_b, minlength=n) if m_b else grad_f.copy()
        if m_e:
            r_d += A.T @ y
        if m_g:
            r_d += G.T @ z_g
        if quad is not None:
            gq = x[:kq] @ Qs @ x[:kq] + lins @ x + cq
            dgq = lins.copy()
            dgq[:kq] += 2.0 * (Qs @ x[:kq])
            r_d += z_q * dgq
            r_q = gq + s_q
        r_e = A @ x - b if m_e else np.zeros(0)
        r_g = G @ x + s_g - h if m_g else np.zeros(0)

        comp = float(xb @ z_b + s_g @ z_g + s_q * z_q)
        mu = comp / m_tot if m_tot else 0.0
        obj = float(c @ x) + (float(x[:kP] @ Pm @ x[:kP]) if Pm is not None else 0.0)
        pres = max(np.abs(r_e).max(initial=0.0), np.abs(r_g).max(initial=0.0),
                   abs(r_q) if quad is not None else 0.0) / norm_b
        dres = np.abs(r_d).max(initial=0.0) / norm_c
        cres = comp / (1.0 + abs(obj))
        res = {"primal": pres, "dual": dres, "complementarity": cres}
        worst = max(pres, dres, cres)
        if best is None or worst < best[0]:
            best = (worst, x.copy(), dict(res))
        if worst <= tol:
            status = OPTIMAL
            break
        if it == max_iter:
            break
        if not np.all(np.isfinite(x)) or np.abs(x).max(initial=0.0) > _BLOWUP or \
                max(z_g.max(initial=0.0), z_b.max(initial=0.0), z_q) > _BLOWUP:
            status = "diverged"
            break

        # Newton matrix
        hd = np.full(n, delta)
        hd[ib] += z_b / xb
        H = sp.diags(hd)
        if quad is not None and kq:
            blk = 2.0 * z_q * Qs
            if Pm is not None:
                blk = blk + _pad(2.0 * Pm, kq)
            H = H + _embed(blk, n)
        elif Pm is not None and kP:
            H = H + _embed(2.0 * Pm, n)
        blocks = [[H, A.T if m_e else None, G.T if m_g else None]]
        row_e = [A, -delta_e * sp.identity(m_e), None] if m_e else None
        row_g = [G, None, sp.diags(-s_g / z_g)] if m_g else None
        if row_e:
            blocks.append(row_e)
        if row_g:
            blocks.append(row_g)
        if quad is not None:
            blocks[0].append(sp.csr_matrix(dgq.reshape(-1, 1)))
            if row_e:
                row_e.append(None)
            if row_g:
                row_g.append(None)
            blocks.append([sp.csr_matrix(dgq.reshape(1, -1))] + [None] * (len(blocks[0]) - 2)
                          + [sp.csr_matrix([[-s_q / z_q]])])
        # drop absent block columns
        keep = [j for j in range(len(blocks[0])) if any(r[j] is not None for r in blocks)]
        K = sp.bmat([[r[j] for j in keep] for r in blocks], format="csc")
        dim = K.shape[0]
        try:
            if dim <= _DENSE_LIMIT:
                Kd = K.toarray()
                lu = _DenseLU(Kd)
            else:
                lu = splu(K, permc_spec="COLAMD")
        except (RuntimeError, np.linalg.LinAlgError):
            status = "diverged"
            break

        def direction(rc_b, rc_g, rc_q):
            rhs = [-r_d - (np.bincount(ib, weights=rc_b / xb, minlength=n) if m_b else 0.0)]
            if m_e:
                rhs.append(-r_e)
            if m_g:
                rhs.append(-r_g + rc_g / z_g)
            if quad is not None:
                rhs.append(np.array([-r_q + rc_q / z_q]))
            sol = lu.solve(np.concatenate(rhs))
            dx = sol[:n]
            pos = n
            dy = sol[pos:pos + m_e]
            pos += m_e
            dzg = sol[pos:pos + m_g]
            pos += m_g
            dzq = sol[pos] if quad is not None else 0.0
            dzb = (-rc_b - z_b * dx[ib]) / xb
            dsg = (-rc_g - s_g * dzg) / z_g
            dsq = (-rc_q - s_q * dzq) / z_q if quad is not None else 0.0
            return dx, dy, dzg, dzq, dzb, dsg, dsq

        def max_step(v, dv):
            neg = dv < 0
            if not np.any(neg):
                return 1.0
            return min(1.0, float(np.min(-v[neg] / dv[neg])))

        prim_v = np.concatenate([xb, s_g, [s_q] if quad is not None else []])
        dual_v = np.concatenate([z_b, z_g, [z_q] if quad is not None else []])

        aff = direction(xb * z_b, s_g * z_g, s_q * z_q)
        dx, dy, dzg, dzq, dzb, dsg, dsq = aff
        dprim = np.concatenate([dx[ib], dsg, [dsq] if quad is not None else []])
        ddual = np.concatenate([dzb, dzg, [dzq] if quad is not None else []])
        a_aff = min(max_step(prim_v, dprim), max_step(dual_v, ddual))
        mu_aff = float((prim_v + a_aff * dprim) @ (dual_v + a_aff * ddual)) / m_tot if m_tot else 0.0
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        sm = sigma * mu

        cb = xb * z_b + dx[ib] * dzb - sm
        cg = s_g * z_g + dsg * dzg - sm
        cq_ = s_q * z_q + dsq * dzq - sm if quad is not None else 0.0
        dx, dy, dzg, dzq, dzb, dsg, dsq = direction(cb, cg, cq_)
        dprim = np.concatenate([dx[ib], dsg, [dsq] if quad is not None else []])
        ddual = np.concatenate([dzb, dzg, [dzq] if quad is not None else []])
        eta = max(0.9, 1.0 - mu) if mu < 1 else 0.9
        step = eta * min(max_step(prim_v, dprim), max_step(dual_v, ddual))
        step = min(step, 1.0)

        x = x + step * dx
        y = y + step * dy
        z_g = z_g + step * dzg
        z_b = z_b + step * dzb
        s_g = s_g + step * dsg
        if quad is not None:
            z_q = z_q + step * dzq
            s_q = s_q + step * dsq
        # keep bound slacks strictly interior
        x[ib] = np.maximum(x[ib], lb[ib] + 1e-300)

    if status != OPTIMAL and best is not None and best[0] <= accept:
        x, res = best[1], best[2]
        status = OPTIMAL
    return x, status, res, it


class _DenseLU:
    def __init__(self, K):
        import scipy.linalg as sla

        self._f = sla.lu_factor(K, check_finite=True)

    def solve(self, rhs):
        import scipy.linalg as sla

        return sla.lu_solve(self._f, rhs)


def _pad(M, k):
    out = np.zeros((k, k))
    out[: M.shape[0], : M.shape[1]] = M
    return out


def _embed(block, n):
    k = block.shape[0]
    if k == n:
        return sp.csr_matrix(block)
    return sp.bmat([[sp.csr_matrix(block), None], [None, sp.csr_matrix((n - k, n - k))]],
                   format="csr")


def _phase_one(p: ConvexProgram):
    """Minimize the largest constraint violation ``t``; returns ``t*``."""
    n = p.n_vars
    ib = np.flatnonzero(np.isfinite(p.lower))
    ra = _row_scale(p.A_ub)
    rows = [sp.hstack([sp.diags(ra) @ p.A_ub, -sp.csr_matrix(np.ones((p.n_ub, 1)))])] if p.n_ub else []
    rhs = [p.b_ub * ra] if p.n_ub else []
    if ib.size:
        B = sp.csr_matrix((-np.ones(ib.size), (np.arange(ib.size), ib)), shape=(ib.size, n))
        rows.append(sp.hstack([B, -sp.csr_matrix(np.ones((ib.size, 1)))]))
        rhs.append(-p.lower[ib])
    A_eq = sp.hstack([p.A_eq, sp.csr_matrix((p.n_eq, 1))]) if p.n_eq else None
    quad = None
    if p.quad is not None:
        q = p.quad
        lin = np.zeros(n + 1) if q.lin is None else np.append(q.lin, 0.0)
        scale = max(np.abs(q.Q).max(initial=0.0), np.abs(lin).max(initial=0.0),
                    abs(q.bound - q.const), 1e-12)
        lin[-1] = -scale
        quad = QuadConstraint(Q=q.Q, bound=q.bound, lin=lin, const=q.const)
    c = np.zeros(n + 1)
    c[-1] = 1.0
    lower = np.full(n + 1, -np.inf)
    lower[-1] = -1.0
    aux = ConvexProgram(c=c, A_eq=A_eq, b_eq=p.b_eq if p.n_eq else None,
                        A_ub=sp.vstack(rows) if rows else None,
                        b_ub=np.concatenate(rhs) if rhs else None,
                        lower=lower, quad=quad)
    x, status, _, _ = _interior_point(aux, tol=1e-9)
    if status != OPTIMAL:
        return np.inf
    return float(x[-1])


def _classify_failure(p: ConvexProgram, x, status, res, it):
    t = _phase_one(p)
    if t > 1e-7:
        return Solution(x=x, objective=float(p.c @ x), status=INFEASIBLE, kkt_residuals=res,
                        iterations=it)
    if status == "diverged":
        return Solution(x=x, objective=-np.inf, status=UNBOUNDED, kkt_residuals=res,
                        iterations=it)
    return Solution(x=x, objective=float(p.c @ x), status=MAX_ITER, kkt_residuals=res,
                    iterations=it)


def solve(p: ConvexProgram, tol: float = TARGET_TOL, max_iter: int = MAX_ITERATIONS) -> Solution:
    """Solve ``p``. Infeasible or unbounded programs are reported via ``status``."""
    if p.quad is not None and not np.isfinite(p.quad.bound):
        p = p.without_quad()
    x, status, res, it = _interior_point(p, tol=tol, max_iter=max_iter)
    if status != OPTIMAL:
        return _classify_failure(p, x, status, res, it)
    return Solution(x=x, objective=float(p.c @ x), status=OPTIMAL, kkt_residuals=res,
                    iterations=it)


def min_variance(p: ConvexProgram, tol: float = TARGET_TOL, max_iter: int = MAX_ITERATIONS,
                 cost_weight: float = 0.0) -> Solution:
    """Minimize the variance form subject to the linear rows of ``p``.

    The variance bound is ignored. A positive ``cost_weight`` adds a small
    multiple of ``p.c`` (relative to the variance scale) so that, among
    near-minimal-variance portfolios, the cheapest one is returned; such a
    point is exactly Pareto-optimal. ``objective`` is the attained variance.
    """
    if p.quad is None:
        raise ValueError("program has no variance form")
    q = p.quad
    c = np.zeros(p.n_vars) if q.lin is None else q.lin.copy()
    if cost_weight > 0.0 and np.any(p.c):
        scale = max(np.trace(q.Q) / max(q.k, 1), 1e-300)
        c = c + cost_weight * scale * p.c / np.abs(p.c).max()
    lp = dataclasses.replace(p, c=c, quad=None)
    x, status, res, it = _interior_point(lp, P=q.Q, tol=tol, max_iter=max_iter)
    if status != OPTIMAL:
        return _classify_failure(lp, x, status, res, it)
    return Solution(x=x, objective=q.form(x), status=OPTIMAL, kkt_residuals=res, iterations=it)


def _simplex_vertex(p: ConvexProgram) -> Solution | None:
    """Exact optimum for ``min c@x, a@x = b, x >= 0`` with a > 0, b > 0.

    The optimum sits on a vertex ``x = b/a_j e_j``; ties go to the smallest
    label so repeated runs pick the same plant.
    """
    if p.n_ub or p.n_eq != 1 or np.any(p.lower != 0.0):
        return None
    a = p.A_eq.toarray().ravel()
    b = float(p.b_eq[0])
    if b <= 0 or np.any(a <= 0):
        return None
    vals = p.c * b / a
    best = vals.min()
    tied = np.flatnonzero(vals <= best + 1e-12 * max(1.0, abs(best)))
    labels = p.labels or [f"{j:012d}" for j in range(p.n_vars)]
    j = min(tied, key=lambda i: labels[i])
    x = np.zeros(p.n_vars)
    x[j] = b / a[j]
    return Solution(x=x, objective=float(p.c @ x), status=OPTIMAL,
                    kkt_residuals={"primal": 0.0, "dual": 0.0, "complementarity": 0.0})


def unconstrained_sd_endpoint(p: ConvexProgram, tol: float = TARGET_TOL,
                              max_iter: int = MAX_ITERATIONS) -> Solution:
    """Solve ``p`` with the variance bound removed (high end of a frontier)."""
    lp = p.without_quad()
    vertex = _simplex_vertex(lp)
    if vertex is not None:
        return vertex
    return solve(lp, tol=tol, max_iter=max_iter)
