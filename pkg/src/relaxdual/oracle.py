"""Centralized reference solutions used to check the distributed iterates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import NonConvergence, TooLarge
from .local_solver import inner_min, inner_min_batch
from .problem import QuadBoxLinearLocal

DUAL = "dual-supergradient"
GRID = "grid"
ANALYTIC = "analytic"

STALL_MIN_ITERS = 1000


@dataclass(frozen=True)
class OracleResult:
    """Reference optimum.

    ``certified_gap`` is, for the dual method, the relaxed primal value at
    ``x_star`` minus ``f_star``; for the grid method, an estimate of the
    discretization error. ``mu_star`` is all-NaN for the grid method.
    """

    f_star: float
    mu_star: np.ndarray
    x_star: list
    method: str
    certified_gap: float
    feasible: bool = True
    iterations: int = 0
    converged: bool = True
    history: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "method": self.method,
            "feasible": self.feasible,
            "f_star": float(self.f_star),
            "mu_star": [float(v) for v in self.mu_star],
            "mu_star_inf_norm": float(np.max(np.abs(self.mu_star))) if self.mu_star.size else 0.0,
            "x_star": [float(v) for xi in self.x_star for v in np.atleast_1d(xi)],
            "certified_gap": float(self.certified_gap),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


class _DualEvaluator:
    """``q(mu)``, a supergradient of ``q`` and the inner minimizers."""

    def __init__(self, p):
        self.p = p
        self.batched = p.is_quadratic_family()
        if self.batched:
            locs = p.locals
            self.w = np.array([loc.w for loc in locs])
            self.r = np.array([loc.r for loc in locs])
            self.lo = np.array([loc.lower[0] for loc in locs])
            self.hi = np.array([loc.upper[0] for loc in locs])
            self.a = np.array([loc.a for loc in locs])
            self.b = np.array([loc.b for loc in locs])

    def __call__(self, mu):
        if self.batched:
            x, vals = inner_min_batch(self.w, self.r, self.lo, self.hi, self.a, self.b, mu)
            coupling = (self.a * x[:, None] - self.b).sum(axis=0)
            cost = float(np.sum(self.w * x * x + self.r * x))
            return float(vals.sum()), coupling, cost, [np.array([v]) for v in x]
        xs, q, coupling, cost = [], 0.0, np.zeros(self.p.s_dim), 0.0
        for loc in self.p.locals:
            x, v = inner_min(loc, mu)
            xs.append(x)
            q += v
            coupling = coupling + loc.coupling(x)
            cost += loc.cost(x)
        return q, coupling, cost, xs


def dual_function(p, mu):
    """``q(mu) = sum_i min_{x_i in X_i} f_i(x_i) + mu^T g_i(x_i)``."""
    return _DualEvaluator(p)(np.atleast_1d(np.asarray(mu, dtype=float)))[0]


def solve_dual_centralized(p, tol=1e-9, max_iters=200_000, step_scale=None, keep_history=False):
    """Maximize the dual function over ``[0, M]^S`` by projected supergradient ascent.

    Uses steps ``c / sqrt(k)`` along the supergradient ``sum_i g_i(x_i(mu))``
    and keeps the best iterate. Stops once the relaxed primal value at the
    inner minimizers exceeds the best dual value by at most
    ``tol * max(1, |q|)``.

    When a cap of at least ``STALL_MIN_ITERS`` is hit, the result is still
    returned if the best dual value stalled over the second half of the run
    (typical when the inner minimizer is not unique, so the gap cannot close);
    otherwise NonConvergence is raised.
    """
    ev = _DualEvaluator(p)
    S, M = p.s_dim, p.big_m
    top = np.full(S, M)

    def gap_at(q, coupling, cost):
        return abs(cost + M * float(np.maximum(coupling, 0.0).sum()) - q)

    mu = np.zeros(S)
    q, coupling, cost, xs = ev(mu)
    if step_scale is None:
        spread = float(np.linalg.norm(coupling - ev(top)[1]))
        step_scale = M * math.sqrt(S) / spread if spread > 0 else 1.0

    best = (q, mu.copy(), xs, gap_at(q, coupling, cost))
    history = [q] if keep_history else None
    half_mark_q = None
    k = 0
    while best[3] > tol * max(1.0, abs(best[0])) and k < max_iters:
        k += 1
        mu = np.clip(mu + (step_scale / math.sqrt(k)) * coupling, 0.0, top)
        q, coupling, cost, xs = ev(mu)
        if q > best[0] or (q == best[0] and gap_at(q, coupling, cost) < best[3]):
            best = (q, mu.copy(), xs, gap_at(q, coupling, cost))
        if keep_history:
            history.append(best[0])
        if k == max_iters // 2:
            half_mark_q = best[0]

    converged = best[3] <= tol * max(1.0, abs(best[0]))
    if not converged:
        stalled = max_iters >= STALL_MIN_ITERS and best[0] - half_mark_q <= tol * max(1.0, abs(best[0]))
        if not stalled:
            raise NonConvergence(
                f"dual ascent: gap {best[3]:.3e} above tol after {max_iters} iterations",
                residual=best[3],
            )
    return OracleResult(
        f_star=best[0],
        mu_star=best[1],
        x_star=best[2],
        method=DUAL,
        certified_gap=best[3],
        iterations=k,
        converged=converged,
        history=None if history is None else np.array(history),
    )


# ---------------------------------------------------------------------------
# exhaustive grid scan


def _agent_grid(loc, points):
    axes = [np.linspace(lo, hi, points) for lo, hi in zip(loc.lower, loc.upper)]
    pts = np.array(list(product(*axes))) if loc.dim > 1 else axes[0].reshape(-1, 1)
    if isinstance(loc, QuadBoxLinearLocal):
        x = pts[:, 0]
        f = loc.w * x * x + loc.r * x
        g = loc.a[None, :] * x[:, None] - loc.b[None, :]
        lip = float(np.max(np.abs(2.0 * loc.w * x + loc.r)))
    else:
        f = np.array([loc.cost(pt) for pt in pts])
        g = np.array([loc.coupling(pt) for pt in pts])
        lip = float(max(np.sum(np.abs(loc.cost_grad(pt))) for pt in pts))
    spacing = float(np.max((loc.upper - loc.lower) / max(points - 1, 1)))
    return pts, f, g, lip * spacing


def _prefix_argmin(g_last, f_last):
    """Sort the last agent's points by coupling value; for each prefix record
    the index of the cheapest point (smallest grid index on ties)."""
    order = np.argsort(g_last, kind="stable")
    sorted_g = g_last[order]
    best_idx = np.empty(order.size, dtype=np.intp)
    cur = -1
    for k, idx in enumerate(order):
        if cur < 0 or f_last[idx] < f_last[cur] or (f_last[idx] == f_last[cur] and idx < cur):
            cur = idx
        best_idx[k] = cur
    return sorted_g, best_idx


def solve_grid(p, points_per_dim=2001, max_total_dim=4, max_agents=4, max_outer=10**8, chunk=1 << 20):
    """Brute-force minimum over the product grid of all boxes.

    Each box axis is discretized with ``points_per_dim`` points and a grid
    point is kept only if it satisfies the coupling exactly. For a scalar
    coupling the last agent is handled through a sorted prefix minimum, which
    gives the same minimizer as scanning its points one by one.

    Raises
    ------
    TooLarge
        More than ``max_agents`` agents or ``max_total_dim`` variables, or
        more than ``max_outer`` grid combinations for all agents but the last.
    """
    total_dim = sum(loc.dim for loc in p.locals)
    if p.n_agents > max_agents or total_dim > max_total_dim:
        raise TooLarge(
            f"grid oracle handles at most {max_agents} agents and {max_total_dim} variables, "
            f"got {p.n_agents} agents and {total_dim} variables"
        )
    grids = [_agent_grid(loc, points_per_dim) for loc in p.locals]
    S = p.s_dim
    resolution = sum(gr[3] for gr in grids)
    outer, (last_pts, f_last, g_last, _) = grids[:-1], grids[-1]
    sizes = [gr[0].shape[0] for gr in outer]
    n_outer = math.prod(sizes)
    if n_outer > max_outer:
        raise TooLarge(f"grid scan needs {n_outer} outer combinations (limit {max_outer})")
    if S == 1:
        sorted_g, best_idx = _prefix_argmin(g_last[:, 0], f_last)

    best_val, best_outer, best_last = math.inf, None, None
    for start in range(0, n_outer, chunk):
        flat = np.arange(start, min(start + chunk, n_outer))
        idx = np.unravel_index(flat, sizes) if sizes else ()
        f_sum = np.zeros(flat.size)
        g_sum = np.zeros((flat.size, S))
        for (_, f, g, _), ix in zip(outer, idx):
            f_sum += f[ix]
            g_sum += g[ix]
        if S == 1:
            pos = np.searchsorted(sorted_g, -g_sum[:, 0], side="right") - 1
            ok = pos >= 0
            if not np.any(ok):
                continue
            last = np.where(ok, best_idx[np.maximum(pos, 0)], 0)
            total = np.where(ok, f_sum + f_last[last], math.inf)
        else:
            feas = np.all(g_sum[:, None, :] + g_last[None, :, :] <= 0.0, axis=2)
            cand = np.where(feas, f_sum[:, None] + f_last[None, :], math.inf)
            last = np.argmin(cand, axis=1)
            total = cand[np.arange(flat.size), last]
        k = int(np.argmin(total))
        if total[k] < best_val:
            best_val = float(total[k])
            best_outer = [int(ix[k]) for ix in idx]
            best_last = int(last[k])

    nan_mu = np.full(S, np.nan)
    if best_outer is None:
        return OracleResult(
            f_star=math.inf, mu_star=nan_mu, x_star=[], method=GRID,
            certified_gap=resolution, feasible=False,
        )
    x_star = [gr[0][k].copy() for gr, k in zip(outer, best_outer)] + [last_pts[best_last].copy()]
    return OracleResult(
        f_star=best_val, mu_star=nan_mu, x_star=x_star, method=GRID, certified_gap=resolution,
    )


def check_m_bound(result, big_m):
    """True iff ``||mu_star||_inf < M``: the relaxation bound is not binding."""
    if result.method == GRID:
        raise ValueError("the grid oracle does not produce a dual solution")
    return bool(np.max(np.abs(result.mu_star)) < big_m)
