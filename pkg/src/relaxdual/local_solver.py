"""Per-agent relaxed subproblem.

Each round, agent ``i`` computes a primal-dual optimal pair of

    minimize    f_i(x) + M * 1^T rho
    subject to  x in X_i,  rho >= 0,  g_i(x) + d <= rho

where ``d`` is the agent's multiplier offset. The pair is found on the dual
side: ``mu`` maximizes ``phi(mu) = q_i(mu) + mu^T d`` over ``[0, M]^S`` with
``q_i(mu) = min_{x in X_i} f_i(x) + mu^T g_i(x)``; then ``x = x(mu)`` and
``rho = max(0, g_i(x) + d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonConvergence
from .problem import QuadBoxLinearLocal


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances for the local solve.

    ``step_scale`` sets the fallback diminishing step ``step_scale / (k + 1)``
    of the generic multi-component ascent; ``None`` picks it from a secant
    estimate of the supergradient's variation over the box.
    """

    tol: float = 1e-8
    max_outer_iters: int = 100_000
    step_scale: float | None = None
    inner_tol: float = 1e-12
    inner_max_iters: int = 20_000

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")


DEFAULT_SETTINGS = SolverSettings()


@dataclass(frozen=True)
class LocalSolution:
    x: np.ndarray
    rho: np.ndarray
    mu: np.ndarray
    kkt_residual: float


# ---------------------------------------------------------------------------
# inner minimization: q_i(mu)


def _quad_x(loc, mu_dot_a):
    xs = (-loc.r - mu_dot_a) / (2.0 * loc.w)
    return min(max(xs, loc.lower[0]), loc.upper[0])


def inner_min(local, mu, settings=DEFAULT_SETTINGS):
    """Minimize ``f(x) + mu^T g(x)`` over the box.

    Returns the minimizer and the value ``q(mu)``.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if mu.shape != (local.s_dim,):
        raise DimensionMismatch(f"mu must have shape ({local.s_dim},), got {mu.shape}")
    if isinstance(local, QuadBoxLinearLocal):
        x = _quad_x(local, float(mu @ local.a))
        value = local.w * x * x + local.r * x + float(mu @ (local.a * x - local.b))
        return np.array([x]), value
    x = _projected_gradient_min(local, mu, settings)
    return x, local.cost(x) + float(mu @ local.coupling(x))


def inner_min_batch(w, r, lower, upper, a, b, mu):
    """Vectorized ``inner_min`` over a stack of quadratic-family agents.

    ``w, r, lower, upper`` have shape ``(N,)``; ``a, b`` have shape ``(N, S)``.
    Returns the minimizers ``(N,)`` and values ``(N,)``.
    """
    x = np.clip((-r - a @ mu) / (2.0 * w), lower, upper)
    values = w * x * x + r * x + (a * x[:, None] - b) @ mu
    return x, values


def _projected_gradient_min(local, mu, settings):
    def grad(x):
        return local.cost_grad(x) + local.coupling_jac(x).T @ mu

    x = local.midpoint()
    gx = grad(x)
    step = 1.0
    scale = max(1.0, float(np.max(np.abs(local.upper - local.lower))))
    for _ in range(settings.inner_max_iters):
        if np.max(np.abs(x - local.project(x - gx))) <= settings.inner_tol * scale:
            return x
        while True:
            x_new = local.project(x - step * gx)
            dx = x_new - x
            g_new = grad(x_new)
            # average curvature along dx at most 1/step. For convex objectives this
            # implies descent, and unlike a test on function values it stays
            # meaningful once f no longer changes in floating point.
            if (g_new - gx) @ dx <= (dx @ dx) / step:
                break
            step *= 0.5
            if step < 1e-20:
                return x
        if not np.any(dx):
            return x
        x, gx = x_new, g_new
        step *= 2.0
    raise NonConvergence(
        f"inner minimization did not reach tol {settings.inner_tol} in {settings.inner_max_iters} iterations"
    )


# ---------------------------------------------------------------------------
# relaxed local problem


def kkt_residual(local, x, rho, mu, d, big_m):
    """Worst violation among the optimality conditions of the relaxed local problem.

    Components: projected stationarity in ``x``, ``mu_s * (g + d - rho)_s``,
    ``(M - mu_s) * rho_s`` (both scaled by ``max(1, M)``), the mismatch
    ``rho - max(0, g + d)``, and any violation of ``0 <= mu <= M``.
    """
    g = local.coupling(x) + d
    grad = local.cost_grad(x) + local.coupling_jac(x).T @ mu
    stat = float(np.max(np.abs(x - local.project(x - grad)))) / max(1.0, float(np.max(np.abs(x))))
    m_scale = max(1.0, big_m)
    comp_mu = float(np.max(np.abs(mu * (g - rho)))) / m_scale
    comp_rho = float(np.max(np.abs((big_m - mu) * rho))) / m_scale
    rho_gap = float(np.max(np.abs(rho - np.maximum(0.0, g))))
    box = float(max(0.0, -np.min(mu), np.max(mu) - big_m))
    return max(stat, comp_mu, comp_rho, rho_gap, box)


def _finish(local, x, mu, d, big_m):
    rho = np.maximum(0.0, local.coupling(x) + d)
    res = kkt_residual(local, x, rho, mu, d, big_m)
    return LocalSolution(x=x, rho=rho, mu=mu, kkt_residual=res)


def solve_relaxed_local(local, d, big_m, settings=DEFAULT_SETTINGS):
    """Primal-dual optimal pair ``((x, rho), mu)`` of the relaxed local problem.

    Parameters
    ----------
    local : LocalProblem
    d : array_like, shape (S,)
        Offset added to the coupling, ``sum_j (lambda_ij - lambda_ji)``.
    big_m : float
        Penalty on ``rho``; also the upper bound on ``mu``.
    settings : SolverSettings

    Raises
    ------
    NonConvergence
        The KKT residual is still above ``settings.tol`` after the iteration cap.
    """
    if not big_m > 0:
        raise ValueError(f"M must be positive, got {big_m}")
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if d.shape != (local.s_dim,):
        raise DimensionMismatch(f"offset must have shape ({local.s_dim},), got {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("offset must be finite")
    if isinstance(local, QuadBoxLinearLocal) and local.s_dim == 1:
        sol = _solve_quad_scalar(local, float(d[0]), float(big_m))
    elif local.s_dim == 1:
        sol = _solve_bisection(local, d, float(big_m), settings)
    else:
        sol = _solve_ascent(local, d, float(big_m), settings)
    if sol.kkt_residual > settings.tol:
        raise NonConvergence(
            f"local KKT residual {sol.kkt_residual:.3e} exceeds tol {settings.tol:.1e}",
            residual=sol.kkt_residual,
        )
    return sol


def _solve_quad_scalar(loc, d, big_m):
    # phi'(mu) = a x(mu) - b + d is continuous, piecewise linear, nonincreasing;
    # its root (when interior) comes from inverting the unclamped branch.
    a, b = float(loc.a[0]), float(loc.b[0])
    x0 = _quad_x(loc, 0.0)
    if a * x0 - b + d <= 0.0:
        mu = 0.0
    elif a * _quad_x(loc, big_m * a) - b + d >= 0.0:
        mu = big_m
    else:
        x_root = (b - d) / a
        mu = min(max((-loc.r - 2.0 * loc.w * x_root) / a, 0.0), big_m)
    x = _quad_x(loc, mu * a)
    viol = a * x - b + d
    if 0.0 < mu < big_m and viol > 0.0:
        # interior mu means g(x) + d = 0 exactly; step x to the feasible side of
        # the rounding error so that rho = 0 as complementarity requires
        lo, hi = loc.lower[0], loc.upper[0]
        step = -math.copysign(max(math.ulp(x), viol / abs(a)), a)
        for _ in range(64):
            x_next = min(max(x + step, lo), hi)
            viol_next = a * x_next - b + d
            if viol_next <= 0.0:
                x, viol = x_next, viol_next
                break
            step *= 2.0
    rho = viol if viol > 0.0 else 0.0
    # closed-form KKT residual, same components as kkt_residual()
    grad = 2.0 * loc.w * x + loc.r + mu * a
    lo, hi = loc.lower[0], loc.upper[0]
    stat = abs(x - min(max(x - grad, lo), hi)) / max(1.0, abs(x))
    m_scale = max(1.0, big_m)
    res = max(stat, abs(mu * (viol - rho)) / m_scale, abs((big_m - mu) * rho) / m_scale)
    return LocalSolution(np.array([x]), np.array([rho]), np.array([mu]), res)


def _solve_bisection(local, d, big_m, settings):
    def h(mu):
        x, _ = inner_min(local, np.array([mu]), settings)
        return float(local.coupling(x)[0] + d[0])

    if h(0.0) <= 0.0:
        mu = 0.0
    elif h(big_m) >= 0.0:
        mu = big_m
    else:
        lo, hi = 0.0, big_m
        for _ in range(settings.max_outer_iters):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if h(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        # pick the endpoint whose supergradient is closer to zero
        mu = lo if abs(h(lo)) <= abs(h(hi)) else hi
    x, _ = inner_min(local, np.array([mu]), settings)
    return _finish(local, x, np.array([mu]), d, big_m)


def _solve_ascent(local, d, big_m, settings):
    S = local.s_dim
    upper = np.full(S, big_m)

    def phi_and_grad(mu):
        x, q = inner_min(local, mu, settings)
        return q + float(mu @ d), local.coupling(x) + d, x

    mu = np.zeros(S)
    val, grad, x = phi_and_grad(mu)
    if settings.step_scale is None:
        _, grad_top, _ = phi_and_grad(upper)
        spread = float(np.linalg.norm(grad - grad_top))
        c = big_m * math.sqrt(S) / spread if spread > 0 else 1.0
    else:
        c = settings.step_scale
    alpha = c
    best = _finish(local, x, mu.copy(), d, big_m)
    for k in range(settings.max_outer_iters):
        if best.kkt_residual <= settings.tol:
            break
        # backtracking step (sufficient increase); diminishing fallback when phi looks nonsmooth
        trial = alpha * 2.0
        while True:
            mu_new = np.clip(mu + trial * grad, 0.0, upper)
            step = mu_new - mu
            val_new, grad_new, x_new = phi_and_grad(mu_new)
            if val_new >= val + grad @ step - (step @ step) / (2.0 * trial) - 1e-15 * abs(val):
                alpha = trial
                break
            trial *= 0.5
            if trial < c * 1e-12:
                alpha = c / (k + 1)
                mu_new = np.clip(mu + alpha * grad, 0.0, upper)
                val_new, grad_new, x_new = phi_and_grad(mu_new)
                break
        mu, val, grad, x = mu_new, val_new, grad_new, x_new
        cand = _finish(local, x, mu.copy(), d, big_m)
        if cand.kkt_residual < best.kkt_residual:
            best = cand
    return best


# ---------------------------------------------------------------------------
# feasibility of the unrelaxed local constraint


def min_max_violation(local, d, settings=DEFAULT_SETTINGS):
    """``min_{x in X} max_s (g(x) + d)_s``."""
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if isinstance(local, QuadBoxLinearLocal):
        # max of affine functions of a scalar: minimum sits at an end or a crossing
        lo, hi = local.lower[0], local.upper[0]
        cands = [lo, hi]
        a, c = local.a, d - local.b
        for s in range(local.s_dim):
            for t in range(s + 1, local.s_dim):
                if a[s] != a[t]:
                    xc = (c[t] - c[s]) / (a[s] - a[t])
                    if lo < xc < hi:
                        cands.append(xc)
        return min(float(np.max(a * x + c)) for x in cands)
    # projected subgradient on the max-violation, best iterate
    x = local.midpoint()
    width = float(np.max(local.upper - local.lower)) or 1.0
    best = float(np.max(local.coupling(x) + d))
    for k in range(settings.inner_max_iters):
        v = local.coupling(x) + d
        s = int(np.argmax(v))
        best = min(best, float(v[s]))
        sub = local.coupling_jac(x)[s]
        norm = float(np.linalg.norm(sub))
        if norm == 0.0:
            break
        x = local.project(x - (width / math.sqrt(k + 1)) * sub / norm)
    return best


def nonrelaxed_feasibility_diagnostic(local, d, tol=1e-12, settings=DEFAULT_SETTINGS):
    """True iff ``g(x) + d <= 0`` has a solution in the box (within ``tol``).

    When this is false the unrelaxed local step has no finite maximizer in
    ``mu``, which is exactly the situation the ``M`` bound guards against.
    """
    return min_max_violation(local, d, settings) <= tol
