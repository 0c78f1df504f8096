"""Coupled convex problems: separable costs, box sets, one coupling inequality.

The global problem is

    minimize    sum_i f_i(x_i)
    subject to  x_i in X_i (a box),  sum_i g_i(x_i) <= 0  (componentwise, in R^S)

and its relaxed form adds a slack ``rho >= 0`` on the coupling, penalized by
``M * sum(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import DimensionMismatch, NegativeSlack

BENCHMARK_BIG_M = 1200.0


class LocalProblem:
    """One agent's data: convex cost, box set and convex coupling map.

    Subclasses provide ``cost``, ``cost_grad``, ``coupling`` and
    ``coupling_jac``. For nonsmooth functions the "gradient" accessors may
    return any subgradient.
    """

    lower: np.ndarray
    upper: np.ndarray
    s_dim: int

    @property
    def dim(self):
        return self.lower.shape[0]

    def cost(self, x):
        raise NotImplementedError

    def cost_grad(self, x):
        raise NotImplementedError

    def coupling(self, x):
        raise NotImplementedError

    def coupling_jac(self, x):
        """Rows are subgradients of the coupling components, shape ``(S, dim)``."""
        raise NotImplementedError

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    def _check_box(self):
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise DimensionMismatch("box bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("box bounds must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("box lower bound exceeds upper bound")


class QuadBoxLinearLocal(LocalProblem):
    """Scalar local problem ``f(x) = w x^2 + r x`` on ``[lower, upper]``
    with affine coupling ``g(x) = a x - b`` in ``R^S``."""

    def __init__(self, w, r, lower, upper, a, b):
        self.w = float(w)
        self.r = float(r)
        self.lower = np.array([float(lower)])
        self.upper = np.array([float(upper)])
        self.a = np.atleast_1d(np.asarray(a, dtype=float)).copy()
        self.b = np.atleast_1d(np.asarray(b, dtype=float)).copy()
        if self.a.ndim != 1 or self.a.shape != self.b.shape:
            raise DimensionMismatch(f"coupling slope {self.a.shape} and offset {self.b.shape} differ")
        if not self.w > 0:
            raise ValueError(f"quadratic weight must be positive, got {self.w}")
        self.s_dim = self.a.shape[0]
        self._check_box()

    def __repr__(self):
        return (
            f"QuadBoxLinearLocal(w={self.w!r}, r={self.r!r}, lower={self.lower[0]!r}, "
            f"upper={self.upper[0]!r}, a={self.a.tolist()!r}, b={self.b.tolist()!r})"
        )

    def cost(self, x):
        x = float(np.asarray(x).reshape(-1)[0])
        return self.w * x * x + self.r * x

    def cost_grad(self, x):
        x = float(np.asarray(x).reshape(-1)[0])
        return np.array([2.0 * self.w * x + self.r])

    def coupling(self, x):
        x = float(np.asarray(x).reshape(-1)[0])
        return self.a * x - self.b

    def coupling_jac(self, x):
        return self.a.reshape(-1, 1).copy()

    def to_dict(self):
        return {
            "w": self.w,
            "r": self.r,
            "lower": float(self.lower[0]),
            "upper": float(self.upper[0]),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
        }


class FunctionLocal(LocalProblem):
    """Local problem assembled from user callables.

    ``cost_grad`` and ``coupling_jac`` must return a (sub)gradient of shape
    ``(dim,)`` and a Jacobian of shape ``(S, dim)`` respectively. Convexity is
    the caller's responsibility.
    """

    def __init__(self, cost, cost_grad, coupling, coupling_jac, lower, upper):
        self._cost = cost
        self._cost_grad = cost_grad
        self._coupling = coupling
        self._coupling_jac = coupling_jac
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float)).copy()
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float)).copy()
        self._check_box()
        self.s_dim = np.atleast_1d(self.coupling(self.midpoint())).shape[0]

    def cost(self, x):
        return float(self._cost(np.asarray(x, dtype=float)))

    def cost_grad(self, x):
        return np.atleast_1d(np.asarray(self._cost_grad(np.asarray(x, dtype=float)), dtype=float))

    def coupling(self, x):
        return np.atleast_1d(np.asarray(self._coupling(np.asarray(x, dtype=float)), dtype=float))

    def coupling_jac(self, x):
        jac = np.asarray(self._coupling_jac(np.asarray(x, dtype=float)), dtype=float)
        return jac.reshape(self.s_dim, self.dim)


@dataclass(frozen=True)
class CoupledProblem:
    locals: tuple
    big_m: float

    def __post_init__(self):
        object.__setattr__(self, "locals", tuple(self.locals))
        if not self.locals:
            raise ValueError("a coupled problem needs at least one agent")
        dims = {loc.s_dim for loc in self.locals}
        if len(dims) != 1:
            raise DimensionMismatch(f"agents disagree on coupling dimension: {sorted(dims)}")
        if not self.big_m > 0:
            raise ValueError(f"relaxation bound M must be positive, got {self.big_m}")

    @property
    def n_agents(self):
        return len(self.locals)

    @property
    def s_dim(self):
        return self.locals[0].s_dim

    def is_quadratic_family(self):
        return all(isinstance(loc, QuadBoxLinearLocal) for loc in self.locals)

    def with_big_m(self, big_m):
        return CoupledProblem(self.locals, float(big_m))


def paper_instance(n, s_dim=1, seed=0, big_m=BENCHMARK_BIG_M):
    """Random instance of the quadratic benchmark.

    Draws ``w ~ U[1, 20)``, sets ``r = -20 w``, ``lower ~ U[-35, -30)``,
    ``upper ~ U[30, 35)``, ``a ~ U[1, 11)`` and ``b ~ U[0, 10)`` per coupling
    component.
    """
    if n < 1:
        raise ValueError(f"need at least one agent, got n={n}")
    rng = np.random.default_rng(seed)
    w = rng.uniform(1.0, 20.0, size=n)
    lower = rng.uniform(-35.0, -30.0, size=n)
    upper = rng.uniform(30.0, 35.0, size=n)
    a = rng.uniform(1.0, 11.0, size=(n, s_dim))
    b = rng.uniform(0.0, 10.0, size=(n, s_dim))
    locs = [QuadBoxLinearLocal(w[i], -20.0 * w[i], lower[i], upper[i], a[i], b[i]) for i in range(n)]
    return CoupledProblem(locs, float(big_m))


def _as_points(p, x):
    if len(x) != p.n_agents:
        raise DimensionMismatch(f"expected {p.n_agents} local vectors, got {len(x)}")
    pts = []
    for i, (loc, xi) in enumerate(zip(p.locals, x)):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if xi.shape != (loc.dim,):
            raise DimensionMismatch(f"agent {i + 1}: expected shape ({loc.dim},), got {xi.shape}")
        pts.append(xi)
    return pts


def eval_cost(p, x):
    pts = _as_points(p, x)
    return float(sum(loc.cost(xi) for loc, xi in zip(p.locals, pts)))


def eval_coupling(p, x):
    pts = _as_points(p, x)
    total = np.zeros(p.s_dim)
    for loc, xi in zip(p.locals, pts):
        total = total + loc.coupling(xi)
    return total


def eval_relaxed_cost(p, x, rho):
    """``sum_i f_i(x_i) + M * 1^T rho_i``."""
    if len(rho) != p.n_agents:
        raise DimensionMismatch(f"expected {p.n_agents} slack vectors, got {len(rho)}")
    penalty = 0.0
    for i, ri in enumerate(rho):
        ri = np.atleast_1d(np.asarray(ri, dtype=float))
        if ri.shape != (p.s_dim,):
            raise DimensionMismatch(f"agent {i + 1}: slack must have shape ({p.s_dim},)")
        if np.any(ri < 0):
            raise NegativeSlack(f"agent {i + 1}: slack has a negative component {ri.min()}")
        penalty += float(ri.sum())
    return eval_cost(p, x) + p.big_m * penalty


@dataclass(frozen=True)
class SlaterResult:
    holds: bool
    witness: list | None
    coupling_value: np.ndarray | None

    def __bool__(self):
        return self.holds


def _joint_corners(p, limit):
    total_dim = sum(loc.dim for loc in p.locals)
    yield [loc.lower.copy() for loc in p.locals]
    yield [loc.upper.copy() for loc in p.locals]
    if total_dim > limit:
        return
    for bits in product((0, 1), repeat=total_dim):
        pts, k = [], 0
        for loc in p.locals:
            sel = np.array(bits[k:k + loc.dim], dtype=bool)
            pts.append(np.where(sel, loc.upper, loc.lower))
            k += loc.dim
        yield pts


def slater_check(p, samples=1000, seed=0, corner_limit=12):
    """Search for a point strictly satisfying the coupling constraint.

    Tries the box midpoints, then joint box corners (all of them when the
    total dimension is at most ``corner_limit``, else only the all-lower and
    all-upper corners), then ``samples`` uniform draws inside the boxes. A
    negative answer only means no witness was found.
    """
    def strict(pts):
        val = eval_coupling(p, pts)
        return bool(np.all(val < 0)), val

    ok, val = strict([loc.midpoint() for loc in p.locals])
    if ok:
        return SlaterResult(True, [loc.midpoint() for loc in p.locals], val)
    for pts in _joint_corners(p, corner_limit):
        ok, val = strict(pts)
        if ok:
            return SlaterResult(True, pts, val)
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        pts = [rng.uniform(loc.lower, loc.upper) for loc in p.locals]
        ok, val = strict(pts)
        if ok:
            return SlaterResult(True, pts, val)
    return SlaterResult(False, None, None)
