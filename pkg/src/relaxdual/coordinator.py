"""Synchronous simulation of the distributed relaxed dual-decomposition scheme.

One round, seen from agent ``i``:

1. gather ``lambda_ji`` from every neighbor ``j`` and form
   ``d_i = sum_j (lambda_ij - lambda_ji)``;
2. solve the relaxed local problem with offset ``d_i`` for ``(x_i, rho_i, mu_i)``;
3. gather the neighbors' new ``mu_j``;
4. update ``lambda_ij <- lambda_ij - gamma(t) * (mu_i - mu_j)``.

All reads of step 1 happen before any write of step 4. Multipliers live on
directed edges, so ``lambda_ij`` and ``lambda_ji`` are distinct.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonConvergence
from .local_solver import DEFAULT_SETTINGS, _solve_quad_scalar, solve_relaxed_local


@dataclass(frozen=True)
class StepSize:
    """``gamma(t) = c * (t + t0) ** (-a)``."""

    c: float = 0.5
    a: float = 0.8
    t0: float = 0.0

    def __call__(self, t):
        return self.c * (t + self.t0) ** (-self.a)


BENCHMARK_STEPSIZE = StepSize(0.5, 0.8, 0.0)


def validate_stepsize(s):
    """Whether the polynomial family member is a diminishing step size.

    For ``c > 0`` the sequence vanishes, is not summable and is square
    summable exactly when ``0.5 < a <= 1``.
    """
    if not s.c > 0:
        raise ValueError(f"step-size scale must be positive, got {s.c}")
    if s.t0 < 0:
        raise ValueError(f"step-size offset must be nonnegative, got {s.t0}")
    return 0.5 < s.a <= 1.0


@dataclass
class AgentState:
    x: np.ndarray | None
    rho: np.ndarray | None
    mu: np.ndarray | None
    lambda_out: dict


@dataclass(frozen=True)
class RoundLog:
    """What happened in round ``t``.

    ``x`` is a list of local vectors; ``rho``, ``mu`` and ``offsets`` are
    ``(N, S)`` arrays; ``lam`` is the ``(2|E|, S)`` multiplier array after the
    update, laid out by the graph's directed-edge index.
    """

    t: int
    gamma: float
    x: list
    rho: np.ndarray
    mu: np.ndarray
    offsets: np.ndarray
    lam: np.ndarray
    messages_sent: int


def _lambda_array(p, g, index, lambda0):
    S = p.s_dim
    lam = np.zeros((len(index), S))
    if lambda0 is None or (isinstance(lambda0, str) and lambda0 == "zeros"):
        return lam
    if isinstance(lambda0, dict):
        for (i, j), value in lambda0.items():
            if (i, j) not in index.index:
                raise DimensionMismatch(f"({i + 1}, {j + 1}) is not an edge of the graph")
            value = np.atleast_1d(np.asarray(value, dtype=float))
            if value.shape != (S,):
                raise DimensionMismatch(
                    f"lambda for edge ({i + 1}, {j + 1}) has shape {value.shape}, expected ({S},)"
                )
            lam[index[(i, j)]] = value
        return lam
    arr = np.asarray(lambda0, dtype=float)
    if arr.ndim == 1 and S == 1:
        arr = arr.reshape(-1, 1)
    if arr.shape != lam.shape:
        raise DimensionMismatch(f"lambda0 has shape {arr.shape}, expected {lam.shape}")
    return arr.copy()


def init(p, g, lambda0="zeros"):
    """Initial agent states; ``lambda0`` is ``"zeros"``, a ``{(i, j): vector}``
    mapping over directed edges (missing entries are zero) or an array of shape
    ``(2|E|, S)`` in directed-edge order."""
    if g.n != p.n_agents:
        raise DimensionMismatch(f"graph has {g.n} nodes but the problem has {p.n_agents} agents")
    index = g.directed_index()
    lam = _lambda_array(p, g, index, lambda0)
    return _states_from_arrays(g, index, None, None, None, lam)


def _states_from_arrays(g, index, x, rho, mu, lam):
    states = []
    for i in range(g.n):
        out = {j: lam[index[(i, j)]].copy() for j in g.adjacency[i]}
        states.append(
            AgentState(
                x=None if x is None else np.array(x[i], copy=True),
                rho=None if rho is None else rho[i].copy(),
                mu=None if mu is None else mu[i].copy(),
                lambda_out=out,
            )
        )
    return states


def _lambda_from_states(states, g, index, s_dim):
    lam = np.empty((len(index), s_dim))
    for i, st in enumerate(states):
        if set(st.lambda_out) != set(g.adjacency[i]):
            raise DimensionMismatch(f"agent {i + 1}: multiplier keys do not match its neighbors")
        for j, value in st.lambda_out.items():
            lam[index[(i, j)]] = value
    return lam


def offsets(lam, index, n_agents):
    """``d_i = sum_{j in N_i} (lambda_ij - lambda_ji)`` for every agent."""
    diff = lam - lam[index.reverse]
    d = np.zeros((n_agents, lam.shape[1]))
    # directed edges are grouped by source node; fsum keeps each d_i correctly rounded
    bounds = np.searchsorted(index.src, np.arange(n_agents + 1))
    for i in range(n_agents):
        block = diff[bounds[i]:bounds[i + 1]]
        for s in range(lam.shape[1]):
            d[i, s] = math.fsum(block[:, s])
    return d


def _step(lam, p, index, t, gamma, settings):
    N, S = p.n_agents, p.s_dim
    d = offsets(lam, index, N)
    xs, rho, mu = [], np.empty((N, S)), np.empty((N, S))
    scalar_quad = S == 1 and p.is_quadratic_family()
    for i, loc in enumerate(p.locals):
        try:
            if scalar_quad:
                # same closed form solve_relaxed_local dispatches to, minus input checks
                sol = _solve_quad_scalar(loc, float(d[i, 0]), float(p.big_m))
                if sol.kkt_residual > settings.tol:
                    raise NonConvergence(
                        f"local KKT residual {sol.kkt_residual:.3e} exceeds tol {settings.tol:.1e}",
                        residual=sol.kkt_residual,
                    )
            else:
                sol = solve_relaxed_local(loc, d[i], p.big_m, settings)
        except NonConvergence as exc:
            raise NonConvergence(f"round {t}: {exc}", agent=i, residual=exc.residual) from exc
        xs.append(sol.x)
        rho[i] = sol.rho
        mu[i] = sol.mu
    g_t = gamma(t)
    lam_new = lam - g_t * (mu[index.src] - mu[index.dst])
    return RoundLog(
        t=t, gamma=g_t, x=xs, rho=rho, mu=mu, offsets=d, lam=lam_new, messages_sent=2 * len(index)
    )


def round(states, p, g, t, gamma, solver_settings=DEFAULT_SETTINGS):
    """Advance every agent by one synchronous round.

    Returns the new states and the round's log.
    """
    if t < 1:
        raise ValueError(f"rounds are numbered from 1, got t={t}")
    index = g.directed_index()
    lam = _lambda_from_states(states, g, index, p.s_dim)
    log = _step(lam, p, index, t, gamma, solver_settings)
    return _states_from_arrays(g, index, log.x, log.rho, log.mu, log.lam), log


def run(p, g, gamma, iterations, lambda0="zeros", solver_settings=DEFAULT_SETTINGS, sink=None):
    """Run rounds ``t = 1..iterations`` and return the final agent states.

    ``sink``, when given, is called with each round's ``RoundLog`` in order.
    A step size outside the diminishing family only triggers a warning.
    """
    if not validate_stepsize(gamma):
        warnings.warn(
            f"step size exponent a={gamma.a} is outside (0.5, 1]; convergence is not guaranteed",
            stacklevel=2,
        )
    states = init(p, g, lambda0)
    if iterations <= 0:
        return states
    index = g.directed_index()
    lam = _lambda_from_states(states, g, index, p.s_dim)
    log = None
    for t in range(1, iterations + 1):
        log = _step(lam, p, index, t, gamma, solver_settings)
        lam = log.lam
        if sink is not None:
            sink(log)
    return _states_from_arrays(g, index, log.x, log.rho, log.mu, lam)
