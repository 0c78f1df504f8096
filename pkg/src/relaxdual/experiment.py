"""Experiment configuration, per-round metrics and output files.

A run writes, into its output directory:

``trace.csv``
    one row per round, columns listed in :data:`TRACE_COLUMNS` followed by
    ``rho_1 .. rho_N`` (per-agent ``1^T rho_i``);
``summary.txt``
    TOML with the oracle result, final metrics, warnings and the effective
    configuration;
``fig1.dat``, ``fig2.dat``, ``fig3.dat``
    whitespace-separated plot data (cost error, coupling violation, slacks).
"""

from __future__ import annotations

import csv
import sys
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli_w

from . import graph as graphs
from .coordinator import StepSize, run, validate_stepsize
from .errors import ConfigError
from .local_solver import SolverSettings
from .oracle import check_m_bound, solve_dual_centralized
from .problem import BENCHMARK_BIG_M, CoupledProblem, QuadBoxLinearLocal, paper_instance, slater_check

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1

TRACE_COLUMNS = (
    "t",
    "penalized_cost",
    "raw_cost",
    "cost_error",
    "raw_cost_error",
    "max_violation",
    "rho_total",
    "mu_consensus",
    "lambda_norm",
)

TRACE_DOC = (
    "# t: round; penalized_cost: sum_i f_i(x_i) + M*1^T rho_i; raw_cost: sum_i f_i(x_i); "
    "cost_error: penalized_cost - f_star; raw_cost_error: f_star - raw_cost; "
    "max_violation: max_s sum_i g_is(x_i); rho_total: sum_i 1^T rho_i; "
    "mu_consensus: max over edges of ||mu_i - mu_j||; lambda_norm: ||Lambda||_2; "
    "rho_k: 1^T rho_k for agent k"
)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ProblemSpec:
    family: str = "quadratic-benchmark"
    n: int = 20
    s_dim: int = 1
    seed: int = 0
    big_m: float = BENCHMARK_BIG_M
    agents: list | None = None


@dataclass
class GraphSpec:
    family: str = "erdos-renyi"
    p: float = 0.2
    seed: int = 0
    edges: str | None = None


@dataclass
class ExperimentConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    graph: GraphSpec = field(default_factory=GraphSpec)
    stepsize: StepSize = field(default_factory=StepSize)
    iterations: int = 10_000
    lambda0: object = "zeros"
    solver: SolverSettings = field(default_factory=lambda: SolverSettings(tol=1e-8))
    oracle_tol: float = 1e-9
    oracle_max_iters: int = 200_000
    grid_points: int = 2001
    output_dir: str = "out"
    schema_version: int = SCHEMA_VERSION


_PROBLEM_FAMILIES = ("quadratic-benchmark", "explicit")
_GRAPH_FAMILIES = ("erdos-renyi", "complete", "ring", "path", "edges")
_AGENT_KEYS = {"w", "r", "lower", "upper", "a", "b"}


def _take(table, key, kind, where, default=None):
    if key not in table:
        if default is None:
            raise ConfigError("missing required key", field=f"{where}.{key}")
        return default
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"expected {kind.__name__}, got {value!r}", field=f"{where}.{key}")
    return value


def _no_extra(table, allowed, where):
    extra = set(table) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", field=where)


def _section(doc, name):
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError("expected a table", field=name)
    return sec


def config_from_dict(doc):
    """Validate a parsed TOML document into an :class:`ExperimentConfig`."""
    _no_extra(doc, {"schema_version", "iterations", "problem", "graph", "stepsize",
                    "lambda0", "solver", "oracle", "output"}, "<root>")
    version = _take(doc, "schema_version", int, "<root>", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}", field="schema_version")
    d = ExperimentConfig()

    sec = _section(doc, "problem")
    _no_extra(sec, {"family", "n", "s_dim", "seed", "big_m", "agents"}, "problem")
    prob = ProblemSpec(
        family=_take(sec, "family", str, "problem", d.problem.family),
        n=_take(sec, "n", int, "problem", d.problem.n),
        s_dim=_take(sec, "s_dim", int, "problem", d.problem.s_dim),
        seed=_take(sec, "seed", int, "problem", d.problem.seed),
        big_m=_take(sec, "big_m", float, "problem", d.problem.big_m),
    )
    if prob.family not in _PROBLEM_FAMILIES:
        raise ConfigError(f"unknown family {prob.family!r}", field="problem.family")
    if prob.family == "explicit":
        agents = sec.get("agents")
        if not isinstance(agents, list) or not agents:
            raise ConfigError("explicit family needs [[problem.agents]] entries", field="problem.agents")
        for k, ag in enumerate(agents):
            where = f"problem.agents[{k + 1}]"
            if not isinstance(ag, dict):
                raise ConfigError("expected a table", field=where)
            missing = _AGENT_KEYS - set(ag)
            if missing:
                raise ConfigError(f"missing keys {sorted(missing)}", field=where)
            _no_extra(ag, _AGENT_KEYS, where)
        prob.agents = [dict(ag) for ag in agents]
        prob.n = len(agents)
    if prob.n < 1:
        raise ConfigError("need at least one agent", field="problem.n")
    if prob.s_dim < 1:
        raise ConfigError("coupling dimension must be >= 1", field="problem.s_dim")
    if not prob.big_m > 0:
        raise ConfigError("M must be positive", field="problem.big_m")

    sec = _section(doc, "graph")
    _no_extra(sec, {"family", "p", "seed", "edges"}, "graph")
    gspec = GraphSpec(
        family=_take(sec, "family", str, "graph", d.graph.family),
        p=_take(sec, "p", float, "graph", d.graph.p),
        seed=_take(sec, "seed", int, "graph", d.graph.seed),
        edges=sec.get("edges"),
    )
    if gspec.family not in _GRAPH_FAMILIES:
        raise ConfigError(f"unknown family {gspec.family!r}", field="graph.family")
    if gspec.family == "edges" and not isinstance(gspec.edges, str):
        raise ConfigError("edge-list graphs need an 'edges' text block", field="graph.edges")
    if not 0.0 <= gspec.p <= 1.0:
        raise ConfigError("edge probability must lie in [0, 1]", field="graph.p")

    sec = _section(doc, "stepsize")
    _no_extra(sec, {"c", "a", "t0"}, "stepsize")
    step = StepSize(
        c=_take(sec, "c", float, "stepsize", d.stepsize.c),
        a=_take(sec, "a", float, "stepsize", d.stepsize.a),
        t0=_take(sec, "t0", float, "stepsize", d.stepsize.t0),
    )
    if not step.c > 0:
        raise ConfigError("step-size scale must be positive", field="stepsize.c")
    if step.t0 < 0:
        raise ConfigError("step-size offset must be nonnegative", field="stepsize.t0")

    iterations = _take(doc, "iterations", int, "<root>", d.iterations)
    if iterations < 0:
        raise ConfigError("iterations must be >= 0", field="iterations")

    lambda0 = "zeros"
    if "lambda0" in doc:
        sec = doc["lambda0"]
        if isinstance(sec, str):
            if sec != "zeros":
                raise ConfigError(f"unknown lambda0 mode {sec!r}", field="lambda0")
        elif isinstance(sec, dict):
            _no_extra(sec, {"edges"}, "lambda0")
            entries = {}
            for k, e in enumerate(sec.get("edges", [])):
                where = f"lambda0.edges[{k + 1}]"
                if not isinstance(e, dict) or set(e) != {"i", "j", "value"}:
                    raise ConfigError("each entry needs exactly i, j, value", field=where)
                value = e["value"] if isinstance(e["value"], list) else [e["value"]]
                entries[(int(e["i"]) - 1, int(e["j"]) - 1)] = [float(v) for v in value]
            lambda0 = entries
        else:
            raise ConfigError("expected 'zeros' or a table", field="lambda0")

    sec = _section(doc, "solver")
    _no_extra(sec, {"tol", "max_outer_iters"}, "solver")
    tol = _take(sec, "tol", float, "solver", d.solver.tol)
    if not tol > 0:
        raise ConfigError("tol must be positive", field="solver.tol")
    max_outer = _take(sec, "max_outer_iters", int, "solver", d.solver.max_outer_iters)
    if max_outer < 1:
        raise ConfigError("max_outer_iters must be >= 1", field="solver.max_outer_iters")
    solver = SolverSettings(tol=tol, max_outer_iters=max_outer)

    sec = _section(doc, "oracle")
    _no_extra(sec, {"tol", "max_iters", "grid_points"}, "oracle")
    sec_out = _section(doc, "output")
    _no_extra(sec_out, {"dir"}, "output")
    return ExperimentConfig(
        problem=prob,
        graph=gspec,
        stepsize=step,
        iterations=iterations,
        lambda0=lambda0,
        solver=solver,
        oracle_tol=_take(sec, "tol", float, "oracle", d.oracle_tol),
        oracle_max_iters=_take(sec, "max_iters", int, "oracle", d.oracle_max_iters),
        grid_points=_take(sec, "grid_points", int, "oracle", d.grid_points),
        output_dir=_take(sec_out, "dir", str, "output", d.output_dir),
        schema_version=version,
    )


def parse_config(text):
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # the decoder message already carries "(at line L, column C)"
        raise ConfigError(f"TOML syntax error: {exc}") from exc
    return config_from_dict(doc)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def apply_overrides(cfg, seed=None, iters=None, out=None, big_m=None, step_c=None, step_a=None):
    """Command-line style overrides; ``None`` leaves a field alone.

    ``seed`` replaces both the problem and the graph seed.
    """
    prob, gspec, step = cfg.problem, cfg.graph, cfg.stepsize
    if seed is not None:
        prob = replace(prob, seed=int(seed))
        gspec = replace(gspec, seed=int(seed))
    if big_m is not None:
        if not big_m > 0:
            raise ConfigError("M must be positive", field="--big-m")
        prob = replace(prob, big_m=float(big_m))
    if step_c is not None:
        if not step_c > 0:
            raise ConfigError("step-size scale must be positive", field="--step-c")
        step = replace(step, c=float(step_c))
    if step_a is not None:
        step = replace(step, a=float(step_a))
    out_cfg = replace(cfg, problem=prob, graph=gspec, stepsize=step)
    if iters is not None:
        if iters < 0:
            raise ConfigError("iterations must be >= 0", field="--iters")
        out_cfg = replace(out_cfg, iterations=int(iters))
    if out is not None:
        out_cfg = replace(out_cfg, output_dir=str(out))
    return out_cfg


def config_to_dict(cfg):
    """Inverse of :func:`config_from_dict` (round-trips through TOML)."""
    prob = {k: v for k, v in asdict(cfg.problem).items() if v is not None}
    if cfg.problem.family != "explicit":
        prob.pop("agents", None)
    gspec = {k: v for k, v in asdict(cfg.graph).items() if v is not None}
    doc = {
        "schema_version": cfg.schema_version,
        "iterations": cfg.iterations,
        "problem": prob,
        "graph": gspec,
        "stepsize": {"c": cfg.stepsize.c, "a": cfg.stepsize.a, "t0": cfg.stepsize.t0},
        "solver": {"tol": cfg.solver.tol, "max_outer_iters": cfg.solver.max_outer_iters},
        "oracle": {"tol": cfg.oracle_tol, "max_iters": cfg.oracle_max_iters,
                   "grid_points": cfg.grid_points},
        "output": {"dir": cfg.output_dir},
    }
    if isinstance(cfg.lambda0, dict):
        doc["lambda0"] = {"edges": [
            {"i": i + 1, "j": j + 1, "value": [float(v) for v in np.atleast_1d(val)]}
            for (i, j), val in sorted(cfg.lambda0.items())
        ]}
    else:
        doc["lambda0"] = "zeros"
    return doc


def build_problem(spec):
    if spec.family == "quadratic-benchmark":
        return paper_instance(spec.n, s_dim=spec.s_dim, seed=spec.seed, big_m=spec.big_m)
    locs = []
    for k, ag in enumerate(spec.agents):
        try:
            locs.append(QuadBoxLinearLocal(ag["w"], ag["r"], ag["lower"], ag["upper"], ag["a"], ag["b"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field=f"problem.agents[{k + 1}]") from exc
    try:
        return CoupledProblem(locs, spec.big_m)
    except ValueError as exc:
        raise ConfigError(str(exc), field="problem.agents") from exc


def build_graph(spec, n):
    """Graph for ``n`` agents. A single agent always gets the empty graph."""
    if n == 1:
        return graphs.single_node()
    if spec.family == "erdos-renyi":
        return graphs.erdos_renyi(n, spec.p, spec.seed)
    if spec.family == "complete":
        return graphs.complete(n)
    if spec.family == "ring":
        return graphs.ring(n)
    if spec.family == "path":
        return graphs.path(n)
    try:
        return graphs.Graph.from_edge_list_text(spec.edges, n=n)
    except ValueError as exc:
        raise ConfigError(str(exc), field="graph.edges") from exc


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class TraceRecord:
    t: int
    penalized_cost: float
    raw_cost: float
    cost_error: float
    raw_cost_error: float
    max_violation: float
    rho_total: float
    mu_consensus: float
    lambda_norm: float
    rho_agents: tuple = ()

    def row(self):
        return [self.t] + [getattr(self, c) for c in TRACE_COLUMNS[1:]] + list(self.rho_agents)


def _metrics(t, p, f_star, xs, rho, mu, lam, pairs):
    raw = 0.0
    viol = np.zeros(p.s_dim)
    for loc, x in zip(p.locals, xs):
        raw += loc.cost(x)
        viol = viol + loc.coupling(x)
    rho_agents = tuple(float(v) for v in rho.sum(axis=1))
    rho_total = float(rho.sum())
    penalized = raw + p.big_m * rho_total
    if pairs:
        src = np.array([i for i, _ in pairs])
        dst = np.array([j for _, j in pairs])
        consensus = float(np.max(np.linalg.norm(mu[src] - mu[dst], axis=1)))
    else:
        consensus = 0.0
    return TraceRecord(
        t=int(t),
        penalized_cost=float(penalized),
        raw_cost=float(raw),
        cost_error=float(penalized - f_star),
        raw_cost_error=float(f_star - raw),
        max_violation=float(np.max(viol)),
        rho_total=rho_total,
        mu_consensus=consensus,
        lambda_norm=float(np.sqrt(np.sum(lam * lam))),
        rho_agents=rho_agents,
    )


def compute_metrics(states, p, f_star, t=0):
    """Trace row for populated agent states."""
    xs = [st.x for st in states]
    rho = np.array([st.rho for st in states])
    mu = np.array([st.mu for st in states])
    pairs = [(i, j) for i, st in enumerate(states) for j in sorted(st.lambda_out)]
    lam = np.array([states[i].lambda_out[j] for i, j in pairs]).reshape(len(pairs), p.s_dim)
    return _metrics(t, p, f_star, xs, rho, mu, lam, pairs)


def metrics_from_log(log, p, f_star, index):
    """Trace row straight from a coordinator ``RoundLog``; equal to
    :func:`compute_metrics` on the states after that round."""
    return _metrics(log.t, p, f_star, log.x, log.rho, log.mu, log.lam, index.pairs)


# ---------------------------------------------------------------------------
# trace and plot files


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


class TraceWriter:
    """CSV trace sink: documented ``#`` line, header row, one row per record."""

    def __init__(self, fh, n_agents):
        self.fh = fh
        self.header = list(TRACE_COLUMNS) + [f"rho_{k + 1}" for k in range(n_agents)]
        fh.write(TRACE_DOC + "\n")
        self._csv = csv.writer(fh, lineterminator="\n")
        self._csv.writerow(self.header)

    def write(self, rec):
        self._csv.writerow([_fmt(v) for v in rec.row()])


def read_trace(path):
    """Parse a trace file back into :class:`TraceRecord` objects."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        return []
    n_fixed = len(TRACE_COLUMNS)
    if header[:n_fixed] != list(TRACE_COLUMNS):
        raise ValueError(f"{path}: unexpected trace header {header[:n_fixed]}")
    records = []
    for row in reader:
        vals = [float(v) for v in row[1:n_fixed]]
        records.append(TraceRecord(int(row[0]), *vals, rho_agents=tuple(float(v) for v in row[n_fixed:])))
    return records


def trace_agent_count(path):
    with open(path, newline="") as fh:
        for ln in fh:
            if not ln.startswith("#"):
                return len(ln.strip().split(",")) - len(TRACE_COLUMNS)
    return 0


def emit_plot_data(trace_path, out_dir=None):
    """Write ``fig1.dat`` (|raw and penalized cost error|), ``fig2.dat``
    (coupling violation) and ``fig3.dat`` (per-agent slack) next to the trace.

    Returns the three paths.
    """
    trace_path = Path(trace_path)
    out_dir = Path(out_dir) if out_dir is not None else trace_path.parent
    records = read_trace(trace_path)
    n_agents = trace_agent_count(trace_path)
    paths = [out_dir / f"fig{k}.dat" for k in (1, 2, 3)]
    with open(paths[0], "w") as fh:
        fh.write("# t abs_raw_cost_error abs_cost_error\n")
        for r in records:
            fh.write(f"{r.t} {_fmt(abs(r.raw_cost_error))} {_fmt(abs(r.cost_error))}\n")
    with open(paths[1], "w") as fh:
        fh.write("# t max_violation\n")
        for r in records:
            fh.write(f"{r.t} {_fmt(r.max_violation)}\n")
    with open(paths[2], "w") as fh:
        fh.write("# t " + " ".join(f"rho_{k + 1}" for k in range(n_agents)) + "\n")
        for r in records:
            fh.write(f"{r.t} " + " ".join(_fmt(v) for v in r.rho_agents) + "\n")
    return paths


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class ExperimentResult:
    out_dir: Path
    trace_path: Path
    summary: dict
    records: list = field(repr=False, default_factory=list)


def summary_text(summary):
    return tomli_w.dumps(summary)


def run_experiment(cfg, keep_records=True):
    """Build problem and graph, solve the oracle, run the rounds, write outputs."""
    p = build_problem(cfg.problem)
    g = build_graph(cfg.graph, p.n_agents)
    notes = []
    if not graphs.is_connected(g):
        notes.append("communication graph is not connected")
    if not validate_stepsize(cfg.stepsize):
        notes.append(f"step size exponent a={cfg.stepsize.a} violates the diminishing condition (needs 0.5 < a <= 1)")
    if not slater_check(p):
        notes.append("no strictly feasible point found for the coupling constraint")

    oracle = solve_dual_centralized(p, tol=cfg.oracle_tol, max_iters=cfg.oracle_max_iters)
    f_star = oracle.f_star
    m_ok = check_m_bound(oracle, p.big_m)
    if not m_ok:
        notes.append("oracle multiplier reaches M; the relaxed and original problems may differ")

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.csv"
    index = g.directed_index()
    records = []
    with open(trace_path, "w", newline="") as fh:
        writer = TraceWriter(fh, p.n_agents)

        def sink(log):
            rec = metrics_from_log(log, p, f_star, index)
            writer.write(rec)
            if keep_records:
                records.append(rec)
            sink.last = rec

        sink.last = None
        with warnings.catch_warnings():
            # already recorded in notes
            warnings.simplefilter("ignore")
            run(p, g, cfg.stepsize, cfg.iterations, lambda0=cfg.lambda0,
                solver_settings=cfg.solver, sink=sink)
    emit_plot_data(trace_path, out_dir)

    final = sink.last
    summary = {
        "result": {
            "f_star": f_star,
            "mu_star": [float(v) for v in oracle.mu_star],
            "mu_star_inf_norm": float(np.max(np.abs(oracle.mu_star))),
            "big_m": p.big_m,
            "m_bound_ok": m_ok,
            "oracle_certified_gap": oracle.certified_gap,
            "oracle_iterations": oracle.iterations,
            "graph_edges": g.num_edges,
            "graph_retries": g.retries,
            "iterations": cfg.iterations,
            "warnings": notes,
        },
        "config": config_to_dict(cfg),
    }
    if final is not None:
        summary["result"]["final"] = {
            "penalized_cost": final.penalized_cost,
            "raw_cost": final.raw_cost,
            "cost_error": final.cost_error,
            "relative_cost_error": abs(final.cost_error) / max(abs(f_star), 1e-300),
            "raw_cost_error": final.raw_cost_error,
            "max_violation": final.max_violation,
            "rho_total": final.rho_total,
            "mu_consensus": final.mu_consensus,
        }
    (out_dir / "summary.txt").write_text(summary_text(summary))
    return ExperimentResult(out_dir=out_dir, trace_path=trace_path, summary=summary, records=records)


def run_seeds(cfg, seeds):
    """Run the same configuration for several seeds into ``<out>/seed_<s>``."""
    results = []
    for s in seeds:
        sub = apply_overrides(cfg, seed=s, out=str(Path(cfg.output_dir) / f"seed_{s}"))
        results.append(run_experiment(sub, keep_records=False))
    return results


def relative_error_at(records, f_star, t):
    return abs(records[t - 1].cost_error) / abs(f_star)


def loglog_slope(records, t_lo, t_hi):
    """Least-squares slope of ``log|cost_error|`` against ``log t`` on ``[t_lo, t_hi]``."""
    ts = np.array([r.t for r in records if t_lo <= r.t <= t_hi], dtype=float)
    errs = np.array([abs(r.cost_error) for r in records if t_lo <= r.t <= t_hi])
    keep = errs > 0
    return float(np.polyfit(np.log(ts[keep]), np.log(errs[keep]), 1)[0])


def config_text(cfg):
    return tomli_w.dumps(config_to_dict(cfg))
