"""Command-line interface: TOML experiment configs in, CSV reports out.

Config layout (one experiment per file)::

    id = "closed_form"
    task = "solve"
    seed = 0

    [lattice]
    T = 1.0
    N = [4, 100]          # an integer or a list

    [driver]              # or: drivers = [{ name = ..., params = {...} }, ...]
    name = "scaled_abs_z"
    params = { mu = 0.5 }

    [claim]               # or: claims = [...]
    kind = "identity"     # identity | constant | call | positive_part | table
    params = { scale = 1.0 }

    [params]              # task-specific
    expected = 0.5
    tol = 1e-10

A ``batch`` config holds ``include = ["a.toml", ...]`` (paths relative to
the batch file) and/or inline ``[[experiments]]`` tables.

Exit codes: 0 all asserted rows pass, 1 an assertion failed, 2 the config
failed validation, 3 a numerical error occurred.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import tomli

from . import allocation, bsde, duality, portfolio, static, supersolution
from .drivers import BUILTIN_DRIVERS, Driver, builtin_driver
from .errors import EvaluationError, NumericalError, ParameterError, StarRiskError, ValidationError
from .lattice import TerminalClaim, build_lattice, call_claim, constant_claim, identity_claim, table_claim

__all__ = ["ReportRow", "TASKS", "load_config", "run_experiment", "run_config", "emit_report", "main"]

TASKS = ("solve", "envelope", "minmax", "supersolution", "static", "allocate", "portfolio", "properties")
CSV_HEADER = ("experiment_id", "task", "quantity", "value", "tolerance", "pass", "wall_ms")
TOP_KEYS = {"id", "task", "seed", "lattice", "driver", "drivers", "claim", "claims", "params", "output"}


@dataclass(frozen=True)
class ReportRow:
    experiment_id: str
    task: str
    quantity: str
    value: float
    tolerance: float | None = None
    passed: bool | None = None
    wall_ms: float | None = None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return format(float(v), ".17g")


def emit_report(rows: Sequence[ReportRow], fmt: str = "csv") -> str:
    """Serialize rows as CSV (header always present, 17 significant digits) or an aligned table."""
    if not rows:
        raise ParameterError("no report rows to emit")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.experiment_id, r.task, r.quantity, _fmt(r.value), _fmt(r.tolerance),
                        _fmt(r.passed), "" if r.wall_ms is None else format(r.wall_ms, ".3f")])
        return buf.getvalue()
    if fmt == "human":
        cells = [("experiment", "task", "quantity", "value", "tol", "status")]
        for r in rows:
            status = "" if r.passed is None else ("PASS" if r.passed else "FAIL")
            cells.append((r.experiment_id, r.task, r.quantity, format(float(r.value), ".10g"),
                          "" if r.tolerance is None else format(r.tolerance, ".3g"), status))
        widths = [max(len(c[i]) for c in cells) for i in range(len(cells[0]))]
        return "".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n" for row in cells)
    raise ParameterError(f"unknown report format {fmt!r}")


# ---------------------------------------------------------------------------
# config parsing


def load_config(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            cfg = tomli.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc.strerror}", str(path)) from None
    except tomli.TOMLDecodeError as exc:
        raise ValidationError(f"invalid TOML: {exc}", str(path)) from None
    cfg["_base"] = str(path.parent)
    return cfg


def _require(cfg: Mapping, key: str, path: str, kind=None):
    if key not in cfg:
        raise ValidationError("missing field", f"{path}{key}")
    val = cfg[key]
    if kind is not None and not isinstance(val, kind):
        raise ValidationError(f"expected {kind if isinstance(kind, type) else kind}", f"{path}{key}")
    return val


def _driver(spec, path) -> Driver:
    if not isinstance(spec, Mapping):
        raise ValidationError("driver must be a table", path)
    name = _require(spec, "name", f"{path}.", str)
    if name not in BUILTIN_DRIVERS:
        raise ValidationError(f"unknown driver {name!r}", f"{path}.name")
    params = spec.get("params", {})
    if not isinstance(params, Mapping):
        raise ValidationError("params must be a table", f"{path}.params")
    try:
        return builtin_driver(name, params)
    except ParameterError as exc:
        raise ValidationError(str(exc), f"{path}.params") from None


_CLAIM_KINDS = ("identity", "constant", "call", "positive_part", "table")


def _claim(spec, path) -> TerminalClaim:
    if not isinstance(spec, Mapping):
        raise ValidationError("claim must be a table", path)
    kind = _require(spec, "kind", f"{path}.", str)
    p = spec.get("params", {})
    try:
        if kind == "identity":
            return identity_claim(float(p.get("scale", 1.0)))
        if kind == "constant":
            return constant_claim(float(p.get("value", 0.0)))
        if kind == "call":
            return call_claim(float(p.get("strike", 0.0)), float(p.get("scale", 1.0)))
        if kind == "positive_part":
            return call_claim(0.0, float(p.get("scale", 1.0)))
        if kind == "table":
            return table_claim(_require(p, "values", f"{path}.params.", list))
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc), f"{path}.params") from None
    raise ValidationError(f"unknown claim kind {kind!r}; known: {list(_CLAIM_KINDS)}", f"{path}.kind")


def _drivers(cfg) -> list:
    if "drivers" in cfg:
        specs = cfg["drivers"]
        if not isinstance(specs, list) or not specs:
            raise ValidationError("expected a non-empty list", "drivers")
        return [_driver(s, f"drivers[{i}]") for i, s in enumerate(specs)]
    if "driver" in cfg:
        return [_driver(cfg["driver"], "driver")]
    return []


def _claims(cfg) -> list:
    if "claims" in cfg:
        specs = cfg["claims"]
        if not isinstance(specs, list) or not specs:
            raise ValidationError("expected a non-empty list", "claims")
        return [_claim(s, f"claims[{i}]") for i, s in enumerate(specs)]
    if "claim" in cfg:
        return [_claim(cfg["claim"], "claim")]
    return [identity_claim()]


def _steps(cfg) -> tuple:
    lat = cfg.get("lattice", {})
    if not isinstance(lat, Mapping):
        raise ValidationError("lattice must be a table", "lattice")
    extra = set(lat) - {"T", "N"}
    if extra:
        raise ValidationError("unknown field", f"lattice.{sorted(extra)[0]}")
    T = lat.get("T", 1.0)
    if not isinstance(T, (int, float)) or not T > 0:
        raise ValidationError("T must be a positive number", "lattice.T")
    N = lat.get("N", 100)
    Ns = N if isinstance(N, list) else [N]
    for i, n in enumerate(Ns):
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ValidationError("N must be a positive integer", "lattice.N" + (f"[{i}]" if isinstance(N, list) else ""))
    return float(T), Ns


def _param(params, key, default, path="params."):
    v = params.get(key, default)
    if default is not None and isinstance(default, (int, float)) and not isinstance(default, bool):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ValidationError("expected a number", f"{path}{key}")
    return v


@dataclass
class _Ctx:
    exp_id: str
    task: str
    seed: int
    T: float
    Ns: list
    drivers: list
    claims: list
    params: Mapping
    rows: list

    def row(self, quantity, value, tol=None, passed=None):
        self.rows.append(ReportRow(self.exp_id, self.task, quantity, float(value), tol,
                                   None if passed is None else bool(passed)))


def _validate(cfg: Mapping, task_override: str | None = None) -> dict:
    extra = set(k for k in cfg if not k.startswith("_")) - TOP_KEYS
    if extra:
        raise ValidationError(f"unknown field(s) {sorted(extra)}", sorted(extra)[0])
    task = cfg.get("task", task_override)
    if task is None:
        raise ValidationError("missing field", "task")
    if task not in TASKS:
        raise ValidationError(f"unknown task {task!r}; known: {list(TASKS)}", "task")
    if task_override is not None and task != task_override:
        raise ValidationError(f"config task {task!r} does not match subcommand {task_override!r}", "task")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ValidationError("seed must be an integer", "seed")
    params = cfg.get("params", {})
    if not isinstance(params, Mapping):
        raise ValidationError("params must be a table", "params")
    T, Ns = _steps(cfg)
    drivers = _drivers(cfg)
    if task not in ("static",) and not drivers:
        raise ValidationError("missing field", "driver")
    return {"id": str(cfg.get("id", task)), "task": task, "seed": seed, "T": T, "Ns": Ns,
            "drivers": drivers, "claims": _claims(cfg), "params": params}


# ---------------------------------------------------------------------------
# task runners


def _label(*parts) -> str:
    return "[" + ",".join(str(p) for p in parts) + "]"


def _run_solve(c: _Ctx):
    p = c.params
    expected = p.get("expected")
    tol = float(_param(p, "tol", 1e-10))
    ratio = p.get("error_ratio_range")
    for d in c.drivers:
        for X in c.claims:
            errs = []
            for N in c.Ns:
                v = bsde.solve_bsde(build_lattice(c.T, N), d, X).value
                lab = _label(d.name, X.name, f"N={N}")
                if expected is None:
                    c.row(f"rho_0{lab}", v)
                else:
                    err = abs(v - float(expected))
                    errs.append(err)
                    c.row(f"rho_0{lab}", v)
                    c.row(f"abs_error{lab}", err, tol, err <= tol)
            if ratio is not None and expected is not None:
                lo, hi = ratio
                for (n1, e1), (n2, e2) in zip(zip(c.Ns, errs), zip(c.Ns[1:], errs[1:])):
                    r = e1 / e2 if e2 > 0 else math.inf
                    c.row(f"error_ratio{_label(d.name, X.name, f'N={n1}/{n2}')}", r, None, lo <= r <= hi)


def _run_envelope(c: _Ctx):
    p = c.params
    tol = float(_param(p, "tol", 1e-9))
    n = int(_param(p, "n_controls", 50))
    box = tuple(p.get("box", (-3.0, 3.0)))
    for d in c.drivers:
        for X in c.claims:
            for N in c.Ns:
                lat = build_lattice(c.T, N)
                rep = bsde.min_representation(lat, d, X)
                lab = _label(d.name, X.name, f"N={N}")
                c.row(f"rho_0{lab}", rep.primal.value)
                c.row(f"witness_gap{lab}", rep.max_gap, tol, rep.max_gap <= tol)
                dom = bsde.dominance_sample(lat, d, X, n, c.seed, box, tol=tol, primal=rep.primal)
                c.row(f"min_dominance_gap{lab}", dom.min_gap, tol, dom.all_dominate)


def _run_minmax(c: _Ctx):
    p = c.params
    tol = float(_param(p, "tol_minmax", 5e-2))
    weak_tol = float(_param(p, "weak_tol", 1e-6))
    n = int(_param(p, "n_random_duals", 20))
    expected = p.get("expected_dual")
    exp_tol = float(_param(p, "expected_tol", 1e-6))
    discount = p.get("discount", "implicit")
    floor = float(_param(p, "gap_floor", 1e-12))
    for d in c.drivers:
        for X in c.claims:
            gaps = []
            for N in c.Ns:
                lat = build_lattice(c.T, N)
                r = duality.verify_minmax(lat, d, X, n, c.seed, tol, weak_tol, discount)
                lab = _label(d.name, X.name, f"N={N}")
                gaps.append(r.gap)
                c.row(f"primal{lab}", r.primal)
                c.row(f"dual_at_witness{lab}", r.dual_at_witness)
                c.row(f"gap{lab}", r.gap, tol, r.gap_ok)
                c.row(f"fenchel_residual{lab}", r.fenchel_residual)
                c.row(f"weak_duality_worst{lab}", r.weak_duality_worst, weak_tol, r.weak_duality_ok)
                if expected is not None:
                    err = abs(r.dual_at_witness - float(expected))
                    c.row(f"dual_error{lab}", err, exp_tol, err <= exp_tol)
            for (n1, g1), (n2, g2) in zip(zip(c.Ns, gaps), zip(c.Ns[1:], gaps[1:])):
                ok = g2 <= g1 or max(g1, g2) <= floor
                c.row(f"gap_change{_label(d.name, X.name, f'N={n1}->{n2}')}", g2 - g1, floor, ok)


def _run_supersolution(c: _Ctx):
    p = c.params
    tol = float(_param(p, "tol", 1e-8))
    n = int(_param(p, "n_anchors", 10))
    for d in c.drivers:
        for X in c.claims:
            for N in c.Ns:
                lat = build_lattice(c.T, N)
                lab = _label(d.name, X.name, f"N={N}")
                gap = supersolution.coincides_with_bsde(lat, d, X)
                c.row(f"bsde_gap{lab}", gap, tol, gap <= tol)
                r = supersolution.verify_super_representation(lat, d, X, n, c.seed, tol=tol)
                c.row(f"value{lab}", r.value)
                c.row(f"witness_gap{lab}", r.witness_gap, tol, r.witness_gap <= tol)
                c.row(f"min_dominance_gap{lab}", r.min_dominance_gap, tol, r.min_dominance_gap >= -tol)


_STATIC = {
    "max": lambda sp: static.max_functional(),
    "mixed": lambda sp: static.mixed_functional(sp, 0.7),
    "quantile": lambda sp: static.upper_quantile_functional(sp, 0.5),
    "mean": static.mean_functional,
}


def _run_static(c: _Ctx):
    p = c.params
    atoms = p.get("atoms", [2, 5])
    names = p.get("functionals", ["max", "mixed", "quantile"])
    for i, f in enumerate(names):
        if f not in _STATIC:
            raise ValidationError(f"unknown functional {f!r}; known: {sorted(_STATIC)}", f"params.functionals[{i}]")
    n_pairs = int(_param(p, "n_pairs", 100))
    n_samples = int(_param(p, "n_samples", 20))
    points = int(_param(p, "alpha_points", 1001))
    conj_tol = float(_param(p, "conjugate_tol", 1e-9))
    res = float(_param(p, "m_resolution", 1e-3))
    rng = np.random.default_rng(c.seed)
    for n in atoms:
        sp = static.FiniteSpace(int(n))
        for name in names:
            f = _STATIC[name](sp)
            lab = _label(f"atoms={n}", name)
            X = sp.sample(rng, n_samples)
            others = sp.sample(rng, 5)
            worst = worst_m = 0.0
            for x in X:
                cands = [x] + list(others)
                worst = max(worst, abs(static.min_representation_static(f, x, cands)[0] - f(x)))
                worst_m = max(worst_m, abs(static.min_representation_static(f, x, cands, monotone=True)[0] - f(x)))
            c.row(f"min_rep_error{lab}", worst, 0.0, worst == 0.0)
            c.row(f"monotone_min_rep_error{lab}", worst_m, 0.0, worst_m == 0.0)
            Zs, qs = sp.sample(rng, n_pairs), sp.sample(rng, n_pairs)
            cerr = max(abs(static.conjugate_segment(f, Z, q) - static.conjugate_segment_bruteforce(f, Z, q, points))
                       for Z, q in zip(Zs, qs))
            c.row(f"conjugate_error{lab}", cerr, conj_tol, cerr <= conj_tol)
            vals = [f(x) for x in X]
            lo = math.floor(min(vals) - 1.0)
            hi = math.ceil(max(vals) + 1.0)
            grid = np.linspace(lo, hi, int(round((hi - lo) / res)) + 1)
            rt = static.acceptance_roundtrip(f, grid, X)
            c.row(f"roundtrip_error{lab}", rt.max_error, rt.resolution, rt.max_error <= rt.resolution + 1e-12)
            c.row(f"family_axioms{lab}", float(rt.passed), None, rt.passed)


def _run_allocate(c: _Ctx):
    p = c.params
    n = int(_param(p, "quadrature_points", 32))
    rule = p.get("quadrature", "gauss_legendre")
    axioms_N = p.get("axioms_N")
    tol = float(_param(p, "tol", 1e-8))
    for d in c.drivers:
        full_tol = float(p.get("tol_full_as", 1e-6 if d.has("pos_hom") else 1e-3))
        for Y in c.claims:
            for N in c.Ns:
                lat = build_lattice(c.T, N)
                lab = _label(d.name, Y.name, f"N={N}")
                rho = bsde.solve_bsde(lat, d, Y).value
                a = allocation.car_aumann_shapley(lat, d, Y, Y, 0, (rule, n)).value
                s = allocation.car_subdifferential(lat, d, Y, Y, 0).value
                c.row(f"rho_0{lab}", rho)
                c.row(f"as_full_allocation_error{lab}", abs(a - rho), full_tol, abs(a - rho) <= full_tol)
                c.row(f"ss_full_allocation_error{lab}", abs(s - rho), 5e-2, abs(s - rho) <= 5e-2)
            if axioms_N is not None:
                lat = build_lattice(c.T, int(axioms_N))
                for chk in allocation.verify_allocation_axioms(lat, d, tol=tol, quadrature=(rule, n)):
                    if chk.axiom == "full_allocation" and chk.rule == "AS":
                        continue
                    c.row(f"{chk.axiom}{_label(d.name, chk.rule, chk.fixture, f'N={axioms_N}')}",
                          chk.worst, chk.tol, chk.passed)


def _run_portfolio(c: _Ctx):
    p = c.params
    market = portfolio.Market(p.get("b", 0.1), float(_param(p, "sigma", 0.2)), float(_param(p, "x0", 0.0)))
    Pi = p.get("Pi", [-1.0, 0.0, 1.0])
    if not isinstance(Pi, list) or not Pi:
        raise ValidationError("expected a non-empty list", "params.Pi")
    grid = portfolio.StrategyGrid(tuple(Pi))
    tol = float(_param(p, "tol", 1e-8))
    F = c.claims[0]
    for d in c.drivers:
        for N in c.Ns:
            lat = build_lattice(c.T, N)
            lab = _label(d.name, F.name, f"N={N}")
            sol = portfolio.optimize_portfolio(lat, d, market, grid, F, 0)
            c.row(f"V_0{lab}", sol.value)
            c.row(f"pi_star{lab}", float(sol.pi_star[0]))
            for pi, vals in sol.table:
                c.row(f"rho_0{_label(d.name, F.name, f'N={N}', f'pi={pi:g}')}", vals[0])
            if "expected_V" in p:
                err = abs(sol.value - float(p["expected_V"]))
                vt = float(_param(p, "expected_tol", 1e-12))
                c.row(f"V_error{lab}", err, vt, err <= vt)
            if "expected_pi" in p:
                c.row(f"pi_match{lab}", float(sol.pi_star[0]), None, float(sol.pi_star[0]) == float(p["expected_pi"]))
            if p.get("decomposition", False):
                r = portfolio.verify_linear_decomposition(lat, d, market, grid, F, tol)
                c.row(f"decomposition_error{lab}", r.worst, tol, r.passed)
            if p.get("interchange", False):
                it = portfolio.interchange_table(lat, d, market, grid, F)
                c.row(f"interchange_difference{lab}", abs(it.pi_then_gamma - it.gamma_then_pi), 0.0, it.exact)
                c.row(f"interchange_pi_match{lab}", it.pi_star, None, it.pi_star == float(sol.pi_star[0]))


def _run_properties(c: _Ctx):
    p = c.params
    modes = p.get("modes", ["star_shaped"])
    expect = p.get("expect", {})
    lambdas = tuple(p.get("lambdas", (0.25, 0.5, 0.75)))
    tol = float(_param(p, "tol", 1e-8))
    for i, m in enumerate(modes):
        if m not in bsde.RISK_MODES:
            raise ValidationError(f"unknown mode {m!r}", f"params.modes[{i}]")
    for d in c.drivers:
        for N in c.Ns:
            lat = build_lattice(c.T, N)
            reports = bsde.verify_risk_properties(lat, d, c.claims, modes, lambdas,
                                                  cash=float(_param(p, "cash", 0.5)), tol=tol)
            for m in modes:
                r = reports[m]
                want = expect.get(m, "pass")
                c.row(f"{m}{_label(d.name, f'N={N}', 'expect=' + want)}",
                      r.worst if math.isfinite(r.worst) else -1.0, r.tolerance, r.status == want)


_RUNNERS: dict[str, Callable[[_Ctx], None]] = {
    "solve": _run_solve,
    "envelope": _run_envelope,
    "minmax": _run_minmax,
    "supersolution": _run_supersolution,
    "static": _run_static,
    "allocate": _run_allocate,
    "portfolio": _run_portfolio,
    "properties": _run_properties,
}


def run_experiment(cfg: Mapping, seed: int | None = None, task: str | None = None,
                   timing: bool = False) -> list:
    """Validate a single-experiment config and run it; returns the report rows."""
    v = _validate(cfg, task)
    if seed is not None:
        v["seed"] = int(seed)
    exp_id = f"{v['id']}-seed{v['seed']}"
    ctx = _Ctx(exp_id, v["task"], v["seed"], v["T"], v["Ns"], v["drivers"], v["claims"], v["params"], [])
    start = time.perf_counter()
    _RUNNERS[v["task"]](ctx)
    if timing:
        ms = (time.perf_counter() - start) * 1e3
        ctx.rows[:] = [ReportRow(r.experiment_id, r.task, r.quantity, r.value, r.tolerance, r.passed, ms)
                       for r in ctx.rows]
    return ctx.rows


def _is_batch(cfg: Mapping) -> bool:
    return "include" in cfg or "experiments" in cfg


def _expand(cfg: Mapping, path: str = "") -> list:
    if not _is_batch(cfg):
        return [cfg]
    extra = set(k for k in cfg if not k.startswith("_")) - {"include", "experiments", "id"}
    if extra:
        raise ValidationError(f"unknown field(s) {sorted(extra)}", path + sorted(extra)[0])
    out = []
    base = Path(cfg.get("_base", "."))
    for i, inc in enumerate(cfg.get("include", [])):
        try:
            sub = load_config(base / inc)
        except ValidationError as exc:
            raise ValidationError(str(exc), f"{path}include[{i}]") from None
        out.extend(_expand(sub, f"{path}include[{i}]."))
    for i, sub in enumerate(cfg.get("experiments", [])):
        if not isinstance(sub, Mapping):
            raise ValidationError("experiment must be a table", f"{path}experiments[{i}]")
        out.extend(_expand(sub, f"{path}experiments[{i}]."))
    return out


def run_config(cfg: Mapping, command: str, seed: int | None = None, timing: bool = False) -> list:
    """Run a config for a subcommand.

    ``batch`` expands ``include`` files and ``[[experiments]]`` tables
    recursively and validates every experiment before running any.
    """
    if command != "batch":
        if _is_batch(cfg):
            raise ValidationError("config lists several experiments; use the batch subcommand", "experiments")
        return run_experiment(cfg, seed, command, timing)
    configs = _expand(cfg)
    if not configs:
        raise ValidationError("batch lists no experiments", "include")
    for i, sub in enumerate(configs):
        try:
            _validate(sub)
        except ValidationError as exc:
            raise ValidationError(str(exc), f"experiment {i}") from None
    rows = []
    for sub in configs:
        rows.extend(run_experiment(sub, seed, None, timing))
    return rows


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="starrisk", description="Star-shaped BSDE risk measures on a binomial lattice.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in TASKS + ("batch",):
        sp = sub.add_parser(name, help=f"run a {name} experiment config")
        sp.add_argument("--config", required=True, help="TOML config file")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--format", choices=("csv", "human"), default="csv")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        rows = run_config(cfg, args.command, args.seed, args.timing)
        text = emit_report(rows, args.format)
    except (ValidationError, ParameterError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, EvaluationError) as exc:
        where = ""
        if getattr(exc, "step", None) is not None:
            where = f" at node ({exc.step}, {exc.node})"
        print(f"numerical error{where}: {exc}", file=sys.stderr)
        return 3
    except StarRiskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = args.out or cfg.get("output")
    if out:
        try:
            with open(out, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"cannot write {out}: {exc.strerror}", file=sys.stderr)
            return 2
    else:
        sys.stdout.write(text)
    return 1 if any(r.passed is False for r in rows) else 0


if __name__ == "__main__":
    sys.exit(main())
