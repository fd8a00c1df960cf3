"""Backward induction for BSDEs on the binomial lattice and primal checks.

One step of the scheme at node ``(k, j)`` with children ``u`` (up) and
``d`` (down) is

    Z = (u - d) / (2 sqrt(dt)),
    Y = (u + d) / 2 + g(k, j, Y, Z) dt,

implicit in ``Y`` (solved by fixed-point iteration) and explicit in ``Z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .drivers import ControlPath, Driver, EnvelopeDriver, ph_envelope
from .errors import EvaluationError, NumericalError, ParameterError, StepSizeError
from .lattice import AdaptedProcess, BrownianLattice, TerminalClaim

__all__ = [
    "BsdeSolution",
    "MinRepresentation",
    "DominanceReport",
    "ModeReport",
    "RISK_MODES",
    "check_step_size",
    "solve_bsde",
    "solve_terminal",
    "solve_subtree",
    "shifted_driver",
    "min_representation",
    "dominance_sample",
    "verify_risk_properties",
]

FP_TOL = 1e-12
FP_MAX_ITER = 100


@dataclass(frozen=True)
class BsdeSolution:
    """Value process ``Y`` (the risk measure) and control ``Z`` (steps ``0..N-1``)."""

    Y: AdaptedProcess
    Z: AdaptedProcess
    fixed_point_residual: float
    iterations: int = 0
    driver_name: str = ""

    @property
    def value(self) -> float:
        """``Y`` at the root node."""
        return self.Y[0, 0]

    def control_path(self) -> ControlPath:
        """The solution itself as an anchor path ``(Y, Z)``."""
        return ControlPath(self.Y, self.Z)


def check_step_size(lattice: BrownianLattice, d: Driver) -> None:
    """Reject lattices on which the implicit step is not a contraction.

    ``y``-independent drivers are explicit and need no condition.
    """
    if d.has("y_independent"):
        return
    k, dt = d.lipschitz_k, lattice.delta
    if not math.isfinite(k):
        raise StepSizeError(f"driver {d.name!r} has no finite Lipschitz constant; the implicit step is undefined")
    if k * dt > 0.5:
        suggested = int(math.ceil(2.0 * k * lattice.horizon))
        raise StepSizeError(
            f"k*dt = {k * dt:.6g} > 0.5 for driver {d.name!r}; use at least N = {suggested}",
            suggested_steps=suggested,
        )


def _step(d: Driver, k: int, up: np.ndarray, down: np.ndarray, dt: float, sq: float, tol: float, max_iter: int):
    z = (up - down) / (2.0 * sq)
    mean = 0.5 * (up + down)
    nodes = np.arange(k + 1)
    if d.has("y_independent"):
        gv = d.evaluate(k, nodes, mean, z)
        _check_finite(gv, d, k)
        y = mean + gv * dt
        return y, z, 0.0, 1
    # Secant iteration on phi(y) = y - mean - g(y, z) dt.  Its difference
    # quotients lie in [1 - k dt, 1 + k dt], so every step contracts the
    # error at least by 2 k dt / (1 + k dt); on linear pieces it is exact.
    kdt = d.lipschitz_k * dt
    lo_s, hi_s = 1.0 - kdt, 1.0 + kdt
    y_prev = mean
    g_prev = d.evaluate(k, nodes, y_prev, z)
    _check_finite(g_prev, d, k)
    phi_prev = -g_prev * dt
    y = mean + g_prev * dt
    converged = False
    last = math.inf
    for it in range(1, max_iter + 1):
        gv = d.evaluate(k, nodes, y, z)
        _check_finite(gv, d, k)
        phi = y - mean - gv * dt
        dy = y - y_prev
        with np.errstate(invalid="ignore", divide="ignore"):
            slope = np.where(dy != 0, (phi - phi_prev) / np.where(dy != 0, dy, 1.0), 1.0)
        slope = np.minimum(np.maximum(slope, lo_s), hi_s)
        step = phi / slope
        y_prev, phi_prev = y, phi
        y = y - step
        diff = float(np.max(np.abs(step))) if y.size else 0.0
        if not converged:
            converged = diff <= tol * (1.0 + float(np.max(np.abs(y))))
        # once within tolerance, keep going while rounding still improves
        if converged and (diff == 0.0 or diff >= last):
            break
        last = diff
    if not converged:
        raise NumericalError(
            f"fixed point for driver {d.name!r} did not converge at step {k} (last change {diff:.3g})",
            step=k,
            residual=diff,
        )
    res = float(np.max(np.abs(y - mean - d.evaluate(k, nodes, y, z) * dt))) if y.size else 0.0
    return y, z, res, it


def _check_finite(gv, d, k):
    bad = np.flatnonzero(~np.isfinite(gv))
    if bad.size:
        raise EvaluationError(
            f"driver {d.name!r} is not finite at node ({k}, {int(bad[0])})", step=k, node=int(bad[0])
        )


def _backward(lattice, d, terminal, start, stop=0, tol=FP_TOL, max_iter=FP_MAX_ITER):
    """Run the scheme from layer ``start`` (values ``terminal``) down to ``stop``."""
    dt, sq = lattice.delta, lattice.sqrt_delta
    ys = {start: np.asarray(terminal, float)}
    zs = {}
    worst, iters = 0.0, 0
    for k in range(start - 1, stop - 1, -1):
        nxt = ys[k + 1]
        y, z, res, it = _step(d, k, nxt[1:], nxt[:-1], dt, sq, tol, max_iter)
        ys[k], zs[k] = y, z
        worst = max(worst, res)
        iters = max(iters, it)
    return ys, zs, worst, iters


def solve_terminal(
    lattice: BrownianLattice, d: Driver, terminal: Sequence[float], tol: float = FP_TOL, max_iter: int = FP_MAX_ITER
) -> BsdeSolution:
    """Solve with explicit terminal node values (length ``N + 1``)."""
    N = lattice.steps
    terminal = np.asarray(terminal, float)
    if terminal.shape != (N + 1,):
        raise ParameterError(f"terminal layer must have {N + 1} values, got shape {terminal.shape}")
    if not np.all(np.isfinite(terminal)):
        raise EvaluationError("terminal values must be finite", step=N)
    check_step_size(lattice, d)
    ys, zs, res, iters = _backward(lattice, d, terminal, N, 0, tol, max_iter)
    Y = AdaptedProcess([ys[k] for k in range(N + 1)])
    Z = AdaptedProcess([zs[k] for k in range(N)])
    return BsdeSolution(Y, Z, res, iters, d.name)


def solve_bsde(
    lattice: BrownianLattice, d: Driver, claim: TerminalClaim, tol: float = FP_TOL, max_iter: int = FP_MAX_ITER
) -> BsdeSolution:
    """Solve ``-dY = g(t, Y, Z) dt - Z dW`` with ``Y_T = X`` on the lattice.

    Raises
    ------
    StepSizeError
        If ``k dt > 0.5`` for a ``y``-dependent driver.
    NumericalError
        If the fixed point fails to reach the tolerance in ``max_iter`` sweeps.
    EvaluationError
        If the driver is infinite at a visited node.
    """
    return solve_terminal(lattice, d, claim.values(lattice), tol, max_iter)


class _Shifted(Driver):
    def __init__(self, base: Driver, step0: int, node0: int):
        self.base = base
        self.step0, self.node0 = step0, node0
        super().__init__(
            self._eval, base.lipschitz_k, base.flags, name=base.name, params=base.params,
            z_radius=base.z_radius, z_breakpoints=base.z_breakpoints, lower_bound=base.lower_bound,
        )

    def _eval(self, step, node, y, z):
        return self.base.evaluate(step + self.step0, np.asarray(node) + self.node0, y, z)

    def z_interval(self, step, node):
        return self.base.z_interval(step + self.step0, np.asarray(node) + self.node0)

    def min_over_z(self, step, nodes, up, down, delta):
        return self.base.min_over_z(step + self.step0, np.asarray(nodes) + self.node0, up, down, delta)


def shifted_driver(d: Driver, step0: int, node0: int) -> Driver:
    """``d`` seen from the subtree rooted at ``(step0, node0)``."""
    if step0 == 0 and node0 == 0:
        return d
    return _Shifted(d, step0, node0)


def solve_subtree(lattice, d, terminal, step, node, tol=FP_TOL):
    """Value at ``(step, node)`` using only the subtree below it.

    ``terminal`` holds the ``N + 1`` terminal values of the full lattice.
    """
    N = lattice.steps
    if step == N:
        return float(terminal[node])
    sub = lattice.subtree(step)
    vals = np.asarray(terminal, float)[node : node + N - step + 1]
    return solve_terminal(sub, shifted_driver(d, step, node), vals, tol).value


# ---------------------------------------------------------------------------
# representation and dominance


@dataclass(frozen=True)
class MinRepresentation:
    primal: BsdeSolution
    witness_control: ControlPath
    envelope_solution: BsdeSolution
    envelope_driver: EnvelopeDriver

    @property
    def max_gap(self) -> float:
        """Largest node-wise ``|Y^envelope - Y|``."""
        return self.envelope_solution.Y.max_abs_diff(self.primal.Y)


def min_representation(lattice: BrownianLattice, d: Driver, claim: TerminalClaim, k: float | None = None):
    """Solve, anchor the envelope at the solution ``(Y, Z)`` and re-solve.

    The re-solved value process coincides with the primal one, which is
    the attainment half of the min representation.
    """
    primal = solve_bsde(lattice, d, claim)
    witness = primal.control_path()
    env = ph_envelope(d, witness, k)
    env_sol = solve_bsde(lattice, env, claim)
    return MinRepresentation(primal, witness, env_sol, env)


@dataclass(frozen=True)
class DominanceReport:
    n_controls: int
    min_gap: float
    gaps: tuple
    all_dominate: bool
    tol: float


def dominance_sample(
    lattice: BrownianLattice,
    d: Driver,
    claim: TerminalClaim,
    n_controls: int = 50,
    seed: int = 0,
    box=(-3.0, 3.0),
    k: float | None = None,
    tol: float = 1e-9,
    primal: BsdeSolution | None = None,
) -> DominanceReport:
    """Check ``rho^gamma >= rho`` node-wise for random anchor paths ``gamma``.

    Anchors are drawn node-wise uniform in ``box`` from
    ``numpy.random.default_rng(seed)``.
    """
    if n_controls < 0:
        raise ParameterError("n_controls must be >= 0")
    primal = primal or solve_bsde(lattice, d, claim)
    rng = np.random.default_rng(seed)
    gaps = []
    for _ in range(n_controls):
        path = ControlPath.random(lattice, rng, box)
        sol = solve_bsde(lattice, ph_envelope(d, path, k), claim)
        gaps.append(min(float(np.min(a - b)) for a, b in zip(sol.Y, primal.Y)))
    min_gap = min(gaps) if gaps else math.inf
    return DominanceReport(n_controls, min_gap, tuple(gaps), bool(min_gap >= -tol), tol)


# ---------------------------------------------------------------------------
# risk-measure properties

RISK_MODES = (
    "star_shaped",
    "pos_hom",
    "cash_additive",
    "cash_subadditive",
    "positive_constancy",
    "time_consistency",
    "regularity",
    "sublinear",
)


@dataclass(frozen=True)
class ModeReport:
    mode: str
    status: str
    worst: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _layer_gap(a: AdaptedProcess, b: AdaptedProcess, fn) -> float:
    return max(float(np.max(fn(x, y))) for x, y in zip(a, b))


def verify_risk_properties(
    lattice: BrownianLattice,
    d: Driver,
    claims: Iterable[TerminalClaim],
    modes: Iterable[str],
    lambdas: Sequence[float] = (0.25, 0.5, 0.75),
    cash=0.5,
    cash_step: int = 0,
    split_step: int | None = None,
    event: Sequence[int] | None = None,
    tol: float = 1e-8,
) -> Mapping[str, ModeReport]:
    """Evaluate risk-measure properties of the BSDE-induced ``rho`` on solved processes.

    Parameters
    ----------
    claims : iterable of TerminalClaim
        Positions ``X`` to test.
    modes : iterable of str
        Subset of :data:`RISK_MODES`.
    cash : float or array
        Shift ``c``; an array gives one value per node of layer ``cash_step``.
    split_step : int, optional
        Intermediate step for time consistency and regularity
        (default ``N // 2``).
    event : sequence of int, optional
        Nodes of layer ``split_step`` forming the event ``A`` for the
        regularity check (default: nodes with ``W >= 0``).
    tol : float
        Tolerance of the inequalities; the homogeneity, cash-additivity and
        splice checks use ``1e-9``, ``1e-9`` and ``1e-12``.

    Returns
    -------
    dict
        ``mode -> ModeReport`` with status ``pass``, ``fail`` or
        ``precondition unmet``.
    """
    claims = list(claims)
    modes = list(modes)
    unknown = set(modes) - set(RISK_MODES)
    if unknown:
        raise ParameterError(f"unknown risk property modes {sorted(unknown)}")
    if not claims:
        raise ParameterError("at least one claim is needed")
    N = lattice.steps
    t_split = N // 2 if split_step is None else int(split_step)
    if not 0 <= t_split <= N:
        raise ParameterError(f"split_step {t_split} outside 0..{N}")
    cache: dict = {}

    def solve_vals(vals):
        key = tuple(np.round(np.asarray(vals, float), 15))
        if key not in cache:
            cache[key] = solve_terminal(lattice, d, vals)
        return cache[key]

    xvals = [c.values(lattice) for c in claims]
    zero = np.zeros(N + 1)
    out = {}
    for mode in modes:
        if mode == "star_shaped":
            y0 = solve_vals(zero).Y
            worst = -math.inf
            for xv in xvals:
                yx = solve_vals(xv).Y
                for lam in lambdas:
                    yl = solve_vals(lam * xv).Y
                    worst = max(worst, max(
                        float(np.max(a - (lam * b + (1 - lam) * c))) for a, b, c in zip(yl, yx, y0)
                    ))
            out[mode] = _report(mode, worst, tol)
        elif mode == "pos_hom":
            worst = 0.0
            for xv in xvals:
                yx = solve_vals(xv).Y
                for lam in (0.5, 2.0):
                    yl = solve_vals(lam * xv).Y
                    worst = max(worst, _layer_gap(yl, yx, lambda a, b, lam=lam: np.abs(a - lam * b)))
            out[mode] = _report(mode, worst, 1e-9)
        elif mode in ("cash_additive", "cash_subadditive"):
            c = np.broadcast_to(np.asarray(cash, float), (cash_step + 1,))
            if mode == "cash_subadditive" and np.any(c < 0):
                out[mode] = ModeReport(mode, "precondition unmet", math.nan, tol, "cash shift must be >= 0")
                continue
            worst = -math.inf
            for xv in xvals:
                base = solve_vals(xv).Y.layer(cash_step)
                for j in range(cash_step + 1):
                    shifted = solve_subtree(lattice, d, xv + c[j], cash_step, j)
                    diff = shifted - base[j] - c[j]
                    worst = max(worst, abs(diff) if mode == "cash_additive" else diff)
            out[mode] = _report(mode, worst, 1e-9 if mode == "cash_additive" else tol)
        elif mode == "positive_constancy":
            cs = np.linspace(0.0, 5.0, 11)
            gvals = d.evaluate(0, 0, cs, np.zeros_like(cs))
            if np.any(np.abs(gvals) > 0):
                out[mode] = ModeReport(mode, "precondition unmet", math.nan, tol, "g(t, c, 0) != 0 for some c >= 0")
                continue
            worst = 0.0
            for c in (0.5, 1.0, 2.0):
                yc = solve_vals(np.full(N + 1, c)).Y
                worst = max(worst, max(float(np.max(np.abs(layer - c))) for layer in yc))
            out[mode] = _report(mode, worst, tol)
        elif mode == "time_consistency":
            worst = 0.0
            for xv in xvals:
                full = solve_vals(xv)
                ys, _, _, _ = _backward(lattice, d, full.Y.layer(t_split), t_split, 0)
                worst = max(worst, max(float(np.max(np.abs(ys[k] - full.Y.layer(k)))) for k in range(t_split + 1)))
            out[mode] = _report(mode, worst, 1e-12)
        elif mode == "regularity":
            g0 = d.evaluate(0, 0, 0.0, 0.0)
            if not d.has("normalized_at_origin") or float(g0) != 0.0:
                out[mode] = ModeReport(mode, "precondition unmet", math.nan, tol, "driver is not normalized")
                continue
            A = (np.flatnonzero(lattice.w_values(t_split) >= 0) if event is None else np.asarray(event, int))
            in_a = np.zeros(t_split + 1, bool)
            in_a[A] = True
            worst = 0.0
            for xv in xvals:
                full = solve_vals(xv).Y.layer(t_split)
                for j in range(t_split + 1):
                    vals = xv if in_a[j] else zero
                    lhs = solve_subtree(lattice, d, vals, t_split, j)
                    rhs = full[j] if in_a[j] else 0.0
                    worst = max(worst, abs(lhs - rhs))
            out[mode] = _report(mode, worst, 1e-12)
        elif mode == "sublinear":
            worst = 0.0
            for xv in xvals:
                yx = solve_vals(xv).Y
                for lam in (0.5, 2.0):
                    worst = max(worst, _layer_gap(solve_vals(lam * xv).Y, yx, lambda a, b, lam=lam: np.abs(a - lam * b)))
            for i, x1 in enumerate(xvals):
                for x2 in xvals[i:]:
                    gap = _subadditivity_gap(solve_vals(x1 + x2).Y, solve_vals(x1).Y, solve_vals(x2).Y)
                    worst = max(worst, gap)
            out[mode] = _report(mode, worst, tol)
    return out


def _subadditivity_gap(y12, y1, y2) -> float:
    return max(float(np.max(a - b - c)) for a, b, c in zip(y12, y1, y2))


def _report(mode, worst, tol):
    worst = float(worst)
    return ModeReport(mode, "pass" if worst <= tol else "fail", worst, tol)
