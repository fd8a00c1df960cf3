"""Fenchel conjugates, dual controls and dual evaluation on the lattice.

Sign convention (used everywhere in this module)::

    G(t, beta, q) = sup_{y, z} { -beta y - q z - g(t, y, z) },

so a dual control attaining the sup at ``(Y, Z)`` is ``beta = -dg/dy``,
``q = -dg/dz`` and Fenchel-Young reads ``g(Y, Z) + G(beta, q) = -beta Y - q Z``.

The measure change tilts the branch probabilities to
``p_up = (1 - q sqrt(dt)) / 2``, which makes the mean Brownian increment
exactly ``-q dt``.

Two per-step discounts are offered.  ``implicit`` (the default) uses
``1 / (1 + beta dt)``, the exact dual of the implicit primal step, so the
dual value at an extracted control reproduces the primal value up to
rounding.  ``exponential`` uses ``exp(-beta dt)`` and agrees with it to
first order in ``dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .bsde import BsdeSolution, min_representation
from .drivers import Driver, EnvelopeDriver
from .errors import EvaluationError, ParameterError, PreconditionError
from .lattice import AdaptedProcess, BrownianLattice, TerminalClaim

__all__ = [
    "DualControl",
    "DiscountProcess",
    "MeasureChange",
    "Conjugate",
    "MinmaxReport",
    "fenchel_conjugate",
    "envelope_conjugate",
    "extract_dual_control",
    "dual_evaluate",
    "expected_discount",
    "random_dual_control",
    "verify_minmax",
]


@dataclass(frozen=True)
class DualControl:
    """Discount rate ``beta`` and measure shift ``q``, defined on steps ``0..N-1``."""

    beta: AdaptedProcess
    q: AdaptedProcess
    fenchel_residual: float = 0.0

    @property
    def steps(self) -> int:
        return self.q.steps + 1

    @classmethod
    def constant(cls, steps: int, beta: float = 0.0, q: float = 0.0) -> "DualControl":
        return cls(AdaptedProcess.constant(steps - 1, beta), AdaptedProcess.constant(steps - 1, q))

    def validate(self, lattice: BrownianLattice, radius: float | None = None) -> None:
        """Check the probability condition and, optionally, the dual box."""
        if self.steps != lattice.steps:
            raise ParameterError(f"dual control has {self.steps} steps, lattice has {lattice.steps}")
        sq = lattice.sqrt_delta
        for k in range(lattice.steps):
            qk = self.q.layer(k)
            if np.any(np.abs(qk) * sq > 1.0):
                j = int(np.argmax(np.abs(qk)))
                raise ParameterError(f"|q| sqrt(dt) > 1 at node ({k}, {j}); branch probabilities invalid")
            if radius is not None:
                tol = 1e-9 * max(1.0, radius)
                if np.any(np.abs(self.beta.layer(k)) > radius + tol) or np.any(np.abs(qk) > radius + tol):
                    raise ParameterError(f"dual control leaves the box of radius {radius} at step {k}")


@dataclass(frozen=True)
class DiscountProcess:
    """Pathwise discount ``D(t, s)``, a product of per-step factors.

    The factor is ``exp(-beta dt)`` or ``1 / (1 + beta dt)``.
    """

    beta: AdaptedProcess
    delta: float
    scheme: str = "implicit"

    def factor(self, path: Sequence[int], t: int, s: int) -> float:
        """Discount between steps ``t <= s`` along ``path`` (node index per step)."""
        if not 0 <= t <= s <= len(path) - 1:
            raise ParameterError("need 0 <= t <= s <= len(path) - 1")
        rates = [self.beta[u, path[u]] for u in range(t, s)]
        if self.scheme == "exponential":
            return math.exp(-sum(rates) * self.delta)
        if self.scheme == "implicit":
            return math.prod(1.0 / (1.0 + b * self.delta) for b in rates)
        raise ParameterError(f"unknown discount {self.scheme!r}")


@dataclass(frozen=True)
class MeasureChange:
    """Tilted branch probabilities ``p_up = (1 - q sqrt(dt)) / 2``."""

    q: AdaptedProcess
    lattice: BrownianLattice

    def __post_init__(self):
        sq = self.lattice.sqrt_delta
        for k in range(self.q.steps + 1):
            if np.any(np.abs(self.q.layer(k)) * sq > 1.0):
                raise ParameterError(f"|q| sqrt(dt) > 1 at step {k}")

    def p_up(self, step: int) -> np.ndarray:
        return 0.5 * (1.0 - self.q.layer(step) * self.lattice.sqrt_delta)

    def increment_mean(self, step: int) -> np.ndarray:
        sq = self.lattice.sqrt_delta
        p = self.p_up(step)
        return p * sq - (1.0 - p) * sq

    def increment_second_moment(self, step: int) -> np.ndarray:
        sq = self.lattice.sqrt_delta
        p = self.p_up(step)
        return p * sq * sq + (1.0 - p) * sq * sq


class Conjugate:
    """Fenchel conjugate ``G(step, node, beta, q)`` with its finite domain radius."""

    def __init__(self, func: Callable, domain_radius: float, method: str):
        self.func = func
        self.domain_radius = float(domain_radius)
        self.method = method

    def __call__(self, step, node, beta, q) -> np.ndarray:
        beta, q = np.broadcast_arrays(np.asarray(beta, float), np.asarray(q, float))
        return np.asarray(self.func(step, node, beta, q), float)

    def __repr__(self):
        return f"Conjugate(method={self.method!r}, radius={self.domain_radius:g})"


def envelope_conjugate(env: EnvelopeDriver) -> Conjugate:
    """Closed-form conjugate of a Pasch-Hausdorff envelope member.

    ``G = -g0 + max(0, -beta b - q m - g(b, m) + g0)`` on the box
    ``|beta|, |q| <= k`` (star mode), or ``0`` on the box intersected with
    ``{-beta b - q m <= g(b, m)}`` (poshom mode); ``+inf`` elsewhere.
    """
    k = env.k
    tol = 1e-9 * max(1.0, k)

    def G(step, node, beta, q):
        b, m, gb, g0 = env.anchor_values(step, node)
        inside = (np.abs(beta) <= k + tol) & (np.abs(q) <= k + tol)
        if env.z_only:
            inside &= np.abs(beta) <= tol
        lin = -beta * b - q * m
        if env.mode == "poshom":
            val = np.where(lin <= gb + tol * (1.0 + np.abs(gb)), 0.0, math.inf)
        else:
            val = -g0 + np.maximum(0.0, lin - gb + g0)
        return np.where(inside, val, math.inf)

    return Conjugate(G, k, "closed_form")


def fenchel_conjugate(
    d: Driver,
    method: str = "closed_form",
    radius: float | None = None,
    resolution: float = 0.01,
    horizon: float = 1.0,
    radius_multiple: float = 10.0,
) -> Conjugate:
    """Fenchel conjugate of a driver.

    Parameters
    ----------
    method : {"closed_form", "grid_sup"}
        ``closed_form`` needs an envelope member or a driver with a known
        conjugate.  ``grid_sup`` maximizes over a square ``(y, z)`` grid of
        half-width ``radius`` (default ``radius_multiple * k * horizon``)
        and spacing ``resolution``; the value is ``+inf`` when the grid sup
        keeps growing in the outer band of width ``2 * resolution``.
    """
    if method == "closed_form":
        if isinstance(d, EnvelopeDriver):
            return envelope_conjugate(d)
        if d.conjugate is not None:
            return Conjugate(d.conjugate, d.lipschitz_k, "closed_form")
        raise ParameterError(f"no closed-form conjugate for driver {d.name!r}: anchor missing")
    if method != "grid_sup":
        raise ParameterError(f"unknown conjugate method {method!r}")
    if not resolution > 0:
        raise ParameterError(f"grid resolution must be positive, got {resolution!r}")
    k = d.lipschitz_k
    if radius is None:
        if not math.isfinite(k):
            raise ParameterError("grid_sup needs a radius for drivers without a finite Lipschitz constant")
        radius = radius_multiple * max(k, 1.0) * horizon
    n = int(math.ceil(radius / resolution))
    axis = np.linspace(-n * resolution, n * resolution, 2 * n + 1)
    Yg, Zg = np.meshgrid(axis, axis, indexing="ij")
    outer = (np.abs(Yg) > axis[-1] - 2.0 * resolution - 1e-12) | (np.abs(Zg) > axis[-1] - 2.0 * resolution - 1e-12)
    cache: dict = {}

    def values(step, node):
        key = (step, int(node))
        if key not in cache:
            cache[key] = d.evaluate(step, int(node), Yg, Zg)
        return cache[key]

    def G(step, node, beta, q):
        beta, q = np.broadcast_arrays(beta, q)
        nodes = np.broadcast_to(np.asarray(node), beta.shape)
        out = np.empty(beta.shape)
        for idx in np.ndindex(beta.shape):
            gv = values(step, nodes[idx])
            obj = -beta[idx] * Yg - q[idx] * Zg - gv
            full = float(np.max(obj))
            inner = float(np.max(np.where(outer, -np.inf, obj)))
            grows = full > inner + 1e-9 * (1.0 + abs(inner))
            out[idx] = math.inf if grows else full
        return out

    return Conjugate(G, k, "grid_sup")


def _clamp(beta, q, d: Driver, radius: float):
    beta = np.clip(beta, -radius, radius)
    q = np.clip(q, -radius, radius)
    if d.has("decreasing_y"):
        beta = np.maximum(beta, 0.0)
    if d.has("y_independent"):
        beta = np.zeros_like(beta)
    return beta, q


def _fd_candidates(f, step, nodes, y, z, h):
    gc = f.evaluate(step, nodes, y, z)
    gyp = f.evaluate(step, nodes, y + h, z)
    gym = f.evaluate(step, nodes, y - h, z)
    gzp = f.evaluate(step, nodes, y, z + h)
    gzm = f.evaluate(step, nodes, y, z - h)
    ys = {"c": (gyp - gym) / (2 * h), "f": (gyp - gc) / h, "b": (gc - gym) / h}
    zs = {"c": (gzp - gzm) / (2 * h), "f": (gzp - gc) / h, "b": (gc - gzm) / h}
    return ys, zs


def extract_dual_control(
    d: Driver,
    sol: BsdeSolution,
    conjugate: Conjugate | None = None,
    h: float = 1e-6,
    residual_tol: float = 1e-9,
) -> DualControl:
    """Dual control ``(beta, q) = -grad g(Y, Z)`` along a solution.

    Candidates are tried node by node in a fixed order: the driver's exact
    subgradient, the central-difference gradient of the base driver (for
    envelope members), then central and one-sided differences (step ``h``)
    of the driver itself.  The first candidate whose Fenchel-Young residual
    ``g + G + beta Y + q Z`` is within ``residual_tol * (1 + |g|)`` wins;
    if none is, the smallest residual wins.  For a star-shaped base the
    base gradient lies in the subdifferential of the envelope at its
    anchor, so the selected scenario is the derivative of the scheme.
    Controls are clamped to the dual box of radius ``k``; ``beta >= 0`` is
    enforced for drivers flagged ``decreasing_y``.
    """
    if not d.has("convex"):
        raise PreconditionError(f"dual extraction needs a convex driver, {d.name!r} is not flagged convex")
    k = d.lipschitz_k
    if not math.isfinite(k):
        raise PreconditionError("dual extraction needs a finite Lipschitz constant")
    if conjugate is None:
        try:
            conjugate = fenchel_conjugate(d, "closed_form")
        except ParameterError:
            conjugate = None
    N = sol.Y.steps
    betas, qs = [], []
    worst_res = 0.0
    for step in range(N):
        y = np.asarray(sol.Y.layer(step), float)
        z = np.asarray(sol.Z.layer(step), float)
        nodes = np.arange(step + 1)
        def candidates():
            if d.subgradient is not None:
                sy, sz = d.subgradient(step, nodes, y, z)
                yield _clamp(-(np.asarray(sy, float) + 0 * y), -(np.asarray(sz, float) + 0 * z), d, k)
            pools = []
            if isinstance(d, EnvelopeDriver):
                pools.append(_fd_candidates(d.base, step, nodes, y, z, h))
                yield _clamp(-pools[0][0]["c"], -pools[0][1]["c"], d, k)
            pools.append(_fd_candidates(d, step, nodes, y, z, h))
            yield _clamp(-pools[-1][0]["c"], -pools[-1][1]["c"], d, k)
            for py, pz in pools:
                for sy in ("c", "f", "b"):
                    for sz in ("c", "f", "b"):
                        if sy != "c" or sz != "c":
                            yield _clamp(-py[sy], -pz[sz], d, k)

        cands = candidates()
        beta, q = next(cands)
        if conjugate is not None:
            gval = d.evaluate(step, nodes, y, z)
            tol = residual_tol * (1.0 + np.abs(gval))

            def residual(b_, q_):
                with np.errstate(invalid="ignore"):
                    r = gval + conjugate(step, nodes, b_, q_) + b_ * y + q_ * z
                return np.where(np.isnan(r), math.inf, r)

            best_r = residual(beta, q)
            done = np.abs(best_r) <= tol
            for cb, cq in cands:
                if done.all():
                    break
                r = residual(cb, cq)
                take = ~done & ((np.abs(r) <= tol) | (np.abs(r) < np.abs(best_r)))
                beta = np.where(take, cb, beta)
                q = np.where(take, cq, q)
                best_r = np.where(take, r, best_r)
                done |= np.abs(best_r) <= tol
            worst_res = max(worst_res, float(np.max(np.abs(best_r))))
        betas.append(beta)
        qs.append(q)
    return DualControl(AdaptedProcess(betas), AdaptedProcess(qs), worst_res)


def _terminal(lattice, claim):
    if isinstance(claim, TerminalClaim):
        return claim.values(lattice)
    if isinstance(claim, (list, tuple)) and claim and all(isinstance(c, TerminalClaim) for c in claim):
        return np.stack([c.values(lattice) for c in claim])
    vals = np.asarray(claim, float)
    if vals.ndim not in (1, 2) or vals.shape[-1] != lattice.steps + 1:
        raise ParameterError(f"terminal layer must have {lattice.steps + 1} values")
    return vals


def dual_evaluate(
    lattice: BrownianLattice,
    claim,
    ctrl: DualControl,
    G: Conjugate | None,
    t: int = 0,
    discount: str = "implicit",
) -> np.ndarray:
    """``E_Q[D_{t,T} X - sum_s D_{t,s} G(s, beta_s, q_s) dt | F_t]`` at every node of step ``t``.

    ``claim`` is a claim, a terminal layer, or a sequence of either; a
    sequence gives one row per claim.

    Computed backward as ``V_s = exp(-beta_s dt) E_Q[V_{s+1}] - G dt``.
    ``discount='implicit'`` replaces ``exp(-beta dt)`` by ``1 / (1 + beta dt)``
    and discounts the penalty as well; that variant matches the implicit
    primal scheme step for step.  ``G=None`` drops the penalty.

    Raises
    ------
    EvaluationError
        If ``G`` is infinite at a visited node.
    """
    if discount not in ("exponential", "implicit"):
        raise ParameterError(f"unknown discount {discount!r}")
    N = lattice.steps
    if not 0 <= t <= N:
        raise ParameterError(f"step {t} outside 0..{N}")
    ctrl.validate(lattice)
    dt, sq = lattice.delta, lattice.sqrt_delta
    v = _terminal(lattice, claim).astype(float)
    for k in range(N - 1, t - 1, -1):
        beta = ctrl.beta.layer(k)
        q = ctrl.q.layer(k)
        p = 0.5 * (1.0 - q * sq)
        ev = p * v[..., 1:] + (1.0 - p) * v[..., :-1]
        pen = 0.0
        if G is not None:
            gk = G(k, np.arange(k + 1), beta, q)
            bad = np.flatnonzero(~np.isfinite(gk))
            if bad.size:
                j = int(bad[0])
                raise EvaluationError(
                    f"conjugate is infinite at node ({k}, {j}) for beta={beta[j]:.6g}, q={q[j]:.6g}", step=k, node=j
                )
            pen = gk * dt
        if discount == "exponential":
            v = np.exp(-beta * dt) * ev - pen
        else:
            v = (ev - pen) / (1.0 + beta * dt)
    return v


def expected_discount(lattice: BrownianLattice, ctrl: DualControl, t: int = 0, discount: str = "implicit"):
    """``E_Q[D_{t,T} | F_t]`` at every node of step ``t``."""
    return dual_evaluate(lattice, np.ones(lattice.steps + 1), ctrl, None, t, discount)


def random_dual_control(lattice: BrownianLattice, rng: np.random.Generator, radius: float, d: Driver | None = None):
    """Node-wise uniform control in the box of ``radius`` with valid probabilities."""
    sq = lattice.sqrt_delta
    qmax = min(radius, (1.0 - 1e-9) / sq)
    betas, qs = [], []
    for k in range(lattice.steps):
        b = rng.uniform(-radius, radius, size=k + 1)
        q = rng.uniform(-qmax, qmax, size=k + 1)
        if d is not None:
            b, q = _clamp(b, q, d, radius)
        betas.append(b)
        qs.append(q)
    return DualControl(AdaptedProcess(betas), AdaptedProcess(qs))


@dataclass(frozen=True)
class MinmaxReport:
    primal: float
    envelope_primal: float
    dual_at_witness: float
    gap: float
    fenchel_residual: float
    weak_duality_worst: float
    n_random: int
    tol_minmax: float
    weak_tol: float

    @property
    def gap_ok(self) -> bool:
        return self.gap <= self.tol_minmax

    @property
    def weak_duality_ok(self) -> bool:
        return self.weak_duality_worst <= self.weak_tol

    @property
    def passed(self) -> bool:
        return self.gap_ok and self.weak_duality_ok


def verify_minmax(
    lattice: BrownianLattice,
    d: Driver,
    claim: TerminalClaim,
    n_random_duals: int = 20,
    seed: int = 7,
    tol_minmax: float = 5e-2,
    weak_tol: float = 1e-6,
    discount: str = "implicit",
) -> MinmaxReport:
    """Min-max representation at the witness envelope member.

    Builds the witness member from the solution, extracts its dual control
    and closed-form conjugate, compares the dual value with the primal one,
    and checks weak duality for ``n_random_duals`` random controls drawn
    from ``numpy.random.default_rng(seed)``.
    """
    rep = min_representation(lattice, d, claim)
    env = rep.envelope_driver
    G = envelope_conjugate(env)
    ctrl = extract_dual_control(env, rep.envelope_solution, G)
    dual = float(dual_evaluate(lattice, claim, ctrl, G, 0, discount)[0])
    primal = rep.primal.value
    env_primal = rep.envelope_solution.value
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(n_random_duals):
        rc = random_dual_control(lattice, rng, env.k, env)
        val = float(dual_evaluate(lattice, claim, rc, G, 0, discount)[0])
        worst = max(worst, val - env_primal)
    return MinmaxReport(
        primal, env_primal, dual, abs(dual - primal), ctrl.fenchel_residual, worst,
        n_random_duals, tol_minmax, weak_tol,
    )
