"""Capital allocation rules built on lattice risk measures.

``SS`` is the subdifferential rule: the dual evaluation of ``X`` under the
scenario ``(beta^Y, q^Y)`` and penalty extracted from the witness envelope
member of ``rho(Y)``.  ``AS`` (Aumann-Shapley) integrates the unpenalized
scenario evaluations of ``X`` along ``m Y``, ``m`` in ``(0, 1)``; ``pAS``
integrates the SS rule along the same path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bsde import min_representation, solve_bsde
from .drivers import Driver
from .duality import Conjugate, DualControl, dual_evaluate, envelope_conjugate, extract_dual_control
from .errors import ParameterError, PreconditionError
from .lattice import BrownianLattice, TerminalClaim, constant_claim, identity_claim

_TC = TerminalClaim

__all__ = [
    "AllocationResult",
    "Scenario",
    "AxiomCheck",
    "AllocationFixture",
    "DEFAULT_FIXTURES",
    "quadrature_rule",
    "allocation_scenario",
    "car_subdifferential",
    "car_aumann_shapley",
    "car_penalized_as",
    "verify_allocation_axioms",
]

AS_ENDPOINT_EPS = 1e-4


@dataclass(frozen=True)
class Scenario:
    """Dual control and conjugate of the witness member for ``rho(Y)``."""

    control: DualControl
    conjugate: Conjugate
    rho: np.ndarray
    envelope: Driver = None


@dataclass(frozen=True)
class AllocationResult:
    """Allocated capital at every node of step ``t``; ``value`` is the first node."""

    values: np.ndarray
    rule: str
    quadrature: tuple = ()
    per_m: tuple = field(default=(), compare=False)

    @property
    def value(self) -> float:
        return float(self.values[0])


def _check(d: Driver):
    if not d.has("star_shaped"):
        raise PreconditionError(f"driver {d.name!r} is not flagged star_shaped")
    if not math.isfinite(d.lipschitz_k):
        raise PreconditionError(f"driver {d.name!r} needs a finite Lipschitz constant")


def allocation_scenario(lattice: BrownianLattice, d: Driver, Y: TerminalClaim, t: int = 0) -> Scenario:
    """Witness scenario ``(beta^Y, q^Y)`` with the conjugate of the witness member."""
    _check(d)
    if not 0 <= t < lattice.steps:
        raise ParameterError(f"allocation step must lie in 0..{lattice.steps - 1}, got {t}")
    rep = min_representation(lattice, d, Y)
    G = envelope_conjugate(rep.envelope_driver)
    ctrl = extract_dual_control(rep.envelope_driver, rep.envelope_solution, G)
    return Scenario(ctrl, G, np.array(rep.primal.Y.layer(t)), rep.envelope_driver)


def quadrature_rule(rule: str = "gauss_legendre", n: int = 32):
    """Nodes and weights on ``[0, 1]``; the trapezoid ``m = 0`` node is moved to ``1e-4``."""
    if int(n) != n or n < 2:
        raise ParameterError(f"quadrature needs at least 2 points, got {n!r}")
    if rule == "gauss_legendre":
        x, w = np.polynomial.legendre.leggauss(int(n))
        return 0.5 * (x + 1.0), 0.5 * w
    if rule == "trapezoid":
        m = np.linspace(0.0, 1.0, int(n))
        w = np.full(int(n), 1.0 / (n - 1))
        w[0] = w[-1] = 0.5 / (n - 1)
        m[0] = AS_ENDPOINT_EPS
        return m, w
    raise ParameterError(f"unknown quadrature rule {rule!r}")


def car_subdifferential(lattice, d: Driver, X: TerminalClaim, Y: TerminalClaim, t: int = 0,
                        scenario: Scenario | None = None) -> AllocationResult:
    """``Lambda^SS_t(X, Y)``: penalized dual evaluation of ``X`` in the scenario of ``Y``."""
    sc = scenario or allocation_scenario(lattice, d, Y, t)
    vals = dual_evaluate(lattice, X, sc.control, sc.conjugate, t)
    return AllocationResult(vals, "SS")


def car_aumann_shapley(lattice, d: Driver, X: TerminalClaim, Y: TerminalClaim, t: int = 0,
                       quadrature=("gauss_legendre", 32)) -> AllocationResult:
    """``Lambda^AS_t(X, Y) = int_0^1 E_Q[D X | F_t]`` under the scenario of ``m Y``."""
    ms, ws = quadrature_rule(*quadrature)
    total = 0.0
    per_m = []
    for m, w in zip(ms, ws):
        sc = allocation_scenario(lattice, d, Y.scaled(float(m)), t)
        v = dual_evaluate(lattice, X, sc.control, None, t)
        per_m.append((float(m), v))
        total = total + w * v
    return AllocationResult(np.asarray(total), "AS", tuple(quadrature), tuple(per_m))


def car_penalized_as(lattice, d: Driver, X: TerminalClaim, Y: TerminalClaim, t: int = 0,
                     quadrature=("gauss_legendre", 32)) -> AllocationResult:
    """``Lambda^pAS_t(X, Y) = int_0^1 Lambda^SS_t(X, m Y) dm``."""
    ms, ws = quadrature_rule(*quadrature)
    total = 0.0
    per_m = []
    for m, w in zip(ms, ws):
        v = car_subdifferential(lattice, d, X, Y.scaled(float(m)), t).values
        per_m.append((float(m), v))
        total = total + w * v
    return AllocationResult(np.asarray(total), "pAS", tuple(quadrature), tuple(per_m))


@dataclass(frozen=True)
class AllocationFixture:
    """Sub-portfolios ``parts`` of the total ``X = sum(parts)`` against ``Y``."""

    name: str
    parts: tuple
    Y: TerminalClaim
    c: float = 0.3
    weights: tuple = (0.5, 0.5)


def _positive_part(claim: TerminalClaim) -> TerminalClaim:
    return _TC(name=f"({claim.name})+", nodes=lambda lat: np.maximum(claim.values(lat), 0.0))


def _negative_part(claim: TerminalClaim) -> TerminalClaim:
    return _TC(name=f"-({claim.name})-", nodes=lambda lat: np.minimum(claim.values(lat), 0.0))


_W = identity_claim()

DEFAULT_FIXTURES = (
    AllocationFixture("split_W", (_positive_part(_W), _negative_part(_W)), _W),
    AllocationFixture("half_W", (identity_claim(0.5), identity_claim(0.5)), _W),
    AllocationFixture("cash_W", (identity_claim(), constant_claim(0.5)), _W),
)


@dataclass(frozen=True)
class AxiomCheck:
    rule: str
    axiom: str
    fixture: str
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


def _sum(parts):
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def verify_allocation_axioms(
    lattice: BrownianLattice,
    d: Driver,
    fixtures=DEFAULT_FIXTURES,
    rules=("SS", "AS", "pAS"),
    t: int = 0,
    tol: float = 1e-8,
    tol_full_ss: float = 5e-2,
    tol_full_as: float | None = None,
    quadrature=("gauss_legendre", 32),
) -> list:
    """Check the allocation axioms on each fixture; returns a list of :class:`AxiomCheck`.

    ``worst`` is the size of the violation (``<= 0`` when an inequality holds
    strictly).  Full allocation for AS uses ``tol_full_as``, by default
    ``1e-6`` for positively homogeneous drivers and ``1e-3`` otherwise.
    """
    _check(d)
    unknown = set(rules) - {"SS", "AS", "pAS"}
    if unknown:
        raise ParameterError(f"unknown allocation rules {sorted(unknown)}")
    if tol_full_as is None:
        tol_full_as = 1e-6 if d.has("pos_hom") else 1e-3
    out = []
    cache = {}

    def scenario(Y, m):
        key = (id(Y), m)
        if key not in cache:
            cache[key] = allocation_scenario(lattice, d, Y if m == 1.0 else Y.scaled(m), t)
        return cache[key]

    for fx in fixtures:
        Y = fx.Y
        X = _sum(list(fx.parts))
        sc = scenario(Y, 1.0)
        a = fx.weights
        bump = _TC(name="bump", nodes=lambda lat, X=X: X.values(lat) + np.abs(lat.w_values(lat.steps)))
        mix = _sum([p.scaled(w) for p, w in zip(fx.parts, a)])
        claims = [X, constant_claim(0.0), bump, Y, mix, X.shifted(fx.c)] + list(fx.parts)
        terminal = np.stack([c.values(lattice) for c in claims])

        def evaluate(rule):
            if rule == "SS":
                return dual_evaluate(lattice, terminal, sc.control, sc.conjugate, t)
            ms, ws = quadrature_rule(*quadrature)
            pen = rule == "pAS"
            return sum(w * dual_evaluate(lattice, terminal, s.control, s.conjugate if pen else None, t)
                       for w, s in zip(ws, (scenario(Y, float(m)) for m in ms)))

        for rule in rules:
            lx, zero, lbump, ly, lmix, shifted, *parts = evaluate(rule)

            def add(axiom, worst, tl=tol):
                out.append(AxiomCheck(rule, axiom, fx.name, float(np.max(worst)), tl))

            add("normalization", zero if rule != "AS" else np.abs(zero))
            add("monotonicity", lx - lbump)
            if rule in ("SS", "AS"):
                add("full_allocation", np.abs(ly - sc.rho), tol_full_ss if rule == "SS" else tol_full_as)
            else:
                add("audacious", ly - sc.rho)
            add("sub_allocation", sum(parts) - lx)
            add("weak_convexity", lmix - sum(w * v for w, v in zip(a, parts)))
            if d.has("y_independent"):
                add("cash_additivity", np.abs(shifted - lx - fx.c), 1e-9)
            if d.has("decreasing_y"):
                add("cash_subadditivity", shifted - lx - fx.c)
            if rule == "SS":
                add("modified_no_undercut", lx - solve_bsde(lattice, sc.envelope, X).Y.layer(t))
    return out
