"""Portfolio choice under a star-shaped lattice risk measure.

Wealth follows ``X_{k+1} = X_k + pi b_k dt + pi sigma dW_k``.  Only constant
policies are supported: their terminal wealth is an affine function of the
terminal Brownian value, so the recombining lattice represents it exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bsde import min_representation, solve_bsde
from .drivers import Driver
from .errors import ParameterError, PreconditionError
from .lattice import AdaptedProcess, BrownianLattice, TerminalClaim, constant_claim

__all__ = [
    "Market",
    "StrategyGrid",
    "PortfolioSolution",
    "DecompositionReport",
    "InterchangeReport",
    "simulate_wealth",
    "wealth_claim",
    "optimize_portfolio",
    "verify_linear_decomposition",
    "interchange_table",
]


@dataclass(frozen=True)
class Market:
    """Single stock with drift ``b`` (scalar or per step), volatility ``sigma > 0`` and initial wealth ``x0``."""

    b: object = 0.1
    sigma: float = 0.2
    x0: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f"sigma must be positive, got {self.sigma!r}")
        if not math.isfinite(self.x0):
            raise ParameterError("x0 must be finite")
        if not np.all(np.isfinite(np.asarray(self.b, float))):
            raise ParameterError("drift must be finite")

    def drift(self, steps: int) -> np.ndarray:
        b = np.asarray(self.b, float)
        if b.ndim == 0:
            return np.full(steps, float(b))
        if b.shape != (steps,):
            raise ParameterError(f"step-indexed drift needs {steps} values, got {b.size}")
        return b


@dataclass(frozen=True)
class StrategyGrid:
    """Finite set ``Pi`` of capital-in-stock levels; constant policies only."""

    Pi: tuple
    policy_class: str = "constant"

    def __post_init__(self):
        pi = tuple(sorted(float(p) for p in self.Pi))
        if not pi:
            raise ParameterError("strategy grid Pi is empty")
        if not all(math.isfinite(p) for p in pi):
            raise ParameterError("strategy grid must be bounded")
        if self.policy_class != "constant":
            raise ParameterError("only constant policies are supported")
        object.__setattr__(self, "Pi", pi)

    def candidates(self):
        return self.Pi


def simulate_wealth(lattice: BrownianLattice, market: Market, policy, grid: StrategyGrid | None = None) -> AdaptedProcess:
    """Wealth process of the constant policy ``policy`` on every node."""
    pi = float(policy)
    if grid is not None and pi not in grid.Pi:
        raise ParameterError(f"policy {pi!r} is not in Pi={grid.Pi}")
    N = lattice.steps
    drift = np.concatenate([[0.0], np.cumsum(market.drift(N))]) * lattice.delta
    return AdaptedProcess([market.x0 + pi * drift[k] + pi * market.sigma * lattice.w_values(k) for k in range(N + 1)])


def wealth_claim(lattice: BrownianLattice, market: Market, policy) -> TerminalClaim:
    pi = float(policy)
    N = lattice.steps
    total_drift = float(np.sum(market.drift(N))) * lattice.delta

    def nodes(lat):
        if lat.steps != N:
            raise ParameterError("wealth claim is tied to its lattice")
        return market.x0 + pi * total_drift + pi * market.sigma * lat.w_values(N)

    return TerminalClaim(name=f"X^{pi:g}", nodes=nodes)


@dataclass(frozen=True)
class PortfolioSolution:
    """Node-wise value ``V`` at step ``t`` with the minimizing policy per node."""

    V: np.ndarray
    pi_star: np.ndarray
    table: tuple
    step: int
    witness: object = None

    @property
    def value(self) -> float:
        return float(self.V[0])


def _check_driver(d: Driver):
    if not d.has("star_shaped"):
        raise PreconditionError(f"driver {d.name!r} is not flagged star_shaped")
    if not math.isfinite(d.lipschitz_k):
        raise PreconditionError(f"driver {d.name!r} needs a finite Lipschitz constant")


def optimize_portfolio(lattice: BrownianLattice, d: Driver, market: Market, grid: StrategyGrid,
                       F: TerminalClaim | None = None, t: int = 0) -> PortfolioSolution:
    """Enumerate ``Pi`` and minimize ``rho_t(X^pi_T + F)`` node-wise; ties go to the smallest ``pi``."""
    _check_driver(d)
    if not 0 <= t <= lattice.steps:
        raise ParameterError(f"step {t} outside 0..{lattice.steps}")
    F = F or constant_claim(0.0)
    rows = []
    for pi in grid.candidates():
        claim = wealth_claim(lattice, market, pi) + F
        rows.append((pi, np.array(solve_bsde(lattice, d, claim).Y.layer(t))))
    vals = np.stack([v for _, v in rows])
    idx = np.argmin(vals, axis=0)
    V = vals[idx, np.arange(vals.shape[1])]
    pis = np.array([rows[i][0] for i in idx])
    witness = min_representation(lattice, d, wealth_claim(lattice, market, pis[0]) + F)
    return PortfolioSolution(V, pis, tuple((pi, tuple(v)) for pi, v in rows), t, witness)


@dataclass(frozen=True)
class DecompositionReport:
    V: np.ndarray
    wealth: np.ndarray
    Y: np.ndarray
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


def _modified_driver(env: Driver, pi: float, drift: np.ndarray, sigma: float) -> Driver:
    def g(step, node, y, z):
        return pi * drift[step] + env.evaluate(step, node, y, z + pi * sigma)

    return Driver(g, env.lipschitz_k, {"y_independent"}, name=f"modified[{env.name}]")


def verify_linear_decomposition(lattice: BrownianLattice, d: Driver, market: Market, grid: StrategyGrid,
                                F: TerminalClaim, tol: float = 1e-8) -> DecompositionReport:
    """Check ``V_0 = X^pi_0 + Y_0`` where ``Y`` solves the BSDE with terminal ``F`` and driver
    ``pi b + g^gamma(z + pi sigma)`` built from the winning witness member ``g^gamma``."""
    missing = [f for f in ("y_independent", "nonnegative", "normalized_at_origin") if not d.has(f)]
    if missing:
        raise PreconditionError(f"linear decomposition needs a driver flagged {missing}")
    sol = optimize_portfolio(lattice, d, market, grid, F, 0)
    pi = float(sol.pi_star[0])
    env = sol.witness.envelope_driver
    gt = _modified_driver(env, pi, market.drift(lattice.steps), market.sigma)
    Y = np.array(solve_bsde(lattice, gt, F).Y.layer(0))
    wealth = np.array(simulate_wealth(lattice, market, pi).layer(0))
    worst = float(np.max(np.abs(sol.V - (wealth + Y))))
    return DecompositionReport(sol.V, wealth, Y, worst, tol)


@dataclass(frozen=True)
class InterchangeReport:
    table: np.ndarray
    pi_then_gamma: float
    gamma_then_pi: float
    value: float
    pi_star: float

    @property
    def exact(self) -> bool:
        return self.pi_then_gamma == self.gamma_then_pi


def interchange_table(lattice: BrownianLattice, d: Driver, market: Market, grid: StrategyGrid,
                      F: TerminalClaim | None = None) -> InterchangeReport:
    """``rho^{gamma_i}_0(X^{pi_j} + F)`` for witness members ``gamma_i`` of every candidate ``pi_i``.

    Rows are members, columns policies; both orders of minimization are
    taken over the same table.
    """
    _check_driver(d)
    F = F or constant_claim(0.0)
    pis = grid.candidates()
    claims = [wealth_claim(lattice, market, pi) + F for pi in pis]
    envs = [min_representation(lattice, d, c).envelope_driver for c in claims]
    table = np.array([[solve_bsde(lattice, e, c).value for c in claims] for e in envs])
    a = float(np.min(np.min(table, axis=0)))
    b = float(np.min(np.min(table, axis=1)))
    col = int(np.argmin(np.min(table, axis=0)))
    sol = optimize_portfolio(lattice, d, market, grid, F, 0)
    return InterchangeReport(table, a, b, sol.value, float(pis[col]))
