"""Recombining binomial approximation of a one-dimensional Brownian filtration.

Layer ``k`` of the lattice holds ``k + 1`` nodes.  Node ``j`` at step ``k``
carries the Brownian value ``(2 j - k) * sqrt(dt)``; its children at step
``k + 1`` are node ``j`` (down) and node ``j + 1`` (up), each reached with
probability one half under the reference measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError, ParameterError

__all__ = [
    "TimeGrid",
    "BrownianLattice",
    "AdaptedProcess",
    "TerminalClaim",
    "build_lattice",
    "evaluate_claim",
    "identity_claim",
    "constant_claim",
    "call_claim",
    "table_claim",
]


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ParameterError(f"horizon must be positive, got {self.horizon!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ParameterError(f"steps must be a positive integer, got {self.steps!r}")

    @property
    def delta(self) -> float:
        return self.horizon / self.steps

    def time(self, step: int) -> float:
        return step * self.delta


@dataclass(frozen=True)
class BrownianLattice:
    grid: TimeGrid

    @property
    def steps(self) -> int:
        return self.grid.steps

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    @property
    def delta(self) -> float:
        return self.grid.delta

    @property
    def sqrt_delta(self) -> float:
        return float(np.sqrt(self.grid.delta))

    def node_count(self, step: int) -> int:
        self._check_step(step)
        return step + 1

    def w_value(self, step: int, node: int) -> float:
        self._check_step(step)
        if not 0 <= node <= step:
            raise ParameterError(f"node {node} not in layer {step}")
        return (2 * node - step) * self.sqrt_delta

    def w_values(self, step: int) -> np.ndarray:
        """Brownian values of every node in a layer, from the closed form."""
        self._check_step(step)
        return (2.0 * np.arange(step + 1) - step) * self.sqrt_delta

    def binomial_weights(self, step: int) -> np.ndarray:
        """Reference-measure probabilities of the nodes of a layer."""
        self._check_step(step)
        j = np.arange(step + 1)
        log_w = (math.lgamma(step + 1) - np.array([math.lgamma(i + 1) + math.lgamma(step - i + 1) for i in j])
                 - step * math.log(2.0))
        return np.exp(log_w)

    def subtree(self, step: int) -> "BrownianLattice":
        """Lattice of the remaining ``N - step`` steps (same time step)."""
        self._check_step(step)
        if step == self.steps:
            raise ParameterError("subtree of the terminal layer is empty")
        return BrownianLattice(TimeGrid(self.delta * (self.steps - step), self.steps - step))

    def _check_step(self, step):
        if not 0 <= step <= self.steps:
            raise ParameterError(f"step {step} outside 0..{self.steps}")


def build_lattice(T: float, N: int) -> BrownianLattice:
    return BrownianLattice(TimeGrid(float(T), int(N) if int(N) == N else N))


class AdaptedProcess:
    """Values indexed by ``(step, node)``; one numpy array per layer.

    Layers that were never filled hold NaN.  Instances are treated as
    immutable once handed out: ``layer`` returns read-only views.
    """

    def __init__(self, layers: Sequence[np.ndarray]):
        arrays = []
        for k, values in enumerate(layers):
            arr = np.array(values, dtype=float)
            if arr.shape != (k + 1,):
                raise ParameterError(f"layer {k} must have {k + 1} values, got shape {arr.shape}")
            arr.setflags(write=False)
            arrays.append(arr)
        self._layers = tuple(arrays)

    @classmethod
    def empty(cls, steps: int) -> "AdaptedProcess":
        return cls([np.full(k + 1, np.nan) for k in range(steps + 1)])

    @classmethod
    def constant(cls, steps: int, value: float) -> "AdaptedProcess":
        return cls([np.full(k + 1, float(value)) for k in range(steps + 1)])

    @classmethod
    def from_function(cls, lattice: BrownianLattice, fn: Callable[[int, np.ndarray], np.ndarray]):
        """Build from ``fn(step, node_indices) -> values``."""
        return cls([np.broadcast_to(fn(k, np.arange(k + 1)), (k + 1,)) for k in range(lattice.steps + 1)])

    @property
    def steps(self) -> int:
        return len(self._layers) - 1

    def layer(self, step: int) -> np.ndarray:
        return self._layers[step]

    def __getitem__(self, key):
        step, node = key
        return float(self._layers[step][node])

    def __len__(self):
        return len(self._layers)

    def __iter__(self):
        return iter(self._layers)

    def max_abs_diff(self, other: "AdaptedProcess", steps=None) -> float:
        steps = range(min(self.steps, other.steps) + 1) if steps is None else steps
        worst = 0.0
        for k in steps:
            a, b = self._layers[k], other.layer(k)
            both_inf = np.isinf(a) & np.isinf(b) & (np.sign(a) == np.sign(b))
            diff = np.where(both_inf, 0.0, np.abs(a - b))
            if diff.size:
                worst = max(worst, float(np.nanmax(diff)) if not np.all(np.isnan(diff)) else 0.0)
        return worst

    def __repr__(self):
        return f"AdaptedProcess(steps={self.steps})"


@dataclass(frozen=True)
class TerminalClaim:
    """A payoff ``X = payoff(W_T)`` on the terminal layer.

    Exactly one source of values is used: ``nodes`` (a map from a lattice to
    terminal values, used for derived claims), ``table`` (explicit per-node
    values, valid only on a lattice with ``len(table) - 1`` steps) or
    ``payoff`` (a vectorized function of the terminal Brownian value).
    """

    payoff: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"
    table: tuple | None = None
    nodes: Callable[[BrownianLattice], np.ndarray] | None = field(default=None, compare=False)

    def values(self, lattice: BrownianLattice) -> np.ndarray:
        N = lattice.steps
        if self.nodes is not None:
            vals = np.asarray(self.nodes(lattice), dtype=float)
        elif self.table is not None:
            if len(self.table) != N + 1:
                raise ParameterError(
                    f"claim table has {len(self.table)} entries, lattice needs {N + 1}"
                )
            vals = np.asarray(self.table, dtype=float)
        elif self.payoff is not None:
            vals = np.asarray(self.payoff(lattice.w_values(N)), dtype=float)
        else:
            raise ParameterError("claim has no payoff")
        vals = np.broadcast_to(vals, (N + 1,)).astype(float)
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            raise EvaluationError(
                f"payoff {self.name!r} is not finite at terminal node {int(bad[0])}",
                step=N,
                node=int(bad[0]),
            )
        return vals

    def bound(self, lattice: BrownianLattice) -> float:
        """Sup of ``|X|`` over the reachable terminal nodes."""
        return float(np.max(np.abs(self.values(lattice))))

    def scaled(self, factor: float) -> "TerminalClaim":
        return TerminalClaim(name=f"{factor!r}*{self.name}",
                             nodes=lambda lat: factor * self.values(lat))

    def shifted(self, c: float) -> "TerminalClaim":
        return TerminalClaim(name=f"{self.name}+{c!r}", nodes=lambda lat: self.values(lat) + c)

    def __add__(self, other: "TerminalClaim") -> "TerminalClaim":
        if not isinstance(other, TerminalClaim):
            return NotImplemented
        return TerminalClaim(name=f"{self.name}+{other.name}",
                             nodes=lambda lat: self.values(lat) + other.values(lat))

    def __sub__(self, other: "TerminalClaim") -> "TerminalClaim":
        if not isinstance(other, TerminalClaim):
            return NotImplemented
        return TerminalClaim(name=f"{self.name}-{other.name}",
                             nodes=lambda lat: self.values(lat) - other.values(lat))


def identity_claim(scale: float = 1.0) -> TerminalClaim:
    name = "W_T" if scale == 1.0 else f"{scale!r}*W_T"
    return TerminalClaim(lambda w: scale * np.asarray(w, float), name)


def constant_claim(c: float) -> TerminalClaim:
    return TerminalClaim(lambda w: np.full(np.shape(w), float(c)), f"const({c!r})")


def call_claim(strike: float = 0.0, scale: float = 1.0) -> TerminalClaim:
    """``scale * max(W_T - strike, 0)``."""
    return TerminalClaim(lambda w: scale * np.maximum(np.asarray(w, float) - strike, 0.0),
                         f"call({strike!r})")


def table_claim(values: Sequence[float], name: str = "table") -> TerminalClaim:
    return TerminalClaim(table=tuple(float(v) for v in values), name=name)


def evaluate_claim(lattice: BrownianLattice, claim: TerminalClaim) -> AdaptedProcess:
    """Adapted process whose terminal layer holds the claim; other layers are NaN."""
    layers = [np.full(k + 1, np.nan) for k in range(lattice.steps)]
    layers.append(claim.values(lattice))
    return AdaptedProcess(layers)
