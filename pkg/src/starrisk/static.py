"""Star-shaped functionals on finite scenario spaces.

Segment majorants ``f_Z``, monotone majorants, the min representation over
segment majorants, their closed-form conjugates and the correspondence
between normalized star-shaped risk measures and star-shaped families of
acceptance sets.  The duality pairing is the counting inner product unless
a probability-weighted pairing is requested.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ParameterError

__all__ = [
    "FiniteSpace",
    "StaticFunctional",
    "AcceptanceFamily",
    "RoundtripReport",
    "max_functional",
    "mean_functional",
    "mixed_functional",
    "upper_quantile_functional",
    "segment_alpha",
    "segment_majorant",
    "monotone_majorant",
    "min_representation_static",
    "cash_additive_representation",
    "conjugate_segment",
    "conjugate_segment_bruteforce",
    "pairing",
    "acceptance_family",
    "acceptance_roundtrip",
    "pointwise_min_functional",
    "is_star_shaped_on",
]

SEGMENT_RTOL = 1e-12


@dataclass(frozen=True)
class FiniteSpace:
    """``n_atoms`` scenarios with strictly positive probabilities summing to one."""

    n_atoms: int
    probabilities: tuple = None

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ParameterError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        p = (np.full(self.n_atoms, 1.0 / self.n_atoms) if self.probabilities is None
             else np.asarray(self.probabilities, float))
        if p.shape != (self.n_atoms,):
            raise ParameterError(f"need {self.n_atoms} probabilities, got {p.size}")
        if np.any(~(p > 0)) or abs(p.sum() - 1.0) > 1e-12:
            raise ParameterError("probabilities must be strictly positive and sum to 1")
        object.__setattr__(self, "probabilities", tuple(float(v) for v in p))

    def variable(self, values) -> np.ndarray:
        x = np.asarray(values, float)
        if x.shape != (self.n_atoms,):
            raise ParameterError(f"random variable needs {self.n_atoms} values, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ParameterError("random variable entries must be finite")
        return x

    def sample(self, rng: np.random.Generator, size: int, scale: float = 2.0) -> np.ndarray:
        return rng.uniform(-scale, scale, size=(size, self.n_atoms))


@dataclass(frozen=True)
class StaticFunctional:
    """Extended-real functional ``f`` on random variables with declared flags."""

    f: Callable[[np.ndarray], float]
    flags: frozenset = field(default_factory=frozenset)
    name: str = "f"

    def __call__(self, x) -> float:
        return float(self.f(np.asarray(x, float)))

    def has(self, flag: str) -> bool:
        return flag in self.flags


def max_functional() -> StaticFunctional:
    return StaticFunctional(lambda x: float(np.max(x)),
                            frozenset({"convex", "star_shaped", "monotone", "cash_additive", "normalized"}), "max")


def mean_functional(space: FiniteSpace) -> StaticFunctional:
    p = np.asarray(space.probabilities)
    return StaticFunctional(lambda x: float(p @ x),
                            frozenset({"convex", "star_shaped", "monotone", "cash_additive", "normalized"}), "mean")


def mixed_functional(space: FiniteSpace, w: float = 0.7) -> StaticFunctional:
    """``w * max + (1 - w) * mean``."""
    p = np.asarray(space.probabilities)
    return StaticFunctional(lambda x: float(w * np.max(x) + (1.0 - w) * (p @ x)),
                            frozenset({"convex", "star_shaped", "monotone", "cash_additive", "normalized"}),
                            f"{w:g}*max+{1 - w:g}*mean")


def upper_quantile_functional(space: FiniteSpace, level: float = 0.5) -> StaticFunctional:
    """Upper ``level``-quantile of the loss: positively homogeneous, monotone, not convex."""
    p = np.asarray(space.probabilities)

    def f(x):
        order = np.argsort(x, kind="stable")
        cum = np.cumsum(p[order])
        idx = int(np.searchsorted(cum, level, side="right"))
        return float(x[order[min(idx, x.size - 1)]])

    return StaticFunctional(f, frozenset({"star_shaped", "monotone", "cash_additive", "normalized"}),
                            f"quantile({level:g})")


def segment_alpha(Z, X, rtol: float = SEGMENT_RTOL):
    """``alpha`` in ``[0, 1]`` with ``X = alpha Z``, or ``None`` if ``X`` is off the segment."""
    Z = np.asarray(Z, float)
    X = np.asarray(X, float)
    scale = float(np.max(np.abs(Z))) if Z.size else 0.0
    if scale == 0.0:
        return 0.0 if not np.any(X) else None
    with np.errstate(over="ignore", invalid="ignore"):
        Zs, Xs = Z / scale, X / scale
        alpha = float(Zs @ Xs / (Zs @ Zs))
    if not math.isfinite(alpha):
        return None
    alpha = min(max(alpha, 0.0), 1.0)
    # componentwise relative: absorbs rounding of alpha Z without accepting tiny off-segment points
    if np.any(np.abs(X - alpha * Z) > rtol * (np.abs(X) + np.abs(alpha * Z))):
        return None
    return alpha


def segment_majorant(f: StaticFunctional, Z) -> StaticFunctional:
    """``f_Z(X) = alpha f(Z) + (1 - alpha) f(0)`` on ``X = alpha Z``, ``+inf`` elsewhere."""
    Z = np.asarray(Z, float)
    fz, f0 = f(Z), f(np.zeros_like(Z))
    if not (math.isfinite(fz) and math.isfinite(f0)):
        raise ParameterError("segment majorant needs finite f(0) and f(Z)")

    def fZ(x):
        a = segment_alpha(Z, x)
        return math.inf if a is None else a * fz + (1.0 - a) * f0

    return StaticFunctional(fZ, frozenset({"convex", "star_shaped"}), f"{f.name}_Z")


def monotone_majorant(f: StaticFunctional, Z) -> StaticFunctional:
    """``min { alpha f(Z) + (1 - alpha) f(0) : alpha in [0, 1], alpha Z >= X }``."""
    Z = np.asarray(Z, float)
    fz, f0 = f(Z), f(np.zeros_like(Z))
    if not (math.isfinite(fz) and math.isfinite(f0)):
        raise ParameterError("monotone majorant needs finite f(0) and f(Z)")

    def interval(x):
        lo, hi = 0.0, 1.0
        for zi, xi in zip(Z, np.asarray(x, float)):
            if zi > 0:
                lo = max(lo, xi / zi)
            elif zi < 0:
                hi = min(hi, xi / zi)
            elif xi > 0:
                return None
        return (lo, hi) if lo <= hi else None

    def fZ(x):
        with np.errstate(over="ignore"):
            iv = interval(np.asarray(x, float))
        if iv is None:
            return math.inf
        a = iv[0] if fz >= f0 else iv[1]
        return a * fz + (1.0 - a) * f0

    return StaticFunctional(fZ, frozenset({"convex", "star_shaped", "monotone"}), f"{f.name}~_Z")


def min_representation_static(f: StaticFunctional, X, candidates: Sequence, monotone: bool = False):
    """``min_Z f_Z(X)`` over ``candidates``; returns ``(value, argmin)`` with the first minimizer."""
    candidates = [np.asarray(c, float) for c in candidates]
    if not candidates:
        raise ParameterError("candidate set is empty")
    build = monotone_majorant if monotone else segment_majorant
    vals = [build(f, Z)(X) for Z in candidates]
    i = int(np.argmin(vals))
    return vals[i], candidates[i]


def cash_additive_representation(rho: StaticFunctional, X, candidates: Sequence, c_grid: Iterable[float] | None = None):
    """``min_Z rho_Z(X)`` with ``rho_Z(X) = alpha rho(Z) + c`` on ``X = alpha Z + c``.

    For each candidate the cash part ``c`` is found as the constant that puts
    ``X - c`` on the segment ``[0, Z]``: for non-constant ``Z`` it is
    determined by least squares, for constant ``Z`` every split is tried on
    ``c_grid``.
    """
    X = np.asarray(X, float)
    best = math.inf
    for Z in candidates:
        Z = np.asarray(Z, float)
        ones = np.ones_like(Z)
        zc = Z - Z.mean()
        splits = []
        if np.max(np.abs(zc)) > 0:
            a = float(zc @ (X - X.mean()) / (zc @ zc))
            splits.append((a, float(np.mean(X - a * Z))))
        else:
            for c in (c_grid if c_grid is not None else [float(X.mean())]):
                splits.append((None, float(c)))
        for a, c in splits:
            alpha = segment_alpha(Z, X - c * ones)
            if alpha is None:
                continue
            best = min(best, alpha * rho(Z) + (1.0 - alpha) * rho(np.zeros_like(Z)) + c)
    return best


def pairing(q, x, space: FiniteSpace | None = None, weighted: bool = False) -> float:
    q = np.asarray(q, float)
    x = np.asarray(x, float)
    if weighted:
        if space is None:
            raise ParameterError("weighted pairing needs a space")
        return float(np.sum(np.asarray(space.probabilities) * q * x))
    return float(q @ x)


def conjugate_segment(f: StaticFunctional, Z, q, space: FiniteSpace | None = None, weighted: bool = False) -> float:
    """``f_Z^*(q) = -f(0) + max(0, <q, Z> - f(Z) + f(0))``."""
    Z = np.asarray(Z, float)
    fz, f0 = f(Z), f(np.zeros_like(Z))
    return -f0 + max(0.0, pairing(q, Z, space, weighted) - fz + f0)


def conjugate_segment_bruteforce(f: StaticFunctional, Z, q, points: int = 1001,
                                 space: FiniteSpace | None = None, weighted: bool = False) -> float:
    """``max_alpha <q, alpha Z> - f_Z(alpha Z)`` on a uniform ``alpha`` grid over ``[0, 1]``."""
    Z = np.asarray(Z, float)
    fz, f0 = f(Z), f(np.zeros_like(Z))
    alphas = np.linspace(0.0, 1.0, points)
    qz = pairing(q, Z, space, weighted)
    return float(np.max(alphas * qz - (alphas * fz + (1.0 - alphas) * f0)))


@dataclass(frozen=True)
class AcceptanceFamily:
    """Extensional family ``m -> A^m`` given by a membership predicate."""

    membership: Callable[[float, np.ndarray], bool]

    def contains(self, m: float, x) -> bool:
        return bool(self.membership(float(m), np.asarray(x, float)))

    def levels(self, m_grid, x) -> np.ndarray:
        """Membership of ``x`` at every level of ``m_grid``."""
        m_grid = np.asarray(m_grid, float)
        x = np.asarray(x, float)
        try:
            out = np.asarray(self.membership(m_grid, x), bool)
        except (TypeError, ValueError):
            out = None
        if out is None or out.shape != m_grid.shape:
            out = np.array([self.contains(m, x) for m in m_grid], bool)
        return out

    def risk(self, x, m_grid: np.ndarray) -> float:
        """``inf { m in m_grid : x in A^m }``; ``+inf`` if no grid level accepts ``x``."""
        members = self.levels(m_grid, x)
        if not members.any():
            return math.inf
        return float(np.asarray(m_grid, float)[int(np.argmax(members))])


def acceptance_family(rho: StaticFunctional) -> AcceptanceFamily:
    """``A^m = { X : rho(X) <= m }``."""
    return AcceptanceFamily(lambda m, x: rho(x) <= m)


def pointwise_min_functional(family: Sequence[StaticFunctional], name: str = "min") -> StaticFunctional:
    family = list(family)
    if not family:
        raise ParameterError("empty family")
    return StaticFunctional(lambda x: min(g(x) for g in family), frozenset(), name)


def is_star_shaped_on(f: StaticFunctional, samples, lambdas=(0.25, 0.5, 0.75), tol: float = 1e-12) -> bool:
    """``f(lam X) <= lam f(X) + (1 - lam) f(0)`` on every sample."""
    for x in samples:
        x = np.asarray(x, float)
        fx, f0 = f(x), f(np.zeros_like(x))
        for lam in lambdas:
            if f(lam * x) > lam * fx + (1.0 - lam) * f0 + tol * (1.0 + abs(fx)):
                return False
    return True


@dataclass(frozen=True)
class RoundtripReport:
    resolution: float
    max_error: float
    increasing: bool
    monotone: bool
    star_shaped: bool
    right_continuous: bool
    normalization: float
    recovered: tuple

    @property
    def passed(self) -> bool:
        return (self.max_error <= self.resolution + 1e-12 and self.increasing and self.monotone
                and self.star_shaped and self.right_continuous and abs(self.normalization) <= self.resolution)


def acceptance_roundtrip(rho: StaticFunctional, m_grid, samples, lambdas=(0.5,)) -> RoundtripReport:
    """Recover ``rho`` from its acceptance family on ``m_grid`` and check the family axioms.

    Raises
    ------
    ParameterError
        If the grid does not cover ``[min rho - 1, max rho + 1]`` over the samples.
    """
    m_grid = np.asarray(m_grid, float)
    samples = [np.asarray(s, float) for s in samples]
    if m_grid.size < 2 or np.any(np.diff(m_grid) <= 0):
        raise ParameterError("m_grid must be strictly increasing with at least two points")
    vals = [rho(x) for x in samples]
    if m_grid[0] > min(vals) - 1.0 or m_grid[-1] < max(vals) + 1.0:
        raise ParameterError("m_grid does not cover the range of rho over the samples")
    res = float(np.max(np.diff(m_grid)))
    fam = acceptance_family(rho)
    recovered = tuple(fam.risk(x, m_grid) for x in samples)
    err = max(abs(r - v) for r, v in zip(recovered, vals))
    increasing = monotone = star = right = True
    for x, v in zip(samples, vals):
        members = fam.levels(m_grid, x)
        # once accepted, accepted at every higher level
        first = int(np.argmax(members)) if members.any() else m_grid.size
        increasing &= bool(np.all(members[first:]))
        # right-continuity at grid level: the first accepting level is within one step of rho
        right &= bool(first == m_grid.size or m_grid[first] - v <= res + 1e-12)
        for m in m_grid[first: first + 1]:
            # monotone: a smaller position stays acceptable
            monotone &= fam.contains(m, x - 1.0)
            for lam in lambdas:
                star &= fam.contains(lam * m, lam * x)
    zero = np.zeros_like(samples[0])
    normalization = fam.risk(zero, m_grid)
    return RoundtripReport(res, err, increasing, monotone, star, right, normalization, recovered)
