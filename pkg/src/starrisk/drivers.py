"""BSDE drivers, property checkers and the driver transformations.

A driver is a vectorized map ``(step, node, y, z) -> g`` with values in
``R ∪ {+inf}``.  ``+inf`` is the IEEE float infinity; it only ever encodes a
hard constraint on ``z`` (or, for segment drivers, on ``(y, z)``).

Lipschitz constants are taken with respect to the l1 norm on ``(y, z)``,
so ``|g(y1, z1) - g(y2, z2)| <= k (|y1 - y2| + |z1 - z2|)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import NumericalError, ParameterError, PreconditionError
from .lattice import AdaptedProcess, BrownianLattice

__all__ = [
    "FLAGS",
    "Driver",
    "ControlPath",
    "SegmentDriver",
    "EnvelopeDriver",
    "RelaxedDriver",
    "PointwiseMinDriver",
    "PropertyReport",
    "builtin_driver",
    "driver_from_spec",
    "BUILTIN_DRIVERS",
    "check_driver_property",
    "segment_driver",
    "ph_envelope",
    "monotone_relaxation",
    "pointwise_min_driver",
]

FLAGS = frozenset(
    {
        "convex",
        "star_shaped",
        "pos_hom",
        "decreasing_y",
        "y_independent",
        "normalized_at_origin",
        "nonnegative",
        "lsc",
    }
)

_ALL_FLAGS = FLAGS


class Driver:
    """Generator ``g(t, y, z)`` of a BSDE on the lattice.

    Parameters
    ----------
    func : callable
        ``func(step, node, y, z)`` returning an array broadcast from the
        inputs.  ``node`` is an integer or an integer array aligned with
        ``y`` and ``z``.
    lipschitz_k : float
        Declared l1 Lipschitz constant in ``(y, z)``; ``inf`` for drivers
        that are only lower semicontinuous.
    flags : iterable of str
        Declared properties, a subset of :data:`FLAGS`.
    name : str
        Identifier used in reports.
    params : mapping, optional
        Parameters the driver was built from.
    z_radius : float, optional
        ``g`` is finite exactly on ``|z| <= z_radius``.
    z_breakpoints : sequence of float, optional
        Values of ``z`` where ``g`` has kinks; used to seed searches.
    lower_bound : float, optional
        A constant lower bound of ``g``.
    conjugate : callable, optional
        Closed-form Fenchel conjugate ``G(step, node, beta, q)``.
    subgradient : callable, optional
        Exact ``(g_y, g_z)`` selection of the (sub)gradient.
    """

    def __init__(
        self,
        func: Callable,
        lipschitz_k: float,
        flags: Iterable[str] = (),
        name: str = "custom",
        params: Mapping | None = None,
        z_radius: float = math.inf,
        z_breakpoints: Sequence[float] = (),
        lower_bound: float = -math.inf,
        conjugate: Callable | None = None,
        subgradient: Callable | None = None,
    ):
        flags = frozenset(flags)
        unknown = flags - FLAGS
        if unknown:
            raise ParameterError(f"unknown driver flags {sorted(unknown)}")
        if not lipschitz_k >= 0:
            raise ParameterError(f"lipschitz_k must be >= 0, got {lipschitz_k!r}")
        self.func = func
        self.lipschitz_k = float(lipschitz_k)
        self.flags = flags
        self.name = name
        self.params = dict(params or {})
        self.z_radius = float(z_radius)
        self.z_breakpoints = tuple(float(b) for b in z_breakpoints)
        self.lower_bound = float(lower_bound)
        self.conjugate = conjugate
        self.subgradient = subgradient

    def evaluate(self, step, node, y, z) -> np.ndarray:
        y, z = np.broadcast_arrays(np.asarray(y, float), np.asarray(z, float))
        out = np.asarray(self.func(step, node, y, z), dtype=float)
        return np.broadcast_to(out, y.shape).copy() if out.shape != y.shape else out

    def __call__(self, y, z, step: int = 0, node=0):
        out = self.evaluate(step, node, y, z)
        return float(out) if out.ndim == 0 else out

    def has(self, flag: str) -> bool:
        return flag in self.flags

    def z_interval(self, step, node):
        """Bounds of the effective ``z`` domain at a node."""
        return -self.z_radius, self.z_radius

    def smallest_y(self, step, node, z, target, delta, tol=1e-12, max_iter=200):
        """Smallest ``y`` with ``y - g(y, z) * delta >= target``.

        Explicit for ``y``-independent drivers; otherwise the fixed point of
        ``y -> target + g(y, z) delta``, which is the unique root when
        ``k delta < 1``.
        """
        target = np.asarray(target, float)
        z = np.asarray(z, float)
        if self.has("y_independent"):
            return target + self.evaluate(step, node, 0.0, z) * delta
        y = target.copy()
        for _ in range(max_iter):
            with np.errstate(invalid="ignore"):
                y_new = target + self.evaluate(step, node, y, z) * delta
            finite = np.isfinite(y_new)
            diff = np.where(finite, np.abs(y_new - y), 0.0)
            y = y_new
            if diff.size == 0 or np.max(diff) <= tol * (1.0 + np.max(np.abs(np.where(finite, y, 0.0)))):
                return y
        raise NumericalError("supersolution fixed point did not converge", step=step)

    def min_over_z(self, step, nodes, up, down, delta):
        """Exact node-wise minimal supersolution step, if the driver knows it.

        Returns ``None`` when the generic search has to be used.
        """
        return None

    def __repr__(self):
        return f"Driver({self.name!r}, k={self.lipschitz_k:g}, flags={sorted(self.flags)})"


@dataclass(frozen=True)
class ControlPath:
    """Anchor process ``gamma = (alpha, delta)`` indexed by lattice node.

    ``delta`` may stop one layer short of ``alpha`` (a ``Z`` process is
    not defined on the terminal layer); missing layers read as zero.
    """

    alpha: AdaptedProcess
    delta: AdaptedProcess

    def alpha_at(self, step, node):
        if step > self.alpha.steps:
            return np.zeros_like(np.asarray(node, float))
        return self.alpha.layer(step)[node]

    def delta_at(self, step, node):
        if step > self.delta.steps:
            return np.zeros_like(np.asarray(node, float))
        return self.delta.layer(step)[node]

    @classmethod
    def constant(cls, steps: int, alpha: float, delta: float) -> "ControlPath":
        return cls(AdaptedProcess.constant(steps, alpha), AdaptedProcess.constant(steps, delta))

    @classmethod
    def random(cls, lattice: BrownianLattice, rng: np.random.Generator, box=(-3.0, 3.0)) -> "ControlPath":
        """Node-wise uniform anchors in ``box`` (one box for both coordinates or a pair of boxes)."""
        if np.ndim(box[0]) == 0:
            box = (box, box)
        (a_lo, a_hi), (d_lo, d_hi) = box
        N = lattice.steps
        alpha = [rng.uniform(a_lo, a_hi, size=k + 1) for k in range(N + 1)]
        delta = [rng.uniform(d_lo, d_hi, size=k + 1) for k in range(N + 1)]
        return cls(AdaptedProcess(alpha), AdaptedProcess(delta))


class _Anchor:
    def __init__(self, anchor):
        if isinstance(anchor, ControlPath):
            self.path = anchor
            self.const = None
        else:
            b, m = anchor
            self.path = None
            self.const = (float(b), float(m))

    def at(self, step, node):
        if self.const is not None:
            return self.const
        return self.path.alpha_at(step, node), self.path.delta_at(step, node)


def _flags_from(base: Driver, keep: Iterable[str], add: Iterable[str] = ()) -> frozenset:
    return frozenset(f for f in keep if base.has(f)) | frozenset(add)


# ---------------------------------------------------------------------------
# transformations


class SegmentDriver(Driver):
    """``g_{beta,mu}``: the base driver restricted to the segment ``[0, (beta, mu)]``.

    ``g_{beta,mu}(y, z) = m g(beta, mu) + (1 - m) g(0, 0)`` when
    ``(y, z) = m (beta, mu)`` for some ``m`` in ``[0, 1]``, ``+inf`` off the
    segment.  Segment membership uses a relative tolerance of ``1e-12``.
    """

    def __init__(self, base: Driver, anchor, rtol: float = 1e-12):
        self.base = base
        self.anchor = _Anchor(anchor)
        self.rtol = rtol
        flags = _flags_from(base, ("normalized_at_origin", "nonnegative"), ("convex", "star_shaped", "lsc"))
        super().__init__(self._eval, math.inf, flags, name=f"segment[{base.name}]")

    def anchor_values(self, step, node):
        b, m = self.anchor.at(step, node)
        b = np.asarray(b, float)
        m = np.asarray(m, float)
        gb = self.base.evaluate(step, node, b, m)
        g0 = self.base.evaluate(step, node, 0.0, 0.0)
        return b, m, gb, g0

    def _eval(self, step, node, y, z):
        b, m, gb, g0 = self.anchor_values(step, node)
        norm2 = b * b + m * m
        scale = np.maximum(np.abs(b), np.abs(m))
        with np.errstate(invalid="ignore", divide="ignore"):
            mm = np.where(norm2 > 0, (y * b + z * m) / np.where(norm2 > 0, norm2, 1.0), 0.0)
        tol = self.rtol * np.maximum(scale, 1.0)
        on_line = (np.abs(y - mm * b) <= tol) & (np.abs(z - mm * m) <= tol)
        in_range = (mm >= -self.rtol) & (mm <= 1.0 + self.rtol)
        mm = np.clip(mm, 0.0, 1.0)
        val = mm * gb + (1.0 - mm) * g0
        return np.where(on_line & in_range, val, math.inf)

    def z_interval(self, step, node):
        _, m, _, _ = self.anchor_values(step, node)
        return np.minimum(0.0, m), np.maximum(0.0, m)

    def min_over_z(self, step, nodes, up, down, delta):
        # Points of the segment are m (beta, mu); both supersolution
        # constraints are linear in m, so the feasible m form an interval
        # and the smallest y = m beta sits at one of its endpoints.
        b, mu, gb, g0 = self.anchor_values(step, nodes)
        b, mu, gb, g0 = np.broadcast_arrays(b, mu, gb, g0)
        sq = math.sqrt(delta)
        c = gb - g0
        lo = np.zeros(up.shape)
        hi = np.ones(up.shape)
        slack = 1e-13 * (1.0 + np.abs(b) + np.abs(mu) + np.abs(up) + np.abs(down) + np.abs(gb) + np.abs(g0))
        for coef, rhs in ((b - c * delta + mu * sq, up + g0 * delta), (b - c * delta - mu * sq, down + g0 * delta)):
            with np.errstate(divide="ignore", invalid="ignore"):
                rhs = rhs - np.where(np.isfinite(slack), slack, 0.0)
                bound = rhs / coef
            pos = coef > 0
            neg = coef < 0
            zero = ~(pos | neg)
            lo = np.where(pos, np.maximum(lo, bound), lo)
            hi = np.where(neg, np.minimum(hi, bound), hi)
            hi = np.where(zero & (rhs > 0), -np.inf, hi)
        # the anchor itself is feasible in exact arithmetic; absorb rounding
        feasible = lo <= hi + 1e-10
        m_opt = np.clip(np.where(b >= 0, lo, hi), 0.0, 1.0)
        y = np.where(feasible, m_opt * b, math.inf)
        z = np.where(feasible, m_opt * mu, 0.0)
        return y, z


def _ratio(num, den, nonzero):
    # overflow for tiny anchors gives +-inf, which the caller clips into the admissible range
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        r = num / np.where(nonzero, den, 1.0)
    return np.where(nonzero, r, 0.0)


class EnvelopeDriver(Driver):
    """Pasch-Hausdorff envelope of a segment driver.

    ``g^{beta,mu}(y, z) = inf_m k(|y - m beta| + |z - m mu|) + m g(beta, mu) + (1 - m) g(0, 0)``
    with ``m`` in ``[0, 1]`` (``mode='star'``) or ``m >= 0`` (``mode='poshom'``,
    anchor rescaled to the unit l1 sphere).  For ``y``-independent bases the
    ``y`` coordinate is dropped, which keeps the envelope ``y``-independent.
    The objective is convex piecewise linear in ``m``, so it is minimized
    exactly over its kinks and the ends of the admissible range.
    """

    def __init__(self, base: Driver, anchor, k: float | None = None, mode: str = "star"):
        if mode not in ("star", "poshom"):
            raise ParameterError(f"envelope mode must be 'star' or 'poshom', got {mode!r}")
        k = base.lipschitz_k if k is None else float(k)
        if not math.isfinite(base.lipschitz_k):
            raise ParameterError(f"envelope needs a Lipschitz base driver, {base.name!r} has k=inf")
        if not k >= base.lipschitz_k:
            raise ParameterError(
                f"envelope constant k={k!r} is below the driver's Lipschitz constant {base.lipschitz_k!r}"
            )
        if mode == "poshom" and not base.has("pos_hom"):
            raise PreconditionError("poshom envelope needs a positively homogeneous driver")
        self.base = base
        self.anchor = _Anchor(anchor)
        self.k = k
        self.mode = mode
        self.z_only = base.has("y_independent")
        self._cache = {}
        add = {"convex", "star_shaped", "lsc"}
        if mode == "poshom":
            add.add("pos_hom")
        if self.z_only:
            add.add("y_independent")
            add.add("decreasing_y")
        flags = _flags_from(base, ("normalized_at_origin", "nonnegative"), add)
        super().__init__(self._eval, k, flags, name=f"envelope[{base.name}]")

    def anchor_values(self, step, node):
        """Anchor ``(beta, mu)`` after rescaling, with ``g`` at the anchor and at the origin."""
        b, m, gb, g0, _, _ = self._anchor_data(step, node)
        return b, m, gb, g0

    def _anchor_data(self, step, node):
        if self.anchor.path is not None:
            layer = self._cache.get(step)
            if layer is None:
                layer = self._cache[step] = self._compute_anchor(step, np.arange(step + 1))
            if isinstance(node, np.ndarray) and node.shape == (step + 1,) and node[0] == 0 and node[-1] == step:
                return layer
            return tuple(v[node] for v in layer)
        return self._compute_anchor(step, node)

    def _compute_anchor(self, step, node):
        b, m = self.anchor.at(step, node)
        b = np.asarray(b, float)
        m = np.asarray(m, float)
        if self.z_only:
            b = np.zeros_like(b)
        if self.mode == "poshom":
            s = np.abs(b) + np.abs(m)
            s = np.where(s > 0, s, 1.0)
            b, m = b / s, m / s
        gb = self.base.evaluate(step, node, b, m)
        g0 = self.base.evaluate(step, node, np.zeros_like(b), np.zeros_like(b))
        return b, m, gb, g0, b != 0, m != 0

    def _eval(self, step, node, y, z):
        b, mu, gb, g0, nb, nm = self._anchor_data(step, node)
        k = self.k
        az = np.abs(z)
        if self.z_only:
            best = k * az + g0
            cands = [_ratio(z, mu, nm)]
            yterm = lambda m: 0.0  # noqa: E731
        else:
            best = k * (np.abs(y) + az) + g0
            cands = [_ratio(y, b, nb), _ratio(z, mu, nm)]
            yterm = lambda m: np.abs(y - m * b)  # noqa: E731
        star = self.mode == "star"
        for m in cands:
            m = np.maximum(m, 0.0)
            if star:
                m = np.minimum(m, 1.0)
            val = k * (yterm(m) + np.abs(z - m * mu)) + m * gb + (1.0 - m) * g0
            best = np.minimum(best, val)
        if star:
            val = k * (yterm(1.0) + np.abs(z - mu)) + gb
            best = np.minimum(best, val)
        return best


class RelaxedDriver(Driver):
    """``g~(y, z) = inf_{ybar <= y} g(ybar, z)`` for a convex driver.

    The minimizer ``y*`` of the convex map ``ybar -> g(ybar, z)`` is located
    by golden-section search on ``[-bound, bound]``; then ``g~ = g(min(y, y*), z)``.
    """

    _INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

    def __init__(self, base: Driver, bound: float = 1e4, tol: float = 1e-10):
        if not base.has("convex"):
            raise PreconditionError(f"monotone relaxation needs a convex driver, {base.name!r} is not flagged convex")
        self.base = base
        self.bound = float(bound)
        self.tol = float(tol)
        keep = ("convex", "star_shaped", "lsc", "pos_hom", "nonnegative", "y_independent")
        flags = _flags_from(base, keep, ("decreasing_y",))
        if base.has("normalized_at_origin") and (base.has("nonnegative") or base.has("decreasing_y")):
            flags |= {"normalized_at_origin"}
        super().__init__(
            self._eval,
            base.lipschitz_k,
            flags,
            name=f"relaxed[{base.name}]",
            z_radius=base.z_radius,
            z_breakpoints=base.z_breakpoints,
        )

    def _eval(self, step, node, y, z):
        y, z = np.broadcast_arrays(y, z)
        if self.base.has("decreasing_y"):
            return self.base.evaluate(step, node, y, z)
        ystar = self.minimizer(step, node, z)
        return self.base.evaluate(step, node, np.minimum(y, ystar), z)

    def minimizer(self, step, node, z):
        """Left end of the final golden-section bracket around ``argmin_y g(y, z)``.

        Returns ``+inf`` where ``g`` is still decreasing at ``y = bound``.
        """
        g = self.base
        z = np.asarray(z, float)
        a = np.full(z.shape, -self.bound)
        b = np.full(z.shape, self.bound)
        while np.max(b - a) > self.tol:
            c = b - self._INVPHI * (b - a)
            d = a + self._INVPHI * (b - a)
            left = g.evaluate(step, node, c, z) <= g.evaluate(step, node, d, z)
            b = np.where(left, d, b)
            a = np.where(left, a, c)
        near_low = a <= -self.bound + 10 * self.tol
        if np.any(near_low):
            far = g.evaluate(step, node, np.full(z.shape, -2.0 * self.bound), z)
            edge = g.evaluate(step, node, np.full(z.shape, -self.bound), z)
            if np.any(near_low & (far < edge)):
                raise NumericalError(
                    f"driver {g.name!r} decreases without bound as y -> -inf; relaxation is -inf",
                    step=step,
                )
        return np.where(b >= self.bound - 10 * self.tol, math.inf, a)


class PointwiseMinDriver(Driver):
    """Node-wise minimum of a finite family of drivers."""

    def __init__(self, family: Sequence[Driver]):
        self.family = tuple(family)
        k = max(d.lipschitz_k for d in self.family)
        common = ("normalized_at_origin", "nonnegative", "y_independent", "decreasing_y", "pos_hom", "lsc")
        flags = {f for f in common if all(d.has(f) for d in self.family)}
        if all(d.has("star_shaped") or d.has("convex") for d in self.family) and "normalized_at_origin" in flags:
            flags.add("star_shaped")
        super().__init__(
            self._eval,
            k,
            flags,
            name="min[" + ",".join(d.name for d in self.family) + "]",
            z_radius=max(d.z_radius for d in self.family),
            z_breakpoints=sorted({b for d in self.family for b in d.z_breakpoints}),
            lower_bound=min(d.lower_bound for d in self.family),
        )

    def _eval(self, step, node, y, z):
        out = None
        for d in self.family:
            v = d.evaluate(step, node, y, z)
            out = v if out is None else np.minimum(out, v)
        return out


def segment_driver(d: Driver, beta, mu=None) -> SegmentDriver:
    """Segment driver ``g_{beta,mu}``; ``beta`` may be a :class:`ControlPath`."""
    anchor = beta if isinstance(beta, ControlPath) else (beta, mu)
    return SegmentDriver(d, anchor)


def ph_envelope(d: Driver, anchor, k: float | None = None, mode: str = "star") -> EnvelopeDriver:
    """Pasch-Hausdorff envelope of the segment driver at ``anchor``.

    ``anchor`` is a :class:`ControlPath` or a constant pair ``(beta, mu)``.
    """
    return EnvelopeDriver(d, anchor, k, mode)


def monotone_relaxation(d: Driver, bound: float = 1e4, tol: float = 1e-10) -> RelaxedDriver:
    """Largest driver below ``d`` that is decreasing in ``y``."""
    if not math.isfinite(d.lipschitz_k):
        raise ParameterError("monotone relaxation needs a finite Lipschitz constant")
    return RelaxedDriver(d, bound, tol)


def pointwise_min_driver(family: Sequence[Driver]) -> Driver:
    family = list(family)
    if not family:
        raise ParameterError("pointwise minimum of an empty family")
    if len(family) == 1:
        return family[0]
    return PointwiseMinDriver(family)


# ---------------------------------------------------------------------------
# built-in drivers


def _zero():
    return Driver(
        lambda s, n, y, z: np.zeros(np.shape(y)),
        0.0,
        FLAGS,
        name="zero",
        conjugate=lambda s, n, b, q: np.where((np.asarray(b) == 0) & (np.asarray(q) == 0), 0.0, math.inf),
        subgradient=lambda s, n, y, z: (np.zeros(np.shape(y)), np.zeros(np.shape(z))),
    )


def _dual_tol(k):
    return 1e-9 * max(1.0, k)


def _scaled_abs_z(mu=1.0):
    mu = float(mu)
    if not mu >= 0:
        raise ParameterError(f"scaled_abs_z needs mu >= 0, got {mu!r}")
    tol = _dual_tol(mu)

    def conj(s, n, b, q):
        b, q = np.broadcast_arrays(np.asarray(b, float), np.asarray(q, float))
        return np.where((np.abs(b) <= tol) & (np.abs(q) <= mu + tol), 0.0, math.inf)

    return Driver(
        lambda s, n, y, z: mu * np.abs(z),
        mu,
        {"convex", "star_shaped", "pos_hom", "y_independent", "decreasing_y",
         "normalized_at_origin", "nonnegative", "lsc"},
        name=f"scaled_abs_z({mu:g})",
        params={"mu": mu},
        z_breakpoints=(0.0,),
        lower_bound=0.0,
        conjugate=conj,
        subgradient=lambda s, n, y, z: (np.zeros(np.shape(y)), mu * np.sign(z)),
    )


def _l1(k=1.0):
    k = float(k)
    if not k >= 0:
        raise ParameterError(f"l1 needs k >= 0, got {k!r}")
    tol = _dual_tol(k)

    def conj(s, n, b, q):
        b, q = np.broadcast_arrays(np.asarray(b, float), np.asarray(q, float))
        return np.where((np.abs(b) <= k + tol) & (np.abs(q) <= k + tol), 0.0, math.inf)

    return Driver(
        lambda s, n, y, z: k * (np.abs(y) + np.abs(z)),
        k,
        {"convex", "star_shaped", "pos_hom", "normalized_at_origin", "nonnegative", "lsc"},
        name=f"l1({k:g})",
        params={"k": k},
        z_breakpoints=(0.0,),
        lower_bound=0.0,
        conjugate=conj,
        subgradient=lambda s, n, y, z: (k * np.sign(y), k * np.sign(z)),
    )


def _linear_y(a=-1.0):
    a = float(a)
    tol = _dual_tol(abs(a))
    flags = {"convex", "star_shaped", "pos_hom", "normalized_at_origin", "lsc"}
    if a <= 0:
        flags.add("decreasing_y")
    if a == 0:
        flags |= {"y_independent", "nonnegative"}

    def conj(s, n, b, q):
        b, q = np.broadcast_arrays(np.asarray(b, float), np.asarray(q, float))
        return np.where((np.abs(b + a) <= tol) & (np.abs(q) <= tol), 0.0, math.inf)

    return Driver(
        lambda s, n, y, z: a * y,
        abs(a),
        flags,
        name=f"linear_y({a:g})",
        params={"a": a},
        conjugate=conj,
        subgradient=lambda s, n, y, z: (np.full(np.shape(y), a), np.zeros(np.shape(z))),
    )


def _neg_part_y(a=1.0):
    a = float(a)
    if not a >= 0:
        raise ParameterError(f"neg_part_y needs a >= 0, got {a!r}")
    return Driver(
        lambda s, n, y, z: -a * np.maximum(y, 0.0),
        a,
        {"star_shaped", "pos_hom", "decreasing_y", "normalized_at_origin", "lsc"},
        name=f"neg_part_y({a:g})",
        params={"a": a},
    )


def _quadratic_z(lam=1.0):
    lam = float(lam)
    if not lam > 0:
        raise ParameterError(f"quadratic_z needs lam > 0, got {lam!r}")
    return Driver(
        lambda s, n, y, z: z * z / lam,
        math.inf,
        {"convex", "star_shaped", "y_independent", "decreasing_y", "normalized_at_origin", "nonnegative", "lsc"},
        name=f"quadratic_z({lam:g})",
        params={"lam": lam},
        lower_bound=0.0,
    )


def _example1(gamma=1.0, delta=1.0):
    gamma, delta = float(gamma), float(delta)
    if not (gamma >= 0 and delta >= 0):
        raise ParameterError("example1 needs gamma >= 0 and delta >= 0")

    def g(s, n, y, z):
        ay, az = np.abs(y), np.abs(z)
        return -gamma * ay * np.exp(-ay) + delta * np.where(az <= 1.0, z * z, az)

    return Driver(
        g,
        max(gamma, 2.0 * delta),
        {"star_shaped", "normalized_at_origin", "lsc"},
        name="example1",
        params={"gamma": gamma, "delta": delta},
        z_breakpoints=(-1.0, 0.0, 1.0),
        lower_bound=-gamma / math.e,
    )


_EX2_DEFAULTS = {"thresholds": (-5.0, 3.0, 6.0), "R": (2.0, 1.0, 1.0), "r": (0.5, 0.5, 0.3), "smoothing": 1.0}


def _example2(thresholds=None, R=None, r=None, smoothing=None):
    th = np.asarray(_EX2_DEFAULTS["thresholds"] if thresholds is None else thresholds, float)
    R = np.asarray(_EX2_DEFAULTS["R"] if R is None else R, float)
    r = np.asarray(_EX2_DEFAULTS["r"] if r is None else r, float)
    eps = float(_EX2_DEFAULTS["smoothing"] if smoothing is None else smoothing)
    n = th.size
    if n < 1 or R.size != n or r.size != n:
        raise ParameterError("example2 needs equally many thresholds, R and r rates (at least one)")
    if np.any(np.diff(th) <= 0):
        raise ParameterError(f"example2 thresholds must be strictly increasing, got {th.tolist()}")
    if np.any(R < 0) or np.any(r < 0):
        raise ParameterError("example2 rates must be nonnegative")
    if eps < 0:
        raise ParameterError("example2 smoothing must be >= 0")
    if eps > 0:
        if n > 1 and eps >= np.min(np.diff(th)):
            raise ParameterError("example2 smoothing must be smaller than the threshold gaps")
        if np.any((th > 0) & (th - eps < 0)):
            raise ParameterError("example2 smoothing must not reach across y = 0")
    # piece j in 0..n-1 is R_j y^- - r_j y^+, piece n is 0
    Rp = np.append(R, 0.0)
    rp = np.append(r, 0.0)

    def piece(j, y):
        return Rp[j] * np.maximum(-y, 0.0) - rp[j] * np.maximum(y, 0.0)

    if eps > 0:
        left_vals = np.array([piece(i, th[i] - eps) for i in range(n)])
        right_vals = np.array([piece(i + 1, th[i]) for i in range(n)])
        chord_slopes = (right_vals - left_vals) / eps

        def g(s, n_, y, z):
            y = np.asarray(y, float)
            j = np.searchsorted(th, y, side="right")
            out = Rp[j] * np.maximum(-y, 0.0) - rp[j] * np.maximum(y, 0.0)
            for i in range(n):
                ramp = (y >= th[i] - eps) & (y < th[i])
                out = np.where(ramp, left_vals[i] + chord_slopes[i] * (y - th[i] + eps), out)
            return out

        k = float(max(np.max(Rp), np.max(rp), np.max(np.abs(chord_slopes))))
        pts = np.concatenate([th, th - eps, [0.0]])
    else:

        def g(s, n_, y, z):
            y = np.asarray(y, float)
            j = np.searchsorted(th, y, side="left")
            out = Rp[j] * np.maximum(-y, 0.0) - rp[j] * np.maximum(y, 0.0)
            at = np.searchsorted(th, y, side="left")
            hit = (at < n) & (th[np.minimum(at, n - 1)] == y)
            if np.any(hit):
                jj = np.minimum(at, n - 1)
                alt = Rp[jj + 1] * np.maximum(-y, 0.0) - rp[jj + 1] * np.maximum(y, 0.0)
                out = np.where(hit, np.minimum(out, alt), out)
            return out

        k = math.inf
        pts = np.concatenate([th, [0.0]])
    d = Driver(
        g,
        k,
        {"star_shaped", "normalized_at_origin", "lsc"},
        name="example2",
        params={"thresholds": th.tolist(), "R": R.tolist(), "r": r.tolist(), "smoothing": eps},
    )
    d.lower_bound = float(min(0.0, np.min(d(pts, 0.0))))
    return d


_EX3_DEFAULTS = {"lambdas": (5.0, 2.0, 1.5, 1.2), "thresholds": (1.0, 2.0, 2.5, 3.0)}


def _example3_arrays(lambdas, thresholds):
    lam = np.asarray(_EX3_DEFAULTS["lambdas"] if lambdas is None else lambdas, float)
    zt = np.abs(np.asarray(_EX3_DEFAULTS["thresholds"] if thresholds is None else thresholds, float))
    if lam.size < 1 or lam.size != zt.size:
        raise ParameterError("example3 needs equally many lambda levels and z thresholds")
    if np.any(lam <= 0):
        raise ParameterError("example3 lambda levels must be strictly positive")
    if np.any(np.diff(lam) > 0):
        raise ParameterError(f"example3 lambda levels must be decreasing, got {lam.tolist()}")
    if np.any(np.diff(zt) <= 0):
        raise ParameterError(f"example3 |z| thresholds must be strictly increasing, got {zt.tolist()}")
    return lam, zt


_EX3_FLAGS = {"star_shaped", "y_independent", "decreasing_y", "normalized_at_origin", "nonnegative", "lsc"}


def _example3(lambdas=None, thresholds=None):
    lam, zt = _example3_arrays(lambdas, thresholds)
    n = lam.size

    def g(s, n_, y, z):
        az = np.abs(np.asarray(z, float))
        j = np.searchsorted(zt, az, side="left")
        with np.errstate(invalid="ignore"):
            out = az * az / lam[np.minimum(j, n - 1)]
        return np.where(j >= n, math.inf, out)

    return Driver(
        g,
        math.inf,
        _EX3_FLAGS,
        name="example3",
        params={"lambdas": lam.tolist(), "thresholds": zt.tolist()},
        z_radius=float(zt[-1]),
        z_breakpoints=tuple(np.concatenate([-zt[::-1], [0.0], zt])),
        lower_bound=0.0,
    )


def _example3_restricted(lambdas=None, thresholds=None, ramp=0.25):
    lam, zt = _example3_arrays(lambdas, thresholds)
    n = lam.size
    eps = float(ramp)
    if not eps > 0:
        raise ParameterError("example3_restricted ramp must be positive")
    if eps >= zt[0] or (n > 1 and eps >= np.min(np.diff(zt))):
        raise ParameterError("example3_restricted ramp must be smaller than z_1 and the threshold gaps")
    left = (zt[:-1] - eps) ** 2 / lam[:-1]
    right = zt[:-1] ** 2 / lam[1:]
    slopes = (right - left) / eps
    tail_slope = 2.0 * zt[-1] / lam[-1]
    tail_at = zt[-1] ** 2 / lam[-1]

    def g(s, n_, y, z):
        az = np.abs(np.asarray(z, float))
        j = np.minimum(np.searchsorted(zt, az, side="right"), n - 1)
        out = az * az / lam[j]
        for i in range(n - 1):
            on = (az >= zt[i] - eps) & (az < zt[i])
            out = np.where(on, left[i] + slopes[i] * (az - zt[i] + eps), out)
        return np.where(az > zt[-1], tail_at + tail_slope * (az - zt[-1]), out)

    band_slopes = [2.0 * (zt[i] - eps) / lam[i] for i in range(n - 1)] + [tail_slope]
    k = float(max(np.max(slopes, initial=0.0), max(band_slopes)))
    return Driver(
        g,
        k,
        _EX3_FLAGS,
        name="example3_restricted",
        params={"lambdas": lam.tolist(), "thresholds": zt.tolist(), "ramp": eps},
        z_breakpoints=tuple(np.concatenate([-zt[::-1], -(zt[:-1] - eps)[::-1], [0.0], zt[:-1] - eps, zt])),
        lower_bound=0.0,
    )


BUILTIN_DRIVERS = {
    "zero": _zero,
    "scaled_abs_z": _scaled_abs_z,
    "l1": _l1,
    "linear_y": _linear_y,
    "neg_part_y": _neg_part_y,
    "quadratic_z": _quadratic_z,
    "example1": _example1,
    "example2": _example2,
    "example3": _example3,
    "example3_restricted": _example3_restricted,
}


def builtin_driver(name: str, params: Mapping | None = None, **kwargs) -> Driver:
    """Construct a library driver by name.

    Parameters
    ----------
    name : str
        One of ``zero``, ``scaled_abs_z(mu)``, ``l1(k)``, ``linear_y(a)``,
        ``neg_part_y(a)``, ``quadratic_z(lam)``, ``example1(gamma, delta)``,
        ``example2(thresholds, R, r, smoothing)``,
        ``example3(lambdas, thresholds)`` and
        ``example3_restricted(lambdas, thresholds, ramp)``.
    params : mapping, optional
        Keyword parameters of the constructor.
    """
    if name not in BUILTIN_DRIVERS:
        raise ParameterError(f"unknown driver {name!r}; known: {sorted(BUILTIN_DRIVERS)}")
    merged = dict(params or {})
    merged.update(kwargs)
    try:
        return BUILTIN_DRIVERS[name](**merged)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for driver {name!r}: {exc}") from None


def driver_from_spec(spec) -> Driver:
    """Driver from ``"name"`` or ``{"name": ..., "params": {...}}``."""
    if isinstance(spec, Driver):
        return spec
    if isinstance(spec, str):
        return builtin_driver(spec)
    if isinstance(spec, Mapping):
        if "name" not in spec:
            raise ParameterError("driver spec needs a 'name'")
        return builtin_driver(spec["name"], spec.get("params"))
    raise ParameterError(f"cannot build a driver from {spec!r}")


# ---------------------------------------------------------------------------
# property checks

DEFAULT_GRID = np.arange(-3.0, 4.0)
DEFAULT_LAMBDAS = np.round(np.arange(1, 10) / 10.0, 10)


@dataclass(frozen=True)
class PropertyReport:
    mode: str
    holds: bool
    worst_violation: float
    witness: dict = field(default_factory=dict)
    domain_violations: int = 0


def check_driver_property(
    d: Driver,
    mode,
    grid=None,
    lambdas=None,
    k: float | None = None,
    step: int = 0,
    node=0,
    tol: float = 1e-12,
) -> PropertyReport:
    """Check a defining inequality of ``d`` on a sample grid.

    Parameters
    ----------
    mode : str or tuple
        ``star_shaped``, ``pos_hom``, ``decreasing_y``, ``convex``,
        ``lipschitz`` (with ``k``, or given as ``("lipschitz", k)``).
    grid : array or pair of arrays, optional
        ``y`` and ``z`` sample values; defaults to ``{-3, ..., 3}`` for both.
    lambdas : array, optional
        Scalings for the star-shaped and homogeneity checks; defaults to
        ``{0.1, ..., 0.9}``.

    Returns
    -------
    PropertyReport
        Worst violation over the whole grid and the point attaining it.
        ``+inf`` values where finiteness is needed count as domain violations.
    """
    if isinstance(mode, tuple):
        mode, k = mode
    if grid is None:
        ys = zs = DEFAULT_GRID
    elif isinstance(grid, tuple) and len(grid) == 2:
        ys, zs = (np.asarray(grid[0], float), np.asarray(grid[1], float))
    else:
        ys = zs = np.asarray(grid, float)
    lams = DEFAULT_LAMBDAS if lambdas is None else np.asarray(lambdas, float)
    Y, Zg = np.meshgrid(ys, zs, indexing="ij")
    Y, Zg = Y.ravel(), Zg.ravel()
    g = lambda y, z: d.evaluate(step, node, y, z)  # noqa: E731
    gv = g(Y, Zg)
    worst, witness, domain = -math.inf, {}, 0

    def consider(viol, info):
        nonlocal worst, witness
        viol = np.where(np.isnan(viol), math.inf, viol)
        if viol.size == 0:
            return
        i = int(np.argmax(viol))
        if viol[i] > worst:
            worst = float(viol[i])
            witness = {key: (float(v[i]) if np.ndim(v) else float(v)) for key, v in info.items()}

    if mode == "star_shaped":
        g0 = float(g(0.0, 0.0))
        for lam in lams:
            lhs = g(lam * Y, lam * Zg)
            rhs = lam * gv + (1.0 - lam) * g0
            with np.errstate(invalid="ignore"):
                viol = np.where(np.isinf(rhs) & (rhs > 0), -math.inf, lhs - rhs)
            domain += int(np.sum(np.isinf(lhs) & np.isfinite(rhs)))
            consider(viol, {"lambda": lam, "y": Y, "z": Zg})
    elif mode == "pos_hom":
        scal = np.concatenate([lams, 1.0 / lams])
        for lam in scal:
            lhs = g(lam * Y, lam * Zg)
            rhs = lam * gv
            both_inf = np.isinf(lhs) & np.isinf(rhs)
            with np.errstate(invalid="ignore"):
                viol = np.where(both_inf, 0.0, np.abs(lhs - rhs))
            domain += int(np.sum(np.isinf(lhs) ^ np.isinf(rhs)))
            consider(viol, {"lambda": lam, "y": Y, "z": Zg})
    elif mode == "decreasing_y":
        ys_sorted = np.sort(ys)
        A, B = np.meshgrid(ys_sorted, zs, indexing="ij")
        vals = g(A, B)
        with np.errstate(invalid="ignore"):
            diff = vals[1:, :] - vals[:-1, :]
        both_inf = np.isinf(vals[1:, :]) & np.isinf(vals[:-1, :])
        diff = np.where(both_inf, 0.0, diff)
        consider(diff.ravel(), {"y": A[1:, :].ravel(), "z": B[1:, :].ravel()})
    elif mode in ("lipschitz", "convex"):
        if mode == "lipschitz":
            if k is None:
                k = d.lipschitz_k
            if not math.isfinite(k):
                raise ParameterError("lipschitz check needs a finite k")
        fin = np.isfinite(gv)
        domain += int(np.sum(~fin))
        Yf, Zf, gf = Y[fin], Zg[fin], gv[fin]
        dy = np.abs(Yf[:, None] - Yf[None, :])
        dz = np.abs(Zf[:, None] - Zf[None, :])
        if mode == "lipschitz":
            viol = np.abs(gf[:, None] - gf[None, :]) - k * (dy + dz)
        else:
            mid = g(0.5 * (Yf[:, None] + Yf[None, :]), 0.5 * (Zf[:, None] + Zf[None, :]))
            viol = mid - 0.5 * (gf[:, None] + gf[None, :])
        i, j = np.unravel_index(int(np.argmax(viol)), viol.shape) if viol.size else (0, 0)
        if viol.size:
            worst = float(viol[i, j])
            witness = {"y1": float(Yf[i]), "z1": float(Zf[i]), "y2": float(Yf[j]), "z2": float(Zf[j])}
    else:
        raise ParameterError(f"unknown property mode {mode!r}")
    worst = max(worst, 0.0) if worst != -math.inf else 0.0
    holds = worst <= tol and domain == 0
    return PropertyReport(str(mode), bool(holds), worst, witness, domain)
