"""Geodesic spray, forced and controlled vector fields, fixed-step integration.

All integration is classical fixed-step RK4; deterministic goldens matter more
here than adaptive accuracy.  Fields evaluate on the total space packed as
``z = [x, y]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import expr as ex
from .algebroid import AlgebroidStructure, ChartDomain, Section, Trajectory, _ExprTable
from .expr import EvalError, Expr
from .geometry import (
    BundleMetric,
    ForceField,
    Potential,
    SingularMetricError,
    christoffel_field,
)

__all__ = [
    "TotalPoint",
    "ControlSignal",
    "geodesic_spray",
    "spray_field",
    "forced_field",
    "forced_field_fn",
    "controlled_field",
    "controlled_field_fn",
    "integrate",
    "base_flow",
    "lift",
    "energy",
]


@dataclass(frozen=True)
class TotalPoint:
    """A point of the total space: base coordinates plus fiber coefficients."""

    base: np.ndarray
    fiber: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float).reshape(-1))
        object.__setattr__(self, "fiber", np.asarray(self.fiber, dtype=float).reshape(-1))

    def packed(self) -> np.ndarray:
        return np.concatenate([self.base, self.fiber])


def _unpack(q, n: int, m: int):
    if isinstance(q, TotalPoint):
        x, y = q.base, q.fiber
    else:
        x, y = (np.asarray(q[0], dtype=float).reshape(-1),
                np.asarray(q[1], dtype=float).reshape(-1))
    if x.size != n or y.size != m:
        raise ValueError(f"total point has shape ({x.size},{y.size}), expected ({n},{m})")
    return x, y


class ControlSignal:
    """Control coefficient functions, time-driven or state-feedback.

    Each coefficient is an expression over the base coordinates, plus the
    time variable ``t`` in time-driven mode.  State-feedback signals may not
    reference ``t``.
    """

    TIME_DRIVEN = "time-driven"
    STATE_FEEDBACK = "state-feedback"

    def __init__(self, entries: Sequence, coords, params=None, mode: str = STATE_FEEDBACK):
        if mode not in (self.TIME_DRIVEN, self.STATE_FEEDBACK):
            raise ValueError(f"unknown control mode {mode!r}")
        self.mode = mode
        self.coords = tuple(coords)
        names = self.coords + (("t",) if mode == self.TIME_DRIVEN else ())
        exprs = [e if isinstance(e, Expr) else ex.parse(str(e)) for e in entries]
        if mode == self.STATE_FEEDBACK:
            for e in exprs:
                if "t" in e.variables() and "t" not in self.coords:
                    raise ValueError("state-feedback controls may not reference t")
        self._table = _ExprTable(exprs, (len(exprs),), names, params or {})
        self.k = len(exprs)

    @classmethod
    def constant(cls, values, coords) -> "ControlSignal":
        return cls([repr(float(v)) for v in values], coords)

    def __call__(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.mode == self.TIME_DRIVEN:
            return self._table(np.concatenate([x, [float(t)]]))
        return self._table(x)


def geodesic_spray(S: AlgebroidStructure, Gm: BundleMetric, q) -> np.ndarray:
    """Tangent of the geodesic field at ``q``: anchored velocity for the base,
    minus the Christoffel quadratic form for the fiber."""
    x, y = _unpack(q, S.n, S.m)
    from .geometry import christoffel

    gamma = christoffel(S, Gm, x).gamma
    dx = S.anchor(x).T @ y if S.n else np.zeros(0)
    dy = -np.einsum("cab,a,b->c", gamma, y, y)
    return np.concatenate([dx, dy])


def spray_field(S, Gm) -> Callable:
    """Packed field ``(t, z) -> dz`` for the geodesic spray, with cached coefficients."""
    gamma_at = christoffel_field(S, Gm)
    n = S.n

    def field(t, z):
        x, y = z[:n], z[n:]
        dx = S.anchor(x).T @ y if n else np.zeros(0)
        dy = -np.einsum("cab,a,b->c", gamma_at(x), y, y)
        return np.concatenate([dx, dy])

    return field


def forced_field(S, Gm, F: Optional[ForceField], q) -> np.ndarray:
    """Spray plus the vertical force term at ``q``; ``F=None`` means unforced."""
    x, y = _unpack(q, S.n, S.m)
    out = geodesic_spray(S, Gm, (x, y))
    if F is not None:
        out[S.n:] += F(x, y)
    return out


def forced_field_fn(S, Gm, F: Optional[ForceField]) -> Callable:
    base = spray_field(S, Gm)
    if F is None:
        return base
    n = S.n

    def field(t, z):
        out = base(t, z)
        out[n:] += F(z[:n], z[n:])
        return out

    return field


def controlled_field(S, Gm, F, inputs: Sequence[Section], u: ControlSignal, t, q) -> np.ndarray:
    """Forced field plus the control combination of the input sections."""
    x, y = _unpack(q, S.n, S.m)
    out = forced_field(S, Gm, F, (x, y))
    coeffs = u(t, x)
    if len(coeffs) != len(inputs):
        raise ValueError("control signal rank does not match the input sections")
    for c, Y in zip(coeffs, inputs):
        out[S.n:] += c * Y(x)
    return out


def controlled_field_fn(S, Gm, F, inputs: Sequence[Section], u: ControlSignal) -> Callable:
    base = forced_field_fn(S, Gm, F)
    n = S.n

    def field(t, z):
        out = base(t, z)
        coeffs = u(t, z[:n])
        for c, Y in zip(coeffs, inputs):
            out[n:] += c * Y(z[:n])
        return out

    return field


def integrate(field: Callable, q0, t0: float, t1: float, step: float,
              chart: Optional[ChartDomain] = None, fiber_rank: Optional[int] = None) -> Trajectory:
    """Classical fixed-step RK4 from ``t0`` to ``t1``.

    The interval is split into uniform steps of (approximately) the requested
    size.  If a sample leaves the chart box or hits an exclusion, or if the
    field raises an evaluation error, integration stops and the partial
    trajectory is returned flagged as truncated.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    if isinstance(q0, TotalPoint):
        z = q0.packed()
        m = q0.fiber.size
    else:
        z = np.asarray(q0, dtype=float).reshape(-1)
        if fiber_rank is None:
            raise ValueError("fiber_rank is required for packed initial states")
        m = int(fiber_rank)
    n = z.size - m

    count = max(1, int(round((t1 - t0) / step)))
    h = (t1 - t0) / count
    times = [t0]
    states = [z.copy()]
    truncated = False
    reason = ""

    for k in range(count):
        t = t0 + k * h
        try:
            k1 = field(t, z)
            k2 = field(t + h / 2.0, z + (h / 2.0) * k1)
            k3 = field(t + h / 2.0, z + (h / 2.0) * k2)
            k4 = field(t + h, z + h * k3)
        except (EvalError, SingularMetricError) as err:
            truncated, reason = True, f"field evaluation failed: {err}"
            break
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if chart is not None and not chart.contains(z[:n]):
            truncated, reason = True, "left the chart domain"
            break
        times.append(t0 + (k + 1) * h)
        states.append(z.copy())

    states = np.array(states)
    return Trajectory(np.array(times), states[:, :n], states[:, n:] if m else np.zeros((len(times), 0)),
                      step=h, integrator="rk4", truncated=truncated, reason=reason)


def base_flow(S, X: Section, p0, t0: float, t1: float, step: float,
              chart: Optional[ChartDomain] = None) -> Trajectory:
    """Integral curve of the anchored vector field of ``X`` on the base."""
    p0 = S.check_point(p0)
    anchored = S.anchored_field(X)
    traj = integrate(lambda t, z: anchored(z), np.asarray(p0), t0, t1, step,
                     chart=chart, fiber_rank=0)
    return Trajectory(traj.times, traj.base, None, step=traj.step,
                      integrator=traj.integrator, truncated=traj.truncated, reason=traj.reason)


def lift(X: Section, sigma: Trajectory) -> Trajectory:
    """Compose a base trajectory with a section: admissible by construction."""
    fiber = np.array([X(x) for x in sigma.base])
    return Trajectory(sigma.times, sigma.base, fiber, step=sigma.step,
                      integrator=sigma.integrator, truncated=sigma.truncated, reason=sigma.reason)


def energy(S, Gm, V: Optional[Potential], q) -> float:
    """Mechanical energy ``G(y, y)/2 + V(x)``; conserved along unforced geodesics."""
    x, y = _unpack(q, S.n, S.m)
    kinetic = 0.5 * float(y @ Gm.matrix(x) @ y)
    return kinetic + (V(x) if V is not None else 0.0)
