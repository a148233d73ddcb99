"""Bundle metric, Levi-Civita connection and symmetric product.

The connection is computed pointwise from the Koszul formula in an arbitrary
basis: the six-term right-hand side is assembled from finite-difference metric
derivatives and the structure functions, then solved with the inverse metric.
Orthogonal-basis shortcuts are deliberately not a separate code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import expr as ex
from .algebroid import AlgebroidStructure, OneForm, Section, Trajectory, _ExprTable
from .expr import Expr, fd_directional, fd_partial

__all__ = [
    "BundleMetric",
    "SingularMetricError",
    "ChristoffelTensor",
    "Potential",
    "ForceField",
    "metric_eval",
    "flat",
    "sharp",
    "christoffel",
    "christoffel_field",
    "covariant_derivative",
    "covariant_derivative_along",
    "symmetric_product",
    "symprod_via_lifts",
    "gradient",
    "gradient_section",
]


class SingularMetricError(ValueError):
    """The metric matrix is (numerically) singular at an evaluation point."""


class BundleMetric:
    """Symmetric fiber metric ``G_AB(x)`` on the algebroid."""

    def __init__(self, fn: Callable, rank: int, exprs=None, constant: bool = False):
        self._fn = fn
        self.m = int(rank)
        self.exprs = exprs
        self.is_constant = bool(constant)

    @classmethod
    def from_exprs(cls, entries: Sequence[Sequence], coords, params=None) -> "BundleMetric":
        """Build from an ``m x m`` table of expressions.

        Symmetry is enforced by storage: entries below the diagonal may be
        omitted (``None``/``""``), and explicitly supplied mirror pairs must
        agree exactly at probe points.
        """
        m = len(entries)
        rows = [list(r) for r in entries]
        if any(len(r) != m for r in rows):
            raise ValueError("metric table must be square")
        parsed = [[None] * m for _ in range(m)]
        for i in range(m):
            for j in range(m):
                cell = rows[i][j]
                if cell in (None, ""):
                    continue
                parsed[i][j] = cell if isinstance(cell, Expr) else ex.parse(str(cell))
        from .algebroid import _probe_points  # shared probe machinery

        points = _probe_points(len(coords))
        params = dict(params or {})
        for i in range(m):
            for j in range(i + 1, m):
                upper, lower = parsed[i][j], parsed[j][i]
                if upper is not None and lower is not None:
                    for p in points:
                        env = dict(params)
                        env.update(zip(coords, p))
                        if upper.eval(env) != lower.eval(env):
                            raise ValueError(f"metric entries ({i + 1},{j + 1}) and ({j + 1},{i + 1}) differ")
                elif upper is not None:
                    parsed[j][i] = upper
                elif lower is not None:
                    parsed[i][j] = lower
        zero = ex.Num(0.0)
        flat_exprs = [parsed[i][j] or zero for i in range(m) for j in range(m)]
        table = _ExprTable(flat_exprs, (m, m), coords, params)
        return cls(table, m, exprs=parsed, constant=table.is_constant)

    @classmethod
    def from_callable(cls, fn: Callable, rank: int) -> "BundleMetric":
        return cls(fn, rank)

    def matrix(self, x) -> np.ndarray:
        out = np.asarray(self._fn(np.asarray(x, dtype=float)), dtype=float)
        if out.shape != (self.m, self.m):
            raise ValueError(f"metric returned shape {out.shape}")
        return out

    def inverse(self, x) -> np.ndarray:
        G = self.matrix(x)
        try:
            inv = np.linalg.inv(G)
        except np.linalg.LinAlgError:
            raise SingularMetricError(f"metric is singular at {np.asarray(x)}") from None
        if not np.all(np.isfinite(inv)):
            raise SingularMetricError(f"metric is singular at {np.asarray(x)}")
        return inv

    def positive_definite_on(self, points, strict: bool = True) -> bool:
        """Sampled diagnostic; returns False at the first offending point."""
        for p in np.atleast_2d(points):
            w = np.linalg.eigvalsh(self.matrix(p))
            if strict and np.any(w <= 0):
                return False
            if not strict and np.any(w == 0):
                return False
        return True


@dataclass(frozen=True)
class ChristoffelTensor:
    """Connection coefficients ``gamma[A, B, C]`` at a single base point."""

    gamma: np.ndarray
    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        if not np.all(np.isfinite(self.gamma)):
            raise ValueError("non-finite Christoffel entries")

    @property
    def rank(self) -> int:
        return self.gamma.shape[0]

    def antisymmetric_part(self) -> np.ndarray:
        """``gamma[A,B,C] - gamma[A,C,B]``; equals the structure functions."""
        return self.gamma - np.transpose(self.gamma, (0, 2, 1))


class Potential:
    """Scalar potential on the base."""

    def __init__(self, fn: Callable, expr: Optional[Expr] = None):
        self._fn = fn
        self.expr = expr

    @classmethod
    def from_expr(cls, entry, coords, params=None) -> "Potential":
        e = entry if isinstance(entry, Expr) else ex.parse(str(entry))
        table = _ExprTable([e], (1,), coords, params or {})
        return cls(lambda x: float(table(x)[0]), expr=e)

    @classmethod
    def zero(cls) -> "Potential":
        return cls(lambda x: 0.0, expr=ex.Num(0.0))

    def __call__(self, x) -> float:
        return float(self._fn(np.asarray(x, dtype=float)))


class ForceField:
    """Fiber-preserving force map with components over base and fiber coordinates."""

    def __init__(self, fn: Callable, rank: int, exprs=None):
        self._fn = fn
        self.m = int(rank)
        self.exprs = exprs

    @classmethod
    def from_exprs(cls, entries, coords, params=None, fiber_names=None) -> "ForceField":
        """Component expressions may reference base coordinates and the fiber
        coordinates, named ``y1..ym`` unless ``fiber_names`` overrides."""
        m = len(entries)
        names = tuple(fiber_names) if fiber_names else tuple(f"y{j + 1}" for j in range(m))
        if len(names) != m:
            raise ValueError("fiber coordinate names do not match rank")
        table = _ExprTable([e if isinstance(e, Expr) else ex.parse(str(e)) for e in entries],
                           (m,), tuple(coords) + names, params or {})

        def fn(x, y):
            return table(np.concatenate([np.asarray(x, dtype=float), np.asarray(y, dtype=float)]))

        return cls(fn, m, exprs=table.exprs)

    @classmethod
    def from_section(cls, X: Section) -> "ForceField":
        return cls(lambda x, y: X(x), X.rank)

    def __call__(self, x, y) -> np.ndarray:
        out = np.asarray(self._fn(np.asarray(x, dtype=float), np.asarray(y, dtype=float)), dtype=float)
        if out.shape != (self.m,):
            raise ValueError(f"force returned shape {out.shape}")
        return out


# --- metric operations ---------------------------------------------------------


def _coeffs(X, x) -> np.ndarray:
    return X(x) if isinstance(X, (Section, OneForm)) else np.asarray(X, dtype=float)


def metric_eval(Gm: BundleMetric, X, Y, p) -> float:
    """``G(X, Y)`` at ``p``; arguments are sections or coefficient vectors."""
    return float(_coeffs(X, p) @ Gm.matrix(p) @ _coeffs(Y, p))


def flat(Gm: BundleMetric, X, p) -> np.ndarray:
    """Musical isomorphism fiber -> covector at ``p``."""
    return Gm.matrix(p) @ _coeffs(X, p)


def sharp(Gm: BundleMetric, kappa, p) -> np.ndarray:
    """Musical isomorphism covector -> fiber at ``p`` (inverse of ``flat``)."""
    return Gm.inverse(p) @ _coeffs(kappa, p)


# --- connection ------------------------------------------------------------------


def christoffel(S: AlgebroidStructure, Gm: BundleMetric, p, step=None) -> ChristoffelTensor:
    """Connection coefficients at ``p`` from the Koszul formula.

    Assembles ``2 G(nabla_{e_B} e_C, e_E)`` for all index triples — metric
    derivatives along the anchored basis fields plus the six structure-function
    pairings — and contracts with the inverse metric.
    """
    p = S.check_point(p)
    G = Gm.matrix(p)
    Ginv = Gm.inverse(p)
    m = S.m
    C = S.structure(p)

    if S.n and not Gm.is_constant:
        dG = np.array([fd_partial(Gm.matrix, p, i, step) for i in range(S.n)])
        rhoG = np.einsum("ai,icd->acd", S.anchor(p), dG)  # rho(e_A)(G_CD)
    else:
        rhoG = np.zeros((m, m, m))

    K = (
        rhoG
        + np.einsum("cbe->bce", rhoG)                      # rho(e_C)(G_BE) at [B,C,E]
        - np.einsum("ebc->bce", rhoG)                      # rho(e_E)(G_BC) at [B,C,E]
        + np.einsum("bf,fec->bce", G, C)                   # G(e_B, [e_E, e_C])
        + np.einsum("cf,feb->bce", G, C)                   # G(e_C, [e_E, e_B])
        - np.einsum("ef,fcb->bce", G, C)                   # G(e_E, [e_C, e_B])
    )
    gamma = 0.5 * np.einsum("ae,bce->abc", Ginv, K)
    return ChristoffelTensor(gamma, p)


def christoffel_field(S: AlgebroidStructure, Gm: BundleMetric, step=None,
                      cache_size: int = 512) -> Callable:
    """Memoized ``p -> gamma`` evaluator.

    When both the metric and the structure functions are coordinate-free the
    tensor is computed once; otherwise recent points are cached by value,
    which pays off in sample-based verification sweeps.
    """
    if (Gm.is_constant and S.constant_structure) or S.n == 0:
        fixed = christoffel(S, Gm, np.zeros(S.n), step).gamma
        return lambda p: fixed

    cache = {}
    order = []

    def evaluate(p):
        key = np.asarray(p, dtype=float).tobytes()
        hit = cache.get(key)
        if hit is not None:
            return hit
        gamma = christoffel(S, Gm, p, step).gamma
        cache[key] = gamma
        order.append(key)
        if len(order) > cache_size:
            cache.pop(order.pop(0), None)
        return gamma

    return evaluate


def covariant_derivative(S, Gm, X: Section, Y: Section, p, step=None, gamma=None) -> np.ndarray:
    """Coefficients of ``nabla_X Y`` at ``p``.

    Local form: derivative of the target coefficients along the anchored
    direction plus the Christoffel contraction.
    """
    p = S.check_point(p)
    if gamma is None:
        gamma = christoffel(S, Gm, p, step).gamma
    Xp, Yp = X(p), Y(p)
    out = np.einsum("abc,b,c->a", gamma, Xp, Yp)
    if S.n:
        out = out + fd_directional(Y, p, S.anchor(p).T @ Xp, step)
    return out


def covariant_derivative_along(S, Gm, traj: Trajectory, W, t, gamma_field=None) -> np.ndarray:
    """Covariant derivative of a section-along-curve at sample time ``t``.

    ``W`` is either an ``(N, m)`` array of fiber samples aligned with the
    trajectory or a section to evaluate along the base curve.  The time
    derivative is a central difference over neighbouring samples, so ``t``
    must be an interior sample time.
    """
    if traj.fiber is None:
        raise ValueError("trajectory carries no fiber samples")
    if isinstance(W, Section):
        W = np.array([W(x) for x in traj.base])
    W = np.asarray(W, dtype=float)
    k = traj.index_of(t)
    if k == 0 or k == len(traj) - 1:
        raise ValueError("t must be an interior sample")
    dt = traj.times[k + 1] - traj.times[k - 1]
    dW = (W[k + 1] - W[k - 1]) / dt
    gamma = gamma_field(traj.base[k]) if gamma_field is not None \
        else christoffel(S, Gm, traj.base[k]).gamma
    return dW + np.einsum("cab,a,b->c", gamma, traj.fiber[k], W[k])


def symmetric_product(S, Gm, X: Section, Y: Section, p, step=None, gamma=None) -> np.ndarray:
    """``nabla_X Y + nabla_Y X`` at ``p``; symmetric in its arguments by construction."""
    p = S.check_point(p)
    if gamma is None:
        gamma = christoffel(S, Gm, p, step).gamma
    Xp, Yp = X(p), Y(p)
    out = np.einsum("abc,b,c->a", gamma + np.transpose(gamma, (0, 2, 1)), Xp, Yp)
    if S.n:
        R = S.anchor(p)
        out = out + fd_directional(Y, p, R.T @ Xp, step) + fd_directional(X, p, R.T @ Yp, step)
    return out


def symprod_via_lifts(S, Gm, X: Section, Y: Section, p, y0, step: float = 1e-4) -> np.ndarray:
    """Symmetric product via nested brackets of vertical lifts with the geodesic spray.

    Independent of the Koszul path: evaluates ``[X^v, [spray, Y^v]]`` on the
    total space with finite differences and reads off the vertical part, which
    is the vertical lift of the symmetric product (independent of ``y0`` up to
    the difference error).  Serves as an oracle for :func:`symmetric_product`.
    """
    from .dynamics import geodesic_spray  # deferred: dynamics builds on this module

    p = S.check_point(p)
    y0 = S.check_fiber(y0)
    n, m = S.n, S.m
    z0 = np.concatenate([p, y0])

    def vertical(section):
        def lifted(z):
            out = np.zeros(n + m)
            out[n:] = section(z[:n])
            return out
        return lifted

    def spray(z):
        return geodesic_spray(S, Gm, (z[:n], z[n:]))

    Yv = vertical(Y)
    Xv = vertical(X)

    def inner(z):
        # [spray, Y^v] = D(Y^v) . spray - D(spray) . Y^v
        return (np.asarray(fd_directional(Yv, z, spray(z), step))
                - np.asarray(fd_directional(spray, z, Yv(z), step)))

    outer = (np.asarray(fd_directional(inner, z0, Xv(z0), step))
             - np.asarray(fd_directional(Xv, z0, inner(z0), step)))
    return outer[n:]


def gradient(S, Gm, V, p, step=None) -> np.ndarray:
    """Metric gradient of a potential: sharp of its almost differential."""
    from .algebroid import d_function

    p = S.check_point(p)
    fn = V if isinstance(V, Potential) else Potential.from_expr(V, S.coords, S.params)
    return sharp(Gm, d_function(S, fn, p, step), p)


def gradient_section(S, Gm, V) -> Section:
    """The gradient as a section, evaluable anywhere on the chart."""
    return Section(lambda x: gradient(S, Gm, V, x), S.m, label="grad")
