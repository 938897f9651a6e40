"""Polyhedral primitives: halfspace systems, projections, dimensionality tests.

A polyhedron is stored in H-representation {y : A y <= b}.  All distances are
Euclidean.  Projections use Dykstra's alternating scheme, which is exact in
the limit and more than accurate enough at the tolerances used here because
every constraint count in this package is tiny.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

# Stopping tolerance for Dykstra iterations (change in iterate per sweep).
PROJECTION_TOL = 1e-12
# Residual feasibility tolerance: a projection whose witness violates the
# constraints by more than this is treated as "no feasible point found".
FEASIBILITY_TOL = 1e-8
MAX_PROJECTION_SWEEPS = 100_000
# A polyhedron is full-dimensional when it contains a ball of this radius.
INTERIOR_RADIUS = 1e-9


class EmptyPolyhedronError(ValueError):
    """Raised when an operation requires a nonempty polyhedron."""


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """Closed convex set {y : A y <= b} with A of shape (m, d).

    m = 0 encodes the whole space.  Rows are never normalized; callers that
    need scaled margins divide by the row norms themselves.
    """

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.size == 0:
            A = A.reshape(0, A.shape[-1] if A.ndim == 2 and A.shape[-1] else 1)
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"constraint shapes disagree: A {A.shape}, b {b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("polyhedron constraints must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    @property
    def dimension(self) -> int:
        return self.A.shape[1]

    def contains(self, y: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        if self.n_constraints == 0:
            return True
        return bool(np.max(self.A @ y - self.b) <= tol)

    def violation(self, y: np.ndarray) -> float:
        if self.n_constraints == 0:
            return 0.0
        return float(max(0.0, np.max(self.A @ y - self.b)))

    def is_empty(self, tol: float = 1e-9) -> bool:
        """Exact emptiness via an LP feasibility solve."""
        if self.n_constraints == 0:
            return False
        res = linprog(
            np.zeros(self.dimension),
            A_ub=self.A,
            b_ub=self.b + tol,
            bounds=[(None, None)] * self.dimension,
            method="highs",
        )
        return res.status == 2

    def interior_radius(self, cap: float = 1.0, box: float = 1e6) -> float:
        """Radius of the largest inscribed ball (Chebyshev radius), capped.

        The center is searched inside [-box, box]^d so that unbounded
        polyhedra still yield a finite LP.  Returns -inf for empty sets.
        """
        d = self.dimension
        if self.n_constraints == 0:
            return cap
        norms = np.linalg.norm(self.A, axis=1)
        # Rows with zero normal are either trivially true or make the set empty.
        zero = norms <= 0.0
        if np.any(zero):
            if np.any(self.b[zero] < 0):
                return -np.inf
            keep = ~zero
            return Polyhedron(self.A[keep], self.b[keep]).interior_radius(cap, box)
        c = np.zeros(d + 1)
        c[-1] = -1.0
        A_ub = np.hstack([self.A, norms[:, None]])
        bounds = [(-box, box)] * d + [(0.0, cap)]
        res = linprog(c, A_ub=A_ub, b_ub=self.b, bounds=bounds, method="highs")
        if res.status == 2:
            return -np.inf
        if not res.success:
            return -np.inf
        return float(res.x[-1])

    def is_full_dimensional(self, radius: float = INTERIOR_RADIUS) -> bool:
        return self.interior_radius() > radius


def project_halfspace(y: np.ndarray, a: np.ndarray, beta: float) -> np.ndarray:
    """Project y onto {z : <a, z> <= beta}; a may be zero (no-op if feasible)."""
    s = float(a @ y) - beta
    if s <= 0.0:
        return y
    nn = float(a @ a)
    if nn == 0.0:
        return y
    return y - (s / nn) * a


def _dykstra_sweeps_python(A, b, x, tol, max_sweeps):
    m = A.shape[0]
    y = x.copy()
    corrections = np.zeros((m, x.shape[0]))
    prev = y.copy()
    for _ in range(max_sweeps):
        for i in range(m):
            w = y + corrections[i]
            y = project_halfspace(w, A[i], float(b[i]))
            corrections[i] = w - y
        if float(np.linalg.norm(y - prev)) < tol:
            break
        prev = y.copy()
    return y


try:
    from numba import njit

    @njit(cache=True)
    def _dykstra_sweeps(A, b, x, tol, max_sweeps):  # pragma: no cover - jitted
        m, d = A.shape
        y = x.copy()
        p = np.zeros((m, d))
        w = np.empty(d)
        prev = y.copy()
        nn = np.empty(m)
        for i in range(m):
            s = 0.0
            for k in range(d):
                s += A[i, k] * A[i, k]
            nn[i] = s
        for _ in range(max_sweeps):
            for i in range(m):
                for k in range(d):
                    w[k] = y[k] + p[i, k]
                s = -b[i]
                for k in range(d):
                    s += A[i, k] * w[k]
                if s > 0.0 and nn[i] > 0.0:
                    c = s / nn[i]
                    for k in range(d):
                        y[k] = w[k] - c * A[i, k]
                else:
                    for k in range(d):
                        y[k] = w[k]
                for k in range(d):
                    p[i, k] = w[k] - y[k]
            chg = 0.0
            for k in range(d):
                dd = y[k] - prev[k]
                chg += dd * dd
            if chg < tol * tol:
                break
            for k in range(d):
                prev[k] = y[k]
        return y

except ImportError:  # pragma: no cover
    _dykstra_sweeps = _dykstra_sweeps_python


def project_polyhedron(
    P: Polyhedron,
    x: np.ndarray,
    tol: float = PROJECTION_TOL,
    max_sweeps: int = MAX_PROJECTION_SWEEPS,
) -> tuple[float, np.ndarray]:
    """Euclidean projection of x onto P via Dykstra's algorithm.

    Returns (distance, witness).  distance = inf when no feasible witness is
    found, which covers empty polyhedra without a separate LP.
    """
    x = np.asarray(x, dtype=float)
    m = P.n_constraints
    if m == 0 or P.contains(x, tol=1e-12):
        return 0.0, x.copy()
    if m == 1:
        y = project_halfspace(x, P.A[0], float(P.b[0]))
        return float(np.linalg.norm(y - x)), y
    y = _dykstra_sweeps(P.A, P.b, x, tol, max_sweeps)
    if P.violation(y) > FEASIBILITY_TOL * (1.0 + float(np.linalg.norm(y))):
        return np.inf, y
    return float(np.linalg.norm(y - x)), y


def stack(polys: list[Polyhedron]) -> Polyhedron:
    """Intersection of polyhedra over a common space."""
    if not polys:
        raise ValueError("need at least one polyhedron")
    A = np.vstack([P.A for P in polys])
    b = np.concatenate([P.b for P in polys])
    return Polyhedron(A, b)
