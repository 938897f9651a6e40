"""Goldstein delta-subdifferential machinery for max-min piecewise-affine f.

Generator sets are exact for this function class: the delta-subdifferential
at x is the convex hull of the gradients of all full-dimensional pieces whose
region closure meets the closed delta-ball.  Distances to the hull are
computed with a Wolfe-style active-set method.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import pa_core
from .geometry import Polyhedron, project_polyhedron, stack
from .pa_core import (
    ACTIVITY_TOL,
    GradientPolytope,
    MaxMinFunction,
    active_branches,
    enumerate_pieces,
    gradients_at,
)

WOLFE_TOL = 1e-10  # tolerance on the squared distance
_MAX_MAJOR_CYCLES = 1000


@dataclass(frozen=True, eq=False)
class StationarityCertificate:
    """Distance from 0 to a generator hull at given (epsilon, delta).

    witness holds convex-combination weights over ``generators`` attaining
    the min-norm point; verdict is "<kind>-satisfied" iff distance <= epsilon.
    """

    epsilon: float
    delta: float
    distance: float
    witness: np.ndarray
    verdict: str
    kind: str
    generators: GradientPolytope

    @property
    def satisfied(self) -> bool:
        return self.verdict.endswith("-satisfied")

    def min_norm_vector(self) -> np.ndarray:
        return self.generators.generators.T @ self.witness


def _simplex_projection(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, v.size + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _affine_minimizer(C: np.ndarray) -> np.ndarray:
    """Weights of the min-norm point of the affine hull of rows of C."""
    k = C.shape[0]
    M = np.ones((k, k)) + C @ C.T
    v, *_ = np.linalg.lstsq(M, np.ones(k), rcond=None)
    s = float(np.sum(v))
    if abs(s) < 1e-300:
        return np.full(k, 1.0 / k)
    return v / s


def min_norm_point(S: GradientPolytope | np.ndarray) -> tuple[float, np.ndarray]:
    """dist(0, conv S) and attaining convex weights (Wolfe active set).

    Deterministic given generator order; falls back to projected gradient on
    the weight simplex if the active-set loop fails to settle.
    """
    P = S.generators if isinstance(S, GradientPolytope) else np.atleast_2d(np.asarray(S, dtype=float))
    k = P.shape[0]
    scale2 = max(1.0, float(np.max(np.sum(P * P, axis=1))))
    norms2 = np.sum(P * P, axis=1)
    j0 = int(np.argmin(norms2))
    corral = [j0]
    w_c = np.array([1.0])
    x = P[j0].copy()
    for _ in range(_MAX_MAJOR_CYCLES):
        xx = float(x @ x)
        if xx <= WOLFE_TOL * 1e-4:
            break
        scores = P @ x
        s = int(np.argmin(scores))
        if scores[s] >= xx - WOLFE_TOL * 1e-2 * scale2:
            break
        if s in corral:
            break
        corral.append(s)
        w_c = np.append(w_c, 0.0)
        while True:
            C = P[corral]
            alpha = _affine_minimizer(C)
            if np.all(alpha >= -1e-12):
                w_c = np.maximum(alpha, 0.0)
                w_c /= np.sum(w_c)
                x = C.T @ w_c
                break
            neg = alpha < -1e-12
            theta = float(np.min(w_c[neg] / (w_c[neg] - alpha[neg])))
            w_c = w_c + theta * (alpha - w_c)
            keep = w_c > 1e-14
            if np.all(keep):
                keep[int(np.argmin(w_c))] = False
            corral = [c for c, k_ in zip(corral, keep) if k_]
            w_c = w_c[keep]
            w_c /= np.sum(w_c)
            x = P[corral].T @ w_c
    else:
        # Projected gradient fallback on the full simplex.
        w = np.full(k, 1.0 / k)
        Q = P @ P.T
        step = 1.0 / (2.0 * max(1e-12, float(np.linalg.norm(Q, 2))))
        for _ in range(200_000):
            grad = 2.0 * (Q @ w)
            w_new = _simplex_projection(w - step * grad)
            if float(np.linalg.norm(w_new - w)) < 1e-14:
                w = w_new
                break
            w = w_new
        x = P.T @ w
        return float(np.linalg.norm(x)), w
    weights = np.zeros(k)
    for c, wv in zip(corral, w_c):
        weights[c] += wv
    dist = float(np.linalg.norm(x))
    if dist <= 1e-12 * math.sqrt(scale2):
        dist = 0.0
    return dist, weights


def goldstein_generators(f: MaxMinFunction, x, delta: float) -> GradientPolytope:
    """Generators of the Goldstein delta-subdifferential at x.

    Gradients of all full-dimensional pieces whose region closure intersects
    the closed ball B_delta(x); at delta = 0 this coincides with
    essentially_active_gradients.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    idx = active_branches(f, x, delta + ACTIVITY_TOL)
    if not idx:
        raise RuntimeError("no active piece found within the ball")
    gens = np.vstack([f._G[f._branches[i][1]] for i in idx])
    prov = tuple(f.branch_label(i) for i in idx)
    return GradientPolytope(gens, prov)


def certify_gas(f: MaxMinFunction, x, epsilon: float, delta: float) -> StationarityCertificate:
    """Exact GAS verdict for the generator hull at (epsilon, delta)."""
    if epsilon < 0 or delta < 0:
        raise ValueError("epsilon and delta must be nonnegative")
    S = goldstein_generators(f, x, delta)
    dist, weights = min_norm_point(S)
    verdict = "GAS-satisfied" if dist <= epsilon else "GAS-refuted"
    return StationarityCertificate(
        epsilon=float(epsilon),
        delta=float(delta),
        distance=dist,
        witness=weights,
        verdict=verdict,
        kind="GAS",
        generators=S,
    )


def certify_nas(
    f: MaxMinFunction,
    x,
    epsilon: float,
    delta: float,
    max_pieces: int = 32,
) -> StationarityCertificate:
    """Exact NAS verdict: min over feasible activity patterns within the ball.

    A pattern is a set of pieces whose region closures share a point of
    B_delta(x); its candidate distance is dist(0, conv of its gradients).
    Enumeration is exponential in the piece count and refuses instances
    beyond max_pieces.
    """
    if epsilon < 0 or delta < 0:
        raise ValueError("epsilon and delta must be nonnegative")
    x = np.asarray(x, dtype=float)
    pieces = enumerate_pieces(f)
    pieces = [p for p in pieces if p.full_dimensional]
    if len(pieces) > max_pieces:
        raise RuntimeError(
            f"intractable instance: {len(pieces)} pieces exceeds the cap {max_pieces}"
        )
    cap = delta + ACTIVITY_TOL

    def pattern_feasible(sel: tuple[int, ...]) -> bool:
        for cells in itertools.product(*(pieces[i].cells for i in sel)):
            P = stack(list(cells))
            d, _ = project_polyhedron(P, x)
            if d <= cap + 1e-12:
                return True
        return False

    reachable = [i for i in range(len(pieces)) if pattern_feasible((i,))]
    if not reachable:
        raise RuntimeError("no piece region meets the ball; inconsistent data")
    feasible: list[tuple[int, ...]] = [(i,) for i in reachable]
    frontier = list(feasible)
    while frontier:
        nxt = []
        for sel in frontier:
            for j in reachable:
                if j <= sel[-1]:
                    continue
                cand = sel + (j,)
                if pattern_feasible(cand):
                    nxt.append(cand)
        feasible.extend(nxt)
        frontier = nxt
    best = (np.inf, None, None)
    for sel in feasible:
        gens = np.vstack([pieces[i].gradient for i in sel])
        prov = tuple(f"term{pieces[i].term_index}/atom{pieces[i].atom_index}" for i in sel)
        S = GradientPolytope(gens, prov)
        dist, weights = min_norm_point(S)
        if dist < best[0]:
            best = (dist, weights, S)
        if best[0] <= 0.0:
            break
    dist, weights, S = best
    verdict = "NAS-satisfied" if dist <= epsilon else "NAS-refuted"
    return StationarityCertificate(
        epsilon=float(epsilon),
        delta=float(delta),
        distance=float(dist),
        witness=weights,
        verdict=verdict,
        kind="NAS",
        generators=S,
    )


def sample_ball(rng: np.random.Generator, center: np.ndarray, radius: float, n: int) -> np.ndarray:
    """n points uniform in the closed Euclidean ball."""
    d = center.shape[0]
    u = rng.standard_normal((n, d))
    u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
    r = radius * rng.random(n) ** (1.0 / d)
    return center + r[:, None] * u


def sampled_goldstein_distance(
    f: MaxMinFunction, x, delta: float, n: int, seed: int
) -> float:
    """Monte Carlo upper bound on dist(0, delta-subdifferential at x).

    Gradients are collected at differentiable sample points only; the hull of
    a sample subset can only shrink, so the value upper-bounds the exact
    distance and converges to it as n grows.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    Z = sample_ball(rng, x, delta, n)
    grads, unique = gradients_at(f, Z)
    use = grads[unique] if np.any(unique) else grads
    gens = np.unique(np.round(use, 15), axis=0)
    dist, _ = min_norm_point(gens)
    return dist


def segment_gap_estimate(
    f: MaxMinFunction, x, y, n: int, seed: int
) -> float:
    """Monte Carlo mean of f'(z; x - y) over z uniform on [x, y].

    An unbiased estimator of f(x) - f(y); at the measure-zero tie points the
    one-sided max-min derivative is used.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if n < 1:
        raise ValueError("need at least one sample")
    if np.array_equal(x, y):
        raise ValueError("segment endpoints must differ")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    Z = y + u[:, None] * (x - y)
    d = directional_derivatives(f, Z, x - y)
    return float(np.mean(d))


def directional_derivatives(f: MaxMinFunction, Z: np.ndarray, w) -> np.ndarray:
    """Vectorized one-sided derivatives f'(z; w) at the rows of Z."""
    Z = np.asarray(Z, dtype=float)
    w = np.asarray(w, dtype=float)
    va = Z @ f._G.T + f._B
    mins = np.minimum.reduceat(va, f._starts, axis=1)
    fx = np.max(mins, axis=1)
    tol = pa_core.TIE_TOL * f.scale() * (1.0 + np.linalg.norm(Z, axis=1))
    dw = f._G @ w
    atom_active = va <= (mins[:, f._owner] + tol[:, None])
    inner = np.where(atom_active, dw[None, :], np.inf)
    inner_min = np.minimum.reduceat(inner, f._starts, axis=1)
    term_active = mins >= (fx[:, None] - tol[:, None])
    outer = np.where(term_active, inner_min, -np.inf)
    return np.max(outer, axis=1)


# -- serialization ------------------------------------------------------------


def certificate_to_text(cert: StationarityCertificate) -> str:
    lines = [
        "certificate 1",
        f"kind {cert.kind}",
        f"epsilon {cert.epsilon:.17g}",
        f"delta {cert.delta:.17g}",
        f"distance {cert.distance:.17g}",
        f"verdict {cert.verdict}",
        "weights " + " ".join(f"{w:.17g}" for w in cert.witness),
    ]
    return "\n".join(lines) + "\n"


def certificate_from_text(text: str) -> dict:
    """Parse the record back into a plain dict (no generator geometry)."""
    rec: dict = {}
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "certificate 1":
        raise ValueError("not a certificate document")
    for ln in lines[1:]:
        key, _, rest = ln.partition(" ")
        if key in ("epsilon", "delta", "distance"):
            rec[key] = float(rest)
        elif key == "weights":
            rec[key] = [float(v) for v in rest.split()]
        else:
            rec[key] = rest
    return rec
