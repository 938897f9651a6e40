"""Algorithm classes, a zero-respecting trajectory checker, and optimizers.

Germ-facing algorithms interact with an oracle only through query points and
germ views, which is what the lower-bound experiments require.  The
conceptual descent scheme is white-box (it needs the exact
delta-subdifferential) and is kept out of the adversary experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .oracle import GermView
from .pa_core import MaxMinFunction, essentially_active_gradients, gradients_at
from .subdiff import certify_gas, min_norm_point, sample_ball

History = list[tuple[np.ndarray, GermView]]


class Algorithm:
    """Query strategy: next_query(history) -> point; first query must be 0.

    deterministic members ignore the rng stream entirely; gzr members only
    move along coordinates their germs have shown to matter.
    """

    name: str = "algorithm"
    deterministic: bool = True
    gzr: bool = True

    def __init__(self, dimension: int):
        self.dimension = dimension

    def next_query(self, history: History, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        return {}


def _lex_smallest(gens: np.ndarray) -> np.ndarray:
    order = sorted(range(gens.shape[0]), key=lambda i: tuple(gens[i]))
    return gens[order[0]]


def _germ_gradient(x: np.ndarray, germ: GermView) -> np.ndarray:
    return _lex_smallest(germ.gradients(x))


class SubgradientDescent(Algorithm):
    """Fixed-step descent along the lexicographically smallest germ gradient."""

    name = "subgradient_descent"

    def __init__(self, dimension: int, step: float = 0.25):
        super().__init__(dimension)
        if step <= 0:
            raise ValueError("step must be positive")
        self.step = float(step)

    def next_query(self, history: History, rng=None) -> np.ndarray:
        if not history:
            return np.zeros(self.dimension)
        x, germ = history[-1]
        return x - self.step * _germ_gradient(x, germ)

    def params(self) -> dict:
        return {"step": self.step}


class NormalizedSubgradient(Algorithm):
    """Descent with unit-normalized germ gradients (fixed step length)."""

    name = "normalized_subgradient"

    def __init__(self, dimension: int, step: float = 0.25):
        super().__init__(dimension)
        if step <= 0:
            raise ValueError("step must be positive")
        self.step = float(step)

    def next_query(self, history: History, rng=None) -> np.ndarray:
        if not history:
            return np.zeros(self.dimension)
        x, germ = history[-1]
        g = _germ_gradient(x, germ)
        nrm = float(np.linalg.norm(g))
        if nrm == 0.0:
            return x.copy()
        return x - (self.step / nrm) * g

    def params(self) -> dict:
        return {"step": self.step}


class DecayingSubgradient(Algorithm):
    """Subgradient steps shrinking like step / sqrt(t)."""

    name = "decaying_subgradient"

    def __init__(self, dimension: int, step: float = 0.25):
        super().__init__(dimension)
        if step <= 0:
            raise ValueError("step must be positive")
        self.step = float(step)

    def next_query(self, history: History, rng=None) -> np.ndarray:
        if not history:
            return np.zeros(self.dimension)
        t = len(history)
        x, germ = history[-1]
        return x - (self.step / math.sqrt(t)) * _germ_gradient(x, germ)

    def params(self) -> dict:
        return {"step": self.step}


class CoordinateProbe(Algorithm):
    """Deterministic but not zero-respecting: cycles probes through coordinates.

    Moves against the germ gradient and additionally nudges one unexplored
    coordinate per step, so it exercises the rotation argument in the
    general-dimension regime.
    """

    name = "coordinate_probe"
    gzr = False

    def __init__(self, dimension: int, step: float = 0.25, probe: float = 0.05):
        super().__init__(dimension)
        if step <= 0 or probe <= 0:
            raise ValueError("step and probe must be positive")
        self.step = float(step)
        self.probe = float(probe)

    def next_query(self, history: History, rng=None) -> np.ndarray:
        if not history:
            return np.zeros(self.dimension)
        t = len(history)
        x, germ = history[-1]
        nxt = x - self.step * _germ_gradient(x, germ)
        if self.dimension > 1:
            j = 1 + (t - 1) % (self.dimension - 1)
            nxt = nxt + self.probe * _unit(j, self.dimension)
        return nxt

    def params(self) -> dict:
        return {"step": self.step, "probe": self.probe}


def _unit(j: int, d: int) -> np.ndarray:
    v = np.zeros(d)
    v[j] = 1.0
    return v


GERM_ZOO = {
    cls.name: cls
    for cls in (SubgradientDescent, NormalizedSubgradient, DecayingSubgradient, CoordinateProbe)
}


def make_algorithm(name: str, dimension: int, **params) -> Algorithm:
    if name not in GERM_ZOO:
        raise ValueError(f"unknown germ-facing algorithm {name!r}")
    return GERM_ZOO[name](dimension, **params)


def run_germ_algorithm(
    answer,
    algorithm: Algorithm,
    T: int,
    rng: np.random.Generator | None = None,
) -> tuple[list[np.ndarray], list[GermView]]:
    """Drive a germ-facing algorithm for T queries against answer(x) -> view."""
    history: History = []
    queries: list[np.ndarray] = []
    germs: list[GermView] = []
    for t in range(T):
        x = np.asarray(algorithm.next_query(history, rng), dtype=float)
        if t == 0 and np.any(x != 0.0):
            raise RuntimeError(f"{algorithm.name} must start from the zero point")
        view = answer(x)
        history.append((x, view))
        queries.append(x)
        germs.append(view)
    return queries, germs


# -- trajectory properties ------------------------------------------------------


def gzr_check(f: MaxMinFunction, trajectory: list[np.ndarray]) -> tuple[bool, int | None]:
    """Whether iterate supports stay within coordinates touched earlier.

    Coordinate j counts as touched at x when some essentially active piece
    gradient at x has a nonzero j-component.  Returns (ok, first violating
    1-based iterate index).
    """
    touched: set[int] = set()
    for t, x in enumerate(trajectory, start=1):
        x = np.asarray(x, dtype=float)
        supp = {int(j) for j in np.nonzero(x != 0.0)[0]}
        if not supp.issubset(touched):
            return False, t
        gens = essentially_active_gradients(f, x).generators
        for j in np.nonzero(np.any(gens != 0.0, axis=0))[0]:
            touched.add(int(j))
    return True, None


# -- run records -----------------------------------------------------------------


@dataclass
class RunResult:
    """Trajectory of one optimizer run with per-step diagnostics.

    distances are GAS distances at the run's (epsilon, delta) when the runner
    certifies exactly, or sampled estimates for the sampling scheme (the
    harness re-certifies those exactly).
    """

    algorithm: str
    params: dict
    trajectory: list[np.ndarray]
    values: list[float]
    distances: list[float]
    certified: list[bool]
    converged: bool | None
    seed: int | None = None

    @property
    def best_distance(self) -> float:
        return min(self.distances) if self.distances else math.inf

    @property
    def step_count(self) -> int:
        return max(0, len(self.trajectory) - 1)


# -- white-box conceptual descent -------------------------------------------------


def goldstein_conceptual(
    f: MaxMinFunction,
    x0,
    epsilon: float,
    delta: float,
    max_steps: int = 1000,
) -> RunResult:
    """Descent along the exact min-norm element of the delta-subdifferential.

    Moves x <- x - delta * g / ||g|| until the point certifies, which takes
    at most (f(x0) - inf f) / (delta * epsilon) steps since every move
    decreases f by at least delta * ||g||.  White-box: needs the function,
    not a germ oracle.  Exhausting max_steps yields converged=False, not an
    exception.
    """
    if epsilon <= 0 or delta <= 0:
        raise ValueError("epsilon and delta must be positive")
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    traj = [x.copy()]
    values = [f.value(x)]
    distances: list[float] = []
    certified: list[bool] = []
    converged = False
    for _ in range(max_steps + 1):
        cert = certify_gas(f, x, epsilon, delta)
        distances.append(cert.distance)
        certified.append(cert.satisfied)
        if cert.satisfied:
            converged = True
            break
        if len(traj) - 1 >= max_steps:
            break
        g = cert.min_norm_vector()
        nrm = float(np.linalg.norm(g))
        x = x - (delta / nrm) * g
        fx = f.value(x)
        if fx > values[-1] - delta * cert.distance + 1e-9:
            raise RuntimeError(
                "descent step failed to decrease by delta * ||g||; "
                "the generator hull must be wrong"
            )
        traj.append(x.copy())
        values.append(fx)
    return RunResult(
        algorithm="goldstein_conceptual",
        params={"epsilon": epsilon, "delta": delta, "max_steps": max_steps},
        trajectory=traj,
        values=values,
        distances=distances,
        certified=certified,
        converged=converged,
    )


# -- randomized sampling scheme ----------------------------------------------------


def gradient_sampling(
    f_or_oracle,
    x0,
    delta: float,
    samples: int,
    epsilon: float,
    max_steps: int = 1000,
    seed: int = 0,
) -> RunResult:
    """Random polyhedral approximation of the delta-subdifferential.

    Per step: draw `samples` points in the delta ball, take germ gradients at
    the differentiable ones, step against the min-norm point of their hull,
    and stop once that sampled norm drops to epsilon.  The sampled hull is a
    subset of the exact one, so stopping certifies the exact distance too.
    """
    if samples < 1:
        raise ValueError("need at least one sample per step")
    if epsilon < 0 or delta <= 0:
        raise ValueError("need epsilon >= 0 and delta > 0")
    rng = np.random.default_rng(seed)
    white_box = isinstance(f_or_oracle, MaxMinFunction)
    if white_box:
        fn = f_or_oracle
        value_at = fn.value

        def grads_at(Z):
            g, uniq = gradients_at(fn, Z)
            return g[uniq] if np.any(uniq) else g

    else:
        oracle = f_or_oracle

        def value_at(x):
            return oracle(x).value_at_query

        def grads_at(Z):
            out = []
            for z in Z:
                view = oracle(z)
                out.append(_lex_smallest(view.gradients(z)))
            return np.array(out)

    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    traj = [x.copy()]
    values = [float(value_at(x))]
    distances: list[float] = []
    certified: list[bool] = []
    converged = False
    for _ in range(max_steps + 1):
        Z = sample_ball(rng, x, delta, samples)
        gens = np.unique(np.round(grads_at(Z), 15), axis=0)
        dist, w = min_norm_point(gens)
        distances.append(dist)
        certified.append(dist <= epsilon)
        if dist <= epsilon:
            converged = True
            break
        if len(traj) - 1 >= max_steps:
            break
        step_vec = gens.T @ w
        nrm = float(np.linalg.norm(step_vec))
        if nrm == 0.0:
            converged = True
            certified[-1] = True
            break
        x = x - (delta / nrm) * step_vec
        traj.append(x.copy())
        values.append(float(value_at(x)))
    return RunResult(
        algorithm="gradient_sampling",
        params={"delta": delta, "samples": samples, "epsilon": epsilon, "max_steps": max_steps},
        trajectory=traj,
        values=values,
        distances=distances,
        certified=certified,
        converged=converged,
        seed=seed,
    )


def two_query_gas_finder(f: MaxMinFunction, delta: float):
    """The fixed-instance two-query procedure: query 0, then delta * e1.

    Returns the two points with their exact certificates at (0-tolerant)
    epsilon = 0.  Against a fixed sawtooth with a reachable kink at least one
    point certifies; against an adaptive adversary the guarantee is void.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    d = f.dimension
    x0 = np.zeros(d)
    x1 = delta * _unit(0, d)
    cert0 = certify_gas(f, x0, 0.0, delta)
    cert1 = certify_gas(f, x1, 0.0, delta)
    return (x0, x1), (cert0, cert1)
