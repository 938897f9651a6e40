"""Builders for the hard instances and executable checks of their properties.

The resisting sawtooth F is stored in max-of-min tent form (one hat per
consecutive breakpoint pair plus two unbounded edge rays), which is exactly
equal to the min-of-max form with linearly many atoms.  The wedge h and the
d-dimensional hard construction H share one atom table; the rotated variant
G applies an orthonormal change of basis to every atom gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pa_core import AffineAtom, MaxMinFunction
from .subdiff import certify_gas

HARDNESS_CONSTANT = 1.0 / math.sqrt(17.0)

_DUP_TOL = 1e-12


@dataclass(frozen=True)
class ResistingParams:
    """Breakpoints plus the derived gap scale sigma and wedge scale eta.

    sigma = min(smallest breakpoint gap, 1), and 1 when there is a single
    breakpoint; eta must satisfy 0 < eta <= sigma / 32.
    """

    breakpoints: tuple[float, ...]
    sigma: float
    eta: float
    dimension: int

    def __post_init__(self):
        bps = tuple(float(v) for v in self.breakpoints)
        if not bps:
            raise ValueError("need at least one breakpoint")
        if any(b2 - b1 <= 0 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        expected = _sigma_of(bps)
        if abs(self.sigma - expected) > 1e-9:
            raise ValueError(f"sigma must equal {expected!r} for these breakpoints")
        if not (0 < self.eta <= self.sigma / 32 + 1e-15):
            raise ValueError("eta must satisfy 0 < eta <= sigma/32")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "eta", float(self.eta))

    @classmethod
    def from_queries(
        cls, first_coordinates, dimension: int, eta: float | None = None
    ) -> "ResistingParams":
        """Collapse duplicates (within 1e-12), sort, derive sigma and eta."""
        vals = sorted(float(v) for v in first_coordinates)
        if not vals:
            raise ValueError("need at least one query coordinate")
        bps = [vals[0]]
        for v in vals[1:]:
            if v - bps[-1] > _DUP_TOL:
                bps.append(v)
        sigma = _sigma_of(tuple(bps))
        if eta is None:
            eta = sigma / 32.0
        return cls(tuple(bps), sigma, eta, dimension)


def _sigma_of(bps: tuple[float, ...]) -> float:
    if len(bps) == 1:
        return 1.0
    return min(min(b2 - b1 for b1, b2 in zip(bps, bps[1:])), 1.0)


@dataclass(frozen=True)
class RotationPlan:
    """Recorded query matrix V and the orthonormal U = [e1, u2, completion]."""

    V: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        U = np.asarray(self.U, dtype=float)
        d = U.shape[0]
        if U.shape != (d, d):
            raise ValueError("U must be square")
        if np.max(np.abs(U.T @ U - np.eye(d))) > 1e-10:
            raise ValueError("U is not orthonormal to 1e-10")
        e1 = np.zeros(d)
        e1[0] = 1.0
        if not np.array_equal(U[:, 0], e1):
            raise ValueError("first column of U must be exactly e1")
        if V.shape[0] != d:
            raise ValueError("V must live in the same space as U")
        if np.max(np.abs(V.T @ U[:, 1])) > 1e-10:
            raise ValueError("second column of U must annihilate V")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "U", U)


def _e(i: int, d: int) -> np.ndarray:
    v = np.zeros(d)
    v[i] = 1.0
    return v


def build_F(params: ResistingParams) -> MaxMinFunction:
    """The single-coordinate resisting sawtooth in tent normal form.

    Value 0 at every breakpoint, slope +1 to the right of each breakpoint,
    slope -1 on the approach to the next one; 1-Lipschitz with value gap
    at most sigma/4.
    """
    d = params.dimension
    bps, sigma = params.breakpoints, params.sigma
    e1 = _e(0, d)
    terms: list[tuple[AffineAtom, ...]] = []
    terms.append((AffineAtom(-e1, bps[0] - sigma / 2.0),))
    for t in range(len(bps) - 1):
        terms.append(
            (
                AffineAtom(e1, -bps[t]),
                AffineAtom(-e1, bps[t + 1] - sigma / 2.0),
            )
        )
    terms.append((AffineAtom(e1, -bps[-1]),))
    return MaxMinFunction(d, tuple(terms))


def wedge_atom_table(eta: float, d: int = 2, shift: float = 0.0) -> tuple[AffineAtom, ...]:
    """The six expanded atoms of the wedge's inner min, shifted along x1.

    Sums of {x1 + eta/2 - shift, 2*x2 + eta, x2/2 + eta} with
    {-x1 + 5*eta/2 + shift, -eta/2}, in a fixed order.
    """
    e1, e2 = _e(0, d), _e(1, d)
    return (
        AffineAtom(np.zeros(d), 3.0 * eta),                      # flat cap
        AffineAtom(e1, -shift),                                  # rising ramp
        AffineAtom(-e1 + 2.0 * e2, shift + 3.5 * eta),           # steep back wall
        AffineAtom(2.0 * e2, 0.5 * eta),                         # steep floor
        AffineAtom(-e1 + 0.5 * e2, shift + 3.5 * eta),           # shallow back wall
        AffineAtom(0.5 * e2, 0.5 * eta),                         # shallow floor
    )


def build_wedge(eta: float) -> MaxMinFunction:
    """The planar wedge max{x2 - eta/2, min of six expanded atoms}."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    top = (AffineAtom(_e(1, 2), -eta / 2.0),)
    return MaxMinFunction(2, (top, wedge_atom_table(eta)))


def _envelope_terms(params: ResistingParams, d: int) -> list[tuple[AffineAtom, ...]]:
    terms = [(AffineAtom(_e(1, d), -params.eta / 2.0),)]
    for bp in params.breakpoints:
        terms.append(wedge_atom_table(params.eta, d=d, shift=bp))
    return terms


def build_envelope(params: ResistingParams) -> MaxMinFunction:
    """The unfloored envelope max{x2 - eta/2, shifted wedges} in 2D."""
    return MaxMinFunction(2, tuple(_envelope_terms(params, 2)))


def build_H(params: ResistingParams) -> MaxMinFunction:
    """The hard wedge construction: envelope floored at -5, in d >= 2 dims.

    3-Lipschitz, value gap at most 6, and exactly equal to build_F on balls
    of radius eta/8 around every (breakpoint, 0) slice.
    """
    d = params.dimension
    if d < 2:
        raise ValueError("the wedge construction needs dimension >= 2")
    floor = (AffineAtom(np.zeros(d), -5.0),)
    return MaxMinFunction(d, (floor, *_envelope_terms(params, d)))


def build_rotation(queries: list[np.ndarray], d: int) -> RotationPlan:
    """Orthonormal U = [e1, u2, completion] with u2 orthogonal to all queries.

    V collects e1 and the queries after the first (which must be the zero
    start point); u2 is the first standard basis vector's normalized residual
    against span(V), which makes the choice deterministic and lexicographic.
    Requires d >= len(queries) + 1.
    """
    queries = [np.asarray(q, dtype=float).reshape(-1) for q in queries]
    T = len(queries)
    if T == 0:
        raise ValueError("need at least one query")
    if any(q.shape[0] != d for q in queries):
        raise ValueError("query dimension mismatch")
    if d <= T:
        raise ValueError(f"rotation needs d >= T + 1 (got d={d}, T={T})")
    if np.any(queries[0] != 0.0):
        raise ValueError("the first query must be the zero start point")
    cols = [_e(0, d)] + queries[1:]
    V = np.column_stack(cols)
    # Orthonormal basis Q of span(V), then Gram-Schmidt over the standard
    # basis picks u2 and the completion deterministically.
    Q: list[np.ndarray] = []
    for j in range(V.shape[1]):
        w = V[:, j].copy()
        for q in Q:
            w -= (q @ w) * q
        nrm = float(np.linalg.norm(w))
        if nrm > 1e-12:
            Q.append(w / nrm)
    u2 = None
    for j in range(d):
        w = _e(j, d)
        for q in Q:
            w -= (q @ w) * q
        nrm = float(np.linalg.norm(w))
        if nrm > 1e-9:
            u2 = w / nrm
            break
    if u2 is None:
        raise ValueError("queries span the whole space; no free direction left")
    basis = [_e(0, d), u2]
    completion: list[np.ndarray] = []
    for j in range(d):
        w = _e(j, d)
        for q in basis + completion:
            w -= (q @ w) * q
        nrm = float(np.linalg.norm(w))
        if nrm > 1e-9:
            completion.append(w / nrm)
        if len(completion) == d - 2:
            break
    U = np.column_stack(basis + completion)
    U[:, 0] = _e(0, d)
    return RotationPlan(V=V, U=U)


def build_G(H: MaxMinFunction, plan: RotationPlan) -> MaxMinFunction:
    """Compose with the rotation: every atom gradient g becomes U g.

    Then G(x) = H(U^T x) exactly, and subdifferentials pull back through U.
    """
    U = plan.U
    if U.shape[0] != H.dimension:
        raise ValueError("rotation dimension does not match the function")
    terms = tuple(
        tuple(AffineAtom(U @ a.gradient, a.offset) for a in term) for term in H.terms
    )
    return MaxMinFunction(H.dimension, terms)


def build_tester_f2(a: float, b: float) -> MaxMinFunction:
    """1D decoy min{x, a + 4|x - m|} with kink center m = (a+b)/2.

    Coincides with the identity away from [a, b] and plants a stationary
    kink inside it; 4-Lipschitz.
    """
    if not a < b:
        raise ValueError("need a < b")
    m = (a + b) / 2.0
    one = np.ones(1)
    terms = (
        (AffineAtom(one, 0.0), AffineAtom(4.0 * one, a - 4.0 * m)),
        (AffineAtom(one, 0.0), AffineAtom(-4.0 * one, a + 4.0 * m)),
    )
    return MaxMinFunction(1, terms)


# -- numerical constant of the hardness bound ---------------------------------


def min_norm_box_constant(grid: int = 33, rounds: int = 60) -> tuple[float, np.ndarray]:
    """Grid-plus-refinement minimum of (t+(1-t)v1)^2 + (1-t)^2 v2^2.

    Box [0,1] x [-1,0] x [1/2,2]; the minimum is 1/17, attained by mixing
    the unit first-coordinate direction with the corner (-1, 1/2).
    """
    lo = np.array([0.0, -1.0, 0.5])
    hi = np.array([1.0, 0.0, 2.0])
    cur_lo, cur_hi = lo.copy(), hi.copy()
    best_arg = (cur_lo + cur_hi) / 2.0
    best_val = np.inf
    for _ in range(rounds):
        axes = [np.linspace(cur_lo[i], cur_hi[i], grid) for i in range(3)]
        T, V1, V2 = np.meshgrid(*axes, indexing="ij")
        Q = (T + (1 - T) * V1) ** 2 + (1 - T) ** 2 * V2**2
        flat = int(np.argmin(Q))
        idx = np.unravel_index(flat, Q.shape)
        val = float(Q[idx])
        arg = np.array([T[idx], V1[idx], V2[idx]])
        if val < best_val:
            best_val, best_arg = val, arg
        width = (cur_hi - cur_lo) * 0.35
        cur_lo = np.clip(arg - width / 2.0, lo, hi)
        cur_hi = np.clip(arg + width / 2.0, lo, hi)
    return best_val, best_arg


# -- lemma verification suite --------------------------------------------------


@dataclass(frozen=True)
class LemmaResult:
    lemma: str
    trials: int
    status: str
    counterexample: str | None = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass(frozen=True)
class LemmaReport:
    results: tuple[LemmaResult, ...]

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_text(self) -> str:
        lines = ["lemma-report 1"]
        for r in self.results:
            line = f"lemma {r.lemma} trials {r.trials} status {r.status}"
            if r.counterexample:
                line += f" counterexample {r.counterexample}"
            lines.append(line)
        return "\n".join(lines) + "\n"


def _wedge_samples(rng: np.random.Generator, n: int, eta: float) -> np.ndarray:
    """Mixture of wedge-scale and order-one points in the plane."""
    n_near = n // 2
    near = rng.uniform(-12 * eta, 12 * eta, size=(n_near, 2))
    far = rng.uniform(-1.5, 1.5, size=(n - n_near, 2))
    return np.vstack([near, far])


def _in_ambiguity_region(P: np.ndarray, eta: float, slack: float = 0.0) -> np.ndarray:
    x, y = P[:, 0], P[:, 1]
    upper = eta / 2.0 + np.minimum(2.0 * y, y / 2.0)
    return (y - eta / 2.0 <= x + slack) & (x <= upper + slack)


def verify_lemmas(
    params: ResistingParams,
    trials: int,
    seed: int,
    delta: float = 0.2,
) -> LemmaReport:
    """Randomized and LP-backed checks of the wedge construction's properties.

    Returns one row per property with a counterexample when a check fails.
    Trials for the distance-floor check are capped since each point costs an
    exact certification.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    eta = params.eta
    streams = np.random.SeedSequence(seed).spawn(8)
    rngs = [np.random.default_rng(s) for s in streams]
    h = build_wedge(eta)
    F = build_F(params)
    H = build_H(params)
    envelope = build_envelope(params)
    d = params.dimension
    results = []

    # The flat-cap pattern of the wedge min never attains the max-min value.
    from .pa_core import enumerate_pieces

    P = _wedge_samples(rngs[0], trials, eta)
    va = P @ h._G.T + h._B
    cap_col = 1  # flat-cap atom is first in term 1, after the single top atom
    others = va[:, cap_col + 1 :]
    top = va[:, 0]
    strictly_attains = np.all(va[:, cap_col : cap_col + 1] < others, axis=1) & (
        va[:, cap_col] >= top
    )
    pieces = enumerate_pieces(h)
    cap_piece_present = any(p.term_index == 1 and p.atom_index == 0 for p in pieces)
    bad = np.nonzero(strictly_attains)[0]
    if cap_piece_present or bad.size:
        ce = f"point={P[bad[0]].tolist()}" if bad.size else "nonempty region"
        results.append(LemmaResult("gap-pattern-empty", trials, "fail", ce))
    else:
        results.append(LemmaResult("gap-pattern-empty", trials, "pass"))

    # Ambiguity region: closed-form membership, value identity, bounding box.
    P = rngs[1].uniform([-3 * eta, -2 * eta], [3 * eta, 3 * eta], size=(trials, 2))
    member = _in_ambiguity_region(P, eta)
    vals = h.values(P[member])
    ok_value = vals == P[member, 0]
    in_box = (
        (P[member, 0] >= -1.5 * eta - 1e-12)
        & (P[member, 0] <= 1.5 * eta + 1e-12)
        & (P[member, 1] >= -eta - 1e-12)
        & (P[member, 1] <= 2 * eta + 1e-12)
    )
    ok = ok_value & in_box
    if np.all(ok):
        results.append(LemmaResult("ambiguity-region-box", trials, "pass"))
    else:
        i = int(np.nonzero(~ok)[0][0])
        results.append(
            LemmaResult(
                "ambiguity-region-box",
                trials,
                "fail",
                f"point={P[member][i].tolist()}",
            )
        )

    # Outside the ambiguity region every gradient sits in [-1,0] x [1/2,2].
    from .pa_core import gradients_at

    P = _wedge_samples(rngs[2], trials, eta)
    outside = ~_in_ambiguity_region(P, eta, slack=1e-12)
    grads, unique = gradients_at(h, P)
    sel = outside & unique
    g = grads[sel]
    ok = (
        (g[:, 0] >= -1.0 - 1e-12)
        & (g[:, 0] <= 1e-12)
        & (g[:, 1] >= 0.5 - 1e-12)
        & (g[:, 1] <= 2.0 + 1e-12)
    )
    if np.all(ok):
        results.append(LemmaResult("off-region-gradient-box", trials, "pass"))
    else:
        i = int(np.nonzero(~ok)[0][0])
        results.append(
            LemmaResult(
                "off-region-gradient-box",
                trials,
                "fail",
                f"point={P[sel][i].tolist()} gradient={g[i].tolist()}",
            )
        )

    # Around each breakpoint the local ramp separates strictly from the rest.
    n_per = max(1, trials // max(1, len(params.breakpoints)))
    sep_fail = None
    total_sep = 0
    for t, bp in enumerate(params.breakpoints):
        from .subdiff import sample_ball

        Y = sample_ball(rngs[3], np.array([bp, 0.0]), eta / 8.0, n_per)
        total_sep += n_per
        u = Y[:, 0] - bp
        wedge_mins = []
        for s, bp2 in enumerate(params.breakpoints):
            va2 = Y @ np.array(
                [a.gradient[:2] for a in wedge_atom_table(eta, d=2, shift=bp2)]
            ).T + np.array([a.offset for a in wedge_atom_table(eta, d=2, shift=bp2)])
            wedge_mins.append(np.min(va2, axis=1))
        wedge_mins = np.array(wedge_mins)
        own = wedge_mins[t]
        top = Y[:, 1] - eta / 2.0
        ok = (own == u) & (own > top)
        if len(params.breakpoints) > 1:
            rest = np.max(np.delete(wedge_mins, t, axis=0), axis=0)
            ok &= top > rest
        if not np.all(ok) and sep_fail is None:
            i = int(np.nonzero(~ok)[0][0])
            sep_fail = f"breakpoint={bp} point={Y[i].tolist()}"
    results.append(
        LemmaResult(
            "breakpoint-ball-separation",
            total_sep,
            "fail" if sep_fail else "pass",
            sep_fail,
        )
    )

    # Local agreement of the sawtooth and the wedge construction.
    n_per = max(1, trials // max(1, len(params.breakpoints)))
    agree_fail = None
    total_agree = 0
    for bp in params.breakpoints:
        from .subdiff import sample_ball

        Y2 = sample_ball(rngs[4], np.array([bp, 0.0]), eta / 8.0, n_per)
        if d > 2:
            tail = rngs[4].standard_normal((n_per, d - 2))
            Y = np.hstack([Y2, tail])
        else:
            Y = Y2
        total_agree += n_per
        fv = F.values(Y)
        hv = H.values(Y)
        ok = fv == hv
        if not np.all(ok) and agree_fail is None:
            i = int(np.nonzero(~ok)[0][0])
            agree_fail = f"point={Y[i].tolist()} F={fv[i]!r} H={hv[i]!r}"
    results.append(
        LemmaResult(
            "local-model-agreement",
            total_agree,
            "fail" if agree_fail else "pass",
            agree_fail,
        )
    )

    # Where H >= -1, the floor stays inactive on a 2*delta ball.
    n_flat = min(trials, 20_000)
    X2 = _region_above(rngs[5], H, params, n_flat, level=-1.0)
    from .subdiff import sample_ball as _sb

    offs = _sb(rngs[5], np.zeros(d), 2.0 * delta, X2.shape[0])
    Y = X2 + offs
    hv = H.values(Y)
    ev = envelope.values(Y[:, :2])
    ok = hv == ev
    if np.all(ok):
        results.append(LemmaResult("floor-inactive-near-queries", int(X2.shape[0]), "pass"))
    else:
        i = int(np.nonzero(~ok)[0][0])
        results.append(
            LemmaResult(
                "floor-inactive-near-queries",
                int(X2.shape[0]),
                "fail",
                f"point={Y[i].tolist()}",
            )
        )

    # Distance floor: no approximate stationarity above value -1.
    n_dist = min(trials, 48)
    Xd = _region_above(rngs[6], H, params, n_dist, level=-1.0)
    floor_fail = None
    for row in Xd:
        cert = certify_gas(H, row, epsilon=0.0, delta=delta)
        if cert.distance < HARDNESS_CONSTANT - 1e-8:
            floor_fail = f"point={row.tolist()} distance={cert.distance!r}"
            break
    results.append(
        LemmaResult(
            "stationarity-distance-floor",
            int(Xd.shape[0]),
            "fail" if floor_fail else "pass",
            floor_fail,
        )
    )

    # The min-norm constant of the gradient box mixed with e1.
    val, arg = min_norm_box_constant()
    if abs(val - 1.0 / 17.0) <= 1e-6:
        results.append(LemmaResult("min-norm-box-constant", 1, "pass"))
    else:
        results.append(
            LemmaResult(
                "min-norm-box-constant", 1, "fail", f"min={val!r} at {arg.tolist()}"
            )
        )

    return LemmaReport(tuple(results))


def _region_above(
    rng: np.random.Generator,
    H: MaxMinFunction,
    params: ResistingParams,
    n: int,
    level: float,
) -> np.ndarray:
    """Rejection-sample n points with H(x) >= level, mixing scales."""
    d = H.dimension
    lo_bp, hi_bp = min(params.breakpoints), max(params.breakpoints)
    out = []
    need = n
    while need > 0:
        m = max(4 * need, 64)
        X = np.empty((m, d))
        X[:, 0] = rng.uniform(lo_bp - 1.0, hi_bp + 1.0, m)
        X[:, 1] = rng.uniform(-1.0, 2.0, m)
        if d > 2:
            X[:, 2:] = rng.standard_normal((m, d - 2))
        keep = H.values(X) >= level
        got = X[keep]
        out.append(got[:need])
        need -= got[:need].shape[0]
    return np.vstack(out)
