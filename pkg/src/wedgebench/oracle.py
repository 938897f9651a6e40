"""Local oracle and the adaptive resisting adversary.

The oracle answers a query with a germ: an exact local copy of the function
on an undisclosed ball.  Algorithms only ever see the algorithm-facing view
(local function and value); the validity radius stays server-side, which is
what makes the resisting construction work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constructions import ResistingParams, RotationPlan, build_G, build_H, build_rotation
from .pa_core import (
    AffineAtom,
    MaxMinFunction,
    function_from_text,
    function_to_text,
    lipschitz_certificate,
)

_TIE = 1e-12


@dataclass(frozen=True, eq=False)
class GermView:
    """What an algorithm receives: the local function and the value, no radius."""

    local_function: MaxMinFunction
    value_at_query: float

    def to_text(self) -> str:
        return f"value {self.value_at_query:.17g}\n" + function_to_text(self.local_function)

    def gradients(self, x: np.ndarray) -> np.ndarray:
        """Active gradients of the local copy at x, in branch order."""
        from .pa_core import essentially_active_gradients

        return essentially_active_gradients(self.local_function, x).generators

    def equals(self, other: "GermView", tol: float = 1e-9) -> bool:
        a, b = self.local_function, other.local_function
        if a.dimension != b.dimension or len(a.terms) != len(b.terms):
            return False
        for ta, tb in zip(a.terms, b.terms):
            if len(ta) != len(tb):
                return False
            for atom_a, atom_b in zip(ta, tb):
                if not np.array_equal(atom_a.gradient, atom_b.gradient):
                    return False
                if abs(atom_a.offset - atom_b.offset) > tol:
                    return False
        return abs(self.value_at_query - other.value_at_query) <= tol


@dataclass(frozen=True, eq=False)
class LocalGerm:
    """Germ plus its hidden validity radius (test-only, never shown to algorithms)."""

    local_function: MaxMinFunction
    value_at_query: float
    hidden_radius: float

    def view(self) -> GermView:
        return GermView(self.local_function, self.value_at_query)


def local_oracle(f: MaxMinFunction, x) -> LocalGerm:
    """Exact local copy of f around x with a positive validity radius.

    The germ keeps the atoms attaining each active term's min and the terms
    attaining the max; the radius is half of a certified lower bound on the
    largest constant-activity ball (capped at 1), so the copy equals f on
    the entire hidden ball.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != f.dimension:
        raise ValueError(f"point has dimension {x.shape[0]}, expected {f.dimension}")
    vals = f._G @ x + f._B
    mins = np.minimum.reduceat(vals, f._starts)
    fx = float(np.max(mins))
    tol = _TIE * f.scale() * (1.0 + float(np.linalg.norm(x)))
    L = max(lipschitz_certificate(f), 1e-12)
    germ_terms = []
    min_gap = 2.0
    for ti, term in enumerate(f.terms):
        s = int(f._starts[ti])
        if mins[ti] < fx - tol:
            min_gap = min(min_gap, (fx - float(mins[ti])) / (2.0 * L))
            continue
        atoms = []
        for ai, atom in enumerate(term):
            v = float(vals[s + ai])
            if v <= mins[ti] + tol:
                atoms.append(atom)
            else:
                denom = max(float(f._atom_norms[s + ai]) + L, 1e-12)
                min_gap = min(min_gap, (v - float(mins[ti])) / denom)
        germ_terms.append(tuple(atoms))
    germ = MaxMinFunction(f.dimension, tuple(germ_terms))
    return LocalGerm(germ, fx, min(min_gap, 2.0) / 2.0)


@dataclass(frozen=True)
class AdversaryConfig:
    """Query budget, dimension, and which theorem's regime applies."""

    T: int
    d: int
    mode: str  # "gzr" (d >= 2) or "general" (d >= T + 1)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("query budget T must be positive")
        if self.mode == "gzr":
            if self.d < 2:
                raise ValueError("gzr mode needs d >= 2")
        elif self.mode == "general":
            if self.d < self.T + 1:
                raise ValueError("general mode needs d >= T + 1")
        else:
            raise ValueError(f"unknown adversary mode {self.mode!r}")


@dataclass
class Transcript:
    """Ordered query/answer log; the adversary's entire state."""

    dimension: int
    queries: list[np.ndarray] = field(default_factory=list)
    germs: list[GermView] = field(default_factory=list)
    phase: str = "collecting"

    def append(self, query: np.ndarray, germ: GermView) -> None:
        if self.phase != "collecting":
            raise RuntimeError("transcript is no longer collecting")
        self.queries.append(np.asarray(query, dtype=float).copy())
        self.germs.append(germ)

    def __len__(self) -> int:
        return len(self.queries)


def adversary_answer(state: Transcript, config: AdversaryConfig, x) -> LocalGerm:
    """The resisting answer: value 0 and the germ y -> y1 - x1.

    Commits to nothing beyond the first coordinate; the actual function is
    chosen only at materialization.  The hidden radius is undefined until
    then (NaN).
    """
    if state.phase != "collecting":
        raise RuntimeError("adversary already materialized; no further queries")
    if len(state) >= config.T:
        raise RuntimeError(f"query budget T={config.T} exhausted")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != config.d:
        raise ValueError(f"query has dimension {x.shape[0]}, expected {config.d}")
    e1 = np.zeros(config.d)
    e1[0] = 1.0
    germ_fn = MaxMinFunction(config.d, ((AffineAtom(e1, -float(x[0])),),))
    germ = LocalGerm(germ_fn, 0.0, math.nan)
    state.append(x, germ.view())
    return germ


def materialize(
    state: Transcript, config: AdversaryConfig
) -> tuple[MaxMinFunction, RotationPlan | None]:
    """Choose the hard function consistent with every recorded answer.

    gzr mode returns the wedge construction on the recorded breakpoints;
    general mode additionally hides the wedge coordinate behind a rotation
    built from the recorded queries.  Verifies that replaying the local
    oracle on the result reproduces each recorded answer.
    """
    if state.phase != "collecting":
        raise RuntimeError("transcript already materialized")
    if len(state) == 0:
        raise ValueError("cannot materialize from an empty transcript")
    params = ResistingParams.from_queries(
        [float(q[0]) for q in state.queries], dimension=config.d
    )
    H = build_H(params)
    plan = None
    if config.mode == "general":
        plan = build_rotation(state.queries, config.d)
        fn = build_G(H, plan)
    else:
        fn = H
    for q, recorded in zip(state.queries, state.germs):
        value = fn.value(q)
        if abs(value) > 1e-9:
            raise AssertionError(
                f"materialized function value {value!r} at recorded query {q.tolist()}"
            )
        germ = local_oracle(fn, q).view()
        if not germ.equals(recorded):
            raise AssertionError(
                f"materialized germ at {q.tolist()} differs from the recorded answer"
            )
    state.phase = "materialized"
    return fn, plan


# -- transcript serialization --------------------------------------------------


def transcript_to_text(t: Transcript) -> str:
    lines = ["transcript 1", f"dim {t.dimension}", f"phase {t.phase}"]
    for i, (q, germ) in enumerate(zip(t.queries, t.germs), start=1):
        lines.append(f"step {i}")
        lines.append("query " + " ".join(f"{v:.17g}" for v in q))
        lines.append(f"value {germ.value_at_query:.17g}")
        for ln in function_to_text(germ.local_function).splitlines():
            lines.append("  " + ln)
    return "\n".join(lines) + "\n"


def transcript_from_text(text: str) -> Transcript:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "transcript 1":
        raise ValueError("not a transcript document")
    dim = None
    phase = "collecting"
    t: Transcript | None = None
    i = 1
    cur_query = None
    cur_value = None
    cur_fn_lines: list[str] = []

    def flush():
        nonlocal cur_query, cur_value, cur_fn_lines
        if cur_query is not None:
            fn = function_from_text("\n".join(cur_fn_lines))
            t.append(np.array(cur_query), GermView(fn, cur_value))
        cur_query, cur_value, cur_fn_lines = None, None, []

    for ln in lines[1:]:
        stripped = ln.strip()
        if not stripped:
            continue
        if ln.startswith("  "):
            cur_fn_lines.append(stripped)
            continue
        if stripped.startswith("dim "):
            dim = int(stripped.split()[1])
            t = Transcript(dimension=dim)
        elif stripped.startswith("phase "):
            phase = stripped.split()[1]
        elif stripped.startswith("step "):
            flush()
        elif stripped.startswith("query "):
            cur_query = [float(v) for v in stripped.split()[1:]]
        elif stripped.startswith("value "):
            cur_value = float(stripped.split()[1])
        else:
            raise ValueError(f"unrecognized transcript line: {stripped!r}")
    if t is None:
        raise ValueError("transcript missing dimension line")
    flush()
    t.phase = phase
    return t
