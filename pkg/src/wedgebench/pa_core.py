"""Exact calculus for piecewise-affine functions in max-of-min normal form.

A function is stored as f(x) = max_t min_a (<g_{t,a}, x> + b_{t,a}).  The
"branch" (t, a) of the outer max / inner min determines an affine piece; the
set where a branch attains the value of f is a finite union of polyhedral
cells, each obtained by fixing one witness atom per competing term.  All
activity questions (Clarke generators, Goldstein generators, germ radii)
reduce to capped distance queries against those cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .geometry import (
    EmptyPolyhedronError,
    INTERIOR_RADIUS,
    Polyhedron,
    project_polyhedron,
    stack,
)

# Tolerance for deciding that a region closure contains / reaches a point.
ACTIVITY_TOL = 1e-9
# Relative tolerance for value ties when identifying attaining branches.
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class AffineAtom:
    """One affine piece <gradient, x> + offset."""

    gradient: np.ndarray
    offset: float

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gradient, dtype=float))
        if g.ndim != 1 or not np.all(np.isfinite(g)) or not math.isfinite(self.offset):
            raise ValueError("atom needs a finite gradient vector and offset")
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "offset", float(self.offset))

    def value(self, x: np.ndarray) -> float:
        return float(self.gradient @ x + self.offset)

    def key(self) -> tuple:
        return (tuple(self.gradient.tolist()), self.offset)


@dataclass(frozen=True, eq=False)
class MaxMinFunction:
    """max over terms of (min over a term's atoms); globally Lipschitz.

    Duplicate atoms (identical gradient and offset) inside a term are
    dropped at construction.  Instances are immutable and safe to share.
    """

    dimension: int
    terms: tuple[tuple[AffineAtom, ...], ...]

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        terms = []
        for term in self.terms:
            seen, atoms = set(), []
            for atom in term:
                if atom.gradient.shape[0] != self.dimension:
                    raise ValueError(
                        f"atom dimension {atom.gradient.shape[0]} != {self.dimension}"
                    )
                k = atom.key()
                if k not in seen:
                    seen.add(k)
                    atoms.append(atom)
            if not atoms:
                raise ValueError("every term needs at least one atom")
            terms.append(tuple(atoms))
        if not terms:
            raise ValueError("need at least one term")
        object.__setattr__(self, "terms", tuple(terms))
        # Flat views used by the vectorized paths.
        G = np.vstack([a.gradient for t in self.terms for a in t])
        B = np.array([a.offset for t in self.terms for a in t])
        starts, owner, n = [], [], 0
        for ti, term in enumerate(self.terms):
            starts.append(n)
            owner.extend([ti] * len(term))
            n += len(term)
        object.__setattr__(self, "_G", G)
        object.__setattr__(self, "_B", B)
        object.__setattr__(self, "_starts", np.array(starts, dtype=int))
        object.__setattr__(self, "_owner", np.array(owner, dtype=int))
        # branches[i] = (term index, flat atom index)
        branches = []
        for ti, term in enumerate(self.terms):
            s = starts[ti]
            branches.extend((ti, s + ai) for ai in range(len(term)))
        object.__setattr__(self, "_branches", tuple(branches))
        object.__setattr__(self, "_atom_norms", np.linalg.norm(G, axis=1))
        object.__setattr__(self, "_fulldim_cache", {})
        object.__setattr__(self, "_rows_cache", {})

    # -- evaluation ---------------------------------------------------------

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dimension:
            raise ValueError(f"point has dimension {x.shape[0]}, expected {self.dimension}")
        vals = self._G @ x + self._B
        return float(np.max(np.minimum.reduceat(vals, self._starts)))

    __call__ = value

    def values(self, X: np.ndarray) -> np.ndarray:
        """Vectorized evaluation over rows of X."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dimension:
            raise ValueError(f"expected points of shape (n, {self.dimension})")
        va = X @ self._G.T + self._B
        return np.max(np.minimum.reduceat(va, self._starts, axis=1), axis=1)

    @property
    def n_branches(self) -> int:
        return len(self._branches)

    def branch(self, i: int) -> tuple[int, int]:
        """(term index, atom index within term) of flat branch i."""
        ti, fa = self._branches[i]
        return ti, fa - int(self._starts[ti])

    def branch_atom(self, i: int) -> AffineAtom:
        ti, ai = self.branch(i)
        return self.terms[ti][ai]

    def branch_label(self, i: int) -> str:
        ti, ai = self.branch(i)
        return f"term{ti}/atom{ai}"

    def scale(self) -> float:
        return 1.0 + float(np.max(np.abs(self._B))) + float(np.max(self._atom_norms))


@dataclass(frozen=True, eq=False)
class PieceSelection:
    """A branch of the max-min together with the region where it attains.

    The region is a finite union of polyhedral cells: one witness atom per
    competing term.  Cells of one piece may overlap; regions of distinct
    pieces overlap only on measure-zero sets.
    """

    term_index: int
    atom_index: int
    gradient: np.ndarray
    offset: float
    cells: tuple[Polyhedron, ...]
    full_dimensional: bool

    def contains(self, x, tol: float = ACTIVITY_TOL) -> bool:
        return any(c.contains(np.asarray(x, dtype=float), tol) for c in self.cells)

    def distance(self, x) -> tuple[float, np.ndarray]:
        """Distance from x to the region (min over cells) and a witness."""
        best, wit = np.inf, None
        for c in self.cells:
            d, y = project_polyhedron(c, np.asarray(x, dtype=float))
            if d < best:
                best, wit = d, y
        return best, wit


@dataclass(frozen=True)
class FunctionMeta:
    """Lipschitz bound, value gap f(0) - inf f <= value_gap, and dimension."""

    lipschitz_bound: float
    value_gap: float
    dimension: int

    def __post_init__(self):
        if not self.lipschitz_bound > 0:
            raise ValueError("lipschitz_bound must be positive")
        if self.value_gap < 0:
            raise ValueError("value_gap must be nonnegative")


@dataclass(frozen=True, eq=False)
class GradientPolytope:
    """Finite generator set whose convex hull represents a subdifferential."""

    generators: np.ndarray
    provenance: tuple[str, ...]

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.generators, dtype=float))
        if g.shape[0] == 0:
            raise ValueError("generator set must be nonempty")
        if len(self.provenance) != g.shape[0]:
            raise ValueError("one provenance entry per generator required")
        object.__setattr__(self, "generators", g)
        object.__setattr__(self, "provenance", tuple(self.provenance))

    @property
    def dimension(self) -> int:
        return self.generators.shape[1]


# -- public operations -------------------------------------------------------


def evaluate(f: MaxMinFunction, x) -> float:
    return f.value(x)


def lipschitz_certificate(f: MaxMinFunction) -> float:
    """max over atoms of ||gradient||_2, valid for the max-min composition."""
    return float(np.max(f._atom_norms))


def region_distance(P: Polyhedron, x) -> tuple[float, np.ndarray]:
    """Distance from x to P with an attaining point; errors on empty P."""
    x = np.asarray(x, dtype=float)
    if P.is_empty():
        raise EmptyPolyhedronError("cannot project onto an empty polyhedron")
    d, y = project_polyhedron(P, x)
    if not math.isfinite(d):
        raise RuntimeError("projection failed to converge on a nonempty polyhedron")
    return d, y


# -- branch activity machinery -----------------------------------------------


def _branch_base_rows(f: MaxMinFunction, bi: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows (A, b, row norms) forcing the branch atom <= its term's other atoms."""
    key = ("base", bi)
    hit = f._rows_cache.get(key)
    if hit is not None:
        return hit
    ti, fa = f._branches[bi]
    s = int(f._starts[ti])
    e = s + len(f.terms[ti])
    idx = [j for j in range(s, e) if j != fa]
    if not idx:
        out = (np.zeros((0, f.dimension)), np.zeros(0), np.zeros(0))
    else:
        A = f._G[fa] - f._G[idx]
        out = (A, f._B[idx] - f._B[fa], np.linalg.norm(A, axis=1))
    f._rows_cache[key] = out
    return out


def _other_term_rows(
    f: MaxMinFunction, bi: int, s_term: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Rows atom(s) <= branch value, one candidate per atom of term s_term."""
    key = (bi, s_term)
    hit = f._rows_cache.get(key)
    if hit is not None:
        return hit
    _, fa = f._branches[bi]
    s = int(f._starts[s_term])
    e = s + len(f.terms[s_term])
    idx = np.arange(s, e)
    A = f._G[idx] - f._G[fa]
    b = f._B[fa] - f._B[idx]
    out = (A, b, idx, np.linalg.norm(A, axis=1))
    f._rows_cache[key] = out
    return out


def _branch_competitor_rows(f: MaxMinFunction, bi: int):
    """All competitor rows atom <= branch value, segmented by owning term.

    Returns (A, b, norms, flat atom indices, segment starts, segment term ids)
    over every atom outside the branch's own term.
    """
    key = ("competitors", bi)
    hit = f._rows_cache.get(key)
    if hit is not None:
        return hit
    ti, fa = f._branches[bi]
    mask = f._owner != ti
    idx = np.nonzero(mask)[0]
    A = f._G[idx] - f._G[fa]
    b = f._B[fa] - f._B[idx]
    norms = np.linalg.norm(A, axis=1)
    owners = f._owner[idx]
    if idx.size:
        seg_starts = np.nonzero(np.r_[True, owners[1:] != owners[:-1]])[0]
        seg_terms = owners[seg_starts]
    else:
        seg_starts = np.zeros(0, dtype=int)
        seg_terms = np.zeros(0, dtype=int)
    out = (A, b, norms, idx, seg_starts, seg_terms)
    f._rows_cache[key] = out
    return out


def _cell_is_full_dimensional(f: MaxMinFunction, signature: tuple, A: np.ndarray, b: np.ndarray) -> bool:
    cache = f._fulldim_cache
    hit = cache.get(signature)
    if hit is None:
        hit = Polyhedron(A, b).is_full_dimensional(INTERIOR_RADIUS)
        cache[signature] = hit
    return hit


def branch_activity_distance(
    f: MaxMinFunction,
    bi: int,
    x: np.ndarray,
    cap: float,
    require_full_dim: bool = True,
) -> float:
    """Distance from x to the branch's full-dimensional activity region.

    Returns inf when the distance exceeds cap.  The region is the union of
    cells base(t, a) intersect {witness atom <= branch value} over witness
    choices; competing terms with an atom that stays below the branch on the
    whole search ball are fixed to that witness instead of branched on.
    """
    x = np.asarray(x, dtype=float)
    cap_eff = cap + 1e-12
    base_A, base_b, base_norms = _branch_base_rows(f, bi)
    if base_A.shape[0]:
        viol = base_A @ x - base_b
        worst = np.max(viol / np.maximum(base_norms, 1e-300))
        if worst > cap_eff:
            return np.inf
    A, b, norms, idx, seg_starts, seg_terms = _branch_competitor_rows(f, bi)
    hard_A = [base_A]
    hard_b = [base_b]
    fixed_sig: list[tuple] = [("base", bi)]
    open_terms = []
    if idx.size:
        slack = A @ x - b
        always = slack + cap_eff * norms  # max over the search ball
        sometimes = slack - cap_eff * norms  # min over the search ball
        if np.any(np.minimum.reduceat(sometimes, seg_starts) > 0.0):
            # Some competing term can never dip below the branch in the ball.
            return np.inf
        term_always = np.minimum.reduceat(always, seg_starts)
        n_seg = seg_starts.shape[0]
        for k in range(n_seg):
            s0 = int(seg_starts[k])
            s1 = int(seg_starts[k + 1]) if k + 1 < n_seg else idx.size
            if term_always[k] <= 0.0:
                # A witness atom stays below the branch on the whole ball;
                # slack there, so it joins the cell signature but not the
                # projection system.
                j = s0 + int(np.argmin(always[s0:s1]))
                fixed_sig.append((int(seg_terms[k]), int(idx[j])))
                continue
            cand = s0 + np.nonzero(sometimes[s0:s1] <= 0.0)[0]
            if cand.size == 1:
                j = int(cand[0])
                hard_A.append(A[j : j + 1])
                hard_b.append(b[j : j + 1])
                fixed_sig.append((int(seg_terms[k]), int(idx[j])))
            else:
                order = cand[np.argsort(slack[cand])]
                open_terms.append((int(seg_terms[k]), order))
    if len(open_terms) > 8:
        raise RuntimeError(
            f"intractable activity query: {len(open_terms)} interacting terms"
        )
    hard_A0 = np.vstack(hard_A)
    hard_b0 = np.concatenate(hard_b)
    best = np.inf

    def full_dim(sig: tuple) -> bool:
        # The honest cell includes the slack witness rows from fixed terms.
        flat = [j for (_, j) in sig[1:]]
        fa = f._branches[bi][1]
        cell_A = np.vstack([base_A, f._G[flat] - f._G[fa]])
        cell_b = np.concatenate([base_b, f._B[fa] - f._B[flat]])
        return _cell_is_full_dimensional(f, sig, cell_A, cell_b)

    def descend(level: int, A_acc: np.ndarray, b_acc: np.ndarray, sig: tuple) -> None:
        nonlocal best
        d, _ = project_polyhedron(Polyhedron(A_acc, b_acc), x)
        if d > min(cap_eff, best):
            return
        if level == len(open_terms):
            if require_full_dim and not full_dim(sig):
                return
            if d < best:
                best = d
            return
        s_term, order = open_terms[level]
        for j in order:
            descend(
                level + 1,
                np.vstack([A_acc, A[j : j + 1]]),
                np.concatenate([b_acc, b[j : j + 1]]),
                sig + ((s_term, int(idx[j])),),
            )

    descend(0, hard_A0, hard_b0, tuple(fixed_sig))
    return best if best <= cap_eff else np.inf


def active_branches(f: MaxMinFunction, x, cap: float) -> list[int]:
    """Branches whose full-dimensional activity region reaches B_cap(x)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != f.dimension:
        raise ValueError(f"point has dimension {x.shape[0]}, expected {f.dimension}")
    fx = f.value(x)
    L = lipschitz_certificate(f)
    vx = f._G @ x + f._B
    out = []
    for bi, (ti, fa) in enumerate(f._branches):
        reach = (f._atom_norms[fa] + L) * (cap + 1e-9) + ACTIVITY_TOL * f.scale()
        if abs(vx[fa] - fx) > reach:
            continue
        if math.isfinite(branch_activity_distance(f, bi, x, cap)):
            out.append(bi)
    return out


def essentially_active_gradients(f: MaxMinFunction, x) -> GradientPolytope:
    """Gradients of branches whose full-dimensional region closure contains x.

    The convex hull contains the Clarke subdifferential and equals it for
    functions without degenerate piece alignments (all constructions here);
    in degenerate cases it is an over-approximation.
    """
    idx = active_branches(f, x, ACTIVITY_TOL)
    if not idx:
        raise RuntimeError("no active piece found; function data is inconsistent")
    gens = np.vstack([f._G[f._branches[i][1]] for i in idx])
    prov = tuple(f.branch_label(i) for i in idx)
    return GradientPolytope(gens, prov)


# -- global piece enumeration -------------------------------------------------


def enumerate_pieces(f: MaxMinFunction, max_cells: int = 20_000) -> list[PieceSelection]:
    """All branches with nonempty region, each as a union of polyhedral cells.

    Cell enumeration is exponential in the number of interacting terms and
    guarded by max_cells; activity queries never need it, so large
    constructions should use the capped distance machinery instead.
    """
    pieces = []
    budget = max_cells
    for bi in range(f.n_branches):
        ti, fa = f._branches[bi]
        bA, bb, _ = _branch_base_rows(f, bi)
        others = [
            _other_term_rows(f, bi, s)
            for s in range(len(f.terms))
            if s != ti
        ]
        cells: list[Polyhedron] = []

        def grow(level: int, A: np.ndarray, b: np.ndarray) -> None:
            nonlocal budget
            P = Polyhedron(A, b)
            if P.is_empty():
                return
            if level == len(others):
                if budget <= 0:
                    raise RuntimeError("piece enumeration exceeded the cell budget")
                budget -= 1
                cells.append(P)
                return
            As, bs, _, _ = others[level]
            for j in range(As.shape[0]):
                grow(level + 1, np.vstack([A, As[j : j + 1]]), np.concatenate([b, bs[j : j + 1]]))

        grow(0, bA, bb)
        if not cells:
            continue
        full = any(c.is_full_dimensional() for c in cells)
        t_idx, a_idx = f.branch(bi)
        atom = f.branch_atom(bi)
        pieces.append(
            PieceSelection(
                term_index=t_idx,
                atom_index=a_idx,
                gradient=atom.gradient.copy(),
                offset=atom.offset,
                cells=tuple(cells),
                full_dimensional=full,
            )
        )
    return pieces


def exact_infimum(f: MaxMinFunction, max_cells: int = 20_000) -> float:
    """Global infimum via one LP per enumerated cell; -inf when unbounded."""
    best = np.inf
    for piece in enumerate_pieces(f, max_cells=max_cells):
        g, b0 = piece.gradient, piece.offset
        for cell in piece.cells:
            res = linprog(
                g,
                A_ub=cell.A if cell.n_constraints else None,
                b_ub=cell.b if cell.n_constraints else None,
                bounds=[(None, None)] * f.dimension,
                method="highs",
            )
            if res.status == 3:
                return -np.inf
            if res.success:
                best = min(best, float(res.fun) + b0)
    return best


def function_meta(f: MaxMinFunction, value_gap: float | None = None) -> FunctionMeta:
    """Meta record; value_gap is computed exactly when not supplied."""
    if value_gap is None:
        inf_f = exact_infimum(f)
        value_gap = f.value(np.zeros(f.dimension)) - inf_f
    return FunctionMeta(
        lipschitz_bound=lipschitz_certificate(f),
        value_gap=float(value_gap),
        dimension=f.dimension,
    )


# -- derivatives and sampling helpers -----------------------------------------


def directional_derivative(f: MaxMinFunction, z, w) -> float:
    """One-sided derivative f'(z; w) from the max-min structure.

    max over value-attaining terms of (min over that term's min-attaining
    atoms of <g, w>); exact for piecewise-affine f.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    vals = f._G @ z + f._B
    mins = np.minimum.reduceat(vals, f._starts)
    fz = float(np.max(mins))
    tol = TIE_TOL * f.scale() * (1.0 + float(np.linalg.norm(z)))
    best = -np.inf
    for ti in range(len(f.terms)):
        if mins[ti] < fz - tol:
            continue
        s = int(f._starts[ti])
        e = s + len(f.terms[ti])
        inner = np.inf
        for j in range(s, e):
            if vals[j] <= mins[ti] + tol:
                inner = min(inner, float(f._G[j] @ w))
        best = max(best, inner)
    return best


def gradients_at(f: MaxMinFunction, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients at the rows of X plus a uniqueness mask.

    The mask is False where the attaining branch is ambiguous (ties within
    tolerance); gradients there are the lexicographically smallest active
    one, which random samplers hit with probability zero anyway.
    """
    X = np.asarray(X, dtype=float)
    va = X @ f._G.T + f._B
    mins = np.minimum.reduceat(va, f._starts, axis=1)
    fx = np.max(mins, axis=1)
    tol = TIE_TOL * f.scale() * (1.0 + np.linalg.norm(X, axis=1))
    grads = np.zeros((X.shape[0], f.dimension))
    unique = np.ones(X.shape[0], dtype=bool)
    for r in range(X.shape[0]):
        term_act = np.nonzero(mins[r] >= fx[r] - tol[r])[0]
        atom_act = []
        for ti in term_act:
            s = int(f._starts[ti])
            e = s + len(f.terms[ti])
            for j in range(s, e):
                if va[r, j] <= mins[r, ti] + tol[r]:
                    atom_act.append(j)
        if len(atom_act) == 1:
            grads[r] = f._G[atom_act[0]]
        else:
            unique[r] = False
            rows = sorted(atom_act, key=lambda j: tuple(f._G[j]))
            grads[r] = f._G[rows[0]]
    return grads, unique


# -- serialization ------------------------------------------------------------


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def function_to_text(f: MaxMinFunction) -> str:
    """Round-trippable structured-text form (17 significant digits)."""
    lines = ["pwmaxmin 1", f"dim {f.dimension}"]
    for term in f.terms:
        lines.append("term")
        for atom in term:
            comps = " ".join(_fmt(v) for v in atom.gradient)
            lines.append(f"atom {comps} {_fmt(atom.offset)}")
    return "\n".join(lines) + "\n"


def function_from_text(text: str) -> MaxMinFunction:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "pwmaxmin 1":
        raise ValueError("not a pwmaxmin document")
    if len(lines) < 2 or not lines[1].startswith("dim "):
        raise ValueError("missing dimension line")
    dim = int(lines[1].split()[1])
    terms: list[list[AffineAtom]] = []
    for ln in lines[2:]:
        if ln == "term":
            terms.append([])
        elif ln.startswith("atom "):
            if not terms:
                raise ValueError("atom before any term")
            vals = [float(v) for v in ln.split()[1:]]
            if len(vals) != dim + 1:
                raise ValueError(f"atom needs {dim} gradient entries plus offset")
            terms[-1].append(AffineAtom(np.array(vals[:dim]), vals[dim]))
        else:
            raise ValueError(f"unrecognized line: {ln!r}")
    return MaxMinFunction(dim, tuple(tuple(t) for t in terms))


def piece_region_union(piece: PieceSelection) -> Polyhedron:
    """Single-cell regions as one polyhedron; errors on true unions."""
    if len(piece.cells) != 1:
        raise ValueError("piece region is a union of cells, not one polyhedron")
    return piece.cells[0]


def intersect_cells(cells: list[Polyhedron]) -> Polyhedron:
    return stack(cells)
