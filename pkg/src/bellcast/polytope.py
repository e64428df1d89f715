"""Exact rational vertex enumeration for deterministic and no-signalling polytopes.

All arithmetic is exact (``fractions.Fraction`` over Python integers).  The
primary algorithm is incremental double description on the homogenisation of
the polytope; an independent basis-scan enumerator is provided as an oracle
so vertex counts can be cross-checked before they are frozen as golden values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb, gcd

import numpy as np

from .scenarios import Scenario

__all__ = [
    "EnumerationBudgetExceeded",
    "UnboundedPolytope",
    "HRepresentation",
    "VertexSet",
    "deterministic_vertices",
    "ns_h_representation",
    "enumerate_vertices",
    "classify_vertex",
    "ns_vertices",
]

DEFAULT_BUDGET = 10**6


class EnumerationBudgetExceeded(RuntimeError):
    """Raised when an enumeration would exceed its configured budget."""


class UnboundedPolytope(RuntimeError):
    """Raised when the input H-representation describes an unbounded set."""


@dataclass(frozen=True)
class HRepresentation:
    """Polytope as equalities row.x == rhs and inequalities row.x >= rhs."""

    dimension: int
    equalities: tuple
    inequalities: tuple

    def check(self, x, strict: bool = True) -> bool:
        """Exact membership test for a rational point."""
        for row, rhs in self.equalities:
            if sum(r * v for r, v in zip(row, x)) != rhs:
                return False
        for row, rhs in self.inequalities:
            if sum(r * v for r, v in zip(row, x)) < rhs:
                return False
        return True


@dataclass(frozen=True)
class VertexSet:
    """Exact vertex list; labels tag deterministic vs nonlocal extremal points."""

    dimension: int
    vertices: tuple
    labels: tuple | None = None

    def __len__(self) -> int:
        return len(self.vertices)

    def as_float_matrix(self) -> np.ndarray:
        """Vertices as rows of a float matrix."""
        return np.array([[float(v) for v in vert] for vert in self.vertices])


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _frac_row(row) -> tuple:
    return tuple(_frac(v) for v in row)


# ---------------------------------------------------------------------------
# deterministic vertices


def deterministic_vertices(inputs, outputs, budget: int = DEFAULT_BUDGET) -> VertexSet:
    """All joint deterministic behaviours, one per tuple of local response functions."""
    inputs = tuple(int(m) for m in inputs)
    outputs = tuple(int(o) for o in outputs)
    scen = Scenario(inputs, outputs)
    total = 1
    for m, o in zip(inputs, outputs):
        total *= o**m
    if total > budget:
        raise EnumerationBudgetExceeded(f"{total} deterministic strategies exceed budget {budget}")
    one, zero = Fraction(1), Fraction(0)
    verts = []
    per_party = [
        list(itertools.product(range(o), repeat=m)) for m, o in zip(inputs, outputs)
    ]
    for assignment in itertools.product(*per_party):
        vec = [zero] * scen.table_size
        for settings in scen.iter_settings():
            outcome = tuple(assignment[k][settings[k]] for k in range(scen.parties))
            vec[scen.table_index(outcome, settings)] = one
        verts.append(tuple(vec))
    labels = tuple("local_deterministic" for _ in verts)
    return VertexSet(scen.table_size, tuple(verts), labels)


# ---------------------------------------------------------------------------
# no-signalling H-representation (two parties per block)


def ns_h_representation(inputs, outputs) -> HRepresentation:
    """No-signalling polytope of a two-party block, variables p(bc|yz).

    Constraints: positivity, per-setting normalisation, and marginal equality
    across the other party's settings in both directions.
    """
    m_b, m_c = (int(v) for v in inputs)
    o_b, o_c = (int(v) for v in outputs)
    scen = Scenario((m_b, m_c), (o_b, o_c))
    dim = scen.table_size
    zero, one = Fraction(0), Fraction(1)

    def unit_rows():
        return [zero] * dim

    equalities = []
    for settings in scen.iter_settings():
        row = unit_rows()
        for outcome in scen.iter_outcomes():
            row[scen.table_index(outcome, settings)] = one
        equalities.append((tuple(row), one))
    # Bob's marginal must not depend on z
    for b in range(o_b):
        for y in range(m_b):
            for z in range(1, m_c):
                row = unit_rows()
                for c in range(o_c):
                    row[scen.table_index((b, c), (y, 0))] += one
                    row[scen.table_index((b, c), (y, z))] -= one
                equalities.append((tuple(row), zero))
    # Charlie's marginal must not depend on y
    for c in range(o_c):
        for z in range(m_c):
            for y in range(1, m_b):
                row = unit_rows()
                for b in range(o_b):
                    row[scen.table_index((b, c), (0, z))] += one
                    row[scen.table_index((b, c), (y, z))] -= one
                equalities.append((tuple(row), zero))
    inequalities = []
    for t in range(dim):
        row = unit_rows()
        row[t] = one
        inequalities.append((tuple(row), zero))
    return HRepresentation(dim, tuple(equalities), tuple(inequalities))


# ---------------------------------------------------------------------------
# exact linear algebra helpers


def _rref(rows):
    """Reduced row echelon form over Fractions; returns (rref rows, pivot columns)."""
    mat = [list(r) for r in rows]
    n_rows = len(mat)
    n_cols = len(mat[0]) if n_rows else 0
    pivots = []
    r = 0
    for c in range(n_cols):
        pivot = next((i for i in range(r, n_rows) if mat[i][c] != 0), None)
        if pivot is None:
            continue
        mat[r], mat[pivot] = mat[pivot], mat[r]
        pv = mat[r][c]
        mat[r] = [v / pv for v in mat[r]]
        for i in range(n_rows):
            if i != r and mat[i][c] != 0:
                f = mat[i][c]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[r])]
        pivots.append(c)
        r += 1
        if r == n_rows:
            break
    return mat[:r], pivots


def _affine_parametrisation(h: HRepresentation):
    """Solve the equality system: x = x0 + N t with an integer null basis N.

    Returns (x0, N columns) or None if the equalities are inconsistent.
    """
    dim = h.dimension
    if not h.equalities:
        x0 = tuple(Fraction(0) for _ in range(dim))
        cols = [tuple(Fraction(1) if i == j else Fraction(0) for i in range(dim)) for j in range(dim)]
        return x0, cols
    aug = [list(row) + [rhs] for row, rhs in h.equalities]
    rref, pivots = _rref(aug)
    if dim in pivots:
        return None  # 0 == nonzero row: inconsistent
    x0 = [Fraction(0)] * dim
    for r, c in enumerate(pivots):
        x0[c] = rref[r][dim]
    free = [c for c in range(dim) if c not in pivots]
    cols = []
    for f in free:
        col = [Fraction(0)] * dim
        col[f] = Fraction(1)
        for r, c in enumerate(pivots):
            col[c] = -rref[r][f]
        # scale to a primitive integer vector for friendlier downstream numerics
        den = 1
        for v in col:
            den = den * v.denominator // gcd(den, v.denominator)
        ints = [int(v * den) for v in col]
        g = 0
        for v in ints:
            g = gcd(g, abs(v))
        g = g or 1
        cols.append(tuple(Fraction(v // g) for v in ints))
    return tuple(x0), cols


def _rank(rows) -> int:
    return len(_rref(rows)[0])


def _canonical_ray(ray):
    """Primitive integer representative of a ray (positive scaling only)."""
    den = 1
    for v in ray:
        den = den * v.denominator // gcd(den, v.denominator)
    ints = [int(v * den) for v in ray]
    g = 0
    for v in ints:
        g = gcd(g, abs(v))
    g = g or 1
    return tuple(Fraction(v // g) for v in ints)


# ---------------------------------------------------------------------------
# double description


def _dd_rays(rows, k1: int, budget: int):
    """Extreme rays of the pointed cone {z : row.z >= 0 for all rows}, exactly.

    ``rows`` are Fraction tuples of length k1.  Rays are returned in canonical
    primitive-integer form.  Raises UnboundedPolytope when the cone is not
    pointed (full-dimensional lineality), since that cannot arise from a
    bounded polytope's homogenisation.
    """
    n_rows = len(rows)
    if _rank(rows) < k1:
        raise UnboundedPolytope("constraint rows do not span: cone has lineality space")
    # greedy selection of k1 independent rows for the initial simplicial cone
    basis_idx = []
    acc = []
    for i, row in enumerate(rows):
        if _rank(acc + [list(row)]) > len(acc):
            acc.append(list(row))
            basis_idx.append(i)
        if len(basis_idx) == k1:
            break
    # invert the basis to get the initial extreme rays (columns of B^-1)
    b = [list(rows[i]) for i in basis_idx]
    aug = [b[r] + [Fraction(1) if c == r else Fraction(0) for c in range(k1)] for r in range(k1)]
    rref, pivots = _rref(aug)
    assert pivots == list(range(k1))
    inv = [[rref[r][k1 + c] for c in range(k1)] for r in range(k1)]
    rays = [_canonical_ray(tuple(inv[r][c] for r in range(k1))) for c in range(k1)]

    def evals(ray):
        return tuple(sum(r * v for r, v in zip(row, ray)) for row in rows)

    ray_evals = {ray: evals(ray) for ray in rays}
    processed = set(basis_idx)

    def tight_mask(ray) -> int:
        ev = ray_evals[ray]
        mask = 0
        for i in sorted(processed):
            if ev[i] == 0:
                mask |= 1 << i
        return mask

    for i in range(n_rows):
        if i in basis_idx:
            processed.add(i)
            continue
        vals = {ray: ray_evals[ray][i] for ray in rays}
        pos = [r for r in rays if vals[r] > 0]
        neg = [r for r in rays if vals[r] < 0]
        zero = [r for r in rays if vals[r] == 0]
        if not neg:
            processed.add(i)
            continue
        masks = {r: tight_mask(r) for r in rays}
        new_rays = []
        seen = set()
        for p in pos:
            for q in neg:
                common = masks[p] & masks[q]
                if common.bit_count() < k1 - 2:
                    continue
                # combinatorial adjacency: no third ray's tight set contains the meet
                adjacent = True
                for w in rays:
                    if w is p or w is q:
                        continue
                    if masks[w] & common == common:
                        adjacent = False
                        break
                if not adjacent:
                    continue
                combo = tuple(vals[p] * vq - vals[q] * vp for vp, vq in zip(p, q))
                ray = _canonical_ray(combo)
                if ray not in seen:
                    seen.add(ray)
                    new_rays.append(ray)
        for ray in new_rays:
            if ray not in ray_evals:
                ray_evals[ray] = evals(ray)
        rays = pos + zero + [r for r in new_rays if r not in pos and r not in zero]
        processed.add(i)
        if len(rays) > budget:
            raise EnumerationBudgetExceeded(f"ray count {len(rays)} exceeds budget {budget}")
    return rays


def _vertices_dd(h: HRepresentation, budget: int):
    par = _affine_parametrisation(h)
    if par is None:
        return []
    x0, cols = par
    k = len(cols)
    dim = h.dimension
    if k == 0:
        return [tuple(x0)] if h.check(x0) else []
    # reduced inequalities g.t >= r, then homogenised rows (g, -r)
    rows = []
    for row, rhs in h.inequalities:
        g = [sum(row[i] * col[i] for i in range(dim)) for col in cols]
        r = rhs - sum(row[i] * x0[i] for i in range(dim))
        rows.append(tuple(g) + (-r,))
    rows.append(tuple(Fraction(0) for _ in range(k)) + (Fraction(1),))  # s >= 0
    rays = _dd_rays(rows, k + 1, budget)
    verts = []
    for ray in rays:
        s = ray[-1]
        if s == 0:
            raise UnboundedPolytope("recession direction found: polytope is unbounded")
        t = [v / s for v in ray[:-1]]
        x = tuple(x0[i] + sum(cols[j][i] * t[j] for j in range(k)) for i in range(dim))
        verts.append(x)
    verts = sorted(set(verts))
    for v in verts:
        if not h.check(v):
            raise AssertionError("double description produced a point outside the polytope")
    return verts


# ---------------------------------------------------------------------------
# independent basis-scan enumeration


def _vertices_basis_scan(h: HRepresentation, budget: int):
    """Enumerate vertices by scanning candidate tight-inequality bases.

    Every size-k subset of inequality rows is solved in floating point within
    the affine hull; approximate solutions that look feasible are then
    re-derived exactly from their full tight set and verified against every
    constraint in rational arithmetic.
    """
    par = _affine_parametrisation(h)
    if par is None:
        return []
    x0, cols = par
    k = len(cols)
    dim = h.dimension
    if k == 0:
        return [tuple(x0)] if h.check(x0) else []
    g_rows = []
    r_vals = []
    for row, rhs in h.inequalities:
        g = [sum(row[i] * col[i] for i in range(dim)) for col in cols]
        r = rhs - sum(row[i] * x0[i] for i in range(dim))
        g_rows.append(g)
        r_vals.append(r)
    n = len(g_rows)
    if comb(n, k) > max(budget, 4 * 10**6):
        raise EnumerationBudgetExceeded(f"{comb(n, k)} candidate bases exceed the scan budget")
    gf = np.array([[float(v) for v in g] for g in g_rows])
    rf = np.array([float(v) for v in r_vals])

    candidates = []
    chunk = []
    chunk_size = 20000

    def flush(idx_chunk):
        idx = np.array(idx_chunk)
        sub = gf[idx]  # (c, k, k)
        dets = np.linalg.det(sub)
        ok = np.abs(dets) > 1e-9
        if not ok.any():
            return
        sols = np.linalg.solve(sub[ok], rf[idx[ok]][..., None])[..., 0]
        feas = (gf @ sols.T - rf[:, None]).min(axis=0) > -1e-9
        for t in sols[feas]:
            candidates.append(t)

    for combo in itertools.combinations(range(n), k):
        chunk.append(combo)
        if len(chunk) == chunk_size:
            flush(chunk)
            chunk = []
    if chunk:
        flush(chunk)

    # deduplicate approximately, then reconstruct each candidate exactly
    verts = set()
    seen_keys = set()
    for t in candidates:
        key = tuple(np.round(t, 7))
        if key in seen_keys:
            continue
        seen_keys.add(key)
        slack = gf @ t - rf
        tight = [i for i in range(n) if abs(slack[i]) < 1e-7]
        sub = [g_rows[i] for i in tight]
        if _rank(sub) < k:
            continue
        aug = [list(g_rows[i]) + [r_vals[i]] for i in tight]
        rref, pivots = _rref(aug)
        if k in pivots:
            continue  # inconsistent tight set: numerical artefact
        te = [Fraction(0)] * k
        for rr, c in enumerate(pivots):
            te[c] = rref[rr][k]
        exact_ok = all(
            sum(g_rows[i][j] * te[j] for j in range(k)) >= r_vals[i] for i in range(n)
        )
        if not exact_ok:
            continue
        x = tuple(x0[i] + sum(cols[j][i] * te[j] for j in range(k)) for i in range(dim))
        if h.check(x):
            verts.add(x)
        if len(verts) > budget:
            raise EnumerationBudgetExceeded(f"vertex count exceeds budget {budget}")
    return sorted(verts)


def enumerate_vertices(
    h: HRepresentation, method: str = "dd", budget: int = DEFAULT_BUDGET
) -> VertexSet:
    """Complete exact vertex list of a bounded polytope, lexicographically sorted."""
    if method == "dd":
        verts = _vertices_dd(h, budget)
    elif method == "basis":
        verts = _vertices_basis_scan(h, budget)
    else:
        raise ValueError(f"unknown enumeration method {method!r}")
    return VertexSet(h.dimension, tuple(verts), None)


# ---------------------------------------------------------------------------
# classification


def classify_vertex(v, inputs, outputs) -> str:
    """'local_deterministic' for factorising 0/1 tables, else 'nonlocal_extremal'."""
    inputs = tuple(int(m) for m in inputs)
    outputs = tuple(int(o) for o in outputs)
    scen = Scenario(inputs, outputs)
    vals = [_frac(x) for x in v]
    if any(x not in (0, 1) for x in vals):
        return "nonlocal_extremal"
    # read off the joint assignment per setting tuple
    assign = {}
    for settings in scen.iter_settings():
        outcome = None
        for oc in scen.iter_outcomes():
            if vals[scen.table_index(oc, settings)] == 1:
                outcome = oc
                break
        if outcome is None:
            return "nonlocal_extremal"
        assign[settings] = outcome
    # deterministic and local iff each party's outcome depends on its own setting only
    for k in range(scen.parties):
        by_own = {}
        for settings, outcome in assign.items():
            prev = by_own.setdefault(settings[k], outcome[k])
            if prev != outcome[k]:
                return "nonlocal_extremal"
    return "local_deterministic"


def ns_vertices(
    inputs, outputs, method: str = "dd", budget: int = DEFAULT_BUDGET
) -> VertexSet:
    """Vertices of the two-party no-signalling polytope, labelled by type."""
    h = ns_h_representation(inputs, outputs)
    vs = enumerate_vertices(h, method=method, budget=budget)
    labels = tuple(classify_vertex(v, inputs, outputs) for v in vs.vertices)
    return VertexSet(vs.dimension, vs.vertices, labels)
