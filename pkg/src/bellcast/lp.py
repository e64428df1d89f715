"""Dense linear programming: two-phase revised simplex with certificates.

Problems are stated as  maximize c.x  subject to  A x = b,  l <= x <= u
(lower bounds default to 0, upper bounds to +inf).  Solves return dual
multipliers for the equality rows, and on infeasibility a Farkas vector
proving it.  An exact mode re-verifies (and if necessary repairs) the final
basis in rational arithmetic, certifying the result for the problem data
read as exact dyadic rationals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = ["LpProblem", "LpSolution", "LpError", "solve", "verify_farkas"]


class LpError(RuntimeError):
    """Numerical failure that survived the anti-cycling fallback."""


@dataclass(frozen=True)
class LpProblem:
    """maximize objective . x  s.t.  eq_matrix x = eq_rhs, lower <= x <= upper."""

    objective: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        a = np.asarray(self.eq_matrix, dtype=float)
        b = np.asarray(self.eq_rhs, dtype=float)
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "eq_matrix", a)
        object.__setattr__(self, "eq_rhs", b)
        if a.ndim != 2 or a.shape != (b.size, c.size):
            raise ValueError(f"inconsistent LP dimensions: A{a.shape}, b{b.shape}, c{c.shape}")
        lo = np.zeros(c.size) if self.lower is None else np.asarray(self.lower, dtype=float)
        up = np.full(c.size, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        for arr in (c, a, b, lo):
            if not np.isfinite(arr).all():
                raise ValueError("LP data must be finite")
        if np.isneginf(up).any() or np.isnan(up).any():
            raise ValueError("upper bounds must be finite or +inf")
        if (up - lo < -1e-12).any():
            raise ValueError("upper bound below lower bound")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.eq_rhs.size


@dataclass(frozen=True)
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None = None
    objective_value: float | None = None
    duals: np.ndarray | None = None
    farkas: np.ndarray | None = None
    iterations: int = 0
    exact_certified: bool = False
    x_exact: tuple | None = field(default=None, repr=False)
    duals_exact: tuple | None = field(default=None, repr=False)
    objective_exact: Fraction | None = field(default=None, repr=False)
    farkas_exact: tuple | None = field(default=None, repr=False)


def verify_farkas(p: LpProblem, y: np.ndarray, tol: float = 1e-9) -> bool:
    """Check that y certifies infeasibility of the bounded system.

    With sigma = y^T A, feasible x satisfy y.b = y.(Ax) <= sum_j bound_max_j,
    so infeasibility is proven when y.b exceeds the best the bounds allow.
    """
    sigma = y @ p.eq_matrix
    gain = 0.0
    for j in range(p.n_vars):
        hi = p.upper[j]
        if np.isinf(hi):
            if sigma[j] > tol:
                return False
            gain += sigma[j] * p.lower[j]
        else:
            gain += max(sigma[j] * p.lower[j], sigma[j] * hi)
    return float(y @ p.eq_rhs) > gain + tol


def _verify_farkas_exact(p: LpProblem, y) -> bool:
    """Rational-arithmetic version of :func:`verify_farkas` (strict, no tolerance)."""
    a = [[Fraction(v) for v in row] for row in p.eq_matrix]
    sigma = [sum(y[i] * a[i][j] for i in range(p.n_rows)) for j in range(p.n_vars)]
    gain = Fraction(0)
    for j in range(p.n_vars):
        lo = Fraction(p.lower[j])
        if np.isinf(p.upper[j]):
            if sigma[j] > 0:
                return False
            gain += sigma[j] * lo
        else:
            hi = Fraction(p.upper[j])
            gain += max(sigma[j] * lo, sigma[j] * hi)
    lhs = sum(y[i] * Fraction(p.eq_rhs[i]) for i in range(p.n_rows))
    return lhs > gain


# ---------------------------------------------------------------------------
# canonicalisation: shift lower bounds, slack rows for upper bounds, b >= 0


class _Canonical:
    """max c.x, A x = b, x >= 0 built from an LpProblem; remembers the mapping."""

    def __init__(self, p: LpProblem):
        n, m = p.n_vars, p.n_rows
        self.p = p
        shift = p.lower
        b0 = p.eq_rhs - p.eq_matrix @ shift
        ub_idx = [j for j in range(n) if np.isfinite(p.upper[j])]
        self.ub_idx = ub_idx
        k = len(ub_idx)
        a = np.zeros((m + k, n + k))
        a[:m, :n] = p.eq_matrix
        b = np.zeros(m + k)
        b[:m] = b0
        for r, j in enumerate(ub_idx):
            a[m + r, j] = 1.0
            a[m + r, n + r] = 1.0
            b[m + r] = p.upper[j] - shift[j]
        c = np.zeros(n + k)
        c[:n] = p.objective
        self.row_sign = np.where(b < 0, -1.0, 1.0)
        self.a = a * self.row_sign[:, None]
        self.b = b * self.row_sign
        self.c = c
        self.n_struct = n
        self.m_orig = m

    def x_back(self, x_can: np.ndarray) -> np.ndarray:
        return x_can[: self.n_struct] + self.p.lower

    def duals_back(self, y_can: np.ndarray) -> np.ndarray:
        return (y_can * self.row_sign)[: self.m_orig]


# ---------------------------------------------------------------------------
# floating point revised simplex (artificial columns kept implicit)


class _NeedRestart(Exception):
    """Internal: numerical drift detected, re-run the phase in safe mode."""


class _Simplex:
    def __init__(self, a, b, pivot_tol, feas_tol, safe=False):
        self.a = a
        self.b = b
        self.m, self.n = a.shape
        self.pivot_tol = pivot_tol
        self.feas_tol = feas_tol
        self.safe = safe
        # basis entries >= n denote artificial unit columns e_{j-n}
        self.basis = list(range(self.n, self.n + self.m))
        self.b_inv = np.eye(self.m)
        self.x_b = b.copy()
        self.iterations = 0

    def column(self, j: int) -> np.ndarray:
        if j < self.n:
            return self.a[:, j]
        col = np.zeros(self.m)
        col[j - self.n] = 1.0
        return col

    def refactorize(self):
        bmat = np.column_stack([self.column(j) for j in self.basis])
        try:
            self.b_inv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError as exc:
            if self.safe:
                raise LpError("singular basis during refactorization") from exc
            raise _NeedRestart from exc
        drift = np.abs(bmat @ self.b_inv - np.eye(self.m)).max()
        if drift > 1e-6:
            if self.safe:
                raise LpError(f"basis is numerically singular (inverse drift {drift:.2e})")
            raise _NeedRestart
        self.x_b = self.b_inv @ self.b

    def run(self, c_full: np.ndarray, max_iter: int) -> str:
        """Pivot until optimal or unbounded under objective c_full (length n+m)."""
        m, n = self.m, self.n
        bland_after = 0 if self.safe else 5 * (m + n)
        refresh_every = 20 if self.safe else 60
        degenerate = 0
        repairs = 0
        while True:
            if self.iterations >= max_iter:
                raise LpError(f"iteration limit {max_iter} exceeded")
            c_b = c_full[self.basis]
            y = c_b @ self.b_inv
            rc = c_full[:n] - y @ self.a
            # artificial columns may leave the basis but never re-enter
            use_bland = degenerate > bland_after
            if use_bland:
                cand = np.flatnonzero(rc > self.pivot_tol)
                q = int(cand[0]) if cand.size else -1
            else:
                q = int(np.argmax(rc))
                if rc[q] <= self.pivot_tol:
                    q = -1
            if q < 0:
                # verify claimed optimality against a fresh factorization
                self.refactorize()
                y = c_full[self.basis] @ self.b_inv
                rc = c_full[:n] - y @ self.a
                if self.x_b.min() >= -1e-8 and rc.max() <= self.pivot_tol * 10:
                    return "optimal"
                if self.x_b.min() < -1e-8:
                    raise _NeedRestart
                repairs += 1
                if repairs > 8:
                    raise LpError("simplex could not certify optimality after repairs")
                degenerate = bland_after + 1  # finish off with Bland
                continue
            d = self.b_inv @ self.a[:, q]
            pos = d > self.pivot_tol
            if not pos.any():
                return "unbounded"
            # Harris two-pass ratio test: relax the bound by the feasibility
            # tolerance, then take the best-scaled pivot inside the bound
            ratios = np.full(m, np.inf)
            ratios[pos] = np.maximum(self.x_b[pos], 0.0) / d[pos]
            relaxed = np.full(m, np.inf)
            relaxed[pos] = (np.maximum(self.x_b[pos], 0.0) + self.feas_tol * 10) / d[pos]
            theta_max = relaxed.min()
            inside = np.flatnonzero((ratios <= theta_max) & pos)
            if use_bland:
                r = int(min(inside, key=lambda i: self.basis[i]))
            else:
                r = int(max(inside, key=lambda i: (d[i], -self.basis[i])))
            theta = max(self.x_b[r], 0.0) / d[r]
            if theta <= self.feas_tol:
                degenerate += 1
            else:
                degenerate = 0
            self._pivot(q, r, d, theta)
            self.iterations += 1
            if self.iterations % refresh_every == 0:
                self.refactorize()
                if self.x_b.min() < -1e-7:
                    raise _NeedRestart

    def _pivot(self, q: int, r: int, d: np.ndarray, theta: float):
        piv = d[r]
        if abs(piv) < self.pivot_tol:
            raise LpError("pivot element below tolerance")
        self.b_inv[r] /= piv
        other = np.arange(self.m) != r
        self.b_inv[other] -= np.outer(d[other], self.b_inv[r])
        self.x_b = self.x_b - theta * d
        self.x_b[r] = theta
        self.basis[r] = q

    def drive_out_artificials(self):
        """After phase 1: pivot zero-valued artificials out, drop redundant rows."""
        drop_rows = []
        for r in range(self.m):
            if self.basis[r] < self.n:
                continue
            row = self.b_inv[r] @ self.a
            cand = np.flatnonzero(np.abs(row) > 1e-8)
            cand = [j for j in cand if j not in self.basis]
            if cand:
                q = int(cand[0])
                d = self.b_inv @ self.a[:, q]
                self._pivot(q, r, d, self.x_b[r] / d[r])
            else:
                drop_rows.append(r)
        return drop_rows


def _solve_float_once(can: _Canonical, pivot_tol, feas_tol, max_iter, safe):
    a, b = can.a, can.b
    m, n = a.shape
    sx = _Simplex(a, b, pivot_tol, feas_tol, safe=safe)
    c1 = np.concatenate([np.zeros(n), -np.ones(m)])
    status = sx.run(c1, max_iter=max_iter)
    if status != "optimal":
        raise LpError("phase 1 reported unbounded, which cannot happen")
    infeas = -float(c1[sx.basis] @ sx.x_b)
    scale = max(1.0, float(np.abs(b).max()))
    if infeas > feas_tol * scale:
        y1 = c1[sx.basis] @ sx.b_inv
        farkas_can = -y1
        return "infeasible", sx, farkas_can, None
    redundant = sx.drive_out_artificials()
    keep = [r for r in range(m) if r not in redundant]
    if redundant:
        # rebuild the tableau without redundant rows
        a2 = a[keep]
        b2 = b[keep]
        basis = [sx.basis[r] for r in keep]
        sx2 = _Simplex(a2, b2, pivot_tol, feas_tol, safe=safe)
        sx2.basis = basis
        sx2.iterations = sx.iterations
        sx2.refactorize()
        sx = sx2
    c2 = np.concatenate([can.c, np.zeros(sx.m)])
    status = sx.run(c2, max_iter=max_iter)
    return status, sx, None, keep


def _solve_float(can: _Canonical, pivot_tol, feas_tol, max_iter):
    try:
        return _solve_float_once(can, pivot_tol, feas_tol, max_iter, safe=False)
    except _NeedRestart:
        # degenerate drift: redo both phases with Bland's rule and frequent
        # refactorization from the start
        return _solve_float_once(can, pivot_tol, feas_tol, max_iter, safe=True)


# ---------------------------------------------------------------------------
# exact rational simplex (warm-started from the float basis)


def _exact_dot(u, v):
    return sum(a * b for a, b in zip(u, v))


class _ExactSimplex:
    """Dense simplex over Fractions with Bland's rule (guaranteed termination)."""

    def __init__(self, a_rows, b):
        self.a = a_rows  # list of rows, each a list of Fractions
        self.b = list(b)
        self.m = len(b)
        self.n = len(a_rows[0]) if self.m else 0
        self.basis = list(range(self.n, self.n + self.m))
        self.b_inv = [
            [Fraction(1) if i == j else Fraction(0) for j in range(self.m)] for i in range(self.m)
        ]
        self.x_b = list(self.b)

    def column(self, j):
        if j < self.n:
            return [self.a[i][j] for i in range(self.m)]
        return [Fraction(1) if i == j - self.n else Fraction(0) for i in range(self.m)]

    def set_basis(self, basis) -> bool:
        """Install a basis; returns False if it is singular."""
        cols = [self.column(j) for j in basis]
        m = self.m
        aug = [[cols[c][r] for c in range(m)] + [Fraction(1) if k == r else Fraction(0) for k in range(m)] for r in range(m)]
        # gauss-jordan
        piv_rows = []
        r = 0
        for c in range(m):
            pivot = next((i for i in range(r, m) if aug[i][c] != 0), None)
            if pivot is None:
                return False
            aug[r], aug[pivot] = aug[pivot], aug[r]
            pv = aug[r][c]
            aug[r] = [v / pv for v in aug[r]]
            for i in range(m):
                if i != r and aug[i][c] != 0:
                    f = aug[i][c]
                    aug[i] = [x - f * y for x, y in zip(aug[i], aug[r])]
            r += 1
        self.b_inv = [[aug[r][m + c] for c in range(m)] for r in range(m)]
        self.basis = list(basis)
        self.x_b = [_exact_dot(self.b_inv[i], self.b) for i in range(self.m)]
        return True

    def feasible(self) -> bool:
        return all(v >= 0 for v in self.x_b)

    def run(self, c_full, max_iter=100000) -> str:
        for _ in range(max_iter):
            c_b = [c_full[j] for j in self.basis]
            y = [
                sum(c_b[i] * self.b_inv[i][r] for i in range(self.m)) for r in range(self.m)
            ]
            entering = -1
            for j in range(self.n):
                if j in self.basis:
                    continue
                rc = c_full[j] - _exact_dot(y, self.column(j))
                if rc > 0:
                    entering = j
                    break
            if entering < 0:
                return "optimal"
            col = self.column(entering)
            d = [_exact_dot(self.b_inv[i], col) for i in range(self.m)]
            theta = None
            r = -1
            for i in range(self.m):
                if d[i] > 0:
                    ratio = self.x_b[i] / d[i]
                    if theta is None or ratio < theta or (ratio == theta and self.basis[i] < self.basis[r]):
                        theta = ratio
                        r = i
            if r < 0:
                return "unbounded"
            piv = d[r]
            self.b_inv[r] = [v / piv for v in self.b_inv[r]]
            for i in range(self.m):
                if i != r and d[i] != 0:
                    f = d[i]
                    self.b_inv[i] = [x - f * y2 for x, y2 in zip(self.b_inv[i], self.b_inv[r])]
            for i in range(self.m):
                self.x_b[i] = self.x_b[i] - theta * d[i] if i != r else theta
            self.basis[r] = entering
        raise LpError("exact simplex iteration limit exceeded")

    def duals(self, c_full):
        c_b = [c_full[j] for j in self.basis]
        return [sum(c_b[i] * self.b_inv[i][r] for i in range(self.m)) for r in range(self.m)]


def _exact_refine(can: _Canonical, warm_basis, keep_rows):
    """Re-solve the canonical LP exactly, warm-starting from the float basis."""
    rows = keep_rows if keep_rows is not None else list(range(can.a.shape[0]))
    a_rows = [[Fraction(v) for v in can.a[r]] for r in rows]
    b = [Fraction(v) for v in can.b[rows]] if rows else []
    ex = _ExactSimplex(a_rows, b)
    n, m = ex.n, ex.m
    c2 = [Fraction(v) for v in can.c] + [Fraction(0)] * m
    warm_ok = warm_basis is not None and ex.set_basis(warm_basis) and ex.feasible()
    if not warm_ok:
        ex = _ExactSimplex(a_rows, b)
        c1 = [Fraction(0)] * n + [Fraction(-1)] * m
        ex.run(c1)
        infeas = -sum(c1[j] * x for j, x in zip(ex.basis, ex.x_b))
        if infeas > 0:
            y1 = ex.duals(c1)
            farkas = [-v for v in y1]
            return "infeasible", ex, farkas, rows
        # drive out artificials exactly
        for r in range(ex.m):
            if ex.basis[r] >= n:
                row = [
                    sum(ex.b_inv[r][i] * ex.a[i][j] for i in range(ex.m)) for j in range(n)
                ]
                q = next((j for j in range(n) if row[j] != 0 and j not in ex.basis), None)
                if q is not None:
                    basis = list(ex.basis)
                    basis[r] = q
                    if not ex.set_basis(basis):
                        raise LpError("exact artificial cleanup failed")
    status = ex.run(c2)
    return status, ex, None, rows


# ---------------------------------------------------------------------------
# public entry point


def solve(
    p: LpProblem,
    pivot_tol: float = 1e-10,
    feas_tol: float = 1e-9,
    max_iter: int | None = None,
    exact: bool = False,
) -> LpSolution:
    """Solve the LP; statuses are 'optimal', 'infeasible' or 'unbounded'.

    Optimal solutions always carry duals; infeasible ones carry a Farkas
    vector over the equality rows (verified, with bound terms accounted).
    With ``exact=True`` the final basis is re-verified in rational
    arithmetic and pivoting continues exactly if the float basis was not
    truly optimal.
    """
    can = _Canonical(p)
    m_all, n_all = can.a.shape
    if max_iter is None:
        max_iter = 2000 + 60 * (m_all + n_all)
    status, sx, farkas_can, keep = _solve_float(can, pivot_tol, feas_tol, max_iter)

    if status == "infeasible":
        y = can.duals_back(farkas_can)
        if not verify_farkas(p, y, tol=feas_tol):
            if not exact:
                raise LpError("infeasible status could not be certified by its Farkas vector")
        sol = LpSolution(status="infeasible", farkas=y, iterations=sx.iterations)
        if exact:
            est, ex, farkas_exact, rows = _exact_refine(can, None, None)
            if est != "infeasible":
                raise LpError("exact re-solve contradicts float infeasibility")
            y_full = [Fraction(0)] * m_all
            for rr, yy in zip(rows, farkas_exact):
                y_full[rr] = yy
            y_orig = [
                y_full[i] * (1 if can.row_sign[i] > 0 else -1) for i in range(can.m_orig)
            ]
            ye = np.array([float(v) for v in y_orig])
            if not _verify_farkas_exact(p, y_orig):
                raise LpError("exact Farkas certificate failed verification")
            sol = LpSolution(
                status="infeasible",
                farkas=ye,
                iterations=sx.iterations,
                exact_certified=True,
                farkas_exact=tuple(y_orig),
            )
        return sol

    if status == "unbounded":
        return LpSolution(status="unbounded", iterations=sx.iterations)

    # assemble the float solution
    sx.refactorize()
    n_can = n_all
    x_can = np.zeros(n_can)
    for val, j in zip(sx.x_b, sx.basis):
        if j < n_can:
            x_can[j] = val
    c2 = np.concatenate([can.c, np.zeros(sx.m)])
    y_keep = c2[sx.basis] @ sx.b_inv
    y_can = np.zeros(m_all)
    rows = keep if keep is not None else range(m_all)
    for rr, yy in zip(rows, y_keep):
        y_can[rr] = yy
    x = can.x_back(x_can)
    duals = can.duals_back(y_can)
    obj = float(p.objective @ x)

    # self-check: primal feasibility and duality gap
    scale = max(1.0, float(np.abs(p.eq_rhs).max()))
    resid = float(np.abs(p.eq_matrix @ x - p.eq_rhs).max())
    if resid > 1e-9 * scale * 10:
        raise LpError(f"optimal solution violates equalities by {resid:.3e}")
    if ((x - p.lower) < -1e-8 * scale).any() or (
        np.isfinite(p.upper) & ((x - p.upper) > 1e-8 * scale)
    ).any():
        raise LpError("optimal solution violates variable bounds")
    dual_obj = float(y_can @ can.b) + float(p.objective @ p.lower)
    gap_scale = max(1.0, abs(obj), abs(dual_obj))
    if abs(obj - dual_obj) > 1e-7 * gap_scale:
        raise LpError(f"duality gap {obj - dual_obj:.3e} exceeds tolerance")

    sol = LpSolution(
        status="optimal", x=x, objective_value=obj, duals=duals, iterations=sx.iterations
    )
    if exact:
        warm = list(sx.basis)
        est, ex, _, rows2 = _exact_refine(can, warm, keep)
        if est == "infeasible":
            raise LpError("exact re-solve contradicts float optimality")
        if est == "unbounded":
            raise LpError("exact re-solve reports unbounded")
        x_can_e = [Fraction(0)] * n_can
        for val, j in zip(ex.x_b, ex.basis):
            if j < n_can:
                x_can_e[j] = val
        c_exact = [Fraction(v) for v in can.c] + [Fraction(0)] * ex.m
        y_keep_e = ex.duals(c_exact)
        y_full = [Fraction(0)] * m_all
        for rr, yy in zip(rows2, y_keep_e):
            y_full[rr] = yy
        lo = [Fraction(v) for v in p.lower]
        x_exact = tuple(x_can_e[j] + lo[j] for j in range(p.n_vars))
        duals_exact = tuple(
            y_full[i] * (1 if can.row_sign[i] > 0 else -1) for i in range(can.m_orig)
        )
        obj_exact = sum(Fraction(cv) * xv for cv, xv in zip(p.objective, x_exact))
        sol = LpSolution(
            status="optimal",
            x=np.array([float(v) for v in x_exact]),
            objective_value=float(obj_exact),
            duals=np.array([float(v) for v in duals_exact]),
            iterations=sx.iterations,
            exact_certified=True,
            x_exact=x_exact,
            duals_exact=duals_exact,
            objective_exact=obj_exact,
        )
    return sol
