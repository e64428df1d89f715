"""Membership, visibility and bound computations for broadcast-local models.

A :class:`BroadcastModel` partitions the parties into blocks; each block is
either a deterministic-local response (its extreme points are deterministic
behaviours) or an arbitrary no-signalling box.  Membership of a behaviour in
the convex hull of block products is decided by linear programming, in a
vertex-product formulation and in a hybrid formulation that keeps one block
as sub-normalised box variables.  Infeasibility certificates are returned as
Bell-type inequalities with exact rational model bounds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import lp
from .polytope import (
    DEFAULT_BUDGET,
    VertexSet,
    deterministic_vertices,
    ns_h_representation,
    ns_vertices,
)
from .quantum import PAULIS, tensor
from .scenarios import Behaviour, Inequality, Scenario, evaluate

__all__ = [
    "BroadcastModel",
    "MembershipResult",
    "VisibilityResult",
    "local_model",
    "one_sided_broadcast_model",
    "two_sided_broadcast_model",
    "block_vertex_sets",
    "membership_vertex_form",
    "membership_hybrid_form",
    "visibility",
    "model_bound",
    "rescale_inequality",
    "horodecki_chsh_max",
    "fig2_curves",
]


@dataclass(frozen=True)
class BroadcastModel:
    """Partition of the parties into deterministic-local and no-signalling blocks."""

    scenario: Scenario
    blocks: tuple[tuple[int, ...], ...]
    kinds: tuple[str, ...]

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(k) for k in g)) for g in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if len(blocks) != len(self.kinds) or not blocks:
            raise ValueError("blocks and kinds must align and be non-empty")
        covered = sorted(k for g in blocks for k in g)
        if covered != list(range(self.scenario.parties)):
            raise ValueError("blocks must partition the parties")
        for kind in self.kinds:
            if kind not in ("deterministic_local", "no_signalling"):
                raise ValueError(f"unknown block kind {kind!r}")

    def block_scenario(self, i: int) -> Scenario:
        g = self.blocks[i]
        return Scenario(
            tuple(self.scenario.inputs[k] for k in g),
            tuple(self.scenario.outputs[k] for k in g),
        )

    @property
    def bound_kind(self) -> str:
        return "lhv" if all(k == "deterministic_local" for k in self.kinds) else "broadcast_local"


def local_model(scenario: Scenario) -> BroadcastModel:
    """Fully local model: every party is its own deterministic block."""
    return BroadcastModel(
        scenario,
        tuple((k,) for k in range(scenario.parties)),
        tuple("deterministic_local" for _ in range(scenario.parties)),
    )


def one_sided_broadcast_model(scenario: Scenario) -> BroadcastModel:
    """First party deterministic, remaining parties one no-signalling block."""
    rest = tuple(range(1, scenario.parties))
    return BroadcastModel(scenario, ((0,), rest), ("deterministic_local", "no_signalling"))


def two_sided_broadcast_model(scenario: Scenario) -> BroadcastModel:
    """Four-party model with no-signalling blocks {0,1} and {2,3}."""
    if scenario.parties != 4:
        raise ValueError("two-sided broadcast model needs four parties")
    return BroadcastModel(scenario, ((0, 1), (2, 3)), ("no_signalling", "no_signalling"))


def block_vertex_sets(model: BroadcastModel, budget: int = DEFAULT_BUDGET) -> list[VertexSet]:
    """Extreme points of each block's behaviour set, in exact rationals."""
    out = []
    for i, (g, kind) in enumerate(zip(model.blocks, model.kinds)):
        bs = model.block_scenario(i)
        if kind == "deterministic_local" or len(g) == 1:
            # single-party no-signalling boxes are mixtures of deterministic points
            out.append(deterministic_vertices(bs.inputs, bs.outputs, budget=budget))
        elif len(g) == 2:
            out.append(ns_vertices(bs.inputs, bs.outputs, budget=budget))
        else:
            raise ValueError("no-signalling blocks with more than two parties are unsupported")
    return out


def _block_index_maps(model: BroadcastModel) -> list[np.ndarray]:
    """For each block, the map from full table index to block table index."""
    scen = model.scenario
    maps = [np.empty(scen.table_size, dtype=np.intp) for _ in model.blocks]
    for outcomes in scen.iter_outcomes():
        for settings in scen.iter_settings():
            t = scen.table_index(outcomes, settings)
            for i, g in enumerate(model.blocks):
                bs = model.block_scenario(i)
                t_b = bs.table_index(
                    tuple(outcomes[k] for k in g), tuple(settings[k] for k in g)
                )
                maps[i][t] = t_b
    return maps


def _product_columns(model: BroadcastModel, vsets: list[VertexSet]) -> np.ndarray:
    """Dense matrix whose columns are the products of block vertices."""
    maps = _block_index_maps(model)
    mats = [vs.as_float_matrix() for vs in vsets]
    cols = []
    for combo in itertools.product(*(range(len(vs)) for vs in vsets)):
        col = np.ones(model.scenario.table_size)
        for i, j in enumerate(combo):
            col = col * mats[i][j][maps[i]]
        cols.append(col)
    return np.column_stack(cols)


class _ModelLpData:
    """Cached vertex-product data of a model, with a row-space compression.

    The behaviour-matching rows of the vertex-form LP have rank equal to the
    dimension of the model's linear span, far below the table size in the
    four-party scenarios.  Solving against an orthonormal basis Q of the
    column space of the product matrix is equivalent (any rhs component
    orthogonal to that space is an immediate Farkas certificate) and keeps
    the simplex basis small.  Compression is bypassed in exact mode.
    """

    def __init__(self, model: BroadcastModel, budget: int):
        self.model = model
        self.vsets = block_vertex_sets(model, budget=budget)
        self.v = _product_columns(model, self.vsets)
        gram = self.v @ self.v.T
        w, u = np.linalg.eigh(gram)
        scale = max(1.0, w[-1])
        keep = w > 1e-12 * scale
        self.q = u[:, keep].T  # r x m, orthonormal rows spanning colspace(V)
        self.vc = self.q @ self.v

    def project_rhs(self, b: np.ndarray):
        """Split b into its compressed image and the orthogonal residual."""
        qb = self.q @ b
        resid = b - self.q.T @ qb
        return qb, resid


_MODEL_CACHE: dict = {}


def _model_lp_data(model: BroadcastModel, budget: int) -> _ModelLpData:
    key = (model.scenario, model.blocks, model.kinds)
    data = _MODEL_CACHE.get(key)
    if data is None:
        data = _ModelLpData(model, budget)
        _MODEL_CACHE[key] = data
    return data


@dataclass(frozen=True)
class MembershipResult:
    feasible: bool
    weights: np.ndarray | None = None
    separating: Inequality | None = None


@dataclass(frozen=True)
class VisibilityResult:
    v_star: float
    separating: Inequality | None = None
    v_star_exact: Fraction | None = None


def _separating_from_dual(
    y: np.ndarray, b: Behaviour, model: BroadcastModel, vsets, budget: int
) -> Inequality:
    """Scale a dual vector into an Inequality with its exact model bound."""
    scale = np.abs(y).max()
    g = y / scale if scale > 0 else y
    bound = model_bound(
        Inequality(b.scenario, g, 0.0, model.bound_kind), model, vsets=vsets, budget=budget
    )
    return Inequality(b.scenario, g, float(bound), model.bound_kind)


def membership_vertex_form(
    b: Behaviour,
    model: BroadcastModel,
    exact: bool = False,
    budget: int = DEFAULT_BUDGET,
) -> MembershipResult:
    """Decide membership by decomposing over all products of block vertices."""
    if b.scenario != model.scenario:
        raise ValueError("behaviour and model scenarios differ")
    if exact:
        vsets = block_vertex_sets(model, budget=budget)
        v = _product_columns(model, vsets)
        problem = lp.LpProblem(np.zeros(v.shape[1]), v, b.table)
        sol = lp.solve(problem, exact=True)
        farkas = sol.farkas
    else:
        data = _model_lp_data(model, budget)
        vsets = data.vsets
        qb, resid = data.project_rhs(b.table)
        if np.linalg.norm(resid) > 1e-9:
            sep = _separating_from_dual(resid, b, model, vsets, budget)
            return MembershipResult(feasible=False, separating=sep)
        problem = lp.LpProblem(np.zeros(data.vc.shape[1]), data.vc, qb)
        sol = lp.solve(problem)
        farkas = data.q.T @ sol.farkas if sol.status == "infeasible" else None
    if sol.status == "optimal":
        return MembershipResult(feasible=True, weights=sol.x)
    if sol.status != "infeasible":
        raise lp.LpError(f"membership LP ended with status {sol.status}")
    sep = _separating_from_dual(farkas, b, model, vsets, budget)
    return MembershipResult(feasible=False, separating=sep)


def _hybrid_rows(model: BroadcastModel, enumerated_block: int | None):
    """Pick the enumerated block and the variable block for the hybrid LP."""
    if len(model.blocks) != 2:
        raise ValueError("hybrid formulation supports exactly two blocks")
    if enumerated_block is None:
        det = [i for i, k in enumerate(model.kinds) if k == "deterministic_local"]
        enumerated_block = det[0] if det else 0
    var_block = 1 - enumerated_block
    if model.kinds[var_block] == "deterministic_local" and len(model.blocks[var_block]) > 1:
        raise ValueError(
            "hybrid variable block must be no-signalling (or a single party)"
        )
    if len(model.blocks[var_block]) > 2:
        raise ValueError("hybrid variable block supports at most two parties")
    return enumerated_block, var_block


def _hybrid_lp(
    b_table: np.ndarray,
    model: BroadcastModel,
    enumerated_block: int | None,
    budget: int,
    extra_cols: np.ndarray | None = None,
    extra_upper: float | None = None,
):
    """Equality system of the hybrid LP: behaviour rows, then box constraints.

    Variables are one sub-normalised box table per enumerated vertex (plus
    optional extra columns appended at the end).  Returns the LpProblem pieces
    and the number of behaviour rows.
    """
    e_idx, v_idx = _hybrid_rows(model, enumerated_block)
    scen = model.scenario
    vsets = block_vertex_sets(model, budget=budget)
    everts = vsets[e_idx].as_float_matrix()
    n_e = everts.shape[0]
    vscen = model.block_scenario(v_idx)
    t_v = vscen.table_size
    maps = _block_index_maps(model)
    e_map, v_map = maps[e_idx], maps[v_idx]

    n_vars = n_e * t_v
    rows = []
    rhs = []
    # behaviour matching: p(t) = sum_i E_i[e_map(t)] q_i[v_map(t)]
    a_beh = np.zeros((scen.table_size, n_vars))
    for t in range(scen.table_size):
        for i in range(n_e):
            a_beh[t, i * t_v + v_map[t]] += everts[i, e_map[t]]
    rows.append(a_beh)
    rhs.append(b_table)
    # no-signalling structure of each box (marginal equalities only; the
    # equal-normalisation constraint replaces per-setting normalisation)
    if len(model.blocks[v_idx]) == 2:
        h = ns_h_representation(vscen.inputs, vscen.outputs)
        ns_rows = [row for row, r in h.equalities if r == 0]
    else:
        ns_rows = []
    n_set = vscen.n_settings
    per_box = []
    for row in ns_rows:
        per_box.append(np.array([float(x) for x in row]))
    # equal normalisation across settings
    first = None
    for settings in vscen.iter_settings():
        row = np.zeros(t_v)
        for outcomes in vscen.iter_outcomes():
            row[vscen.table_index(outcomes, settings)] = 1.0
        if first is None:
            first = row
        else:
            per_box.append(first - row)
    if per_box:
        a_box = np.zeros((len(per_box) * n_e, n_vars))
        for i in range(n_e):
            for r, row in enumerate(per_box):
                a_box[i * len(per_box) + r, i * t_v : (i + 1) * t_v] = row
        rows.append(a_box)
        rhs.append(np.zeros(a_box.shape[0]))
    a = np.vstack(rows)
    b_vec = np.concatenate(rhs)
    if extra_cols is not None:
        pad = np.zeros((a.shape[0] - extra_cols.shape[0], extra_cols.shape[1]))
        a = np.hstack([a, np.vstack([extra_cols, pad])])
    upper = None
    if extra_upper is not None:
        upper = np.full(a.shape[1], np.inf)
        upper[-1] = extra_upper
    return a, b_vec, upper, scen.table_size, vsets


def membership_hybrid_form(
    b: Behaviour,
    model: BroadcastModel,
    enumerated_block: int | None = None,
    exact: bool = False,
    budget: int = DEFAULT_BUDGET,
) -> MembershipResult:
    """Decide membership keeping one block as sub-normalised box variables."""
    if b.scenario != model.scenario:
        raise ValueError("behaviour and model scenarios differ")
    a, b_vec, _, n_beh, vsets = _hybrid_lp(b.table, model, enumerated_block, budget)
    problem = lp.LpProblem(np.zeros(a.shape[1]), a, b_vec)
    sol = lp.solve(problem, exact=exact)
    if sol.status == "optimal":
        return MembershipResult(feasible=True, weights=sol.x)
    if sol.status != "infeasible":
        raise lp.LpError(f"membership LP ended with status {sol.status}")
    sep = _separating_from_dual(sol.farkas[:n_beh], b, model, vsets, budget)
    return MembershipResult(feasible=False, separating=sep)


def visibility(
    p_ent: Behaviour,
    p_noise: Behaviour,
    model: BroadcastModel,
    formulation: str = "vertex",
    exact: bool = False,
    budget: int = DEFAULT_BUDGET,
) -> VisibilityResult:
    """Largest v in [0, 1] with v p_ent + (1-v) p_noise inside the model.

    When v* < 1 the optimal equality duals yield a separating inequality,
    violated by the mixture for every v > v*.
    """
    if p_ent.scenario != model.scenario or p_noise.scenario != model.scenario:
        raise ValueError("behaviour scenarios do not match the model")
    scen = model.scenario
    d = p_ent.table - p_noise.table
    back_map = None
    compressed = False
    if formulation == "vertex" and not exact:
        data = _model_lp_data(model, budget)
        qd, d_resid = data.project_rhs(d)
        qb, b_resid = data.project_rhs(p_noise.table)
        # mixtures of quantum behaviours stay inside the model's span; if not,
        # fall through to the uncompressed formulation
        compressed = np.linalg.norm(d_resid) <= 1e-9 and np.linalg.norm(b_resid) <= 1e-9
        if compressed:
            vsets = data.vsets
            a = np.hstack([data.vc, -qd[:, None]])
            b_vec = qb
            upper = np.full(a.shape[1], np.inf)
            upper[-1] = 1.0
            n_beh = data.q.shape[0]
            back_map = data.q.T
    if formulation == "vertex" and not compressed:
        vsets = block_vertex_sets(model, budget=budget)
        v = _product_columns(model, vsets)
        a = np.hstack([v, -d[:, None]])
        b_vec = p_noise.table
        upper = np.full(a.shape[1], np.inf)
        upper[-1] = 1.0
        n_beh = scen.table_size
    elif formulation == "hybrid":
        a, b_vec, upper, n_beh, vsets = _hybrid_lp(
            p_noise.table, model, None, budget, extra_cols=-d[:, None], extra_upper=1.0
        )
    elif formulation != "vertex":
        raise ValueError(f"unknown formulation {formulation!r}")
    c = np.zeros(a.shape[1])
    c[-1] = 1.0
    sol = lp.solve(lp.LpProblem(c, a, b_vec, upper=upper), exact=exact)
    if sol.status != "optimal":
        raise ValueError(
            "visibility LP is infeasible: the noise behaviour is outside the model"
        )
    v_star = float(min(1.0, max(0.0, sol.objective_value)))
    v_exact = sol.objective_exact if exact else None
    if v_star >= 1.0 - 1e-9:
        return VisibilityResult(v_star=1.0, separating=None, v_star_exact=v_exact)
    y = sol.duals[:n_beh].copy()
    if back_map is not None:
        y = back_map @ y
    if float(y @ d) < 0:
        y = -y
    sep = _separating_from_dual(y, p_ent, model, vsets, budget)
    # the mixture just past v* must violate the extracted inequality
    probe = (v_star + 1e-6) * p_ent.table + (1.0 - v_star - 1e-6) * p_noise.table
    if float(sep.coefficients @ probe) <= sep.bound:
        raise lp.LpError("visibility dual failed to separate just past v*")
    return VisibilityResult(v_star=v_star, separating=sep, v_star_exact=v_exact)


def model_bound(
    ineq: Inequality,
    model: BroadcastModel,
    vsets: list[VertexSet] | None = None,
    budget: int = DEFAULT_BUDGET,
) -> Fraction:
    """Exact maximum of the functional over all products of block vertices."""
    if ineq.scenario != model.scenario:
        raise ValueError("inequality and model scenarios differ")
    if vsets is None:
        vsets = block_vertex_sets(model, budget=budget)
    coeffs = [Fraction(c) for c in ineq.coefficients]
    maps = _block_index_maps(model)
    if len(vsets) == 2:
        # factorise: value(i, j) = v1_i . C . v2_j with C the coefficient table
        t1 = len(vsets[0].vertices[0])
        t2 = len(vsets[1].vertices[0])
        c_mat = [[Fraction(0)] * t2 for _ in range(t1)]
        for t in range(model.scenario.table_size):
            c_mat[maps[0][t]][maps[1][t]] += coeffs[t]
        best = None
        half = [
            [sum(v1[i] * c_mat[i][j] for i in range(t1) if c_mat[i][j]) for j in range(t2)]
            for v1 in vsets[0].vertices
        ]
        for row in half:
            for v2 in vsets[1].vertices:
                val = sum(row[j] * v2[j] for j in range(t2))
                if best is None or val > best:
                    best = val
        return best
    best = None
    for combo in itertools.product(*(vs.vertices for vs in vsets)):
        val = Fraction(0)
        for t in range(model.scenario.table_size):
            prod = coeffs[t]
            if prod == 0:
                continue
            for i, vert in enumerate(combo):
                prod *= vert[maps[i][t]]
                if prod == 0:
                    break
            val += prod
        if best is None or val > best:
            best = val
    return best


def rescale_inequality(
    ineq: Inequality,
    model: BroadcastModel,
    bound_target: float,
    witness: Behaviour,
    witness_target: float,
    budget: int = DEFAULT_BUDGET,
) -> Inequality:
    """Affine gauge fixing: scale and shift so the model bound and a witness value
    hit prescribed targets.  Shifting adds a multiple of the normalisation
    functional (constant 1 on every behaviour), which never changes which
    behaviours violate the inequality.
    """
    beta = float(model_bound(ineq, model, budget=budget))
    val = evaluate(ineq, witness)
    if abs(val - beta) < 1e-12:
        raise ValueError("witness does not separate from the model bound")
    s = (witness_target - bound_target) / (val - beta)
    scen = ineq.scenario
    # constant functional: 1/n_settings on every entry sums to 1 on any behaviour
    norm_f = np.full(scen.table_size, 1.0 / scen.n_settings)
    mu = bound_target - s * beta
    coeffs = s * ineq.coefficients + mu * norm_f
    return Inequality(scen, coeffs, bound_target, ineq.bound_kind)


def horodecki_chsh_max(rho: np.ndarray) -> float:
    """Largest CHSH value of a two-qubit state over all measurement choices.

    Equals 2 sqrt(t1 + t2) where t1 >= t2 are the two largest eigenvalues of
    T^T T and T is the Pauli correlation matrix of the state.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("horodecki_chsh_max expects a two-qubit density matrix")
    t = np.empty((3, 3))
    for i, si in enumerate(PAULIS):
        for j, sj in enumerate(PAULIS):
            t[i, j] = np.trace(rho @ tensor(si, sj)).real
    w = np.linalg.eigvalsh(t.T @ t)
    return 2.0 * float(np.sqrt(w[-1] + w[-2]))


def fig2_curves(thetas, seed: int = 0, restarts: int = 4, workers: int = 0):
    """Critical visibilities of the two-parameter state family per theta.

    Returns a list of (theta, v_broadcast, v_chsh) rows.  The broadcast value
    comes from a seesaw-plus-LP search in the three-party scenario, warm
    started from the analytic strategy and continued from neighbouring grid
    points (largest theta first); the CHSH value is the closed form
    1/sqrt(1 + sin^2(2 theta)).
    """
    from .seesaw import SeesawConfig, broadcast_visibility_search

    thetas = sorted(float(t) for t in thetas)
    rows = {}
    warm = None
    for theta in reversed(thetas):
        cfg = SeesawConfig(restarts=restarts, seed=seed)
        res = broadcast_visibility_search(theta, cfg, warm_start=warm, workers=workers)
        warm = res.best_strategy
        v_chsh = 1.0 / np.sqrt(1.0 + np.sin(2.0 * theta) ** 2)
        rows[theta] = (theta, res.best_visibility, v_chsh)
    return [rows[t] for t in thetas]
