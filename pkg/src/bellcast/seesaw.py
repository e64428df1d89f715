"""Heuristic maximisation of inequality violations and visibility search.

Strategies are optimised coordinate-wise: each dichotomic observable update
is solved in closed form (the sign operator of its Hermitian context, which
is the exact optimum of the corresponding semidefinite subproblem), and each
broadcast channel is improved by Riemannian gradient ascent on the isometry
manifold (polar retraction, Armijo backtracking).  The global loop alternates
these sweeps with the visibility LP, re-targeting the seesaw at the dual
inequality returned by the program.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import quantum as qm
from .certify import BroadcastModel, visibility
from .scenarios import (
    Behaviour,
    Inequality,
    QuantumStrategy,
    Scenario,
    behaviour_from_strategy,
    builtin_inequality,
    evaluate,
    observables_to_povms,
    strategy_from_observables,
)

__all__ = [
    "SeesawConfig",
    "SearchResult",
    "update_observable",
    "update_channel",
    "seesaw_maximize",
    "global_visibility_search",
    "broadcast_visibility_search",
    "random_observables",
    "random_channels",
]


@dataclass(frozen=True)
class SeesawConfig:
    """Knobs of the seesaw and of the outer visibility loop."""

    convergence_eps: float = 1e-8
    max_sweeps: int = 500
    channel_step: float = 0.5
    channel_backtrack: float = 0.5
    channel_armijo: float = 1e-4
    channel_max_halvings: int = 40
    restarts: int = 1
    seed: int = 0
    probe_budget: int = 30
    outer_eps: float = 1e-5
    max_outer: int = 12
    vis_formulation: str = "vertex"

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        for name in ("convergence_eps", "channel_step", "channel_backtrack", "channel_armijo"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SearchResult:
    best_value: float
    best_strategy: QuantumStrategy
    best_visibility: float | None = None
    best_inequality: Inequality | None = None
    trace: tuple = ()
    seed: int | None = None
    sweeps: int = 0
    line_search_failures: int = 0


# ---------------------------------------------------------------------------
# fast objective machinery (dichotomic observables)


def _coeff_tensor(ineq: Inequality) -> np.ndarray:
    s = ineq.scenario
    return ineq.coefficients.reshape(s.outputs + s.inputs)


def _broadcast(state, dims, channels):
    rho = state
    cur = list(dims)
    for on, iso in sorted(channels, key=lambda c: -c[0]):
        rho = qm.apply_isometry(rho, tuple(cur), on, iso)
        cur[on] = iso.d_out
    return rho, tuple(cur)


def _observable_dims(observables):
    return tuple(party[0].shape[0] for party in observables)


def _stacks(observables, party_dims):
    out = []
    for k, party in enumerate(observables):
        d = party_dims[k]
        eye = np.eye(d)
        t = np.empty((len(party), 2, d, d), dtype=complex)
        for x, obs in enumerate(party):
            t[x, 0] = (eye + obs) / 2.0
            t[x, 1] = (eye - obs) / 2.0
        out.append(t)
    return out


def _value(coeff, rho_t, stacks, n):
    args = [rho_t, list(range(n, 2 * n)) + list(range(n))]
    for k in range(n):
        args.extend([stacks[k], [2 * n + k, 3 * n + k, k, n + k]])
    args.extend([coeff, list(range(3 * n, 4 * n)) + list(range(2 * n, 3 * n))])
    return float(np.einsum(*args, []).real)


def _contexts_for_party(coeff, rho_t, stacks, n, k):
    """Hermitian context operators F[x] with objective = const + sum_x Tr(O_x F[x])."""
    signed = np.tensordot(coeff, np.array([0.5, -0.5]), axes=([k], [0]))
    # remaining axes of `signed`: outcome axes of parties != k (ascending), then all setting axes
    args = [rho_t, list(range(n, 2 * n)) + list(range(n))]
    for j in range(n):
        if j == k:
            continue
        args.extend([stacks[j], [2 * n + j, 3 * n + j, j, n + j]])
    sig_labels = [3 * n + j for j in range(n) if j != k] + [2 * n + j for j in range(n)]
    args.extend([signed, sig_labels])
    out = np.einsum(*args, [2 * n + k, k, n + k])
    # out[x, i_k, j_k] multiplies O[i_k, j_k]; the trace pairing transposes it
    return [np.ascontiguousarray(out[x].T) for x in range(out.shape[0])]


def _bell_operator(coeff, stacks, party_dims, n):
    args = []
    for k in range(n):
        args.extend([stacks[k], [2 * n + k, 3 * n + k, k, n + k]])
    args.extend([coeff, list(range(3 * n, 4 * n)) + list(range(2 * n, 3 * n))])
    out = np.einsum(*args, list(range(n)) + list(range(n, 2 * n)))
    d = int(np.prod(party_dims))
    return out.reshape(d, d)


def update_observable(context: np.ndarray) -> np.ndarray:
    """Optimal dichotomic observable for a Hermitian context: sign(context).

    Maximises Tr(O context) over Hermitian -1 <= O <= 1 exactly; eigenvalues
    that vanish are assigned +1.
    """
    w, v = qm.hermitian_eig(context)
    signs = np.where(w >= 0.0, 1.0, -1.0)
    out = (v * signs) @ v.conj().T
    return (out + out.conj().T) / 2.0


# ---------------------------------------------------------------------------
# channel update


def _herm(m):
    return (m + m.conj().T) / 2.0


def _polar(m: np.ndarray) -> np.ndarray:
    u, _, wh = np.linalg.svd(m, full_matrices=False)
    return u @ wh


def _channel_gradient(bell, state, dims, channels, idx):
    """Euclidean gradient of Tr[B rho_bc] with respect to conj(V) of channel idx."""
    on, iso = channels[idx]
    rho_p = state
    cur = list(dims)
    for j, (o, v) in sorted(enumerate(channels), key=lambda t: -t[1][0]):
        if j == idx:
            continue
        rho_p = qm.apply_isometry(rho_p, tuple(cur), o, v)
        cur[o] = v.d_out
    slot_dims_in = tuple(cur)
    slot_dims_out = tuple(v if i != on else iso.d_out for i, v in enumerate(cur))
    d_before = int(np.prod(slot_dims_in[:on])) if on else 1
    d_after = int(np.prod(slot_dims_in[on + 1:])) if on + 1 < len(slot_dims_in) else 1
    big_v = qm.tensor(np.eye(d_before), iso.matrix, np.eye(d_after))
    x = bell @ big_v @ rho_p
    ns = len(slot_dims_in)
    xt = x.reshape(slot_dims_out + slot_dims_in)
    # trace out matching rest slots, keep (out, in) of slot `on`
    row = [i if i != on else ns for i in range(ns)]
    col = [i if i != on else ns + 1 for i in range(ns)]
    return np.einsum(xt, row + col, [ns, ns + 1])


def _channel_value(bell, state, dims, channels):
    rho, _ = _broadcast(state, dims, channels)
    return float(np.trace(bell @ rho).real)


def update_channel(
    ineq_or_bell,
    state,
    dims,
    channels,
    observables,
    idx: int,
    cfg: SeesawConfig,
):
    """One backtracked Riemannian ascent step on channel ``idx``.

    Returns (isometry, new value, line_search_failed).  The value never drops:
    if no step passes the Armijo test the current isometry is returned.
    """
    if isinstance(ineq_or_bell, Inequality):
        n = len(observables)
        pdims = _observable_dims(observables)
        coeff = _coeff_tensor(ineq_or_bell)
        bell = _bell_operator(coeff, _stacks(observables, pdims), pdims, n)
    else:
        bell = ineq_or_bell
    on, iso = channels[idx]
    val0 = _channel_value(bell, state, dims, channels)
    grad = _channel_gradient(bell, state, dims, channels, idx)
    v = iso.matrix
    xi = grad - v @ _herm(v.conj().T @ grad)
    slope = 2.0 * float(np.linalg.norm(xi) ** 2)
    if slope < 1e-16:
        return iso, val0, False
    eta = cfg.channel_step
    for _ in range(cfg.channel_max_halvings):
        cand = qm.Isometry(_polar(v + eta * xi))
        trial = list(channels)
        trial[idx] = (on, cand)
        val = _channel_value(bell, state, dims, trial)
        if val >= val0 + cfg.channel_armijo * eta * slope:
            return cand, val, False
        eta *= cfg.channel_backtrack
    return iso, val0, True


# ---------------------------------------------------------------------------
# seesaw


def observables_of(strategy: QuantumStrategy):
    """Dichotomic observables M0 - M1 of a two-outcome strategy."""
    obs = []
    for party in strategy.measurements:
        obs.append([np.asarray(m0 - m1) for m0, m1 in party])
    return obs


def random_observables(scenario: Scenario, party_dims, rng) -> list:
    """Sign operators of GUE-like random Hermitian matrices, per party and setting."""
    return [
        [update_observable(qm.random_hermitian(party_dims[k], rng)) for _ in range(scenario.inputs[k])]
        for k in range(scenario.parties)
    ]


def random_channels(layout, rng) -> tuple:
    """Haar-random isometries for a ((subsystem, d_out, d_in), ...) layout."""
    return tuple((on, qm.random_isometry(d_out, d_in, rng)) for on, d_out, d_in in layout)


def _seesaw_once(ineq, state, dims, channels, observables, cfg):
    """Single seesaw run; returns (value, channels, observables, trace, failures)."""
    scen = ineq.scenario
    n = scen.parties
    coeff = _coeff_tensor(ineq)
    channels = list(channels)
    observables = [list(p) for p in observables]
    trace = []
    failures = 0
    prev = -np.inf
    pdims = _observable_dims(observables)
    for sweep in range(cfg.max_sweeps):
        rho, _ = _broadcast(state, dims, channels)
        rho_t = rho.reshape(pdims + pdims)
        for k in range(n):
            stacks = _stacks(observables, pdims)
            ctx = _contexts_for_party(coeff, rho_t, stacks, n, k)
            for x in range(scen.inputs[k]):
                observables[k][x] = update_observable(ctx[x])
        if channels:
            stacks = _stacks(observables, pdims)
            bell = _bell_operator(coeff, stacks, pdims, n)
            for idx in range(len(channels)):
                iso_new, _, failed = update_channel(
                    bell, state, dims, channels, observables, idx, cfg
                )
                channels[idx] = (channels[idx][0], iso_new)
                failures += int(failed)
        rho, _ = _broadcast(state, dims, channels)
        rho_t = rho.reshape(pdims + pdims)
        value = _value(coeff, rho_t, _stacks(observables, pdims), n)
        trace.append(value)
        if value < prev - 1e-9:
            raise RuntimeError(f"seesaw value decreased from {prev} to {value}")
        if abs(value - prev) < cfg.convergence_eps:
            break
        prev = value
    return trace[-1], tuple(channels), [tuple(p) for p in observables], tuple(trace), failures


def _strategy(state, dims, channels, observables) -> QuantumStrategy:
    return strategy_from_observables(state, dims, tuple(channels), tuple(tuple(p) for p in observables))


def seesaw_maximize(
    ineq: Inequality,
    state: np.ndarray,
    dims,
    channels_init=None,
    observables_init=None,
    cfg: SeesawConfig | None = None,
    channel_layout=None,
) -> SearchResult:
    """Best-of-restarts seesaw maximisation of an inequality for a fixed state.

    Restart 0 uses the provided initial channels and observables when given;
    every other restart draws fresh random ones from a counter-derived seed.
    ``channel_layout`` ((subsystem, d_out, d_in), ...) describes the channels
    to randomise when no initial channels are supplied.
    """
    cfg = cfg or SeesawConfig()
    scen = ineq.scenario
    if channel_layout is None and channels_init is not None:
        channel_layout = tuple((on, iso.d_out, iso.d_in) for on, iso in channels_init)
    if channel_layout is None:
        channel_layout = ()
    pdims = _party_dims(dims, channel_layout, scen)
    best = None
    for r in range(cfg.restarts):
        rng = np.random.default_rng((cfg.seed, r))
        if r == 0 and observables_init is not None:
            obs = [list(p) for p in observables_init]
        else:
            obs = random_observables(scen, pdims, rng)
        if r == 0 and channels_init is not None:
            chans = tuple(channels_init)
        else:
            chans = random_channels(channel_layout, rng)
        value, chans, obs, trace, failures = _seesaw_once(ineq, state, dims, chans, obs, cfg)
        if best is None or value > best.best_value + 1e-12:
            best = SearchResult(
                best_value=value,
                best_strategy=_strategy(state, dims, chans, obs),
                best_inequality=ineq,
                trace=trace,
                seed=cfg.seed,
                sweeps=len(trace),
                line_search_failures=failures,
            )
    return best


def _party_dims(dims, channel_layout, scen: Scenario):
    """Local dimension of each party after the broadcast channels."""
    expanded = []
    layout = {on: d_out for on, d_out, _ in channel_layout}
    for i, d in enumerate(dims):
        out = layout.get(i, d)
        # broadcast outputs are qubit pairs in every scenario used here
        while out > 1:
            expanded.append(2 if out % 2 == 0 else out)
            out //= expanded[-1]
    if len(expanded) != scen.parties:
        # fall back to qubits per party
        expanded = [2] * scen.parties
    return tuple(expanded)


# ---------------------------------------------------------------------------
# global visibility search (outer loop)


def _mixture(rho_ent, rho_noise, v):
    return v * rho_ent + (1.0 - v) * rho_noise


def _visibility_of(strategy, scenario, model, rho_ent, rho_noise, cfg):
    p_ent = behaviour_from_strategy(replace(strategy, state=rho_ent), scenario, validate=False)
    p_noise = behaviour_from_strategy(replace(strategy, state=rho_noise), scenario, validate=False)
    return visibility(p_ent, p_noise, model, formulation=cfg.vis_formulation)


def _restart_search(args):
    (scenario, model, rho_ent, rho_noise, dims, channel_layout, cfg, r, warm) = args
    rng = np.random.default_rng((cfg.seed, r))
    pdims = _party_dims(dims, channel_layout, scenario)
    best_v = 1.0
    best_strategy = None
    best_ineq = None
    trace = []

    if warm is not None:
        strategy = warm
    else:
        strategy = None
        for _ in range(cfg.probe_budget):
            obs = random_observables(scenario, pdims, rng)
            chans = random_channels(channel_layout, rng)
            cand = _strategy(rho_ent, dims, chans, obs)
            res = _visibility_of(cand, scenario, model, rho_ent, rho_noise, cfg)
            if res.v_star < 1.0 - 1e-7:
                strategy = cand
                best_v = res.v_star
                best_ineq = res.separating
                best_strategy = cand
                trace.append(best_v)
                break
        if strategy is None:
            return SearchResult(
                best_value=0.0,
                best_strategy=_strategy(rho_ent, dims, random_channels(channel_layout, rng),
                                         random_observables(scenario, pdims, rng)),
                best_visibility=1.0,
                best_inequality=None,
                trace=(),
                seed=cfg.seed,
            )

    if warm is not None:
        res = _visibility_of(strategy, scenario, model, rho_ent, rho_noise, cfg)
        best_v = res.v_star
        best_ineq = res.separating if res.v_star < 1.0 else builtin_inequality_for(scenario)
        best_strategy = strategy
        trace.append(best_v)
        if best_ineq is None:
            best_ineq = builtin_inequality_for(scenario)

    value = 0.0
    sweeps = 0
    for _ in range(cfg.max_outer):
        ineq = best_ineq
        if ineq is None:
            break
        rho_v = _mixture(rho_ent, rho_noise, best_v)
        res = seesaw_maximize(
            ineq,
            rho_v,
            dims,
            channels_init=best_strategy.channels,
            observables_init=observables_of(best_strategy),
            cfg=replace(cfg, restarts=1),
        )
        sweeps += res.sweeps
        value = res.best_value
        cand = res.best_strategy
        vis = _visibility_of(cand, scenario, model, rho_ent, rho_noise, cfg)
        trace.append(vis.v_star)
        if vis.v_star < best_v - 1e-12:
            improved = best_v - vis.v_star
            best_v = vis.v_star
            best_strategy = replace(cand, state=rho_ent)
            if vis.separating is not None:
                best_ineq = vis.separating
            if improved < cfg.outer_eps:
                break
        else:
            break
    return SearchResult(
        best_value=value,
        best_strategy=best_strategy,
        best_visibility=best_v,
        best_inequality=best_ineq,
        trace=tuple(trace),
        seed=cfg.seed,
        sweeps=sweeps,
    )


def builtin_inequality_for(scenario: Scenario) -> Inequality | None:
    """A built-in inequality matching the scenario, if any (seesaw seed)."""
    for name in ("chsh", "i3_broadcast", "i4_broadcast", "mabk4"):
        ineq = builtin_inequality(name)
        if ineq.scenario == scenario:
            return ineq
    return None


def global_visibility_search(
    rho_ent: np.ndarray,
    rho_noise: np.ndarray,
    dims,
    scenario: Scenario,
    model: BroadcastModel,
    cfg: SeesawConfig | None = None,
    channel_layout=None,
    warm_starts=(),
    workers: int = 0,
) -> SearchResult:
    """Minimise the critical visibility of the family v*rho_ent + (1-v)*rho_noise.

    Every restart follows the same loop: sample strategies until the
    visibility LP certifies a violation, then alternate seesaw on the dual
    inequality at the critical mixture with fresh LP solves until v* stops
    improving.  Restarts use counter-derived seeds and are reduced by the
    smallest v* (ties broken by restart order); warm starts are prepended.
    """
    cfg = cfg or SeesawConfig()
    if channel_layout is None:
        channel_layout = _default_layout(dims, scenario)
    jobs = []
    for i, warm in enumerate(warm_starts):
        jobs.append((scenario, model, rho_ent, rho_noise, tuple(dims), tuple(channel_layout),
                     replace(cfg, seed=cfg.seed), -(i + 1), warm))
    for r in range(cfg.restarts):
        jobs.append((scenario, model, rho_ent, rho_noise, tuple(dims), tuple(channel_layout),
                     cfg, r, None))
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_restart_search, jobs))
    else:
        results = [_restart_search(j) for j in jobs]
    best = results[0]
    for res in results[1:]:
        bv = 1.0 if best.best_visibility is None else best.best_visibility
        rv = 1.0 if res.best_visibility is None else res.best_visibility
        if rv < bv - 1e-12:
            best = res
    return best


def _default_layout(dims, scenario: Scenario):
    """Broadcast channels needed to expand `dims` to the scenario's parties."""
    missing = scenario.parties - len(dims)
    if missing <= 0:
        return ()
    if missing == 1:
        return ((1, 4, dims[1]),)
    return ((0, 4, dims[0]), (1, 4, dims[1]))


def broadcast_visibility_search(
    theta: float,
    cfg: SeesawConfig | None = None,
    warm_start: QuantumStrategy | None = None,
    workers: int = 0,
) -> SearchResult:
    """Three-party broadcast visibility of the two-parameter state family.

    Warm starts from the analytic strategy (and optionally a neighbouring
    grid point's optimum) before adding random restarts.
    """
    from .scenarios import analytic_strategy

    cfg = cfg or SeesawConfig()
    rho_ent = qm.rho_alpha_theta(1.0, theta)
    rho_noise = qm.rho_alpha_theta(0.0, theta)
    scen = Scenario((3, 2, 2), (2, 2, 2))
    from .certify import one_sided_broadcast_model

    model = one_sided_broadcast_model(scen)
    warm = [analytic_strategy("i3_paper", state=rho_ent)]
    if warm_start is not None:
        warm.append(replace(warm_start, state=rho_ent))
    return global_visibility_search(
        rho_ent,
        rho_noise,
        (2, 2),
        scen,
        model,
        cfg=cfg,
        channel_layout=((1, 4, 2),),
        warm_starts=tuple(warm),
        workers=workers,
    )
