"""Measurement scenarios, behaviours, Bell-type inequalities and quantum strategies.

A behaviour is the flat table of conditional probabilities p(outcomes|settings).
The normative index order, shared by every module and all file formats, is

    index = outcome_index * (number of setting tuples) + setting_index

where both multi-indices are mixed radix with party 0 most significant.
Outcome sign convention for correlators: outcome 0 maps to +1, outcome 1 to -1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import quantum as qm

__all__ = [
    "Scenario",
    "Behaviour",
    "Inequality",
    "QuantumStrategy",
    "uniform_behaviour",
    "pr_box",
    "behaviour_from_strategy",
    "broadcast_state",
    "correlator",
    "evaluate",
    "check_no_signalling",
    "inequality_from_correlators",
    "correlator_terms",
    "builtin_inequality",
    "observables_to_povms",
    "strategy_from_observables",
    "analytic_strategy",
]


@dataclass(frozen=True)
class Scenario:
    """Party count with per-party numbers of settings and outcomes."""

    inputs: tuple[int, ...]
    outputs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(int(m) for m in self.inputs))
        object.__setattr__(self, "outputs", tuple(int(o) for o in self.outputs))
        if len(self.inputs) != len(self.outputs) or not self.inputs:
            raise ValueError("inputs and outputs must be equal-length, non-empty tuples")
        if any(m < 1 for m in self.inputs) or any(o < 1 for o in self.outputs):
            raise ValueError("all setting and outcome counts must be >= 1")

    @property
    def parties(self) -> int:
        return len(self.inputs)

    @property
    def n_settings(self) -> int:
        return int(np.prod(self.inputs))

    @property
    def n_outcomes(self) -> int:
        return int(np.prod(self.outputs))

    @property
    def table_size(self) -> int:
        return self.n_settings * self.n_outcomes

    def setting_index(self, settings) -> int:
        idx = 0
        for m, x in zip(self.inputs, settings):
            if not 0 <= x < m:
                raise ValueError(f"setting {settings} out of range for inputs {self.inputs}")
            idx = idx * m + x
        return idx

    def outcome_index(self, outcomes) -> int:
        idx = 0
        for o, a in zip(self.outputs, outcomes):
            if not 0 <= a < o:
                raise ValueError(f"outcome {outcomes} out of range for outputs {self.outputs}")
            idx = idx * o + a
        return idx

    def table_index(self, outcomes, settings) -> int:
        return self.outcome_index(outcomes) * self.n_settings + self.setting_index(settings)

    def iter_settings(self):
        return itertools.product(*(range(m) for m in self.inputs))

    def iter_outcomes(self):
        return itertools.product(*(range(o) for o in self.outputs))


@dataclass(frozen=True)
class Behaviour:
    """Probability table p(outcomes|settings) over a scenario."""

    scenario: Scenario
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        object.__setattr__(self, "table", t)
        if t.shape != (self.scenario.table_size,):
            raise ValueError(
                f"table length {t.shape} does not match scenario size {self.scenario.table_size}"
            )

    def validate(self, tol: float = 1e-10) -> None:
        if self.table.min() < -1e-12 or self.table.max() > 1 + 1e-12:
            raise ValueError("behaviour entries outside [0, 1]")
        sums = self.tensor().sum(axis=tuple(range(self.scenario.parties)))
        if np.abs(sums - 1.0).max() > tol:
            raise ValueError("outcome probabilities do not sum to 1 for every setting")

    def tensor(self) -> np.ndarray:
        """Table as an array with one outcome axis per party, then one setting axis per party."""
        s = self.scenario
        return self.table.reshape(s.outputs + s.inputs)

    def prob(self, outcomes, settings) -> float:
        return float(self.table[self.scenario.table_index(outcomes, settings)])


@dataclass(frozen=True)
class Inequality:
    """Linear functional on behaviours together with a model bound."""

    scenario: Scenario
    coefficients: np.ndarray
    bound: float
    bound_kind: str = "broadcast_local"

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", c)
        if c.shape != (self.scenario.table_size,):
            raise ValueError("coefficient length does not match scenario")


def uniform_behaviour(scenario: Scenario) -> Behaviour:
    t = np.full(scenario.table_size, 1.0 / scenario.n_outcomes)
    return Behaviour(scenario, t)


def pr_box() -> Behaviour:
    """The Popescu-Rohrlich box: b XOR c = y*z with uniform marginals."""
    scen = Scenario((2, 2), (2, 2))
    t = np.zeros(scen.table_size)
    for y, z in scen.iter_settings():
        for b, c in scen.iter_outcomes():
            if b ^ c == y * z:
                t[scen.table_index((b, c), (y, z))] = 0.5
    return Behaviour(scen, t)


# ---------------------------------------------------------------------------
# quantum strategies


@dataclass(frozen=True)
class QuantumStrategy:
    """Initial state, broadcast channels and per-party POVMs.

    ``state`` lives on tensor factors ``dims``; each channel is applied to
    one of those factors (indices refer to the pre-broadcast factors).
    ``measurements[k][x]`` is the POVM element list of party k for setting x.
    """

    state: np.ndarray
    dims: tuple[int, ...]
    channels: tuple[tuple[int, qm.Isometry], ...]
    measurements: tuple[tuple[tuple[np.ndarray, ...], ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "state", np.asarray(self.state, dtype=complex))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "channels", tuple((int(on), iso) for on, iso in self.channels))
        object.__setattr__(
            self,
            "measurements",
            tuple(
                tuple(tuple(np.asarray(m, dtype=complex) for m in setting) for setting in party)
                for party in self.measurements
            ),
        )

    @property
    def party_dims(self) -> tuple[int, ...]:
        return tuple(p[0][0].shape[0] for p in self.measurements)

    def scenario(self) -> Scenario:
        return Scenario(
            tuple(len(p) for p in self.measurements),
            tuple(len(s) for p in self.measurements for s in p[:1]),
        )

    def validate(self, tol: float = 1e-10) -> None:
        if not qm.is_density_matrix(self.state, 1e-8):
            raise ValueError("strategy state is not a density matrix")
        if self.state.shape[0] != int(np.prod(self.dims)):
            raise ValueError("state dimension does not match dims")
        seen = set()
        for on, iso in self.channels:
            if on in seen or not 0 <= on < len(self.dims):
                raise ValueError(f"invalid channel subsystem index {on}")
            seen.add(on)
            if iso.d_in != self.dims[on]:
                raise ValueError("channel input dimension does not match its subsystem")
        d_total = int(np.prod(self.dims))
        for on, iso in self.channels:
            d_total = d_total // self.dims[on] * iso.d_out
        if d_total != int(np.prod(self.party_dims)):
            raise ValueError("broadcast output dimension does not match measurement dimensions")
        for k, party in enumerate(self.measurements):
            d = self.party_dims[k]
            for x, elems in enumerate(party):
                total = np.zeros((d, d), dtype=complex)
                for m in elems:
                    if m.shape != (d, d):
                        raise ValueError(f"measurement {k},{x} has inconsistent dimension")
                    if not qm.is_hermitian(m, tol):
                        raise ValueError(f"measurement element {k},{x} is not Hermitian")
                    if np.linalg.eigvalsh(m).min() < -tol:
                        raise ValueError(f"measurement element {k},{x} is not PSD")
                    total += m
                if np.linalg.norm(total - np.eye(d)) > tol:
                    raise ValueError(f"POVM {k},{x} does not sum to identity")


def broadcast_state(strategy: QuantumStrategy) -> np.ndarray:
    """State after all broadcast channels, on the party tensor factors."""
    rho = strategy.state
    dims = list(strategy.dims)
    for on, iso in sorted(strategy.channels, key=lambda c: -c[0]):
        rho = qm.apply_isometry(rho, tuple(dims), on, iso)
        dims[on] = iso.d_out
    if int(np.prod(dims)) != int(np.prod(strategy.party_dims)):
        raise ValueError("broadcast state dimension does not match party dimensions")
    return rho


def povm_stacks(strategy: QuantumStrategy) -> list[np.ndarray]:
    """Per party, the array T[x, a] = POVM element of outcome a at setting x."""
    stacks = []
    for k, party in enumerate(strategy.measurements):
        d = strategy.party_dims[k]
        t = np.empty((len(party), len(party[0]), d, d), dtype=complex)
        for x, elems in enumerate(party):
            for a, m in enumerate(elems):
                t[x, a] = m
        stacks.append(t)
    return stacks


def behaviour_from_strategy(
    strategy: QuantumStrategy, scenario: Scenario, validate: bool = True
) -> Behaviour:
    """Born-rule behaviour of a strategy: p = Tr[(M_1 x ... x M_n) rho_broadcast]."""
    if validate:
        strategy.validate()
    n = scenario.parties
    if len(strategy.measurements) != n:
        raise ValueError("strategy party count does not match scenario")
    for k in range(n):
        if len(strategy.measurements[k]) != scenario.inputs[k]:
            raise ValueError(f"party {k} setting count does not match scenario")
        if any(len(s) != scenario.outputs[k] for s in strategy.measurements[k]):
            raise ValueError(f"party {k} outcome count does not match scenario")
    rho = broadcast_state(strategy)
    pdims = strategy.party_dims
    rho_t = rho.reshape(pdims + pdims)
    stacks = povm_stacks(strategy)
    # p(a|x) = sum_{IJ} rho[J, I] prod_k M_k[i_k, j_k]; label i_k=k, j_k=n+k,
    # x_k=2n+k, a_k=3n+k and let einsum do the contraction in one shot
    args = [rho_t, list(range(n, 2 * n)) + list(range(n))]
    for k in range(n):
        args.extend([stacks[k], [2 * n + k, 3 * n + k, k, n + k]])
    out_idx = list(range(3 * n, 4 * n)) + list(range(2 * n, 3 * n))
    p = np.einsum(*args, out_idx)
    if np.abs(p.imag).max() > 1e-10:
        raise ValueError("behaviour has a non-negligible imaginary part")
    return Behaviour(scenario, p.real.reshape(-1))


# ---------------------------------------------------------------------------
# correlators and inequality evaluation


def correlator(b: Behaviour, parties, settings) -> float:
    """Expectation of the +-1 outcome product of the listed parties.

    Parties not listed are marginalised: their outcomes are summed over and
    their settings averaged uniformly (the choice is immaterial for
    non-signalling behaviours).
    """
    s = b.scenario
    parties = tuple(parties)
    settings = tuple(settings)
    if len(parties) != len(settings):
        raise ValueError("parties and settings must have the same length")
    if any(s.outputs[k] != 2 for k in parties):
        raise ValueError("correlators require binary outcomes for the listed parties")
    t = b.tensor()
    n = s.parties
    listed = dict(zip(parties, settings))
    value = t
    # sum out unlisted outcome axes, apply signs on listed ones
    for k in range(n):
        sign = np.array([1.0, -1.0]) if k in listed else np.ones(s.outputs[k])
        value = np.tensordot(sign, value, axes=([0], [0]))
    # remaining axes are the setting axes; select listed settings, average the rest
    for k in reversed(range(n)):
        if k in listed:
            value = np.take(value, listed[k], axis=k)
        else:
            value = value.mean(axis=k)
    return float(value)


def evaluate(ineq: Inequality, b: Behaviour) -> float:
    """Value of the linear functional on a behaviour."""
    if ineq.scenario != b.scenario:
        raise ValueError("inequality and behaviour scenarios differ")
    return float(ineq.coefficients @ b.table)


def check_no_signalling(b: Behaviour, partition=None) -> float:
    """Largest marginal shift of any group under changes of the other groups' settings.

    ``partition`` is an iterable of disjoint party groups covering all parties;
    the default is one group per party (full no-signalling).
    """
    s = b.scenario
    n = s.parties
    if partition is None:
        partition = [(k,) for k in range(n)]
    groups = [tuple(sorted(int(k) for k in g)) for g in partition]
    covered = sorted(k for g in groups for k in g)
    if covered != list(range(n)):
        raise ValueError("partition must cover every party exactly once")
    t = b.tensor()
    worst = 0.0
    for g in groups:
        others = [k for k in range(n) if k not in g]
        marg = t.sum(axis=tuple(k for k in others))  # sum over outcomes outside the group
        # axes now: outcomes of g (in party order), then all setting axes
        off = len(g)
        other_setting_axes = tuple(off + k for k in others)
        if not other_setting_axes:
            continue
        spread = marg.max(axis=other_setting_axes) - marg.min(axis=other_setting_axes)
        worst = max(worst, float(spread.max()))
    return worst


# ---------------------------------------------------------------------------
# correlator-form inequalities


def inequality_from_correlators(
    scenario: Scenario, terms: dict, bound: float, bound_kind: str = "broadcast_local"
) -> Inequality:
    """Expand correlator coefficients into a full-probability coefficient table.

    ``terms`` maps (parties, settings) pairs to weights, e.g.
    {((0, 1), (0, 0)): 1.0} for a weight-1 coefficient on <A_0 B_0>.
    A term's weight is spread uniformly over the settings of unlisted parties.
    """
    coeffs = np.zeros(scenario.outputs + scenario.inputs)
    n = scenario.parties
    for (parties, settings), w in terms.items():
        parties = tuple(parties)
        settings = tuple(settings)
        listed = dict(zip(parties, settings))
        if any(scenario.outputs[k] != 2 for k in parties):
            raise ValueError("correlator terms require binary outcomes")
        sign_axes = []
        for k in range(n):
            sign_axes.append(np.array([1.0, -1.0]) if k in listed else np.ones(scenario.outputs[k]))
        setting_axes = []
        for k in range(n):
            if k in listed:
                e = np.zeros(scenario.inputs[k])
                e[listed[k]] = 1.0
                setting_axes.append(e)
            else:
                setting_axes.append(np.full(scenario.inputs[k], 1.0 / scenario.inputs[k]))
        block = sign_axes[0]
        for ax in sign_axes[1:] + setting_axes:
            block = np.multiply.outer(block, ax)
        coeffs += w * block
    return Inequality(scenario, coeffs.reshape(-1), float(bound), bound_kind)


def correlator_terms(ineq: Inequality, tol: float = 1e-12) -> dict:
    """Recover correlator coefficients from a full-probability table.

    Inverse of :func:`inequality_from_correlators` for all-binary scenarios.
    """
    s = ineq.scenario
    if any(o != 2 for o in s.outputs):
        raise ValueError("correlator decomposition requires binary outcomes everywhere")
    n = s.parties
    t = ineq.coefficients.reshape(s.outputs + s.inputs)
    out: dict = {}
    sign = np.array([1.0, -1.0])
    for subset_bits in range(2**n):
        parties = tuple(k for k in range(n) if subset_bits >> k & 1)
        hat = t
        for k in reversed(range(n)):
            vec = sign if k in parties else np.ones(2)
            hat = np.tensordot(hat, vec / 2.0, axes=([k], [0]))
        # hat now has only the setting axes; sum over unlisted parties' settings
        for k in reversed(range(n)):
            if k not in parties:
                hat = hat.sum(axis=k)
        if parties == ():
            if abs(float(hat)) > tol:
                out[((), ())] = float(hat)
            continue
        it = np.ndindex(*(s.inputs[k] for k in parties))
        for settings in it:
            w = float(hat[settings])
            if abs(w) > tol:
                out[(parties, settings)] = w
    return out


_MABK_SCALE = 2.0 ** (-1.5)


def _mabk4_terms() -> dict:
    # 2^(-3/2) cos(pi/4 (2|x| - 3)) is exactly +-1/4; cos only decides the sign
    terms = {}
    for x in itertools.product((0, 1), repeat=4):
        w = math.copysign(0.25, math.cos(math.pi / 4.0 * (2 * sum(x) - 3)))
        terms[((0, 1, 2, 3), x)] = w
    return terms


def builtin_inequality(name: str) -> Inequality:
    """Inequalities used throughout: chsh, i3_broadcast, i4_broadcast, mabk4."""
    if name == "chsh":
        scen = Scenario((2, 2), (2, 2))
        terms = {
            ((0, 1), (0, 0)): 1.0,
            ((0, 1), (0, 1)): 1.0,
            ((0, 1), (1, 0)): 1.0,
            ((0, 1), (1, 1)): -1.0,
        }
        return inequality_from_correlators(scen, terms, 2.0, "lhv")
    if name == "i3_broadcast":
        scen = Scenario((3, 2, 2), (2, 2, 2))
        terms = {
            ((0, 1, 2), (0, 0, 0)): 1.0,
            ((0, 1, 2), (0, 1, 1)): 1.0,
            ((0, 1, 2), (1, 1, 1)): 1.0,
            ((0, 1, 2), (1, 0, 0)): -1.0,
            ((0, 1, 2), (0, 0, 1)): 1.0,
            ((0, 1, 2), (0, 1, 0)): 1.0,
            ((0, 1, 2), (1, 0, 1)): 1.0,
            ((0, 1, 2), (1, 1, 0)): -1.0,
            ((0, 1), (2, 0)): -2.0,
            ((0, 1), (2, 1)): 2.0,
        }
        return inequality_from_correlators(scen, terms, 4.0, "broadcast_local")
    if name == "i4_broadcast":
        scen = Scenario((2, 2, 2, 2), (2, 2, 2, 2))
        terms = {
            ((0, 1, 2, 3), (0, 0, 0, 0)): 1.0,
            ((0, 1, 2, 3), (0, 0, 1, 0)): 1.0,
            ((0, 1, 2, 3), (0, 1, 0, 0)): 1.0,
            ((0, 1, 2, 3), (0, 1, 1, 0)): 1.0,
            ((0, 1, 2, 3), (1, 0, 0, 0)): -1.0,
            ((0, 1, 2, 3), (1, 0, 1, 0)): 1.0,
            ((0, 1, 2, 3), (1, 1, 0, 0)): -1.0,
            ((0, 1, 2, 3), (1, 1, 1, 0)): 1.0,
            ((1, 3), (0, 1)): -2.0,
            ((1, 3), (1, 1)): 2.0,
        }
        return inequality_from_correlators(scen, terms, 4.0, "broadcast_local")
    if name == "mabk4":
        scen = Scenario((2, 2, 2, 2), (2, 2, 2, 2))
        return inequality_from_correlators(scen, _mabk4_terms(), 1.0, "lhv")
    if name == "mabk4_biseparable":
        scen = Scenario((2, 2, 2, 2), (2, 2, 2, 2))
        return inequality_from_correlators(scen, _mabk4_terms(), math.sqrt(2.0), "biseparable")
    raise ValueError(f"unknown inequality {name!r}")


# ---------------------------------------------------------------------------
# analytic quantum strategies


def observables_to_povms(observables) -> tuple[tuple[np.ndarray, ...], ...]:
    """Dichotomic observables O_x into per-setting POVMs ((1+O)/2, (1-O)/2)."""
    out = []
    for obs in observables:
        obs = np.asarray(obs, dtype=complex)
        d = obs.shape[0]
        eye = np.eye(d)
        out.append(((eye + obs) / 2.0, (eye - obs) / 2.0))
    return tuple(out)


def strategy_from_observables(state, dims, channels, observables) -> QuantumStrategy:
    """Strategy with dichotomic measurements given as +-1 observables per party."""
    meas = tuple(observables_to_povms(party) for party in observables)
    return QuantumStrategy(state, tuple(dims), tuple(channels), meas)


def analytic_strategy(name: str, state: np.ndarray | None = None, offset: float = -3 * math.pi / 16) -> QuantumStrategy:
    """Reference strategies: chsh_paper, i3_paper, i4_paper, mabk_ghz.

    ``state`` overrides the bipartite source state (default: the maximally
    entangled limit each strategy is designed around). ``offset`` tunes the
    x-y plane measurement angles of mabk_ghz, phi_k(x) = x * pi/2 + offset.
    """
    sx, sy, sz = qm.SIGMA_X, qm.SIGMA_Y, qm.SIGMA_Z
    if name == "chsh_paper":
        rho = qm.bell_state("phi+") if state is None else state
        obs = (
            (sz, sx),
            ((sz + sx) / math.sqrt(2.0), (sz - sx) / math.sqrt(2.0)),
        )
        return strategy_from_observables(rho, (2, 2), (), obs)
    if name == "i3_paper":
        rho = qm.isotropic_state(1.0) if state is None else state
        phi = math.atan(1.0 / math.sqrt(2.0))
        b0 = math.cos(phi) * sx + math.sin(phi) * sy
        b1 = math.cos(phi) * sx - math.sin(phi) * sy
        obs = ((sz, sx, sy), (b0, b1), (sz, sx))
        channels = ((1, qm.broadcast_isometry(math.pi / 8.0)),)
        return strategy_from_observables(rho, (2, 2), channels, obs)
    if name == "i4_paper":
        rho = qm.isotropic_state(1.0) if state is None else state
        s3 = math.sqrt(3.0)
        obs = (
            (sx, sz),
            ((sx + sy + sz) / s3, (sx - sy + sz) / s3),
            (sx, sz),
            (sx, sy),
        )
        iso = qm.broadcast_isometry(math.pi / 8.0)
        channels = ((0, iso), (1, iso))
        return strategy_from_observables(rho, (2, 2), channels, obs)
    if name == "mabk_ghz":
        rho = qm.isotropic_state(1.0) if state is None else state
        def xy_obs(phi):
            return math.cos(phi) * sx + math.sin(phi) * sy
        obs = tuple(
            (xy_obs(offset), xy_obs(math.pi / 2.0 + offset)) for _ in range(4)
        )
        channels = ((0, qm.copy_isometry()), (1, qm.copy_isometry()))
        return strategy_from_observables(rho, (2, 2), channels, obs)
    raise ValueError(f"unknown strategy {name!r}")
