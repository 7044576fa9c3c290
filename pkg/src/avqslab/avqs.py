"""Finite generating sets, sequence states, types, robustification and derandomization.

Sequences over S are tuples of symbol indices ``0..|S|-1``. A permutation ``perm`` acts
by ``perm(s) = (s[perm[0]], ..., s[perm[l-1]])``, matching
:func:`avqslab.channels.permute_factors`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .channels import OneWayLocc, apply, permute_factors
from .qcore import (
    DensityMatrix, DomainError, HilbertLayout, LayoutError, PureState, fidelity, reorder,
    state_from_json, state_to_json, tensor_product, trace_distance,
)

EXHAUSTIVE_CAP = 8
WEIGHT_TOL = 1e-12


class ExhaustiveCapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StateSet:
    """Labelled finite family of states on one layout."""

    labels: tuple
    states: tuple

    def __post_init__(self):
        labels, states = tuple(self.labels), tuple(self.states)
        if not states:
            raise DomainError("a state set needs at least one member")
        if len(labels) != len(states) or len(set(labels)) != len(labels):
            raise LayoutError("state labels must be unique and match the states")
        for s in states:
            if s.layout != states[0].layout:
                raise LayoutError("all members of a state set must share one layout")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "states", states)

    @classmethod
    def of(cls, states: Sequence[DensityMatrix] | dict) -> "StateSet":
        if isinstance(states, dict):
            return cls(tuple(states), tuple(states.values()))
        return cls(tuple(range(len(states))), tuple(states))

    @property
    def layout(self) -> HilbertLayout:
        return self.states[0].layout

    def __len__(self):
        return len(self.states)

    def __getitem__(self, label) -> DensityMatrix:
        try:
            return self.states[self.labels.index(label)]
        except ValueError:
            raise LayoutError(f"unknown state label {label!r}") from None

    def to_json(self) -> dict:
        return {"states": [{"label": lab, "state": state_to_json(s)}
                           for lab, s in zip(self.labels, self.states)]}

    @classmethod
    def from_json(cls, obj) -> "StateSet":
        items = obj["states"] if isinstance(obj, dict) else obj
        labels, states = [], []
        for k, item in enumerate(items):
            if "state" in item:
                labels.append(item.get("label", k))
                states.append(state_from_json(item["state"]))
            else:
                labels.append(k)
                states.append(state_from_json(item))
        return cls(tuple(labels), tuple(states))


@dataclass(frozen=True, eq=False)
class MixtureWeights:
    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(-1)
        if np.any(p < -WEIGHT_TOL) or abs(p.sum() - 1) > WEIGHT_TOL:
            raise DomainError(f"{p} is not a probability distribution")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def point(cls, n: int, i: int) -> "MixtureWeights":
        p = np.zeros(n)
        p[i] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, n: int) -> "MixtureWeights":
        return cls(np.full(n, 1.0 / n))


def mixture(states: StateSet, p) -> DensityMatrix:
    w = p.p if isinstance(p, MixtureWeights) else MixtureWeights(p).p
    if len(w) != len(states):
        raise LayoutError(f"{len(w)} weights for {len(states)} states")
    m = sum(wi * s.entries for wi, s in zip(w, states.states))
    return DensityMatrix(states.layout, m, check=False)


def avqs_state(states: StateSet, seq: Sequence) -> DensityMatrix:
    """rho_{s_1} (x) ... (x) rho_{s_l}, labels indexed by position."""
    return tensor_product([states[s] for s in seq])


def hausdorff_distance(x: StateSet, y: StateSet) -> float:
    """Trace-norm Hausdorff distance between two finite sets."""
    if x.layout.dims != y.layout.dims:
        raise LayoutError("sets live on different spaces")
    d = np.array([[trace_distance(a, b) for b in y.states] for a in x.states])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def enumerate_types(n_symbols: int, l: int) -> list[tuple[float, ...]]:
    """Empirical distributions of length-l sequences over n symbols."""
    if l < 1 or n_symbols < 1:
        raise DomainError("need l >= 1 and at least one symbol")
    out = []
    for counts in _compositions(l, n_symbols):
        out.append(tuple(c / l for c in counts))
    return out


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# fidelity tables and robustification


@dataclass(frozen=True, eq=False)
class FidelityFunction:
    """Values f(s^l) in [0, 1], stored as an array of shape (|S|,) * l."""

    table: np.ndarray

    def __post_init__(self):
        t = np.clip(np.array(self.table, dtype=float), 0.0, 1.0)
        if t.ndim < 1 or len(set(t.shape)) != 1:
            raise LayoutError(f"table shape {t.shape} is not (|S|,) * l")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def l(self) -> int:
        return self.table.ndim

    @property
    def n_symbols(self) -> int:
        return self.table.shape[0]

    def __call__(self, seq) -> float:
        return float(self.table[tuple(seq)])

    @classmethod
    def from_callable(cls, f: Callable, n_symbols: int, l: int) -> "FidelityFunction":
        t = np.empty((n_symbols,) * l)
        for seq in itertools.product(range(n_symbols), repeat=l):
            t[seq] = f(seq)
        return cls(t)

    def sequences(self):
        return itertools.product(range(self.n_symbols), repeat=self.l)


def indicator_fidelity(n_symbols: int, l: int, bad: Sequence[Sequence[int]]) -> FidelityFunction:
    """Fidelity 1 everywhere except 0 on the listed sequences."""
    t = np.ones((n_symbols,) * l)
    for seq in bad:
        t[tuple(seq)] = 0.0
    return FidelityFunction(t)


def constant_sequence_indicator(n_symbols: int, l: int) -> FidelityFunction:
    t = np.zeros((n_symbols,) * l)
    for s in range(n_symbols):
        t[(s,) * l] = 1.0
    return FidelityFunction(t)


def random_monotone_table(n_symbols: int, l: int, rng: np.random.Generator) -> FidelityFunction:
    """exp(-sum_i w[s_i] u_i) with w increasing in the symbol; non-increasing in every coordinate."""
    w = np.sort(rng.exponential(10 ** rng.uniform(-3, 0), size=n_symbols))
    w[0] = 0.0
    u = rng.uniform(0.0, 1.0, size=l)
    t = np.zeros((n_symbols,) * l)
    for pos in range(l):
        shape = [1] * l
        shape[pos] = n_symbols
        t = t + (w * u[pos]).reshape(shape)
    return FidelityFunction(np.exp(-t))


@dataclass(frozen=True)
class IidCheck:
    types: list
    averages: np.ndarray
    worst_gamma: float
    holds: list | None = None


def iid_average(f: FidelityFunction, q) -> float:
    """sum_s f(s) q(s_1)...q(s_l)."""
    acc = f.table
    q = np.asarray(q, dtype=float)
    for _ in range(f.l):
        acc = acc @ q
    return float(acc)


def check_iid_condition(f: FidelityFunction, gamma: float | None = None) -> IidCheck:
    """Evaluate the i.i.d. average on every type; report the worst slack."""
    types = enumerate_types(f.n_symbols, f.l)
    avg = np.array([iid_average(f, q) for q in types])
    worst = float(max(0.0, 1.0 - avg.min()))
    holds = None if gamma is None else [bool(a >= 1 - gamma - 1e-12) for a in avg]
    return IidCheck(types, avg, worst, holds)


def _check_cap(l: int):
    if l > EXHAUSTIVE_CAP:
        raise ExhaustiveCapError(f"blocklength {l} exceeds the exhaustive cap {EXHAUSTIVE_CAP}")


def all_permutations(l: int) -> np.ndarray:
    _check_cap(l)
    return np.array(list(itertools.permutations(range(l))), dtype=np.intp).reshape(-1, l)


def permutation_average(f: FidelityFunction, seq) -> float:
    """Exact orbit average (1/l!) sum_perm f(perm(seq))."""
    _check_cap(f.l)
    seq = tuple(seq)
    vals = [f.table[tuple(seq[i] for i in perm)] for perm in itertools.permutations(range(f.l))]
    return float(np.mean(vals))


def orbit_average_table(f: FidelityFunction) -> np.ndarray:
    """Orbit average at every sequence, shaped like ``f.table``."""
    perms = all_permutations(f.l)
    flat = np.ascontiguousarray(f.table.reshape(-1))
    return kernels.orbit_mean(flat, f.n_symbols, f.l, perms).reshape(f.table.shape)


def robustification_bound(l: int, n_symbols: int, gamma: float) -> float:
    return 1.0 - (l + 1) ** n_symbols * gamma


@dataclass(frozen=True)
class RobustificationCheck:
    gamma: float
    bound: float
    min_average: float
    violations: int


def check_robustification(f: FidelityFunction) -> RobustificationCheck:
    """Orbit averages against 1 - (l+1)^|S| gamma with gamma the exact worst type slack."""
    gamma = check_iid_condition(f).worst_gamma
    avg = orbit_average_table(f)
    bound = robustification_bound(f.l, f.n_symbols, gamma)
    return RobustificationCheck(gamma, bound, float(avg.min()), int(np.sum(avg < bound - 1e-12)))


@dataclass(frozen=True, eq=False)
class RobustifiedTable:
    averaged: FidelityFunction     # fidelity of the permutation-averaged channel
    scalar: FidelityFunction       # orbit average of the un-averaged fidelities
    plain: FidelityFunction        # fidelity of the protocol itself
    discrepancy: float


def _output_fidelity(protocol: OneWayLocc, rho: DensityMatrix, target: PureState) -> float:
    out = apply(protocol, rho)
    out = reorder(out, target.layout.labels)
    return fidelity(out, target)


def robustify(protocol: OneWayLocc, states: StateSet, target: PureState, l: int) -> RobustifiedTable:
    """Fidelity table of (1/l!) sum_perm D o U_perm, computed as a channel mixture and as a scalar average."""
    _check_cap(l)
    n = len(states)
    perms = all_permutations(l)
    plain = np.empty((n,) * l)
    averaged = np.empty((n,) * l)
    for seq in itertools.product(range(n), repeat=l):
        rho = avqs_state(StateSet(tuple(range(n)), states.states), seq)
        plain[seq] = _output_fidelity(protocol, rho, target)
        acc = None
        for perm in perms:
            out = apply(protocol, permute_factors(rho, perm))
            acc = out.entries.copy() if acc is None else acc + out.entries
        mixed = DensityMatrix(out.layout, acc / len(perms), check=False)
        averaged[seq] = fidelity(reorder(mixed, target.layout.labels), target)
    scalar = kernels.orbit_mean(np.ascontiguousarray(plain.reshape(-1)), n, l, perms).reshape(plain.shape)
    return RobustifiedTable(FidelityFunction(averaged), FidelityFunction(scalar), FidelityFunction(plain),
                            float(np.abs(averaged - scalar).max()))


# ---------------------------------------------------------------------------
# derandomization


@dataclass(frozen=True)
class DerandomizationPlan:
    K: int
    nu: float
    seed: int
    max_retries: int = 8

    def __post_init__(self):
        if self.K < 1:
            raise DomainError("K must be at least one")
        if not 0 < self.nu < 1:
            raise DomainError(f"nu must lie in (0, 1), got {self.nu}")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class DerandomizationReport:
    permutations: list
    worst_mean: float
    oracle_worst_mean: float
    epsilon: float
    bound: float
    bound_positive: bool
    success: bool
    seed: int
    attempts: int
    rate_overhead: float
    means: np.ndarray = field(repr=False)


def fisher_yates(l: int, rng: np.random.Generator) -> tuple[int, ...]:
    perm = list(range(l))
    for i in range(l - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return tuple(perm)


def failure_from_fidelity(f: FidelityFunction) -> Callable:
    """g(perm, s) = 1 - f(perm(s))."""
    return lambda perm, seq: 1.0 - f.table[tuple(seq[i] for i in perm)]


def derandomization_bound(n_symbols: int, l: int, K: int, nu: float, epsilon: float) -> float:
    """1 - |S|^l 2^{-K (nu - 2 epsilon)}."""
    return 1.0 - n_symbols ** l * 2.0 ** (-K * (nu - 2 * epsilon))


def _attempt_rng(seed: int, attempt: int) -> np.random.Generator:
    if attempt == 0:
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, attempt])))


def derandomize(g: Callable, n_symbols: int, l: int, plan: DerandomizationPlan) -> DerandomizationReport:
    """Pick K seeded random permutations whose empirical failure stays below nu at every sequence."""
    _check_cap(l)
    seqs = list(itertools.product(range(n_symbols), repeat=l))
    perms = list(itertools.permutations(range(l)))
    full = np.array([[g(perm, s) for s in seqs] for perm in perms], dtype=float)
    epsilon = float(full.mean(axis=0).max())
    rows = {perm: i for i, perm in enumerate(perms)}
    bound = derandomization_bound(n_symbols, l, plan.K, plan.nu, epsilon)
    for attempt in range(plan.max_retries + 1):
        rng = _attempt_rng(plan.seed, attempt)
        chosen = [fisher_yates(l, rng) for _ in range(plan.K)]
        means = np.array([sum(g(perm, s) for perm in chosen) / plan.K for s in seqs])
        worst = float(means.max())
        if worst <= plan.nu:
            break
    # independent recomputation from the exhaustive (permutation, sequence) table
    oracle = float(full[[rows[p] for p in chosen]].mean(axis=0).max())
    return DerandomizationReport(
        permutations=chosen, worst_mean=worst, oracle_worst_mean=oracle, epsilon=epsilon, bound=bound,
        bound_positive=bound > 0, success=worst <= plan.nu, seed=plan.seed, attempts=attempt + 1,
        rate_overhead=math.log2(plan.K) / l, means=means.reshape((n_symbols,) * l))


REFERENCE_BAD_SEQUENCE = (0, 0, 1, 1)


def reference_failure(n_symbols: int = 2, l: int = 4) -> Callable:
    """Failure function of a protocol that fails on exactly one sequence."""
    bad = REFERENCE_BAD_SEQUENCE if (n_symbols, l) == (2, 4) else (0,) * (l - 1) + (1,)
    return failure_from_fidelity(indicator_fidelity(n_symbols, l, [bad]))
