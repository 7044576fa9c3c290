"""Fixed-k max-min search: sup over A-side instruments of inf over mixtures of the one-shot rate."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .avqs import MixtureWeights, StateSet, mixture
from .channels import Instrument, apply, complete_kraus, hat_channel, one_shot_rate
from .qcore import DEFAULT_DIM_CAP, DimensionCapError, DomainError, HilbertLayout, coherent_information, tensor_power
from .schur import simplex_grid

GRID_RESOLUTION = 20
DESCENT_FLOOR = 1e-4
MAX_GRID_SYMBOLS = 6
CERTIFY_TOL = 1e-8


def worker_count() -> int:
    try:
        n = int(os.environ.get("AVQSLAB_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


@dataclass(frozen=True, eq=False)
class MinimaxProblem:
    states: StateSet
    k: int = 1
    J: int = 1
    restarts: int = 4
    iterations: int = 100
    seed: int = 0
    a: str = "A"
    b: str = "B"
    cap: int = DEFAULT_DIM_CAP

    def __post_init__(self):
        lay = self.states.layout
        if self.k < 1 or self.J < 1 or self.restarts < 1 or self.iterations < 0:
            raise DomainError("k, J and restarts must be positive, iterations non-negative")
        if lay.dim ** self.k > self.cap:
            raise DimensionCapError(f"dimension {lay.dim}^{self.k} exceeds the cap {self.cap}")
        if self.J > self.dim_a ** (2 * self.k):
            raise DomainError(f"J={self.J} exceeds dim(A)^(2k) = {self.dim_a ** (2 * self.k)}")

    @property
    def dim_a(self) -> int:
        return math.prod(self.states.layout.sub(self.a).dims)

    def a_layout(self) -> HilbertLayout:
        """A-side layout of the k-fold tensor power."""
        if self.k == 1:
            return self.states.layout.sub(self.a)
        return tensor_power(self.states.states[0], self.k).layout.sub(self.a)


@dataclass(frozen=True, eq=False)
class MinimaxResult:
    value: float
    instrument: Instrument
    worst_p: MixtureWeights
    trace: list = field(repr=False)
    restart_values: list = field(default_factory=list)
    best_restart: int = 0
    certified_gap: float = 0.0
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "worst_p": self.worst_p.p.tolist(),
            "best_restart": self.best_restart,
            "restart_values": self.restart_values,
            "certified_gap": self.certified_gap,
            "trace": self.trace,
            "instrument": self.instrument.to_json(),
            "metadata": self.metadata,
        }


def _rate(instrument: Instrument, states: StateSet, p, k: int, a: str, b: str) -> float:
    rho = mixture(states, p)
    if k > 1:
        rho = tensor_power(rho, k)
    return one_shot_rate(instrument, rho, a, b)


def _descend(obj, p: np.ndarray, best: float, step: float):
    n = len(p)
    while step >= DESCENT_FLOOR:
        moved = False
        for i in range(n):
            for j in range(n):
                if i == j or p[j] <= 0:
                    continue
                q = p.copy()
                h = min(step, q[j])
                q[i] += h
                q[j] -= h
                v = obj(q)
                if v < best:
                    p, best, moved = q, v, True
        if not moved:
            step /= 2
    return p, best


def inner_min(instrument: Instrument, states: StateSet, k: int = 1, a: str = "A", b: str = "B"):
    """Minimise p -> one_shot_rate(T, rho_p^{(x)k}); local, not certified global."""
    n = len(states)

    def obj(p):
        return _rate(instrument, states, p, k, a, b)

    if n <= MAX_GRID_SYMBOLS:
        starts = simplex_grid(n, GRID_RESOLUTION) / GRID_RESOLUTION
    else:
        starts = np.vstack([np.eye(n), np.full((1, n), 1.0 / n)])
    best_p, best = None, math.inf
    for p in starts:
        v = obj(p)
        if v < best:
            best_p, best = p, v
    best_p, best = _descend(obj, best_p, best, 1.0 / GRID_RESOLUTION)
    best_p = np.clip(best_p, 0.0, None)
    best_p = best_p / best_p.sum()
    return MixtureWeights(best_p), best


def instrument_from_params(theta: np.ndarray, J: int, layout: HilbertLayout) -> Instrument:
    d = layout.dim
    z = theta[: J * d * d] + 1j * theta[J * d * d:]
    mats = complete_kraus(list(z.reshape(J, d, d)))
    return Instrument.from_kraus(mats, layout)


def _identity_params(J: int, d: int) -> np.ndarray:
    g = np.tile(np.eye(d) / math.sqrt(J), (J, 1, 1)).reshape(-1)
    return np.concatenate([g, np.zeros_like(g)])


def _spsa(prob: MinimaxProblem, restart: int, rng: np.random.Generator):
    layout = prob.a_layout()
    d = layout.dim
    size = 2 * prob.J * d * d
    theta = _identity_params(prob.J, d) if restart == 0 else rng.standard_normal(size)

    def value(th):
        inst = instrument_from_params(th, prob.J, layout)
        return inner_min(inst, prob.states, prob.k, prob.a, prob.b)[1], inst

    best, best_inst = value(theta)
    trace = [best]
    a0, c0, big_a = 0.2, 0.1, 10.0
    for t in range(prob.iterations):
        at = a0 / (t + 1 + big_a) ** 0.602
        ct = c0 / (t + 1) ** 0.101
        delta = rng.choice((-1.0, 1.0), size=size)
        vp, ip = value(theta + ct * delta)
        vm, im = value(theta - ct * delta)
        theta = theta + at * (vp - vm) / (2 * ct) * delta
        for v, inst in ((vp, ip), (vm, im)):
            if v > best:
                best, best_inst = v, inst
        trace.append(best)
    return best, best_inst, trace


def certified_rate(instrument: Instrument, states: StateSet, p, k: int, a: str = "A", b: str = "B") -> float:
    """Rate through the classical-flag channel: I_c(A > B B') of the hat channel output."""
    rho = mixture(states, p)
    if k > 1:
        rho = tensor_power(rho, k)
    hat = hat_channel(instrument, a, b)
    out = apply(hat, rho)
    a_labels = instrument.out_layout.labels
    if not a_labels:
        return 0.0
    rest = tuple(lab for lab in out.layout.labels if lab not in a_labels)
    return coherent_information(out, a_labels, rest)


def maximize_instrument(prob: MinimaxProblem) -> MinimaxResult:
    """Random-restart simultaneous-perturbation ascent over instruments with J Kraus branches."""
    streams = np.random.SeedSequence(prob.seed).spawn(prob.restarts)

    def run(r):
        return _spsa(prob, r, np.random.Generator(np.random.PCG64(streams[r])))

    workers = min(worker_count(), prob.restarts)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            runs = list(pool.map(run, range(prob.restarts)))
    else:
        runs = [run(r) for r in range(prob.restarts)]
    values = [r[0] for r in runs]
    best_r = int(np.argmax(values))          # first maximiser wins ties
    ties = [i for i, v in enumerate(values) if v == values[best_r]]
    _, inst, trace = runs[best_r]
    p, raw = inner_min(inst, prob.states, prob.k, prob.a, prob.b)
    check = certified_rate(inst, prob.states, p.p, prob.k, prob.a, prob.b)
    gap = abs(check - raw)
    if gap > CERTIFY_TOL:
        raise ArithmeticError(f"certified value disagrees with the search value by {gap:.3e}")
    meta = {"k": prob.k, "J": prob.J, "restarts": prob.restarts, "iterations": prob.iterations,
            "seed": prob.seed, "inner_min_global": False, "tied_restarts": ties,
            "grid_resolution": 1.0 / GRID_RESOLUTION, "descent_floor": DESCENT_FLOOR}
    return MinimaxResult(value=check / prob.k, instrument=inst, worst_p=p,
                         trace=[v / prob.k for v in trace], restart_values=[v / prob.k for v in values],
                         best_restart=best_r, certified_gap=gap, metadata=meta)


def capacity_function(states: StateSet, k: int = 1, budget: int = 100, J: int = 1,
                      restarts: int = 4, seed: int = 0) -> float:
    """Best found (1/k) max_T min_p D1(rho_p^{(x)k}, T) for a fixed k; a lower bound on the optimum."""
    prob = MinimaxProblem(states, k=k, J=J, restarts=restarts, iterations=budget, seed=seed)
    return maximize_instrument(prob).value
