"""Merging fidelity, compound cost functionals and the orthogonal-support counterexample."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .avqs import StateSet, mixture
from .channels import Instrument, KrausMap, OneWayLocc, apply
from .qcore import (
    DensityMatrix, DomainError, HilbertLayout, LayoutError, PureState, _base, conditional_entropy,
    fidelity, hermitian_eig, mutual_information, partial_trace, purify, reorder, shannon_entropy,
    tensor, trace_distance, von_neumann_entropy,
)
from .schur import simplex_grid

SUPPORT_TOL = 1e-9
IDENTITY_TOL = 1e-6
RESOURCE_LABELS = (("K0A", "K0B"), ("K1A", "K1B"))


class CounterexampleError(ValueError):
    pass


def maximally_entangled(k: int, labels=("KA", "KB")) -> PureState:
    v = np.zeros(k * k, dtype=complex)
    v[np.arange(k) * (k + 1)] = 1 / math.sqrt(k)
    return PureState(HilbertLayout((k, k), tuple(labels)), v)


def merged_label(label: str) -> str:
    """A -> B', A3 -> B'3."""
    base = _base(label)
    return "B'" + label[len(base):] if base == "A" else label


@dataclass(frozen=True, eq=False)
class MergingProtocol:
    """One-way LOCC from K0 (x) (AB)^l to K1 (x) (B'B)^l, with explicit resource registers."""

    locc: OneWayLocc
    phi0: PureState
    phi1: PureState
    l: int = 1

    def __post_init__(self):
        for phi, labs in zip((self.phi0, self.phi1), RESOURCE_LABELS):
            if phi.layout.labels != labs:
                raise LayoutError(f"resource state must live on {labs}, got {phi.layout.labels}")

    @property
    def k(self) -> float:
        """sr(phi0) / sr(phi1)."""
        return self.phi0.layout.dims[0] / self.phi1.layout.dims[0]

    @property
    def D(self) -> int:
        return self.locc.message_count


def discard_and_prepare(da: int, vector, db: int | None = None) -> MergingProtocol:
    """Single-copy protocol: trace out A, prepare ``vector`` on B', no entanglement used.

    With ``da == 1`` and ``vector = [1]`` this is the identity protocol.
    """
    vector = np.asarray(vector, dtype=complex).reshape(-1, 1)
    if vector.shape[0] != da:
        raise LayoutError("prepared vector must have the dimension of A")
    a_in = HilbertLayout((1, da), ("K0A", "A"))
    a_out = HilbertLayout((1,), ("K1A",))
    branch = KrausMap(a_in, a_out, tuple(np.eye(da)[i].reshape(1, da) for i in range(da)))
    b_map = KrausMap(HilbertLayout((1,), ("K0B",)), HilbertLayout((1, da), ("K1B", "B'")), (vector,))
    locc = OneWayLocc(Instrument((branch,)), (b_map,), ("K0A", "A"), ("K0B",))
    return MergingProtocol(locc, maximally_entangled(1, RESOURCE_LABELS[0]),
                           maximally_entangled(1, RESOURCE_LABELS[1]))


def random_merging_protocol(da: int, db: int, n_branches: int, rng: np.random.Generator) -> MergingProtocol:
    """Random single-copy protocol without entanglement resources; for probing properties."""
    from .channels import random_channel, random_instrument
    a_in = HilbertLayout((1, da), ("K0A", "A"))
    inst = random_instrument(a_in, n_branches, rng, HilbertLayout((1,), ("K1A",)))
    b_in = HilbertLayout((1, db), ("K0B", "B"))
    b_out = HilbertLayout((1, da, db), ("K1B", "B'", "B"))
    chans = tuple(random_channel(b_in, b_out, rng) for _ in range(n_branches))
    locc = OneWayLocc(inst, chans, ("K0A", "A"), ("K0B", "B"))
    return MergingProtocol(locc, maximally_entangled(1, RESOURCE_LABELS[0]),
                           maximally_entangled(1, RESOURCE_LABELS[1]))


def merging_target(psi: PureState, protocol: MergingProtocol) -> PureState:
    """phi1 (x) psi' with psi' the purification moved from A to B'."""
    moved = psi.relabel({lab: merged_label(lab) for lab in psi.layout.labels})
    v = np.kron(protocol.phi1.amplitudes, moved.amplitudes)
    return PureState(protocol.phi1.layout.concat(moved.layout), v)


def merging_output(rho: DensityMatrix, protocol: MergingProtocol, purification: PureState | None = None):
    psi = purify(rho) if purification is None else purification
    if psi.layout.labels[:len(rho.layout)] != rho.layout.labels:
        raise LayoutError("purification must extend the state's layout")
    start = protocol.phi0.density()
    joint = tensor(start, psi.density())
    out = apply(protocol.locc, joint)
    return out, psi


def merging_fidelity(rho: DensityMatrix, protocol: MergingProtocol,
                     purification: PureState | None = None) -> float:
    """F((M (x) id_E)(phi0 (x) psi), phi1 (x) psi')."""
    out, psi = merging_output(rho, protocol, purification)
    target = merging_target(psi, protocol)
    return fidelity(reorder(out, target.layout.labels), target)


def compound_merging_cost(states: StateSet, a="A", b="B") -> float:
    """max_s S(A|B, rho_s)."""
    return max(conditional_entropy(rho, b) for rho in states.states)


def compound_classical_cost(states: StateSet, a="A", b="B") -> float:
    """max_s I(A;E) evaluated as S(rho_A) + S(A|B, rho)."""
    return max(von_neumann_entropy(partial_trace(rho, a)) + conditional_entropy(rho, b)
               for rho in states.states)


def environment_information(rho: DensityMatrix, a="A") -> float:
    """I(A;E) on an explicit purification."""
    psi = purify(rho, "E").density()
    return mutual_information(psi, a, "E")


# ---------------------------------------------------------------------------
# counterexample


@dataclass(frozen=True, eq=False)
class CounterexampleFamily:
    base: DensityMatrix          # rho_1, already embedded into the enlarged A space
    N: int
    rank: int
    unitaries: tuple = field(repr=False)
    projectors: tuple = field(repr=False)
    states: StateSet = field(repr=False)

    @property
    def dim_a(self) -> int:
        return self.N * self.rank


def _shift(n_blocks: int, width: int, s: int) -> np.ndarray:
    d = n_blocks * width
    u = np.zeros((d, d))
    for k in range(d):
        u[(k + s * width) % d, k] = 1.0
    return u


def build_counterexample(rho1: DensityMatrix, N: int) -> CounterexampleFamily:
    """States U_s rho_1 U_s^* whose A-supports occupy N orthogonal blocks."""
    if N < 1:
        raise DomainError(f"N must be at least 1, got {N}")
    if len(rho1.layout) != 2:
        raise LayoutError("the base state must be bipartite A, B")
    a, b = rho1.layout.labels
    if conditional_entropy(rho1, b) >= 0:
        raise DomainError("the base state needs negative conditional entropy S(A|B)")
    w, v = hermitian_eig(partial_trace(rho1, a).entries)
    support = v[:, w > SUPPORT_TOL]
    r = support.shape[1]
    da, db = rho1.layout.dims
    emb = np.zeros((N * r, da), dtype=complex)
    emb[:r] = support.conj().T
    big = np.kron(emb, np.eye(db))
    layout = HilbertLayout((N * r, db), (a, b))
    base = DensityMatrix(layout, big @ rho1.entries @ big.conj().T)
    us, ps, states = [], [], []
    for s in range(N):
        u = _shift(N, r, s)
        p = np.zeros((N * r, N * r))
        idx = np.arange(s * r, (s + 1) * r)
        p[idx, idx] = 1.0
        ub = np.kron(u, np.eye(db))
        states.append(DensityMatrix(layout, ub @ base.entries @ ub.conj().T))
        us.append(u)
        ps.append(p)
    fam = CounterexampleFamily(base, N, r, tuple(us), tuple(ps), StateSet.of(states))
    _check_family(fam)
    return fam


def _check_family(fam: CounterexampleFamily):
    a, b = fam.base.layout.labels
    margs = [partial_trace(rho, a).entries for rho in fam.states.states]
    rb = partial_trace(fam.base, b)
    for s, rho in enumerate(fam.states.states):
        if trace_distance(partial_trace(rho, b), rb) > 1e-10:
            raise CounterexampleError(f"B marginal of state {s} differs from the base")
        for t in range(len(margs)):
            if t != s and abs(np.trace(fam.projectors[s] @ margs[t])) > SUPPORT_TOL:
                raise CounterexampleError(f"A supports of states {s} and {t} overlap")


def support_overlaps(fam: CounterexampleFamily) -> np.ndarray:
    """Matrix of tr(P_s rho_{A,t})."""
    a = fam.base.layout.labels[0]
    margs = [partial_trace(rho, a).entries for rho in fam.states.states]
    return np.array([[abs(np.trace(p @ m)) for m in margs] for p in fam.projectors])


def detection_instrument(fam: CounterexampleFamily) -> Instrument:
    """Branch s: project onto block s, then undo U_s."""
    a = fam.base.layout.labels[0]
    lay = HilbertLayout((fam.dim_a,), (a,))
    return Instrument.from_kraus([u.conj().T @ p for u, p in zip(fam.unitaries, fam.projectors)], lay)


@dataclass(frozen=True)
class GapRecord:
    N: int
    avqs_cost: float
    compound_cost: float
    gap: float
    classical_avqs_bound: float
    classical_compound: float
    grid_compound_cost: float
    grid_classical_compound: float
    grid_points: int
    max_identity_residual: float
    tolerance: float = IDENTITY_TOL

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def mixture_quantities(fam: CounterexampleFamily, p) -> tuple[float, float]:
    """(S(A|B, rho_p), I(A;E, rho_p))."""
    a, b = fam.base.layout.labels
    rho = mixture(fam.states, p)
    return conditional_entropy(rho, b), environment_information(rho, a)


def counterexample_gap(fam: CounterexampleFamily, grid: int = 20, tol: float = IDENTITY_TOL) -> GapRecord:
    """Compound versus arbitrarily varying merging cost; the gap is log N."""
    s1, i1 = mixture_quantities(fam, np.eye(fam.N)[0])
    uniform = np.full(fam.N, 1.0 / fam.N)
    s_max, i_max = mixture_quantities(fam, uniform)
    residual = 0.0
    g_s, g_i = -math.inf, -math.inf
    pts = simplex_grid(fam.N, grid) / grid
    for p in pts:
        sp, ip = mixture_quantities(fam, p)
        h = shannon_entropy(p)
        residual = max(residual, abs(sp - s1 - h), abs(ip - i1 - 2 * h))
        g_s, g_i = max(g_s, sp), max(g_i, ip)
    log_n = math.log2(fam.N)
    checks = {
        "S(A|B) mixture identity": abs(s_max - s1 - log_n),
        "I(A;E) mixture identity": abs(i_max - i1 - 2 * log_n),
        "grid below analytic maximum (S)": max(0.0, g_s - s_max),
        "grid below analytic maximum (I)": max(0.0, g_i - i_max),
    }
    for name, err in checks.items():
        if err > tol:
            raise CounterexampleError(f"{name} violated by {err:.3e}")
    return GapRecord(N=fam.N, avqs_cost=s1, compound_cost=s_max, gap=s_max - s1,
                     classical_avqs_bound=i_max - log_n, classical_compound=i_max,
                     grid_compound_cost=g_s, grid_classical_compound=g_i, grid_points=len(pts),
                     max_identity_residual=residual, tolerance=tol)
