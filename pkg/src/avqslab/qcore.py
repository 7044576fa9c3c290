"""Dense states on small composite Hilbert spaces and the entropic functionals built on them.

Every subsystem carries a label. Tensor powers use indexed labels (``A1, B1, A2, B2, ...``)
and any function taking a label set also accepts a base name such as ``"A"``, which
expands to every label ``A<k>`` present in the layout.

All logarithms are base two. The trace norm is the sum of singular values, so two
orthogonal pure states sit at distance 2.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, InitVar
from typing import Iterable, Sequence

import numpy as np

DEFAULT_DIM_CAP = 4096
STATE_TOL = 1e-9
EIG_ZERO = 1e-12
RANK_TOL = 1e-10

__all__ = [
    "HilbertLayout", "PsdOperator", "DensityMatrix", "PureState",
    "LayoutError", "DimensionCapError", "DomainError", "StateError",
    "tensor", "tensor_power", "tensor_product", "partial_trace", "reorder", "relabel",
    "purify", "schmidt_rank", "fidelity", "trace_norm", "trace_distance",
    "von_neumann_entropy", "conditional_entropy", "mutual_information",
    "coherent_information", "shannon_entropy", "relative_entropy", "binary_entropy",
    "nu", "depolarize_local", "psd_sqrt", "hermitian_eig",
    "bell_state", "basis_state", "maximally_mixed", "product_state", "schmidt_state",
    "random_state", "random_psd", "random_unitary", "state_to_json", "state_from_json",
]


class LayoutError(ValueError):
    """Unknown label, mismatched dimensions or malformed subsystem layout."""


class DimensionCapError(ValueError):
    """Ambient dimension would exceed the configured cap."""


class DomainError(ValueError):
    """Scalar argument outside the domain of a function."""


class StateError(ValueError):
    """Matrix fails the Hermitian / PSD / trace invariants of its type."""


_INDEXED = re.compile(r"^(.*?)(\d+)$")


def _base(label: str) -> str:
    m = _INDEXED.match(label)
    return m.group(1) if m else label


@dataclass(frozen=True)
class HilbertLayout:
    """Ordered subsystem dimensions and labels."""

    dims: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        if len(self.dims) != len(self.labels):
            raise LayoutError("dims and labels differ in length")
        if any(d < 1 for d in self.dims):
            raise LayoutError(f"subsystem dimensions must be positive, got {self.dims}")
        if len(set(self.labels)) != len(self.labels):
            raise LayoutError(f"labels must be unique, got {self.labels}")

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def __len__(self):
        return len(self.labels)

    def resolve(self, names: str | Iterable[str]) -> tuple[str, ...]:
        """Expand a label set, in layout order.

        A name matches a label exactly, or as the base of indexed labels
        (``"A"`` matches ``A1``, ``A2``...).
        """
        if isinstance(names, str):
            names = [names]
        wanted = set()
        for name in names:
            if name in self.labels:
                wanted.add(name)
                continue
            hits = [lab for lab in self.labels if _INDEXED.match(lab) and _base(lab) == name]
            if not hits:
                raise LayoutError(f"unknown label {name!r} for layout {self.labels}")
            wanted.update(hits)
        return tuple(lab for lab in self.labels if lab in wanted)

    def positions(self, names) -> tuple[int, ...]:
        resolved = self.resolve(names)
        return tuple(self.labels.index(lab) for lab in resolved)

    def sub(self, names) -> "HilbertLayout":
        pos = self.positions(names)
        return HilbertLayout(tuple(self.dims[i] for i in pos), tuple(self.labels[i] for i in pos))

    def concat(self, other: "HilbertLayout") -> "HilbertLayout":
        return HilbertLayout(self.dims + other.dims, self.labels + other.labels)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "labels": list(self.labels)}


@dataclass(frozen=True, eq=False)
class PsdOperator:
    """Positive semidefinite operator with trace at most one."""

    layout: HilbertLayout
    entries: np.ndarray = field(repr=False)
    check: InitVar[bool] = True

    def __post_init__(self, check):
        m = np.array(self.entries, dtype=complex)
        n = self.layout.dim
        if m.shape != (n, n):
            raise LayoutError(f"matrix shape {m.shape} does not match layout dimension {n}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        if check:
            self._validate()

    def _validate(self):
        m = self.entries
        if not np.allclose(m, m.conj().T, atol=STATE_TOL):
            raise StateError("operator is not Hermitian")
        lo = np.linalg.eigvalsh(m).min() if m.size else 0.0
        if lo < -STATE_TOL:
            raise StateError(f"operator has negative eigenvalue {lo:.3e}")
        if self.trace > 1 + STATE_TOL:
            raise StateError(f"trace {self.trace:.12g} exceeds one")

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def labels(self) -> tuple[str, ...]:
        return self.layout.labels


class DensityMatrix(PsdOperator):
    """Unit-trace PSD operator."""

    def _validate(self):
        super()._validate()
        if abs(self.trace - 1) > STATE_TOL:
            raise StateError(f"trace {self.trace:.12g} is not one")


@dataclass(frozen=True, eq=False)
class PureState:
    layout: HilbertLayout
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if v.shape[0] != self.layout.dim:
            raise LayoutError(f"vector length {v.shape[0]} does not match layout dimension {self.layout.dim}")
        if abs(np.linalg.norm(v) - 1) > STATE_TOL:
            raise StateError(f"state vector has norm {np.linalg.norm(v):.12g}")
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)

    def density(self) -> DensityMatrix:
        v = self.amplitudes
        return DensityMatrix(self.layout, np.outer(v, v.conj()), check=False)

    def relabel(self, mapping: dict[str, str]) -> "PureState":
        labels = tuple(mapping.get(lab, lab) for lab in self.layout.labels)
        return PureState(HilbertLayout(self.layout.dims, labels), self.amplitudes)


def _like(op: PsdOperator, layout: HilbertLayout, m: np.ndarray) -> PsdOperator:
    """Rebuild with the same concrete type, skipping validation."""
    return type(op)(layout, m, check=False)


# ---------------------------------------------------------------------------
# spectral primitive


def hermitian_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, symmetrised first."""
    m = np.asarray(m, dtype=complex)
    return np.linalg.eigh(0.5 * (m + m.conj().T))


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = hermitian_eig(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def _spectrum(m: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if w.size and w.min() < -STATE_TOL:
        raise StateError(f"negative eigenvalue {w.min():.3e} in entropy argument")
    w[np.abs(w) <= EIG_ZERO] = 0.0
    return np.clip(w, 0.0, None)


# ---------------------------------------------------------------------------
# structural operations


def tensor(a: PsdOperator, b: PsdOperator, cap: int = DEFAULT_DIM_CAP) -> PsdOperator:
    layout = a.layout.concat(b.layout)
    if layout.dim > cap:
        raise DimensionCapError(f"ambient dimension {layout.dim} exceeds cap {cap}")
    cls = DensityMatrix if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix) else PsdOperator
    return cls(layout, np.kron(a.entries, b.entries), check=False)


def _indexed(layout: HilbertLayout, k: int) -> HilbertLayout:
    return HilbertLayout(layout.dims, tuple(f"{lab}{k}" for lab in layout.labels))


def tensor_product(states: Sequence[PsdOperator], cap: int = DEFAULT_DIM_CAP) -> PsdOperator:
    """Product of copies sharing one base layout, relabelled ``A1, B1, A2, B2, ...``."""
    if not states:
        raise LayoutError("empty product")
    base = states[0].layout
    out = None
    for k, s in enumerate(states, start=1):
        if s.layout != base:
            raise LayoutError("all factors must share one layout")
        factor = _like(s, _indexed(base, k), s.entries)
        out = factor if out is None else tensor(out, factor, cap)
    return out


def tensor_power(rho: PsdOperator, l: int, cap: int = DEFAULT_DIM_CAP) -> PsdOperator:
    if l < 1:
        raise DomainError("tensor power needs l >= 1")
    if rho.dim ** l > cap:
        raise DimensionCapError(f"ambient dimension {rho.dim ** l} exceeds cap {cap}")
    return tensor_product([rho] * l, cap)


def _permute_axes(m: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    n = len(dims)
    t = m.reshape(tuple(dims) * 2)
    t = t.transpose(list(order) + [n + i for i in order])
    d = math.prod(dims)
    return t.reshape(d, d)


def reorder(rho: PsdOperator, labels: Sequence[str]) -> PsdOperator:
    """Permute subsystems into the given label order."""
    labels = tuple(labels)
    if sorted(labels) != sorted(rho.layout.labels):
        raise LayoutError(f"{labels} is not a permutation of {rho.layout.labels}")
    order = [rho.layout.labels.index(lab) for lab in labels]
    layout = HilbertLayout(tuple(rho.layout.dims[i] for i in order), labels)
    return _like(rho, layout, _permute_axes(rho.entries, rho.layout.dims, order))


def relabel(rho: PsdOperator, mapping: dict[str, str]) -> PsdOperator:
    labels = tuple(mapping.get(lab, lab) for lab in rho.layout.labels)
    return _like(rho, HilbertLayout(rho.layout.dims, labels), rho.entries)


def partial_trace(rho: PsdOperator, keep) -> PsdOperator:
    """Trace out everything except ``keep``; kept subsystems stay in layout order."""
    lay = rho.layout
    kept = lay.positions(keep)
    if not kept:
        raise LayoutError("keep must be nonempty")
    gone = [i for i in range(len(lay)) if i not in kept]
    dk = math.prod(lay.dims[i] for i in kept)
    dg = math.prod(lay.dims[i] for i in gone)
    m = _permute_axes(rho.entries, lay.dims, list(kept) + gone).reshape(dk, dg, dk, dg)
    out = np.einsum("ijkj->ik", m)
    return _like(rho, lay.sub(keep), out)


def purify(rho: DensityMatrix, env_label: str = "E") -> PureState:
    """Eigendecomposition purification; the environment dimension is the numerical rank."""
    w, v = hermitian_eig(rho.entries)
    idx = np.nonzero(w > EIG_ZERO)[0][::-1]
    r = len(idx)
    psi = np.zeros((rho.dim, r), dtype=complex)
    for j, i in enumerate(idx):
        psi[:, j] = np.sqrt(w[i]) * v[:, i]
    psi /= np.linalg.norm(psi)
    layout = rho.layout.concat(HilbertLayout((r,), (env_label,)))
    return PureState(layout, psi.reshape(-1))


def schmidt_rank(psi: PureState, cut, tol: float = RANK_TOL) -> int:
    lay = psi.layout
    side = lay.positions(cut)
    if not side or len(side) == len(lay):
        raise LayoutError("cut must be a proper nonempty subset of the labels")
    rest = [i for i in range(len(lay)) if i not in side]
    t = psi.amplitudes.reshape(lay.dims).transpose(list(side) + rest)
    m = t.reshape(math.prod(lay.dims[i] for i in side), -1)
    return int(np.sum(np.linalg.svd(m, compute_uv=False) > tol))


# ---------------------------------------------------------------------------
# distances


def _matrix(x) -> np.ndarray:
    if isinstance(x, PureState):
        return np.outer(x.amplitudes, x.amplitudes.conj())
    if isinstance(x, PsdOperator):
        return x.entries
    return np.asarray(x, dtype=complex)


def fidelity(a, b) -> float:
    """Squared trace norm of sqrt(a) sqrt(b); <psi|a|psi> when one side is a pure state."""
    if isinstance(a, PureState):
        a, b = b, a
    if isinstance(b, PureState):
        ma = _matrix(a)
        if np.linalg.eigvalsh(0.5 * (ma + ma.conj().T)).min() < -STATE_TOL:
            raise StateError("fidelity argument is not positive semidefinite")
        v = b.amplitudes
        return float(max(np.real(v.conj() @ ma @ v), 0.0))
    halves = []
    for m in (_matrix(a), _matrix(b)):
        w, v = hermitian_eig(m)
        if w.min() < -STATE_TOL:
            raise StateError(f"fidelity argument has negative eigenvalue {w.min():.3e}")
        keep = w > EIG_ZERO
        halves.append((np.sqrt(w[keep]), v[:, keep]))
    (ra, va), (rb, vb) = halves
    # ||sqrt(a) sqrt(b)||_1 restricted to the two supports; avoids sqrt of rounding noise
    core = ra[:, None] * (va.conj().T @ vb) * rb[None, :]
    if core.size == 0:
        return 0.0
    return float(np.linalg.svd(core, compute_uv=False).sum() ** 2)


def trace_norm(m) -> float:
    m = _matrix(m)
    if np.allclose(m, m.conj().T, atol=1e-12):
        return float(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T))).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def trace_distance(a, b) -> float:
    """Unnormalised trace-norm distance ``||a - b||_1``."""
    return trace_norm(_matrix(a) - _matrix(b))


# ---------------------------------------------------------------------------
# entropies


def _xlogx_sum(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p))) + 0.0      # + 0.0 turns -0.0 into 0.0


def von_neumann_entropy(rho) -> float:
    return _xlogx_sum(_spectrum(_matrix(rho)))


def conditional_entropy(rho: PsdOperator, given) -> float:
    """S(X|Y) = S(rho) - S(rho_Y), X being everything not in ``given``."""
    return von_neumann_entropy(rho) - von_neumann_entropy(partial_trace(rho, given))


def mutual_information(rho: PsdOperator, x, y) -> float:
    lx, ly = rho.layout.resolve(x), rho.layout.resolve(y)
    if set(lx) & set(ly):
        raise LayoutError("mutual information needs disjoint label sets")
    joint = partial_trace(rho, lx + ly)
    return (von_neumann_entropy(partial_trace(rho, lx)) + von_neumann_entropy(partial_trace(rho, ly))
            - von_neumann_entropy(joint))


def coherent_information(rho: PsdOperator, from_, to) -> float:
    """I_c(X>Y) = S(rho_Y) - S(rho_XY)."""
    lx, ly = rho.layout.resolve(from_), rho.layout.resolve(to)
    if set(lx) & set(ly):
        raise LayoutError("coherent information needs disjoint label sets")
    joint = rho if len(lx) + len(ly) == len(rho.layout) else partial_trace(rho, lx + ly)
    return von_neumann_entropy(partial_trace(rho, ly)) - von_neumann_entropy(joint)


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    p = np.where(np.abs(p) <= EIG_ZERO, 0.0, p)
    return _xlogx_sum(p)


def binary_entropy(x: float) -> float:
    if not 0 <= x <= 1:
        raise DomainError(f"binary entropy needs x in [0, 1], got {x}")
    return shannon_entropy([x, 1 - x])


def relative_entropy(p, q) -> float:
    """Classical relative entropy in bits; infinite unless p << q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise LayoutError("distributions live on different sets")
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))


def nu(x: float, dim: int) -> float:
    """Continuity modulus ``4 x log dim + 2 h(x)`` of the conditional entropy."""
    if not 0 < x <= 0.5:
        raise DomainError(f"nu needs 0 < x <= 1/2, got {x}")
    return 4 * x * math.log2(dim) + 2 * binary_entropy(x)


def depolarize_local(rho: DensityMatrix, gamma: float) -> DensityMatrix:
    """Product of gamma-depolarizing channels on the two halves of a bipartite state."""
    if len(rho.layout) != 2:
        raise LayoutError(f"local depolarization needs a bipartite layout, got {rho.layout.labels}")
    if not 0 <= gamma <= 1:
        raise DomainError(f"gamma must lie in [0, 1], got {gamma}")
    a, b = rho.layout.labels
    da, db = rho.layout.dims
    pa, pb = np.eye(da) / da, np.eye(db) / db
    ra = partial_trace(rho, [a]).entries
    rb = partial_trace(rho, [b]).entries
    m = ((1 - gamma) ** 2 * rho.entries
         + gamma * (1 - gamma) * (np.kron(ra, pb) + np.kron(pa, rb))
         + gamma ** 2 * np.kron(pa, pb))
    return DensityMatrix(rho.layout, m, check=False)


# ---------------------------------------------------------------------------
# constructors


def _ab(da: int, db: int, labels=("A", "B")) -> HilbertLayout:
    return HilbertLayout((da, db), labels)


def bell_state(d: int = 2, labels=("A", "B")) -> DensityMatrix:
    """Maximally entangled state (|00> + |11> + ...)/sqrt(d)."""
    return schmidt_state(np.full(d, 1.0 / d), labels).density()


def schmidt_state(weights, labels=("A", "B")) -> PureState:
    w = np.asarray(weights, dtype=float)
    d = len(w)
    v = np.zeros(d * d, dtype=complex)
    for i, wi in enumerate(w):
        v[i * d + i] = math.sqrt(wi)
    return PureState(_ab(d, d, labels), v)


def basis_state(index: int, dims: Sequence[int], labels: Sequence[str]) -> DensityMatrix:
    layout = HilbertLayout(tuple(dims), tuple(labels))
    m = np.zeros((layout.dim, layout.dim), dtype=complex)
    m[index, index] = 1.0
    return DensityMatrix(layout, m, check=False)


def maximally_mixed(dims: Sequence[int], labels: Sequence[str]) -> DensityMatrix:
    layout = HilbertLayout(tuple(dims), tuple(labels))
    return DensityMatrix(layout, np.eye(layout.dim) / layout.dim, check=False)


def product_state(*factors: DensityMatrix) -> DensityMatrix:
    out = factors[0]
    for f in factors[1:]:
        out = tensor(out, f)
    return out


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_psd(d: int, rng: np.random.Generator, rank: int | None = None,
               trace: float = 1.0) -> np.ndarray:
    r = d if rank is None else rank
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    m = g @ g.conj().T
    return trace * m / np.trace(m).real


def random_state(dims: Sequence[int], labels: Sequence[str], rng: np.random.Generator,
                 rank: int | None = None) -> DensityMatrix:
    """Ginibre-distributed density matrix of the given rank."""
    return DensityMatrix(HilbertLayout(tuple(dims), tuple(labels)), random_psd(math.prod(dims), rng, rank))


# ---------------------------------------------------------------------------
# JSON


def state_to_json(rho: PsdOperator) -> dict:
    m = rho.entries
    return {"dims": list(rho.layout.dims), "labels": list(rho.layout.labels),
            "re": m.real.tolist(), "im": m.imag.tolist()}


def state_from_json(obj: dict, cls=DensityMatrix) -> PsdOperator:
    try:
        layout = HilbertLayout(tuple(obj["dims"]), tuple(obj["labels"]))
        re_ = np.asarray(obj["re"], dtype=float)
        im_ = np.asarray(obj.get("im", np.zeros_like(re_)), dtype=float)
    except KeyError as exc:
        raise LayoutError(f"state JSON is missing field {exc.args[0]!r}") from None
    return cls(layout, re_ + 1j * im_)
