"""Young frames, symmetric-group characters and isotypic projectors on (C^d)^{(x)l}.

Also holds the entropy-band instrument built from those projectors and the
divergence constant that separates distributions with different entropies.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .channels import Instrument
from .qcore import (
    DensityMatrix, DomainError, HilbertLayout, LayoutError, binary_entropy,
    relative_entropy, shannon_entropy,
)

PROJECTOR_TOL = 1e-9


@dataclass(frozen=True, order=True)
class YoungFrame:
    """Partition of l into at most d rows, zero-padded to length d."""

    parts: tuple[int, ...]

    def __post_init__(self):
        parts = tuple(int(x) for x in self.parts)
        if any(x < 0 for x in parts) or any(a < b for a, b in zip(parts, parts[1:])):
            raise DomainError(f"{parts} is not a non-increasing sequence of nonnegative integers")
        object.__setattr__(self, "parts", parts)

    @property
    def size(self) -> int:
        return sum(self.parts)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(x for x in self.parts if x)

    def normalized(self) -> np.ndarray:
        return np.asarray(self.parts, dtype=float) / self.size

    def entropy(self) -> float:
        return shannon_entropy(self.normalized())

    def __str__(self):
        return "(" + ",".join(map(str, self.parts)) + ")"


def _partitions(n: int, max_parts: int, max_part: int | None = None):
    if max_part is None:
        max_part = n
    if n == 0:
        yield ()
        return
    if max_parts == 0:
        return
    for first in range(min(n, max_part), 0, -1):
        for rest in _partitions(n - first, max_parts - 1, first):
            yield (first,) + rest


def partitions(n: int) -> list[tuple[int, ...]]:
    return list(_partitions(n, n))


def enumerate_frames(d: int, l: int) -> list[YoungFrame]:
    """All frames with l boxes and at most d rows, in decreasing lexicographic order."""
    if d < 1 or l < 1:
        raise DomainError("d and l must be positive")
    return [YoungFrame(p + (0,) * (d - len(p))) for p in _partitions(l, d)]


def cycle_type(perm) -> tuple[int, ...]:
    seen = [False] * len(perm)
    lengths = []
    for start in range(len(perm)):
        if seen[start]:
            continue
        n, j = 0, start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            n += 1
        lengths.append(n)
    return tuple(sorted(lengths, reverse=True))


def class_size(cycles) -> int:
    n = sum(cycles)
    denom = 1
    for length, mult in _multiplicities(cycles).items():
        denom *= length ** mult * math.factorial(mult)
    return math.factorial(n) // denom


def _multiplicities(cycles) -> dict[int, int]:
    out: dict[int, int] = {}
    for c in cycles:
        out[c] = out.get(c, 0) + 1
    return out


@lru_cache(maxsize=None)
def _mn(shape: tuple[int, ...], cycles: tuple[int, ...]) -> int:
    # Murnaghan-Nakayama on beta-sets: removing a rim hook of length r moves one
    # bead from b to b - r; the sign counts the beads jumped over.
    if not cycles:
        return 1 if not shape else 0
    r, rest = cycles[0], cycles[1:]
    n = len(shape)
    beta = [shape[i] + n - 1 - i for i in range(n)]
    occupied = set(beta)
    total = 0
    for b in beta:
        nb = b - r
        if nb < 0 or nb in occupied:
            continue
        sign = -1 if sum(1 for x in beta if nb < x < b) % 2 else 1
        moved = sorted([x for x in beta if x != b] + [nb], reverse=True)
        new_shape = tuple(x for x in (moved[i] - (n - 1 - i) for i in range(n)) if x)
        total += sign * _mn(new_shape, rest)
    return total


def character(frame, cycles) -> int:
    """Irreducible S_l character of ``frame`` on the class with the given cycle type."""
    shape = frame.shape if isinstance(frame, YoungFrame) else tuple(x for x in frame if x)
    cycles = tuple(sorted((c for c in cycles if c), reverse=True))
    if sum(shape) != sum(cycles):
        raise DomainError("frame and cycle type partition different integers")
    return _mn(shape, cycles)


def irrep_dimension(frame) -> int:
    """Hook-length formula."""
    shape = frame.shape if isinstance(frame, YoungFrame) else tuple(x for x in frame if x)
    n = sum(shape)
    cols = [sum(1 for row in shape if row > j) for j in range(shape[0])] if shape else []
    hooks = 1
    for i, row in enumerate(shape):
        for j in range(row):
            hooks *= (row - j - 1) + (cols[j] - i - 1) + 1
    return math.factorial(n) // hooks


def permutation_matrix_indices(perm, d: int) -> np.ndarray:
    """Row index of U_perm |i> for each basis column i of (C^d)^{(x)l}."""
    l = len(perm)
    digits = np.indices((d,) * l).reshape(l, -1)
    inv = np.argsort(perm)
    out_digits = digits[inv]
    weights = d ** np.arange(l - 1, -1, -1)
    return weights @ out_digits


@lru_cache(maxsize=64)
def _projector(shape: tuple[int, ...], d: int, l: int) -> np.ndarray:
    dim = irrep_dimension(shape)
    n = d ** l
    p = np.zeros((n, n))
    cols = np.arange(n)
    for perm in itertools.permutations(range(l)):
        chi = _mn(shape, cycle_type(perm))
        if chi:
            np.add.at(p, (permutation_matrix_indices(perm, d), cols), chi)
    p *= dim / math.factorial(l)
    p.setflags(write=False)
    return p


@dataclass(frozen=True, eq=False)
class IsotypicProjector:
    frame: YoungFrame
    d: int
    matrix: np.ndarray

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.matrix)))


def isotypic_projector(frame: YoungFrame, d: int) -> IsotypicProjector:
    if len(frame.shape) > d:
        raise LayoutError(f"frame {frame} has more than {d} rows")
    return IsotypicProjector(frame, d, _projector(frame.shape, d, frame.size))


def _power(rho: np.ndarray, l: int) -> np.ndarray:
    out = rho
    for _ in range(l - 1):
        out = np.kron(out, rho)
    return out


def spectrum_probability(frame: YoungFrame, rho, l: int | None = None) -> float:
    """tr(P_frame rho^{(x)l})."""
    m = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    l = frame.size if l is None else l
    if l != frame.size:
        raise DomainError(f"frame has {frame.size} boxes, blocklength is {l}")
    p = isotypic_projector(frame, m.shape[0]).matrix
    return float(np.real(np.sum(p * _power(m, l).T)))


def sorted_spectrum(rho) -> np.ndarray:
    m = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    w = np.clip(np.linalg.eigvalsh(0.5 * (m + m.conj().T)), 0.0, None)
    return w[::-1]


def keyl_werner_bound(frame: YoungFrame, spectrum) -> float:
    """(l+1)^{d(d-1)/2} 2^{-l D(normalized frame || decreasing spectrum)}."""
    r = np.sort(np.asarray(spectrum, dtype=float))[::-1]
    d, l = len(r), frame.size
    div = relative_entropy(frame.normalized(), r)
    if math.isinf(div):
        return 0.0
    return (l + 1) ** (d * (d - 1) / 2) * 2.0 ** (-l * div)


# ---------------------------------------------------------------------------
# entropy bands


def band_edges(d: int, eta: float) -> tuple[float, ...]:
    if not 0 < eta <= 1:
        raise DomainError(f"band width must lie in (0, 1], got {eta}")
    top = math.log2(d)
    n_bands = max(1, math.ceil(top / eta - 1e-12))
    edges = [min(i * eta, top) for i in range(n_bands)] + [top]
    return tuple(edges)


def band_index(h: float, edges) -> int:
    """1-based band holding entropy h; the first band is closed, the others half-open."""
    for i in range(1, len(edges)):
        if h <= edges[i] + 1e-12:
            return i
    return len(edges) - 1


@dataclass(frozen=True, eq=False)
class EntropyBandInstrument:
    eta: float
    d: int
    l: int
    edges: tuple
    bands: tuple          # bands[i-1] = frames with normalized entropy in band i
    projectors: tuple     # p_i = sum of P_frame over the band

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    def band_of(self, h: float) -> int:
        return band_index(h, self.edges)

    def masses(self, rho) -> np.ndarray:
        """tr(p_i rho^{(x)l}) for every band."""
        return np.array([sum(spectrum_probability(f, rho) for f in band) for band in self.bands])

    def neighbours(self, i: int) -> set[int]:
        return {j for j in range(1, self.n_bands + 1) if abs(j - i) <= 1}

    def off_band_mass(self, rho) -> float:
        """Mass outside the bands adjacent to the band of S(rho)."""
        from .qcore import von_neumann_entropy
        i = self.band_of(von_neumann_entropy(rho))
        near = self.neighbours(i)
        masses = self.masses(rho)
        return float(sum(masses[j - 1] for j in range(1, self.n_bands + 1) if j not in near))

    def as_instrument(self, label: str = "A") -> Instrument:
        layout = HilbertLayout((self.d,) * self.l, tuple(f"{label}{k}" for k in range(1, self.l + 1)))
        return Instrument.projective(list(self.projectors), layout)


def entropy_band_instrument(d: int, l: int, eta: float) -> EntropyBandInstrument:
    edges = band_edges(d, eta)
    bands: list[list[YoungFrame]] = [[] for _ in range(len(edges) - 1)]
    for f in enumerate_frames(d, l):
        bands[band_index(f.entropy(), edges) - 1].append(f)
    n = d ** l
    projectors = []
    for band in bands:
        p = np.zeros((n, n))
        for f in band:
            p = p + isotypic_projector(f, d).matrix
        projectors.append(p)
    return EntropyBandInstrument(eta, d, l, edges, tuple(tuple(b) for b in bands), tuple(projectors))


# ---------------------------------------------------------------------------
# divergence constant separating entropy bands


def entropy_modulus(eps: float, d: int) -> float:
    """Sharp bound on |H(p) - H(q)| given ||p - q||_1 <= eps on d letters."""
    if d < 2:
        raise DomainError("alphabet needs at least two letters")
    t = min(eps / 2, 1 - 1 / d)
    return t * math.log2(d - 1) + binary_entropy(t)


def entropy_modulus_inverse(eta: float, d: int, tol: float = 1e-14) -> float:
    if not 0 < eta <= math.log2(d) + 1e-12:
        raise DomainError(f"eta must lie in (0, log d], got {eta}")
    lo, hi = 0.0, 2 * (1 - 1 / d)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if entropy_modulus(mid, d) < eta:
            lo = mid
        else:
            hi = mid
    return hi


def appendix_constant(eta: float, d: int) -> float:
    """c with D(p||q) >= 2c whenever |H(p) - H(q)| >= eta on d letters (Pinsker in bits)."""
    eps = entropy_modulus_inverse(eta, d)
    return eps ** 2 / (4 * math.log(2))


def simplex_grid(d: int, n: int) -> np.ndarray:
    """All distributions on d letters with entries in (1/n) Z, as integer counts."""
    if d == 1:
        return np.array([[n]])
    rows = []
    for first in range(n, -1, -1):
        sub = simplex_grid(d - 1, n - first)
        rows.append(np.column_stack([np.full(len(sub), first), sub]))
    return np.vstack(rows)


@dataclass(frozen=True)
class GridCheck:
    eta: float
    d: int
    resolution: float
    threshold: float
    violations: int
    min_divergence: float
    pairs_evaluated: int
    backend: str


def appendix_grid_check(eta: float, d: int, resolution: float = 1e-3, backend: str | None = None,
                        cell: int = 20, threshold: float | None = None) -> GridCheck:
    """Search grid pairs (p, q) with |H(p)-H(q)| >= eta and D(p||q) < 2 c(eta, d).

    p runs over sorted grid points only, which loses nothing because both sides
    are invariant under relabelling the alphabet. Grid cells are skipped only
    when an exact lower bound rules out every pair inside them.
    """
    impl = kernels if backend is None else kernels.backend(backend)
    n = int(round(1 / resolution))
    counts = simplex_grid(d, n)
    q = counts / n
    with np.errstate(divide="ignore", invalid="ignore"):
        q_log = np.log2(q)
        q_ent = -np.sum(np.where(q > 0, q * q_log, 0.0), axis=1)
    p_mask = np.all(np.diff(counts, axis=1) <= 0, axis=1)
    p_pts = np.ascontiguousarray(q[p_mask])
    p_ent = q_ent[p_mask]
    p_negent = -p_ent

    keys = counts[:, :-1] // cell
    order = np.lexsort(keys.T[::-1]) if d > 1 else np.arange(len(q))
    keys = keys[order]
    q_log = np.ascontiguousarray(q_log[order])
    q_ent = np.ascontiguousarray(q_ent[order])
    q_sorted = q[order]
    change = np.any(np.diff(keys, axis=0) != 0, axis=1)
    starts = np.concatenate([[0], np.nonzero(change)[0] + 1, [len(q)]]).astype(np.intp)
    n_cells = len(starts) - 1
    qmax = np.maximum.reduceat(q_sorted, starts[:-1], axis=0)
    with np.errstate(divide="ignore"):
        cell_logmax = np.ascontiguousarray(np.log2(qmax))
    cell_hmin = np.minimum.reduceat(q_ent, starts[:-1])
    cell_hmax = np.maximum.reduceat(q_ent, starts[:-1])
    assert len(cell_hmin) == n_cells

    if threshold is None:
        threshold = 2 * appendix_constant(eta, d)
    violations, best, evaluated = impl.divergence_gap_scan(
        p_pts, np.ascontiguousarray(p_negent), np.ascontiguousarray(p_ent), q_log, q_ent,
        starts, cell_logmax, np.ascontiguousarray(cell_hmin), np.ascontiguousarray(cell_hmax),
        float(eta), float(threshold))
    name = kernels.BACKEND if backend is None else backend
    return GridCheck(eta, d, resolution, threshold, int(violations), float(best), int(evaluated), name)
