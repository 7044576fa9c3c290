"""Kraus maps, quantum instruments and one-way LOCC operations.

A :class:`KrausMap` acts on the subsystems named by ``acting_on``; its outputs take the
place of the first input subsystem. Maps with an empty input layout prepare a fresh
register, which is appended at the end of the layout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qcore import (
    DensityMatrix, HilbertLayout, LayoutError, PsdOperator, coherent_information,
    hermitian_eig, random_unitary, _permute_axes,
)

CHANNEL_TOL = 1e-9
BRANCH_CUTOFF = 1e-12

EMPTY = HilbertLayout((), ())


class InstrumentError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KrausMap:
    """Completely positive trace-nonincreasing map in Kraus form."""

    in_layout: HilbertLayout
    out_layout: HilbertLayout
    kraus: tuple

    def __post_init__(self):
        mats = tuple(np.array(k, dtype=complex) for k in self.kraus)
        for k in mats:
            if k.shape != (self.out_layout.dim, self.in_layout.dim):
                raise LayoutError(f"Kraus shape {k.shape} does not match "
                                  f"{self.out_layout.dim}x{self.in_layout.dim}")
            k.setflags(write=False)
        object.__setattr__(self, "kraus", mats)
        excess = np.linalg.eigvalsh(self.gram() - np.eye(self.in_layout.dim)).max()
        if excess > CHANNEL_TOL:
            raise InstrumentError(f"sum of K^dag K exceeds identity by {excess:.3e}")

    def gram(self) -> np.ndarray:
        g = np.zeros((self.in_layout.dim,) * 2, dtype=complex)
        for k in self.kraus:
            g += k.conj().T @ k
        return g

    def is_channel(self, tol: float = CHANNEL_TOL) -> bool:
        return bool(np.allclose(self.gram(), np.eye(self.in_layout.dim), atol=tol))

    @classmethod
    def identity(cls, layout: HilbertLayout) -> "KrausMap":
        return cls(layout, layout, (np.eye(layout.dim),))

    @classmethod
    def unitary(cls, u, layout: HilbertLayout) -> "KrausMap":
        return cls(layout, layout, (u,))

    @classmethod
    def discard(cls, layout: HilbertLayout) -> "KrausMap":
        """Partial trace over the whole input."""
        eye = np.eye(layout.dim)
        return cls(layout, EMPTY, tuple(eye[i:i + 1] for i in range(layout.dim)))

    @classmethod
    def prepare(cls, vector, layout: HilbertLayout) -> "KrausMap":
        """Append a fixed pure state on a new register."""
        v = np.asarray(vector, dtype=complex).reshape(-1, 1)
        return cls(EMPTY, layout, (v / np.linalg.norm(v),))


def depolarizing_map(d: int, gamma: float, label: str) -> KrausMap:
    """x -> (1 - gamma) x + gamma tr(x) I/d."""
    layout = HilbertLayout((d,), (label,))
    kraus = [math.sqrt(1 - gamma) * np.eye(d)]
    for i in range(d):
        for j in range(d):
            k = np.zeros((d, d))
            k[i, j] = math.sqrt(gamma / d)
            kraus.append(k)
    return KrausMap(layout, layout, tuple(kraus))


def _apply_kraus(kraus, in_layout: HilbertLayout, out_layout: HilbertLayout,
                 rho: PsdOperator, acting_on) -> tuple[HilbertLayout, np.ndarray]:
    lay = rho.layout
    pos = lay.positions(acting_on) if len(in_layout) else ()
    if tuple(lay.dims[i] for i in pos) != in_layout.dims:
        raise LayoutError(f"map expects dims {in_layout.dims} on {acting_on}, "
                          f"state has {tuple(lay.dims[i] for i in pos)}")
    rest = [i for i in range(len(lay)) if i not in pos]
    din = in_layout.dim
    drest = math.prod(lay.dims[i] for i in rest)
    m = _permute_axes(rho.entries, lay.dims, list(pos) + rest).reshape(din, drest, din, drest)
    dout = out_layout.dim
    acc = np.zeros((dout, drest, dout, drest), dtype=complex)
    for k in kraus:
        acc += np.einsum("ai,irjs,bj->arbs", k, m, k.conj(), optimize=True)
    rest_layout = HilbertLayout(tuple(lay.dims[i] for i in rest), tuple(lay.labels[i] for i in rest))
    staged = out_layout.concat(rest_layout)
    acc = acc.reshape(staged.dim, staged.dim)
    # put outputs where the first input subsystem was
    cut = sum(1 for i in rest if pos and i < pos[0]) if pos else len(rest)
    n_out = len(out_layout)
    order = (list(range(n_out, n_out + cut)) + list(range(n_out))
             + list(range(n_out + cut, len(staged))))
    final = HilbertLayout(tuple(staged.dims[i] for i in order), tuple(staged.labels[i] for i in order))
    return final, _permute_axes(acc, staged.dims, order)


@dataclass(frozen=True, eq=False)
class Instrument:
    """Finite family of trace-nonincreasing maps summing to a channel."""

    branches: tuple

    def __post_init__(self):
        branches = tuple(self.branches)
        if not branches:
            raise InstrumentError("an instrument needs at least one branch")
        first = branches[0]
        for b in branches:
            if b.in_layout != first.in_layout or b.out_layout != first.out_layout:
                raise LayoutError("instrument branches must share layouts")
        object.__setattr__(self, "branches", branches)
        total = sum(b.gram() for b in branches)
        if not np.allclose(total, np.eye(first.in_layout.dim), atol=CHANNEL_TOL):
            raise InstrumentError("instrument branches do not sum to a channel")

    def __len__(self):
        return len(self.branches)

    @property
    def in_layout(self) -> HilbertLayout:
        return self.branches[0].in_layout

    @property
    def out_layout(self) -> HilbertLayout:
        return self.branches[0].out_layout

    @classmethod
    def from_kraus(cls, mats, in_layout: HilbertLayout, out_layout: HilbertLayout | None = None):
        """One rank-one branch per Kraus operator."""
        out_layout = in_layout if out_layout is None else out_layout
        return cls(tuple(KrausMap(in_layout, out_layout, (k,)) for k in mats))

    @classmethod
    def projective(cls, projectors, layout: HilbertLayout):
        return cls.from_kraus(projectors, layout)

    @classmethod
    def trivial(cls, layout: HilbertLayout):
        return cls((KrausMap.identity(layout),))

    @classmethod
    def computational(cls, layout: HilbertLayout):
        eye = np.eye(layout.dim)
        return cls.projective([np.outer(eye[i], eye[i]) for i in range(layout.dim)], layout)

    def to_json(self) -> dict:
        return {
            "in_layout": self.in_layout.to_dict(),
            "out_layout": self.out_layout.to_dict(),
            "branches": [[{"re": k.real.tolist(), "im": k.imag.tolist()} for k in b.kraus]
                         for b in self.branches],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Instrument":
        try:
            lin = HilbertLayout(tuple(obj["in_layout"]["dims"]), tuple(obj["in_layout"]["labels"]))
            lout = HilbertLayout(tuple(obj["out_layout"]["dims"]), tuple(obj["out_layout"]["labels"]))
            branches = obj["branches"]
        except KeyError as exc:
            raise LayoutError(f"instrument JSON is missing field {exc.args[0]!r}") from None
        return cls(tuple(
            KrausMap(lin, lout, tuple(np.asarray(k["re"]) + 1j * np.asarray(k.get("im", 0.0)) for k in b))
            for b in branches))


def complete_kraus(mats: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Rescale ``G_j -> G_j M^{-1/2}`` with ``M = sum G_j^dag G_j`` so the family is complete."""
    m = sum(g.conj().T @ g for g in mats)
    w, v = hermitian_eig(m)
    if w.min() <= 1e-14:
        raise InstrumentError("Kraus family is rank deficient and cannot be completed")
    inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    return [g @ inv_sqrt for g in mats]


@dataclass(frozen=True, eq=False)
class OneWayLocc:
    """Instrument on A whose outcome k selects channel ``b_channels[k]`` on B."""

    a_instrument: Instrument
    b_channels: tuple
    a_on: tuple = ("A",)
    b_on: tuple = ("B",)

    def __post_init__(self):
        object.__setattr__(self, "b_channels", tuple(self.b_channels))
        object.__setattr__(self, "a_on", tuple(self.a_on))
        object.__setattr__(self, "b_on", tuple(self.b_on))
        if len(self.b_channels) != len(self.a_instrument):
            raise InstrumentError(f"{len(self.a_instrument)} branches but {len(self.b_channels)} B channels")
        for r in self.b_channels:
            if not r.is_channel():
                raise InstrumentError("every B-side map must be a channel")

    @property
    def message_count(self) -> int:
        return len(self.a_instrument)

    def is_channel(self) -> bool:
        return all(r.is_channel() for r in self.b_channels)


def apply(op, rho: PsdOperator, acting_on=None) -> PsdOperator:
    """Apply a Kraus map (on ``acting_on``) or a one-way LOCC (on its own labels)."""
    if isinstance(op, OneWayLocc):
        return _apply_locc(op, rho)
    if acting_on is None:
        acting_on = op.in_layout.labels
    layout, m = _apply_kraus(op.kraus, op.in_layout, op.out_layout, rho, acting_on)
    if isinstance(rho, DensityMatrix) and op.is_channel():
        return DensityMatrix(layout, m, check=False)
    return PsdOperator(layout, m, check=False)


def _apply_locc(op: OneWayLocc, rho: PsdOperator) -> PsdOperator:
    acc = None
    for t, r in zip(op.a_instrument.branches, op.b_channels):
        part = apply(t, rho, op.a_on)
        b_on = op.b_on if len(r.in_layout) else ()
        part = apply(r, part, b_on)
        if acc is None:
            layout, acc = part.layout, part.entries.copy()
        else:
            if part.layout != layout:
                raise LayoutError("LOCC branches produce different output layouts")
            acc += part.entries
    cls = DensityMatrix if isinstance(rho, DensityMatrix) else PsdOperator
    return cls(layout, acc, check=False)


def instrument_outcomes(instrument: Instrument, sigma: DensityMatrix, a_on="A"):
    """Outcome weights and normalised post-measurement states; negligible branches dropped."""
    out = []
    for branch in instrument.branches:
        part = apply(branch, sigma, a_on)
        lam = part.trace
        if lam > BRANCH_CUTOFF:
            out.append((lam, DensityMatrix(part.layout, part.entries / lam, check=False)))
    return out


def one_shot_rate(instrument: Instrument, sigma: DensityMatrix, a_on="A", b_on="B") -> float:
    """Weighted coherent information sum_j lambda_j I_c(A>B, sigma_j)."""
    total = 0.0
    out_labels = instrument.out_layout.labels
    if not out_labels:
        # one-dimensional A output: S(B) - S(AB) vanishes branch by branch
        return 0.0
    for lam, post in instrument_outcomes(instrument, sigma, a_on):
        total += lam * coherent_information(post, out_labels, post.layout.resolve(b_on))
    return total


def hat_channel(instrument: Instrument, a_on="A", b_on="B", register: str = "B'") -> OneWayLocc:
    """Instrument with its outcome copied into a classical register on B's side."""
    n = len(instrument)
    reg = HilbertLayout((n,), (register,))
    eye = np.eye(n)
    preps = tuple(KrausMap.prepare(eye[j], reg) for j in range(n))
    return OneWayLocc(instrument, preps, tuple([a_on] if isinstance(a_on, str) else a_on),
                      tuple([b_on] if isinstance(b_on, str) else b_on))


def permute_factors(rho: PsdOperator, perm: Sequence[int]) -> PsdOperator:
    """Move block ``perm[i]`` of an l-fold product layout to position ``i``.

    With this convention ``permute_factors(rho_{s^l}, perm)`` is ``rho`` at
    ``(s[perm[0]], ..., s[perm[l-1]])``.
    """
    blocks = _blocks(rho.layout)
    l = len(blocks)
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(l)):
        raise LayoutError(f"{perm} is not a permutation of {l} blocks")
    width = len(blocks[0])
    order = [blocks[p][0] + j for p in perm for j in range(width)]
    return type(rho)(rho.layout, _permute_axes(rho.entries, rho.layout.dims, order), check=False)


def _blocks(layout: HilbertLayout) -> list[list[int]]:
    from .qcore import _INDEXED, _base
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(layout.labels):
        m = _INDEXED.match(lab)
        if not m:
            raise LayoutError(f"label {lab!r} carries no copy index; not an l-fold product")
        groups.setdefault(int(m.group(2)), []).append(i)
    keys = sorted(groups)
    if keys != list(range(1, len(keys) + 1)):
        raise LayoutError(f"copy indices {keys} are not 1..l")
    blocks = [groups[k] for k in keys]
    sig = [(_base(layout.labels[i]), layout.dims[i]) for i in blocks[0]]
    pos = 0
    for b in blocks:
        if [(_base(layout.labels[i]), layout.dims[i]) for i in b] != sig:
            raise LayoutError("copies have different subsystem structure")
        if b != list(range(pos, pos + len(b))):
            raise LayoutError("copies are not stored contiguously")
        pos += len(b)
    return blocks


# ---------------------------------------------------------------------------
# random constructors


def random_isometry(din: int, dout: int, rng: np.random.Generator) -> np.ndarray:
    u = random_unitary(max(din, dout), rng)
    return u[:dout, :din] if dout >= din else u[:din, :dout].conj().T


def random_channel(in_layout: HilbertLayout, out_layout: HilbertLayout,
                   rng: np.random.Generator, n_kraus: int = 2) -> KrausMap:
    v = random_isometry(in_layout.dim, out_layout.dim * n_kraus, rng)
    d = out_layout.dim
    return KrausMap(in_layout, out_layout, tuple(v[i * d:(i + 1) * d] for i in range(n_kraus)))


def random_instrument(in_layout: HilbertLayout, n_branches: int, rng: np.random.Generator,
                      out_layout: HilbertLayout | None = None) -> Instrument:
    """Rank-one Kraus instrument from a random isometry."""
    out_layout = in_layout if out_layout is None else out_layout
    v = random_isometry(in_layout.dim, out_layout.dim * n_branches, rng)
    d = out_layout.dim
    return Instrument.from_kraus([v[i * d:(i + 1) * d] for i in range(n_branches)], in_layout, out_layout)
