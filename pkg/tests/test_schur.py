import itertools
import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avqslab import kernels, schur
from avqslab.qcore import DensityMatrix, DomainError, HilbertLayout, random_psd, random_unitary, relative_entropy
from avqslab.schur import (
    YoungFrame, appendix_constant, appendix_grid_check, band_edges, band_index, character, class_size,
    cycle_type, entropy_band_instrument, entropy_modulus, entropy_modulus_inverse, enumerate_frames,
    irrep_dimension, isotypic_projector, keyl_werner_bound, partitions, permutation_matrix_indices,
    simplex_grid, spectrum_probability,
)

F = YoungFrame


def perm_matrix(perm, d):
    n = d ** len(perm)
    u = np.zeros((n, n))
    u[permutation_matrix_indices(perm, d), np.arange(n)] = 1
    return u


def character_sum_probability(frame, rho):
    """dim/l! sum_perm chi(perm) prod_cycles tr(rho^len): no projector matrix involved."""
    l = frame.size
    powers = {}
    total = 0.0
    for cyc in partitions(l):
        chi = character(frame, cyc)
        term = 1.0
        for c in cyc:
            if c not in powers:
                powers[c] = np.trace(np.linalg.matrix_power(rho, c)).real
            term *= powers[c]
        total += class_size(cyc) * chi * term
    return irrep_dimension(frame) * total / math.factorial(l)


def two_row_schur(frame, x):
    """s_lambda(x1, x2) for distinct x1, x2."""
    a, b = frame.parts[0], frame.parts[1]
    return (x[0] ** (a + 1) * x[1] ** b - x[1] ** (a + 1) * x[0] ** b) / (x[0] - x[1])


@lru_cache(maxsize=None)
def count_standard_tableaux(shape):
    if sum(shape) == 0:
        return 1
    total = 0
    for i, row in enumerate(shape):
        if row and (i + 1 == len(shape) or shape[i + 1] < row):
            total += count_standard_tableaux(shape[:i] + (row - 1,) + shape[i + 1:])
    return total


# -- frames and characters -------------------------------------------------------

def test_enumerate_frames_examples():
    assert enumerate_frames(2, 2) == [F((2, 0)), F((1, 1))]
    assert enumerate_frames(2, 3) == [F((3, 0)), F((2, 1))]
    assert enumerate_frames(3, 4) == [F((4, 0, 0)), F((3, 1, 0)), F((2, 2, 0)), F((2, 1, 1))]


@pytest.mark.parametrize("d,l", [(d, l) for d in (1, 2, 3, 4) for l in range(1, 8)])
def test_frame_count_bound(d, l):
    frames = enumerate_frames(d, l)
    assert len(frames) <= (l + 1) ** d
    assert len(set(frames)) == len(frames)
    assert all(f.size == l and len(f.parts) == d for f in frames)


def test_frame_validation():
    with pytest.raises(DomainError):
        F((1, 2))


def test_character_examples():
    for l in range(1, 6):
        for cyc in partitions(l):
            assert character((l,), cyc) == 1
    assert character((1, 1), (1, 1)) == 1
    assert character((1, 1), (2,)) == -1
    assert character((2, 1), (1, 1, 1)) == 2


@pytest.mark.parametrize("l", range(1, 8))
def test_dimension_matches_tableaux_and_identity_character(l):
    for shape in partitions(l):
        assert irrep_dimension(shape) == count_standard_tableaux(shape)
        assert irrep_dimension(shape) == character(shape, (1,) * l)


@pytest.mark.parametrize("l", range(1, 7))
def test_character_orthogonality(l):
    parts = partitions(l)
    for a, b in itertools.product(parts, repeat=2):
        s = sum(class_size(c) * character(a, c) * character(b, c) for c in parts)
        assert s == (math.factorial(l) if a == b else 0)


def test_sign_character():
    for perm in itertools.permutations(range(4)):
        c = cycle_type(perm)
        sign = (-1) ** sum(x - 1 for x in c)
        assert character((1, 1, 1, 1), c) == sign


# -- projectors --------------------------------------------------------------------

def test_two_copy_projectors():
    sym = isotypic_projector(F((2, 0)), 2)
    anti = isotypic_projector(F((1, 1)), 2)
    swap = perm_matrix((1, 0), 2)
    assert np.allclose(sym.matrix, (np.eye(4) + swap) / 2)
    assert np.allclose(anti.matrix, (np.eye(4) - swap) / 2)
    assert (sym.rank, anti.rank) == (3, 1)


@pytest.mark.parametrize("d,l", [(2, l) for l in range(2, 7)] + [(3, l) for l in range(2, 5)])
def test_projector_algebra(d, l):
    frames = enumerate_frames(d, l)
    ps = [isotypic_projector(f, d).matrix for f in frames]
    assert np.abs(sum(ps) - np.eye(d ** l)).max() <= 1e-9
    for i, p in enumerate(ps):
        assert np.abs(p @ p - p).max() <= 1e-9
        assert np.abs(p - p.conj().T).max() <= 1e-12
        for q in ps[i + 1:]:
            assert np.abs(p @ q).max() <= 1e-9
    rng = np.random.default_rng(d * 10 + l)
    for _ in range(3):
        u = perm_matrix(tuple(rng.permutation(l)), d)
        for p in ps:
            assert np.abs(u @ p - p @ u).max() <= 1e-9


def test_rank_sum_d2_l4():
    ranks = [isotypic_projector(f, 2).rank for f in enumerate_frames(2, 4)]
    assert ranks == [5, 9, 2]
    assert sum(ranks) == 16


def test_projector_rank_is_dim_times_weyl_dimension():
    # dim of the GL(d) irrep via the hook-content formula
    for d, l in [(2, 4), (3, 3), (3, 4)]:
        for f in enumerate_frames(d, l):
            shape = f.shape
            num = den = 1
            for i, row in enumerate(shape):
                for j in range(row):
                    num *= d + j - i
                    cols = sum(1 for r in shape if r > j)
                    den *= (row - j - 1) + (cols - i - 1) + 1
            assert isotypic_projector(f, d).rank == irrep_dimension(f) * num // den


# -- spectrum estimation -------------------------------------------------------------

def test_spectrum_probability_examples():
    assert spectrum_probability(F((2, 0)), np.eye(2) / 2) == pytest.approx(0.75)
    rho = np.diag([2 / 3, 1 / 3])
    assert spectrum_probability(F((2, 0)), rho) == pytest.approx(7 / 9, abs=1e-12)
    val = spectrum_probability(F((1, 1)), rho)
    assert val == pytest.approx(2 / 9, abs=1e-12)
    bound = keyl_werner_bound(F((1, 1)), [2 / 3, 1 / 3])
    assert bound == pytest.approx(3 * 2 ** (-2 * relative_entropy([0.5, 0.5], [2 / 3, 1 / 3])))
    assert val <= bound


def test_spectrum_probability_character_oracle():
    rng = np.random.default_rng(20)
    for d, l in [(2, 3), (2, 5), (3, 3), (3, 4)]:
        rho = random_psd(d, rng)
        for f in enumerate_frames(d, l):
            assert spectrum_probability(f, rho) == pytest.approx(character_sum_probability(f, rho), abs=1e-10)


def test_spectrum_probability_schur_polynomial_oracle():
    rng = np.random.default_rng(21)
    for l in range(2, 7):
        x = np.sort(rng.dirichlet([1, 1]))[::-1]
        for f in enumerate_frames(2, l):
            expect = irrep_dimension(f) * two_row_schur(f, x)
            assert spectrum_probability(f, np.diag(x)) == pytest.approx(expect, abs=1e-12)


def test_spectrum_probability_sums_to_one_and_is_unitarily_invariant():
    rng = np.random.default_rng(22)
    rho = random_psd(3, rng)
    vals = [spectrum_probability(f, rho) for f in enumerate_frames(3, 4)]
    assert sum(vals) == pytest.approx(1, abs=1e-9)
    for _ in range(20):
        u = random_unitary(3, rng)
        rot = [spectrum_probability(f, u @ rho @ u.conj().T) for f in enumerate_frames(3, 4)]
        assert np.abs(np.subtract(vals, rot)).max() <= 1e-9


def test_keyl_werner_bound_random():
    rng = np.random.default_rng(23)
    for l in range(2, 7):
        frames = enumerate_frames(2, l)
        for _ in range(100):
            rho = random_psd(2, rng)
            r = schur.sorted_spectrum(rho)
            for f in frames:
                assert spectrum_probability(f, rho) <= keyl_werner_bound(f, r) + 1e-12


def test_keyl_werner_degenerate_spectrum():
    assert keyl_werner_bound(F((1, 1)), [1.0, 0.0]) == 0.0
    assert spectrum_probability(F((1, 1)), np.diag([1.0, 0.0])) == pytest.approx(0, abs=1e-15)


# -- entropy bands --------------------------------------------------------------------

def test_band_edges():
    assert band_edges(2, 0.5) == (0.0, 0.5, 1.0)
    e = band_edges(3, 0.5)
    assert e[-1] == pytest.approx(math.log2(3)) and len(e) == 5
    assert band_index(0.0, (0, 0.5, 1)) == 1
    assert band_index(0.5, (0, 0.5, 1)) == 1
    assert band_index(0.5000001, (0, 0.5, 1)) == 2
    for bad in (0, 1.5):
        with pytest.raises(DomainError):
            band_edges(2, bad)


def test_band_instrument_classification():
    b = entropy_band_instrument(2, 2, 0.5)
    assert b.bands == ((F((2, 0)),), (F((1, 1)),))
    assert np.allclose(b.projectors[0], isotypic_projector(F((2, 0)), 2).matrix)


@pytest.mark.parametrize("d,l,eta", [(2, 3, 0.25), (2, 4, 0.3), (3, 3, 0.5)])
def test_band_pvm(d, l, eta):
    b = entropy_band_instrument(d, l, eta)
    assert np.abs(sum(b.projectors) - np.eye(d ** l)).max() <= 1e-9
    for i, p in enumerate(b.projectors):
        for q in b.projectors[i + 1:]:
            assert np.abs(p @ q).max() <= 1e-9
    inst = b.as_instrument()
    assert len(inst) == b.n_bands


def test_pure_state_sits_in_first_band():
    for l in range(2, 7):
        b = entropy_band_instrument(2, l, 0.25)
        assert b.masses(np.diag([1.0, 0.0]))[0] == pytest.approx(1, abs=1e-12)


def test_off_band_mass_matches_two_row_oracle():
    rho = np.diag([0.9, 0.1])
    for l in range(2, 7):
        b = entropy_band_instrument(2, l, 0.25)
        i = b.band_of(schur.shannon_entropy([0.9, 0.1]))
        expect = sum(irrep_dimension(f) * two_row_schur(f, (0.9, 0.1)) for f in enumerate_frames(2, l)
                     if abs(band_index(f.entropy(), b.edges) - i) > 1)
        assert b.off_band_mass(rho) == pytest.approx(expect, abs=1e-12)


# -- entropy gap vs divergence constant ---------------------------------------------

def test_modulus_roundtrip_and_monotone():
    for d in (2, 3, 4):
        for eta in (0.05, 0.1, 0.3, 0.5, 0.9):
            eps = entropy_modulus_inverse(eta, d)
            assert entropy_modulus(eps, d) == pytest.approx(eta, abs=1e-9)
        cs = [appendix_constant(eta, d) for eta in np.linspace(0.01, 1.0, 30)]
        assert all(c > 0 for c in cs) and np.all(np.diff(cs) > 0)
    assert appendix_constant(0.1, 2) < appendix_constant(0.5, 2)
    with pytest.raises(DomainError):
        appendix_constant(1.5, 2)


def test_modulus_is_a_valid_continuity_bound():
    rng = np.random.default_rng(24)
    for d in (2, 3, 5):
        for _ in range(500):
            p, q = rng.dirichlet(np.ones(d) * 0.5, size=2)
            gap = abs(schur.shannon_entropy(p) - schur.shannon_entropy(q))
            assert gap <= entropy_modulus(np.abs(p - q).sum(), d) + 1e-12


def brute_force_violations(eta, d, n, threshold):
    counts = simplex_grid(d, n)
    q = counts / n
    h = np.array([schur.shannon_entropy(x) for x in q])
    sorted_p = np.all(np.diff(counts, axis=1) <= 0, axis=1)
    viol, best = 0, math.inf
    for a in np.nonzero(sorted_p)[0]:
        for b in range(len(q)):
            if abs(h[a] - h[b]) >= eta or not (h[b] > h[a] - eta and h[b] < h[a] + eta):
                dv = relative_entropy(q[a], q[b])
                if math.isfinite(dv):
                    best = min(best, dv)
                    viol += dv < threshold
    return viol, best


@pytest.mark.parametrize("backend", ["python", "cython"])
@pytest.mark.parametrize("d,n,eta,thr", [(2, 50, 0.3, 0.2), (3, 20, 0.3, 0.3), (3, 16, 0.1, 0.05)])
def test_pruned_scan_matches_brute_force(backend, d, n, eta, thr):
    if backend == "cython" and kernels.BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    got = appendix_grid_check(eta, d, 1 / n, backend=backend, cell=3, threshold=thr)
    viol, best = brute_force_violations(eta, d, n, thr)
    assert got.violations == viol
    assert viol > 0
    assert got.min_divergence == pytest.approx(best, abs=1e-12)


def test_grid_check_no_violations_coarse():
    for d in (2, 3):
        for eta in (0.1, 0.3, 0.5):
            assert appendix_grid_check(eta, d, 1e-2).violations == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 1), min_size=3, max_size=3), st.lists(st.floats(0.01, 1), min_size=3, max_size=3),
       st.sampled_from([0.1, 0.3, 0.5]))
def test_constant_off_grid(p, q, eta):
    p, q = np.array(p) / sum(p), np.array(q) / sum(q)
    if abs(schur.shannon_entropy(p) - schur.shannon_entropy(q)) >= eta:
        assert relative_entropy(p, q) >= 2 * appendix_constant(eta, 3) - 1e-12
