import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avqslab.channels import (
    EMPTY, Instrument, InstrumentError, KrausMap, OneWayLocc, apply, complete_kraus, depolarizing_map,
    hat_channel, instrument_outcomes, one_shot_rate, permute_factors, random_channel, random_instrument,
)
from avqslab.qcore import (
    DensityMatrix, HilbertLayout, LayoutError, basis_state, bell_state, coherent_information,
    depolarize_local, partial_trace, random_state, random_unitary, tensor_product, trace_distance,
)

AB = HilbertLayout((2, 2), ("A", "B"))
A2 = HilbertLayout((2,), ("A",))


def classical_pair():
    return DensityMatrix(AB, np.diag([0.5, 0, 0, 0.5]))


def test_kraus_validation():
    with pytest.raises(InstrumentError):
        KrausMap(A2, A2, (np.eye(2) * 1.1,))
    with pytest.raises(LayoutError):
        KrausMap(A2, A2, (np.eye(3),))
    assert KrausMap.identity(A2).is_channel()
    assert not KrausMap(A2, A2, (np.diag([1, 0]),)).is_channel()


def test_identity_channel():
    rng = np.random.default_rng(0)
    rho = random_state((2, 3), ("A", "B"), rng)
    assert np.allclose(apply(KrausMap.identity(A2), rho, "A").entries, rho.entries)


def test_projective_branch():
    p0 = KrausMap(A2, A2, (np.diag([1, 0]),))
    out = apply(p0, DensityMatrix(A2, np.eye(2) / 2))
    assert out.trace == pytest.approx(0.5)
    assert np.allclose(out.entries / out.trace, np.diag([1, 0]))


def test_depolarizing_kraus_matches_formula():
    rng = np.random.default_rng(1)
    for gamma in (0.0, 0.1, 0.37, 1.0):
        rho = random_state((2, 3), ("A", "B"), rng)
        out = apply(depolarizing_map(2, gamma, "A"), rho, "A")
        out = apply(depolarizing_map(3, gamma, "B"), out, "B")
        assert np.abs(out.entries - depolarize_local(rho, gamma).entries).max() <= 1e-10


def test_discard_and_prepare_layouts():
    rho = bell_state()
    out = apply(KrausMap.discard(A2), rho, "A")
    assert out.layout.labels == ("B",)
    prep = KrausMap.prepare([0, 1], HilbertLayout((2,), ("C",)))
    out2 = apply(prep, out, ())
    assert out2.layout.labels == ("B", "C")
    assert np.allclose(partial_trace(out2, "C").entries, np.diag([0, 1]))


def test_instrument_outcomes_examples():
    sigma = random_state((2, 2), ("A", "B"), np.random.default_rng(2))
    (lam, post), = instrument_outcomes(Instrument.trivial(A2), sigma)
    assert lam == pytest.approx(1) and np.allclose(post.entries, sigma.entries)

    out = instrument_outcomes(Instrument.computational(A2), classical_pair())
    assert [round(l, 12) for l, _ in out] == [0.5, 0.5]
    assert np.allclose(out[0][1].entries, basis_state(0, (2, 2), ("A", "B")).entries)
    assert np.allclose(out[1][1].entries, basis_state(3, (2, 2), ("A", "B")).entries)

    plus = np.array([1, 1]) / np.sqrt(2)
    minus = np.array([1, -1]) / np.sqrt(2)
    pm = Instrument.projective([np.outer(plus, plus), np.outer(minus, minus)], A2)
    out = instrument_outcomes(pm, bell_state())
    assert [round(l, 12) for l, _ in out] == [0.5, 0.5]
    for _, post in out:
        assert np.trace(post.entries @ post.entries).real == pytest.approx(1)


def test_zero_weight_branch_is_dropped():
    out = instrument_outcomes(Instrument.computational(A2), basis_state(0, (2, 2), ("A", "B")))
    assert len(out) == 1


def test_one_shot_rate_examples():
    assert one_shot_rate(Instrument.trivial(A2), bell_state()) == pytest.approx(1, abs=1e-12)
    assert one_shot_rate(Instrument.trivial(A2), basis_state(0, (2, 2), ("A", "B"))) == pytest.approx(0, abs=1e-12)
    assert one_shot_rate(Instrument.trivial(A2), classical_pair()) == pytest.approx(0, abs=1e-12)


def test_trivial_instrument_rate_is_coherent_information():
    rng = np.random.default_rng(3)
    for _ in range(10):
        s = random_state((2, 3), ("A", "B"), rng)
        rate = one_shot_rate(Instrument.trivial(HilbertLayout((2,), ("A",))), s)
        assert abs(rate - coherent_information(s, "A", "B")) <= 1e-13


def flagged(inst, sigma, a_on="A"):
    out = apply(hat_channel(inst, a_on), sigma)
    a = inst.out_layout.labels
    return coherent_information(out, a, [x for x in out.layout.labels if x not in a])


def test_hat_channel_single_branch():
    sigma = random_state((2, 2), ("A", "B"), np.random.default_rng(4))
    hat = hat_channel(Instrument.trivial(A2))
    out = apply(hat, sigma)
    assert out.layout.dims[-1] == 1
    assert flagged(Instrument.trivial(A2), sigma) == pytest.approx(coherent_information(sigma, "A", "B"), abs=1e-12)


def test_hat_channel_classical_state():
    inst = Instrument.computational(A2)
    assert flagged(inst, classical_pair()) == pytest.approx(one_shot_rate(inst, classical_pair()), abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_hat_channel_identity_random(seed):
    rng = np.random.default_rng(seed)
    lay = HilbertLayout((2, 2), ("A", "A'"))
    sigma = random_state((2, 2, 2), ("A", "A'", "B"), rng)
    inst = random_instrument(lay, 3, rng)
    assert abs(flagged(inst, sigma, ("A", "A'")) - one_shot_rate(inst, sigma, a_on=("A", "A'"))) <= 1e-9


def test_hat_channel_output_dim_differs():
    rng = np.random.default_rng(5)
    out_lay = HilbertLayout((3,), ("A",))
    inst = random_instrument(A2, 2, rng, out_lay)
    sigma = random_state((2, 2), ("A", "B"), rng)
    assert flagged(inst, sigma) == pytest.approx(one_shot_rate(inst, sigma), abs=1e-9)


def test_locc_is_channel():
    rng = np.random.default_rng(6)
    b = HilbertLayout((2,), ("B",))
    for _ in range(50):
        inst = random_instrument(A2, 2, rng)
        locc = OneWayLocc(inst, [random_channel(b, b, rng) for _ in range(2)])
        rho = random_state((2, 2), ("A", "B"), rng)
        assert apply(locc, rho).trace == pytest.approx(1, abs=1e-9)


def test_locc_branch_mismatch():
    with pytest.raises(InstrumentError):
        OneWayLocc(Instrument.computational(A2), [KrausMap.identity(HilbertLayout((2,), ("B",)))])


def test_complete_kraus():
    rng = np.random.default_rng(7)
    g = [rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)) for _ in range(4)]
    k = complete_kraus(g)
    assert np.abs(sum(x.conj().T @ x for x in k) - np.eye(3)).max() <= 1e-10


def test_instrument_json_roundtrip():
    inst = random_instrument(A2, 3, np.random.default_rng(8))
    back = Instrument.from_json(inst.to_json())
    assert len(back) == 3
    for a, b in zip(inst.branches, back.branches):
        assert np.array_equal(a.kraus[0], b.kraus[0])


# -- permutations -------------------------------------------------------------

def family(rng, n=3):
    return [random_state((2, 2), ("A", "B"), rng) for _ in range(n)]


def test_permute_identity_and_swap():
    rng = np.random.default_rng(9)
    r = family(rng, 2)
    rho = tensor_product(r)
    assert np.allclose(permute_factors(rho, (0, 1)).entries, rho.entries)
    assert np.abs(permute_factors(rho, (1, 0)).entries - tensor_product([r[1], r[0]]).entries).max() <= 1e-12


def test_permute_three_cycle():
    rng = np.random.default_rng(10)
    r = family(rng)
    perm = (2, 0, 1)
    out = permute_factors(tensor_product(r), perm)
    assert np.abs(out.entries - tensor_product([r[2], r[0], r[1]]).entries).max() <= 1e-12


def test_permutation_group_action():
    rng = np.random.default_rng(11)
    rho = tensor_product(family(rng))
    for s, t in itertools.product(itertools.permutations(range(3)), repeat=2):
        composed = tuple(s[t[i]] for i in range(3))
        lhs = permute_factors(permute_factors(rho, s), t)
        assert np.abs(lhs.entries - permute_factors(rho, composed).entries).max() <= 1e-12


def test_permute_rejects_non_product():
    with pytest.raises(LayoutError):
        permute_factors(bell_state(), (0,))


def test_unitary_conjugation():
    rng = np.random.default_rng(12)
    u = random_unitary(2, rng)
    rho = bell_state()
    out = apply(KrausMap.unitary(u, A2), rho, "A")
    assert trace_distance(partial_trace(out, "B"), partial_trace(rho, "B")) <= 1e-12
