import math

import numpy as np
import pytest

from qladder import hamiltonian as Hm
from qladder.core import LadderSpec, SectorError
from qladder.scars import first_family_state
from qladder.states import fock_string, make_initial, parse_fock_string, random_fock_state

from . import oracles


def nonzero(state):
    a = state.to_full()
    idx = np.flatnonzero(np.abs(a) > 1e-15)
    return idx, a[idx]


def test_pi_single_configuration():
    spec = LadderSpec(2)
    s = make_initial(spec, "Pi").state
    idx, amp = nonzero(s)
    # u1 = u2 = 1: bits 0 and 2
    assert idx.tolist() == [0b0101] and amp.tolist() == [1.0]
    assert make_initial(spec, "Π").state.amplitudes.tolist() == s.amplitudes.tolist()
    idx, _ = nonzero(make_initial(spec, "Pi'").state)
    assert idx.tolist() == [0b1010]


def test_phi_L_two_amplitudes():
    spec = LadderSpec(3)
    s = make_initial(spec, "phi_L").state
    idx, amp = nonzero(s)
    assert np.allclose(amp, 1 / math.sqrt(2), atol=1e-15) and idx.size == 2
    # doublon-holon pair on rungs 1-2, rung 3 holds u=0, d=1
    ref = (oracles.fock_vector([1, 1, 0, 0, 0, 1]) + oracles.fock_vector([0, 0, 1, 1, 0, 1])) / math.sqrt(2)
    assert np.abs(s.to_full() - ref).max() < 1e-15


def test_phi_J_weights():
    spec = LadderSpec(3)
    c = Hm.CouplingConfig(1.0, [1.0, 2.0], [0.0] * 3)
    s = make_initial(spec, "phi_J", couplings=c).state
    _, amp = nonzero(s)
    assert sorted(amp) == pytest.approx(sorted(np.array([1, 1, 2, 2]) / math.sqrt(10)), abs=1e-15)
    s2 = make_initial(spec, "phi'_J", couplings=c).state
    assert abs(s.vdot(s2)) < 1e-15 and abs(s2.norm - 1) < 1e-14


def test_homogeneous_phi():
    M = 5
    s = make_initial(LadderSpec(M), "phi").state
    _, amp = nonzero(s)
    assert amp.size == 2 * (M - 1)
    assert np.allclose(amp, 1 / math.sqrt(2 * (M - 1)), atol=1e-15)


@pytest.mark.parametrize("kind", ["Pi", "Pi'", "phi_L", "phi", "phi_J", "phi'_J"])
def test_normalized_at_half_filling(kind):
    spec = LadderSpec(4)
    c = Hm.CouplingConfig(1.0, [0.3, 1.1, 2.0], [0.0] * 4)
    s = make_initial(spec, kind, couplings=c).state
    assert abs(s.norm - 1) < 1e-12
    assert s.basis.excitations == 4


@pytest.mark.parametrize("M", [3, 4, 5, 6, 7, 8])
def test_product_state_decomposition(M):
    """Pi' = sum_n sqrt(C(M,n)/2^M) E_n and Pi adds (-1)^(M-n), E_n as plain dimer sums."""
    pi = make_initial(LadderSpec(M), "Pi").state.to_full()
    pip = make_initial(LadderSpec(M), "Pi'").state.to_full()
    ref, refp = 0, 0
    for n in range(M + 1):
        e = oracles.first_family(M, n)
        w = math.sqrt(math.comb(M, n) / 2**M)
        refp = refp + w * e
        ref = ref + (-1) ** (M - n) * w * e
    assert np.abs(pip - refp).max() < 1e-12
    assert np.abs(pi - ref).max() < 1e-12


def test_phi_states_orthogonal_to_first_family():
    spec = LadderSpec(5)
    for kind in ("phi_L", "phi"):
        s = make_initial(spec, kind).state
        for n in range(6):
            assert abs(s.vdot(first_family_state(spec, n).state)) < 1e-15


def test_fock_strings():
    spec = LadderSpec(3)
    s = make_initial(spec, "fock", fock="11|00|10").state
    idx, _ = nonzero(s)
    assert idx.tolist() == [0b010011]
    assert make_initial(spec, "fock", fock="●● ◦◦ •○").state.amplitudes.tolist() == s.amplitudes.tolist()
    assert fock_string(spec, 0b010011) == "11|00|10"
    assert parse_fock_string(LadderSpec(1, 3), "20") == [2, 0]


@pytest.mark.parametrize(
    "text,err",
    [("11|00|1x", "invalid character"), ("11|00", "sites"), ("11|00|20", "exceeds local_dim")],
)
def test_malformed_fock_string(text, err):
    with pytest.raises(ValueError, match=err):
        make_initial(LadderSpec(3), "fock", fock=text)


def test_errors():
    spec = LadderSpec(3)
    with pytest.raises(SectorError):
        make_initial(spec, "fock", fock="11|11|10", excitations=3)
    with pytest.raises(ValueError):
        make_initial(spec, "phi_J")
    with pytest.raises(ValueError):
        make_initial(LadderSpec(2), "phi_L")
    with pytest.raises(ValueError):
        make_initial(spec, "nope")
    with pytest.raises(ValueError):
        make_initial(spec, "phi_J", couplings=Hm.CouplingConfig(1.0, [0.0, 0.0], [0.0] * 3))


def test_random_fock_state_is_reproducible():
    spec = LadderSpec(4)
    a = random_fock_state(spec, np.random.default_rng(5))
    b = random_fock_state(spec, np.random.default_rng(5))
    assert np.array_equal(a.amplitudes, b.amplitudes) and a.norm == 1.0
