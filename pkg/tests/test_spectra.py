import math

import numpy as np
import pytest
from scipy import integrate

from qladder import basis as B
from qladder import hamiltonian as Hm
from qladder import spectra as S
from qladder.core import LadderSpec, SectorError, StateVector
from qladder.scars import first_family_entanglement_spectrum, first_family_state, second_family_state
from qladder.states import make_initial, random_fock_state

from . import oracles


def draw(M, rng, J_a=4.0):
    return Hm.CouplingConfig(J_a, rng.uniform(4, 4.5, M - 1), rng.uniform(0.5, 1.5, M))


# ---------------------------------------------------------------------------
# diagonalization
# ---------------------------------------------------------------------------


def test_single_rung_spectrum():
    J_a, w = 3.0, 0.4
    H = Hm.build_ideal(LadderSpec(1), Hm.CouplingConfig(J_a, [], [w]), B.enumerate_full(LadderSpec(1)))
    es = S.diagonalize_sector(H)
    assert es.energies == pytest.approx(sorted([-2 * w, -J_a, J_a, 2 * w]), abs=1e-14)


def test_q0_spectrum_symmetric():
    spec = LadderSpec(6)
    H = Hm.build_ideal(spec, draw(6, np.random.default_rng(0)), B.enumerate_dimer_sector(spec, 6, 0))
    E = S.diagonalize_sector(H, with_vectors=False).energies
    assert np.abs(E + E[::-1]).max() < 1e-9


def test_eigensystem_invariants_and_reconstruction():
    spec = LadderSpec(6)
    H = Hm.build_ideal(spec, draw(6, np.random.default_rng(1)))
    es = S.diagonalize_sector(H)
    nrm = np.linalg.norm(H.toarray(), 2)
    assert np.all(np.diff(es.energies) >= 0)
    assert es.residual < 1e-8 * nrm
    V = es.vectors
    assert np.abs(V @ np.diag(es.energies) @ V.conj().T - H.toarray()).max() < 1e-8 * nrm
    again = S.diagonalize_sector(H)
    assert np.array_equal(again.energies, es.energies)
    assert es.descriptor == H.basis.describe()


def test_complex_hamiltonian_vectors():
    """The Fortran-view shortcut conjugates H; eigenvectors must be conjugated back."""
    from qladder.core import SparseOperator
    import scipy.sparse as sp

    rng = np.random.default_rng(2)
    sec = B.half_filling(LadderSpec(3))
    a = rng.normal(size=(sec.dim, sec.dim)) + 1j * rng.normal(size=(sec.dim, sec.dim))
    H = SparseOperator(sec, sp.csr_matrix(a + a.conj().T))
    es = S.diagonalize_sector(H)
    assert es.residual < 1e-10


def test_energy_window():
    spec = LadderSpec(5)
    H = Hm.build_ideal(spec, draw(5, np.random.default_rng(3)))
    full = S.diagonalize_sector(H)
    part = S.diagonalize_sector(H, energy_window=(-2.0, 4.0))
    sel = full.energies[(full.energies > -2.0) & (full.energies <= 4.0)]
    assert np.abs(part.energies - sel).max() < 1e-10
    assert part.residual < 1e-9


def test_cap_exceeded_points_to_charge():
    spec = LadderSpec(4)
    H = Hm.build_ideal(spec, Hm.CouplingConfig.uniform(4, 1.0, 1.0))
    with pytest.raises(SectorError, match="charge"):
        S.diagonalize_sector(H, cap=10)
    with pytest.raises(SectorError):
        S.diagonalize_sector(H, sector=B.enumerate_sector(spec, 3))


def test_scar_energies_in_charge_sectors():
    M = 6
    spec = LadderSpec(M)
    c = draw(M, np.random.default_rng(4))
    ff = sf = 0
    for n in range(M + 1):
        sec = B.enumerate_dimer_sector(spec, M, 2 * n - M)
        E = S.diagonalize_sector(Hm.build_ideal(spec, c, sec), with_vectors=False).energies
        hits = np.count_nonzero(np.abs(E - c.J_a * (2 * n - M)) < 1e-8)
        expected = 1 if n in (0, M) else 2
        assert hits == expected, n
        ff += 1
        sf += hits - 1
    assert (ff, sf) == (M + 1, M - 1)


def test_charge_is_conserved_away_from_half_filling():
    spec = LadderSpec(4)
    c = draw(4, np.random.default_rng(5))
    sec = B.enumerate_sector(spec, 3)
    H = Hm.build_ideal(spec, c, sec)
    Q = B.build_charge_operator(spec, sec)
    Hd, Qd = H.toarray(), Q.toarray()
    assert np.abs(Hd @ Qd - Qd @ Hd).max() < 1e-12
    dims = B.charge_sector_dims(spec, 3)
    assert sum(dims.values()) == sec.dim


# ---------------------------------------------------------------------------
# level statistics
# ---------------------------------------------------------------------------


def test_r_equidistant_and_errors():
    r_mean, r = S.level_spacing_ratio(np.arange(50.0))
    assert r_mean == 1.0 and np.all(r == 1.0)
    with pytest.raises(ValueError):
        S.level_spacing_ratio([0.0, 1.0])


def test_r_poisson_and_goe():
    rng = np.random.default_rng(6)
    r_mean, _ = S.level_spacing_ratio(oracles.poisson_spectrum(100_000, rng))
    assert abs(r_mean - (2 * math.log(2) - 1)) < 0.01
    rs = [S.level_spacing_ratio(oracles.goe_spectrum(300, rng)[50:250])[0] for _ in range(20)]
    assert abs(np.mean(rs) - S.GOE_R) < 0.02


def test_r_affine_invariance_and_pruning():
    rng = np.random.default_rng(7)
    e = oracles.goe_spectrum(200, rng)
    a, _ = S.level_spacing_ratio(e)
    b, _ = S.level_spacing_ratio(-3.7 * e + 11.0)
    assert a == pytest.approx(b, abs=1e-12)
    dup = np.sort(np.concatenate([e, e[::7]]))
    assert S.level_spacing_ratio(dup)[0] == pytest.approx(a, abs=1e-12)
    assert S.prune_degeneracies(dup).size == e.size


def test_surmise_properties():
    assert S.wigner_surmise(0.0) == 0.0
    val, _ = integrate.quad(lambda s: float(S.wigner_surmise(s)), 0, np.inf)
    assert abs(val - 1) < 1e-6
    assert float(S.wigner_cdf(50.0)) == 1.0


def test_goe_passes_chi_square():
    rng = np.random.default_rng(8)
    spectra = [oracles.goe_spectrum(400, rng) for _ in range(20)]
    h = S.spacing_histogram(spectra, mode="unfold")
    assert h.p_value > 0.01 and h.n_spacings == 20 * 399
    # raw spacings are only comparable where the density is flat
    h = S.spacing_histogram([e[100:300] for e in spectra], mode="raw")
    assert h.p_value > 0.01
    assert np.abs(h.surmise - S.wigner_surmise(h.centers)).max() == 0.0
    width = h.edges[1] - h.edges[0]
    assert h.density.sum() * width <= 1.0 + 1e-12


def test_poisson_fails_chi_square():
    rng = np.random.default_rng(9)
    h = S.spacing_histogram(oracles.poisson_spectrum(20000, rng))
    assert h.p_value < 1e-6
    with pytest.raises(ValueError):
        S.normalized_spacings(np.arange(10.0), mode="smooth")


# ---------------------------------------------------------------------------
# degeneracy handling
# ---------------------------------------------------------------------------


def test_degenerate_clusters():
    assert S.degenerate_clusters(np.array([0.0, 1.0, 1.0 + 1e-12, 2.0, 3.0, 3.0, 3.0]), 1e-9) == [(1, 3), (4, 7)]
    assert S.degenerate_clusters(np.array([0.0, 1.0]), 1e-9) == []


def test_resolve_separates_scar_families():
    M = 6
    spec = LadderSpec(M)
    c = draw(M, np.random.default_rng(10))
    sec = B.enumerate_dimer_sector(spec, M, 0)
    es = S.diagonalize_sector(Hm.build_ideal(spec, c, sec))
    rs = S.resolve_degeneracies(es, S.doublon_holon_count(sec))
    i = int(np.argmin(np.abs(rs.energies)))
    cluster = [k for k in range(rs.energies.size) if abs(rs.energies[k]) < 1e-8]
    assert len(cluster) == 2
    labels = rs.meta["resolved_labels"][cluster]
    fock, vecs = S.fock_vectors(rs)
    e3 = first_family_state(spec, M // 2).state
    e3p = second_family_state(spec, c, M // 2).state
    k0 = cluster[int(np.argmin(labels))]
    k1 = cluster[int(np.argmax(labels))]
    assert abs(abs(np.vdot(vecs[:, k0], e3.amplitudes)) - 1) < 1e-10
    assert abs(abs(np.vdot(vecs[:, k1], e3p.amplitudes)) - 1) < 1e-10
    assert i in cluster and np.isnan(rs.meta["resolved_labels"][0])
    with pytest.raises(SectorError):
        S.doublon_holon_count(B.half_filling(spec))


# ---------------------------------------------------------------------------
# entropy scans and overlap maps
# ---------------------------------------------------------------------------


def test_entropy_scan_scar_rows():
    M = 6
    spec = LadderSpec(M)
    c = draw(M, np.random.default_rng(11))
    perp = B.subsystem_partition(spec, "perpendicular")
    par = B.subsystem_partition(spec, "parallel")
    analytic = first_family_entanglement_spectrum(M // 2).entropy
    sec = B.enumerate_dimer_sector(spec, M, 0)
    es = S.resolve_degeneracies(S.diagonalize_sector(Hm.build_ideal(spec, c, sec)), S.doublon_holon_count(sec))
    table, meta = S.eigenstate_entropy_scan(es, perp)
    assert meta["page"] == pytest.approx((2 * M * math.log(2) - 1) / 2)
    assert meta["max_parallel"] == pytest.approx(M * math.log(2))
    assert len(table) == sec.dim
    zero = np.flatnonzero(np.abs(table.energy) < 1e-8)
    scar = zero[np.argmin(es.meta["resolved_labels"][zero])]
    assert abs(table.entropy[scar] - analytic) < 1e-8
    for q in (-M, M):
        sq = B.enumerate_dimer_sector(spec, M, q)
        t, _ = S.eigenstate_entropy_scan(S.diagonalize_sector(Hm.build_ideal(spec, c, sq)), par)
        assert len(t) == 1 and abs(t.entropy[0] - M * math.log(2)) < 1e-8


def test_overlap_map_pi():
    M = 5
    spec = LadderSpec(M)
    c = draw(M, np.random.default_rng(12))
    es = S.diagonalize_sector(Hm.build_ideal(spec, c))
    om = S.overlap_map(es, make_initial(spec, "Pi").state, merge_tol=1e-8)
    assert abs(om.overlap.sum() - 1) < 1e-10
    big = om[om.overlap > 1e-12]
    assert np.abs(big.energy - c.J_a * (2 * np.arange(M + 1) - M)).max() < 1e-9
    assert np.abs(big.overlap - np.array([math.comb(M, n) for n in range(M + 1)]) / 2**M).max() < 1e-10


def test_overlap_map_phi_L_misses_first_family():
    M = 5
    spec = LadderSpec(M)
    c = draw(M, np.random.default_rng(13))
    ff = [first_family_state(spec, n).state for n in range(M + 1)]
    phi = make_initial(spec, "phi_L").state
    total = 0.0
    for q in range(-M, M + 1, 2):
        sec = B.enumerate_dimer_sector(spec, M, q)
        es = S.resolve_degeneracies(S.diagonalize_sector(Hm.build_ideal(spec, c, sec)), S.doublon_holon_count(sec))
        om = S.overlap_map(es, phi)
        total += om.overlap.sum()
        fock, vecs = S.fock_vectors(es)
        n = (q + M) // 2
        k = int(np.argmax([abs(np.vdot(vecs[:, j], ff[n].amplitudes)) for j in range(vecs.shape[1])]))
        assert om.overlap[k] < 1e-25
    assert abs(total - 1) < 1e-10


def test_overlap_map_random_fock_spread():
    M = 7
    spec = LadderSpec(M)
    es = S.diagonalize_sector(Hm.build_ideal(spec, draw(M, np.random.default_rng(14))))
    om = S.overlap_map(es, random_fock_state(spec, np.random.default_rng(0)))
    assert abs(om.overlap.sum() - 1) < 1e-10
    assert om.overlap.max() < 0.1
    with pytest.raises(ValueError):
        S.overlap_map(S.EigenSystem(es.basis, es.energies), random_fock_state(spec, np.random.default_rng(0)))


@pytest.mark.slow
def test_no_low_entropy_states_away_from_half_filling():
    M, exc = 9, 7
    spec = LadderSpec(M)
    c = draw(M, np.random.default_rng(15))
    q = B.largest_charge_sector(spec, exc)
    sec = B.enumerate_dimer_sector(spec, exc, q)
    es = S.diagonalize_sector(Hm.build_ideal(spec, c, sec))
    table, meta = S.eigenstate_entropy_scan(es, B.subsystem_partition(spec, "perpendicular"))
    bulk = np.abs(table.energy) < M * abs(c.J_a)
    assert bulk.sum() > 0
    assert table.entropy[bulk].min() > 0.2 * meta["page"]
