import numpy as np
import pytest

import oracles
from otoclab.evolve import Propagator, dense_hamiltonian
from otoclab.operators import PauliString, rng_stream, sample_haar_state
from otoclab.system import (CavitySpec, DisorderRealization, Geometry, SystemSpec, build_cavity_hamiltonians,
                            build_coupling_hamiltonian, build_field_hamiltonian, chain, crossed_chains,
                            load_geometry, make_system, probe_path, ring, sample_disorder, save_geometry,
                            three_way, weak_link_ring)


def spec_with_fields(h, geometry=None):
    geometry = geometry or chain(len(h))
    dis = DisorderRealization(np.asarray(h, float), {e: 1.0 for e in geometry.edges})
    return SystemSpec(geometry, dis)


def test_single_site_field():
    terms = build_field_hamiltonian(spec_with_fields([[0, 0, 1]])).terms
    assert terms == ((1.0, PauliString.single(0, "Z")),)


def test_zero_field_is_empty_and_trivial():
    spec = spec_with_fields(np.zeros((3, 3)))
    assert build_field_hamiltonian(spec).terms == ()
    psi = sample_haar_state(3, 0)
    out = Propagator(spec, "krylov").evolve(psi, 0, 0.5)
    assert np.allclose(out, psi, atol=1e-14)


def test_field_matches_dense_oracle():
    spec = make_system(chain(2), 4)
    ref = oracles.field_matrix(spec)
    assert np.abs(dense_hamiltonian(build_field_hamiltonian(spec)) - ref).max() < 1e-14


def test_coupling_pattern_and_oracle():
    spec = spec_with_fields(np.zeros((2, 3)))
    terms = {str(p): w for w, p in build_coupling_hamiltonian(spec).terms}
    assert terms == {"X0 X1": 1.0, "Y0 Y1": 1.0, "Z0 Z1": -2.0}
    spec = make_system(chain(3), 8)
    ref = oracles.coupling_matrix(spec)
    assert np.abs(dense_hamiltonian(build_coupling_hamiltonian(spec)) - ref).max() < 1e-14


def test_zero_weak_link_cuts_the_ring():
    geo = weak_link_ring(6)
    spec = make_system(geo, 3, weak_link=0.0)
    sites = {s for _, p in build_coupling_hamiltonian(spec).terms for s in p.support}
    pairs = {p.support for _, p in build_coupling_hamiltonian(spec).terms}
    assert geo.weak_link not in pairs and sites == set(range(6))
    cut = Geometry(6, tuple(e for e in geo.edges if e != geo.weak_link), probe=None)
    cut_spec = SystemSpec(cut, DisorderRealization(spec.disorder.fields,
                                                   {e: spec.disorder.couplings[e] for e in cut.edges}))
    a = np.linalg.eigvalsh(dense_hamiltonian(build_coupling_hamiltonian(spec)))
    b = np.linalg.eigvalsh(dense_hamiltonian(build_coupling_hamiltonian(cut_spec)))
    assert np.allclose(a, b, atol=1e-12)


def test_cavity_terms_and_oracle():
    spec = make_system(chain(3), 2, cavity=CavitySpec(0.25))
    h1, h2 = build_cavity_hamiltonians(spec)
    assert h1.cavity.omega == 1.7 and h1.cavity.g == 0.25 and h1.cavity.dim == 4
    hf, hc = oracles.spin_parts(spec)
    cav = oracles.cavity_matrix(spec)
    assert np.abs(dense_hamiltonian(h1) - (hf + cav)).max() < 1e-13
    assert np.abs(dense_hamiltonian(h2) - (hc + cav)).max() < 1e-13
    b1, _ = build_cavity_hamiltonians(spec, "backward")
    assert np.abs(dense_hamiltonian(b1) - (-hf + cav)).max() < 1e-13


def test_cavity_requires_config():
    with pytest.raises(ValueError):
        build_cavity_hamiltonians(make_system(chain(2), 0))


def test_excitation_number_commutes_with_cavity_coupling():
    spec = make_system(chain(4), 6, cavity=CavitySpec(0.25))
    _, h2 = build_cavity_hamiltonians(spec)
    h = dense_hamiltonian(h2)
    m = spec.cavity_dim
    n_op = sum(np.kron((np.eye(16) - oracles.site_op(oracles.Z, i, 4)) / 2, np.eye(m)) for i in range(4))
    n_op = n_op + np.kron(np.eye(16), np.diag(np.arange(m)))
    rng = rng_stream(1)
    for _ in range(20):
        psi = rng.standard_normal(h.shape[0]) + 1j * rng.standard_normal(h.shape[0])
        psi /= np.linalg.norm(psi)
        assert np.linalg.norm(h @ n_op @ psi - n_op @ h @ psi) < 1e-12


def test_excitation_number_conserved_in_time():
    # the coupling drive conserves it exactly; fields do not, so test H_2 alone
    spec = make_system(chain(4), 6, cavity=CavitySpec(0.25))
    spec = SystemSpec(spec.geometry, DisorderRealization(np.zeros((4, 3)), spec.disorder.couplings),
                      cavity=spec.cavity)
    m = spec.cavity_dim
    number = np.add.outer([bin(b).count("1") for b in range(16)], np.arange(m)).ravel()
    psi = sample_haar_state(4, 3)
    state = np.kron(psi, np.eye(m)[0])
    out = Propagator(spec).evolve(state, 0, 12)
    assert abs(np.vdot(out, number * out).real - np.vdot(state, number * state).real) < 1e-10


def test_disorder_ranges_and_determinism():
    geo = chain(2)
    j = np.array([sample_disorder(geo, None, 1, k).coupling((0, 1)) for k in range(10_000)])
    assert j.min() >= 0.6 and j.max() <= 1.4 and abs(j.mean() - 1) < 0.01
    h = np.concatenate([sample_disorder(geo, None, 2, k).fields.ravel() for k in range(2_000)])
    assert h.min() >= -1 and h.max() <= 1 and abs(h.mean()) < 0.02
    a, b = sample_disorder(ring(5), None, 3, 4), sample_disorder(ring(5), None, 3, 4)
    assert np.array_equal(a.fields, b.fields) and a.couplings == b.couplings


def test_hamiltonians_are_hermitian():
    spec = make_system(crossed_chains(7, 2), 0)
    for h in (build_field_hamiltonian(spec), build_coupling_hamiltonian(spec)):
        assert all(np.isreal(w) and p.is_hermitian for w, p in h.terms)
        m = dense_hamiltonian(h)
        assert np.allclose(m, m.conj().T)


@pytest.mark.parametrize("d", range(0, 6))
def test_crossed_chain_distance(d):
    geo = crossed_chains(10, d)
    assert geo.distances(geo.probe)[d] == d
    assert geo.degree(d) == 4
    assert len(geo.edges) == 9


def test_three_way_share_probe_side():
    geos = [three_way(14, 4, w) for w in "ABC"]
    for g in geos:
        assert [tuple(e) for e in g.edges if max(e) <= 4][:4] == [(0, 1), (1, 2), (2, 3), (3, 4)]
    assert len({g.edges for g in geos}) == 3
    assert geos[1].degree(4) == 3 and geos[2].degree(4) == 3


def test_geometry_validation():
    with pytest.raises(ValueError):
        Geometry(3, ((0, 0),))
    with pytest.raises(ValueError):
        Geometry(3, ((0, 1),))  # disconnected
    with pytest.raises(ValueError):
        Geometry(2, ((0, 2),))
    with pytest.raises(ValueError):
        Geometry(3, ((0, 1), (1, 2)), weak_link=(0, 2))


def test_weak_link_ring_has_one_link():
    geo = weak_link_ring(10)
    assert geo.weak_link == (4, 5) and len(geo.edges) == 10
    left, right = geo.sites_near_link(2)
    assert left == [4, 3, 2] and right == [5, 6, 7]


def test_geometry_round_trip(tmp_path):
    for geo in (crossed_chains(8, 3), weak_link_ring(6, probe=1), three_way(10, 2, "C")):
        save_geometry(geo, tmp_path / "g.yaml")
        assert load_geometry(tmp_path / "g.yaml") == geo
    with pytest.raises(ValueError):
        Geometry.from_dict({"format": "other"})


def test_with_coupling_and_probe_path():
    spec = make_system(chain(5), 1)
    path = probe_path(spec.geometry, 3)
    assert path == [(0, 1), (1, 2), (2, 3)]
    moved = spec.with_coupling((2, 3), 0.123)
    assert moved.coupling((2, 3)) == 0.123 and moved.coupling((0, 1)) == spec.coupling((0, 1))
    link = make_system(weak_link_ring(6), 1, weak_link=0.1)
    assert link.with_coupling((2, 3), 0.5).coupling((2, 3)) == 0.5


def test_cavity_cutoff_bound():
    with pytest.raises(ValueError):
        make_system(chain(3), 0, cavity=CavitySpec(0.2, cutoff=4))
    with pytest.warns(UserWarning):
        make_system(chain(3), 0, cavity=CavitySpec(0.2, cutoff=2))
