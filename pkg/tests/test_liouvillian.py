import math

import numpy as np
import pytest

from conftest import random_density
from dualrail.dynamics import steady_state
from dualrail.entanglement import pair_concurrence
from dualrail.errors import DimensionMismatch, ModelError, ResourceGuardError, TruncationError
from dualrail.hilbert import HilbertSpace, QOperator, QState, embed, mode, qubit
from dualrail.liouvillian import (
    SectorLayout,
    Superoperator,
    build_bidirectional_me,
    build_effective_me,
    build_full_me,
    build_generator,
    cascade,
    check_truncation,
    default_n_max,
    dissipator,
    gap_closed_form,
    gap_crossover,
    hamiltonian,
    spectral_gap,
    top_fock_population,
)
from dualrail.network import NetworkSpec, Permutation, gain_from_squeezing, hopping_hamiltonian, sigma_minus
from dualrail.states import bell_pair

ONE = HilbertSpace((qubit("A", 1),), (2,))


def test_dissipator_two_level_decay():
    c = QOperator(ONE, np.array([[0, 1], [0, 0]]))
    out = dissipator(c).apply(np.diag([0, 1]).astype(complex))
    assert np.allclose(out, np.diag([1, -1]))


def test_dissipator_identity_jump(rng):
    sp = HilbertSpace.network(1)
    rho = random_density(4, rng)
    assert np.allclose(dissipator(QOperator.identity(sp)).apply(rho), 0, atol=1e-15)


def test_cascade_space_mismatch():
    with pytest.raises(DimensionMismatch):
        cascade(QOperator.identity(ONE), QOperator.identity(HilbertSpace.network(1)))


@pytest.mark.parametrize("n", [2, 3])
def test_cascade_identity_collective_form(n, rng):
    # sum_i D[c_i] + sum_{j>i} T[c_i, c_j] = D[sum c] - i[H_hop, .]
    sp = HilbertSpace(tuple(qubit("A", i) for i in range(1, n + 1)), (2,) * n)
    ops = [embed(np.array([[0, 1], [0, 0]]), qubit("A", i), sp) for i in range(1, n + 1)]
    local = [dissipator(o) for o in ops]
    local += [cascade(ops[i], ops[j]) for i in range(n) for j in range(i + 1, n)]
    collective = sum(ops[1:], ops[0])
    h = hopping_hamiltonian(ops, np.ones((n, n)))
    lhs = Superoperator(sp, local)
    rhs = Superoperator(sp, [dissipator(collective), hamiltonian(h)])
    for _ in range(20):
        g = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
        rho = g + g.conj().T
        assert np.max(np.abs(lhs.apply_terms(rho) - rhs.apply_terms(rho))) <= 1e-10


def _small_generators():
    rng = np.random.default_rng(7)
    return {
        "effective": build_effective_me(
            NetworkSpec(N=2, r=0.9, delta_A=(0.3, -0.7), permutation=Permutation((2, 1)),
                        gamma_phi=0.05, gamma_prime=0.02)
        ),
        "lossy_effective": build_effective_me(
            NetworkSpec(N=2, r=0.6, delta_A=(0.5, 0.1), gamma_A=(1.0, 0.7), gamma_B=(0.8, 1.2),
                        epsilon_A=0.1, epsilon_B=0.05, gamma_phi=0.03, model="lossy_effective")
        ),
        "bidirectional": build_bidirectional_me(
            NetworkSpec(N=2, r=1.0, delta_A=(0.0, 1.0), gamma_L=0.3, gamma_phi=0.05, model="bidirectional")
        ),
        "full": build_full_me(
            NetworkSpec(N=1, r=0.8, kappa_A=5.0, kappa_B=3.0, delta_A=(float(rng.uniform(-1, 1)),),
                        gamma_phi=0.02, n_max=3, model="full")
        ),
    }


GENERATORS = _small_generators()


@pytest.mark.parametrize("name", sorted(GENERATORS))
def test_trace_and_hermiticity_property_suite(name):
    L = GENERATORS[name]
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    for _ in range(50):
        rho = random_density(L.dim, rng)
        out = L.apply(rho)
        assert abs(np.trace(out)) <= 1e-10
        assert np.max(np.abs(out - out.conj().T)) <= 1e-10


@pytest.mark.parametrize("name", sorted(GENERATORS))
def test_compiled_form_matches_terms(name, rng):
    L = GENERATORS[name]
    for _ in range(5):
        rho = random_density(L.dim, rng)
        assert np.allclose(L.apply(rho), L.apply_terms(rho), atol=1e-12)
        x = rng.normal(size=(L.dim, L.dim)) + 1j * rng.normal(size=(L.dim, L.dim))
        assert np.allclose(L.apply(x), L.apply_terms(x), atol=1e-11)


def test_dense_matrix_column_stacking(rng):
    L = GENERATORS["effective"]
    rho = random_density(L.dim, rng)
    vec = L.matrix() @ rho.ravel(order="F")
    assert np.allclose(vec.reshape(L.dim, L.dim, order="F"), L.apply(rho), atol=1e-12)


def test_dense_matrix_guard():
    with pytest.raises(ResourceGuardError):
        build_effective_me(NetworkSpec(N=4, r=1.0)).matrix()


@pytest.mark.parametrize("name", sorted(GENERATORS))
def test_sector_matrix_matches_apply(name, rng):
    L = GENERATORS[name]
    lay = L.layout
    rho = lay.unpack(lay.pack(random_density(L.dim, rng)))
    assert np.allclose(lay.unpack(L.sector_matrix @ lay.pack(rho)), L.apply(rho), atol=1e-12)
    full = L.full_sparse_matrix @ rho.ravel(order="F")
    assert np.allclose(full.reshape(L.dim, L.dim, order="F"), L.apply(rho), atol=1e-12)


def test_sector_layout_roundtrip(rng):
    q = np.array([0, 1, -1, 0, 2, 1])
    lay = SectorLayout(6, q)
    assert lay.size == 4 + 4 + 1 + 1
    rho = random_density(6, rng)
    rho[q[:, None] != q[None, :]] = 0
    x = lay.pack(rho)
    assert np.allclose(lay.unpack(x), rho)
    assert lay.trace(x) == pytest.approx(np.trace(rho))
    assert lay.purity(x) == pytest.approx(np.vdot(rho, rho).real)
    assert np.allclose(lay.hermitize(x), x)
    assert lay.min_eigenvalue(x) == pytest.approx(np.linalg.eigvalsh(rho)[0])


def test_effective_steady_examples():
    L0 = build_effective_me(NetworkSpec(N=1, r=0.0))
    rho = steady_state(L0)
    assert rho.dm()[0, 0].real == pytest.approx(1.0, abs=1e-10)
    L1 = build_effective_me(NetworkSpec(N=1, r=1.0))
    assert np.max(np.abs(L1.apply(bell_pair(1.0).dm()))) <= 1e-10


def test_full_modes_only_vacuum_without_gain():
    L = build_full_me(NetworkSpec(N=0, g=0.0, kappa_A=1.0, kappa_B=1.0, n_max=4, model="full"))
    rho = steady_state(L).dm()
    assert rho[0, 0].real == pytest.approx(1.0, abs=1e-9)


def test_full_modes_only_thermal_occupancy():
    kap, g = 1.0, 0.2
    L = build_full_me(NetworkSpec(N=0, g=g, kappa_A=kap, kappa_B=kap, n_max=20, model="full"))
    rho = steady_state(L, "residual_iter")
    na = embed(np.diag(np.arange(21.0)), mode("A"), L.space).dense()
    occ = np.trace(na @ rho.dm()).real
    nbar = 2 * g * g / (kap * kap - 4 * g * g)
    assert occ == pytest.approx(nbar, rel=1e-2)
    assert top_fock_population(rho, L.space) < 1e-12


def test_bidirectional_chiral_limit_equals_effective(rng):
    kw = dict(N=2, r=0.7, delta_A=(0.2, 1.1), gamma_phi=0.04)
    Lb = build_bidirectional_me(NetworkSpec(model="bidirectional", **kw))
    Le = build_effective_me(NetworkSpec(**kw))
    for _ in range(10):
        rho = random_density(Lb.dim, rng)
        assert np.max(np.abs(Lb.apply(rho) - Le.apply(rho))) <= 1e-12


def test_bidirectional_symmetric_has_no_hopping():
    s = NetworkSpec(N=2, r=1.0, gamma_L=1.0, gamma_R=1.0, model="bidirectional")
    L = build_bidirectional_me(s)
    h = [t for t in L.terms if t.kind == "hamiltonian"][0]
    assert np.allclose(h.ops[0].dense(), 0)


def test_bidirectional_degrades_pair():
    ideal = steady_state(build_generator(NetworkSpec(N=1, r=1.0)))
    leaky = steady_state(build_generator(NetworkSpec(N=1, r=1.0, gamma_L=0.01, model="bidirectional")))
    assert pair_concurrence(leaky, 1, 1) < pair_concurrence(ideal, 1, 1)


def test_wrong_model_requests():
    with pytest.raises(ModelError):
        build_full_me(NetworkSpec(N=1, r=1.0))
    with pytest.raises(ModelError):
        build_bidirectional_me(NetworkSpec(N=1, r=1.0))


@pytest.mark.parametrize("r,expected", [(0.2, math.cosh(0.4) / 2), (1.0, (6 * math.cosh(2) - math.sqrt(18 * math.cosh(4) - 14)) / 4)])
def test_gap_examples(r, expected):
    ev = spectral_gap(build_effective_me(NetworkSpec(N=1, r=r)), 2)
    assert abs(ev[0]) <= 1e-10
    assert abs(ev[1].real) == pytest.approx(expected, rel=1e-9)
    assert gap_closed_form(r) == pytest.approx(expected)


def test_gap_value_at_weak_squeezing():
    assert gap_closed_form(0.2) == pytest.approx(0.5405362, abs=1e-7)


@pytest.mark.parametrize("r", [0.1, 0.5, 1.0])
def test_unique_zero_mode(r):
    ev = spectral_gap(build_effective_me(NetworkSpec(N=1, r=r)), 16)
    assert np.sum(np.abs(ev) <= 1e-10) == 1


def test_gap_crossover():
    assert 0.35 <= gap_crossover() <= 0.36


def test_default_n_max_and_truncation():
    s = NetworkSpec(N=1, r=1.0, kappa_A=10.0, kappa_B=10.0)
    n = default_n_max(s)
    g = gain_from_squeezing(1.0, 10.0, 10.0)
    nbar = 2 * g * g / (100 - 4 * g * g)
    x = nbar / (1 + nbar)
    assert x ** (n + 1) < 1e-6 <= x**n
    sp = HilbertSpace.network(0, n_max=2)
    rho = np.zeros((9, 9))
    rho[8, 8] = 0.01
    rho[0, 0] = 0.99
    assert top_fock_population(rho, sp) == pytest.approx(0.01)
    with pytest.raises(TruncationError):
        check_truncation(rho, sp)
