import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_density, random_vector
from dualrail.errors import DimensionMismatch, StateValidationError, UnknownLabel
from dualrail.hilbert import (
    PAULI_Z,
    SIGMA_MINUS,
    HilbertSpace,
    QOperator,
    QState,
    embed,
    embed_local,
    expect,
    fidelity,
    mode,
    partial_trace,
    purity,
    qubit,
)
from dualrail.states import bell_pair

PAIR = HilbertSpace.network(1)


def test_network_ordering():
    sp = HilbertSpace.network(2, n_max=3)
    assert sp.labels == (qubit("A", 1), qubit("A", 2), qubit("B", 1), qubit("B", 2), mode("A"), mode("B"))
    assert sp.dims == (2, 2, 2, 2, 4, 4)
    assert sp.total_dim == 256


@pytest.mark.parametrize(
    "labels,dims",
    [
        ((qubit("A", 1), qubit("A", 1)), (2, 2)),
        ((qubit("A", 2), qubit("A", 1)), (2, 2)),
        ((qubit("A", 1),), (2, 2)),
        ((qubit("A", 1),), (0,)),
    ],
)
def test_space_invariants(labels, dims):
    with pytest.raises((ValueError, DimensionMismatch)):
        HilbertSpace(labels, dims)


def test_embed_sigma_z_on_first_qubit():
    op = embed(PAULI_Z, qubit("A", 1), PAIR).dense()
    assert np.array_equal(op, np.diag([1, 1, -1, -1]).astype(complex))


def test_embed_identity():
    sp = HilbertSpace.network(2)
    assert np.array_equal(embed(np.eye(2), qubit("B", 2), sp).dense(), np.eye(16))


def test_embed_sigma_minus_on_b_by_hand():
    expected = np.zeros((4, 4), complex)
    # |a b> -> index 2a + b; sigma^- on b maps |a 1> to |a 0>
    expected[0, 1] = 1
    expected[2, 3] = 1
    assert np.array_equal(embed(SIGMA_MINUS, qubit("B", 1), PAIR).dense(), expected)


def test_embed_errors():
    with pytest.raises(UnknownLabel):
        embed(SIGMA_MINUS, qubit("A", 3), PAIR)
    with pytest.raises(DimensionMismatch):
        embed(np.eye(3), qubit("A", 1), PAIR)


def test_embed_local_nonadjacent_matches_product(rng):
    sp = HilbertSpace.network(2)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    got = embed_local(np.kron(a, b), [qubit("A", 1), qubit("B", 2)], sp).dense()
    ref = (embed(a, qubit("A", 1), sp) @ embed(b, qubit("B", 2), sp)).dense()
    assert np.allclose(got, ref, atol=1e-14)


def test_sparse_above_dense_limit():
    sp = HilbertSpace.network(1, n_max=10)
    op = embed(SIGMA_MINUS, qubit("A", 1), sp)
    assert sp.total_dim > 256
    assert not isinstance(op.data, np.ndarray)
    small = embed(SIGMA_MINUS, qubit("A", 1), PAIR)
    assert isinstance(small.data, np.ndarray)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_embed_commutes_with_composition(seed):
    rng = np.random.default_rng(seed)
    sp = HilbertSpace.network(2)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    tgt = qubit("B", 1)
    lhs = embed(a @ b, tgt, sp).dense()
    rhs = (embed(a, tgt, sp) @ embed(b, tgt, sp)).dense()
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_partial_trace_bell_pair():
    red = partial_trace(bell_pair(1.0), [qubit("A", 1)]).matrix
    x = np.cosh(1) ** 2 / np.cosh(2)
    assert np.allclose(red, np.diag([x, 1 - x]), atol=1e-14)
    assert np.allclose(np.diag(red).real, [0.63290, 0.36710], atol=5e-6)


def test_partial_trace_product_and_mixed(rng):
    r1, r2 = random_density(2, rng), random_density(2, rng)
    st_ = QState.mixed(PAIR, np.kron(r1, r2))
    assert np.allclose(partial_trace(st_, [qubit("A", 1)]).matrix, r1, atol=1e-14)
    assert np.allclose(partial_trace(st_, [qubit("B", 1)]).matrix, r2, atol=1e-14)
    sp = HilbertSpace.network(2)
    mm = QState.mixed(sp, np.eye(16) / 16)
    assert np.allclose(partial_trace(mm, [qubit("A", 2)]).matrix, np.eye(2) / 2)


def test_partial_trace_empty_keep():
    with pytest.raises(ValueError):
        partial_trace(bell_pair(1.0), [])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_partial_trace_properties(seed, k):
    rng = np.random.default_rng(seed)
    sp = HilbertSpace.network(2)
    rho = QState.mixed(sp, random_density(16, rng))
    full = partial_trace(rho, sp.labels)
    assert np.allclose(full.matrix, rho.matrix, atol=1e-14)
    keep = list(rng.choice(len(sp.labels), size=k, replace=False))
    red = partial_trace(rho, [sp.labels[i] for i in keep]).matrix
    assert abs(np.trace(red) - 1) <= 1e-12
    assert np.max(np.abs(red - red.conj().T)) <= 1e-13
    assert np.linalg.eigvalsh(red)[0] >= -1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_schmidt_spectra_coincide(seed):
    rng = np.random.default_rng(seed)
    sp = HilbertSpace.network(2)
    psi = QState.pure(sp, random_vector(16, rng))
    a = partial_trace(psi, sp.qubits("A")).matrix
    b = partial_trace(psi, sp.qubits("B")).matrix
    assert np.allclose(np.linalg.eigvalsh(a), np.linalg.eigvalsh(b), atol=1e-10)


def test_metrics():
    phi = bell_pair(1.0)
    assert purity(phi) == 1.0
    assert purity(phi.to_mixed()) == pytest.approx(1.0, abs=1e-14)
    assert purity(QState.mixed(PAIR, np.eye(4) / 4)) == pytest.approx(0.25)
    assert fidelity(phi, phi.to_mixed()) == pytest.approx(1.0, abs=1e-14)
    assert fidelity(phi, phi) == pytest.approx(1.0, abs=1e-14)
    zz = embed(PAULI_Z, qubit("A", 1), PAIR) @ embed(PAULI_Z, qubit("B", 1), PAIR)
    assert expect(zz, phi).real == pytest.approx(1.0)


def test_state_validation():
    with pytest.raises(StateValidationError):
        QState.pure(PAIR, [1, 1, 0, 0])
    with pytest.raises(StateValidationError):
        QState.mixed(PAIR, np.diag([1.1, -0.1, 0, 0]))
    with pytest.raises(StateValidationError):
        QState.mixed(PAIR, np.eye(4) / 2)
    with pytest.raises(DimensionMismatch):
        QState.pure(PAIR, [1, 0])
    with pytest.raises(DimensionMismatch):
        fidelity(bell_pair(1.0), QState.mixed(HilbertSpace.network(2), np.eye(16) / 16))


def test_operator_arithmetic_and_hermiticity():
    a = embed(SIGMA_MINUS, qubit("A", 1), PAIR)
    h = a + a.dag()
    assert h.is_hermitian()
    assert not (a * 1j).is_hermitian()
    with pytest.raises(DimensionMismatch):
        a + QOperator.identity(HilbertSpace.network(2))
