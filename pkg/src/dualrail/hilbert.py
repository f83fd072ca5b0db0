"""Labeled tensor-product Hilbert spaces, operators and states.

Global subsystem ordering used throughout the package: every A-waveguide qubit
(ascending index), then every B-waveguide qubit, then the amplifier mode a_A,
then a_B.  Qubit basis: |0> ground, |1> excited, so sigma^- = |0><1| and the
physical sigma^z = |1><1| - |0><0|.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, StateValidationError, UnknownLabel

DENSE_LIMIT = 256


class Subsystem(NamedTuple):
    kind: str  # "qubit" | "mode"
    waveguide: str  # "A" | "B"
    index: int

    def __str__(self):
        return f"{self.kind}({self.waveguide},{self.index})"


def qubit(waveguide: str, index: int) -> Subsystem:
    return Subsystem("qubit", waveguide, index)


def mode(waveguide: str) -> Subsystem:
    return Subsystem("mode", waveguide, 1)


# Local operators (qubit basis |0>=ground, |1>=excited).
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def destroy(n_levels: int) -> np.ndarray:
    """Truncated bosonic annihilation operator on ``n_levels`` Fock states."""
    return np.diag(np.sqrt(np.arange(1, n_levels, dtype=float)), 1).astype(complex)


@dataclass(frozen=True)
class HilbertSpace:
    labels: tuple[Subsystem, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        labels = tuple(Subsystem(*lab) for lab in self.labels)
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dims", dims)
        if len(labels) != len(dims):
            raise DimensionMismatch("one dimension per subsystem label is required")
        if any(d < 1 for d in dims):
            raise DimensionMismatch(f"subsystem dimensions must be >= 1, got {dims}")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate subsystem labels in {labels}")
        for lab, d in zip(labels, dims):
            if lab.kind not in ("qubit", "mode") or lab.waveguide not in ("A", "B"):
                raise ValueError(f"malformed label {lab!r}")
            if lab.index < 1:
                raise ValueError(f"label index must be >= 1: {lab!r}")
            if lab.kind == "qubit" and d != 2:
                raise DimensionMismatch(f"{lab} must have dimension 2")
        for w in "AB":
            idx = [lab.index for lab in labels if lab.kind == "qubit" and lab.waveguide == w]
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise ValueError(f"qubits in waveguide {w} must appear in cascade order")

    @classmethod
    def network(cls, n_pairs: int, n_max: int | None = None) -> "HilbertSpace":
        """Space of ``n_pairs`` qubit pairs, optionally with both amplifier modes."""
        labels = [qubit("A", i) for i in range(1, n_pairs + 1)]
        labels += [qubit("B", i) for i in range(1, n_pairs + 1)]
        dims = [2] * (2 * n_pairs)
        if n_max is not None:
            labels += [mode("A"), mode("B")]
            dims += [n_max + 1, n_max + 1]
        return cls(tuple(labels), tuple(dims))

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.dims else 1

    def position(self, label) -> int:
        try:
            return self.labels.index(Subsystem(*label))
        except ValueError:
            raise UnknownLabel(f"{label} not in space {self.labels}") from None

    def dim_of(self, label) -> int:
        return self.dims[self.position(label)]

    def qubits(self, waveguide: str | None = None) -> list[Subsystem]:
        return [
            lab
            for lab in self.labels
            if lab.kind == "qubit" and (waveguide is None or lab.waveguide == waveguide)
        ]

    def charges(self) -> np.ndarray:
        """Excitation imbalance n_A - n_B (qubits plus photons) of every basis state.

        Every generator built by this package changes this number by the same
        amount on both sides of rho, which is what makes sector reduction work.
        """
        q = np.zeros(1, dtype=np.int64)
        for lab, d in zip(self.labels, self.dims):
            sign = 1 if lab.waveguide == "A" else -1
            q = (q[:, None] + sign * np.arange(d)[None, :]).ravel()
        return q

    def subspace(self, keep: Iterable) -> "HilbertSpace":
        pos = sorted(self.position(k) for k in keep)
        return HilbertSpace(tuple(self.labels[p] for p in pos), tuple(self.dims[p] for p in pos))


def _to_storage(data, dim: int):
    if dim > DENSE_LIMIT:
        return sp.csr_matrix(data, dtype=complex)
    if sp.issparse(data):
        return data.toarray().astype(complex)
    return np.asarray(data, dtype=complex)


def _max_abs(m) -> float:
    if sp.issparse(m):
        return float(abs(m).max()) if m.nnz else 0.0
    return float(np.max(np.abs(m))) if m.size else 0.0


@dataclass(frozen=True, eq=False)
class QOperator:
    space: HilbertSpace
    data: object
    hermitian: bool = False

    def __post_init__(self):
        d = self.space.total_dim
        if self.data.shape != (d, d):
            raise DimensionMismatch(f"operator shape {self.data.shape} does not match space dim {d}")
        object.__setattr__(self, "data", _to_storage(self.data, d))
        if self.hermitian:
            dev = _max_abs(self.data - self.data.conj().T)
            if dev > 1e-12:
                raise ValueError(f"operator flagged Hermitian deviates by {dev:.3e}")

    @classmethod
    def zero(cls, space: HilbertSpace) -> "QOperator":
        d = space.total_dim
        return cls(space, sp.csr_matrix((d, d), dtype=complex))

    @classmethod
    def identity(cls, space: HilbertSpace) -> "QOperator":
        return cls(space, sp.identity(space.total_dim, dtype=complex, format="csr"), hermitian=True)

    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.data, dtype=complex)

    def dense(self) -> np.ndarray:
        return self.data.toarray() if sp.issparse(self.data) else np.array(self.data)

    def dag(self) -> "QOperator":
        return QOperator(self.space, self.csr().conj().T.tocsr())

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return _max_abs(self.data - self.data.conj().T) <= tol

    def _check(self, other: "QOperator"):
        if other.space != self.space:
            raise DimensionMismatch("operators live on different spaces")

    def __add__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return QOperator(self.space, self.csr() + other.csr())
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return QOperator(self.space, self.csr() - other.csr())
        return NotImplemented

    def __neg__(self):
        return QOperator(self.space, -self.csr())

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return QOperator(self.space, self.csr() * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return QOperator(self.space, self.csr() @ other.csr())
        if isinstance(other, QState):
            if other.space != self.space:
                raise DimensionMismatch("operator and state live on different spaces")
            if other.is_pure:
                return self.csr() @ other.vector
            return self.csr() @ other.matrix
        return NotImplemented


@dataclass(frozen=True, eq=False)
class QState:
    """Pure vector or density matrix on a HilbertSpace. Build via ``pure``/``mixed``."""

    space: HilbertSpace
    vector: np.ndarray | None = None
    matrix: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def pure(cls, space: HilbertSpace, vector, *, normalize: bool = False, tol: float = 1e-12):
        v = np.asarray(vector, dtype=complex).ravel()
        if v.size != space.total_dim:
            raise DimensionMismatch(f"vector length {v.size} != space dim {space.total_dim}")
        norm = np.linalg.norm(v)
        if normalize:
            if norm == 0:
                raise StateValidationError("cannot normalize the zero vector")
            v = v / norm
        elif abs(norm - 1) > tol:
            raise StateValidationError(f"pure state norm {norm!r} differs from 1")
        return cls(space, vector=v)

    @classmethod
    def mixed(
        cls,
        space: HilbertSpace,
        matrix,
        *,
        tol: float = 1e-10,
        check_positivity: bool = True,
        symmetrize: bool = False,
    ):
        rho = matrix.toarray() if sp.issparse(matrix) else np.array(matrix, dtype=complex)
        d = space.total_dim
        if rho.shape != (d, d):
            raise DimensionMismatch(f"density matrix shape {rho.shape} != ({d}, {d})")
        if symmetrize:
            rho = 0.5 * (rho + rho.conj().T)
        herm = np.max(np.abs(rho - rho.conj().T)) if d else 0.0
        if herm > max(tol, 1e-12):
            raise StateValidationError(f"density matrix not Hermitian (deviation {herm:.3e})")
        tr = np.trace(rho).real
        if abs(tr - 1) > tol:
            raise StateValidationError(f"density matrix trace {tr!r} differs from 1", trace=tr)
        if check_positivity:
            lo = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
            if lo < -tol:
                raise StateValidationError(
                    f"density matrix has negative eigenvalue {lo:.3e}", min_eigenvalue=lo
                )
        return cls(space, matrix=rho)

    @property
    def is_pure(self) -> bool:
        return self.vector is not None

    def dm(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.vector, self.vector.conj())
        return self.matrix

    def to_mixed(self) -> "QState":
        return self if not self.is_pure else QState(self.space, matrix=self.dm())


def _kron_all(mats):
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats)


def embed(local_op, target, space: HilbertSpace) -> QOperator:
    """I x ... x local_op x ... x I with ``local_op`` at the position of ``target``."""
    pos = space.position(target)
    op = np.asarray(local_op.toarray() if sp.issparse(local_op) else local_op, dtype=complex)
    if op.shape != (space.dims[pos],) * 2:
        raise DimensionMismatch(
            f"local operator shape {op.shape} does not match dim {space.dims[pos]} of {target}"
        )
    left = int(np.prod(space.dims[:pos], dtype=np.int64))
    right = int(np.prod(space.dims[pos + 1 :], dtype=np.int64))
    mats = [sp.identity(left, dtype=complex, format="csr"), sp.csr_matrix(op),
            sp.identity(right, dtype=complex, format="csr")]
    return QOperator(space, _kron_all(mats))


def embed_local(local_op, targets: Sequence, space: HilbertSpace) -> QOperator:
    """Embed a k-local operator acting on ``targets`` (in the order given)."""
    pos = [space.position(t) for t in targets]
    ldims = [space.dims[p] for p in pos]
    op = np.asarray(local_op, dtype=complex)
    n = int(np.prod(ldims))
    if op.shape != (n, n):
        raise DimensionMismatch(f"local operator shape {op.shape} does not match {ldims}")
    if pos == list(range(pos[0], pos[0] + len(pos))):
        left = int(np.prod(space.dims[: pos[0]], dtype=np.int64))
        right = int(np.prod(space.dims[pos[-1] + 1 :], dtype=np.int64))
        mats = [sp.identity(left, dtype=complex, format="csr"), sp.csr_matrix(op),
                sp.identity(right, dtype=complex, format="csr")]
        return QOperator(space, _kron_all(mats))
    # general placement: expand in matrix units |a><b| = prod_k |a_k><b_k|
    total = sp.csr_matrix((space.total_dim,) * 2, dtype=complex)
    for a, b in zip(*np.nonzero(op)):
        ia, ib = np.unravel_index(a, ldims), np.unravel_index(b, ldims)
        factors = [sp.identity(d, dtype=complex, format="csr") for d in space.dims]
        for p, d, x, y in zip(pos, ldims, ia, ib):
            unit = sp.csr_matrix(([1.0 + 0j], ([x], [y])), shape=(d, d))
            factors[p] = unit
        total = total + op[a, b] * _kron_all(factors)
    return QOperator(space, total)


def partial_trace(state: QState, keep: Iterable) -> QState:
    """Reduced density matrix on ``keep``; subsystem order of the parent space is kept."""
    keep = list(keep)
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    space = state.space
    kpos = sorted(set(space.position(k) for k in keep))
    sub = HilbertSpace(tuple(space.labels[p] for p in kpos), tuple(space.dims[p] for p in kpos))
    n = len(space.dims)
    tpos = [p for p in range(n) if p not in kpos]
    dk = sub.total_dim
    if state.is_pure:
        psi = state.vector.reshape(space.dims).transpose(kpos + tpos).reshape(dk, -1)
        rho = psi @ psi.conj().T
    else:
        t = state.matrix.reshape(space.dims + space.dims)
        t = t.transpose(kpos + tpos + [n + p for p in kpos] + [n + p for p in tpos])
        dt = space.total_dim // dk
        rho = np.trace(t.reshape(dk, dt, dk, dt), axis1=1, axis2=3)
    return QState(sub, matrix=rho)


def _require_same_space(a, b):
    if a.space != b.space:
        raise DimensionMismatch("objects live on different spaces")


def fidelity(a: QState, b: QState) -> float:
    """<a|rho_b|a> for a pure reference ``a``; |<a|b>|^2 when ``b`` is pure too."""
    _require_same_space(a, b)
    if not a.is_pure:
        raise ValueError("fidelity reference must be a pure state")
    if b.is_pure:
        return float(abs(np.vdot(a.vector, b.vector)) ** 2)
    return float(np.real(np.vdot(a.vector, b.matrix @ a.vector)))


def purity(rho: QState) -> float:
    if rho.is_pure:
        return 1.0
    return float(np.real(np.vdot(rho.matrix, rho.matrix)))


def expect(op: QOperator, state: QState) -> complex:
    _require_same_space(op, state)
    m = op.csr()
    if state.is_pure:
        return complex(np.vdot(state.vector, m @ state.vector))
    return complex(np.sum(m.multiply(state.matrix.T)))
