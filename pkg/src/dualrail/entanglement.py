"""Entanglement measures: Wootters concurrence, von Neumann block entropies, N_ent."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import StateValidationError
from .hilbert import PAULI_Y, QState, partial_trace, qubit

_YY = np.kron(PAULI_Y, PAULI_Y)
_EIG_FLOOR = 64 * np.finfo(float).eps

BLOCK_CONVENTIONS = ("rungs", "interleaved", "b_side", "a_side")


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, QState):
        return rho.dm()
    return np.asarray(rho, dtype=complex)


def concurrence(rho2, tol: float = 1e-8) -> float:
    """Wootters concurrence of a two-qubit density matrix (or QState).

    Works with the Hermitian form sqrt(rho) rho~ sqrt(rho), whose eigenvalues
    are the squared Wootters lambdas, which avoids a non-Hermitian eigensolve.
    Pure inputs use |<psi*| Y x Y |psi>| directly.
    """
    if isinstance(rho2, QState) and rho2.is_pure:
        rho2 = rho2.vector
    rho = _as_matrix(rho2)
    if rho.ndim == 1:
        if rho.shape != (4,):
            raise StateValidationError(f"concurrence needs a two-qubit state, got {rho.shape}")
        return float(min(1.0, abs(rho @ _YY @ rho) / np.vdot(rho, rho).real))
    if rho.shape != (4, 4):
        raise StateValidationError(f"concurrence needs a 4x4 density matrix, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise StateValidationError("two-qubit matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1) > tol:
        raise StateValidationError(f"two-qubit matrix has trace {tr}", trace=tr)
    rho = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(rho)
    if w[0] < -tol:
        raise StateValidationError("two-qubit matrix is not positive", min_eigenvalue=w[0])
    # rounding leaves eigenvalues of order eps where rho is rank deficient;
    # their square roots (~1e-8) would otherwise leak into the lambdas
    w = np.where(w > _EIG_FLOOR * max(w[-1], 0.0), w, 0.0)
    sq = (v * np.sqrt(w)) @ v.conj().T
    # sqrt(rho) rho~ sqrt(rho) = A A^dag, so the lambdas are the singular values
    # of A; taking them directly avoids square roots of rounding-level eigenvalues
    a = sq @ _YY @ sq.conj()
    lam = np.linalg.svd(a, compute_uv=False)
    return float(min(1.0, max(0.0, lam[0] - lam[1] - lam[2] - lam[3])))


def pair_concurrence(state: QState, i: int, j: int) -> float:
    """Concurrence between qubits (A, i) and (B, j) after tracing out everything else."""
    red = partial_trace(state, [qubit("A", i), qubit("B", j)])
    return concurrence(red.matrix)


def concurrence_matrix(state: QState, n_pairs: int | None = None) -> np.ndarray:
    n = n_pairs or len(state.space.qubits("A"))
    return np.array([[pair_concurrence(state, i, j) for j in range(1, n + 1)] for i in range(1, n + 1)])


def von_neumann(rho: np.ndarray, cutoff: float = 1e-14) -> float:
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    w = w[w > cutoff]
    return float(max(0.0, -np.sum(w * np.log(w))))


def block_entropy(state: QState, block, warn: bool = True) -> float:
    """Von Neumann entropy (nats) of the reduced state on ``block``."""
    block = list(block)
    if warn and not state.is_pure:
        warnings.warn("block entropy of a mixed global state is not an entanglement measure", stacklevel=2)
    if len(block) == len(state.space.labels):
        return von_neumann(state.dm())
    return von_neumann(partial_trace(state, block).matrix)


def chain_blocks(n_pairs: int, convention: str = "rungs") -> dict[int, list]:
    """Blocks [1..n] used for S_n under the named chain convention.

    rungs:       {A_1..A_n, B_1..B_n}, n = 1..N-1
    interleaved: first n qubits of A_1, B_1, A_2, B_2, ..., n = 1..2N-1
    b_side:      {B_1..B_n}, n = 1..N-1 (a_side likewise)
    """
    N = n_pairs
    if convention == "rungs":
        return {n: [qubit(w, i) for w in "AB" for i in range(1, n + 1)] for n in range(1, N)}
    if convention == "interleaved":
        order = [qubit(w, i) for i in range(1, N + 1) for w in "AB"]
        return {n: order[:n] for n in range(1, 2 * N)}
    if convention in ("b_side", "a_side"):
        w = convention[0].upper()
        return {n: [qubit(w, i) for i in range(1, n + 1)] for n in range(1, N)}
    raise ValueError(f"unknown block convention {convention!r}; choose from {BLOCK_CONVENTIONS}")


def block_entropies(state: QState, n_pairs: int, convention: str = "rungs", warn: bool = True) -> dict[int, float]:
    return {n: block_entropy(state, b, warn=warn) for n, b in chain_blocks(n_pairs, convention).items()}


def binary_entropy(x: float) -> float:
    return -sum(p * math.log(p) for p in (x, 1 - x) if p > 0)


def s_a_closed_form(N: int, r: float) -> float:
    """Entropy of all A qubits: -N ln[x^x (1-x)^(1-x)] with x = cosh^2 r / cosh 2r."""
    if N < 1 or r < 0:
        raise ValueError("need N >= 1 and r >= 0")
    return N * binary_entropy(math.cosh(r) ** 2 / math.cosh(2 * r))


def n_ent_extrapolate(C11: float, C22: float) -> float:
    """Linear extrapolation C11 / (C11 - C22) of the number of entangled pairs.

    Returns inf when C22 >= C11 and nan when C11 <= 0 (undefined).
    """
    if not C11 > 0:
        return math.nan
    if C22 >= C11:
        return math.inf
    return C11 / (C11 - C22)


@dataclass
class EntanglementReport:
    concurrence: np.ndarray
    block_entropies: dict = field(default_factory=dict)
    block_convention: str = "rungs"
    S_A: float = math.nan
    purity: float = math.nan
    N_ent: float | None = None
    T_prep: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.concurrence, dtype=float)
        if c.size and (c.min() < 0 or c.max() > 1):
            raise ValueError("concurrences must lie in [0, 1]")
        if any(v < -1e-12 for v in self.block_entropies.values()):
            raise ValueError("entropies must be non-negative")
        self.concurrence = c

    def to_dict(self) -> dict:
        row = {}
        n = self.concurrence.shape[0]
        for i in range(n):
            for j in range(n):
                row[f"C_{i + 1}{j + 1}"] = float(self.concurrence[i, j])
        for k, v in sorted(self.block_entropies.items()):
            row[f"S_{k}_nats"] = float(v)
        row["S_A_nats"] = float(self.S_A)
        row["purity"] = float(self.purity)
        row["N_ent"] = None if self.N_ent is None else float(self.N_ent)
        row["T_prep"] = None if self.T_prep is None else float(self.T_prep)
        row["block_convention"] = self.block_convention
        row.update(self.extra)
        return row

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, default=_json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_csv(self, path) -> None:
        row = self.to_dict()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(row))
            w.writeheader()
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x)}")


def analyze(
    state: QState,
    n_pairs: int,
    convention: str = "rungs",
    entropies: bool = True,
    T_prep: float | None = None,
) -> EntanglementReport:
    """Concurrence matrix, chain block entropies, S_A, purity and N_ent of a network state."""
    from .hilbert import purity as _purity

    qubits = [qubit(w, i) for w in "AB" for i in range(1, n_pairs + 1)]
    qstate = state if len(qubits) == len(state.space.labels) else partial_trace(state, qubits)
    cm = concurrence_matrix(qstate, n_pairs)
    s_blocks, s_a = {}, math.nan
    if entropies:
        s_blocks = block_entropies(qstate, n_pairs, convention, warn=False)
        s_a = block_entropy(qstate, [qubit("A", i) for i in range(1, n_pairs + 1)], warn=False)
    n_ent = n_ent_extrapolate(cm[0, 0], cm[1, 1]) if n_pairs >= 2 else None
    return EntanglementReport(
        concurrence=cm,
        block_entropies=s_blocks,
        block_convention=convention,
        S_A=s_a,
        purity=_purity(qstate),
        N_ent=n_ent,
        T_prep=T_prep,
    )
