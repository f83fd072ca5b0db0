"""Closed-form dark states of the ideal network and their verification."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import StateValidationError
from .hilbert import HilbertSpace, QOperator, QState, embed_local, qubit
from .network import (
    NetworkSpec,
    Permutation,
    build_h_casc,
    build_jump_ops,
    decompose_permutation,
)


def bell_pair(r: float) -> QState:
    """(cosh r |00> + sinh r |11>) / sqrt(cosh 2r) on qubits (A,1), (B,1)."""
    if r < 0:
        raise ValueError("r must be >= 0")
    v = np.zeros(4, dtype=complex)
    v[0], v[3] = math.cosh(r), math.sinh(r)
    return QState.pure(HilbertSpace.network(1), v, normalize=True)


def pair_product(r: float, pairs, n_pairs: int) -> QState:
    """Product of squeezed pairs |Phi+_{a,b}> for the (A-index, B-index) tuples in ``pairs``.

    ``pairs`` must pair every A qubit with exactly one B qubit (1-based indices).
    """
    pairs = list(pairs)
    if sorted(a for a, _ in pairs) != list(range(1, n_pairs + 1)) or sorted(
        b for _, b in pairs
    ) != list(range(1, n_pairs + 1)):
        raise ValueError(f"{pairs} is not a perfect A-B matching of {n_pairs} pairs")
    space = HilbertSpace.network(n_pairs)
    c, s = math.cosh(r), math.sinh(r)
    psi = np.zeros(space.total_dim, dtype=complex)
    n = 2 * n_pairs
    for bits in itertools.product((0, 1), repeat=n_pairs):
        occ = [0] * n
        amp = 1.0
        for (a, b), bit in zip(pairs, bits):
            occ[a - 1] = occ[n_pairs + b - 1] = bit
            amp *= s if bit else c
        psi[int("".join(map(str, occ)), 2)] += amp
    return QState.pure(space, psi, normalize=True)


def phi_parallel(N: int, r: float) -> QState:
    """Pair (A,i) with (B,i) for every i."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return pair_product(r, [(i, i) for i in range(1, N + 1)], N)


def mixing_unitary(space: HilbertSpace, i: int, theta: float) -> QOperator:
    """exp(i theta (s_i + s_{i+1})^2) on B-qubits i, i+1.

    Equal to the identity on the singlet and to exp(2 i theta) on the triplet.
    """
    n = len(space.qubits("B"))
    if not 1 <= i < n:
        raise IndexError(f"transposition index {i} outside 1..{n - 1}")
    singlet = np.array([0, 1, -1, 0]) / math.sqrt(2)
    p_s = np.outer(singlet, singlet)
    local = p_s + np.exp(2j * theta) * (np.eye(4) - p_s)
    return embed_local(local, [qubit("B", i), qubit("B", i + 1)], space)


@dataclass(frozen=True)
class TargetStateSpec:
    r: float
    delta_A: tuple
    P: Permutation
    gamma: float = 1.0
    strategy: str = "bubble"

    def __post_init__(self):
        object.__setattr__(self, "delta_A", tuple(float(x) for x in self.delta_A))
        if not isinstance(self.P, Permutation):
            object.__setattr__(self, "P", Permutation(tuple(self.P)))
        if len(self.P) != len(self.delta_A):
            raise ValueError("permutation and detuning vector differ in length")
        if self.r < 0 or self.gamma <= 0:
            raise ValueError("need r >= 0 and gamma > 0")

    @classmethod
    def from_network(cls, spec: NetworkSpec, strategy: str = "bubble") -> "TargetStateSpec":
        perm = spec.permutation or Permutation.identity(spec.N)
        gamma = spec.uniform_gamma()
        if gamma is None:
            raise ValueError("closed-form target needs equal decay rates")
        return cls(spec.squeezing, spec.delta_A, perm, gamma, strategy)


def target_state(spec: TargetStateSpec) -> QState:
    """Dark state for delta_B = -P delta_A: transposition unitaries applied to phi_parallel.

    Steps come from ``decompose_permutation``; each applies mixing_unitary(-theta),
    earliest step first.
    """
    n = len(spec.delta_A)
    psi = phi_parallel(n, spec.r)
    steps, _ = decompose_permutation(spec.P, spec.delta_A, spec.gamma, spec.strategy)
    v = psi.vector
    for step in steps:
        v = mixing_unitary(psi.space, step.position, -step.theta).csr() @ v
    return QState.pure(psi.space, v, normalize=True)


def four_qubit_state(r: float, Delta: float, gamma: float = 1.0, return_norm: bool = False):
    """gamma |Phi11 Phi22> + i Delta |Phi12 Phi21>, divided by sqrt(gamma^2 + Delta^2).

    The two branches overlap for r > 0, but the overlap is real and the
    relative phase is i, so the cross terms cancel in the norm.  The vector is
    still renormalized explicitly; ``return_norm`` also returns the norm before
    that step (1 up to rounding).
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    par = pair_product(r, [(1, 1), (2, 2)], 2).vector
    crossed = pair_product(r, [(1, 2), (2, 1)], 2).vector
    v = (gamma * par + 1j * Delta * crossed) / math.hypot(gamma, Delta)
    norm = float(np.linalg.norm(v))
    state = QState.pure(HilbertSpace.network(2), v, normalize=True)
    return (state, norm) if return_norm else state


def dark_state_residuals(state: QState, spec: NetworkSpec) -> tuple[float, float, float]:
    """(||J_A psi||, ||J_B psi||, ||H_casc psi||) for a pure state."""
    if not state.is_pure:
        raise StateValidationError("dark-state residuals need a pure state")
    space = spec.qubit_space()
    if state.space != space:
        raise StateValidationError("state does not live on the network's qubit space")
    ja, jb, _, _ = build_jump_ops(spec, space)
    h = build_h_casc(spec, space)
    v = state.vector
    return tuple(float(np.linalg.norm(op.csr() @ v)) for op in (ja, jb, h))
