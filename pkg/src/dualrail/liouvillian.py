"""Master-equation generators as superoperators.

A generator is stored as a list of terms (Hamiltonian, dissipators D[C],
cascade terms T[O1, O2]) and compiled on first use to

    L rho = K rho + rho K^dag + sum_k w_k A_k rho A_k^dag

Every operator used by the builders shifts the excitation imbalance
Q = n_A - n_B by a fixed amount, so L maps the block structure
{rho_mn : Q_m = Q_n} onto itself.  Steady states and evolutions from
charge-diagonal initial states live entirely in that subspace, which is what
``SectorLayout`` and ``Superoperator.sector_matrix`` exploit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DimensionMismatch, ModelError, ResourceGuardError, TruncationError
from .hilbert import HilbertSpace, QOperator, QState
from .network import (
    NetworkSpec,
    _detuning_hamiltonian,
    build_h_casc,
    build_jump_ops,
    collective_lowering,
    hopping_hamiltonian,
    mode_op,
    sigma_minus,
    sigma_z,
)

log = logging.getLogger(__name__)

DENSE_SUPEROP_LIMIT = 64


@dataclass(frozen=True, eq=False)
class Term:
    kind: str  # "hamiltonian", "dissipator" or "cascade"
    ops: tuple
    rate: float = 1.0
    label: str = ""

    def apply(self, rho: np.ndarray) -> np.ndarray:
        if self.kind == "hamiltonian":
            h = self.ops[0].csr()
            return -1j * self.rate * (h @ rho - _rmul(rho, h))
        if self.kind == "dissipator":
            c = self.ops[0].csr()
            cd = c.conj().T
            crho = c @ rho
            out = _rmul(crho, cd) - 0.5 * (cd @ crho) - 0.5 * _rmul(rho, cd @ c)
            return self.rate * out
        o1, o2 = (o.csr() for o in self.ops)
        o1d, o2d = o1.conj().T, o2.conj().T
        out = (
            _rmul(o1 @ rho, o2d)
            - o2d @ (o1 @ rho)
            + _rmul(o2 @ rho, o1d)
            - _rmul(rho, o1d @ o2)
        )
        return self.rate * out


def _rmul(rho: np.ndarray, b) -> np.ndarray:
    """rho @ b for dense rho and sparse b."""
    return (b.T @ rho.T).T


def hamiltonian(h: QOperator, label: str = "H") -> Term:
    return Term("hamiltonian", (h,), 1.0, label)


def dissipator(c: QOperator, rate: float = 1.0, label: str = "") -> Term:
    """Term rate * (C rho C^dag - {C^dag C, rho}/2)."""
    return Term("dissipator", (c,), float(rate), label)


def cascade(o1: QOperator, o2: QOperator, rate: float = 1.0, label: str = "") -> Term:
    """Term rate * ([O1 rho, O2^dag] + [O2, rho O1^dag])."""
    if o1.space != o2.space:
        raise DimensionMismatch("cascade operators live on different spaces")
    return Term("cascade", (o1, o2), float(rate), label)


@dataclass(frozen=True)
class SectorLayout:
    """Packing of the charge-diagonal blocks of a density matrix into one vector.

    Each block rho[idx_Q, idx_Q] is stored column-major, blocks in increasing Q.
    """

    dim: int
    charges: np.ndarray = field(repr=False)

    @cached_property
    def blocks(self) -> tuple[tuple[int, np.ndarray, int], ...]:
        out, off = [], 0
        for q in np.unique(self.charges):
            idx = np.flatnonzero(self.charges == q)
            out.append((int(q), idx, off))
            off += idx.size**2
        return tuple(out)

    @property
    def size(self) -> int:
        q, idx, off = self.blocks[-1]
        return off + idx.size**2

    def pack(self, rho: np.ndarray) -> np.ndarray:
        return np.concatenate([rho[np.ix_(idx, idx)].ravel(order="F") for _, idx, _ in self.blocks])

    def unpack(self, x: np.ndarray) -> np.ndarray:
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        for _, idx, off in self.blocks:
            n = idx.size
            rho[np.ix_(idx, idx)] = x[off : off + n * n].reshape((n, n), order="F")
        return rho

    @cached_property
    def diagonal_positions(self) -> np.ndarray:
        """Positions in the packed vector of rho_mm, ordered by basis index m."""
        pos = np.empty(self.dim, dtype=np.int64)
        for _, idx, off in self.blocks:
            n = idx.size
            pos[idx] = off + np.arange(n) * (n + 1)
        return pos

    def trace(self, x: np.ndarray) -> complex:
        return x[self.diagonal_positions].sum()

    def purity(self, x: np.ndarray) -> float:
        # Tr rho^2 = sum |rho_mn|^2 for Hermitian rho
        return float(np.vdot(x, x).real)

    @cached_property
    def adjoint_index(self) -> np.ndarray:
        """For each packed entry rho_mn, the packed position of rho_nm."""
        out = np.empty(self.size, dtype=np.int64)
        for _, idx, off in self.blocks:
            n = idx.size
            k = np.arange(n * n)
            out[off + k] = off + k // n + (k % n) * n
        return out

    def hermitize(self, x: np.ndarray) -> np.ndarray:
        return 0.5 * (x + x[self.adjoint_index].conj())

    def min_eigenvalue(self, x: np.ndarray) -> float:
        lo = np.inf
        for _, idx, off in self.blocks:
            n = idx.size
            blk = x[off : off + n * n].reshape((n, n), order="F")
            lo = min(lo, float(np.linalg.eigvalsh(0.5 * (blk + blk.conj().T))[0]))
        return lo

    def basis_state(self, m: int = 0) -> np.ndarray:
        """Packed |m><m|."""
        x = np.zeros(self.size, dtype=complex)
        x[self.diagonal_positions[m]] = 1.0
        return x

    def leakage(self, rho: np.ndarray) -> float:
        """Largest element of rho outside the charge-diagonal blocks."""
        mask = self.charges[:, None] != self.charges[None, :]
        return float(np.max(np.abs(rho[mask]))) if mask.any() else 0.0


def _charge_shift(a: sp.csr_matrix, q: np.ndarray) -> int | None:
    coo = a.tocoo()
    keep = np.abs(coo.data) > 0
    shifts = np.unique(q[coo.row[keep]] - q[coo.col[keep]])
    if shifts.size == 0:
        return 0
    if shifts.size > 1:
        return None
    return int(shifts[0])


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Liouvillian on ``space`` defined by a list of terms."""

    space: HilbertSpace
    terms: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            for o in t.ops:
                if o.space != self.space:
                    raise DimensionMismatch(f"term {t.label or t.kind} lives on another space")

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def __add__(self, other: "Superoperator") -> "Superoperator":
        if other.space != self.space:
            raise DimensionMismatch("superoperators live on different spaces")
        return Superoperator(self.space, self.terms + other.terms, {**self.meta, **other.meta})

    # compiled form --------------------------------------------------------
    @cached_property
    def _compiled(self):
        d = self.dim
        k = sp.csr_matrix((d, d), dtype=complex)
        base: list[sp.csr_matrix] = []
        index: dict[int, int] = {}
        entries: dict[tuple[int, int], float] = {}

        def key(op: QOperator) -> int:
            if id(op) not in index:
                index[id(op)] = len(base)
                base.append(op.csr())
            return index[id(op)]

        for t in self.terms:
            if t.kind == "hamiltonian":
                k = k - 1j * t.rate * t.ops[0].csr()
            elif t.kind == "dissipator":
                c = t.ops[0].csr()
                k = k - 0.5 * t.rate * (c.conj().T @ c)
                i = key(t.ops[0])
                entries[i, i] = entries.get((i, i), 0.0) + t.rate
            elif t.kind == "cascade":
                o1, o2 = t.ops[0].csr(), t.ops[1].csr()
                k = k - t.rate * (o2.conj().T @ o1)
                i, j = key(t.ops[0]), key(t.ops[1])
                entries[i, j] = entries.get((i, j), 0.0) + t.rate
                entries[j, i] = entries.get((j, i), 0.0) + t.rate
            else:
                raise ModelError(f"unknown term kind {t.kind!r}")
        sandwiches = []
        nb = len(base)
        if nb:
            m = np.zeros((nb, nb))
            for (i, j), v in entries.items():
                m[i, j] = v
            # Diagonalize per connected block so that operators with different
            # charge shifts are never mixed by degenerate eigenvectors.
            ncomp, comp = connected_components(sp.csr_matrix(m != 0), directed=False)
            for c in range(ncomp):
                members = np.flatnonzero(comp == c)
                sub = m[np.ix_(members, members)]
                if not np.any(sub):
                    continue
                lam, vec = np.linalg.eigh(sub)
                scale = np.max(np.abs(lam))
                for w, v in zip(lam, vec.T):
                    if abs(w) <= 1e-14 * scale:
                        continue
                    a = sum((v[n] * base[mem] for n, mem in enumerate(members)), sp.csr_matrix((d, d)))
                    a = sp.csr_matrix(a)
                    a.eliminate_zeros()
                    sandwiches.append((a, float(w)))
        k = sp.csr_matrix(k)
        k.eliminate_zeros()
        return k, tuple(sandwiches)

    @property
    def kernel(self) -> sp.csr_matrix:
        """Non-Hermitian effective generator K = -iH - (1/2) sum C^dag C - ..."""
        return self._compiled[0]

    @property
    def sandwiches(self) -> tuple:
        return self._compiled[1]

    def apply(self, rho) -> np.ndarray:
        """d rho / dt for a dense matrix (or QState) on the full space."""
        if isinstance(rho, QState):
            if rho.space != self.space:
                raise DimensionMismatch("state and generator live on different spaces")
            rho = rho.dm()
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"rho shape {rho.shape} != ({self.dim}, {self.dim})")
        k, sandwiches = self._compiled
        krho = k @ rho
        out = krho + krho.conj().T if _is_hermitian(rho) else krho + _rmul(rho, k.conj().T)
        for a, w in sandwiches:
            ar = a @ rho
            out += w * _rmul(ar, a.conj().T)
        return out

    def apply_terms(self, rho: np.ndarray) -> np.ndarray:
        """Reference evaluation straight from the term list (slow, for cross-checks)."""
        rho = np.asarray(rho, dtype=complex)
        return sum((t.apply(rho) for t in self.terms), np.zeros_like(rho))

    def matrix(self) -> np.ndarray:
        """Dense d^2 x d^2 matrix in the column-stacking convention (total dim <= 64)."""
        if self.dim > DENSE_SUPEROP_LIMIT:
            raise ResourceGuardError(
                f"dense superoperator requested for dim {self.dim} > {DENSE_SUPEROP_LIMIT}"
            )
        k, sandwiches = self._compiled
        kd = k.toarray()
        eye = np.eye(self.dim)
        out = np.kron(eye, kd) + np.kron(kd.conj(), eye)
        for a, w in sandwiches:
            ad = a.toarray()
            out += w * np.kron(ad.conj(), ad)
        return out

    # charge-sector form ---------------------------------------------------
    @cached_property
    def layout(self) -> SectorLayout:
        q = self.space.charges()
        k, sandwiches = self._compiled
        for a in [k] + [a for a, _ in sandwiches]:
            if _charge_shift(a, q) is None:
                raise ModelError("generator does not conserve the excitation-imbalance structure")
        return SectorLayout(self.dim, q)

    @cached_property
    def full_layout(self) -> SectorLayout:
        """Single-block layout: plain column-stacked vectorization of the whole matrix."""
        return SectorLayout(self.dim, np.zeros(self.dim, dtype=np.int64))

    @cached_property
    def sector_matrix(self) -> sp.csr_matrix:
        """Sparse generator restricted to the charge-diagonal blocks (see ``layout``)."""
        return self._packed_matrix(self.layout)

    @cached_property
    def full_sparse_matrix(self) -> sp.csr_matrix:
        """Sparse d^2 x d^2 generator in the column-stacking convention."""
        return self._packed_matrix(self.full_layout)

    def packed(self, reduced: bool = True) -> tuple[SectorLayout, sp.csr_matrix]:
        if reduced:
            return self.layout, self.sector_matrix
        return self.full_layout, self.full_sparse_matrix

    def _packed_matrix(self, lay: SectorLayout) -> sp.csr_matrix:
        q = lay.charges
        k, sandwiches = self._compiled
        eye = sp.identity(self.dim, dtype=complex, format="csr")
        where = {qq: (idx, off) for qq, idx, off in lay.blocks}
        rows, cols, vals = [], [], []

        def add(a, b, w, shift):
            # w * A rho B^dag with A, B both shifting the charge by `shift`
            for qq, idx, off in lay.blocks:
                tgt = where.get(qq + shift)
                if tgt is None:
                    continue
                jdx, off2 = tgt
                a_sub = a[jdx][:, idx]
                if a_sub.nnz == 0:
                    continue
                b_sub = b[jdx][:, idx]
                if b_sub.nnz == 0:
                    continue
                m = sp.kron(b_sub.conj(), a_sub, format="coo")
                rows.append(m.row + off2)
                cols.append(m.col + off)
                vals.append(w * m.data)

        add(k, eye, 1.0, 0)
        add(eye, k, 1.0, 0)
        for a, w in sandwiches:
            add(a, a, w, _charge_shift(a, q))
        n = lay.size
        mat = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        mat.sum_duplicates()
        return mat

    def apply_packed(self, x: np.ndarray) -> np.ndarray:
        return self.sector_matrix @ x


def _is_hermitian(rho: np.ndarray) -> bool:
    return rho.shape[0] <= 512 and np.allclose(rho, rho.conj().T, atol=0, rtol=0)


# builders -------------------------------------------------------------------


def _local_noise_terms(spec: NetworkSpec, space: HilbertSpace) -> list[Term]:
    terms = []
    for w in "AB":
        for i in range(1, spec.N + 1):
            if spec.gamma_phi:
                terms.append(dissipator(sigma_z(space, w, i), 0.5 * spec.gamma_phi, f"dephase {w}{i}"))
            if spec.gamma_prime:
                terms.append(dissipator(sigma_minus(space, w, i), spec.gamma_prime, f"offguide {w}{i}"))
    return terms


def build_effective_me(spec: NetworkSpec) -> Superoperator:
    """Qubit-only generator obtained after eliminating the amplifier modes.

    Loss-free specs use the collective form -i[H_casc, .] + D[J_A] + D[J_B];
    lossy specs (or model ``lossy_effective``) use the local decay, pairwise
    cascade terms, the subtracted collective decay and D[J_A] + D[J_B].
    """
    if spec.model not in ("effective", "lossy_effective"):
        raise ModelError(f"effective generator requested for model {spec.model!r}")
    if spec.n_max is not None:
        log.warning("n_max=%s ignored by the qubit-only effective model", spec.n_max)
    space = spec.qubit_space()
    ja, jb, la, lb = build_jump_ops(spec, space)
    if spec.model == "effective" and spec.loss_free:
        terms = [
            hamiltonian(build_h_casc(spec, space), "H_casc"),
            dissipator(ja, 1.0, "J_A"),
            dissipator(jb, 1.0, "J_B"),
        ]
    else:
        terms = [hamiltonian(QOperator(space, _detuning_hamiltonian(spec, space).data), "detuning")]
        for w, lw in (("A", la), ("B", lb)):
            g = spec.gammas(w)
            eps = spec.loss(w)
            ops = [sigma_minus(space, w, i) for i in range(1, spec.N + 1)]
            for i, op in enumerate(ops):
                terms.append(dissipator(op, g[i], f"decay {w}{i + 1}"))
            for i in range(spec.N):
                for j in range(i + 1, spec.N):
                    rate = math.sqrt(g[i] * g[j] * (1.0 - eps[i + 1, j + 1]))
                    if rate:
                        terms.append(cascade(ops[i], ops[j], rate, f"casc {w}{i + 1}{j + 1}"))
            terms.append(dissipator(lw, -max(g), f"collective {w}"))
        terms += [dissipator(ja, 1.0, "J_A"), dissipator(jb, 1.0, "J_B")]
    terms += _local_noise_terms(spec, space)
    return Superoperator(space, terms, {"model": spec.model, "N": spec.N})


def build_full_me(spec: NetworkSpec) -> Superoperator:
    """Qubits plus the two amplifier modes, truncated at ``spec.n_max`` photons."""
    if spec.model != "full":
        raise ModelError(f"full generator requested for model {spec.model!r}")
    space = spec.space()
    a = {w: mode_op(space, w) for w in "AB"}
    kap = {"A": spec.kappa_A, "B": spec.kappa_B}
    g = spec.gain
    h_chi = 1j * g * (a["A"].dag() @ a["B"].dag() - a["A"] @ a["B"])
    terms = [hamiltonian(QOperator(space, h_chi.data, hermitian=True), "H_chi")]
    if spec.N:
        terms.append(hamiltonian(_detuning_hamiltonian(spec, space), "detuning"))
    for w in "AB":
        terms.append(dissipator(a[w], kap[w], f"cavity {w}"))
        gam = spec.gammas(w)
        eps = spec.loss(w)
        ops = [sigma_minus(space, w, i) for i in range(1, spec.N + 1)]
        for i, op in enumerate(ops):
            terms.append(dissipator(op, gam[i], f"decay {w}{i + 1}"))
            rate = math.sqrt(kap[w] * gam[i] * (1.0 - eps[0, i + 1]))
            if rate:
                terms.append(cascade(a[w], op, rate, f"casc {w}0{i + 1}"))
        for i in range(spec.N):
            for j in range(i + 1, spec.N):
                rate = math.sqrt(gam[i] * gam[j] * (1.0 - eps[i + 1, j + 1]))
                if rate:
                    terms.append(cascade(ops[i], ops[j], rate, f"casc {w}{i + 1}{j + 1}"))
    terms += _local_noise_terms(spec, space)
    return Superoperator(space, terms, {"model": "full", "N": spec.N, "n_max": spec.n_max})


def build_bidirectional_me(spec: NetworkSpec) -> Superoperator:
    """Generator with right- (gamma_R) and left-moving (gamma_L) emission channels."""
    if spec.model != "bidirectional":
        raise ModelError(f"bidirectional generator requested for model {spec.model!r}")
    space = spec.qubit_space()
    ja, jb, _, _ = build_jump_ops(spec, space)
    h = _detuning_hamiltonian(spec, space)
    coup = np.full((spec.N, spec.N), spec.gamma_R - spec.gamma_L)
    for w in "AB":
        ops = [sigma_minus(space, w, i) for i in range(1, spec.N + 1)]
        if spec.N > 1 and spec.gamma_R != spec.gamma_L:
            h = h + hopping_hamiltonian(ops, coup)
    terms = [
        hamiltonian(QOperator(space, h.data, hermitian=True), "H_chiral"),
        dissipator(ja, spec.gamma_R, "J_A"),
        dissipator(jb, spec.gamma_R, "J_B"),
    ]
    if spec.gamma_L:
        for w in "AB":
            terms.append(
                dissipator(collective_lowering(spec, w, space, weighted=False), spec.gamma_L, f"L_{w}")
            )
    terms += _local_noise_terms(spec, space)
    return Superoperator(space, terms, {"model": "bidirectional", "N": spec.N})


def build_generator(spec: NetworkSpec) -> Superoperator:
    if spec.model == "full":
        return build_full_me(spec)
    if spec.model == "bidirectional":
        return build_bidirectional_me(spec)
    return build_effective_me(spec)


def spectral_gap(L: Superoperator, k: int = 2, zero_tol: float = 1e-10) -> np.ndarray:
    """The ``k`` eigenvalues of smallest |Re lambda| of a small generator.

    Raises ModelError unless exactly one eigenvalue satisfies |lambda| <= zero_tol.
    """
    ev = np.linalg.eigvals(L.matrix())
    ev = ev[np.lexsort((np.abs(ev.imag), np.abs(ev.real)))]
    zeros = int(np.sum(np.abs(ev) <= zero_tol))
    if zeros != 1:
        raise ModelError(f"expected a unique zero eigenvalue, found {zeros}")
    return ev[:k]


def gap_closed_form(r: float, gamma: float = 1.0) -> float:
    """Smallest nonzero |Re lambda| of the single-pair generator at zero detuning."""
    c = math.cosh(2 * r)
    second = (6 * c - math.sqrt(18 * math.cosh(4 * r) - 14)) / 4
    return gamma * min(c / 2, second)


def gap_crossover(lo: float = 0.1, hi: float = 1.0) -> float:
    """Squeezing where the two branches of ``gap_closed_form`` meet."""
    from scipy.optimize import brentq

    def diff(r):
        c = math.cosh(2 * r)
        return c / 2 - (6 * c - math.sqrt(18 * math.cosh(4 * r) - 14)) / 4

    return brentq(diff, lo, hi, xtol=1e-12)


# Fock truncation --------------------------------------------------------------


def default_n_max(spec: NetworkSpec, tail: float = 1e-6) -> int:
    """Smallest cutoff whose thermal tail of the intracavity photon number is below ``tail``.

    Each amplifier mode is in a thermal state with occupancy
    nbar = 2 g^2 / (kappa_A kappa_B - 4 g^2) (for the uncoupled amplifier), so
    P(n > n_max) = (nbar / (1 + nbar))^(n_max + 1).
    """
    kap = math.sqrt(spec.kappa_A * spec.kappa_B)
    g = spec.gain
    nbar = 2 * g * g / (kap * kap - 4 * g * g)
    if nbar == 0:
        return 1
    x = nbar / (1 + nbar)
    return max(1, math.ceil(math.log(tail) / math.log(x)) - 1)


def top_fock_population(state, space: HilbertSpace) -> float:
    """Largest population of the highest retained Fock level over both modes."""
    rho = state.dm() if isinstance(state, QState) else np.asarray(state)
    diag = np.real(np.diag(rho)).reshape(space.dims)
    worst = 0.0
    for p, lab in enumerate(space.labels):
        if lab.kind == "mode":
            top = np.take(diag, space.dims[p] - 1, axis=p)
            worst = max(worst, float(top.sum()))
    return worst


def check_truncation(state, space: HilbertSpace, limit: float = 1e-3) -> float:
    leak = top_fock_population(state, space)
    if leak > limit:
        raise TruncationError(
            f"top Fock level holds population {leak:.3e} > {limit:g}; raise n_max", leak=leak
        )
    return leak
