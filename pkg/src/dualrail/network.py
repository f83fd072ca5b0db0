"""Physical parameterization of a dual-rail network and its Hamiltonians / jump operators.

Rates are dimensionless multiples of the qubit decay rate gamma (gamma = 1 sets
the time unit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ModelError, ThresholdError
from .hilbert import (
    SIGMA_MINUS,
    SIGMA_Z,
    HilbertSpace,
    QOperator,
    destroy,
    embed,
    mode,
    qubit,
)

MODELS = ("effective", "full", "bidirectional", "lossy_effective")


@dataclass(frozen=True)
class Permutation:
    """Bijection of {1..N}; acting on a vector as (P v)_i = v_{image[i]}."""

    image: tuple[int, ...]

    def __post_init__(self):
        img = tuple(int(x) for x in self.image)
        object.__setattr__(self, "image", img)
        if sorted(img) != list(range(1, len(img) + 1)):
            raise ValueError(f"{img} is not a permutation of 1..{len(img)}")

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(1, n + 1)))

    @classmethod
    def reversal(cls, n: int) -> "Permutation":
        return cls(tuple(range(n, 0, -1)))

    def __len__(self):
        return len(self.image)

    def apply(self, vec) -> np.ndarray:
        v = np.asarray(vec, dtype=float)
        return v[np.array(self.image) - 1]

    def inversions(self) -> int:
        img = self.image
        return sum(1 for i in range(len(img)) for j in range(i + 1, len(img)) if img[i] > img[j])


def _as_tuple(x, n, default):
    if x is None:
        return tuple([default] * n)
    if np.isscalar(x):
        return tuple([float(x)] * n)
    return tuple(float(v) for v in x)


def _as_loss(eps, n):
    if eps is None:
        return None
    if np.isscalar(eps):
        if not 0.0 <= float(eps) <= 1.0:
            raise ModelError("chain loss eps must lie in [0, 1]")
        return chain_loss(float(eps), n)
    m = np.asarray(eps, dtype=float)
    if m.shape != (n + 1, n + 1):
        raise ModelError(f"loss matrix must be {(n + 1, n + 1)}, got {m.shape}")
    return tuple(tuple(row) for row in m)


def chain_loss(eps: float, n: int) -> tuple[tuple[float, ...], ...]:
    """Loss matrix eps_{i,j} = eps*|i-j| (index 0 is the amplifier), clipped to [0, 1]."""
    idx = np.arange(n + 1)
    m = np.clip(eps * np.abs(idx[:, None] - idx[None, :]), 0.0, 1.0)
    return tuple(tuple(row) for row in m)


@dataclass(frozen=True)
class NetworkSpec:
    """Full parameter set of a dual-rail network.

    Squeezing is given either as ``r`` or as the amplifier gain ``g`` with the
    mode decay rates ``kappa_A``/``kappa_B``.  For the full model with ``r``
    given, the gain is derived from ``kappa_A``/``kappa_B``.  ``delta_B``
    defaults to ``-P @ delta_A`` (``P`` = ``permutation``, identity if absent).
    Loss matrices are (N+1)x(N+1) with index 0 the amplifier; a scalar means
    the chain preset eps*|i-j|.
    """

    N: int
    r: float | None = None
    g: float | None = None
    kappa_A: float | None = None
    kappa_B: float | None = None
    delta_A: tuple[float, ...] | None = None
    delta_B: tuple[float, ...] | None = None
    permutation: Permutation | None = None
    gamma_A: tuple[float, ...] | None = None
    gamma_B: tuple[float, ...] | None = None
    gamma_phi: float = 0.0
    gamma_prime: float = 0.0
    gamma_L: float = 0.0
    gamma_R: float = 1.0
    epsilon_A: tuple | None = None
    epsilon_B: tuple | None = None
    n_max: int | None = None
    model: str = "effective"

    def __post_init__(self):
        n = int(self.N)
        if n < 0 or (n == 0 and self.model != "full"):
            raise ModelError("N must be >= 1 (N = 0 only for the modes-only full model)")
        object.__setattr__(self, "N", n)
        if self.model not in MODELS:
            raise ModelError(f"unknown model {self.model!r}; expected one of {MODELS}")
        perm = self.permutation
        if perm is not None and not isinstance(perm, Permutation):
            perm = Permutation(tuple(perm))
            object.__setattr__(self, "permutation", perm)
        if perm is not None and len(perm) != n:
            raise ModelError("permutation length must equal N")
        dA = _as_tuple(self.delta_A, n, 0.0)
        object.__setattr__(self, "delta_A", dA)
        if self.delta_B is None:
            p = perm or Permutation.identity(n)
            dB = tuple(float(-x) for x in p.apply(dA)) if n else ()
        else:
            dB = _as_tuple(self.delta_B, n, 0.0)
        object.__setattr__(self, "delta_B", dB)
        if len(dA) != n or len(dB) != n:
            raise ModelError("detuning vectors must have length N")
        object.__setattr__(self, "gamma_A", _as_tuple(self.gamma_A, n, 1.0))
        object.__setattr__(self, "gamma_B", _as_tuple(self.gamma_B, n, 1.0))
        object.__setattr__(self, "epsilon_A", _as_loss(self.epsilon_A, n))
        object.__setattr__(self, "epsilon_B", _as_loss(self.epsilon_B, n))
        for name in ("gamma_phi", "gamma_prime", "gamma_L"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be >= 0")
        if self.gamma_R <= 0:
            raise ModelError("gamma_R must be > 0")
        if any(x <= 0 for x in self.gamma_A + self.gamma_B):
            raise ModelError("qubit decay rates must be > 0")
        for eps in (self.epsilon_A, self.epsilon_B):
            if eps is not None and not np.all((np.asarray(eps) >= 0) & (np.asarray(eps) <= 1)):
                raise ModelError("loss entries must lie in [0, 1]")
        for k in ("kappa_A", "kappa_B"):
            if getattr(self, k) is not None and getattr(self, k) <= 0:
                raise ModelError(f"{k} must be > 0")
        if self.r is None and self.g is None:
            raise ModelError("give either r or (g, kappa_A, kappa_B)")
        if self.r is not None and self.r < 0:
            raise ModelError("r must be >= 0")
        if self.g is not None:
            if self.kappa_A is None or self.kappa_B is None:
                raise ModelError("gain g requires kappa_A and kappa_B")
            squeezing_from_gain(self.g, self.kappa_A, self.kappa_B)  # threshold check
        if self.model == "full":
            if self.n_max is None or self.n_max < 1:
                raise ModelError("full model requires n_max >= 1")
            if self.kappa_A is None or self.kappa_B is None:
                raise ModelError("full model requires kappa_A and kappa_B")

    # derived quantities -------------------------------------------------
    @property
    def squeezing(self) -> float:
        if self.g is not None:
            return squeezing_from_gain(self.g, self.kappa_A, self.kappa_B)
        return float(self.r)

    @property
    def gain(self) -> float:
        if self.g is not None:
            return float(self.g)
        return gain_from_squeezing(self.squeezing, self.kappa_A, self.kappa_B)

    @property
    def loss_free(self) -> bool:
        return all(
            eps is None or not np.any(np.asarray(eps)) for eps in (self.epsilon_A, self.epsilon_B)
        )

    def gammas(self, w: str) -> tuple[float, ...]:
        return self.gamma_A if w == "A" else self.gamma_B

    def deltas(self, w: str) -> tuple[float, ...]:
        return self.delta_A if w == "A" else self.delta_B

    def loss(self, w: str) -> np.ndarray:
        eps = self.epsilon_A if w == "A" else self.epsilon_B
        return np.zeros((self.N + 1, self.N + 1)) if eps is None else np.asarray(eps)

    def uniform_gamma(self) -> float | None:
        vals = set(self.gamma_A + self.gamma_B)
        return vals.pop() if len(vals) == 1 else None

    def with_(self, **changes) -> "NetworkSpec":
        return replace(self, **changes)

    def space(self) -> HilbertSpace:
        return HilbertSpace.network(self.N, self.n_max if self.model == "full" else None)

    def qubit_space(self) -> HilbertSpace:
        return HilbertSpace.network(self.N)


def squeezing_from_gain(g: float, kappa_A: float, kappa_B: float) -> float:
    """r = 2 artanh(2g / sqrt(kappa_A kappa_B)); raises ThresholdError at/above threshold."""
    if g < 0 or kappa_A <= 0 or kappa_B <= 0:
        raise ValueError("need g >= 0 and positive decay rates")
    x = 2.0 * g / math.sqrt(kappa_A * kappa_B)
    if x >= 1.0:
        raise ThresholdError(f"2g/sqrt(kA kB) = {x:.6g} >= 1: amplifier above threshold")
    return 2.0 * math.atanh(x)


def gain_from_squeezing(r: float, kappa_A: float, kappa_B: float) -> float:
    return 0.5 * math.sqrt(kappa_A * kappa_B) * math.tanh(r / 2.0)


def photon_moments(g: float, kappa_A: float, kappa_B: float) -> tuple[float, float]:
    """(N_ph, M_ph) from the rational amplifier formulas, cross-checked against sinh/cosh forms."""
    r = squeezing_from_gain(g, kappa_A, kappa_B)
    k = math.sqrt(kappa_A * kappa_B) / 2.0
    if g == 0:
        n_rat = m_rat = 0.0
    else:
        n_rat = g * k * (1.0 / (k - g) ** 2 - 1.0 / (k + g) ** 2)
        m_rat = g * k * (1.0 / (k - g) ** 2 + 1.0 / (k + g) ** 2)
    n_hyp, m_hyp = math.sinh(r) ** 2, math.sinh(r) * math.cosh(r)
    scale = max(1.0, n_hyp, m_hyp)
    if abs(n_rat - n_hyp) > 1e-10 * scale or abs(m_rat - m_hyp) > 1e-10 * scale:
        raise ArithmeticError(
            f"photon-moment routes disagree: N {n_rat} vs {n_hyp}, M {m_rat} vs {m_hyp}"
        )
    return n_hyp, m_hyp


# operator builders ---------------------------------------------------------


def qubit_ops(space: HilbertSpace, w: str, i: int, local) -> QOperator:
    return embed(local, qubit(w, i), space)


def sigma_minus(space, w, i):
    return embed(SIGMA_MINUS, qubit(w, i), space)


def sigma_z(space, w, i):
    return embed(SIGMA_Z, qubit(w, i), space)


def mode_op(space, w):
    return embed(destroy(space.dim_of(mode(w))), mode(w), space)


def _detuning_hamiltonian(spec: NetworkSpec, space: HilbertSpace) -> QOperator:
    h = QOperator.zero(space)
    for w in "AB":
        for i, d in enumerate(spec.deltas(w), start=1):
            if d:
                h = h + (0.5 * d) * sigma_z(space, w, i)
    return h


def hopping_hamiltonian(ops: Sequence[QOperator], couplings: np.ndarray) -> QOperator:
    """(i/2) sum_{j>i} c_ij (o_i^dag o_j - o_j^dag o_i) for an ordered cascade of operators."""
    h = QOperator.zero(ops[0].space)
    for i in range(len(ops)):
        for j in range(i + 1, len(ops)):
            c = couplings[i, j]
            if c:
                t = ops[i].dag() @ ops[j]
                h = h + (0.5j * c) * (t - t.dag())
    return h


def build_h_casc(spec: NetworkSpec, space: HilbertSpace | None = None) -> QOperator:
    """Detuning terms plus directional hopping sqrt(g_i g_j (1-eps_ij)) within each waveguide."""
    if spec.model not in ("effective", "lossy_effective"):
        raise ModelError(f"H_casc is defined for the effective models, not {spec.model!r}")
    space = space or spec.qubit_space()
    h = _detuning_hamiltonian(spec, space)
    for w in "AB":
        g = np.asarray(spec.gammas(w))
        eps = spec.loss(w)[1:, 1:]
        coup = np.sqrt(np.outer(g, g) * (1.0 - eps))
        ops = [sigma_minus(space, w, i) for i in range(1, spec.N + 1)]
        if len(ops) > 1:
            h = h + hopping_hamiltonian(ops, coup)
    return QOperator(space, h.data, hermitian=True)


def collective_lowering(spec: NetworkSpec, w: str, space: HilbertSpace | None = None,
                        weighted: bool = True) -> QOperator:
    """L_w = sum_i sqrt(gamma_i/gamma_w (1 - eps_0i)) sigma^-_{w,i}; plain sum if not weighted."""
    space = space or spec.qubit_space()
    g = np.asarray(spec.gammas(w))
    eps0 = spec.loss(w)[0, 1:]
    coef = np.sqrt(g / g.max() * (1.0 - eps0)) if weighted else np.ones(spec.N)
    out = QOperator.zero(space)
    for i, c in enumerate(coef, start=1):
        if c:
            out = out + c * sigma_minus(space, w, i)
    return out


def build_jump_ops(spec: NetworkSpec, space: HilbertSpace | None = None):
    """(J_A, J_B, L_A, L_B) with the rate prefactors sqrt(gamma_w) folded into J.

    J_A = sqrt(gA) cosh(r) L_A - sqrt(gB) sinh(r) L_B^dag and symmetrically for B.
    In the bidirectional model the right-moving rate gamma_R is applied by the
    dissipator, so J is built at unit rate there.
    """
    if spec.model not in ("effective", "lossy_effective", "bidirectional"):
        raise ModelError(f"jump operators J are not defined for model {spec.model!r}")
    space = space or spec.qubit_space()
    r = spec.squeezing
    la = collective_lowering(spec, "A", space)
    lb = collective_lowering(spec, "B", space)
    if spec.model == "bidirectional":
        ga = gb = 1.0
    else:
        ga, gb = max(spec.gamma_A), max(spec.gamma_B)
    ch, sh = math.cosh(r), math.sinh(r)
    ja = (math.sqrt(ga) * ch) * la - (math.sqrt(gb) * sh) * lb.dag()
    jb = (math.sqrt(gb) * ch) * lb - (math.sqrt(ga) * sh) * la.dag()
    return ja, jb, la, lb


@dataclass(frozen=True)
class TranspositionStep:
    position: int  # transposition of B-qubits (position, position + 1), 1-based
    theta: float


def decompose_permutation(
    perm: Permutation,
    delta_A,
    gamma: float = 1.0,
    strategy: str = "bubble",
) -> tuple[list[TranspositionStep], np.ndarray]:
    """Adjacent-transposition decomposition taking delta_B = -delta_A to -P delta_A.

    Each step stores theta = atan((dB_i - dB_{i+1}) / gamma) evaluated on the
    current, partially permuted, vector before the swap.  ``strategy`` selects
    bubble sort (canonical) or insertion sort; both give a minimal-length word.
    """
    dA = np.asarray(delta_A, dtype=float)
    n = len(dA)
    if len(perm) != n:
        raise ValueError("permutation length must match delta_A")
    target_pos = {src - 1: pos for pos, src in enumerate(perm.image)}
    cur = list(range(n))  # which delta_A entry sits at each B position
    db = list(-dA)
    steps: list[TranspositionStep] = []

    def swap(i):
        steps.append(TranspositionStep(i + 1, math.atan((db[i] - db[i + 1]) / gamma)))
        cur[i], cur[i + 1] = cur[i + 1], cur[i]
        db[i], db[i + 1] = db[i + 1], db[i]

    if strategy == "bubble":
        for sweep in range(n):
            swapped = False
            for i in range(n - 1 - sweep):
                if target_pos[cur[i]] > target_pos[cur[i + 1]]:
                    swap(i)
                    swapped = True
            if not swapped:
                break
    elif strategy == "insertion":
        for k in range(1, n):
            i = k - 1
            while i >= 0 and target_pos[cur[i]] > target_pos[cur[i + 1]]:
                swap(i)
                i -= 1
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    final = np.array(db)
    assert np.array_equal(final, -perm.apply(dA))
    return steps, final
