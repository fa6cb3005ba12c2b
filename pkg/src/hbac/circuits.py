"""Gate-level PPA rounds and dipolar-coupling utilities."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .core import HBAR, MU_0, DensityMatrix, DiagonalState, State


@dataclass(frozen=True)
class PermutationGate:
    """Basis permutation ``|i> -> |mapping[i]>``."""

    mapping: tuple[int, ...]
    label: str = ""

    def __post_init__(self):
        mp = tuple(int(i) for i in self.mapping)
        if sorted(mp) != list(range(len(mp))):
            raise ValueError(f"mapping of {self.label or 'gate'} is not a bijection")
        object.__setattr__(self, "mapping", mp)

    @property
    def dim(self) -> int:
        return len(self.mapping)

    def matrix(self) -> np.ndarray:
        P = np.zeros((self.dim, self.dim))
        P[list(self.mapping), list(range(self.dim))] = 1.0
        return P

    def inverse(self) -> "PermutationGate":
        inv = [0] * self.dim
        for i, j in enumerate(self.mapping):
            inv[j] = i
        return PermutationGate(tuple(inv), f"{self.label}^-1")

    def to_dict(self) -> dict:
        return {"label": self.label, "dim": self.dim, "mapping": list(self.mapping)}


def identity_gate(n: int) -> PermutationGate:
    return PermutationGate(tuple(range(2**n)), "I")


def swap_gate(n: int, q1: int, q2: int, label: str | None = None) -> PermutationGate:
    """Exchange qubits q1 and q2 of an n-qubit register (qubit 0 = MSB)."""
    s1, s2 = n - 1 - q1, n - 1 - q2
    mapping = []
    for i in range(2**n):
        b1, b2 = (i >> s1) & 1, (i >> s2) & 1
        j = i & ~((1 << s1) | (1 << s2)) | (b1 << s2) | (b2 << s1)
        mapping.append(j)
    return PermutationGate(tuple(mapping), label or f"SWAP({q1},{q2})")


def transposition(dim: int, i: int, j: int, label: str) -> PermutationGate:
    mapping = list(range(dim))
    mapping[i], mapping[j] = j, i
    return PermutationGate(tuple(mapping), label)


# |011> <-> |100>: the only exchange needed once all three qubits share one polarization
COMPRESS3 = transposition(8, 0b011, 0b100, "COMPRESS3")

TARGET, QUBIT2, RESET = 0, 1, 2


def ppa3_gate_sequence(round: int) -> list[PermutationGate]:
    """Compression gates of one round of 3-qubit PPA (one gate per iteration)."""
    if round < 1:
        raise ValueError("round must be >= 1")
    swap_2r = swap_gate(3, QUBIT2, RESET, "SWAP(q2,R)")
    if round == 1:
        return [swap_gate(3, TARGET, RESET, "SWAP(T,R)"), swap_2r, COMPRESS3]
    return [swap_2r, COMPRESS3]


def apply_gate(state: State, gate: PermutationGate) -> State:
    if state.dim != gate.dim:
        raise ValueError(f"gate dimension {gate.dim} does not match state dimension {state.dim}")
    inv = gate.inverse().mapping
    if isinstance(state, DiagonalState):
        return DiagonalState(state.probs[list(inv)])
    idx = np.array(inv)
    return DensityMatrix(state.matrix[np.ix_(idx, idx)])


def gates_to_json(gates: list[PermutationGate]) -> str:
    return json.dumps([g.to_dict() for g in gates], indent=1)


def gates_from_json(text: str) -> list[PermutationGate]:
    return [PermutationGate(tuple(g["mapping"]), g.get("label", "")) for g in json.loads(text)]


def simulate_ppa3_rounds(eps_b: float, rounds: int, initial: DiagonalState | None = None) -> list[DiagonalState]:
    """Gate-by-gate 3-qubit PPA: refresh the reset qubit, then apply the next gate.

    Returns the state after every iteration.
    """
    p = DiagonalState.maximally_mixed(8) if initial is None else initial
    bath = np.array([(1 + eps_b) / 2, (1 - eps_b) / 2])
    out = []
    for r in range(1, rounds + 1):
        for gate in ppa3_gate_sequence(r):
            p = DiagonalState(np.kron(p.probs.reshape(4, 2).sum(axis=1), bath))
            p = apply_gate(p, gate)
            out.append(p)
    return out


@dataclass(frozen=True)
class DipolarPair:
    gamma_i: float
    gamma_j: float
    r: float
    theta: float
    homonuclear: bool = field(default=False)

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"distance must be positive, got {self.r}")


def dipolar_coupling(pair: DipolarPair) -> float:
    """Secular dipolar coupling constant d_ij in rad/s."""
    angular = (3 * math.cos(pair.theta) ** 2 - 1) / 2
    return -HBAR * MU_0 * pair.gamma_i * pair.gamma_j / (4 * math.pi * pair.r**3) * angular


_SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
_SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2


def _pair_ops(op):
    return np.kron(op, np.eye(2)), np.kron(np.eye(2), op)


def _dot_product() -> np.ndarray:
    return sum(np.kron(o, o) for o in (_SX, _SY, _SZ))


def homonuclear_hamiltonian(d_ij: float) -> np.ndarray:
    zi, zj = _pair_ops(_SZ)
    return d_ij * (3 * zi @ zj - _dot_product())


def heteronuclear_hamiltonian(d_ij: float) -> np.ndarray:
    zi, zj = _pair_ops(_SZ)
    return d_ij * 2 * zi @ zj


def dipolar_hamiltonian(pair: DipolarPair) -> np.ndarray:
    d = dipolar_coupling(pair)
    return homonuclear_hamiltonian(d) if pair.homonuclear else heteronuclear_hamiltonian(d)


def exchange_hamiltonian(d_ij: float) -> np.ndarray:
    """Effective spin-exchange Hamiltonian (d_ij/3) I_i . I_j of a time-suspension sequence."""
    return d_ij / 3 * _dot_product()


def swap_duration(d_ij: float) -> float:
    """Time under the exchange Hamiltonian that yields SWAP: 3 / (2 |d_ij| / 2pi)."""
    if d_ij == 0 or not math.isfinite(d_ij):
        raise ValueError("a vanishing coupling cannot produce a SWAP")
    return 3 / (2 * abs(d_ij) / (2 * math.pi))


SWAP_MATRIX = swap_gate(2, 0, 1).matrix()


def gate_fidelity(U: np.ndarray, V: np.ndarray) -> float:
    """|Tr(U^dag V)| / dim, insensitive to global phase."""
    return abs(np.trace(U.conj().T @ V)) / U.shape[0]


def exchange_swap_fidelity(d_ij: float) -> float:
    U = expm(-1j * exchange_hamiltonian(d_ij) * swap_duration(d_ij))
    return gate_fidelity(SWAP_MATRIX, U)
