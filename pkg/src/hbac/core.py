"""Constants, polarization helpers and the register state model.

Bit ordering used everywhere in the package: qubit 0 (the target) is the most
significant bit of a basis index, the reset qubits occupy the least
significant bits.  Basis state ``|0>`` of a qubit is the more populated
(ground) level, so polarization is ``P(bit=0) - P(bit=1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.constants as sc

HBAR = sc.hbar
PLANCK = sc.h
K_B = sc.k
MU_0 = sc.mu_0
BOHR_MAGNETON = sc.physical_constants["Bohr magneton"][0]
FREE_ELECTRON_G = -sc.physical_constants["electron g factor"][0]

# rad s^-1 T^-1; magnitudes except where the sign is physical (15N).
GYROMAGNETIC_RATIOS = {
    "1H": sc.physical_constants["proton gyromag. ratio"][0],
    "13C": 67.2828e6,
    "15N": -27.116e6,
    "e": sc.physical_constants["electron gyromag. ratio"][0],
}

STATE_ATOL = 1e-12


def gyromagnetic_ratio(species: str) -> float:
    try:
        return GYROMAGNETIC_RATIOS[species]
    except KeyError:
        raise KeyError(
            f"unknown species {species!r}; known: {sorted(GYROMAGNETIC_RATIOS)}"
        ) from None


@dataclass(frozen=True)
class ThermalSpec:
    """A spin species in a field at a temperature."""

    gamma: float
    B0: float
    temperature: float

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.B0 < 0:
            raise ValueError(f"B0 must be non-negative, got {self.B0}")


@dataclass(frozen=True)
class SystemShape:
    """Target qubit + compression qudit of dimension ``d`` + ``m`` reset qubits."""

    n_prime: int
    m: int = 1
    d: int | None = None

    def __post_init__(self):
        if self.n_prime < 0:
            raise ValueError("n_prime must be >= 0")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.d is None:
            object.__setattr__(self, "d", 2**self.n_prime)
        if self.d < 1:
            raise ValueError("d must be >= 1")

    @classmethod
    def from_qubits(cls, n: int, m: int = 1) -> "SystemShape":
        """Qubit register of ``n`` qubits in total, ``m`` of which are reset qubits."""
        if n < m + 1:
            raise ValueError(f"need at least {m + 1} qubits for m={m}, got {n}")
        return cls(n_prime=n - 1 - m, m=m)

    @property
    def qubit_realized(self) -> bool:
        return self.d == 2**self.n_prime

    @property
    def n_qubits(self) -> int:
        if not self.qubit_realized:
            raise ValueError(f"d={self.d} is not a power of two")
        return 1 + self.n_prime + self.m

    @property
    def comp_dim(self) -> int:
        """Dimension of the computational part (target + qudit)."""
        return 2 * self.d

    @property
    def dim(self) -> int:
        return 2 * self.d * 2**self.m


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiagonalState:
    """Probability vector over the register basis (target = most significant bit)."""

    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("probs must be a 1-D vector with at least 2 entries")
        if np.any(p < -STATE_ATOL):
            raise ValueError(f"negative probability {p.min():.3e}")
        if abs(p.sum() - 1.0) > STATE_ATOL * max(1.0, math.sqrt(p.size)):
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", _as_readonly(p))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DiagonalState":
        return cls(np.full(dim, 1.0 / dim))

    @classmethod
    def product(cls, polarizations) -> "DiagonalState":
        """Product of single-qubit states diag((1+e)/2, (1-e)/2), qubit 0 first."""
        p = np.ones(1)
        for e in polarizations:
            p = np.kron(p, [(1 + e) / 2, (1 - e) / 2])
        return cls(p)

    @property
    def dim(self) -> int:
        return self.probs.size

    @property
    def n_qubits(self) -> int:
        n = self.dim.bit_length() - 1
        if 2**n != self.dim:
            raise ValueError(f"dimension {self.dim} is not a power of two")
        return n


@dataclass(frozen=True)
class DensityMatrix:
    """Dense Hermitian, unit-trace matrix."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = np.asarray(self.matrix, dtype=complex)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError("density matrix must be square")
        if np.max(np.abs(r - r.conj().T)) > STATE_ATOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(r) - 1.0) > 1e-9:
            raise ValueError(f"trace is {np.trace(r)!r}, not 1")
        object.__setattr__(self, "matrix", _as_readonly(r))

    @classmethod
    def from_diagonal(cls, state: DiagonalState) -> "DensityMatrix":
        return cls(np.diag(state.probs).astype(complex))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        n = self.dim.bit_length() - 1
        if 2**n != self.dim:
            raise ValueError(f"dimension {self.dim} is not a power of two")
        return n

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal().real.copy()

    def to_diagonal_state(self) -> DiagonalState:
        return DiagonalState(self.diagonal())

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


State = Union[DiagonalState, DensityMatrix]


def probabilities(state: State) -> np.ndarray:
    if isinstance(state, DiagonalState):
        return state.probs
    return state.diagonal()


def thermal_polarization(spec: ThermalSpec) -> float:
    """Equilibrium polarization tanh(hbar*gamma*B0 / (2 k_B T))."""
    return math.tanh(HBAR * spec.gamma * spec.B0 / (2 * K_B * spec.temperature))


def polarization_from_frequency(frequency: float, temperature: float) -> float:
    """Equilibrium polarization of a two-level system split by ``frequency`` (Hz)."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    return math.tanh(PLANCK * frequency / (2 * K_B * temperature))


def temperature_for_polarization(epsilon: float, gamma: float, B0: float) -> float:
    """Invert :func:`thermal_polarization` for the temperature."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    return HBAR * gamma * B0 / (2 * K_B * math.atanh(epsilon))


def pseudo_pure_purity(epsilon: float, n: int) -> float:
    """Purity ((1+e)^n - 1) / (2^n - 1) of the pseudo-pure state of ``n`` spins.

    Evaluated as expm1(n*log1p(e)) so that tiny ``e`` at large ``n`` keeps its
    relative precision.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not -1 <= epsilon <= 1:
        raise ValueError(f"epsilon must lie in [-1, 1], got {epsilon}")
    if epsilon == -1:
        return -1.0 / (2**n - 1)
    return math.expm1(n * math.log1p(epsilon)) / (2**n - 1)


def qec_ancilla_threshold(eps1: float, eps2: float) -> bool:
    """True when two mixed ancillas are good enough for 3-qubit phase-flip QEC."""
    return (1 + eps1) * (1 + eps2) / 4 > 0.5


def qubit_polarization(state: State, index: int) -> float:
    """<sigma_z> of qubit ``index`` (0 = target, most significant bit)."""
    probs = probabilities(state)
    n = state.n_qubits
    if not 0 <= index < n:
        raise IndexError(f"qubit index {index} out of range for {n} qubits")
    p = probs.reshape(2**index, 2, 2 ** (n - index - 1)).sum(axis=(0, 2))
    return float(p[0] - p[1])


def all_polarizations(probs: np.ndarray) -> np.ndarray:
    """Polarization of every qubit of a power-of-two probability vector."""
    n = probs.size.bit_length() - 1
    t = probs.reshape((2,) * n)
    out = np.empty(n)
    for k in range(n):
        axes = tuple(j for j in range(n) if j != k)
        m = t.sum(axis=axes)
        out[k] = m[0] - m[1]
    return out


def target_polarization(probs: np.ndarray) -> float:
    """First half minus second half; valid for qudit registers too."""
    h = probs.size // 2
    return float(probs[:h].sum() - probs[h:].sum())
