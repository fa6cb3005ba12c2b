"""Partner Pairing Algorithm: refresh and compression on diagonal states and
density matrices, plus the iteration driver."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import (
    DensityMatrix,
    DiagonalState,
    State,
    SystemShape,
    all_polarizations,
    polarization_from_frequency,
    target_polarization,
)


@dataclass(frozen=True)
class PpaConfig:
    shape: SystemShape
    bath_polarization: float
    reset_efficiency: float = 1.0
    max_iterations: int = 1000
    convergence_epsilon: float = 1e-12
    record_states: bool = False

    def __post_init__(self):
        if not -1 <= self.bath_polarization <= 1:
            raise ValueError("bath_polarization must lie in [-1, 1]")
        if not 0 < self.reset_efficiency <= 1:
            raise ValueError("reset_efficiency must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    @property
    def reset_polarization(self) -> float:
        return self.reset_efficiency * self.bath_polarization


def _bath_vector(eps: float, m: int) -> np.ndarray:
    b = np.ones(1)
    q = np.array([(1 + eps) / 2, (1 - eps) / 2])
    for _ in range(m):
        b = np.kron(b, q)
    return b


def _check_dim(state: State, shape: SystemShape):
    if state.dim != shape.dim:
        raise ValueError(f"state dimension {state.dim} does not match shape dimension {shape.dim}")


def refresh_probs(probs: np.ndarray, m: int, eps: float) -> np.ndarray:
    reduced = probs.reshape(-1, 2**m).sum(axis=1)
    return np.outer(reduced, _bath_vector(eps, m)).ravel()


def compress_probs(probs: np.ndarray) -> np.ndarray:
    # stable on the negated vector: ties keep their original order
    return probs[np.argsort(-probs, kind="stable")]


def refresh(state: State, config: PpaConfig) -> State:
    """Trace out the reset qubits and replace them with fresh bath qubits."""
    _check_dim(state, config.shape)
    m = config.shape.m
    eps = config.reset_polarization
    if isinstance(state, DiagonalState):
        return DiagonalState(refresh_probs(state.probs, m, eps))
    M = 2**m
    D = state.dim // M
    r = state.matrix.reshape(D, M, D, M)
    reduced = np.einsum("aibi->ab", r)
    return DensityMatrix(np.kron(reduced, np.diag(_bath_vector(eps, m))))


def compress(state: State) -> State:
    """Permute the basis so the diagonal is in non-increasing order."""
    if isinstance(state, DiagonalState):
        return DiagonalState(compress_probs(state.probs))
    perm = np.argsort(-state.diagonal(), kind="stable")
    return DensityMatrix(state.matrix[np.ix_(perm, perm)])


@dataclass
class PpaTrace:
    """Per-iteration record of a PPA run.

    ``refresh_polarizations[t]`` and ``compress_polarizations[t]`` hold every
    qubit's polarization after the refresh and compression of iteration
    ``t + 1``.  For qudit registers only the target column is filled.
    """

    config: PpaConfig
    refresh_target: np.ndarray
    compress_target: np.ndarray
    refresh_polarizations: np.ndarray
    compress_polarizations: np.ndarray
    converged: bool
    final_state: DiagonalState
    snapshots: list[np.ndarray] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return self.compress_target.size

    @property
    def final_polarization(self) -> float:
        return float(self.compress_target[-1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "phase", "qubit_index", "polarization"])
        for t in range(self.iterations):
            for phase, pols in (("refresh", self.refresh_polarizations), ("compress", self.compress_polarizations)):
                for q, value in enumerate(pols[t]):
                    w.writerow([t + 1, phase, q, format_real(value)])
        return buf.getvalue()

    def to_json(self) -> str:
        shape = self.config.shape
        doc = {
            "shape": {"n_prime": shape.n_prime, "m": shape.m, "d": shape.d},
            "bath_polarization": self.config.bath_polarization,
            "reset_efficiency": self.config.reset_efficiency,
            "converged": self.converged,
            "iterations": self.iterations,
            "records": [
                {
                    "iteration": t + 1,
                    "refresh_target": float(self.refresh_target[t]),
                    "compress_target": float(self.compress_target[t]),
                    "polarizations": [float(v) for v in self.compress_polarizations[t]],
                }
                for t in range(self.iterations)
            ],
            "final_state": [float(v) for v in self.final_state.probs],
        }
        if self.snapshots:
            for rec, snap in zip(doc["records"], self.snapshots):
                rec["state"] = [float(v) for v in snap]
        return json.dumps(doc, indent=1)


def format_real(x: float) -> str:
    return format(float(x), ".17g")


def run_ppa(config: PpaConfig, initial: DiagonalState | None = None) -> PpaTrace:
    """Alternate refresh and compression until the state stops changing.

    Convergence is declared when both the target polarization and every
    diagonal entry change by less than ``convergence_epsilon`` over one
    iteration.  Target polarization alone is not enough: it stalls for whole
    iterations while entropy is still moving between the other qubits.
    """
    shape = config.shape
    if initial is None:
        initial = DiagonalState.maximally_mixed(shape.dim)
    _check_dim(initial, shape)

    qubits = shape.qubit_realized
    ncol = shape.n_qubits if qubits else 1
    m = shape.m
    eps = config.reset_polarization
    tol = config.convergence_epsilon

    def pols(p):
        return all_polarizations(p) if qubits else np.array([target_polarization(p)])

    refresh_pol = []
    compress_pol = []
    snapshots = []
    p = np.array(initial.probs)
    prev_target = target_polarization(p)
    converged = False
    for _ in range(config.max_iterations):
        r = refresh_probs(p, m, eps)
        refresh_pol.append(pols(r))
        c = compress_probs(r)
        compress_pol.append(pols(c))
        if config.record_states:
            snapshots.append(c.copy())
        target = compress_pol[-1][0]
        change = np.max(np.abs(c - p))
        p = c
        if abs(target - prev_target) < tol and change < tol:
            converged = True
            break
        prev_target = target

    refresh_pol = np.array(refresh_pol).reshape(-1, ncol)
    compress_pol = np.array(compress_pol).reshape(-1, ncol)
    return PpaTrace(
        config=config,
        refresh_target=refresh_pol[:, 0].copy(),
        compress_target=compress_pol[:, 0].copy(),
        refresh_polarizations=refresh_pol,
        compress_polarizations=compress_pol,
        converged=converged,
        final_state=DiagonalState(p / p.sum()),
        snapshots=snapshots,
    )


def run_ppa_general(config: PpaConfig, initial: DensityMatrix, iterations: int) -> DensityMatrix:
    """Fixed number of PPA iterations on a dense density matrix."""
    rho = initial
    for _ in range(iterations):
        rho = compress(refresh(rho, config))
    return rho


DEFAULT_ELECTRON_FREQUENCY = 9.7e9  # Hz, X-band


@numba.njit(cache=True)
def _merge_kernel(S, a, b, iterations, record_every, half):  # pragma: no cover - compiled
    D = S.size
    A = np.empty(D)
    B = np.empty(D)
    S2 = np.empty(D)
    out = np.empty(iterations // record_every)
    k = 0
    for t in range(1, iterations + 1):
        for r in range(D):
            A[r] = a * S[r]
            B[r] = b * S[r]
        i = 0
        j = 0
        for r in range(D):
            if j >= D or (i < D and A[i] >= B[j]):
                x = A[i]
                i += 1
            else:
                x = B[j]
                j += 1
            if j >= D or (i < D and A[i] >= B[j]):
                y = A[i]
                i += 1
            else:
                y = B[j]
                j += 1
            S2[r] = x + y
        S, S2 = S2, S
        if t % record_every == 0:
            out[k] = S[:half].sum() - S[half:].sum()
            k += 1
    return S, out


def ppa_target_curve(
    shape: SystemShape,
    eps: float,
    iterations: int,
    record_every: int = 1,
    computational: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Target polarization curve of a single-reset-qubit PPA run.

    Works on the computational diagonal only: refresh followed by compression
    is a merge of the two sorted lists ``(1+e)/2 * S`` and ``(1-e)/2 * S``
    followed by summing neighbouring pairs, which is O(2^n) per iteration.
    Returns (iteration numbers, target polarizations, final computational
    diagonal).
    """
    if shape.m != 1:
        raise ValueError("the merge kernel handles one reset qubit only")
    if record_every < 1 or iterations < record_every:
        raise ValueError("need iterations >= record_every >= 1")
    D = shape.comp_dim
    S = np.full(D, 1.0 / D) if computational is None else np.sort(np.asarray(computational, float))[::-1].copy()
    if S.size != D:
        raise ValueError(f"computational diagonal must have {D} entries")
    S, curve = _merge_kernel(S, (1 + eps) / 2, (1 - eps) / 2, iterations, record_every, D // 2)
    steps = np.arange(1, curve.size + 1) * record_every
    return steps, curve, S


def run_ppa_12qubit_scan(
    temperatures,
    electron_frequency: float = DEFAULT_ELECTRON_FREQUENCY,
    iterations: int = 1000,
    n_qubits: int = 12,
    reset_efficiency: float = 1.0,
    record_every: int = 1,
) -> list[dict]:
    """Target polarization versus iteration for an electron-reset register.

    One electron acts as the single reset qubit; the remaining qubits are
    nuclear computational qubits.  Returns one row per (temperature,
    recorded iteration) with the bath polarization alongside.
    """
    shape = SystemShape.from_qubits(n_qubits, m=1)
    rows = []
    for T in temperatures:
        eps_b = polarization_from_frequency(electron_frequency, T)
        steps, curve, _ = ppa_target_curve(shape, reset_efficiency * eps_b, iterations, record_every)
        for t, pol in zip(steps, curve):
            rows.append(
                {"temperature": T, "eps_b": eps_b, "iteration": int(t), "target_polarization": float(pol)}
            )
    return rows
