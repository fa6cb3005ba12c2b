"""Open-system dynamics of electron-nuclear registers.

States are stored in the frame rotating at the electron Zeeman frequency
``w_S`` (about S_z), in the computational product basis of ``hbac.espin``.
The free Hamiltonian in that frame is the secular Hamiltonian minus
``w_S S_z``.  Dissipators are written in the spin basis.  Electron
dissipators commute with the frame rotation, so they are frame independent.

Polarizations reported by this module are measured in the eigenbasis of
the free Hamiltonian as P(label 0) - P(label 1), where label 0 is the
lower-energy partner for the electron and for nuclei with positive
gyromagnetic ratio.  A thermal register therefore has positive electron
polarization.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.linalg import expm

from . import espin
from .core import HBAR, K_B, DensityMatrix

_SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
_RAISE = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|: towards S_z = +1/2
_LOWER = _RAISE.T.copy()


@dataclass(frozen=True)
class RelaxationSpec:
    """Per-spin T1/T2 (electron first), electron T2*, bath temperature.

    Infinite times switch the corresponding channel off; an infinite T2*
    means no inhomogeneous broadening.
    """

    T1: tuple[float, ...]
    T2: tuple[float, ...]
    T2_star: float = math.inf
    bath_temperature: float = 300.0

    def __post_init__(self):
        T1 = tuple(float(x) for x in self.T1)
        T2 = tuple(float(x) for x in self.T2)
        if len(T1) != len(T2) or not T1:
            raise ValueError("T1 and T2 need one entry per spin")
        for k, (t1, t2) in enumerate(zip(T1, T2)):
            if not (t1 > 0 and t2 > 0):
                raise ValueError(f"spin {k}: relaxation times must be positive")
            if t2 > 2 * t1:
                raise ValueError(f"spin {k}: T2={t2:g} exceeds 2*T1={2 * t1:g}")
        if not self.T2_star > 0:
            raise ValueError("T2_star must be positive")
        if math.isfinite(self.T2_star) and self.T2_star > T2[0]:
            raise ValueError("electron T2_star may not exceed its T2")
        if self.bath_temperature < 0:
            raise ValueError("bath_temperature must be >= 0")
        object.__setattr__(self, "T1", T1)
        object.__setattr__(self, "T2", T2)

    @classmethod
    def closed(cls, n_spins: int, bath_temperature: float = 300.0) -> "RelaxationSpec":
        return cls((math.inf,) * n_spins, (math.inf,) * n_spins, math.inf, bath_temperature)

    @property
    def n_spins(self) -> int:
        return len(self.T1)


def _op(op, k, n):
    return espin.spin_operator(op, k, n)


def thermal_sz(larmor: float, temperature: float) -> float:
    """Equilibrium <sigma_z> of a spin whose Hamiltonian is larmor * S_z."""
    if larmor == 0:
        return 0.0
    if temperature == 0:
        return -math.copysign(1.0, larmor)
    return -math.tanh(HBAR * larmor / (2 * K_B * temperature))


def larmor_from_hamiltonian(H: np.ndarray) -> tuple[float, ...]:
    """S_z coefficient of each spin, the projection Tr(H S_z^k) / Tr(S_z^k S_z^k)."""
    dim = H.shape[0]
    n = int(round(math.log2(dim)))
    return tuple(float(np.real(np.trace(H @ _op(_SZ, k, n)))) * 4 / dim for k in range(n))


def collapse_operators(relax: RelaxationSpec, larmor) -> list[np.ndarray]:
    n = relax.n_spins
    out = []
    for k in range(n):
        T1, T2 = relax.T1[k], relax.T2[k]
        z = thermal_sz(larmor[k], relax.bath_temperature)
        g1 = 1.0 / T1
        if g1 > 0:
            up, down = (1 + z) / 2 * g1, (1 - z) / 2 * g1
            if up > 0:
                out.append(math.sqrt(up) * _op(_RAISE, k, n))
            if down > 0:
                out.append(math.sqrt(down) * _op(_LOWER, k, n))
        g_phi = 1.0 / T2 - 0.5 / T1
        if g_phi > 0:
            out.append(math.sqrt(g_phi / 2) * _op(2 * _SZ, k, n))
    return out


def hamiltonian_superoperator(H: np.ndarray) -> np.ndarray:
    """-i[H, .] acting on row-major vec(rho)."""
    eye = np.eye(H.shape[0])
    return -1j * (np.kron(H, eye) - np.kron(eye, H.T))


def liouvillian(H: np.ndarray, ops) -> np.ndarray:
    L = hamiltonian_superoperator(H)
    eye = np.eye(H.shape[0])
    for c in ops:
        cdc = c.conj().T @ c
        L += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    return L


def _apply(S: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    out = (S @ rho.reshape(-1)).reshape(d, d)
    return (out + out.conj().T) / 2


def propagator(L: np.ndarray, t: float) -> np.ndarray:
    """exp(L t).

    Long times go through the eigendecomposition of L, because scaling and
    squaring loses about |L| t * 1e-16 in trace.  Eigenvalues at roundoff
    level are set to exactly 0 (stationary modes) and positive real parts
    are clipped, which keeps the map trace preserving to ~1e-13.
    """
    norm = np.abs(L).sum(axis=0).max()
    if norm * t <= 1e3:
        return expm(L * t)
    w, R = scipy.linalg.eig(L)
    w[np.abs(w) < 1e-14 * norm] = 0
    w.real = np.minimum(w.real, 0)
    Ri = np.linalg.inv(R)
    if np.abs((R * w) @ Ri - L).max() > 1e-9 * norm:
        return expm(L * t)
    return (R * np.exp(w * t)) @ Ri


def _check(rho: DensityMatrix, H: np.ndarray, relax: RelaxationSpec):
    if rho.dim != H.shape[0]:
        raise ValueError("state and Hamiltonian dimensions differ")
    if 2**relax.n_spins != rho.dim:
        raise ValueError(f"relaxation spec has {relax.n_spins} spins, state has dimension {rho.dim}")


def lindblad_propagate(
    rho: DensityMatrix, H: np.ndarray, relax: RelaxationSpec, t: float, larmor=None
) -> DensityMatrix:
    """Evolve under the Lindblad equation for time ``t``.

    ``larmor`` gives the S_z coefficient (rad/s) of each spin in the lab
    frame, which fixes the thermal polarizations of the amplitude-damping
    pairs.  By default it is read off ``H``.
    """
    _check(rho, H, relax)
    if t < 0:
        raise ValueError("t must be >= 0")
    larmor = larmor_from_hamiltonian(H) if larmor is None else larmor
    L = liouvillian(H, collapse_operators(relax, larmor))
    return DensityMatrix(_apply(propagator(L, t), rho.matrix))


def thermal_state(relax: RelaxationSpec, larmor) -> DensityMatrix:
    m = np.ones((1, 1))
    for w in larmor:
        z = thermal_sz(w, relax.bath_temperature)
        m = np.kron(m, np.diag([(1 + z) / 2, (1 - z) / 2]))
    return DensityMatrix(m.astype(complex))


# ---------------------------------------------------------------------------
# register in the electron rotating frame


@dataclass(frozen=True)
class Register:
    """Secular parameters plus the objects every propagation needs."""

    params: espin.SecularParams
    offset: float = 0.0  # electron Zeeman offset (T2* sample), rad/s
    H: np.ndarray = field(init=False, repr=False)
    V: np.ndarray = field(init=False, repr=False)
    labels: tuple = field(init=False, repr=False)
    energies: np.ndarray = field(init=False, repr=False)
    larmor: tuple = field(init=False, repr=False)

    def __post_init__(self):
        p = self.params
        n = p.k + 1
        H = espin.hamiltonian(p) + (self.offset - p.omega_S) * _op(_SZ, 0, n)
        lv = espin.levels(p)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "V", np.column_stack([x.vector for x in lv]).astype(complex))
        object.__setattr__(self, "labels", tuple(x.labels for x in lv))
        object.__setattr__(self, "energies", np.array([x.energy for x in lv]))
        object.__setattr__(self, "larmor", (p.omega_S,) + tuple(-q.omega_I for q in p.nuclei))

    @property
    def n_spins(self) -> int:
        return self.params.k + 1

    @property
    def Sz(self) -> np.ndarray:
        return _op(_SZ, 0, self.n_spins)

    def eigen_populations(self, rho: DensityMatrix) -> np.ndarray:
        return np.real(np.einsum("ia,ij,ja->a", self.V.conj(), rho.matrix, self.V))

    def polarizations(self, rho: DensityMatrix) -> np.ndarray:
        p = self.eigen_populations(rho).reshape((2,) * self.n_spins)
        out = []
        for k in range(self.n_spins):
            marg = np.moveaxis(p, k, 0).reshape(2, -1).sum(axis=1)
            sign = 1.0 if k == 0 or self.params.nuclei[k - 1].omega_I >= 0 else -1.0
            out.append(sign * (marg[0] - marg[1]))
        return np.array(out)


def thermal_register_state(reg: Register, relax: RelaxationSpec) -> DensityMatrix:
    return thermal_state(relax, reg.larmor)


def reset_by_wait(rho: DensityMatrix, reg: Register, relax: RelaxationSpec, wait_multiple: float = 5.0) -> DensityMatrix:
    """Free relaxation for ``wait_multiple`` electron T1 periods."""
    if not wait_multiple > 0:
        raise ValueError("wait_multiple must be positive")
    t = wait_multiple * relax.T1[0]
    if not math.isfinite(t):
        raise ValueError("reset by waiting needs a finite electron T1")
    return lindblad_propagate(rho, reg.H, relax, t, reg.larmor)


def ideal_electron_reset(rho: DensityMatrix, reg: Register, relax: RelaxationSpec) -> DensityMatrix:
    """Replace the electron label by its thermal distribution, nuclei untouched."""
    d = rho.dim
    r = (reg.V.conj().T @ rho.matrix @ reg.V).reshape(2, d // 2, 2, d // 2)
    nuclear = np.einsum("aiaj->ij", r)
    eps = math.tanh(HBAR * reg.params.omega_S / (2 * K_B * relax.bath_temperature)) if relax.bath_temperature > 0 else 1.0
    electron = np.diag([(1 + eps) / 2, (1 - eps) / 2])
    new = np.kron(electron, nuclear)
    return DensityMatrix(reg.V @ new @ reg.V.conj().T)


# ---------------------------------------------------------------------------
# pulses


@dataclass(frozen=True)
class PulseSegment:
    """Transition-selective pulse between eigenlevels ``i`` and ``j`` (label order).

    ``amplitude`` is the Rabi frequency on the addressed transition (peak
    value for a Gaussian); ``None`` calibrates it to ``flip_angle``.
    """

    channel: str  # "MW" or "RF"
    transition: tuple[int, int]
    envelope: str = "square"
    duration: float = 50e-9
    amplitude: float | None = None
    carrier_detuning: float = 0.0
    flip_angle: float = math.pi
    steps: int = 200

    def __post_init__(self):
        if self.channel not in ("MW", "RF"):
            raise ValueError("channel must be MW or RF")
        if self.envelope not in ("square", "gaussian"):
            raise ValueError("envelope must be square or gaussian")
        i, j = self.transition
        if i == j:
            raise ValueError("transition needs two distinct levels")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


def gaussian_envelope(steps: int) -> np.ndarray:
    """Midpoint samples of a unit-peak Gaussian, sigma = duration/6, over [-3s, 3s]."""
    x = (np.arange(steps) + 0.5) / steps * 6 - 3
    return np.exp(-(x**2) / 2)


def pulse_amplitudes(pulse: PulseSegment) -> np.ndarray:
    """Per-step Rabi frequency (rad/s)."""
    if pulse.envelope == "square":
        env = np.ones(1)
    else:
        env = gaussian_envelope(pulse.steps)
    dt = pulse.duration / env.size
    if pulse.amplitude is None:
        peak = pulse.flip_angle / (env.sum() * dt)
    else:
        peak = pulse.amplitude
        area = peak * env.sum() * dt
        if abs(area - pulse.flip_angle) > 0.1 * abs(pulse.flip_angle):
            warnings.warn(
                f"pulse area {area:.4g} rad differs from flip angle {pulse.flip_angle:.4g}", stacklevel=3
            )
    return peak * env


def _transition_info(reg: Register, pulse: PulseSegment):
    i, j = pulse.transition
    li, lj = reg.labels[i], reg.labels[j]
    diff = [k for k in range(len(li)) if li[k] != lj[k]]
    freq = abs(reg.energies[j] - reg.energies[i])
    if pulse.channel == "MW":
        if li[0] == lj[0]:
            raise ValueError("an MW pulse must change the electron label")
        X = _op(_SX, 0, reg.n_spins)
        nucleus = None
    else:
        if li[0] != lj[0] or len(diff) != 1:
            raise ValueError("an RF pulse must flip exactly one nucleus within one electron manifold")
        nucleus = diff[0]
        X = _op(_SX, nucleus, reg.n_spins)
    xij = abs(reg.V[:, i].conj() @ X @ reg.V[:, j])
    if xij < 1e-12:
        raise ValueError("the addressed transition has no matrix element")
    return freq, X, xij, nucleus


def selective_pulse(
    rho: DensityMatrix, reg: Register, pulse: PulseSegment, relax: RelaxationSpec, t0: float = 0.0
) -> DensityMatrix:
    """Propagate ``rho`` (electron rotating frame, clock time ``t0``) through one pulse."""
    _check(rho, reg.H, relax)
    freq, X, xij, _ = _transition_info(reg, pulse)
    rabi = pulse_amplitudes(pulse)
    drive = rabi / (2 * xij)
    dt = pulse.duration / rabi.size
    ops = collapse_operators(relax, reg.larmor)
    if pulse.channel == "MW":
        return _mw_pulse(rho, reg, X, drive, dt, freq + pulse.carrier_detuning, ops, t0)
    return _rf_pulse(rho, reg, X, drive, pulse.duration, freq + pulse.carrier_detuning, ops)


def _mw_pulse(rho, reg, X, drive, dt, carrier, ops, t0):
    # carrier frame: H_free - (w_c - w_S) S_z; convert in and out with the clock
    delta = carrier - reg.params.omega_S
    Sz = reg.Sz
    H0 = reg.H - delta * Sz
    L0 = liouvillian(H0, ops)
    L1 = hamiltonian_superoperator(X)
    rot = lambda t: np.diag(np.exp(1j * delta * np.diag(Sz).real * t))  # noqa: E731
    R = rot(t0)
    m = R @ rho.matrix @ R.conj().T
    cache = {}
    for a in drive:
        key = float(a)
        if key not in cache:
            cache[key] = expm((L0 + a * L1) * dt)
        m = _apply(cache[key], m)
    R = rot(t0 + dt * drive.size)
    return DensityMatrix(R.conj().T @ m @ R)


def _rf_pulse(rho, reg, X, drive, duration, carrier, ops, substeps: int = 50):
    # lab-frame drive 2 W cos(w t) I_x on a nucleus; one Floquet period, then powers
    L0 = liouvillian(reg.H, ops)
    L1 = hamiltonian_superoperator(X)
    amp = float(drive[0])
    period = 2 * math.pi / carrier
    h = period / substeps
    phases = (np.arange(substeps) + 0.5) * h * carrier
    U = np.eye(L0.shape[0], dtype=complex)
    for ph in phases:
        U = expm((L0 + 2 * amp * math.cos(ph) * L1) * h) @ U
    n_periods = int(duration // period)
    m = rho.matrix
    m = _apply(np.linalg.matrix_power(U, n_periods), m)
    rest = duration - n_periods * period
    k = int(round(rest / h))
    for ph in phases[:k]:
        m = _apply(expm((L0 + 2 * amp * math.cos(ph) * L1) * h), m)
    return DensityMatrix(m)


def ideal_pulse(rho: DensityMatrix, reg: Register, transition: tuple[int, int]) -> DensityMatrix:
    """Instantaneous population exchange of two eigenlevels."""
    i, j = transition
    perm = list(range(rho.dim))
    perm[i], perm[j] = j, i
    P = np.eye(rho.dim)[:, perm]
    U = reg.V @ P @ reg.V.conj().T
    return DensityMatrix(U @ rho.matrix @ U.conj().T)


def inversion_fidelity(before: np.ndarray, after: np.ndarray, i: int, j: int) -> float:
    """Fraction of the population difference of levels i, j that got inverted."""
    diff = before[i] - before[j]
    return float((after[j] - after[i]) / diff)


# ---------------------------------------------------------------------------
# pulsed ENDOR round


@dataclass(frozen=True)
class EndorOptions:
    mw_duration: float = 50e-9
    mw_envelope: str = "gaussian"
    rf_durations: tuple[float, float] = (15e-6, 60e-6)
    rf_envelope: str = "square"
    wait_multiple: float = 5.0
    mode: str = "pulsed"  # or "ideal": instantaneous permutations
    reset: str = "wait"  # or "ideal": exact electron reset
    mw_steps: int = 200

    def __post_init__(self):
        if self.mode not in ("pulsed", "ideal"):
            raise ValueError("mode must be pulsed or ideal")
        if self.reset not in ("wait", "ideal"):
            raise ValueError("reset must be wait or ideal")


@dataclass
class EndorReport:
    eps_b: float
    steps: list[tuple[str, tuple[float, ...]]]
    final_state: DensityMatrix = field(repr=False)

    @property
    def final_polarizations(self) -> tuple[float, ...]:
        return self.steps[-1][1]

    @property
    def gain(self) -> float:
        return self.final_polarizations[0] / self.eps_b

    def to_dict(self) -> dict:
        return {
            "eps_b": self.eps_b,
            "gain": self.gain,
            "steps": [{"step": name, "polarizations": list(p)} for name, p in self.steps],
        }


def _index(labels) -> int:
    out = 0
    for b in labels:
        out = 2 * out + b
    return out


class _EndorRunner:
    def __init__(self, reg: Register, relax: RelaxationSpec, opts: EndorOptions):
        self.reg, self.relax, self.opts = reg, relax, opts
        self.t = 0.0
        self.steps = []

    def record(self, rho, name):
        self.steps.append((name, tuple(float(x) for x in self.reg.polarizations(rho))))

    def flip(self, rho, channel, a, b, duration):
        if self.opts.mode == "ideal":
            if channel == "MW":
                return ideal_pulse(rho, self.reg, (_index(a), _index(b)))
            # the RF line of a nucleus does not depend on the other nucleus
            spectator = next(k for k in (1, 2) if a[k] == b[k])
            for s in (0, 1):
                a2, b2 = list(a), list(b)
                a2[spectator] = b2[spectator] = s
                rho = ideal_pulse(rho, self.reg, (_index(a2), _index(b2)))
            return rho
        envelope = self.opts.mw_envelope if channel == "MW" else self.opts.rf_envelope
        steps = self.opts.mw_steps if envelope == "gaussian" else 1
        pulse = PulseSegment(channel, (_index(a), _index(b)), envelope, duration, steps=steps)
        rho = selective_pulse(rho, self.reg, pulse, self.relax, self.t)
        self.t += duration
        return rho

    def cnot_e_to_n(self, rho, n):
        # one RF pi pulse on nucleus n inside the excited electron manifold
        a = [1, 0, 0]
        b = [1, 0, 0]
        b[n] = 1
        return self.flip(rho, "RF", a, b, self.opts.rf_durations[n - 1])

    def cnot_n_to_e(self, rho, n):
        other = 3 - n
        for s in (0, 1):
            a = [0, 0, 0]
            a[n], a[other] = 1, s
            b = list(a)
            b[0] = 1
            rho = self.flip(rho, "MW", a, b, self.opts.mw_duration)
        return rho

    def swap(self, rho, n):
        rho = self.cnot_e_to_n(rho, n)
        rho = self.cnot_n_to_e(rho, n)
        return self.cnot_e_to_n(rho, n)

    def reset(self, rho):
        if self.opts.reset == "ideal":
            return ideal_electron_reset(rho, self.reg, self.relax)
        rho = reset_by_wait(rho, self.reg, self.relax, self.opts.wait_multiple)
        self.t += self.opts.wait_multiple * self.relax.T1[0]
        return rho


def run_endor_ppa_round(
    params: espin.SecularParams,
    relax: RelaxationSpec,
    bath_temperature: float | None = None,
    options: EndorOptions = EndorOptions(),
    offset: float = 0.0,
    initial: DensityMatrix | None = None,
) -> EndorReport:
    """One 3-qubit PPA round with the electron as reset and target spin.

    SWAP(e, n1), reset, SWAP(e, n2), reset, then the 3-qubit compression
    CNOT(e,n1) CNOT(e,n2) Toffoli(n1 n2 -> e) CNOT(e,n1) CNOT(e,n2).  Each
    SWAP is three CNOTs; CNOT(e -> n) is one RF pulse in the excited electron
    manifold, CNOT(n -> e) two MW pulses (one per spectator nuclear state).
    """
    if params.k != 2:
        raise ValueError("the ENDOR round needs exactly two nuclei")
    if bath_temperature is not None:
        relax = replace(relax, bath_temperature=bath_temperature)
    if relax.n_spins != 3:
        raise ValueError("relaxation spec must cover 3 spins")
    reg = Register(params, offset)
    eps_b = thermal_sz(-params.omega_S, relax.bath_temperature)
    run = _EndorRunner(reg, relax, options)

    rho = thermal_register_state(reg, relax) if initial is None else initial
    run.record(rho, "initial")
    for n in (1, 2):
        rho = run.swap(rho, n)
        run.record(rho, f"swap_e_n{n}")
        rho = run.reset(rho)
        run.record(rho, f"reset_{n}")
    rho = run.cnot_e_to_n(rho, 1)
    rho = run.cnot_e_to_n(rho, 2)
    rho = run.flip(rho, "MW", [0, 1, 1], [1, 1, 1], options.mw_duration)
    run.record(rho, "toffoli")
    rho = run.cnot_e_to_n(rho, 1)
    rho = run.cnot_e_to_n(rho, 2)
    run.record(rho, "compressed")
    return EndorReport(eps_b, run.steps, rho)


# ---------------------------------------------------------------------------
# inhomogeneous broadening


def lorentzian_offsets(T2_star: float, samples: int, seed: int) -> np.ndarray:
    """Electron Zeeman offsets (rad/s): Lorentzian of FWHM 2/T2*, truncated at +-10 FWHM."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if math.isinf(T2_star):
        return np.zeros(samples)
    hwhm = 1.0 / T2_star
    cut = 20 * hwhm  # 10 FWHM
    lo = 0.5 + math.atan(-cut / hwhm) / math.pi
    hi = 0.5 + math.atan(cut / hwhm) / math.pi
    out = np.empty(samples)
    for i in range(samples):
        u = np.random.default_rng([seed, i]).uniform(lo, hi)
        out[i] = hwhm * math.tan(math.pi * (u - 0.5))
    return out


def t2star_ensemble_average(
    simulation: Callable[[float], np.ndarray],
    T2_star: float,
    samples: int,
    seed: int,
    workers: int = 1,
):
    """Average ``simulation(offset)`` over Lorentzian electron Zeeman offsets.

    Per-sample offsets depend only on (seed, index), and the sum runs in
    index order, so the result does not depend on ``workers``.  An infinite
    T2* runs the unperturbed simulation once.
    """
    if math.isinf(T2_star):
        offsets = np.zeros(1)
    else:
        offsets = lorentzian_offsets(T2_star, samples, seed)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(simulation, offsets))
    else:
        results = [simulation(x) for x in offsets]
    first = results[0]
    if isinstance(first, DensityMatrix):
        total = np.zeros_like(first.matrix)
        for r in results:
            total = total + r.matrix
        return DensityMatrix(total / len(results))
    total = np.zeros_like(np.asarray(first, dtype=float))
    for r in results:
        total = total + np.asarray(r, dtype=float)
    return total / len(results)
