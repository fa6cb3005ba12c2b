"""Hyperfine-coupled electron-nuclear spin systems.

Basis and label conventions
---------------------------
Matrices use the product basis with the electron as the most significant
qubit and computational ``|0>`` = spin projection +1/2 for every spin.

Eigenstates carry labels ``(e, j_1, ..., j_k)``.  ``e = 0`` is the electron
manifold written as up in the mixing-angle formulas, which for the
Hamiltonian ``w_S S_z + ...`` with ``w_S > 0`` is the lower Zeeman level,
S_z = -1/2.  ``j_n = 0`` is the nuclear state ``cos(t/2)|+> - sin(t/2)|->``
and ``j_n = 1`` is ``sin(t/2)|+> + cos(t/2)|->`` with ``t`` the mixing angle
of nucleus ``n`` in that manifold.  Listing labels in lexicographic order
reproduces the ``|1>..|4>`` ordering of the single-nucleus eigenstates.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import BOHR_MAGNETON, HBAR, gyromagnetic_ratio

_SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
_SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2

ANGULAR = {"rad/s": 1.0, "Hz": 2 * math.pi, "kHz": 2e3 * math.pi, "MHz": 2e6 * math.pi}


def spin_operator(op: np.ndarray, index: int, n_spins: int) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for k in range(n_spins):
        out = np.kron(out, op if k == index else np.eye(2))
    return out


@dataclass(frozen=True)
class Nucleus:
    gamma: float
    A: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(A)):
            raise ValueError("hyperfine tensor must be finite")
        object.__setattr__(self, "A", A)


@dataclass(frozen=True)
class ESpinSystem:
    """One electron, ``k`` spin-1/2 nuclei.

    ``A`` tensors are in rad/s with the row index on the electron spin
    (``sum A[mu, nu] S_mu I_nu``).
    """

    g_tensor: np.ndarray = field(repr=False)
    nuclei: tuple[Nucleus, ...] = ()
    B0: float = 0.35
    field_direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        g = np.asarray(self.g_tensor, dtype=float).reshape(3, 3)
        n = np.asarray(self.field_direction, dtype=float)
        norm = np.linalg.norm(n)
        if n.shape != (3,) or norm == 0 or not np.isfinite(norm):
            raise ValueError("field_direction must be a non-zero 3-vector")
        object.__setattr__(self, "g_tensor", g)
        object.__setattr__(self, "field_direction", n / norm)
        object.__setattr__(self, "nuclei", tuple(self.nuclei))

    def with_direction(self, direction) -> "ESpinSystem":
        return ESpinSystem(self.g_tensor, self.nuclei, self.B0, np.asarray(direction, float))

    def rotated(self, R: np.ndarray) -> "ESpinSystem":
        """Rigidly rotate tensors and field together."""
        nuclei = tuple(Nucleus(nu.gamma, R @ nu.A @ R.T, nu.label) for nu in self.nuclei)
        return ESpinSystem(R @ self.g_tensor @ R.T, nuclei, self.B0, R @ self.field_direction)


@dataclass(frozen=True)
class NuclearParams:
    omega_I: float
    a: float
    b: float
    gamma: float | None = None

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("b is a magnitude and must be >= 0")


@dataclass(frozen=True)
class SecularParams:
    omega_S: float
    nuclei: tuple[NuclearParams, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nuclei", tuple(self.nuclei))

    @property
    def k(self) -> int:
        return len(self.nuclei)

    @property
    def dim(self) -> int:
        return 2 ** (self.k + 1)

    def with_offset(self, delta: float) -> "SecularParams":
        return SecularParams(self.omega_S + delta, self.nuclei)


@dataclass(frozen=True)
class MixingAngles:
    theta_up: float
    theta_down: float
    Theta: float


def secular_params(system: ESpinSystem) -> SecularParams:
    n = system.field_direction
    omega_S = BOHR_MAGNETON * float(n @ system.g_tensor @ n) * system.B0 / HBAR
    nuclei = []
    for nu in system.nuclei:
        w = nu.A.T @ n
        a = float(w @ n)
        b = float(np.linalg.norm(w - a * n))
        nuclei.append(NuclearParams(nu.gamma * system.B0, a, b, nu.gamma))
    params = SecularParams(omega_S, tuple(nuclei))
    scale = max((max(abs(p.a), abs(p.b), abs(p.omega_I)) for p in params.nuclei), default=0.0)
    if scale > 0.1 * abs(omega_S):
        warnings.warn(
            "hyperfine or nuclear Zeeman terms exceed 10% of the electron Zeeman "
            "frequency; the secular Hamiltonian may be inaccurate",
            stacklevel=2,
        )
    return params


def hamiltonian(params: SecularParams) -> np.ndarray:
    """w_S S_z + sum_n [-w_I I_z + S_z (a I_z + b I_x)] in rad/s."""
    ns = params.k + 1
    Sz = spin_operator(_SZ, 0, ns)
    H = params.omega_S * Sz
    for i, p in enumerate(params.nuclei, start=1):
        Iz = spin_operator(_SZ, i, ns)
        Ix = spin_operator(_SX, i, ns)
        H = H - p.omega_I * Iz + Sz @ (p.a * Iz + p.b * Ix)
    return H


def secular_hamiltonian(system: ESpinSystem) -> tuple[SecularParams, np.ndarray]:
    params = secular_params(system)
    return params, hamiltonian(params)


def effective_nuclear_field(params: SecularParams, nucleus: int, electron_state: str) -> np.ndarray:
    """Field (x, y, z) in tesla that quantizes ``nucleus`` for a given electron state."""
    p = params.nuclei[nucleus]
    if not p.gamma:
        raise ValueError("nucleus has no gyromagnetic ratio")
    sign = {"up": 1.0, "down": -1.0}[electron_state]
    B0 = p.omega_I / p.gamma
    return np.array([sign * p.b / (2 * p.gamma), 0.0, B0 + sign * p.a / (2 * p.gamma)])


def _principal_angle(y: float, x: float) -> float:
    """atan2 folded into [-pi/2, pi/2): arctan(y/x) with x = 0 allowed."""
    t = math.atan2(y, x)
    if t >= math.pi / 2:
        t -= math.pi
    elif t < -math.pi / 2:
        t += math.pi
    return t


def mixing_angles(params: SecularParams, nucleus: int) -> MixingAngles:
    p = params.nuclei[nucleus]
    up = _principal_angle(-p.b, p.a + 2 * p.omega_I)
    down = _principal_angle(-p.b, p.a - 2 * p.omega_I)
    return MixingAngles(up, down, (up - down) / 2)


def _manifold_nuclear(p: NuclearParams, theta: float, e: int):
    """Eigenvectors (rows j = 0, 1) and energies of one nucleus in manifold e."""
    s = -0.5 if e == 0 else 0.5
    alpha = (s * p.a - p.omega_I) / 2
    beta = s * p.b / 2
    c, sn = math.cos(theta / 2), math.sin(theta / 2)
    vecs = np.array([[c, -sn], [sn, c]])
    lam = alpha * math.cos(theta) - beta * math.sin(theta)
    return vecs, np.array([lam, -lam])


@dataclass(frozen=True)
class Level:
    labels: tuple[int, ...]
    energy: float
    vector: np.ndarray = field(repr=False)


def levels(params: SecularParams) -> list[Level]:
    """All 2^(k+1) eigenlevels from the per-nucleus mixing angles, label order."""
    angles = [mixing_angles(params, i) for i in range(params.k)]
    per = {}
    for e in (0, 1):
        per[e] = [
            _manifold_nuclear(p, ang.theta_up if e == 0 else ang.theta_down, e)
            for p, ang in zip(params.nuclei, angles)
        ]
    out = []
    for labels in itertools.product((0, 1), repeat=params.k + 1):
        e = labels[0]
        vec = np.array([0.0, 1.0]) if e == 0 else np.array([1.0, 0.0])
        energy = (-0.5 if e == 0 else 0.5) * params.omega_S
        for n, j in enumerate(labels[1:]):
            vecs, lams = per[e][n]
            vec = np.kron(vec, vecs[j])
            energy += lams[j]
        out.append(Level(tuple(labels), float(energy), vec))
    return out


@dataclass(frozen=True)
class EigenSystem:
    energies: np.ndarray
    vectors: np.ndarray  # columns
    labels: list[tuple[int, ...]] | None
    degenerate: bool


def eigenstates(params: SecularParams, degeneracy_tol: float = 0.0) -> EigenSystem:
    """Labelled analytic eigenstates for one nucleus, numerical otherwise."""
    if params.k == 1:
        lv = levels(params)
        E = np.array([lvl.energy for lvl in lv])
        V = np.column_stack([lvl.vector for lvl in lv]).astype(complex)
        labels = [lvl.labels for lvl in lv]
    else:
        E, V = np.linalg.eigh(hamiltonian(params))
        labels = None
    gaps = np.diff(np.sort(E))
    tol = max(degeneracy_tol, 1e-12 * max(abs(params.omega_S), 1.0))
    return EigenSystem(E, V, labels, bool(np.any(gaps <= tol)))


def control_hamiltonian_eigenbasis(params: SecularParams, omega_1: float) -> np.ndarray:
    if params.k != 1:
        raise ValueError("closed form exists for a single nucleus only")
    T = mixing_angles(params, 0).Theta
    c, s = math.cos(T), math.sin(T)
    return omega_1 / 2 * np.array(
        [[0, 0, c, -s], [0, 0, s, c], [c, s, 0, 0], [-s, c, 0, 0]], dtype=float
    )


@dataclass(frozen=True)
class Transition:
    lower: tuple[int, ...]
    upper: tuple[int, ...]
    kind: str  # "esr-allowed", "esr-forbidden" or "nmr"
    frequency: float  # rad/s, |E_upper - E_lower|
    amplitude: float  # |2 <i|X|j>| for the driving operator of that channel
    nucleus: int | None = None


def transitions(params: SecularParams) -> list[Transition]:
    lv = levels(params)
    angles = [mixing_angles(params, i).Theta for i in range(params.k)]
    ups = [lvl for lvl in lv if lvl.labels[0] == 0]
    downs = [lvl for lvl in lv if lvl.labels[0] == 1]
    out = []
    for u in ups:
        for d in downs:
            amp = 1.0
            for n, T in enumerate(angles):
                ju, jd = u.labels[n + 1], d.labels[n + 1]
                amp *= math.cos(T) if ju == jd else math.sin(T)
            kind = "esr-allowed" if u.labels[1:] == d.labels[1:] else "esr-forbidden"
            out.append(Transition(u.labels, d.labels, kind, abs(d.energy - u.energy), abs(amp)))
    for e, group in ((0, ups), (1, downs)):
        for n in range(params.k):
            ang = mixing_angles(params, n)
            theta = ang.theta_up if e == 0 else ang.theta_down
            for lo in group:
                if lo.labels[n + 1] != 0:
                    continue
                hi_labels = lo.labels[: n + 1] + (1,) + lo.labels[n + 2 :]
                hi = next(x for x in group if x.labels == hi_labels)
                out.append(Transition(lo.labels, hi.labels, "nmr", abs(hi.energy - lo.energy), abs(math.cos(theta)), n))
    return out


def _min_separation(freqs) -> float:
    f = np.sort(np.asarray(list(freqs), dtype=float))
    return float(np.min(np.diff(f))) if f.size > 1 else math.inf


def _near_multiple(x: float, step: float, margin: float) -> bool:
    r = math.remainder(x, step)
    return abs(r) <= margin


@dataclass(frozen=True)
class UniversalityReport:
    Theta: tuple[float, ...]
    angle_ok: bool
    gaps_ok: bool
    nondegenerate: bool
    passed: bool
    reasons: tuple[str, ...]


def universality_check(params: SecularParams, angle_margin: float = 1e-3, linewidth: float = 0.0) -> UniversalityReport:
    """Whether electron-only control reaches every level (per nucleus for k > 1)."""
    reasons = []
    Thetas = tuple(mixing_angles(params, n).Theta for n in range(params.k))
    angle_ok = True
    for n, T in enumerate(Thetas):
        if _near_multiple(T, math.pi / 2, angle_margin):
            angle_ok = False
            reasons.append(f"nucleus {n}: Theta={T:.3e} is within {angle_margin:g} of a multiple of pi/2")
    esr = [t.frequency for t in transitions(params) if t.kind != "nmr"]
    sep = _min_separation(esr)
    gaps_ok = sep > linewidth
    if not gaps_ok:
        reasons.append(f"two electron transitions coincide (separation {sep:.3e} rad/s <= {linewidth:.3e})")
    E = np.sort([lvl.energy for lvl in levels(params)])
    nondegenerate = bool(np.all(np.diff(E) > 1e-12 * max(abs(params.omega_S), 1.0)))
    if not nondegenerate:
        reasons.append("degenerate energy levels")
    passed = angle_ok and gaps_ok and nondegenerate and params.k > 0
    if params.k == 0:
        reasons.append("no nuclei")
    return UniversalityReport(Thetas, angle_ok, gaps_ok, nondegenerate, passed, tuple(reasons))


@dataclass(frozen=True)
class OrientationCriteria:
    """Thresholds for orientation scoring; the defaults are configuration, not physics."""

    omega_1: float = 2 * math.pi * 10e6
    t2_electron: float = 1e-6
    gate_time_fraction: float = 0.2
    max_forbidden_weight: float = 0.05


@dataclass(frozen=True)
class OrientationScore:
    scheme: str
    criteria: dict
    satisfaction: tuple[float, float, float]
    score: float


def _ramp(ratio: float) -> float:
    """0 at ratio <= 1, 1 at ratio >= 2, linear in between."""
    return float(min(1.0, max(0.0, ratio - 1.0)))


def orientation_score(
    system: ESpinSystem | SecularParams,
    scheme: str,
    linewidths: tuple[float, float],
    criteria: OrientationCriteria = OrientationCriteria(),
) -> OrientationScore:
    params = secular_params(system) if isinstance(system, ESpinSystem) else system
    lw_esr, lw_nmr = linewidths
    scheme = scheme.upper()
    sins = [abs(math.sin(mixing_angles(params, n).Theta)) for n in range(params.k)]
    max_sin = max(sins, default=0.0)
    min_sin = min(sins, default=0.0)
    tr = transitions(params)
    allowed = [t.frequency for t in tr if t.kind == "esr-allowed"]
    esr_all = [t.frequency for t in tr if t.kind != "nmr"]
    # one NMR line per (electron manifold, nucleus); spectator copies coincide
    nmr = list({(t.lower[0], t.nucleus): t.frequency for t in tr if t.kind == "nmr"}.values())
    budget = criteria.gate_time_fraction * criteria.t2_electron

    if scheme == "ENDOR":
        sep_esr = _min_separation(allowed)
        sep_nmr = _min_separation(nmr)
        s1 = 1.0 - max_sin
        s2 = min(_ramp(sep_esr / lw_esr) if lw_esr > 0 else 1.0, _ramp(sep_nmr / lw_nmr) if lw_nmr > 0 else 1.0)
        pulse_time = 2 * math.pi / sep_esr if math.isfinite(sep_esr) else 0.0
        s3 = 1.0 if pulse_time == 0 else min(1.0, budget / pulse_time)
        crit = {
            "max_abs_sin_Theta": max_sin,
            "allowed_esr_separation": sep_esr,
            "nmr_separation": sep_nmr,
            "selective_pulse_time": pulse_time,
        }
    elif scheme == "AHC":
        gate_time = math.inf if min_sin == 0 else 2 * math.pi / (criteria.omega_1 * min_sin)
        s1 = 0.0 if not math.isfinite(gate_time) else min(1.0, budget / gate_time)
        weight = max_sin**2
        s2 = 1.0 if weight == 0 else min(1.0, criteria.max_forbidden_weight / weight)
        sep = _min_separation(esr_all)
        s3 = _ramp(sep / lw_esr) if lw_esr > 0 else 1.0
        crit = {"nuclear_gate_time": gate_time, "forbidden_weight": weight, "esr_separation": sep}
    else:
        raise ValueError(f"unknown scheme {scheme!r}; use ENDOR or AHC")
    return OrientationScore(scheme, crit, (s1, s2, s3), s1 * s2 * s3)


def hemisphere_grid(n_theta: int, n_phi: int) -> np.ndarray:
    """Unit vectors on a (polar, azimuth) grid over the upper hemisphere."""
    thetas = np.linspace(0, math.pi / 2, n_theta)
    phis = np.linspace(0, 2 * math.pi, n_phi, endpoint=False)
    pts = [(math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)) for t in thetas for p in phis]
    return np.array(pts)


def orientation_sweep(
    system: ESpinSystem,
    scheme: str,
    linewidths: tuple[float, float],
    directions: np.ndarray,
    criteria: OrientationCriteria = OrientationCriteria(),
) -> tuple[np.ndarray, np.ndarray]:
    """Score every direction; returns (scores, best direction)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scores = np.array(
            [orientation_score(system.with_direction(d), scheme, linewidths, criteria).score for d in directions]
        )
    return scores, directions[int(np.argmax(scores))]


def system_from_json(doc: dict) -> ESpinSystem:
    """Build a system from the tensor input document.

    ``g`` and every nucleus ``A`` are 9 numbers, row-major; ``units`` names the
    hyperfine unit (rad/s, Hz, kHz or MHz).  A nucleus gives either
    ``species`` or ``gamma`` (rad s^-1 T^-1).
    """
    scale = ANGULAR[doc.get("units", "rad/s")]
    nuclei = []
    for i, nd in enumerate(doc.get("nuclei", [])):
        gamma = nd["gamma"] if "gamma" in nd else gyromagnetic_ratio(nd["species"])
        nuclei.append(Nucleus(gamma, np.asarray(nd["A"], float).reshape(3, 3) * scale, nd.get("label", nd.get("species", f"n{i}"))))
    return ESpinSystem(
        np.asarray(doc["g"], float).reshape(3, 3),
        tuple(nuclei),
        float(doc["B0"]),
        np.asarray(doc.get("field_direction", [0, 0, 1]), float),
    )
