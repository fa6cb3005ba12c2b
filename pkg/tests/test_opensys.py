import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.optimize import minimize_scalar
from scipy.stats import kstest

from conftest import TWO_PI, endor_params
from hbac.circuits import apply_gate, exchange_hamiltonian, swap_duration, swap_gate
from hbac.core import HBAR, K_B, DensityMatrix, DiagonalState, gyromagnetic_ratio
from hbac.espin import NuclearParams, SecularParams
from hbac.opensys import (
    EndorOptions,
    PulseSegment,
    Register,
    RelaxationSpec,
    gaussian_envelope,
    ideal_electron_reset,
    inversion_fidelity,
    lindblad_propagate,
    lorentzian_offsets,
    propagator,
    pulse_amplitudes,
    reset_by_wait,
    run_endor_ppa_round,
    selective_pulse,
    t2star_ensemble_average,
    thermal_register_state,
    thermal_state,
    thermal_sz,
)

INF = math.inf
W = TWO_PI * 9.7e9
SZ = np.diag([0.5, -0.5])


def sz_expect(rho, k=0):
    n = rho.n_qubits
    p = rho.diagonal().reshape((2,) * n)
    m = np.moveaxis(p, k, 0).reshape(2, -1).sum(axis=1)
    return m[0] - m[1]


def random_rho(rng, dim):
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    r = A @ A.conj().T
    return DensityMatrix(r / np.trace(r))


def one_nucleus(a=TWO_PI * 400e6, b=TWO_PI * 20e6):
    g = gyromagnetic_ratio("1H")
    return SecularParams(TWO_PI * 9.8e9, (NuclearParams(g * 0.35, a, b, g),))


def test_relaxation_spec_validation():
    with pytest.raises(ValueError):
        RelaxationSpec((1.0,), (2.5,))
    with pytest.raises(ValueError):
        RelaxationSpec((1.0,), (1.0,), T2_star=2.0)
    with pytest.raises(ValueError):
        RelaxationSpec((1.0, 1.0), (1.0,))
    assert RelaxationSpec((1.0,), (2.0,)).T2_star == INF


def test_thermal_fixed_point():
    relax = RelaxationSpec((1e-3, 2e-3), (1e-3, 1e-3), bath_temperature=4.2)
    larmor = (W, -TWO_PI * 15e6)
    rho = lindblad_propagate(random_rho(np.random.default_rng(0), 4), np.zeros((4, 4)), relax, 1.0, larmor)
    np.testing.assert_allclose(rho.matrix, thermal_state(relax, larmor).matrix, atol=1e-12)
    eps = math.tanh(HBAR * W / (2 * K_B * 4.2))
    assert -sz_expect(rho, 0) == pytest.approx(eps, rel=1e-12)


def test_larmor_read_from_hamiltonian():
    relax = RelaxationSpec((1e-3,), (1e-3,), bath_temperature=1.0)
    rho = lindblad_propagate(DensityMatrix(np.eye(2) / 2), W * SZ, relax, 1.0)
    assert sz_expect(rho) == pytest.approx(thermal_sz(W, 1.0), rel=1e-10)


def test_closed_system_limit():
    rng = np.random.default_rng(1)
    rho = random_rho(rng, 8)
    A = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    H = (A + A.conj().T) * 1e6
    t = 3e-6
    U = expm(-1j * H * t)
    out = lindblad_propagate(rho, H, RelaxationSpec.closed(3), t)
    np.testing.assert_allclose(out.matrix, U @ rho.matrix @ U.conj().T, atol=1e-8)


@pytest.mark.parametrize("T1", [1e-6, 1e-3, 2.0])
def test_five_t1_recovery(T1):
    relax = RelaxationSpec((T1,), (T1,), bath_temperature=10.0)
    rho0 = DensityMatrix(np.eye(2) / 2)
    eps_th = thermal_sz(W, 10.0)
    for mult in (0.5, 1, 5):
        eps = sz_expect(lindblad_propagate(rho0, np.zeros((2, 2)), relax, mult * T1, (W,)))
        assert eps / eps_th == pytest.approx(1 - math.exp(-mult), abs=1e-9)


def test_transverse_decay_is_t2():
    T1, T2 = 1e-3, 3e-4
    relax = RelaxationSpec((T1,), (T2,), bath_temperature=300.0)
    plus = DensityMatrix(np.full((2, 2), 0.5))
    for t in (1e-4, 5e-4):
        rho = lindblad_propagate(plus, np.zeros((2, 2)), relax, t, (0.0,))
        assert 2 * rho.matrix[0, 1].real == pytest.approx(math.exp(-t / T2), rel=1e-10)


def test_propagation_composes():
    rng = np.random.default_rng(2)
    rho = random_rho(rng, 4)
    H = np.diag([3e6, 1e6, -1e6, -3e6]) + 2e5 * np.ones((4, 4))
    relax = RelaxationSpec((1e-5, 3e-5), (1e-5, 2e-5), bath_temperature=5.0)
    a = lindblad_propagate(lindblad_propagate(rho, H, relax, 2e-6), H, relax, 5e-6)
    b = lindblad_propagate(rho, H, relax, 7e-6)
    np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-12)


def test_long_times_stay_trace_preserving():
    reg = Register(endor_params())
    relax = RelaxationSpec((5e-3, 1.0, 10.0), (1e-6, 1e-3, 1e-3), 5e-7, 43.0)
    rho = thermal_register_state(reg, relax)
    for t in (1e-3, 0.025, 5.0):
        out = lindblad_propagate(rho, reg.H, relax, t, reg.larmor)
        assert abs(np.trace(out.matrix) - 1) < 1e-12
        assert out.min_eigenvalue() > -1e-8


def test_long_time_eig_path_matches_expm():
    reg = Register(one_nucleus(a=TWO_PI * 4e6, b=TWO_PI * 1e6))
    relax = RelaxationSpec((1e-4, 1.0), (1e-6, 1e-3), bath_temperature=43.0)
    from hbac.opensys import collapse_operators, liouvillian

    L = liouvillian(reg.H, collapse_operators(relax, reg.larmor))
    t = 2e-5  # past the expm threshold, still accurate for expm
    assert np.abs(L).sum(axis=0).max() * t > 1e3
    np.testing.assert_allclose(propagator(L, t), expm(L * t), atol=1e-9)


def test_cptp_sanity_random():
    rng = np.random.default_rng(3)
    for _ in range(5):
        rho = random_rho(rng, 8)
        A = rng.normal(size=(8, 8))
        H = (A + A.T) * 1e5
        relax = RelaxationSpec(tuple(rng.uniform(1e-6, 1e-5, 3)), tuple(rng.uniform(1e-6, 2e-6, 3)), bath_temperature=rng.uniform(1, 300))
        out = lindblad_propagate(rho, H, relax, rng.uniform(0, 1e-5), (W, 1e8, -3e7))
        assert abs(np.trace(out.matrix) - 1) < 1e-9 and out.min_eigenvalue() > -1e-8


def cooled_nucleus_state(reg, relax, eps_n=0.5):
    th = thermal_register_state(reg, relax)
    p = reg.eigen_populations(th).reshape(2, 2).sum(axis=1)
    pops = np.kron(p, [(1 + eps_n) / 2, (1 - eps_n) / 2])
    return DensityMatrix(reg.V @ np.diag(pops) @ reg.V.conj().T)


def test_reset_preserves_nucleus_without_flip_channel():
    reg = Register(one_nucleus(b=0.0))
    relax = RelaxationSpec((1e-4, INF), (1e-6, INF), bath_temperature=43.0)
    rho = cooled_nucleus_state(reg, relax)
    out = reset_by_wait(rho, reg, relax)
    assert reg.polarizations(out)[1] == pytest.approx(0.5, abs=1e-12)
    eps_th = thermal_sz(-reg.params.omega_S, 43.0)
    assert abs(reg.polarizations(out)[0] / eps_th - 1) < 0.01


def test_reset_with_hyperfine_mixing_costs_nuclear_polarization():
    relax = RelaxationSpec((1e-4, INF), (1e-6, INF), bath_temperature=43.0)
    regs = [Register(one_nucleus(b=0.0)), Register(one_nucleus(b=TWO_PI * 40e6))]
    after = [reg.polarizations(reset_by_wait(cooled_nucleus_state(reg, relax), reg, relax))[1] for reg in regs]
    assert after[1] < after[0] - 1e-6


def test_reset_rejects_bad_input():
    reg = Register(one_nucleus())
    rho = thermal_register_state(reg, RelaxationSpec.closed(2, 43.0))
    with pytest.raises(ValueError):
        reset_by_wait(rho, reg, RelaxationSpec((1e-4, 1.0), (1e-6, 1.0)), wait_multiple=0)
    with pytest.raises(ValueError):
        reset_by_wait(rho, reg, RelaxationSpec.closed(2, 43.0))


def test_ideal_reset():
    reg = Register(endor_params())
    relax = RelaxationSpec.closed(3, 4.2)
    rho = DensityMatrix(np.eye(8) / 8)
    out = reg.polarizations(ideal_electron_reset(rho, reg, relax))
    assert out[0] == pytest.approx(thermal_sz(-reg.params.omega_S, 4.2))
    assert out[1:] == pytest.approx([0, 0], abs=1e-15)


def pulse_run(reg, pulse, relax=None, rho=None):
    relax = relax or RelaxationSpec.closed(reg.n_spins, 4.2)
    rho = rho or thermal_register_state(reg, RelaxationSpec.closed(reg.n_spins, 0.5))
    before = reg.eigen_populations(rho)
    after = reg.eigen_populations(selective_pulse(rho, reg, pulse, relax))
    return before, after


@pytest.mark.parametrize("channel,transition,duration", [("MW", (0, 2), 1e-6), ("MW", (1, 3), 1e-6), ("RF", (2, 3), 15e-6)])
def test_square_pi_pulse_swaps_populations(channel, transition, duration):
    reg = Register(one_nucleus())
    before, after = pulse_run(reg, PulseSegment(channel, transition, "square", duration))
    i, j = transition
    assert after[i] == pytest.approx(before[j], abs=1e-6)
    assert after[j] == pytest.approx(before[i], abs=1e-6)
    others = [k for k in range(4) if k not in transition]
    np.testing.assert_allclose(after[others], before[others], atol=1e-4)


def test_pulse_validation():
    reg = Register(one_nucleus())
    rho = thermal_register_state(reg, RelaxationSpec.closed(2, 1.0))
    with pytest.raises(ValueError):
        PulseSegment("MW", (1, 1))
    with pytest.raises(ValueError):
        selective_pulse(rho, reg, PulseSegment("MW", (0, 1)), RelaxationSpec.closed(2))
    with pytest.raises(ValueError):
        selective_pulse(rho, reg, PulseSegment("RF", (0, 3)), RelaxationSpec.closed(2))
    with pytest.warns(UserWarning):
        pulse_amplitudes(PulseSegment("MW", (0, 2), "square", 1e-6, amplitude=1e6))


def test_square_area():
    p = PulseSegment("MW", (0, 2), "square", 2e-6)
    assert pulse_amplitudes(p)[0] * 2e-6 == pytest.approx(math.pi)


def test_gaussian_pulse_calibration():
    reg = Register(one_nucleus())
    g = PulseSegment("MW", (0, 2), "gaussian", 50e-9)
    before, after = pulse_run(reg, g)
    assert inversion_fidelity(before, after, 0, 2) > 1 - 1e-3
    env = gaussian_envelope(200)
    assert env[0] == pytest.approx(math.exp(-4.5), rel=0.05) and env.max() < 1

    # an independent 1D search over the peak amplitude lands on the calibrated value
    peak = pulse_amplitudes(g).max()

    def infidelity(scale):
        p = PulseSegment("MW", (0, 2), "gaussian", 50e-9, amplitude=peak * scale)
        b, a = pulse_run(reg, p)
        return 1 - inversion_fidelity(b, a, 0, 2)

    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        best = minimize_scalar(infidelity, bounds=(0.8, 1.2), method="bounded", options={"xatol": 1e-5})
    assert best.x == pytest.approx(1.0, abs=5e-3)


def test_gaussian_step_refinement():
    reg = Register(one_nucleus())
    a = pulse_run(reg, PulseSegment("MW", (0, 2), "gaussian", 50e-9, steps=200))[1]
    b = pulse_run(reg, PulseSegment("MW", (0, 2), "gaussian", 50e-9, steps=400))[1]
    assert np.abs(a - b).max() < 1e-3


def test_slow_pulse_loses_inversion():
    reg = Register(one_nucleus())
    T = 1e-6
    relax = RelaxationSpec((2 * T / 10, INF), (T / 10, INF), bath_temperature=0.5)
    before, after = pulse_run(reg, PulseSegment("MW", (0, 2), "square", T), relax)
    assert inversion_fidelity(before, after, 0, 2) < 0.9


def test_lorentzian_sampler():
    x = lorentzian_offsets(1e-6, 4000, seed=1)
    assert np.all(np.abs(x) <= 20e6 + 1e-6)
    # Cauchy with HWHM 1/T2*, truncated at 20 HWHM
    norm = 2 * math.atan(20) / math.pi
    cdf = lambda v: 0.5 + np.arctan(np.asarray(v) / 1e6) / math.pi / norm - (1 - norm) / 2 / norm
    assert kstest(x, cdf).pvalue > 0.01
    np.testing.assert_array_equal(x[:10], lorentzian_offsets(1e-6, 10, seed=1))
    with pytest.raises(ValueError):
        lorentzian_offsets(1e-6, 0, seed=1)


def inversion_vs_offset(offset, duration=1e-6):
    reg = Register(one_nucleus(), offset=offset)
    before, after = pulse_run(reg, PulseSegment("MW", (0, 2), "square", duration))
    return np.array([inversion_fidelity(before, after, 0, 2)])


def test_ensemble_infinite_t2star_is_single_run():
    avg = t2star_ensemble_average(inversion_vs_offset, INF, 16, seed=0)
    np.testing.assert_array_equal(avg, inversion_vs_offset(0.0))


def test_ensemble_reproducible_and_worker_independent():
    a = t2star_ensemble_average(inversion_vs_offset, 2e-7, 1, seed=11)
    b = t2star_ensemble_average(inversion_vs_offset, 2e-7, 1, seed=11)
    assert a.tobytes() == b.tobytes()
    c = t2star_ensemble_average(inversion_vs_offset, 2e-7, 6, seed=4, workers=1)
    d = t2star_ensemble_average(inversion_vs_offset, 2e-7, 6, seed=4, workers=3)
    assert c.tobytes() == d.tobytes()


def test_ensemble_of_density_matrices():
    reg = Register(one_nucleus())
    relax = RelaxationSpec.closed(2, 1.0)

    def run(offset):
        r = Register(reg.params, offset)
        return selective_pulse(thermal_register_state(r, relax), r, PulseSegment("MW", (0, 2), "square", 1e-6), relax)

    avg = t2star_ensemble_average(run, 1e-6, 4, seed=2)
    assert isinstance(avg, DensityMatrix) and abs(np.trace(avg.matrix) - 1) < 1e-12


def test_inversion_degrades_as_t2star_shrinks():
    fids = [t2star_ensemble_average(inversion_vs_offset, t, 48, seed=5)[0] for t in (1e-5, 1e-6, 1e-7)]
    assert fids[0] > fids[1] > fids[2]
    assert fids[0] > 0.99 and fids[2] < 0.7


def test_endor_ideal_gain_exact():
    for T in (4.2, 43.0, 1.0):
        r = run_endor_ppa_round(endor_params(), RelaxationSpec.closed(3, T), options=EndorOptions(mode="ideal", reset="ideal"))
        assert r.gain == pytest.approx(1.5 - 0.5 * r.eps_b**2, abs=1e-12)


def test_endor_ideal_matches_gate_model():
    # the compression gates on three equal polarizations, as in the PPA circuits
    e = 0.2
    s = DiagonalState.product([e, e, e])
    from hbac.circuits import COMPRESS3

    boosted = apply_gate(s, COMPRESS3)
    assert 2 * boosted.probs[:4].sum() - 1 == pytest.approx(1.5 * e - 0.5 * e**3)


def test_endor_pulsed_without_relaxation():
    r = run_endor_ppa_round(endor_params(), RelaxationSpec.closed(3, 4.2), options=EndorOptions(reset="ideal"))
    assert r.gain == pytest.approx(1.5 - 0.5 * r.eps_b**2, abs=2e-3)
    names = [name for name, _ in r.steps]
    assert names == ["initial", "swap_e_n1", "reset_1", "swap_e_n2", "reset_2", "toffoli", "compressed"]
    assert r.steps[1][1][1] == pytest.approx(r.eps_b, rel=1e-3)


def endor_relax(T1e, T=43.0):
    return RelaxationSpec((T1e, INF, INF), (min(1e-6, 2 * T1e), INF, INF), bath_temperature=T)


def test_endor_short_electron_t1_gives_no_gain():
    r = run_endor_ppa_round(endor_params(), endor_relax(15e-6, 300.0))
    assert r.gain <= 1.0


def test_endor_gain_monotone_in_t1():
    gains = [run_endor_ppa_round(endor_params(), endor_relax(t)).gain for t in (15e-6, 150e-6, 1.5e-3)]
    assert gains[0] <= gains[1] <= gains[2]
    assert gains[2] > 1.3


def test_endor_needs_two_nuclei():
    with pytest.raises(ValueError):
        run_endor_ppa_round(one_nucleus(), RelaxationSpec.closed(2))
    with pytest.raises(ValueError):
        EndorOptions(mode="fast")


def test_exchange_swap_through_master_equation():
    d = TWO_PI * 2e3
    rho = random_rho(np.random.default_rng(7), 4)
    out = lindblad_propagate(rho, exchange_hamiltonian(d), RelaxationSpec.closed(2), swap_duration(d))
    np.testing.assert_allclose(out.matrix, apply_gate(rho, swap_gate(2, 0, 1)).matrix, atol=1e-6)
