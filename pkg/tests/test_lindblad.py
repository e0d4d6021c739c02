import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optomech.errors import InvalidDimensionError, UndefinedCorrelatorError
from optomech.lindblad import (
    LindbladSystem,
    SimConfig,
    evolve,
    hamiltonian,
    jump_operators,
    liouvillian_apply,
    me_g2,
    me_heating,
    steady_state,
    validation_params,
)
from optomech.model import PhysicalParams, baseline
from optomech.qops import Dims, thermal_density


def bare(**changes):
    base = dict(g0=0.0, gamma=6.0, kappa1=7800.0, kappa2=3900.0, delta=0.0, delta0=0.0,
                omega_m=0.16, eta=0.24, kx0=math.pi / 4)
    base.update(changes)
    return PhysicalParams(**base)


def dense_oracle(p, dims):
    """Hamiltonian and jump operators assembled directly with Kronecker products."""
    nc, nph = dims.n_cavity, dims.n_phonon
    a1 = np.diag(np.sqrt(np.arange(1, nc)), 1)
    b1 = np.diag(np.sqrt(np.arange(1, nph)), 1)
    sm = np.array([[0, 1], [0, 0]])
    X = b1 + b1.T
    w, V = np.linalg.eigh(X)
    G = p.g0 * (V * np.sin(p.kx0 + p.eta * w)) @ V.T
    E = (V * np.exp(1j * (p.kx0 + p.eta * w))) @ V.T
    Ic, Ia, Ib = np.eye(nc), np.eye(2), np.eye(nph)
    a = np.kron(a1, np.kron(Ia, Ib))
    s = np.kron(Ic, np.kron(sm, Ib))
    nb = np.kron(Ic, np.kron(Ia, b1.T @ b1))
    Gf = np.kron(Ic, np.kron(Ia, G))
    H = (-(p.delta + p.delta0) * a.T @ a - p.delta0 * s.T @ s + Gf @ (s @ a.T) + Gf @ (s.T @ a)
         - 1j * p.eps * (a.T - a) + p.omega_m * nb)
    L = np.kron(Ic, np.kron(sm, E))
    return H, [(p.kappa, a), (p.gamma, L)]


def dense_liouvillian(H, jumps, rho):
    out = -1j * (H @ rho - rho @ H)
    for rate, L in jumps:
        LdL = L.conj().T @ L
        out += rate * (L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL))
    return out


def random_density(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


def test_hamiltonian_matches_oracle_and_is_hermitian():
    p = baseline(eps=30.0)
    dims = Dims(3, 6)
    H = hamiltonian(p, dims)
    H_ref, _ = dense_oracle(p, dims)
    np.testing.assert_allclose(H, H_ref, atol=1e-9 * np.abs(H_ref).max())
    assert np.abs(H_ref - H_ref.conj().T).max() <= 1e-12 * np.abs(H_ref).max()


def test_hamiltonian_diagonal_without_coupling():
    p = bare(delta=3.0, delta0=-1.5)
    dims = Dims(3, 4)
    H = hamiltonian(p, dims)
    nc, na, nb = np.meshgrid(np.arange(3), np.arange(2), np.arange(4), indexing="ij")
    want = -(p.delta + p.delta0) * nc - p.delta0 * na + p.omega_m * nb
    np.testing.assert_allclose(H, np.diag(want.reshape(-1)), atol=1e-12)


def test_vacuum_rabi_splitting():
    g0 = 50.0
    p = bare(g0=g0, kx0=math.pi / 2, eta=1e-9, omega_m=1e-12)
    H = hamiltonian(p, Dims(2, 1))
    # single-excitation block {|1_c, g>, |0_c, e>}
    idx = [2, 1]
    block = H[np.ix_(idx, idx)]
    np.testing.assert_allclose(np.linalg.eigvalsh(block), [-g0, g0], atol=1e-9)


def test_vacuum_energy_zero():
    H = hamiltonian(baseline(eps=10.0), Dims(3, 5))
    assert H[0, 0] == 0


def test_jump_operators_match_oracle():
    p = baseline()
    dims = Dims(2, 5)
    _, ref = dense_oracle(p, dims)
    for (r1, L1), (r2, L2) in zip(jump_operators(p, dims), ref):
        assert r1 == r2
        np.testing.assert_allclose(L1, L2, atol=1e-12)


@pytest.mark.parametrize("dims", [Dims(2, 3), Dims(3, 6)])
def test_structured_apply_matches_dense(dims):
    p = baseline(eps=40.0)
    rng = np.random.default_rng(4)
    H, jumps = dense_oracle(p, dims)
    for _ in range(3):
        rho = random_density(rng, dims.total)
        ref = dense_liouvillian(H, jumps, rho)
        got = liouvillian_apply(p, rho, dims)
        np.testing.assert_allclose(got, ref, atol=1e-10 * np.abs(ref).max())


def test_liouvillian_shape_check():
    with pytest.raises(InvalidDimensionError):
        liouvillian_apply(baseline(), np.eye(5), Dims(2, 2))


def test_trace_preserved_random_inputs():
    p = baseline(eps=25.0)
    dims = Dims(2, 3)
    system = LindbladSystem(p, dims)
    rng = np.random.default_rng(7)
    for _ in range(1000):
        rho = random_density(rng, dims.total)
        d = system.apply(rho)
        assert abs(np.trace(d)) <= 1e-10 * max(1.0, np.abs(rho).sum())


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2000), st.floats(0.1, 100), st.floats(-2e4, 2e4), st.floats(0.01, 1), st.integers(0, 2**31 - 1))
def test_trace_preserved_property(g0, eps, delta, eta, seed):
    p = bare(g0=g0, eps=eps, delta=delta, delta0=1.0, eta=eta)
    dims = Dims(2, 4)
    rho = random_density(np.random.default_rng(seed), dims.total)
    d = liouvillian_apply(p, rho, dims)
    assert abs(np.trace(d)) <= 1e-10 * np.abs(d).max() + 1e-12


def test_dark_state():
    p = baseline()
    system = LindbladSystem(p, Dims(3, 5))
    rho = np.zeros((system.dim, system.dim), complex)
    rho[0, 0] = 1
    assert np.abs(system.apply(rho)).max() == 0


def test_single_excitation_decay():
    p = bare()
    dims = Dims(2, 2)
    system = LindbladSystem(p, dims)
    rho = np.zeros((system.dim, system.dim), complex)
    k = 1 * 2 * 2  # |1_c, g, 0>
    rho[k, k] = 1
    dt = system.default_dt()
    t = 0.0
    for _ in range(5):
        rho, _ = evolve(system, rho, 1 / p.kappa, dt)
        t += 1 / p.kappa
        assert abs(system.cavity_population(rho) / math.exp(-p.kappa * t) - 1) < 0.01


def test_driven_cavity_population():
    kappa = 11700.0
    eps = 0.05 * kappa
    p = bare(eps=eps, kappa1=7800.0, kappa2=3900.0)
    cfg = SimConfig(Dims(4, 2), conv_window=10 / kappa)
    ss = steady_state(p, cfg)
    assert ss.report.converged
    assert abs(ss.report.to_dict()["variation"]) < 0.01
    want = 4 * eps**2 / kappa**2
    assert abs(LindbladSystem(p, cfg.dims).cavity_population(ss.rho) / want - 1) < 0.01


def test_no_drive_returns_initial_state():
    p = baseline()
    ss = steady_state(p, SimConfig(Dims(2, 4)))
    assert ss.report.steps == 0 and ss.report.converged
    assert ss.rho[0, 0] == 1 and np.trace(ss.rho) == 1
    with pytest.raises(ValueError):
        me_heating(p, SimConfig(Dims(2, 4)))


@pytest.fixture(scope="module")
def baseline_small():
    p = baseline(eps=math.sqrt(0.01 * 7800))
    cfg = SimConfig(Dims(2, 10))
    system = LindbladSystem(p, cfg.dims)
    return p, cfg, system, steady_state(p, cfg, system)


def test_steady_state_report(baseline_small):
    p, cfg, system, ss = baseline_small
    rep = ss.report.to_dict()
    assert rep["converged"] and rep["variation"] < cfg.conv_tol
    assert set(rep) >= {"converged", "t_final", "dt", "variation", "integrator"}
    # settles on the dressed timescale, well inside one trap period
    assert rep["t_final"] < 0.1 * 2 * math.pi / p.omega_m


def test_state_stays_physical(baseline_small):
    _, _, system, ss = baseline_small
    rho = ss.rho
    assert abs(np.trace(rho) - 1) < 1e-8
    assert np.abs(rho - rho.conj().T).max() < 1e-12
    assert np.linalg.eigvalsh(rho).min() > -1e-8


def test_heating_channel_ratio(baseline_small):
    p, cfg, _, ss = baseline_small
    h = me_heating(p, cfg, ss)
    assert math.isclose(h.J_r / h.J_t, p.kappa1 / p.kappa2, rel_tol=1e-12)
    assert h.J == pytest.approx(h.J_r + h.J_t + h.J_a)
    assert h.as_dict()["convergence"]["converged"]


def test_heating_swaps_with_port_rates(baseline_small):
    p, cfg, _, ss = baseline_small
    h = me_heating(p, cfg, ss)
    q = p.replace(kappa1=p.kappa2, kappa2=p.kappa1)
    hq = me_heating(q, cfg)
    # renormalize to the original input flux
    scale = q.input_flux / p.input_flux
    assert abs(hq.J_r * scale / h.J_t - 1) < 1e-3
    assert abs(hq.J_t * scale / h.J_r - 1) < 1e-3


def test_no_coupling_gives_no_heating_and_coherent_light():
    p = bare(eps=math.sqrt(0.01 * 7800), delta=100.0, delta0=0.0)
    cfg = SimConfig(Dims(4, 6), conv_window=10 / p.kappa, conv_tol=1e-12)
    h = me_heating(p, cfg)
    assert h.J_r == 0 and h.J_t == 0 and abs(h.J_a) <= p.eta**2 * 0 + 1e-10
    res = me_g2(p, cfg, np.linspace(0, 5 / p.kappa, 6))
    np.testing.assert_allclose(res.g2, 1, atol=1e-6)


def test_heating_excludes_pre_existing_phonons():
    # thermal motion rides along with every cavity photon but is not gained from it
    p = bare(eps=math.sqrt(0.01 * 7800), delta=100.0, delta0=0.0, kT_over_wm=1.0)
    cfg = SimConfig(Dims(3, 16), conv_window=10 / p.kappa, conv_tol=1e-10)
    h = me_heating(p, cfg)
    assert abs(h.J_r) < 1e-10 and abs(h.J_t) < 1e-10 and abs(h.J_a) < 1e-10


def test_g2_undefined_without_reflected_light():
    # critically coupled empty cavity on resonance reflects nothing
    p = bare(eps=0.5, kappa1=3900.0, kappa2=3900.0)
    cfg = SimConfig(Dims(3, 2), conv_window=10 / p.kappa, conv_tol=1e-12)
    with pytest.raises(UndefinedCorrelatorError):
        me_g2(p, cfg, [0.0])


def test_mechanics_decouples_without_recoil():
    # eta -> 0 makes both the coupling and the recoil phase constant
    p = baseline(eta=1e-13, eps=30.0, kT_over_wm=0.5)
    dims = Dims(2, 12)
    system = LindbladSystem(p, dims)
    rho = system.initial_state()
    n0 = system.phonon_number(rho)
    rho, _ = evolve(system, rho, 0.05, system.default_dt())
    assert abs(system.phonon_number(rho) - n0) < 1e-10
    mot = system.motional_density(rho)
    np.testing.assert_allclose(mot, thermal_density(12, 0.5).density(), atol=1e-10)


def test_integrators_agree():
    p = baseline(eps=20.0)
    system = LindbladSystem(p, Dims(2, 3))
    rho0 = system.initial_state()
    a, _ = evolve(system, rho0, 0.01, system.default_dt(), "rk4")
    b, _ = evolve(system, rho0, 0.01, system.default_dt(), "adaptive", rtol=1e-9)
    np.testing.assert_allclose(a, b, atol=1e-7)


def test_simconfig_validation():
    with pytest.raises(ValueError):
        SimConfig(Dims(2, 2), dt=0)
    with pytest.raises(ValueError):
        SimConfig(Dims(2, 2), conv_tol=1.5)
    with pytest.raises(ValueError):
        SimConfig(Dims(2, 2), conv_window=1.0, t_max=0.5)
    with pytest.raises(ValueError):
        SimConfig(Dims(2, 2), integrator="euler")


def test_validation_params():
    p = baseline()
    q = validation_params(p, 50)
    from optomech.model import dressed_resonance

    assert math.isclose(q.omega_m, dressed_resonance(p)[1] / 50)
    assert q.replace(omega_m=p.omega_m) == p
