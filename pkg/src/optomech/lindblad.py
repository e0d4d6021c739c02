"""Master-equation engine for the driven atom-cavity system with quantized motion.

The Liouvillian is applied matrix-free.  The effective (non-Hermitian)
Hamiltonian acts through cavity/atom index shifts and one small motional
matrix, so a single application costs O(dim^2 * n_phonon) rather than the
O(dim^3) of dense products.  The dim^2 x dim^2 superoperator is never formed.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InvalidDimensionError, UndefinedCorrelatorError
from .model import RECOIL_SIGN, PhysicalParams, dressed_resonance
from .qops import (
    ATOM,
    CAVITY,
    MOTION,
    Dims,
    atom_lowering,
    hermitian_function,
    ladder_lowering,
    number_operator,
    position_grid,
    tensor,
    thermal_density,
)


@dataclass(frozen=True)
class SimConfig:
    dims: Dims
    dt: float | None = None  # None: stability-limited step, see LindbladSystem.default_dt
    conv_tol: float = 0.01
    conv_window: float | None = None  # None: 10 / dressed linewidth
    t_max: float | None = None  # None: 20 conv_window
    integrator: str = "rk4"  # "rk4" or "adaptive"
    rtol: float = 1e-8

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be > 0")
        if not 0 < self.conv_tol < 1:
            raise ValueError("conv_tol must lie in (0, 1)")
        if self.conv_window is not None and self.conv_window <= 0:
            raise ValueError("conv_window must be > 0")
        if self.t_max is not None and self.conv_window is not None and self.t_max <= self.conv_window:
            raise ValueError("t_max must exceed conv_window")
        if self.integrator not in ("rk4", "adaptive"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


@dataclass
class ConvergenceReport:
    converged: bool
    t_final: float
    dt: float
    variation: float
    integrator: str
    steps: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SteadyState:
    rho: np.ndarray
    report: ConvergenceReport
    cavity_population: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 2)))


def _dressed_rate(p: PhysicalParams) -> float:
    if p.delta == 0:
        return p.gamma
    return float(dressed_resonance(p)[1])


def motional_operators(p: PhysicalParams, n_phonon: int) -> tuple[np.ndarray, np.ndarray]:
    """g(x) and the recoil unitary exp(i s k_c x) on the truncated phonon space."""
    X = ladder_lowering(n_phonon)
    X = X + X.conj().T
    G = p.g0 * hermitian_function(X, lambda x: np.sin(p.kx0 + p.eta * x))
    E = hermitian_function(X, lambda x: np.exp(1j * RECOIL_SIGN * (p.kx0 + p.eta * x)))
    return G, E


def hamiltonian(p: PhysicalParams, dims: Dims) -> np.ndarray:
    """Dense Jaynes-Cummings + drive + trap Hamiltonian in the laser frame."""
    a = tensor([ladder_lowering(dims.n_cavity)], [CAVITY], dims)
    s = tensor([atom_lowering()], [ATOM], dims)
    nb = tensor([number_operator(dims.n_phonon)], [MOTION], dims)
    G, _ = motional_operators(p, dims.n_phonon)
    Gfull = tensor([G], [MOTION], dims)
    ad = a.conj().T
    H = (
        -(p.delta + p.delta0) * ad @ a
        - p.delta0 * s.conj().T @ s
        + Gfull @ (s @ ad + s.conj().T @ a)
        - 1j * p.eps * (ad - a)
        + p.omega_m * nb
    )
    return 0.5 * (H + H.conj().T)


def jump_operators(p: PhysicalParams, dims: Dims) -> list[tuple[float, np.ndarray]]:
    """(rate, L) pairs: cavity decay and spontaneous emission with recoil."""
    a = tensor([ladder_lowering(dims.n_cavity)], [CAVITY], dims)
    _, E = motional_operators(p, dims.n_phonon)
    L = tensor([atom_lowering(), E], [ATOM, MOTION], dims)
    return [(p.kappa, a), (p.gamma, L)]


class LindbladSystem:
    """Precomputed pieces of the Liouvillian for one parameter set."""

    def __init__(self, p: PhysicalParams, dims: Dims):
        self.p = p
        self.dims = dims
        nc, nph = dims.n_cavity, dims.n_phonon
        self.nc, self.nph = nc, nph
        self.G, self.E = motional_operators(p, nph)
        n_c = np.arange(nc)[:, None, None]
        n_e = np.arange(2)[None, :, None]
        n_b = np.arange(nph)[None, None, :]
        diag = (
            -(p.delta + p.delta0 + 0.5j * p.kappa) * n_c
            - (p.delta0 + 0.5j * p.gamma) * n_e
            + p.omega_m * n_b
        )
        self.heff_diag = diag.reshape(-1)
        self.sqrt_n = np.sqrt(np.arange(1, nc, dtype=float))

    @property
    def dim(self) -> int:
        return self.dims.total

    def default_dt(self) -> float:
        """Step well inside the RK4 stability region for the fastest coherence."""
        d = self.heff_diag
        spread = np.ptp(d.real) + 2 * np.abs(d.imag).max()
        couplings = 2 * (self.p.g0 + self.p.eps) * math.sqrt(max(self.nc - 1, 1))
        stable = 2.0 / (spread + couplings + 1e-12)
        # keep single-excitation population decay accurate when the detunings are small
        accurate = 0.5 / (self.p.kappa + self.p.gamma)
        return min(stable, accurate)

    # -- structured operator actions (all act on the row index of M) --

    def heff_apply(self, M: np.ndarray) -> np.ndarray:
        """H_eff @ M with H_eff = H - i/2 (kappa a^dag a + gamma sigma^dag sigma)."""
        nc, nph = self.nc, self.nph
        K = M.shape[1]
        M4 = M.reshape(nc, 2, nph, K)
        out = self.heff_diag[:, None] * M
        out4 = out.reshape(nc, 2, nph, K)
        if nc > 1:
            sq = self.sqrt_n[:, None, None]
            # g(x)(sigma a^dag + sigma^dag a)
            out4[1:, 0] += sq * np.matmul(self.G, M4[:-1, 1])
            out4[:-1, 1] += sq * np.matmul(self.G, M4[1:, 0])
            if self.p.eps:
                # -i eps (a^dag - a)
                out4[1:] += -1j * self.p.eps * self.sqrt_n[:, None, None, None] * M4[:-1]
                out4[:-1] += 1j * self.p.eps * self.sqrt_n[:, None, None, None] * M4[1:]
        return out

    def lower_rows(self, M: np.ndarray) -> np.ndarray:
        """a @ M."""
        nc = self.nc
        M3 = M.reshape(nc, -1, M.shape[1])
        out = np.zeros_like(M3)
        out[:-1] = self.sqrt_n[:, None, None] * M3[1:]
        return out.reshape(M.shape)

    def cavity_jump(self, rho: np.ndarray) -> np.ndarray:
        """a rho a^dagger."""
        nc, m = self.nc, 2 * self.nph
        r = rho.reshape(nc, m, nc, m)
        out = np.zeros_like(r)
        w = self.sqrt_n
        out[:-1, :, :-1, :] = (w[:, None, None, None] * w[None, None, :, None]) * r[1:, :, 1:, :]
        return out.reshape(rho.shape)

    def atom_jump(self, rho: np.ndarray) -> np.ndarray:
        """L rho L^dagger with L = sigma (x) exp(i s k_c x)."""
        nc, nph = self.nc, self.nph
        r = rho.reshape(nc, 2, nph, nc, 2, nph)
        block = r[:, 1, :, :, 1, :]  # (nc, nph, nc, nph)
        left = np.matmul(self.E, block.reshape(nc, nph, nc * nph))
        both = left.reshape(-1, nph) @ self.E.conj().T
        out = np.zeros_like(r)
        out[:, 0, :, :, 0, :] = both.reshape(nc, nph, nc, nph)
        return out.reshape(rho.shape)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """d rho/dt for Hermitian ``rho`` (uses rho H_eff^dag = (H_eff rho)^dag)."""
        A = self.heff_apply(rho)
        return -1j * (A - A.conj().T) + self.p.kappa * self.cavity_jump(rho) + self.p.gamma * self.atom_jump(rho)

    # -- observables --

    def cavity_population(self, rho: np.ndarray) -> float:
        d = np.real(np.diagonal(rho)).reshape(self.nc, -1).sum(axis=1)
        return float(d @ np.arange(self.nc))

    def phonon_number(self, rho: np.ndarray) -> float:
        d = np.real(np.diagonal(rho)).reshape(-1, self.nph).sum(axis=0)
        return float(d @ np.arange(self.nph))

    def motional_density(self, rho: np.ndarray) -> np.ndarray:
        nph = self.nph
        r = rho.reshape(-1, nph, self.dim // nph, nph)
        return np.einsum("iaib->ab", r)

    def initial_state(self) -> np.ndarray:
        mot = thermal_density(self.nph, self.p.kT_over_wm).density()
        rho = np.zeros((self.dim, self.dim), complex)
        rho[: self.nph, : self.nph] = mot  # cavity vacuum, atom ground
        return rho


def liouvillian_apply(p: PhysicalParams, rho: np.ndarray, dims: Dims) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (dims.total, dims.total):
        raise InvalidDimensionError(f"rho has shape {rho.shape}, expected {(dims.total, dims.total)}")
    return LindbladSystem(p, dims).apply(rho)


def _rk4_step(system: LindbladSystem, rho: np.ndarray, dt: float) -> np.ndarray:
    k1 = system.apply(rho)
    k2 = system.apply(rho + 0.5 * dt * k1)
    k3 = system.apply(rho + 0.5 * dt * k2)
    k4 = system.apply(rho + dt * k3)
    return rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve(system: LindbladSystem, rho: np.ndarray, t: float, dt: float, integrator: str = "rk4", rtol: float = 1e-8):
    """Propagate ``rho`` for time ``t``; returns (rho, steps)."""
    if t <= 0:
        return rho, 0
    if integrator == "adaptive":
        n = system.dim

        def rhs(_, y):
            return system.apply(y.reshape(n, n)).reshape(-1)

        sol = solve_ivp(rhs, (0.0, t), rho.reshape(-1), method="RK45", rtol=rtol, atol=rtol * 1e-6)
        out = sol.y[:, -1].reshape(n, n)
        return 0.5 * (out + out.conj().T), int(sol.nfev)
    steps = max(1, math.ceil(t / dt - 1e-9))
    h = t / steps
    for _ in range(steps):
        rho = _rk4_step(system, rho, h)
    return 0.5 * (rho + rho.conj().T), steps


def steady_state(p: PhysicalParams, cfg: SimConfig, system: LindbladSystem | None = None) -> SteadyState:
    """Evolve from the undriven ground state until the cavity population settles."""
    system = system or LindbladSystem(p, cfg.dims)
    rho = system.initial_state()
    dt = cfg.dt or system.default_dt()
    if p.eps == 0:
        report = ConvergenceReport(True, 0.0, dt, 0.0, cfg.integrator, 0)
        return SteadyState(rho, report)
    window = cfg.conv_window or 10.0 / _dressed_rate(p)
    t_max = cfg.t_max or 20 * window
    # sample the cavity population ~50 times per window
    chunk = window / 50
    t, steps = 0.0, 0
    history = [(0.0, 0.0)]
    variation = math.inf
    converged = False
    while t < t_max - 1e-12:
        rho, n = evolve(system, rho, min(chunk, t_max - t), dt, cfg.integrator, cfg.rtol)
        t += min(chunk, t_max - t)
        steps += n
        history.append((t, system.cavity_population(rho)))
        if t >= window:
            recent = np.array([v for s, v in history if s >= t - window - 1e-12])
            mean = recent.mean()
            variation = float(np.ptp(recent) / mean) if mean > 0 else math.inf
            if variation < cfg.conv_tol:
                converged = True
                break
    report = ConvergenceReport(converged, t, dt, variation, cfg.integrator, steps)
    return SteadyState(rho, report, np.array(history))


@dataclass
class MEHeating:
    J_r: float
    J_t: float
    J_a: float
    report: ConvergenceReport

    @property
    def J(self) -> float:
        return self.J_r + self.J_t + self.J_a

    def as_dict(self) -> dict:
        return {"J_r": self.J_r, "J_t": self.J_t, "J_a": self.J_a, "J": self.J, "convergence": self.report.to_dict()}


def me_heating(p: PhysicalParams, cfg: SimConfig, ss: SteadyState | None = None) -> MEHeating:
    """Per-photon phonon gain from output-channel jumps in the steady state, net of the pre-jump phonon number."""
    if p.eps <= 0:
        raise ValueError("me_heating requires a drive (eps > 0)")
    system = LindbladSystem(p, cfg.dims)
    ss = ss or steady_state(p, cfg, system)
    flux = p.input_flux
    # phonons already gained while reaching the steady state are not part of the per-jump gain
    background = system.phonon_number(ss.rho)

    def gain(jumped):
        return system.phonon_number(jumped) - np.trace(jumped).real * background

    cav = gain(system.cavity_jump(ss.rho))
    atom = gain(system.atom_jump(ss.rho))
    return MEHeating(p.kappa1 * cav / flux, p.kappa2 * cav / flux, p.gamma * atom / flux, ss.report)


@dataclass
class MEG2:
    times: np.ndarray
    g2: np.ndarray
    reflected_flux: float
    report: ConvergenceReport


def me_g2(p: PhysicalParams, cfg: SimConfig, times, ss: SteadyState | None = None) -> MEG2:
    """Reflected-light g2(t) by conditioning on a detection and evolving the full system.

    The reflected-field jump operator is c = eps/sqrt(kappa1) + sqrt(kappa1) a.
    """
    if p.eps <= 0:
        raise ValueError("me_g2 requires a drive (eps > 0)")
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ValueError("times must be non-negative and sorted")
    system = LindbladSystem(p, cfg.dims)
    ss = ss or steady_state(p, cfg, system)
    alpha = p.eps / math.sqrt(p.kappa1)
    root = math.sqrt(p.kappa1)

    def flux(rho):
        a_rho = system.lower_rows(rho)
        return float(
            alpha**2 * np.trace(rho).real
            + 2 * alpha * root * np.trace(a_rho).real
            + p.kappa1 * np.trace(system.cavity_jump(rho)).real
        )

    rho = ss.rho
    n0 = flux(rho)
    if n0 < 1e-14:
        raise UndefinedCorrelatorError(f"reflected flux {n0:.3g} vanishes")
    a_rho = system.lower_rows(rho)
    rho_c = alpha**2 * rho + alpha * root * (a_rho + a_rho.conj().T) + p.kappa1 * system.cavity_jump(rho)
    dt = cfg.dt or system.default_dt()
    out = np.empty(times.size)
    t_now = 0.0
    for k, t in enumerate(times):
        rho_c, _ = evolve(system, rho_c, t - t_now, dt, cfg.integrator, cfg.rtol)
        t_now = t
        out[k] = flux(rho_c) / n0**2
    return MEG2(times, np.maximum(out, 0.0), n0, ss.report)


def validation_params(p: PhysicalParams, ratio: float = 50.0) -> PhysicalParams:
    """Copy of ``p`` with the trap frequency raised to gamma_tilde(x0)/ratio."""
    return p.replace(omega_m=_dressed_rate(p) / ratio)
