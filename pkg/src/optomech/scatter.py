"""Single-photon scattering off the atom-cavity system with a quantized atomic position.

In the unresolved-sideband regime the scattering matrix is diagonal in the
atomic position basis, so each channel (r: reflection into the driven port,
t: transmission/loss through kappa2, a: spontaneous emission) acts on the
motional state as a function of the position operator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    ImpossibleEventError,
    InvalidDimensionError,
    TruncationError,
    TruncationWarning,
    UndefinedCorrelatorError,
)
from .model import RECOIL_SIGN, PhysicalParams, coupling
from .qops import MotionalState, check_truncation, position_grid, thermal_populations

CHANNELS = ("r", "t", "a")
CONDITIONAL_TRUNCATION_TOL = 1e-4


@dataclass(frozen=True)
class ChannelAmplitudes:
    """Scattering amplitudes at fixed atomic position (scalars or arrays)."""

    s_r: complex
    s_t: complex
    s_a: complex

    def __iter__(self):
        return iter((self.s_r, self.s_t, self.s_a))

    @property
    def norm(self):
        return np.abs(self.s_r) ** 2 + np.abs(self.s_t) ** 2 + np.abs(self.s_a) ** 2

    @property
    def reflectance(self):
        return np.abs(self.s_r) ** 2


def _denominator(p: PhysicalParams, g):
    return p.delta0 + p.delta + 0.5j * p.kappa - g**2 / (p.delta0 + 0.5j * p.gamma)


def amplitudes_at(p: PhysicalParams, x_over_xzp=0.0) -> ChannelAmplitudes:
    """Reflection, transmission and spontaneous-emission amplitudes at position x."""
    x = np.asarray(x_over_xzp, dtype=float)
    g = coupling(p, x)
    den = _denominator(p, g)
    phase = np.exp(1j * RECOIL_SIGN * (p.kx0 + p.eta * x))
    s_r = 1 - 1j * p.kappa1 / den
    s_t = -1j * np.sqrt(p.kappa1 * p.kappa2) / den
    s_a = -1j * np.sqrt(p.kappa1 * p.gamma) / den * g * phase / (p.delta0 + 0.5j * p.gamma)
    if x.ndim == 0:
        return ChannelAmplitudes(complex(s_r), complex(s_t), complex(s_a))
    return ChannelAmplitudes(s_r, s_t, s_a)


def amplitude_derivatives(p: PhysicalParams, x_over_xzp) -> ChannelAmplitudes:
    """d s_alpha / d(x/x_zp), analytic."""
    x = np.asarray(x_over_xzp, dtype=float)
    kx = p.kx0 + p.eta * x
    g = p.g0 * np.sin(kx)
    dg = p.g0 * p.eta * np.cos(kx)
    z = p.delta0 + 0.5j * p.gamma
    den = _denominator(p, g)
    dden = -2 * g * dg / z
    phase = np.exp(1j * RECOIL_SIGN * kx)
    ds_r = 1j * p.kappa1 * dden / den**2
    ds_t = 1j * np.sqrt(p.kappa1 * p.kappa2) * dden / den**2
    pref = -1j * np.sqrt(p.kappa1 * p.gamma) / z
    # d/dx [g phase / den]
    ds_a = pref * phase * (dg / den + 1j * RECOIL_SIGN * p.eta * g / den - g * dden / den**2)
    return ChannelAmplitudes(ds_r, ds_t, ds_a)


def linearized_amplitudes(p: PhysicalParams, dx_over_xzp=0.0) -> ChannelAmplitudes:
    """Leading-order expansion about x0 at the optimum (kappa1 = 2 kappa2, C_in >> 1)."""
    dx = np.asarray(dx_over_xzp, dtype=float)
    k = p.eta * np.sqrt(_coop_in(p)) / np.sqrt(2)
    s_r = -1j * k * dx
    s_t = -(1 + 1j * k * dx) / np.sqrt(2)
    s_a = (1 + 1j * (k + p.eta) * dx) / np.sqrt(2)
    if dx.ndim == 0:
        return ChannelAmplitudes(complex(s_r), complex(s_t), complex(s_a))
    return ChannelAmplitudes(s_r, s_t, s_a)


def _coop_in(p: PhysicalParams) -> float:
    return p.g0**2 / (p.kappa2 * p.gamma)


def reflectance_profile(p: PhysicalParams, xs) -> np.ndarray:
    return np.abs(amplitudes_at(p, np.asarray(xs, dtype=float)).s_r) ** 2


@dataclass(frozen=True, eq=False)
class ScatterOperators:
    """Channel operators S_alpha = U diag(s_alpha(x_i)) U^dagger on the phonon space."""

    S_r: np.ndarray
    S_t: np.ndarray
    S_a: np.ndarray
    positions: np.ndarray
    transform: np.ndarray
    diagonals: ChannelAmplitudes

    @property
    def n_phonon(self) -> int:
        return self.positions.size

    def channel(self, name: str) -> np.ndarray:
        return {"r": self.S_r, "t": self.S_t, "a": self.S_a}[name]

    def completeness_error(self) -> float:
        total = sum(S.conj().T @ S for S in (self.S_r, self.S_t, self.S_a))
        return float(np.abs(total - np.eye(self.n_phonon)).max())


def scatter_operators(p: PhysicalParams, n_phonon: int) -> ScatterOperators:
    xs, U = position_grid(n_phonon)
    amps = amplitudes_at(p, xs)
    ops = [(U * s) @ U.T for s in amps]
    return ScatterOperators(*ops, positions=xs, transform=U, diagonals=amps)


def conditional_state(S: np.ndarray, state: MotionalState) -> tuple[MotionalState, float]:
    """Motional state after a photon is detected in the channel described by S."""
    S = np.asarray(S)
    if S.shape != (state.n_phonon, state.n_phonon):
        raise InvalidDimensionError(f"operator {S.shape} does not act on {state.n_phonon} phonon levels")
    if state.is_pure:
        out = S @ state.data
        prob = float(np.vdot(out, out).real)
        if prob < 1e-14:
            raise ImpossibleEventError(f"detection probability {prob:.3g} is zero")
        return MotionalState(out / np.sqrt(prob)), prob
    out = S @ state.data @ S.conj().T
    prob = float(np.trace(out).real)
    if prob < 1e-14:
        raise ImpossibleEventError(f"detection probability {prob:.3g} is zero")
    out = out / prob
    return MotionalState(0.5 * (out + out.conj().T)), prob


@dataclass(frozen=True)
class Heating:
    """Phonons added per incident photon, split by output channel."""

    J_r: float
    J_t: float
    J_a: float
    J: float
    probabilities: tuple[float, float, float] = (np.nan, np.nan, np.nan)

    def as_dict(self) -> dict:
        return {"J_r": self.J_r, "J_t": self.J_t, "J_a": self.J_a, "J": self.J}


def _position_basis(state: MotionalState, U: np.ndarray) -> np.ndarray:
    if state.is_pure:
        return U.T @ state.data
    return U.T @ state.data @ U


def heating_per_photon(p: PhysicalParams, state: MotionalState, n_phonon: int | None = None) -> Heating:
    """Probability-weighted phonon number of each conditional state, minus the initial one.

    Works in the truncated Fock basis via the position grid of ``state``.
    """
    if n_phonon is not None and n_phonon != state.n_phonon:
        raise InvalidDimensionError(f"state has {state.n_phonon} phonon levels, expected {n_phonon}")
    check_truncation(state, what="initial motional state")
    xs, U = position_grid(state.n_phonon)
    amps = amplitudes_at(p, xs)
    levels = np.arange(state.n_phonon)
    initial = state.populations() @ levels
    coeffs = _position_basis(state, U)
    J, probs = [], []
    for name, s in zip(CHANNELS, amps):
        if state.is_pure:
            vec = U @ (s * coeffs)
            pops = np.abs(vec) ** 2
        else:
            mat = U @ (s[:, None] * coeffs * s.conj()[None, :]) @ U.T
            pops = np.real(np.diag(mat))
        prob = pops.sum()
        J.append(float(pops @ levels))
        probs.append(float(prob))
        if prob > 1e-14:
            top = pops[-1] / prob
            if top > CONDITIONAL_TRUNCATION_TOL:
                raise TruncationError(
                    f"conditional state for channel {name} has top-level population {top:.3g}; "
                    f"increase n_phonon (currently {state.n_phonon})"
                )
            if pops[-2:].sum() / prob > 1e-6:
                warnings.warn(
                    f"conditional state for channel {name} reaches the truncation edge", TruncationWarning, stacklevel=2
                )
    return Heating(J[0], J[1], J[2], sum(J) - float(initial), tuple(probs))


def hermite_functions(xs: np.ndarray, n_max: int) -> np.ndarray:
    """Oscillator eigenfunctions psi_n(x), n = 0..n_max, with x in units of x_zp.

    Normalized so that sum |psi_n|^2 dx = 1 and <x^2> = 1 in the ground state.
    """
    y = np.asarray(xs, dtype=float) / np.sqrt(2)
    out = np.empty((n_max + 1, y.size))
    out[0] = np.pi**-0.25 * np.exp(-(y**2) / 2)
    if n_max >= 1:
        out[1] = np.sqrt(2) * y * out[0]
    for n in range(2, n_max + 1):
        out[n] = np.sqrt(2 / n) * y * out[n - 1] - np.sqrt((n - 1) / n) * out[n - 2]
    return out / 2**0.25


def _feature_width(p: PhysicalParams, span: float) -> float:
    """Smallest length over which the scattering amplitudes vary appreciably."""
    xs = np.linspace(-span, span, 4001)
    amps = amplitudes_at(p, xs)
    ders = amplitude_derivatives(p, xs)
    # slope relative to the channel's peak magnitude: a smooth zero crossing is harmless
    rate = max(np.max(np.abs(d)) / max(np.max(np.abs(s)), 1e-12) for s, d in zip(amps, ders))
    return 1.0 / max(rate, 1e-12)


def heating_quadrature(
    p: PhysicalParams,
    kT_over_wm: float | None = None,
    population_cutoff: float = 1e-12,
    points_per_feature: int = 40,
) -> Heating:
    """Heating of a thermal (or ground) state computed in position space.

    Uses <n> = int x^2 |f|^2 / 4 + |f'|^2 dx - 1/2 for each Fock component f =
    s_alpha psi_n, with analytic derivatives on a uniform grid fine enough to
    resolve the narrowest feature of s_alpha.  Free of Fock truncation, so it
    stays accurate deep in the strong-coupling regime.
    """
    kT = p.kT_over_wm if kT_over_wm is None else kT_over_wm
    if kT > 0:
        n_max = int(np.ceil(kT * -np.log(population_cutoff))) + 1
        pops = thermal_populations(n_max + 1, kT)
    else:
        n_max = 0
        pops = np.ones(1)
    initial = float(pops @ np.arange(n_max + 1))
    span = np.sqrt(4 * n_max + 2) + 12.0
    h = min(0.02, _feature_width(p, span) / points_per_feature)
    xs = np.arange(-span, span + h / 2, h)
    psi = hermite_functions(xs, n_max)
    dpsi = np.empty_like(psi)
    # psi_n' = (sqrt(n) psi_{n-1} - sqrt(n+1) psi_{n+1}) / 2 in x/x_zp units
    ext = np.vstack([psi, hermite_functions(xs, n_max + 1)[-1:]])
    for n in range(n_max + 1):
        lower = np.sqrt(n) * ext[n - 1] if n > 0 else 0.0
        dpsi[n] = 0.5 * (lower - np.sqrt(n + 1) * ext[n + 1])
    amps = amplitudes_at(p, xs)
    ders = amplitude_derivatives(p, xs)
    J, probs = [], []
    for s, ds in zip(amps, ders):
        f = s * psi
        df = ds * psi + s * dpsi
        dens = np.abs(f) ** 2
        per_level = (np.sum(xs**2 * dens / 4 + np.abs(df) ** 2, axis=1) - 0.5 * np.sum(dens, axis=1)) * h
        J.append(float(pops @ per_level))
        probs.append(float(pops @ (np.sum(dens, axis=1) * h)))
    return Heating(J[0], J[1], J[2], sum(J) - initial, tuple(probs))


def trap_evolve(state: MotionalState, t: float, omega_m: float) -> MotionalState:
    """Free evolution exp(-i w_m b^dagger b t) in the trap."""
    phase = np.exp(-1j * omega_m * t * np.arange(state.n_phonon))
    if state.is_pure:
        return MotionalState(phase * state.data, normalized=state.normalized)
    return MotionalState(phase[:, None] * state.data * phase.conj()[None, :], normalized=state.normalized)


def mean_reflectance(p: PhysicalParams, state: MotionalState) -> float:
    """<S_r^dagger S_r> = int R(x) rho(x, x) dx on the truncated position grid."""
    xs, U = position_grid(state.n_phonon)
    R = reflectance_profile(p, xs)
    return float(R @ position_density(state))


def position_density(state: MotionalState) -> np.ndarray:
    """Weights of ``state`` on the position-grid eigenvectors (sums to the trace)."""
    _, U = position_grid(state.n_phonon)
    if state.is_pure:
        return np.abs(U.T @ state.data) ** 2
    return np.real(np.einsum("ki,kl,li->i", U, state.data, U))


def g2_trajectory(
    p: PhysicalParams,
    state: MotionalState,
    times,
    n_phonon: int | None = None,
) -> np.ndarray:
    """Reflected-photon g2(t) assuming pure trap evolution between detections.

    g2(t) = <R>_{trap-evolved conditional state} / <R>_{initial state}.
    """
    if n_phonon is not None and n_phonon != state.n_phonon:
        raise InvalidDimensionError(f"state has {state.n_phonon} phonon levels, expected {n_phonon}")
    check_truncation(state, what="initial motional state")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    xs, U = position_grid(state.n_phonon)
    s_r = amplitudes_at(p, xs).s_r
    R = np.abs(s_r) ** 2
    R_fock = (U * R) @ U.T
    levels = np.arange(state.n_phonon)
    if state.is_pure:
        coeffs = U.T @ state.data
        R_bar = float(R @ np.abs(coeffs) ** 2)
        if R_bar < 1e-12:
            raise UndefinedCorrelatorError(f"mean reflectance {R_bar:.3g} vanishes")
        cond = U @ (s_r * coeffs) / np.sqrt(R_bar)
        phases = np.exp(-1j * p.omega_m * np.outer(times, levels))
        evolved = phases * cond[None, :]
        values = np.einsum("ti,ij,tj->t", evolved.conj(), R_fock, evolved).real
    else:
        rho_x = U.T @ state.data @ U
        R_bar = float(np.real(np.trace(rho_x * R[:, None])))
        if R_bar < 1e-12:
            raise UndefinedCorrelatorError(f"mean reflectance {R_bar:.3g} vanishes")
        cond = U @ (s_r[:, None] * rho_x * s_r.conj()[None, :]) @ U.T / R_bar
        values = np.empty(times.size)
        for k, t in enumerate(times):
            ph = np.exp(-1j * p.omega_m * t * levels)
            values[k] = np.real(np.sum(R_fock.T * (ph[:, None] * cond * ph.conj()[None, :])))
    return np.maximum(values / R_bar, 0.0)


def g2_zero(p: PhysicalParams, state: MotionalState) -> float:
    """g2(0) = <R^2>/<R>^2 over the position distribution of ``state``."""
    xs, _ = position_grid(state.n_phonon)
    R = reflectance_profile(p, xs)
    w = position_density(state)
    return g2_zero_from_profile(R, w)


def g2_zero_from_profile(reflectance, weights) -> float:
    """<R^2>/<R>^2 for a reflectance profile sampled with position weights.

    ``weights`` are quadrature weights times the position density; they need
    not be normalized.
    """
    R = np.asarray(reflectance, dtype=float)
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    mean = (w @ R) / total
    if mean < 1e-12:
        raise UndefinedCorrelatorError(f"mean reflectance {mean:.3g} vanishes")
    return float((w @ R**2) / total / mean**2)
