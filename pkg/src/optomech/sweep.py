"""Parameter scans, optimizers and scaling fits built on the two engines.

Every scan returns a :class:`SweepResult`.  Grid points are independent; a
failing point is recorded and masked with NaN instead of aborting the scan.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from . import __version__
from .errors import FitError, NotAMinimumError, OptimizationFailure, OptomechError, UndefinedCorrelatorError
from .model import (
    PhysicalParams,
    coupling,
    derive,
    dressed_resonance,
    effective_length,
    optimal_detunings,
)
from .qops import MotionalState, thermal_density, thermal_occupation
from .scatter import g2_trajectory, g2_zero, heating_per_photon, heating_quadrature, reflectance_profile

SCHEMA = 1
G2_CONTOUR = 6.0  # l (1 + R0) in units of x_zp, heuristic location of the g2(0) maximum


@dataclass
class SweepResult:
    """Named axes, named grids over (subsets of) those axes, and run metadata."""

    axes: dict[str, np.ndarray]
    values: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)
    value_axes: dict[str, tuple[str, ...]] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.axes = {k: np.asarray(v, dtype=float) for k, v in self.axes.items()}
        self.values = {k: np.asarray(v, dtype=float) for k, v in self.values.items()}
        for name, grid in self.values.items():
            names = self.value_axes.setdefault(name, tuple(self.axes))
            shape = tuple(self.axes[a].size for a in names)
            if grid.shape != shape:
                raise ValueError(f"value {name!r} has shape {grid.shape}, axes {names} imply {shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(v.size for v in self.axes.values())

    def mask(self, name: str) -> np.ndarray:
        """True where the value is missing (failed or skipped point)."""
        return np.isnan(self.values[name])

    def full(self, name: str) -> np.ndarray:
        """Value broadcast over every axis of the result."""
        names = self.value_axes[name]
        order = list(self.axes)
        grid = self.values[name]
        shape = [self.axes[a].size if a in names else 1 for a in order]
        perm = sorted(range(len(names)), key=lambda i: order.index(names[i]))
        return np.broadcast_to(np.transpose(grid, perm).reshape(shape), self.shape)

    def to_dict(self) -> dict:
        def clean(arr):
            return [None if not math.isfinite(v) else v for v in np.ravel(arr).tolist()]

        return {
            "schema": SCHEMA,
            "meta": self.meta,
            "axes": {k: v.tolist() for k, v in self.axes.items()},
            "values": {
                k: {"axes": list(self.value_axes[k]), "data": clean(v)} for k, v in self.values.items()
            },
            "failures": self.failures,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "SweepResult":
        axes = {k: np.asarray(v, dtype=float) for k, v in data["axes"].items()}
        values, value_axes = {}, {}
        for k, entry in data["values"].items():
            names = tuple(entry["axes"])
            shape = tuple(axes[a].size for a in names)
            flat = np.array([np.nan if v is None else v for v in entry["data"]], dtype=float)
            values[k] = flat.reshape(shape)
            value_axes[k] = names
        return cls(axes, values, data.get("meta", {}), value_axes, data.get("failures", []))

    @classmethod
    def from_json(cls, text: str) -> "SweepResult":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        """One row per grid point: axes first, then every value (empty when masked)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = list(self.values)
        writer.writerow(list(self.axes) + names)
        grids = [self.full(n) for n in names]
        for index in np.ndindex(*self.shape):
            row = [repr(float(ax[i])) for ax, i in zip(self.axes.values(), index)]
            row += ["" if np.isnan(g[index]) else repr(float(g[index])) for g in grids]
            writer.writerow(row)
        return buf.getvalue()


def base_meta(p: PhysicalParams, engine: str = "scatter", **extra) -> dict:
    meta = {"schema": SCHEMA, "params": p.to_dict(), "engine": engine, "version": __version__}
    meta.update(extra)
    return meta


def _evaluate(func: Callable, items: list, workers: int = 1) -> list:
    """Apply ``func`` to every item, returning results or the raised exception, in order."""
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(partial(_guarded, func), items))
    return [_guarded(func, item) for item in items]


def _guarded(func, item):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return func(item)
    except (OptomechError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return exc


def _fill(result_list, indices, names, shape, failures):
    """Scatter per-point dict results into NaN-initialized grids."""
    grids = {n: np.full(shape, np.nan) for n in names}
    for index, res in zip(indices, result_list):
        if isinstance(res, Exception):
            failures.append({"index": list(index), "error": f"{type(res).__name__}: {res}"})
            continue
        for n in names:
            grids[n][index] = res.get(n, np.nan)
    return grids


def initial_state(p: PhysicalParams, n_phonon: int) -> MotionalState:
    return thermal_density(n_phonon, p.kT_over_wm)


# -- heating -----------------------------------------------------------------


def _heating_point(args):
    p, n_phonon = args
    h = heating_per_photon(p, initial_state(p, n_phonon))
    e2 = p.eta**2
    return {"J_over_eta2": h.J / e2, "Jr_over_eta2": h.J_r / e2, "Jt_over_eta2": h.J_t / e2, "Ja_over_eta2": h.J_a / e2}


def heating_map(p: PhysicalParams, delta_axis, delta0_axis, n_phonon: int = 50, workers: int = 1) -> SweepResult:
    """J/eta^2 over the (delta, delta0) plane from the Fock-space scattering route."""
    delta_axis = np.asarray(delta_axis, dtype=float)
    delta0_axis = np.asarray(delta0_axis, dtype=float)
    indices = list(np.ndindex(delta_axis.size, delta0_axis.size))
    items = [(p.replace(delta=delta_axis[i], delta0=delta0_axis[j]), n_phonon) for i, j in indices]
    names = ("J_over_eta2", "Jr_over_eta2", "Jt_over_eta2", "Ja_over_eta2")
    failures: list[dict] = []
    grids = _fill(_evaluate(_heating_point, items, workers), indices, names, (delta_axis.size, delta0_axis.size), failures)
    g2x0 = float(coupling(p)) ** 2
    with np.errstate(divide="ignore"):
        grids["dressed_delta0"] = np.where(delta_axis != 0, g2x0 / delta_axis, np.nan)
    try:
        d0s, ds = optimal_detunings(p)
        marker = {"delta": ds, "delta0": d0s}
    except OptomechError:
        marker = None
    meta = base_meta(p, truncations={"n_phonon": n_phonon}, optimum=marker)
    axes_of = {n: ("delta", "delta0") for n in names}
    axes_of["dressed_delta0"] = ("delta",)
    return SweepResult({"delta": delta_axis, "delta0": delta0_axis}, grids, meta, axes_of, failures)


class HeatingOptimum(NamedTuple):
    delta: float
    delta0: float
    J: float
    converged_starts: int


def _default_seed(p: PhysicalParams) -> tuple[float, float]:
    g = abs(float(coupling(p)))
    try:
        d0, d = optimal_detunings(p)
    except OptomechError:
        d = max(g, 1e-9) * math.sqrt(p.kappa1 / p.gamma)
        d0 = g**2 / d
    return d, max(d0, 1e-9)


def maximize_heating(
    p: PhysicalParams,
    objective: Callable[[float, float], float] | None = None,
    seed: tuple[float, float] | None = None,
    spread: float = 0.3,
    rtol: float = 1e-3,
) -> HeatingOptimum:
    """Maximize J over (delta, delta0) with a multistart simplex search.

    Works in log coordinates around the seed (default: the closed-form
    operating point), from the seed itself plus four perturbed copies.
    ``objective(delta, delta0)`` defaults to the truncation-free heating of
    ``p`` with those detunings.
    """
    if objective is None:
        def objective(delta, delta0):
            return heating_quadrature(p.replace(delta=delta, delta0=delta0)).J

    d_seed, d0_seed = seed if seed is not None else _default_seed(p)
    if d_seed <= 0 or d0_seed <= 0:
        raise ValueError("seed detunings must be positive")

    def neg(u):
        try:
            value = objective(d_seed * math.exp(u[0]), d0_seed * math.exp(u[1]))
        except OptomechError:
            return math.inf
        return -value if math.isfinite(value) else math.inf

    offsets = [(0.0, 0.0), (spread, spread), (-spread, -spread), (spread, -spread), (-spread, spread)]
    best, converged = None, 0
    for off in offsets:
        res = minimize(
            neg, np.array(off), method="Nelder-Mead",
            options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 2000},
        )
        if res.success and math.isfinite(res.fun):
            converged += 1
        if math.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise OptimizationFailure("heating objective was never finite")
    result = HeatingOptimum(d_seed * math.exp(best.x[0]), d0_seed * math.exp(best.x[1]), -float(best.fun), converged)
    if converged == 0:
        raise OptimizationFailure(f"no start converged within rtol={rtol:g}", best=result)
    return result


def coop_in_axis(eta: float, n_points: int = 25, decades: float = 3.0) -> np.ndarray:
    """Log-spaced C_in from 10^-decades / eta^2 to 10^decades / eta^2."""
    return np.logspace(-decades, decades, n_points) / eta**2


def g0_for_coop_in(p: PhysicalParams, coop_in) -> np.ndarray:
    return np.sqrt(np.asarray(coop_in, dtype=float) * p.kappa2 * p.gamma)


def at_operating_point(p: PhysicalParams, x_over_xzp: float = 0.0) -> PhysicalParams:
    d0, d = optimal_detunings(p, x_over_xzp)
    return p.replace(delta=d, delta0=d0)


def _scaling_point(args):
    p, optimize = args
    q = at_operating_point(p)
    out = {"J": heating_quadrature(q).J}
    if optimize:
        out["J_opt"] = maximize_heating(q).J
    return out


def _me_point(args):
    from .lindblad import SimConfig, me_heating

    p, dims, flux, conv_tol = args
    q = at_operating_point(p).replace(eps=math.sqrt(flux * p.kappa1))
    h = me_heating(q, SimConfig(dims, conv_tol=conv_tol))
    return {"J_me": h.J, "J_me_converged": float(h.report.converged)}


def heating_scaling(
    p: PhysicalParams,
    coop_in=None,
    optimize: bool = False,
    engine: str = "scatter",
    me_dims=None,
    me_flux: float = 0.01,
    me_coop_max: float = 25.0,
    me_conv_tol: float = 1e-4,
    workers: int = 1,
) -> SweepResult:
    """J versus C_in at the closed-form operating point, varying g0.

    ``engine`` selects the scattering route, the master equation ("lindblad",
    restricted to C_in <= me_coop_max where the truncation is adequate) or both.
    At weak coupling the cavity population is nearly blind to the atom, so the
    master-equation route uses a tighter stopping tolerance than the 1% default.
    """
    if engine not in ("scatter", "lindblad", "both"):
        raise ValueError(f"unknown engine {engine!r}")
    coop = coop_in_axis(p.eta) if coop_in is None else np.asarray(coop_in, dtype=float)
    g0s = g0_for_coop_in(p, coop)
    points = [p.replace(g0=g) for g in g0s]
    failures: list[dict] = []
    indices = [(i,) for i in range(coop.size)]
    values, axes_of = {}, {}
    if engine in ("scatter", "both"):
        names = ("J", "J_opt") if optimize else ("J",)
        values.update(_fill(_evaluate(_scaling_point, [(q, optimize) for q in points], workers), indices, names, coop.shape, failures))
    if engine in ("lindblad", "both"):
        from .qops import Dims

        dims = me_dims or Dims(3, 50)
        keep = [i for i in range(coop.size) if coop[i] <= me_coop_max]
        res = _evaluate(_me_point, [(points[i], dims, me_flux, me_conv_tol) for i in keep], workers)
        values.update(_fill(res, [(i,) for i in keep], ("J_me", "J_me_converged"), coop.shape, failures))
        truncations = {"n_cavity": dims.n_cavity, "n_phonon": dims.n_phonon}
    else:
        truncations = {}
    values["g0"] = g0s
    values["eta2_coop_in"] = p.eta**2 * coop
    meta = base_meta(p, engine, truncations=truncations, me_flux=me_flux if engine != "scatter" else None,
                     me_conv_tol=me_conv_tol if engine != "scatter" else None)
    return SweepResult({"coop_in": coop}, values, meta, axes_of, failures)


class ScalingFit(NamedTuple):
    slope_weak: float
    slope_strong: float
    crossover: float
    intercept_weak: float
    intercept_strong: float


def scaling_fit(coop_in, J, eta: float, weak_max: float = 0.1, strong_min: float = 10.0, min_points: int = 4) -> ScalingFit:
    """Power-law slopes of J(C_in) in the weak (eta^2 C_in < weak_max) and strong regimes.

    The crossover is the C_in where the two fitted lines intersect.
    """
    c = np.asarray(coop_in, dtype=float)
    j = np.asarray(J, dtype=float)
    ok = np.isfinite(j) & (j > 0) & (c > 0)
    x = eta**2 * c
    weak = ok & (x < weak_max)
    strong = ok & (x > strong_min)
    if weak.sum() < min_points or strong.sum() < min_points:
        raise FitError(f"need >= {min_points} points per regime, got {int(weak.sum())} weak and {int(strong.sum())} strong")
    s1, a1 = np.polyfit(np.log(c[weak]), np.log(j[weak]), 1)
    s2, a2 = np.polyfit(np.log(c[strong]), np.log(j[strong]), 1)
    crossover = math.exp((a2 - a1) / (s1 - s2)) if s1 != s2 else math.nan
    return ScalingFit(float(s1), float(s2), crossover, float(a1), float(a2))


def thermal_crossover_prediction(eta: float, kT_over_wm: float) -> float:
    """C_in at which the thermal spread x_T equals the effective length sqrt(2)/(eta sqrt(C_in))."""
    return 2.0 / (eta**2 * (2 * thermal_occupation(kT_over_wm) + 1))


def length_matching_coop_in(p: PhysicalParams, length: float, lo: float, hi: float) -> float:
    """C_in in [lo, hi] at which the effective length of the operating point equals ``length``.

    Uses the numerical curvature length, so it holds for any kappa1 > kappa2.
    """
    def f(u):
        q = at_operating_point(p.replace(g0=float(g0_for_coop_in(p, math.exp(u)))))
        return math.log(effective_length(q) / length)

    return math.exp(brentq(f, math.log(lo), math.log(hi), xtol=1e-10))


def _thermal_point(args):
    p, kT = args
    return {"J": heating_quadrature(at_operating_point(p), kT_over_wm=kT).J}


def thermal_heating(p: PhysicalParams, kT_axis, coop_in=None, workers: int = 1) -> SweepResult:
    """J versus C_in for several trap temperatures (truncation-free route)."""
    kT_axis = np.asarray(kT_axis, dtype=float)
    coop = coop_in_axis(p.eta) if coop_in is None else np.asarray(coop_in, dtype=float)
    g0s = g0_for_coop_in(p, coop)
    indices = list(np.ndindex(kT_axis.size, coop.size))
    items = [(p.replace(g0=g0s[j]), kT_axis[i]) for i, j in indices]
    failures: list[dict] = []
    values = _fill(_evaluate(_thermal_point, items, workers), indices, ("J",), (kT_axis.size, coop.size), failures)
    values["crossover_prediction"] = np.array([
        length_matching_coop_in(p, math.sqrt(2 * thermal_occupation(kT) + 1), coop[0], coop[-1]) for kT in kT_axis
    ])
    meta = base_meta(p, truncations={"population_cutoff": 1e-12})
    return SweepResult(
        {"kT_over_wm": kT_axis, "coop_in": coop}, values, meta,
        {"J": ("kT_over_wm", "coop_in"), "crossover_prediction": ("kT_over_wm",)}, failures,
    )


# -- reflectance zero and g2 ---------------------------------------------------


def golden_minimize(f: Callable[[float], float], lo: float, hi: float, n_scan: int = 41, xtol: float = 1e-6) -> float:
    """Minimize ``f`` on [lo, hi] (lo > 0) in log coordinates.

    A coarse log-spaced scan locates a bracketing triple that a golden-section
    search then refines to relative tolerance ``xtol``.
    """
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    us = np.linspace(math.log(lo), math.log(hi), n_scan)

    def fu(u):
        v = f(math.exp(u))
        return v if math.isfinite(v) else math.inf

    vals = np.array([fu(u) for u in us])
    k = int(np.argmin(vals))
    if k == 0 or k == n_scan - 1:
        return float(math.exp(us[k]))
    # golden's tol is relative to |u|; convert so the step in x is xtol relative
    tol = 0.5 * xtol / max(1.0, abs(us[k]))
    res = minimize_scalar(fu, bracket=(us[k - 1], us[k], us[k + 1]), method="golden", tol=tol)
    u = res.x if res.fun <= vals[k] else us[k]
    return float(math.exp(u))


def slaved(p: PhysicalParams, delta: float, x_over_xzp: float = 0.0) -> PhysicalParams:
    """``p`` at atom-cavity detuning ``delta`` with the drive on the dressed resonance."""
    return p.replace(delta=delta, delta0=float(coupling(p, x_over_xzp)) ** 2 / delta)


def zero_reflectance_detuning(
    p: PhysicalParams,
    objective: str = "g2",
    n_phonon: int = 50,
    x_over_xzp: float = 0.0,
) -> float:
    """Atom-cavity detuning delta for the reflectance-zero operating point.

    For kappa1 > kappa2 this is the closed form.  Otherwise no zero exists and
    delta is found numerically with delta0 slaved to the dressed resonance:
    ``objective="reflectance"`` minimizes R(x0), ``objective="g2"`` maximizes
    g2(0) of the initial motional state.
    """
    if objective not in ("reflectance", "g2"):
        raise ValueError(f"unknown objective {objective!r}")
    if p.kappa1 > p.kappa2:
        return optimal_detunings(p, x_over_xzp)[1]
    g = abs(float(coupling(p, x_over_xzp)))
    centre = max(g, 1e-12) * math.sqrt(p.kappa / p.gamma)
    if objective == "reflectance":
        def f(delta):
            return float(reflectance_profile(slaved(p, delta, x_over_xzp), np.array([x_over_xzp]))[0])
    else:
        state = initial_state(p, n_phonon)

        def f(delta):
            try:
                return -g2_zero(slaved(p, delta, x_over_xzp), state)
            except UndefinedCorrelatorError:
                return math.inf
    return golden_minimize(f, centre * 1e-2, centre * 1e2)


def g2_period_samples(omega_m: float, n_times: int = 64) -> np.ndarray:
    return np.linspace(0.0, 2 * math.pi / omega_m, n_times, endpoint=False)


def _g2_point(args):
    p, n_phonon, n_times = args
    delta = zero_reflectance_detuning(p, "g2", n_phonon)
    q = slaved(p, delta)
    state = initial_state(q, n_phonon)
    trace = g2_trajectory(q, state, g2_period_samples(q.omega_m, n_times))
    R0 = float(reflectance_profile(q, np.zeros(1))[0])
    try:
        ell = effective_length(q)
    except NotAMinimumError:
        ell = math.nan
    return {
        "g2_zero": g2_zero(q, state),
        "delta_g2": float(trace.max() - trace.min()),
        "R0": R0,
        "ell_1pR0": ell * (1 + R0),
        "delta": delta,
        "delta0": q.delta0,
    }


def g2_map(p: PhysicalParams, eta_axis, ratio_axis, n_phonon: int = 50, n_times: int = 64, workers: int = 1) -> SweepResult:
    """g2(0) and its peak-to-peak variation over a trap period on the (eta, kappa1/kappa2) plane."""
    if n_times < 64:
        raise ValueError("n_times must be >= 64")
    eta_axis = np.asarray(eta_axis, dtype=float)
    ratio_axis = np.asarray(ratio_axis, dtype=float)
    indices = list(np.ndindex(eta_axis.size, ratio_axis.size))
    items = [(p.replace(eta=eta_axis[i], kappa1=ratio_axis[j] * p.kappa2), n_phonon, n_times) for i, j in indices]
    names = ("g2_zero", "delta_g2", "R0", "ell_1pR0", "delta", "delta0")
    failures: list[dict] = []
    grids = _fill(_evaluate(_g2_point, items, workers), indices, names, (eta_axis.size, ratio_axis.size), failures)
    meta = base_meta(p, truncations={"n_phonon": n_phonon}, n_times=n_times, contour_ell_1pR0=G2_CONTOUR)
    return SweepResult({"eta": eta_axis, "kappa_ratio": ratio_axis}, grids, meta, {}, failures)


def _thermal_g2_point(args):
    p, n_phonon = args
    state = thermal_density(n_phonon, p.kT_over_wm)
    return {"g2_half_period": float(g2_trajectory(p, state, [math.pi / p.omega_m])[0])}


def thermal_g2_map(p: PhysicalParams, detuning_axis, kT_axis, n_phonon: int = 150, workers: int = 1) -> SweepResult:
    """g2(pi/omega_m) over drive detuning delta0 and trap temperature at fixed delta.

    Also returns the delta0 loci of vanishing reflectance at x0 and at x0 +/- x_T.
    """
    detuning_axis = np.asarray(detuning_axis, dtype=float)
    kT_axis = np.asarray(kT_axis, dtype=float)
    indices = list(np.ndindex(detuning_axis.size, kT_axis.size))
    items = [(p.replace(delta0=detuning_axis[i], kT_over_wm=kT_axis[j]), n_phonon) for i, j in indices]
    failures: list[dict] = []
    grids = _fill(_evaluate(_thermal_g2_point, items, workers), indices, ("g2_half_period",), (detuning_axis.size, kT_axis.size), failures)
    xT = np.sqrt(2 * np.array([thermal_occupation(k) for k in kT_axis]) + 1)
    grids["locus_x0"] = np.full(kT_axis.size, float(coupling(p)) ** 2 / p.delta)
    grids["locus_plus_xT"] = coupling(p, xT) ** 2 / p.delta
    grids["locus_minus_xT"] = coupling(p, -xT) ** 2 / p.delta
    grids["n_bar"] = xT**2 / 2 - 0.5
    axes_of = {"g2_half_period": ("delta0", "kT_over_wm")}
    axes_of.update({k: ("kT_over_wm",) for k in ("locus_x0", "locus_plus_xT", "locus_minus_xT", "n_bar")})
    meta = base_meta(p, truncations={"n_phonon": n_phonon})
    return SweepResult({"delta0": detuning_axis, "kT_over_wm": kT_axis}, grids, meta, axes_of, failures)


def g2_trace(p: PhysicalParams, times, n_phonon: int = 50) -> SweepResult:
    """Scattering-route g2(t) of the reflected light for the initial motional state of ``p``."""
    times = np.asarray(times, dtype=float)
    values = {"g2": g2_trajectory(p, initial_state(p, n_phonon), times)}
    return SweepResult({"t": times}, values, base_meta(p, truncations={"n_phonon": n_phonon}))


def thermal_g2_fixed_eta_eff(p: PhysicalParams, eta_eff: float, kT_axis, times, n_phonon: int = 150) -> SweepResult:
    """g2(t) at constant effective Lamb-Dicke parameter eta sqrt(2 n_bar + 1)."""
    kT_axis = np.asarray(kT_axis, dtype=float)
    times = np.asarray(times, dtype=float)
    grid = np.full((kT_axis.size, times.size), np.nan)
    failures = []
    for i, kT in enumerate(kT_axis):
        eta = eta_eff / math.sqrt(2 * thermal_occupation(kT) + 1)
        q = p.replace(eta=eta, kT_over_wm=kT)
        res = _guarded(lambda s: g2_trajectory(q, s, times), thermal_density(n_phonon, kT))
        if isinstance(res, Exception):
            failures.append({"index": [i], "error": f"{type(res).__name__}: {res}"})
        else:
            grid[i] = res
    meta = base_meta(p, truncations={"n_phonon": n_phonon}, eta_eff=eta_eff)
    return SweepResult({"kT_over_wm": kT_axis, "t": times}, {"g2": grid}, meta, {}, failures)


# -- master-equation validation ------------------------------------------------


def me_validation(p: PhysicalParams, times, dims=None, ratio: float = 50.0, flux: float = 0.01, integrator: str = "rk4"):
    """Dual-engine g2(t) at a raised trap frequency omega_m = gamma_tilde(x0)/ratio.

    Returns a SweepResult tagged ``mode="rescaled_omega_m"`` with both traces.
    """
    from .lindblad import SimConfig, me_g2, validation_params
    from .qops import Dims

    dims = dims or Dims(3, 20)
    q = validation_params(p, ratio).replace(eps=math.sqrt(flux * p.kappa1))
    times = np.asarray(times, dtype=float)
    me = me_g2(q, SimConfig(dims, integrator=integrator), times)
    sc = g2_trajectory(q, initial_state(q, dims.n_phonon), times)
    meta = base_meta(
        q, "both", mode="rescaled_omega_m", ratio=ratio,
        gamma_tilde=float(dressed_resonance(q)[1]),
        truncations={"n_cavity": dims.n_cavity, "n_phonon": dims.n_phonon},
        convergence=me.report.to_dict(),
    )
    return SweepResult({"t": times}, {"g2_me": me.g2, "g2_scatter": sc}, meta)


def mean_linewidth(p: PhysicalParams, state: MotionalState) -> float:
    """<gamma + kappa g(x)^2 / delta^2> over the position distribution of ``state``."""
    from .qops import position_grid
    from .scatter import position_density

    xs, _ = position_grid(state.n_phonon)
    w = position_density(state)
    return float(w @ (p.gamma + p.kappa * coupling(p, xs) ** 2 / p.delta**2) / w.sum())


def decay_rate(times, excess) -> float:
    """Exponential rate from a log-linear least-squares fit of positive ``excess``."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(excess, dtype=float)
    ok = y > 0
    if ok.sum() < 3:
        raise FitError("need >= 3 positive samples to fit a decay rate")
    slope, _ = np.polyfit(t[ok], np.log(y[ok]), 1)
    return float(-slope)

