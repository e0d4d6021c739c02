"""Physical parameters, derived figures of merit and operating points.

Units: every rate and detuning is an angular frequency in MHz, times are in
microseconds and positions are in units of the zero-point motion x_zp.
"""

from __future__ import annotations

import dataclasses
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NoCriticalCouplingError, NotAMinimumError, ParameterError, RegimeWarning
from .qops import thermal_occupation

# Sign of the recoil kick exp(1j * RECOIL_SIGN * k_c x) imparted when the atom
# emits into free space.  Shared by the scattering and master-equation engines.
RECOIL_SIGN = 1

FIELDS = (
    "g0", "gamma", "kappa1", "kappa2", "delta", "delta0",
    "omega_m", "eta", "kx0", "eps", "kT_over_wm",
)


@dataclass(frozen=True)
class PhysicalParams:
    g0: float
    gamma: float
    kappa1: float
    kappa2: float
    delta: float
    delta0: float
    omega_m: float
    eta: float
    kx0: float = math.pi / 4
    eps: float = 0.0
    kT_over_wm: float = 0.0

    def __post_init__(self):
        for name in FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise ParameterError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        for name in ("g0", "gamma", "kappa1", "kappa2", "omega_m", "eta"):
            if getattr(self, name) <= 0 and not (name == "g0" and self.g0 == 0):
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.g0 < 0:
            raise ParameterError(f"g0 must be >= 0, got {self.g0!r}")
        if self.eps < 0:
            raise ParameterError(f"eps must be >= 0, got {self.eps!r}")
        if self.kT_over_wm < 0:
            raise ParameterError(f"kT_over_wm must be >= 0, got {self.kT_over_wm!r}")

    @property
    def kappa(self) -> float:
        return self.kappa1 + self.kappa2

    @property
    def input_flux(self) -> float:
        """Incoming photons per microsecond, eps^2 / kappa1."""
        return self.eps**2 / self.kappa1

    def replace(self, **changes) -> "PhysicalParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> "PhysicalParams":
        unknown = set(data) - set(FIELDS)
        if unknown:
            raise ParameterError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ParameterError(str(exc)) from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PhysicalParams":
        return cls.from_dict(json.loads(text))


def baseline(**changes) -> PhysicalParams:
    """Experimental baseline with the detunings placed at the closed-form optimum."""
    p = PhysicalParams(
        g0=730.0, gamma=6.0, kappa1=7800.0, kappa2=3900.0, delta=1.0, delta0=0.0,
        omega_m=0.16, eta=0.24, kx0=math.pi / 4,
    )
    p = p.replace(**changes)
    if "delta" not in changes and "delta0" not in changes:
        delta0, delta = optimal_detunings(p)
        p = p.replace(delta=delta, delta0=delta0)
    return p


@dataclass(frozen=True)
class Derived:
    kappa: float
    coop: float
    coop_in: float
    gx0: float
    omega_r: float
    beta_max: float
    n_bar: float
    xT_over_xzp: float
    eta_eff: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def coupling(p: PhysicalParams, x_over_xzp=0.0):
    """Vacuum Rabi coupling g(x) = g0 sin(k_c x0 + eta x/x_zp)."""
    return p.g0 * np.sin(p.kx0 + p.eta * np.asarray(x_over_xzp, dtype=float))


def derive(p: PhysicalParams) -> Derived:
    kappa = p.kappa
    coop = p.g0**2 / (kappa * p.gamma)
    n_bar = thermal_occupation(p.kT_over_wm)
    xT = math.sqrt(2 * n_bar + 1)
    if p.omega_m >= p.gamma / 10 or p.omega_m >= kappa / 10:
        warnings.warn(
            f"omega_m={p.omega_m:g} is not much smaller than gamma={p.gamma:g} and kappa={kappa:g}; "
            "the unresolved-sideband approximation behind the scattering picture is questionable",
            RegimeWarning,
            stacklevel=2,
        )
    return Derived(
        kappa=kappa,
        coop=coop,
        coop_in=p.g0**2 / (p.kappa2 * p.gamma),
        gx0=float(coupling(p)),
        omega_r=p.eta**2 * p.omega_m,
        beta_max=p.eta * math.sqrt(coop) / math.sqrt(2),
        n_bar=n_bar,
        xT_over_xzp=xT,
        eta_eff=p.eta * xT,
    )


def dressed_resonance(p: PhysicalParams, x_over_xzp=0.0):
    """Dispersive shift g^2/Delta and broadened linewidth gamma + kappa g^2/Delta^2."""
    if p.delta == 0:
        raise ZeroDivisionError("dressed resonance undefined at zero atom-cavity detuning")
    g2 = coupling(p, x_over_xzp) ** 2
    return g2 / p.delta, p.gamma + p.kappa * g2 / p.delta**2


def optimal_detunings(p: PhysicalParams, x_over_xzp: float = 0.0) -> tuple[float, float]:
    """Closed-form operating point (delta0_star, delta_star).

    delta_star = g(x) sqrt((kappa1 - kappa2)/gamma) balances the dressed decay
    into the driven port against all other channels; delta0_star = g(x)^2/delta_star
    drives the dressed atomic resonance.  Valid in the dispersive limit.
    """
    if p.kappa1 <= p.kappa2:
        raise NoCriticalCouplingError(
            f"critical coupling requires kappa1 > kappa2 (got {p.kappa1:g} <= {p.kappa2:g})"
        )
    g = float(coupling(p, x_over_xzp))
    if g == 0:
        raise NoCriticalCouplingError("no critical coupling at a node of the cavity field")
    delta_star = abs(g) * math.sqrt((p.kappa1 - p.kappa2) / p.gamma)
    return g**2 / delta_star, delta_star


def exact_zero_detunings(p: PhysicalParams, x_over_xzp: float = 0.0) -> tuple[float, float]:
    """Detunings (delta0, delta) at which the full reflection amplitude vanishes at x.

    Solves s_r(x) = 0 exactly instead of using the dispersive closed forms;
    picks the branch continuously connected to ``optimal_detunings``.
    """
    if p.kappa1 <= p.kappa2:
        raise NoCriticalCouplingError(
            f"zero reflectance requires kappa1 > kappa2 (got {p.kappa1:g} <= {p.kappa2:g})"
        )
    g2 = float(coupling(p, x_over_xzp)) ** 2
    a = (p.kappa1 - p.kappa2) / 2
    b = p.gamma / 2
    radicand = g2 * b / a - b**2
    if radicand <= 0:
        raise NoCriticalCouplingError("coupling too weak for an exact reflection zero")
    delta0 = math.sqrt(radicand)
    return delta0, delta0 * (a / b - 1)


def coupling_parameter_beta(p: PhysicalParams) -> float:
    """Static strong-coupling parameter g0^2 eta / (Delta gamma_tilde(x0))."""
    _, linewidth = dressed_resonance(p)
    return p.g0**2 * p.eta / (p.delta * linewidth)


def effective_length_closed_form(p: PhysicalParams) -> float:
    """sqrt(2)/(eta sqrt(C_in)) in units of x_zp (optimum with kappa1 = 2 kappa2)."""
    return math.sqrt(2) / (p.eta * math.sqrt(derive(p).coop_in))


def reflectance_curvature(p: PhysicalParams, x_over_xzp: float = 0.0, h: float = 1e-3) -> float:
    """Second derivative of R(x) = |s_r(x)|^2, central differences + one Richardson step."""
    from .scatter import reflectance_profile

    def second_difference(step):
        r = reflectance_profile(p, np.array([x_over_xzp - step, x_over_xzp, x_over_xzp + step]))
        return (r[0] - 2 * r[1] + r[2]) / step**2

    coarse = second_difference(h)
    fine = second_difference(h / 2)
    return (4 * fine - coarse) / 3


def effective_length(p: PhysicalParams, x_over_xzp: float = 0.0) -> float:
    """Length l (units of x_zp) with R(x) ~ R0 + ((x - x0)/l)^2, from numerical curvature."""
    curvature = reflectance_curvature(p, x_over_xzp)
    if not curvature > 0:
        raise NotAMinimumError(f"reflectance curvature {curvature:.3g} at x={x_over_xzp:g} is not positive")
    return math.sqrt(2 / curvature)
