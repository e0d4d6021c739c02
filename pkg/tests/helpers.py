import math

from optomech.model import baseline, exact_zero_detunings


def fig3_params(x_over_xzp: float = 0.0, **changes):
    """Small Lamb-Dicke configuration with an exact reflection zero at x0 + x."""
    p = baseline(eta=0.05, kappa1=1.6 * 3900.0, **changes)
    d0, d = exact_zero_detunings(p, x_over_xzp)
    return p.replace(delta=d, delta0=d0)


def exact_zero_baseline(**changes):
    p = baseline(**changes)
    d0, d = exact_zero_detunings(p)
    return p.replace(delta=d, delta0=d0)


def ground_density(x):
    return math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
