"""Command-line entry point: ``optomech <subcommand> --config run.json``.

Results are written as CSV (grids, one row per point, with a leading
``# meta: {...}`` line) or JSON.  Exit status: 0 success, 1 invalid input,
2 numerical failure (partial sweep results are still written).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import InvalidDimensionError, OptomechError, ParameterError
from .model import PhysicalParams, derive, exact_zero_detunings, optimal_detunings
from .qops import Dims
from .scatter import amplitudes_at

SCHEMA = 1
META_PREFIX = "# meta: "
SUBCOMMANDS = (
    "derive", "amps", "heating-map", "heating-scaling", "g2-trace", "g2-map",
    "thermal-heating", "thermal-g2-map", "me-validate",
)
REQUIRED_AXES = {
    "amps": ("x",),
    "heating-map": ("delta", "delta0"),
    "g2-map": ("eta", "kappa_ratio"),
    "thermal-heating": ("kT_over_wm",),
    "thermal-g2-map": ("delta0", "kT_over_wm"),
}
OPTIONAL_AXES = {"heating-scaling": ("coop_in",), "thermal-heating": ("coop_in",)}
NEEDS_TIMES = ("g2-trace", "me-validate")
SIM_KEYS = ("n_cavity", "n_phonon", "dt", "conv_tol", "conv_window", "t_max", "integrator")


class ConfigError(ParameterError):
    pass


@dataclass(frozen=True)
class AxisRange:
    """``{min, max, count, scale}`` range, or an explicit increasing ``values`` list."""

    min: float
    max: float
    count: int
    scale: str = "linear"
    explicit: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.explicit is not None:
            if len(self.explicit) < 1 or any(b <= a for a, b in zip(self.explicit, self.explicit[1:])):
                raise ConfigError("explicit axis values must be a non-empty increasing list")
            return
        if self.count < 2:
            raise ConfigError(f"axis count must be >= 2, got {self.count}")
        if not self.min < self.max:
            raise ConfigError(f"axis min must be < max, got {self.min} >= {self.max}")
        if self.scale not in ("linear", "log"):
            raise ConfigError(f"axis scale must be linear or log, got {self.scale!r}")
        if self.scale == "log" and self.min <= 0:
            raise ConfigError("log axis requires min > 0")

    def values(self) -> np.ndarray:
        if self.explicit is not None:
            return np.array(self.explicit, dtype=float)
        if self.scale == "log":
            return np.logspace(math.log10(self.min), math.log10(self.max), self.count)
        return np.linspace(self.min, self.max, self.count)

    def to_dict(self) -> dict:
        if self.explicit is not None:
            return {"values": list(self.explicit)}
        return {"min": self.min, "max": self.max, "count": self.count, "scale": self.scale}

    @classmethod
    def from_dict(cls, data: dict) -> "AxisRange":
        if isinstance(data, dict) and "values" in data:
            try:
                vals = tuple(float(v) for v in data["values"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad axis values {data['values']!r}: {exc}") from None
            if not vals:
                raise ConfigError("explicit axis values must be a non-empty increasing list")
            return cls(vals[0], vals[-1], len(vals), "linear", vals)
        try:
            return cls(float(data["min"]), float(data["max"]), int(data["count"]), data.get("scale", "linear"))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad axis range {data!r}: {exc}") from None


def parse_times(text: str) -> np.ndarray:
    """``start:stop:count`` in microseconds, endpoints included."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ConfigError(f"time range must be start:stop:count, got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"time range must be start:stop:count, got {text!r}") from None
    if count < 2 or not 0 <= start < stop:
        raise ConfigError(f"time range needs 0 <= start < stop and count >= 2, got {text!r}")
    return np.linspace(start, stop, count)


@dataclass
class RunConfig:
    params: PhysicalParams
    sim: dict = field(default_factory=dict)
    axes: dict[str, AxisRange] = field(default_factory=dict)
    times: str | None = None
    options: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    operating_point: dict | None = None

    def dims(self) -> Dims:
        return Dims(int(self.sim.get("n_cavity", 3)), int(self.sim.get("n_phonon", 50)))

    def to_dict(self) -> dict:
        out = {
            "params": self.params.to_dict(),
            "sim": dict(self.sim),
            "axes": {k: v.to_dict() for k, v in self.axes.items()},
            "options": dict(self.options),
            "output": dict(self.output),
        }
        if self.times is not None:
            out["times"] = self.times
        if self.operating_point is not None:
            out["operating_point"] = dict(self.operating_point)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - {"params", "sim", "axes", "times", "options", "output", "operating_point"}
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        if "params" not in data:
            raise ConfigError("config needs a params section")
        raw = dict(data["params"])
        op = data.get("operating_point")
        if op is not None:
            raw.setdefault("delta", 1.0)
            raw.setdefault("delta0", 0.0)
        params = PhysicalParams.from_dict(raw)
        if op is not None:
            params = resolve_operating_point(params, op)
        sim = dict(data.get("sim", {}))
        bad = set(sim) - set(SIM_KEYS)
        if bad:
            raise ConfigError(f"unknown sim key(s): {', '.join(sorted(bad))}")
        axes = {k: AxisRange.from_dict(v) for k, v in data.get("axes", {}).items()}
        times = data.get("times")
        if times is not None:
            parse_times(times)
        cfg = cls(params, sim, axes, times, dict(data.get("options", {})), dict(data.get("output", {})), op)
        cfg.dims()
        return cfg


def resolve_operating_point(p: PhysicalParams, op: dict) -> PhysicalParams:
    """Set (delta, delta0) from ``{"method": "closed_form"|"exact_zero", "x_over_xzp": x}``."""
    method = op.get("method", "closed_form")
    x = float(op.get("x_over_xzp", 0.0))
    if method == "closed_form":
        d0, d = optimal_detunings(p, x)
    elif method == "exact_zero":
        d0, d = exact_zero_detunings(p, x)
    else:
        raise ConfigError(f"unknown operating_point method {method!r}")
    return p.replace(delta=d, delta0=d0)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return RunConfig.from_dict(data)


def check_axes(cfg: RunConfig, command: str) -> None:
    required = REQUIRED_AXES.get(command, ())
    allowed = set(required) | set(OPTIONAL_AXES.get(command, ()))
    missing = [a for a in required if a not in cfg.axes]
    if missing:
        raise ConfigError(f"{command} needs axis/axes: {', '.join(missing)}")
    extra = set(cfg.axes) - allowed
    if extra:
        raise ConfigError(f"{command} does not use axis/axes: {', '.join(sorted(extra))}")
    if command in NEEDS_TIMES and cfg.times is None:
        raise ConfigError(f"{command} needs a time range (config 'times' or --times)")


def read_meta(path: str) -> dict:
    """Metadata embedded in a CSV or JSON output file."""
    with open(path) as fh:
        first = fh.readline()
        if first.startswith(META_PREFIX):
            return json.loads(first[len(META_PREFIX):])
        fh.seek(0)
        return json.load(fh)["meta"]


def config_from_meta(meta: dict) -> RunConfig:
    return RunConfig.from_dict(meta["config"])


# -- subcommands -----------------------------------------------------------------


def _amps(cfg: RunConfig):
    from .sweep import SweepResult

    xs = cfg.axes["x"].values()
    a = amplitudes_at(cfg.params, xs)
    values = {}
    for name, s in zip(("r", "t", "a"), a):
        values[f"re_s_{name}"] = s.real
        values[f"im_s_{name}"] = s.imag
        values[f"abs2_s_{name}"] = np.abs(s) ** 2
    return SweepResult({"x": xs}, values), {}


def _heating_map(cfg: RunConfig, workers):
    from .sweep import heating_map

    return heating_map(cfg.params, cfg.axes["delta"].values(), cfg.axes["delta0"].values(), cfg.dims().n_phonon, workers), {}


def _heating_scaling(cfg: RunConfig, workers, engine):
    from .sweep import heating_scaling, scaling_fit

    coop = cfg.axes["coop_in"].values() if "coop_in" in cfg.axes else None
    res = heating_scaling(
        cfg.params, coop, optimize=bool(cfg.options.get("optimize", False)), engine=engine,
        me_dims=cfg.dims(), me_flux=float(cfg.options.get("me_flux", 0.01)),
        me_conv_tol=float(cfg.sim.get("conv_tol", 1e-4)), workers=workers,
    )
    extra = {}
    if "J" in res.values:
        try:
            extra["fit"] = scaling_fit(res.axes["coop_in"], res.values["J"], cfg.params.eta)._asdict()
        except OptomechError as exc:
            extra["fit"] = {"error": str(exc)}
    return res, extra


def _g2_trace(cfg: RunConfig):
    from .sweep import g2_trace

    return g2_trace(cfg.params, parse_times(cfg.times), cfg.dims().n_phonon), {}


def _g2_map(cfg: RunConfig, workers):
    from .sweep import g2_map

    res = g2_map(cfg.params, cfg.axes["eta"].values(), cfg.axes["kappa_ratio"].values(), cfg.dims().n_phonon, workers=workers)
    return res, {}


def _thermal_heating(cfg: RunConfig, workers):
    from .sweep import scaling_fit, thermal_heating

    coop = cfg.axes["coop_in"].values() if "coop_in" in cfg.axes else None
    res = thermal_heating(cfg.params, cfg.axes["kT_over_wm"].values(), coop, workers)
    fits = []
    for i, kT in enumerate(res.axes["kT_over_wm"]):
        try:
            fits.append({"kT_over_wm": kT, **scaling_fit(res.axes["coop_in"], res.values["J"][i], cfg.params.eta)._asdict()})
        except OptomechError as exc:
            fits.append({"kT_over_wm": kT, "error": str(exc)})
    return res, {"fits": fits}


def _thermal_g2_map(cfg: RunConfig, workers):
    from .sweep import thermal_g2_map

    res = thermal_g2_map(
        cfg.params, cfg.axes["delta0"].values(), cfg.axes["kT_over_wm"].values(),
        int(cfg.sim.get("n_phonon", 150)), workers,
    )
    return res, {}


def _me_validate(cfg: RunConfig):
    from .sweep import me_validation

    res = me_validation(
        cfg.params, parse_times(cfg.times), cfg.dims(), ratio=float(cfg.options.get("ratio", 50.0)),
        flux=float(cfg.options.get("me_flux", 0.01)), integrator=cfg.sim.get("integrator", "rk4"),
    )
    converged = res.meta["convergence"]["converged"]
    return res, {"numerical_failure": None if converged else "steady state did not converge"}


def run(command: str, cfg: RunConfig, workers: int = 1, engine: str = "scatter"):
    """Execute ``command``; returns (payload, extra_meta).  payload is a SweepResult or dict."""
    check_axes(cfg, command)
    if command == "derive":
        return {"params": cfg.params.to_dict(), "derived": derive(cfg.params).to_dict()}, {}
    if command == "amps":
        return _amps(cfg)
    if command == "heating-map":
        return _heating_map(cfg, workers)
    if command == "heating-scaling":
        return _heating_scaling(cfg, workers, engine)
    if command == "g2-trace":
        return _g2_trace(cfg)
    if command == "g2-map":
        return _g2_map(cfg, workers)
    if command == "thermal-heating":
        return _thermal_heating(cfg, workers)
    if command == "thermal-g2-map":
        return _thermal_g2_map(cfg, workers)
    if command == "me-validate":
        return _me_validate(cfg)
    raise ConfigError(f"unknown subcommand {command!r}")


def render(payload, meta: dict, fmt: str) -> str:
    from .sweep import SweepResult

    if isinstance(payload, SweepResult):
        own = dict(payload.meta)
        if own.get("params") not in (None, meta.get("params")):
            own["effective_params"] = own["params"]
        payload.meta = {**own, **meta}
        if fmt == "json":
            return payload.to_json() + "\n"
        return META_PREFIX + json.dumps(payload.meta, sort_keys=True, default=_jsonable) + "\n" + payload.to_csv()
    return json.dumps({**payload, "meta": meta}, indent=1, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optomech", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")
        sp.add_argument("--nphonon", type=int)
        sp.add_argument("--ncavity", type=int)
        sp.add_argument("--engine", choices=("scatter", "lindblad", "both"))
        if name in NEEDS_TIMES:
            sp.add_argument("--times", help="start:stop:count in microseconds")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.nphonon is not None:
            cfg.sim["n_phonon"] = overrides["n_phonon"] = args.nphonon
        if args.ncavity is not None:
            cfg.sim["n_cavity"] = overrides["n_cavity"] = args.ncavity
        if getattr(args, "times", None):
            parse_times(args.times)
            cfg.times = overrides["times"] = args.times
        if args.out:
            cfg.output["path"] = overrides["out"] = args.out
        if args.format:
            cfg.output["format"] = overrides["format"] = args.format
        engine = args.engine or cfg.options.get("engine", "scatter")
        if args.engine:
            cfg.options["engine"] = overrides["engine"] = args.engine
        workers = args.workers or int(cfg.options.get("workers", os.cpu_count() or 1))
        cfg.dims()
        check_axes(cfg, args.command)
        fmt = cfg.output.get("format", "json" if args.command == "derive" else "csv")
        if fmt not in ("csv", "json"):
            raise ConfigError(f"unknown output format {fmt!r}")
    except (OptomechError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            payload, extra = run(args.command, cfg, workers, engine)
        except (ParameterError, InvalidDimensionError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        except (OptomechError, ArithmeticError, np.linalg.LinAlgError) as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return 2
    for w in caught:
        print(f"warning: {w.category.__name__}: {w.message}", file=sys.stderr)

    failure = extra.pop("numerical_failure", None)
    meta = {
        "schema": SCHEMA,
        "version": __version__,
        "command": args.command,
        "engine": engine,
        "params": cfg.params.to_dict(),
        "truncations": {k: cfg.sim[k] for k in ("n_cavity", "n_phonon") if k in cfg.sim},
        "config": cfg.to_dict(),
        "overrides": overrides,
        **extra,
    }
    text = render(payload, meta, fmt)
    path = cfg.output.get("path")
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    failures = getattr(payload, "failures", [])
    if failures:
        print(f"numerical failure at {len(failures)} grid point(s); partial results written", file=sys.stderr)
        return 2
    if failure:
        print(f"numerical failure: {failure}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
