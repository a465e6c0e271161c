"""Run configuration: YAML files, ``key=value`` overrides and named presets."""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError
from .multiindex import SparseIndex
from .solver import AdaptiveConfig, SolverConfig

_EXPR_NAMES = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "cosh", "sinh", "pi",
                 "ones_like", "zeros_like", "where")
}


def eval_field(expr, **coords):
    """Evaluate a field expression such as ``0.5*cos(2*pi*x)`` on grid coordinates."""
    if isinstance(expr, (int, float)):
        return float(expr) + 0.0 * coords["x"]
    env = dict(_EXPR_NAMES)
    env.update(coords)
    try:
        val = eval(compile(str(expr), "<field>", "eval"), {"__builtins__": {}}, env)
    except Exception as exc:  # noqa: BLE001 - report any evaluation failure as config error
        raise ConfigError(f"cannot evaluate field expression {expr!r}: {exc}", ["expr"]) from exc
    return np.broadcast_to(np.asarray(val, dtype=float), coords["x"].shape).copy()


@dataclass
class ViscositySpec:
    kind: str = "deterministic"   # deterministic | squared | uniform
    a1: float = 0.0
    sigma_z: float = 0.0
    l_z: float = 1.0
    D_z: int = 0
    lo: float = 0.0
    hi: float = 0.0
    scale: float = 1.0


@dataclass
class ShearLayerSpec:
    delta: float = 0.025
    eps: float = 0.3
    gamma: int = 2
    reflect: bool = False


@dataclass
class RunConfig:
    model: str = "burgers"
    method: str = "dgpc"
    M: int = 128
    T: Optional[float] = None
    dt: float = 0.001
    Dt: Optional[float] = 0.1
    K: int = 2
    N: int = 2
    D: int = 3
    S: int = 100_000
    seed: int = 0
    caps: Optional[list] = None
    caps2: Optional[list] = None
    caps3: Optional[list] = None
    adaptive: Optional[dict] = None
    nu: float = 0.01
    mu: float = 0.0
    sigma: str = "0.5*cos(2*pi*x)"
    u0: str = "0.5*sin(2*pi*x)"
    dsigma1_dy: str = "0.1*pi*cos(2*pi*x)*cos(2*pi*y)"
    dsigma2_dx: str = "0.1*pi*cos(2*pi*x)*sin(2*pi*y)"
    shear: ShearLayerSpec = field(default_factory=ShearLayerSpec)
    temperature: bool = True
    temperature_delta: float = 0.025
    viscosity: ViscositySpec = field(default_factory=ViscositySpec)
    kl_method: str = "dense"
    oversample: int = 10
    scheme: str = "etd2"
    moment_times: Optional[list] = None
    moment_samples: Optional[int] = None
    mc_samples: int = 10_000
    mc_batch: int = 2000
    mc_visc: int = 0
    output: str = "results"
    snapshots: bool = True

    def to_dict(self):
        return asdict(self)

    # ------------------------------------------------------------ builders

    def grid(self):
        from .spectral import Grid
        return Grid(self.M, 1 if self.model == "burgers" else 2)

    def sparse(self):
        if self.caps is None:
            return None
        return SparseIndex.from_lists(self.caps, self.caps2, self.caps3)

    def solver_config(self):
        ad = None
        if self.adaptive:
            ad = AdaptiveConfig(**self.adaptive)
        times = tuple(self.moment_times) if self.moment_times else (self.T,)
        return SolverConfig(
            K=self.K, N=self.N, D=self.D, S=self.S, dt=self.dt, T=self.T,
            Dt=None if ad else self.Dt, adaptive=ad, sparse=self.sparse(), seed=self.seed,
            kl_method=self.kl_method, oversample=self.oversample, scheme=self.scheme,
            moment_times=times, moment_samples=self.moment_samples,
        )

    def mc_config(self):
        from .mc import MCConfig
        times = tuple(self.moment_times) if self.moment_times else (self.T,)
        return MCConfig(self.mc_samples, self.dt, self.T, self.seed, self.mc_batch, times,
                        self.mc_visc)

    def build_viscosity(self, grid):
        from .models.viscosity import (
            deterministic_viscosity, uniform_viscosity, viscosity_process)
        v = self.viscosity
        if v.kind == "deterministic":
            return None
        if v.kind == "squared":
            model = viscosity_process(v.sigma_z, v.l_z, v.D_z, v.a1, grid)
        elif v.kind == "uniform":
            model = uniform_viscosity(v.lo, v.hi, grid)
        else:
            raise ConfigError(f"unknown viscosity kind {v.kind!r}", ["viscosity.kind"])
        model.scale = v.scale
        return model

    def build_model(self):
        from .models import BurgersModel, VorticityModel, shear_layer_ic, temperature_ic
        grid = self.grid()
        visc = self.build_viscosity(grid)
        if self.model == "burgers":
            x = grid.x
            return BurgersModel(grid, self.nu, eval_field(self.sigma, x=x),
                                eval_field(self.u0, x=x), visc)
        x, y = grid.mesh()
        s = self.shear
        w0 = shear_layer_ic(grid, s.delta, s.eps, s.gamma, s.reflect)
        theta0 = temperature_ic(grid, self.temperature_delta) if self.temperature else None
        nu = visc.a1 if visc is not None else self.nu
        mu = nu if visc is not None else self.mu
        return VorticityModel(grid, nu, mu, eval_field(self.dsigma1_dy, x=x, y=y),
                              eval_field(self.dsigma2_dx, x=x, y=y), w0, theta0, visc)

    # ------------------------------------------------------------ validation

    def validate(self):
        bad = []
        if self.model not in ("burgers", "ns"):
            bad.append("model")
        if self.method not in ("dgpc", "mc", "exact"):
            bad.append("method")
        if self.T is None:
            bad.append("T")
        elif self.T <= 0:
            bad.append("T")
        for name in ("K", "N", "S", "M", "mc_samples", "mc_batch"):
            if getattr(self, name) < 1:
                bad.append(name)
        if self.D < 0:
            bad.append("D")
        if self.dt <= 0:
            bad.append("dt")
        if not self.adaptive:
            if self.Dt is None or self.Dt <= 0 or (self.T is not None and self.Dt > self.T):
                bad.append("Dt")
        if self.M % 2 or self.M < 8:
            bad.append("M")
        if self.model == "ns" and self.K % 2:
            bad.append("K")
        if self.caps is not None:
            nvar = self.K + self.D
            for name in ("caps", "caps2", "caps3"):
                c = getattr(self, name)
                if c is not None and (len(c) != nvar or any(v > self.N or v < 0 for v in c)):
                    bad.append(name)
        elif self.caps2 is not None or self.caps3 is not None:
            bad.append("caps")
        if self.viscosity.kind not in ("deterministic", "squared", "uniform"):
            bad.append("viscosity.kind")
        if self.kl_method not in ("dense", "randomized"):
            bad.append("kl_method")
        if self.scheme not in ("etd2", "adams4"):
            bad.append("scheme")
        if self.adaptive:
            try:
                AdaptiveConfig(**self.adaptive)
            except (ConfigError, TypeError):
                bad.append("adaptive")
        if bad:
            raise ConfigError(f"invalid configuration fields: {', '.join(bad)}", bad)
        if self.M & (self.M - 1):
            import logging
            logging.getLogger(__name__).warning("M=%d is not a power of two", self.M)
        return self


# ---------------------------------------------------------------- presets

_EX1_CAPS = {
    "i": (3, (2, 2, 2, 1, 1), (2, 2, 2, 1, 0)),
    "ii": (4, (2, 2, 2, 2, 1, 1), (2, 2, 2, 2, 1, 0)),
    "iii": (5, (2, 2, 2, 2, 2, 1, 1), (2, 2, 2, 2, 2, 1, 0)),
}
_EX3_CAPS = {
    1: ((1,) * 7, None, None),
    2: ((2, 2, 1, 2, 2, 1, 1), (2, 2, 0, 2, 2, 0, 0), None),
    3: ((3, 3, 1, 3, 3, 1, 1), (2, 2, 0, 2, 2, 0, 0), (3, 3, 0, 3, 3, 0, 0)),
}
_EX5_CAPS = {
    "i": (4, (2, 1, 2, 1, 2, 2, 1, 1), (2, 0, 2, 0, 2, 2, 0, 0)),
    "ii": (6, (2, 1, 2, 1, 2, 2, 1, 1, 1, 1), (2, 0, 2, 0, 2, 2, 1, 1, 0, 0)),
    "iii": (8, (2, 1, 2, 1, 2, 2, 2, 2, 2, 1, 1, 1), (2, 0, 2, 0, 2, 2, 2, 2, 2, 0, 0, 0)),
}
_EX4_SCENARIOS = {"i": (0.04, 0.1), "ii": (0.1, 0.1), "iii": (0.1, 0.04)}
_EX7_ICS = {
    "a": dict(delta=0.05, eps=0.3, gamma=2, reflect=True),
    "b": dict(delta=0.05, eps=0.5, gamma=1, reflect=False),
    "c": dict(delta=0.05, eps=0.3, gamma=3, reflect=False),
}

PRESETS = ("example1", "example2", "example3", "example4", "example5", "example6", "example7")


def preset(name):
    """Configuration dictionary of a named scenario, ``name`` or ``name:variant``."""
    base, _, variant = name.partition(":")
    if base == "example1" or base == "example2":
        v = variant or "iii"
        if v not in _EX1_CAPS:
            raise ConfigError(f"unknown variant {v!r} of {base}", ["preset"])
        D, caps, caps2 = _EX1_CAPS[v]
        out = dict(model="burgers", K=2, N=2, D=D, caps=list(caps), caps2=list(caps2), Dt=0.1,
                   dt=0.001, M=128, S=100_000, T=3.0, nu=0.01, sigma="0.5*cos(2*pi*x)",
                   u0="0.5*sin(2*pi*x)")
        if base == "example2":
            out.update(nu=0.005, T=2.4, sigma="0.5*cos(4*pi*x)",
                       u0="0.5*(exp(cos(2*pi*x)) - 1.5)*sin(2*pi*(x + 0.37))")
        return out
    if base == "example3":
        N = int(variant or 3)
        if N not in _EX3_CAPS:
            raise ConfigError("example3 variants are N = 1, 2, 3", ["preset"])
        caps, caps2, caps3 = _EX3_CAPS[N]
        nu = 0.02
        return dict(model="burgers", K=3, N=N, D=4, caps=list(caps),
                    caps2=None if caps2 is None else list(caps2),
                    caps3=None if caps3 is None else list(caps3), Dt=0.1, dt=0.001, M=128,
                    S=300_000, T=1.0, nu=nu, sigma="0.1",
                    u0=f"0.1 - 4*{nu}*pi*cos(2*pi*x)/(3 + sin(2*pi*x))")
    if base == "example4":
        v = variant or "i"
        if v not in _EX4_SCENARIOS:
            raise ConfigError(f"unknown variant {v!r} of example4", ["preset"])
        sz, sw = _EX4_SCENARIOS[v]
        return dict(model="burgers", K=2, N=2, D=8,
                    caps=[2, 2, 2, 2, 2, 2, 1, 1, 1, 1], caps2=[2, 2, 2, 2, 2, 2, 1, 1, 0, 0],
                    Dt=0.1, dt=0.001, M=128, S=300_000, T=4.0, nu=0.005,
                    sigma=f"{sw}*cos(2*pi*x)", u0="0.5*cos(4*pi*x)",
                    viscosity=dict(kind="squared", a1=0.005, sigma_z=sz, l_z=2.0, D_z=3))
    if base in ("example5", "example6"):
        v = variant or "iii"
        if v not in _EX5_CAPS:
            raise ConfigError(f"unknown variant {v!r} of {base}", ["preset"])
        D, caps, caps2 = _EX5_CAPS[v]
        out = dict(model="ns", K=4, N=2, D=D, caps=list(caps), caps2=list(caps2), Dt=0.1,
                   dt=0.002, M=128, S=200_000, T=1.0, nu=0.0002, mu=0.0002,
                   kl_method="randomized", shear=dict(delta=0.025, eps=0.3, gamma=2),
                   temperature=True, temperature_delta=0.025)
        if base == "example6":
            out.update(M=64, T=0.5, S=300_000, mc_samples=10_000, mc_visc=100,
                       viscosity=dict(kind="uniform", lo=0.0002, hi=0.0004, scale=1000.0))
        return out
    if base == "example7":
        v = variant or "a"
        if v not in _EX7_ICS:
            raise ConfigError(f"unknown variant {v!r} of example7", ["preset"])
        D, caps, caps2 = _EX5_CAPS["ii"]
        return dict(model="ns", K=4, N=2, D=D, caps=list(caps), caps2=list(caps2), Dt=0.12,
                    dt=0.004, M=64, S=300_000, T=288.0, nu=0.00055, mu=0.00055,
                    kl_method="randomized", scheme="adams4", shear=_EX7_ICS[v],
                    temperature=False)
    raise ConfigError(f"unknown preset {name!r}", ["preset"])


# ---------------------------------------------------------------- parsing

def _coerce(text):
    """Parse an override value with YAML scalar rules."""
    return yaml.safe_load(text)


def _set_path(d, key, value):
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
        if not isinstance(d, dict):
            raise ConfigError(f"cannot set {key}", [key])
    d[parts[-1]] = value


_NESTED = {"shear": ShearLayerSpec, "viscosity": ViscositySpec}


def from_dict(data):
    """Validated :class:`RunConfig` from a plain dictionary; unknown keys rejected."""
    data = copy.deepcopy(dict(data))
    if "preset" in data:
        merged = preset(data.pop("preset"))
        for k, v in data.items():
            if k in _NESTED and isinstance(v, dict) and isinstance(merged.get(k), dict):
                merged[k] = {**merged[k], **v}
            else:
                merged[k] = v
        data = merged
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    bad = list(unknown)
    kwargs = {}
    for k, v in data.items():
        if k not in known:
            continue
        if k in _NESTED:
            if not isinstance(v, dict):
                bad.append(k)
                continue
            sub = {f.name for f in fields(_NESTED[k])}
            extra = sorted(set(v) - sub)
            if extra:
                bad.extend(f"{k}.{e}" for e in extra)
                continue
            v = _NESTED[k](**v)
        kwargs[k] = v
    if bad:
        raise ConfigError(f"unknown configuration keys: {', '.join(bad)}", bad)
    for name in ("T", "dt", "Dt", "nu", "mu"):
        if kwargs.get(name) is not None:
            try:
                kwargs[name] = float(kwargs[name])
            except (TypeError, ValueError):
                bad.append(name)
    for name in ("M", "K", "N", "D", "S", "seed", "mc_samples", "mc_batch", "mc_visc"):
        if kwargs.get(name) is not None:
            val = kwargs[name]
            if isinstance(val, bool) or not isinstance(val, (int, float)) or float(val) != int(val):
                bad.append(name)
            else:
                kwargs[name] = int(val)
    if bad:
        raise ConfigError(f"invalid configuration values: {', '.join(bad)}", bad)
    return RunConfig(**kwargs).validate()


def parse_config(path=None, overrides=(), preset_name=None):
    """Read a YAML file and/or a preset, apply ``key=value`` overrides, validate."""
    data = {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError("configuration file must hold a mapping", ["file"])
        data.update(loaded)
    if preset_name is not None:
        data["preset"] = preset_name
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value", [item])
        _set_path(data, key.strip(), _coerce(value))
    return from_dict(data)


def dump(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
