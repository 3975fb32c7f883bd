"""Run configuration: flat sectioned key-value format with strict keys.

Unknown sections or keys are hard errors (silent typos in physics
parameters are the costliest failure mode).  A parsed configuration
re-serializes to a canonical form whose SHA-256 identifies the run.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .evolve import EvolveConfig, InitialData
from .grid import TorusGrid
from .state import TransportModel

MODE_FIELDS = ("eps", "eps_dot", "u1", "u2", "u3", "u_dot1", "u_dot2", "u_dot3")

_SCHEMA = {
    "model": {"eps0": float, "eta0": float, "a1": float, "a2": float, "eta_law": str},
    "grid": {"n": int, "dealias": bool},
    "evolve": {"cfl": float, "t_end": float, "cadence": float, "r": float,
               "density_floor": float},
    "initial": None,  # eps_const, u1_const.. + mode.<k> entries, validated ad hoc
    "run": {"seed": int},
}

_INITIAL_CONST_KEYS = {"eps_const": float, "u1_const": float, "u2_const": float,
                       "u3_const": float}


@dataclass(frozen=True)
class ModePerturbation:
    """One Fourier-mode perturbation: field, integer wavevector, amplitude,
    phase; realized as amp * cos(k.x + phase)."""

    target: str
    wavevector: tuple
    amplitude: float
    phase: float


@dataclass
class RunConfig:
    eps0: float = 1.0
    eta0: float = 1.0
    a1: float = 6.0
    a2: float = 4.0
    eta_law: str = "theta3"
    n: int = 16
    dealias: bool = True
    cfl: float = 0.25
    t_end: float = 0.5
    cadence: float = 0.1
    r: float = 4.0
    density_floor: float = 1e-8
    eps_const: float = 1.0
    u_const: tuple = (0.0, 0.0, 0.0)
    modes: tuple = ()
    seed: int = 12345

    def model(self, validate: bool = True) -> TransportModel:
        if self.eta_law != "theta3":
            raise ConfigError(f"unknown eta law '{self.eta_law}'")
        return TransportModel(eps0=self.eps0, eta0=self.eta0, a1=self.a1,
                              a2=self.a2, validate=validate)

    def evolve_config(self) -> EvolveConfig:
        return EvolveConfig(N=self.n, cfl=self.cfl, t_end=self.t_end,
                            dealias=self.dealias, cadence=self.cadence,
                            r=self.r, density_floor=self.density_floor)

    def initial_data(self) -> InitialData:
        grid = TorusGrid(self.n)
        shape = (self.n,) * 3
        X, Y, Z = grid.coordinate_mesh()
        fields = {
            "eps": np.full(shape, self.eps_const),
            "eps_dot": np.zeros(shape),
        }
        for i in range(3):
            fields[f"u{i+1}"] = np.full(shape, self.u_const[i])
            fields[f"u_dot{i+1}"] = np.zeros(shape)
        for mode in self.modes:
            kx, ky, kz = mode.wavevector
            fields[mode.target] = fields[mode.target] + mode.amplitude * np.cos(
                kx * X + ky * Y + kz * Z + mode.phase
            )
        return InitialData(
            eps0=fields["eps"],
            eps1=fields["eps_dot"],
            u0=np.stack([fields["u1"], fields["u2"], fields["u3"]]),
            u1=np.stack([fields["u_dot1"], fields["u_dot2"], fields["u_dot3"]]),
        )


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_mode(value: str) -> ModePerturbation:
    parts = value.split()
    if len(parts) != 6:
        raise ConfigError(
            f"mode entries need 'field kx ky kz amplitude phase', got {value!r}"
        )
    target = parts[0]
    if target not in MODE_FIELDS:
        raise ConfigError(f"unknown perturbation field {target!r}")
    try:
        kvec = tuple(int(p) for p in parts[1:4])
        amp, phase = float(parts[4]), float(parts[5])
    except ValueError as exc:
        raise ConfigError(f"bad mode entry {value!r}: {exc}") from None
    return ModePerturbation(target=target, wavevector=kvec, amplitude=amp, phase=phase)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from None

    kwargs = {}
    modes = []
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in cp.items(section):
            if section == "initial":
                if key in _INITIAL_CONST_KEYS:
                    try:
                        val = float(value)
                    except ValueError:
                        raise ConfigError(f"bad float for {key}: {value!r}") from None
                    if key == "eps_const":
                        kwargs["eps_const"] = val
                    else:
                        uc = list(kwargs.get("u_const", (0.0, 0.0, 0.0)))
                        uc[int(key[1]) - 1] = val
                        kwargs["u_const"] = tuple(uc)
                elif key.startswith("mode."):
                    modes.append((key, _parse_mode(value)))
                else:
                    raise ConfigError(f"unknown key '{key}' in [initial]")
                continue
            schema = _SCHEMA[section]
            if key not in schema:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            typ = schema[key]
            try:
                if typ is bool:
                    kwargs[key] = _parse_bool(value)
                else:
                    kwargs[key] = typ(value)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {value!r}") from None
    modes.sort(key=lambda kv: kv[0])
    kwargs["modes"] = tuple(m for _, m in modes)
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def canonical_text(cfg: RunConfig) -> str:
    """Deterministic serialization; parse(canonical_text(c)) == c."""
    out = io.StringIO()
    out.write("[model]\n")
    for k in ("eps0", "eta0", "a1", "a2"):
        out.write(f"{k} = {getattr(cfg, k)!r}\n")
    out.write(f"eta_law = {cfg.eta_law}\n\n")
    out.write("[grid]\n")
    out.write(f"n = {cfg.n}\ndealias = {str(cfg.dealias).lower()}\n\n")
    out.write("[evolve]\n")
    for k in ("cfl", "t_end", "cadence", "r", "density_floor"):
        out.write(f"{k} = {getattr(cfg, k)!r}\n")
    out.write("\n[initial]\n")
    out.write(f"eps_const = {cfg.eps_const!r}\n")
    for i in range(3):
        out.write(f"u{i+1}_const = {cfg.u_const[i]!r}\n")
    for j, m in enumerate(cfg.modes, start=1):
        kx, ky, kz = m.wavevector
        out.write(f"mode.{j} = {m.target} {kx} {ky} {kz} {m.amplitude!r} {m.phase!r}\n")
    out.write("\n[run]\n")
    out.write(f"seed = {cfg.seed}\n")
    return out.getvalue()


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_text(cfg).encode()).hexdigest()
