"""Run parameters and the trap-unit scales derived from them.

Units: hbar = m = omega = k_B = 1. Lengths in a_ho, energies in hbar*omega.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Validated solver parameters.

    ``temperature`` is stored in units of T_F; use :meth:`temperature_ho` for
    the value in hbar*omega/k_B.
    """

    n_up: float
    n_down: float
    interaction_U: float = -5.0
    cutoff_Ec: float = 180.0
    temperature: float = 0.05
    grid_points: int = 600
    r_max: float = 0.0
    mixing_theta: float = 0.5
    scf_tolerance: float = 1e-6
    max_iterations: int = 2000
    include_hartree: bool = False
    delta_floor: float = 0.0
    fluc_prefactor: float = 1.0
    number_tolerance: float = 1e-8
    seed_amplitude: float = 0.5
    threads: int = 1

    @property
    def n_total(self) -> float:
        return self.n_up + self.n_down

    @property
    def fermi_energy(self) -> float:
        return (3.0 * self.n_total) ** (1.0 / 3.0)

    @property
    def temperature_ho(self) -> float:
        return self.temperature * self.fermi_energy

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class DerivedScales:
    fermi_energy: float
    fermi_temperature: float
    thomas_fermi_radius: float
    fermi_momentum: float
    polarization: float
    scattering_length: float

    @property
    def inverse_kfa(self) -> float:
        if self.scattering_length == 0:
            return math.inf
        return 1.0 / (self.fermi_momentum * self.scattering_length)


def derive_scales(config: SolverConfig) -> DerivedScales:
    n = config.n_up + config.n_down
    if n <= 0:
        raise ConfigError("total particle number must be positive")
    e_f = (3.0 * n) ** (1.0 / 3.0)
    return DerivedScales(
        fermi_energy=e_f,
        fermi_temperature=e_f,
        thomas_fermi_radius=(24.0 * n) ** (1.0 / 6.0),
        fermi_momentum=math.sqrt(2.0 * e_f),
        polarization=(config.n_up - config.n_down) / n,
        # a_s = U / (4 pi): reproduces U = -5 <-> 1/(k_F a_s) = -0.22 at N = 1e5
        scattering_length=config.interaction_U / (4.0 * math.pi),
    )


def default_r_max(n_total: float, cutoff_Ec: float) -> float:
    """Grid extent covering the cloud and the tails of the highest basis states."""
    r_tf = (24.0 * n_total) ** (1.0 / 6.0)
    return max(1.6 * r_tf, math.sqrt(2.0 * cutoff_Ec) + 3.0)


def temperature_in_tf(value: float, unit: str, n_total: float) -> float:
    """Convert a temperature tagged ``tf`` (T_F units) or ``ho`` (hbar*omega/k_B)."""
    unit = unit.lower()
    if unit == "tf":
        return float(value)
    if unit == "ho":
        return float(value) / (3.0 * n_total) ** (1.0 / 3.0)
    raise ConfigError(f"unknown temperature unit {unit!r}; expected 'tf' or 'ho'")


def parse_temperature(text: str | float, n_total: float) -> float:
    """Parse '0.05tf' or '0.7ho'. A bare number is rejected: the unit is required."""
    if isinstance(text, (int, float)):
        raise ConfigError("temperature needs an explicit unit suffix (tf or ho)")
    s = str(text).strip().lower()
    for unit in ("tf", "ho"):
        if s.endswith(unit):
            return temperature_in_tf(float(s[: -len(unit)]), unit, n_total)
    raise ConfigError(f"temperature {text!r} needs a unit suffix: tf or ho")


_FIELD_TYPES = {f.name: f.type for f in fields(SolverConfig)}


def validate_config(raw: Mapping[str, Any]) -> SolverConfig:
    """Build a :class:`SolverConfig` from loose key/value input.

    Accepted extras: ``polarization`` (with ``n_total`` or ``n_up`` + ``n_down``
    giving N) resolving n_up = round(N (1 + P) / 2); ``temperature`` as a
    string with a tf/ho suffix, or ``temperature_unit`` alongside a number.
    """
    raw = dict(raw)
    unknown = set(raw) - set(_FIELD_TYPES) - {"polarization", "n_total", "temperature_unit"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    if "polarization" in raw and raw["polarization"] is not None:
        if raw.get("n_total") is not None:
            n = float(raw["n_total"])
        elif raw.get("n_up") is not None and raw.get("n_down") is not None:
            n = float(raw["n_up"]) + float(raw["n_down"])
        else:
            raise ConfigError("polarization requires n_total (or n_up and n_down)")
        p = float(raw["polarization"])
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"polarization must lie in [0, 1], got {p}")
        n_up = round(n * (1.0 + p) / 2.0)
        raw["n_up"], raw["n_down"] = n_up, n - n_up
    elif raw.get("n_total") is not None and raw.get("n_up") is None:
        n = float(raw["n_total"])
        raw["n_up"] = raw["n_down"] = n / 2.0
    raw.pop("polarization", None)
    raw.pop("n_total", None)

    for key in ("n_up", "n_down"):
        if raw.get(key) is None:
            raise ConfigError(f"missing required parameter {key}")
    n_up, n_down = float(raw["n_up"]), float(raw["n_down"])
    if n_down < 0 or n_up < n_down:
        raise ConfigError(f"need n_up >= n_down >= 0, got n_up={n_up}, n_down={n_down}")
    if n_up + n_down <= 0:
        raise ConfigError("total particle number must be positive")
    n_total = n_up + n_down

    unit = raw.pop("temperature_unit", None)
    if "temperature" in raw and raw["temperature"] is not None:
        t = raw["temperature"]
        if unit is not None:
            raw["temperature"] = temperature_in_tf(float(t), unit, n_total)
        elif isinstance(t, str):
            raw["temperature"] = parse_temperature(t, n_total)
        else:
            raise ConfigError("temperature needs a unit: pass temperature_unit or a tf/ho suffix")

    values: dict[str, Any] = {}
    for key, val in raw.items():
        if val is None:
            continue
        kind = _FIELD_TYPES[key]
        if kind == "bool":
            values[key] = _as_bool(val)
        elif kind == "int":
            values[key] = int(val)
        else:
            values[key] = float(val)
    cfg = SolverConfig(**values)

    e_f = cfg.fermi_energy
    if cfg.cutoff_Ec <= 1.5:
        raise ConfigError(f"cutoff_Ec must exceed 3/2 (no basis states), got {cfg.cutoff_Ec}")
    if not 0.0 < cfg.mixing_theta <= 1.0:
        raise ConfigError(f"mixing_theta must lie in (0, 1], got {cfg.mixing_theta}")
    if cfg.scf_tolerance <= 0:
        raise ConfigError("scf_tolerance must be positive")
    if cfg.grid_points < 2:
        raise ConfigError("grid_points must be >= 2")
    if cfg.max_iterations < 1:
        raise ConfigError("max_iterations must be >= 1")
    if cfg.temperature < 0:
        raise ConfigError("temperature must be non-negative")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.r_max < 0:
        raise ConfigError("r_max must be positive")
    if cfg.r_max == 0:
        cfg = replace(cfg, r_max=default_r_max(n_total, cfg.cutoff_Ec))
    if cfg.delta_floor <= 0:
        cfg = replace(cfg, delta_floor=1e-3 * e_f)
    return cfg


def _as_bool(val: Any) -> bool:
    if isinstance(val, bool):
        return val
    s = str(val).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot read {val!r} as a boolean")


def read_config_file(path: str | Path) -> dict[str, str]:
    """Read flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out
