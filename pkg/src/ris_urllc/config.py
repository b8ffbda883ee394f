"""Scenario, radio and solver parameters plus the ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

SCHEMES = ("ris-mrc", "ris-nomrc", "noris-mrc", "noris-nomrc")


class ConfigError(ValueError):
    pass


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def parse_scheme(name: str) -> tuple[bool, bool]:
    """Map a scheme tag to ``(use_ris, use_mrc)``."""
    if name not in SCHEMES:
        raise ConfigError(f"unknown scheme {name!r}; expected one of {', '.join(SCHEMES)}")
    ris, mrc = name.split("-")
    return ris == "ris", mrc == "mrc"


@dataclass(frozen=True)
class SystemConfig:
    # array sizes
    n_tx: int = 4
    n_ris: int = 16
    n_act: int = 10
    # radio / latency
    bandwidth: float = 0.5e6
    tau: float = 1e-3
    data_bits: int = 500
    p_max: float = dbm_to_watt(43.0)
    p_relay: float = dbm_to_watt(23.0)
    sigma2: float = dbm_to_watt(-80.0)
    eps_th: float = 1e-6
    # penalized SCA
    penalty_w: float = 100.0
    penalty_v: float = 100.0
    penalty_q: float = 100.0
    frobenius_scale: float = 1.0
    sca_tol: float = 1e-4
    sca_max_iters: int = 100
    solver_tol: float = 1e-7
    solver_max_iters: int = 50_000
    # geometry (metres)
    ap_position: tuple = (0.0, 0.0)
    ris_position: tuple = (50.0, 10.0)
    circle_center: tuple = (80.0, 0.0)
    circle_radius: float = 20.0
    # large/small-scale fading
    carrier_freq: float = 2.4e9
    alpha_ak: float = 4.0
    alpha_ar: float = 2.0
    alpha_rk: float = 2.0
    beta_ak: float = 0.0
    beta_ar: float = 4.0
    beta_rk: float = 4.0
    beta_d2d: float = 4.0
    pathloss_on_nlos: bool = True
    # protocol switches
    incoherent_relays: bool = False
    # Monte-Carlo harness
    seed: int = 0
    trials: int = 50
    scheme: str = "all"
    bits: tuple = (100, 200, 300, 400, 500, 600, 700, 800, 900)
    fixed_geometry: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.n_tx < 1 or self.n_ris < 1 or self.n_act < 1:
            raise ConfigError("n_tx, n_ris and n_act must be positive")
        if self.bandwidth <= 0 or self.tau <= 0:
            raise ConfigError("bandwidth and tau must be positive")
        if self.uses_per_stage < 1:
            raise ConfigError("tau/2 * bandwidth must give at least one channel use")
        if self.data_bits < 1:
            raise ConfigError("data_bits must be >= 1")
        if not 0.0 < self.eps_th < 0.5:
            raise ConfigError("eps_th must lie in (0, 0.5)")
        if min(self.p_max, self.p_relay, self.sigma2) <= 0:
            raise ConfigError("powers must be positive")
        if self.frobenius_scale <= 0:
            raise ConfigError("frobenius_scale must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.scheme != "all":
            parse_scheme(self.scheme)

    @property
    def tau_stage(self) -> float:
        return 0.5 * self.tau

    @property
    def uses_per_stage(self) -> int:
        # rounding guards against 0.5e-3 * 0.5e6 = 249.99999...
        return int(math.floor(self.tau_stage * self.bandwidth + 1e-9))

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def schemes(self) -> tuple:
        return SCHEMES if self.scheme == "all" else (self.scheme,)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# text format

_DBM_KEYS = {"p_max_dbm": "p_max", "p_relay_dbm": "p_relay", "sigma2_dbm": "sigma2"}


def parse_bits(text: str) -> tuple:
    """``"100:900:100"`` (inclusive range) or ``"100,300,500"``."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(100)
            start, stop, step = parts
            if step <= 0:
                raise ConfigError("bit range step must be positive")
            return tuple(range(start, stop + 1, step))
        return tuple(int(p) for p in text.replace(" ", "").split(",") if p)
    except ValueError as exc:
        raise ConfigError(f"bad bit list {text!r}") from exc


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            if name == "bits":
                return parse_bits(raw)
            return tuple(float(p) for p in raw.strip("()[] ").split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse {name} = {raw!r}") from exc


def parse_config_text(text: str, base: SystemConfig | None = None) -> SystemConfig:
    base = base or SystemConfig()
    defaults = {f.name: getattr(base, f.name) for f in dataclasses.fields(SystemConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key in _DBM_KEYS:
            try:
                values[_DBM_KEYS[key]] = dbm_to_watt(float(raw))
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: cannot parse {key} = {raw!r}") from exc
            continue
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, defaults[key])
    return dataclasses.replace(base, **values)


def load_config(path) -> SystemConfig:
    return parse_config_text(Path(path).read_text())


def dump_config(cfg: SystemConfig) -> str:
    """Render ``cfg`` in the same ``key = value`` format."""
    lines = []
    for f in dataclasses.fields(SystemConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
