"""Geometry and random channel generation for the AP / RIS / actuator scene.

Every link is Rician: a deterministic line-of-sight term mixed with a
circularly-symmetric Gaussian term according to the Rician factor, scaled
by the large-scale path gain. LoS terms for the multi-antenna ends are
half-wavelength ULA steering vectors; single-antenna D2D links use a unit
constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import SystemConfig

SPEED_OF_LIGHT = 3e8


@dataclass(frozen=True)
class Geometry:
    ap_position: np.ndarray
    ris_position: np.ndarray
    actuator_positions: np.ndarray  # (K, 2)

    def __post_init__(self):
        pts = np.vstack([self.ap_position, self.ris_position, self.actuator_positions])
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        off = ~np.eye(len(pts), dtype=bool)
        if np.any(dist[off] <= 0):
            raise ValueError("geometry has coincident points")

    @property
    def n_act(self) -> int:
        return len(self.actuator_positions)


@dataclass(frozen=True)
class FadingParams:
    carrier_wavelength: float
    alpha_ak: float
    alpha_ar: float
    alpha_rk: float
    beta_ak: float
    beta_ar: float
    beta_rk: float
    beta_d2d: float
    pathloss_on_nlos: bool = True

    @property
    def l0(self) -> float:
        """Reference gain ``(lambda / 4 pi)^2``."""
        return (self.carrier_wavelength / (4.0 * math.pi)) ** 2

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "FadingParams":
        return cls(
            carrier_wavelength=SPEED_OF_LIGHT / cfg.carrier_freq,
            alpha_ak=cfg.alpha_ak, alpha_ar=cfg.alpha_ar, alpha_rk=cfg.alpha_rk,
            beta_ak=cfg.beta_ak, beta_ar=cfg.beta_ar, beta_rk=cfg.beta_rk,
            beta_d2d=cfg.beta_d2d, pathloss_on_nlos=cfg.pathloss_on_nlos,
        )


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of every channel, raw and divided by the noise std."""

    h: np.ndarray  # (K, Nt)   AP -> actuator
    F: np.ndarray  # (M, Nt)   AP -> RIS
    g: np.ndarray  # (K, M)    RIS -> actuator
    d: np.ndarray  # (K, K)    D2D, zero diagonal, symmetric
    sigma: float

    @property
    def h_bar(self) -> np.ndarray:
        return self.h / self.sigma

    @property
    def g_bar(self) -> np.ndarray:
        return self.g / self.sigma

    @property
    def d_bar(self) -> np.ndarray:
        return self.d / self.sigma

    @property
    def n_act(self) -> int:
        return self.h.shape[0]

    @property
    def n_tx(self) -> int:
        return self.h.shape[1]

    @property
    def n_ris(self) -> int:
        return self.F.shape[0]

    def without_ris(self) -> "ChannelRealization":
        """Same draw with the RIS -> actuator links switched off."""
        return replace(self, g=np.zeros_like(self.g))


def default_geometry(rng: np.random.Generator, n_act: int,
                     cfg: SystemConfig | None = None) -> Geometry:
    """AP, RIS and ``n_act`` actuators drawn uniformly on the circle boundary."""
    if n_act < 1:
        raise ValueError("need at least one actuator")
    cfg = cfg or SystemConfig()
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n_act)
    center = np.asarray(cfg.circle_center, dtype=float)
    pos = center + cfg.circle_radius * np.column_stack([np.cos(theta), np.sin(theta)])
    return Geometry(np.asarray(cfg.ap_position, dtype=float),
                    np.asarray(cfg.ris_position, dtype=float), pos)


def pathloss_linear(d: float, alpha: float, l0: float) -> float:
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    return l0 * d ** (-alpha)


def d2d_pathloss_linear(d: float) -> float:
    """Power gain of the D2D large-scale model 35.3 + 37.6 log10(d) dB."""
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    return 10.0 ** (-(35.3 + 37.6 * math.log10(d)) / 10.0)


def steering_vector(n: int, angle: float) -> np.ndarray:
    if n < 1:
        raise ValueError("array length must be >= 1")
    return np.exp(1j * math.pi * np.arange(n) * math.sin(angle))


def rician_vector(rng: np.random.Generator, los, beta: float, gain: float,
                  pathloss_on_nlos: bool = True) -> np.ndarray:
    """Rician draw with the shape of ``los``; diffuse entries have unit variance."""
    if beta < 0 or gain <= 0:
        raise ValueError("need beta >= 0 and gain > 0")
    los = np.asarray(los, dtype=complex)
    w = (rng.standard_normal(los.shape) + 1j * rng.standard_normal(los.shape)) / math.sqrt(2.0)
    amp = math.sqrt(gain)
    nlos_amp = amp if pathloss_on_nlos else 1.0
    return (amp * math.sqrt(beta / (1.0 + beta)) * los
            + nlos_amp * math.sqrt(1.0 / (1.0 + beta)) * w)


def _angle(src, dst) -> float:
    dx, dy = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    return math.atan2(dy, dx)


def generate_realization(rng: np.random.Generator, cfg: SystemConfig,
                         geometry: Geometry) -> ChannelRealization:
    fp = FadingParams.from_config(cfg)
    K, Nt, M = geometry.n_act, cfg.n_tx, cfg.n_ris
    if K != cfg.n_act:
        raise ValueError(f"geometry has {K} actuators, config expects {cfg.n_act}")
    ap, ris, act = geometry.ap_position, geometry.ris_position, geometry.actuator_positions
    on_nlos = fp.pathloss_on_nlos

    h = np.empty((K, Nt), dtype=complex)
    for k in range(K):
        dist = float(np.linalg.norm(act[k] - ap))
        los = steering_vector(Nt, _angle(ap, act[k]))
        h[k] = rician_vector(rng, los, fp.beta_ak, pathloss_linear(dist, fp.alpha_ak, fp.l0), on_nlos)

    d_ar = float(np.linalg.norm(ris - ap))
    los_F = np.outer(steering_vector(M, _angle(ris, ap)), steering_vector(Nt, _angle(ap, ris)).conj())
    F = rician_vector(rng, los_F, fp.beta_ar, pathloss_linear(d_ar, fp.alpha_ar, fp.l0), on_nlos)

    g = np.empty((K, M), dtype=complex)
    for k in range(K):
        dist = float(np.linalg.norm(act[k] - ris))
        los = steering_vector(M, _angle(ris, act[k]))
        g[k] = rician_vector(rng, los, fp.beta_rk, pathloss_linear(dist, fp.alpha_rk, fp.l0), on_nlos)

    d = np.zeros((K, K), dtype=complex)
    for j in range(K):
        for k in range(j + 1, K):
            dist = float(np.linalg.norm(act[j] - act[k]))
            val = rician_vector(rng, np.ones(1), fp.beta_d2d, d2d_pathloss_linear(dist), on_nlos)[0]
            d[j, k] = d[k, j] = val

    return ChannelRealization(h=h, F=F, g=g, d=d, sigma=cfg.sigma)
