"""Finite-blocklength rate math under the normal approximation.

The decoding error probability of a packet of ``D`` bits sent over ``L``
channel uses at linear SNR ``gamma`` is

    eps(gamma) = Q( (sqrt(L) log2(1 + gamma) - D / sqrt(L)) / sqrt(V(gamma)) )

with channel dispersion ``V(gamma) = (log2 e)^2 (1 - (1 + gamma)^-2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import ndtri

LOG2E_SQ = math.log2(math.e) ** 2

_GAMMA_HI_LIMIT = 1e12


@dataclass(frozen=True)
class FblPoint:
    """One finite-blocklength operating point."""

    channel_uses: int
    data_bits: int
    target_error: float

    def __post_init__(self):
        if self.channel_uses < 1:
            raise ValueError(f"channel_uses must be >= 1, got {self.channel_uses}")
        if self.data_bits < 1:
            raise ValueError(f"data_bits must be >= 1, got {self.data_bits}")
        if not 0.0 < self.target_error < 0.5:
            raise ValueError(f"target_error must lie in (0, 0.5), got {self.target_error}")


@dataclass(frozen=True)
class SnrThresholds:
    gamma_th_stage1: float
    gamma_th_stage2: float


def q_function(x: float) -> float:
    """Gaussian upper-tail probability Q(x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def q_inverse(p: float) -> float:
    """Inverse of :func:`q_function` on the open interval (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"q_inverse needs 0 < p < 1, got {p}")
    x = -float(ndtri(p))
    # two Newton polishes against the erfc-based Q
    for _ in range(2):
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if pdf == 0.0:
            break
        x += (q_function(x) - p) / pdf
    return x


def channel_dispersion(gamma: float) -> float:
    if gamma < 0:
        raise ValueError(f"SNR must be nonnegative, got {gamma}")
    return LOG2E_SQ * (1.0 - (1.0 + gamma) ** -2)


def decode_error_prob(gamma: float, point: FblPoint) -> float:
    """Packet error probability at linear SNR ``gamma``.

    At ``gamma = 0`` the dispersion vanishes while the numerator is
    ``-D/sqrt(L) < 0``, so the continuous extension is 1.
    """
    if gamma < 0:
        raise ValueError(f"SNR must be nonnegative, got {gamma}")
    if gamma == 0.0:
        return 1.0
    L = point.channel_uses
    num = math.sqrt(L) * math.log2(1.0 + gamma) - point.data_bits / math.sqrt(L)
    disp = channel_dispersion(gamma)
    if disp == 0.0:
        # gamma below double resolution of 1 + gamma
        return 1.0
    return q_function(num / math.sqrt(disp))


def snr_threshold(point: FblPoint, rel_tol: float = 1e-10, prob_tol: float = 1e-10) -> float:
    """Smallest SNR whose decoding error does not exceed the target.

    Brackets from ``[0, 1]``, doubling the upper end until the error drops
    below the target, then bisects until the bracket has relative width
    ``rel_tol`` and the upper end's error is within ``prob_tol`` of the
    target (steep curves at large ``L`` need the second test).
    """
    eps = point.target_error
    lo, hi = 0.0, 1.0
    while decode_error_prob(hi, point) > eps:
        lo = hi
        hi *= 2.0
        if hi > _GAMMA_HI_LIMIT:
            raise ArithmeticError(
                f"no SNR below {_GAMMA_HI_LIMIT:g} reaches error {eps:g} "
                f"for L={point.channel_uses}, D={point.data_bits}"
            )
    while True:
        wide = hi - lo > rel_tol * hi
        if not wide and eps - decode_error_prob(hi, point) <= prob_tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # bracket at double resolution
        if decode_error_prob(mid, point) > eps:
            lo = mid
        else:
            hi = mid
    return hi


def stage_thresholds(uses_stage1: int, uses_stage2: int, data_bits: int,
                     target_error: float) -> SnrThresholds:
    g1 = snr_threshold(FblPoint(uses_stage1, data_bits, target_error))
    if uses_stage2 == uses_stage1:
        g2 = g1
    else:
        g2 = snr_threshold(FblPoint(uses_stage2, data_bits, target_error))
    return SnrThresholds(g1, g2)
