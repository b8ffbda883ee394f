"""Stage-I / stage-II decoding rules of the relay protocol."""

from __future__ import annotations

import numpy as np


def stage1_indicators(snr, gamma_th1: float) -> np.ndarray:
    """Actuators whose stage-I SNR reaches the threshold (ties succeed)."""
    snr = np.asarray(snr, dtype=float)
    if np.any(snr < 0):
        raise ValueError("SNR values must be nonnegative")
    return snr >= gamma_th1


def relay_gain(a1, d_bar, k: int, incoherent: bool = False) -> float:
    """Stage-II channel power gain seen by actuator ``k`` per watt of relay power.

    Relays that decoded in stage I forward simultaneously. The default sums
    their channels inside one modulus (co-phased relays); ``incoherent``
    sums powers instead.
    """
    a1 = np.asarray(a1, dtype=bool)
    d_col = np.asarray(d_bar)[:, k]
    mask = a1.copy()
    mask[k] = False
    if incoherent:
        return float(np.sum(np.abs(d_col[mask]) ** 2))
    return float(abs(np.sum(d_col[mask])) ** 2)


def stage2_snr(snr1_k: float, a1, d_bar, p_relay: float, k: int, mrc: bool,
               incoherent: bool = False) -> float:
    """Stage-II SNR of a stage-I failure, optionally combined with stage I."""
    relay = p_relay * relay_gain(a1, d_bar, k, incoherent)
    return float(snr1_k) + relay if mrc else relay


def stage2_snrs(snr1, a1, d_bar, p_relay: float, mrc: bool,
                incoherent: bool = False) -> np.ndarray:
    """Stage-II SNR of every actuator; entries that decoded in stage I are 0."""
    snr1 = np.asarray(snr1, dtype=float)
    a1 = np.asarray(a1, dtype=bool)
    out = np.zeros(len(snr1))
    for k in np.flatnonzero(~a1):
        out[k] = stage2_snr(snr1[k], a1, d_bar, p_relay, int(k), mrc, incoherent)
    return out


def stage2_indicators(snr2, gamma_th2: float, a1) -> np.ndarray:
    """Stage-I failures that reach the stage-II threshold."""
    a1 = np.asarray(a1, dtype=bool)
    return (~a1) & (np.asarray(snr2, dtype=float) >= gamma_th2)
