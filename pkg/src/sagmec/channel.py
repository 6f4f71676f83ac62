"""Geometry, THz access links and mmWave backhaul links."""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from . import kernels
from .constants import PhysConfig


def distance_device_uav(device_xy, uav_xy, altitude):
    """3-D device-UAV distance; broadcasts over leading dimensions."""
    dx = np.subtract(uav_xy, device_xy)
    return np.sqrt(np.sum(np.square(dx), axis=-1) + np.square(altitude))


def thz_gain(d, phys: PhysConfig):
    """g0 * d^-2 * exp(-absorption * d)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    g = phys.ref_gain * np.exp(-phys.absorption * d) / (d * d)
    return g if g.ndim else float(g)


def gain_matrix(scn, uav_pos) -> np.ndarray:
    """G[j, k]: gain of device j toward UAV k (identical on every sub-band)."""
    d = distance_device_uav(scn.device_xy[:, None, :], np.asarray(uav_pos)[None, :, :], scn.uav_alt[None, :])
    return thz_gain(d, scn.phys)


def band_interference(scn, gain, band, power) -> np.ndarray:
    """I[k, b]: interference received by UAV k on sub-band b from other cells.

    With ``phys.literal_interference`` every transmitting device counts once
    per foreign UAV, including same-cell devices; the caller removes the
    device's own term (see :func:`device_interference`).
    """
    K, B = scn.K, scn.B
    T = kernels.interference_tensor(gain, scn.cell, band, power, K, B)  # (K_rx, K_tx, B)
    total = T.sum(axis=1)
    if scn.phys.literal_interference:
        return (K - 1) * total
    own = T[np.arange(K), np.arange(K), :]
    return np.maximum(total - own, 0.0)


def device_interference(scn, gain, band, power, I_kb=None) -> np.ndarray:
    """Interference on each device's own band at its serving UAV (0 without a band)."""
    if I_kb is None:
        I_kb = band_interference(scn, gain, band, power)
    band = np.asarray(band)
    J = band.shape[0]
    out = np.zeros(J)
    has = band >= 0
    out[has] = I_kb[scn.cell[has], band[has]]
    if scn.phys.literal_interference:
        k = scn.cell[has]
        own = (scn.K - 1) * np.asarray(power)[has] * gain[np.flatnonzero(has), k]
        out[has] = np.maximum(out[has] - own, 0.0)
    return out


def sinr_value(signal, interference, noise):
    return np.divide(signal, np.add(interference, noise))


def rate(sinr, bandwidth):
    """Shannon rate in bit/s."""
    return bandwidth * np.log2(1.0 + np.asarray(sinr, dtype=float))


def mm_snr(d, tx_power, bandwidth, phys: PhysConfig):
    """Backhaul SNR for a link of length ``d``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    link = tx_power * phys.antenna_gain_tx * phys.antenna_gain_rx * phys.amp_factor
    noise = phys.noise_temp_k * phys.boltzmann * bandwidth
    fspl = (phys.light_speed / (4.0 * np.pi * d * phys.mm_carrier_hz)) ** 2
    return link / noise * fspl


def backhaul_rate(d, tx_power, bandwidth, phys: PhysConfig):
    return bandwidth * np.log2(1.0 + mm_snr(d, tx_power, bandwidth, phys))


def uav_positions_3d(scn, uav_pos) -> np.ndarray:
    return np.column_stack([np.asarray(uav_pos, dtype=float), scn.uav_alt])


def uav_uav_distance(scn, uav_pos) -> np.ndarray:
    p = uav_positions_3d(scn, uav_pos)
    return np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(axis=2))


def uav_sat_distance(scn, uav_pos) -> np.ndarray:
    p = uav_positions_3d(scn, uav_pos)
    return np.sqrt(((p[:, None, :] - scn.sat_pos[None, :, :]) ** 2).sum(axis=2))


def backhaul_tables(scn, uav_pos):
    """(R_uav[K, K] with zero diagonal, R_sat[K, S], d_sat[K, S])."""
    phys = scn.phys
    K = scn.K
    d_uu = uav_uav_distance(scn, uav_pos)
    R_uu = np.zeros((K, K))
    off = ~np.eye(K, dtype=bool)
    if off.any():
        P = np.broadcast_to(scn.uav_power[:, None], (K, K))[off]
        R_uu[off] = backhaul_rate(d_uu[off], P, phys.mm_bandwidth_uav_hz, phys)
    d_us = uav_sat_distance(scn, uav_pos)
    R_us = backhaul_rate(d_us, scn.uav_power[:, None], phys.mm_bandwidth_sat_hz, phys) if scn.S else d_us.copy()
    return R_uu, R_us, d_us


@dataclass(frozen=True, eq=False)
class LinkTable:
    """Channel state for one (scenario, decisions) pair."""

    gain: np.ndarray  # (J, K); the same on every sub-band
    band_interference: np.ndarray  # (K, B)
    interference: np.ndarray  # (J,) on the device's own band
    sinr: np.ndarray  # (J,)
    access_rate: np.ndarray  # (J,)
    backhaul_uav: np.ndarray  # (K, K)
    backhaul_sat: np.ndarray  # (K, S)
    sat_distance: np.ndarray  # (K, S)

    def gain_jkb(self, j: int, k: int, b: int) -> float:
        return float(self.gain[j, k])


def compute_links(scn, dec) -> LinkTable:
    G = gain_matrix(scn, dec.uav_pos)
    I_kb = band_interference(scn, G, dec.band, dec.power)
    I = device_interference(scn, G, dec.band, dec.power, I_kb)
    J = scn.J
    has = dec.band >= 0
    signal = np.zeros(J)
    signal[has] = dec.power[has] * G[np.flatnonzero(has), scn.cell[has]]
    g = np.where(has, sinr_value(signal, I, scn.phys.noise_w), 0.0)
    R = np.where(has, rate(g, scn.phys.subband_hz), 0.0)
    R_uu, R_us, d_us = backhaul_tables(scn, dec.uav_pos)
    return LinkTable(G, I_kb, I, g, R, R_uu, R_us, d_us)


_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def links(scn, dec) -> LinkTable:
    """Cached :func:`compute_links`; decisions are immutable so identity is a safe key."""
    hit = _CACHE.get(dec)
    if hit is not None and hit[0] is scn:
        return hit[1]
    table = compute_links(scn, dec)
    _CACHE[dec] = (scn, table)
    return table
