"""One-to-one device/sub-band matching per UAV cell.

Preferences come from an equal-split power hypothesis (each device spreads
``P_max / B`` over every band). Devices rank bands by achievable rate; bands
rank devices by rate minus weighted leakage toward other UAVs. Ties go to the
lower band id / lower device id, and a value ``<= 0`` marks the partner as
unacceptable (worse than staying unmatched).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import channel, kernels
from .decisions import Decisions

EXHAUSTIVE_MAX_DEVICES = 6
EXHAUSTIVE_MAX_BANDS = 8


class GuardError(ValueError):
    """Instance too large for exhaustive enumeration."""


@dataclass(frozen=True, eq=False)
class PreferenceProfile:
    device_pref: np.ndarray  # (n, B) theta_j(b)
    band_pref: np.ndarray  # (B, n) theta_b(j)
    devices: np.ndarray  # global ids of the cell's devices

    @property
    def shape(self):
        return self.device_pref.shape


@dataclass(frozen=True, eq=False)
class MatchResult:
    match: np.ndarray  # (n,) band per local device, -1 unmatched
    proposals: int


def device_pref(power, gain, interference, noise, bandwidth):
    """Achievable rate under the power hypothesis."""
    return channel.rate(channel.sinr_value(power * gain, interference, noise), bandwidth)


def band_pref(rate, leakage, match_weight):
    """Weighted rate minus cumulative interference caused at other UAVs."""
    return match_weight * rate - leakage


def _strict_rank(values):
    """Row-wise rank (0 = best) with lower column index winning ties."""
    order = np.argsort(-values, axis=1, kind="stable")
    rank = np.empty_like(order)
    rows = np.arange(values.shape[0])[:, None]
    rank[rows, order] = np.arange(values.shape[1])[None, :]
    return order, rank


def deferred_acceptance(dev_pref, band_pref_) -> MatchResult:
    """Device-proposing deferred acceptance; returns the device-optimal stable matching."""
    dev_pref = np.atleast_2d(np.asarray(dev_pref, dtype=float))
    band_pref_ = np.asarray(band_pref_, dtype=float).reshape(dev_pref.shape[1], dev_pref.shape[0])
    order, _ = _strict_rank(dev_pref)
    n_ok = (dev_pref > 0).sum(axis=1)
    _, brank = _strict_rank(band_pref_)
    match, proposals = kernels.deferred_acceptance(order, n_ok, brank, band_pref_ > 0)
    return MatchResult(match, proposals)


def blocking_pairs(match, dev_pref, band_pref_) -> list:
    dev_pref = np.atleast_2d(np.asarray(dev_pref, dtype=float))
    band_pref_ = np.asarray(band_pref_, dtype=float).reshape(dev_pref.shape[1], dev_pref.shape[0])
    _, drank = _strict_rank(dev_pref)
    _, brank = _strict_rank(band_pref_)
    return [tuple(p) for p in kernels.blocking_pairs(drank, dev_pref > 0, brank, band_pref_ > 0, match)]


def unacceptable_pairs(match, dev_pref, band_pref_) -> list:
    """Matched pairs where either side would rather stay unmatched."""
    dev_pref = np.atleast_2d(np.asarray(dev_pref, dtype=float))
    band_pref_ = np.asarray(band_pref_, dtype=float).reshape(dev_pref.shape[1], dev_pref.shape[0])
    return [(j, int(b)) for j, b in enumerate(np.asarray(match)) if b >= 0
            and not (dev_pref[j, b] > 0 and band_pref_[b, j] > 0)]


def is_stable(match, dev_pref, band_pref_):
    """(stable?, blocking pairs); a match to an unacceptable partner is never stable."""
    pairs = blocking_pairs(match, dev_pref, band_pref_)
    return not pairs and not unacceptable_pairs(match, dev_pref, band_pref_), pairs


def is_consistent(match, B: int) -> bool:
    """Each band used at most once and every entry a valid band or -1."""
    m = np.asarray(match)
    used = m[m >= 0]
    return bool(np.all((m >= -1) & (m < B)) and len(np.unique(used)) == used.size)


def injective_assignments(n: int, B: int):
    """Every injective partial map of n devices into B bands (-1 = unmatched)."""
    for size in range(min(n, B) + 1):
        for who in itertools.combinations(range(n), size):
            for bands in itertools.permutations(range(B), size):
                a = [-1] * n
                for j, b in zip(who, bands):
                    a[j] = b
                yield tuple(a)


def count_assignments(n: int, B: int) -> int:
    return sum(math.comb(n, s) * math.perm(B, s) for s in range(min(n, B) + 1))


def exhaustive_assignment(n: int, B: int, objective_fn: Callable[[np.ndarray], float]):
    """Objective-minimal injective partial assignment; (assignment, value).

    Ties keep the first in enumeration order (fewest matches, then
    lexicographic).
    """
    if n > EXHAUSTIVE_MAX_DEVICES or B > EXHAUSTIVE_MAX_BANDS:
        raise GuardError(
            f"exhaustive assignment limited to {EXHAUSTIVE_MAX_DEVICES} devices and "
            f"{EXHAUSTIVE_MAX_BANDS} bands (got {n} x {B})"
        )
    best, best_val = None, np.inf
    for a in injective_assignments(n, B):
        arr = np.array(a, dtype=np.int64)
        val = float(objective_fn(arr))
        if val < best_val:
            best, best_val = arr, val
    if best is None:
        best = np.full(n, -1, dtype=np.int64)
    return best, best_val


def sum_rate_objective(rates: np.ndarray) -> Callable[[np.ndarray], float]:
    """Negative total rate of an assignment, for :func:`exhaustive_assignment`."""

    def f(a):
        on = a >= 0
        return -float(rates[np.flatnonzero(on), a[on]].sum())

    return f


# ---------------------------------------------------------------------------
# network-level assignment


def hypothesis_power(scn) -> np.ndarray:
    return scn.max_power / scn.B


def cell_profile(scn, k: int, gain, band, power) -> PreferenceProfile:
    """Preferences of cell ``k`` given the other cells' current bands and powers."""
    phys = scn.phys
    members = scn.cell_members(k)
    I_kb = channel.band_interference(scn, gain, band, power)[k]  # (B,)
    p_hyp = hypothesis_power(scn)[members]
    g_own = gain[members, k]
    theta_dev = device_pref(p_hyp[:, None], g_own[:, None], I_kb[None, :], phys.noise_w, phys.subband_hz)
    others = np.arange(scn.K) != k
    leak = phys.interference_weight * p_hyp * gain[members][:, others].sum(axis=1)  # (n,)
    theta_band = band_pref(theta_dev.T, leak[None, :], phys.match_weight)
    return PreferenceProfile(theta_dev, theta_band, members)


def assign_subbands(scn, dec: Decisions, *, exhaustive: bool = False, lt=None):
    """Sub-band per device, one cell after another (each sees the latest assignment of the others).

    Returns ``(band, info)`` where info holds per-cell proposal counts and
    preference profiles.
    """
    gain = lt.gain if lt is not None else channel.gain_matrix(scn, dec.uav_pos)
    band = np.array(dec.band)
    power = np.array(dec.power)
    p_hyp = hypothesis_power(scn)
    info = {"proposals": [], "profiles": []}
    for k in range(scn.K):
        members = scn.cell_members(k)
        band[members] = -1
        power[members] = 0.0
        prof = cell_profile(scn, k, gain, band, power)
        if exhaustive:
            m, _ = exhaustive_assignment(len(members), scn.B, sum_rate_objective(prof.device_pref))
            info["proposals"].append(0)
        else:
            res = deferred_acceptance(prof.device_pref, prof.band_pref)
            m = res.match
            info["proposals"].append(res.proposals)
        band[members] = m
        power[members] = np.where(m >= 0, p_hyp[members], 0.0)
        info["profiles"].append(prof)
    return band, info


def random_assignment(scn, gen: np.random.Generator) -> np.ndarray:
    """Uniformly random injective assignment per cell (extra devices stay unmatched)."""
    band = np.full(scn.J, -1, dtype=np.int64)
    for k in range(scn.K):
        members = scn.cell_members(k)
        perm = gen.permutation(scn.B)
        order = gen.permutation(len(members))
        take = min(len(members), scn.B)
        band[members[order[:take]]] = perm[:take]
    return band
