"""The decision record shared by every solver phase.

Routes are one node index per device: ``0 <= r < K`` means "computed at UAV
r" (the serving UAV itself, or a relay when ``r`` is another UAV) and
``K <= r < K + S`` means satellite ``r - K``. The binary route
indicators (w, v, z) are derived from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOCAL, RELAY, SATELLITE = 0, 1, 2


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Decisions:
    beta: np.ndarray  # (J,) bits offloaded
    band: np.ndarray  # (J,) sub-band id or -1
    power: np.ndarray  # (J,) watts on the assigned band
    uav_pos: np.ndarray  # (K, 2) metres
    route: np.ndarray  # (J,) destination node
    version: int = 0

    def __post_init__(self):
        object.__setattr__(self, "beta", _frozen(self.beta, float))
        object.__setattr__(self, "band", _frozen(self.band, np.int64))
        object.__setattr__(self, "power", _frozen(self.power, float))
        object.__setattr__(self, "uav_pos", _frozen(self.uav_pos, float).reshape(-1, 2))
        object.__setattr__(self, "route", _frozen(self.route, np.int64))
        J = self.beta.shape[0]
        if not (self.band.shape == self.power.shape == self.route.shape == (J,)):
            raise ValueError("beta, band, power and route must all have length J")

    def evolve(self, **changes) -> "Decisions":
        """Copy with some blocks replaced and the version bumped."""
        kw = {n: getattr(self, n) for n in ("beta", "band", "power", "uav_pos", "route")}
        kw.update(changes)
        return Decisions(version=self.version + 1, **kw)

    def same_as(self, other: "Decisions") -> bool:
        return all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in ("beta", "band", "power", "uav_pos", "route")
        )

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "beta": self.beta.tolist(),
            "band": self.band.tolist(),
            "power": self.power.tolist(),
            "uav_pos": self.uav_pos.tolist(),
            "route": self.route.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Decisions":
        return cls(d["beta"], d["band"], d["power"], d["uav_pos"], d["route"], d.get("version", 0))


def route_kind(route: np.ndarray, cell: np.ndarray, K: int) -> np.ndarray:
    """LOCAL / RELAY / SATELLITE per device."""
    route = np.asarray(route)
    kind = np.where(route >= K, SATELLITE, np.where(route == np.asarray(cell), LOCAL, RELAY))
    return kind.astype(np.int64)


def executing_uav(route: np.ndarray, K: int) -> np.ndarray:
    """UAV that computes each device's offloaded bits, -1 for satellite routes."""
    route = np.asarray(route)
    return np.where(route < K, route, -1)


def binary_views(route, cell, K: int, S: int):
    """(w[J], v[J, K], z[J, S]) 0/1 arrays equivalent to ``route``."""
    route = np.asarray(route)
    J = route.shape[0]
    kind = route_kind(route, cell, K)
    w = (kind == LOCAL).astype(int)
    v = np.zeros((J, K), dtype=int)
    z = np.zeros((J, S), dtype=int)
    rel = np.flatnonzero(kind == RELAY)
    v[rel, route[rel]] = 1
    sat = np.flatnonzero(kind == SATELLITE)
    z[sat, route[sat] - K] = 1
    return w, v, z


def initial_decisions(scn) -> Decisions:
    """Structurally valid starting point: nothing offloaded, equal-split powers, no bands."""
    J = scn.J
    return Decisions(
        beta=np.zeros(J),
        band=np.full(J, -1),
        power=np.zeros(J),
        uav_pos=np.array(scn.uav_xy),
        route=np.array(scn.cell),
    )
