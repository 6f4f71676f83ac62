"""World instances: devices with tasks, UAVs, satellites and the device-UAV association."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import rng
from .constants import PhysConfig, Preset, get_preset

SCENARIO_FORMAT = "sagmec-scenario/1"


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration."""


@dataclass(frozen=True)
class Task:
    deadline_s: float
    cycles_per_bit: float
    data_bits: float

    def __post_init__(self):
        if not (self.deadline_s > 0 and self.cycles_per_bit > 0 and self.data_bits > 0):
            raise ValueError(f"task fields must be positive: {self}")


@dataclass(frozen=True)
class Device:
    id: int
    position: tuple[float, float]
    cpu_hz: float
    chip_coeff: float
    max_tx_power_w: float
    task: Task

    def __post_init__(self):
        if not (self.cpu_hz > 0 and self.chip_coeff > 0 and self.max_tx_power_w > 0):
            raise ValueError(f"device {self.id}: cpu, chip coefficient and max power must be positive")


@dataclass(frozen=True)
class Uav:
    id: int
    position: tuple[float, float]
    altitude_m: float
    cpu_hz: float
    chip_coeff: float
    tx_power_w: float
    bounds: tuple[tuple[float, float], tuple[float, float]]  # ((xmin, xmax), (ymin, ymax))

    def __post_init__(self):
        if not (self.altitude_m > 0 and self.cpu_hz > 0):
            raise ValueError(f"uav {self.id}: altitude and cpu must be positive")
        (x0, x1), (y0, y1) = self.bounds
        x, y = self.position
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            raise ValueError(f"uav {self.id}: position {self.position} outside bounds {self.bounds}")


@dataclass(frozen=True)
class Satellite:
    id: int
    position: tuple[float, float, float]
    altitude_m: float


@dataclass(frozen=True)
class Scenario:
    """Immutable snapshot of one world instance.

    The record fields are the source of truth; the ``*_arr`` style cached
    properties are read-only numpy views used by the solvers.
    """

    devices: tuple[Device, ...]
    uavs: tuple[Uav, ...]
    satellites: tuple[Satellite, ...]
    association: tuple[int, ...]
    phys: PhysConfig
    seed: int = 0
    preset: str = "physical"

    def __post_init__(self):
        if len(self.association) != len(self.devices):
            raise ValueError("association must map every device")
        K = len(self.uavs)
        for j, k in enumerate(self.association):
            if not 0 <= k < K:
                raise ValueError(f"device {j} associated with unknown uav {k}")

    # sizes
    @property
    def J(self) -> int:
        return len(self.devices)

    @property
    def K(self) -> int:
        return len(self.uavs)

    @property
    def S(self) -> int:
        return len(self.satellites)

    @property
    def B(self) -> int:
        return int(self.phys.num_subbands)

    # cached read-only arrays
    @cached_property
    def device_xy(self) -> np.ndarray:
        return _ro([d.position for d in self.devices], (self.J, 2))

    @cached_property
    def data_bits(self) -> np.ndarray:
        return _ro([d.task.data_bits for d in self.devices])

    @cached_property
    def cycles_per_bit(self) -> np.ndarray:
        return _ro([d.task.cycles_per_bit for d in self.devices])

    @cached_property
    def deadline(self) -> np.ndarray:
        return _ro([d.task.deadline_s for d in self.devices])

    @cached_property
    def cpu_hz(self) -> np.ndarray:
        return _ro([d.cpu_hz for d in self.devices])

    @cached_property
    def chip_coeff(self) -> np.ndarray:
        return _ro([d.chip_coeff for d in self.devices])

    @cached_property
    def max_power(self) -> np.ndarray:
        return _ro([d.max_tx_power_w for d in self.devices])

    @cached_property
    def cell(self) -> np.ndarray:
        a = np.asarray(self.association, dtype=np.int64)
        a.setflags(write=False)
        return a

    @cached_property
    def uav_xy(self) -> np.ndarray:
        return _ro([u.position for u in self.uavs], (self.K, 2))

    @cached_property
    def uav_alt(self) -> np.ndarray:
        return _ro([u.altitude_m for u in self.uavs])

    @cached_property
    def uav_cpu(self) -> np.ndarray:
        return _ro([u.cpu_hz for u in self.uavs])

    @cached_property
    def uav_chip(self) -> np.ndarray:
        return _ro([u.chip_coeff for u in self.uavs])

    @cached_property
    def uav_power(self) -> np.ndarray:
        return _ro([u.tx_power_w for u in self.uavs])

    @cached_property
    def uav_lo(self) -> np.ndarray:
        return _ro([(u.bounds[0][0], u.bounds[1][0]) for u in self.uavs], (self.K, 2))

    @cached_property
    def uav_hi(self) -> np.ndarray:
        return _ro([(u.bounds[0][1], u.bounds[1][1]) for u in self.uavs], (self.K, 2))

    @cached_property
    def sat_pos(self) -> np.ndarray:
        return _ro([s.position for s in self.satellites], (self.S, 3))

    def cell_members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.cell == k)

    def with_tasks(self, **changes) -> "Scenario":
        """Copy with every task's fields replaced (e.g. ``deadline_s=0.2``)."""
        devices = tuple(replace(d, task=replace(d.task, **changes)) for d in self.devices)
        return replace(self, devices=devices)

    # persistence
    def to_dict(self) -> dict[str, Any]:
        return {
            "format": SCENARIO_FORMAT,
            "seed": self.seed,
            "preset": self.preset,
            "phys": asdict(self.phys),
            "devices": [asdict(d) for d in self.devices],
            "uavs": [asdict(u) for u in self.uavs],
            "satellites": [asdict(s) for s in self.satellites],
            "association": list(self.association),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Scenario":
        if data.get("format") != SCENARIO_FORMAT:
            raise ConfigError(f"not a scenario snapshot (format={data.get('format')!r})")
        phys = PhysConfig(**data["phys"])
        devices = tuple(
            Device(
                id=d["id"], position=tuple(d["position"]), cpu_hz=d["cpu_hz"], chip_coeff=d["chip_coeff"],
                max_tx_power_w=d["max_tx_power_w"], task=Task(**d["task"]),
            )
            for d in data["devices"]
        )
        uavs = tuple(
            Uav(
                id=u["id"], position=tuple(u["position"]), altitude_m=u["altitude_m"], cpu_hz=u["cpu_hz"],
                chip_coeff=u["chip_coeff"], tx_power_w=u["tx_power_w"],
                bounds=tuple(tuple(b) for b in u["bounds"]),
            )
            for u in data["uavs"]
        )
        sats = tuple(
            Satellite(id=s["id"], position=tuple(s["position"]), altitude_m=s["altitude_m"])
            for s in data["satellites"]
        )
        return cls(devices, uavs, sats, tuple(data["association"]), phys, data["seed"], data["preset"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _ro(values, shape=None) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if shape is not None:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SimConfig:
    """Scenario generation parameters.

    ``None`` fields fall back to the preset's defaults. Ranges are
    ``(low, high)`` pairs for uniform draws.
    """

    area_m: float = 600.0
    num_devices: int = 20
    num_uavs: int = 2
    num_satellites: int = 2
    preset: str = "physical"
    subbands: int | None = None
    data_bits: tuple[float, float] | None = None
    cycles_per_bit: tuple[float, float] | None = None
    deadline_s: float | None = None
    device_cpu_hz: tuple[float, float] | None = None
    device_max_power_w: float | None = None
    uav_altitude_m: float | None = None
    uav_cpu_hz: float | None = None
    sat_altitudes_m: tuple[float, float] | None = None
    sat_min_altitude_m: float = 500.0e3
    phys: dict = field(default_factory=dict)  # PhysConfig field overrides

    def __post_init__(self):
        self.validate()

    def resolved_preset(self) -> Preset:
        return get_preset(self.preset)

    def validate(self) -> None:
        try:
            self.resolved_preset()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.area_m > 0:
            raise ConfigError("area_m must be positive")
        if self.num_devices < 1 or self.num_uavs < 1 or self.num_satellites < 0:
            raise ConfigError("need >= 1 device, >= 1 uav and >= 0 satellites")
        if self.num_uavs > self.num_devices:
            raise ConfigError(f"num_uavs={self.num_uavs} exceeds num_devices={self.num_devices}")
        if self.subbands is not None and self.subbands < 1:
            raise ConfigError("subbands must be >= 1")
        for name in ("data_bits", "cycles_per_bit", "device_cpu_hz", "sat_altitudes_m"):
            rng_ = getattr(self, name)
            if rng_ is None:
                continue
            lo, hi = rng_
            if lo > hi:
                raise ConfigError(f"{name}: min {lo} > max {hi}")
            if lo <= 0:
                raise ConfigError(f"{name}: values must be positive")
        unknown = set(self.phys) - {f.name for f in fields(PhysConfig)}
        if unknown:
            raise ConfigError(f"unknown phys keys: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        kwargs = {}
        for k, v in data.items():
            kwargs[k] = tuple(v) if isinstance(v, list) else v
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in out.items()}


# ---------------------------------------------------------------------------
# association


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    sse_history: tuple[float, ...]
    iterations: int


def _sse(points, labels, centroids) -> float:
    return float(((points - centroids[labels]) ** 2).sum())


def _nearest(points, centroids) -> np.ndarray:
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)  # first minimum -> lowest id wins ties


def _kmeanspp(points, K, gen) -> np.ndarray:
    n = len(points)
    centers = [points[gen.integers(n)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            idx = int(gen.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), gen.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def _lloyd(points, centroids, tol, max_iter, history):
    labels = _nearest(points, centroids)
    history.append(_sse(points, labels, centroids))
    it = 0
    for it in range(1, max_iter + 1):
        new = centroids.copy()
        for k in range(len(centroids)):
            members = labels == k
            if members.any():
                new[k] = points[members].mean(axis=0)
        shift = float(np.sqrt(((new - centroids) ** 2).sum(axis=1)).max())
        centroids = new
        labels = _nearest(points, centroids)
        history.append(_sse(points, labels, centroids))
        if shift < tol:
            break
    return labels, centroids, it


def _hartigan(points, labels, centroids, history, max_pass=100):
    # Single-point transfers that strictly lower SSE; escapes Lloyd ties such
    # as a square's corners split 3-1.
    labels = labels.copy()
    K = len(centroids)
    counts = np.bincount(labels, minlength=K).astype(float)
    moved = True
    passes = 0
    while moved and passes < max_pass:
        moved = False
        passes += 1
        for i, x in enumerate(points):
            a = labels[i]
            if counts[a] <= 1:
                continue
            d2 = ((centroids - x) ** 2).sum(axis=1)
            gain_out = counts[a] / (counts[a] - 1.0) * d2[a]
            cost_in = counts / (counts + 1.0) * d2
            cost_in[a] = np.inf
            b = int(np.argmin(cost_in))
            if cost_in[b] < gain_out - 1e-12 * max(gain_out, 1.0):
                centroids[a] = (centroids[a] * counts[a] - x) / (counts[a] - 1.0)
                centroids[b] = (centroids[b] * counts[b] + x) / (counts[b] + 1.0)
                counts[a] -= 1
                counts[b] += 1
                labels[i] = b
                moved = True
                history.append(_sse(points, labels, centroids))
    return labels, centroids


def associate_kmeans(
    devices: Sequence[Device] | np.ndarray,
    K: int,
    seed: int,
    bounds: tuple[np.ndarray, np.ndarray] | None = None,
    *,
    n_init: int = 10,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> KMeansResult:
    """Cluster devices into ``K`` cells; centroids become the initial UAV positions.

    k-means++ seeding from the ``kmeans`` sub-stream of ``seed``, Lloyd
    iterations until the largest centroid shift is below ``tol`` metres, then
    single-point transfer refinement. The best of ``n_init`` seedings (by SSE)
    is returned. ``bounds`` is a ``(lo, hi)`` pair of (K, 2) arrays the
    centroids are clamped into.
    """
    points = np.asarray(
        [d.position for d in devices] if not isinstance(devices, np.ndarray) else devices, dtype=float
    ).reshape(-1, 2)
    if K < 1:
        raise ConfigError("K must be >= 1")
    if K > len(points):
        raise ConfigError(f"K={K} exceeds the number of devices ({len(points)})")
    gen = rng.stream(seed, "kmeans")
    best = None
    for _ in range(max(1, n_init)):
        history: list[float] = []
        labels, centroids, it = _lloyd(points, _kmeanspp(points, K, gen), tol, max_iter, history)
        labels, centroids = _hartigan(points, labels, centroids, history)
        labels, centroids, it2 = _lloyd(points, centroids, tol, max_iter, history)
        sse = history[-1]
        if best is None or sse < best[0] - 1e-12 * max(1.0, sse):
            best = (sse, labels, centroids, tuple(history), it + it2)
    _, labels, centroids, history, iters = best
    if bounds is not None:
        centroids = np.clip(centroids, bounds[0], bounds[1])
    # canonical cell ids: order clusters by their first member
    order = np.argsort([np.flatnonzero(labels == k)[0] if (labels == k).any() else len(points) + k for k in range(K)])
    remap = np.empty(K, dtype=np.int64)
    remap[order] = np.arange(K)
    return KMeansResult(remap[labels], centroids[order], history, iters)


# ---------------------------------------------------------------------------
# generation


def generate_scenario(config: SimConfig, seed: int) -> Scenario:
    """Draw a scenario; identical ``(config, seed)`` pairs give identical scenarios."""
    config.validate()
    preset = config.resolved_preset()
    phys_kw = dict(config.phys)
    if config.subbands is not None:
        phys_kw["num_subbands"] = int(config.subbands)
    phys = replace(preset.phys, **phys_kw) if phys_kw else preset.phys

    J, K, S, area = config.num_devices, config.num_uavs, config.num_satellites, float(config.area_m)
    data_rng = config.data_bits or preset.data_bits
    alpha_rng = config.cycles_per_bit or preset.cycles_per_bit
    cpu_rng = config.device_cpu_hz or preset.device_cpu_hz
    deadline = config.deadline_s if config.deadline_s is not None else preset.deadline_s
    pmax = config.device_max_power_w if config.device_max_power_w is not None else preset.device_max_power_w
    if not deadline > 0:
        raise ConfigError("deadline_s must be positive")

    gen = rng.stream(seed, "scenario")
    xy = gen.uniform(0.0, area, size=(J, 2))
    data = gen.uniform(*data_rng, size=J)
    alpha = gen.uniform(*alpha_rng, size=J)
    cpu = gen.uniform(*cpu_rng, size=J)

    devices = tuple(
        Device(
            id=j, position=(float(xy[j, 0]), float(xy[j, 1])), cpu_hz=float(cpu[j]),
            chip_coeff=float(preset.device_chip_coeff), max_tx_power_w=float(pmax),
            task=Task(deadline_s=float(deadline), cycles_per_bit=float(alpha[j]), data_bits=float(data[j])),
        )
        for j in range(J)
    )
    box = ((0.0, area), (0.0, area))
    lo = np.zeros((K, 2))
    hi = np.full((K, 2), area)
    km = associate_kmeans(xy, K, seed, (lo, hi))
    altitude = config.uav_altitude_m if config.uav_altitude_m is not None else preset.uav_altitude_m
    uav_cpu = config.uav_cpu_hz if config.uav_cpu_hz is not None else preset.uav_cpu_hz
    uavs = tuple(
        Uav(
            id=k, position=(float(km.centroids[k, 0]), float(km.centroids[k, 1])), altitude_m=float(altitude),
            cpu_hz=float(uav_cpu), chip_coeff=float(preset.uav_chip_coeff),
            tx_power_w=float(preset.uav_tx_power_w), bounds=box,
        )
        for k in range(K)
    )
    alt_lo, alt_hi = config.sat_altitudes_m or preset.sat_altitudes_m
    alts = np.linspace(alt_lo, alt_hi, S) if S > 1 else np.array([alt_lo] * S)
    for a in alts:
        if a < config.sat_min_altitude_m:
            raise ConfigError(f"satellite altitude {a} m below LEO floor {config.sat_min_altitude_m} m")
    sats = tuple(
        Satellite(id=s, position=(area / 2.0, area / 2.0, float(alts[s])), altitude_m=float(alts[s]))
        for s in range(S)
    )
    return Scenario(devices, uavs, sats, tuple(int(k) for k in km.labels), phys, int(seed), preset.name)
