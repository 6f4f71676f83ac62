"""Experiment plumbing: run records, sweeps, summaries and the oracle suite.

Every number written to a results CSV is a deterministic function of the
configuration and the seed. Wall-clock times go to a separate timings file.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import bcd, channel, cost, matching, offload, rng
from .scenario import ConfigError, Scenario, SimConfig, generate_scenario

OUT_ENV = "SAGMEC_OUT"
DEFAULT_OUT = "results"
SWEEP_PARAMS = ("devices", "uavs", "data_size", "deadline")
CI_Z = 1.96

ORACLE_MAX_J = 6
ORACLE_MAX_K = 2
ORACLE_MAX_B = 6
ORACLE_INSTANCES = 100
ORACLE_DEADLINE_S = (4e-3, 12e-3)


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    """What to run: a scenario recipe plus solver settings."""

    scenario: SimConfig = SimConfig()
    variant: str = "proposed"
    variants: tuple[str, ...] = ("proposed",)
    seeds: tuple[int, ...] = (0,)
    eps: float = 1e-4
    max_outer: int = bcd.MAX_OUTER

    def validate(self) -> None:
        self.scenario.validate()
        for v in (self.variant, *self.variants):
            if v not in bcd.VARIANTS:
                raise ConfigError(f"unknown variant {v!r}; choose from {', '.join(bcd.VARIANTS)}")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.max_outer < 1:
            raise ConfigError("max_outer must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        scn = SimConfig.from_dict(data.pop("scenario", {}))
        for key in ("variants", "seeds"):
            if key in data:
                if not isinstance(data[key], list):
                    raise ConfigError(f"{key} must be a list")
                data[key] = tuple(data[key])
        try:
            cfg = cls(scenario=scn, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario.to_dict(), "variant": self.variant, "variants": list(self.variants),
            "seeds": list(self.seeds), "eps": self.eps, "max_outer": self.max_outer,
        }


def load_config(path) -> RunConfig:
    """Read a JSON run configuration; a missing path gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return RunConfig.from_dict(data)


def with_param(scn_cfg: SimConfig, param: str, value) -> SimConfig:
    """Scenario recipe with one sweep axis set.

    ``data_size`` rescales the preset's data range so its mean is ``value``
    bits; ``deadline`` is in seconds.
    """
    if param == "devices":
        return replace(scn_cfg, num_devices=int(value))
    if param == "uavs":
        return replace(scn_cfg, num_uavs=int(value))
    if param == "data_size":
        lo, hi = scn_cfg.data_bits or scn_cfg.resolved_preset().data_bits
        scale = float(value) / (0.5 * (lo + hi))
        return replace(scn_cfg, data_bits=(lo * scale, hi * scale))
    if param == "deadline":
        return replace(scn_cfg, deadline_s=float(value))
    raise ConfigError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class RunRecord:
    seed: int
    variant: str
    J: int
    K: int
    B: int
    preset: str
    avg_data_bits: float
    deadline_s: float
    total_energy_j: float
    device_energy_j: float
    uav_energy_j: float
    offload_fraction: float
    sum_rate_bps: float
    outer_iters: int
    runtime_s: float
    converged: bool
    feasible: bool


RECORD_FIELDS = tuple(f.name for f in fields(RunRecord))
# runtime_s is kept out of the results table so reruns are byte-identical
CSV_FIELDS = tuple(f for f in RECORD_FIELDS if f != "runtime_s")


def sum_access_rate(scn: Scenario, dec) -> float:
    """Total access rate of the devices holding a sub-band."""
    rate = channel.links(scn, dec).access_rate
    return float(np.sum(rate[np.asarray(dec.band) >= 0]))


def make_record(scn: Scenario, out: bcd.RunOutcome) -> RunRecord:
    rep = out.report
    return RunRecord(
        seed=int(scn.seed), variant=out.variant, J=scn.J, K=scn.K, B=scn.B, preset=scn.preset,
        avg_data_bits=float(np.mean(scn.data_bits)), deadline_s=float(np.mean(scn.deadline)),
        total_energy_j=rep.objective_q, device_energy_j=rep.device_energy, uav_energy_j=rep.uav_energy,
        offload_fraction=float(np.mean(out.decisions.beta / scn.data_bits)),
        sum_rate_bps=sum_access_rate(scn, out.decisions), outer_iters=len(out.trace),
        runtime_s=out.runtime_s, converged=bool(out.trace.converged), feasible=bool(rep.feasible),
    )


def trace_to_dict(trace: bcd.BcdTrace, deterministic: bool = True) -> dict:
    recs = []
    for r in trace.records:
        d = asdict(r)
        if deterministic:
            d.pop("runtimes")
        recs.append(d)
    return {"q0": trace.q0, "converged": trace.converged, "records": recs, "diagnostics": list(trace.diagnostics)}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# single runs


def execute(scn_cfg: SimConfig, seed: int, variant: str, eps: float = 1e-4, max_outer: int = bcd.MAX_OUTER):
    """Generate the scenario and run one scheme; returns (scenario, outcome, record)."""
    scn = generate_scenario(scn_cfg, seed)
    out = bcd.run_baseline(scn, variant, seed=seed, eps4=eps, max_outer=max_outer)
    return scn, out, make_record(scn, out)


def run(cfg: RunConfig, seed: int, out_dir) -> RunRecord:
    """One end-to-end run with its artifacts: record CSV, scenario snapshot, trace."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scn, out, rec = execute(cfg.scenario, seed, cfg.variant, cfg.eps, cfg.max_outer)
    stem = f"{cfg.variant}_seed{seed}"
    write_csv(out_dir / f"{stem}.csv", [asdict(rec)], CSV_FIELDS)
    write_csv(out_dir / f"{stem}_timings.csv", [asdict(rec)], ("seed", "variant", "runtime_s"))
    scn.save(out_dir / f"{stem}_scenario.json")
    payload = {"config": cfg.to_dict(), "trace": trace_to_dict(out.trace), "decisions": out.decisions.to_dict()}
    (out_dir / f"{stem}_trace.json").write_text(json.dumps(payload, indent=1, sort_keys=True))
    return rec


# ---------------------------------------------------------------------------
# sweeps


def _sweep_job(args):
    param, value, scn_cfg, seed, variant, eps, max_outer = args
    _, _, rec = execute(with_param(scn_cfg, param, value), seed, variant, eps, max_outer)
    return value, rec


def sweep_rows(cfg: RunConfig, param: str, values: Iterable, seeds: Iterable[int] | None = None,
               variants: Iterable[str] | None = None, jobs: int = 1) -> list[dict]:
    """Cartesian product values x seeds x variants, sorted by (value, seed, variant)."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    values = list(values)
    seeds = list(cfg.seeds if seeds is None else seeds)
    variants = list(cfg.variants if variants is None else variants)
    if not values or not seeds or not variants:
        raise ConfigError("sweep needs at least one value, seed and variant")
    for v in variants:
        if v not in bcd.VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
    for v in values:  # fail on bad values before starting any work
        with_param(cfg.scenario, param, v).validate()
    tasks = [(param, v, cfg.scenario, s, var, cfg.eps, cfg.max_outer) for v in values for s in seeds for var in variants]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_job, tasks))
    else:
        results = [_sweep_job(t) for t in tasks]
    rows = [{"param": param, "value": value, **asdict(rec)} for value, rec in results]
    rows.sort(key=lambda r: (float(r["value"]), r["seed"], r["variant"]))
    return rows


SUMMARY_METRICS = ("total_energy_j", "device_energy_j", "uav_energy_j", "offload_fraction", "sum_rate_bps",
                   "outer_iters")


def mean_ci(values) -> tuple[float, float]:
    """Mean and 95% half-width ``1.96 * s / sqrt(n)`` (zero for a single sample)."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(CI_Z * x.std(ddof=1) / math.sqrt(x.size))


def summarise(rows: Sequence[dict]) -> list[dict]:
    """Mean and CI half-width per (value, variant) for each metric."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((float(r["value"]), r["variant"]), []).append(r)
    out = []
    for (value, variant), grp in sorted(groups.items()):
        row = {"param": grp[0]["param"], "value": grp[0]["value"], "variant": variant, "n": len(grp),
               "feasible_runs": sum(bool(g["feasible"]) for g in grp)}
        for m in SUMMARY_METRICS:
            row[f"{m}_mean"], row[f"{m}_ci95"] = mean_ci([float(g[m]) for g in grp])
        out.append(row)
    return out


SUMMARY_FIELDS = ("param", "value", "variant", "n", "feasible_runs") + tuple(
    f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "ci95"))
SWEEP_FIELDS = ("param", "value") + CSV_FIELDS


def sweep(cfg: RunConfig, param: str, values, out_dir, seeds=None, variants=None, jobs: int = 1) -> list[dict]:
    """Run a sweep and write ``sweep_<param>.csv``, its summary and the timings."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = sweep_rows(cfg, param, values, seeds, variants, jobs)
    write_csv(out_dir / f"sweep_{param}.csv", rows, SWEEP_FIELDS)
    write_csv(out_dir / f"sweep_{param}_summary.csv", summarise(rows), SUMMARY_FIELDS)
    write_csv(out_dir / f"sweep_{param}_timings.csv", rows, ("value", "seed", "variant", "runtime_s"))
    return rows


# ---------------------------------------------------------------------------
# oracle comparison


class OracleGuardError(ConfigError):
    pass


def oracle_instance(seed: int, index: int) -> SimConfig:
    """Random desk-scale recipe for oracle instance ``index``."""
    gen = rng.stream(seed, f"oracle/{index}")
    J = int(gen.integers(2, ORACLE_MAX_J + 1))
    K = int(gen.integers(1, min(ORACLE_MAX_K, J) + 1))
    B = int(gen.integers(2, ORACLE_MAX_B + 1))
    # deadlines short enough that some devices cannot finish locally
    deadline = float(gen.uniform(*ORACLE_DEADLINE_S))
    return SimConfig(num_devices=J, num_uavs=K, num_satellites=1, subbands=B, area_m=300.0, deadline_s=deadline)


def check_oracle_guard(scn: Scenario) -> None:
    if scn.J > ORACLE_MAX_J or scn.K > ORACLE_MAX_K or scn.B > ORACLE_MAX_B or scn.S != 1:
        raise OracleGuardError(
            f"oracle limited to J <= {ORACLE_MAX_J}, K <= {ORACLE_MAX_K}, B <= {ORACLE_MAX_B}, S = 1 "
            f"(got J={scn.J}, K={scn.K}, B={scn.B}, S={scn.S})"
        )


def band_gap(scn: Scenario, dec) -> float:
    """Relative sum-rate shortfall of the matched bands against the best assignment, per cell profiles."""
    _, info = matching.assign_subbands(scn, dec)
    got = best = 0.0
    for prof in info["profiles"]:
        res = matching.deferred_acceptance(prof.device_pref, prof.band_pref)
        on = res.match >= 0
        got += float(prof.device_pref[np.flatnonzero(on), res.match[on]].sum())
        _, val = matching.exhaustive_assignment(len(prof.devices), scn.B, matching.sum_rate_objective(prof.device_pref))
        best += -val
    return (best - got) / best if best > 0 else 0.0


def routing_gap(scn: Scenario, dec) -> float:
    """Relative excess of Q over the best routing with every other block fixed."""
    q = cost.objective(scn, dec)
    _, q_best = offload.exhaustive_routes(scn, dec)
    if not np.isfinite(q_best) or not q.feasible:
        return math.nan
    return (q.objective_q - q_best) / q_best


def oracle_rows(seed: int = 0, instances: int = ORACLE_INSTANCES, eps: float = 1e-4) -> list[dict]:
    rows = []
    for i in range(instances):
        scn = generate_scenario(oracle_instance(seed, i), seed * 100003 + i)
        check_oracle_guard(scn)
        prop = bcd.run_baseline(scn, "proposed", seed=scn.seed, eps4=eps)
        opt = bcd.run_baseline(scn, "optimal", seed=scn.seed, eps4=eps)
        qp, qo = prop.report.objective_q, opt.report.objective_q
        rows.append({
            "instance": i, "seed": scn.seed, "J": scn.J, "K": scn.K, "B": scn.B,
            "band_gap": band_gap(scn, prop.decisions), "routing_gap": routing_gap(scn, prop.decisions),
            "q_proposed": qp, "q_optimal": qo, "q_gap": (qp - qo) / qo if qo > 0 else 0.0,
            "feasible": bool(prop.report.feasible and opt.report.feasible),
        })
    return rows


ORACLE_FIELDS = ("instance", "seed", "J", "K", "B", "band_gap", "routing_gap", "q_proposed", "q_optimal", "q_gap",
                 "feasible")


def gap_stats(values) -> dict:
    x = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if x.size == 0:
        return {"n": 0}
    return {"n": int(x.size), "min": float(x.min()), "median": float(np.median(x)), "p90": float(np.quantile(x, 0.9)),
            "max": float(x.max()), "mean": float(x.mean()), "share_within_5pct": float(np.mean(x <= 0.05))}


def oracle_suite(out_dir, seed: int = 0, instances: int = ORACLE_INSTANCES) -> dict:
    """Proposed against exhaustive bands and routes on seeded desk-scale instances."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows = oracle_rows(seed, instances)
    report = {k: gap_stats([r[k] for r in rows]) for k in ("band_gap", "routing_gap", "q_gap")}
    report["instances"] = len(rows)
    write_csv(out_dir / "oracle.csv", rows, ORACLE_FIELDS)
    (out_dir / "oracle_report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    report["runtime_s"] = time.perf_counter() - t0
    return report
