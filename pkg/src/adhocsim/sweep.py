"""Grid sweeps over protocol x MAC x nodes x speed with replications,
CSV / summary / plot-data emission."""

from __future__ import annotations

import csv
import dataclasses
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .scenario import (CSV_HEADER, ConfigError, ResultRow, ScenarioConfig, parse_kv,
                       run_scenario)

METRICS = ("pdr", "throughput_bps", "e2ed_ms", "nrl")

# panel letter -> (mac, x axis)
PANELS = {
    "a": ("80211", "nodes"),
    "b": ("80211", "speed_mps"),
    "c": ("80211p", "nodes"),
    "d": ("80211p", "speed_mps"),
}

_LIST_KEYS = {"protocols": str, "macs": str, "nodes": int, "speeds": float}


@dataclass
class SweepSpec:
    protocols: list[str] = field(default_factory=lambda: ["aodv", "mod-aodv", "dsr", "mod-dsr",
                                                          "fsr", "mod-fsr"])
    macs: list[str] = field(default_factory=lambda: ["80211", "80211p"])
    nodes: list[int] = field(default_factory=lambda: [25, 50, 75, 100])
    speeds: list[float] = field(default_factory=lambda: [2.0, 7.0, 15.0, 30.0])
    replications: int = 1
    master_seed: int = 1
    base: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications", "need at least one replication")
        for key in _LIST_KEYS:
            if not getattr(self, key):
                raise ConfigError(key, "axis must not be empty")

    def cells(self) -> list[ScenarioConfig]:
        """One config per grid point and replication; seed = master_seed + replication."""
        out = []
        for proto, mac, n, v, rep in itertools.product(self.protocols, self.macs, self.nodes,
                                                       self.speeds, range(self.replications)):
            cfg = dataclasses.replace(self.base, protocol=proto, mac=mac, nodes=n, speed=float(v),
                                      seed=self.master_seed + rep,
                                      overrides=dict(self.base.overrides))
            cfg.validate()
            out.append(cfg)
        return out

    @classmethod
    def from_text(cls, text: str, full_scale: bool = False) -> SweepSpec:
        """Flat ``key = value`` sweep file; axes are comma-separated lists.

        Remaining keys configure every cell. ``full_scale_sim_time``, when
        present, replaces ``sim_time`` if ``full_scale`` is set.
        """
        kv = parse_kv(text)
        kwargs = {}
        for key, conv in _LIST_KEYS.items():
            if key in kv:
                try:
                    kwargs[key] = [conv(x.strip()) for x in kv.pop(key).split(",") if x.strip()]
                except ValueError:
                    raise ConfigError(key, "malformed list") from None
        for key in ("replications", "master_seed"):
            if key in kv:
                try:
                    kwargs[key] = int(kv.pop(key))
                except ValueError:
                    raise ConfigError(key, "expected an integer") from None
        full = kv.pop("full_scale_sim_time", None)
        if full_scale and full is not None:
            kv["sim_time"] = full
        kwargs["base"] = ScenarioConfig.from_mapping(kv)
        return cls(**kwargs)


def _run_cell(cfg: ScenarioConfig) -> ResultRow:
    try:
        return run_scenario(cfg)
    except Exception as exc:  # a failed cell is reported, the sweep goes on
        return ResultRow(cfg.scenario_id, cfg.protocol, cfg.mac, cfg.nodes, float(cfg.speed),
                         cfg.seed, float(cfg.sim_time),
                         status=f"error: {type(exc).__name__}: {exc}")


def run_cells(configs: list[ScenarioConfig], workers: int = 1, progress=None) -> list[ResultRow]:
    """Run every config; output order is the deterministic row sort, never completion order."""
    if workers <= 1 or len(configs) <= 1:
        rows = []
        for cfg in configs:
            rows.append(_run_cell(cfg))
            if progress is not None:
                progress(rows[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = []
            for row in pool.map(_run_cell, configs):
                rows.append(row)
                if progress is not None:
                    progress(row)
    return sorted(rows, key=lambda r: r.sort_key)


def run_sweep(spec: SweepSpec, workers: int = 1, progress=None) -> tuple[list[ResultRow], list[dict]]:
    rows = run_cells(spec.cells(), workers, progress)
    return rows, summarize(rows)


def _mean_stderr(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    m = sum(values) / len(values)
    if len(values) < 2:
        return m, 0.0
    var = sum((x - m) ** 2 for x in values) / (len(values) - 1)
    return m, math.sqrt(var / len(values))


def summarize(rows: list[ResultRow]) -> list[dict]:
    """Per-cell mean and standard error of each metric (undefined values skipped)."""
    cells: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        cells.setdefault((r.protocol, r.mac, r.nodes, r.speed_mps), []).append(r)
    out = []
    for key in sorted(cells):
        group = cells[key]
        rec = {"protocol": key[0], "mac": key[1], "nodes": key[2], "speed_mps": key[3],
               "runs": len(group), "failed": sum(r.status != "ok" for r in group)}
        for m in METRICS:
            vals = [getattr(r, m) for r in group if r.status == "ok" and getattr(r, m) is not None]
            rec[f"{m}_mean"], rec[f"{m}_stderr"] = _mean_stderr(vals)
        out.append(rec)
    return out


# -- emission ------------------------------------------------------------------

def check_writable(path: str | os.PathLike) -> None:
    """Fail early if ``path`` cannot be created (before any simulation runs)."""
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if p.exists() and p.is_dir():
        raise OSError(f"{p} is a directory")
    if not parent.exists():
        raise OSError(f"directory {parent} does not exist")
    if not os.access(parent, os.W_OK) or (p.exists() and not os.access(p, os.W_OK)):
        raise OSError(f"{p} is not writable")


def check_dir_writable(path: str | os.PathLike) -> None:
    p = Path(path)
    if p.exists():
        if not p.is_dir() or not os.access(p, os.W_OK):
            raise OSError(f"{p} is not a writable directory")
    else:
        check_writable(p)


def csv_text(rows: list[ResultRow]) -> str:
    lines = [CSV_HEADER]
    lines.extend(",".join(r.csv_fields()) for r in rows)
    return "\n".join(lines) + "\n"


def write_csv(rows: list[ResultRow], path) -> None:
    if not rows:
        raise ValueError("nothing to write")
    Path(path).write_text(csv_text(rows))


def write_summary(summary: list[dict], path) -> None:
    if not summary:
        raise ValueError("nothing to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]))
        w.writeheader()
        for rec in summary:
            w.writerow({k: "" if v is None else v for k, v in rec.items()})


def plot_data(rows: list[ResultRow], scalability_speed: float | None = None,
              mobility_nodes: int | None = None) -> dict[tuple[str, str], list[dict]]:
    """Series per (metric, panel): one column per protocol, x = nodes or speed.

    Scalability panels hold speed at ``scalability_speed`` (default: lowest
    speed present), mobility panels hold nodes at ``mobility_nodes``
    (default: lowest node count present).
    """
    ok = [r for r in rows if r.status == "ok"]
    if not ok:
        return {}
    if scalability_speed is None:
        scalability_speed = min(r.speed_mps for r in ok)
    if mobility_nodes is None:
        mobility_nodes = min(r.nodes for r in ok)
    summary = summarize(ok)
    out = {}
    for metric in METRICS:
        for panel, (mac, axis) in PANELS.items():
            if axis == "nodes":
                recs = [s for s in summary if s["mac"] == mac and s["speed_mps"] == scalability_speed]
            else:
                recs = [s for s in summary if s["mac"] == mac and s["nodes"] == mobility_nodes]
            if not recs:
                continue
            protocols = sorted({s["protocol"] for s in recs})
            xs = sorted({s[axis] for s in recs})
            table = []
            for x in xs:
                line = {axis: x}
                for p in protocols:
                    hit = [s for s in recs if s["protocol"] == p and s[axis] == x]
                    line[p] = hit[0][f"{metric}_mean"] if hit else None
                table.append(line)
            out[(metric, panel)] = table
    return out


def write_plot_data(rows: list[ResultRow], directory, **kw) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for (metric, panel), table in sorted(plot_data(rows, **kw).items()):
        path = d / f"{metric}_{panel}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(table[0]))
            w.writeheader()
            for line in table:
                w.writerow({k: "" if v is None else v for k, v in line.items()})
        written.append(path)
    return written
