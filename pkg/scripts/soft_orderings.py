"""Qualitative protocol orderings at the two reference cells.

MANET 25 nodes at 2 m/s on 802.11 and VANET 100 nodes at 30 m/s on
802.11p, all six protocols, several seeds, 200 s each. Prints per-cell
means and, per seed, whether each expected ordering holds.
"""

import argparse
import dataclasses
import math

from adhocsim.routing import PROTOCOLS
from adhocsim.scenario import ScenarioConfig
from adhocsim.sweep import run_cells, summarize, write_csv

CELLS = [("80211", 25, 2.0), ("80211p", 100, 30.0)]


def mean(values):
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else math.inf


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--sim-time", type=float, default=200.0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", help="optional CSV of every run")
    args = ap.parse_args()

    seeds = range(1, args.seeds + 1)
    base = ScenarioConfig(sim_time=args.sim_time)
    configs = [dataclasses.replace(base, protocol=p, mac=m, nodes=n, speed=v, seed=s)
               for m, n, v in CELLS for p in PROTOCOLS for s in seeds]
    rows = run_cells(configs, workers=args.workers)
    if args.out:
        write_csv(rows, args.out)
    for rec in summarize(rows):
        print(f"{rec['mac']:7s} {rec['protocol']:9s} pdr={rec['pdr_mean']:.3f} "
              f"e2ed={rec['e2ed_ms_mean']:.0f} ms nrl={rec['nrl_mean']:.3f}")

    by = {(r.mac, r.protocol, r.seed): r for r in rows}
    print("\nseed  fsr<aodv delay (manet, vanet)  aodv max nrl (vanet)  dsr min nrl (manet)")
    for s in seeds:
        d = {(m, fam): mean([by[m, p, s].e2ed_ms for p in (fam, "mod-" + fam)])
             for m, _, _ in CELLS for fam in ("aodv", "fsr")}
        vanet = {p: by["80211p", p, s].nrl or 0.0 for p in PROTOCOLS}
        manet = {p: by["80211", p, s].nrl if by["80211", p, s].nrl is not None else math.inf
                 for p in PROTOCOLS}
        print(f"{s:4d}  {d['80211', 'fsr'] < d['80211', 'aodv']!s:>5} "
              f"{d['80211p', 'fsr'] < d['80211p', 'aodv']!s:>5}"
              f"{max(vanet, key=vanet.get):>24}{min(manet, key=manet.get):>21}")


if __name__ == "__main__":
    main()
