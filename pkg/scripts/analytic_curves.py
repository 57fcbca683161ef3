"""Closed-form connectivity and link-duration curves, as CSV plus an optional PNG."""

import argparse
import csv
import math
from pathlib import Path

from adhocsim import analytics as an


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--range", type=float, default=250.0)
    ap.add_argument("--out-dir", default="results/analytics")
    ap.add_argument("--plot", action="store_true", help="also render curves.png (needs matplotlib)")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    densities = [k / 1000 for k in range(41)]
    conn = an.connectivity_curve(densities, args.range)
    speeds = [2.0, 7.0, 15.0, 30.0]
    dur = an.duration_curve(speeds, args.range)
    write_csv(conn, out / "connectivity.csv")
    write_csv(dur, out / "link_duration.csv")
    print(f"wrote {out / 'connectivity.csv'} and {out / 'link_duration.csv'}")

    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
        a.plot([r["density_per_m"] * 1000 for r in conn], [r["p_nonempty"] for r in conn])
        a.set_xlabel("vehicles per km")
        a.set_ylabel("P(at least one vehicle in range)")
        for direction in (an.SAME, an.OPPOSITE):
            for v1 in speeds:
                pts = [(r["v2_mps"], r["duration_s"]) for r in dur
                       if r["direction"] == direction and r["v1_mps"] == v1
                       and not math.isinf(r["duration_s"])]
                b.plot(*zip(*pts), marker="o", ls="-" if direction == an.SAME else "--",
                       label=f"{direction}, v1={v1:g}")
        b.set_yscale("log")
        b.set_xlabel("v2 (m/s)")
        b.set_ylabel("link duration (s)")
        b.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(out / "curves.png", dpi=120)
        print(f"wrote {out / 'curves.png'}")


if __name__ == "__main__":
    main()
