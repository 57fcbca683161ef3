"""Check simulated highway segment occupancy against the Poisson model.

Runs several segment lengths at the reference traffic (0.1 veh/s per lane,
20 m/s) plus the equally spaced convoy, which must fail.
"""

import argparse

from adhocsim import analytics as an
from adhocsim.mobility import HighwayConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lam", type=float, default=0.1)
    ap.add_argument("--speed", type=float, default=20.0)
    ap.add_argument("--samples", type=int, default=25_000, help="observation times per lane")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--segments", default="100,200,400,800")
    args = ap.parse_args()

    print(f"{'segment':>8} {'phi':>7} {'mean':>8} {'var/mean':>9} {'chi2 p':>8}  status")
    for seg in (float(s) for s in args.segments.split(",")):
        hw = HighwayConfig(road_length=max(1000.0, 2 * seg), arrival_rate=args.lam,
                           speed=args.speed)
        start = (hw.road_length - seg) / 2
        counts = an.sample_occupancy(hw, start, seg, args.samples, args.seed)
        phi = an.steady_state_phi(args.lam, args.speed, seg)
        rep = an.validate_occupancy(counts, phi)
        if rep.mean is None:
            print(f"{seg:8.0f} {phi:7.3f} {'-':>8} {'-':>9} {'-':>8}  {rep.status} ({rep.samples} samples)")
            continue
        pval = f"{rep.p_value:.3f}" if rep.p_value is not None else "-"
        print(f"{seg:8.0f} {phi:7.3f} {rep.mean:8.4f} {rep.dispersion:9.4f} {pval:>8}  {rep.status}")

    conv = an.validate_occupancy(an.convoy_counts(args.speed / args.lam, 400.0, 100_000), 2.0)
    print(f"convoy (spacing {args.speed / args.lam:g} m): mean {conv.mean:.4f}, "
          f"var/mean {conv.dispersion:.4f} -> {conv.status}")


if __name__ == "__main__":
    main()
