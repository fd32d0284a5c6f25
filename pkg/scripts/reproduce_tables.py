"""Run both convergence tables and print them next to the published errors.

    python3 scripts/reproduce_tables.py                  # CI profile, u0 = 0 and bump
    python3 scripts/reproduce_tables.py --full --u0 bump # levels 1-5, J = 400
"""
import argparse
import logging
import time
from pathlib import Path

from sbbm import experiments as ex

PUBLISHED = {
    "table1": [1.2576, 7.8161e-1, 4.0850e-1, 2.28818e-1, 1.119194e-1],
    "table2": [1.25228, 7.72239e-1, 4.02038e-1, 2.21259e-1, 1.11343e-1],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--full", action="store_true", help="levels 1-5 with 400 samples")
    ap.add_argument("--u0", choices=["zero", "bump", "both"], default="both")
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    starts = ["zero", "bump"] if args.u0 == "both" else [args.u0]
    args.out.mkdir(parents=True, exist_ok=True)
    for table, published in PUBLISHED.items():
        for u0 in starts:
            cfg = ex.profile(table if args.full else f"ci-{table}", u0=None if u0 == "zero" else u0)
            t0 = time.perf_counter()
            rows = ex.run_study(cfg)
            tag = f"{table}_{u0}{'' if args.full else '_ci'}"
            ex.write_csv(args.out / f"{tag}.csv", rows)
            print(f"\n{tag}  ({time.perf_counter() - t0:.0f}s)")
            print(f"{'level':>5} {'error':>12} {'order':>7} {'stderr':>10} {'published':>11} {'ratio':>7}")
            for r, p in zip(rows, published):
                order = "" if r.order is None else f"{r.order:.4f}"
                print(f"{r.level:>5} {r.error:>12.6g} {order:>7} {r.stderr:>10.3g} {p:>11.6g} {r.error / p:>7.3f}")


if __name__ == "__main__":
    main()
