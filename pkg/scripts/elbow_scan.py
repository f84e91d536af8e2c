"""SSE elbow and silhouette scan on real patch constants.

    python3 scripts/elbow_scan.py /data/constants --patches 7.27 7.28 7.29 7.30 7.31 --out runs/elbow

``root`` holds one subdirectory per patch with hero_abilities.json,
abilities.json and heroes.json (the OpenDota constants files). The
``PATCHCLUST_REAL_CONSTANTS`` environment variable is used when ``root`` is
omitted.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from patchclust.clustering import select_k, stack_tables, write_selection_csv
from patchclust.ingest import build_feature_table


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("root", nargs="?", default=os.environ.get("PATCHCLUST_REAL_CONSTANTS"))
    parser.add_argument("--patches", nargs="+", default=["7.27", "7.28", "7.29", "7.30", "7.31"])
    parser.add_argument("--k-min", type=int, default=40)
    parser.add_argument("--k-max", type=int, default=75)
    parser.add_argument("--sse-max", type=int, default=150, help="extend the SSE-only curve up to this K")
    parser.add_argument("--restarts", type=int, default=10)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", type=Path)
    args = parser.parse_args(argv)
    if not args.root:
        parser.error("no constants directory given and PATCHCLUST_REAL_CONSTANTS is unset")

    tables = [build_feature_table(Path(args.root) / p, p)[0] for p in args.patches]
    columns, X = stack_tables(tables)
    print(f"{X.shape[0]} abilities x {X.shape[1]} columns from {', '.join(args.patches)}", file=sys.stderr)
    k_max_sse = min(args.sse_max, len(X))
    report = select_k(
        X, args.k_min, args.k_max, seed=args.seed, restarts=args.restarts,
        sse_ks=range(2, k_max_sse + 1, 4), columns=columns,
        progress=lambda k, sse, sil: print(
            f"K={k:4d} SSE={sse:12.2f}" + ("" if sil is None else f" silhouette={sil:.4f}"), file=sys.stderr
        ),
    )
    print(f"chosen K = {report.chosen_k}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_selection_csv(report, args.out / "k_selection.csv")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
