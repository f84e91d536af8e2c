"""Train NN1/NN2/NN3 on synthetic corpora and print the AUC table per seed.

    python3 scripts/run_synthetic_experiment.py --out runs/synth --seeds 7 8 9

Each seed regenerates the corpus, the split and the initial weights. With
more than one seed a mean/min/max summary is printed at the end.
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

import numpy as np

from patchclust.evaluation import REPORT_DATASETS
from patchclust.experiment import EXPERIMENT_SEED, run_synthetic_experiment
from patchclust.match_data import SyntheticConfig
from patchclust.model import TEST_PROFILE_FACTOR

log = logging.getLogger("run_synthetic_experiment")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--seeds", type=int, nargs="+", default=[EXPERIMENT_SEED])
    parser.add_argument("--n-matches", type=int, default=SyntheticConfig().n_matches)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--profile-factor", type=int, default=TEST_PROFILE_FACTOR,
                        help="divide the full hidden widths by this (1 = full size)")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    table: dict[tuple[str, str], list[float]] = {}
    for seed in args.seeds:
        out = args.out / f"seed{seed}"
        log.info("seed %d -> %s", seed, out)
        result = run_synthetic_experiment(
            SyntheticConfig(n_matches=args.n_matches, seed=seed),
            profile_factor=args.profile_factor,
            epochs=args.epochs,
            seed=seed,
            out_dir=out,
            progress=lambda name, epoch, _h: epoch % 20 == 0 and log.info("  %s epoch %d", name, epoch),
        )
        print(f"seed {seed}")
        print(f"  {'model':6}" + "".join(f"{d:>10}" for d in REPORT_DATASETS) + f"{'ties':>10}")
        for name, report in result.reports.items():
            aucs = [report.datasets[d].auc for d in REPORT_DATASETS]
            ties = report.datasets["test"].tie_fraction
            print(f"  {name.upper():6}" + "".join(f"{a:10.3f}" for a in aucs) + f"{ties:10.3f}")
            for d, a in zip(REPORT_DATASETS, aucs):
                table.setdefault((name, d), []).append(a)

    if len(args.seeds) > 1:
        print(f"summary over {len(args.seeds)} seeds (mean [min, max])")
        for (name, d), vals in sorted(table.items()):
            v = np.asarray(vals)
            print(f"  {name.upper():4} {d:8} {v.mean():.3f} [{v.min():.3f}, {v.max():.3f}]")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
