"""Generate a PCA training set of displacement fields.

    python3 scripts/make_training_set.py --out train/ --count 500 --depth 512 --width 64
    pcaglue train train/ --out basis.elpb

Fields cycle through the three motion kinds so each gets a third of the set:

* axial compression: peak displacement uniform in [0.1, 1] x min(8, m/8)
  samples, random sign; half of them carry a circular inclusion of random
  radius (up to 0.15 m), position and stiffness ratio in [1.5, 4].
* in-plane rotation: edge axial displacement up to min(4, m/8) samples,
  also capped so the lateral term stays within l/8.
* lateral shift: up to min(2, l/8) lines.

These ranges are choices of this tool, not measured probe motions. By
default ground-truth fields are written; ``--estimated`` instead simulates
every pair and stores the full-DP plus refinement estimate, which is slower
but trains on fields with realistic estimation noise.
"""

import argparse
import sys

from pcaglue.cli import main as cli_main


def main(argv=None):
    ap = argparse.ArgumentParser(description="Write a training set of .eldf displacement fields.")
    ap.add_argument("--out", required=True)
    ap.add_argument("--count", type=int, default=500)
    ap.add_argument("--depth", type=int, default=512)
    ap.add_argument("--width", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--estimated", action="store_true")
    args = ap.parse_args(argv)
    cmd = ["simulate", "--training-set", str(args.count), "--depth", str(args.depth),
           "--width", str(args.width), "--seed", str(args.seed), "--out", args.out]
    if args.estimated:
        cmd += ["--estimated", "--noise-db", "30"]
    return cli_main(cmd)


if __name__ == "__main__":
    sys.exit(main())
