#!/usr/bin/env python3
"""Full consistency run on the periodic warp g(x) = 3x - cos x + sin x.

Reproduces the headline positive example: conditions report, theoretical
case bounds, averaged-curvature series over a 112-point start-data sample,
and the contraction-envelope verdict.  Writes results/anosov-warped-torus/.
"""
import sys

from warpflow.cli import main

if __name__ == "__main__":
    sys.exit(
        main(
            [
                "anosov-check",
                "--scenario", "anosov-warped-torus",
                "--a", "3", "--n", "2",
                "--seed", "0",
                "--workers", "0",
                "--out", "results/anosov-warped-torus",
            ]
        )
        or main(
            [
                "scenario-bounds",
                "--scenario", "anosov-warped-torus",
                "--a", "3", "--n", "2",
                "--out", "results/anosov-warped-torus",
            ]
        )
    )
