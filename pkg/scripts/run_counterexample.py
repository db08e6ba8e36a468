#!/usr/bin/env python3
"""Full run on f(x) = sqrt(1 + x^2): negative curvature without uniform averages.

The averaged curvature along rays tends to zero and no stable-bundle ladder
converges, so the verdict comes out not_anosov_consistent.  Writes
results/counterexample-sqrt/.
"""
import sys

from warpflow.cli import main

if __name__ == "__main__":
    sys.exit(
        main(
            [
                "anosov-check",
                "--scenario", "counterexample-sqrt",
                "--n", "2",
                "--seed", "0",
                "--workers", "0",
                "--out", "results/counterexample-sqrt",
            ]
        )
        or main(
            [
                "curvature",
                "--scenario", "counterexample-sqrt",
                "--n", "2",
                "--samples", "500",
                "--seed", "0",
                "--out", "results/counterexample-sqrt",
            ]
        )
    )
