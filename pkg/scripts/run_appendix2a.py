#!/usr/bin/env python3
"""Full pipeline run on the quadratic-diffusion line example.

Builds the Q-matrix, solves the invariant density, evolves a Gaussian
initial state, and writes H-curves plus the check summary under
results/appendix2a/.
"""

import pathlib
import sys

from kinbench.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(main(["run", str(HERE / "scenarios" / "appendix2a.json"),
                   *sys.argv[1:]]))
