#!/usr/bin/env python3
"""Particle-vs-PDE cross validation on the Ornstein-Uhlenbeck example.

Runs 1e5 Euler-Maruyama particles against the uniformized chain and
reports L1 distances per snapshot plus the moment-recovery table.
"""

import pathlib
import sys

from kinbench.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(main(["oracle-compare", str(HERE / "scenarios" / "ou_oracle.json"),
                   *sys.argv[1:]]))
