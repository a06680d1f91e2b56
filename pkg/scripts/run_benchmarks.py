#!/usr/bin/env python3
"""Run the shipped benchmark configs and print where the artifacts landed.

Usage: python scripts/run_benchmarks.py [--with-large]
"""

import sys
from pathlib import Path

from clpd.cli import main as bench_main

CONFIGS = ["example1.cfg", "example1_n300.cfg", "example2.cfg", "ode_q2p3.cfg"]
LARGE = ["example1_n2000.cfg"]


def main() -> int:
    here = Path(__file__).parent
    names = CONFIGS + (LARGE if "--with-large" in sys.argv[1:] else [])
    worst = 0
    for name in names:
        print(f"== bench run {name}")
        code = bench_main(["run", str(here / name)])
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
