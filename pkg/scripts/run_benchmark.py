#!/usr/bin/env python3
"""Sweep pipeline throughput across crowd sizes.

Usage: python3 scripts/run_benchmark.py [frames]
"""

import io
import sys
from contextlib import redirect_stdout

from distwatch.cli import main as cli_main


def main():
    frames = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
    print(f"{'persons':>8} {'pairs':>8} {'fps':>10}")
    for persons in (0, 5, 10, 25, 50, 100):
        buf = io.StringIO()
        with redirect_stdout(buf):
            cli_main(["bench", "--bench-frames", str(frames),
                      "--persons-per-frame", str(persons)])
        out = buf.getvalue()
        fps = next(l for l in out.splitlines() if l.startswith("fps=")).split("=")[1]
        pairs = persons * (persons - 1) // 2
        print(f"{persons:>8} {pairs:>8} {fps:>10}")


if __name__ == "__main__":
    main()
