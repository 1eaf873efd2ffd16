#!/usr/bin/env python3
"""Run the pinned-instance benchmark and print the JSON report.

Equivalent to `spectree bench --json`, kept as a script so the numbers
are one command away during performance work.
"""

import argparse
import json

from spectree.benchmark import run_benchmark


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--repeat", type=int, default=1,
                        help="repeat and report each run (JIT warm-up shows in run 1)")
    args = parser.parse_args()
    for i in range(args.repeat):
        report = run_benchmark(frames=args.frames, seed=args.seed)
        print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
