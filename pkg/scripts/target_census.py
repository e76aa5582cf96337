#!/usr/bin/env python3
"""Census of target-class selection over the random problem generators.

Draws problems from each generator family, runs the analyzer on each, and
tabulates which back end wins plus the rejection reasons the more specific
classes gave along the way.  Useful as a sanity check that the generators
land in the classes they are named for.

Usage: python scripts/target_census.py --per-family 200
"""

import argparse
from collections import Counter

import numpy as np

from dcpc import randgen
from dcpc.analyzer import select_target


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--per-family", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    families = [("pwl", randgen.random_pwl_problem),
                ("qp", randgen.random_qp_problem),
                ("cone", randgen.random_cone_problem)]

    for name, make in families:
        rng = np.random.default_rng(args.seed)
        wins = Counter()
        rejections = Counter()
        for _ in range(args.per_family):
            report = select_target(make(rng))
            wins[report.target.name if report.target else "none"] += 1
            for target, reason in report.reasons:
                if reason.startswith("rejected: "):
                    rejections[(target.name, reason[len("rejected: "):])] += 1
        print(f"family {name!r} ({args.per_family} draws)")
        for target, count in wins.most_common():
            print(f"  target {target:<5} x{count}")
        for (target, reason), count in rejections.most_common():
            print(f"  {target} rejected x{count}: {reason}")
        print()


if __name__ == "__main__":
    main()
