#!/usr/bin/env python3
"""Jensen-gap statistics for extracted gradient measures against the
builtin integrand families.

For every seeded map the gap of each integrand is recorded; convex and
rank-one-convex integrands should never go measurably negative, and the
determinant (a null Lagrangian) should sit at zero to rounding.

Usage:
    python scripts/jensen_suite.py --refine 1 --maps 50 --quadratics 20
"""
import argparse
import sys

import numpy as np

from lamlab.convexity import builtin_suite, determinant, jensen_gap
from lamlab.geometry import build_unit_cube_triangulation
from lamlab.pwa import extract_measure, random_map


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--refine", type=int, default=1)
    ap.add_argument("--maps", type=int, default=50)
    ap.add_argument("--quadratics", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    tri = build_unit_cube_triangulation(args.n, args.refine)
    rng = np.random.default_rng(args.seed)
    suite = builtin_suite(rng, args.n, random_quadratics=args.quadratics)
    worst = {}
    det_extreme = 0.0
    for seed in range(args.maps):
        mu = extract_measure(random_map(tri, np.random.default_rng(seed)))
        for psi in suite:
            gap = jensen_gap(psi, mu)
            key = (psi.name, psi.tag)
            worst[key] = min(worst.get(key, np.inf), gap)
        det_extreme = max(det_extreme, abs(jensen_gap(determinant(), mu)))

    print(f"{args.maps} maps on N={args.n} refine={args.refine}; "
          f"{len(suite)} integrands")
    print(f"{'integrand':>24} {'class':>18} {'worst gap':>14}")
    for (name, tag), gap in sorted(worst.items()):
        print(f"{name:>24} {tag:>18} {gap:>14.3e}")
    print(f"\n|det gap| extreme: {det_extreme:.3e}")
    negative = [k for k, g in worst.items()
                if k[1] in ("convex", "rank-one-convex") and g < -1e-9]
    if negative:
        print("UNEXPECTED NEGATIVE GAPS:", negative)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
