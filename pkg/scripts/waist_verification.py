#!/usr/bin/env python3
"""End-to-end waist verification: on round and l_p spheres, locate the best
fiber of the coordinate projection and check its tube measure against the
closed-form lower bound.

Usage:
    python scripts/waist_verification.py [--samples 1e6] [--seed 7]
"""

import argparse

import numpy as np

from waistlab.bounds import BoundInputs, waist_lower_bound
from waistlab.cone import best_fiber
from waistlab.norms import analytic_modulus_curve, parse_norm


def run_case(norm_text: str, eps: float, samples: int, fiber_points: int,
             seed: int) -> bool:
    norm = parse_norm(norm_text)
    modulus = analytic_modulus_curve(norm)
    bound = waist_lower_bound(BoundInputs(n=norm.sphere_dim, k=1, eps=eps,
                                          modulus=modulus)).value
    f = np.zeros((1, norm.dim))
    f[0, -1] = 1.0
    z_grid = [np.array([z]) for z in np.arange(-0.8, 0.801, 0.1)]
    z_star, est, _ = best_fiber(norm, f, eps, z_grid, samples, fiber_points,
                                seed)
    ok = est.mean >= bound - 3.0 * est.std_error
    print(f"{'PASS' if ok else 'FAIL'}  {norm_text:12s} eps={eps:.2f}  "
          f"tube={est.mean:.4f} (+-{est.std_error:.4f})  bound={bound:.3e}  "
          f"z*={z_star[0]:+.2f}")
    return ok


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--samples", type=lambda s: int(float(s)),
                        default=1_000_000)
    parser.add_argument("--fiber-points", type=lambda s: int(float(s)),
                        default=10_000)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    cases = [
        ("euclidean:3", 0.5),
        ("euclidean:5", 0.5),
        ("lp:1.5:3", 0.3),
        ("lp:1.5:5", 0.5),
        ("lp:4:3", 0.3),
        ("lp:4:5", 0.5),
    ]
    ok = all(run_case(norm, eps, args.samples, args.fiber_points, args.seed)
             for norm, eps in cases)
    raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()
