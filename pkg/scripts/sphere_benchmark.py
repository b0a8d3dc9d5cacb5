"""FFI vs teaching-only optimizer on the sphere function over many seeds.

    python scripts/sphere_benchmark.py --dims 2 5 --seeds 20 --out results/sphere.csv
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from ffibp.optimizer import FFIConfig, init_population, optimize, sphere

SETTINGS = {2: (20, 200), 5: (30, 300)}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--dims", type=int, nargs="+", default=[2, 5])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--first-seed", type=int, default=42)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    rows = []
    for dim in args.dims:
        pop, iters = SETTINGS.get(dim, (30, 300))
        for mode in ("ffi", "tlo"):
            finals, initials = [], []
            for seed in range(args.first_seed, args.first_seed + args.seeds):
                cfg = FFIConfig(population_size=pop, max_iterations=iters, bounds=[(-5.0, 5.0)] * dim, rng_seed=seed, mode=mode)
                initials.append(init_population(cfg, sphere).best.objective)
                res = optimize(sphere, cfg)
                finals.append(res.trace[-1])
                rows.append((dim, mode, seed, initials[-1], finals[-1], res.evaluations))
            print(
                f"{dim}-D {mode}: median initial {np.median(initials):.3g}, "
                f"median final {np.median(finals):.3g}, worst final {np.max(finals):.3g}"
            )

    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dim", "mode", "seed", "initial_best", "final_best", "evaluations"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
