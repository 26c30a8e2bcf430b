"""Pick each program's direct share of ε by minimizing the full-semantics size.

Runs on a seed disjoint from the benchmark default so the frozen shares in
``programs.py`` are not fitted to the evaluation data.
"""

import argparse
import json

from conformal_absint.bench import ExperimentConfig, run_suite

GRID = (0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 1.0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--suite", default="mnist")
    ap.add_argument("--seed", type=int, default=1000)
    ap.add_argument("--trials", type=int, default=2)
    ap.add_argument("--n-test", type=int, default=2000)
    args = ap.parse_args()
    base = ExperimentConfig(suite=args.suite, seed=args.seed, trials=args.trials, n_test=args.n_test, semantics=["full"])
    best = {}
    for p in base.selected():
        sizes = {}
        for frac in GRID:
            cfg = ExperimentConfig(**{**base.to_dict(), "programs": [p.name], "eps0": frac * base.epsilon})
            row = run_suite(cfg).rows[0]
            sizes[frac] = row.avg_size
        best[p.name] = min(sizes, key=lambda f: (sizes[f], -f))
        print(p.name, {f: round(s, 3) for f, s in sizes.items()}, "->", best[p.name], flush=True)
    print(json.dumps(best, indent=2))


if __name__ == "__main__":
    main()
