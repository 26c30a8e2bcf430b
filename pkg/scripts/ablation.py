"""Sweep noise η or error bound ε on the digit suite and report suite-averaged sizes.

Sizes are expected to be nondecreasing in η and nonincreasing in ε; the script
prints each semantics' trend and exits nonzero when one is violated.

    python3 scripts/ablation.py eta --trials 1 --n-test 1000
    python3 scripts/ablation.py eps --out results/eps.json
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from conformal_absint.bench import SEMANTICS, ExperimentConfig, run_suite

GRIDS = {
    "eta": (0.0, 0.1, 0.2, 0.3, 0.4, 0.5),
    "eps": (0.05, 0.1, 0.15, 0.2, 0.25, 0.3),
}


def sweep(kind: str, base: ExperimentConfig, grid=None) -> dict:
    """Suite-averaged (size, coverage) per grid value and semantics."""
    field = "eta" if kind == "eta" else "epsilon"
    out = {}
    for v in grid or GRIDS[kind]:
        cfg = ExperimentConfig(**{**base.to_dict(), field: v})
        rep = run_suite(cfg)
        out[v] = {
            s: {
                "avg_size": float(np.mean([r.avg_size for r in rep.rows if r.semantics == s and not r.failure])),
                "coverage": float(np.mean([r.coverage for r in rep.rows if r.semantics == s and not r.failure])),
            }
            for s in cfg.semantics
        }
        print(f"{field}={v:g}  " + "  ".join(f"{s} {d['avg_size']:.2f} ({d['coverage']:.3f})" for s, d in out[v].items()), flush=True)
    return out


def trend_ok(kind: str, table: dict, semantics: str, tol: float = 1e-9) -> bool:
    sizes = [table[v][semantics]["avg_size"] for v in sorted(table)]
    steps = np.diff(sizes)
    return bool(np.all(steps >= -tol)) if kind == "eta" else bool(np.all(steps <= tol))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("kind", choices=sorted(GRIDS))
    ap.add_argument("--trials", type=int, default=1)
    ap.add_argument("--n-test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args()
    base = ExperimentConfig(suite="mnist", trials=args.trials, n_test=args.n_test, seed=args.seed)
    table = sweep(args.kind, base)
    ok = True
    for s in SEMANTICS:
        good = trend_ok(args.kind, table, s)
        ok &= good
        print(f"{s}: trend {'ok' if good else 'VIOLATED'}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps({str(k): v for k, v in table.items()}, indent=2, sort_keys=True) + "\n")
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
