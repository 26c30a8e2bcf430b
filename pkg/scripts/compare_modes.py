"""Interval vs set abstractions on the loop-free digit programs.

Prints paired sizes, per-example runtimes, and the fraction of examples where
the set-mode output is no larger than (and contained in) the interval output.
"""

import argparse

from conformal_absint.bench import ExperimentConfig, compare_abstract_modes, report_to_text


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=1)
    ap.add_argument("--n-test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = ExperimentConfig(trials=args.trials, n_test=args.n_test, seed=args.seed, semantics=["compositional"])
    rep = compare_abstract_modes(cfg)
    print(report_to_text(rep))
    for name, d in rep.extras.items():
        print(f"{name:<45} set<=interval {d['set_le_interval']:.3f}  set within interval {d['set_within_interval']:.3f}")


if __name__ == "__main__":
    main()
