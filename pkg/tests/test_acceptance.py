"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line straight to the
terminal (outside pytest's capture) before asserting.
"""
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import norm

from conformal_absint.bench import ExperimentConfig, compare_abstract_modes, report_to_json, run_suite
from conformal_absint.conformal import pac_calibrate
from conformal_absint.demo import fig1_walkthrough, fig7_walkthrough
from conformal_absint.domain import BOTTOM, Interval
from conformal_absint.oracles import property_suites, soundness_suite
from conformal_absint.programs import DETECTION_BINARIZED, DETECTION_PROGRAMS, MNIST_PROGRAMS

CONFIGS = Path(__file__).parent.parent / "configs"
PAIRWISE = [p.name for p in MNIST_PROGRAMS if p.pairwise]


@pytest.fixture
def report_line(capsys):
    def emit(n: int, ok: bool, detail: str = ""):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return emit


@pytest.fixture(scope="module")
def mnist_report():
    t0 = time.perf_counter()
    rep = run_suite(ExperimentConfig.load(CONFIGS / "mnist.json"))
    return rep, time.perf_counter() - t0


def test_criterion_1_transformer_soundness(report_line):
    t0 = time.perf_counter()
    results = soundness_suite(10_000, seed=0)
    dt = time.perf_counter() - t0
    failures = sum(r.failures for r in results)
    assert all(r.cases == 10_000 for r in results)
    ok = failures == 0 and dt < 60
    report_line(1, ok, f"{len(results)} transformers, {failures} failures, {dt:.1f}s")
    assert ok


def test_criterion_2_galois_and_lattice(report_line):
    t0 = time.perf_counter()
    results = property_suites(10_000, seed=0)
    dt = time.perf_counter() - t0
    failures = sum(r.failures for r in results)
    assert all(r.cases >= 10_000 for r in results)
    ok = failures == 0 and dt < 30
    report_line(2, ok, f"{[r.name for r in results]}, {failures} failures, {dt:.1f}s")
    assert ok


def test_criterion_3_pac_monte_carlo(report_line):
    # scores are standard normal, so the true miscoverage of τ is Φ(τ)
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(200):
        tau = pac_calibrate(rng.standard_normal(500), 0.1, 0.05).tau
        bad += norm.cdf(tau) > 0.1
    frac = bad / 200
    dt = time.perf_counter() - t0
    ok = frac <= 0.10 and dt < 120
    report_line(3, ok, f"fraction of draws with miscoverage > 0.1: {frac:.3f}")
    assert ok


def test_criterion_4_end_to_end_coverage(mnist_report, report_line):
    rep, dt = mnist_report
    assert not rep.failed
    names = {r.program for r in rep.rows}
    assert names == {p.name for p in MNIST_PROGRAMS}
    assert {r.semantics for r in rep.rows} == {"direct", "compositional", "full"}
    worst = min(rep.rows, key=lambda r: r.coverage)
    ok = worst.coverage >= 0.87 and dt < 600
    report_line(4, ok, f"min coverage {worst.coverage:.4f} ({worst.program}, {worst.semantics}), {dt:.0f}s")
    assert ok


def test_criterion_5_full_dominance(mnist_report, report_line):
    rep, _ = mnist_report
    ratios, offenders = {}, []
    for p in MNIST_PROGRAMS:
        full = rep.row(p.name, "full")
        if full.empty_meets:
            continue
        best = min(rep.row(p.name, "direct").avg_size, rep.row(p.name, "compositional").avg_size)
        ratios[p.name] = full.avg_size / best
        if full.avg_size > 1.02 * best:
            offenders.append(f"{p.name} {ratios[p.name]:.3f}")
    mean_ratio = sum(ratios.values()) / len(ratios)
    ok = not offenders
    report_line(
        5, ok,
        f"mean full/min ratio {mean_ratio:.3f} over {len(ratios)} programs; over 1.02: {offenders or 'none'}",
    )
    assert ok


def test_criterion_6_set_vs_interval(report_line):
    cfg = ExperimentConfig.load(CONFIGS / "compare_modes.json")
    rep = compare_abstract_modes(cfg)
    assert not rep.failed
    loop_free = [p.name for p in MNIST_PROGRAMS if p.loop_free]
    assert len(loop_free) == 8 and set(rep.extras) == set(loop_free)
    le = min(d["set_le_interval"] for d in rep.extras.values())
    times = {
        p: (rep.row(p, "compositional", "interval").runtime, rep.row(p, "compositional", "set").runtime)
        for p in PAIRWISE
    }
    ok = le == 1.0 and all(i <= s for i, s in times.values())
    detail = ", ".join(f"{p}: set/interval runtime {s / i:.2f}x" for p, (i, s) in times.items())
    report_line(6, ok, f"set <= interval on {le:.0%} of examples; {detail}")
    assert ok


def test_criterion_7_detection_coverage(report_line):
    t0 = time.perf_counter()
    cfg = ExperimentConfig.load(CONFIGS / "detection.json")
    rep = run_suite(cfg)
    dt = time.perf_counter() - t0
    assert not rep.failed
    assert cfg.trials == 5 and cfg.n_cal == cfg.n_test == 2476 and cfg.eps0 == 0.005
    assert {r.program for r in rep.rows} == {p.name for p in DETECTION_PROGRAMS + DETECTION_BINARIZED}
    binarized = {p.name for p in DETECTION_BINARIZED}
    assert all(r.uncertain is not None for r in rep.rows if r.program in binarized)
    worst = min(rep.rows, key=lambda r: r.coverage)
    ok = worst.coverage >= 0.87 and dt < 900
    mean_unc = np.mean([r.uncertain for r in rep.rows if r.program in binarized and r.semantics == "full"])
    report_line(
        7, ok,
        f"min coverage {worst.coverage:.4f} ({worst.program}, {worst.semantics}); "
        f"mean uncertain fraction (full) {mean_unc:.3f}; {dt:.0f}s",
    )
    assert ok


def test_criterion_8_golden_walkthroughs(report_line):
    t0 = time.perf_counter()
    f1 = fig1_walkthrough()
    f7 = fig7_walkthrough()
    dt = time.perf_counter() - t0
    fig1_ok = (f1.ground_truth, f1.standard, f1.direct, f1.compositional, f1.full) == (
        2, 1, Interval(0, 2), Interval(1, 3), Interval(1, 2)
    )
    trajectory_ok = f7.iterations[1][1][0] is BOTTOM
    fig7_ok = f7.k == Interval(2, 2) and f7.v == Interval(3, 9) and trajectory_ok
    ok = fig1_ok and fig7_ok and dt < 1
    report_line(
        8, ok,
        f"fig1 {'exact' if fig1_ok else 'mismatch'}; fig7 k={tuple(f7.k)} v={tuple(f7.v)} "
        f"(expected k=(2, 2) v=(3, 9)), bottom calibration store {'seen' if trajectory_ok else 'missing'}",
    )
    assert ok


def test_criterion_9_determinism(mnist_report, report_line):
    rep, _ = mnist_report
    again = run_suite(ExperimentConfig.load(CONFIGS / "mnist.json"))
    a, b = report_to_json(rep).encode(), report_to_json(again).encode()
    ok = a == b
    report_line(9, ok, f"{len(a)} bytes, identical={a == b}")
    assert ok
