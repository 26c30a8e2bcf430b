import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from conformal_absint.conformal import (
    BudgetError,
    CalibrationError,
    ConformalPredictor,
    ConformalProgram,
    DiscreteDirect,
    Even,
    IntDirect,
    SingleSplit,
    Weighted,
    allocate_epsilon,
    direct_score,
    pac_calibrate,
    pac_k_allowed,
)
from conformal_absint.demo import fig1_walkthrough
from conformal_absint.domain import TOP, Interval, meet
from conformal_absint.dsl import BOOL, INT, MLOracle, parse_program
from conformal_absint.models import ClassifierConformalizer, digit_oracle, gen_digit_dataset


def _pred(tau):
    return ConformalPredictor("t", tau, 0.1, 0.05, 10, 0)


def test_k_allowed_n1000():
    # exact binomial scan: CDF(84) = 0.0485 <= 0.05 < CDF(85) = 0.0607
    assert pac_k_allowed(1000, 0.1, 0.05) == 84


def test_k_allowed_other_sizes():
    assert pac_k_allowed(100, 0.1, 0.05) == 4
    assert pac_k_allowed(500, 0.1, 0.05) == 38
    assert pac_k_allowed(2000, 0.1, 0.05) == 177


def test_k_allowed_too_few_scores():
    # 0.9^5 = 0.59 > 0.05
    assert pac_k_allowed(5, 0.1, 0.05) == -1
    assert pac_calibrate([1, 2, 3, 4, 5], 0.1, 0.05).tau == -math.inf


def test_k_zero_gives_min_score():
    n = 29  # 0.9^29 = 0.047 <= 0.05 < 0.9^28
    assert pac_k_allowed(n, 0.1, 0.05) == 0
    scores = list(np.linspace(1, 2, n))[::-1]
    assert pac_calibrate(scores, 0.1, 0.05).tau == 1.0


def test_zero_epsilon_is_full_set():
    assert pac_k_allowed(100, 0.0, 0.05) == -1


def test_calibrate_errors():
    with pytest.raises(CalibrationError):
        pac_calibrate([], 0.1, 0.05)
    with pytest.raises(CalibrationError):
        pac_calibrate([1.0, float("nan")], 0.1, 0.05)
    with pytest.raises(CalibrationError):
        pac_k_allowed(10, 1.5, 0.05)


def test_direct_score_examples():
    assert direct_score(7, 4, INT) == -3
    assert direct_score(True, True, BOOL) == 1
    assert direct_score(3, True, BOOL) == -1


def test_direct_interval():
    assert IntDirect(_pred(-1.0))(1) == Interval(0, 2)
    assert IntDirect(_pred(0.0))(5) == Interval(5, 5)


def test_direct_full_set_on_bool():
    assert DiscreteDirect(_pred(-math.inf), BOOL)(True) is TOP


def test_count_program_direct_and_full():
    r = fig1_walkthrough()
    assert r.direct == Interval(0, 2)
    assert r.full == Interval(1, 2) == meet(r.direct, r.compositional)


def test_allocate_even():
    p = parse_program("(foldr add (map classify X) 0)")
    b = allocate_epsilon(p, 0.1, 0.05, Even())
    assert b.direct == pytest.approx(0.05)
    assert b.eps("ml:(map classify X)") == pytest.approx(0.05)


def test_allocate_single_split():
    p = parse_program("(length (detect X))", "image")
    b = allocate_epsilon(p, 0.1, 0.05, SingleSplit(0.005, 0.095))
    assert b.direct == 0.005
    assert b.eps("ml:(detect X)") == pytest.approx(0.095)
    assert sum(b.per_site.values()) <= 0.1 + 1e-12


def test_allocate_weighted_over_budget():
    p = parse_program("(foldr add (map classify X) 0)")
    with pytest.raises(BudgetError):
        allocate_epsilon(p, 0.1, 0.05, Weighted({"direct": 0.06, "ml:(map classify X)": 0.06}))


def _digit_program(src):
    data = gen_digit_dataset(600, 0.2, seed=3)
    Z = [data[i : i + 4] for i in range(0, 400, 4)]
    tests = [data[i : i + 4] for i in range(400, 600, 4)]
    cp = ConformalProgram(parse_program(src), {"classify": digit_oracle()}, Z, {"classify": ClassifierConformalizer()})
    return cp, tests


def test_full_without_ml_is_exact():
    p = parse_program("(add X 2)", "int")
    cp = ConformalProgram(p, {}, [1, 2, 3], {})
    b = allocate_epsilon(p, 0.1, 0.05)
    v, empties = cp.full(4, b)
    assert v == Interval(6, 6) and not empties


def test_full_with_no_direct_share_equals_compositional():
    cp, tests = _digit_program("(foldr add (map classify X) 0)")
    b = allocate_epsilon(cp.program, 0.1, 0.05, SingleSplit(0.0, 0.1))
    for x in tests[:10]:
        assert cp.full(x, b)[0] == cp.compositional(x, 0.1, 0.05)


def test_full_is_within_compositional():
    cp, tests = _digit_program("(foldr max (map classify X) 0)")
    b = allocate_epsilon(cp.program, 0.1, 0.05, SingleSplit(0.05, 0.05))
    for x in tests[:10]:
        full, empties = cp.full(x, b)
        comp = cp.compositional_budget(x, b)
        if not empties:
            assert comp.lo <= full.lo and full.hi <= comp.hi


@settings(max_examples=25, deadline=None)
@given(st.integers(50, 2000), st.floats(0.01, 0.3), st.floats(0.01, 0.3))
def test_k_allowed_is_the_largest_valid_k(n, eps, delta):
    k = pac_k_allowed(n, eps, delta)
    if k >= 0:
        assert binom.cdf(k, n, eps) <= delta
    assert binom.cdf(k + 1, n, eps) > delta


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=40, max_size=300), st.floats(0.02, 0.2))
def test_threshold_monotone_in_epsilon(scores, eps):
    # a larger ε never gives a smaller threshold (smaller sets)
    lo = pac_calibrate(scores, eps, 0.05).tau
    hi = pac_calibrate(scores, min(0.99, eps * 1.5), 0.05).tau
    assert hi >= lo


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_at_most_k_scores_below_tau(seed):
    s = np.random.default_rng(seed).normal(size=300)
    c = pac_calibrate(s, 0.1, 0.05)
    assert (s < c.tau).sum() <= c.k_allowed


def test_toy_oracle_direct_program():
    p = parse_program("(add (classify X) 0)", "image")
    oracle = MLOracle(ground_truth=lambda im: im % 10, predict=lambda im: (im + (im % 3 == 0)) % 10)
    cp = ConformalProgram(p, {"classify": oracle}, list(range(200)), {})
    # one in three predictions is off by one, so the radius is 1
    assert cp.direct(5, 0.1, 0.05) == Interval(4, 6)
