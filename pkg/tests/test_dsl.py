import pytest
from hypothesis import given
from hypothesis import strategies as st

from conformal_absint.demo import COUNT_LEFT, fig1_walkthrough
from conformal_absint.domain import TOP, TT, AbstractList, Interval, IntSet, gamma_contains
from conformal_absint.dsl import (
    INT,
    DSLTypeError,
    MissingPredictorError,
    MLOracle,
    ParseError,
    UnboundVariableError,
    eval_compositional,
    parse_program,
    typecheck,
)

# digits stand in for images: the label is the value itself
IDENTITY = MLOracle(ground_truth=lambda im: im, predict=lambda im: im)
MISREAD_3 = MLOracle(ground_truth=lambda im: im, predict=lambda im: 8 if im == 3 else im)

SUM = "(foldr add (map classify X) 0)"


def test_typecheck_count_program():
    assert typecheck(parse_program(COUNT_LEFT, "image")) == INT


def test_typecheck_rejects_bool_operand():
    with pytest.raises(DSLTypeError):
        parse_program("(add X true)", "int")


def test_typecheck_input():
    assert parse_program("X", "int").output_type == INT


def test_parse_errors():
    with pytest.raises(ParseError):
        parse_program("(add X 1", "int")
    with pytest.raises(ParseError):
        parse_program("(add X 1))", "int")


def test_unbound_variable():
    with pytest.raises(UnboundVariableError):
        parse_program("(map (lam d (add e 1)) (map classify X))")


def test_ground_truth_constant():
    assert parse_program("0", "int").eval_ground_truth(17, {}) == 0


def test_ground_truth_sum():
    p = parse_program(SUM)
    assert p.eval_ground_truth([3, 4], {"classify": IDENTITY}) == 7


def test_standard_sum_with_misread():
    p = parse_program(SUM)
    assert p.eval_standard([3, 4], {"classify": MISREAD_3}) == 12


def test_standard_equals_ground_truth_without_ml():
    p = parse_program("(add X 3)", "int")
    assert p.eval_standard(4, {}) == p.eval_ground_truth(4, {}) == 7


def test_count_program_on_fixture():
    r = fig1_walkthrough()
    assert (r.ground_truth, r.standard) == (2, 1)
    assert r.compositional == Interval(1, 3)


def test_compositional_input():
    v = eval_compositional(parse_program("X", "int"), 5, {})
    assert v == Interval(5, 5)


def test_compositional_foldr_sure_and_unsure():
    p = parse_program(SUM)
    lst = AbstractList([(Interval(2, 2), TT), (Interval(3, 3), TOP)])
    assert eval_compositional(p, [0, 0], {"(map classify X)": lambda xs: lst}) == Interval(2, 5)


def test_missing_predictor():
    with pytest.raises(MissingPredictorError):
        eval_compositional(parse_program(SUM), [1], {})


def test_site_structure():
    p = parse_program(SUM)
    assert p.site_keys == ["(map classify X)"]
    assert p.direct_sites == [p.root.nid]
    # no ML component, so no direct site either
    assert parse_program("(add X 1)", "int").direct_sites == []


def test_set_mode_constant():
    v, _ = parse_program("(add X 1)", "int").eval_abstract(2, {}, set_mode=True)
    assert v == IntSet({3})


PROGRAMS = [
    SUM,
    "(foldr max (map classify X) 0)",
    "(length (filter (lam d (lt d 6)) (map classify X)))",
    "(foldr (lam (p acc) (max (absdiff (fst p) (snd p)) acc)) (pairs (map classify X)) 0)",
]


@given(
    st.sampled_from(PROGRAMS),
    st.lists(st.tuples(st.integers(0, 9), st.integers(0, 2)), min_size=1, max_size=5),
)
def test_compositional_contains_truth_when_sets_cover(src, items):
    # each digit d predicted as the interval (d - r, d + r) clipped to 0..9
    p = parse_program(src)
    digits = [d for d, _ in items]
    lst = AbstractList([(Interval(max(0, d - r), min(9, d + r)), TT) for d, r in items])
    v = eval_compositional(p, digits, {"(map classify X)": lambda xs: lst})
    assert gamma_contains(v, p.eval_ground_truth(digits, {"classify": IDENTITY}))
