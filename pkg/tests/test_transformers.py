import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conformal_absint import transformers as T
from conformal_absint.domain import (
    FF,
    TOP,
    TT,
    AbstractList,
    AbstractTuple,
    CatSet,
    Interval,
    IntSet,
    KindError,
    gamma_contains,
    gamma_enumerate,
)
from conformal_absint.oracles import TransformerCase, check_transformer, rand_int

I = Interval


def L(*entries):
    return AbstractList(entries)


def test_int_add():
    assert T.int_add(I(1, 2), I(3, 4)) == I(4, 6)


def test_int_sub():
    # brute force over the four pairs gives {-3, -2, -1}
    assert T.int_sub(I(1, 2), I(3, 4)) == I(-3, -1)


def test_int_mul():
    # endpoint products {-6, -8, 3, 4}
    assert T.int_mul(I(-2, 1), I(3, 4)) == I(-8, 4)


def test_int_min_max_absdiff():
    assert T.int_min(I(1, 5), I(3, 4)) == I(1, 4)
    assert T.int_max(I(1, 5), I(3, 4)) == I(3, 5)
    assert T.int_absdiff(I(1, 5), I(3, 4)) == I(0, 3)


def test_set_mode_arithmetic():
    assert T.int_add(IntSet({1, 3}), IntSet({10})) == IntSet({11, 13})


def test_int_cmp_examples():
    assert T.int_cmp("≥", I(5, 7), I(1, 4)) is TT
    assert T.int_cmp("=", I(3, 3), I(3, 3)) is TT
    assert T.int_cmp(">", I(1, 5), I(3, 4)) is TOP
    assert T.int_cmp("<", I(1, 2), I(3, 4)) is TT
    assert T.int_cmp("eq", I(0, 1), I(5, 6)) is FF


def test_bool_ops():
    assert T.bool_op("∧", TOP, FF) is FF
    assert T.bool_op("∨", TOP, TT) is TT
    assert T.bool_op("¬", TOP) is TOP


def test_bool_op_kind_error():
    with pytest.raises(KindError):
        T.bool_op("and", I(0, 1), TT)


def test_cat_eq():
    assert T.cat_eq(CatSet.of("person"), "person") is TT
    assert T.cat_eq(CatSet.of("person", "car"), "person") is TOP
    assert T.cat_eq(CatSet.of("car"), "person") is FF


def test_map_examples():
    d = I(0, 9)
    assert T.map_(lambda a: I(1, 1), L((d, TT), (d, TOP))) == L((I(1, 1), TT), (I(1, 1), TOP))
    assert T.map_(lambda a: T.int_add(a, I(1, 1)), L((I(2, 3), TT))) == L((I(3, 4), TT))
    assert T.map_(lambda a: a, L()) == L()


def test_filter_examples():
    ge3 = lambda a: T.int_cmp("ge", a, I(3, 3))
    assert T.filter_(ge3, L((I(5, 5), TT), (I(1, 1), TT))) == L((I(5, 5), TT))
    assert T.filter_(ge3, L((I(2, 4), TT))) == L((I(2, 4), TOP))
    assert T.filter_(lambda a: TOP, L((I(2, 4), TOP))) == L((I(2, 4), TOP))


def test_foldr_examples():
    assert T.foldr(T.int_add, L((I(1, 1), TT), (I(2, 2), TT)), I(0, 0)) == I(3, 3)
    assert T.foldr(T.int_add, L((I(1, 1), TOP)), I(0, 0)) == I(0, 1)
    assert T.foldr(T.int_add, L((I(1, 2), TOP), (I(3, 3), TT)), I(0, 0)) == I(3, 5)


def test_pairs_and_product():
    xs = L((I(1, 1), TT), (I(2, 2), TOP), (I(3, 3), TT))
    ps = T.pairs(xs)
    assert [b for _, b in ps] == [TOP, TT, TOP]
    assert ps.entries[1][0] == AbstractTuple((I(1, 1), I(3, 3)))
    assert len(T.product(xs, L((I(0, 0), TT)))) == 3


def test_length():
    xs = L((I(1, 1), TT), (I(2, 2), TOP))
    assert T.length(xs) == I(1, 2)
    assert T.length(xs, set_mode=True) == IntSet({1, 2})


def test_oracle_finds_wrong_transformer():
    # mutation check: a sub transformer with swapped endpoints must be caught
    wrong = lambda a, b: Interval(a.lo - b.lo, a.hi - b.hi) if a.lo - b.lo <= a.hi - b.hi else Interval(0, 0)
    case = TransformerCase(
        "bad sub", lambda rng: (rand_int(rng), rand_int(rng)), lambda a, b: a - b, wrong
    )
    assert not check_transformer(case, 200, 0).ok


ints = st.integers(-8, 8)


@st.composite
def intervals(draw):
    a, b = draw(ints), draw(ints)
    return I(min(a, b), max(a, b))


OPS = [
    (T.int_add, lambda a, b: a + b),
    (T.int_sub, lambda a, b: a - b),
    (T.int_mul, lambda a, b: a * b),
    (T.int_min, min),
    (T.int_max, max),
    (T.int_absdiff, lambda a, b: abs(a - b)),
]


@given(intervals(), intervals(), st.sampled_from(OPS))
def test_interval_arithmetic_is_sound_and_tight(a, b, op):
    abstract, concrete = op
    out = abstract(a, b)
    vals = {concrete(x, y) for x in range(a.lo, a.hi + 1) for y in range(b.lo, b.hi + 1)}
    assert out == I(min(vals), max(vals))


@given(intervals(), intervals(), st.sampled_from(sorted(T.CMP_OPS)))
def test_comparisons_are_exact(a, b, op):
    out = T.int_cmp(op, a, b)
    vals = {T.CMP_OPS[op](x, y) for x in range(a.lo, a.hi + 1) for y in range(b.lo, b.hi + 1)}
    assert set(gamma_enumerate(out)) == vals


@given(st.lists(st.tuples(intervals().filter(lambda i: i.width() <= 2), st.sampled_from([TT, TOP])), max_size=4))
def test_foldr_add_sound(entries):
    xs = AbstractList(entries)
    out = T.foldr(T.int_add, xs, I(0, 0))
    for v in gamma_enumerate(xs, 100_000):
        assert gamma_contains(out, sum(v))


@given(st.sampled_from([TT, FF, TOP]), st.sampled_from([TT, FF, TOP]))
def test_bool_ops_sound(a, b):
    for x, y in itertools.product(gamma_enumerate(a), gamma_enumerate(b)):
        assert gamma_contains(T.bool_and(a, b), x and y)
        assert gamma_contains(T.bool_or(a, b), x or y)
        assert gamma_contains(T.bool_not(a), not x)
