import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformal_absint.domain import (
    BOTTOM,
    EMPTY,
    FF,
    INT_MAX,
    TOP,
    TT,
    AbstractList,
    AbstractTuple,
    CatSet,
    EnumerationOverflowError,
    Interval,
    IntervalOverflowError,
    IntSet,
    KindError,
    UnsupportedJoinError,
    alpha,
    alpha_set,
    cardinality,
    gamma_contains,
    gamma_enumerate,
    join,
    leq,
    meet,
)


def I(lo, hi):
    return Interval(lo, hi)


def L(*entries):
    return AbstractList(entries)


# ---------------------------------------------------------------------------
# examples


def test_alpha_int():
    assert alpha(7) == I(7, 7)


def test_alpha_bool():
    assert alpha(True) is TT
    assert alpha(False) is FF


def test_alpha_list():
    assert alpha([3, 5]) == L((I(3, 3), TT), (I(5, 5), TT))


def test_alpha_set_mode():
    assert alpha_set(4) == IntSet({4})
    assert alpha_set([1]) == L((IntSet({1}), TT))


def test_gamma_contains_interval():
    assert gamma_contains(I(1, 3), 2)
    assert not gamma_contains(I(1, 3), 4)


def test_gamma_contains_list_with_optional_entry():
    # both sublists [1] and [1, 2] are in gamma
    a = L((I(1, 1), TT), (I(2, 2), TOP))
    assert gamma_contains(a, [1])
    assert gamma_contains(a, [1, 2])
    assert not gamma_contains(a, [2])


def test_gamma_contains_sure_entry_must_match():
    assert not gamma_contains(L((I(1, 1), TT)), [])


def test_gamma_contains_kind_error():
    with pytest.raises(KindError):
        gamma_contains(I(0, 1), True)


def test_gamma_enumerate_examples():
    assert gamma_enumerate(I(0, 2), 100) == [0, 1, 2]
    assert set(gamma_enumerate(TOP, 100)) == {True, False}
    assert gamma_enumerate(L((I(1, 1), TOP)), 100) == [[], [1]]


def test_gamma_enumerate_cap():
    with pytest.raises(EnumerationOverflowError):
        gamma_enumerate(I(0, 200), 100)


def test_join_examples():
    assert join(I(3, 6), I(8, 9)) == I(3, 9)
    assert join(TT, FF) is TOP
    assert join(I(1, 2), BOTTOM) == I(1, 2)
    assert join(BOTTOM, I(1, 2)) == I(1, 2)


def test_join_lists_needs_equal_length():
    with pytest.raises(UnsupportedJoinError):
        join(L((I(0, 0), TT)), L())


def test_meet_examples():
    assert meet(I(0, 2), I(1, 3)) == I(1, 2)
    assert meet(TOP, TT) is TT
    assert meet(I(0, 1), I(5, 9)) is EMPTY
    assert meet(CatSet.of("person"), CatSet.of("car")) is EMPTY


def test_leq_examples():
    assert leq(I(2, 3), I(1, 4))
    assert leq(TT, TOP)
    assert not leq(I(1, 4), I(2, 3))
    assert leq(BOTTOM, I(0, 0))


def test_interval_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        Interval(3, 1)


def test_interval_overflow():
    with pytest.raises(IntervalOverflowError):
        Interval(0, INT_MAX + 1)


def test_false_entries_dropped():
    assert len(L((I(0, 0), FF), (I(1, 1), TT))) == 1


def test_cardinality():
    assert cardinality(I(1, 3)) == 3
    assert cardinality(TOP) == 2
    assert cardinality(AbstractTuple((I(0, 1), CatSet.of("person", "car")))) == 4


def test_bottom_gamma():
    assert gamma_contains(BOTTOM, BOTTOM)
    assert gamma_enumerate(BOTTOM) == [BOTTOM]


# ---------------------------------------------------------------------------
# properties

ints = st.integers(-20, 20)


@st.composite
def intervals(draw):
    a, b = draw(ints), draw(ints)
    return I(min(a, b), max(a, b))


bools = st.sampled_from([TT, FF, TOP])
intsets = st.frozensets(ints, min_size=1, max_size=6).map(IntSet)


@given(intervals(), intervals())
def test_join_is_upper_bound(a, b):
    j = join(a, b)
    assert leq(a, j) and leq(b, j)


@given(intervals(), intervals())
def test_meet_is_lower_bound_or_empty(a, b):
    m = meet(a, b)
    if m is EMPTY:
        assert a.hi < b.lo or b.hi < a.lo
    else:
        assert leq(m, a) and leq(m, b)


@given(intervals(), intervals(), ints)
def test_meet_gamma_is_intersection(a, b, v):
    m = meet(a, b)
    inside = gamma_contains(a, v) and gamma_contains(b, v)
    assert inside == (m is not EMPTY and gamma_contains(m, v))


@given(intsets, intsets)
def test_set_join_meet_exact(a, b):
    assert join(a, b).values == a.values | b.values
    m = meet(a, b)
    assert (m is EMPTY) == (not a.values & b.values)


@given(bools, bools)
def test_bool_lattice_laws(a, b):
    assert join(a, b) is join(b, a)
    assert leq(a, join(a, b))
    assert join(a, a) is a


@given(st.lists(ints, max_size=5))
def test_alpha_list_contains_value(v):
    assert gamma_contains(alpha(v), v)
    assert gamma_enumerate(alpha(v)) == [v]


@settings(max_examples=50)
@given(st.lists(st.tuples(intervals(), bools), max_size=4))
def test_list_enumerate_matches_contains(entries):
    a = AbstractList(entries)
    # small widths only, so enumeration stays cheap
    if any(e.width() > 3 for e, _ in a.entries):
        return
    members = gamma_enumerate(a, 100_000)
    for v in members:
        assert gamma_contains(a, v)
    assert not gamma_contains(a, [99] * (len(a) + 1))


@given(intervals(), intervals(), intervals())
def test_join_associative(a, b, c):
    assert join(join(a, b), c) == join(a, join(b, c))
