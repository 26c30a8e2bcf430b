"""Abstract transformers for the non-ML DSL components.

Integer transformers accept ``Interval`` or ``IntSet`` arguments. Two
intervals give an interval; anything involving an ``IntSet`` is evaluated
exactly on the explicit sets (the set mode).
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Any, Callable

from .domain import (
    FF,
    TOP,
    TT,
    AbstractBool,
    AbstractList,
    AbstractTuple,
    CatSet,
    Interval,
    IntSet,
    KindError,
    SetCardinalityError,
    join,
)

SET_CAP = 4096


@dataclass(frozen=True)
class AbstractFn:
    """Abstract function value: an arity plus a deterministic ``apply``."""

    arity: int
    apply: Callable[..., Any]
    name: str = "<fn>"

    def __call__(self, *args):
        if len(args) != self.arity:
            raise TypeError(f"{self.name} expects {self.arity} arguments, got {len(args)}")
        return self.apply(*args)


# ---------------------------------------------------------------------------
# Integers


def _as_set(a: Any) -> frozenset:
    if type(a) is IntSet:
        return a.values
    if type(a) is Interval:
        if a[1] - a[0] + 1 > SET_CAP:
            raise SetCardinalityError(f"interval {a!r} too wide to enumerate")
        return frozenset(range(a[0], a[1] + 1))
    raise KindError(f"expected an integer abstract value, got {type(a).__name__}")


def _set_binop(op: Callable[[int, int], int], a: Any, b: Any) -> IntSet:
    xs, ys = _as_set(a), _as_set(b)
    out = {op(x, y) for x in xs for y in ys}
    if len(out) > SET_CAP:
        raise SetCardinalityError(f"set result has {len(out)} values (cap {SET_CAP})")
    return IntSet(out)


def _both_intervals(a: Any, b: Any) -> bool:
    ta, tb = type(a), type(b)
    if ta is Interval and tb is Interval:
        return True
    if ta not in (Interval, IntSet) or tb not in (Interval, IntSet):
        raise KindError(f"integer transformer applied to {ta.__name__} and {tb.__name__}")
    return False


def int_add(a, b):
    if _both_intervals(a, b):
        return Interval(a[0] + b[0], a[1] + b[1])
    return _set_binop(operator.add, a, b)


def int_sub(a, b):
    if _both_intervals(a, b):
        return Interval(a[0] - b[1], a[1] - b[0])
    return _set_binop(operator.sub, a, b)


def int_mul(a, b):
    if _both_intervals(a, b):
        p = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
        return Interval(min(p), max(p))
    return _set_binop(operator.mul, a, b)


def int_min(a, b):
    if _both_intervals(a, b):
        return Interval(min(a[0], b[0]), min(a[1], b[1]))
    return _set_binop(min, a, b)


def int_max(a, b):
    if _both_intervals(a, b):
        return Interval(max(a[0], b[0]), max(a[1], b[1]))
    return _set_binop(max, a, b)


def int_absdiff(a, b):
    """``|a - b|``, exact on intervals."""
    if _both_intervals(a, b):
        lo, hi = a[0] - b[1], a[1] - b[0]
        if lo >= 0:
            return Interval(lo, hi)
        if hi <= 0:
            return Interval(-hi, -lo)
        return Interval(0, max(-lo, hi))
    return _set_binop(lambda x, y: abs(x - y), a, b)


CMP_OPS = {
    "ge": operator.ge,
    "gt": operator.gt,
    "eq": operator.eq,
    "le": operator.le,
    "lt": operator.lt,
}
_CMP_ALIASES = {">=": "ge", "≥": "ge", ">": "gt", "=": "eq", "==": "eq", "<=": "le", "≤": "le", "<": "lt"}


def int_cmp(op: str, a, b) -> AbstractBool:
    op = _CMP_ALIASES.get(op, op)
    if op == "le":
        op, a, b = "ge", b, a
    elif op == "lt":
        op, a, b = "gt", b, a
    interval_args = _both_intervals(a, b)
    if op == "eq" and not interval_args:
        xs, ys = _as_set(a), _as_set(b)
        if len(xs) == 1 and xs == ys:
            return TT
        return TOP if xs & ys else FF
    # for ge/gt the extreme points decide, so sets reduce to their hulls
    l1, u1 = (a[0], a[1]) if type(a) is Interval else (min(a.values), max(a.values))
    l2, u2 = (b[0], b[1]) if type(b) is Interval else (min(b.values), max(b.values))
    if op == "ge":
        if l1 >= u2:
            return TT
        if u1 < l2:
            return FF
        return TOP
    if op == "gt":
        if l1 > u2:
            return TT
        if u1 <= l2:
            return FF
        return TOP
    if op == "eq":
        if l1 == u1 == l2 == u2:
            return TT
        if u1 < l2 or u2 < l1:
            return FF
        return TOP
    raise ValueError(f"unknown comparison {op!r}")


# ---------------------------------------------------------------------------
# Booleans (Kleene three-valued logic)


def bool_and(a: AbstractBool, b: AbstractBool) -> AbstractBool:
    if a is FF or b is FF:
        return FF
    if a is TT and b is TT:
        return TT
    return TOP


def bool_or(a: AbstractBool, b: AbstractBool) -> AbstractBool:
    if a is TT or b is TT:
        return TT
    if a is FF and b is FF:
        return FF
    return TOP


def bool_not(a: AbstractBool) -> AbstractBool:
    if a is TT:
        return FF
    if a is FF:
        return TT
    return TOP


def bool_op(op: str, *args: AbstractBool) -> AbstractBool:
    for x in args:
        if type(x) is not AbstractBool:
            raise KindError(f"boolean operator applied to {type(x).__name__}")
    if op in ("and", "∧"):
        return bool_and(*args)
    if op in ("or", "∨"):
        return bool_or(*args)
    if op in ("not", "¬"):
        return bool_not(*args)
    raise ValueError(f"unknown boolean operator {op!r}")


# ---------------------------------------------------------------------------
# Categories and tuples


def cat_eq(c: CatSet, name: str) -> AbstractBool:
    if type(c) is not CatSet:
        raise KindError(f"category test applied to {type(c).__name__}")
    if name not in c:
        return FF
    return TT if len(c) == 1 else TOP


def proj(t: AbstractTuple, i: int):
    if type(t) is not AbstractTuple:
        raise KindError(f"projection applied to {type(t).__name__}")
    return t.elems[i]


# ---------------------------------------------------------------------------
# Lists


def map_(f: Callable, xs: AbstractList) -> AbstractList:
    return AbstractList([(f(a), b) for a, b in xs.entries])


def filter_(f: Callable, xs: AbstractList) -> AbstractList:
    out = []
    for a, b in xs.entries:
        c = f(a)
        if c is FF:
            continue
        out.append((a, bool_and(b, c)))
    return AbstractList(out)


def foldr(f: Callable, xs: AbstractList, init):
    """Right fold; maybe-present entries join the skip and take branches."""
    acc = init
    for a, b in reversed(xs.entries):
        r = f(a, acc)
        acc = r if b is TT else join(acc, r)
    return acc


def product(xs: AbstractList, ys: AbstractList) -> AbstractList:
    return AbstractList(
        [(AbstractTuple((a, c)), bool_and(b, d)) for a, b in xs.entries for c, d in ys.entries]
    )


def pairs(xs: AbstractList) -> AbstractList:
    """All ``(x_i, x_j)`` with ``i < j``, in lexicographic index order."""
    es = xs.entries
    out = []
    for i in range(len(es)):
        a, b = es[i]
        for j in range(i + 1, len(es)):
            c, d = es[j]
            out.append((AbstractTuple((a, c)), bool_and(b, d)))
    return AbstractList(out)


def length(xs: AbstractList, set_mode: bool = False):
    lo, hi = xs.n_sure(), len(xs.entries)
    if set_mode:
        return IntSet(range(lo, hi + 1))
    return Interval(lo, hi)
