"""Abstract value lattice.

Values are immutable. The lattice elements are

* ``AbstractBool``: ``TT``, ``FF`` or ``TOP``
* ``Interval``: closed 64-bit integer interval ``(lo, hi)``
* ``IntSet``: explicit finite set of integers (used by the set mode)
* ``CatSet``: set of interned categories, stored as a bitmask
* ``AbstractTuple``: fixed-arity product
* ``AbstractList``: ordered ``(elem, flag)`` entries where the flag says
  whether the element is definitely present (``TT``) or maybe present (``TOP``)
* ``Opaque``: a single concrete value the domain does not look inside
  (images, scenes)
* ``BOTTOM``: the unreachable value, ``gamma(BOTTOM) = {BOTTOM}``

``meet`` may return ``EMPTY`` which is not a lattice element but a signal
that the two arguments have disjoint concretizations.
"""

from __future__ import annotations

import enum
from itertools import product as _cartesian
from typing import Any, Iterable

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1


class DomainError(Exception):
    pass


class IntervalOverflowError(DomainError, OverflowError):
    """An interval endpoint left the signed 64-bit range."""


class EnumerationOverflowError(DomainError):
    pass


class UnsupportedJoinError(DomainError):
    pass


class SetCardinalityError(DomainError):
    """An explicit integer set grew beyond its cap."""


class KindError(DomainError, TypeError):
    pass


# ---------------------------------------------------------------------------
# Singletons


class _Bottom:
    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "BOTTOM"

    def __reduce__(self):
        return (_Bottom, ())


class _Empty:
    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EMPTY"

    def __bool__(self) -> bool:
        return False

    def __reduce__(self):
        return (_Empty, ())


BOTTOM = _Bottom()
EMPTY = _Empty()


# ---------------------------------------------------------------------------
# Booleans


class AbstractBool(enum.Enum):
    TRUE = "TRUE#"
    FALSE = "FALSE#"
    TOP = "TOP"

    def __repr__(self) -> str:
        return self.value

    @staticmethod
    def of(b: bool) -> "AbstractBool":
        return TT if b else FF

    def may_be(self, b: bool) -> bool:
        """True iff ``b`` is in the concretization."""
        if self is TOP:
            return True
        return (self is TT) == bool(b)


TT = AbstractBool.TRUE
FF = AbstractBool.FALSE
TOP = AbstractBool.TOP


# ---------------------------------------------------------------------------
# Integers


def check_int(v: int) -> int:
    if v < INT_MIN or v > INT_MAX:
        raise IntervalOverflowError(f"integer {v} outside the signed 64-bit range")
    return v


class Interval(tuple):
    """Closed integer interval. Constructor rejects ``lo > hi``."""

    __slots__ = ()

    def __new__(cls, lo: int, hi: int):
        if lo > hi:
            raise ValueError(f"invalid interval: lo={lo} > hi={hi}")
        if lo < INT_MIN or hi > INT_MAX:
            raise IntervalOverflowError(f"interval ({lo}, {hi}) outside the signed 64-bit range")
        return tuple.__new__(cls, (lo, hi))

    @property
    def lo(self) -> int:
        return self[0]

    @property
    def hi(self) -> int:
        return self[1]

    def width(self) -> int:
        return self[1] - self[0]

    def __repr__(self) -> str:
        return f"({self[0]}, {self[1]})"

    def __eq__(self, other):
        return type(other) is Interval and tuple.__eq__(self, other)

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash(("I", self[0], self[1]))

    def __reduce__(self):
        return (Interval, (self[0], self[1]))


INT_TOP = Interval(INT_MIN, INT_MAX)


class IntSet:
    """Explicit finite set of integers."""

    __slots__ = ("values",)

    def __init__(self, values: Iterable[int]):
        vals = frozenset(values)
        if not vals:
            raise ValueError("IntSet must be non-empty")
        for v in vals:
            check_int(v)
        object.__setattr__(self, "values", vals)

    def __setattr__(self, name, value):
        raise AttributeError("IntSet is immutable")

    def __eq__(self, other):
        return type(other) is IntSet and self.values == other.values

    def __hash__(self):
        return hash(("S", self.values))

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(sorted(self.values))

    def __repr__(self) -> str:
        return "{" + ", ".join(str(v) for v in sorted(self.values)) + "}"

    def __reduce__(self):
        return (IntSet, (tuple(sorted(self.values)),))

    def hull(self) -> Interval:
        return Interval(min(self.values), max(self.values))


# ---------------------------------------------------------------------------
# Categories


class CategoryTable:
    """Interns category names to dense integer ids."""

    def __init__(self, names: Iterable[str] = ()):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []
        for n in names:
            self.intern(n)

    def intern(self, name: str) -> int:
        i = self._ids.get(name)
        if i is None:
            i = len(self._names)
            self._ids[name] = i
            self._names.append(name)
        return i

    def id(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise KindError(f"unknown category {name!r}") from None

    def name(self, i: int) -> str:
        return self._names[i]

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._names)


CATEGORIES = CategoryTable(["person", "car"])


class CatSet:
    """Set of categories as a bitmask over ``CATEGORIES`` ids."""

    __slots__ = ("bits",)

    def __init__(self, bits: int):
        object.__setattr__(self, "bits", bits)

    def __setattr__(self, name, value):
        raise AttributeError("CatSet is immutable")

    @classmethod
    def of(cls, *names: str) -> "CatSet":
        bits = 0
        for n in names:
            bits |= 1 << CATEGORIES.intern(n)
        return cls(bits)

    def __contains__(self, name: str) -> bool:
        if name not in CATEGORIES:
            return False
        return bool(self.bits >> CATEGORIES.id(name) & 1)

    def names(self) -> list[str]:
        out = []
        bits, i = self.bits, 0
        while bits:
            if bits & 1:
                out.append(CATEGORIES.name(i))
            bits >>= 1
            i += 1
        return out

    def __len__(self) -> int:
        return bin(self.bits).count("1")

    def __eq__(self, other):
        return type(other) is CatSet and self.bits == other.bits

    def __hash__(self):
        return hash(("C", self.bits))

    def __repr__(self) -> str:
        return "{" + ", ".join(self.names()) + "}"

    def __reduce__(self):
        return (CatSet, (self.bits,))


# ---------------------------------------------------------------------------
# Structured values


class AbstractTuple:
    __slots__ = ("elems",)

    def __init__(self, elems: Iterable[Any]):
        object.__setattr__(self, "elems", tuple(elems))

    def __setattr__(self, name, value):
        raise AttributeError("AbstractTuple is immutable")

    def __getitem__(self, i: int):
        return self.elems[i]

    def __len__(self) -> int:
        return len(self.elems)

    def __eq__(self, other):
        return type(other) is AbstractTuple and self.elems == other.elems

    def __hash__(self):
        return hash(("T", self.elems))

    def __repr__(self) -> str:
        return "<" + ", ".join(repr(e) for e in self.elems) + ">"

    def __reduce__(self):
        return (AbstractTuple, (self.elems,))


class AbstractList:
    """Ordered entries ``(elem, flag)``; entries flagged ``FF`` are dropped."""

    __slots__ = ("entries",)

    def __init__(self, entries: Iterable[tuple[Any, AbstractBool]]):
        kept = []
        for e, b in entries:
            if b is FF:
                continue
            if b is not TT and b is not TOP:
                raise KindError(f"list flag must be an AbstractBool, got {b!r}")
            kept.append((e, b))
        object.__setattr__(self, "entries", tuple(kept))

    def __setattr__(self, name, value):
        raise AttributeError("AbstractList is immutable")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other):
        return type(other) is AbstractList and self.entries == other.entries

    def __hash__(self):
        return hash(("L", self.entries))

    def __repr__(self) -> str:
        return "[" + ", ".join(f"({e!r}, {b!r})" for e, b in self.entries) + "]"

    def __reduce__(self):
        return (AbstractList, (self.entries,))

    def n_sure(self) -> int:
        return sum(1 for _, b in self.entries if b is TT)


class Opaque:
    """A single concrete value the domain treats atomically.

    Concretization is ``{value}``, compared by identity first and then ``==``.
    """

    __slots__ = ("value",)

    def __init__(self, value: Any):
        object.__setattr__(self, "value", value)

    def __setattr__(self, name, value):
        raise AttributeError("Opaque is immutable")

    def __eq__(self, other):
        return type(other) is Opaque and (self.value is other.value or self.value == other.value)

    def __hash__(self):
        return id(self.value)

    def __repr__(self) -> str:
        return f"Opaque({self.value!r})"


# ---------------------------------------------------------------------------
# alpha / gamma


def alpha(v: Any) -> Any:
    """Most precise abstract value containing the concrete value ``v``."""
    if v is BOTTOM:
        return BOTTOM
    if isinstance(v, bool):
        return TT if v else FF
    if isinstance(v, int):
        return Interval(v, v)
    if isinstance(v, str):
        return CatSet.of(v)
    if isinstance(v, tuple):
        return AbstractTuple(alpha(e) for e in v)
    if isinstance(v, list):
        return AbstractList((alpha(e), TT) for e in v)
    raise KindError(f"cannot abstract concrete value of kind {type(v).__name__}")


def alpha_set(v: Any) -> Any:
    """Like ``alpha`` but integers become singleton ``IntSet`` values."""
    if isinstance(v, int) and not isinstance(v, bool):
        return IntSet((v,))
    if isinstance(v, tuple):
        return AbstractTuple(alpha_set(e) for e in v)
    if isinstance(v, list):
        return AbstractList((alpha_set(e), TT) for e in v)
    return alpha(v)


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def gamma_contains(a: Any, v: Any) -> bool:
    """Decide ``v in gamma(a)``."""
    t = type(a)
    if t is Interval:
        if not _is_int(v):
            raise KindError(f"interval vs {type(v).__name__}")
        return a[0] <= v <= a[1]
    if t is AbstractBool:
        if not isinstance(v, bool):
            raise KindError(f"abstract bool vs {type(v).__name__}")
        return a.may_be(v)
    if t is IntSet:
        if not _is_int(v):
            raise KindError(f"int set vs {type(v).__name__}")
        return v in a.values
    if t is CatSet:
        if not isinstance(v, str):
            raise KindError(f"category set vs {type(v).__name__}")
        return v in a
    if t is AbstractTuple:
        if not isinstance(v, tuple):
            raise KindError(f"abstract tuple vs {type(v).__name__}")
        if len(v) != len(a.elems):
            return False
        return all(gamma_contains(e, x) for e, x in zip(a.elems, v))
    if t is AbstractList:
        if not isinstance(v, list):
            raise KindError(f"abstract list vs {type(v).__name__}")
        return _list_contains(a.entries, v)
    if t is Opaque:
        return a.value is v or a.value == v
    if a is BOTTOM:
        return v is BOTTOM
    raise KindError(f"not an abstract value: {a!r}")


def _list_contains(entries, v) -> bool:
    # ok[i]: first i elements of v can be matched by an order-preserving
    # injection into the entries seen so far, with every skipped entry
    # allowed to be absent.
    h = len(v)
    if h > len(entries):
        return False
    ok = [True] + [False] * h
    for elem, flag in entries:
        skippable = flag is not TT
        for i in range(h, 0, -1):
            take = ok[i - 1] and gamma_contains(elem, v[i - 1])
            ok[i] = (ok[i] and skippable) or take
        ok[0] = ok[0] and skippable
    return ok[h]


def _freeze(v: Any) -> Any:
    if isinstance(v, list):
        return ("list", tuple(_freeze(e) for e in v))
    if isinstance(v, tuple):
        return ("tuple", tuple(_freeze(e) for e in v))
    if isinstance(v, bool):
        return ("bool", v)
    return v


def gamma_enumerate(a: Any, cap: int = 10_000) -> list:
    """Return the distinct members of ``gamma(a)`` in a deterministic order.

    Raises ``EnumerationOverflowError`` if there are more than ``cap``.
    """
    out = _enum(a, cap)
    seen = set()
    uniq = []
    for v in out:
        k = _freeze(v)
        if k not in seen:
            seen.add(k)
            uniq.append(v)
    if len(uniq) > cap:
        raise EnumerationOverflowError(f"|gamma| = {len(uniq)} exceeds cap {cap}")
    return uniq


def _enum(a: Any, cap: int) -> list:
    t = type(a)
    if t is Interval:
        if a[1] - a[0] + 1 > cap:
            raise EnumerationOverflowError(f"|gamma{a!r}| exceeds cap {cap}")
        return list(range(a[0], a[1] + 1))
    if t is AbstractBool:
        if a is TOP:
            return [True, False]
        return [a is TT]
    if t is IntSet:
        if len(a) > cap:
            raise EnumerationOverflowError(f"|gamma| exceeds cap {cap}")
        return sorted(a.values)
    if t is CatSet:
        return a.names()
    if t is Opaque:
        return [a.value]
    if a is BOTTOM:
        return [BOTTOM]
    if t is AbstractTuple:
        parts = [_enum(e, cap) for e in a.elems]
        n = 1
        for p in parts:
            n *= len(p)
        if n > cap:
            raise EnumerationOverflowError(f"|gamma| exceeds cap {cap}")
        return [tuple(c) for c in _cartesian(*parts)]
    if t is AbstractList:
        # count selections first so a blow-up fails fast
        n = 1
        choices = []
        for elem, flag in a.entries:
            vals = _enum(elem, cap)
            choices.append((vals, flag))
            n *= len(vals) + (1 if flag is TOP else 0)
            if n > 64 * cap:
                raise EnumerationOverflowError(f"|gamma| exceeds cap {cap}")
        results: list[list] = [[]]
        for vals, flag in choices:
            nxt = []
            for prefix in results:
                if flag is TOP:
                    nxt.append(prefix)
                for x in vals:
                    nxt.append(prefix + [x])
            results = nxt
        return results
    raise KindError(f"not an abstract value: {a!r}")


def cardinality(a: Any) -> int:
    """Size of ``gamma(a)`` for scalar values and tuples of scalars."""
    t = type(a)
    if t is Interval:
        return a[1] - a[0] + 1
    if t is AbstractBool:
        return 2 if a is TOP else 1
    if t is IntSet:
        return len(a)
    if t is CatSet:
        return len(a)
    if t is AbstractTuple:
        n = 1
        for e in a.elems:
            n *= cardinality(e)
        return n
    if t is Opaque or a is BOTTOM:
        return 1
    raise KindError(f"cardinality undefined for {type(a).__name__}")


# ---------------------------------------------------------------------------
# Lattice operations


def _kind_mismatch(op: str, a: Any, b: Any) -> KindError:
    return KindError(f"{op}: incompatible kinds {type(a).__name__} and {type(b).__name__}")


def join(a: Any, b: Any) -> Any:
    if a is BOTTOM or a is EMPTY:
        return b
    if b is BOTTOM or b is EMPTY:
        return a
    t = type(a)
    if t is not type(b):
        raise _kind_mismatch("join", a, b)
    if t is Interval:
        lo = a[0] if a[0] < b[0] else b[0]
        hi = a[1] if a[1] > b[1] else b[1]
        if lo == a[0] and hi == a[1]:
            return a
        return Interval(lo, hi)
    if t is AbstractBool:
        return a if a is b else TOP
    if t is IntSet:
        return IntSet(a.values | b.values)
    if t is CatSet:
        return CatSet(a.bits | b.bits)
    if t is AbstractTuple:
        if len(a) != len(b):
            raise _kind_mismatch("join", a, b)
        return AbstractTuple(join(x, y) for x, y in zip(a.elems, b.elems))
    if t is AbstractList:
        return _join_lists(a, b)
    if t is Opaque:
        if a == b:
            return a
        raise UnsupportedJoinError("cannot join distinct opaque values")
    raise KindError(f"join: not an abstract value: {a!r}")


def _join_lists(a: AbstractList, b: AbstractList) -> AbstractList:
    if len(a.entries) != len(b.entries):
        raise UnsupportedJoinError("list join requires equal entry counts")
    out = []
    for (x, bx), (y, by) in zip(a.entries, b.entries):
        if not (leq(x, y) or leq(y, x)):
            raise UnsupportedJoinError("list join requires comparable entries")
        out.append((join(x, y), bx if bx is by else TOP))
    return AbstractList(out)


def meet(a: Any, b: Any) -> Any:
    """Greatest lower bound, or ``EMPTY`` if the concretizations are disjoint."""
    if a is BOTTOM or b is BOTTOM:
        return BOTTOM
    t = type(a)
    if t is not type(b):
        raise _kind_mismatch("meet", a, b)
    if t is Interval:
        lo = a[0] if a[0] > b[0] else b[0]
        hi = a[1] if a[1] < b[1] else b[1]
        if lo > hi:
            return EMPTY
        return Interval(lo, hi)
    if t is AbstractBool:
        if a is b or b is TOP:
            return a
        if a is TOP:
            return b
        return EMPTY
    if t is IntSet:
        s = a.values & b.values
        return IntSet(s) if s else EMPTY
    if t is CatSet:
        bits = a.bits & b.bits
        return CatSet(bits) if bits else EMPTY
    if t is AbstractTuple:
        if len(a) != len(b):
            raise _kind_mismatch("meet", a, b)
        parts = []
        for x, y in zip(a.elems, b.elems):
            m = meet(x, y)
            if m is EMPTY:
                return EMPTY
            parts.append(m)
        return AbstractTuple(parts)
    if t is Opaque:
        return a if a == b else EMPTY
    if t is AbstractList:
        raise UnsupportedJoinError("meet is not defined on abstract lists")
    raise KindError(f"meet: not an abstract value: {a!r}")


def leq(a: Any, b: Any) -> bool:
    """Order check; exact for scalars and tuples, sufficient for lists."""
    if a is BOTTOM:
        return True
    if b is BOTTOM:
        return False
    t = type(a)
    if t is not type(b):
        raise _kind_mismatch("leq", a, b)
    if t is Interval:
        return b[0] <= a[0] and a[1] <= b[1]
    if t is AbstractBool:
        return a is b or b is TOP
    if t is IntSet:
        return a.values <= b.values
    if t is CatSet:
        return a.bits & ~b.bits == 0
    if t is AbstractTuple:
        if len(a) != len(b):
            raise _kind_mismatch("leq", a, b)
        return all(leq(x, y) for x, y in zip(a.elems, b.elems))
    if t is AbstractList:
        if len(a.entries) != len(b.entries):
            return False
        return all(
            leq(x, y) and (bx is by or by is TOP)
            for (x, bx), (y, by) in zip(a.entries, b.entries)
        )
    if t is Opaque:
        return a == b
    raise KindError(f"leq: not an abstract value: {a!r}")
