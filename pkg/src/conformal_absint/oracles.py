"""Seeded brute-force oracle suites for the abstract domain and transformers.

Each suite draws small random abstract values, enumerates their
concretizations, and checks the abstract result against the concrete one.
Shared by the test suite and ``confab oracle-check``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import transformers as T
from .domain import (
    CATEGORIES,
    EMPTY,
    FF,
    TOP,
    TT,
    AbstractBool,
    AbstractList,
    AbstractTuple,
    CatSet,
    Interval,
    IntSet,
    alpha,
    gamma_contains,
    gamma_enumerate,
    join,
    leq,
    meet,
)


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    failures: int = 0
    examples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failures == 0

    def fail(self, detail: str) -> None:
        self.failures += 1
        if len(self.examples) < 5:
            self.examples.append(detail)


# ---------------------------------------------------------------------------
# Random abstract values


def rand_interval(rng: np.random.Generator, width: int = 6, span: int = 10) -> Interval:
    lo = int(rng.integers(-span, span + 1))
    return Interval(lo, lo + int(rng.integers(0, width + 1)))


def rand_intset(rng: np.random.Generator, size: int = 5, span: int = 10) -> IntSet:
    k = int(rng.integers(1, size + 1))
    return IntSet(int(v) for v in rng.integers(-span, span + 1, size=k))


def rand_int(rng, set_mode: bool = False, width: int = 6):
    return rand_intset(rng) if set_mode else rand_interval(rng, width)


def rand_bool(rng: np.random.Generator) -> AbstractBool:
    return (TT, FF, TOP)[int(rng.integers(0, 3))]


def rand_catset(rng: np.random.Generator) -> CatSet:
    return CatSet(int(rng.integers(1, 1 << len(CATEGORIES))))


def rand_flag(rng: np.random.Generator) -> AbstractBool:
    return TT if rng.random() < 0.5 else TOP


def rand_int_list(rng: np.random.Generator, max_len: int = 6, elem_width: int = 2, set_mode: bool = False) -> AbstractList:
    n = int(rng.integers(0, max_len + 1))
    entries = []
    for _ in range(n):
        e = IntSet(int(v) for v in rng.integers(-5, 6, size=int(rng.integers(1, 3)))) if set_mode else rand_interval(rng, elem_width, 5)
        entries.append((e, rand_flag(rng)))
    return AbstractList(entries)


def rand_det(rng: np.random.Generator, width: int = 2) -> AbstractTuple:
    return AbstractTuple((rand_catset(rng), rand_interval(rng, width, 8), rand_interval(rng, width, 8)))


def rand_det_list(rng: np.random.Generator, max_len: int = 3) -> AbstractList:
    n = int(rng.integers(0, max_len + 1))
    return AbstractList((rand_det(rng, 1), rand_flag(rng)) for _ in range(n))


# ---------------------------------------------------------------------------
# Transformer soundness


@dataclass(frozen=True)
class TransformerCase:
    name: str
    gen: Callable[[np.random.Generator], tuple]
    concrete: Callable[..., Any]
    abstract: Callable[..., Any]


def _c_foldr(f, xs, init):
    return functools.reduce(lambda acc, a: f(a, acc), reversed(xs), init)


def _int_cases(set_mode: bool) -> list[TransformerCase]:
    tag = "set" if set_mode else "interval"
    gen2 = lambda rng: (rand_int(rng, set_mode), rand_int(rng, set_mode))
    ops = [
        ("add", lambda a, b: a + b, T.int_add),
        ("sub", lambda a, b: a - b, T.int_sub),
        ("mul", lambda a, b: a * b, T.int_mul),
        ("min", min, T.int_min),
        ("max", max, T.int_max),
        ("absdiff", lambda a, b: abs(a - b), T.int_absdiff),
    ]
    cases = [TransformerCase(f"{n}[{tag}]", gen2, c, a) for n, c, a in ops]
    for op, fn in T.CMP_OPS.items():
        cases.append(TransformerCase(f"{op}[{tag}]", gen2, fn, functools.partial(T.int_cmp, op)))
    return cases


def _length_abstract(set_mode):
    return lambda xs: T.length(xs, set_mode)


def transformer_cases() -> list[TransformerCase]:
    cases = _int_cases(False) + _int_cases(True)
    b2 = lambda rng: (rand_bool(rng), rand_bool(rng))
    cases += [
        TransformerCase("and", b2, lambda a, b: a and b, T.bool_and),
        TransformerCase("or", b2, lambda a, b: a or b, T.bool_or),
        TransformerCase("not", lambda rng: (rand_bool(rng),), lambda a: not a, T.bool_not),
    ]
    for name in CATEGORIES.names:
        cases.append(
            TransformerCase(f"cat=[{name}]", lambda rng: (rand_catset(rng),), lambda c, n=name: c == n,
                            lambda c, n=name: T.cat_eq(c, n))
        )
    for i, proj in enumerate(("cat", "x", "y")):
        cases.append(TransformerCase(f"proj[{proj}]", lambda rng: (rand_det(rng),), lambda t, i=i: t[i],
                                     lambda t, i=i: T.proj(t, i)))
    one = Interval(1, 1)
    cases += [
        TransformerCase(
            "map[+1]", lambda rng: (rand_int_list(rng),),
            lambda xs: [x + 1 for x in xs], lambda xs: T.map_(lambda a: T.int_add(a, one), xs),
        ),
        TransformerCase(
            "map[cat=person]", lambda rng: (rand_det_list(rng),),
            lambda xs: [d[0] == "person" for d in xs], lambda xs: T.map_(lambda a: T.cat_eq(a.elems[0], "person"), xs),
        ),
        TransformerCase(
            "filter[<2]", lambda rng: (rand_int_list(rng),),
            lambda xs: [x for x in xs if x < 2], lambda xs: T.filter_(lambda a: T.int_cmp("lt", a, Interval(2, 2)), xs),
        ),
        TransformerCase(
            "filter[person and x<=3]", lambda rng: (rand_det_list(rng),),
            lambda xs: [d for d in xs if d[0] == "person" and d[1] <= 3],
            lambda xs: T.filter_(
                lambda a: T.bool_and(T.cat_eq(a.elems[0], "person"), T.int_cmp("le", a.elems[1], Interval(3, 3))), xs
            ),
        ),
        TransformerCase(
            "foldr[add]", lambda rng: (rand_int_list(rng), rand_interval(rng, 2, 3)),
            lambda xs, z: _c_foldr(lambda a, b: a + b, xs, z), lambda xs, z: T.foldr(T.int_add, xs, z),
        ),
        TransformerCase(
            "foldr[max]", lambda rng: (rand_int_list(rng), rand_interval(rng, 2, 3)),
            lambda xs, z: _c_foldr(max, xs, z), lambda xs, z: T.foldr(T.int_max, xs, z),
        ),
        TransformerCase(
            "foldr[add][set]", lambda rng: (rand_int_list(rng, set_mode=True), rand_intset(rng, 2, 3)),
            lambda xs, z: _c_foldr(lambda a, b: a + b, xs, z), lambda xs, z: T.foldr(T.int_add, xs, z),
        ),
        TransformerCase(
            "product", lambda rng: (rand_int_list(rng, 3, 1), rand_int_list(rng, 3, 1)),
            lambda xs, ys: [(x, y) for x in xs for y in ys], T.product,
        ),
        TransformerCase(
            "pairs", lambda rng: (rand_int_list(rng, 4, 1),),
            lambda xs: [(xs[i], xs[j]) for i in range(len(xs)) for j in range(i + 1, len(xs))], T.pairs,
        ),
        TransformerCase("length", lambda rng: (rand_int_list(rng),), len, _length_abstract(False)),
        TransformerCase("length[set]", lambda rng: (rand_int_list(rng),), len, _length_abstract(True)),
    ]
    return cases


def check_transformer(case: TransformerCase, n: int, seed: int) -> SuiteResult:
    res = SuiteResult(case.name)
    rng = np.random.default_rng([seed, sum(map(ord, case.name))])
    for _ in range(n):
        args = case.gen(rng)
        out = case.abstract(*args)
        res.cases += 1
        for sel in itertools.product(*(gamma_enumerate(a) for a in args)):
            y = case.concrete(*sel)
            if not gamma_contains(out, y):
                res.fail(f"{case.name}{args!r} -> {out!r} misses {sel!r} -> {y!r}")
                break
    return res


def soundness_suite(n: int = 10_000, seed: int = 0) -> list[SuiteResult]:
    return [check_transformer(c, n, seed) for c in transformer_cases()]


# ---------------------------------------------------------------------------
# Galois connection and lattice laws


def _rand_scalar(rng: np.random.Generator, kind: str):
    if kind == "interval":
        return rand_interval(rng, 4, 4)
    if kind == "intset":
        return rand_intset(rng, 4, 4)
    if kind == "bool":
        return rand_bool(rng)
    if kind == "cat":
        return rand_catset(rng)
    if kind == "tuple":
        return AbstractTuple((rand_interval(rng, 3, 3), rand_bool(rng)))
    raise ValueError(kind)


SCALAR_KINDS = ("interval", "intset", "bool", "cat", "tuple")


def _gamma_set(a) -> set:
    return {repr(v) for v in gamma_enumerate(a)}


def galois_suite(n: int = 10_000, seed: int = 0) -> SuiteResult:
    """α(v) ⊑ a iff v ∈ γ(a); v ∈ γ(α(v)); α(v) is the least such element."""
    res = SuiteResult("galois")
    rng = np.random.default_rng([seed, 1])
    for i in range(n):
        kind = SCALAR_KINDS[i % len(SCALAR_KINDS)]
        a = _rand_scalar(rng, kind)
        b = _rand_scalar(rng, kind)
        res.cases += 1
        for v in gamma_enumerate(b):
            av = alpha(v) if kind != "intset" else IntSet((v,))
            if not gamma_contains(av, v):
                res.fail(f"{v!r} not in gamma(alpha) = {av!r}")
            if leq(av, a) != gamma_contains(a, v):
                res.fail(f"alpha({v!r}) <= {a!r} disagrees with membership")
    # lists: every concretization of a flagged list abstracts below it
    for _ in range(n // 10):
        xs = rand_int_list(rng, 4, 1)
        res.cases += 1
        for v in gamma_enumerate(xs):
            if not gamma_contains(xs, v):
                res.fail(f"{v!r} enumerated but not contained in {xs!r}")
    return res


def lattice_suite(n: int = 10_000, seed: int = 0) -> SuiteResult:
    """Join/meet laws, partial order, and agreement with γ."""
    res = SuiteResult("lattice")
    rng = np.random.default_rng([seed, 2])
    for i in range(n):
        kind = SCALAR_KINDS[i % len(SCALAR_KINDS)]
        a, b, c = (_rand_scalar(rng, kind) for _ in range(3))
        res.cases += 1
        j = join(a, b)
        m = meet(a, b)
        ga, gb, gj = _gamma_set(a), _gamma_set(b), _gamma_set(j)
        if j != join(b, a):
            res.fail(f"join not commutative on {a!r}, {b!r}")
        if join(a, a) != a:
            res.fail(f"join not idempotent on {a!r}")
        if join(join(a, b), c) != join(a, join(b, c)):
            res.fail(f"join not associative on {a!r}, {b!r}, {c!r}")
        if not (leq(a, j) and leq(b, j)):
            res.fail(f"join not an upper bound of {a!r}, {b!r}")
        if not (ga | gb) <= gj:
            res.fail(f"gamma(join) misses values for {a!r}, {b!r}")
        if m != meet(b, a):
            res.fail(f"meet not commutative on {a!r}, {b!r}")
        if m is EMPTY:
            if ga & gb:
                res.fail(f"meet EMPTY but gammas overlap: {a!r}, {b!r}")
        else:
            if _gamma_set(m) != ga & gb:
                res.fail(f"gamma(meet) != intersection for {a!r}, {b!r}")
            if not (leq(m, a) and leq(m, b)):
                res.fail(f"meet not a lower bound of {a!r}, {b!r}")
        if not leq(a, a):
            res.fail(f"leq not reflexive on {a!r}")
        if leq(a, b) != (ga <= gb):
            res.fail(f"leq disagrees with gamma inclusion on {a!r}, {b!r}")
        if leq(a, b) and leq(b, a) and a != b:
            res.fail(f"leq not antisymmetric on {a!r}, {b!r}")
        if leq(a, b) and leq(b, c) and not leq(a, c):
            res.fail(f"leq not transitive on {a!r}, {b!r}, {c!r}")
    return res


def _widen(rng: np.random.Generator, a):
    """A random element above ``a``."""
    t = type(a)
    if t is Interval:
        return Interval(a.lo - int(rng.integers(0, 3)), a.hi + int(rng.integers(0, 3)))
    if t is IntSet:
        return IntSet(a.values | {int(v) for v in rng.integers(-6, 7, size=int(rng.integers(0, 3)))})
    if t is AbstractBool:
        return TOP if rng.random() < 0.5 else a
    if t is CatSet:
        return CatSet(a.bits | int(rng.integers(0, 1 << len(CATEGORIES))))
    if t is AbstractList:
        return AbstractList((_widen(rng, e), TOP if rng.random() < 0.3 else f) for e, f in a.entries)
    if t is AbstractTuple:
        return AbstractTuple(_widen(rng, e) for e in a.elems)
    raise TypeError(t)


def gamma_leq(a, b) -> bool:
    """γ(a) ⊆ γ(b); structural ``leq`` first, enumeration when it is inconclusive."""
    if leq(a, b):
        return True
    return all(gamma_contains(b, v) for v in gamma_enumerate(a))


def monotonicity_suite(n: int = 10_000, seed: int = 0) -> SuiteResult:
    """a ⊑ a' implies f#(a) ⊑ f#(a') for every transformer."""
    res = SuiteResult("monotonicity")
    rng = np.random.default_rng([seed, 3])
    cases = transformer_cases()
    for i in range(n):
        case = cases[i % len(cases)]
        args = case.gen(rng)
        wider = tuple(_widen(rng, a) for a in args)
        res.cases += 1
        lo, hi = case.abstract(*args), case.abstract(*wider)
        if not gamma_leq(lo, hi):
            res.fail(f"{case.name}: {args!r} <= {wider!r} but {lo!r} !<= {hi!r}")
    return res


def property_suites(n: int = 10_000, seed: int = 0) -> list[SuiteResult]:
    return [galois_suite(n, seed), lattice_suite(n, seed), monotonicity_suite(n, seed)]
