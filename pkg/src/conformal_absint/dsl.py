"""Functional list-query language: types, S-expression parser, evaluators.

Syntax (one expression per program)::

    expr := X                          program input
          | <int> | true | false       constants
          | <category>                 category literal, e.g. person
          | (op expr ...)              component application
          | (map fn expr) | (filter fn expr) | (foldr fn expr expr)
    fn   := (lam v expr) | (lam (a b) expr) | <op or ML component name>

ML components (``classify``, ``detect``) are looked up in the program's ML
signature table. An ML site is an application of an ML component, or a
``map`` whose function is an ML component (a list-level site). Identical ML
sites share one predictor.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from . import transformers as T
from .domain import (
    BOTTOM,
    EMPTY,
    FF,
    TT,
    AbstractList,
    CatSet,
    CATEGORIES,
    Interval,
    IntSet,
    Opaque,
    check_int,
    meet,
)


class DSLError(Exception):
    pass


class ParseError(DSLError):
    pass


class DSLTypeError(DSLError, TypeError):
    pass


class UnboundVariableError(DSLTypeError):
    pass


class OracleUnavailableError(DSLError):
    pass


class MissingPredictorError(DSLError):
    pass


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class PrimType:
    kind: str
    args: tuple["PrimType", ...] = ()

    def __repr__(self) -> str:
        if self.kind == "list":
            return f"list[{self.args[0]!r}]"
        if self.kind == "tuple":
            return "tuple[" + ",".join(repr(a) for a in self.args) + "]"
        return self.kind


BOOL = PrimType("bool")
INT = PrimType("int")
CAT = PrimType("cat")
IMAGE = PrimType("image")


def TUPLE(*ts: PrimType) -> PrimType:
    return PrimType("tuple", tuple(ts))


def LIST(t: PrimType) -> PrimType:
    return PrimType("list", (t,))


DET = TUPLE(CAT, INT, INT)


def parse_type(text: str) -> PrimType:
    """Parse ``int``, ``list[image]``, ``tuple[cat,int,int]``, ``det``."""
    toks = re.findall(r"[A-Za-z]+|[\[\],]", text)
    pos = 0

    def one() -> PrimType:
        nonlocal pos
        if pos >= len(toks):
            raise ParseError(f"truncated type {text!r}")
        name = toks[pos]
        pos += 1
        simple = {"bool": BOOL, "int": INT, "cat": CAT, "image": IMAGE, "det": DET}
        if name in simple:
            return simple[name]
        if name in ("list", "tuple"):
            if pos >= len(toks) or toks[pos] != "[":
                raise ParseError(f"expected '[' after {name} in {text!r}")
            pos += 1
            items = [one()]
            while toks[pos] == ",":
                pos += 1
                items.append(one())
            if toks[pos] != "]":
                raise ParseError(f"expected ']' in {text!r}")
            pos += 1
            if name == "list":
                if len(items) != 1:
                    raise ParseError("list takes one type argument")
                return LIST(items[0])
            return TUPLE(*items)
        raise ParseError(f"unknown type {name!r}")

    t = one()
    if pos != len(toks):
        raise ParseError(f"trailing tokens in type {text!r}")
    return t


def _contains_image(t: PrimType) -> bool:
    return t.kind == "image" or any(_contains_image(a) for a in t.args)


# ---------------------------------------------------------------------------
# AST


@dataclass(eq=False)
class Node:
    type: PrimType | None = field(default=None, init=False)
    nid: int = field(default=-1, init=False)

    def children(self) -> list["Node"]:
        return []


@dataclass(eq=False)
class Input(Node):
    name: str = "X"


@dataclass(eq=False)
class Const(Node):
    value: Any = 0


@dataclass(eq=False)
class Var(Node):
    name: str = ""


@dataclass(eq=False)
class FnRef(Node):
    name: str = ""


@dataclass(eq=False)
class Lam(Node):
    params: tuple[str, ...] = ()
    body: Node | None = None

    def children(self) -> list[Node]:
        return [self.body]


@dataclass(eq=False)
class Apply(Node):
    op: str = ""
    args: list[Node] = field(default_factory=list)

    def children(self) -> list[Node]:
        return list(self.args)


def to_sexpr(n: Node) -> str:
    if isinstance(n, Input):
        return n.name
    if isinstance(n, Const):
        v = n.value
        if isinstance(v, bool):
            return "true" if v else "false"
        return str(v)
    if isinstance(n, (Var, FnRef)):
        return n.name
    if isinstance(n, Lam):
        ps = n.params[0] if len(n.params) == 1 else "(" + " ".join(n.params) + ")"
        return f"(lam {ps} {to_sexpr(n.body)})"
    if isinstance(n, Apply):
        return "(" + " ".join([n.op] + [to_sexpr(a) for a in n.args]) + ")"
    raise DSLError(f"unknown node {n!r}")


# ---------------------------------------------------------------------------
# Components

ARITH = {"add", "sub", "mul", "min", "max", "absdiff"}
CMP = {"le", "lt", "ge", "gt", "eq"}
BOOLOPS = {"and": 2, "or": 2, "not": 1}
DET_PROJ = {"cat": 0, "x": 1, "y": 2}
TUPLE_PROJ = {"fst": 0, "snd": 1}
COMBINATORS = {"map", "filter", "foldr"}
LISTOPS = {"product", "pairs", "length"}

_CONCRETE_ARITH: dict[str, Callable[[int, int], int]] = {
    "add": lambda a, b: check_int(a + b),
    "sub": lambda a, b: check_int(a - b),
    "mul": lambda a, b: check_int(a * b),
    "min": min,
    "max": max,
    "absdiff": lambda a, b: check_int(abs(a - b)),
}
_ABSTRACT_ARITH = {
    "add": T.int_add,
    "sub": T.int_sub,
    "mul": T.int_mul,
    "min": T.int_min,
    "max": T.int_max,
    "absdiff": T.int_absdiff,
}

DEFAULT_ML_SIGNATURES: dict[str, tuple[PrimType, PrimType]] = {
    "classify": (IMAGE, INT),
    "detect": (IMAGE, LIST(DET)),
}


@dataclass(frozen=True)
class MLOracle:
    """Ground truth, point prediction and score for one ML component."""

    ground_truth: Callable[[Any], Any]
    predict: Callable[[Any], Any]
    scorer: Callable[[Any, Any], float] | None = None


# ---------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def _tokenize(text: str) -> list[str]:
    text = re.sub(r";[^\n]*", "", text)
    return _TOKEN.findall(text)


def _read(tokens: list[str], pos: int):
    if pos >= len(tokens):
        raise ParseError("unexpected end of input")
    t = tokens[pos]
    if t == "(":
        items = []
        pos += 1
        while True:
            if pos >= len(tokens):
                raise ParseError("missing ')'")
            if tokens[pos] == ")":
                return items, pos + 1
            item, pos = _read(tokens, pos)
            items.append(item)
    if t == ")":
        raise ParseError("unexpected ')'")
    return t, pos + 1


_INT_RE = re.compile(r"^-?\d+$")


def _build(sx, bound: frozenset[str], ml: Mapping[str, Any], input_name: str) -> Node:
    if isinstance(sx, str):
        if _INT_RE.match(sx):
            return Const(int(sx))
        if sx in ("true", "false"):
            return Const(sx == "true")
        if sx in bound:
            return Var(sx)
        if sx == input_name:
            return Input(sx)
        if sx in CATEGORIES:
            return Const(sx)
        if sx in ml or sx in ARITH or sx in CMP or sx in BOOLOPS or sx in DET_PROJ or sx in TUPLE_PROJ:
            return FnRef(sx)
        raise UnboundVariableError(f"unbound name {sx!r}")
    if not sx:
        raise ParseError("empty application")
    head = sx[0]
    if not isinstance(head, str):
        raise ParseError(f"application head must be a name, got {head!r}")
    if head == "lam":
        if len(sx) != 3:
            raise ParseError("lam takes a parameter (list) and a body")
        ps = sx[1]
        params = (ps,) if isinstance(ps, str) else tuple(ps)
        if not params or not all(isinstance(p, str) for p in params):
            raise ParseError("bad lambda parameters")
        if len(set(params)) != len(params):
            raise ParseError("duplicate lambda parameter")
        # lambda bodies see only their own parameters
        return Lam(params=params, body=_build(sx[2], frozenset(params), ml, input_name))
    args = [_build(a, bound, ml, input_name) for a in sx[1:]]
    return Apply(op=head, args=args)


# ---------------------------------------------------------------------------
# Type checking


class _Checker:
    def __init__(self, input_type: PrimType, ml: Mapping[str, tuple[PrimType, PrimType]]):
        self.input_type = input_type
        self.ml = ml

    def check(self, n: Node, env: dict[str, PrimType], in_lambda: bool) -> PrimType:
        t = self._check(n, env, in_lambda)
        n.type = t
        return t

    def _fn(self, n: Node, params: list[PrimType], in_lambda: bool) -> PrimType:
        """Check a function argument against parameter types, return result type."""
        if isinstance(n, Lam):
            if len(n.params) != len(params):
                raise DSLTypeError(f"lambda takes {len(n.params)} parameters, expected {len(params)}")
            t = self.check(n.body, dict(zip(n.params, params)), True)
            n.type = t
            return t
        if isinstance(n, FnRef):
            t = self._fnref(n.name, params)
            n.type = t
            return t
        raise DSLTypeError(f"expected a function, got {to_sexpr(n)}")

    def _fnref(self, name: str, params: list[PrimType]) -> PrimType:
        if name in self.ml:
            dom, rng = self.ml[name]
            if params != [dom]:
                raise DSLTypeError(f"{name} expects {dom!r}, got {params!r}")
            return rng
        return self._op_type(name, params)

    def _op_type(self, op: str, ts: list[PrimType]) -> PrimType:
        if op in ARITH:
            if ts != [INT, INT]:
                raise DSLTypeError(f"{op} expects (int, int), got {ts!r}")
            return INT
        if op in CMP:
            if ts != [INT, INT]:
                raise DSLTypeError(f"{op} expects (int, int), got {ts!r}")
            return BOOL
        if op in BOOLOPS:
            if ts != [BOOL] * BOOLOPS[op]:
                raise DSLTypeError(f"{op} expects {BOOLOPS[op]} bool argument(s), got {ts!r}")
            return BOOL
        if op in DET_PROJ:
            if ts != [DET]:
                raise DSLTypeError(f"{op} expects a detection, got {ts!r}")
            return DET.args[DET_PROJ[op]]
        if op in TUPLE_PROJ:
            if len(ts) != 1 or ts[0].kind != "tuple" or len(ts[0].args) < 2:
                raise DSLTypeError(f"{op} expects a pair, got {ts!r}")
            return ts[0].args[TUPLE_PROJ[op]]
        raise DSLTypeError(f"unknown component {op!r}")

    def _check(self, n: Node, env: dict[str, PrimType], in_lambda: bool) -> PrimType:
        if isinstance(n, Input):
            if in_lambda:
                raise DSLTypeError("lambda bodies may not reference the program input")
            return self.input_type
        if isinstance(n, Const):
            v = n.value
            if isinstance(v, bool):
                return BOOL
            if isinstance(v, int):
                check_int(v)
                return INT
            return CAT
        if isinstance(n, Var):
            if n.name not in env:
                raise UnboundVariableError(f"unbound variable {n.name!r}")
            return env[n.name]
        if isinstance(n, FnRef):
            raise DSLTypeError(f"function {n.name!r} used as a value")
        if isinstance(n, Lam):
            raise DSLTypeError("lambda outside a combinator argument")
        assert isinstance(n, Apply)
        op, args = n.op, n.args

        if op in COMBINATORS:
            want = {"map": 2, "filter": 2, "foldr": 3}[op]
            if len(args) != want:
                raise DSLTypeError(f"{op} takes {want} arguments")
            lt = self.check(args[1], env, in_lambda)
            if lt.kind != "list":
                raise DSLTypeError(f"{op} expects a list, got {lt!r}")
            et = lt.args[0]
            if isinstance(args[0], FnRef) and args[0].name in self.ml:
                if op != "map" or in_lambda:
                    raise DSLTypeError("ML components may only be mapped at top level")
            if op == "map":
                return LIST(self._fn(args[0], [et], in_lambda))
            if op == "filter":
                if self._fn(args[0], [et], in_lambda) != BOOL:
                    raise DSLTypeError("filter predicate must return bool")
                return lt
            acc = self.check(args[2], env, in_lambda)
            if self._fn(args[0], [et, acc], in_lambda) != acc:
                raise DSLTypeError("foldr function must return the accumulator type")
            return acc

        for a in args:
            if isinstance(a, (Lam, FnRef)):
                raise DSLTypeError(f"{op} does not take a function argument")

        if op in self.ml:
            if in_lambda:
                raise DSLTypeError("ML components may not be applied inside lambdas")
            dom, rng = self.ml[op]
            ts = [self.check(a, env, in_lambda) for a in args]
            if ts != [dom]:
                raise DSLTypeError(f"{op} expects {dom!r}, got {ts!r}")
            return rng
        if op == "cat=":
            if len(args) != 2 or not isinstance(args[1], Const) or not isinstance(args[1].value, str):
                raise DSLTypeError("cat= takes an expression and a category literal")
            t = self.check(args[0], env, in_lambda)
            args[1].type = CAT
            if t not in (CAT, DET):
                raise DSLTypeError(f"cat= expects a category or detection, got {t!r}")
            return BOOL
        if op == "product":
            if len(args) != 2:
                raise DSLTypeError("product takes two lists")
            a, b = (self.check(x, env, in_lambda) for x in args)
            if a.kind != "list" or b.kind != "list":
                raise DSLTypeError("product takes two lists")
            return LIST(TUPLE(a.args[0], b.args[0]))
        if op == "pairs":
            if len(args) != 1:
                raise DSLTypeError("pairs takes one list")
            a = self.check(args[0], env, in_lambda)
            if a.kind != "list":
                raise DSLTypeError("pairs takes a list")
            return LIST(TUPLE(a.args[0], a.args[0]))
        if op == "length":
            if len(args) != 1:
                raise DSLTypeError("length takes one list")
            if self.check(args[0], env, in_lambda).kind != "list":
                raise DSLTypeError("length takes a list")
            return INT
        ts = [self.check(a, env, in_lambda) for a in args]
        return self._op_type(op, ts)


def _is_ml_site(n: Node, ml: Mapping[str, Any]) -> bool:
    if not isinstance(n, Apply):
        return False
    if n.op in ml:
        return True
    return n.op == "map" and isinstance(n.args[0], FnRef) and n.args[0].name in ml


# ---------------------------------------------------------------------------
# Compiled evaluators


class _Runtime:
    """Per-evaluation context threaded through compiled closures."""

    __slots__ = ("ml", "trace", "sites", "site_cache", "direct", "std", "empty_meets")

    def __init__(self):
        self.ml = None
        self.trace = None
        self.sites = None
        self.site_cache = None
        self.direct = None
        self.std = None
        self.empty_meets = None


def _concrete_op(op: str) -> Callable:
    if op in _CONCRETE_ARITH:
        return _CONCRETE_ARITH[op]
    if op in CMP:
        return T.CMP_OPS[op]
    if op == "and":
        return lambda a, b: a and b
    if op == "or":
        return lambda a, b: a or b
    if op == "not":
        return lambda a: not a
    if op in DET_PROJ:
        i = DET_PROJ[op]
        return lambda d: d[i]
    if op in TUPLE_PROJ:
        i = TUPLE_PROJ[op]
        return lambda t: t[i]
    raise DSLError(f"no concrete semantics for {op!r}")


def _abstract_op(op: str) -> Callable:
    if op in _ABSTRACT_ARITH:
        return _ABSTRACT_ARITH[op]
    if op in CMP:
        return lambda a, b: T.int_cmp(op, a, b)
    if op == "and":
        return T.bool_and
    if op == "or":
        return T.bool_or
    if op == "not":
        return T.bool_not
    if op in DET_PROJ:
        i = DET_PROJ[op]
        return lambda d: T.proj(d, i)
    if op in TUPLE_PROJ:
        i = TUPLE_PROJ[op]
        return lambda t: T.proj(t, i)
    raise DSLError(f"no abstract semantics for {op!r}")


class Program:
    """A type-checked program with precomputed ML sites and direct sites."""

    def __init__(
        self,
        root: Node,
        input_type: PrimType,
        ml_signatures: Mapping[str, tuple[PrimType, PrimType]] | None = None,
        name: str | None = None,
    ):
        self.root = root
        self.input_type = input_type
        self.ml = dict(DEFAULT_ML_SIGNATURES if ml_signatures is None else ml_signatures)
        self.name = name or to_sexpr(root)
        self.source = to_sexpr(root)
        self.output_type = _Checker(input_type, self.ml).check(root, {}, False)

        self.nodes: list[Node] = []
        self._number(root)
        self.site_nodes: dict[str, list[Node]] = {}
        self._has_ml: dict[int, bool] = {}
        self._scan(root, in_lambda=False)
        self.site_keys = list(self.site_nodes)
        self.direct_sites = [
            n.nid
            for n in self.nodes
            if self._is_direct_candidate(n)
        ]
        self._compiled: dict[tuple, Callable] = {}

    # -- structure --------------------------------------------------------

    def _number(self, n: Node):
        n.nid = len(self.nodes)
        self.nodes.append(n)
        for c in n.children():
            self._number(c)

    def _scan(self, n: Node, in_lambda: bool) -> bool:
        if isinstance(n, Lam):
            self._scan(n.body, True)
            self._has_ml[n.nid] = False
            n._in_lambda = True
            return False
        n._in_lambda = in_lambda
        has = False
        for c in n.children():
            has |= self._scan(c, in_lambda)
        if _is_ml_site(n, self.ml):
            self.site_nodes.setdefault(to_sexpr(n), []).append(n)
            n._site_key = to_sexpr(n)
            has = True
        else:
            n._site_key = None
        self._has_ml[n.nid] = has
        return has

    def _is_direct_candidate(self, n: Node) -> bool:
        if isinstance(n, (Lam, FnRef)) or n._in_lambda or n._site_key is not None:
            return False
        if not self._has_ml[n.nid]:
            return False
        return range_kind(n.type) is not None

    @property
    def n_ml_sites(self) -> int:
        return len(self.site_keys)

    def node(self, nid: int) -> Node:
        return self.nodes[nid]

    def subprogram_ml_free(self, nid: int) -> bool:
        return not self._has_ml[nid]

    # -- compilation ------------------------------------------------------

    def _concrete(self) -> Callable:
        f = self._compiled.get(("c",))
        if f is None:
            f = self._compiled[("c",)] = self._cc(self.root)
        return f

    def _abstract(self, set_mode: bool) -> Callable:
        key = ("a", set_mode)
        f = self._compiled.get(key)
        if f is None:
            f = self._compiled[key] = self._ca(self.root, set_mode)
        return f

    def _cc(self, n: Node) -> Callable:
        f = self._cc_inner(n)
        if isinstance(n, (Lam, FnRef)) or n._in_lambda:
            return f
        nid = n.nid

        def traced(env, rt, f=f, nid=nid):
            v = f(env, rt)
            if rt.trace is not None:
                rt.trace[nid] = v
            return v

        return traced

    def _cc_fn(self, n: Node) -> Callable:
        """Concrete function value for a combinator argument; returns f(rt)."""
        if isinstance(n, Lam):
            body = self._cc(n.body)
            if len(n.params) == 1:
                (p,) = n.params
                return lambda rt: (lambda a: body({p: a}, rt))
            p, q = n.params
            return lambda rt: (lambda a, b: body({p: a, q: b}, rt))
        assert isinstance(n, FnRef)
        op = _concrete_op(n.name)
        return lambda rt: op

    def _cc_inner(self, n: Node) -> Callable:
        if isinstance(n, Input):
            return lambda env, rt: env["__input__"]
        if isinstance(n, Const):
            v = n.value
            return lambda env, rt: v
        if isinstance(n, Var):
            name = n.name
            return lambda env, rt: env[name]
        assert isinstance(n, Apply)
        op = n.op
        if n._site_key is not None:
            if op == "map":
                comp = n.args[0].name
                xs = self._cc(n.args[1])

                def ml_map(env, rt):
                    h = rt.ml(comp)
                    return [h(a) for a in xs(env, rt)]

                return ml_map
            argfs = [self._cc(a) for a in n.args]

            def ml_apply(env, rt):
                return rt.ml(op)(*[g(env, rt) for g in argfs])

            return ml_apply
        if op == "map":
            fn, xs = self._cc_fn(n.args[0]), self._cc(n.args[1])
            return lambda env, rt: [f(a) for f in (fn(rt),) for a in xs(env, rt)]
        if op == "filter":
            fn, xs = self._cc_fn(n.args[0]), self._cc(n.args[1])
            return lambda env, rt: [a for f in (fn(rt),) for a in xs(env, rt) if f(a)]
        if op == "foldr":
            fn, xs, init = self._cc_fn(n.args[0]), self._cc(n.args[1]), self._cc(n.args[2])

            def fold(env, rt):
                f = fn(rt)
                acc = init(env, rt)
                for a in reversed(xs(env, rt)):
                    acc = f(a, acc)
                return acc

            return fold
        if op == "product":
            a, b = (self._cc(x) for x in n.args)
            return lambda env, rt: [(u, v) for u in a(env, rt) for v in b(env, rt)]
        if op == "pairs":
            a = self._cc(n.args[0])

            def prs(env, rt):
                xs = a(env, rt)
                return [(xs[i], xs[j]) for i in range(len(xs)) for j in range(i + 1, len(xs))]

            return prs
        if op == "length":
            a = self._cc(n.args[0])
            return lambda env, rt: len(a(env, rt))
        if op == "cat=":
            a = self._cc(n.args[0])
            name = n.args[1].value
            if n.args[0].type == DET:
                return lambda env, rt: a(env, rt)[0] == name
            return lambda env, rt: a(env, rt) == name
        f = _concrete_op(op)
        argfs = [self._cc(a) for a in n.args]
        if len(argfs) == 1:
            (g,) = argfs
            return lambda env, rt: f(g(env, rt))
        g, h = argfs
        return lambda env, rt: f(g(env, rt), h(env, rt))

    def _ca(self, n: Node, set_mode: bool) -> Callable:
        f = self._ca_inner(n, set_mode)
        if isinstance(n, (Lam, FnRef)) or n._in_lambda or n.nid not in self._direct_set:
            return f
        nid = n.nid

        def with_direct(env, rt, f=f, nid=nid):
            v = f(env, rt)
            if rt.direct is None:
                return v
            pred = rt.direct.get(nid)
            if pred is None:
                return v
            d = pred(rt.std[nid])
            m = meet(v, d)
            if m is EMPTY:
                rt.empty_meets.append(nid)
                return d
            return m

        return with_direct

    @property
    def _direct_set(self) -> frozenset:
        s = getattr(self, "_direct_set_cache", None)
        if s is None:
            s = self._direct_set_cache = frozenset(self.direct_sites)
        return s

    def _ca_fn(self, n: Node, set_mode: bool) -> Callable:
        if isinstance(n, Lam):
            body = self._ca(n.body, set_mode)
            if len(n.params) == 1:
                (p,) = n.params
                return lambda rt: (lambda a: body({p: a}, rt))
            p, q = n.params
            return lambda rt: (lambda a, b: body({p: a, q: b}, rt))
        assert isinstance(n, FnRef)
        op = _abstract_op(n.name)
        return lambda rt: op

    def _ca_inner(self, n: Node, set_mode: bool) -> Callable:
        if isinstance(n, Input):
            t = self.input_type
            return lambda env, rt: abstract_input(env["__input__"], t, set_mode)
        if isinstance(n, Const):
            v = n.value
            if isinstance(v, bool):
                av = TT if v else FF
            elif isinstance(v, int):
                av = IntSet((v,)) if set_mode else Interval(v, v)
            else:
                av = CatSet.of(v)
            return lambda env, rt: av
        if isinstance(n, Var):
            name = n.name
            return lambda env, rt: env[name]
        assert isinstance(n, Apply)
        op = n.op
        if n._site_key is not None:
            key = n._site_key
            if op == "map":
                argfs = [self._cc(n.args[1])]
            else:
                argfs = [self._cc(a) for a in n.args]

            def site(env, rt):
                cached = rt.site_cache.get(key)
                if cached is not None:
                    return cached
                pred = rt.sites.get(key)
                if pred is None:
                    raise MissingPredictorError(f"no predictor for ML site {key}")
                args = [g(env, rt) for g in argfs]
                v = pred.predict(*args, set_mode=set_mode) if hasattr(pred, "predict") else pred(*args)
                rt.site_cache[key] = v
                return v

            return site
        if op == "map":
            fn, xs = self._ca_fn(n.args[0], set_mode), self._ca(n.args[1], set_mode)
            return lambda env, rt: T.map_(fn(rt), xs(env, rt))
        if op == "filter":
            fn, xs = self._ca_fn(n.args[0], set_mode), self._ca(n.args[1], set_mode)
            return lambda env, rt: T.filter_(fn(rt), xs(env, rt))
        if op == "foldr":
            fn = self._ca_fn(n.args[0], set_mode)
            xs, init = self._ca(n.args[1], set_mode), self._ca(n.args[2], set_mode)
            return lambda env, rt: T.foldr(fn(rt), xs(env, rt), init(env, rt))
        if op == "product":
            a, b = (self._ca(x, set_mode) for x in n.args)
            return lambda env, rt: T.product(a(env, rt), b(env, rt))
        if op == "pairs":
            a = self._ca(n.args[0], set_mode)
            return lambda env, rt: T.pairs(a(env, rt))
        if op == "length":
            a = self._ca(n.args[0], set_mode)
            return lambda env, rt: T.length(a(env, rt), set_mode)
        if op == "cat=":
            a = self._ca(n.args[0], set_mode)
            name = n.args[1].value
            if n.args[0].type == DET:
                return lambda env, rt: T.cat_eq(T.proj(a(env, rt), 0), name)
            return lambda env, rt: T.cat_eq(a(env, rt), name)
        f = _abstract_op(op)
        argfs = [self._ca(a, set_mode) for a in n.args]
        if len(argfs) == 1:
            (g,) = argfs
            return lambda env, rt: f(g(env, rt))
        g, h = argfs
        return lambda env, rt: f(g(env, rt), h(env, rt))

    # -- evaluation -------------------------------------------------------

    def _run_concrete(self, x, ml_lookup, trace: dict | None = None):
        rt = _Runtime()
        rt.ml = ml_lookup
        rt.trace = trace
        return self._concrete()({"__input__": x}, rt)

    def eval_ground_truth(self, x, oracles: Mapping[str, MLOracle], trace: dict | None = None):
        return self._run_concrete(x, _lookup(oracles, "ground_truth"), trace)

    def eval_standard(self, x, oracles: Mapping[str, MLOracle], trace: dict | None = None):
        return self._run_concrete(x, _lookup(oracles, "predict"), trace)

    def eval_abstract(
        self,
        x,
        sites: Mapping[str, Any],
        direct: Mapping[int, Callable[[Any], Any]] | None = None,
        std_trace: Mapping[int, Any] | None = None,
        set_mode: bool = False,
    ):
        """Abstract evaluation.

        ``sites`` maps each ML-site key to a predictor (``.predict`` or a
        callable). With ``direct`` (node id to a function of the standard
        value at that node) every listed node is met with its direct value;
        ``std_trace`` must then hold the standard value of those nodes.
        Returns ``(value, empty_meet_node_ids)``.
        """
        rt = _Runtime()
        rt.sites = sites
        rt.site_cache = {}
        rt.direct = direct
        rt.std = std_trace
        rt.empty_meets = []
        v = self._abstract(set_mode)({"__input__": x}, rt)
        return v, rt.empty_meets

    def __repr__(self) -> str:
        return f"Program({self.source})"


def _lookup(oracles: Mapping[str, MLOracle], attr: str) -> Callable[[str], Callable]:
    def get(name: str) -> Callable:
        o = oracles.get(name)
        if o is None or getattr(o, attr, None) is None:
            raise OracleUnavailableError(f"no {attr} available for ML component {name!r}")
        return getattr(o, attr)

    return get


def abstract_input(x, t: PrimType, set_mode: bool = False):
    """Abstraction of a program input; images stay opaque."""
    if t.kind == "image":
        return Opaque(x)
    if t.kind == "list":
        et = t.args[0]
        return AbstractList([(abstract_input(e, et, set_mode), TT) for e in x])
    if t.kind == "tuple":
        from .domain import AbstractTuple

        return AbstractTuple(abstract_input(e, a, set_mode) for e, a in zip(x, t.args))
    if t.kind == "int":
        return IntSet((x,)) if set_mode else Interval(x, x)
    if t.kind == "bool":
        return TT if x else FF
    if t.kind == "cat":
        return CatSet.of(x)
    raise DSLTypeError(f"unsupported input type {t!r}")


def range_kind(t: PrimType | None) -> str | None:
    """``'int'``, ``'discrete'``, ``'product'`` or ``None`` if direct scoring is undefined."""
    if t is None:
        return None
    if t == INT:
        return "int"
    if t in (BOOL, CAT):
        return "discrete"
    if t.kind == "tuple" and all(range_kind(a) is not None and a.kind != "tuple" for a in t.args):
        return "product"
    return None


# ---------------------------------------------------------------------------
# Public entry points


def parse_program(
    text: str,
    input_type: PrimType | str = LIST(IMAGE),
    ml_signatures: Mapping[str, tuple[PrimType, PrimType]] | None = None,
    name: str | None = None,
    input_name: str = "X",
) -> Program:
    if isinstance(input_type, str):
        input_type = parse_type(input_type)
    ml = dict(DEFAULT_ML_SIGNATURES if ml_signatures is None else ml_signatures)
    tokens = _tokenize(text)
    sx, pos = _read(tokens, 0)
    if pos != len(tokens):
        raise ParseError("trailing tokens after program")
    root = _build(sx, frozenset(), ml, input_name)
    return Program(root, input_type, ml, name=name)


def typecheck(p: Program | Node, input_type: PrimType | None = None, ml_signatures=None) -> PrimType:
    if isinstance(p, Program):
        return p.output_type
    if input_type is None:
        raise DSLTypeError("input type required to check a bare node")
    ml = dict(DEFAULT_ML_SIGNATURES if ml_signatures is None else ml_signatures)
    return _Checker(input_type, ml).check(p, {}, False)


def eval_ground_truth(p: Program, x, oracles: Mapping[str, MLOracle]):
    return p.eval_ground_truth(x, oracles)


def eval_standard(p: Program, x, oracles: Mapping[str, MLOracle]):
    return p.eval_standard(x, oracles)


def eval_compositional(p: Program, x, predictors: Mapping[str, Any], set_mode: bool = False):
    missing = [k for k in p.site_keys if k not in predictors]
    if missing:
        raise MissingPredictorError(f"no predictor for ML site(s) {missing}")
    v, _ = p.eval_abstract(x, predictors, set_mode=set_mode)
    return v


__all__ = [
    "BOOL", "INT", "CAT", "IMAGE", "DET", "TUPLE", "LIST", "PrimType", "parse_type",
    "Program", "parse_program", "typecheck", "eval_ground_truth", "eval_standard",
    "eval_compositional", "MLOracle", "abstract_input", "range_kind", "to_sexpr",
    "Node", "Input", "Const", "Var", "FnRef", "Lam", "Apply",
    "DSLError", "ParseError", "DSLTypeError", "UnboundVariableError",
    "OracleUnavailableError", "MissingPredictorError", "BOTTOM",
]
