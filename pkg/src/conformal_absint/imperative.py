"""While-language with ground-truth and conformal semantics.

Text syntax (statements separated by ``;`` or newlines, ``#`` comments)::

    k := const 0
    b := le v 5
    while b { v := mlread x k; k := add k 1; b := le v 5 }
    if b { s := add s v }

Variables hold integers (booleans are 0/1) or, for ``mlread`` sources,
lists of opaque ML inputs. ``v := mlread x k`` applies the ML component to
``x[k]``.

The conformal semantics runs three threads side by side: the abstract store
of the test input, the calibration stores under the ground-truth semantics,
and (for direct predictors) the standard-semantics stores. Calibration
threads do not depend on the test input, so their states are interned and
every transition is cached; a calibration state is referred to by an id.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from .conformal import IntDirect, calibrate_direct, pac_calibrate
from .domain import (
    BOTTOM,
    EMPTY,
    FF,
    TOP,
    TT,
    AbstractBool,
    Interval,
    KindError,
    Opaque,
    alpha,
    check_int,
    join,
    leq,
    meet,
)
from .dsl import INT, MLOracle
from . import transformers as T


class ImperativeError(Exception):
    pass


class NonTerminationError(ImperativeError):
    pass


class GuardError(ImperativeError, TypeError):
    pass


# ---------------------------------------------------------------------------
# AST


@dataclass(eq=False)
class Stmt:
    uid: int = field(default=-1, init=False)


@dataclass(eq=False)
class Assign(Stmt):
    target: str = ""
    op: str = ""
    args: tuple = ()


@dataclass(eq=False)
class AssignML(Stmt):
    target: str = ""
    source: str = ""
    index: Any = 0  # variable name or int literal


@dataclass(eq=False)
class Seq(Stmt):
    first: Stmt | None = None
    second: Stmt | None = None


@dataclass(eq=False)
class If(Stmt):
    var: str = ""
    body: Stmt | None = None


@dataclass(eq=False)
class While(Stmt):
    var: str = ""
    body: Stmt | None = None


ASSIGN_OPS = {
    "const": 1, "copy": 1, "len": 1, "not": 1,
    "add": 2, "sub": 2, "mul": 2, "min": 2, "max": 2, "absdiff": 2,
    "le": 2, "lt": 2, "ge": 2, "gt": 2, "eq": 2, "and": 2, "or": 2,
}
# assignments whose abstract result is always exact for exact arguments
EXACT_OPS = {"const", "copy", "len"}


def number(s: Stmt) -> Stmt:
    """Assign consecutive uids in preorder; returns ``s``."""
    counter = [0]

    def go(t: Stmt):
        t.uid = counter[0]
        counter[0] += 1
        if isinstance(t, Seq):
            go(t.first)
            go(t.second)
        elif isinstance(t, (If, While)):
            go(t.body)

    go(s)
    return s


def seq(*stmts: Stmt) -> Stmt:
    if not stmts:
        raise ImperativeError("empty statement list")
    out = stmts[-1]
    for s in reversed(stmts[:-1]):
        out = Seq(first=s, second=out)
    return out


def to_text(s: Stmt, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(s, Assign):
        return pad + f"{s.target} := {s.op} " + " ".join(str(a) for a in s.args)
    if isinstance(s, AssignML):
        return pad + f"{s.target} := mlread {s.source} {s.index}"
    if isinstance(s, Seq):
        return to_text(s.first, indent) + ";\n" + to_text(s.second, indent)
    if isinstance(s, (If, While)):
        kw = "if" if isinstance(s, If) else "while"
        return pad + f"{kw} {s.var} {{\n" + to_text(s.body, indent + 1) + "\n" + pad + "}"
    raise ImperativeError(f"unknown statement {s!r}")


# ---------------------------------------------------------------------------
# Parser

_TOK = re.compile(r"[ \t\r]*(?:(#[^\n]*)|(:=)|([{};\n])|(-?\d+)|([A-Za-z_][A-Za-z0-9_]*))")


def _lex(text: str) -> list[str]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOK.match(text, pos)
        if not m or m.end() == pos:
            raise ImperativeError(f"unexpected character at offset {pos}: {text[pos:pos + 10]!r}")
        pos = m.end()
        if m.group(1):
            continue
        tok = m.group(2) or m.group(3) or m.group(4) or m.group(5)
        if tok == "\n":
            tok = ";"
        out.append(tok)
    return out


def parse_imperative(text: str) -> Stmt:
    toks = _lex(text)
    pos = 0

    def peek():
        return toks[pos] if pos < len(toks) else None

    def take(expected=None):
        nonlocal pos
        if pos >= len(toks):
            raise ImperativeError("unexpected end of program")
        t = toks[pos]
        if expected is not None and t != expected:
            raise ImperativeError(f"expected {expected!r}, got {t!r}")
        pos += 1
        return t

    def block(end):
        stmts = []
        while True:
            while peek() == ";":
                take()
            if peek() == end:
                break
            stmts.append(stmt())
            if peek() not in (";", end):
                raise ImperativeError(f"expected ';' or {end!r}, got {peek()!r}")
        if not stmts:
            raise ImperativeError("empty block")
        return seq(*stmts)

    def arg(t: str):
        return int(t) if re.fullmatch(r"-?\d+", t) else t

    def stmt():
        t = take()
        if t in ("while", "if"):
            var = take()
            take("{")
            body = block("}")
            take("}")
            return While(var=var, body=body) if t == "while" else If(var=var, body=body)
        target = t
        take(":=")
        op = take()
        args = []
        while peek() not in (None, ";", "}"):
            args.append(arg(take()))
        if op == "mlread":
            if len(args) != 2 or not isinstance(args[0], str):
                raise ImperativeError("mlread takes a list variable and an index")
            return AssignML(target=target, source=args[0], index=args[1])
        if op not in ASSIGN_OPS:
            raise ImperativeError(f"unknown operation {op!r}")
        if len(args) != ASSIGN_OPS[op]:
            raise ImperativeError(f"{op} takes {ASSIGN_OPS[op]} argument(s)")
        if op == "const" and not isinstance(args[0], int):
            raise ImperativeError("const takes an integer literal")
        return Assign(target=target, op=op, args=tuple(args))

    prog = block(None)
    if pos != len(toks):
        raise ImperativeError("trailing tokens")
    return number(prog)


def ml_site_count(s: Stmt, direct_assign: bool = False) -> int:
    """Statically counted ε-consuming statements in ``s``."""
    if isinstance(s, AssignML):
        return 1
    if isinstance(s, Assign):
        return 1 if direct_assign and s.op not in EXACT_OPS else 0
    if isinstance(s, Seq):
        return ml_site_count(s.first, direct_assign) + ml_site_count(s.second, direct_assign)
    return ml_site_count(s.body, direct_assign)


# ---------------------------------------------------------------------------
# Concrete semantics

_CONC = {
    "add": lambda a, b: check_int(a + b),
    "sub": lambda a, b: check_int(a - b),
    "mul": lambda a, b: check_int(a * b),
    "min": min,
    "max": max,
    "absdiff": lambda a, b: check_int(abs(a - b)),
    "le": lambda a, b: int(a <= b),
    "lt": lambda a, b: int(a < b),
    "ge": lambda a, b: int(a >= b),
    "gt": lambda a, b: int(a > b),
    "eq": lambda a, b: int(a == b),
    "and": lambda a, b: int(bool(a) and bool(b)),
    "or": lambda a, b: int(bool(a) or bool(b)),
}


def _val(sigma: Mapping, a):
    if isinstance(a, int):
        return a
    try:
        return sigma[a]
    except KeyError:
        raise ImperativeError(f"unbound variable {a!r}") from None


def _assign_concrete(s: Assign, sigma):
    if sigma is BOTTOM:
        return BOTTOM
    args = [_val(sigma, a) for a in s.args]
    op = s.op
    if op in ("const", "copy"):
        v = args[0]
    elif op == "len":
        v = len(args[0])
    elif op == "not":
        v = int(not args[0])
    else:
        v = _CONC[op](*args)
    out = dict(sigma)
    out[s.target] = v
    return out


def _ml_concrete(s: AssignML, sigma, fn: Callable):
    if sigma is BOTTOM:
        return BOTTOM
    xs = _val(sigma, s.source)
    k = _val(sigma, s.index)
    if not 0 <= k < len(xs):
        raise ImperativeError(f"mlread index {k} out of range for {s.source} of length {len(xs)}")
    out = dict(sigma)
    out[s.target] = fn(xs[k])
    return out


def iota_filter(b: bool, sigma, x: str):
    """Keep ``sigma`` if guard ``x`` may equal ``b``, else ``BOTTOM``.

    Works on concrete stores (0/1 guards) and abstract stores (interval or
    abstract-bool guards).
    """
    if sigma is BOTTOM:
        return BOTTOM
    g = _val(sigma, x)
    return sigma if _guard_may(g, b) else BOTTOM


def _guard_may(g, b: bool) -> bool:
    if isinstance(g, bool):
        return g == b
    if isinstance(g, int):
        if g not in (0, 1):
            raise GuardError(f"guard value {g} is not 0/1")
        return g == int(b)
    if type(g) is AbstractBool:
        return g.may_be(b)
    if type(g) is Interval:
        if g.lo < 0 or g.hi > 1:
            raise GuardError(f"guard interval {g!r} is not within (0, 1)")
        return g.lo <= int(b) <= g.hi
    raise GuardError(f"non-boolean guard {g!r}")


def eval_imperative(s: Stmt, sigma, ml: Callable, max_iter: int = 10_000):
    """Concrete semantics with ``ml`` standing in for the ML component."""
    if sigma is BOTTOM:
        return BOTTOM
    if isinstance(s, Assign):
        return _assign_concrete(s, sigma)
    if isinstance(s, AssignML):
        return _ml_concrete(s, sigma, ml)
    if isinstance(s, Seq):
        return eval_imperative(s.second, eval_imperative(s.first, sigma, ml, max_iter), ml, max_iter)
    if isinstance(s, If):
        t = iota_filter(True, sigma, s.var)
        if t is BOTTOM:
            return iota_filter(False, sigma, s.var)
        return eval_imperative(s.body, t, ml, max_iter)
    if isinstance(s, While):
        it = 0
        while True:
            if iota_filter(True, sigma, s.var) is BOTTOM:
                return sigma
            it += 1
            if it > max_iter:
                raise NonTerminationError(f"loop exceeded {max_iter} iterations")
            sigma = eval_imperative(s.body, sigma, ml, max_iter)
            if sigma is BOTTOM:
                return BOTTOM
    raise ImperativeError(f"unknown statement {s!r}")


def eval_imperative_gt(s: Stmt, sigma, oracle: MLOracle, max_iter: int = 10_000):
    return eval_imperative(s, sigma, oracle.ground_truth, max_iter)


def eval_imperative_std(s: Stmt, sigma, oracle: MLOracle, max_iter: int = 10_000):
    return eval_imperative(s, sigma, oracle.predict, max_iter)


# ---------------------------------------------------------------------------
# Abstract stores


def abstract_store(sigma) -> Any:
    """α of a concrete store; lists (ML inputs) stay opaque."""
    if sigma is BOTTOM:
        return BOTTOM
    out = {}
    for k, v in sigma.items():
        if isinstance(v, (list, tuple)):
            out[k] = Opaque(list(v))
        else:
            out[k] = alpha(v)
    return out


def join_store(a, b):
    if a is BOTTOM:
        return b
    if b is BOTTOM:
        return a
    return {k: join(a[k], b[k]) for k in a}


def leq_store(a, b) -> bool:
    if a is BOTTOM:
        return True
    if b is BOTTOM:
        return False
    return all(leq(a[k], b[k]) for k in a)


def _as_bool3(v) -> AbstractBool:
    if type(v) is AbstractBool:
        return v
    if type(v) is Interval:
        if v.lo < 0 or v.hi > 1:
            raise GuardError(f"boolean operand {v!r} is not within (0, 1)")
        if v.lo == v.hi:
            return TT if v.lo == 1 else FF
        return TOP
    raise GuardError(f"non-boolean operand {v!r}")


def _bool_to_interval(b: AbstractBool) -> Interval:
    if b is TT:
        return Interval(1, 1)
    if b is FF:
        return Interval(0, 0)
    return Interval(0, 1)


_ABS_ARITH = {
    "add": T.int_add, "sub": T.int_sub, "mul": T.int_mul,
    "min": T.int_min, "max": T.int_max, "absdiff": T.int_absdiff,
}


def _aval(A, a):
    if isinstance(a, int):
        return Interval(a, a)
    try:
        return A[a]
    except KeyError:
        raise ImperativeError(f"unbound variable {a!r}") from None


def _assign_abstract(s: Assign, A):
    if A is BOTTOM:
        return BOTTOM
    op = s.op
    args = [_aval(A, a) for a in s.args]
    if op in ("const", "copy"):
        v = args[0]
    elif op == "len":
        src = args[0]
        if type(src) is not Opaque:
            raise KindError("len expects a list variable")
        n = len(src.value)
        v = Interval(n, n)
    elif op in _ABS_ARITH:
        v = _ABS_ARITH[op](*args)
    elif op in T.CMP_OPS:
        v = _bool_to_interval(T.int_cmp(op, *args))
    elif op == "and":
        v = _bool_to_interval(T.bool_and(_as_bool3(args[0]), _as_bool3(args[1])))
    elif op == "or":
        v = _bool_to_interval(T.bool_or(_as_bool3(args[0]), _as_bool3(args[1])))
    elif op == "not":
        v = _bool_to_interval(T.bool_not(_as_bool3(args[0])))
    else:
        raise ImperativeError(f"unknown operation {op!r}")
    out = dict(A)
    out[s.target] = v
    return out


# ---------------------------------------------------------------------------
# Conformal semantics


@dataclass
class JointState:
    """Abstract store of the test input plus the calibration stores.

    ``calibration`` holds the ground-truth calibration stores and
    ``cal_std`` their standard-semantics counterparts. ``test_std`` is the
    standard-semantics store of the test input.
    """

    abstract: Any
    calibration: list
    test_std: Any = None
    cal_std: list | None = None
    input_context: list | None = None


class FullSetPredictor:
    def __init__(self, value):
        self.value = value

    def predict(self, x, set_mode: bool = False):
        return self.value


@dataclass
class _CalState:
    gts: tuple
    stds: tuple

    def all_bottom(self) -> bool:
        return all(g is BOTTOM for g in self.gts) and all(s is BOTTOM for s in self.stds)


def _pick(a, b):
    return b if a is BOTTOM else a


class ImperativeConformal:
    """Conformal semantics of one program against one calibration set.

    ``split`` chooses how a sequence divides its ε: ``"halving"`` gives
    each half ε/2; ``"ml_aware"`` gives everything to one side when the
    other side has no ε-consuming statement. ``loop_schedule`` sets the ε of
    the m-th unrolled body: ``"halving"`` (ε/2^m) or ``"quadratic"``
    (6ε/(π²m²)).
    """

    def __init__(
        self,
        program: Stmt,
        oracle: MLOracle,
        conformalizer,
        calibration_inputs: Sequence[Mapping],
        *,
        split: str = "halving",
        loop_schedule: str = "halving",
        direct_assign: bool = False,
        full_set=Interval(0, 9),
        max_iter: int = 10_000,
    ):
        if split not in ("halving", "ml_aware"):
            raise ValueError(f"unknown split {split!r}")
        if loop_schedule not in ("halving", "quadratic"):
            raise ValueError(f"unknown loop schedule {loop_schedule!r}")
        if program.uid < 0:
            number(program)
        self.program = program
        self.oracle = oracle
        self.conformalizer = conformalizer
        self.split = split
        self.loop_schedule = loop_schedule
        self.direct_assign = direct_assign
        self.full_set = full_set
        self.max_iter = max_iter
        self.warnings: Counter = Counter()
        self.empty_meets = 0
        # set to a list to record (loop uid, iteration, abstract store, calibration state id)
        self.loop_trace: list | None = None

        self._states: list[_CalState] = []
        self._trans: dict = {}
        self._preds: dict = {}
        self._loops: dict = {}
        self._sites: dict[int, int] = {}
        inputs = [dict(z) for z in calibration_inputs]
        self.init_sid = self._new_state(tuple(inputs), tuple(inputs))
        self._count_sites(program)

    # -- calibration states ----------------------------------------------

    def _new_state(self, gts: tuple, stds: tuple) -> int:
        self._states.append(_CalState(gts, stds))
        return len(self._states) - 1

    def state(self, sid: int) -> _CalState:
        return self._states[sid]

    def _cached(self, key, make: Callable[[], int]) -> int:
        sid = self._trans.get(key)
        if sid is None:
            sid = self._trans[key] = make()
        return sid

    def _count_sites(self, s: Stmt) -> int:
        if isinstance(s, AssignML):
            c = 1
        elif isinstance(s, Assign):
            c = 1 if self.direct_assign and s.op not in EXACT_OPS else 0
        elif isinstance(s, Seq):
            c = self._count_sites(s.first) + self._count_sites(s.second)
        else:
            c = self._count_sites(s.body)
        self._sites[s.uid] = c
        return c

    def _filter(self, sid: int, b: bool, var: str) -> int:
        def make():
            st = self._states[sid]
            return self._new_state(
                tuple(iota_filter(b, g, var) for g in st.gts),
                tuple(iota_filter(b, s, var) for s in st.stds),
            )

        return self._cached(("filter", sid, b, var), make)

    def _merge(self, a: int, b: int) -> int:
        def make():
            sa, sb = self._states[a], self._states[b]
            return self._new_state(
                tuple(_pick(x, y) for x, y in zip(sa.gts, sb.gts)),
                tuple(_pick(x, y) for x, y in zip(sa.stds, sb.stds)),
            )

        return self._cached(("merge", a, b), make)

    def _step_assign(self, s: Assign, sid: int) -> int:
        def make():
            st = self._states[sid]
            return self._new_state(
                tuple(_assign_concrete(s, g) for g in st.gts),
                tuple(_assign_concrete(s, x) for x in st.stds),
            )

        return self._cached(("assign", s.uid, sid), make)

    def _step_ml(self, s: AssignML, sid: int) -> int:
        def make():
            st = self._states[sid]
            return self._new_state(
                tuple(_ml_concrete(s, g, self.oracle.ground_truth) for g in st.gts),
                tuple(_ml_concrete(s, x, self.oracle.predict) for x in st.stds),
            )

        return self._cached(("ml", s.uid, sid), make)

    # -- predictors -------------------------------------------------------

    def ml_predictor(self, s: AssignML, sid: int, eps: float, delta: float):
        key = (s.uid, sid, eps, delta)
        pred = self._preds.get(key)
        if pred is None:
            items, labels = [], []
            for g in self._states[sid].gts:
                if g is BOTTOM:
                    continue
                img = g[s.source][g[s.index] if isinstance(s.index, str) else s.index]
                items.append((img,))
                labels.append(self.oracle.ground_truth(img))
            if not items or eps <= 0 or delta <= 0:
                self.warnings["degenerate-ml-site" if not items else "zero-epsilon-ml-site"] += 1
                pred = FullSetPredictor(self.full_set)
            else:
                pred = self.conformalizer.calibrate("apply", items, labels, eps, delta)
            self._preds[key] = pred
        return pred

    def assign_predictor(self, s: Assign, sid: int, eps: float, delta: float):
        """Direct predictor for the value assigned by ``s`` (after the step)."""
        key = ("direct", s.uid, sid, eps, delta)
        pred = self._preds.get(key)
        if pred is None:
            after = self._states[self._step_assign(s, sid)]
            truth, std = [], []
            for g, x in zip(after.gts, after.stds):
                if g is BOTTOM:
                    continue
                truth.append(g[s.target])
                # a calibration path whose standard run already left scores -inf
                std.append(x[s.target] if x is not BOTTOM else None)
            if not truth or eps <= 0 or delta <= 0:
                self.warnings["degenerate-direct-site"] += 1
                pred = None
            else:
                scores = [-abs(t - v) if v is not None else -math.inf for t, v in zip(truth, std)]
                pred = IntDirect(pac_calibrate(scores, eps, delta, "direct-assign"))
            self._preds[key] = pred
        return pred

    # -- execution --------------------------------------------------------

    def _split(self, s: Seq, eps: float) -> tuple[float, float]:
        if self.split == "ml_aware":
            a, b = self._sites[s.first.uid], self._sites[s.second.uid]
            if a == 0:
                return 0.0, eps
            if b == 0:
                return eps, 0.0
        return eps / 2, eps / 2

    def _loop_eps(self, m: int, eps: float) -> float:
        if self.loop_schedule == "halving":
            return eps / 2**m
        return eps * 6.0 / (math.pi**2 * m * m)

    def _read(self, s: AssignML, A, pred):
        xs = A[s.source]
        if type(xs) is not Opaque:
            raise KindError("mlread source must be an opaque list")
        xs = xs.value
        k = _aval(A, s.index)
        lo, hi = max(k.lo, 0), min(k.hi, len(xs) - 1)
        if lo > hi:
            raise ImperativeError(f"mlread index {k!r} has no valid position in a list of length {len(xs)}")
        v = None
        for j in range(lo, hi + 1):
            r = pred.predict(xs[j])
            v = r if v is None else join(v, r)
        out = dict(A)
        out[s.target] = v
        return out

    def exec(self, s: Stmt, A, S, sid: int, eps: float, delta: float):
        """One statement on (abstract store, test std store, calibration state id)."""
        if isinstance(s, Assign):
            sid2 = self._step_assign(s, sid)
            S2 = _assign_concrete(s, S) if S is not None else None
            A2 = _assign_abstract(s, A)
            if self.direct_assign and A2 is not BOTTOM and s.op not in EXACT_OPS:
                pred = self.assign_predictor(s, sid, eps, delta)
                if pred is not None and S2 is not None and S2 is not BOTTOM:
                    d = pred(S2[s.target])
                    m = meet(A2[s.target], d)
                    if m is EMPTY:
                        self.empty_meets += 1
                        m = d
                    A2[s.target] = m
            return A2, S2, sid2
        if isinstance(s, AssignML):
            sid2 = self._step_ml(s, sid)
            S2 = _ml_concrete(s, S, self.oracle.predict) if S is not None else None
            if A is BOTTOM:
                return BOTTOM, S2, sid2
            pred = self.ml_predictor(s, sid, eps, delta)
            return self._read(s, A, pred), S2, sid2
        if isinstance(s, Seq):
            e1, e2 = self._split(s, eps)
            d1, d2 = (delta * e1 / eps, delta * e2 / eps) if eps > 0 else (0.0, 0.0)
            A, S, sid = self.exec(s.first, A, S, sid, e1, d1)
            return self.exec(s.second, A, S, sid, e2, d2)
        if isinstance(s, If):
            At, Af = iota_filter(True, A, s.var), iota_filter(False, A, s.var)
            if S is not None:
                St, Sf = iota_filter(True, S, s.var), iota_filter(False, S, s.var)
            else:
                St = Sf = None
            sid_t, sid_f = self._filter(sid, True, s.var), self._filter(sid, False, s.var)
            Ab, Sb, sid_b = self.exec(s.body, At, St, sid_t, eps, delta)
            S2 = None if S is None else _pick(Sb, Sf)
            return join_store(Ab, Af), S2, self._merge(sid_b, sid_f)
        if isinstance(s, While):
            return self._exec_while(s, A, S, sid, eps, delta)
        raise ImperativeError(f"unknown statement {s!r}")

    def _loop_cal(self, s: While, sid: int):
        """Calibration-only unrolling: per-iteration entry states and the exit state."""
        key = (s.uid, sid)
        hit = self._loops.get(key)
        if hit is not None:
            return hit
        entries = []
        exit_sid = self._filter(sid, False, s.var)
        cur = self._filter(sid, True, s.var)
        while not self._states[cur].all_bottom():
            if len(entries) >= self.max_iter:
                raise NonTerminationError(f"loop exceeded {self.max_iter} iterations on calibration data")
            entries.append(cur)
            _, _, after = self.exec(s.body, BOTTOM, None, cur, 0.0, 0.0)
            exit_sid = self._merge(exit_sid, self._filter(after, False, s.var))
            cur = self._filter(after, True, s.var)
        self._loops[key] = (entries, exit_sid, cur)
        return self._loops[key]

    def _exec_while(self, s: While, A, S, sid: int, eps: float, delta: float):
        entries, exit_sid, dead = self._loop_cal(s, sid)
        A_exit = iota_filter(False, A, s.var)
        S_exit = iota_filter(False, S, s.var) if S is not None else None
        A_cur = iota_filter(True, A, s.var)
        S_cur = iota_filter(True, S, s.var) if S is not None else None
        m = 0
        while A_cur is not BOTTOM:
            m += 1
            if m > self.max_iter:
                raise NonTerminationError(f"loop exceeded {self.max_iter} iterations")
            cal = entries[m - 1] if m - 1 < len(entries) else dead
            e_m = self._loop_eps(m, eps)
            d_m = delta * e_m / eps if eps > 0 else 0.0
            A_next, S_next, cal_after = self.exec(s.body, A_cur, S_cur, cal, e_m, d_m)
            if self.loop_trace is not None:
                self.loop_trace.append((s.uid, m, A_next, cal_after))
            prev = A_exit
            A_exit = join_store(A_exit, iota_filter(False, A_next, s.var))
            assert leq_store(prev, A_exit), "loop exit chain must be ascending"
            if S is not None:
                S_exit = _pick(S_exit, iota_filter(False, S_next, s.var))
                S_cur = iota_filter(True, S_next, s.var)
            A_cur = iota_filter(True, A_next, s.var)
        return A_exit, S_exit, exit_sid

    def run(self, sigma_in: Mapping, epsilon: float, delta: float, track_std: bool | None = None):
        """Conformal semantics on a test input; returns ``(abstract_store, final_cal_sid)``."""
        if track_std is None:
            track_std = self.direct_assign
        A = abstract_store(dict(sigma_in))
        S = dict(sigma_in) if track_std else None
        A2, _, sid = self.exec(self.program, A, S, self.init_sid, epsilon, delta)
        return A2, sid

    def calibration_stores(self, sid: int) -> list:
        return list(self._states[sid].gts)


def eval_imperative_conformal(
    s: Stmt,
    state: JointState,
    epsilon: float,
    delta: float,
    oracle: MLOracle,
    conformalizer,
    **options,
) -> JointState:
    """Run the conformal semantics on a joint state.

    The calibration stores of ``state`` are taken as the calibration inputs
    and the abstract store as the test input's abstraction.
    """
    eng = ImperativeConformal(s, oracle, conformalizer, state.calibration, **options)
    S = state.test_std
    A, S2, sid = eng.exec(s, state.abstract, S, eng.init_sid, epsilon, delta)
    st = eng.state(sid)
    return JointState(A, list(st.gts), S2, list(st.stds), state.input_context)


# ---------------------------------------------------------------------------
# Direct and full semantics for whole programs


class ImperativeProgram:
    """A parsed while-program with a designated output variable."""

    def __init__(self, text_or_stmt, output: str, name: str | None = None):
        self.stmt = parse_imperative(text_or_stmt) if isinstance(text_or_stmt, str) else number(text_or_stmt)
        self.output = output
        self.name = name or "imperative"
        self.source = to_text(self.stmt)
        self.output_type = INT

    def eval_ground_truth(self, sigma, oracle: MLOracle, max_iter: int = 10_000):
        out = eval_imperative_gt(self.stmt, sigma, oracle, max_iter)
        return BOTTOM if out is BOTTOM else out[self.output]

    def eval_standard(self, sigma, oracle: MLOracle, max_iter: int = 10_000):
        out = eval_imperative_std(self.stmt, sigma, oracle, max_iter)
        return BOTTOM if out is BOTTOM else out[self.output]


class ImperativeConformalProgram:
    """Direct, compositional and full semantics of an imperative program."""

    def __init__(
        self,
        program: ImperativeProgram,
        oracle: MLOracle,
        conformalizer,
        calibration_inputs: Sequence[Mapping],
        **engine_options,
    ):
        self.program = program
        self.oracle = oracle
        self.engine = ImperativeConformal(program.stmt, oracle, conformalizer, calibration_inputs, **engine_options)
        self.truth = [program.eval_ground_truth(z, oracle) for z in calibration_inputs]
        self.std = [program.eval_standard(z, oracle) for z in calibration_inputs]
        self._direct: dict = {}

    def direct_predictor(self, epsilon: float, delta: float):
        key = (epsilon, delta)
        if key not in self._direct:
            self._direct[key] = calibrate_direct(INT, self.truth, self.std, epsilon, delta)
        return self._direct[key]

    def direct(self, sigma, epsilon: float, delta: float, std=None):
        sv = self.program.eval_standard(sigma, self.oracle) if std is None else std
        return self.direct_predictor(epsilon, delta)(sv)

    def compositional(self, sigma, epsilon: float, delta: float):
        A, _ = self.engine.run(sigma, epsilon, delta)
        if A is BOTTOM:
            return BOTTOM
        return A[self.program.output]

    def full(self, sigma, eps0: float, eps1: float, delta: float, std=None):
        """Meet of the conformal loop semantics at ``eps1`` with the root direct predictor at ``eps0``.

        Returns ``(value, empty_meet_count)``.
        """
        total = eps0 + eps1
        d0, d1 = delta * eps0 / total, delta * eps1 / total
        c = self.compositional(sigma, eps1, d1) if eps1 > 0 else None
        if eps0 <= 0:
            return c, 0
        d = self.direct(sigma, eps0, d0, std)
        if c is None:
            return d, 0
        m = meet(c, d)
        if m is EMPTY:
            return d, 1
        return m, 0
