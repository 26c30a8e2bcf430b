"""Benchmark program library: list-of-digits queries and image queries.

Every entry carries a default direct share ``eps0_frac``: the fraction of the
total ε given to the direct predictors under full semantics; the rest is
split evenly over the ML sites. The digit-suite shares come from
``scripts/tune_split.py`` run on seed 1000.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dsl import IMAGE, LIST, Program, parse_program
from .imperative import ImperativeProgram


@dataclass(frozen=True)
class BenchProgram:
    name: str
    source: str
    kind: str  # "dsl" or "imperative"
    eps0_frac: float = 0.5
    output: str = "s"  # imperative output variable
    binarized: bool = False
    loop_free: bool = True
    pairwise: bool = False

    def build(self):
        if self.kind == "imperative":
            return ImperativeProgram(self.source, self.output, name=self.name)
        return parse_program(self.source, LIST(IMAGE) if self.suite_input == "list" else IMAGE, name=self.name)

    @property
    def suite_input(self) -> str:
        return "list" if "classify" in self.source else "image"


def _digits(d: str) -> str:
    return d.replace("DIGITS", "(map classify X)")


SUM_FIRST_K = """
k := mlread kx 0
n := len x
i := const 0
s := const 0
b1 := lt i k
b2 := lt i n
b := and b1 b2
while b {
  v := mlread x i
  s := add s v
  i := add i 1
  b1 := lt i k
  b2 := lt i n
  b := and b1 b2
}
"""

SUM_UNTIL_GT5 = """
n := len x
i := const 0
s := const 0
v := const 0
b1 := le v 5
b2 := lt i n
b := and b1 b2
while b {
  v := mlread x i
  s := add s v
  i := add i 1
  b1 := le v 5
  b2 := lt i n
  b := and b1 b2
}
"""

FIG7 = "k := const 0; v := const 0; b := le v 5; while b { v := mlread x k; k := add k 1; b := le v 5 }"

MNIST_PROGRAMS: tuple[BenchProgram, ...] = (
    BenchProgram("sum of list elements", _digits("(foldr add DIGITS 0)"), "dsl", 1.0),
    BenchProgram("sum of list elements less than 7", _digits("(foldr add (filter (lam d (lt d 7)) DIGITS) 0)"), "dsl", 0.8),
    BenchProgram("max of list elements", _digits("(foldr max DIGITS 0)"), "dsl", 0.5),
    BenchProgram("# of list elements less than 6", _digits("(length (filter (lam d (lt d 6)) DIGITS))"), "dsl", 0.3),
    BenchProgram("# of list elements equal to 2", _digits("(length (filter (lam d (eq d 2)) DIGITS))"), "dsl", 0.3),
    BenchProgram(
        "# of list elements between 3 and 8",
        _digits("(length (filter (lam d (and (ge d 3) (le d 8))) DIGITS))"),
        "dsl",
        0.5,
    ),
    BenchProgram(
        "max sum of any two list elements",
        _digits("(foldr (lam (p acc) (max (add (fst p) (snd p)) acc)) (pairs DIGITS) 0)"),
        "dsl",
        0.7,
        pairwise=True,
    ),
    BenchProgram(
        "max difference between two list elements",
        _digits("(foldr (lam (p acc) (max (absdiff (fst p) (snd p)) acc)) (pairs DIGITS) 0)"),
        "dsl",
        0.9,
        pairwise=True,
    ),
    BenchProgram("sum of first k list elements", SUM_FIRST_K, "imperative", 0.9, loop_free=False),
    BenchProgram("sum list elements until one is >5", SUM_UNTIL_GT5, "imperative", 1.0, loop_free=False),
)


_OBJECTS = "(detect X)"
_PEOPLE = "(filter (lam d (cat= d person)) (detect X))"
_CARS = "(filter (lam d (cat= d car)) (detect X))"


def _count(pred: str, src: str = _OBJECTS) -> str:
    return f"(length (filter (lam d {pred}) {src}))"


def _near(extra: str = "") -> str:
    # pair p = (person, car); "near" means both offsets within 100 pixels
    near = "(and (le (absdiff (x (fst p)) (x (snd p))) 100) (le (absdiff (y (fst p)) (y (snd p))) 100))"
    if extra:
        near = f"(and {near} {extra})"
    return f"(length (filter (lam p {near}) (product {_PEOPLE} {_CARS})))"


def _l1(p: str = "p") -> str:
    return f"(add (absdiff (x (fst {p})) (x (snd {p}))) (absdiff (y (fst {p})) (y (snd {p}))))"


def _maxdist(src: str) -> str:
    return f"(foldr (lam (p acc) (max {_l1()} acc)) {src} 0)"


DETECTION_BASE: tuple[tuple[str, str, int], ...] = (
    ("# objects in image", f"(length {_OBJECTS})", 3),
    ("# objects within 100 pixels of left", _count("(le (x d) 100)"), 3),
    ("# objects within 100 pixels of right", _count("(ge (x d) 540)"), 3),
    ("# objects within 100 pixels of top", _count("(le (y d) 100)"), 3),
    ("# objects within 100 pixels of bottom", _count("(ge (y d) 380)"), 3),
    ("# people within 100 pixels of a car", _near(), 3),
    ("# people left of a car within 100 pixels", _near("(lt (x (fst p)) (x (snd p)))"), 3),
    ("# people right of a car within 100 pixels", _near("(gt (x (fst p)) (x (snd p)))"), 3),
    ("# people below a car within 100 pixels", _near("(gt (y (fst p)) (y (snd p)))"), 3),
    ("# people above a car within 100 pixels", _near("(lt (y (fst p)) (y (snd p)))"), 3),
    ("max distance between two people", _maxdist(f"(pairs {_PEOPLE})"), 500),
    ("max distance between a car and a person", _maxdist(f"(product {_PEOPLE} {_CARS})"), 500),
)

DETECTION_PROGRAMS: tuple[BenchProgram, ...] = tuple(
    BenchProgram(name, src, "dsl", 0.05) for name, src, _ in DETECTION_BASE
)

DETECTION_BINARIZED: tuple[BenchProgram, ...] = tuple(
    BenchProgram(f"{name} >= {thr}", f"(ge {src} {thr})", "dsl", 0.05, binarized=True)
    for name, src, thr in DETECTION_BASE
)


def suite(name: str) -> tuple[BenchProgram, ...]:
    if name == "mnist":
        return MNIST_PROGRAMS
    if name == "detection":
        return DETECTION_PROGRAMS + DETECTION_BINARIZED
    if name == "imperative":
        return tuple(p for p in MNIST_PROGRAMS if p.kind == "imperative")
    raise KeyError(f"unknown suite {name!r}")


def by_name(name: str) -> BenchProgram:
    for p in MNIST_PROGRAMS + DETECTION_PROGRAMS + DETECTION_BINARIZED:
        if p.name == name:
            return p
    raise KeyError(f"unknown program {name!r}")


def build_dsl(p: BenchProgram) -> Program:
    prog = p.build()
    assert isinstance(prog, Program)
    return prog
