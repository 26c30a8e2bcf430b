"""Conformal abstract interpretation of neurosymbolic programs."""

from .domain import BOTTOM, EMPTY, AbstractBool, AbstractList, AbstractTuple, CatSet, Interval, IntSet, Opaque
from .dsl import Program, parse_program
from .imperative import ImperativeProgram, parse_imperative

__all__ = [
    "BOTTOM", "EMPTY", "AbstractBool", "AbstractList", "AbstractTuple", "CatSet", "Interval", "IntSet", "Opaque",
    "Program", "parse_program", "ImperativeProgram", "parse_imperative",
]
