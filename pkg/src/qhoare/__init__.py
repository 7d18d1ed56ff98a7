"""Toolchain for a small quantum language with Hoare-typed computations.

Parsing, bidirectional type checking with strongest-postcondition
synthesis over symbolic quantum heaps, verification-condition discharge,
and execution on a seeded statevector simulator with runtime assertion
re-checking.
"""

from .core import Program, pretty
from .parser import parse_program

__all__ = ["Program", "pretty", "parse_program"]
__version__ = "0.1.0"
