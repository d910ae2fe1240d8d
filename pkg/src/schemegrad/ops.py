"""Registry of the 51 primitive operations.

Four categories: scalar arithmetic (24), vector (9), matrix (11) and
control flow (7).  Control forms are parsed structurally rather than as
prim applications, but they live in the registry so their names are
reserved and the category counts are checkable.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PrimOp:
    name: str
    category: str  # scalar | vector | matrix | control
    min_arity: int
    max_arity: int | None  # None = unbounded


def _op(name, category, lo, hi):
    return PrimOp(name, category, lo, hi)


_SCALAR = [
    _op("+", "scalar", 1, None),
    _op("-", "scalar", 1, None),
    _op("*", "scalar", 1, None),
    _op("/", "scalar", 2, None),
    _op("pow", "scalar", 2, 2),
    _op("modulo", "scalar", 2, 2),
    _op("remainder", "scalar", 2, 2),
    _op("abs", "scalar", 1, 1),
    _op("min", "scalar", 1, None),
    _op("max", "scalar", 1, None),
    _op("sin", "scalar", 1, 1),
    _op("cos", "scalar", 1, 1),
    _op("exp", "scalar", 1, 1),
    _op("sqrt", "scalar", 1, 1),
    _op("log", "scalar", 1, 1),
    _op("=", "scalar", 2, 2),
    _op("<", "scalar", 2, 2),
    _op(">", "scalar", 2, 2),
    _op("<=", "scalar", 2, 2),
    _op(">=", "scalar", 2, 2),
    _op("and", "scalar", 1, None),
    _op("or", "scalar", 1, None),
    _op("not", "scalar", 1, 1),
    _op("if", "scalar", 3, 3),
]

_VECTOR = [
    _op("vec", "vector", 1, None),
    _op("ref", "vector", 2, 2),
    _op("dot", "vector", 2, 2),
    _op("cross", "vector", 2, 2),
    _op("norm", "vector", 1, 1),
    _op("normalize", "vector", 1, 1),
    _op("vsum", "vector", 1, None),
    _op("vlen", "vector", 1, 1),
    _op("scale", "vector", 2, 2),
]

_MATRIX = [
    _op("mat", "matrix", 1, None),
    _op("matmul", "matrix", 2, 2),
    _op("matvec", "matrix", 2, 2),
    _op("transpose", "matrix", 1, 1),
    _op("trace", "matrix", 1, 1),
    _op("det", "matrix", 1, 1),
    _op("inv", "matrix", 1, 1),
    _op("outer", "matrix", 2, 2),
    _op("eye", "matrix", 1, 1),
    _op("zeros", "matrix", 1, 2),
    _op("ones", "matrix", 1, 2),
]

# Structural forms.  Arities here describe the surface syntax: (let <bindings>
# <body>), (loop <bindings> <body>), (letrec <bindings> <body>), (call f a...).
_CONTROL = [
    _op("let", "control", 2, 2),
    _op("let*", "control", 2, 2),
    _op("begin", "control", 1, None),
    _op("loop", "control", 2, 2),
    _op("recur", "control", 1, None),
    _op("letrec", "control", 2, 2),
    _op("call", "control", 1, None),
]

REGISTRY: dict[str, PrimOp] = {op.name: op for op in _SCALAR + _VECTOR + _MATRIX + _CONTROL}

assert len(REGISTRY) == 51

# Names that appear as Prim nodes in the AST (everything except the
# structural forms and `if`, which parses to a dedicated node).
PRIM_NAMES = frozenset(
    op.name for op in _SCALAR + _VECTOR + _MATRIX if op.name != "if"
)

RESERVED_NAMES = frozenset(REGISTRY)

COMPARISON_OPS = frozenset(["=", "<", ">", "<=", ">="])
LOGIC_OPS = frozenset(["and", "or", "not"])


def category_counts() -> dict[str, int]:
    counts: dict[str, int] = {}
    for op in REGISTRY.values():
        counts[op.category] = counts.get(op.category, 0) + 1
    return counts
