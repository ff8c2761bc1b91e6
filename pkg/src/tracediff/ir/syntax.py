"""ANF expressions, blocks, definitions and the function registry."""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, field, replace

from .types import Ty

UNARY_OPS = ("not", "neg", "abs", "sgn", "ceil", "floor", "trunc", "sqrt")
BINARY_OPS = (
    "and", "or", "iff", "xor",
    "neq", "lt", "leq", "eq", "gt", "geq",
    "add", "sub", "mul", "div",
)
LOGIC_OPS = ("and", "or", "iff", "xor")
COMPARE_OPS = ("neq", "lt", "leq", "eq", "gt", "geq")
ARITH_OPS = ("add", "sub", "mul", "div")


class Expr:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class UnitLit(Expr):
    pass


@dataclass(frozen=True, slots=True)
class TrueLit(Expr):
    pass


@dataclass(frozen=True, slots=True)
class FalseLit(Expr):
    pass


@dataclass(frozen=True, slots=True, eq=False)
class Const(Expr):
    value: float

    def _bits(self):
        return struct.pack("<d", self.value)

    def __eq__(self, other):
        if not isinstance(other, Const):
            return NotImplemented
        if math.isnan(self.value) and math.isnan(other.value):
            return True
        return self._bits() == other._bits()

    def __hash__(self):
        return hash(("Const", b"nan" if math.isnan(self.value) else self._bits()))


@dataclass(frozen=True, slots=True)
class FinLit(Expr):
    value: int


@dataclass(frozen=True, slots=True)
class ArrayLit(Expr):
    elems: tuple


@dataclass(frozen=True, slots=True)
class PairLit(Expr):
    first: int
    second: int


@dataclass(frozen=True, slots=True)
class Unary(Expr):
    op: str
    arg: int


@dataclass(frozen=True, slots=True)
class Binary(Expr):
    op: str
    left: int
    right: int


@dataclass(frozen=True, slots=True)
class Select(Expr):
    cond: int
    then: int
    other: int


@dataclass(frozen=True, slots=True)
class Accumulate(Expr):
    target: int
    value: int


@dataclass(frozen=True, slots=True)
class Index(Expr):
    arr: int
    index: int


@dataclass(frozen=True, slots=True)
class Fst(Expr):
    arg: int


@dataclass(frozen=True, slots=True)
class Snd(Expr):
    arg: int


@dataclass(frozen=True, slots=True)
class RefIndex(Expr):
    arr: int
    index: int


@dataclass(frozen=True, slots=True)
class RefFst(Expr):
    arg: int


@dataclass(frozen=True, slots=True)
class RefSnd(Expr):
    arg: int


@dataclass(frozen=True, slots=True)
class Call(Expr):
    func: str
    type_args: tuple
    args: tuple


@dataclass(frozen=True, slots=True)
class For(Expr):
    var: int
    index_ty: Ty
    body: "Block"


@dataclass(frozen=True, slots=True)
class AccumBlock(Expr):
    acc: int
    init: int
    body: "Block"


@dataclass(frozen=True, slots=True)
class Let:
    var: int
    ty: Ty
    expr: Expr


@dataclass(frozen=True, slots=True)
class Block:
    lets: tuple
    result: int


@dataclass(frozen=True)
class FuncDef:
    name: str
    generics: tuple  # of (name, Kind)
    params: tuple  # of (var, Ty)
    ret: Ty
    body: Block
    names: dict = field(default_factory=dict, compare=False, hash=False)
    # provenance tag, e.g. ("jvp", "sin") or ("fwd", "jvp_f"); not part of identity
    origin: tuple = field(default=(), compare=False, hash=False)

    @property
    def param_types(self):
        return tuple(ty for _, ty in self.params)

    @property
    def generic_env(self):
        return dict(self.generics)

    def let_count(self):
        return block_size(self.body)


@dataclass(frozen=True)
class OpaqueDef:
    name: str
    params: tuple  # of Ty
    ret: Ty
    host: str = field(default="", compare=True)

    generics = ()

    @property
    def param_types(self):
        return self.params


def operands(expr):
    """Variables read directly by ``expr`` (not those inside nested blocks)."""
    match expr:
        case ArrayLit(elems):
            return tuple(elems)
        case PairLit(a, b) | Binary(_, a, b) | Accumulate(a, b) | Index(a, b) | RefIndex(a, b):
            return (a, b)
        case Unary(_, a) | Fst(a) | Snd(a) | RefFst(a) | RefSnd(a):
            return (a,)
        case Select(p, a, b):
            return (p, a, b)
        case Call(_, _, args):
            return tuple(args)
        case AccumBlock(_, init, _):
            return (init,)
    return ()


def nested_blocks(expr):
    match expr:
        case For(_, _, body) | AccumBlock(_, _, body):
            return (body,)
    return ()


def rename_expr(expr, f):
    """Apply ``f`` to every operand variable of ``expr`` (not nested blocks)."""
    match expr:
        case ArrayLit(elems):
            return ArrayLit(tuple(f(v) for v in elems))
        case PairLit(a, b):
            return PairLit(f(a), f(b))
        case Unary(op, a):
            return Unary(op, f(a))
        case Binary(op, a, b):
            return Binary(op, f(a), f(b))
        case Select(p, a, b):
            return Select(f(p), f(a), f(b))
        case Accumulate(a, b):
            return Accumulate(f(a), f(b))
        case Index(a, b):
            return Index(f(a), f(b))
        case RefIndex(a, b):
            return RefIndex(f(a), f(b))
        case Fst(a):
            return Fst(f(a))
        case Snd(a):
            return Snd(f(a))
        case RefFst(a):
            return RefFst(f(a))
        case RefSnd(a):
            return RefSnd(f(a))
        case Call(fn, targs, args):
            return Call(fn, targs, tuple(f(v) for v in args))
        case AccumBlock(acc, init, body):
            return AccumBlock(acc, f(init), body)
    return expr


def iter_lets(block):
    """Pre-order walk over every let, descending into nested blocks."""
    for let in block.lets:
        yield let
        for inner in nested_blocks(let.expr):
            yield from iter_lets(inner)


def block_size(block):
    return sum(1 for _ in iter_lets(block))


def uses(block, counts=None):
    """Count variable reads in ``block`` including nested blocks and results."""
    counts = {} if counts is None else counts
    for let in block.lets:
        for v in operands(let.expr):
            counts[v] = counts.get(v, 0) + 1
        for inner in nested_blocks(let.expr):
            uses(inner, counts)
    counts[block.result] = counts.get(block.result, 0) + 1
    return counts


def canonicalize(d):
    """Renumber variables densely in binding order (params first)."""
    mapping = {}
    names = {}

    def bind(v):
        new = len(mapping)
        mapping[v] = new
        if v in d.names:
            names[new] = d.names[v]
        return new

    def look(v):
        # unbound references keep a negative id so the checker can report them
        return mapping.get(v, -1 - abs(v) if v >= 0 else v)

    def walk(block):
        lets = []
        for let in block.lets:
            expr = rename_expr(let.expr, look)
            match expr:
                case For(var, ity, body):
                    nv = bind(var)
                    expr = For(nv, ity, walk(body))
                case AccumBlock(acc, init, body):
                    na = bind(acc)
                    expr = AccumBlock(na, init, walk(body))
            lets.append(Let(bind(let.var), let.ty, expr))
        return Block(tuple(lets), look(block.result))

    params = tuple((bind(v), ty) for v, ty in d.params)
    body = walk(d.body)
    return replace(d, params=params, body=body, names=names)


_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class Registry:
    """Ordered collection of function definitions and opaque declarations.

    Entries are kept in registration order, which is always a valid
    callee-before-caller order for registries built by tracing.
    """

    def __init__(self):
        self._items = {}
        self.custom_jvp = {}
        self.hosts = {}
        # transform bookkeeping: jvp def -> base function it differentiates
        self.jvp_base = {}
        self.memo = {}

    def __contains__(self, name):
        return name in self._items

    def __getitem__(self, name):
        return self._items[name]

    def get(self, name, default=None):
        return self._items.get(name, default)

    def __iter__(self):
        return iter(self._items.values())

    def __len__(self):
        return len(self._items)

    def names(self):
        return list(self._items)

    def defs(self):
        return [x for x in self._items.values() if isinstance(x, FuncDef)]

    def opaques(self):
        return [x for x in self._items.values() if isinstance(x, OpaqueDef)]

    def is_opaque(self, name):
        return isinstance(self._items.get(name), OpaqueDef)

    def fresh_name(self, base):
        if not _NAME_RE.fullmatch(base):
            base = re.sub(r"\W", "_", base) or "f"
            if base[0].isdigit():
                base = "f" + base
        if base not in self._items and base not in _RESERVED:
            return base
        k = 1
        while f"{base}_{k}" in self._items:
            k += 1
        return f"{base}_{k}"

    def add(self, item):
        if item.name in self._items:
            raise ValueError(f"duplicate function name {item.name!r}")
        if isinstance(item, FuncDef):
            item = canonicalize(item)
        self._items[item.name] = item
        return item

    def replace(self, item):
        if item.name not in self._items:
            raise KeyError(item.name)
        if isinstance(item, FuncDef):
            item = canonicalize(item)
        self._items[item.name] = item
        return item

    def set_jvp(self, name, jvp_name):
        self.custom_jvp[name] = jvp_name
        self.jvp_base[jvp_name] = name

    def copy(self):
        other = Registry()
        other._items = dict(self._items)
        other.custom_jvp = dict(self.custom_jvp)
        other.hosts = dict(self.hosts)
        other.jvp_base = dict(self.jvp_base)
        other.memo = dict(self.memo)
        return other

    def structure(self):
        """Comparable snapshot used for structural equality."""
        return (tuple(self._items.items()), tuple(sorted(self.custom_jvp.items())))

    def __eq__(self, other):
        if not isinstance(other, Registry):
            return NotImplemented
        return self.structure() == other.structure()

    __hash__ = None


_RESERVED = frozenset(
    "def opaque jvp let in for accum from fst snd select true false inf nan "
    "Bool Real Index Value Type not neg abs sgn ceil floor trunc sqrt".split()
)
