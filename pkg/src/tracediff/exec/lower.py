"""Lowering of monomorphized definitions to Python functions.

Each (definition, concrete type arguments) pair becomes exactly one Python
function; calls stay calls.  Every lowered function takes the op-counter
list as a hidden first argument so that concurrent invocations do not share
counters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .._deep import deep
from ..errors import MissingHostRoutine, UnboundIndexGeneric
from ..ir.syntax import (
    Accumulate,
    AccumBlock,
    ArrayLit,
    Binary,
    Call,
    Const,
    FalseLit,
    FinLit,
    For,
    Fst,
    Index,
    OpaqueDef,
    PairLit,
    RefFst,
    RefIndex,
    RefSnd,
    Select,
    Snd,
    TrueLit,
    Unary,
    UnitLit,
    block_size,
)
from ..ir.check import let_types
from ..ir.types import Acc, Arr, Fin, Pair, RealTy, free_type_vars, show_type, substitute
from .runtime import HELPERS, host_wrapper

_BINARY = {
    "add": "+", "sub": "-", "mul": "*",
    "lt": "<", "leq": "<=", "gt": ">", "geq": ">=", "eq": "==", "neq": "!=",
    "iff": "==", "xor": "!=", "and": "and", "or": "or",
}
_UNARY = {"abs": "abs", "sgn": "_sgn", "sqrt": "_sqrt", "ceil": "_ceil", "floor": "_floor",
          "trunc": "_trunc"}


def real_leaves(ty):
    """Number of Real leaves of a concrete type (the cost of adding two values)."""
    match ty:
        case RealTy():
            return 1
        case Pair(a, b):
            return real_leaves(a) + real_leaves(b)
        case Arr(Fin(n), e):
            return n * real_leaves(e)
    return 0


@dataclass
class Instance:
    key: tuple
    index: int
    pyname: str
    static_lets: int
    fn: object = None


class Lowering:
    """Builds the instance table for everything reachable from one entry."""

    def __init__(self, reg, count):
        self.reg = reg
        self.count = count
        self.instances = {}
        self.hosts = {}
        self.ns = dict(HELPERS)
        self.pending = []

    def instance(self, name, targs):
        key = (name, tuple(targs))
        inst = self.instances.get(key)
        if inst is None:
            d = self.reg[name]
            inst = Instance(key, len(self.instances), f"_f{len(self.instances)}",
                            block_size(d.body))
            self.instances[key] = inst
            self.pending.append(inst)
        return inst

    def host(self, name):
        if name not in self.hosts:
            item = self.reg[name]
            routine = self.reg.hosts.get(item.host) or _math_routine(item.host)
            if routine is None:
                raise MissingHostRoutine(f"no host routine bound for opaque {name} ({item.host!r})")
            py = f"_h{len(self.hosts)}"
            self.ns[py] = host_wrapper(name, routine)
            self.hosts[name] = py
        return self.hosts[name]

    @deep
    def build(self, name, targs):
        entry = self.instance(name, targs)
        while self.pending:
            inst = self.pending.pop()
            src = _Writer(self, inst).source()
            code = compile(src, f"<lowered {inst.key[0]}>", "exec")
            exec(code, self.ns)  # noqa: S102 - our own generated source
        for inst in self.instances.values():
            inst.fn = self.ns[inst.pyname]
        return entry


def _math_routine(host):
    if host.startswith("math."):
        return getattr(math, host[5:], None)
    if host in ("abs", "min", "max", "pow"):
        return {"abs": abs, "min": min, "max": max, "pow": pow}[host]
    return None


def check_bindable(d):
    """Every generic of an entry point must be fixed by some parameter type."""
    seen = set()
    for ty in d.param_types:
        free_type_vars(ty, seen)
    for name, _ in d.generics:
        if name not in seen:
            raise UnboundIndexGeneric(f"generic {name} of {d.name} does not occur in a parameter type")


class _Writer:
    def __init__(self, low, inst):
        self.low = low
        self.inst = inst
        self.d = low.reg[inst.key[0]]
        self.mapping = {n: t for (n, _), t in zip(self.d.generics, inst.key[1])}
        self.types = let_types(self.d)
        self.lines = []
        self.stores = 0

    def ty(self, t):
        t = substitute(t, self.mapping)
        if free_type_vars(t):
            raise UnboundIndexGeneric(f"{self.d.name}: type {show_type(t)} is not concrete")
        return t

    def source(self):
        params = ", ".join(["_C"] + [f"v{v}" for v, _ in self.d.params])
        self.lines.append(f"def {self.inst.pyname}({params}):")
        res = self.block(self.d.body, 1)
        self.lines.append(f"    return v{res}")
        return "\n".join(self.lines) + "\n"

    def block(self, block, depth):
        pad = "    " * depth
        if self.low.count:
            n = sum(self.cost(let) for let in block.lets)
            if n:
                self.lines.append(f"{pad}_C[{self.inst.index}] += {n}")
        for let in block.lets:
            self.let(let, depth)
        return block.result

    def cost(self, let):
        match let.expr:
            case Unary() | Binary() | Select():
                return 1
            case Accumulate():
                return max(1, real_leaves(self.ty(self.types[let.expr.value])))
            case Call(g, _, _) if isinstance(self.low.reg[g], OpaqueDef):
                return 1
        return 0

    def let(self, let, depth):
        pad = "    " * depth
        x = f"v{let.var}"
        emit = self.lines.append
        match let.expr:
            case UnitLit():
                emit(f"{pad}{x} = None")
            case TrueLit():
                emit(f"{pad}{x} = True")
            case FalseLit():
                emit(f"{pad}{x} = False")
            case Const(c):
                emit(f"{pad}{x} = {_float_src(c)}")
            case FinLit(k):
                emit(f"{pad}{x} = {k}")
            case ArrayLit(elems):
                emit(f"{pad}{x} = [{', '.join(f'v{v}' for v in elems)}]")
            case PairLit(a, b):
                emit(f"{pad}{x} = (v{a}, v{b})")
            case Unary("neg", a):
                emit(f"{pad}{x} = -v{a}")
            case Unary("not", a):
                emit(f"{pad}{x} = not v{a}")
            case Unary(op, a):
                emit(f"{pad}{x} = {_UNARY[op]}(v{a})")
            case Binary("div", a, b):
                emit(f"{pad}{x} = v{a} / v{b} if v{b} else _div(v{a}, v{b})")
            case Binary(op, a, b):
                emit(f"{pad}{x} = v{a} {_BINARY[op]} v{b}")
            case Select(p, a, b):
                emit(f"{pad}{x} = v{a} if v{p} else v{b}")
            case Accumulate(t, v):
                if self.is_real_target(t):
                    emit(f"{pad}_c = v{t}; _c[0][_c[1]] += v{v}")
                else:
                    emit(f"{pad}_acc_add(v{t}[0], v{t}[1], v{v})")
                emit(f"{pad}{x} = None")
            case Index(a, i):
                emit(f"{pad}{x} = v{a}[v{i}]")
            case RefIndex(a, i):
                emit(f"{pad}{x} = (v{a}[0][v{a}[1]], v{i})")
            case RefFst(a):
                emit(f"{pad}{x} = (v{a}[0][v{a}[1]], 0)")
            case RefSnd(a):
                emit(f"{pad}{x} = (v{a}[0][v{a}[1]], 1)")
            case Fst(p):
                emit(f"{pad}{x} = v{p}[0]")
            case Snd(p):
                emit(f"{pad}{x} = v{p}[1]")
            case Call(g, targs, args):
                argsrc = ", ".join(f"v{a}" for a in args)
                if isinstance(self.low.reg[g], OpaqueDef):
                    emit(f"{pad}{x} = {self.low.host(g)}({argsrc})")
                else:
                    inst = self.low.instance(g, tuple(self.ty(t) for t in targs))
                    emit(f"{pad}{x} = {inst.pyname}({', '.join(['_C'] + [f'v{a}' for a in args])})")
            case For(i, ity, body):
                n = self.ty(ity).n
                emit(f"{pad}{x} = [None] * {n}")
                emit(f"{pad}for v{i} in range({n}):")
                res = self.block(body, depth + 1)
                emit(f"{pad}    {x}[v{i}] = v{res}")
            case AccumBlock(acc, init, body):
                s = f"_s{self.stores}"
                self.stores += 1
                real = isinstance(self.ty(self.types[init]), RealTy)
                emit(f"{pad}{s} = [0.0]" if real else f"{pad}{s} = [_zero(v{init})]")
                emit(f"{pad}v{acc} = ({s}, 0)")
                res = self.block(body, depth)
                dec = f"{s}[0]" if real else f"_freeze({s}[0])"
                emit(f"{pad}{x} = ({dec}, v{res})")
            case _:
                raise TypeError(f"cannot lower {let.expr!r}")

    def is_real_target(self, t):
        ty = self.types[t]
        return isinstance(ty, Acc) and isinstance(ty.inner, RealTy)


def _float_src(c):
    if math.isnan(c):
        return "_NAN"
    if math.isinf(c):
        return "_INF" if c > 0 else "-_INF"
    return repr(c)
