"""Tracing front-end: Python callbacks over handles emit IR functions.

A ``fn`` boundary becomes its own IR definition; calling a FuncHandle inside
another trace emits a single Call let and never copies the callee body.
"""

from __future__ import annotations

import contextlib
import inspect
import math
import re
import struct as _struct
import threading
from dataclasses import dataclass

from .errors import (
    AccumulatorEscape,
    ArityMismatch,
    BadCustomJvpSignature,
    EscapeError,
    InferenceFailure,
    IRTypeError,
    NonScalarOpaque,
    TraceError,
)
from .ir.check import _Fail, check_custom_jvp, type_of_expr, typecheck_function
from .ir.syntax import (
    Accumulate,
    AccumBlock,
    ArrayLit,
    Binary,
    Block,
    Call,
    Const,
    FalseLit,
    FinLit,
    For,
    FuncDef,
    Fst,
    Index as IndexExpr,
    Let,
    OpaqueDef,
    PairLit,
    RefFst,
    RefIndex,
    RefSnd,
    Registry,
    Select,
    Snd,
    TrueLit,
    Unary,
    UnitLit,
)
from .ir.types import (
    Acc,
    Arr,
    Bool,
    Fin,
    Kind,
    Pair,
    Real,
    RealTy,
    Ty,
    TypeVar,
    Unit,
    contains_acc,
    kind_of,
    show_type,
    substitute,
    unify,
)

Index = Kind.INDEX
Value = Kind.VALUE
Type = Kind.TYPE


# type specs: plain Ty, records and vectors (which may nest records)


@dataclass(frozen=True)
class RecordType:
    names: tuple
    specs: tuple

    @property
    def ty(self):
        return to_ty(self)

    def __repr__(self):
        inner = ", ".join(f"{n}: {_spec_repr(s)}" for n, s in zip(self.names, self.specs))
        return "struct{" + inner + "}"


@dataclass(frozen=True)
class VecType:
    size: object  # int, Fin, TypeVar or generic name
    elem: object

    @property
    def ty(self):
        return to_ty(self)


def _spec_repr(s):
    return show_type(s) if isinstance(s, Ty) else repr(s)


def struct(fields=None, **kw):
    """Record type; fields lower to right-nested pairs in declaration order."""
    items = dict(fields or {}, **kw)
    if not items:
        raise ValueError("a record needs at least one field")
    return RecordType(tuple(items), tuple(items.values()))


def Vec(n, elem):
    return VecType(n, elem)


Dual = struct(re=Real, du=Real)


def index_type(n):
    match n:
        case int():
            return Fin(n)
        case str():
            return TypeVar(n)
        case Ty():
            return n
    raise TypeError(f"not an index size: {n!r}")


def to_ty(spec):
    match spec:
        case Ty():
            return spec
        case VecType(n, elem):
            return Arr(index_type(n), to_ty(elem))
        case RecordType(_, specs):
            tys = [to_ty(s) for s in specs]
            out = tys[-1]
            for t in reversed(tys[:-1]):
                out = Pair(t, out)
            return out
        case type() if spec is float:
            return Real
        case type() if spec is bool:
            return Bool
    raise TypeError(f"not a type: {spec!r}")


def _spec_subst(spec, mapping):
    match spec:
        case Ty():
            return substitute(spec, mapping)
        case VecType(n, elem):
            return VecType(substitute(index_type(n), mapping), _spec_subst(elem, mapping))
        case RecordType(names, specs):
            return RecordType(names, tuple(_spec_subst(s, mapping) for s in specs))
    return spec


def lift_spec(spec):
    """Forward-mode lift of a spec: Real leaves become Dual records."""
    match spec:
        case RealTy():
            return Dual
        case Acc(inner):
            return Acc(to_ty(lift_spec(inner)))
        case Arr(index, elem):
            return VecType(index, lift_spec(elem))
        case Pair(a, b):
            return Pair(to_ty(lift_spec(a)), to_ty(lift_spec(b)))
        case VecType(n, elem):
            return VecType(n, lift_spec(elem))
        case RecordType(names, specs):
            return RecordType(names, tuple(lift_spec(s) for s in specs))
    return spec


# registries and contexts

_tls = threading.local()
_default_registry = Registry()
_register_lock = threading.Lock()


def current_registry():
    stack = getattr(_tls, "registries", None)
    return stack[-1] if stack else _default_registry


@contextlib.contextmanager
def use_registry(reg=None):
    """Route every fn/opaque defined inside the block into ``reg``."""
    reg = Registry() if reg is None else reg
    stack = getattr(_tls, "registries", None)
    if stack is None:
        stack = _tls.registries = []
    stack.append(reg)
    try:
        yield reg
    finally:
        stack.pop()


def _contexts():
    stack = getattr(_tls, "contexts", None)
    if stack is None:
        stack = _tls.contexts = []
    return stack


def active_context():
    stack = _contexts()
    if not stack:
        raise TraceError("no active trace; primitives can only be used inside fn bodies")
    return stack[-1]


class TraceContext:
    def __init__(self, registry, generics):
        self.registry = registry
        self.genv = dict(generics)
        self.env = {}
        self.names = {}
        self.next_id = 0
        # each open block: (id, lets, const cache)
        self.blocks = []
        self.open_blocks = set()
        self.home = {}
        self._block_counter = 0
        self.vjp_cache = {}

    def fresh(self, ty):
        v = self.next_id
        self.next_id += 1
        self.env[v] = ty
        self.home[v] = self.blocks[-1][0]
        return v

    def push_block(self):
        self._block_counter += 1
        bid = self._block_counter
        self.blocks.append((bid, [], {}))
        self.open_blocks.add(bid)
        return bid

    def pop_block(self):
        bid, lets, _ = self.blocks.pop()
        self.open_blocks.discard(bid)
        return lets

    def emit(self, expr, ty=None):
        if ty is None:
            try:
                ty = type_of_expr(expr, self.env, self.registry, self.genv)
            except _Fail as e:
                raise IRTypeError(e.rule, e.detail) from None
        v = self.fresh(ty)
        self.blocks[-1][1].append(Let(v, ty, expr))
        return v

    def const(self, c):
        key = _struct.pack("<d", c) if not math.isnan(c) else b"nan"
        for _, _, cache in reversed(self.blocks):
            if key in cache:
                return cache[key]
        v = self.emit(Const(float(c)), Real)
        self.blocks[-1][2][key] = v
        return v

    def own(self, h):
        if not isinstance(h, Handle):
            raise TraceError(f"expected a traced value, got {h!r}")
        if h.ctx is not self:
            raise EscapeError("value belongs to a different trace")
        if self.home.get(h.var) not in self.open_blocks:
            raise EscapeError("value escaped from the block that defined it")
        return h.var


class Handle:
    """A traced value: a variable of the function under construction."""

    __slots__ = ("var", "ty", "ctx", "spec")

    def __init__(self, var, ty, ctx, spec=None):
        self.var = var
        self.ty = ty
        self.ctx = ctx
        self.spec = spec if spec is not None else ty

    def __repr__(self):
        return f"<Handle x{self.var}: {show_type(self.ty)}>"

    def __getitem__(self, key):
        spec = self.spec
        if isinstance(key, str):
            if not isinstance(spec, RecordType):
                raise TraceError(f"{self!r} has no fields")
            return field_of(self, key)
        if isinstance(self.ty, Arr):
            return index(self, key)
        if isinstance(self.ty, Pair) and key in (0, 1):
            return fst(self) if key == 0 else snd(self)
        raise TraceError(f"cannot index {self!r}")

    def __iter__(self):
        if isinstance(self.spec, RecordType):
            return iter([field_of(self, n) for n in self.spec.names])
        if isinstance(self.ty, Arr):
            if not isinstance(self.ty.index, Fin):
                raise TraceError("cannot iterate over an array of generic size")
            return iter([index(self, k) for k in range(self.ty.index.n)])
        if isinstance(self.ty, Pair):
            return iter([fst(self), snd(self)])
        raise TraceError(f"cannot iterate over {self!r}")

    def __len__(self):
        if isinstance(self.ty, Arr) and isinstance(self.ty.index, Fin):
            return self.ty.index.n
        if isinstance(self.spec, RecordType):
            return len(self.spec.names)
        raise TraceError(f"{self!r} has no static length")

    def __bool__(self):
        raise TraceError("traced values have no truth value; use select")

    def keys(self):
        if not isinstance(self.spec, RecordType):
            raise TraceError(f"{self!r} is not a record")
        return list(self.spec.names)


def _handle(ctx, v, spec=None):
    return Handle(v, ctx.env[v], ctx, spec)


def field_of(h, name):
    spec = h.spec
    try:
        k = spec.names.index(name)
    except ValueError:
        raise TraceError(f"record has no field {name!r}") from None
    cur = h
    last = len(spec.names) - 1
    for _ in range(k):
        cur = snd(cur)
    if k < last:
        cur = fst(cur)
    return Handle(cur.var, cur.ty, cur.ctx, spec.specs[k])


def lift(value, spec, ctx=None):
    """Turn a host value or handle into a variable of type ``spec``."""
    ctx = ctx or active_context()
    ty = to_ty(spec)
    if isinstance(value, Handle):
        v = ctx.own(value)
        if value.ty != ty:
            raise IRTypeError("ArgType", f"expected {show_type(ty)}, got {show_type(value.ty)}")
        return v
    match ty:
        case RealTy():
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return ctx.const(float(value))
        case Fin(n):
            if isinstance(value, int) and not isinstance(value, bool):
                if not 0 <= value < n:
                    raise IRTypeError("FinOutOfRange", f"{value} is not below {n}")
                return ctx.emit(FinLit(value), ty)
        case _ if ty == Bool:
            if isinstance(value, bool):
                return ctx.emit(TrueLit() if value else FalseLit(), Bool)
        case _ if ty == Unit:
            if value is None or value == ():
                return ctx.emit(UnitLit(), Unit)
        case Arr(index, elem):
            if isinstance(value, (list, tuple)):
                if not (isinstance(index, Fin) and index.n == len(value)):
                    raise IRTypeError("ArrayLitType",
                                      f"{len(value)} elements for {show_type(ty)}")
                elem_spec = spec.elem if isinstance(spec, VecType) else elem
                vs = tuple(lift(x, elem_spec, ctx) for x in value)
                return ctx.emit(ArrayLit(vs), ty)
        case Pair(a, b):
            if isinstance(spec, RecordType) and isinstance(value, dict):
                if set(value) != set(spec.names):
                    raise IRTypeError("RecordFields",
                                      f"expected fields {list(spec.names)}, got {list(value)}")
                vs = [lift(value[n], s, ctx) for n, s in zip(spec.names, spec.specs)]
                out = vs[-1]
                for k in range(len(vs) - 2, -1, -1):
                    out = ctx.emit(PairLit(vs[k], out))
                return out
            if isinstance(value, (list, tuple)) and len(value) == 2:
                x = lift(value[0], a, ctx)
                y = lift(value[1], b, ctx)
                return ctx.emit(PairLit(x, y), ty)
    if isinstance(spec, RecordType) and len(spec.names) == 1 and isinstance(value, dict):
        return lift(value[spec.names[0]], spec.specs[0], ctx)
    raise IRTypeError("ArgType", f"cannot use {value!r} as {show_type(ty)}")


def _real(x, ctx):
    return lift(x, Real, ctx)


def _var_of(x, ctx):
    """Variable for ``x``; host values must be handles or Real numbers."""
    if isinstance(x, Handle):
        return ctx.own(x)
    if isinstance(x, bool):
        return lift(x, Bool, ctx)
    if isinstance(x, (int, float)):
        return ctx.const(float(x))
    raise TraceError(f"cannot lift {x!r} without a type")


# primitives


def _unary(op, x):
    ctx = active_context()
    v = lift(x, Bool, ctx) if op == "not" else _real(x, ctx)
    return _handle(ctx, ctx.emit(Unary(op, v)))


def _binary(op, x, y):
    ctx = active_context()
    if op in ("and", "or", "iff", "xor"):
        a, b = lift(x, Bool, ctx), lift(y, Bool, ctx)
    else:
        a, b = _var_of(x, ctx), _var_of(y, ctx)
    return _handle(ctx, ctx.emit(Binary(op, a, b)))


def neg(x):
    return _unary("neg", x)


def abs(x):  # noqa: A001 - mirrors the IR operator name
    return _unary("abs", x)


def sgn(x):
    return _unary("sgn", x)


def ceil(x):
    return _unary("ceil", x)


def floor(x):
    return _unary("floor", x)


def trunc(x):
    return _unary("trunc", x)


def sqrt(x):
    return _unary("sqrt", x)


def not_(x):
    return _unary("not", x)


def add(x, y):
    return _binary("add", x, y)


def sub(x, y):
    return _binary("sub", x, y)


def mul(x, y):
    return _binary("mul", x, y)


def div(x, y):
    return _binary("div", x, y)


def and_(x, y):
    return _binary("and", x, y)


def or_(x, y):
    return _binary("or", x, y)


def iff(x, y):
    return _binary("iff", x, y)


def xor(x, y):
    return _binary("xor", x, y)


def neq(x, y):
    return _binary("neq", x, y)


def lt(x, y):
    return _binary("lt", x, y)


def leq(x, y):
    return _binary("leq", x, y)


def eq(x, y):
    return _binary("eq", x, y)


def gt(x, y):
    return _binary("gt", x, y)


def geq(x, y):
    return _binary("geq", x, y)


def select(p, *rest):
    """``select(p, x, y)`` or, with the type spelled out, ``select(p, T, x, y)``."""
    ctx = active_context()
    if len(rest) == 3:
        spec, x, y = rest
    elif len(rest) == 2:
        x, y = rest
        ref = x if isinstance(x, Handle) else y
        spec = ref.spec if isinstance(ref, Handle) else Real
    else:
        raise ArityMismatch("select takes (p, x, y) or (p, type, x, y)")
    pv = lift(p, Bool, ctx)
    xv = lift(x, spec, ctx) if not isinstance(x, Handle) else ctx.own(x)
    yv = lift(y, spec, ctx) if not isinstance(y, Handle) else ctx.own(y)
    v = ctx.emit(Select(pv, xv, yv))
    return _handle(ctx, v, spec if to_ty(spec) == ctx.env[v] else None)


def pair(x, y):
    ctx = active_context()
    return _handle(ctx, ctx.emit(PairLit(_var_of(x, ctx), _var_of(y, ctx))))


def fst(p):
    ctx = active_context()
    return _handle(ctx, ctx.emit(Fst(ctx.own(p))))


def snd(p):
    ctx = active_context()
    return _handle(ctx, ctx.emit(Snd(ctx.own(p))))


def _elem_spec(spec):
    return spec.elem if isinstance(spec, VecType) else None


def index(a, i):
    ctx = active_context()
    av = ctx.own(a)
    if not isinstance(a.ty, Arr):
        raise IRTypeError("IndexTarget", f"{show_type(a.ty)} is not an array")
    iv = lift(i, a.ty.index, ctx)
    return _handle(ctx, ctx.emit(IndexExpr(av, iv)), _elem_spec(a.spec))


def ref_index(acc, i):
    ctx = active_context()
    av = ctx.own(acc)
    if not (isinstance(acc.ty, Acc) and isinstance(acc.ty.inner, Arr)):
        raise IRTypeError("RefIndexTarget", f"{show_type(acc.ty)} is not an array accumulator")
    iv = lift(i, acc.ty.inner.index, ctx)
    return _handle(ctx, ctx.emit(RefIndex(av, iv)))


def ref_fst(acc):
    ctx = active_context()
    return _handle(ctx, ctx.emit(RefFst(ctx.own(acc))))


def ref_snd(acc):
    ctx = active_context()
    return _handle(ctx, ctx.emit(RefSnd(ctx.own(acc))))


def accumulate(acc, value):
    """``acc += value``; returns the unit-typed handle."""
    ctx = active_context()
    av = ctx.own(acc)
    if not isinstance(acc.ty, Acc):
        raise IRTypeError("AccumulateTarget", f"{show_type(acc.ty)} is not an accumulator")
    vv = lift(value, acc.ty.inner, ctx)
    return _handle(ctx, ctx.emit(Accumulate(av, vv)))


def unit():
    ctx = active_context()
    return _handle(ctx, ctx.emit(UnitLit(), Unit))


def vec(*elems):
    """Array literal from handles (or Real host numbers)."""
    if len(elems) == 1 and isinstance(elems[0], (list, tuple)):
        elems = tuple(elems[0])
    ctx = active_context()
    vs = tuple(_var_of(x, ctx) for x in elems)
    if not vs:
        raise InferenceFailure("empty vec needs a type; use lift([], Vec(0, T))")
    spec = elems[0].spec if isinstance(elems[0], Handle) else Real
    return _handle(ctx, ctx.emit(ArrayLit(vs)), VecType(len(vs), spec))


def _close_body(ctx, result, spec=None):
    if spec is not None:
        return lift(result, spec, ctx)
    if isinstance(result, Handle):
        return ctx.own(result)
    if result is None:
        return ctx.emit(UnitLit(), Unit)
    return _var_of(result, ctx)


def array(n, body, elem=None):
    """``[for i: n, body(i)]``; ``elem`` optionally fixes the element spec."""
    ctx = active_context()
    ity = index_type(n)
    try:
        if kind_of(ity, ctx.genv) != Kind.INDEX:
            raise IRTypeError("NonIndexType", show_type(ity))
    except Exception as e:
        if isinstance(e, IRTypeError):
            raise
        raise IRTypeError("NonIndexType", str(e)) from None
    ctx.push_block()
    try:
        i = ctx.fresh(ity)
        res = body(_handle(ctx, i))
        rv = _close_body(ctx, res, elem)
        res_spec = elem if elem is not None else (res.spec if isinstance(res, Handle) else None)
    finally:
        lets = ctx.pop_block()
    ety = ctx.env[rv]
    if contains_acc(ety):
        raise IRTypeError("AccumulatorEscape", "array elements must be values")
    v = ctx.emit(For(i, ity, Block(tuple(lets), rv)), Arr(ity, ety))
    return _handle(ctx, v, VecType(ity, res_spec if res_spec is not None else ety))


def accum(init, body, spec=None):
    """``accum a from init in body(a)``; returns the (decayed, result) pair."""
    ctx = active_context()
    iv = lift(init, spec, ctx) if spec is not None else _var_of(init, ctx)
    ctx.push_block()
    try:
        a = ctx.fresh(Acc(ctx.env[iv]))
        res = body(_handle(ctx, a))
        rv = _close_body(ctx, res)
    finally:
        lets = ctx.pop_block()
    rty = ctx.env[rv]
    if contains_acc(rty):
        raise AccumulatorEscape("the accumulator escapes its accum block")
    v = ctx.emit(AccumBlock(a, iv, Block(tuple(lets), rv)), Pair(ctx.env[iv], rty))
    return _handle(ctx, v)


def sum(n, body):  # noqa: A001 - shadows the builtin on purpose
    """Sum of ``body(i)`` over ``i: n`` using an accumulator."""
    ctx = active_context()
    z = ctx.const(0.0)

    def loop(a):
        def each(i):
            x = _real(body(i), ctx)
            return _handle(ctx, ctx.emit(Accumulate(ctx.own(a), x)))
        return array(n, each)

    t = accum(_handle(ctx, z), loop)
    return fst(t)


# functions


class FuncHandle:
    """A registered IR function (traced or opaque)."""

    def __init__(self, name, registry, params, ret, kind, generics=()):
        self.name = name
        self.registry = registry
        self.params = tuple(params)
        self.ret = ret
        self.kind = kind
        self.generics = tuple(generics)

    def __repr__(self):
        return f"<{self.kind} fn {self.name}>"

    @property
    def definition(self):
        return self.registry[self.name]

    @property
    def jvp(self):
        name = self.registry.custom_jvp.get(self.name)
        return None if name is None else _handles.get((id(self.registry), name))

    @jvp.setter
    def jvp(self, g):
        set_jvp(self, g)

    def __call__(self, *args, type_args=None):
        return call(self, *args, type_args=type_args)


_handles = {}


def _kinds(generics):
    out = []
    for g in generics or ():
        if isinstance(g, str):
            out.append((g, Kind.INDEX))
        else:
            name, kind = g
            out.append((name, kind))
    return tuple(out)


def _param_names(body, n):
    try:
        sig = inspect.signature(body)
    except (TypeError, ValueError):
        return [None] * n
    names = [p.name for p in sig.parameters.values()
             if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)]
    names = [x if re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", x) else None for x in names]
    return (names + [None] * n)[:n]


def _default_name(body):
    name = getattr(body, "__name__", "") or ""
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name) or name == "<lambda>":
        return "f"
    return name


def fn(param_specs, ret_spec, body, *, name=None, generics=None):
    """Trace ``body`` once over fresh parameter handles and register the def."""
    reg = current_registry()
    generics = _kinds(generics)
    ret_ty = to_ty(ret_spec)
    if contains_acc(ret_ty):
        raise AccumulatorEscape("a function cannot return an accumulator")
    ctx = TraceContext(reg, generics)
    stack = _contexts()
    stack.append(ctx)
    try:
        ctx.push_block()
        params = []
        handles = []
        pnames = _param_names(body, len(param_specs))
        for spec, pname in zip(param_specs, pnames):
            ty = to_ty(spec)
            v = ctx.fresh(ty)
            if pname:
                ctx.names[v] = pname
            params.append((v, ty))
            handles.append(Handle(v, ty, ctx, spec))
        result = body(*handles)
        if isinstance(result, Handle) and result.ctx is not ctx:
            raise EscapeError("the body returned a value from another trace")
        rv = lift(result, ret_spec, ctx)
        if ctx.env[rv] != ret_ty:
            raise IRTypeError("ResultType",
                              f"body returned {show_type(ctx.env[rv])}, declared {show_type(ret_ty)}")
        lets = ctx.pop_block()
    finally:
        stack.pop()
    with _register_lock:
        fname = reg.fresh_name(name or _default_name(body))
        d = FuncDef(fname, generics, tuple(params), ret_ty, Block(tuple(lets), rv),
                    names=dict(ctx.names), origin=("traced",))
        typecheck_function(d, reg)
        reg.add(d)
    h = FuncHandle(fname, reg, param_specs, ret_spec, "traced", generics)
    _handles[(id(reg), fname)] = h
    return h


def _host_id(routine, name):
    mod = getattr(routine, "__module__", None)
    qual = getattr(routine, "__qualname__", "") or getattr(routine, "__name__", "")
    if mod in ("math", "builtins") and re.fullmatch(r"\w+", qual or ""):
        return f"math.{qual}" if mod == "math" else qual
    return f"host.{name}"


def opaque(param_specs, ret_spec, routine=None, *, name=None, host=None):
    """Declare a host-implemented scalar function."""
    reg = current_registry()
    params = tuple(to_ty(p) for p in param_specs)
    ret = to_ty(ret_spec)
    if not all(p == Real for p in params) or ret != Real:
        raise NonScalarOpaque("opaque functions map Reals to a Real")
    with _register_lock:
        base = name or (getattr(routine, "__name__", None) if routine else None) or "opaque"
        fname = reg.fresh_name(base if re.fullmatch(r"\w+", base) and base != "<lambda>" else "opaque")
        hid = host or (_host_id(routine, fname) if routine is not None else "")
        if routine is not None:
            reg.hosts[hid] = routine
        reg.add(OpaqueDef(fname, params, ret, hid))
    h = FuncHandle(fname, reg, param_specs, ret_spec, "opaque")
    _handles[(id(reg), fname)] = h
    return h


def set_jvp(f, g):
    """Use ``g`` (a dual-typed fn) as the derivative of ``f``."""
    if f.registry is not g.registry:
        raise BadCustomJvpSignature("function and derivative live in different registries")
    err = check_custom_jvp(f.registry, f.name, g.name)
    if err:
        raise err
    f.registry.set_jvp(f.name, g.name)


def call(f, *args, type_args=None):
    ctx = active_context()
    if f.registry is not ctx.registry:
        raise TraceError(f"{f.name} belongs to a different registry")
    if len(args) != len(f.params):
        raise ArityMismatch(f"{f.name} takes {len(f.params)} arguments, got {len(args)}")
    generics = f.generics
    mapping = {}
    if type_args is not None:
        if len(type_args) != len(generics):
            raise ArityMismatch(f"{f.name} takes {len(generics)} type arguments")
        mapping = {g: index_type(t) for (g, _), t in zip(generics, type_args)}
    vs = []
    for a, spec in zip(args, f.params):
        pty = to_ty(spec)
        if isinstance(a, Handle):
            v = ctx.own(a)
            if not unify(substitute(pty, mapping) if mapping else pty, a.ty, mapping):
                raise IRTypeError("ArgType",
                                  f"{f.name} expects {show_type(pty)}, got {show_type(a.ty)}")
        else:
            if isinstance(a, (list, tuple)) and isinstance(pty, Arr) and isinstance(pty.index, TypeVar):
                mapping.setdefault(pty.index.name, Fin(len(a)))
            v = lift(a, _spec_subst(spec, mapping), ctx)
        vs.append(v)
    missing = [g for g, _ in generics if g not in mapping]
    if missing:
        raise InferenceFailure(f"cannot infer type argument {missing[0]} of {f.name}")
    targs = tuple(mapping[g] for g, _ in generics)
    v = ctx.emit(Call(f.name, targs, tuple(vs)))
    spec = _spec_subst(f.ret, mapping)
    return _handle(ctx, v, spec)


def handle_for(reg, name):
    """FuncHandle for a registry entry (creating a plain one if needed)."""
    h = _handles.get((id(reg), name))
    if h is not None:
        return h
    item = reg[name]
    if isinstance(item, OpaqueDef):
        h = FuncHandle(name, reg, item.params, item.ret, "opaque")
    else:
        h = FuncHandle(name, reg, item.param_types, item.ret, "traced", item.generics)
    _handles[(id(reg), name)] = h
    return h
