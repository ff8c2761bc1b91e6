"""Kind and type checking for definitions, plus whole-registry validation."""

from __future__ import annotations

from ..errors import (
    BadCustomJvpSignature,
    IRTypeError,
    KindError,
    NonScalarOpaque,
    RecursionCycle,
    UnresolvedCallee,
    ValidationErrors,
)
from .syntax import (
    COMPARE_OPS,
    LOGIC_OPS,
    Accumulate,
    AccumBlock,
    ArrayLit,
    Binary,
    Call,
    Const,
    FalseLit,
    FinLit,
    For,
    FuncDef,
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
    iter_lets,
)
from .types import (
    Acc,
    Arr,
    Bool,
    Fin,
    Kind,
    Pair,
    Real,
    RealTy,
    Unit,
    dual_type,
    kind_of,
    show_type,
    substitute,
)


class _Fail(Exception):
    def __init__(self, rule, detail=""):
        self.rule = rule
        self.detail = detail


def _need(cond, rule, detail=""):
    # detail may be a thunk so that large types are only rendered on failure
    if not cond:
        raise _Fail(rule, detail() if callable(detail) else detail)


def _kind(ty, genv):
    try:
        return kind_of(ty, genv)
    except KindError as e:
        raise _Fail(e.reason, str(e)) from None


def _signature(callee):
    if isinstance(callee, OpaqueDef):
        return (), tuple(callee.params), callee.ret
    return tuple(callee.generics), callee.param_types, callee.ret


def type_of_expr(expr, env, reg, genv, hint=None):
    """Type of a non-block expression under ``env`` (var -> Ty).

    ``hint`` is the declared let type; it is required for literals whose
    type is not determined by their operands (Fin literals, empty arrays).
    Raises ``_Fail`` on a rule violation.
    """

    def get(v):
        _need(v in env, "UnboundVar", f"x{v}" if v >= 0 else "unknown variable")
        return env[v]

    match expr:
        case UnitLit():
            return Unit
        case TrueLit() | FalseLit():
            return Bool
        case Const():
            return Real
        case FinLit(m):
            _need(isinstance(hint, Fin), "FinLitType", f"index literal {m} needs a Fin type")
            _need(0 <= m < hint.n, "FinOutOfRange", f"{m} is not below {hint.n}")
            return hint
        case ArrayLit(elems):
            tys = [get(v) for v in elems]
            if not tys:
                _need(isinstance(hint, Arr) and hint.index == Fin(0), "ArrayLitType",
                      "empty array literal needs type [0]T")
                return hint
            _need(all(t == tys[0] for t in tys), "ArrayLitType", "elements differ in type")
            _need(_kind(tys[0], genv) <= Kind.VALUE, "NonValueComponent", "array element")
            return Arr(Fin(len(tys)), tys[0])
        case PairLit(a, b):
            ta, tb = get(a), get(b)
            _need(_kind(ta, genv) <= Kind.VALUE and _kind(tb, genv) <= Kind.VALUE,
                  "NonValueComponent", "pair component")
            return Pair(ta, tb)
        case Unary(op, x):
            tx = get(x)
            if op == "not":
                _need(tx == Bool, "UnaryOperand", lambda: f"not expects Bool, got {show_type(tx)}")
                return Bool
            _need(tx == Real, "UnaryOperand", lambda: f"{op} expects Real, got {show_type(tx)}")
            return Real
        case Binary(op, x, y):
            tx, ty = get(x), get(y)
            if op in LOGIC_OPS:
                _need(tx == Bool and ty == Bool, "BinaryOperand", f"{op} expects Bool operands")
                return Bool
            _need(tx == Real and ty == Real, "BinaryOperand", f"{op} expects Real operands")
            return Bool if op in COMPARE_OPS else Real
        case Select(p, x, y):
            _need(get(p) == Bool, "SelectCondition", "condition must be Bool")
            tx, ty = get(x), get(y)
            _need(tx == ty, "SelectBranches", lambda: f"{show_type(tx)} vs {show_type(ty)}")
            return tx
        case Accumulate(x, y):
            tx, ty = get(x), get(y)
            _need(isinstance(tx, Acc), "AccumulateTarget", lambda: f"{show_type(tx)} is not an accumulator")
            _need(tx.inner == ty, "AccumulateValue", lambda: f"{show_type(ty)} into {show_type(tx)}")
            return Unit
        case Index(a, i):
            ta, ti = get(a), get(i)
            _need(isinstance(ta, Arr), "IndexTarget", lambda: f"{show_type(ta)} is not an array")
            _need(ta.index == ti, "IndexType", lambda: f"index {show_type(ti)} for {show_type(ta)}")
            return ta.elem
        case RefIndex(a, i):
            ta, ti = get(a), get(i)
            _need(isinstance(ta, Acc) and isinstance(ta.inner, Arr), "RefIndexTarget",
                  lambda: f"{show_type(ta)} is not an array accumulator")
            _need(ta.inner.index == ti, "IndexType", lambda: f"index {show_type(ti)} for {show_type(ta)}")
            return Acc(ta.inner.elem)
        case Fst(x) | Snd(x):
            tx = get(x)
            _need(isinstance(tx, Pair), "ProjectTarget", lambda: f"{show_type(tx)} is not a pair")
            return tx.first if isinstance(expr, Fst) else tx.second
        case RefFst(x) | RefSnd(x):
            tx = get(x)
            _need(isinstance(tx, Acc) and isinstance(tx.inner, Pair), "RefProjectTarget",
                  lambda: f"{show_type(tx)} is not a pair accumulator")
            return Acc(tx.inner.first if isinstance(expr, RefFst) else tx.inner.second)
        case Call(f, targs, args):
            callee = reg.get(f)
            _need(callee is not None, "UnresolvedCallee", f)
            generics, params, ret = _signature(callee)
            _need(len(targs) == len(generics), "GenericArity",
                  f"{f} takes {len(generics)} type arguments, got {len(targs)}")
            mapping = {}
            for (name, kind), t in zip(generics, targs):
                _need(_kind(t, genv) <= kind, "BadInstantiation",
                      lambda: f"{show_type(t)} does not satisfy {name}: {kind}")
                mapping[name] = t
            _need(len(args) == len(params), "Arity",
                  f"{f} takes {len(params)} arguments, got {len(args)}")
            for k, (v, p) in enumerate(zip(args, params)):
                want = substitute(p, mapping)
                got = get(v)
                _need(got == want, "ArgType",
                      lambda: f"argument {k} of {f}: expected {show_type(want)}, got {show_type(got)}")
            return substitute(ret, mapping)
    raise _Fail("UnknownExpr", repr(expr))


class _Checker:
    def __init__(self, d, reg):
        self.d = d
        self.reg = reg
        self.genv = {}
        self.bound = set()
        self.index = 0

    def fail(self, rule, detail, index):
        raise IRTypeError(rule, detail, index=index, func=self.d.name)

    def bind(self, env, v, ty, index):
        if v in self.bound:
            self.fail("DuplicateVar", f"x{v} bound twice", index)
        self.bound.add(v)
        env[v] = ty

    def block(self, block, env):
        env = dict(env)
        for let in block.lets:
            idx = self.index
            self.index += 1
            try:
                _need(_kind(let.ty, self.genv) <= Kind.TYPE, "LetKind")
                ty = self.expr(let.expr, env, let.ty, idx)
                _need(ty == let.ty, "LetType",
                      lambda: f"declared {show_type(let.ty)}, expression has {show_type(ty)}")
            except _Fail as e:
                self.fail(e.rule, e.detail, idx)
            self.bind(env, let.var, let.ty, idx)
        if block.result not in env:
            self.fail("UnboundVar", "block result is not in scope", None)
        return env[block.result]

    def expr(self, expr, env, hint, idx):
        match expr:
            case For(var, ity, body):
                _need(_kind(ity, self.genv) <= Kind.INDEX, "NonIndexType", show_type(ity))
                inner = dict(env)
                self.bind(inner, var, ity, idx)
                elem = self.block(body, inner)
                _need(_kind(elem, self.genv) <= Kind.VALUE, "AccumulatorEscape",
                      "array elements must be values")
                return Arr(ity, elem)
            case AccumBlock(acc, init, body):
                _need(init in env, "UnboundVar", f"x{init}")
                tinit = env[init]
                _need(_kind(tinit, self.genv) <= Kind.VALUE, "NonValueComponent",
                      "accumulator seed must be a value")
                inner = dict(env)
                self.bind(inner, acc, Acc(tinit), idx)
                res = self.block(body, inner)
                _need(_kind(res, self.genv) <= Kind.VALUE, "AccumulatorEscape",
                      "accum body result must be a value")
                return Pair(tinit, res)
        return type_of_expr(expr, env, self.reg, self.genv, hint)

    def run(self):
        d = self.d
        seen = set()
        for name, kind in d.generics:
            if name in seen:
                self.fail("DuplicateGeneric", name, None)
            seen.add(name)
            self.genv[name] = kind
        env = {}
        for v, ty in d.params:
            try:
                _kind(ty, self.genv)
            except _Fail as e:
                self.fail(e.rule, f"parameter x{v}: {e.detail}", None)
            self.bind(env, v, ty, None)
        try:
            _need(_kind(d.ret, self.genv) <= Kind.VALUE, "AccumulatorEscape",
                  "return type must be a value")
        except _Fail as e:
            self.fail(e.rule, e.detail, None)
        res = self.block(d.body, env)
        if res != d.ret:
            self.fail("ResultType", f"body has {show_type(res)}, declared {show_type(d.ret)}", None)


def typecheck_function(d, reg):
    """Raise ``IRTypeError`` unless ``d`` is well typed against ``reg``."""
    _Checker(d, reg).run()


def callees(d):
    return [let.expr.func for let in iter_lets(d.body) if isinstance(let.expr, Call)]


def find_cycle(reg):
    """Return the names along some call cycle, or None."""
    state = {}
    stack = []

    def visit(name):
        state[name] = 1
        stack.append(name)
        item = reg.get(name)
        if isinstance(item, FuncDef):
            for g in dict.fromkeys(callees(item)):
                if g not in reg:
                    continue
                if state.get(g) == 1:
                    return stack[stack.index(g):]
                if g not in state:
                    found = visit(g)
                    if found:
                        return found
        stack.pop()
        state[name] = 2
        return None

    for name in reg.names():
        if name not in state:
            found = visit(name)
            if found:
                return found
    return None


def lifted_signature(item):
    generics, params, ret = _signature(item)
    return generics, tuple(dual_type(p) for p in params), dual_type(ret)


def check_custom_jvp(reg, base, jvp):
    b, j = reg.get(base), reg.get(jvp)
    if b is None or j is None:
        return UnresolvedCallee(f"custom derivative {base} -> {jvp}")
    want = lifted_signature(b)
    got = _signature(j)
    if got != want:
        def show(sig):
            return "(" + ", ".join(show_type(t) for t in sig[1]) + ") -> " + show_type(sig[2])
        return BadCustomJvpSignature(
            f"{jvp} for {base}: expected {show(want)}, got {show(got)}")
    return None


def validate_registry(reg):
    """Return the list of every problem in ``reg`` (empty when it is valid)."""
    errors = []
    for item in reg:
        if isinstance(item, OpaqueDef):
            if not all(isinstance(p, RealTy) for p in item.params) or item.ret != Real:
                errors.append(NonScalarOpaque(f"{item.name} must map Reals to Real"))
            continue
        for g in dict.fromkeys(callees(item)):
            if g not in reg:
                errors.append(UnresolvedCallee(f"{item.name} calls unknown {g}"))
    cycle = find_cycle(reg)
    if cycle:
        errors.append(RecursionCycle(cycle))
    for item in reg.defs():
        try:
            typecheck_function(item, reg)
        except IRTypeError as e:
            if e.rule != "UnresolvedCallee":
                errors.append(e)
    for base, jvp in reg.custom_jvp.items():
        err = check_custom_jvp(reg, base, jvp)
        if err:
            errors.append(err)
    return errors


def ensure_valid(reg):
    errors = validate_registry(reg)
    if errors:
        raise ValidationErrors(errors)
    return reg


def let_types(d):
    """Map every bound variable of ``d`` (params included) to its type."""
    out = dict(d.params)
    for let in iter_lets(d.body):
        out[let.var] = let.ty
        match let.expr:
            case For(var, ity, _):
                out[var] = ity
            case AccumBlock(acc, init, _):
                out[acc] = Acc(out[init])
    return out


def infer(expr, env, reg, genv=None, hint=None):
    """Public wrapper around ``type_of_expr`` raising ``IRTypeError``."""
    try:
        return type_of_expr(expr, env, reg, genv or {}, hint)
    except _Fail as e:
        raise IRTypeError(e.rule, e.detail) from None
