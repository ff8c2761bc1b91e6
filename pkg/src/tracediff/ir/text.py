"""Textual form of the IR: a deterministic printer and the matching parser.

The printer folds single-use lets back into nested expressions whenever the
parser's left-to-right lowering would recreate exactly the same let order,
so ``parse_ir(print_ir(reg)) == reg`` holds structurally.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from ..errors import ParseError
from .check import _Fail, type_of_expr
from .syntax import (
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
    Index,
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
    _RESERVED,
    operands,
    uses,
)
from .types import Acc, Arr, Bool, Fin, Kind, Pair, Real, TypeVar, Unit, show_type, unify

BINOP_SYMBOLS = {
    "and": "and", "or": "or", "iff": "iff", "xor": "xor",
    "neq": "!=", "lt": "<", "leq": "<=", "eq": "==", "gt": ">", "geq": ">=",
    "add": "+", "sub": "-", "mul": "*", "div": "/",
}
SYMBOL_BINOPS = {v: k for k, v in BINOP_SYMBOLS.items()}
NAMED_UNARIES = ("abs", "sgn", "ceil", "floor", "trunc", "sqrt")

ATOM, UNARY, EXPR = 0, 1, 2


# printing


def format_const(c):
    if math.isnan(c):
        return "nan"
    if math.isinf(c):
        return "inf" if c > 0 else "-inf"
    return repr(float(c))


class _DefPrinter:
    def __init__(self, d):
        self.d = d
        self.counts = uses(d.body)
        self.names = {}
        taken = set()

        def assign(v):
            base = d.names.get(v) or f"x{v}"
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", base) or base in _RESERVED:
                base = f"x{v}"
            name, k = base, 1
            while name in taken:
                name = f"{base}_{k}"
                k += 1
            taken.add(name)
            self.names[v] = name

        for v, _ in d.params:
            assign(v)
        self._assign_block(d.body, assign)

    def _assign_block(self, block, assign):
        for let in block.lets:
            match let.expr:
                case For(var, _, body):
                    assign(var)
                    self._assign_block(body, assign)
                case AccumBlock(acc, _, body):
                    assign(acc)
                    self._assign_block(body, assign)
            assign(let.var)

    def name(self, v):
        return self.names.get(v, f"?{v}")

    def header(self):
        d = self.d
        gens = ""
        if d.generics:
            gens = "<" + ", ".join(f"{n}: {k.value}" for n, k in d.generics) + ">"
        params = ", ".join(f"{self.name(v)}: {show_type(t)}" for v, t in d.params)
        return f"def {d.name}{gens}({params}): {show_type(d.ret)} ="

    def render(self):
        ind = "  "
        return self.header() + "\n" + ind + self.block(self.d.body, ind)

    # a pending entry is (var, text, level)
    def block(self, block, ind):
        stmts = []
        stack = []

        def flush():
            for var, text, _lvl, let in stack:
                stmts.append(f"let {self.name(var)}: {show_type(let.ty)} = {text} in")
            stack.clear()

        for let in block.lets:
            inlined = {}
            for v in reversed(operands(let.expr)):
                if stack and stack[-1][0] == v and self.counts.get(v, 0) == 1 and v not in inlined:
                    var, text, lvl, _ = stack.pop()
                    inlined[v] = (text, lvl)
            text, lvl = self.expr(let.expr, inlined, ind)
            n = self.counts.get(let.var, 0)
            if n == 1 and _inferable(let.expr):
                stack.append((let.var, text, lvl, let))
            elif n == 0 and let.ty == Unit and _inferable(let.expr):
                flush()
                stmts.append(f"{_wrap(text, lvl, UNARY)};")
            else:
                flush()
                stmts.append(f"let {self.name(let.var)}: {show_type(let.ty)} = {text} in")
        if stack and stack[-1][0] == block.result and self.counts.get(block.result) == 1:
            _, text, _, _ = stack.pop()
            flush()
            result = text
        else:
            flush()
            result = self.name(block.result)
        return ("\n" + ind).join(stmts + [result])

    def operand(self, v, inlined, level):
        if v in inlined:
            text, lvl = inlined[v]
            return _wrap(text, lvl, level)
        return self.name(v)

    def expr(self, e, inlined, ind):
        def op(v, level=EXPR):
            return self.operand(v, inlined, level)

        match e:
            case UnitLit():
                return "()", ATOM
            case TrueLit():
                return "true", ATOM
            case FalseLit():
                return "false", ATOM
            case Const(c):
                return format_const(c), ATOM
            case FinLit(m):
                return str(m), ATOM
            case ArrayLit(elems):
                return "[" + ", ".join(op(v) for v in elems) + "]", ATOM
            case PairLit(a, b):
                return f"({op(a)}, {op(b)})", ATOM
            case Unary(o, x):
                arg = op(x, ATOM)
                if o in ("neg", "not") and _looks_numeric(arg):
                    arg = f"({arg})"
                if o == "neg":
                    return "-" + arg, UNARY
                if o == "not":
                    return "!" + arg, UNARY
                return f"{o} {arg}", UNARY
            case Binary(o, x, y):
                return f"({op(x, UNARY)} {BINOP_SYMBOLS[o]} {op(y, UNARY)})", ATOM
            case Select(p, x, y):
                return f"select({op(p)}, {op(x)}, {op(y)})", ATOM
            case Accumulate(x, y):
                return f"{op(x, UNARY)} += {op(y, UNARY)}", EXPR
            case Index(a, i):
                return f"{op(a, ATOM)}[{op(i)}]", ATOM
            case RefIndex(a, i):
                return f"&{op(a, ATOM)}[{op(i)}]", UNARY
            case Fst(x):
                return f"fst {op(x, ATOM)}", UNARY
            case Snd(x):
                return f"snd {op(x, ATOM)}", UNARY
            case RefFst(x):
                return f"&fst {op(x, ATOM)}", UNARY
            case RefSnd(x):
                return f"&snd {op(x, ATOM)}", UNARY
            case Call(f, targs, args):
                ta = ""
                if targs:
                    ta = "<" + ", ".join(show_type(t) for t in targs) + ">"
                return f"{f}{ta}(" + ", ".join(op(v) for v in args) + ")", ATOM
            case For(var, ity, body):
                inner = ind + "  "
                text = self.block(body, inner)
                head = f"[for {self.name(var)}: {show_type(ity)},"
                if "\n" not in text:
                    return f"{head} {text}]", ATOM
                return f"{head}\n{inner}{text}\n{ind}]", ATOM
            case AccumBlock(acc, init, body):
                inner = ind + "  "
                text = self.block(body, inner)
                head = f"accum {self.name(acc)} from {op(init, UNARY)} in"
                if "\n" not in text:
                    if _is_atomic_text(text):
                        return f"{head} {text}", EXPR
                    return f"{head} ({text})", EXPR
                return f"{head} (\n{inner}{text}\n{ind})", EXPR
        raise TypeError(f"cannot print {e!r}")


def _is_atomic_text(text):
    # bodies of accum are printed bare only when they are a single bracketed form
    # or a plain name; anything else is parenthesized
    if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", text):
        return True
    if text.startswith("[") and text.endswith("]"):
        return _balanced_outer(text)
    return False


def _balanced_outer(text):
    depth = 0
    for k, ch in enumerate(text):
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
            if depth == 0 and k != len(text) - 1:
                return False
    return True


def _looks_numeric(text):
    return bool(re.match(r"-?(\d|inf\b|nan\b)", text))


def _wrap(text, lvl, level):
    return f"({text})" if lvl > level else text


def _inferable(e):
    match e:
        case FinLit():
            return False
        case ArrayLit(elems):
            return bool(elems)
    return True


def print_def(d):
    return _DefPrinter(d).render()


def print_ir(reg):
    """Render every entry of ``reg`` in registration order."""
    chunks = []
    for item in reg:
        if isinstance(item, OpaqueDef):
            params = ", ".join(show_type(t) for t in item.params)
            line = f"opaque {item.name}({params}): {show_type(item.ret)}"
            if item.host:
                line += f' = "{item.host}"'
            chunks.append(line)
        else:
            chunks.append(print_def(item))
    for base, jvp in reg.custom_jvp.items():
        chunks.append(f"jvp {base} = {jvp}")
    return "".join(c + "\n" for c in chunks)


# lexing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<num>(?:\d+\.\d*(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+))
  | (?P<str>"[^"\n]*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>\+=|<=|>=|==|!=|[-+*/<>=!&()\[\],:;])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"def", "opaque", "jvp", "let", "in", "for", "accum", "from", "fst", "snd",
             "select", "true", "false", "inf", "nan", "and", "or", "iff", "xor"}


@dataclass
class Tok:
    kind: str
    value: str
    line: int
    col: int
    spaced: bool


def tokenize(text):
    toks = []
    pos = 0
    line, col = 1, 1
    spaced = True
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        val = m.group()
        if kind == "ws":
            spaced = True
        else:
            if kind == "name" and val in _KEYWORDS:
                kind = "kw"
            toks.append(Tok(kind, val, line, col, spaced))
            spaced = False
        nl = val.count("\n")
        if nl:
            line += nl
            col = len(val) - val.rfind("\n")
        else:
            col += len(val)
        pos = m.end()
    toks.append(Tok("eof", "", line, col, True))
    return _merge_negative_literals(toks)


def _ends_operand(t):
    return t.kind in ("num", "name", "str") or t.value in (")", "]", "inf", "nan", "true", "false")


def _merge_negative_literals(toks):
    out = []
    k = 0
    while k < len(toks):
        t = toks[k]
        nxt = toks[k + 1] if k + 1 < len(toks) else None
        if (t.value == "-" and t.kind == "sym" and nxt is not None and not nxt.spaced
                and (nxt.kind == "num" or nxt.value in ("inf", "nan"))
                and not (out and _ends_operand(out[-1]))):
            out.append(Tok("num" if nxt.kind == "num" else "kw", "-" + nxt.value,
                           t.line, t.col, t.spaced))
            k += 2
            continue
        out.append(t)
        k += 1
    return out


# parsing to a surface tree

class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.k = 0

    @property
    def tok(self):
        return self.toks[self.k]

    def peek(self, n=1):
        return self.toks[min(self.k + n, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def at(self, value):
        t = self.tok
        return t.value == value and t.kind in ("sym", "kw")

    def eat(self, value):
        if self.at(value):
            self.k += 1
            return True
        return False

    def expect(self, value):
        if not self.eat(value):
            self.error(f"expected {value!r}, found {self.tok.value or 'end of input'!r}")
        return self.toks[self.k - 1]

    def ident(self):
        t = self.tok
        if t.kind != "name":
            self.error(f"expected a name, found {t.value or 'end of input'!r}")
        self.k += 1
        return t.value

    def program(self):
        items = []
        while self.tok.kind != "eof":
            t = self.tok
            if self.eat("def"):
                items.append(self.definition(t))
            elif self.eat("opaque"):
                name = self.ident()
                self.expect("(")
                params = []
                if not self.at(")"):
                    params.append(self.type())
                    while self.eat(","):
                        params.append(self.type())
                self.expect(")")
                self.expect(":")
                ret = self.type()
                host = ""
                if self.eat("="):
                    if self.tok.kind != "str":
                        self.error("expected a quoted host routine name")
                    host = self.tok.value[1:-1]
                    self.k += 1
                items.append(("opaque", name, tuple(params), ret, host, t))
            elif self.eat("jvp"):
                base = self.ident()
                self.expect("=")
                items.append(("jvp", base, self.ident(), t))
            else:
                self.error(f"expected 'def', 'opaque' or 'jvp', found {t.value!r}")
        return items

    def definition(self, start):
        name = self.ident()
        generics = []
        if self.eat("<"):
            while True:
                g = self.ident()
                self.expect(":")
                kt = self.tok
                kname = self.ident()
                try:
                    kind = Kind(kname)
                except ValueError:
                    self.error(f"unknown kind {kname!r}", kt)
                generics.append((g, kind))
                if not self.eat(","):
                    break
            self.expect(">")
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                pt = self.tok
                pname = self.ident()
                self.expect(":")
                params.append((pname, self.type(), pt))
                if not self.eat(","):
                    break
        self.expect(")")
        self.expect(":")
        ret = self.type()
        self.expect("=")
        body = self.block()
        return ("def", name, tuple(generics), params, ret, body, start)

    def type(self):
        t = self.tok
        if self.eat("("):
            if self.eat(")"):
                return Unit
            a = self.type()
            self.expect(",")
            b = self.type()
            self.expect(")")
            return Pair(a, b)
        if self.eat("&"):
            return Acc(self.type())
        if self.eat("["):
            index = self.type()
            self.expect("]")
            return Arr(index, self.type())
        if t.kind == "num" and t.value.isdigit():
            self.k += 1
            return Fin(int(t.value))
        if t.kind == "name":
            self.k += 1
            if t.value == "Real":
                return Real
            if t.value == "Bool":
                return Bool
            return TypeVar(t.value)
        self.error(f"expected a type, found {t.value or 'end of input'!r}")

    def block(self):
        t = self.tok
        if self.eat("let"):
            pat = self.pattern()
            ty = self.type() if self.eat(":") else None
            self.expect("=")
            e = self.expr()
            self.expect("in")
            return ("let", pat, ty, e, self.block(), t)
        e = self.expr()
        if self.eat(";"):
            return ("seq", e, self.block(), t)
        return ("ret", e, t)

    def pattern(self):
        t = self.tok
        if self.eat("("):
            if self.eat(")"):
                return ("unit", t)
            a = self.pattern()
            self.expect(",")
            b = self.pattern()
            self.expect(")")
            return ("pair", a, b, t)
        name = self.ident()
        return ("wild", t) if name == "_" else ("name", name, t)

    def expr(self):
        t = self.tok
        if self.eat("accum"):
            acc = self.ident()
            self.expect("from")
            init = self.unary()
            self.expect("in")
            return ("accum", acc, init, self.block(), t)
        e = self.unary()
        if self.eat("+="):
            return ("acc+=", e, self.unary(), t)
        return e

    def unary(self):
        t = self.tok
        if self.eat("-"):
            return ("un", "neg", self.unary(), t)
        if self.eat("!"):
            return ("un", "not", self.unary(), t)
        if t.kind == "name" and t.value in NAMED_UNARIES and not self._call_follows():
            self.k += 1
            return ("un", t.value, self.unary(), t)
        if self.eat("fst"):
            return ("fst", self.unary(), t)
        if self.eat("snd"):
            return ("snd", self.unary(), t)
        if self.eat("&"):
            if self.eat("fst"):
                return ("&fst", self.unary(), t)
            if self.eat("snd"):
                return ("&snd", self.unary(), t)
            e = self.postfix()
            if e[0] != "index":
                self.error("'&' must be followed by fst, snd or an indexing expression", t)
            return ("&index", e[1], e[2], t)
        return self.postfix()

    def _call_follows(self):
        nxt = self.peek()
        return nxt.value in ("(", "<") and not nxt.spaced

    def postfix(self):
        e = self.atom()
        while self.at("[") :
            t = self.tok
            self.k += 1
            i = self.expr()
            self.expect("]")
            e = ("index", e, i, t)
        return e

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.k += 1
            if re.fullmatch(r"\d+", t.value):
                return ("fin", int(t.value), t)
            return ("const", float(t.value), t)
        if t.kind == "kw" and t.value.lstrip("-") in ("inf", "nan"):
            self.k += 1
            return ("const", float(t.value), t)
        if self.eat("true"):
            return ("true", t)
        if self.eat("false"):
            return ("false", t)
        if self.eat("select"):
            self.expect("(")
            p = self.expr()
            self.expect(",")
            x = self.expr()
            self.expect(",")
            y = self.expr()
            self.expect(")")
            return ("select", p, x, y, t)
        if self.eat("("):
            if self.eat(")"):
                return ("unit", t)
            if self.at("let"):
                b = self.block()
                self.expect(")")
                return ("block", b, t)
            a = self.expr()
            if self.eat(","):
                b = self.expr()
                self.expect(")")
                return ("pair", a, b, t)
            opt = self.tok
            if opt.value in SYMBOL_BINOPS and opt.kind in ("sym", "kw"):
                self.k += 1
                b = self.unary()
                self.expect(")")
                return ("bin", SYMBOL_BINOPS[opt.value], a, b, opt)
            if self.eat(";"):
                rest = self.block()
                self.expect(")")
                return ("block", ("seq", a, rest, t), t)
            self.expect(")")
            return a
        if self.eat("["):
            if self.eat("for"):
                var = self.ident()
                self.expect(":")
                ity = self.type()
                self.expect(",")
                body = self.block()
                self.expect("]")
                return ("for", var, ity, body, t)
            elems = []
            if not self.at("]"):
                elems.append(self.expr())
                while self.eat(","):
                    elems.append(self.expr())
            self.expect("]")
            return ("array", elems, t)
        if t.kind == "name":
            self.k += 1
            targs = None
            if self.at("<") and not self.tok.spaced:
                self.k += 1
                targs = [self.type()]
                while self.eat(","):
                    targs.append(self.type())
                self.expect(">")
                if not (self.at("(") and not self.tok.spaced):
                    self.error("expected '(' after type arguments")
            if self.at("(") and not self.tok.spaced:
                self.k += 1
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.eat(","):
                        args.append(self.expr())
                self.expect(")")
                return ("call", t.value, targs, args, t)
            return ("var", t.value, t)
        self.error(f"unexpected {t.value or 'end of input'!r}")


# lowering the surface tree to ANF


class _Lowerer:
    def __init__(self, sigs, generics, fname):
        self.sigs = sigs
        self.genv = dict(generics)
        self.fname = fname
        self.next_id = 0
        self.next_missing = -1
        self.scopes = [{}]
        self.env = {}
        self.names = {}
        self.blocks = []

    def fresh(self, ty, name=None):
        v = self.next_id
        self.next_id += 1
        self.env[v] = ty
        if name:
            self.names[v] = name
            self.scopes[-1][name] = v
        return v

    def lookup(self, name):
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        # unbound: a placeholder the type checker reports as UnboundVar
        v = self.next_missing
        self.next_missing -= 1
        self.scopes[0][name] = v
        return v

    def emit(self, expr, tok, ty=None):
        if ty is None:
            try:
                ty = type_of_expr(expr, self.env, self.sigs, self.genv)
            except _Fail as e:
                raise ParseError(f"cannot infer the type of this expression ({e.rule}: {e.detail});"
                                 " add a let with a type annotation", tok.line, tok.col) from None
        v = self.fresh(ty)
        self.blocks[-1].append(Let(v, ty, expr))
        return v

    def block(self, sb):
        self.blocks.append([])
        self.scopes.append({})
        result = self._stmts(sb)
        lets = self.blocks.pop()
        self.scopes.pop()
        return Block(tuple(lets), result)

    def _stmts(self, sb):
        while True:
            match sb:
                case ("let", pat, ty, e, rest, tok):
                    if pat[0] == "name":
                        v = self.expr(e, ty, must_emit=False)
                        self.scopes[-1][pat[1]] = v
                        if v >= 0:
                            self.names.setdefault(v, pat[1])
                    else:
                        v = self.expr(e, ty, must_emit=False)
                        self.destructure(pat, v, tok)
                    sb = rest
                case ("seq", e, rest, tok):
                    self.expr(e, None, must_emit=False)
                    sb = rest
                case ("ret", e, tok):
                    return self.expr(e, None, must_emit=False)

    def destructure(self, pat, v, tok):
        match pat:
            case ("name", name, _):
                self.scopes[-1][name] = v
                if v >= 0:
                    self.names.setdefault(v, name)
            case ("wild", _) | ("unit", _):
                pass
            case ("pair", a, b, t):
                ty = self.env.get(v)
                if not isinstance(ty, Pair):
                    raise ParseError("cannot destructure a non-pair value", t.line, t.col)
                for sub, proj in ((a, Fst), (b, Snd)):
                    if sub[0] in ("wild", "unit"):
                        continue
                    w = self.emit(proj(v), t)
                    self.destructure(sub, w, t)

    def expr(self, e, ty=None, must_emit=True):
        """Lower ``e`` and return the variable holding its value."""
        tag = e[0]
        tok = e[-1]
        if tag == "var":
            return self.lookup(e[1])
        if tag == "block":
            self.scopes.append({})
            try:
                return self._stmts(e[1])
            finally:
                self.scopes.pop()
        match tag:
            case "unit":
                ex = UnitLit()
            case "true":
                ex = TrueLit()
            case "false":
                ex = FalseLit()
            case "const":
                ex = Const(e[1])
            case "fin":
                ex = FinLit(e[1])
                if ty is None:
                    raise ParseError("index literal needs a type annotation", tok.line, tok.col)
            case "array":
                vs = tuple(self.expr(x) for x in e[1])
                ex = ArrayLit(vs)
            case "pair":
                a = self.expr(e[1])
                b = self.expr(e[2])
                ex = PairLit(a, b)
            case "un":
                ex = Unary(e[1], self.expr(e[2]))
            case "bin":
                a = self.expr(e[2])
                b = self.expr(e[3])
                ex = Binary(e[1], a, b)
            case "select":
                p = self.expr(e[1])
                x = self.expr(e[2])
                y = self.expr(e[3])
                ex = Select(p, x, y)
            case "acc+=":
                x = self.expr(e[1])
                y = self.expr(e[2])
                ex = Accumulate(x, y)
            case "index":
                a = self.expr(e[1])
                i = self.expr(e[2])
                ex = Index(a, i)
            case "&index":
                a = self.expr(e[1])
                i = self.expr(e[2])
                ex = RefIndex(a, i)
            case "fst":
                ex = Fst(self.expr(e[1]))
            case "snd":
                ex = Snd(self.expr(e[1]))
            case "&fst":
                ex = RefFst(self.expr(e[1]))
            case "&snd":
                ex = RefSnd(self.expr(e[1]))
            case "call":
                _, f, targs, args, _ = e
                vs = tuple(self.expr(x) for x in args)
                if targs is None:
                    targs = self.infer_targs(f, vs, tok)
                ex = Call(f, tuple(targs), vs)
            case "for":
                _, name, ity, body, _ = e
                self.scopes.append({})
                var = self.fresh(ity, name)
                b = self.block(body)
                self.scopes.pop()
                ex = For(var, ity, b)
                if ty is None:
                    ty = Arr(ity, self.result_type(b, tok))
            case "accum":
                _, name, init, body, _ = e
                iv = self.expr(init)
                self.scopes.append({})
                acc = self.fresh(Acc(self.env.get(iv, Unit)), name)
                b = self.block(body)
                self.scopes.pop()
                ex = AccumBlock(acc, iv, b)
                if ty is None:
                    if iv not in self.env:
                        raise ParseError("cannot infer the accumulator type", tok.line, tok.col)
                    ty = Pair(self.env[iv], self.result_type(b, tok))
            case _:
                raise ParseError(f"unsupported expression {tag}", tok.line, tok.col)
        return self.emit(ex, tok, ty)

    def result_type(self, b, tok):
        if b.result not in self.env:
            raise ParseError("cannot infer the type of this block", tok.line, tok.col)
        return self.env[b.result]

    def infer_targs(self, f, vs, tok):
        callee = self.sigs.get(f)
        if callee is None or not callee.generics:
            return ()
        bindings = {}
        for v, p in zip(vs, callee.param_types):
            if v in self.env:
                unify(p, self.env[v], bindings)
        missing = [n for n, _ in callee.generics if n not in bindings]
        if missing:
            raise ParseError(f"cannot infer type argument {missing[0]} of {f}", tok.line, tok.col)
        return tuple(bindings[n] for n, _ in callee.generics)


def parse_ir(text):
    """Parse ``text`` into a Registry. Type errors are left to the checker."""
    items = _Parser(text).program()
    sigs = Registry()
    for item in items:
        if item[0] == "opaque":
            _, name, params, ret, host, tok = item
            if name in sigs:
                raise ParseError(f"duplicate function {name}", tok.line, tok.col)
            sigs.add(OpaqueDef(name, params, ret, host))
        elif item[0] == "def":
            _, name, generics, params, ret, _, tok = item
            if name in sigs:
                raise ParseError(f"duplicate function {name}", tok.line, tok.col)
            stub = FuncDef(name, generics, tuple((k, p[1]) for k, p in enumerate(params)), ret,
                           Block((), 0))
            sigs._items[name] = stub
    reg = Registry()
    for item in items:
        match item:
            case ("opaque", name, params, ret, host, _):
                reg.add(OpaqueDef(name, params, ret, host))
            case ("def", name, generics, params, ret, body, _):
                low = _Lowerer(sigs, generics, name)
                ps = []
                for pname, pty, _t in params:
                    ps.append((low.fresh(pty, pname), pty))
                b = low.block(body)
                reg.add(FuncDef(name, generics, tuple(ps), ret, b, names=low.names))
            case ("jvp", base, jvp, tok):
                reg.set_jvp(base, jvp)
    return reg


def alpha_equal(a, b):
    """Structural equality of two defs ignoring function names of the pair."""
    return (a.generics, a.params, a.ret, a.body) == (b.generics, b.params, b.ret, b.body)
