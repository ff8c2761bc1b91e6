"""Transposition: split a dual JVP into a taping forward pass and a backward pass.

The backward pass follows the let structure of the dual JVP: every value let
``x`` with a non-trivial adjoint opens ``accum ddx from ... in (REST)`` around
the transposition of the rest of its block, then spends the decayed adjoint
``dx`` on its operands.  Adjoints of accumulator variables flow the other way
round, as plain values.

Two variants share the rules:

* strict: every leaf is kept, so the passes work over the dual types exactly
  as the rules are written;
* erased: the role analysis decides which leaves are primal and which are
  tangent.  The forward pass keeps only primal leaves and the backward pass
  only tangent adjoints, which turns every ``(Real, Real)`` dual back into a
  ``Real`` on each side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .._deep import deep
from ..errors import MissingDerivative, NonlinearTangentUse
from ..ir.check import let_types
from ..ir.emit import Emitter
from ..ir.syntax import (
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
    PairLit,
    RefFst,
    RefIndex,
    RefSnd,
    Select,
    Snd,
    TrueLit,
    Unary,
    UnitLit,
)
from ..ir.types import Acc, Arr, Kind, Pair, Real, Unit, substitute, zero_leaves
from .roles import T, analyze, callee_types, canonical, is_jvp_call, primal_mask
from .shapes import (
    KEEP_ADJOINT,
    KEEP_ALL,
    KEEP_PRIMAL,
    build_tape,
    coerce,
    mkpair,
    proj,
    proj_plan,
    prune,
    same_keep,
    zeros,
)


@dataclass(frozen=True)
class TransposeResult:
    fwd: FuncDef
    bwd: FuncDef


@deep
def transpose(f_jvp, reg, *, erase=False):
    """Transpose the dual JVP ``f_jvp``; returns the registered fwd/bwd pair."""
    fwd, bwd = transpose_names(f_jvp, reg, erase=erase)
    return TransposeResult(reg[fwd], reg[bwd])


def transpose_names(f_jvp, reg, *, erase=False):
    key = ("transpose", f_jvp, erase)
    if key in reg.memo:
        return reg.memo[key]
    d = reg[f_jvp]
    if not isinstance(d, FuncDef):
        raise MissingDerivative(f"{f_jvp} is opaque and cannot be transposed")
    if f_jvp not in reg.jvp_base:
        raise NonlinearTangentUse(f"{f_jvp} is not a dual JVP")
    if erase and any(k != Kind.INDEX for _, k in d.generics):
        raise MissingDerivative(f"{f_jvp}: only index generics can be erased")
    for let in _calls(d.body):
        if is_jvp_call(reg, let.func):
            transpose_names(let.func, reg, erase=erase)
    base = reg.jvp_base[f_jvp]
    prefix = ("", "") if erase else ("s", "s")
    fname = reg.fresh_name(prefix[0] + "fwd_" + base)
    bname = reg.fresh_name(prefix[1] + "bwd_" + base)
    if bname == fname:
        bname = reg.fresh_name(bname + "_b")
    masks = analyze(d, reg)
    fwd, bwd = _Transposer(reg, d, masks, not erase).run(fname, bname)
    reg.add(fwd)
    reg.add(bwd)
    reg.memo[key] = (fname, bname)
    return fname, bname


def _calls(block):
    for let in block.lets:
        match let.expr:
            case Call():
                yield let.expr
            case For(_, _, body) | AccumBlock(_, _, body):
                yield from _calls(body)


@dataclass
class _Frame:
    takes: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    wrap: tuple | None = None
    post: list = field(default_factory=list)
    phase: str = "pre"


@dataclass
class _BlockState:
    entries: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    inner: list = field(default_factory=list)


class _Transposer:
    def __init__(self, reg, d, masks, strict):
        self.reg = reg
        self.d = d
        self.masks = masks
        self.strict = strict
        self.kp = KEEP_ALL if strict else KEEP_PRIMAL
        self.ka = KEEP_ALL if strict else KEEP_ADJOINT
        self.types = let_types(d)
        self.names = d.names
        self.fe = Emitter()
        self.be = Emitter()
        self.fv = {}
        self.bp = {}
        self.bacc = {}
        self.badj = {}
        self.state = None
        self.frame = None

    # views

    def P(self, v):
        return prune(self.types[v], self.masks[v], self.kp)

    def A(self, v):
        ty, m = self.types[v], self.masks[v]
        if isinstance(ty, Acc):
            return prune(ty.inner, m[1], self.ka)
        return prune(ty, m, self.ka)

    def name(self, v, prefix=""):
        n = self.names.get(v)
        return prefix + n if n else None

    # tape

    def tape(self, fvar, ty, v=None):
        b = self.be.fresh(ty, self.name(v) if v is not None else None)
        self.state.entries.append((fvar, ty))
        self.frame.takes.append((b, ty))
        return b

    def slot(self, ty, v):
        b = self.be.fresh(ty, self.name(v))
        entry = [None, ty]
        self.state.entries.append(entry)
        self.frame.takes.append((b, ty))
        return b, entry

    # backward-pass helpers

    def wrap(self, x, init=None):
        """Open the adjoint accumulator of value variable ``x``; returns ``dx``."""
        at = self.A(x)
        if at is None or zero_leaves(at):
            return None
        acc = self.be.fresh(Acc(at), self.name(x, "dd"))
        self.bacc[x] = acc
        if init is None:
            init = self.bp[x] if self.strict else zeros(self.be, at)
        dot = self.be.fresh(at, self.name(x, "d"))
        self.frame.wrap = (acc, init, dot, at)
        return dot

    def begin_post(self):
        f = self.frame
        f.pre = list(self.be.stack.pop())
        self.be.push()
        f.phase = "post"

    def acc_add(self, x, val, m_val):
        target = self.bacc.get(x)
        if target is None or val is None:
            return
        v = coerce(self.be, val, self.types[x], m_val, self.masks[x], self.ka, self.ka)
        if v is not None:
            self.be.let(Unit, Accumulate(target, v))

    def scalar(self, em, vmap, v):
        out = vmap.get(v)
        if out is None:
            return em.const(0.0)
        return out

    # blocks

    def run(self, fname, bname):
        d, fe, be = self.d, self.fe, self.be
        self.state = st = _BlockState()
        self.frame = frame = _Frame()
        st.frames.append(frame)
        be.push()
        fparams, bparams = [], []
        for v, ty in d.params:
            m = self.masks[v]
            if isinstance(ty, Acc):
                pt = prune(ty.inner, m[1], self.kp)
                at = prune(ty.inner, m[1], self.ka)
                fvar = fe.fresh(Acc(pt) if pt else Unit, self.name(v))
                bvar = be.fresh(at or Unit, self.name(v, "d"))
                self.fv[v] = fvar if pt else None
                self.badj[v] = bvar if at else None
                fparams.append((fvar, fe.types[fvar]))
                bparams.append((bvar, be.types[bvar]))
            else:
                pt, at = self.P(v), self.A(v)
                fvar = fe.fresh(pt or Unit, self.name(v))
                bvar = be.fresh(Acc(at) if at else Unit, self.name(v, "dd"))
                self.fv[v] = fvar if pt else None
                self.bacc[v] = bvar if at else None
                fparams.append((fvar, fe.types[fvar]))
                bparams.append((bvar, be.types[bvar]))
                if pt:
                    self.bp[v] = self.tape(fvar, pt, v)
        frame.pre = list(be.stack.pop())

        for let in d.body.lets:
            self.let(let)

        r = d.body.result
        want = canonical(d.ret)
        ret_p = prune(d.ret, want, self.kp)
        ret_a = prune(d.ret, want, self.ka)
        dy = be.fresh(ret_a or Unit, "dy")
        be.push()
        if ret_a is not None:
            self.acc_add(r, dy, want)
        st.inner = list(be.stack.pop())

        res = coerce(fe, self.fv.get(r), self.types[r], self.masks[r], want, self.kp, self.kp)
        if res is None:
            res = fe.unit()
        tape = build_tape(fe, st.entries)
        out = fe.pair(res, tape)
        fbody = fe.pop(out)
        tty = fe.types[tape]

        tvar = be.fresh(tty, "t")
        blets = self.assemble(st, tvar)
        u = be.fresh(Unit)
        bbody = Block(tuple(blets) + (Let(u, Unit, UnitLit()),), u)

        tag = "strict" if self.strict else "erased"
        fwd = FuncDef(
            fname, d.generics, tuple(fparams), Pair(ret_p or Unit, tty), fbody,
            names=dict(fe.names), origin=("fwd", d.name, tag),
        )
        bwd = FuncDef(
            bname, d.generics, tuple(bparams) + ((dy, be.types[dy]), (tvar, tty)), Unit, bbody,
            names=dict(be.names), origin=("bwd", d.name, tag),
        )
        return fwd, bwd

    def block(self, block, dy, dy_mask):
        saved = self.state, self.frame
        self.state = st = _BlockState()
        for let in block.lets:
            self.let(let)
        self.be.push()
        if dy is not None:
            self.acc_add(block.result, dy, dy_mask)
        st.inner = list(self.be.stack.pop())
        self.state, self.frame = saved
        return st

    def assemble(self, st, cursor):
        be = self.be
        types = [ty for _, ty in st.entries]
        suffix = [Unit] * (len(types) + 1)
        for k in range(len(types) - 1, -1, -1):
            suffix[k] = Pair(types[k], suffix[k + 1])
        k = 0
        taken = []
        for fr in st.frames:
            lets = []
            for bvar, ty in fr.takes:
                lets.append(Let(bvar, ty, Fst(cursor)))
                nxt = be.fresh(suffix[k + 1], "t")
                lets.append(Let(nxt, suffix[k + 1], Snd(cursor)))
                cursor = nxt
                k += 1
            taken.append(lets)
        inner = list(st.inner)
        for fr, tl in zip(reversed(st.frames), reversed(taken)):
            if fr.wrap is None:
                inner = tl + fr.pre + inner + fr.post
                continue
            acc, init, dot, at = fr.wrap
            u = be.fresh(Unit)
            body = Block(tuple(inner) + (Let(u, Unit, UnitLit()),), u)
            pr = be.fresh(Pair(at, Unit))
            inner = tl + fr.pre + [
                Let(pr, Pair(at, Unit), AccumBlock(acc, init, body)),
                Let(dot, at, Fst(pr)),
            ] + fr.post
        return inner

    # lets

    def let(self, let):
        frame = _Frame()
        self.state.frames.append(frame)
        self.frame = frame
        self.be.push()
        self.dispatch(let)
        self.frame = frame
        lets = list(self.be.stack.pop())
        if frame.phase == "pre":
            frame.pre = lets
        else:
            frame.post = lets

    def dispatch(self, let):
        x, e = let.var, let.expr
        match e:
            case Const() | UnitLit() | TrueLit() | FalseLit() | FinLit():
                self.literal(x, e)
            case PairLit() | ArrayLit():
                self.structural(x, e)
                dot = self.wrap(x)
                self.begin_post()
                if dot is not None:
                    self.spread(x, e, dot)
            case Select(p, a, b) if isinstance(let.ty, Acc):
                pt = self.P(x)
                if pt is not None:
                    self.fv[x] = self.fe.let(pt, Select(self.fv[p], self.fv[a], self.fv[b]))
                if self.A(x) is not None:
                    self.badj[x] = self.be.let(self.A(x), Select(self.bp[p], self.badj[a], self.badj[b]))
            case Select(p, a, b):
                self.structural(x, e)
                dot = self.wrap(x)
                self.begin_post()
                if dot is not None:
                    self.select_adjoint(x, p, a, b, dot)
            case Fst(a) | Snd(a):
                side = 0 if isinstance(e, Fst) else 1
                ty, m = self.types[a], self.masks[a]
                self.fv[x] = proj(self.fe, self.fv.get(a), ty, m, self.kp, side)
                self.bp[x] = proj(self.be, self.bp.get(a), ty, m, self.kp, side)
                self.bacc[x] = proj(self.be, self.bacc.get(a), ty, m, self.ka, side, ref=True)
            case Index(a, i):
                if self.P(x) is not None:
                    self.fv[x] = self.fe.let(self.P(x), Index(self.fv[a], self.fv[i]))
                    self.bp[x] = self.be.let(self.P(x), Index(self.bp[a], self.bp[i]))
                if self.A(x) is not None and self.bacc.get(a) is not None:
                    self.bacc[x] = self.be.let(Acc(self.A(x)), RefIndex(self.bacc[a], self.bp[i]))
            case RefIndex(a, i):
                if self.P(x) is not None:
                    self.fv[x] = self.fe.let(self.P(x), RefIndex(self.fv[a], self.fv[i]))
                if self.A(x) is not None:
                    self.badj[x] = self.be.let(self.A(x), Index(self.badj[a], self.bp[i]))
            case RefFst(a) | RefSnd(a):
                side = 0 if isinstance(e, RefFst) else 1
                inner, m = self.types[a].inner, self.masks[a][1]
                self.fv[x] = proj(self.fe, self.fv.get(a), inner, m, self.kp, side, ref=True)
                self.badj[x] = proj(self.be, self.badj.get(a), inner, m, self.ka, side)
            case Accumulate(t, v):
                target = self.fv.get(t)
                if target is not None:
                    val = coerce(self.fe, self.fv.get(v), self.types[v], self.masks[v],
                                 self.masks[t][1], self.kp, self.kp)
                    if val is not None:
                        u = self.fe.let(Unit, Accumulate(target, val))
                        if self.P(x) is not None:
                            self.fv[x] = u
                if self.P(x) is not None:
                    if self.fv.get(x) is None:
                        self.fv[x] = self.fe.unit()
                    self.bp[x] = self.be.unit()
                self.begin_post()
                self.acc_add(v, self.badj.get(t), self.masks[t][1])
            case Unary() | Binary():
                self.arith(x, let.ty, e)
            case Call():
                self.call(x, let.ty, e)
            case For():
                self.for_(x, let.ty, e)
            case AccumBlock():
                self.accum(x, let.ty, e)
            case _:
                raise TypeError(f"cannot transpose {e!r}")

    def literal(self, x, e):
        ty = self.types[x]
        if self.P(x) is not None:
            self.fv[x] = self.fe.let(ty, e)
            self.bp[x] = self.be.let(ty, e)
        self.wrap(x)

    def structural(self, x, e):
        """Pure plumbing: rebuilt in both passes from the operands' primals."""
        for em, vmap in ((self.fe, self.fv), (self.be, self.bp)):
            out = self.rebuild(em, vmap, x, e)
            if out is not None:
                vmap[x] = out

    def rebuild(self, em, vmap, x, e):
        ty, m, kp = self.types[x], self.masks[x], self.kp
        match e:
            case PairLit(a, b):
                return mkpair(em, vmap.get(a), vmap.get(b))
            case ArrayLit(elems):
                pt = prune(ty, m, kp)
                if pt is None:
                    return None
                cs = [coerce(em, vmap.get(v), ty.elem, self.masks[v], m[1], kp, kp) for v in elems]
                return em.let(pt, ArrayLit(tuple(cs)))
            case Select(p, a, b):
                pt = prune(ty, m, kp)
                if pt is None:
                    return None
                ca = coerce(em, vmap.get(a), ty, self.masks[a], m, kp, kp)
                cb = coerce(em, vmap.get(b), ty, self.masks[b], m, kp, kp)
                return em.let(pt, Select(vmap[p], ca, cb))
        raise TypeError(e)

    def spread(self, x, e, dot):
        ty, m, be = self.types[x], self.masks[x], self.be
        match e:
            case PairLit(a, b):
                self.acc_add(a, proj(be, dot, ty, m, self.ka, 0), m[1])
                self.acc_add(b, proj(be, dot, ty, m, self.ka, 1), m[2])
            case ArrayLit(elems):
                n = ty.index
                for k, v in enumerate(elems):
                    i = be.let(n, FinLit(k))
                    el = be.let(prune(ty.elem, m[1], self.ka), Index(dot, i))
                    self.acc_add(v, el, m[1])

    def select_adjoint(self, x, p, a, b, dot):
        be, ty, m = self.be, self.types[x], self.masks[x]
        ta, tb = self.bacc.get(a), self.bacc.get(b)
        if (ta is not None and tb is not None
                and same_keep(ty, self.masks[a], m, self.ka, self.ka)
                and same_keep(ty, self.masks[b], m, self.ka, self.ka)):
            w = be.let(be.types[ta], Select(self.bp[p], ta, tb))
            be.let(Unit, Accumulate(w, dot))
            return
        for v, first in ((a, True), (b, False)):
            if self.bacc.get(v) is None:
                continue
            val = coerce(be, dot, ty, m, self.masks[v], self.ka, self.ka)
            if val is None:
                continue
            z = zeros(be, be.types[val])
            sel = Select(self.bp[p], val, z) if first else Select(self.bp[p], z, val)
            self.acc_add(v, be.let(be.types[val], sel), self.masks[v])

    def arith(self, x, ty, e):
        fe, be = self.fe, self.be
        role = self.masks[x]
        if role == T:
            if self.P(x) is not None:
                self.fv[x] = fe.const(0.0)
                self.bp[x] = be.const(0.0)
            dot = self.wrap(x)
            self.begin_post()
            if dot is not None:
                self.transpose_linear(e, dot)
            return
        if self.P(x) is not None:
            match e:
                case Unary(op, a):
                    out = Unary(op, self.scalar(fe, self.fv, a))
                case Binary(op, a, b):
                    out = Binary(op, self.scalar(fe, self.fv, a), self.scalar(fe, self.fv, b))
            self.fv[x] = fe.let(ty, out, self.name(x))
            self.bp[x] = self.tape(self.fv[x], ty, x)
        self.wrap(x)

    def transpose_linear(self, e, dot):
        be, m = self.be, self.masks
        match e:
            case Unary("neg", a):
                self.acc_add(a, be.let(Real, Unary("neg", dot)), T)
            case Binary("add", a, b):
                self.acc_add(a, dot, T)
                self.acc_add(b, dot, T)
            case Binary("sub", a, b):
                self.acc_add(a, dot, T)
                if self.bacc.get(b) is not None:
                    self.acc_add(b, be.let(Real, Unary("neg", dot)), T)
            case Binary("mul", a, b):
                lin, other = (a, b) if m[a] == T else (b, a)
                k = self.scalar(be, self.bp, other)
                self.acc_add(lin, be.let(Real, Binary("mul", dot, k)), T)
            case Binary("div", a, b):
                k = self.scalar(be, self.bp, b)
                self.acc_add(a, be.let(Real, Binary("div", dot, k)), T)
            case _:
                raise NonlinearTangentUse(f"no transposition rule for {e!r}")

    def call(self, x, ty, e):
        fe, be, reg = self.fe, self.be, self.reg
        ptypes, ret = callee_types(reg, e)
        if not is_jvp_call(reg, e.func):
            args = []
            for a, pty in zip(e.args, ptypes):
                if isinstance(pty, Acc):
                    args.append(self.fv[a])
                else:
                    args.append(coerce(fe, self.fv.get(a), pty, self.masks[a], primal_mask(pty),
                                       self.kp, KEEP_ALL))
            y = fe.let(ret, Call(e.func, e.type_args, tuple(args)))
            if self.P(x) is not None:
                self.fv[x] = coerce(fe, y, ret, primal_mask(ret), self.masks[x], KEEP_ALL, self.kp)
                self.bp[x] = self.tape(self.fv[x], self.P(x), x)
            self.wrap(x)
            return

        fname, bname = transpose_names(e.func, reg, erase=not self.strict)
        mapping = {n: t for (n, _), t in zip(reg[fname].generics, e.type_args)}
        fret = substitute(reg[fname].ret, mapping)
        args = []
        for a, pty in zip(e.args, ptypes):
            want = canonical(pty)
            if isinstance(pty, Acc):
                args.append(self.fv.get(a) if self.fv.get(a) is not None else fe.unit())
            else:
                c = coerce(fe, self.fv.get(a), pty, self.masks[a], want, self.kp, self.kp)
                args.append(c if c is not None else fe.unit())
        r = fe.let(fret, Call(fname, e.type_args, tuple(args)))
        pt = self.P(x)
        if pt is not None:
            self.fv[x] = fe.fst(r, self.name(x))
            self.bp[x] = self.tape(self.fv[x], pt, x)
            tf = fe.snd(r)
        else:
            tf = fe.snd(r)
        tb = self.tape(tf, fret.second)
        dot = self.wrap(x)
        self.begin_post()

        scratch = []
        bargs = []
        for a, pty in zip(e.args, ptypes):
            want = canonical(pty)
            if isinstance(pty, Acc):
                at = prune(pty.inner, want[1], self.ka)
                bargs.append(self.badj[a] if at is not None else be.unit())
                continue
            at = prune(pty, want, self.ka)
            if at is None:
                bargs.append(be.unit())
            elif self.bacc.get(a) is not None and same_keep(pty, self.masks[a], want, self.ka, self.ka):
                bargs.append(self.bacc[a])
            else:
                s = be.fresh(Acc(at), self.name(a, "dd"))
                scratch.append((s, at, a, want, zeros(be, at)))
                bargs.append(s)
        bargs.append(dot if dot is not None else be.unit())
        bargs.append(tb)
        c = be.fresh(Unit)
        block = Block((Let(c, Unit, Call(bname, e.type_args, tuple(bargs))),), c)
        for s, at, a, want, init in reversed(scratch):
            be.push()
            pr = be.let(Pair(at, Unit), AccumBlock(s, init, block))
            got = be.fst(pr)
            self.acc_add(a, got, want)
            block = be.pop(be.unit())
        be.stack[-1].extend(block.lets)

    def for_(self, x, ty, e):
        fe, be = self.fe, self.be
        var, ity, body = e.var, e.index_ty, e.body
        m = self.masks[x]
        pt = self.P(x)
        if pt is not None:
            self.bp[x], a_entry = self.slot(pt, x)
        dot = self.wrap(x)
        fi = fe.fresh(ity, self.name(var))
        bi = be.fresh(ity, self.name(var))
        self.fv[var] = fi
        self.bp[var] = bi
        ydot = None
        if dot is not None:
            ydot = be.fresh(be.types[dot].elem, self.name(body.result, "d"))

        fe.push()
        inner = self.block(body, ydot, m[1])
        y = self.fv.get(body.result)
        has_tape = bool(inner.entries)
        tape = build_tape(fe, inner.entries) if has_tape else None
        res = mkpair(fe, y, tape)
        if res is None:
            res = fe.unit()
        blk = fe.pop(res)
        v = fe.let(Arr(ity, fe.types[res]), For(fi, ity, blk))
        a = tt = None
        if y is not None and has_tape:
            a = self.split(v, ity, 0)
            tt = self.split(v, ity, 1)
        elif y is not None:
            a = v
        elif has_tape:
            tt = v
        if pt is not None:
            a_entry[0] = a
            self.fv[x] = a
        if has_tape:
            tt_b = self.tape(tt, fe.types[tt])

        self.begin_post()
        be.push()
        cursor = None
        if has_tape:
            cursor = be.let(fe.types[tape], Index(tt_b, bi), "t")
        if ydot is not None:
            be.bind(ydot, be.types[ydot], Index(dot, bi))
        be.stack[-1].extend(self.assemble(inner, cursor))
        u = be.unit()
        be.let(Arr(ity, Unit), For(bi, ity, be.pop(u)))

    def split(self, v, ity, side):
        fe = self.fe
        j = fe.fresh(ity)
        fe.push()
        el = fe.let(fe.types[v].elem, Index(v, j))
        out = fe.fst(el) if side == 0 else fe.snd(el)
        return fe.let(Arr(ity, fe.types[out]), For(j, ity, fe.pop(out)))

    def accum(self, x, ty, e):
        fe, be = self.fe, self.be
        acc, init, body = e.acc, e.init, e.body
        m = self.masks[x]
        macc = self.masks[acc][1]
        inner_ty = self.types[acc].inner
        pt = self.P(x)
        if pt is not None:
            self.bp[x], pi_entry = self.slot(pt, x)
        dot = self.wrap(x)
        adj_acc, let_acc = proj_plan(be, dot, ty, m, self.ka, 0)
        adj_z, let_z = proj_plan(be, dot, ty, m, self.ka, 1)
        self.badj[acc] = adj_acc

        acc_pt = prune(inner_ty, macc, self.kp)
        acc_f = None
        if acc_pt is not None:
            acc_f = fe.fresh(Acc(acc_pt), self.name(acc))
            init_f = coerce(fe, self.fv.get(init), self.types[init], self.masks[init], macc,
                            self.kp, self.kp)
            if init_f is None:
                init_f = zeros(fe, acc_pt)
        self.fv[acc] = acc_f

        fe.push()
        inner = self.block(body, adj_z, m[2])
        z = self.fv.get(body.result)
        has_tape = bool(inner.entries)
        tape = build_tape(fe, inner.entries) if has_tape else None
        res = mkpair(fe, z, tape)
        if acc_f is not None:
            if res is None:
                res = fe.unit()
            blk = fe.pop(res)
            r = fe.let(Pair(acc_pt, fe.types[res]), AccumBlock(acc_f, init_f, blk))
            xv = fe.fst(r)
            rest = fe.snd(r) if (z is not None or has_tape) else None
        else:
            fe.stack[-1 - 1].extend(fe.stack.pop())
            xv, rest = None, res
        if z is not None and has_tape:
            z, tt = fe.fst(rest), fe.snd(rest)
        elif z is not None:
            z, tt = rest, None
        else:
            tt = rest
        pi = mkpair(fe, xv, z)
        if pt is not None:
            pi_entry[0] = pi
            self.fv[x] = pi
        if has_tape:
            tt_b = self.tape(tt, fe.types[tt])

        self.begin_post()
        for pending in (let_acc, let_z):
            if pending is not None:
                be.stack[-1].append(pending)
        be.stack[-1].extend(self.assemble(inner, tt_b if has_tape else None))



