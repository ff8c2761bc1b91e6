"""User-facing derivative recipes over traced functions: vjp, jvp and hessian."""

from __future__ import annotations

from dataclasses import dataclass

from .. import builder as b
from ..errors import EscapeError, MultiParamVjp, TraceError
from ..ir.emit import Emitter
from ..ir.syntax import AccumBlock, Block, Call, For, Index, Let
from ..ir.types import Acc, Arr, Pair, RealTy, Unit, substitute
from .forward import lift_jvp
from .roles import T, leaf_mask
from .shapes import KEEP_ADJOINT, KEEP_ALL, coerce, zeros
from .transpose import transpose_names


def vjp_pair(name, reg):
    """Names of the finalized (fwd, bwd) pair for ``name``."""
    from ..opt.pipeline import finalize_transposed  # opt imports autodiff helpers

    pair = transpose_names(lift_jvp(name, reg), reg, erase=True)
    if ("final", pair[0]) not in reg.memo:
        finalize_transposed(reg)
    return pair


class _TraceEmitter(Emitter):
    """Emitter interface over the innermost open block of a trace."""

    def __init__(self, ctx):
        self.ctx = ctx
        self.names = ctx.names

    @property
    def types(self):
        return self.ctx.env

    @property
    def stack(self):
        return [lets for _, lets, _ in self.ctx.blocks]

    def fresh(self, ty, name=None):
        v = self.ctx.fresh(ty)
        if name:
            self.ctx.names[v] = name
        return v

    def let(self, ty, expr, name=None):
        v = self.fresh(ty, name)
        self.ctx.blocks[-1][1].append(Let(v, ty, expr))
        return v

    def bind(self, var, ty, expr):
        self.ctx.env[var] = ty
        self.ctx.blocks[-1][1].append(Let(var, ty, expr))
        return var

    def push(self):
        self.ctx.push_block()

    def pop(self, result):
        return Block(tuple(self.ctx.pop_block()), result)


def _adjoint_view(em, v, ty):
    """A value of primal type ``ty`` restricted to its Real leaves."""
    m = leaf_mask(ty, T)
    out = coerce(em, v, ty, m, m, KEEP_ALL, KEEP_ADJOINT)
    return em.unit() if out is None else out


def _primal_view(em, v, ty):
    """Inverse of ``_adjoint_view``: non-Real leaves are filled with zeros."""
    m = leaf_mask(ty, T)
    return coerce(em, v, ty, m, m, KEEP_ADJOINT, KEEP_ALL)


@dataclass
class VjpRecord:
    """Result of applying a vjp: the primal output and a pullback over one tape."""

    ret: b.Handle
    grad_fn: object

    def grad(self, dy):
        return self.grad_fn(dy)


def build_vjp(f):
    """``x -> VjpRecord`` for a one-parameter traced function ``f``."""
    reg = f.registry
    if len(f.params) != 1:
        raise MultiParamVjp(f"vjp needs a function of one parameter; {f.name} takes {len(f.params)}")

    def apply(x):
        ctx = b.active_context()
        fname, bname = vjp_pair(f.name, reg)
        fh = b.handle_for(reg, fname)
        fwd = reg[fname]
        xv = b.lift(x, f.params[0], ctx)
        prim = reg.memo.get(("primal", fname))
        # with an empty tape the primal itself is the forward pass
        r = b.call(b.handle_for(reg, prim) if prim else fh, b._handle(ctx, xv, f.params[0]))
        # the call is the let just emitted; its type arguments serve bwd too
        type_args = ctx.blocks[-1][1][-1].expr.type_args
        mapping = {n: t for (n, _), t in zip(fwd.generics, type_args)}
        y = r if prim else b.fst(r)
        y = b.Handle(y.var, y.ty, ctx, b._spec_subst(f.ret, mapping))
        tape = b.unit() if prim else b.snd(r)
        pty, rty = ctx.env[xv], y.ty

        def grad(dy):
            if b.active_context() is not ctx:
                raise EscapeError("grad must be called inside the trace that built the vjp")
            em = _TraceEmitter(ctx)
            dyv = b.lift(dy, y.spec, ctx)
            dya = _adjoint_view(em, dyv, rty)
            tv = ctx.own(tape)
            bwd = reg[bname]
            acc_ty = bwd.params[0][1]
            if acc_ty == Unit:
                unit = em.unit()
                em.let(Unit, Call(bname, type_args, (unit, dya, tv)))
                out = _primal_view(em, None, pty)
            else:
                inner = substitute(acc_ty.inner, mapping)
                init = zeros(em, inner)
                em.push()
                acc = em.fresh(Acc(inner), "dx")
                u = em.let(Unit, Call(bname, type_args, (acc, dya, tv)))
                body = em.pop(u)
                pr = em.let(Pair(inner, Unit), AccumBlock(acc, init, body))
                dec = em.fst(pr)
                out = _primal_view(em, dec, pty)
            return b.Handle(out, pty, ctx, b._spec_subst(f.params[0], mapping))

        return VjpRecord(y, grad)

    return apply


def vjp(f):
    return build_vjp(f)


def _zip_dual(em, x, dx, ty):
    match ty:
        case RealTy():
            return em.pair(x, dx)
        case Pair(a, c):
            return em.pair(_zip_dual(em, em.fst(x), em.fst(dx), a),
                           _zip_dual(em, em.snd(x), em.snd(dx), c))
        case Arr(i, e):
            j = em.fresh(i)
            em.push()
            out = _zip_dual(em, em.let(e, Index(x, j)), em.let(e, Index(dx, j)), e)
            blk = em.pop(out)
            return em.let(Arr(i, em.types[out]), For(j, i, blk))
    return x


def _unzip_dual(em, v, ty, side):
    match ty:
        case RealTy():
            return em.fst(v) if side == 0 else em.snd(v)
        case Pair(a, c):
            return em.pair(_unzip_dual(em, em.fst(v), a, side), _unzip_dual(em, em.snd(v), c, side))
        case Arr(i, e):
            j = em.fresh(i)
            em.push()
            out = _unzip_dual(em, em.let(em.types[v].elem, Index(v, j)), e, side)
            blk = em.pop(out)
            return em.let(Arr(i, em.types[out]), For(j, i, blk))
    return v


def jvp(f):
    """``(x, dx) -> (y, dy)`` for a one-parameter traced function ``f``."""
    reg = f.registry
    if len(f.params) != 1:
        raise MultiParamVjp(f"jvp needs a function of one parameter; {f.name} takes {len(f.params)}")

    def apply(x, dx):
        ctx = b.active_context()
        name = lift_jvp(f.name, reg)
        xv = b.lift(x, f.params[0], ctx)
        dxv = b.lift(dx, f.params[0], ctx)
        em = _TraceEmitter(ctx)
        pty = ctx.env[xv]
        dual = _zip_dual(em, xv, dxv, pty)
        r = b.call(b.handle_for(reg, name), b._handle(ctx, dual))
        rty = ctx.env[r.var]
        y = _unzip_dual(em, r.var, _primal_of(rty), 0)
        dy = _unzip_dual(em, r.var, _primal_of(rty), 1)
        return b._handle(ctx, y, f.ret), b._handle(ctx, dy, f.ret)

    return apply


def _primal_of(ty):
    match ty:
        case Pair(RealTy(), RealTy()):
            return ty.first
        case Pair(a, c):
            return Pair(_primal_of(a), _primal_of(c))
        case Arr(i, e):
            return Arr(i, _primal_of(e))
    return ty


def hessian(f):
    """Traced function returning the Hessian of the scalar ``f`` over a vector."""
    spec = f.params[0]
    ty = b.to_ty(spec)
    if not (isinstance(ty, Arr) and hasattr(ty.index, "n")):
        raise TraceError("hessian needs a function of one fixed-size vector")
    n = ty.index.n
    with b.use_registry(f.registry):
        g = b.fn([spec], spec, lambda x: build_vjp(f)(x).grad(1.0), name=f"grad_{f.name}")

        def rows(x):
            r = build_vjp(g)(x)
            basis = [[1.0 if j == i else 0.0 for j in range(n)] for i in range(n)]
            return b.vec([r.grad(e) for e in basis])

        return b.fn([spec], b.Vec(n, spec), rows, name=f"hess_{f.name}")
