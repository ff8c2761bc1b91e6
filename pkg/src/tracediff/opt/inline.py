"""Reference inliner: what a macro-expanding tracer would have produced."""

from __future__ import annotations

from dataclasses import replace

from .._deep import deep
from ..ir.syntax import AccumBlock, Block, Call, For, FuncDef, Let, rename_expr
from ..ir.types import substitute


class _Inliner:
    def __init__(self, reg):
        self.reg = reg
        self.next = 0

    def fresh(self):
        v = self.next
        self.next += 1
        return v

    def block(self, blk, env, mapping):
        out = []
        res = self.into(blk, env, mapping, out)
        return Block(tuple(out), res)

    def into(self, blk, env, mapping, out):
        for let in blk.lets:
            e = let.expr
            match e:
                case Call(g, targs, args) if isinstance(self.reg[g], FuncDef):
                    callee = self.reg[g]
                    targs = tuple(substitute(t, mapping) for t in targs)
                    inner = {n: t for (n, _), t in zip(callee.generics, targs)}
                    cenv = {p: env[a] for (p, _), a in zip(callee.params, args)}
                    env[let.var] = self.into(callee.body, cenv, inner, out)
                    continue
                case For(i, ity, body):
                    env[i] = self.fresh()
                    e = For(env[i], substitute(ity, mapping), self.block(body, env, mapping))
                case AccumBlock(acc, init, body):
                    env[acc] = self.fresh()
                    e = AccumBlock(env[acc], env[init], self.block(body, env, mapping))
                case Call(g, targs, args):
                    e = Call(g, tuple(substitute(t, mapping) for t in targs),
                             tuple(env[a] for a in args))
                case _:
                    e = rename_expr(e, env.__getitem__)
            env[let.var] = self.fresh()
            out.append(Let(env[let.var], substitute(let.ty, mapping), e))
        return env[blk.result]


@deep
def inline_all(name, reg):
    """``name`` with every call to a traced definition expanded in place.

    Opaque calls stay calls.  The result is not registered.
    """
    d = reg[name]
    ins = _Inliner(reg)
    env = {}
    params = []
    for v, ty in d.params:
        env[v] = ins.fresh()
        params.append((env[v], ty))
    body = ins.block(d.body, env, {})
    return replace(d, name=f"{name}_inlined", params=tuple(params), body=body, names={},
                   origin=("inlined", name))
