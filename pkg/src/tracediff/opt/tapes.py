"""Whole-registry tape compaction for forward/backward pairs.

After simplification most taped values are never read by the backward pass.
Compaction drops them from the tape, which changes the forward pass's return
type; callers built on top of the pair are then retyped.  Tapes lose their
unit terminator on the way: a tape of one value is that value, a tape of
none is ``()``.
"""

from __future__ import annotations

from dataclasses import replace

from .._deep import deep
from ..ir.check import infer, let_types
from ..ir.emit import Emitter
from ..ir.syntax import AccumBlock, Block, For, Fst, Let, Snd, nested_blocks, operands, rename_expr
from ..ir.types import Acc, Arr, Pair, Unit, UnitTy


@deep
def retype(d, reg):
    """Recompute every let type of ``d`` from its parameters and the callees."""
    env = dict(d.params)
    genv = dict(d.generics)

    def block(b):
        lets = []
        for let in b.lets:
            e = let.expr
            match e:
                case For(i, ity, body):
                    env[i] = ity
                    nb = block(body)
                    e, ty = For(i, ity, nb), Arr(ity, env[nb.result])
                case AccumBlock(acc, init, body):
                    env[acc] = Acc(env[init])
                    nb = block(body)
                    e, ty = AccumBlock(acc, init, nb), Pair(env[init], env[nb.result])
                case _:
                    ty = infer(e, env, reg, genv, hint=let.ty)
            env[let.var] = ty
            lets.append(Let(let.var, ty, e))
        return Block(tuple(lets), b.result)

    body = block(d.body)
    return replace(d, body=body, ret=env[body.result])


def tape_entries(ty):
    """Entry types of an unterminated-or-terminated right-nested tape, or None."""
    out = []
    while isinstance(ty, Pair):
        out.append(ty.first)
        ty = ty.second
    return out if isinstance(ty, UnitTy) else None


def packed_type(types):
    if not types:
        return Unit
    out = types[-1]
    for ty in reversed(types[:-1]):
        out = Pair(ty, out)
    return out


def used_entries(bwd):
    """Tape positions read by ``bwd`` (its last parameter), or None if unknown."""
    t = bwd.params[-1][0]
    tails = {t: 0}
    used = set()

    def walk(b):
        for let in b.lets:
            match let.expr:
                case Snd(v) if v in tails:
                    tails[let.var] = tails[v] + 1
                    continue
                case Fst(v) if v in tails:
                    used.add(tails[v])
                    continue
            if set(operands(let.expr)) & tails.keys():
                return False
            for inner in nested_blocks(let.expr):
                if not walk(inner):
                    return False
        return b.result not in tails

    return used if walk(bwd.body) else None


def compact(fwd, bwd, reg):
    """Drop unread tape entries; returns the new (fwd, bwd) or None if unchanged."""
    entries = tape_entries(fwd.ret.second)
    if entries is None:
        return None
    used = used_entries(bwd)
    if used is None:
        return None
    keep = sorted(k for k in used if k < len(entries))
    new_ty = packed_type([entries[k] for k in keep])
    return _compact_fwd(fwd, keep, entries, new_ty), _compact_bwd(bwd, keep, new_ty)


def _compact_fwd(fwd, keep, entries, new_ty):
    em = Emitter(max(let_types(fwd), default=-1) + 1)
    em.types.update(let_types(fwd))
    em.stack[0].extend(fwd.body.lets)
    r = fwd.body.result
    res = em.fst(r)
    cur = em.snd(r)
    picked = []
    for k in range(len(entries)):
        if k in keep:
            picked.append(em.fst(cur))
        if k + 1 < len(entries) and k + 1 <= max(keep, default=-1):
            cur = em.snd(cur)
    if not picked:
        tape = em.unit()
    else:
        tape = picked[-1]
        for v in reversed(picked[:-1]):
            tape = em.pair(v, tape)
    out = em.pair(res, tape)
    return replace(fwd, body=Block(tuple(em.stack[0]), out), ret=Pair(fwd.ret.first, new_ty))


def _compact_bwd(bwd, keep, new_ty):
    t = bwd.params[-1][0]
    types = let_types(bwd)
    next_id = [max(types, default=-1) + 1]
    pos = {k: j for j, k in enumerate(keep)}
    m = len(keep)
    tails = {t: 0}
    sub = {}

    def fresh():
        v = next_id[0]
        next_id[0] += 1
        return v

    def block(b, cache):
        cache = dict(cache)
        lets = []

        def tail(j):
            if j not in cache:
                prev = tail(j - 1)
                v = fresh()
                lets.append(Let(v, _tail_type(new_ty, j), Snd(prev)))
                cache[j] = v
            return cache[j]

        for let in b.lets:
            match let.expr:
                case Snd(v) if v in tails:
                    tails[let.var] = tails[v] + 1
                    continue
                case Fst(v) if v in tails:
                    j = pos[tails[v]]
                    src = tail(j)
                    if j == m - 1:
                        sub[let.var] = src
                    else:
                        lets.append(Let(let.var, let.ty, Fst(src)))
                    continue
            e = _rename(let.expr, sub)
            match e:
                case For(i, ity, body):
                    e = For(i, ity, block(body, cache))
                case AccumBlock(acc, init, body):
                    e = AccumBlock(acc, init, block(body, cache))
            lets.append(Let(let.var, let.ty, e))
        return Block(tuple(lets), sub.get(b.result, b.result))

    body = block(bwd.body, {0: t})
    params = bwd.params[:-1] + ((t, new_ty),)
    return replace(bwd, params=params, body=body)


def _tail_type(ty, j):
    for _ in range(j):
        ty = ty.second
    return ty


def _rename(expr, sub):
    return rename_expr(expr, lambda v: sub.get(v, v))
