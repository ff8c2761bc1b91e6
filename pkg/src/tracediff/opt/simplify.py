"""Local clean-up of transformed definitions.

Transposition output is extremely redundant: one accumulator block per let,
structural lets rebuilt on both sides, zero literals everywhere.  The passes
here fold that back down without changing what the function computes:

* pair cancellation and copy propagation (``fst (a, b)`` is ``a``),
* zero folding (``x + 0``, ``0 * y``, ``acc += 0`` ...),
* unit erasure (pure unit-typed lets become ``()``),
* accumulator forwarding (an accumulator that is only ever added to at the
  top level of its own block is replaced by the sum of what was added),
* literal sharing (a literal bound at the top of the function serves every
  later copy of itself),
* primal reuse (a forward pass whose tape is empty is replaced by a call of
  the primal function it was derived from),
* dead-let elimination, which never drops a let with an effect on an outer
  accumulator or a host call.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .._deep import deep
from ..autodiff.shapes import zeros
from ..ir.emit import Emitter
from ..ir.syntax import (
    Accumulate,
    AccumBlock,
    Binary,
    Block,
    Call,
    Const,
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
    Select,
    Snd,
    Unary,
    UnitLit,
    block_size,
    canonicalize,
    nested_blocks,
    operands,
    rename_expr,
)
from ..ir.types import Acc, Pair, Real, RealTy, Unit, UnitTy

IO = "io"


@dataclass(frozen=True)
class PassConfig:
    pairs: bool = True
    copies: bool = True
    zeros: bool = True
    units: bool = True
    dead_lets: bool = True
    forward_accumulators: bool = True
    literals: bool = True
    primal_calls: bool = True
    max_iters: int = 32


DEFAULT = PassConfig()


@deep
def simplify(d, reg, config=DEFAULT):
    """Simplify ``d`` to a fixpoint (or the iteration cap); never adds lets."""
    start = canonicalize(d)
    out = _fixpoint(start, reg, config)
    if config.forward_accumulators and block_size(out.body) > block_size(start.body):
        # summing forwarded contributions can cost more than the block it replaced
        out = _fixpoint(start, reg, replace(config, forward_accumulators=False))
    return out if block_size(out.body) <= block_size(start.body) else start


def _fixpoint(cur, reg, config):
    for _ in range(config.max_iters):
        nxt = canonicalize(_Pass(cur, reg, config).run())
        if nxt == cur:
            break
        cur = nxt
    return cur


# effects


class _Effects:
    """Which outer accumulators (or the host) a let can touch."""

    def __init__(self, params, reg):
        self.reg = reg
        self.roots = {v: frozenset((v,)) for v, ty in params if isinstance(ty, Acc)}
        self._pure = {}

    def scan(self, block):
        for let in block.lets:
            match let.expr:
                case RefFst(a) | RefSnd(a) | RefIndex(a, _):
                    self.roots[let.var] = self.roots.get(a, frozenset())
                case Select(_, a, b) if isinstance(let.ty, Acc):
                    self.roots[let.var] = self.roots.get(a, frozenset()) | self.roots.get(b, frozenset())
                case AccumBlock(acc, _, body):
                    self.roots[acc] = frozenset((acc,))
                    self.scan(body)
                case For(_, _, body):
                    self.scan(body)

    def call_is_pure(self, name):
        if name in self._pure:
            return self._pure[name]
        self._pure[name] = False
        item = self.reg[name]
        ok = isinstance(item, FuncDef) and not any(isinstance(t, Acc) for t in item.param_types)
        if ok:
            ok = all(
                self.call_is_pure(e.func)
                for e in _all_exprs(item.body)
                if isinstance(e, Call)
            )
        self._pure[name] = ok
        return ok

    def of(self, expr):
        match expr:
            case Accumulate(t, _):
                return self.roots.get(t, frozenset((t,)))
            case Call(g, _, args):
                if self.call_is_pure(g):
                    return frozenset()
                out = {IO} if _calls_host(self.reg, g) else set()
                for a in args:
                    out |= self.roots.get(a, frozenset())
                return frozenset(out)
            case For(_, _, body):
                return self.block(body)
            case AccumBlock(acc, _, body):
                return self.block(body) - {acc}
        return frozenset()

    def block(self, block):
        out = frozenset()
        for let in block.lets:
            out |= self.of(let.expr)
        return out


def _all_exprs(block):
    for let in block.lets:
        yield let.expr
        for inner in nested_blocks(let.expr):
            yield from _all_exprs(inner)


def _calls_host(reg, name, seen=None):
    seen = set() if seen is None else seen
    if name in seen:
        return False
    seen.add(name)
    item = reg[name]
    if isinstance(item, OpaqueDef):
        return True
    return any(_calls_host(reg, e.func, seen) for e in _all_exprs(item.body) if isinstance(e, Call))


def free_vars(block, cache=None):
    """Variables read anywhere inside ``block``.

    ``cache`` maps ``id(block)`` to ``(block, reads)``; keeping the block
    alive in the entry stops its id from being reused.
    """
    cache = {} if cache is None else cache
    hit = cache.get(id(block))
    if hit is not None and hit[0] is block:
        return hit[1]
    out = set()
    for let in block.lets:
        out.update(operands(let.expr))
        for inner in nested_blocks(let.expr):
            out |= free_vars(inner, cache)
    out.add(block.result)
    out = frozenset(out)
    cache[id(block)] = (block, out)
    return out


# one pass


class _Pass:
    def __init__(self, d, reg, config):
        self.d = d
        self.reg = reg
        self.cfg = config
        self.sub = {}
        self.reads = {}
        self.readers = {}  # accumulator -> top-level lets reading it directly
        self.nested = set()  # accumulators read from inside a nested block
        self.dropped = set()  # ids of lets erased by forwarding
        self.depth = 0
        self.lits = {}  # literal key -> variable bound at depth 0
        self.pairs = {}
        self.zero = set()
        self.unit = set()
        self.neg = {}
        self.types = dict(d.params)
        self.next = _max_var(d) + 1

    def fresh(self, ty):
        v = self.next
        self.next += 1
        self.types[v] = ty
        return v

    def look(self, v):
        while v in self.sub:
            v = self.sub[v]
        return v

    def run(self):
        body = self.block(self.d.body)
        if self.dropped:
            body = self.erase(body)
        if self.cfg.dead_lets:
            body = _Dce(self.d, self.reg).run(body)
        return replace(self.d, body=body)

    def block(self, block):
        out = []
        res = self.block_into(block, out)
        return self.finish(out, res)

    def block_into(self, block, out):
        for let in block.lets:
            self.let(let, out)
        return self.look(block.result)

    def finish(self, out, res):
        if self.cfg.units and res in self.unit:
            # every unit is the same value, so ``...; eff; ()`` can end on ``eff``
            k = len(out) - 1
            while k >= 0 and isinstance(out[k].expr, UnitLit):
                k -= 1
            if k >= 0 and out[k].ty == Unit:
                res = out[k].var
        return Block(tuple(out), res)

    def erase(self, block):
        lets = []
        for let in block.lets:
            if id(let) in self.dropped:
                if isinstance(let.expr, Accumulate):
                    lets.append(Let(let.var, Unit, UnitLit()))
                continue
            match let.expr:
                case For(i, ity, body):
                    let = Let(let.var, let.ty, For(i, ity, self.erase(body)))
                case AccumBlock(acc, init, body):
                    let = Let(let.var, let.ty, AccumBlock(acc, init, self.erase(body)))
            lets.append(let)
        return Block(tuple(lets), block.result)

    def put(self, out, let):
        out.append(let)
        for v in operands(let.expr):
            if isinstance(self.types.get(v), Acc):
                self.readers.setdefault(v, []).append(let)
        for inner in nested_blocks(let.expr):
            for v in free_vars(inner, self.reads):
                if isinstance(self.types.get(v), Acc):
                    self.nested.add(v)

    def emit(self, out, ty, expr):
        v = self.fresh(ty)
        self.put(out, Let(v, ty, expr))
        self.note(v, ty, expr)
        return v

    def note(self, v, ty, expr):
        self.types[v] = ty
        match expr:
            case PairLit(a, b):
                self.pairs[v] = (a, b)
                if a in self.zero and b in self.zero:
                    self.zero.add(v)
            case Const(c) if c == 0.0:
                self.zero.add(v)
            case Unary("neg", a):
                self.neg[v] = a
        if ty == Unit:
            self.unit.add(v)

    def let(self, let, out):
        cfg = self.cfg
        x, ty = let.var, let.ty
        e = rename_expr(let.expr, self.look)
        match e:
            case For(i, ity, body):
                self.types[i] = ity
                self.depth += 1
                nb = self.block(body)
                self.depth -= 1
                e = For(i, ity, nb)
                if cfg.zeros and nb.result in self.zero and not _has_effects_shallow(nb):
                    self.zero.add(x)
            case AccumBlock(acc, init, body):
                self.types[acc] = Acc(self.types.get(init, ty.first))
                # the body goes straight into ``out`` on the bet that it can be
                # hoisted; a whole nest of accumulators then unwinds in one pass
                start = len(out)
                self.depth += 1
                res = self.block_into(body, out)
                self.depth -= 1
                if cfg.forward_accumulators and self.forward(x, ty, acc, res, out):
                    return
                inner = out[start:]
                del out[start:]
                e = AccumBlock(acc, init, self.finish(inner, res))

        if cfg.literals and isinstance(e, (UnitLit, Const)):
            key = _literal_key(e)
            if key in self.lits:
                self.sub[x] = self.lits[key]
                return
            if self.depth == 0:
                self.lits[key] = x

        if cfg.primal_calls and isinstance(e, Call):
            prim = self.reg.memo.get(("primal", e.func))
            if prim is not None:
                y = self.emit(out, ty.first, Call(prim, e.type_args, e.args))
                e = PairLit(y, self.unit_value(out))

        if cfg.pairs or cfg.copies:
            match e:
                case Fst(p) if p in self.pairs:
                    self.sub[x] = self.pairs[p][0]
                    return
                case Snd(p) if p in self.pairs:
                    self.sub[x] = self.pairs[p][1]
                    return

        if cfg.zeros:
            folded = self.fold(x, ty, e, out)
            if folded is not None:
                if isinstance(folded, int):
                    self.sub[x] = folded
                    return
                e = folded

        if cfg.units and ty == Unit and isinstance(e, (PairLit, Fst, Snd, Index, Select)):
            e = UnitLit()

        self.put(out, Let(x, ty, e))
        self.note(x, ty, e)

    def fold(self, x, ty, e, out):
        """Returns a replacement variable, a replacement expression, or None."""
        z = self.zero
        match e:
            case Binary("add", a, b) if ty == Real:
                if b in z:
                    return a
                if a in z:
                    return b
            case Binary("sub", a, b) if ty == Real:
                if b in z:
                    return a
                if a in z:
                    return Unary("neg", b)
            case Binary("mul", a, b) if ty == Real:
                if a in z:
                    return a
                if b in z:
                    return b
            case Binary("div", a, b) if ty == Real:
                if a in z:
                    return a
            case Unary("neg", a) if ty == Real:
                if a in self.neg:
                    return self.neg[a]
                if a in z:
                    return a
            case Fst(p) | Snd(p) if p in z and ty == Real:
                return Const(0.0)
            case Index(a, _) if a in z and ty == Real:
                return Const(0.0)
            case Select(_, a, b) if a in z and b in z:
                return a
            case Accumulate(_, v) if v in z:
                return UnitLit()
        return None

    # accumulator forwarding

    def unit_value(self, out):
        v = self.lits.get(("unit",))
        if v is None:
            v = self.emit(out, Unit, UnitLit())
            if self.depth == 0:
                self.lits[("unit",)] = v
        return v

    def forward(self, x, ty, acc, res, out):
        """Replace ``accum acc from _ in body`` by the sum of what body adds.

        The simplified body already sits at the end of ``out``.  Only direct
        top-level reads of the accumulator are allowed: projections and
        ``+=`` of values.
        """
        paths = {acc: ()}
        contrib = []
        todo = [acc]
        special = []
        while todo:
            a = todo.pop()
            if a in self.nested:
                return False
            for let in self.readers.get(a, ()):
                if id(let) in self.dropped:
                    continue
                match let.expr:
                    case RefFst(r) | RefSnd(r) if r == a:
                        step = 0 if isinstance(let.expr, RefFst) else 1
                        paths[let.var] = paths[a] + (step,)
                        todo.append(let.var)
                    case Accumulate(t, v) if t == a and v not in paths:
                        contrib.append((paths[a], v))
                    case _:
                        return False
                special.append(let)
        if res in paths:
            return False
        inner_ty = ty.first
        if not self.can_sum(inner_ty, (), contrib):
            return False
        self.dropped.update(id(let) for let in special)
        total = self.sum_at(inner_ty, (), [(p, self.look(v)) for p, v in contrib], out)
        self.sub[x] = self.emit(out, ty, PairLit(total, res))
        return True

    def can_sum(self, ty, path, contrib, above=0):
        here = above + sum(1 for p, _ in contrib if p == path)
        match ty:
            case Pair(a, b):
                return (self.can_sum(a, path + (0,), contrib, here)
                        and self.can_sum(b, path + (1,), contrib, here))
            case RealTy() | UnitTy():
                return True
        deeper = any(len(p) > len(path) and p[: len(path)] == path for p, _ in contrib)
        return here <= 1 and not deeper

    def sum_at(self, ty, path, parts, out):
        here = [v for p, v in parts if p == path]
        match ty:
            case Pair(a, b):
                # push whole-pair contributions down to the components
                sub = [(p, v) for p, v in parts if p != path and p[: len(path)] == path]
                for v in here:
                    sub.append((path + (0,), self.project(v, a, 0, out)))
                    sub.append((path + (1,), self.project(v, b, 1, out)))
                l = self.sum_at(a, path + (0,), sub, out)
                r = self.sum_at(b, path + (1,), sub, out)
                return self.emit(out, ty, PairLit(l, r))
            case UnitTy():
                return self.emit(out, Unit, UnitLit())
            case RealTy():
                if not here:
                    return self.emit(out, Real, Const(0.0))
                total = here[0]
                for v in here[1:]:
                    total = self.emit(out, Real, Binary("add", total, v))
                return total
        if here:
            return here[0]
        return self.zeros(ty, out)

    def project(self, v, ty, side, out):
        if v in self.pairs:
            return self.pairs[v][side]
        return self.emit(out, ty, Fst(v) if side == 0 else Snd(v))

    def zeros(self, ty, out):
        em = Emitter(self.next)
        z = zeros(em, ty)
        self.next = em.next
        for let in em.stack[0]:
            out.append(let)
            self.note(let.var, let.ty, let.expr)
        return z


def _literal_key(e):
    if isinstance(e, UnitLit):
        return ("unit",)
    # float.hex keeps -0.0 apart from 0.0
    return ("const", e.value.hex())


def _has_effects_shallow(block):
    return any(isinstance(l.expr, (Accumulate, Call, For, AccumBlock)) for l in block.lets)


def _max_var(d):
    top = max((v for v, _ in d.params), default=-1)

    def walk(block):
        nonlocal top
        for let in block.lets:
            top = max(top, let.var)
            match let.expr:
                case For(i, _, body):
                    top = max(top, i)
                    walk(body)
                case AccumBlock(acc, _, body):
                    top = max(top, acc)
                    walk(body)

    walk(d.body)
    return top


# dead lets


class _Dce:
    def __init__(self, d, reg):
        self.eff = _Effects(d.params, reg)
        self.live = set()

    def run(self, body):
        self.eff.scan(body)
        return self.block(body)

    def block(self, block):
        self.live.add(block.result)
        kept = []
        for let in reversed(block.lets):
            e = let.expr
            if let.var not in self.live and not self.eff.of(e):
                continue
            match e:
                case For(i, ity, body):
                    e = For(i, ity, self.block(body))
                case AccumBlock(acc, init, body):
                    e = AccumBlock(acc, init, self.block(body))
            self.live.update(operands(e))
            kept.append(Let(let.var, let.ty, e))
        kept.reverse()
        return Block(tuple(kept), block.result)
