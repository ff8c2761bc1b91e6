"""Small let-emitter shared by the program transforms."""

from __future__ import annotations

from .syntax import Block, Const, Fst, Let, PairLit, Snd, UnitLit
from .types import Pair, Real, Unit


class Emitter:
    """Appends typed lets to a stack of open blocks, numbering vars freshly."""

    def __init__(self, start=0):
        self.next = start
        self.types = {}
        self.names = {}
        self.stack = [[]]

    def fresh(self, ty, name=None):
        v = self.next
        self.next += 1
        self.types[v] = ty
        if name:
            self.names[v] = name
        return v

    def let(self, ty, expr, name=None):
        v = self.fresh(ty, name)
        self.stack[-1].append(Let(v, ty, expr))
        return v

    def bind(self, var, ty, expr):
        """Emit a let for a variable id chosen by the caller."""
        self.types[var] = ty
        self.stack[-1].append(Let(var, ty, expr))
        return var

    def push(self):
        self.stack.append([])

    def pop(self, result):
        return Block(tuple(self.stack.pop()), result)

    # conveniences

    def const(self, c):
        return self.let(Real, Const(float(c)))

    def unit(self):
        return self.let(Unit, UnitLit())

    def pair(self, a, b, name=None):
        return self.let(Pair(self.types[a], self.types[b]), PairLit(a, b), name)

    def fst(self, p, name=None):
        return self.let(self.types[p].first, Fst(p), name)

    def snd(self, p, name=None):
        return self.let(self.types[p].second, Snd(p), name)
