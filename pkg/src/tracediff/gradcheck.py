"""Reverse-mode gradients against central finite differences."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from . import builder as b
from .autodiff import vjp
from .builder import RecordType, VecType, to_ty
from .errors import IRError
from .exec import compile
from .ir import Arr, Call, Fin, For, AccumBlock, Pair, Real


class NotDifferentiable(IRError):
    """The function does not map Real leaves to one Real."""


@dataclass
class GradCheckReport:
    function: str
    max_rel_error: float
    coordinate: int | None
    point: list | None
    step: float | None
    samples: int
    seed: int
    tol: float
    custom_jvp: bool = False
    gradient: float | None = None
    finite_difference: float | None = None

    @property
    def passed(self):
        return self.max_rel_error <= self.tol

    @property
    def documented_mismatch(self):
        """A miss on a function whose derivative was supplied by hand."""
        return not self.passed and self.custom_jvp


def real_leaves_only(spec):
    ty = to_ty(spec)

    def ok(t):
        match t:
            case Pair(x, y):
                return ok(x) and ok(y)
            case Arr(Fin(), e):
                return ok(e)
        return t == Real

    return ok(ty)


def flatten(value):
    match value:
        case dict():
            return [x for k in value for x in flatten(value[k])]
        case list() | tuple():
            return [x for v in value for x in flatten(v)]
    return [float(value)]


def unflatten(spec, flat, at=0):
    """Rebuild a host value for ``spec`` from a flat list; returns (value, next)."""
    if isinstance(spec, RecordType):
        out = {}
        for name, s in zip(spec.names, spec.specs):
            out[name], at = unflatten(s, flat, at)
        return out, at
    if isinstance(spec, VecType):
        n = to_ty(spec).index.n
        out = []
        for _ in range(n):
            v, at = unflatten(spec.elem, flat, at)
            out.append(v)
        return out, at
    match spec:
        case Pair(x, y):
            u, at = unflatten(x, flat, at)
            v, at = unflatten(y, flat, at)
            return [u, v], at
        case Arr(Fin(n), e):
            out = []
            for _ in range(n):
                v, at = unflatten(e, flat, at)
                out.append(v)
            return out, at
    return flat[at], at + 1


def leaf_count(spec):
    return len(flatten(unflatten(spec, [0.0] * 100_000)[0]))


def uniform_sampler(spec, lo=-1.0, hi=1.0):
    """Independent uniform draws per Real leaf; ``lo``/``hi`` may be per-leaf lists."""
    n = leaf_count(spec)
    los = lo if isinstance(lo, (list, tuple)) else [lo] * n
    his = hi if isinstance(hi, (list, tuple)) else [hi] * n

    def draw(rng):
        return unflatten(spec, [rng.uniform(a, c) for a, c in zip(los, his)])[0]

    return draw


def uses_custom_jvp(reg, name, seen=None):
    seen = set() if seen is None else seen
    if name in seen:
        return False
    seen.add(name)
    if name in reg.custom_jvp:
        return True
    d = reg[name]
    if not hasattr(d, "body"):
        return False
    stack = [d.body]
    while stack:
        blk = stack.pop()
        for let in blk.lets:
            match let.expr:
                case Call(g, _, _):
                    if uses_custom_jvp(reg, g, seen):
                        return True
                case For(_, _, body) | AccumBlock(_, _, body):
                    stack.append(body)
    return False


def gradient_fn(f):
    """Traced ``x -> grad f(x)`` next to ``f`` in its registry."""
    spec = f.params[0]
    with b.use_registry(f.registry):
        return b.fn([spec], spec, lambda x: vjp(f)(x).grad(1), name=f"grad_{f.name}")


def check(f, sampler=None, *, samples=100, seed=0, tol=1e-5, rel_step=1e-6):
    """Compare the compiled gradient of ``f`` with central differences.

    The step for coordinate i is ``rel_step * max(1, |x_i|)``; the error is
    ``|g - fd| / max(1, |g|, |fd|)``.
    """
    if len(f.params) != 1 or not real_leaves_only(f.params[0]) or to_ty(f.ret) != Real:
        raise NotDifferentiable(f"{f.name} must take one Real-leaf argument and return Real")
    spec = f.params[0]
    sampler = sampler or uniform_sampler(spec)
    primal = compile(f)
    grad = compile(gradient_fn(f))
    rng = random.Random(seed)
    worst = (-1.0, None, None, None, None, None)
    for _ in range(samples):
        x = sampler(rng)
        flat = flatten(x)
        g = flatten(grad(x))
        for i, xi in enumerate(flat):
            h = rel_step * max(1.0, abs(xi))
            up, down = list(flat), list(flat)
            up[i] += h
            down[i] -= h
            fd = (primal(unflatten(spec, up)[0]) - primal(unflatten(spec, down)[0])) / (2 * h)
            err = abs(g[i] - fd) / max(1.0, abs(g[i]), abs(fd))
            if math.isnan(err):
                err = math.inf
            if err > worst[0]:
                worst = (err, i, flat, h, g[i], fd)
    err, coord, point, h, gi, fd = worst
    return GradCheckReport(f.name, max(err, 0.0), coord, point, h, samples, seed, tol,
                           uses_custom_jvp(f.registry, f.name), gi, fd)
