"""Random traced programs that touch every IR construct.

Each program maps a vector of k Reals to a vector of m Reals through a mix of
arithmetic, select, loops, accumulators, generic calls and an opaque call
with a hand-written derivative.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from tracediff import builder as b
from tracediff.autodiff import jvp, vjp
from tracediff.builder import Real, Vec, struct
from tracediff.demos import install_trig
from tracediff.exec import compile
from tracediff.ir import Registry


@dataclass
class Generated:
    reg: Registry
    k: int
    m: int
    f: object
    jvp: object
    vjp: object
    ops: list


def _ops(rng, pool, helpers, steps):
    sin, dot, smooth = helpers
    used = []
    for _ in range(steps):
        a, c = rng.choice(pool), rng.choice(pool)
        op = rng.randrange(11)
        used.append(op)
        match op:
            case 0:
                y = b.add(a, c)
            case 1:
                y = b.sub(a, b.mul(0.5, c))
            case 2:
                y = b.mul(a, c)
            case 3:
                y = b.div(a, b.add(1.0, b.mul(c, c)))
            case 4:
                y = b.neg(a)
            case 5:
                y = b.select(b.gt(a, c), Real, a, c)
            case 6:
                y = b.sqrt(b.add(1.0, b.mul(a, a)))
            case 7:
                y = smooth(a, c)
            case 8:
                y = sin(a)
            case 9:
                v = b.vec(*rng.sample(pool, min(len(pool), 3)))
                w = b.array(len(v), lambda i: b.mul(v[i], c))
                y = dot(v, w)
            case _:
                v = b.vec(*rng.sample(pool, min(len(pool), 3)))
                t = b.accum(b.mul(0.0, a),
                            lambda acc: b.array(len(v), lambda i: b.accumulate(acc, b.mul(v[i], a))))
                y = b.fst(t)
        pool.append(y)
    return used


def generate(seed, steps=10):
    rng = random.Random(seed)
    k, m = rng.randint(1, 4), rng.randint(1, 3)
    reg = Registry()
    with b.use_registry(reg):
        sin, _ = install_trig()
        dot = b.fn([Vec("n", Real), Vec("n", Real)], Real,
                   lambda u, v: b.sum("n", lambda i: b.mul(u[i], v[i])),
                   name="dot", generics={"n": b.Index})
        smooth = b.fn([Real, Real], Real, lambda x, y: b.add(b.mul(x, y), b.mul(0.25, x)),
                      name="smooth")
        record = {}

        def body(x):
            pool = list(x)
            record["ops"] = _ops(rng, pool, (sin, dot, smooth), steps)
            return b.vec(*pool[-m:])

        f = b.fn([Vec(k, Real)], Vec(m, Real), body, name="f")
        jf = b.fn([struct(x=Vec(k, Real), dx=Vec(k, Real))], Vec(m, Real),
                  lambda p: jvp(f)(p["x"], p["dx"])[1], name="jf")
        vf = b.fn([struct(x=Vec(k, Real), dy=Vec(m, Real))], Vec(k, Real),
                  lambda p: vjp(f)(p["x"]).grad(p["dy"]), name="vf")
    return Generated(reg, k, m, compile(f), compile(jf), compile(vf), record["ops"])


def transpose_gap(g, rng):
    """|<dy, J dx> - <J^T dy, dx>| and its scale at one random probe."""
    x = [rng.uniform(-1.5, 1.5) for _ in range(g.k)]
    dx = [rng.uniform(-1.0, 1.0) for _ in range(g.k)]
    dy = [rng.uniform(-1.0, 1.0) for _ in range(g.m)]
    jdx = g.jvp({"x": x, "dx": dx})
    vdy = g.vjp({"x": x, "dy": dy})
    lhs = sum(p * q for p, q in zip(dy, jdx))
    rhs = sum(p * q for p, q in zip(vdy, dx))
    scale = max(1.0, sum(abs(p * q) for p, q in zip(dy, jdx)),
                sum(abs(p * q) for p, q in zip(vdy, dx)))
    return abs(lhs - rhs), scale
