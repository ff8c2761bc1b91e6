"""Demo programs, traced for real.

Each ``*_program`` function builds a fresh registry and returns the handles a
caller needs.  The ``run_*`` functions execute the demos end to end and are
what the command line drives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import builder as b
from .autodiff import vjp
from .builder import Dual, Real, Vec, struct
from .errors import NonConvergence
from .exec import compile
from .ir import Registry

ANSCOMBE_X = [[10], [8], [13], [9], [11], [14], [6], [4], [12], [7], [5]]
ANSCOMBE_Y = [8.04, 6.95, 7.58, 8.81, 8.33, 9.96, 7.24, 4.26, 10.84, 4.82, 5.68]

R2 = Vec(2, Real)
R22 = Vec(2, R2)


# shared primitives


def install_trig():
    """sin and cos as opaque host calls, each with a JVP in terms of the other."""
    sin = b.opaque([Real], Real, math.sin, name="sin")
    cos = b.opaque([Real], Real, math.cos, name="cos")
    sin.jvp = b.fn([Dual], Dual, lambda d: {"re": sin(d["re"]), "du": b.mul(d["du"], cos(d["re"]))},
                   name="jvp_sin")
    cos.jvp = b.fn([Dual], Dual,
                   lambda d: {"re": cos(d["re"]), "du": b.mul(d["du"], b.neg(sin(d["re"])))},
                   name="jvp_cos")
    return sin, cos


def install_pow():
    """log and pow with derivatives given by their JVPs only."""
    log = b.opaque([Real], Real, math.log, name="log")
    log.jvp = b.fn([Dual], Dual, lambda d: {"re": log(d["re"]), "du": b.div(d["du"], d["re"])},
                   name="jvp_log")
    pow_ = b.opaque([Real, Real], Real, math.pow, name="pow")

    def pow_jvp(p, q):
        x, dx = p["re"], p["du"]
        y, dy = q["re"], q["du"]
        z = pow_(x, y)
        dw = b.add(b.mul(dx, b.div(y, x)), b.mul(dy, log(x)))
        return {"re": z, "du": b.mul(dw, z)}

    pow_.jvp = b.fn([Dual, Dual], Dual, pow_jvp, name="jvp_pow")
    return log, pow_


def max_(x, y):
    return b.select(b.gt(x, y), Real, x, y)


def install_clamped_sqrt():
    """Square root whose derivative is clamped near zero."""
    sqrt = b.fn([Real], Real, lambda x: b.sqrt(x), name="sqrt")

    def sqrt_jvp(d):
        y = sqrt(d["re"])
        dy = b.mul(d["du"], b.div(1 / 2, max_(1e-5, y)))
        return {"re": y, "du": dy}

    sqrt.jvp = b.fn([Dual], Dual, sqrt_jvp, name="jvp_sqrt")
    return sqrt


def sqr(x):
    return b.mul(x, x)


# programs


@dataclass
class Program:
    reg: Registry
    fns: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.fns[name]


def least_squares(m, n):
    return b.fn([struct(x=Vec(n, Vec(m, Real)), y=Vec(n, Real), b0=Real, b=Vec(m, Real))], Real,
                lambda p: b.sum(n, lambda i: sqr(b.sub(p["y"][i], b.add(
                    p["b0"], b.sum(m, lambda j: b.mul(p["x"][i][j], p["b"][j])))))),
                name="leastSquares")


def linreg_program(x=ANSCOMBE_X, y=ANSCOMBE_Y):
    """Loss ``g`` over Beta and its gradient ``h``, with the data baked in."""
    n, m = len(y), len(x[0])
    reg = Registry()
    with b.use_registry(reg):
        beta = struct(b0=Real, b=Vec(m, Real))
        f = least_squares(m, n)
        g = b.fn([beta], Real, lambda p: f({"x": x, "y": y, "b0": p["b0"], "b": p["b"]}), name="g")
        h = b.fn([beta], beta, lambda p: vjp(g)(p).grad(1), name="h")
    return Program(reg, {"leastSquares": f, "g": g, "h": h})


def quadratic_program():
    """Value, gradient and Hessian of ``x ** y`` via opaque pow and log."""
    reg = Registry()
    with b.use_registry(reg):
        log, pow_ = install_pow()
        f = b.fn([R2], Real, lambda v: pow_(v[0], v[1]), name="f")
        g = b.fn([R2], R2, lambda v: vjp(f)(v).grad(1), name="g")

        def hess(v):
            grad = vjp(g)(v).grad
            return b.vec(grad([1, 0]), grad([0, 1]))

        h = b.fn([R2], R22, hess, name="h")

        def everything(x, y):
            v = b.vec(x, y)
            return {"z": f(v), "g": g(v), "h": h(v)}

        all_ = b.fn([Real, Real], struct(z=Real, g=R2, h=R22), everything, name="all")
        logpow = b.fn([R2], Real, lambda v: b.add(log(v[0]), pow_(v[0], v[1])), name="logpow")
    return Program(reg, {"log": log, "pow": pow_, "f": f, "g": g, "h": h, "all": all_,
                         "logpow": logpow})


def trig_program():
    """sin/cos with mutual JVPs, the negated sine and a two-argument mix."""
    reg = Registry()
    with b.use_registry(reg):
        sin, cos = install_trig()
        f = b.fn([Real], Real, lambda u: b.neg(sin(u)), name="f")
        mix = b.fn([R2], Real, lambda v: b.mul(sin(v[0]), cos(b.mul(v[0], v[1]))), name="mix")
    return Program(reg, {"sin": sin, "cos": cos, "f": f, "mix": mix})


def sqrt_program():
    reg = Registry()
    with b.use_registry(reg):
        sqrt = install_clamped_sqrt()
        g = b.fn([Real], Real, lambda x: vjp(sqrt)(x).grad(1), name="dsqrt")
    return Program(reg, {"sqrt": sqrt, "dsqrt": g})


@dataclass
class SpringConfig:
    mass: float = 1.0
    stiffness: float = 4.0
    damping: float = 0.1
    dt: float = 0.05
    steps: int = 100
    x0: float = 0.0
    target: float = 0.5


def spring_step(cfg, x, v):
    """One explicit Euler step, expanded inline wherever it is used."""
    force = b.sub(b.mul(-cfg.stiffness, x), b.mul(cfg.damping, v))
    return b.add(x, b.mul(cfg.dt, v)), b.add(v, b.mul(cfg.dt, b.div(force, cfg.mass)))


def spring_program(cfg=None):
    """Final position after ``cfg.steps`` Euler steps from v0, and its squared miss."""
    cfg = cfg or SpringConfig()
    reg = Registry()
    with b.use_registry(reg):
        def simulate(v0):
            x, v = cfg.x0, v0
            for _ in range(cfg.steps):
                x, v = spring_step(cfg, x, v)
            return x

        final = b.fn([Real], Real, simulate, name="final")
        loss = b.fn([Real], Real, lambda v0: sqr(b.sub(final(v0), cfg.target)), name="loss")
        grad = b.fn([Real], Real, lambda v0: vjp(loss)(v0).grad(1), name="dloss")
    return Program(reg, {"final": final, "loss": loss, "dloss": grad})


def chain_program(lets=100, calls=50):
    """A body of ``lets`` lets called ``calls`` times in sequence, and its gradient."""
    reg = Registry()
    with b.use_registry(reg):
        body = b.fn([Real], Real, lambda x: _chain_body(x, lets), name="body")

        def chained(x):
            for _ in range(calls):
                x = body(x)
            return x

        top = b.fn([Real], Real, chained, name="chain")
        grad = b.fn([Real], Real, lambda x: vjp(top)(x).grad(1), name="dchain")
    return Program(reg, {"body": body, "chain": top, "dchain": grad})


def _chain_body(x, lets):
    # two cached constants plus lets - 2 ops; the sign flips keep the derivative at +-1
    y = x
    for k in range(lets - 2):
        y = b.mul(y, -1.0) if k % 2 else b.add(y, 0.25)
    return y


# runners


_DEFAULTS = {
    "linreg": dict(eta=1e-4, max_iters=10_000_000, tol=1e-12),
    "spring": dict(eta=1.0, max_iters=10_000, tol=1e-6),
    "quadratic": dict(eta=1.0, max_iters=1, tol=0.0),
}


@dataclass
class DemoConfig:
    name: str
    eta: float
    max_iters: int
    tol: float
    seed: int = 0

    def __post_init__(self):
        if self.name not in _DEFAULTS:
            raise ValueError(f"unknown demo {self.name!r}; pick one of {sorted(_DEFAULTS)}")
        if not (isinstance(self.eta, (int, float)) and math.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"step size must be positive and finite, got {self.eta!r}")
        if not (isinstance(self.max_iters, int) and self.max_iters >= 1):
            raise ValueError(f"max iterations must be at least 1, got {self.max_iters!r}")
        if not self.tol >= 0:
            raise ValueError(f"tolerance must be nonnegative, got {self.tol!r}")

    @classmethod
    def defaults(cls, name, **overrides):
        kw = dict(_DEFAULTS.get(name, {}))
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(name, **kw)


@dataclass
class Report:
    """Ordered result fields of a demo run."""

    fields: dict
    converged: bool = True

    def __getitem__(self, key):
        return self.fields[key]


def run_linreg(config=None, start=None, x=ANSCOMBE_X, y=ANSCOMBE_Y):
    """Gradient descent on the least-squares loss until the update stops moving."""
    config = config or DemoConfig.defaults("linreg")
    prog = linreg_program(x, y)
    grad = compile(prog["h"])
    loss = compile(prog["g"])
    b0, bv = (0.0, [0.0] * len(x[0])) if start is None else (start[0], list(start[1]))
    converged = False
    it = 0
    while it < config.max_iters:
        it += 1
        g = grad({"b0": b0, "b": bv})
        nb0 = b0 - config.eta * g["b0"]
        nb = [bi - config.eta * gi for bi, gi in zip(bv, g["b"])]
        delta = max([abs(nb0 - b0)] + [abs(p - q) for p, q in zip(nb, bv)])
        b0, bv = nb0, nb
        if delta <= config.tol:
            converged = True
            break
    final = loss({"b0": b0, "b": bv})
    return Report({"b0": b0, "b": bv, "iterations": it, "loss": final}, converged)


def run_quadratic(x=2.0, y=3.0):
    prog = quadratic_program()
    out = compile(prog["all"])(x, y)
    h = out["h"]
    asym = max(abs(h[i][j] - h[j][i]) for i in range(2) for j in range(2))
    return Report({"x": x, "y": y, "z": out["z"], "gradient": out["g"], "hessian": h,
                   "asymmetry": asym})


def run_spring(config=None, spring=None, v0=0.0):
    """Find the launch velocity whose final position hits the target."""
    config = config or DemoConfig.defaults("spring")
    spring = spring or SpringConfig()
    prog = spring_program(spring)
    final = compile(prog["final"])
    grad = compile(prog["dloss"])
    converged = False
    it = 0
    x_t = final(v0)
    while it < config.max_iters:
        if abs(x_t - spring.target) <= config.tol:
            converged = True
            break
        it += 1
        v0 = v0 - config.eta * grad(v0)
        x_t = final(v0)
    if not converged:
        converged = abs(x_t - spring.target) <= config.tol
    return Report({"v0": v0, "final_position": x_t, "target": spring.target, "iterations": it,
                   "loss": (x_t - spring.target) ** 2}, converged)


def check_converged(report):
    if not report.converged:
        raise NonConvergence(f"no convergence after {report['iterations']} iterations")
    return report
