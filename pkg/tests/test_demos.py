import math

import pytest

from tracediff import builder as b
from tracediff import demos
from tracediff import errors as E
from tracediff.exec import compile
from tracediff.ir import Registry
from tracediff.ir.syntax import iter_lets


def normal_equations(x, y):
    """Closed-form simple regression, solved independently of the tracer."""
    xs = [row[0] for row in x]
    n = len(xs)
    mx, my = sum(xs) / n, sum(y) / n
    slope = sum((a - mx) * (c - my) for a, c in zip(xs, y)) / sum((a - mx) ** 2 for a in xs)
    return my - slope * mx, slope


def test_oracle_on_anscombe():
    b0, b = normal_equations(demos.ANSCOMBE_X, demos.ANSCOMBE_Y)
    assert b0 == pytest.approx(3.0, abs=0.01) and b == pytest.approx(0.5, abs=0.005)


def test_linreg_from_optimum_stops_at_once():
    b0, b = normal_equations(demos.ANSCOMBE_X, demos.ANSCOMBE_Y)
    rep = demos.run_linreg(start=(b0, [b]))
    assert rep.converged and rep["iterations"] <= 2
    assert rep["b0"] == pytest.approx(b0, abs=1e-9)


def test_linreg_budget_exhaustion():
    rep = demos.run_linreg(demos.DemoConfig.defaults("linreg", max_iters=3))
    assert not rep.converged and rep["iterations"] == 3
    with pytest.raises(E.NonConvergence):
        demos.check_converged(rep)


@pytest.mark.parametrize("bad", [dict(eta=0.0), dict(eta=-1.0), dict(eta=math.nan), dict(max_iters=0),
                                 dict(tol=-1.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        demos.DemoConfig.defaults("linreg", **bad)


def test_spring_at_rest():
    rep = demos.run_spring(spring=demos.SpringConfig(target=0.0))
    assert rep.converged and rep["loss"] == 0.0 and rep["iterations"] == 0


def test_spring_gradient_against_differences():
    prog = demos.spring_program()
    loss, grad = compile(prog["loss"]), compile(prog["dloss"])
    for v0 in (-2.0, -0.5, 0.3, 1.7):
        h = 1e-6
        fd = (loss(v0 + h) - loss(v0 - h)) / (2 * h)
        assert grad(v0) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_spring_trace_grows_linearly():
    def lets(steps):
        cfg = demos.SpringConfig(steps=steps)
        reg = Registry()

        def simulate(v0):
            x, v = cfg.x0, v0
            for _ in range(steps):
                x, v = demos.spring_step(cfg, x, v)
            return x

        with b.use_registry(reg):
            f = b.fn([b.Real], b.Real, simulate, name="final")
        return len(list(iter_lets(reg[f.name].body)))

    assert 1.9 <= lets(200) / lets(100) <= 2.1


def test_spring_converges():
    rep = demos.run_spring()
    assert rep.converged
    assert abs(rep["final_position"] - 0.5) <= 1e-6


def test_demos_have_no_nan_on_defaults():
    values = []
    q = demos.run_quadratic()
    values += [q["z"], *q["gradient"], *q["hessian"][0], *q["hessian"][1]]
    s = demos.run_spring()
    values += [s["v0"], s["loss"]]
    sq = demos.sqrt_program()
    values += [compile(sq["dsqrt"])(0.0), compile(sq["dsqrt"])(1.0)]
    lin = compile(demos.linreg_program()["h"])({"b0": 0.0, "b": [0.0]})
    values += [lin["b0"], *lin["b"]]
    assert all(math.isfinite(v) for v in values)
