import json
import math

import pytest

from test_ir import SUM_TEXT
from test_opt import OPTIMIZED_F
from tracediff import demos
from tracediff.cli import main
from tracediff.ir import parse_ir, print_ir
from tracediff.ir.text import alpha_equal

PRELUDE = 'opaque sin(Real): Real = "math.sin"\nopaque cos(Real): Real = "math.cos"\n'


@pytest.fixture
def write(tmp_path):
    def go(text, name="p.ir"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return go


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def structured(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--structured")
    return code, json.loads(out)


def test_check_listing_6(capsys, write):
    code, _, _ = run(capsys, "check", write(SUM_TEXT))
    assert code == 0


def test_check_rejects_fin_overflow(capsys, write):
    code, _, err = run(capsys, "check", write("def f(x: Real): 3 =\n  let y: 3 = 3 in y\n"))
    assert code == 1 and "FinOutOfRange" in err


def test_check_rejects_parse_error(capsys, write):
    code, _, _ = run(capsys, "check", write("def f(x: Real): Real =\n  let y: Fin(3) = 3 in x\n"))
    assert code == 1


def test_dump_vjp_matches_optimized_listing(capsys, write):
    path = write(print_ir(demos.trig_program().reg))
    code, out, _ = run(capsys, "dump", path, "--dump-vjp", "f", "--opt")
    assert code == 0
    got = parse_ir(PRELUDE + out)
    want = parse_ir(OPTIMIZED_F)
    for name in ("fwd_sin", "bwd_sin", "fwd_f", "bwd_f"):
        assert alpha_equal(got[name], want[name]), name


def test_dump_unknown_function(capsys, write):
    path = write(print_ir(demos.trig_program().reg))
    assert run(capsys, "dump", path, "--dump-vjp", "nope")[0] == 1


def test_gradcheck_sum_is_all_ones(capsys, write):
    path = write("def sum5(v: [5]Real): Real = fst (accum a from 0.0 in [for i: 5, a += v[i]])\n")
    code, rep = structured(capsys, "gradcheck", path, "--fn", "sum5")
    assert code == 0 and rep["status"] == "pass"
    assert rep["gradient"] == 1.0
    assert rep["max_rel_error"] <= 1e-9


def test_gradcheck_log_near_two(capsys, write):
    reg = demos.quadratic_program().reg
    path = write(print_ir(reg))
    code, rep = structured(capsys, "gradcheck", path, "--fn", "logpow", "--center", "2",
                           "--spread", "0.1")
    assert code == 0 and rep["status"] == "pass"
    text = ('opaque log(Real): Real = "math.log"\n'
            "def jvp_log(d: (Real, Real)): (Real, Real) =\n"
            "  let x: Real = fst d in\n  let y: Real = log(x) in\n"
            "  let t: Real = snd d in\n  let q: Real = (t / x) in\n  (y, q)\n"
            "jvp log = jvp_log\n"
            "def lg(x: Real): Real = log(x)\n")
    code, rep = structured(capsys, "gradcheck", write(text, "log.ir"), "--fn", "lg",
                           "--center", "2", "--spread", "0")
    assert code == 0 and rep["gradient"] == 0.5


def test_gradcheck_clamped_sqrt(capsys, write):
    path = write(print_ir(demos.sqrt_program().reg))
    argv = ("gradcheck", path, "--fn", "sqrt_1", "--center", "1e-12", "--spread", "0", "--samples", "3")
    code, rep = structured(capsys, *argv)
    assert code == 1 and rep["status"] == "fail"
    assert rep["gradient"] == pytest.approx(0.5 / 1e-5, rel=1e-12)
    assert math.isfinite(rep["gradient"]) and rep["custom_jvp"]
    code, rep = structured(capsys, *argv, "--allow-custom")
    assert code == 0 and rep["status"] == "documented-mismatch"


def test_gradcheck_is_deterministic(capsys, write):
    path = write(print_ir(demos.trig_program().reg))
    a = structured(capsys, "gradcheck", path, "--fn", "mix", "--seed", "4")
    b = structured(capsys, "gradcheck", path, "--fn", "mix", "--seed", "4")
    assert a == b and a[0] == 0


def test_run_quadratic(capsys):
    code, rep = structured(capsys, "run", "quadratic")
    assert code == 0 and rep["z"] == 8.0 and rep["asymmetry"] <= 1e-9


def test_run_rejects_zero_step(capsys):
    code, _, err = run(capsys, "run", "linreg", "--eta", "0")
    assert code == 1 and err


def test_run_spring_nonconvergence(capsys):
    code, out, err = run(capsys, "run", "spring", "--max-iters", "2")
    assert code == 2
    assert "v0" in out and "error" in err


def test_run_spring(capsys):
    code, rep = structured(capsys, "run", "spring")
    assert code == 0 and rep["converged"]
    assert abs(rep["final_position"] - rep["target"]) <= 1e-6


def test_bench_suites(capsys):
    code, rep = structured(capsys, "bench", "--suite", "scaling")
    assert code == 0
    assert rep["gradient_static_lets"] <= 400 and rep["inlined_primal_lets"] >= 5000
    code, rep = structured(capsys, "bench", "--suite", "opcount")
    assert code == 0 and rep["ratio_n50"] <= 8 and rep["ratio_drift"] <= 0.2
    assert structured(capsys, "bench", "--suite", "opcount")[1] == rep


def test_plain_output_is_key_value(capsys):
    code, out, _ = run(capsys, "run", "quadratic")
    assert code == 0
    assert out.splitlines()[0].startswith("demo = quadratic")
