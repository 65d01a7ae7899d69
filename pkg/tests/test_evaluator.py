import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampler_smith.corpus import corpus_entry
from sampler_smith.evaluator import (
    PRIM_FUNCS,
    DepthBudget,
    EvalFault,
    draw_samples,
    run_program,
    safe_uc,
    sample_program,
)
from sampler_smith.expr import REAL, Const, Lambda, parse_program
from sampler_smith.grammar import default_weights, generate_program

finite = st.floats(allow_nan=False, allow_infinity=False)


def test_constant_program():
    prog = Lambda((), REAL, Const(0.0, REAL))
    assert run_program(prog, [], np.random.default_rng(3)) == 0.0
    assert draw_samples(prog, 5, [], np.random.default_rng(3)).tolist() == [0.0] * 5


def test_zero_draws():
    prog = parse_program("(fn [] (safe-uc 0.0 1.0))")
    assert draw_samples(prog, 0, [], np.random.default_rng(0)).tolist() == []


def test_identity():
    prog = parse_program("(fn [x] x)")
    assert run_program(prog, [0.3], np.random.default_rng(0)) == 0.3
    assert draw_samples(prog, 3, [0.3], np.random.default_rng(0)).tolist() == [0.3] * 3


def test_bernoulli_saturates_at_one():
    e = corpus_entry("bernoulli")
    for seed in range(20):
        assert run_program(e.program, [1.0], np.random.default_rng(seed)) == 1.0
    assert (draw_samples(e.program, 1000, [1.0], np.random.default_rng(0)) == 1.0).all()


@pytest.mark.parametrize("text", ["(fn f [] (+ 1 (f)))", "(fn [] (+ 1 (recur)))"])
def test_recursion_cap_counts_from_zero(text):
    prog = parse_program(text)
    assert run_program(prog, [], np.random.default_rng(0)) == 10.0
    assert run_program(prog, [], np.random.default_rng(0), cap=3) == 3.0
    s = sample_program(prog, 4, [], np.random.default_rng(0))
    assert s.values.tolist() == [10.0] * 4
    assert s.capped.all()


def test_cap_hits_counted_by_scalar_budget():
    prog = parse_program("(fn [] (+ 1 (recur)))")
    budget = DepthBudget(5)
    run_program(prog, [], np.random.default_rng(0), budget=budget)
    assert budget.cap_hits == 1


def test_int_rounding_at_output_and_binding():
    prog = parse_program("(fn [] :int (* 2.5 1.0))")
    assert run_program(prog, [], np.random.default_rng(0)) == 2.0  # half to even
    prog = parse_program("(fn [] (let [n:int 3.6] (+ n 0.25)))")
    assert run_program(prog, [], np.random.default_rng(0)) == 4.25
    assert draw_samples(prog, 2, [], np.random.default_rng(0)).tolist() == [4.25, 4.25]


def test_int_parameters_are_rounded():
    prog = parse_program("(fn [n:int] n)")
    assert draw_samples(prog, 1, [2.7], np.random.default_rng(0)).tolist() == [3.0]


def test_step_budget_yields_nan():
    prog = parse_program("(fn [] (+ 1 (+ (recur) (recur))))")
    s = sample_program(prog, 3, [], np.random.default_rng(0), max_steps=100)
    assert s.out_of_steps
    assert np.isnan(s.values).all()
    assert math.isnan(run_program(prog, [], np.random.default_rng(0), budget=DepthBudget(10, max_steps=100)))
    # with enough budget the same program finishes: 2^10 - 1 increments
    assert run_program(prog, [], np.random.default_rng(0)) == 1023.0


def test_arity_mismatch_is_a_fault():
    prog = parse_program("(fn [x] x)")
    with pytest.raises(EvalFault):
        sample_program(prog, 3, [], np.random.default_rng(0))
    with pytest.raises(EvalFault):
        run_program(prog, [1.0, 2.0], np.random.default_rng(0))


def test_per_draw_arguments():
    prog = parse_program("(fn [a b] (+ a b))")
    out = draw_samples(prog, 3, [np.array([1.0, 2.0, 3.0]), 10.0], np.random.default_rng(0))
    assert out.tolist() == [11.0, 12.0, 13.0]


def test_let_bound_procedure_with_lane_split():
    prog = parse_program(
        "(fn [p] (let [g (fn [x n] (if (< n 3.0) (recur (* 2.0 x) (inc n)) x))]"
        " (if (< (safe-uc 0.0 1.0) p) (g 1.0 0.0) -1.0)))"
    )
    out = draw_samples(prog, 2000, [0.5], np.random.default_rng(1))
    assert set(out.tolist()) == {8.0, -1.0}
    assert abs((out == 8.0).mean() - 0.5) < 0.05


def test_geometric_truncation():
    e = corpus_entry("geometric")
    x = draw_samples(e.program, 20_000, [0.5], np.random.default_rng(2))
    assert set(np.unique(x).tolist()) <= {0.0, *map(float, range(1, 10))}
    assert (x == 0.0).any()


def test_scalar_and_batched_interpreters_agree_in_law():
    e = corpus_entry("std-normal")
    a = draw_samples(e.program, 20_000, [0.0], np.random.default_rng(4))
    rng = np.random.default_rng(5)
    b = np.array([run_program(e.program, [0.0], rng) for _ in range(5000)])
    assert abs(a.mean() - b.mean()) < 0.06
    assert abs(a.std() - b.std()) < 0.06


def test_beta_a1_at_alpha_one_is_uniform():
    e = corpus_entry("beta-a-1")
    x = draw_samples(e.program, 100_000, e.args([1.0]), np.random.default_rng(6))
    assert 0.49 <= x.mean() <= 0.51


def test_determinism():
    e = corpus_entry("poisson")
    a = draw_samples(e.program, 500, e.args([3.0]), np.random.default_rng(9))
    b = draw_samples(e.program, 500, e.args([3.0]), np.random.default_rng(9))
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("op", ["safe-div", "safe-log", "safe-sqrt"])
@settings(max_examples=300, deadline=None)
@given(a=finite, b=finite)
def test_safe_primitives_stay_finite(op, a, b):
    f = PRIM_FUNCS[op]
    out = f(a, b) if op == "safe-div" else f(a)
    assert math.isfinite(out)


@settings(max_examples=300, deadline=None)
@given(a=finite, b=finite, u=st.floats(0.0, 1.0, exclude_max=True))
def test_safe_uc_finite_and_inside(a, b, u):
    x = float(safe_uc(a, b, u))
    assert math.isfinite(x)
    assert min(a, b) <= x <= max(a, b)


def test_safe_primitive_edge_values():
    assert PRIM_FUNCS["safe-div"](1.0, 0.0) == 0.0
    assert PRIM_FUNCS["safe-div"](1e300, 1e-300) == 0.0
    assert safe_uc(-1e308, 1e308, 0.5) == 0.0
    assert PRIM_FUNCS["safe-log"](0.0) == 0.0
    assert PRIM_FUNCS["safe-log"](-2.0) == 0.0
    assert PRIM_FUNCS["safe-sqrt"](-4.0) == 0.0
    assert PRIM_FUNCS["safe-sqrt"](4.0) == 2.0


def test_overflow_is_propagated_not_raised():
    prog = parse_program("(fn [] (exp (exp (exp 10.0))))")
    assert draw_samples(prog, 2, [], np.random.default_rng(0)).tolist() == [math.inf, math.inf]


def test_generated_programs_never_fault():
    w = default_weights()
    rng = np.random.default_rng(21)
    for _ in range(300):
        prog, _ = generate_program((("p", REAL),), REAL, w, rng)
        sample_program(prog, 8, [0.5], rng, max_steps=20_000)


def test_safe_div_propagates_non_finite_inputs():
    assert PRIM_FUNCS["safe-div"](math.inf, 2.0) == math.inf
    assert math.isnan(PRIM_FUNCS["safe-div"](math.nan, 2.0))
