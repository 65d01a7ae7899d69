import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampler_smith.corpus import load_corpus
from sampler_smith.evaluator import sample_program
from sampler_smith.expr import (
    BOOL,
    REAL,
    Const,
    Lambda,
    check_program,
    node_count,
    parse_program,
    print_program,
    replace_at,
    subtree,
)
from sampler_smith.grammar import (
    CONST,
    CONST_OPTIONS,
    PRIM,
    RULES,
    RuleWeights,
    constant_only_weights,
    default_weights,
    estimate_weights,
    gen_depth,
    generate,
    generate_program,
    log_prior,
    log_prior_expr,
    program_context,
    typed_sites,
    uniform_weights,
)

BERNOULLI = "(fn [p] (if (< (safe-uc 0.0 1.0) p) 1.0 0.0))"


@pytest.fixture(scope="module")
def corpus_weights():
    return default_weights()


def test_depth_zero_empty_context_gives_constants():
    w = uniform_weights(max_depth=0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        prog, lp = generate_program((), REAL, w, rng)
        assert isinstance(prog.body, Const)
        assert math.isfinite(lp)


def test_depth_zero_with_variable_gives_leaf():
    w = uniform_weights(max_depth=0)
    rng = np.random.default_rng(1)
    kinds = {type(generate_program((("p", REAL),), REAL, w, rng)[0].body).__name__ for _ in range(100)}
    assert kinds == {"Const", "Var"}


def test_constant_log_prob_is_product_of_choices():
    # p2 = 0.5 among the available rules, constant 0.0 has weight 0.1
    rules = np.array([0.0, 0.5, 0.2, 0.1, 0.1, 0.1, 0.0])
    consts = np.array([0.1, 0.3, 0.2, 0.2, 0.1, 0.05, 0.05])
    base = uniform_weights()
    w = RuleWeights(
        rules={REAL: rules, BOOL: base.rules[BOOL]},
        procs=base.procs,
        real_consts=consts,
        bool_consts=base.bool_consts,
        arity=base.arity,
        any_type=base.any_type,
    )
    ctx = program_context((), REAL, 10)
    assert log_prior_expr(Const(0.0, REAL), REAL, ctx, w) == pytest.approx(math.log(0.05), abs=1e-12)
    rng = np.random.default_rng(2)
    for _ in range(2000):
        e, lp = generate(REAL, ctx, w, rng)
        if e == Const(0.0, REAL):
            assert lp == pytest.approx(math.log(0.05), abs=1e-12)
            break
    else:
        pytest.fail("constant 0.0 never generated")


def test_seeded_generation_is_deterministic(corpus_weights):
    a = [generate_program((("p", REAL),), REAL, corpus_weights, np.random.default_rng(5)) for _ in range(3)]
    assert len({(print_program(p), lp) for p, lp in a}) == 1


def test_replay_matches_generation(corpus_weights):
    rng = np.random.default_rng(11)
    for _ in range(2000):
        prog, lp = generate_program((("p", REAL),), REAL, corpus_weights, rng)
        assert abs(log_prior(prog, corpus_weights) - lp) < 1e-12


def test_generated_programs_type_check_and_respect_depth(corpus_weights):
    rng = np.random.default_rng(12)
    for _ in range(1000):
        prog, _ = generate_program((), REAL, corpus_weights, rng)
        check_program(prog)
        assert gen_depth(prog) <= corpus_weights.max_depth


def test_bool_and_int_targets():
    w = uniform_weights(max_depth=4)
    rng = np.random.default_rng(3)
    for _ in range(200):
        prog, lp = generate_program((("p", REAL),), BOOL, w, rng)
        check_program(prog)
        assert abs(log_prior(prog, w) - lp) < 1e-12


def test_program_deeper_than_cap_has_zero_prior():
    w = uniform_weights(max_depth=2)
    deep = parse_program("(fn [] (inc (inc (inc 0.0))))")
    assert gen_depth(deep) == 3
    assert log_prior(deep, w) == -math.inf
    assert math.isfinite(log_prior(parse_program("(fn [] (inc (inc 0.0)))"), w))


def test_zero_weight_rule_gives_zero_prior():
    w = constant_only_weights({0.0: 0.5, 1.0: 0.5}, max_depth=3)
    assert log_prior(parse_program("(fn [] (inc 0.0))"), w) == -math.inf
    assert log_prior(parse_program("(fn [] 2.0)"), w) == -math.inf
    assert log_prior(parse_program("(fn [] 1.0)"), w) == pytest.approx(math.log(0.5))


def test_continuous_constant_density():
    w = uniform_weights()
    prog = Lambda((), REAL, Const(0.123, REAL))
    ctx_rules = 1 / 6  # var is unavailable without variables
    dens = (1 / 7) * (math.exp(-0.5 * 0.123**2) / math.sqrt(2 * math.pi) + 1 / 20)
    assert log_prior(prog, w) == pytest.approx(math.log(ctx_rules * dens), abs=1e-12)


def test_empty_corpus_gives_uniform_weights():
    w = estimate_weights([], alpha=1.0)
    for v in w.categoricals().values():
        assert np.allclose(v, 1.0 / len(v), atol=1e-15)


def test_single_constant_corpus():
    w = estimate_weights([parse_program("(fn [] 0.0)")], alpha=1.0)
    assert w.rules[REAL][CONST] == pytest.approx(2 / 8, abs=1e-15)
    assert w.rules[REAL][0] == pytest.approx(1 / 8, abs=1e-15)
    assert w.real_consts[0] == pytest.approx(2 / 8, abs=1e-15)


def test_prim_application_is_modal_real_rule(corpus_weights):
    assert int(np.argmax(corpus_weights.rules[REAL])) == PRIM
    assert RULES[PRIM] == "prim"


def test_alpha_limits():
    progs = [e.program for e in load_corpus()]
    flat = estimate_weights(progs, alpha=1e9)
    assert np.allclose(flat.rules[REAL], 1 / 7, atol=1e-6)
    many = estimate_weights(progs * 2000, alpha=1.0)
    few = estimate_weights(progs * 4000, alpha=1.0)
    assert np.allclose(many.rules[REAL], few.rules[REAL], atol=1e-4)


def test_corpus_programs_have_finite_prior_with_own_family_held_out():
    from sampler_smith.corpus import family_holdout, holdout

    corpus = load_corpus()
    for e in corpus:
        w = estimate_weights([c.program for c in holdout(corpus, family_holdout(e.family))])
        assert math.isfinite(log_prior(e.program, w)), e.name


def test_weights_json_round_trip(corpus_weights):
    back = RuleWeights.from_json(corpus_weights.to_json())
    for k, v in corpus_weights.categoricals().items():
        assert np.array_equal(v, back.categoricals()[k])
    assert back.max_depth == corpus_weights.max_depth


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["rules"]["real"].update(const=0.9),
        lambda d: d["rules"]["real"].update(const=-0.1),
        lambda d: d["rules"]["real"].update(const=0.0, prim=0.0, **{"if": 0.0}),
        lambda d: d.update(max_depth=-1),
    ],
)
def test_invalid_weights_rejected(mutate):
    d = uniform_weights().to_dict()
    mutate(d)
    with pytest.raises(ValueError):
        RuleWeights.from_dict(d)


def test_constant_only_weights_rejects_unknown_values():
    with pytest.raises(ValueError):
        constant_only_weights({0.5: 1.0})
    assert CONST_OPTIONS[1] == 1.0


def test_sites_of_constant_program():
    assert len(typed_sites(parse_program("(fn [] 0.0)"))) == 1


def test_bernoulli_site_count_matches_node_count():
    prog = parse_program(BERNOULLI)
    count = 0
    stack = [prog.body]
    while stack:
        e = stack.pop()
        count += 1
        for name in ("cond", "then", "else_", "bound", "body", "fn_body"):
            if hasattr(e, name):
                stack.append(getattr(e, name))
        stack.extend(getattr(e, "args", ()))
    sites = typed_sites(prog)
    assert len(sites) == count == node_count(prog.body)
    assert [s.type for s in sites[:3]] == [REAL, BOOL, REAL]


@pytest.mark.parametrize("entry", load_corpus(), ids=lambda e: e.name)
def test_site_replacement_with_same_type_stays_well_typed(entry):
    rng = np.random.default_rng(len(entry.name))
    w = default_weights()
    for site in typed_sites(entry.program):
        assert subtree(entry.program, site.path).type.value in ("real", "bool", "int")
        sub, _ = generate(site.type, site.ctx, w, rng)
        check_program(replace_at(entry.program, site.path, sub))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), depth=st.integers(0, 6))
def test_generation_properties(seed, depth):
    w = uniform_weights(max_depth=depth)
    rng = np.random.default_rng(seed)
    prog, lp = generate_program((("a", REAL), ("b", BOOL)), REAL, w, rng)
    check_program(prog)
    assert gen_depth(prog) <= depth
    assert abs(log_prior(prog, w) - lp) < 1e-12
    out = sample_program(prog, 4, [0.5, True], rng, max_steps=20_000)
    assert out.values.shape == (4,)
