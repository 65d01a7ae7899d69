"""Acceptance checks shared by ``sampler-smith selftest`` and the test suite.

Each check runs at fixed seeds and returns a ``Criterion`` with the measured
numbers, so a failure reports how far off it was.
"""

from __future__ import annotations

import json
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .corpus import corpus_entry, family_holdout, holdout, load_corpus
from .evaluator import EvalFault, sample_program
from .expr import REAL, check_program, parse_program
from .families import MomentVector
from .grammar import constant_only_weights, default_weights, estimate_weights, generate_program, log_prior
from .scoring import (
    FamilyTarget,
    MomentTarget,
    ScoreConfig,
    chi_square_sf,
    g_test_p_value,
    moment_log_kernel,
    moment_target_for,
    penalty,
)
from .smc import (
    LgModel,
    PipelineConfig,
    TrainConfig,
    kalman_filter_smoother,
    mlp_init,
    nll_grad,
    run_pipeline,
    smc_run,
    weighted_nll,
)
from .synthesis import GpConfig, rejection_abc, run_gp, run_mh


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} [{self.number}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _checks(items: list[tuple[str, bool]]) -> tuple[bool, str]:
    return all(ok for _, ok in items), "; ".join(f"{msg} {'ok' if ok else 'FAILED'}" for msg, ok in items)


# ---------------------------------------------------------------------------


def corpus_fidelity(n: int = 200_000, seed: int = 20240501) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    items = []

    def draws(name, params):
        e = corpus_entry(name)
        return sample_program(e.program, n, e.args(params), rng).values

    m = draws("bernoulli", [0.3]).mean()
    items.append((f"bernoulli(0.3) mean {m:.4f} in 0.3+-0.01", abs(m - 0.3) <= 0.01))
    m = draws("geometric", [0.5]).mean()
    items.append((f"geometric(0.5) mean {m:.4f} in 2.0+-0.02", abs(m - 2.0) <= 0.02))
    x = draws("std-normal", [])
    ks = stats.kstest(x, "norm").statistic
    items.append((f"std-normal |mean| {abs(x.mean()):.4f} < 0.01", abs(x.mean()) < 0.01))
    items.append((f"|std-1| {abs(x.std() - 1):.4f} < 0.01", abs(x.std() - 1) < 0.01))
    items.append((f"KS distance {ks:.4f} < 0.01", ks < 0.01))
    m = draws("beta-a-1", [2.0]).mean()
    items.append((f"beta(2,1) mean {m:.4f} in 2/3+-0.01", abs(m - 2 / 3) <= 0.01))
    return _checks(items)


def statistics_oracle() -> tuple[bool, str]:
    x = np.array([1.0] * 60 + [0.0] * 40)
    p = g_test_p_value(x, "bernoulli", (0.5,))
    g = 2 * (60 * math.log(60 / 50) + 40 * math.log(40 / 50))
    oracle = math.erfc(math.sqrt(g / 2))  # chi-square(1) survival function
    grid = np.linspace(0.0, 50.0, 100)
    err = max(abs(chi_square_sf(v, 2) - math.exp(-v / 2)) for v in grid)
    return _checks(
        [
            (f"p-value {p:.6f} = 0.0448+-1e-4", abs(p - 0.0448) <= 1e-4),
            (f"erfc oracle {oracle:.6f} matches to {abs(p - oracle):.1e}", abs(p - oracle) <= 1e-4),
            (f"df=2 sf max error {err:.1e} <= 1e-10", err <= 1e-10),
        ]
    )


def grammar_soundness(count: int = 10_000, seed: int = 7) -> tuple[bool, str]:
    w = default_weights(max_depth=10)
    rng = np.random.default_rng(seed)
    typed = evaluated = replayed = 0
    worst = 0.0
    for _ in range(count):
        prog, lp = generate_program((), REAL, w, rng)
        try:
            check_program(prog)
            typed += 1
        except Exception:
            pass
        try:
            sample_program(prog, 4, [], rng, max_steps=ScoreConfig().max_steps)
            evaluated += 1
        except EvalFault:
            pass
        d = abs(log_prior(prog, w) - lp)
        worst = max(worst, d)
        replayed += d <= 1e-12
    return _checks(
        [
            (f"type-check {typed}/{count}", typed == count),
            (f"evaluate {evaluated}/{count}", evaluated == count),
            (f"replay {replayed}/{count} (max diff {worst:.1e})", replayed == count),
        ]
    )


def corpus_prior_support() -> tuple[bool, str]:
    corpus = load_corpus()
    items = []
    for e in corpus:
        w = estimate_weights([c.program for c in holdout(corpus, family_holdout(e.family))])
        lp = log_prior(e.program, w)
        items.append((f"{e.name} {lp:.1f}", math.isfinite(lp)))
    return _checks(items)


def _two_point_posterior(target: MomentTarget) -> float:
    """Posterior mass of the constant-1 program under a uniform prior on {0, 1}."""
    l1 = moment_log_kernel(MomentVector(1.0, 0.0, 0.0, 0.0), target)
    l0 = moment_log_kernel(MomentVector(0.0, 0.0, 0.0, 0.0), target)
    return 1.0 / (1.0 + math.exp(l0 - l1))


def _visits_to_one(trace) -> float:
    return float(np.mean([r.program == "(fn [] 1.0)" for r in trace.records]))


def mh_correctness(steps: int = 100_000, seed: int = 11) -> tuple[bool, str]:
    w = constant_only_weights({0.0: 0.5, 1.0: 0.5})
    cfg = ScoreConfig()
    items = []
    for sd in (0.1, 1.0):
        target = MomentTarget(MomentVector(1.0, 0.0, 0.0, 0.0), sd)
        exact = _two_point_posterior(target)
        got = _visits_to_one(run_mh(None, target, w, cfg, steps, np.random.default_rng(seed)))
        tv = abs(got - exact)
        items.append((f"MH sigma={sd}: P(1.0) {got:.4f} vs exact {exact:.4f}, TV {tv:.4f} <= 0.02", tv <= 0.02))
    target = MomentTarget(MomentVector(1.0, 0.0, 0.0, 0.0), 0.1)
    res = rejection_abc(target, w, 0.05, 20_000, cfg, np.random.default_rng(seed))
    freq = float(np.mean([p.body.value == 1.0 for p in res.accepted])) if res.accepted else float("nan")
    # indicator-truncated posterior: only the constant 1 lies within 0.05 of the target moments
    items.append((f"rejection ABC eps=0.05: P(1.0) {freq:.4f} vs exact 1.0000", abs(freq - 1.0) <= 0.02))
    res = rejection_abc(target, w, math.inf, 20_000, cfg, np.random.default_rng(seed))
    freq = float(np.mean([p.body.value == 1.0 for p in res.accepted]))
    items.append((f"rejection ABC eps=inf: P(1.0) {freq:.4f} vs prior 0.5000", abs(freq - 0.5) <= 0.02))
    return _checks(items)


BERNOULLI_TRAIN = (0.1, 0.3, 0.5, 0.7, 0.9)


def bernoulli_synthesis(seeds: int = 10, iterations: int = 20_000, budget_s: float = 1800.0) -> tuple[bool, str]:
    corpus = load_corpus()
    w = estimate_weights([e.program for e in holdout(corpus, ["bernoulli"])])
    target = FamilyTarget("bernoulli", tuple((p,) for p in BERNOULLI_TRAIN))
    cfg = ScoreConfig(n_samples=100)
    start = time.perf_counter()
    scores = []
    for s in range(seeds):
        trace = run_mh(None, target, w, cfg, iterations, np.random.default_rng(1000 + s))
        prog = parse_program(trace.best_record().program)
        rng = np.random.default_rng(5000 + s)
        ps = [g_test_p_value(sample_program(prog, 100, [0.2], rng).values, "bernoulli", (0.2,)) for _ in range(20)]
        scores.append(float(np.mean(ps)))
    elapsed = time.perf_counter() - start
    best = max(scores)
    return _checks(
        [
            (f"best held-out mean p-value {best:.4f} > 0.5 (per seed: {', '.join(f'{v:.2f}' for v in scores)})", best > 0.5),
            (f"runtime {elapsed:.0f}s <= {budget_s:.0f}s", elapsed <= budget_s),
        ]
    )


def _improvement(first: float, best: float) -> float:
    return (first - best) / first


def gp_baseline(seeds: int = 5, population: int = 100, generations: int = 50) -> tuple[bool, str]:
    w = default_weights()
    target = moment_target_for("normal", (0.0, 1.0))
    cfg = ScoreConfig()
    gp_imp, mh_imp = [], []
    for s in range(seeds):
        res = run_gp(target, w, GpConfig(population=population, generations=generations), cfg, np.random.default_rng(300 + s))
        pens = res.best_so_far_penalty()
        gp_imp.append(_improvement(pens[0], pens[-1]))
        # MH gets the same number of program evaluations, starting from a prior draw
        tr = run_mh(None, target, w, cfg, max(1, res.evaluations - 1), np.random.default_rng(300 + s))
        mp = [penalty(r.log_score, target) for r in [tr.init] + tr.records]
        mh_imp.append(_improvement(mp[0], min(mp)))
    g, m = float(np.median(gp_imp)), float(np.median(mh_imp))
    ratio = m / g if g > 0 else math.inf
    return _checks(
        [
            (f"GP median improvement {g:.3f} >= 0.5 (per seed: {', '.join(f'{v:.2f}' for v in gp_imp)})", g >= 0.5),
            (f"MH median improvement {m:.3f}, ratio to GP {ratio:.2f} within [0.5, 2]", 0.5 <= ratio <= 2.0),
        ]
    )


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def gradient_check(points: int = 100, seed: int = 3, h: float = 1e-5) -> float:
    """Worst relative error between the analytic gradient and central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        p = mlp_init(rng)
        p = p.with_flat(p.flat() + 0.3 * rng.standard_normal(p.flat().size))
        X = rng.normal(0, 1, (8, 20))
        y = rng.normal(0, 1, 8)
        wts = rng.random(8)
        _, g = nll_grad(p, X, y, wts)
        v = p.flat()
        num = np.empty_like(v)
        for i in range(v.size):
            e = np.zeros_like(v)
            e[i] = h
            num[i] = (weighted_nll(p.with_flat(v + e), X, y, wts) - weighted_nll(p.with_flat(v - e), X, y, wts)) / (2 * h)
        worst = max(worst, _relative_error(g.flat(), num))
    return worst


def smc_vs_kalman(seed: int = 5) -> tuple[bool, str]:
    model = LgModel()
    rng = np.random.default_rng(seed)
    _, y = model.simulate(50, rng)
    res = smc_run(model, y, 10_000, "prior", rng)
    rmse = float(np.sqrt(np.mean((res.filtering_means() - kalman_filter_smoother(model, y).filt_mean) ** 2)))
    g = gradient_check()
    return _checks([(f"filtering-mean RMSE {rmse:.4f} < 0.05", rmse < 0.05), (f"gradient rel. error {g:.1e} < 1e-4", g < 1e-4)])


def data_driven_benefit(seed: int = 2024, repeats: int = 5, jobs: int = 1) -> tuple[bool, str]:
    cfg = PipelineConfig(train=("step",), test=("step",), p_train=100, p_test=10, repeats=repeats, p_mix=0.7, train_cfg=TrainConfig())
    res = run_pipeline(cfg, seed, jobs)
    prior = res.repeat_means("prior")
    dd = res.repeat_means("data-driven")
    wins = sum(dd[r] < prior[r] for r in prior)
    detail = ", ".join(f"{dd[r]:.3f}<{prior[r]:.3f}" for r in prior)
    return _checks([(f"data-driven below prior in {wins}/{repeats} repeats ({detail}); need >= 4", wins >= 4)])


# ---------------------------------------------------------------------------
# determinism of every subcommand


def _cli_runs(tmp: Path) -> list[tuple[str, list[str], list[str]]]:
    """(name, argv, produced files relative to the run directory)."""
    normal = '{"kind":"moment","family":"normal","params":[0,1]}'
    bern = '{"kind":"family","family":"bernoulli","params":[[0.3],[0.7]]}'
    return [
        ("weights estimate", ["weights", "estimate", "--holdout", "bernoulli", "--out", "{d}/w.json"], ["w.json"]),
        ("generate", ["generate", "--count", "5", "--draws", "50", "--seed", "1", "--out", "{d}/g.csv", "--hist", "{d}/h.csv"], ["g.csv", "h.csv"]),
        ("score", ["score", "--program", "(fn [p] :int (safe-uc 0.0 (* 2.0 p)))", "--target", bern, "--repeats", "3", "--seed", "1", "--out", "{d}/s.csv"], ["s.csv"]),
        ("synth mh", ["synth", "mh", "--target", normal, "--iterations", "60", "--chains", "4", "--seed", "1", "--out-dir", "{d}/mh", "--jobs", "{j}"], ["mh/trace.csv", "mh/best.json"]),
        ("synth gp", ["synth", "gp", "--target", normal, "--population", "10", "--generations", "3", "--runs", "4", "--seed", "1", "--out-dir", "{d}/gp", "--jobs", "{j}"], ["gp/generations.csv", "gp/best.json"]),
        ("abc reject", ["abc", "reject", "--toy", "0.0,1.0", "--target", '{"kind":"moment","moments":[1,0,0,0]}', "--epsilon", "0.05", "--max-draws", "100", "--seed", "1", "--out", "{d}/abc.csv"], ["abc.csv"]),
        ("lg episodes", ["lg", "episodes", "--group", "step", "--split", "test", "--seed", "1", "--out-dir", "{d}/ep"], ["ep/index.csv", "ep/test-step-0.csv"]),
        ("lg smc", ["lg", "smc", "--episode", "{d}/ep/test-step-0.csv", "--particles", "50", "--seed", "1", "--out", "{d}/smc.csv"], ["smc.csv"]),
        ("lg train", ["lg", "train", "--episodes", "{d}/ep/test-step-0.csv", "--epochs", "3", "--seed", "1", "--out", "{d}/net.json", "--losses", "{d}/loss.csv"], ["net.json", "loss.csv"]),
        ("lg pipeline", ["lg", "pipeline", "--train", "step", "--test", "step", "--repeats", "4", "--epochs", "2", "--seed", "1", "--out-dir", "{d}/pl", "--jobs", "{j}"], ["pl/metrics.csv", "pl/summary.csv"]),
    ]


def _body(path: Path) -> list[str]:
    """File content without header lines (for cross-``--jobs`` comparison)."""
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        d = json.loads(text)
        d.pop("meta", None)
        return [json.dumps(d, sort_keys=True)]
    return [ln for ln in text.splitlines() if not ln.startswith(("#", ";"))]


def determinism() -> tuple[bool, str]:
    from .cli import run_cli

    items = []
    with tempfile.TemporaryDirectory() as tmp:
        for name, argv, files in _cli_runs(Path(tmp)):
            runs = {}
            # the same command twice in one directory, then with four workers elsewhere
            for tag, sub, jobs in (("a", "x", 1), ("b", "x", 1), ("c", "y", 4)):
                d = Path(tmp) / sub
                d.mkdir(exist_ok=True)
                code = run_cli([a.replace("{d}", str(d)).replace("{j}", str(jobs)) for a in argv])
                paths = [d / f for f in files]
                if code != 0 or not all(p.exists() for p in paths):
                    runs[tag] = None
                    continue
                runs[tag] = [p.read_bytes() for p in paths] if tag != "c" else [_body(p) for p in paths]
                if tag == "a":
                    runs["a_body"] = [_body(p) for p in paths]
            items.append((f"{name} byte-identical", runs["a"] is not None and runs["a"] == runs["b"]))
            if "{j}" in argv:
                items.append((f"{name} --jobs 4 identical values", runs["c"] is not None and runs.get("a_body") == runs["c"]))
    return _checks(items)


CRITERIA = {
    1: ("corpus fidelity", corpus_fidelity),
    2: ("statistics oracle", statistics_oracle),
    3: ("grammar soundness", grammar_soundness),
    4: ("corpus programs in prior support", corpus_prior_support),
    5: ("MH and rejection ABC on the toy grammar", mh_correctness),
    6: ("Bernoulli synthesis", bernoulli_synthesis),
    7: ("GP baseline and MH comparability", gp_baseline),
    8: ("SMC vs Kalman, gradient check", smc_vs_kalman),
    9: ("data-driven proposal benefit", data_driven_benefit),
    10: ("determinism", determinism),
}


def run_criterion(number: int) -> Criterion:
    name, fn = CRITERIA[number]
    t0 = time.perf_counter()
    passed, detail = fn()
    return Criterion(number, name, passed, detail, time.perf_counter() - t0)


def run_all(only=None, stream=None) -> list[Criterion]:
    out = []
    for k in sorted(CRITERIA):
        if only and k not in only:
            continue
        c = run_criterion(k)
        out.append(c)
        if stream is not None:
            print(c.line(), file=stream, flush=True)
    return out
