"""Search over program text.

* ``run_mh``: single-chain pseudo-marginal Metropolis-Hastings.  A proposal
  picks a node uniformly and regrows it from the grammar in that node's
  context; the score of the current state is the estimate adopted at its last
  acceptance.
* ``run_gp``: strongly typed genetic programming with the grammar as the
  generator and (log prior + one-shot score) as fitness.
* ``rejection_abc``: likelihood-free rejection sampling for tiny grammars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .expr import Lambda, check_program, compatible, node_count, print_program, replace_at, subtree
from .grammar import RuleWeights, gen_depth, generate, generate_program, log_prior, typed_sites
from .scoring import (
    EmpiricalTarget,
    MomentTarget,
    ScoreConfig,
    TargetSpec,
    penalty,
    sample_moments,
    score_program,
    target_signature,
)
from .evaluator import sample_program


class SearchConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MhState:
    program: Lambda
    log_prior: float
    log_score: float
    iteration: int = 0
    n_sites: int = 0
    accepted: bool = False
    site: int = -1

    @property
    def log_target(self) -> float:
        return self.log_prior + self.log_score


@dataclass
class TraceRecord:
    iteration: int
    program: str
    log_prior: float
    log_score: float
    accepted: bool
    site: int


@dataclass
class ChainTrace:
    init: TraceRecord
    records: list[TraceRecord] = field(default_factory=list)
    best: int = -1  # index into records; -1 means the initial state

    def best_record(self) -> TraceRecord:
        return self.init if self.best < 0 else self.records[self.best]

    def best_so_far(self) -> list[float]:
        """Running maximum of log prior + log score, one entry per record."""
        out, cur = [], self.init.log_prior + self.init.log_score
        for r in self.records:
            cur = max(cur, r.log_prior + r.log_score)
            out.append(cur)
        return out


def new_state(program: Lambda, w: RuleWeights, log_score: float) -> MhState:
    return MhState(program, log_prior(program, w), log_score, 0, node_count(program.body))


def propose(program: Lambda, w: RuleWeights, rng: np.random.Generator):
    """Regrow a uniformly chosen node.  Returns (proposal, site index, sites before, sites after)."""
    sites = typed_sites(program, w.max_depth)
    k = int(rng.integers(len(sites)))
    site = sites[k]
    sub, _ = generate(site.type, site.ctx, w, rng)
    prop = replace_at(program, site.path, sub)
    return prop, k, len(sites), node_count(prop.body)


def mh_log_ratio(log_score_new: float, log_score_old: float, n_old: int, n_new: int) -> float:
    """Log acceptance ratio once the prior and regrowth factors cancel."""
    return log_score_new - log_score_old + math.log(n_old) - math.log(n_new)


def mh_step(state: MhState, target: TargetSpec, w: RuleWeights, cfg: ScoreConfig, rng: np.random.Generator) -> MhState:
    prop, k, n_old, n_new = propose(state.program, w, rng)
    score = score_program(prop, target, cfg, rng)
    u = rng.random()
    it = state.iteration + 1
    if score == -math.inf:
        return replace(state, iteration=it, accepted=False, site=k)
    if math.log(u) < mh_log_ratio(score, state.log_score, n_old, n_new):
        return MhState(prop, log_prior(prop, w), score, it, n_new, True, k)
    return replace(state, iteration=it, accepted=False, site=k)


def initial_state(target: TargetSpec, w: RuleWeights, cfg: ScoreConfig, rng, max_tries: int = 1000) -> MhState:
    params, ret = target_signature(target)
    for _ in range(max_tries):
        prog, lp = generate_program(params, ret, w, rng)
        s = score_program(prog, target, cfg, rng)
        if s > -math.inf:
            return MhState(prog, lp, s, 0, node_count(prog.body))
    raise SearchConfigError(f"no program with a finite score in {max_tries} draws from the prior")


def _record(s: MhState) -> TraceRecord:
    return TraceRecord(s.iteration, print_program(s.program), s.log_prior, s.log_score, s.accepted, s.site)


def run_mh(
    init: Lambda | None,
    target: TargetSpec,
    w: RuleWeights,
    cfg: ScoreConfig,
    iterations: int,
    rng: np.random.Generator,
) -> ChainTrace:
    if iterations < 1:
        raise SearchConfigError("iterations must be at least 1")
    if init is None:
        state = initial_state(target, w, cfg, rng)
    else:
        state = new_state(init, w, score_program(init, target, cfg, rng))
        if state.log_score == -math.inf or state.log_prior == -math.inf:
            raise SearchConfigError("initial program has zero target density")
    trace = ChainTrace(_record(state))
    best = state.log_target
    for _ in range(iterations):
        state = mh_step(state, target, w, cfg, rng)
        trace.records.append(_record(state))
        if state.log_target > best:
            best = state.log_target
            trace.best = len(trace.records) - 1
    return trace


# ---------------------------------------------------------------------------
# genetic programming


@dataclass(frozen=True)
class GpConfig:
    population: int = 100
    generations: int = 50
    tournament: int = 7
    p_crossover: float = 0.5
    p_mutation: float = 0.3
    elitism: int = 1
    max_depth: int | None = None  # defaults to the grammar's depth cap
    crossover_tries: int = 10

    def __post_init__(self):
        if self.population < 2:
            raise SearchConfigError("population must be at least 2")
        for p in (self.p_crossover, self.p_mutation):
            if not 0.0 <= p <= 1.0:
                raise SearchConfigError("probabilities must lie in [0, 1]")
        if not 0 <= self.elitism < self.population:
            raise SearchConfigError("elitism must be smaller than the population")
        if self.tournament < 1 or self.generations < 0:
            raise SearchConfigError("bad tournament size or generation count")


@dataclass
class Individual:
    program: Lambda
    log_prior: float
    log_score: float

    @property
    def fitness(self) -> float:
        return self.log_prior + self.log_score


@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_penalty: float
    invalid: int
    best_program: str


@dataclass
class GpResult:
    stats: list[GenerationStats]
    best: Individual
    evaluations: int  # number of programs scored

    def best_so_far_penalty(self) -> list[float]:
        return list(np.minimum.accumulate([s.best_penalty for s in self.stats]))


def _valid(prog: Lambda, w: RuleWeights, max_depth: int) -> bool:
    try:
        check_program(prog)
    except Exception:
        return False
    return gen_depth(prog) <= max_depth and log_prior(prog, w) > -math.inf


def crossover(a: Lambda, b: Lambda, w: RuleWeights, rng, max_depth: int | None = None, tries: int = 10):
    """Swap type-matched subtrees; returns the parents unchanged if no valid swap is found."""
    max_depth = w.max_depth if max_depth is None else max_depth
    sa, sb = typed_sites(a, w.max_depth), typed_sites(b, w.max_depth)
    for _ in range(tries):
        x = sa[int(rng.integers(len(sa)))]
        matches = [s for s in sb if compatible(s.type, x.type)]
        if not matches:
            continue
        y = matches[int(rng.integers(len(matches)))]
        ca = replace_at(a, x.path, subtree(b, y.path))
        cb = replace_at(b, y.path, subtree(a, x.path))
        if _valid(ca, w, max_depth) and _valid(cb, w, max_depth):
            return ca, cb
    return a, b


def mutate(prog: Lambda, w: RuleWeights, rng) -> Lambda:
    return propose(prog, w, rng)[0]


def _tournament(pop: list[Individual], k: int, rng) -> Individual:
    idx = sorted(int(i) for i in rng.integers(len(pop), size=k))
    best = idx[0]
    for i in idx[1:]:
        if pop[i].fitness > pop[best].fitness:
            best = i
    return pop[best]


def _stats(g: int, pop: list[Individual], target: TargetSpec) -> GenerationStats:
    fit = np.array([p.fitness for p in pop])
    ok = np.isfinite(fit)
    best = max(range(len(pop)), key=lambda i: (pop[i].fitness, -i))
    pens = [penalty(p.log_score, target) for p in pop]
    return GenerationStats(
        g,
        float(fit[best]),
        float(fit[ok].mean()) if ok.any() else -math.inf,
        float(min(pens)),
        int((~ok).sum()),
        print_program(pop[best].program),
    )


def run_gp(target: TargetSpec, w: RuleWeights, gp: GpConfig, cfg: ScoreConfig, rng: np.random.Generator, init=None) -> GpResult:
    """Evolve a population; fitness is evaluated once per new individual."""
    max_depth = w.max_depth if gp.max_depth is None else gp.max_depth
    params, ret = target_signature(target)

    count = 0

    def evaluate(prog: Lambda) -> Individual:
        nonlocal count
        count += 1
        return Individual(prog, log_prior(prog, w), score_program(prog, target, cfg, rng))

    if init is not None:
        pop = [evaluate(p) for p in init]
    else:
        pop = [evaluate(generate_program(params, ret, w, rng)[0]) for _ in range(gp.population)]
    stats = [_stats(0, pop, target)]
    for g in range(1, gp.generations + 1):
        order = sorted(range(len(pop)), key=lambda i: (-pop[i].fitness, i))
        elites = [pop[i] for i in order[: gp.elitism]]
        off = [_tournament(pop, gp.tournament, rng) for _ in range(len(pop) - gp.elitism)]
        changed = [False] * len(off)
        progs = [o.program for o in off]
        for i in range(0, len(off) - 1, 2):
            if rng.random() < gp.p_crossover:
                a, b = crossover(progs[i], progs[i + 1], w, rng, max_depth, gp.crossover_tries)
                if a is not progs[i]:
                    progs[i], progs[i + 1] = a, b
                    changed[i] = changed[i + 1] = True
        for i in range(len(off)):
            if rng.random() < gp.p_mutation:
                progs[i] = mutate(progs[i], w, rng)
                changed[i] = True
        off = [evaluate(p) if c else o for p, c, o in zip(progs, changed, off)]
        pop = elites + off
        stats.append(_stats(g, pop, target))
    best = max(range(len(pop)), key=lambda i: (pop[i].fitness, -i))
    return GpResult(stats, pop[best], count)


# ---------------------------------------------------------------------------
# rejection ABC


@dataclass
class AbcResult:
    accepted: list[Lambda]
    draws: int


def rejection_abc(
    target: TargetSpec,
    w: RuleWeights,
    epsilon: float,
    max_draws: int,
    cfg: ScoreConfig,
    rng: np.random.Generator,
) -> AbcResult:
    """Keep prior draws whose sample moments lie within ``epsilon`` (Euclidean) of the target's."""
    if isinstance(target, (MomentTarget, EmpiricalTarget)):
        goal = np.array(target.moments)
    else:
        raise SearchConfigError("rejection ABC compares moment vectors; use a moment or empirical target")
    params, ret = target_signature(target)
    out = []
    for _ in range(max_draws):
        prog, _ = generate_program(params, ret, w, rng)
        s = sample_program(prog, cfg.n_samples, [], rng, cfg.cap, cfg.max_steps)
        if math.isinf(epsilon) and epsilon > 0:
            out.append(prog)
            continue
        if not s.finite.all() or s.out_of_steps:
            continue
        d = float(np.linalg.norm(np.array(sample_moments(s.values)) - goal))
        if d <= epsilon:
            out.append(prog)
    return AbcResult(out, max_draws)
