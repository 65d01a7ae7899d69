"""Command-line entry point: ``sampler-smith <command> ...``.

Exit status is 0 on success, 2 on a configuration error and 1 on a runtime
failure; errors go to stderr prefixed with ``ERR:<status>:``.  Every output
file starts with a header recording the version, the full configuration and
the seed (``#`` lines for CSV, ``;`` lines for programs, a ``meta`` key for
JSON).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import CsvColumnError, holdout, load_corpus, load_csv_column, load_programs
from .evaluator import sample_program
from .expr import REAL, INT, ParseError, TypeCheckError, check_program, parse_program, print_program
from .families import DomainError
from .grammar import RuleWeights, constant_only_weights, estimate_weights, generate_program, log_prior
from .scoring import (
    EmpiricalTarget,
    ScoreConfig,
    penalty,
    score_program,
    target_from_dict,
    target_signature,
    target_to_dict,
)
from .smc import (
    DataDriven,
    Episode,
    LgModel,
    N_FEATURES,
    MlpParams,
    PipelineConfig,
    TrainConfig,
    TrainingSet,
    episode_set,
    evaluate_error,
    extract_training_pairs,
    kalman_filter_smoother,
    mlp_init,
    mlp_train,
    run_pipeline,
    smc_run,
)
from .synthesis import GpConfig, SearchConfigError, rejection_abc, run_gp, run_mh

SEED_ENV = "SAMPLER_SMITH_SEED"


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# output helpers


def _config_view(args) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def header_lines(args) -> list[str]:
    return [
        f"sampler-smith {__version__}",
        "config: " + json.dumps(_config_view(args), sort_keys=True, default=str),
        f"seed: {getattr(args, 'seed', None)}",
    ]


def _open_out(path):
    if path is None or path == "-":
        return _Stdout()
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return open(p, "w", newline="", encoding="utf-8")


class _Stdout(io.StringIO):
    def close(self):
        sys.stdout.write(self.getvalue())
        super().close()


def write_csv(path, args, columns, rows) -> None:
    fh = _open_out(path)
    try:
        for line in header_lines(args):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([int(x) if isinstance(x, (bool, np.bool_)) else x for x in r])
    finally:
        fh.close()


def write_json(path, args, payload: dict) -> None:
    fh = _open_out(path)
    try:
        meta = {"version": __version__, "config": _config_view(args), "seed": getattr(args, "seed", None)}
        fh.write(json.dumps({"meta": meta, **payload}, indent=2, default=str) + "\n")
    finally:
        fh.close()


def write_program(path, args, text: str) -> None:
    fh = _open_out(path)
    try:
        for line in header_lines(args):
            fh.write(f"; {line}\n")
        fh.write(text + "\n")
    finally:
        fh.close()


def _out_dir(args) -> Path:
    if not args.out_dir:
        raise ConfigError("--out-dir is required")
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# input helpers


def _seed(args) -> int:
    s = args.seed if args.seed is not None else os.environ.get(SEED_ENV)
    if s is None:
        raise ConfigError(f"a seed is required (--seed or {SEED_ENV})")
    try:
        s = int(s)
    except ValueError:
        raise ConfigError(f"seed must be an integer, got {s!r}") from None
    if s < 0:
        raise ConfigError("seed must be nonnegative")
    args.seed = s
    return s


def _read_json(spec: str) -> dict:
    """Inline JSON (starting with ``{``) or a path to a JSON file."""
    try:
        if spec.lstrip().startswith("{"):
            return json.loads(spec)
        return json.loads(Path(spec).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read JSON from {spec!r}: {exc}") from None


def _load_target(spec: str):
    d = _read_json(spec)
    d.pop("meta", None)
    try:
        if "csv" in d:
            col = load_csv_column(d["csv"], d["column"])
            return EmpiricalTarget(tuple(col.values), d.get("noise", 0.001))
        return target_from_dict(d)
    except (KeyError, ValueError, TypeError, OSError, CsvColumnError) as exc:
        raise ConfigError(f"bad target: {exc}") from None


def _load_weights(args) -> RuleWeights:
    if getattr(args, "weights", None):
        d = _read_json(args.weights)
        d.pop("meta", None)
        try:
            return RuleWeights.from_dict(d)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad weights file: {exc}") from None
    corpus = _corpus(args)
    try:
        return estimate_weights([e.program for e in holdout(corpus, args.holdout or [])], args.alpha, args.max_depth)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None


def _corpus(args):
    if getattr(args, "corpus_dir", None):
        from .corpus import CorpusEntry

        progs = load_programs(args.corpus_dir)
        if not progs:
            raise ConfigError(f"no .psmp files in {args.corpus_dir}")
        names = sorted(p.stem for p in Path(args.corpus_dir).glob("*.psmp"))
        return [CorpusEntry(n, p, "unknown", (), print_program(p)) for n, p in zip(names, progs)]
    return load_corpus()


def _load_program(spec: str):
    text = Path(spec).read_text(encoding="utf-8") if Path(spec).exists() else spec
    try:
        prog = parse_program(text)
        check_program(prog)
    except (ParseError, TypeCheckError) as exc:
        raise ConfigError(f"bad program: {exc}") from None
    return prog


def _positive(name, v, allow_zero=False):
    if v is None:
        return
    if v < 0 or (v == 0 and not allow_zero):
        raise ConfigError(f"--{name.replace('_', '-')} must be {'nonnegative' if allow_zero else 'positive'}")


def _score_cfg(args) -> ScoreConfig:
    _positive("n_samples", args.n_samples)
    if args.n_samples < 2:
        raise ConfigError("--n-samples must be at least 2")
    return ScoreConfig(n_samples=args.n_samples)


def _map_jobs(fn, items, jobs: int) -> list:
    """Apply ``fn`` to each item, in processes when jobs > 1; results keep item order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, *zip(*items)))


# ---------------------------------------------------------------------------
# commands


def cmd_weights_estimate(args) -> None:
    w = _load_weights(args)
    write_json(args.out, args, w.to_dict())


def cmd_generate(args) -> None:
    _positive("count", args.count, allow_zero=True)
    _positive("draws", args.draws)
    seed = _seed(args)
    w = _load_weights(args)
    ret = INT if args.int else REAL
    rng = np.random.default_rng(seed)
    rows, hist = [], []
    for i in range(args.count):
        prog, lp = generate_program((), ret, w, rng)
        s = sample_program(prog, args.draws, [], rng)
        finite = s.values[np.isfinite(s.values)]
        rows.append([i, lp, s.cap_fraction, len(s.values) - len(finite), print_program(prog)])
        if len(finite):
            counts, edges = np.histogram(finite, bins=args.bins)
            hist.extend([i, edges[k], edges[k + 1], int(counts[k])] for k in range(len(counts)))
    write_csv(args.out, args, ["index", "logprior", "cap_fraction", "nonfinite", "program"], rows)
    if args.hist:
        write_csv(args.hist, args, ["index", "bin_lo", "bin_hi", "count"], hist)


def cmd_score(args) -> None:
    seed = _seed(args)
    prog = _load_program(args.program)
    target = _load_target(args.target)
    params, ret = target_signature(target)
    if len(prog.params) != len(params):
        raise ConfigError(f"the target expects a program of {len(params)} parameter(s)")
    cfg = _score_cfg(args)
    _positive("repeats", args.repeats)
    rng = np.random.default_rng(seed)
    rows = []
    for r in range(args.repeats):
        s = score_program(prog, target, cfg, rng)
        rows.append([r, s, penalty(s, target)])
    write_csv(args.out, args, ["repeat", "logscore", "penalty"], rows)


def _mh_chain(target, w, cfg, iterations, seed_seq):
    return run_mh(None, target, w, cfg, iterations, np.random.default_rng(seed_seq))


def cmd_synth_mh(args) -> None:
    seed = _seed(args)
    target = _load_target(args.target)
    w = _load_weights(args)
    cfg = _score_cfg(args)
    _positive("iterations", args.iterations)
    _positive("chains", args.chains)
    out = _out_dir(args)
    seeds = np.random.SeedSequence(seed).spawn(args.chains)
    try:
        traces = _map_jobs(_mh_chain, [(target, w, cfg, args.iterations, s) for s in seeds], args.jobs)
    except SearchConfigError as exc:
        raise ConfigError(str(exc)) from None
    rows = []
    for c, tr in enumerate(traces):
        for r in [tr.init] + tr.records:
            rows.append([c, r.iteration, r.log_prior, r.log_score, penalty(r.log_score, target), r.accepted, r.site, r.program])
    write_csv(out / "trace.csv", args, ["chain", "iter", "logprior", "logscore", "penalty", "accepted", "site", "program"], rows)
    bests = [tr.best_record() for tr in traces]
    k = max(range(len(bests)), key=lambda i: (bests[i].log_prior + bests[i].log_score, -i))
    b = bests[k]
    payload = {
        "chain": k,
        "iteration": b.iteration,
        "program": b.program,
        "logprior": b.log_prior,
        "logscore": b.log_score,
        "penalty": penalty(b.log_score, target),
        "target": target_to_dict(target),
    }
    write_json(out / "best.json", args, payload)
    write_program(out / "best.psmp", args, b.program)


def _gp_run(target, w, gp, cfg, seed_seq):
    return run_gp(target, w, gp, cfg, np.random.default_rng(seed_seq))


def cmd_synth_gp(args) -> None:
    seed = _seed(args)
    target = _load_target(args.target)
    w = _load_weights(args)
    cfg = _score_cfg(args)
    try:
        gp = GpConfig(
            population=args.population,
            generations=args.generations,
            tournament=args.tournament,
            p_crossover=args.p_crossover,
            p_mutation=args.p_mutation,
            elitism=args.elitism,
        )
    except SearchConfigError as exc:
        raise ConfigError(str(exc)) from None
    _positive("runs", args.runs)
    out = _out_dir(args)
    seeds = np.random.SeedSequence(seed).spawn(args.runs)
    results = _map_jobs(_gp_run, [(target, w, gp, cfg, s) for s in seeds], args.jobs)
    rows = []
    for k, res in enumerate(results):
        for s in res.stats:
            rows.append([k, s.generation, s.best_fitness, s.mean_fitness, s.best_penalty, s.invalid, s.best_program])
    write_csv(out / "generations.csv", args, ["run", "gen", "best_fitness", "mean_fitness", "best_penalty", "invalid", "program"], rows)
    k = max(range(len(results)), key=lambda i: (results[i].best.fitness, -i))
    b = results[k].best
    payload = {
        "run": k,
        "program": print_program(b.program),
        "logprior": b.log_prior,
        "logscore": b.log_score,
        "penalty": penalty(b.log_score, target),
        "evaluations": results[k].evaluations,
        "target": target_to_dict(target),
    }
    write_json(out / "best.json", args, payload)
    write_program(out / "best.psmp", args, print_program(b.program))


def cmd_abc_reject(args) -> None:
    seed = _seed(args)
    target = _load_target(args.target)
    if args.toy:
        try:
            vals = [float(v) for v in args.toy.split(",")]
            w = constant_only_weights({v: 1.0 / len(vals) for v in vals})
        except ValueError as exc:
            raise ConfigError(f"bad --toy: {exc}") from None
    else:
        w = _load_weights(args)
    cfg = _score_cfg(args)
    _positive("max_draws", args.max_draws)
    if args.epsilon < 0 or math.isnan(args.epsilon):
        raise ConfigError("--epsilon must be nonnegative")
    try:
        res = rejection_abc(target, w, args.epsilon, args.max_draws, cfg, np.random.default_rng(seed))
    except SearchConfigError as exc:
        raise ConfigError(str(exc)) from None
    counts: dict[str, int] = {}
    for p in res.accepted:
        t = print_program(p)
        counts[t] = counts.get(t, 0) + 1
    n = len(res.accepted)
    rows = [[t, c, c / n, log_prior(parse_program(t), w)] for t, c in sorted(counts.items())]
    write_csv(args.out, args, ["program", "count", "frequency", "logprior"], rows)
    print(f"accepted {n} of {res.draws}", file=sys.stderr)


def _groups(spec: str) -> tuple[str, ...]:
    spec = spec.strip().lower()
    if spec in ("none", ""):
        return ()
    if spec == "all":
        return ("step", "smooth")
    out = tuple(s.strip() for s in spec.split(","))
    for g in out:
        if g not in ("step", "smooth"):
            raise ConfigError(f"unknown episode group {g!r} (use step, smooth, all or none)")
    return out


def cmd_lg_episodes(args) -> None:
    seed = _seed(args)
    out = _out_dir(args)
    _positive("noise", args.noise, allow_zero=True)
    rng = np.random.default_rng(seed)
    index = []
    for g in _groups(args.group):
        for k, ep in enumerate(episode_set(g, args.split, args.noise, rng)):
            name = f"{args.split}-{g}-{k}.csv"
            with open(out / name, "w", newline="", encoding="utf-8") as fh:
                ep.to_csv(fh, header_lines(args))
            index.append([name, ep.label])
    write_csv(out / "index.csv", args, ["file", "label"], index)


def _read_episode(path: str) -> Episode:
    try:
        with open(path, encoding="utf-8") as fh:
            return Episode.from_csv(fh, Path(path).stem)
    except (OSError, KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"cannot read episode {path!r}: {exc}") from None


def _read_params(path: str) -> MlpParams:
    d = _read_json(path)
    d.pop("meta", None)
    try:
        params = MlpParams.from_dict(d)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad network file: {exc}") from None
    if params.sizes[0] != N_FEATURES:
        raise ConfigError(f"the network must take {N_FEATURES} inputs, not {params.sizes[0]}")
    return params


def cmd_lg_smc(args) -> None:
    seed = _seed(args)
    ep = _read_episode(args.episode)
    _positive("particles", args.particles)
    if not 0 <= args.p_mix <= 1:
        raise ConfigError("--p-mix must lie in [0, 1]")
    if args.proposal == "data-driven":
        if not args.params:
            raise ConfigError("--params is required for the data-driven proposal")
        proposal = DataDriven(_read_params(args.params), args.p_mix)
    else:
        proposal = "prior"
    model = LgModel()
    res = smc_run(model, ep.y, args.particles, proposal, np.random.default_rng(seed))
    kal = kalman_filter_smoother(model, ep.y)
    fm = res.filtering_means()
    rows = []
    for t in range(len(ep.y)):
        rows.append([float(ep.t[t]), float(ep.y[t]), float(fm[t]), float(kal.filt_mean[t]), float(res.ess[t]), bool(res.degenerate[t])])
    write_csv(args.out, args, ["t", "y", "filter_mean", "kalman_mean", "ess", "degenerate"], rows)
    if ep.x is not None:
        print(f"mae {evaluate_error(res, ep.x)!r}", file=sys.stderr)


def _train_cfg(args) -> TrainConfig:
    try:
        return TrainConfig(lr=args.lr, epochs=args.epochs, batch=args.batch)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_lg_train(args) -> None:
    seed = _seed(args)
    _positive("particles", args.particles)
    tcfg = _train_cfg(args)
    if not args.episodes:
        raise ConfigError("at least one --episodes file is required")
    eps = [_read_episode(p) for p in args.episodes]
    rng = np.random.default_rng(seed)
    params = _read_params(args.init) if args.init else mlp_init(rng)
    model = LgModel()
    data = TrainingSet.empty()
    loss_rows = []
    for k, ep in enumerate(eps):
        res = smc_run(model, ep.y, args.particles, "prior", rng)
        data = data.concat(extract_training_pairs(res, ep.y, model))
        tr = mlp_train(params, data, tcfg, rng)
        params = tr.params
        loss_rows.extend([k, e, l, tr.lr] for e, l in enumerate(tr.losses))
    write_json(args.out, args, params.to_dict())
    if args.losses:
        write_csv(args.losses, args, ["episode", "epoch", "loss", "lr"], loss_rows)


def cmd_lg_pipeline(args) -> None:
    seed = _seed(args)
    out = _out_dir(args)
    try:
        cfg = PipelineConfig(
            train=_groups(args.train),
            test=_groups(args.test),
            p_train=args.p_train,
            p_test=args.p_test,
            repeats=args.repeats,
            p_mix=args.p_mix,
            noise_sd=args.noise,
            train_cfg=_train_cfg(args),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not cfg.test:
        raise ConfigError("--test must name at least one episode group")
    res = run_pipeline(cfg, seed, args.jobs)
    write_csv(out / "metrics.csv", args, ["episode", "proposal", "repeat", "mae"], [[r.episode, r.proposal, r.repeat, r.mae] for r in res.rows])
    write_csv(out / "summary.csv", args, ["episode", "proposal", "mean_mae", "sd_mae"], res.summary())
    write_csv(
        out / "train_metrics.csv", args, ["episode", "proposal", "repeat", "mae"], [[r.episode, r.proposal, r.repeat, r.mae] for r in res.train_rows]
    )


def cmd_selftest(args) -> None:
    from .acceptance import run_all

    only = None
    if args.only:
        try:
            only = {int(x) for x in args.only.split(",")}
        except ValueError:
            raise ConfigError("--only takes a comma-separated list of criterion numbers") from None
    results = run_all(only, stream=sys.stdout)
    if not all(r.passed for r in results):
        raise RuntimeError(f"{sum(not r.passed for r in results)} acceptance criteria failed")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help=f"RNG seed (falls back to ${SEED_ENV})")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    common.add_argument("--config", default=None, help="JSON file of option defaults")

    wopts = _Parser(add_help=False)
    wopts.add_argument("--weights", default=None, help="RuleWeights JSON (default: estimate from the corpus)")
    wopts.add_argument("--holdout", action="append", default=None, help="corpus entry to leave out (repeatable)")
    wopts.add_argument("--corpus-dir", default=None, help="directory of .psmp programs replacing the bundled corpus")
    wopts.add_argument("--alpha", type=float, default=1.0, help="Dirichlet smoothing")
    wopts.add_argument("--max-depth", type=int, default=10)

    sopts = _Parser(add_help=False)
    sopts.add_argument("--target", required=True, help="target JSON (file or inline)")
    sopts.add_argument("--n-samples", type=int, default=100)

    train = _Parser(add_help=False)
    train.add_argument("--epochs", type=int, default=200)
    train.add_argument("--lr", type=float, default=1e-2)
    train.add_argument("--batch", type=int, default=32)

    p = _Parser(prog="sampler-smith", description="Sampler-program synthesis and SMC with learned proposals.")
    p.add_argument("--version", action="version", version=f"sampler-smith {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    w = sub.add_parser("weights", help="grammar weights").add_subparsers(dest="action", required=True, parser_class=_Parser)
    x = w.add_parser("estimate", parents=[common, wopts], help="estimate rule weights from the corpus")
    x.add_argument("--out", default=None)
    x.set_defaults(func=cmd_weights_estimate)

    x = sub.add_parser("generate", parents=[common, wopts], help="sample programs from the grammar prior")
    x.add_argument("--count", type=int, default=10)
    x.add_argument("--draws", type=int, default=1000, help="outputs drawn per program")
    x.add_argument("--bins", type=int, default=20)
    x.add_argument("--int", action="store_true", help="generate int-valued programs")
    x.add_argument("--out", default=None)
    x.add_argument("--hist", default=None, help="histogram CSV of the draws")
    x.set_defaults(func=cmd_generate)

    x = sub.add_parser("score", parents=[common, sopts], help="score one program against a target")
    x.add_argument("--program", required=True, help=".psmp file or program text")
    x.add_argument("--repeats", type=int, default=1)
    x.add_argument("--out", default=None)
    x.set_defaults(func=cmd_score)

    s = sub.add_parser("synth", help="program search").add_subparsers(dest="engine", required=True, parser_class=_Parser)
    x = s.add_parser("mh", parents=[common, wopts, sopts], help="Metropolis-Hastings over programs")
    x.add_argument("--iterations", type=int, default=1000)
    x.add_argument("--chains", type=int, default=1)
    x.add_argument("--out-dir", default=None)
    x.set_defaults(func=cmd_synth_mh)
    x = s.add_parser("gp", parents=[common, wopts, sopts], help="genetic programming baseline")
    x.add_argument("--population", type=int, default=100)
    x.add_argument("--generations", type=int, default=50)
    x.add_argument("--tournament", type=int, default=7)
    x.add_argument("--p-crossover", type=float, default=0.5)
    x.add_argument("--p-mutation", type=float, default=0.3)
    x.add_argument("--elitism", type=int, default=1)
    x.add_argument("--runs", type=int, default=1)
    x.add_argument("--out-dir", default=None)
    x.set_defaults(func=cmd_synth_gp)

    a = sub.add_parser("abc", help="rejection ABC").add_subparsers(dest="action", required=True, parser_class=_Parser)
    x = a.add_parser("reject", parents=[common, wopts, sopts], help="rejection sampler over programs")
    x.add_argument("--epsilon", type=float, required=True)
    x.add_argument("--max-draws", type=int, default=10_000)
    x.add_argument("--toy", default=None, help="comma-separated constants: use the constant-only grammar")
    x.add_argument("--out", default=None)
    x.set_defaults(func=cmd_abc_reject)

    lg = sub.add_parser("lg", help="linear Gaussian SMC experiments").add_subparsers(dest="action", required=True, parser_class=_Parser)
    x = lg.add_parser("episodes", parents=[common], help="write training or test episodes")
    x.add_argument("--group", default="all", help="step, smooth, all")
    x.add_argument("--split", choices=("train", "test"), default="train")
    x.add_argument("--noise", type=float, default=0.1)
    x.add_argument("--out-dir", default=None)
    x.set_defaults(func=cmd_lg_episodes)
    x = lg.add_parser("smc", parents=[common], help="run a particle filter on one episode")
    x.add_argument("--episode", required=True)
    x.add_argument("--particles", type=int, default=100)
    x.add_argument("--proposal", choices=("prior", "data-driven"), default="prior")
    x.add_argument("--params", default=None, help="network JSON for the data-driven proposal")
    x.add_argument("--p-mix", type=float, default=0.7)
    x.add_argument("--out", default=None)
    x.set_defaults(func=cmd_lg_smc)
    x = lg.add_parser("train", parents=[common, train], help="train the proposal network on episodes")
    x.add_argument("--episodes", nargs="+", default=None)
    x.add_argument("--particles", type=int, default=100)
    x.add_argument("--init", default=None, help="network JSON to warm-start from")
    x.add_argument("--out", default=None)
    x.add_argument("--losses", default=None, help="CSV of per-epoch losses")
    x.set_defaults(func=cmd_lg_train)
    x = lg.add_parser("pipeline", parents=[common, train], help="train on one group, compare proposals on test episodes")
    x.add_argument("--train", default="step", help="step, smooth, all or none")
    x.add_argument("--test", default="all", help="step, smooth or all")
    x.add_argument("--p-train", type=int, default=100)
    x.add_argument("--p-test", type=int, default=10)
    x.add_argument("--repeats", type=int, default=5)
    x.add_argument("--p-mix", type=float, default=0.7)
    x.add_argument("--noise", type=float, default=0.1)
    x.add_argument("--out-dir", default=None)
    x.set_defaults(func=cmd_lg_pipeline)

    x = sub.add_parser("selftest", help="run the acceptance checks")
    x.add_argument("--only", default=None, help="comma-separated criterion numbers")
    x.set_defaults(func=cmd_selftest)
    return p


def _apply_config(parser, argv, args):
    """Re-parse with defaults taken from --config; explicit flags still win."""
    cfg = _read_json(args.config)
    known = set(vars(args))
    bad = [k for k in cfg if k.replace("-", "_") not in known]
    if bad:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(bad))}")
    # defaults must be set on the subparser that owns them, so rebuild and walk
    defaults = {k.replace("-", "_"): v for k, v in cfg.items()}

    def walk(p):
        p.set_defaults(**{k: v for k, v in defaults.items() if any(a.dest == k for a in p._actions)})
        for a in p._actions:
            if isinstance(a, argparse._SubParsersAction):
                for sp in a.choices.values():
                    walk(sp)

    walk(parser)
    return parser.parse_args(argv)


def run_cli(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            args = _apply_config(parser, argv, args)
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be at least 1")
        args.func(args)
    except ConfigError as exc:
        print(f"ERR:2: {exc}", file=sys.stderr)
        return 2
    except (DomainError, SearchConfigError, CsvColumnError) as exc:
        print(f"ERR:2: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - last-resort reporting
        print(f"ERR:1: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
