"""Sequential Monte Carlo on a linear Gaussian state-space model.

Model (one latent, one observation per step)::

    x_1 ~ Normal(m0, s0^2)
    x_t ~ Normal(x_{t-1}, q^2)
    y_t ~ Normal(x_t, r^2)

Two proposals are supported: the transition prior (bootstrap filter) and a
mixture of the prior with a Normal whose (mu, sigma) come from a network fed
with the particle's last ten latents and the last ten observations.  A Kalman
filter / RTS smoother gives the exact answer for testing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

HISTORY = 10
N_FEATURES = 2 * HISTORY
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LgModel:
    init_mean: float = 0.0
    init_sd: float = 2.0
    trans_sd: float = 0.1
    obs_sd: float = 0.1

    def __post_init__(self):
        if not (self.init_sd > 0 and self.trans_sd > 0 and self.obs_sd > 0):
            raise ValueError("standard deviations must be positive")

    def simulate(self, steps: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        x = np.empty(steps)
        x[0] = rng.normal(self.init_mean, self.init_sd)
        x[1:] = self.trans_sd * rng.standard_normal(steps - 1)
        x = np.cumsum(x)
        return x, x + self.obs_sd * rng.standard_normal(steps)


def normal_logpdf(x, mu, sd):
    z = (np.asarray(x) - mu) / sd
    return -0.5 * z * z - np.log(sd) - _LOG_SQRT_2PI


# ---------------------------------------------------------------------------
# episodes

GRID = 1.0 + 0.5 * np.arange(199)  # t = 1, 1.5, ..., 100

TRAIN_OFFSETS = {
    "step": (0.0, -math.pi / 6, math.pi / 6, -math.pi / 4, math.pi / 4, math.pi / 3, -math.pi / 3, math.pi / 2, -math.pi / 2),
    "smooth": (-math.pi / 6, math.pi / 6, -math.pi / 4, math.pi / 4, -math.pi / 3, math.pi / 3, -math.pi / 2, math.pi / 2),
}
TEST_OFFSETS = {"step": (-1.0, 1.0, -2.0, 2.0), "smooth": (-1.0, 1.0, -2.0, 2.0)}
WAVE = {"step": "square", "smooth": "sin"}


@dataclass
class Episode:
    label: str
    t: np.ndarray
    x: np.ndarray | None  # noiseless function values, when known
    y: np.ndarray

    def __post_init__(self):
        if len(self.y) != len(self.t) or (self.x is not None and len(self.x) != len(self.t)):
            raise ValueError("episode arrays must match the grid")
        if not (np.diff(self.t) > 0).all():
            raise ValueError("time grid must be strictly increasing")

    def to_csv(self, fh, header_lines=()) -> None:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "y", "x"] if self.x is not None else ["t", "y"])
        for i in range(len(self.t)):
            row = [repr(float(self.t[i])), repr(float(self.y[i]))]
            if self.x is not None:
                row.append(repr(float(self.x[i])))
            w.writerow(row)

    @classmethod
    def from_csv(cls, fh, label: str = "file") -> "Episode":
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        header, body = rows[0], rows[1:]
        cols = {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header)}
        return cls(label, cols["t"], cols.get("x"), cols["y"])


def square(t):
    """Square wave with period 2 pi: +1 where sin(t) >= 0, else -1."""
    return np.where(np.sin(t) >= 0, 1.0, -1.0)


def wave_values(kind: str, offset: float, t=GRID) -> np.ndarray:
    if kind == "sin":
        return np.sin(t + offset)
    if kind == "square":
        return square(t + offset)
    raise ValueError(f"unknown wave {kind!r}")


def gen_episode(kind: str, offset: float, noise_sd: float, rng: np.random.Generator | None) -> Episode:
    """Noisy observations of ``kind(t + offset)`` on the 199-point grid."""
    f = wave_values(kind, offset)
    y = f if noise_sd == 0 else f + noise_sd * rng.standard_normal(len(f))
    return Episode(f"{kind}({offset:+.4f})", GRID.copy(), f, y)


def episode_set(group: str, split: str, noise_sd: float, rng) -> list[Episode]:
    """All training or test episodes of a group ("step" or "smooth")."""
    offsets = (TRAIN_OFFSETS if split == "train" else TEST_OFFSETS)[group]
    return [gen_episode(WAVE[group], o, noise_sd, rng) for o in offsets]


# ---------------------------------------------------------------------------
# Kalman oracle


@dataclass
class KalmanResult:
    filt_mean: np.ndarray
    filt_var: np.ndarray
    smooth_mean: np.ndarray
    smooth_var: np.ndarray


def kalman_filter_smoother(model: LgModel, ys) -> KalmanResult:
    ys = np.asarray(ys, float)
    T = len(ys)
    q2, r2 = model.trans_sd**2, model.obs_sd**2
    fm, fv, pm, pv = (np.empty(T) for _ in range(4))
    m, v = model.init_mean, model.init_sd**2
    for t in range(T):
        if t > 0:
            v = v + q2
        pm[t], pv[t] = m, v
        k = v / (v + r2)
        m = m + k * (ys[t] - m)
        v = (1 - k) * v
        fm[t], fv[t] = m, v
    sm, sv = fm.copy(), fv.copy()
    for t in range(T - 2, -1, -1):
        g = fv[t] / pv[t + 1]
        sm[t] = fm[t] + g * (sm[t + 1] - pm[t + 1])
        sv[t] = fv[t] + g * g * (sv[t + 1] - pv[t + 1])
    return KalmanResult(fm, fv, sm, sv)


# ---------------------------------------------------------------------------
# network


@dataclass
class MlpParams:
    W1: np.ndarray  # (hidden, inputs)
    b1: np.ndarray
    W2: np.ndarray  # (2, hidden); row 0 -> mu, row 1 -> log sigma
    b2: np.ndarray

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.W1.shape[1], self.W1.shape[0], self.W2.shape[0]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return self.W1, self.b1, self.W2, self.b2

    def copy(self) -> "MlpParams":
        return MlpParams(*(a.copy() for a in self.arrays()))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, v: np.ndarray) -> "MlpParams":
        out, i = [], 0
        for a in self.arrays():
            out.append(np.asarray(v[i : i + a.size], float).reshape(a.shape))
            i += a.size
        return MlpParams(*out)

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "activations": {"hidden": "sigmoid", "mu": "identity", "sigma": "exp"},
            "W1": self.W1.ravel().tolist(),
            "b1": self.b1.tolist(),
            "W2": self.W2.ravel().tolist(),
            "b2": self.b2.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        n_in, n_hid, n_out = d["sizes"]
        if n_out != 2:
            raise ValueError("the output layer must have two units")
        return cls(
            np.array(d["W1"], float).reshape(n_hid, n_in),
            np.array(d["b1"], float),
            np.array(d["W2"], float).reshape(n_out, n_hid),
            np.array(d["b2"], float),
        )


def mlp_init(rng: np.random.Generator, sizes=(N_FEATURES, 25, 2)) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    n_in, n_hid, n_out = sizes

    def glorot(fan_out, fan_in):
        r = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-r, r, size=(fan_out, fan_in))

    return MlpParams(glorot(n_hid, n_in), np.zeros(n_hid), glorot(n_out, n_hid), np.zeros(n_out))


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def mlp_forward(params: MlpParams, features) -> tuple[np.ndarray, np.ndarray]:
    """(mu, sigma) for one feature vector or a batch of rows."""
    h = _sigmoid(np.asarray(features, float) @ params.W1.T + params.b1)
    o = h @ params.W2.T + params.b2
    return o[..., 0], np.exp(o[..., 1])


def weighted_nll(params: MlpParams, X, y, w) -> float:
    mu, sigma = mlp_forward(params, X)
    return float(-np.sum(w * normal_logpdf(y, mu, sigma)))


def nll_grad(params: MlpParams, X, y, w) -> tuple[float, MlpParams]:
    """Loss  -sum_j w_j log Normal(y_j; mu_j, sigma_j^2)  and its gradient."""
    X = np.asarray(X, float)
    h = _sigmoid(X @ params.W1.T + params.b1)
    o = h @ params.W2.T + params.b2
    mu, log_s = o[:, 0], o[:, 1]
    r = (y - mu) * np.exp(-log_s)
    loss = float(np.sum(w * (0.5 * r * r + log_s + _LOG_SQRT_2PI)))
    d_o = np.empty_like(o)
    d_o[:, 0] = -w * r * np.exp(-log_s)
    d_o[:, 1] = w * (1.0 - r * r)
    d_pre = (d_o @ params.W2) * h * (1.0 - h)
    grads = MlpParams(d_pre.T @ X, d_pre.sum(0), d_o.T @ h, d_o.sum(0))
    return loss, grads


# ---------------------------------------------------------------------------
# training data


@dataclass
class TrainingSet:
    features: np.ndarray  # (M, 20)
    responses: np.ndarray  # (M,)
    weights: np.ndarray  # (M,)

    def __len__(self) -> int:
        return len(self.responses)

    @classmethod
    def empty(cls) -> "TrainingSet":
        return cls(np.zeros((0, N_FEATURES)), np.zeros(0), np.zeros(0))

    def concat(self, other: "TrainingSet") -> "TrainingSet":
        return TrainingSet(
            np.vstack([self.features, other.features]),
            np.concatenate([self.responses, other.responses]),
            np.concatenate([self.weights, other.weights]),
        )


def obs_windows(ys) -> np.ndarray:
    """Row t holds y_{t-9..t}, left-padded with y_1."""
    ys = np.asarray(ys, float)
    idx = np.arange(len(ys))[:, None] + np.arange(-HISTORY + 1, 1)[None, :]
    return ys[np.maximum(idx, 0)]


def latent_window(paths, t: int, pad: float) -> np.ndarray:
    """x_{t-10..t-1} (0-based t) for each row of ``paths``.

    Short histories are left-padded with the first latent; ``pad`` fills the
    window when there is no history at all.
    """
    paths = np.atleast_2d(np.asarray(paths, float))
    if t == 0:
        return np.full((len(paths), HISTORY), pad)
    idx = np.maximum(np.arange(t - HISTORY, t), 0)
    return paths[:, idx]


# ---------------------------------------------------------------------------
# proposals

Net = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def mixture_logpdf(x, mu, sigma, p_mix: float, prior_mean, prior_sd):
    with np.errstate(divide="ignore"):
        a = math.log(p_mix) if p_mix > 0 else -math.inf
        b = math.log1p(-p_mix) if p_mix < 1 else -math.inf
    return np.logaddexp(a + normal_logpdf(x, mu, sigma), b + normal_logpdf(x, prior_mean, prior_sd))


def mixture_proposal(features, net: Net | MlpParams, p_mix: float, prior_mean, prior_sd, z, u):
    """Draw from p_mix * Normal(net) + (1 - p_mix) * prior and return (x, log q).

    ``z`` are standard normals and ``u`` unit uniforms, one per particle.
    """
    if not 0.0 <= p_mix <= 1.0:
        raise ValueError("p_mix must lie in [0, 1]")
    mu, sigma = mlp_forward(net, features) if isinstance(net, MlpParams) else net(features)
    use_net = u < p_mix
    x = np.where(use_net, mu + sigma * z, prior_mean + prior_sd * z)
    return x, mixture_logpdf(x, mu, sigma, p_mix, prior_mean, prior_sd)


@dataclass(frozen=True)
class DataDriven:
    net: Net | MlpParams
    p_mix: float = 0.7


# ---------------------------------------------------------------------------
# particle filter


@dataclass
class ParticleResult:
    particles: np.ndarray  # (T, P) values before resampling
    weights: np.ndarray  # (T, P) normalized
    ancestors: np.ndarray  # (T, P); row t gives the step t-1 parent of particle s
    ess: np.ndarray
    degenerate: np.ndarray  # per-step fallback flag

    def filtering_means(self) -> np.ndarray:
        return np.sum(self.weights * self.particles, axis=1)

    def trajectory_index(self) -> np.ndarray:
        """(T, P): index at each step of the particle on final trajectory s."""
        T, P = self.particles.shape
        idx = np.empty((T, P), dtype=int)
        idx[-1] = np.arange(P)
        for t in range(T - 1, 0, -1):
            idx[t - 1] = self.ancestors[t][idx[t]]
        return idx

    def trajectories(self) -> np.ndarray:
        """(P, T) final paths traced back through the ancestry."""
        idx = self.trajectory_index()
        return np.take_along_axis(self.particles, idx, axis=1).T


def _step_rng(root: int, t: int, k: int) -> np.random.Generator:
    return np.random.default_rng([root, t, k])


def smc_run(model: LgModel, ys, P: int, proposal, rng: np.random.Generator) -> ParticleResult:
    """Particle filter with multinomial resampling after every step.

    ``proposal`` is ``"prior"`` (or None) or a ``DataDriven``.  Each step draws
    its normals, mixture uniforms and resampling from separate derived
    streams, so runs that differ only in the proposal share their randomness.
    """
    if P < 1:
        raise ValueError("need at least one particle")
    ys = np.asarray(ys, float)
    T = len(ys)
    root = int(rng.integers(0, 2**63))
    dd = proposal if isinstance(proposal, DataDriven) else None
    if dd is None and proposal not in (None, "prior"):
        raise ValueError(f"unknown proposal {proposal!r}")
    obs = obs_windows(ys) if dd is not None else None
    hist = np.full((P, HISTORY), model.init_mean)

    xs, ws, anc = np.empty((T, P)), np.empty((T, P)), np.empty((T, P), dtype=int)
    ess, degenerate = np.empty(T), np.zeros(T, dtype=bool)
    prev = np.full(P, model.init_mean)
    anc[0] = np.arange(P)
    for t in range(T):
        mean, sd = (np.full(P, model.init_mean), model.init_sd) if t == 0 else (prev, model.trans_sd)
        z = _step_rng(root, t, 0).standard_normal(P)
        if dd is None:
            x = mean + sd * z
            logw = normal_logpdf(ys[t], x, model.obs_sd)
        else:
            feats = np.hstack([hist, np.broadcast_to(obs[t], (P, HISTORY))])
            u = _step_rng(root, t, 1).random(P)
            x, logq = mixture_proposal(feats, dd.net, dd.p_mix, mean, sd, z, u)
            logw = normal_logpdf(ys[t], x, model.obs_sd) + normal_logpdf(x, mean, sd) - logq
        top = np.max(logw)
        if not np.isfinite(top):
            w = np.full(P, 1.0 / P)
            degenerate[t] = True
        else:
            w = np.exp(logw - top)
            w /= w.sum()
        xs[t], ws[t] = x, w
        ess[t] = 1.0 / np.sum(w * w)
        if t + 1 < T:
            a = _step_rng(root, t, 2).choice(P, size=P, p=w)
            anc[t + 1] = a
            prev = x[a]
            if t == 0:
                hist = np.repeat(x[a][:, None], HISTORY, axis=1)
            else:
                hist = np.hstack([hist[a, 1:], x[a][:, None]])
    return ParticleResult(xs, ws, anc, ess, degenerate)


def extract_training_pairs(result: ParticleResult, ys, model: LgModel = LgModel()) -> TrainingSet:
    """Weighted (features, x_t) pairs from the final trajectories.

    Trajectories that share their particle at step t have the same history
    and response there, so they are merged into one pair carrying the summed
    weight.
    """
    idx = result.trajectory_index()
    paths = result.trajectories()
    w_final = result.weights[-1]
    obs = obs_windows(ys)
    feats, resp, wts = [], [], []
    for t in range(len(obs)):
        keys, first, inv = np.unique(idx[t], return_index=True, return_inverse=True)
        rows = paths[first]
        k = len(keys)
        feats.append(np.hstack([latent_window(rows, t, model.init_mean), np.broadcast_to(obs[t], (k, HISTORY))]))
        resp.append(rows[:, t])
        wts.append(np.bincount(inv.ravel(), weights=w_final, minlength=k))
    return TrainingSet(np.vstack(feats), np.concatenate(resp), np.concatenate(wts))


def evaluate_error(result: ParticleResult, truth) -> float:
    """Mean absolute error of the filtering means."""
    truth = np.asarray(truth, float)
    est = result.filtering_means()
    if len(truth) != len(est):
        raise ValueError("truth length does not match the run")
    return float(np.mean(np.abs(est - truth)))


# ---------------------------------------------------------------------------
# training


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    epochs: int = 200
    batch: int = 32
    max_halvings: int = 5

    def __post_init__(self):
        if not (self.lr > 0 and self.epochs >= 0 and self.batch >= 1 and self.max_halvings >= 0):
            raise ValueError("bad training configuration")


@dataclass
class TrainResult:
    params: MlpParams
    losses: list[float]  # full-set loss after each epoch
    lr: float  # the rate that finally succeeded


def _sgd(params: MlpParams, data: TrainingSet, lr: float, epochs: int, batch: int, rng) -> TrainResult | None:
    p = params.copy()
    X, y = data.features, data.responses
    # rescale weights to mean 1 so that the step size does not depend on the set size
    w = data.weights / data.weights.mean()
    n = len(y)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        # a diverging run is detected below, so overflow here is not an error
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, batch):
                b = order[start : start + batch]
                _, g = nll_grad(p, X[b], y[b], w[b])
                scale = lr / len(b)
                for a, ga in zip(p.arrays(), g.arrays()):
                    a -= scale * ga
            loss = weighted_nll(p, X, y, data.weights)
        if not math.isfinite(loss) or not np.isfinite(p.flat()).all():
            return None
        losses.append(loss)
    return TrainResult(p, losses, lr)


def mlp_train(params: MlpParams, data: TrainingSet, cfg: TrainConfig, rng: np.random.Generator) -> TrainResult:
    """Minibatch SGD on the weighted negative log-likelihood.

    A non-finite loss restarts training from ``params`` with half the rate.
    """
    if len(data) == 0:
        raise ValueError("no training pairs")
    if cfg.epochs == 0:
        return TrainResult(params.copy(), [], cfg.lr)
    lr = cfg.lr
    for _ in range(cfg.max_halvings + 1):
        res = _sgd(params, data, lr, cfg.epochs, cfg.batch, np.random.default_rng(rng.integers(0, 2**63)))
        if res is not None:
            return res
        lr /= 2
    raise TrainingError(f"loss diverged after {cfg.max_halvings} step-size halvings")


# ---------------------------------------------------------------------------
# experiment pipeline


@dataclass
class MetricRow:
    repeat: int
    episode: str
    proposal: str
    mae: float


@dataclass
class PipelineResult:
    rows: list[MetricRow]
    train_rows: list[MetricRow]
    params: list[MlpParams | None]  # final network per repeat

    def summary(self) -> list[tuple[str, str, float, float]]:
        """(episode, proposal, mean MAE, sd MAE) over repeats."""
        keys = list(dict.fromkeys((r.episode, r.proposal) for r in self.rows))
        out = []
        for ep, prop in keys:
            v = np.array([r.mae for r in self.rows if (r.episode, r.proposal) == (ep, prop)])
            out.append((ep, prop, float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0))
        return out

    def repeat_means(self, proposal: str, episodes=None) -> dict[int, float]:
        acc: dict[int, list[float]] = {}
        for r in self.rows:
            if r.proposal == proposal and (episodes is None or r.episode in episodes):
                acc.setdefault(r.repeat, []).append(r.mae)
        return {k: float(np.mean(v)) for k, v in sorted(acc.items())}


@dataclass(frozen=True)
class PipelineConfig:
    train: tuple[str, ...] = ("step",)
    test: tuple[str, ...] = ("step", "smooth")
    p_train: int = 100
    p_test: int = 10
    repeats: int = 5
    p_mix: float = 0.7
    noise_sd: float = 0.1
    train_cfg: TrainConfig = TrainConfig()

    def __post_init__(self):
        for g in self.train + self.test:
            if g not in TRAIN_OFFSETS:
                raise ValueError(f"unknown episode group {g!r}")
        if self.p_train < 1 or self.p_test < 1 or self.repeats < 1:
            raise ValueError("particle counts and repeats must be positive")
        if not 0.0 <= self.p_mix <= 1.0:
            raise ValueError("p_mix must lie in [0, 1]")


def run_repeat(cfg: PipelineConfig, repeat: int, seed_seq: np.random.SeedSequence, model: LgModel = LgModel()):
    """One repeat: sequential training on fresh episodes, then the test comparison."""
    rng = np.random.default_rng(seed_seq)
    train_eps = [e for g in cfg.train for e in episode_set(g, "train", cfg.noise_sd, rng)]
    test_eps = [e for g in cfg.test for e in episode_set(g, "test", cfg.noise_sd, rng)]
    params = mlp_init(rng) if train_eps else None
    data = TrainingSet.empty()
    train_rows = []
    for ep in train_eps:
        res = smc_run(model, ep.y, cfg.p_train, "prior", rng)
        train_rows.append(MetricRow(repeat, ep.label, "prior", evaluate_error(res, ep.x)))
        data = data.concat(extract_training_pairs(res, ep.y, model))
        params = mlp_train(params, data, cfg.train_cfg, rng).params
    rows = []
    for ep in test_eps:
        # both arms see the same randomness
        run_seed = int(rng.integers(0, 2**63))
        res = smc_run(model, ep.y, cfg.p_test, "prior", np.random.default_rng(run_seed))
        rows.append(MetricRow(repeat, ep.label, "prior", evaluate_error(res, ep.x)))
        if params is not None:
            res = smc_run(model, ep.y, cfg.p_test, DataDriven(params, cfg.p_mix), np.random.default_rng(run_seed))
            rows.append(MetricRow(repeat, ep.label, "data-driven", evaluate_error(res, ep.x)))
    return rows, train_rows, params


def run_pipeline(cfg: PipelineConfig, seed: int, jobs: int = 1, model: LgModel = LgModel()) -> PipelineResult:
    """All repeats; each gets its own spawned seed, so ``jobs`` does not change the numbers."""
    seeds = np.random.SeedSequence(seed).spawn(cfg.repeats)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(run_repeat, [cfg] * cfg.repeats, range(cfg.repeats), seeds, [model] * cfg.repeats))
    else:
        parts = [run_repeat(cfg, r, s, model) for r, s in enumerate(seeds)]
    return PipelineResult(
        [row for p in parts for row in p[0]],
        [row for p in parts for row in p[1]],
        [p[2] for p in parts],
    )
