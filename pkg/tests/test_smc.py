import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampler_smith.smc import (
    GRID,
    HISTORY,
    DataDriven,
    Episode,
    LgModel,
    MlpParams,
    PipelineConfig,
    TrainConfig,
    TrainingSet,
    episode_set,
    evaluate_error,
    extract_training_pairs,
    gen_episode,
    kalman_filter_smoother,
    latent_window,
    mixture_logpdf,
    mixture_proposal,
    mlp_forward,
    mlp_init,
    mlp_train,
    obs_windows,
    run_pipeline,
    smc_run,
    square,
    weighted_nll,
)

# -- episodes ---------------------------------------------------------------


def test_grid():
    assert len(GRID) == 199
    assert GRID[0] == 1.0 and GRID[-1] == 100.0


def test_noiseless_episode_values():
    e = gen_episode("sin", -1.0, 0.0, None)
    assert e.y[0] == 0.0
    assert gen_episode("square", -1.0, 0.0, None).y[0] == 1.0
    assert square(np.array([0.5, 4.0])).tolist() == [1.0, -1.0]


def test_episode_sets():
    rng = np.random.default_rng(0)
    assert len(episode_set("step", "train", 0.1, rng)) == 9
    assert len(episode_set("smooth", "train", 0.1, rng)) == 8
    assert len(episode_set("step", "test", 0.1, rng)) == 4
    e = episode_set("smooth", "test", 0.1, rng)[0]
    assert 0.05 < np.std(e.y - e.x) < 0.15


def test_episode_csv_round_trip():
    e = gen_episode("sin", 0.3, 0.1, np.random.default_rng(1))
    buf = io.StringIO()
    e.to_csv(buf, ["seed=1"])
    buf.seek(0)
    back = Episode.from_csv(buf)
    assert np.array_equal(back.t, e.t) and np.array_equal(back.y, e.y) and np.array_equal(back.x, e.x)


def test_episode_validation():
    with pytest.raises(ValueError):
        Episode("bad", np.array([1.0, 1.0]), None, np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        Episode("bad", np.array([1.0, 2.0]), None, np.array([0.0]))


# -- Kalman oracle ----------------------------------------------------------


def test_kalman_first_step_gain():
    k = kalman_filter_smoother(LgModel(), [1.0])
    assert k.filt_mean[0] == pytest.approx(0.99751, abs=1e-5)
    assert k.filt_mean[0] == pytest.approx(4 / 4.01, abs=1e-15)


def test_kalman_zero_noise_limit():
    ys = np.array([0.3, -0.2, 0.5])
    k = kalman_filter_smoother(LgModel(obs_sd=1e-9), ys)
    assert np.allclose(k.filt_mean, ys, atol=1e-9)


def test_smoothing_variance_never_exceeds_filtering_variance():
    _, ys = LgModel().simulate(50, np.random.default_rng(2))
    k = kalman_filter_smoother(LgModel(), ys)
    assert (k.smooth_var <= k.filt_var + 1e-15).all()
    assert k.smooth_var[-1] == k.filt_var[-1]


# -- particle filter --------------------------------------------------------


def test_single_particle():
    _, ys = LgModel().simulate(20, np.random.default_rng(3))
    res = smc_run(LgModel(), ys, 1, "prior", np.random.default_rng(0))
    assert (res.weights == 1.0).all()
    assert (res.ess == 1.0).all()


def test_weights_normalized_and_ess_bounded():
    _, ys = LgModel().simulate(40, np.random.default_rng(4))
    res = smc_run(LgModel(), ys, 50, "prior", np.random.default_rng(1))
    assert np.allclose(res.weights.sum(axis=1), 1.0, atol=1e-12)
    assert ((res.ess >= 1 - 1e-9) & (res.ess <= 50 + 1e-9)).all()


def test_bootstrap_filter_tracks_kalman():
    model = LgModel()
    _, ys = model.simulate(60, np.random.default_rng(5))
    res = smc_run(model, ys, 2000, "prior", np.random.default_rng(2))
    k = kalman_filter_smoother(model, ys)
    assert np.max(np.abs(res.filtering_means() - k.filt_mean)) < 0.03


def test_smc_is_deterministic():
    _, ys = LgModel().simulate(30, np.random.default_rng(6))
    a = smc_run(LgModel(), ys, 20, "prior", np.random.default_rng(9))
    b = smc_run(LgModel(), ys, 20, "prior", np.random.default_rng(9))
    assert a.particles.tobytes() == b.particles.tobytes()


def test_prior_clone_network_reproduces_bootstrap_weights():
    model = LgModel(init_sd=0.1, trans_sd=0.1)
    _, ys = model.simulate(30, np.random.default_rng(7))

    def clone(feats):
        return feats[:, HISTORY - 1], np.full(len(feats), model.trans_sd)

    a = smc_run(model, ys, 25, "prior", np.random.default_rng(3))
    b = smc_run(model, ys, 25, DataDriven(clone, 0.7), np.random.default_rng(3))
    assert np.allclose(a.particles, b.particles, atol=1e-12)
    assert np.allclose(a.weights, b.weights, atol=1e-10)


def test_unknown_proposal_and_zero_particles():
    with pytest.raises(ValueError):
        smc_run(LgModel(), [0.0], 5, "nope", np.random.default_rng(0))
    with pytest.raises(ValueError):
        smc_run(LgModel(), [0.0], 0, "prior", np.random.default_rng(0))


# -- mixture proposal -------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(
    mu=st.floats(-3, 3),
    sigma=st.floats(0.05, 2),
    p=st.floats(0, 1),
    pm=st.floats(-3, 3),
    ps=st.floats(0.05, 2),
)
def test_mixture_density_integrates_to_one(mu, sigma, p, pm, ps):
    x = np.linspace(-20, 20, 400_001)
    dens = np.exp(mixture_logpdf(x, mu, sigma, p, pm, ps))
    assert np.trapezoid(dens, x) == pytest.approx(1.0, abs=1e-4)


def test_mixture_extremes():
    z = np.array([0.5, -1.0])
    u = np.array([0.2, 0.9])

    def net(f):
        return np.full(len(f), 5.0), np.full(len(f), 0.5)

    feats = np.zeros((2, 2 * HISTORY))
    x, lq = mixture_proposal(feats, net, 0.0, 1.0, 2.0, z, u)
    assert x.tolist() == [2.0, -1.0]
    assert np.allclose(lq, -0.5 * ((x - 1) / 2) ** 2 - math.log(2) - 0.5 * math.log(2 * math.pi))
    x, lq = mixture_proposal(feats, net, 1.0, 1.0, 2.0, z, u)
    assert x.tolist() == [5.25, 4.5]
    with pytest.raises(ValueError):
        mixture_proposal(feats, net, 1.5, 1.0, 2.0, z, u)


# -- network ----------------------------------------------------------------


def test_mlp_forward_examples():
    p = mlp_init(np.random.default_rng(0))
    assert p.sizes == (20, 25, 2)
    zero = MlpParams(p.W1 * 0, p.b1 * 0, p.W2 * 0, p.b2 * 0)
    mu, sigma = mlp_forward(zero, np.ones(20))
    assert mu == 0.0 and sigma == 1.0
    zero.b2[:] = [1.5, math.log(0.2)]
    mu, sigma = mlp_forward(zero, np.ones((3, 20)))
    assert np.allclose(mu, 1.5) and np.allclose(sigma, 0.2)


def test_mlp_dict_round_trip():
    p = mlp_init(np.random.default_rng(1))
    back = MlpParams.from_dict(json.loads(json.dumps(p.to_dict())))
    assert np.array_equal(back.flat(), p.flat())
    d = p.to_dict()
    d["sizes"] = [20, 25, 3]
    with pytest.raises(ValueError):
        MlpParams.from_dict(d)


@pytest.mark.parametrize("seed", range(6))
def test_training_on_constant_responses_learns_the_constant(seed):
    # the optimum has sigma -> 0, so the step must be small enough to stay stable there
    rng = np.random.default_rng(seed)
    X = np.zeros((200, 20))
    data = TrainingSet(X, np.full(200, 0.7), np.ones(200))
    res = mlp_train(mlp_init(rng), data, TrainConfig(lr=5e-4, epochs=400), rng)
    mu, sigma = mlp_forward(res.params, X[:1])
    assert abs(mu[0] - 0.7) < 1e-2
    assert sigma[0] < 0.15
    assert res.losses[-1] < res.losses[0]


def test_zero_epochs_returns_initial_params():
    rng = np.random.default_rng(3)
    p = mlp_init(rng)
    data = TrainingSet(np.zeros((4, 20)), np.zeros(4), np.ones(4))
    res = mlp_train(p, data, TrainConfig(epochs=0), rng)
    assert np.array_equal(res.params.flat(), p.flat())
    with pytest.raises(ValueError):
        mlp_train(p, TrainingSet.empty(), TrainConfig(), rng)


def test_duplicate_pairs_equal_doubled_weights():
    rng = np.random.default_rng(4)
    p = mlp_init(rng)
    X, y = rng.normal(size=(5, 20)), rng.normal(size=5)
    dup = weighted_nll(p, np.vstack([X, X[:1]]), np.append(y, y[0]), np.ones(6))
    w = np.ones(5)
    w[0] = 2
    assert dup == pytest.approx(weighted_nll(p, X, y, w), rel=1e-12)


# -- training pairs ---------------------------------------------------------


def test_first_step_features_are_padded():
    ys = np.arange(1.0, 15.0)
    assert obs_windows(ys)[0].tolist() == [1.0] * HISTORY
    assert obs_windows(ys)[3].tolist() == [1.0] * 7 + [2.0, 3.0, 4.0]
    assert latent_window(np.ones((2, 14)), 0, -0.5).tolist() == [[-0.5] * HISTORY] * 2


def test_training_pair_weights_sum_to_one_per_step():
    model = LgModel()
    _, ys = model.simulate(25, np.random.default_rng(8))
    res = smc_run(model, ys, 30, "prior", np.random.default_rng(4))
    data = extract_training_pairs(res, ys, model)
    assert data.features.shape[1] == 2 * HISTORY
    # pairs are grouped by step; each step's weights add up to one
    assert data.weights.sum() == pytest.approx(25.0, abs=1e-9)
    assert len(data) <= 25 * 30


# -- metrics and pipeline ---------------------------------------------------


def test_evaluate_error():
    model = LgModel()
    _, ys = model.simulate(10, np.random.default_rng(9))
    res = smc_run(model, ys, 5, "prior", np.random.default_rng(0))
    est = res.filtering_means()
    assert evaluate_error(res, est) == 0.0
    assert evaluate_error(res, est + 0.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        evaluate_error(res, est[:-1])


SMALL = PipelineConfig(p_train=5, p_test=5, repeats=2, train_cfg=TrainConfig(epochs=1))


def test_pipeline_shape_and_determinism():
    a = run_pipeline(SMALL, 11)
    b = run_pipeline(SMALL, 11)
    assert len(a.rows) == 2 * 8 * 2
    assert [r.mae for r in a.rows] == [r.mae for r in b.rows]
    assert {r.proposal for r in a.rows} == {"prior", "data-driven"}
    assert len(a.summary()) == 16


def test_pipeline_without_training_episodes():
    cfg = PipelineConfig(train=(), test=("smooth",), p_test=5, repeats=1)
    res = run_pipeline(cfg, 0)
    assert {r.proposal for r in res.rows} == {"prior"}
    assert res.params == [None]
    assert res.train_rows == []


def test_pipeline_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(train=("jagged",))
    with pytest.raises(ValueError):
        PipelineConfig(p_mix=2.0)
