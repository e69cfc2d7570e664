"""Loss terms against independent oracles, episode accounting, determinism."""

import numpy as np
import pytest
from scipy import integrate

import kgnp.autodiff as ad
from kgnp.autodiff import Tensor, adam_step, backward
from kgnp.config import TrainConfig
from kgnp.errors import DataError, UsageError
from kgnp.hypothesis import HypothesisDistribution
from kgnp.model import Model, ModelDims
from kgnp.tasks import EpisodeRng, sample_task
from kgnp.training import (episode_loss, extract_episode_subgraphs, gaussian_kl,
                           margin_ranking_loss, mask_kl, train)
from kgnp.kg import add_inverse_edges, build_graph

from conftest import random_graph


def dist(mu, sigma, source="prior"):
    return HypothesisDistribution(Tensor(np.atleast_1d(np.asarray(mu, dtype=float))),
                                  Tensor(np.atleast_1d(np.asarray(sigma, dtype=float))),
                                  source)


def kl_quadrature(mu_q, s_q, mu_p, s_p):
    """1-D numerical integration oracle for the Gaussian KL.

    Works in log space so the density ratio never under/overflows."""
    def log_density(x, mu, s):
        return -(x - mu) ** 2 / (2 * s ** 2) - np.log(np.sqrt(2 * np.pi) * s)

    def integrand(x):
        lq = log_density(x, mu_q, s_q)
        return np.exp(lq) * (lq - log_density(x, mu_p, s_p))

    lo, hi = mu_q - 14 * s_q, mu_q + 14 * s_q
    val, _ = integrate.quad(integrand, lo, hi, limit=300)
    return val


def test_gaussian_kl_self_is_exactly_zero():
    d = dist([0.3, -1.2], [0.4, 0.9])
    same = dist([0.3, -1.2], [0.4, 0.9])
    assert float(gaussian_kl(d, same).data) == 0.0


def test_gaussian_kl_reference_value():
    q = dist(1.0, 0.5)
    p = dist(0.0, 1.0)
    assert float(gaussian_kl(q, p).data) == pytest.approx(0.8181, abs=1e-4)
    assert float(gaussian_kl(q, p).data) == pytest.approx(kl_quadrature(1.0, 0.5, 0.0, 1.0),
                                                          abs=1e-6)


def test_gaussian_kl_matches_quadrature_on_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        mu_q, mu_p = rng.uniform(-3, 3, 2)
        s_q, s_p = rng.uniform(0.15, 2.0, 2)
        got = float(gaussian_kl(dist(mu_q, s_q), dist(mu_p, s_p)).data)
        assert got == pytest.approx(kl_quadrature(mu_q, s_q, mu_p, s_p), abs=1e-4)
        assert got >= 0.0


def test_gaussian_kl_nonnegative_sweep():
    rng = np.random.default_rng(1)
    for _ in range(10000):
        q = dist(rng.uniform(-5, 5, 3), rng.uniform(0.1, 2.0, 3))
        p = dist(rng.uniform(-5, 5, 3), rng.uniform(0.1, 2.0, 3))
        assert float(gaussian_kl(q, p).data) >= 0.0


def bernoulli_kl(p, tau):
    out = 0.0
    if p > 0:
        out += p * np.log(p / tau)
    if p < 1:
        out += (1 - p) * np.log((1 - p) / (1 - tau))
    return out


def test_mask_kl_reference_values():
    assert float(mask_kl([Tensor(np.asarray(0.9))], 0.7).data) == \
        pytest.approx(0.1163, abs=1e-4)
    # matched marginal is exactly zero
    assert float(mask_kl([Tensor(np.asarray(0.7))], 0.7).data) == 0.0
    rng = np.random.default_rng(2)
    for _ in range(300):
        p = float(rng.uniform(0, 1))
        tau = float(rng.uniform(0.05, 0.95))
        got = float(mask_kl([Tensor(np.asarray(p))], tau).data)
        assert got == pytest.approx(bernoulli_kl(p, tau), abs=1e-6)


def test_mask_kl_guards_and_errors():
    assert np.isfinite(float(mask_kl([Tensor(np.asarray(1.0))], 0.001).data))
    assert np.isfinite(float(mask_kl([Tensor(np.asarray(0.0))], 0.999).data))
    assert float(mask_kl([], 0.7).data) == 0.0
    with pytest.raises(UsageError):
        mask_kl([Tensor(np.asarray(0.5))], 1.0)


def test_margin_ranking_loss_values():
    pos = [Tensor(np.asarray(0.9))]
    neg = [Tensor(np.asarray(0.2))]
    assert float(margin_ranking_loss(pos, neg, 1.0).data) == pytest.approx(0.3)
    satisfied = margin_ranking_loss([Tensor(np.asarray(1.0))], [Tensor(np.asarray(-0.5))], 1.0)
    assert float(satisfied.data) == 0.0
    with pytest.raises(DataError):
        margin_ranking_loss([], [], 1.0)


# --- episode-level behavior ---------------------------------------------------

def planted_setup(seed=0, n_rel=3, n_nodes=20, n_edges=40):
    rng = np.random.default_rng(seed)
    kg = add_inverse_edges(random_graph(rng, n_nodes, n_edges, n_relations=n_rel))
    pool = [tr for tr in kg.triples if tr.relation == 0][:8]
    return kg, pool


def test_episode_loss_decomposition_and_counters():
    kg, pool = planted_setup()
    cfg = TrainConfig(d_edge=4, d_z=3, L=2, K=2, lr=1e-3, max_queries=2)
    model = Model(kg.relation_names, ModelDims(4, 3, 2), init_seed=0)
    task = sample_task(kg, 0, pool, cfg.K, EpisodeRng(1), max_queries=cfg.max_queries)
    total, rep = episode_loss(kg, task, model, cfg, EpisodeRng(2))
    assert rep.total == pytest.approx(rep.ranking + cfg.w_z * rep.kl_z
                                      + cfg.w_mask * rep.kl_mask)
    n_q = len(task.queries) + sum(len(n) for n in task.query_negatives)
    assert rep.encoder_calls_support == (1 + 1) * cfg.K  # (n+1) * K with n = 1
    assert rep.encoder_calls_query == (1 + cfg.T) * n_q


def test_episode_loss_zero_params_gives_margin_per_pair():
    kg, pool = planted_setup(3)
    cfg = TrainConfig(d_edge=4, d_z=3, L=1, K=2, max_queries=3)
    model = Model(kg.relation_names, ModelDims(4, 3, 1), init_seed=0)
    for _, t in model.store.named():
        t.data[:] = 0.0
    task = sample_task(kg, 0, pool, cfg.K, EpisodeRng(4), max_queries=cfg.max_queries)
    total, rep = episode_loss(kg, task, model, cfg, EpisodeRng(5))
    assert rep.ranking == pytest.approx(cfg.margin * rep.n_pairs)


def test_kl_z_is_zero_when_posterior_inputs_equal_prior_inputs():
    from kgnp.encoder import encode_subgraph
    from kgnp.hypothesis import encode_hypothesis, sample_hypothesis
    kg, pool = planted_setup(6)
    model = Model(kg.relation_names, ModelDims(4, 3, 1), init_seed=1)
    cfg = TrainConfig(d_edge=4, d_z=3, L=1, K=2)
    task = sample_task(kg, 0, pool, cfg.K, EpisodeRng(7))
    subs = extract_episode_subgraphs(kg, task, cfg.k)
    pairs = [(encode_subgraph(s, model.table, model.gnn), 1) for s in subs["support"]]
    pairs += [(encode_subgraph(s, model.table, model.gnn), 0) for s in subs["support_neg"]]
    prior = encode_hypothesis(pairs, model.hyp, "prior")
    post = encode_hypothesis(pairs, model.hyp, "posterior")
    assert float(gaussian_kl(post, prior).data) == 0.0


def test_episode_loss_frozen_noise_is_bit_identical():
    kg, pool = planted_setup(8)
    cfg = TrainConfig(d_edge=4, d_z=3, L=2, K=2, max_queries=2)
    model = Model(kg.relation_names, ModelDims(4, 3, 2), init_seed=2)
    task = sample_task(kg, 0, pool, cfg.K, EpisodeRng(9), max_queries=2)

    def run():
        model.store.zero_grad()
        total, rep = episode_loss(kg, task, model, cfg, EpisodeRng(10))
        backward(total)
        grads = {name: t.grad.copy() for name, t in model.store.named() if t.grad is not None}
        return rep.total, grads

    t1, g1 = run()
    t2, g2 = run()
    assert t1 == t2
    assert g1.keys() == g2.keys()
    for name in g1:
        assert np.array_equal(g1[name], g2[name])


def test_episode_loss_gradient_matches_finite_differences():
    kg, pool = planted_setup(11)
    cfg = TrainConfig(d_edge=3, d_z=3, L=1, K=2, max_queries=2)
    model = Model(kg.relation_names, ModelDims(3, 3, 1), init_seed=3)
    task = sample_task(kg, 0, pool, cfg.K, EpisodeRng(12), max_queries=2)

    def loss_value():
        total, _ = episode_loss(kg, task, model, cfg, EpisodeRng(13))
        return total

    model.store.zero_grad()
    backward(loss_value())
    rng = np.random.default_rng(14)
    names = [name for name, _ in model.store.named()]
    h = 1e-5
    checked = 0
    for _ in range(10):
        name = names[int(rng.integers(len(names)))]
        tensor = model.store[name]
        flat = tensor.data.ravel()
        i = int(rng.integers(flat.size))
        keep = flat[i]
        flat[i] = keep + h
        up = float(loss_value().data)
        flat[i] = keep - h
        down = float(loss_value().data)
        flat[i] = keep
        numeric = (up - down) / (2 * h)
        analytic = 0.0 if tensor.grad is None else tensor.grad.ravel()[i]
        assert abs(numeric - analytic) <= 1e-4 * max(1.0, abs(numeric), abs(analytic)), \
            (name, i, numeric, analytic)
        checked += 1
    assert checked == 10


def test_monte_carlo_T_consistency():
    """The T-averaged ranking term estimates the same expectation for T in {1, 4}."""
    kg, pool = planted_setup(15)
    model = Model(kg.relation_names, ModelDims(4, 3, 1), init_seed=4)
    task = sample_task(kg, 0, pool, 2, EpisodeRng(16), max_queries=2)

    def mean_ranking(T, trials=200):
        cfg = TrainConfig(d_edge=4, d_z=3, L=1, K=2, T=T, max_queries=2)
        vals = [episode_loss(kg, task, model, cfg, EpisodeRng(17).child(t))[1].ranking
                for t in range(trials)]
        return np.mean(vals), np.std(vals) / np.sqrt(trials)

    m1, e1 = mean_ranking(1)
    m4, e4 = mean_ranking(4)
    assert abs(m1 - m4) < 4 * np.sqrt(e1 ** 2 + e4 ** 2) + 1e-3


def test_train_smoke_determinism_and_artifacts(tmp_path):
    kg, pool = planted_setup(18, n_nodes=15, n_edges=30)
    cfg = TrainConfig(d_edge=4, d_z=3, L=1, K=2, lr=1e-3, max_epochs=6, val_every=100,
                      max_queries=2)

    def run(out):
        res = train(kg, [(0, pool)], cfg, out_dir=tmp_path / out)
        return (tmp_path / out / "checkpoint.json").read_bytes()

    assert run("a") == run("b")


def test_train_aborts_on_non_finite_loss():
    from kgnp.errors import NumericError
    kg, pool = planted_setup(19)
    cfg = TrainConfig(d_edge=4, d_z=3, L=1, K=2, lr=1e-3, max_epochs=2, max_queries=2)
    model = Model(kg.relation_names, ModelDims(4, 3, 1), init_seed=5)
    model.store["score_head.weight"].data[:] = np.nan
    with pytest.raises(NumericError, match="episode 0"):
        train(kg, [(0, pool)], cfg, model=model)
