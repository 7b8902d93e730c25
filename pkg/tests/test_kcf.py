import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import minimize

from gibbstrack.kcf import (CentralKalmanTracker, KcfNodeState, KcfTracker, PerfectBlindTracker,
                            _FilterBank, kcf_update, perfect_blind_mse, simplex_project,
                            uniform_prior_covariance)
from gibbstrack.model import MarkovChainModel, Topology
from gibbstrack.oracle import exact_gibbs_distribution, total_variation
from gibbstrack.source import MarkovSource


def test_simplex_examples():
    assert np.allclose(simplex_project([2.0, 0.0, 0.0, 0.0]), [1, 0, 0, 0])
    assert np.allclose(simplex_project([0.5, 0.5, 0.5, -0.5]), [1 / 3, 1 / 3, 1 / 3, 0])
    assert np.allclose(simplex_project([0.1, 0.2, 0.3, 0.4]), [0.1, 0.2, 0.3, 0.4])


def test_simplex_matches_quadratic_program(rng):
    for _ in range(20):
        v = rng.normal(0, 2, 4)
        cons = ({"type": "eq", "fun": lambda x: x.sum() - 1.0},)
        res = minimize(lambda x: np.sum((x - v) ** 2), np.full(4, 0.25), bounds=[(0, None)] * 4,
                       constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        assert np.allclose(simplex_project(v), res.x, atol=1e-6)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-1e3, 1e3)))
def test_simplex_projection_properties(v):
    p = simplex_project(v)
    assert p.min() >= 0.0
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(simplex_project(p), p, atol=1e-12, rtol=0)


def test_simplex_rejects_nonfinite():
    with pytest.raises(ValueError):
        simplex_project([np.nan, 0.0])


def test_inactive_isolated_node_keeps_its_prior(markov_model):
    node = KcfNodeState.initial(4)
    out = kcf_update(node, markov_model, 0, np.zeros(1), [], active=False, consensus_gain=0.0)
    assert np.all(out.K == 0.0)
    assert np.allclose(out.post, node.prior)
    assert np.allclose(out.M, node.P)


def test_uniform_prior_covariance_is_the_belief_law():
    u = uniform_prior_covariance(3)
    assert np.allclose(u.sum(axis=0), 0.0)
    assert np.allclose(np.diag(u), 2 / 9)


def two_state_model(noise=1e-6):
    A = np.array([[0.9, 0.1], [0.1, 0.9]])
    return MarkovChainModel(A, np.array([[0.0, 1.0]]), np.array([[noise, noise]]))


def test_precise_sensor_concentrates_the_belief():
    m = two_state_model()
    src = MarkovSource(m, 0)
    node = KcfNodeState.initial(2)
    errs = []
    for _ in range(500):
        truth, z = src.next()
        node = kcf_update(node, m, 0, z[0], [], active=True, consensus_gain=0.0)
        errs.append(np.sum((node.post - np.eye(2)[truth]) ** 2))
    assert np.mean(errs[50:]) < 1e-3


def test_batched_bank_matches_reference(markov_model, rng):
    topo = Topology.line(markov_model.n, 0.1)
    bank = _FilterBank(markov_model, topo)
    nodes = [KcfNodeState.initial(4) for _ in range(markov_model.n)]
    src = MarkovSource(markov_model, 3)
    for _ in range(30):
        _, z = src.next()
        active = rng.random(markov_model.n) < 0.5
        priors = [nd.prior for nd in nodes]
        nodes = [kcf_update(nodes[k], markov_model, k, z[k], [priors[j] for j in topo.neighbors(k)],
                            bool(active[k]), 0.1) for k in range(markov_model.n)]
        bank.update(active, z)
        for k in range(markov_model.n):
            assert np.allclose(bank.post[k], nodes[k].post, atol=1e-10)
            assert np.allclose(bank.M[k], nodes[k].M, atol=1e-10)
            assert np.allclose(bank.prior[k], nodes[k].prior, atol=1e-10)


def test_tracker_beliefs_stay_on_simplex(markov_model):
    tr = KcfTracker(markov_model, seed=1)
    for _ in range(2000):
        tr.step()
        post = tr.filters.post
        assert post.min() >= 0.0
        assert np.allclose(post.sum(axis=1), 1.0, atol=1e-12)
    trace = tr.trace
    for k in range(markov_model.n):
        assert np.all(np.isfinite(trace.column(f"trM_{k}")))
    cfg = np.array([trace.column(f"cfg_{k}") for k in range(markov_model.n)])
    assert np.all(cfg == cfg[0])
    assert trace.column("lambda").min() >= 0.0 and trace.column("lambda").max() <= 7.5


def test_pinned_energies_give_the_gibbs_marginal(markov_model, rng):
    f = rng.uniform(0, 1, 32)
    lam, beta = 0.2, 3.0
    tr = KcfTracker(markov_model, seed=2, f_table=f, learn_f=False, lambda0=lam,
                    lambda_bounds=(lam, lam), beta=beta, gibbs_steps=10)
    trace = tr.run(12_000)
    counts = np.bincount(trace.column("cfg_0")[500:], minlength=32)
    exact = exact_gibbs_distribution(f, lam, beta).probs
    assert total_variation(counts / counts.sum(), exact) < 0.06


def test_f_learning_uses_lagged_reports(markov_model):
    tr = KcfTracker(markov_model, seed=4)
    tr.run(20)
    assert tr.counters.nu == 0 and np.all(tr.f == 0.0)
    tr.run(1)
    assert tr.counters.nu == 1
    assert np.count_nonzero(tr.f) == 1


def test_perfect_blind_matches_analytic(markov_model):
    trace = PerfectBlindTracker(markov_model, seed=0).run(60_000)
    assert trace.column("mse").mean() == pytest.approx(perfect_blind_mse(markov_model), rel=0.03)


def test_central_kalman_is_projected_and_deterministic(markov_model):
    a = CentralKalmanTracker(markov_model, seed=5)
    for _ in range(300):
        a.step()
        assert a.post.min() >= 0.0 and a.post.sum() == pytest.approx(1.0)
    b = CentralKalmanTracker(markov_model, seed=5).run(300)
    assert np.array_equal(a.trace.column("mse"), b.column("mse"))
    assert np.all(b.column("active") == 2)
