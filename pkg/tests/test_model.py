import numpy as np
import pytest
from hypothesis import given, strategies as st

from gibbstrack.errors import Asymmetric, ConfigError, Disconnected, SelfLoop
from gibbstrack.model import (Configuration, IidGaussianModel, MarkovChainModel, SensorModel, Topology,
                              paper_scalar_model, popcounts, sample_state, validate_topology)
from gibbstrack.oracle import stationary_distribution_power
from gibbstrack.presets import markov_instance
from gibbstrack.rng import Stream


def test_popcount_matches_configuration_exhaustively():
    for n in range(1, 11):
        pc = popcounts(n)
        for idx in range(1 << n):
            c = Configuration.from_index(idx, n)
            assert c.norm1 == pc[idx] == bin(idx).count("1")
            assert c.index == idx


@given(st.lists(st.integers(0, 1), min_size=1, max_size=12), st.data())
def test_bit_edits_round_trip(bits, data):
    c = Configuration(tuple(bits))
    j = data.draw(st.integers(0, len(bits) - 1))
    assert c.with_bit(j, 1).bits[j] == 1
    assert len(c.without(j)) == len(bits) - 1
    assert Configuration.from_index(c.index, c.n) == c


def test_configuration_rejects_non_binary():
    with pytest.raises(ValueError):
        Configuration((0, 2))


def test_scalar_draws_have_the_right_mean():
    m = paper_scalar_model([0.1, 0.2])
    s = Stream(0, "process")
    x = np.array([m.sample(s)[0] for _ in range(200_000)])
    # std of the sample mean is 0.5 / sqrt(n)
    assert abs(x.mean() - 0.5) < 3 * 0.5 / np.sqrt(x.size)
    assert abs(x.var() - 0.25) < 0.01


def test_iid_model_validation():
    with pytest.raises(ConfigError):
        paper_scalar_model([0.1], theta0=0.9)  # outside (0, 0.8)
    sensors = SensorModel(np.ones((1, 1, 1)), np.zeros((1, 1, 1)))
    with pytest.raises(ConfigError):
        IidGaussianModel(np.array([0.5]), np.array([0.0]), np.array([1.0]),
                         lambda th: np.array([th[0]]), lambda th: np.array([[0.0]]), sensors)


def test_zero_noise_observation_is_exact():
    m = paper_scalar_model([0.0, 0.3])
    s = Stream(1, "observation")
    assert m.observe(0, np.array([0.37]), s)[0] == 0.37


def test_observation_covariance_and_independence():
    R = np.array([[[0.04]], [[0.25]], [[0.09]]])
    sensors = SensorModel(np.ones((3, 1, 1)), R)
    s = Stream(2, "observation")
    x = np.array([0.0])
    z = np.array([sensors.observe_all(x, s)[:, 0] for _ in range(100_000)])
    cov = np.cov(z.T)
    assert np.allclose(np.diag(cov), R.ravel(), rtol=0.05)
    off = cov[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off) < 0.005)


def test_identity_chain_is_absorbing():
    m = MarkovChainModel(np.eye(4), np.zeros((2, 4)), np.full((2, 4), 0.1))
    s = Stream(0, "process")
    state = 1
    for _ in range(100):
        state = sample_state(m, s, state)
        assert state == 1


def test_markov_occupancy_matches_stationary():
    m = markov_instance(instance_seed=3)
    pi = stationary_distribution_power(m.A)
    assert np.allclose(pi, m.stationary(), atol=1e-10)
    s = Stream(5, "process")
    state = m.initial_state(s)
    counts = np.zeros(m.num_states)
    for _ in range(200_000):
        state = m.next_state(state, s)
        counts[state] += 1
    assert np.allclose(counts / counts.sum(), pi, atol=0.01)


def test_markov_zero_noise_returns_the_mean():
    means = np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])
    m = MarkovChainModel(np.eye(3), means, np.zeros((2, 3)))
    s = Stream(0, "observation")
    assert np.allclose(m.observe_all(2, s)[:, 0], [0.3, 0.6])


def test_markov_system_noise_covariance():
    m = markov_instance()
    a = m.A[:, 0]
    assert np.allclose(m.Q[0], np.diag(a) - np.outer(a, a))
    # H_k columns are the per-state means
    assert np.allclose(m.H[2][0], m.means[2, :, 0])


def test_row_stochastic_input_is_transposed():
    T = np.array([[0.9, 0.1], [0.3, 0.7]])
    m = MarkovChainModel.from_row_stochastic(T, np.zeros((1, 2)), np.ones((1, 2)))
    assert np.allclose(m.A, T.T)
    with pytest.raises(ConfigError):
        MarkovChainModel(T, np.zeros((1, 2)), np.ones((1, 2)))


def test_topology_validation():
    validate_topology(Topology.line(5))
    with pytest.raises(Disconnected):
        validate_topology(Topology.from_edges(4, [(0, 1), (2, 3)]))
    adj = np.zeros((3, 3), dtype=bool)
    adj[0, 0] = True
    with pytest.raises(SelfLoop):
        validate_topology(Topology(adj))
    adj = np.zeros((3, 3), dtype=bool)
    adj[0, 1] = adj[1, 2] = adj[2, 1] = True
    with pytest.raises(Asymmetric):
        validate_topology(Topology(adj))


def test_support_includes_diagonal_and_edges():
    t = Topology.line(4)
    assert t.support[0, 0] and t.support[0, 1] and not t.support[0, 2]
    assert t.edges == [(0, 1), (1, 2), (2, 3)]
