import math

import numpy as np
import pytest

from gibbstrack.errors import InfeasibleCardinality, InvalidSchedule, MissingEnergy
from gibbstrack.gibbs import (BetaSchedule, EnergyTable, GibbsChain, annealed_beta,
                              conditional_activation_probability, delta_upper_bound, gibbs_step,
                              hard_constraint_step)
from gibbstrack.model import popcounts
from gibbstrack.oracle import exact_gibbs_distribution, total_variation
from gibbstrack.rng import Stream


def test_activation_probability_examples():
    flat = EnergyTable(np.array([0.3, 0.3]), 0.0)
    assert conditional_activation_probability(flat, 0, 0, 5.0) == 0.5
    table = EnergyTable(np.array([1.0, 0.0]), 0.0)
    assert conditional_activation_probability(table, 0, 0, 0.0) == 0.5
    assert math.isclose(conditional_activation_probability(table, 0, 0, math.log(3)), 0.75, rel_tol=1e-12)


def test_large_beta_does_not_overflow():
    table = EnergyTable(np.array([1.0, 0.0]), 0.0)
    assert conditional_activation_probability(table, 0, 0, 1e6) == 1.0
    assert conditional_activation_probability(EnergyTable(np.array([0.0, 1.0])), 0, 0, 1e6) == 0.0


def test_missing_energy_raises():
    table = EnergyTable(np.array([0.0, np.nan]))
    with pytest.raises(MissingEnergy):
        conditional_activation_probability(table, 0, 0, 1.0)
    with pytest.raises(MissingEnergy):
        GibbsChain(1, Stream(0, "gibbs")).step(table, 1.0, 10)


def test_two_state_long_run_frequency():
    table = EnergyTable(np.array([1.0, 0.0]), 0.0)
    chain = GibbsChain(1, Stream(4, "gibbs"))
    hits = 0
    runs = 200_000
    for _ in range(runs):
        hits += gibbs_step(chain, table, math.log(3)).index
    assert abs(hits / runs - 0.75) < 0.005


def test_empirical_law_matches_exact(rng):
    f = rng.uniform(0, 1, 8)
    table = EnergyTable(f, 0.2)
    chain = GibbsChain(3, Stream(9, "gibbs"))
    counts = np.zeros(8)
    fl = f.tolist()
    for _ in range(100_000):
        counts[chain.sweep(fl, 0.2, 2.0, 1)] += 1
    exact = exact_gibbs_distribution(f, 0.2, 2.0).probs
    assert total_variation(counts / counts.sum(), exact) < 0.01


def test_identical_seeds_identical_paths(rng):
    f = rng.uniform(0, 1, 16).tolist()
    a, b = GibbsChain(4, Stream(3, "gibbs")), GibbsChain(4, Stream(3, "gibbs"))
    assert [a.sweep(f, 0.1, 10.0, 3) for _ in range(2000)] == [b.sweep(f, 0.1, 10.0, 3) for _ in range(2000)]


def test_beta_schedules():
    s = BetaSchedule("logarithmic", 0.5, n=2, delta=0.5)
    assert annealed_beta(s, 0) == 0.0
    assert math.isclose(s(math.e ** 2 - 1), 1.0, rel_tol=1e-12)
    with pytest.raises(InvalidSchedule):
        BetaSchedule("logarithmic", 0.4, n=3, delta=1.0)  # beta0 * N * delta = 1.2
    with pytest.raises(InvalidSchedule):
        BetaSchedule("geometric", 1.0)
    assert BetaSchedule("fixed", 3.0)(1000) == 3.0
    assert delta_upper_bound(2.5, 1.0, 5) == 7.5


def test_hard_step_full_slice_is_frozen():
    table = EnergyTable(np.zeros(8))
    chain = GibbsChain(3, Stream(0, "gibbs"), initial=7)
    for _ in range(50):
        assert hard_constraint_step(chain, table, 1.0, 3).index == 7
    with pytest.raises(InfeasibleCardinality):
        chain.hard_step(table, 1.0, 4)


def test_hard_step_matches_restricted_law():
    f = np.array([0.0, 0.1, 0.5, 0.0, 0.9, 0.0, 0.0, 0.0])
    table = EnergyTable(f)
    chain = GibbsChain(3, Stream(1, "gibbs"), initial=1)
    feasible = [1, 2, 4]
    counts = dict.fromkeys(feasible, 0)
    beta = 3.0
    for _ in range(60_000):
        counts[chain.hard_step(table, beta, 1).index] += 1
    w = np.exp(-beta * f[feasible])
    exact = w / w.sum()
    emp = np.array([counts[b] for b in feasible]) / 60_000
    assert np.allclose(emp, exact, atol=0.01)


def test_hard_step_preserves_cardinality(rng):
    f = rng.uniform(0, 1, 32)
    table = EnergyTable(f)
    chain = GibbsChain(5, Stream(2, "gibbs"), initial=0b00111)
    pc = popcounts(5)
    for _ in range(10_000):
        assert pc[chain.hard_step(table, 5.0, 3).index] == 3
