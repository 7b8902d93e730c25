"""Instance generators for the two reference experiments."""
from __future__ import annotations

import numpy as np

from .model import IidGaussianModel, MarkovChainModel, Topology, paper_scalar_model

IID_DEFAULTS = {
    "n": 5, "noise_std_range": [0.0, 0.5], "theta0": 0.5, "theta_box": [0.0, 0.8],
    "instance_seed": 0,
}
IID_THETA_INIT = 0.2
# projection ceilings: ten times the prior trace (0.25 scalar variance, 0.75 for a
# uniform belief over four states)
IID_A0 = 2.5
MARKOV_A0 = 7.5
MARKOV_DEFAULTS = {
    "n": 5, "num_states": 4, "consensus_gain": 0.1, "mean_range": [0.0, 1.0],
    "noise_scale": 0.05, "instance_seed": 0,
}


def iid_instance(n: int = 5, noise_std_range=(0.0, 0.5), theta0: float = 0.5,
                 theta_box=(0.0, 0.8), instance_seed: int = 0) -> IidGaussianModel:
    """Scalar Gaussian target with per-sensor noise std drawn uniformly."""
    rng = np.random.default_rng(instance_seed)
    std = rng.uniform(noise_std_range[0], noise_std_range[1], size=n)
    return paper_scalar_model(std, theta0=theta0, box=tuple(theta_box))


def markov_instance(n: int = 5, num_states: int = 4, mean_range=(0.0, 1.0), noise_scale: float = 0.05,
                    instance_seed: int = 0) -> MarkovChainModel:
    """Random row-stochastic transition matrix, uniform observation means and
    state-distance-dependent scalar noise ``noise_scale * (1 + |k - i|)``."""
    rng = np.random.default_rng(instance_seed)
    transition = rng.dirichlet(np.ones(num_states), size=num_states)
    means = rng.uniform(mean_range[0], mean_range[1], size=(n, num_states))
    k = np.arange(n)[:, None]
    i = np.arange(num_states)[None, :]
    covs = noise_scale * (1.0 + np.abs(k - i))
    return MarkovChainModel.from_row_stochastic(transition, means, covs)


def markov_topology(n: int = 5, consensus_gain: float = 0.1) -> Topology:
    return Topology.line(n, consensus_gain)
