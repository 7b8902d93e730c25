"""Distributed tracking of an i.i.d. Gaussian process with one-round consensus.

Every node runs its own copy of the Gibbs chain from the same seed, so all
nodes pick the same configuration without exchanging anything. Active nodes
form a local estimate from their own observation, inactive nodes fall back to
the prior mean, and a single mixing round ``X_hat = K_B X_bar`` over the network
produces the final estimates. On full-read slots a coordinating node refreshes
``f``, takes an SPSA step on ``K_{B(t)}`` and on ``theta``, and broadcasts the
results (optionally after a fixed delay).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .estimate import PosteriorCache, check_sparsity, log_likelihood
from .gibbs import GibbsChain
from .metrics import MetricsTrace
from .model import IidGaussianModel, Topology, popcounts, validate_topology
from .rng import GAIN, GIBBS, SPSA, Stream
from .sa import (Counters, StepSchedules, consensus_gain_spsa_step, lambda_step, theta_spsa_step,
                 validate_schedules)
from .source import IidSource


@dataclass
class _NodeView:
    """What one node knows: its chain, the multiplier and the last broadcast."""

    chain: GibbsChain
    lam: float
    f: list
    theta: np.ndarray
    cache: PosteriorCache
    gains: dict = field(default_factory=dict)


class DistributedIidTracker:
    def __init__(self, model: IidGaussianModel, topology: Topology | None = None,
                 schedules: StepSchedules | None = None, *, beta: float = 150.0, n_bar: float = 2,
                 gibbs_steps: int = 10, lambda0: float = 0.1,
                 lambda_bounds: tuple[float, float] | None = None, theta_init=None, seed: int = 0,
                 f_init: float = 0.0, initial_config: int = 0, learn_gains: bool = True,
                 learn_theta: bool = True, broadcast_delay: int = 0, validate: bool = True):
        n = model.n
        self.model = model
        self.topology = topology if topology is not None else Topology.line(n)
        if self.topology.n != n:
            raise ValueError("topology size does not match the number of sensors")
        validate_topology(self.topology)
        self.schedules = schedules or StepSchedules()
        if validate:
            validate_schedules(self.schedules, distributed=True)
        if not 0 <= n_bar <= n:
            raise ValueError(f"N_bar={n_bar} outside [0, {n}]")
        if broadcast_delay < 0:
            raise ValueError("broadcast delay must be nonnegative")
        self.beta = float(beta)
        self.n_bar = n_bar
        self.gibbs_steps = int(gibbs_steps)
        lo, hi = lambda_bounds if lambda_bounds is not None else (0.0, self.schedules.a0)
        self.lambda_bounds = (float(lo), float(hi))
        self.learn_gains = learn_gains
        self.learn_theta = learn_theta
        self.broadcast_delay = int(broadcast_delay)

        start = model.theta0 if theta_init is None else np.atleast_1d(np.asarray(theta_init, float))
        theta = model.clamp_theta(start.copy())
        lam = min(max(float(lambda0), lo), hi)

        # coordinator state: the authoritative copies of f, theta and K
        self.f = np.full(1 << n, float(f_init))
        self.theta = theta
        self.gains: dict[int, np.ndarray] = {}
        self.counters = Counters()
        self.spsa_stream = Stream(seed, SPSA)
        self.gain_stream = Stream(seed, GAIN)
        self._support = self.topology.support

        self.nodes = [
            _NodeView(GibbsChain(n, Stream(seed, GIBBS), initial_config), lam, self.f.tolist(),
                      theta.copy(), PosteriorCache(model, theta))
            for _ in range(n)
        ]
        self._pending: deque = deque()
        self.source = IidSource(model, seed)
        self._pop = popcounts(n).tolist()
        self.t = 0
        extra = [f"cfg_{k}" for k in range(n)] + [f"mse_{k}" for k in range(n)]
        self.trace = MetricsTrace(model.d, extra)

    def gain(self, index: int) -> np.ndarray:
        """Coordinator's current ``K_B``; identity until first updated."""
        K = self.gains.get(index)
        return np.eye(self.model.n) if K is None else K

    # -- estimation ------------------------------------------------------------

    @staticmethod
    def _initial_estimates(cache: PosteriorCache, index: int, z_flat: np.ndarray, n: int) -> np.ndarray:
        prior_mean = cache.entry(0)[0]
        rows = [cache.estimate(1 << k, z_flat) if index >> k & 1 else prior_mean for k in range(n)]
        return np.vstack(rows)

    def _y_k(self, cache: PosteriorCache, index: int, z_flat: np.ndarray, K: np.ndarray) -> float:
        """Network-average conditional MSE under configuration ``index`` and gain ``K``."""
        center = cache.estimate(index, z_flat)
        final = K @ self._initial_estimates(cache, index, z_flat, self.model.n)
        resid = final - center[None, :]
        return cache.trace(index) + float(np.mean(np.sum(resid * resid, axis=1)))

    # -- slot loop -----------------------------------------------------------------

    def _deliver(self, t: int) -> None:
        while self._pending and self._pending[0][0] <= t:
            _, f, theta, gains = self._pending.popleft()
            cache = PosteriorCache(self.model, theta)
            for node in self.nodes:
                node.f = list(f)
                node.theta = theta.copy()
                node.cache = cache
                node.gains.update({b: K.copy() for b, K in gains.items()})

    def step(self) -> int:
        t, s, m = self.t, self.schedules, self.model
        n = m.n
        self._deliver(t)
        states = [node.chain.sweep(node.f, node.lam, self.beta, self.gibbs_steps) for node in self.nodes]
        x, z = self.source.next()
        z_flat = z.reshape(-1)
        lam_t = self.nodes[0].lam
        theta_t = self.nodes[0].theta

        # each node k forms X_bar^{(k)}, then one mixing round with K_B
        xbar = np.vstack([
            self.nodes[k].cache.estimate(1 << k, z_flat) if states[k] >> k & 1
            else self.nodes[k].cache.entry(0)[0]
            for k in range(n)
        ])
        mse_nodes = []
        for k in range(n):
            node = self.nodes[k]
            K = node.gains.get(states[k])
            row = xbar[k] if K is None else K[k] @ xbar
            err = x - row
            mse_nodes.append(float(err @ err))
        active = self._pop[states[0]]
        lo, hi = self.lambda_bounds
        for k, node in enumerate(self.nodes):
            node.lam = lambda_step(node.lam, s.b(t), self._pop[states[k]], self.n_bar, lo, hi)

        extra = 0
        if s.full_read(t):
            extra = n
            self._learn(states[0], z, z_flat)
        extras = {f"cfg_{k}": states[k] for k in range(n)}
        extras.update({f"mse_{k}": mse_nodes[k] for k in range(n)})
        self.trace.append(t, float(np.mean(mse_nodes)), active, lam_t, theta_t, extra, **extras)
        self.t = t + 1
        return states[0]

    def _learn(self, index: int, z: np.ndarray, z_flat: np.ndarray) -> None:
        s, m = self.schedules, self.model
        nu = self.counters.tick()
        nu_b = self.counters.tick_config(index)
        cache = PosteriorCache(m, self.theta)
        y = np.array([self._y_k(cache, b, z_flat, self.gain(b)) for b in range(1 << m.n)])
        y = np.clip(y, 0.0, s.a0)
        self.f = np.clip(self.f + s.a.at_count(nu) * (y - self.f), 0.0, s.a0)
        changed = {}
        if self.learn_gains:
            K = self.gain(index)
            check_sparsity(K, self.topology)
            K = consensus_gain_spsa_step(
                K, s.b.at_count(nu_b), s.d.at_count(nu_b),
                lambda KK: self._y_k(cache, index, z_flat, KK), self._support, self.gain_stream, s.a0)
            self.gains[index] = K
            changed[index] = K
        if self.learn_theta:
            full = (1 << m.n) - 1
            self.theta = theta_spsa_step(
                self.theta, s.c.at_count(nu), s.d.at_count(nu),
                lambda th: log_likelihood(m, full, z, th), self.spsa_stream, m.theta_lo, m.theta_hi)
        self._pending.append((self.t + 1 + self.broadcast_delay, self.f.copy(), self.theta.copy(), changed))

    def run(self, slots: int) -> MetricsTrace:
        for _ in range(slots):
            self.step()
        return self.trace
