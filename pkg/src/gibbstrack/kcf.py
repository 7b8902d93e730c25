"""Distributed tracking of a finite-state Markov chain by Kalman-consensus filtering.

Beliefs are probability vectors over the chain's states. Each node keeps a
prior belief, a posterior belief and two covariance proxies ``P`` (prior error)
and ``M`` (posterior error). Sensor subsets come from shared-seed Gibbs chains
whose energy table is learned from the network-average ``Tr(M)`` reported one
period earlier.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import SingularInnovation
from .gibbs import GibbsChain
from .metrics import MetricsTrace
from .model import MarkovChainModel, Topology, popcounts, validate_topology
from .presets import MARKOV_A0
from .rng import GIBBS, Stream
from .sa import Counters, StepSchedules, lambda_step, validate_schedules
from .source import MarkovSource


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (rows, if 2-D).

    Sort descending, find the largest ``rho`` with ``u_rho > (cumsum_rho - 1) / rho``
    and subtract that threshold.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("simplex projection needs a finite vector")
    flat = v.reshape(-1, v.shape[-1])
    u = -np.sort(-flat, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ks = np.arange(1, flat.shape[1] + 1)
    cond = u - css / ks > 0
    rho = flat.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(flat.shape[0]), rho] / (rho + 1)
    out = np.maximum(flat - tau[:, None], 0.0)
    # subtracting tau from large entries loses digits; spread the residual over the support
    support = out > 0
    out += np.where(support, (1.0 - out.sum(axis=1, keepdims=True)) / support.sum(axis=1, keepdims=True), 0.0)
    return np.maximum(out, 0.0).reshape(v.shape)


def uniform_prior_covariance(num_states: int) -> np.ndarray:
    u = np.full(num_states, 1.0 / num_states)
    return np.diag(u) - np.outer(u, u)


@dataclass
class KcfNodeState:
    prior: np.ndarray
    P: np.ndarray
    post: np.ndarray | None = None
    M: np.ndarray | None = None
    K: np.ndarray | None = None
    F: np.ndarray | None = None
    R: np.ndarray | None = None
    Q: np.ndarray | None = None

    @classmethod
    def initial(cls, num_states: int) -> "KcfNodeState":
        return cls(np.full(num_states, 1.0 / num_states), uniform_prior_covariance(num_states))


def kcf_update(node: KcfNodeState, model: MarkovChainModel, k: int, z_k, neighbor_priors,
               active: bool, consensus_gain: float) -> KcfNodeState:
    """One slot of node ``k``'s filter; returns the updated state (input untouched).

    ``neighbor_priors`` are the current-slot prior beliefs of ``k``'s neighbours.
    """
    S_n = model.num_states
    prior, P = node.prior, node.P
    H = model.H[k]
    R = np.einsum("i,irs->rs", prior, model.covs[k])
    if active:
        S = H @ P @ H.T + R
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise SingularInnovation(f"innovation covariance of node {k} is singular") from exc
        K = np.linalg.solve(S, H @ P).T
        innov = K @ (np.asarray(z_k, dtype=float) - H @ prior)
    else:
        K = np.zeros((S_n, model.r))
        innov = 0.0
    nbrs = np.asarray(neighbor_priors, dtype=float).reshape(-1, S_n)
    consensus = consensus_gain * (nbrs - prior[None, :]).sum(axis=0) if nbrs.size else 0.0
    post = simplex_project(prior + innov + consensus)
    F = np.eye(S_n) - (K @ H if active else 0.0)
    M = F @ P @ F.T + K @ R @ K.T
    next_prior = model.A @ post
    Q = np.einsum("i,iab->ab", next_prior, model.Q)
    P_next = model.A @ M @ model.A.T + Q
    return KcfNodeState(next_prior, 0.5 * (P_next + P_next.T), post, M, K, F, R, Q)


class _FilterBank:
    """All nodes' filters advanced together; node ``k`` only reads its own state
    and its neighbours' priors."""

    def __init__(self, model: MarkovChainModel, topology: Topology):
        n, s = model.n, model.num_states
        self.model = model
        self.adj = topology.adjacency.astype(float)
        self.deg = self.adj.sum(axis=1)
        self.C = topology.consensus_gain
        self.prior = np.full((n, s), 1.0 / s)
        self.P = np.repeat(uniform_prior_covariance(s)[None], n, axis=0)
        self.post = self.prior.copy()
        self.M = self.P.copy()
        self._H = model.H
        self._Ht = np.transpose(model.H, (0, 2, 1))
        self._eye = np.eye(s)

    def update(self, active: np.ndarray, z: np.ndarray) -> None:
        m = self.model
        prior, P, H = self.prior, self.P, self._H
        R = np.einsum("ki,kirs->krs", prior, m.covs)
        K = np.zeros((m.n, m.num_states, m.r))
        a = np.flatnonzero(active)
        gain_term = np.zeros_like(prior)
        if a.size:
            Ha, Pa = H[a], P[a]
            S = Ha @ Pa @ self._Ht[a] + R[a]
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError as exc:
                raise SingularInnovation("innovation covariance singular at an active node") from exc
            Ka = np.transpose(np.linalg.solve(S, Ha @ Pa), (0, 2, 1))
            K[a] = Ka
            resid = z[a] - np.einsum("kri,ki->kr", Ha, prior[a])
            gain_term[a] = np.einsum("kir,kr->ki", Ka, resid)
        consensus = self.C[:, None] * (self.adj @ prior - self.deg[:, None] * prior)
        self.post = simplex_project(prior + gain_term + consensus)
        F = self._eye[None] - K @ H
        self.M = F @ P @ np.transpose(F, (0, 2, 1)) + K @ R @ np.transpose(K, (0, 2, 1))
        self.prior = self.post @ m.A.T
        Q = np.einsum("ki,iab->kab", self.prior, m.Q)
        Pn = m.A[None] @ self.M @ m.A.T[None] + Q
        self.P = 0.5 * (Pn + np.transpose(Pn, (0, 2, 1)))

    def node(self, k: int) -> KcfNodeState:
        return KcfNodeState(self.prior[k].copy(), self.P[k].copy(), self.post[k].copy(), self.M[k].copy())


def _belief_errors(post: np.ndarray, state: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-node belief error ``||post - e_i||^2`` and argmax-decoded error."""
    e = np.zeros(post.shape[-1])
    e[state] = 1.0
    diff = post - e
    belief = np.sum(diff * diff, axis=-1)
    decoded = np.where(np.argmax(post, axis=-1) == state, 0.0, 2.0)
    return belief, decoded


class KcfTracker:
    def __init__(self, model: MarkovChainModel, topology: Topology | None = None,
                 schedules: StepSchedules | None = None, *, beta: float = 150.0, n_bar: float = 2,
                 gibbs_steps: int = 10, lambda0: float = 0.1,
                 lambda_bounds: tuple[float, float] | None = None, seed: int = 0,
                 f_init: float = 0.0, f_table=None, initial_config: int = 0, learn_f: bool = True,
                 consensus_gain: float = 0.1, validate: bool = True):
        n = model.n
        self.model = model
        self.topology = topology if topology is not None else Topology.line(n, consensus_gain)
        if self.topology.n != n:
            raise ValueError("topology size does not match the number of sensors")
        validate_topology(self.topology)
        self.schedules = schedules or StepSchedules(a0=MARKOV_A0)
        if validate:
            validate_schedules(self.schedules)
        if not 0 <= n_bar <= n:
            raise ValueError(f"N_bar={n_bar} outside [0, {n}]")
        self.beta = float(beta)
        self.n_bar = n_bar
        self.gibbs_steps = int(gibbs_steps)
        lo, hi = lambda_bounds if lambda_bounds is not None else (0.0, self.schedules.a0)
        self.lambda_bounds = (float(lo), float(hi))
        self.learn_f = learn_f
        lam = min(max(float(lambda0), lo), hi)
        f = np.full(1 << n, float(f_init)) if f_table is None else np.asarray(f_table, dtype=float)
        if f.shape != (1 << n,):
            raise ValueError("f table must have 2**N entries")
        self.f = f.copy()
        self.chains = [GibbsChain(n, Stream(seed, GIBBS), initial_config) for _ in range(n)]
        self.lams = [lam] * n
        self._f_lists = [self.f.tolist() for _ in range(n)]
        self.filters = _FilterBank(model, self.topology)
        self.counters = Counters()
        self._reports: deque = deque()
        self.source = MarkovSource(model, seed)
        self._bits = (np.arange(1 << n)[:, None] >> np.arange(n)) & 1
        self._pop = popcounts(n).tolist()
        self.t = 0
        extra = ([f"cfg_{k}" for k in range(n)] + [f"mse_{k}" for k in range(n)]
                 + [f"trM_{k}" for k in range(n)] + ["mse_decoded"])
        self.trace = MetricsTrace(0, extra)

    def step(self) -> int:
        t, s, n = self.t, self.schedules, self.model.n
        states = [c.sweep(self._f_lists[k], self.lams[k], self.beta, self.gibbs_steps)
                  for k, c in enumerate(self.chains)]
        index = states[0]
        truth, z = self.source.next()
        self.filters.update(self._bits[index].astype(bool), z)
        belief, decoded = _belief_errors(self.filters.post, truth)
        traces = np.trace(self.filters.M, axis1=1, axis2=2)
        lam_t = self.lams[0]
        lo, hi = self.lambda_bounds
        self.lams = [lambda_step(self.lams[k], s.b(t), self._pop[states[k]], self.n_bar, lo, hi)
                     for k in range(n)]
        if s.full_read(t):
            if self.learn_f and self._reports:
                old_index, old_mean = self._reports.popleft()
                nu_b = self.counters.tick_config(old_index)
                self.counters.nu += 1
                y = min(max(old_mean, 0.0), s.a0)
                value = self.f[old_index] + s.a.at_count(nu_b) * (y - self.f[old_index])
                self.f[old_index] = min(max(value, 0.0), s.a0)
                for fl in self._f_lists:
                    fl[old_index] = self.f[old_index]
            # broadcast Tr(M_k(t)) for the update one period from now
            self._reports.append((index, float(traces.mean())))
        extras = {f"cfg_{k}": states[k] for k in range(n)}
        extras.update({f"mse_{k}": float(belief[k]) for k in range(n)})
        extras.update({f"trM_{k}": float(traces[k]) for k in range(n)})
        extras["mse_decoded"] = float(decoded.mean())
        self.trace.append(t, float(belief.mean()), self._pop[index], lam_t, (), 0, **extras)
        self.t = t + 1
        return index

    def run(self, slots: int) -> MetricsTrace:
        for _ in range(slots):
            self.step()
        return self.trace


class CentralKalmanTracker:
    """Centralized filter on the same linear system using a fixed pair of sensors."""

    def __init__(self, model: MarkovChainModel, *, sensors=(0, 1), seed: int = 0):
        self.model = model
        self.sensors = [int(k) for k in sensors]
        if any(not 0 <= k < model.n for k in self.sensors):
            raise ValueError("sensor index out of range")
        s = model.num_states
        self.H = np.concatenate([model.H[k] for k in self.sensors], axis=0)
        self.prior = np.full(s, 1.0 / s)
        self.P = uniform_prior_covariance(s)
        self.post = self.prior.copy()
        self.source = MarkovSource(model, seed)
        self.t = 0
        self.trace = MetricsTrace(0, ["mse_decoded"])

    def _noise_cov(self) -> np.ndarray:
        r = self.model.r
        size = r * len(self.sensors)
        R = np.zeros((size, size))
        for j, k in enumerate(self.sensors):
            R[j * r:(j + 1) * r, j * r:(j + 1) * r] = np.einsum("i,irs->rs", self.prior, self.model.covs[k])
        return R

    def step(self) -> None:
        m = self.model
        truth, z = self.source.next()
        H, P, prior = self.H, self.P, self.prior
        S = H @ P @ H.T + self._noise_cov()
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise SingularInnovation("central innovation covariance singular") from exc
        K = np.linalg.solve(S, H @ P).T
        zs = np.concatenate([z[k] for k in self.sensors])
        self.post = simplex_project(prior + K @ (zs - H @ prior))
        F = np.eye(m.num_states) - K @ H
        M = F @ P @ F.T + K @ self._noise_cov() @ K.T
        self.prior = m.A @ self.post
        Pn = m.A @ M @ m.A.T + np.einsum("i,iab->ab", self.prior, m.Q)
        self.P = 0.5 * (Pn + Pn.T)
        belief, decoded = _belief_errors(self.post[None], truth)
        self.trace.append(self.t, float(belief[0]), len(set(self.sensors)), 0.0, (), 0,
                          mse_decoded=float(decoded[0]))
        self.t += 1

    def run(self, slots: int) -> MetricsTrace:
        for _ in range(slots):
            self.step()
        return self.trace


class PerfectBlindTracker:
    """Knows ``X(t-1)`` exactly, observes nothing, and predicts ``A X(t-1)``."""

    def __init__(self, model: MarkovChainModel, *, seed: int = 0):
        self.model = model
        self.source = MarkovSource(model, seed)
        self.previous: int | None = None
        self.t = 0
        self.trace = MetricsTrace(0, ["mse_decoded"])

    def step(self) -> None:
        m = self.model
        truth, _ = self.source.next()
        guess = m.stationary() if self.previous is None else m.A[:, self.previous]
        belief, decoded = _belief_errors(guess[None], truth)
        self.trace.append(self.t, float(belief[0]), 0, 0.0, (), 0, mse_decoded=float(decoded[0]))
        self.previous = truth
        self.t += 1

    def run(self, slots: int) -> MetricsTrace:
        for _ in range(slots):
            self.step()
        return self.trace


def perfect_blind_mse(model: MarkovChainModel) -> float:
    """Stationary ``E || X(t) - A X(t-1) ||^2 = sum_i pi_i (1 - ||a_i||^2)``."""
    pi = model.stationary()
    return float(pi @ (1.0 - np.sum(model.A * model.A, axis=0)))
