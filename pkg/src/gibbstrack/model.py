"""Process models, sensor models, network topology and configuration arithmetic.

Configurations are stored as integers: bit ``k`` of the index is ``B_k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import Asymmetric, ConfigError, Disconnected, SelfLoop
from .rng import Stream


def popcounts(n: int) -> np.ndarray:
    """Number of active sensors for every configuration index ``0 .. 2**n - 1``."""
    idx = np.arange(1 << n)
    bits = (idx[:, None] >> np.arange(n)) & 1
    return bits.sum(axis=1)


def config_bits(n: int) -> np.ndarray:
    """``(2**n, n)`` 0/1 matrix; row ``i`` is configuration ``i``."""
    idx = np.arange(1 << n)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.int8)


@dataclass(frozen=True)
class Configuration:
    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"configuration bits must be 0/1, got {self.bits}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_index(cls, index: int, n: int) -> "Configuration":
        if not 0 <= index < (1 << n):
            raise ValueError(f"index {index} out of range for N={n}")
        return cls(tuple((index >> k) & 1 for k in range(n)))

    @classmethod
    def zeros(cls, n: int) -> "Configuration":
        return cls((0,) * n)

    @classmethod
    def ones(cls, n: int) -> "Configuration":
        return cls((1,) * n)

    @property
    def n(self) -> int:
        return len(self.bits)

    @property
    def index(self) -> int:
        return sum(b << k for k, b in enumerate(self.bits))

    @property
    def norm1(self) -> int:
        return sum(self.bits)

    @property
    def active(self) -> tuple[int, ...]:
        return tuple(k for k, b in enumerate(self.bits) if b)

    def with_bit(self, j: int, value: int) -> "Configuration":
        bits = list(self.bits)
        bits[j] = value
        return Configuration(tuple(bits))

    def without(self, j: int) -> tuple[int, ...]:
        """``B_{-j}``: the bits with entry ``j`` removed."""
        return self.bits[:j] + self.bits[j + 1:]

    def __len__(self):
        return len(self.bits)


def as_index(config) -> int:
    return config.index if isinstance(config, Configuration) else int(config)


# ---------------------------------------------------------------------------
# IID Gaussian process
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SensorModel:
    """Stacked linear-Gaussian sensors: ``z_k = H[k] x + v_k``, ``v_k ~ N(0, R[k])``.

    ``H`` has shape ``(N, r, q)`` and ``R`` shape ``(N, r, r)``. A zero ``R[k]``
    is allowed and means sensor ``k`` observes exactly.
    """

    H: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if H.ndim != 3 or R.ndim != 3 or R.shape[0] != H.shape[0]:
            raise ConfigError("H must be (N, r, q) and R (N, r, r)")
        if R.shape[1:] != (H.shape[1], H.shape[1]):
            raise ConfigError("R blocks must be r x r")
        for k, Rk in enumerate(R):
            if not np.allclose(Rk, Rk.T):
                raise ConfigError(f"R[{k}] is not symmetric")
            if np.linalg.eigvalsh(Rk).min() < -1e-12:
                raise ConfigError(f"R[{k}] is not positive semidefinite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)
        chol = np.stack([_psd_sqrt(Rk) for Rk in R])
        object.__setattr__(self, "_noise_sqrt", chol)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def r(self) -> int:
        return self.H.shape[1]

    @property
    def q(self) -> int:
        return self.H.shape[2]

    def observe(self, k: int, x: np.ndarray, stream: Stream) -> np.ndarray:
        return self.H[k] @ x + self._noise_sqrt[k] @ stream.normals(self.r)

    def observe_all(self, x: np.ndarray, stream: Stream) -> np.ndarray:
        """Observations of every sensor, shape ``(N, r)``."""
        xi = stream.normals(self.n * self.r).reshape(self.n, self.r)
        return self.H @ x + np.einsum("kij,kj->ki", self._noise_sqrt, xi)


def _psd_sqrt(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(M)
    return V @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ V.T


# Parametric families: name -> (mean_fn, cov_fn, q). Extension point for other
# Gaussian parametrizations.
def _paper_scalar_mean(theta):
    return np.array([theta[0]])


def _paper_scalar_cov(theta):
    return np.array([[(1.0 - theta[0]) ** 2]])


FAMILIES: dict[str, tuple[Callable, Callable]] = {
    "mean_sd_scalar": (_paper_scalar_mean, _paper_scalar_cov),
}


@dataclass(frozen=True)
class IidGaussianModel:
    """``X(t) ~ N(mean_fn(theta0), cov_fn(theta0))`` i.i.d. over slots."""

    theta0: np.ndarray
    theta_lo: np.ndarray
    theta_hi: np.ndarray
    mean_fn: Callable[[np.ndarray], np.ndarray]
    cov_fn: Callable[[np.ndarray], np.ndarray]
    sensors: SensorModel
    family: str = "custom"

    def __post_init__(self):
        for name in ("theta0", "theta_lo", "theta_hi"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if not (self.theta_lo.shape == self.theta_hi.shape == self.theta0.shape):
            raise ConfigError("theta0 and the box bounds must have equal length")
        if np.any(self.theta_lo >= self.theta_hi):
            raise ConfigError("empty parameter box")
        if np.any(self.theta0 <= self.theta_lo) or np.any(self.theta0 >= self.theta_hi):
            raise ConfigError("theta0 must lie in the interior of the parameter box")
        mean = self.mean_fn(self.theta0)
        if mean.shape != (self.sensors.q,):
            raise ConfigError("mean_fn dimension does not match the sensor state dimension")
        cov = self.cov_fn(self.theta0)
        if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() <= 0:
            raise ConfigError("cov_fn(theta0) must be symmetric positive definite")

    @property
    def n(self) -> int:
        return self.sensors.n

    @property
    def q(self) -> int:
        return self.sensors.q

    @property
    def d(self) -> int:
        return self.theta0.size

    def prior(self, theta=None) -> tuple[np.ndarray, np.ndarray]:
        theta = self.theta0 if theta is None else np.atleast_1d(theta)
        return self.mean_fn(theta), self.cov_fn(theta)

    def clamp_theta(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.theta_lo, self.theta_hi)

    def sample(self, stream: Stream) -> np.ndarray:
        mean, cov = self.prior()
        return mean + np.linalg.cholesky(cov) @ stream.normals(self.q)

    def observe(self, k: int, x: np.ndarray, stream: Stream) -> np.ndarray:
        return self.sensors.observe(k, x, stream)

    def observe_all(self, x: np.ndarray, stream: Stream) -> np.ndarray:
        return self.sensors.observe_all(x, stream)


def paper_scalar_model(noise_std: Sequence[float], theta0: float = 0.5,
                       box: tuple[float, float] = (0.0, 0.8)) -> IidGaussianModel:
    """Scalar ``X ~ N(theta, (1 - theta)^2)`` observed as ``z_k = X + w_k``."""
    std = np.asarray(noise_std, dtype=float)
    n = std.size
    sensors = SensorModel(H=np.ones((n, 1, 1)), R=(std ** 2).reshape(n, 1, 1))
    mean_fn, cov_fn = FAMILIES["mean_sd_scalar"]
    return IidGaussianModel(theta0=np.array([theta0]), theta_lo=np.array([box[0]]),
                            theta_hi=np.array([box[1]]), mean_fn=mean_fn, cov_fn=cov_fn,
                            sensors=sensors, family="mean_sd_scalar")


# ---------------------------------------------------------------------------
# Finite-state Markov chain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkovChainModel:
    """Markov chain on unit vectors ``e_i`` with ``E[X(t+1) | X(t)] = A X(t)``.

    ``A`` is column-stochastic: column ``i`` is the next-state law from ``e_i``.
    ``means[k, i]`` (length ``r``) and ``covs[k, i]`` (``r x r``) describe sensor
    ``k``'s observation when the chain is in state ``i``.
    """

    A: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        means = np.asarray(self.means, dtype=float)
        covs = np.asarray(self.covs, dtype=float)
        if means.ndim == 2:
            means = means[:, :, None]
        if covs.ndim == 2:
            covs = covs[:, :, None, None]
        s = A.shape[0]
        if A.shape != (s, s):
            raise ConfigError("transition matrix must be square")
        if np.any(A < 0) or not np.allclose(A.sum(axis=0), 1.0):
            raise ConfigError("A must be column-stochastic (nonnegative, columns sum to 1)")
        if means.shape[1] != s or covs.shape[:2] != means.shape[:2]:
            raise ConfigError("observation means/covariances must be indexed (sensor, state)")
        r = means.shape[2]
        if covs.shape[2:] != (r, r):
            raise ConfigError("observation covariances must be r x r")
        for k in range(covs.shape[0]):
            for i in range(s):
                c = covs[k, i]
                if not np.allclose(c, c.T) or np.linalg.eigvalsh(c).min() < -1e-12:
                    raise ConfigError(f"Sigma[{k},{i}] must be symmetric PSD")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        sq = np.array([[_psd_sqrt(covs[k, i]) for i in range(s)] for k in range(covs.shape[0])])
        object.__setattr__(self, "_noise_sqrt", sq)
        object.__setattr__(self, "_cum", np.cumsum(A, axis=0))

    @classmethod
    def from_row_stochastic(cls, transition, means, covs) -> "MarkovChainModel":
        """Build from the row-stochastic matrix ``A^T`` (rows are next-state laws)."""
        return cls(np.asarray(transition, dtype=float).T, means, covs)

    @property
    def n(self) -> int:
        return self.means.shape[0]

    @property
    def num_states(self) -> int:
        return self.A.shape[0]

    @property
    def r(self) -> int:
        return self.means.shape[2]

    @property
    def H(self) -> np.ndarray:
        """``(N, r, |X|)`` observation matrices ``H_k = [m_k1, ..., m_k|X|]``."""
        return np.transpose(self.means, (0, 2, 1))

    @property
    def Q(self) -> np.ndarray:
        """Per-state covariance of ``w(t) = X(t+1) - A X(t)`` given ``X(t) = e_i``."""
        cols = self.A.T
        return np.array([np.diag(a) - np.outer(a, a) for a in cols])

    def stationary(self) -> np.ndarray:
        w, V = np.linalg.eig(self.A)
        v = np.real(V[:, np.argmin(np.abs(w - 1.0))])
        return v / v.sum()

    def unit(self, i: int) -> np.ndarray:
        e = np.zeros(self.num_states)
        e[i] = 1.0
        return e

    def initial_state(self, stream: Stream) -> int:
        return _categorical(np.cumsum(self.stationary()), stream.uniform())

    def next_state(self, i: int, stream: Stream) -> int:
        return _categorical(self._cum[:, i], stream.uniform())

    def observe(self, k: int, i: int, stream: Stream) -> np.ndarray:
        return self.means[k, i] + self._noise_sqrt[k, i] @ stream.normals(self.r)

    def observe_all(self, i: int, stream: Stream) -> np.ndarray:
        xi = stream.normals(self.n * self.r).reshape(self.n, self.r)
        return self.means[:, i] + np.einsum("kij,kj->ki", self._noise_sqrt[:, i], xi)


def _categorical(cum: np.ndarray, u: float) -> int:
    j = int(np.searchsorted(cum, u * cum[-1], side="right"))
    return min(j, cum.size - 1)


def sample_state(model, stream: Stream, current: int | None = None):
    """One process draw: a vector for the IID model, a state index for the Markov model."""
    if isinstance(model, IidGaussianModel):
        return model.sample(stream)
    if current is None:
        return model.initial_state(stream)
    return model.next_state(current, stream)


def observe(model, k: int, state, stream: Stream) -> np.ndarray:
    return model.observe(k, state, stream)


# ---------------------------------------------------------------------------
# Topology
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Topology:
    adjacency: np.ndarray
    consensus_gain: np.ndarray = field(default=None)

    def __post_init__(self):
        adj = np.asarray(self.adjacency).astype(bool)
        object.__setattr__(self, "adjacency", adj)
        gain = self.consensus_gain
        if gain is None:
            gain = np.zeros(adj.shape[0])
        gain = np.broadcast_to(np.asarray(gain, dtype=float), (adj.shape[0],)).copy()
        object.__setattr__(self, "consensus_gain", gain)

    @classmethod
    def from_edges(cls, n: int, edges, consensus_gain=0.0) -> "Topology":
        adj = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            adj[i, j] = adj[j, i] = True
        return cls(adj, consensus_gain)

    @classmethod
    def line(cls, n: int, consensus_gain=0.0) -> "Topology":
        return cls.from_edges(n, [(k, k + 1) for k in range(n - 1)], consensus_gain)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[k])

    @property
    def support(self) -> np.ndarray:
        """Entries a consensus weight matrix may use: edges plus the diagonal."""
        return self.adjacency | np.eye(self.n, dtype=bool)

    @property
    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))


def validate_topology(topology: Topology) -> None:
    """Raise unless the graph is loop-free, undirected and connected."""
    adj = np.asarray(topology.adjacency, dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise Asymmetric("adjacency must be square")
    if np.any(np.diag(adj)):
        raise SelfLoop(f"self-loop at node {int(np.flatnonzero(np.diag(adj))[0])}")
    if not np.array_equal(adj, adj.T):
        raise Asymmetric("adjacency is not symmetric")
    n = adj.shape[0]
    seen = {0}
    frontier = [0]
    while frontier:
        k = frontier.pop()
        for j in np.flatnonzero(adj[k]):
            if int(j) not in seen:
                seen.add(int(j))
                frontier.append(int(j))
    if len(seen) != n:
        raise Disconnected(f"only {len(seen)} of {n} nodes reachable from node 0")
