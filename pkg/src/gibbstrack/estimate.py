"""Gaussian MMSE estimation under a sensor configuration, and the MSE proxies.

Observation arrays always have the full shape ``(N, r)``; rows of inactive
sensors are ignored and may hold anything (NaN included).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularInformation, SparsityViolation
from .model import IidGaussianModel, Topology, as_index, config_bits


@dataclass(frozen=True)
class PosteriorSummary:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.cov))


def _active(index: int, n: int) -> list[int]:
    return [k for k in range(n) if index >> k & 1]


def _gain(model: IidGaussianModel, index: int, theta):
    """Return ``(mean0, cov0, active, gain, post_cov)`` for one configuration."""
    mean, cov = model.prior(theta)
    active = _active(index, model.n)
    if not active:
        return mean, cov, active, None, cov
    H = model.sensors.H[active].reshape(-1, model.q)
    R = _block_diag(model.sensors.R[active])
    S = H @ cov @ H.T + R
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise SingularInformation(f"innovation covariance singular for configuration {index}") from exc
    # gain = cov H^T S^{-1}
    CHt = cov @ H.T
    gain = np.linalg.solve(L.T, np.linalg.solve(L, CHt.T)).T
    post = cov - gain @ H @ cov
    post = 0.5 * (post + post.T)
    return mean, cov, active, gain, post


def _block_diag(blocks: np.ndarray) -> np.ndarray:
    m, r, _ = blocks.shape
    out = np.zeros((m * r, m * r))
    for i, b in enumerate(blocks):
        out[i * r:(i + 1) * r, i * r:(i + 1) * r] = b
    return out


def gaussian_posterior(model: IidGaussianModel, config, z: np.ndarray, theta=None) -> PosteriorSummary:
    """Conditional law of ``X`` given the active sensors' observations, prior ``p_theta``."""
    mean, cov, active, gain, post = _gain(model, as_index(config), theta)
    if not active:
        return PosteriorSummary(mean.copy(), cov.copy())
    H = model.sensors.H[active].reshape(-1, model.q)
    zb = np.asarray(z, dtype=float)[active].reshape(-1)
    return PosteriorSummary(mean + gain @ (zb - H @ mean), post)


def conditional_mse(model: IidGaussianModel, config, theta=None) -> float:
    """Expected squared error of the MMSE estimate under ``config``: the posterior trace."""
    return float(np.trace(_gain(model, as_index(config), theta)[4]))


def mse_table(model: IidGaussianModel, theta=None) -> np.ndarray:
    """``conditional_mse`` for every configuration index.

    Uses the batched information form when every noise covariance is invertible
    and falls back to one covariance-form update per configuration otherwise.
    """
    n = model.n
    R = model.sensors.R
    if all(np.linalg.eigvalsh(Rk).min() > 1e-12 for Rk in R):
        _, cov = model.prior(theta)
        H = model.sensors.H
        info_k = np.einsum("kri,krs,ksj->kij", H, np.linalg.inv(R), H)
        info = np.linalg.inv(cov)[None] + np.einsum("bk,kij->bij", config_bits(n).astype(float), info_k)
        return np.trace(np.linalg.inv(info), axis1=1, axis2=2)
    return np.array([conditional_mse(model, b, theta) for b in range(1 << n)])


def y_b_proxy(model: IidGaussianModel, config, z: np.ndarray, theta, a0: float | None = None) -> float:
    """Posterior expected squared error given ``Z_B`` under the current ``theta``.

    In the linear-Gaussian case the value does not depend on ``z``.
    """
    y = conditional_mse(model, config, theta)
    return _clamp(y, a0)


def _clamp(y: float, a0: float | None) -> float:
    if a0 is None:
        return y
    return min(max(y, 0.0), a0)


def local_estimates(model: IidGaussianModel, z: np.ndarray, theta, config=None) -> np.ndarray:
    """Per-node initial estimates, shape ``(N, q)``.

    Node ``k`` uses its own observation when active, otherwise the prior mean.
    """
    n = model.n
    index = (1 << n) - 1 if config is None else as_index(config)
    mean, _ = model.prior(theta)
    out = np.tile(mean, (n, 1))
    for k in range(n):
        if index >> k & 1:
            out[k] = gaussian_posterior(model, 1 << k, z, theta).mean
    return out


def check_sparsity(K: np.ndarray, topology: Topology) -> None:
    if K.shape != (topology.n, topology.n):
        raise SparsityViolation(f"gain matrix has shape {K.shape}, expected {(topology.n,) * 2}")
    if np.any(K[~topology.support] != 0.0):
        raise SparsityViolation("gain matrix is nonzero between non-neighbours")


def consensus_combine(K: np.ndarray, estimates: np.ndarray, topology: Topology | None = None) -> np.ndarray:
    """One round of neighbour mixing: row ``i`` of the result is ``sum_j K[i, j] est[j]``."""
    if topology is not None:
        check_sparsity(K, topology)
    return K @ estimates


def y_kb_from_parts(post: PosteriorSummary, final: np.ndarray) -> float:
    """Network-average conditional MSE of final estimates around the central posterior.

    ``E[||X - x_i||^2 | Z_B] = tr(P_B) + ||m_B - x_i||^2`` for each node ``i``.
    """
    resid = final - post.mean[None, :]
    return post.trace + float(np.mean(np.sum(resid * resid, axis=1)))


def y_kb_proxy(model: IidGaussianModel, config, z: np.ndarray, theta, K: np.ndarray,
               topology: Topology, a0: float | None = None) -> float:
    check_sparsity(K, topology)
    post = gaussian_posterior(model, config, z, theta)
    initial = local_estimates(model, z, theta, config)
    return _clamp(y_kb_from_parts(post, K @ initial), a0)


class PosteriorCache:
    """Per-configuration posterior gains for a fixed ``theta``.

    ``estimate(index, z)`` evaluates ``offset + G @ z.ravel()`` where ``G`` has
    zero columns for inactive sensors. When every noise covariance is invertible
    and N is small, all configurations are built at once in information form;
    otherwise entries are filled lazily in covariance form.
    """

    EAGER_MAX_N = 12

    def __init__(self, model: IidGaussianModel, theta):
        self.model = model
        self.theta = np.array(theta, dtype=float)
        self._cache: dict[int, tuple[np.ndarray, np.ndarray, float]] = {}
        R = model.sensors.R
        if model.n <= self.EAGER_MAX_N and all(np.linalg.eigvalsh(Rk).min() > 1e-12 for Rk in R):
            self._build_all()

    def _build_all(self) -> None:
        m = self.model
        n, r, q = m.n, m.sensors.r, m.q
        mean, cov = m.prior(self.theta)
        H = m.sensors.H
        W = np.einsum("kri,krs->kis", H, np.linalg.inv(m.sensors.R))  # H_k^T R_k^{-1}
        bits = config_bits(n).astype(float)
        prior_info = np.linalg.inv(cov)
        info = prior_info[None] + np.einsum("bk,kis,ksj->bij", bits, W, H)
        post = np.linalg.inv(info)
        post = 0.5 * (post + np.transpose(post, (0, 2, 1)))
        masked = np.einsum("bk,kis->bkis", bits, W)
        G = np.einsum("bij,bkjs->bkis", post, masked)
        G = np.transpose(G, (0, 2, 1, 3)).reshape(1 << n, q, n * r)
        offset = post @ (prior_info @ mean)
        traces = np.trace(post, axis1=1, axis2=2)
        for b in range(1 << n):
            self._cache[b] = (offset[b], G[b], float(traces[b]))

    def entry(self, index: int):
        hit = self._cache.get(index)
        if hit is None:
            m = self.model
            mean, _, active, gain, post = _gain(m, index, self.theta)
            G = np.zeros((m.q, m.n * m.sensors.r))
            if active:
                H = m.sensors.H[active].reshape(-1, m.q)
                cols = np.concatenate([np.arange(k * m.sensors.r, (k + 1) * m.sensors.r) for k in active])
                G[:, cols] = gain
                offset = mean - gain @ H @ mean
            else:
                offset = mean.copy()
            hit = (offset, G, float(np.trace(post)))
            self._cache[index] = hit
        return hit

    def estimate(self, index: int, z_flat: np.ndarray) -> np.ndarray:
        offset, G, _ = self.entry(index)
        return offset + G @ z_flat

    def trace(self, index: int) -> float:
        return self.entry(index)[2]

    def traces(self) -> np.ndarray:
        return np.array([self.trace(b) for b in range(1 << self.model.n)])


_LOG_2PI = float(np.log(2.0 * np.pi))


def log_likelihood(model: IidGaussianModel, config, z: np.ndarray, theta) -> float:
    """``log p(Z_B | theta)`` with ``X`` integrated out; ``-inf`` if the law is degenerate."""
    active = _active(as_index(config), model.n)
    if not active:
        return 0.0
    mean, cov = model.prior(theta)
    H = model.sensors.H[active].reshape(-1, model.q)
    S = H @ cov @ H.T + _block_diag(model.sensors.R[active])
    resid = np.asarray(z, dtype=float)[active].reshape(-1) - H @ mean
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return -np.inf
    w = np.linalg.solve(L, resid)
    return float(-0.5 * (w @ w) - np.log(np.diag(L)).sum() - 0.5 * resid.size * _LOG_2PI)
