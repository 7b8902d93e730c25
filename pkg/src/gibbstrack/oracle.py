"""Exhaustive ground truth for small networks.

Everything here enumerates all ``2**N`` configurations, so it is only meant for
N up to about 12 (20 for the distribution itself).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooLarge
from .model import popcounts

MAX_DISTRIBUTION_N = 20
MAX_KERNEL_N = 12


@dataclass(frozen=True)
class ExactDistribution:
    probs: np.ndarray
    beta: float
    lam: float

    @property
    def n(self) -> int:
        return int(self.probs.size).bit_length() - 1

    def mean_active(self) -> float:
        return float(self.probs @ popcounts(self.n))


def _n_of(f: np.ndarray, limit: int) -> int:
    n = int(f.size).bit_length() - 1
    if 1 << n != f.size:
        raise ValueError("table must have 2**N entries")
    if n > limit:
        raise TooLarge(f"N={n} exceeds the exhaustive limit {limit}")
    return n


def energies(f, lam: float) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return f + lam * popcounts(_n_of(f, MAX_DISTRIBUTION_N))


def exact_gibbs_distribution(f, lam: float, beta: float) -> ExactDistribution:
    h = energies(f, lam)
    logits = -beta * h
    w = np.exp(logits - logits.max())
    return ExactDistribution(w / w.sum(), beta, lam)


def exact_mean_active(f, lam: float, beta: float) -> float:
    return exact_gibbs_distribution(f, lam, beta).mean_active()


def energy_spread(f, lam: float) -> float:
    h = energies(f, lam)
    return float(h.max() - h.min())


def brute_force_optimum(f, lam: float = 0.0, n_bar: int | None = None,
                        atol: float = 1e-12) -> set[int]:
    """Exact minimizers.

    Without ``n_bar``: argmin of ``h = f + lam |B|``. With ``n_bar``: argmin of ``f``
    over configurations with at most ``n_bar`` active sensors.
    """
    f = np.asarray(f, dtype=float)
    n = _n_of(f, MAX_DISTRIBUTION_N)
    if n_bar is None:
        values = energies(f, lam)
    else:
        values = np.where(popcounts(n) <= n_bar, f, np.inf)
    best = values.min()
    return set(np.flatnonzero(values <= best + atol).tolist())


def build_transition_kernel(f, lam: float, beta: float) -> np.ndarray:
    """One-step kernel of the single-site Gibbs chain (rows are "from")."""
    f = np.asarray(f, dtype=float)
    n = _n_of(f, MAX_KERNEL_N)
    h = f + lam * popcounts(n)
    size = 1 << n
    P = np.zeros((size, size))
    idx = np.arange(size)
    for j in range(n):
        bit = 1 << j
        flipped = idx ^ bit
        # logistic probability of landing on the flipped value
        p = 1.0 / (1.0 + np.exp(np.clip(beta * (h[flipped] - h[idx]), -700, 700)))
        P[idx, flipped] += p / n
    P[idx, idx] = 1.0 - P.sum(axis=1)
    return P


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def dobrushin_coefficient(P: np.ndarray) -> float:
    """``1 - min over row pairs of sum_B min(P(x, B), P(y, B))``."""
    overlap = np.minimum(P[:, None, :], P[None, :, :]).sum(axis=2)
    return float(1.0 - overlap.min())


def dobrushin_rate(n: int, beta: float, delta: float) -> float:
    """Contraction factor bound per block of ``n`` steps: ``1 - e^{-beta n delta} / n^n``."""
    return 1.0 - np.exp(-beta * n * delta) / float(n) ** n


def mean_active_curve(f, lams, beta: float) -> np.ndarray:
    return np.array([exact_mean_active(f, lam, beta) for lam in lams])


def stationary_distribution_power(M: np.ndarray, iters: int = 10_000, tol: float = 1e-14) -> np.ndarray:
    """Fixed point of a column-stochastic matrix by power iteration."""
    v = np.full(M.shape[0], 1.0 / M.shape[0])
    for _ in range(iters):
        nxt = M @ v
        nxt /= nxt.sum()
        if np.abs(nxt - v).max() < tol:
            return nxt
        v = nxt
    return v
