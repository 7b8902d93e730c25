"""Gibbs sampling over sensor configurations.

The target law is ``pi(B) ~ exp(-beta * h(B))`` with ``h(B) = f(B) + lam * |B|``.
A single-site update resamples one uniformly chosen bit from its conditional;
all probabilities are evaluated as a logistic function of the energy gap so that
large ``beta`` never overflows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleCardinality, InvalidSchedule, MissingEnergy
from .model import Configuration, as_index, popcounts
from .rng import Stream


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass
class EnergyTable:
    """Estimated errors ``f`` over all ``2**N`` configurations plus the multiplier.

    NaN entries of ``f`` mark configurations whose error is unknown.
    """

    f: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        n = int(round(math.log2(self.f.size)))
        if 1 << n != self.f.size:
            raise ValueError("the f table must have 2**N entries")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        self.n = n
        self._pop = popcounts(n)

    def h(self, config) -> float:
        idx = as_index(config)
        value = self.f[idx]
        if math.isnan(value):
            raise MissingEnergy(f"no energy for configuration {idx}")
        return float(value + self.lam * self._pop[idx])

    def h_all(self) -> np.ndarray:
        return self.f + self.lam * self._pop


def conditional_activation_probability(table: EnergyTable, config, j: int, beta: float) -> float:
    """Probability of setting bit ``j`` to 1 given the other bits of ``config``."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    idx = as_index(config)
    bit = 1 << j
    h1 = table.h(idx | bit)
    h0 = table.h(idx & ~bit)
    return _sigmoid(-beta * (h1 - h0))


class BetaSchedule:
    """Inverse temperature: constant, or ``beta0 * ln(1 + t)``.

    For the logarithmic kind, ``beta0 * n * delta < 1`` is enforced at construction,
    where ``delta`` bounds the energy spread ``max h - min h``.
    """

    def __init__(self, kind: str = "fixed", beta0: float = 1.0, *,
                 n: int | None = None, delta: float | None = None):
        if kind not in ("fixed", "logarithmic"):
            raise InvalidSchedule(f"unknown schedule kind {kind!r}")
        if beta0 <= 0:
            raise InvalidSchedule("beta0 must be positive")
        if kind == "logarithmic":
            if n is None or delta is None:
                raise InvalidSchedule("logarithmic schedule needs n and delta for validation")
            if beta0 * n * delta >= 1.0:
                raise InvalidSchedule(f"beta0*N*delta = {beta0 * n * delta:.4g} must be < 1")
        self.kind = kind
        self.beta0 = float(beta0)
        self.n = n
        self.delta = delta

    def __call__(self, t: int) -> float:
        if t < 0:
            raise ValueError("t must be nonnegative")
        if self.kind == "fixed":
            return self.beta0
        return self.beta0 * math.log1p(t)


def annealed_beta(schedule: BetaSchedule, t: int) -> float:
    return schedule(t)


def delta_upper_bound(a0: float, lam_max: float, n: int) -> float:
    """Energy spread bound when ``f`` is only known to lie in ``[0, a0]``."""
    return a0 + lam_max * n


class GibbsChain:
    """A configuration chain with its own proposal stream."""

    def __init__(self, n: int, stream: Stream, initial=0):
        self.n = n
        self.stream = stream
        self.state = as_index(initial)
        self.t = 0

    @property
    def config(self) -> Configuration:
        return Configuration.from_index(self.state, self.n)

    def sweep(self, f: list[float], lam: float, beta: float, steps: int = 1) -> int:
        """Run ``steps`` single-site updates against ``h = f + lam |B|``.

        ``f`` is a plain list indexed by configuration (fast path for trackers).
        """
        state = self.state
        n = self.n
        draws = self.stream.uniforms(2 * steps)
        exp = math.exp
        for s in range(0, 2 * steps, 2):
            j = int(draws[s] * n)
            if j >= n:
                j = n - 1
            bit = 1 << j
            gap = f[state | bit] - f[state & ~bit] + lam
            if gap != gap:
                raise MissingEnergy(f"missing energy around configuration {state}")
            x = -beta * gap
            if x >= 0:
                p = 1.0 / (1.0 + exp(-x))
            else:
                e = exp(x)
                p = e / (1.0 + e)
            if draws[s + 1] < p:
                state |= bit
            else:
                state &= ~bit
        self.state = state
        self.t += steps
        return state

    def step(self, table: EnergyTable, beta: float, steps: int = 1) -> Configuration:
        self.sweep(table.f.tolist(), table.lam, beta, steps)
        return self.config

    def hard_step(self, table: EnergyTable, beta: float, n_bar: int) -> Configuration:
        """Swap move on the slice ``|B| = n_bar``.

        One active and one inactive sensor are chosen uniformly; the swapped
        configuration is accepted with its two-point Gibbs conditional.
        """
        if not 0 <= n_bar <= self.n:
            raise InfeasibleCardinality(f"N_bar={n_bar} outside [0, {self.n}]")
        state = self.state
        active = [k for k in range(self.n) if state >> k & 1]
        if len(active) != n_bar:
            raise ValueError(f"chain has {len(active)} active sensors, expected {n_bar}")
        self.t += 1
        if n_bar in (0, self.n):
            return self.config
        inactive = [k for k in range(self.n) if not state >> k & 1]
        i = active[self.stream.integer(len(active))]
        j = inactive[self.stream.integer(len(inactive))]
        proposal = (state & ~(1 << i)) | (1 << j)
        p = _sigmoid(-beta * (table.h(proposal) - table.h(state)))
        if self.stream.uniform() < p:
            self.state = proposal
        return self.config


def gibbs_step(chain: GibbsChain, table: EnergyTable, beta: float, steps: int = 1) -> Configuration:
    return chain.step(table, beta, steps)


def hard_constraint_step(chain: GibbsChain, table: EnergyTable, beta: float, n_bar: int) -> Configuration:
    return chain.hard_step(table, beta, n_bar)


def anneal(chain: GibbsChain, table: EnergyTable, schedule: BetaSchedule, steps: int) -> Configuration:
    """Single-site updates with ``beta(t)`` from ``schedule``; returns the terminal state."""
    f = table.f.tolist()
    lam = table.lam
    start = chain.t
    block = 4096
    for lo in range(start, start + steps, block):
        hi = min(lo + block, start + steps)
        for beta in [schedule(t) for t in range(lo, hi)]:
            chain.sweep(f, lam, beta, 1)
    return chain.config
