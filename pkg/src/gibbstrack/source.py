"""Process and observation draws shared by all trackers.

Every sensor is observed every slot whether or not it is active, so two
trackers run with the same seed see exactly the same ``X(t)`` and ``Z(t)``
and their metrics are paired sample for sample.
"""
from __future__ import annotations

import numpy as np

from .model import IidGaussianModel, MarkovChainModel
from .rng import OBSERVATION, PROCESS, Stream

BLOCK = 1024


class IidSource:
    """Yields ``(x, z)`` with ``x`` of shape ``(q,)`` and ``z`` of shape ``(N, r)``."""

    def __init__(self, model: IidGaussianModel, seed: int, block: int = BLOCK):
        self.model = model
        self.process = Stream(seed, PROCESS)
        self.observation = Stream(seed, OBSERVATION)
        self.block = block
        mean, cov = model.prior()
        self._mean = mean
        self._chol = np.linalg.cholesky(cov)
        self._x = np.empty((0, model.q))
        self._z = np.empty((0, model.n, model.sensors.r))
        self._i = 0

    def _refill(self) -> None:
        m, b = self.model, self.block
        s = m.sensors
        x = self._mean[None, :] + self.process.normals(b * m.q).reshape(b, m.q) @ self._chol.T
        xi = self.observation.normals(b * s.n * s.r).reshape(b, s.n, s.r)
        z = np.einsum("kri,bi->bkr", s.H, x) + np.einsum("krs,bks->bkr", s._noise_sqrt, xi)
        self._x, self._z, self._i = x, z, 0

    def next(self) -> tuple[np.ndarray, np.ndarray]:
        if self._i >= len(self._x):
            self._refill()
        i = self._i
        self._i = i + 1
        return self._x[i], self._z[i]


class MarkovSource:
    """Yields ``(state_index, z)``; the chain starts from its stationary law."""

    def __init__(self, model: MarkovChainModel, seed: int):
        self.model = model
        self.process = Stream(seed, PROCESS)
        self.observation = Stream(seed, OBSERVATION)
        self.state: int | None = None

    def next(self) -> tuple[int, np.ndarray]:
        m = self.model
        if self.state is None:
            self.state = m.initial_state(self.process)
        else:
            self.state = m.next_state(self.state, self.process)
        return self.state, m.observe_all(self.state, self.observation)
