"""Named, independently seeded random streams.

Every stream is a Philox counter-based generator keyed by ``(seed, name)``, so
two objects built from the same seed and name produce identical draws no matter
what other streams have consumed. Draws are served from pre-filled blocks to
keep per-call overhead low inside tight simulation loops.
"""
from __future__ import annotations

import zlib

import numpy as np

PROCESS = "process"
OBSERVATION = "observation"
GIBBS = "gibbs"
SPSA = "spsa"
GAIN = "gain"

_BLOCK = 4096


def _stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class Stream:
    """Buffered draws from one named Philox stream."""

    def __init__(self, seed: int, name: str, block: int = _BLOCK):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self.name = name
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(_stream_key(name),))
        self.generator = np.random.Generator(np.random.Philox(ss))
        self._block = block
        self._ubuf: list[float] = []
        self._ui = 0
        self._nbuf = np.empty(0)
        self._ni = 0

    def uniform(self) -> float:
        i = self._ui
        if i >= len(self._ubuf):
            self._ubuf = self.generator.random(self._block).tolist()
            i = 0
        self._ui = i + 1
        return self._ubuf[i]

    def uniforms(self, k: int) -> list[float]:
        """The next ``k`` uniform draws, same sequence as ``k`` calls to :meth:`uniform`."""
        i = self._ui
        if i + k > len(self._ubuf):
            self._ubuf = self._ubuf[i:] + self.generator.random(max(self._block, k)).tolist()
            i = 0
        self._ui = i + k
        return self._ubuf[i:i + k]

    def integer(self, high: int) -> int:
        """Uniform integer in ``[0, high)``."""
        return min(int(self.uniform() * high), high - 1)

    def normals(self, k: int) -> np.ndarray:
        """``k`` independent standard normal draws."""
        if self._ni + k > self._nbuf.size:
            rest = self._nbuf[self._ni:]
            fresh = self.generator.standard_normal(max(self._block, k))
            self._nbuf = np.concatenate([rest, fresh])
            self._ni = 0
        out = self._nbuf[self._ni:self._ni + k].copy()
        self._ni += k
        return out

    def signs(self, k: int) -> np.ndarray:
        """``k`` independent Rademacher (+1/-1) draws."""
        return np.array([1.0 if self.uniform() < 0.5 else -1.0 for _ in range(k)])


def streams(seed: int, names=(PROCESS, OBSERVATION, GIBBS, SPSA, GAIN)) -> dict[str, Stream]:
    return {name: Stream(seed, name) for name in names}
