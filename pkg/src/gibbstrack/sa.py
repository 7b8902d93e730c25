"""Step-size schedules and the stochastic-approximation update kernels."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConditionViolated, EvaluationFailed, SparsityViolation
from .rng import Stream


@dataclass(frozen=True)
class StepRule:
    """Power-law step ``coeff / (n + 1) ** exponent`` for a zero-based index ``n``.

    Counter-indexed uses (``nu``, ``nu_B``, which start at 1) go through
    :meth:`at_count`, giving ``coeff / nu ** exponent``.
    """

    coeff: float
    exponent: float

    def __call__(self, n: int) -> float:
        return self.coeff / (n + 1) ** self.exponent

    def at_count(self, count: int) -> float:
        return self.coeff / max(count, 1) ** self.exponent

    def as_pair(self) -> list[float]:
        return [self.coeff, self.exponent]


@dataclass(frozen=True)
class StepSchedules:
    a: StepRule = StepRule(1.0, 0.6)
    b: StepRule = StepRule(2.0, 0.8)
    c: StepRule = StepRule(1.0, 1.0)
    d: StepRule = StepRule(0.2, 0.1)
    period: int = 20
    a0: float = 2.5

    def full_read(self, t: int) -> bool:
        return t % self.period == 0

    def as_dict(self) -> dict:
        return {"a": self.a.as_pair(), "b": self.b.as_pair(), "c": self.c.as_pair(),
                "d": self.d.as_pair(), "period": self.period, "a0": self.a0}


def validate_schedules(s: StepSchedules, distributed: bool = False) -> None:
    """Check the convergence conditions analytically from the power-law exponents."""
    ea, eb, ec, ed = s.a.exponent, s.b.exponent, s.c.exponent, s.d.exponent
    for name, rule in (("a", s.a), ("b", s.b), ("c", s.c), ("d", s.d)):
        if rule.coeff <= 0:
            raise ConditionViolated(f"{name}_positive", f"coefficient {rule.coeff} must be > 0")
    if s.period < 1:
        raise ConditionViolated("period_positive", "T must be >= 1")
    if s.a0 <= 0:
        raise ConditionViolated("a0_positive", "A0 must be > 0")
    for name, e in (("a", ea), ("b", eb), ("c", ec)):
        if e > 1:
            raise ConditionViolated(f"sum_{name}_diverges", f"exponent {e} > 1 makes sum {name}(t) finite")
    for name, e in (("a", ea), ("b", eb), ("c", ec)):
        if e <= 0.5:
            raise ConditionViolated(f"sum_{name}_squared_finite", f"exponent {e} <= 0.5")
    if ed <= 0:
        raise ConditionViolated("d_vanishes", f"exponent {ed} <= 0")
    if 2 * (ec - ed) <= 1:
        raise ConditionViolated("sum_c2_over_d2_finite", f"2*({ec} - {ed}) <= 1")
    if eb <= ea:
        raise ConditionViolated("b_over_a_vanishes", f"b exponent {eb} <= a exponent {ea}")
    if ec <= eb:
        raise ConditionViolated("c_over_b_vanishes", f"c exponent {ec} <= b exponent {eb}")
    if distributed and 2 * (eb - ed) <= 1:
        raise ConditionViolated("sum_b2_over_d2_finite", f"2*({eb} - {ed}) <= 1")


@dataclass
class Counters:
    """Full-read bookkeeping: ``nu`` full reads so far, ``nu_by_config`` per configuration."""

    nu: int = 0
    nu_by_config: dict[int, int] = field(default_factory=dict)

    def tick(self) -> int:
        self.nu += 1
        return self.nu

    def tick_config(self, index: int) -> int:
        value = self.nu_by_config.get(index, 0) + 1
        self.nu_by_config[index] = value
        return value


def lambda_step(lam: float, step: float, active: int, n_bar: float, lo: float, hi: float) -> float:
    return min(max(lam + step * (active - n_bar), lo), hi)


def f_step(f: float, step: float, y: float, a0: float) -> float:
    return min(max(f + step * (y - f), 0.0), a0)


def spsa_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, delta: np.ndarray,
                  magnitude: float) -> np.ndarray:
    """Two-evaluation simultaneous-perturbation gradient estimate."""
    plus = fn(x + magnitude * delta)
    minus = fn(x - magnitude * delta)
    if not (np.isfinite(plus) and np.isfinite(minus)):
        raise EvaluationFailed(f"objective not finite at perturbed points ({plus}, {minus})")
    return (plus - minus) / (2.0 * magnitude * delta)


def theta_spsa_step(theta: np.ndarray, step: float, magnitude: float,
                    loglik: Callable[[np.ndarray], float], stream: Stream,
                    lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Projected SPSA ascent on a log-likelihood."""
    theta = np.asarray(theta, dtype=float)
    delta = stream.signs(theta.size)
    g = spsa_gradient(loglik, theta, delta, magnitude)
    return np.clip(theta + step * g, lo, hi)


def consensus_gain_spsa_step(K: np.ndarray, step: float, magnitude: float,
                             y_fn: Callable[[np.ndarray], float], support: np.ndarray,
                             stream: Stream, a0: float) -> np.ndarray:
    """Projected SPSA descent on the supported entries of a gain matrix."""
    support = np.asarray(support, dtype=bool)
    if np.any(K[~support] != 0.0):
        raise SparsityViolation("gain matrix is nonzero off its support")
    rows, cols = np.nonzero(support)
    gamma = np.zeros_like(K, dtype=float)
    gamma[rows, cols] = stream.signs(rows.size)
    plus = y_fn(K + magnitude * gamma)
    minus = y_fn(K - magnitude * gamma)
    if not (np.isfinite(plus) and np.isfinite(minus)):
        raise EvaluationFailed("consensus objective not finite at perturbed points")
    out = K.copy()
    out[rows, cols] = np.clip(K[rows, cols] - step * (plus - minus) / (2.0 * magnitude * gamma[rows, cols]),
                              -a0, a0)
    return out
