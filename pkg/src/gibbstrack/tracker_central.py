"""Centralized tracking of an i.i.d. Gaussian process.

Three modes share one slot loop:

``known``
    ``f`` is the exact MSE table under the true parameter and is never updated;
    ``lambda`` moves with ``a(t)`` against the previous slot's active count.
``full``
    ``f`` and ``theta`` are learned. Every ``T``-th slot all sensors are read,
    ``f(B)`` is refreshed for every configuration and ``theta`` takes one SPSA
    ascent step on the full-read log-likelihood. ``lambda`` moves with ``b(t)``
    against the current count.
``lowcomplex``
    As ``full``, but on a full-read slot only ``f(B(t))`` is refreshed (with a
    per-configuration counter) and ``theta`` uses ``Z_{B(t)}`` only. No extra
    sensors are read.
"""
from __future__ import annotations

import numpy as np

from .estimate import PosteriorCache, conditional_mse, log_likelihood, mse_table
from .gibbs import GibbsChain
from .metrics import MetricsTrace
from .model import IidGaussianModel, popcounts
from .rng import GIBBS, SPSA, Stream
from .sa import Counters, StepSchedules, lambda_step, theta_spsa_step, validate_schedules
from .source import IidSource

MODES = ("known", "full", "lowcomplex")


class CentralTracker:
    def __init__(self, model: IidGaussianModel, schedules: StepSchedules | None = None, *,
                 mode: str = "full", beta: float = 150.0, n_bar: float = 2, gibbs_steps: int = 10,
                 lambda0: float = 0.1, lambda_bounds: tuple[float, float] | None = None,
                 theta_init=None, seed: int = 0, f_init: float = 0.0, f_table=None,
                 initial_config: int = 0, learn_theta: bool = True, learn_f: bool = True,
                 validate: bool = True):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        self.model = model
        self.schedules = schedules or StepSchedules()
        if validate and mode != "known":
            validate_schedules(self.schedules)
        if not 0 <= n_bar <= model.n:
            raise ValueError(f"N_bar={n_bar} outside [0, {model.n}]")
        self.mode = mode
        self.beta = float(beta)
        self.n_bar = n_bar
        self.gibbs_steps = int(gibbs_steps)
        lo, hi = lambda_bounds if lambda_bounds is not None else (0.0, self.schedules.a0)
        if lo > hi:
            raise ValueError("empty lambda interval")
        self.lambda_bounds = (float(lo), float(hi))
        self.lam = min(max(float(lambda0), lo), hi)
        self.learn_theta = learn_theta and mode != "known"
        self.learn_f = learn_f and mode != "known"

        n = model.n
        if mode == "known":
            self.theta = model.theta0.copy()
        else:
            start = model.theta0 if theta_init is None else np.atleast_1d(np.asarray(theta_init, float))
            self.theta = model.clamp_theta(start.copy())
        if f_table is not None:
            f = np.asarray(f_table, dtype=float)
        elif mode == "known":
            f = mse_table(model, model.theta0)
        else:
            f = np.full(1 << n, float(f_init))
        if f.shape != (1 << n,):
            raise ValueError("f table must have 2**N entries")
        self.f = f.copy()
        self._f_list = self.f.tolist()

        self.source = IidSource(model, seed)
        self.chain = GibbsChain(n, Stream(seed, GIBBS), initial_config)
        self.spsa_stream = Stream(seed, SPSA)
        self.counters = Counters()
        self.cache = PosteriorCache(model, self.theta)
        self._pop = popcounts(n).tolist()
        self.prev_active = self._pop[self.chain.state]
        self.t = 0
        self.trace = MetricsTrace(model.d)

    # -- learning updates --------------------------------------------------

    def _update_f_all(self, step: float) -> None:
        y = np.clip(mse_table(self.model, self.theta), 0.0, self.schedules.a0)
        self.f = np.clip(self.f + step * (y - self.f), 0.0, self.schedules.a0)
        self._f_list = self.f.tolist()

    def _update_f_one(self, index: int, step: float) -> None:
        y = min(max(conditional_mse(self.model, index, self.theta), 0.0), self.schedules.a0)
        value = min(max(self.f[index] + step * (y - self.f[index]), 0.0), self.schedules.a0)
        self.f[index] = value
        self._f_list[index] = value

    def _update_theta(self, index: int, z: np.ndarray, count: int) -> None:
        s, m = self.schedules, self.model
        self.theta = theta_spsa_step(
            self.theta, s.c.at_count(count), s.d.at_count(count),
            lambda th: log_likelihood(m, index, z, th), self.spsa_stream, m.theta_lo, m.theta_hi)
        self.cache = PosteriorCache(m, self.theta)

    # -- slot loop -----------------------------------------------------------

    def step(self) -> int:
        """Advance one slot and append its record; returns ``B(t)`` as an index."""
        t, s = self.t, self.schedules
        lam_t, theta_t = self.lam, self.theta
        state = self.chain.sweep(self._f_list, lam_t, self.beta, self.gibbs_steps)
        x, z = self.source.next()
        err = x - self.cache.estimate(state, z.reshape(-1))
        mse = float(err @ err)
        active = self._pop[state]
        lo, hi = self.lambda_bounds
        if self.mode == "known":
            self.lam = lambda_step(lam_t, s.a(t), self.prev_active, self.n_bar, lo, hi)
        else:
            self.lam = lambda_step(lam_t, s.b(t), active, self.n_bar, lo, hi)
        extra = 0
        if self.mode != "known" and s.full_read(t):
            nu = self.counters.tick()
            if self.mode == "full":
                extra = self.model.n
                if self.learn_f:
                    self._update_f_all(s.a.at_count(nu))
                if self.learn_theta:
                    self._update_theta((1 << self.model.n) - 1, z, nu)
            else:
                nu_b = self.counters.tick_config(state)
                if self.learn_f:
                    self._update_f_one(state, s.a.at_count(nu_b))
                if self.learn_theta:
                    self._update_theta(state, z, nu)
        self.prev_active = active
        self.trace.append(t, mse, active, lam_t, theta_t, extra)
        self.t = t + 1
        return state

    def run(self, slots: int) -> MetricsTrace:
        for _ in range(slots):
            self.step()
        return self.trace


class GreedyTracker:
    """Fixed sensor set used forever with a frozen parameter estimate."""

    def __init__(self, model: IidGaussianModel, *, n_bar: int = 2, theta_init=None,
                 sensors=None, seed: int = 0):
        self.model = model
        chosen = list(range(int(n_bar))) if sensors is None else [int(k) for k in sensors]
        if any(not 0 <= k < model.n for k in chosen):
            raise ValueError("greedy sensor index out of range")
        self.index = sum(1 << k for k in set(chosen))
        self.active = len(set(chosen))
        theta = model.theta0 if theta_init is None else np.atleast_1d(np.asarray(theta_init, float))
        self.theta = model.clamp_theta(theta.copy())
        self.cache = PosteriorCache(model, self.theta)
        self.source = IidSource(model, seed)
        self.t = 0
        self.trace = MetricsTrace(model.d)

    def step(self) -> int:
        x, z = self.source.next()
        err = x - self.cache.estimate(self.index, z.reshape(-1))
        self.trace.append(self.t, float(err @ err), self.active, 0.0, self.theta, 0)
        self.t += 1
        return self.index

    def run(self, slots: int) -> MetricsTrace:
        for _ in range(slots):
            self.step()
        return self.trace
