"""Scenario configuration, tracker construction, replications and baselines."""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, IncompatibleBaseline
from .kcf import CentralKalmanTracker, KcfTracker, PerfectBlindTracker
from .metrics import MetricsTrace, summarize, write_metrics
from .model import IidGaussianModel, MarkovChainModel, Topology, paper_scalar_model, validate_topology
from .presets import IID_DEFAULTS, IID_THETA_INIT, MARKOV_A0, MARKOV_DEFAULTS, iid_instance, markov_instance
from .sa import StepRule, StepSchedules, validate_schedules
from .tracker_central import CentralTracker, GreedyTracker
from .tracker_dist import DistributedIidTracker

IID_TRACKERS = ("central-known", "central-unknown", "central-lowcomplex", "dist-iid", "greedy")
MARKOV_TRACKERS = ("kcf", "central-kalman", "perfect-blind")
TRACKERS = IID_TRACKERS + MARKOV_TRACKERS
BASELINES = ("greedy", "central-kalman", "perfect-blind")

_CENTRAL_MODES = {"central-known": "known", "central-unknown": "full", "central-lowcomplex": "lowcomplex"}


@dataclass(frozen=True)
class Scenario:
    tracker: str
    model: dict = field(default_factory=lambda: {"preset": "iid"})
    schedules: dict = field(default_factory=lambda: StepSchedules().as_dict())
    beta: float = 150.0
    n_bar: float = 2
    gibbs_steps: int = 10
    lambda0: float = 0.1
    lambda_bounds: list | None = None
    theta_init: list | None = None
    slots: int = 1000
    seeds: list = field(default_factory=lambda: [0])
    sensors: list | None = None
    topology: dict | None = None
    broadcast_delay: int = 0
    learn_gains: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        if "tracker" not in data:
            raise ConfigError("scenario needs a 'tracker'")
        merged = dict(data)
        if "schedules" in merged:
            merged["schedules"] = {**StepSchedules().as_dict(), **merged["schedules"]}
        try:
            sc = cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        validate_scenario(sc)
        return sc

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "Scenario":
        return Scenario.from_dict({**self.to_dict(), **changes})


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return Scenario.from_dict(data)


def config_hash(scenario: Scenario) -> str:
    canonical = json.dumps(scenario.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(canonical.encode()).hexdigest()


# -- building blocks -------------------------------------------------------------


def build_schedules(spec: dict) -> StepSchedules:
    try:
        rules = {k: StepRule(float(spec[k][0]), float(spec[k][1])) for k in "abcd"}
        return StepSchedules(**rules, period=int(spec["period"]), a0=float(spec["a0"]))
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed schedules: {exc}") from exc


def model_family(spec: dict) -> str:
    if "preset" in spec:
        family = spec["preset"]
    else:
        family = spec.get("family")
    if family not in ("iid", "markov"):
        raise ConfigError(f"model needs preset or family 'iid' or 'markov', got {family!r}")
    return family


def build_model(spec: dict):
    family = model_family(spec)
    try:
        if "preset" in spec:
            opts = {k: v for k, v in spec.items() if k != "preset"}
            defaults = IID_DEFAULTS if family == "iid" else MARKOV_DEFAULTS
            unknown = set(opts) - set(defaults)
            if unknown:
                raise ConfigError(f"unknown {family} preset options: {sorted(unknown)}")
            if family == "iid":
                o = {**IID_DEFAULTS, **opts}
                return iid_instance(o["n"], o["noise_std_range"], o["theta0"], o["theta_box"],
                                    o["instance_seed"])
            o = {**MARKOV_DEFAULTS, **opts}
            return markov_instance(o["n"], o["num_states"], o["mean_range"], o["noise_scale"],
                                   o["instance_seed"])
        if family == "iid":
            fam = spec.get("parametric_family", "mean_sd_scalar")
            if fam != "mean_sd_scalar":
                raise ConfigError(f"unsupported parametric family {fam!r}")
            return paper_scalar_model(spec["noise_std"], theta0=spec.get("theta0", 0.5),
                                      box=tuple(spec.get("theta_box", (0.0, 0.8))))
        return MarkovChainModel.from_row_stochastic(spec["transition"], spec["means"], spec["covs"])
    except KeyError as exc:
        raise ConfigError(f"model is missing {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _topology(spec: dict | None, n: int, default_gain: float) -> Topology:
    if spec is None:
        return Topology.line(n, default_gain)
    try:
        return Topology.from_edges(n, spec["edges"], spec.get("consensus_gain", default_gain))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed topology: {exc}") from exc


def _theta_init(scenario: Scenario):
    if scenario.theta_init is not None:
        return scenario.theta_init
    if "preset" in scenario.model:
        return [IID_THETA_INIT]
    return None


def validate_scenario(sc: Scenario) -> None:
    """Everything that can be checked without simulating; raises ConfigError and friends."""
    if sc.tracker not in TRACKERS:
        raise ConfigError(f"unknown tracker {sc.tracker!r}; expected one of {TRACKERS}")
    family = model_family(sc.model)
    wanted = "iid" if sc.tracker in IID_TRACKERS else "markov"
    if family != wanted:
        raise IncompatibleBaseline(f"tracker {sc.tracker} needs a {wanted} model, got {family}")
    model = build_model(sc.model)
    schedules = build_schedules(sc.schedules)
    if sc.tracker not in BASELINES and sc.tracker != "central-known":
        validate_schedules(schedules, distributed=sc.tracker == "dist-iid")
    if not 0 <= sc.n_bar <= model.n:
        raise ConfigError(f"n_bar={sc.n_bar} outside [0, {model.n}]")
    if sc.beta <= 0 or sc.gibbs_steps < 1:
        raise ConfigError("beta must be positive and gibbs_steps >= 1")
    if not isinstance(sc.slots, int) or sc.slots < 0:
        raise ConfigError("slots must be a nonnegative integer")
    if not sc.seeds or any(not isinstance(s, int) or s < 0 for s in sc.seeds):
        raise ConfigError("seeds must be a nonempty list of nonnegative integers")
    if sc.lambda_bounds is not None and (len(sc.lambda_bounds) != 2 or sc.lambda_bounds[0] > sc.lambda_bounds[1]):
        raise ConfigError("lambda_bounds must be [lo, hi] with lo <= hi")
    if sc.broadcast_delay < 0:
        raise ConfigError("broadcast_delay must be nonnegative")
    if sc.tracker in ("dist-iid", "kcf"):
        validate_topology(_topology(sc.topology, model.n, MARKOV_DEFAULTS["consensus_gain"]))
    if isinstance(model, IidGaussianModel):
        theta = _theta_init(sc)
        if theta is not None and np.asarray(theta, float).shape != model.theta0.shape:
            raise ConfigError("theta_init has the wrong dimension")


def build_tracker(sc: Scenario, seed: int):
    model = build_model(sc.model)
    schedules = build_schedules(sc.schedules)
    common = dict(beta=sc.beta, n_bar=sc.n_bar, gibbs_steps=sc.gibbs_steps, lambda0=sc.lambda0,
                  lambda_bounds=None if sc.lambda_bounds is None else tuple(sc.lambda_bounds), seed=seed)
    kind = sc.tracker
    if kind in _CENTRAL_MODES:
        return CentralTracker(model, schedules, mode=_CENTRAL_MODES[kind], theta_init=_theta_init(sc), **common)
    if kind == "dist-iid":
        topo = _topology(sc.topology, model.n, 0.0)
        return DistributedIidTracker(model, topo, schedules, theta_init=_theta_init(sc),
                                     learn_gains=sc.learn_gains, broadcast_delay=sc.broadcast_delay, **common)
    if kind == "greedy":
        return GreedyTracker(model, n_bar=int(sc.n_bar), theta_init=_theta_init(sc), sensors=sc.sensors, seed=seed)
    if kind == "kcf":
        gain = sc.model.get("consensus_gain", MARKOV_DEFAULTS["consensus_gain"])
        topo = _topology(sc.topology, model.n, gain)
        return KcfTracker(model, topo, schedules, **common)
    if kind == "central-kalman":
        return CentralKalmanTracker(model, sensors=sc.sensors or (0, 1), seed=seed)
    return PerfectBlindTracker(model, seed=seed)


def targets(sc: Scenario) -> dict:
    out = {"n_bar": sc.n_bar}
    model = build_model(sc.model)
    if isinstance(model, IidGaussianModel):
        out["theta0"] = model.theta0.tolist()
    return out


def run_single(sc: Scenario, seed: int) -> MetricsTrace:
    return build_tracker(sc, seed).run(sc.slots)


def _run_and_write(args) -> tuple[int, dict]:
    sc, seed, path, meta = args
    trace = run_single(sc, seed)
    write_metrics(trace, path, {**meta, "seed": seed})
    return seed, summarize(trace, meta["targets"])


def run_scenario(sc: Scenario, out_dir, workers: int = 1) -> dict:
    """One CSV (plus sidecar) per seed and an aggregate ``summary.json``."""
    out_dir = Path(out_dir)
    meta = {"scenario": sc.to_dict(), "config_hash": config_hash(sc),
            "schedules": sc.schedules, "targets": targets(sc)}
    jobs = [(sc, seed, out_dir / f"{sc.tracker}_seed{seed}.csv", meta) for seed in sc.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_and_write, jobs))
    else:
        results = [_run_and_write(job) for job in jobs]
    per_seed = {str(seed): summary for seed, summary in results}
    aggregate = {"config_hash": meta["config_hash"], "tracker": sc.tracker, "seeds": sc.seeds,
                 "per_seed": per_seed}
    finals = [s["mse_avg"] for s in per_seed.values() if s.get("mse_avg") is not None]
    if finals:
        aggregate["mse_avg_mean"] = float(np.mean(finals))
        aggregate["active_avg_mean"] = float(np.mean([s["active_avg"] for s in per_seed.values()]))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.json").write_text(json.dumps(aggregate, indent=2, sort_keys=True) + "\n")
    return aggregate


def run_baseline(sc: Scenario, kind: str, seed: int | None = None) -> MetricsTrace:
    """Run a reference policy on ``sc``'s model, keeping its slots and seed."""
    if kind not in BASELINES:
        raise ConfigError(f"unknown baseline {kind!r}; expected one of {BASELINES}")
    family = model_family(sc.model)
    if kind == "greedy" and family != "iid":
        raise IncompatibleBaseline("GREEDY needs the i.i.d. Gaussian model")
    if kind in ("central-kalman", "perfect-blind") and family != "markov":
        raise IncompatibleBaseline(f"{kind} needs the Markov chain model")
    base = Scenario.from_dict({**sc.to_dict(), "tracker": kind})
    return run_single(base, sc.seeds[0] if seed is None else seed)


def preset_scenario(name: str) -> Scenario:
    if name == "iid":
        return Scenario.from_dict({"tracker": "central-unknown", "model": {"preset": "iid"},
                                   "theta_init": [0.2], "slots": 100_000, "seeds": [0]})
    if name == "markov":
        schedules = {**StepSchedules().as_dict(), "a0": MARKOV_A0}
        return Scenario.from_dict({"tracker": "kcf", "model": {"preset": "markov"},
                                   "schedules": schedules, "slots": 100_000, "seeds": [0]})
    raise ConfigError(f"unknown preset {name!r}; expected 'iid' or 'markov'")
