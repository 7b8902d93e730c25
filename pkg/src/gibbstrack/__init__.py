"""Sensor subset selection by Gibbs sampling with stochastic-approximation learning."""
from .errors import GibbsTrackError
from .harness import Scenario, load_scenario, run_baseline, run_scenario
from .kcf import CentralKalmanTracker, KcfTracker, PerfectBlindTracker, simplex_project
from .metrics import MetricsTrace, read_metrics, write_metrics
from .model import Configuration, IidGaussianModel, MarkovChainModel, Topology
from .tracker_central import CentralTracker, GreedyTracker
from .tracker_dist import DistributedIidTracker

__all__ = [
    "GibbsTrackError", "Scenario", "load_scenario", "run_baseline", "run_scenario",
    "CentralKalmanTracker", "KcfTracker", "PerfectBlindTracker", "simplex_project",
    "MetricsTrace", "read_metrics", "write_metrics", "Configuration", "IidGaussianModel",
    "MarkovChainModel", "Topology", "CentralTracker", "GreedyTracker", "DistributedIidTracker",
]
