"""Edge-committed, cloud-certified logging with an authenticated LSM index."""

from .model import KEY_MAX, NodeId, client, cloud, edge
from .scenario import ScenarioConfig, run_scenario, simulate

__version__ = "0.1.0"
__all__ = ["KEY_MAX", "NodeId", "ScenarioConfig", "client", "cloud", "edge", "run_scenario", "simulate"]
