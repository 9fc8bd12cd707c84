"""Mode selection and time allocation for wireless-powered edge computing.

The package maximises the weighted sum computation rate of devices that
harvest energy from an access point and then either compute locally or
offload their whole task.  It provides an ADMM heuristic (:mod:`wpmec.admm`),
an exact enumeration benchmark (:mod:`wpmec.exact`) and the scenario
generators used to compare them (:mod:`wpmec.experiments`).
"""

__version__ = "0.1.0"

from .admm import AdmmConfig, run as solve_admm
from .exact import enumerate_optimal, local_only, offloading_only, optimize_given_modes
from .model import (Allocation, ChannelModel, DeviceParams, Instance, ModeAssignment,
                    SystemParams, channel_gain, instance_from_distances, load_instance,
                    weighted_sum_rate)
from .report import SolveReport

__all__ = [
    "AdmmConfig", "Allocation", "ChannelModel", "DeviceParams", "Instance", "ModeAssignment",
    "SolveReport", "SystemParams", "channel_gain", "enumerate_optimal", "instance_from_distances",
    "load_instance", "local_only", "offloading_only", "optimize_given_modes", "solve_admm",
    "weighted_sum_rate",
]
