"""Capacity bounds, fronthaul allocation and gap audits for Gaussian C-RAN uplink and downlink."""

from .errors import (
    CranError,
    DegenerateChannelError,
    DegenerateScenarioError,
    InfeasibleError,
    InvalidInputError,
    PreconditionError,
    SizeLimitError,
)
from .instance import DOWNLINK, UPLINK, CovarianceSet, NetworkInstance, SumRateReport

__version__ = "0.1.0"

__all__ = [
    "CranError",
    "DegenerateChannelError",
    "DegenerateScenarioError",
    "InfeasibleError",
    "InvalidInputError",
    "PreconditionError",
    "SizeLimitError",
    "DOWNLINK",
    "UPLINK",
    "CovarianceSet",
    "NetworkInstance",
    "SumRateReport",
]
