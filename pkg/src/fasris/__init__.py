"""Joint fluid-antenna port selection and RIS phase design for a UAV downlink
under co-channel interference."""

from .baselines import SCHEMES, SchemeResult, exhaustive_oracle
from .geometry_channel import ChannelSet, ConfigError, DomainError, ScenarioConfig, sample_scenario
from .link_metrics import Design, achievable_rate, evaluate
from .sca_core import SCAParams, SCAResult, run_sca

__all__ = [
    "SCHEMES", "SchemeResult", "exhaustive_oracle",
    "ChannelSet", "ConfigError", "DomainError", "ScenarioConfig", "sample_scenario",
    "Design", "achievable_rate", "evaluate",
    "SCAParams", "SCAResult", "run_sca",
]

__version__ = "0.1.0"
