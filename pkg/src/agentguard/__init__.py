"""Runtime assurance for agentic systems.

Observe an agent's execution trace, learn an MDP of its behavior online,
and continuously verify PCTL properties against the learned model, with
edge-triggered alerts and actuator callbacks when thresholds break.
"""

from .abstraction import Abstractor, RawEvent, read_trace, write_trace
from .checker import CheckSettings, VerificationResult, check
from .config import GuardConfig, load_config, load_config_file
from .engine import (
    ActuatorCommand,
    AgentGuard,
    Alert,
    TraceRecord,
    replay_trace,
)
from .errors import AgentGuardError, ConfigError
from .model import LearnedMdp, ModelSnapshot, RewardStructure, TransitionEvent
from .pctl import Property, format_property, parse_property
from .prism import export_prism, import_prism
from .simulator import Scenario, generate_trace, load_scenario, load_scenario_file

__version__ = "0.1.0"

__all__ = [
    "Abstractor",
    "ActuatorCommand",
    "AgentGuard",
    "AgentGuardError",
    "Alert",
    "CheckSettings",
    "ConfigError",
    "GuardConfig",
    "LearnedMdp",
    "ModelSnapshot",
    "Property",
    "RawEvent",
    "RewardStructure",
    "Scenario",
    "TraceRecord",
    "TransitionEvent",
    "VerificationResult",
    "check",
    "export_prism",
    "format_property",
    "generate_trace",
    "import_prism",
    "load_config",
    "load_config_file",
    "load_scenario",
    "load_scenario_file",
    "parse_property",
    "read_trace",
    "replay_trace",
    "write_trace",
    "__version__",
]
