"""Tabular reinforcement learning for slate recommendation with per-item Q tables."""

from .agents import Agent, AgentConfig, Algorithm, ChoiceModelOracle, greedy_slate
from .catalog import (
    Catalog,
    CostMode,
    RandomizedPolicy,
    build_catalog,
    count_slates,
    enumerate_slates,
    rank_slate,
    unrank_slate,
)
from .errors import (
    CapacityError,
    ConfigError,
    CsvFormatError,
    DomainError,
    SlateFreeError,
    UndefinedMarginalError,
)
from .exact import (
    evaluate_deterministic_policy,
    evaluate_policy_of_item_table,
    policy_evaluation,
    value_iteration,
)
from .harness import ExperimentConfig, load_config, run_episode, run_experiment
from .users import UserModel, UserVariant

__version__ = "0.1.0"

__all__ = [
    "Agent", "AgentConfig", "Algorithm", "ChoiceModelOracle", "greedy_slate",
    "Catalog", "CostMode", "RandomizedPolicy", "build_catalog", "count_slates",
    "enumerate_slates", "rank_slate", "unrank_slate",
    "CapacityError", "ConfigError", "CsvFormatError", "DomainError", "SlateFreeError",
    "UndefinedMarginalError",
    "evaluate_deterministic_policy", "evaluate_policy_of_item_table", "policy_evaluation",
    "value_iteration",
    "ExperimentConfig", "load_config", "run_episode", "run_experiment",
    "UserModel", "UserVariant",
]
