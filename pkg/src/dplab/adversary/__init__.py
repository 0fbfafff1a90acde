from .hard_instance import (
    AttackReport,
    HaltMassReport,
    HaltDistribution,
    HardInstance,
    RoundRecord,
    attack_report,
    build_hard_instance,
    halt_mass_check,
    estimate_halt_distribution,
    exact_halt_distribution,
    exact_oracle,
    hard_instance_length,
    hoeffding_radius,
    monte_carlo_oracle,
    dp_halt_mass_bound,
)
from .learning import LearningAttackReport, PhaseLayout, learning_attack

__all__ = [
    "AttackReport",
    "HaltMassReport",
    "HaltDistribution",
    "HardInstance",
    "LearningAttackReport",
    "PhaseLayout",
    "RoundRecord",
    "attack_report",
    "build_hard_instance",
    "halt_mass_check",
    "estimate_halt_distribution",
    "exact_halt_distribution",
    "exact_oracle",
    "hard_instance_length",
    "hoeffding_radius",
    "learning_attack",
    "monte_carlo_oracle",
    "dp_halt_mass_bound",
]
