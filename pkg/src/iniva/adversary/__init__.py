"""Attack simulators: targeted omission, the gossip model and reward loss."""
from .omission import (INF, AttackOutcome, SweepPoint, collateral_samples, iniva_attack,
                       iniva_min_collateral, iniva_plan, iniva_trial, star_trial, sweep)
from .gosig import GossipConfig, gosig_collateral_samples, gosig_trial
from .oracle import oracle_min_collateral
from .reward_loss import RewardLoss, RewardLossConfig, reward_loss_experiment, star_params

__all__ = [
    "INF", "AttackOutcome", "SweepPoint", "collateral_samples", "iniva_attack",
    "iniva_min_collateral", "iniva_plan", "iniva_trial", "star_trial", "sweep",
    "GossipConfig", "gosig_collateral_samples", "gosig_trial", "oracle_min_collateral",
    "RewardLoss", "RewardLossConfig", "reward_loss_experiment", "star_params",
]
