"""Simulated cloud-controlled adversarial track testing laboratory.

A desk-scale closed loop: a game-playing object target interacts with a
surrogate vehicle under test on an intersection site, trajectories travel
over a simulated pub/sub vehicle-cloud link, and batches of trials are
scored with surrogate-safety metrics.  Rare high-risk interactions are
over-sampled via importance sampling on an empirical signed-PET density.
"""

from .kinematics import (
    ConflictPoint,
    ControlAction,
    FrenetState,
    ReferencePath,
    Trajectory,
    conflict_point,
    crossing_time,
    frenet_to_cartesian,
    cartesian_to_frenet,
    rollout,
    step,
)
from .risk import (
    RiskParams,
    SignedPet,
    compliance_cost,
    hazard_pet,
    hazard_quadratic,
    is_severe_conflict,
    pet,
    signed_pet,
    smoothness_cost,
    total_utility,
)

__version__ = "0.1.0"
