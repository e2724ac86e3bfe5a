"""Surrogate safety metrics and the multi-attribute interaction utility.

Post-encroachment time (PET) is the absolute gap between the two actors'
crossings of a shared conflict point.  The signed variant psi multiplies PET
by an ordering indicator; with actor A the turning vehicle under test and
actor B the straight-through target, psi = t_B - t_A: positive when the
target clears the conflict point second (A rushed), negative when the target
clears first (A yielded).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .kinematics import ConflictPoint, ControlAction, Trajectory, crossing_time

__all__ = [
    "RiskParams",
    "SignedPet",
    "pet",
    "signed_pet",
    "hazard_pet",
    "hazard_quadratic",
    "smoothness_cost",
    "compliance_cost",
    "total_utility",
    "is_severe_conflict",
]

# Severe-conflict boundary: risk value 0.85 corresponds to PET below 2.3 s.
SEVERE_PET_DEFAULT = 2.3


@dataclass(frozen=True)
class RiskParams:
    """Hazard-utility boundaries, attribute weights, and deviation weights.

    m bounds the unsafe region on the rush side (target clears first,
    psi < 0), n on the yield side (psi > 0).  The quadratic hazard
    (psi^2 + (m - n) psi + m n) / (m n) has its vertex at psi = (n - m) / 2,
    so choosing m and n places the most-attractive signed PET.
    """

    m: float = SEVERE_PET_DEFAULT
    n: float = SEVERE_PET_DEFAULT
    omega_h: float = 0.7
    omega_s: float = 0.2
    omega_c: float = 0.1
    q_weights: tuple[float, float, float, float] = (1.0, 20.0, 1.0, 5.0)
    severe_pet_threshold: float = SEVERE_PET_DEFAULT
    hazard_form: str = "printed"  # "printed": +mn constant; "root": -mn variant

    def __post_init__(self):
        if self.m <= 0 or self.n <= 0:
            raise ValueError("boundaries m, n must be positive")
        weights = (self.omega_h, self.omega_s, self.omega_c)
        if any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        if self.severe_pet_threshold <= 0:
            raise ValueError("severe_pet_threshold must be positive")
        if len(self.q_weights) != 4 or any(q < 0 for q in self.q_weights):
            raise ValueError("q_weights must be 4 non-negative entries")
        if self.hazard_form not in ("printed", "root"):
            raise ValueError("hazard_form must be 'printed' or 'root'")

    @classmethod
    def for_target_psi(cls, psi_target: float, spread: float = SEVERE_PET_DEFAULT,
                       floor: float = 0.1, **kwargs) -> "RiskParams":
        """Boundaries whose hazard vertex sits at the requested signed PET.

        m = spread - psi_target and n = spread + psi_target give vertex
        (n - m) / 2 = psi_target; both are floored to stay positive.
        """
        m = max(spread - psi_target, floor)
        n = max(spread + psi_target, floor)
        return cls(m=m, n=n, **kwargs)

    @property
    def q_diag(self) -> np.ndarray:
        return np.asarray(self.q_weights, dtype=float)


@dataclass(frozen=True)
class SignedPet:
    """Unsigned PET, ordering indicator, and their product psi."""

    pet: float
    indicator: int
    psi: float
    delta_t: float

    def __post_init__(self):
        if self.pet < 0:
            raise ValueError("pet must be non-negative")
        if self.indicator not in (1, -1):
            raise ValueError("indicator must be +1 or -1")


def pet(traj_a: Trajectory, traj_b: Trajectory, cp: ConflictPoint) -> float | None:
    """|t_B - t_A| at the conflict point; None when either never crosses."""
    t_a = crossing_time(traj_a, cp.s_on_path_a)
    t_b = crossing_time(traj_b, cp.s_on_path_b)
    if t_a is None or t_b is None:
        return None
    return abs(t_b - t_a)


def signed_pet(
    traj_a: Trajectory, traj_b: Trajectory, cp: ConflictPoint
) -> SignedPet | None:
    """Signed PET with delta_t = t_B - t_A; indicator +1 iff delta_t >= 0."""
    t_a = crossing_time(traj_a, cp.s_on_path_a)
    t_b = crossing_time(traj_b, cp.s_on_path_b)
    if t_a is None or t_b is None:
        return None
    delta_t = t_b - t_a
    indicator = 1 if delta_t >= 0 else -1
    p = abs(delta_t)
    return SignedPet(pet=p, indicator=indicator, psi=p * indicator, delta_t=delta_t)


def hazard_pet(signed: SignedPet) -> float:
    """Plain hazard cost: the unsigned PET."""
    return signed.pet


def hazard_quadratic(
    psi: float, params: RiskParams, density: Callable[[float], float]
) -> float:
    """Quadratic interaction hazard weighted by the empirical density.

    printed form: (psi^2 + (m - n) psi + m n) / (m n) * p(psi)
    root form:    (psi^2 + (m - n) psi - m n) / (m n) * p(psi)
    """
    p_val = float(density(psi))
    if not math.isfinite(p_val):
        raise ValueError(f"density evaluated to non-finite value at psi={psi}")
    m, n = params.m, params.n
    const = m * n if params.hazard_form == "printed" else -m * n
    return (psi * psi + (m - n) * psi + const) / (m * n) * p_val


def smoothness_cost(actions: Sequence[ControlAction]) -> float:
    """Sum of squared longitudinal and lateral accelerations."""
    return float(sum(a.s_ddot * a.s_ddot + a.l_ddot * a.l_ddot for a in actions))


def compliance_cost(
    traj: Trajectory, ref: Trajectory, q_weights: Sequence[float]
) -> float:
    """Route-adherence cost: sum_k (x_k - x_ref_k)^T Q (x_k - x_ref_k)."""
    if len(traj) != len(ref):
        raise ValueError(f"length mismatch: {len(traj)} vs {len(ref)}")
    if abs(traj.dt - ref.dt) > 1e-12:
        raise ValueError(f"dt mismatch: {traj.dt} vs {ref.dt}")
    q = np.asarray(q_weights, dtype=float)
    diff = traj.as_array()[:, :4] - ref.as_array()[:, :4]
    return float(np.sum((diff * diff) * q[None, :]))


def total_utility(j_h: float, j_s: float, j_c: float, params: RiskParams) -> float:
    """Weighted combination omega_h*J_h + omega_s*J_s + omega_c*J_c."""
    return params.omega_h * j_h + params.omega_s * j_s + params.omega_c * j_c


def is_severe_conflict(pet_value: float, params: RiskParams) -> bool:
    """True iff the PET falls strictly below the severe-conflict boundary."""
    if pet_value < 0:
        raise ValueError("pet must be non-negative")
    return pet_value < params.severe_pet_threshold
