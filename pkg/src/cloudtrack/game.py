"""Leader-follower interaction game between the object target and the VUT.

The object target (leader) picks a crossing strategy sigma in {rush, yield}
and an acceleration sequence over a receding horizon; the vehicle under test
(follower) best-responds with a convex tracking OCP under separation
constraints.  The leader problem embeds the follower's optimality conditions
exactly: every leader candidate is evaluated against the follower's true
argmin, whose KKT multipliers certify the single-level reformulation.

Sign conventions (fixed throughout the package): the predicted signed PET is
psi = t_leader@CP - t_follower@CP.  rush means the leader clears the conflict
point first (psi <= 0, unsafe band [-m, 0)); yield means it clears second
(psi >= 0, unsafe band (0, n]).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .kinematics import ControlAction, FrenetState, Trajectory
from .kinematics import step as kinematics_step
from .qp import QpResult, solve_qp
from .risk import RiskParams, hazard_quadratic

__all__ = [
    "RUSH",
    "YIELD",
    "GameConfig",
    "GameRefs",
    "ReferenceSchedule",
    "KktCertificate",
    "FollowerResponse",
    "GameSolution",
    "SeparationSpec",
    "follower_best_response",
    "leader_ocp",
    "stackelberg_solve",
    "run_game_loop",
    "brute_force_oracle",
    "GameStep",
    "GameLog",
]

RUSH = "rush"
YIELD = "yield"

# How close two strategy costs must be before the deterministic rush
# preference decides instead of the raw comparison.
_SIGMA_TIE_TOL = 1e-4


@dataclass(frozen=True)
class GameConfig:
    """Horizon, bounds, safety margins, and solver knobs shared by both OCPs."""

    horizon: int = 6
    dt: float = 0.5
    a_min: float = -3.0
    a_max: float = 2.0
    v_max: float = 12.0
    s_safe: float = 4.0
    l_safe: float = 2.0
    conflict_window: float = 12.0
    delta_max: float = 10.0  # deadlock cutoff for one interaction, s
    max_outer_iters: int = 60
    tol: float = 1e-6
    effort_weights: tuple[float, float] = (1.0, 1.0)  # R diagonal
    track_weights: tuple[float, float, float, float] = (1.0, 20.0, 1.0, 5.0)
    v_floor: float = 0.05  # speed floor for crossing-time extrapolation

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.a_min >= self.a_max:
            raise ValueError("a_min must be below a_max")
        if self.delta_max <= 0:
            raise ValueError("delta_max must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class KktCertificate:
    """Multipliers and residuals of the follower's optimality system."""

    lam: np.ndarray  # dynamics (equality) multipliers, one 4-vector per step
    mu: np.ndarray  # inequality multipliers, one per constraint row
    stationarity_residual: float
    complementarity_residual: float


@dataclass(frozen=True)
class FollowerResponse:
    actions: tuple[ControlAction, ...]
    traj: Trajectory
    cost: float
    kkt: KktCertificate | None
    status: str  # "optimal" | "infeasible" | "max-iter"
    slack_report: np.ndarray | None = None


@dataclass(frozen=True)
class GameSolution:
    sigma_star: str
    leader_actions: tuple[ControlAction, ...]
    follower_actions: tuple[ControlAction, ...]
    leader_traj: Trajectory
    follower_traj: Trajectory
    j_leader: float
    j_follower: float
    kkt: KktCertificate | None
    status: str  # "optimal" | "max-iter" | "infeasible"
    psi_pred: float | None


@dataclass(frozen=True)
class SeparationSpec:
    """Per-step linear bounds on the follower's longitudinal/lateral position.

    NaN entries are inactive.  Arrays cover predicted steps 1..N.
    """

    lower_s: np.ndarray
    upper_s: np.ndarray
    lower_l: np.ndarray
    upper_l: np.ndarray

    @classmethod
    def inactive(cls, n: int) -> "SeparationSpec":
        nan = np.full(n, np.nan)
        return cls(nan.copy(), nan.copy(), nan.copy(), nan.copy())

    @classmethod
    def raw_from_leader(
        cls, leader_traj: Trajectory, x0_f: FrenetState, cfg: GameConfig
    ) -> "SeparationSpec":
        """Shared-corridor form: follower holds s and l margins on the leader.

        Rows activate only where the follower's drift prediction and the
        leader are within the conflict window of each other; elsewhere the
        crossing geometry would make the bounds unsatisfiable by construction.
        """
        n = cfg.horizon
        spec = cls.inactive(n)
        arr = leader_traj.as_array()
        for i in range(1, n + 1):
            s_l, l_l = arr[i, 0], arr[i, 2]
            s_nom = x0_f.s + i * cfg.dt * x0_f.s_dot
            if abs(s_l - s_nom) <= cfg.conflict_window:
                spec.lower_s[i - 1] = s_l + cfg.s_safe
                spec.lower_l[i - 1] = l_l + cfg.l_safe
        return spec

    @classmethod
    def crossing_branch(
        cls,
        leader_traj: Trajectory,
        x0_f: FrenetState,
        cfg: GameConfig,
        cp_s_leader: float,
        cp_s_follower: float,
        branch: str,
    ) -> "SeparationSpec":
        """Conflict-zone ordering constraint for crossing paths.

        Both positions are rebased onto the conflict point so the leader's
        progress maps into the follower's frame.  branch "follower_first"
        keeps the follower at least s_safe ahead through the zone (the
        leader yields); "leader_first" keeps it at least s_safe behind.
        """
        n = cfg.horizon
        spec = cls.inactive(n)
        arr = leader_traj.as_array()
        for i in range(1, n + 1):
            rel_l = arr[i, 0] - cp_s_leader
            rel_f_nom = (x0_f.s + i * cfg.dt * x0_f.s_dot) - cp_s_follower
            if abs(rel_l) > cfg.conflict_window or abs(rel_f_nom) > cfg.conflict_window:
                continue
            bound = cp_s_follower + rel_l
            if branch == "follower_first":
                spec.lower_s[i - 1] = bound + cfg.s_safe
            elif branch == "leader_first":
                spec.upper_s[i - 1] = bound - cfg.s_safe
            else:
                raise ValueError(f"unknown branch {branch!r}")
        return spec


@dataclass(frozen=True)
class GameRefs:
    """Per-solve reference trajectories and conflict coordinates."""

    ref_leader: Trajectory
    ref_follower: Trajectory
    cp_s_leader: float | None
    cp_s_follower: float | None


@dataclass(frozen=True)
class ReferenceSchedule:
    """Nominal route schedule generating receding-horizon references.

    References are anchored at each actor's current position and advance at
    the nominal speed, i.e. "keep doing the planned motion from here".
    """

    v_ref_leader: float
    v_ref_follower: float
    cp_s_leader: float | None
    cp_s_follower: float | None
    l_ref_leader: float = 0.0
    l_ref_follower: float = 0.0

    def refs_at(
        self, x_leader: FrenetState, x_follower: FrenetState, cfg: GameConfig
    ) -> GameRefs:
        return GameRefs(
            ref_leader=constant_speed_reference(
                x_leader.s, self.v_ref_leader, self.l_ref_leader, cfg.horizon, cfg.dt, x_leader.t
            ),
            ref_follower=constant_speed_reference(
                x_follower.s, self.v_ref_follower, self.l_ref_follower, cfg.horizon, cfg.dt, x_follower.t
            ),
            cp_s_leader=self.cp_s_leader,
            cp_s_follower=self.cp_s_follower,
        )


def constant_speed_reference(
    s0: float, v: float, l: float, n_steps: int, dt: float, t0: float = 0.0
) -> Trajectory:
    states = [
        FrenetState(s0 + k * dt * v, v, l, 0.0, t=t0 + k * dt) for k in range(n_steps + 1)
    ]
    return Trajectory(states, dt)


# --------------------------------------------------------------------------
# Condensed horizon algebra
# --------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _horizon_matrices(n: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Prediction matrices: X = Phi x0 + Gamma U for steps 1..n."""
    from .kinematics import dynamics_matrices

    A, B = dynamics_matrices(dt)
    phi = np.zeros((4 * n, 4))
    gamma = np.zeros((4 * n, 2 * n))
    A_pow = np.eye(4)
    powers = [A_pow]
    for _ in range(n):
        A_pow = A @ A_pow
        powers.append(A_pow)
    for i in range(1, n + 1):
        phi[4 * (i - 1) : 4 * i] = powers[i]
        for j in range(i):
            gamma[4 * (i - 1) : 4 * i, 2 * j : 2 * j + 2] = powers[i - 1 - j] @ B
    return phi, gamma


@lru_cache(maxsize=32)
def _cost_matrices(
    n: int, dt: float, q: tuple, r: tuple
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    phi, gamma = _horizon_matrices(n, dt)
    q_bar = np.tile(np.asarray(q, dtype=float), n)
    r_bar = np.tile(np.asarray(r, dtype=float), n)
    H = 2.0 * (gamma.T @ (q_bar[:, None] * gamma) + np.diag(r_bar))
    H = 0.5 * (H + H.T)
    return H, q_bar, r_bar


def _traj_from_prediction(x0: FrenetState, x_flat: np.ndarray, n: int, dt: float) -> Trajectory:
    states = [x0]
    for i in range(n):
        row = x_flat[4 * i : 4 * i + 4]
        states.append(
            FrenetState(float(row[0]), float(row[1]), float(row[2]), float(row[3]), t=x0.t + (i + 1) * dt)
        )
    return Trajectory(states, dt)


def _actions_from_flat(u: np.ndarray, n: int) -> tuple[ControlAction, ...]:
    return tuple(ControlAction(float(u[2 * j]), float(u[2 * j + 1])) for j in range(n))


def predicted_crossing(traj: Trajectory, s_cp: float, v_floor: float) -> float | None:
    """Crossing time of the horizon rollout, constant-speed extrapolated past it.

    In-horizon crossings use the same linear interpolation as the metrics
    path; beyond the horizon the final state coasts at its terminal speed.
    A terminal speed at or below v_floor counts as "never crosses".
    """
    from .kinematics import crossing_time

    t = crossing_time(traj, s_cp)
    if t is not None:
        return t
    last = traj.states[-1]
    if last.s_dot <= v_floor:
        return None
    return last.t + (s_cp - last.s) / last.s_dot


# --------------------------------------------------------------------------
# Follower best response (convex QP)
# --------------------------------------------------------------------------


def _check_horizon_traj(traj: Trajectory, cfg: GameConfig, label: str):
    if len(traj) < cfg.horizon + 1:
        raise ValueError(f"{label} must supply at least horizon+1 states")
    if abs(traj.dt - cfg.dt) > 1e-9:
        raise ValueError(f"{label} dt {traj.dt} does not match config dt {cfg.dt}")


def follower_best_response(
    x0_f: FrenetState,
    leader_traj: Trajectory,
    ref_f: Trajectory,
    cfg: GameConfig,
    separation: SeparationSpec | None = None,
    warm: np.ndarray | None = None,
) -> FollowerResponse:
    """Tracking-optimal follower controls given the leader's planned motion.

    Minimizes the quadratic tracking-plus-effort cost subject to the
    double-integrator dynamics, acceleration box, speed band [0, v_max], and
    the active separation rows.  The returned certificate carries the
    dynamics multipliers recovered by the costate recursion plus the
    inequality multipliers straight from the QP, so stationarity and
    complementarity can be asserted directly.
    """
    n = cfg.horizon
    _check_horizon_traj(leader_traj, cfg, "leader_traj")
    _check_horizon_traj(ref_f, cfg, "ref_f")
    phi, gamma = _horizon_matrices(n, cfg.dt)
    H, q_bar, r_bar = _cost_matrices(n, cfg.dt, cfg.track_weights, cfg.effort_weights)

    x0 = x0_f.as_vector()
    drift = phi @ x0
    ref_flat = ref_f.as_array()[1 : n + 1, :4].reshape(-1)
    err0 = drift - ref_flat
    f = 2.0 * gamma.T @ (q_bar * err0)
    const = float(np.sum(q_bar * err0 * err0))

    s_idx = np.arange(n) * 4
    v_idx = s_idx + 1
    l_idx = s_idx + 2

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    meta: list[tuple[str, int, int, float]] = []  # (kind, step, state_comp, sign)

    eye = np.eye(2 * n)
    for j in range(2 * n):
        rows.append(eye[j])
        rhs.append(cfg.a_max)
        meta.append(("box_hi", j // 2, -1, +1.0))
        rows.append(-eye[j])
        rhs.append(-cfg.a_min)
        meta.append(("box_lo", j // 2, -1, -1.0))

    for i in range(n):
        rows.append(gamma[v_idx[i]])
        rhs.append(cfg.v_max - drift[v_idx[i]])
        meta.append(("vel_hi", i + 1, 1, +1.0))
        rows.append(-gamma[v_idx[i]])
        rhs.append(drift[v_idx[i]])
        meta.append(("vel_lo", i + 1, 1, -1.0))

    if separation is None:
        separation = SeparationSpec.raw_from_leader(leader_traj, x0_f, cfg)
    bound_sets = (
        (separation.lower_s, s_idx, 0, -1.0, "sep_s_lo"),
        (separation.upper_s, s_idx, 0, +1.0, "sep_s_hi"),
        (separation.lower_l, l_idx, 2, -1.0, "sep_l_lo"),
        (separation.upper_l, l_idx, 2, +1.0, "sep_l_hi"),
    )
    for bounds, idx, comp, sign, kind in bound_sets:
        for i in range(n):
            b = bounds[i]
            if math.isnan(b):
                continue
            rows.append(sign * gamma[idx[i]])
            rhs.append(sign * (b - drift[idx[i]]))
            meta.append((kind, i + 1, comp, sign))

    G = np.array(rows)
    h = np.array(rhs)
    # Cheap feasible starts avoid the phase-1 LP in the common cases where a
    # bound merely asks the follower to hurry up or hold back.
    x_start = warm
    if x_start is None or np.any(G @ x_start > h + 1e-9):
        x_start = None
        for profile in (0.0, cfg.a_max, cfg.a_min):
            cand = np.zeros(2 * n)
            cand[0::2] = profile
            if np.all(G @ cand <= h + 1e-9):
                x_start = cand
                break
    res = solve_qp(H, f, G, h, x0=x_start, tol=1e-10)

    if res.status == "infeasible":
        return FollowerResponse(
            actions=(),
            traj=_traj_from_prediction(x0_f, drift, n, cfg.dt),
            cost=float("inf"),
            kkt=None,
            status="infeasible",
            slack_report=res.slack_report,
        )

    u = res.x
    x_flat = drift + gamma @ u
    traj = _traj_from_prediction(x0_f, x_flat, n, cfg.dt)
    cost = res.obj + const
    kkt = _follower_certificate(x_flat, ref_flat, res, meta, cfg, n)
    status = "optimal" if res.status == "optimal" else "max-iter"
    return FollowerResponse(
        actions=_actions_from_flat(u, n),
        traj=traj,
        cost=float(cost),
        kkt=kkt,
        status=status,
    )


def _follower_certificate(
    x_flat: np.ndarray,
    ref_flat: np.ndarray,
    res: QpResult,
    meta: list[tuple[str, int, int, float]],
    cfg: GameConfig,
    n: int,
) -> KktCertificate:
    """Assemble the certificate: dynamics multipliers via the costate
    recursion plus the QP's inequality multipliers and residuals.

    States are eliminated before solving, so primal feasibility of the
    dynamics holds by construction and the condensed stationarity residual
    equals the full-system control stationarity.
    """
    from .kinematics import dynamics_matrices

    A, _ = dynamics_matrices(cfg.dt)
    q = np.asarray(cfg.track_weights, dtype=float)

    d = np.zeros((n, 4))
    for i in range(n):
        xi = x_flat[4 * i : 4 * i + 4]
        ri = ref_flat[4 * i : 4 * i + 4]
        d[i] = 2.0 * q * (xi - ri)
    for row_idx, (_kind, step, comp, sign) in enumerate(meta):
        if comp >= 0 and res.mu[row_idx] != 0.0:
            d[step - 1, comp] += sign * res.mu[row_idx]

    lam = np.zeros((n, 4))
    lam[n - 1] = -d[n - 1]
    for i in range(n - 2, -1, -1):
        lam[i] = A.T @ lam[i + 1] - d[i]

    return KktCertificate(
        lam=lam.reshape(-1),
        mu=res.mu.copy(),
        stationarity_residual=float(res.stationarity_residual),
        complementarity_residual=float(res.complementarity_residual),
    )


# --------------------------------------------------------------------------
# Leader OCP with the follower's optimality embedded
# --------------------------------------------------------------------------


class _LeaderProblem:
    """Shared evaluation context: one instance per (initial states, sigma).

    Each candidate leader sequence is scored against the follower's exact
    best response, so the embedded optimality system holds with zero
    complementarity relaxation at every evaluated point.  Results are cached
    because SLSQP probes objective and constraints at repeated points.
    """

    def __init__(self, x0_l, x0_f, sigma, refs, cfg, risk, density):
        self.x0_l = x0_l
        self.x0_f = x0_f
        self.sigma = sigma
        self.refs = refs
        self.cfg = cfg
        self.risk = risk
        self.density = density
        n = cfg.horizon
        self.n = n
        self.phi, self.gamma = _horizon_matrices(n, cfg.dt)
        self.drift = self.phi @ x0_l.as_vector()
        self.ref_flat = refs.ref_leader.as_array()[1 : n + 1, :4].reshape(-1)
        self.q_bar = np.tile(np.asarray(risk.q_diag, dtype=float), n)
        self.r_bar = np.tile(np.asarray(cfg.effort_weights, dtype=float), n)
        v_rows = np.arange(n) * 4 + 1
        self.g_vel = self.gamma[v_rows]
        self.drift_vel = self.drift[v_rows]
        self.branch = "leader_first" if sigma == RUSH else "follower_first"
        self._cache: dict[bytes, dict] = {}
        self._warm_follower: np.ndarray | None = None

    def evaluate(self, u: np.ndarray) -> dict:
        key = np.asarray(u, dtype=float).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        u = np.asarray(u, dtype=float)
        x_flat = self.drift + self.gamma @ u
        leader_traj = _traj_from_prediction(self.x0_l, x_flat, self.n, self.cfg.dt)

        err = x_flat - self.ref_flat
        j_track = float(np.sum(self.q_bar * err * err))
        j_effort = float(np.sum(self.r_bar * u * u))

        if self.refs.cp_s_leader is not None:
            sep = SeparationSpec.crossing_branch(
                leader_traj,
                self.x0_f,
                self.cfg,
                self.refs.cp_s_leader,
                self.refs.cp_s_follower,
                self.branch,
            )
        else:
            sep = SeparationSpec.raw_from_leader(leader_traj, self.x0_f, self.cfg)
        fr = follower_best_response(
            self.x0_f,
            leader_traj,
            self.refs.ref_follower,
            self.cfg,
            separation=sep,
            warm=self._warm_follower,
        )

        psi = None
        j_hazard = 0.0
        if fr.status != "infeasible":
            self._warm_follower = np.array(
                [c for a in fr.actions for c in (a.s_ddot, a.l_ddot)]
            )
            if self.refs.cp_s_leader is not None:
                t_l = predicted_crossing(leader_traj, self.refs.cp_s_leader, self.cfg.v_floor)
                t_f = predicted_crossing(fr.traj, self.refs.cp_s_follower, self.cfg.v_floor)
                if t_l is not None and t_f is not None:
                    psi = t_l - t_f
                    j_hazard = hazard_quadratic(psi, self.risk, self.density)
            total = (
                self.risk.omega_c * j_track
                + self.risk.omega_s * j_effort
                + self.risk.omega_h * j_hazard
            )
        else:
            total = 1e9 + float(np.max(fr.slack_report))

        out = {
            "u": u.copy(),
            "j_total": total,
            "j_track": j_track,
            "j_effort": j_effort,
            "j_hazard": j_hazard,
            "psi": psi,
            "follower": fr,
            "leader_traj": leader_traj,
        }
        self._cache[key] = out
        return out

    def sigma_violation(self, u: np.ndarray) -> float:
        """>= 0 when the predicted ordering matches sigma (no conflict counts)."""
        ev = self.evaluate(u)
        psi = ev["psi"]
        if psi is None:
            return 1.0
        return -psi if self.sigma == RUSH else psi

    def velocity_slack(self, u: np.ndarray) -> np.ndarray:
        v = self.drift_vel + self.g_vel @ u
        return np.concatenate([self.cfg.v_max - v, v])

    def feasible(self, u: np.ndarray, tol: float = 1e-6) -> bool:
        if np.any(u < self.cfg.a_min - tol) or np.any(u > self.cfg.a_max + tol):
            return False
        if np.min(self.velocity_slack(u)) < -tol:
            return False
        if self.sigma_violation(u) < -tol:
            return False
        return self.evaluate(u)["follower"].status != "infeasible"


def _leader_starts(problem: _LeaderProblem, warm: np.ndarray | None) -> list[np.ndarray]:
    cfg = problem.cfg
    n = problem.n
    starts = []
    if warm is not None:
        starts.append(np.asarray(warm, dtype=float))
    starts.append(np.zeros(2 * n))
    # Coarse constant-acceleration scan seeds the basin search.
    levels = (cfg.a_min, 0.5 * cfg.a_min, 0.0, 0.5 * cfg.a_max, cfg.a_max)
    best_level, best_val = None, math.inf
    for a in levels:
        u = np.zeros(2 * n)
        u[0::2] = a
        val = problem.evaluate(u)["j_total"]
        if problem.sigma_violation(u) >= -1e-9 and val < best_val:
            best_level, best_val = a, val
    if best_level is not None and best_level != 0.0:
        u = np.zeros(2 * n)
        u[0::2] = best_level
        starts.append(u)
    # Drop duplicates while preserving order.
    unique = []
    for s in starts:
        if not any(np.array_equal(s, t) for t in unique):
            unique.append(s)
    return unique


def leader_ocp(
    x0_l: FrenetState,
    x0_f: FrenetState,
    sigma: str,
    refs: GameRefs,
    cfg: GameConfig,
    risk: RiskParams,
    density: Callable[[float], float],
    warm: np.ndarray | None = None,
) -> GameSolution:
    """Leader cost minimization for a fixed strategy label.

    The single-level system is handled by embedding the follower's exact
    best response inside the objective (complementarity enforced to solver
    precision at every iterate) and running an SQP loop over the leader
    controls with the strategy's crossing-order sign constraint.
    """
    if sigma not in (RUSH, YIELD):
        raise ValueError(f"unknown strategy {sigma!r}")
    problem = _LeaderProblem(x0_l, x0_f, sigma, refs, cfg, risk, density)
    n = cfg.horizon
    bounds = [(cfg.a_min, cfg.a_max)] * (2 * n)
    constraints = [
        {"type": "ineq", "fun": problem.velocity_slack,
         "jac": lambda u: np.vstack([-problem.g_vel, problem.g_vel])},
        {"type": "ineq", "fun": lambda u: np.atleast_1d(problem.sigma_violation(u))},
    ]

    best_u, best_val = None, math.inf
    converged = False
    for u0 in _leader_starts(problem, warm):
        res = minimize(
            lambda u: problem.evaluate(u)["j_total"],
            u0,
            method="SLSQP",
            bounds=bounds,
            constraints=constraints,
            options={"maxiter": cfg.max_outer_iters, "ftol": 1e-10},
        )
        u_cand = np.clip(res.x, cfg.a_min, cfg.a_max)
        if problem.feasible(u_cand):
            val = problem.evaluate(u_cand)["j_total"]
            if val < best_val:
                best_u, best_val = u_cand, val
                converged = converged or res.success
        if problem.feasible(u0):
            val0 = problem.evaluate(u0)["j_total"]
            if val0 < best_val:
                best_u, best_val = u0, val0

    if best_u is None:
        return GameSolution(
            sigma_star=sigma,
            leader_actions=(),
            follower_actions=(),
            leader_traj=_traj_from_prediction(x0_l, problem.drift, n, cfg.dt),
            follower_traj=_traj_from_prediction(x0_f, problem.phi @ x0_f.as_vector(), n, cfg.dt),
            j_leader=float("inf"),
            j_follower=float("inf"),
            kkt=None,
            status="infeasible",
            psi_pred=None,
        )

    ev = problem.evaluate(best_u)
    fr = ev["follower"]
    return GameSolution(
        sigma_star=sigma,
        leader_actions=_actions_from_flat(best_u, n),
        follower_actions=fr.actions,
        leader_traj=ev["leader_traj"],
        follower_traj=fr.traj,
        j_leader=float(ev["j_total"]),
        j_follower=float(fr.cost),
        kkt=fr.kkt,
        status="optimal" if converged else "max-iter",
        psi_pred=ev["psi"],
    )


def _tracking_solution(x0_l, x0_f, refs, cfg, risk, density) -> GameSolution:
    """Hazard-free terminal solution used when no conflict lies ahead."""
    n = cfg.horizon
    phi, gamma = _horizon_matrices(n, cfg.dt)
    H, q_bar, r_bar = _cost_matrices(n, cfg.dt, tuple(risk.q_diag), cfg.effort_weights)
    drift = phi @ x0_l.as_vector()
    ref_flat = refs.ref_leader.as_array()[1 : n + 1, :4].reshape(-1)
    err0 = drift - ref_flat
    f = 2.0 * gamma.T @ (q_bar * err0)

    eye = np.eye(2 * n)
    v_rows = np.arange(n) * 4 + 1
    G = np.vstack([eye, -eye, gamma[v_rows], -gamma[v_rows]])
    h = np.concatenate(
        [
            np.full(2 * n, cfg.a_max),
            np.full(2 * n, -cfg.a_min),
            cfg.v_max - drift[v_rows],
            drift[v_rows],
        ]
    )
    res = solve_qp(H, f, G, h)
    u = res.x
    x_flat = drift + gamma @ u
    leader_traj = _traj_from_prediction(x0_l, x_flat, n, cfg.dt)
    fr = follower_best_response(
        x0_f, leader_traj, refs.ref_follower, cfg, separation=SeparationSpec.inactive(n)
    )
    err = x_flat - ref_flat
    j_leader = risk.omega_c * float(np.sum(q_bar * err * err)) + risk.omega_s * float(
        np.sum(r_bar * u * u)
    )
    return GameSolution(
        sigma_star=RUSH,
        leader_actions=_actions_from_flat(u, n),
        follower_actions=fr.actions,
        leader_traj=leader_traj,
        follower_traj=fr.traj,
        j_leader=j_leader,
        j_follower=fr.cost,
        kkt=fr.kkt,
        status="optimal",
        psi_pred=None,
    )


def stackelberg_solve(
    x0_l: FrenetState,
    x0_f: FrenetState,
    refs: GameRefs,
    cfg: GameConfig,
    risk: RiskParams,
    density: Callable[[float], float],
    warm: dict[str, np.ndarray] | None = None,
) -> GameSolution:
    """Solve both strategy candidates and keep the cheaper one.

    Near-ties (within 1e-4) resolve to rush so repeated runs stay
    deterministic on symmetric instances.
    """
    no_conflict = (
        refs.cp_s_leader is None
        or refs.cp_s_follower is None
        or x0_l.s >= refs.cp_s_leader
        or x0_f.s >= refs.cp_s_follower
    )
    if no_conflict:
        return _tracking_solution(x0_l, x0_f, refs, cfg, risk, density)

    warm = warm or {}
    candidates = {}
    for sigma in (RUSH, YIELD):
        candidates[sigma] = leader_ocp(
            x0_l, x0_f, sigma, refs, cfg, risk, density, warm=warm.get(sigma)
        )
    ok = {s: c for s, c in candidates.items() if c.status != "infeasible"}
    if not ok:
        return candidates[RUSH]
    if len(ok) == 1:
        return next(iter(ok.values()))
    j_rush, j_yield = candidates[RUSH].j_leader, candidates[YIELD].j_leader
    if j_rush <= j_yield + _SIGMA_TIE_TOL:
        return candidates[RUSH]
    return candidates[YIELD]


# --------------------------------------------------------------------------
# Receding-horizon interaction loop
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GameStep:
    t: float
    solution: GameSolution
    action_leader: ControlAction
    action_follower: ControlAction
    state_leader: FrenetState
    state_follower: FrenetState


@dataclass(frozen=True)
class GameLog:
    steps: tuple[GameStep, ...]
    reason: str
    elapsed: float
    dt: float


def run_game_loop(
    x0_l: FrenetState,
    x0_f: FrenetState,
    schedule: ReferenceSchedule,
    cfg: GameConfig,
    risk: RiskParams,
    density: Callable[[float], float],
    vut_policy: Callable[[FrenetState, FrenetState, ReferenceSchedule, GameConfig, float], ControlAction],
) -> GameLog:
    """Re-solve the game each control step until the conflict resolves.

    Terminates when either actor passes the conflict point or the elapsed
    interaction time reaches the deadlock cutoff delta_max.
    """
    xl, xf = x0_l, x0_f
    steps: list[GameStep] = []
    warm: dict[str, np.ndarray] = {}
    elapsed = 0.0
    reason = "deadlock-cutoff"
    k = 0
    while True:
        if schedule.cp_s_leader is None or schedule.cp_s_follower is None:
            reason = "no-conflict"
            break
        if xl.s >= schedule.cp_s_leader:
            reason = "leader-passed-cp"
            break
        if xf.s >= schedule.cp_s_follower:
            reason = "follower-passed-cp"
            break
        if elapsed >= cfg.delta_max - 1e-9:
            reason = "deadlock-cutoff"
            break
        refs = schedule.refs_at(xl, xf, cfg)
        sol = stackelberg_solve(xl, xf, refs, cfg, risk, density, warm=warm)
        if sol.leader_actions:
            a_l = sol.leader_actions[0]
            u = np.array([c for a in sol.leader_actions for c in (a.s_ddot, a.l_ddot)])
            shifted = np.concatenate([u[2:], u[-2:]])
            warm[sol.sigma_star] = shifted
        else:
            a_l = ControlAction(0.0, 0.0)
        a_f = vut_policy(xf, xl, schedule, cfg, elapsed)
        xl = kinematics_step(xl, a_l, cfg.dt, cfg.v_max)
        xf = kinematics_step(xf, a_f, cfg.dt, cfg.v_max)
        k += 1
        elapsed = k * cfg.dt
        steps.append(GameStep(elapsed, sol, a_l, a_f, xl, xf))
    return GameLog(tuple(steps), reason, elapsed, cfg.dt)


# --------------------------------------------------------------------------
# Exhaustive verification oracle
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleResult:
    sigma_star: str
    actions: tuple[ControlAction, ...]
    j_leader: float
    per_sigma: dict


def brute_force_oracle(
    x0_l: FrenetState,
    x0_f: FrenetState,
    refs: GameRefs,
    cfg: GameConfig,
    risk: RiskParams,
    density: Callable[[float], float],
    levels_s: Sequence[float] = (-1.0, 0.0, 1.0),
    levels_l: Sequence[float] = (0.0,),
) -> OracleResult:
    """Global grid optimum over leader sequences and both strategies.

    Follower responses come from the same best-response solver; leader
    costs and feasibility rules are evaluated by the exact machinery the
    continuous solver uses, so only the search route differs.
    """
    if cfg.horizon > 4:
        raise ValueError("oracle refused: horizon exceeds tractability guard (N <= 4)")
    if len(levels_s) > 5 or len(levels_l) > 5:
        raise ValueError("oracle refused: more than 5 grid levels per axis")
    for lv in list(levels_s) + list(levels_l):
        if lv < cfg.a_min - 1e-12 or lv > cfg.a_max + 1e-12:
            raise ValueError("grid level outside acceleration bounds")

    n = cfg.horizon
    per_sigma: dict[str, dict] = {}
    step_choices = list(itertools.product(levels_s, levels_l))
    for sigma in (RUSH, YIELD):
        problem = _LeaderProblem(x0_l, x0_f, sigma, refs, cfg, risk, density)
        best = {"j": math.inf, "u": None}
        for combo in itertools.product(step_choices, repeat=n):
            u = np.array([c for pair in combo for c in pair])
            if np.min(problem.velocity_slack(u)) < -1e-9:
                continue
            if problem.sigma_violation(u) < -1e-9:
                continue
            ev = problem.evaluate(u)
            if ev["follower"].status == "infeasible":
                continue
            if ev["j_total"] < best["j"]:
                best = {"j": ev["j_total"], "u": u}
        per_sigma[sigma] = best

    feasible = {s: b for s, b in per_sigma.items() if b["u"] is not None}
    if not feasible:
        return OracleResult(RUSH, (), math.inf, per_sigma)
    j_rush = per_sigma[RUSH]["j"]
    j_yield = per_sigma[YIELD]["j"]
    sigma_star = RUSH if j_rush <= j_yield + _SIGMA_TIE_TOL else YIELD
    if per_sigma[sigma_star]["u"] is None:
        sigma_star = next(iter(feasible))
    chosen = per_sigma[sigma_star]
    return OracleResult(
        sigma_star, _actions_from_flat(chosen["u"], n), float(chosen["j"]), per_sigma
    )
