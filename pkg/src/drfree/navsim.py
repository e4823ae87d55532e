"""Planar navigation benchmark: noisy point robot, biased trained model.

True dynamics follow x' ~ N(x + u * dt, Sigma) on a 3 m x 2 m workspace
with dt = 0.033 s, per-axis noise 0.001 m^2 and speed clipped to 0.2 m/s
by norm.  The trained model is deliberately wrong: its mean carries the
bias beta * x injected into the training positions, and its covariance is
a per-stage parameter emulating successive training stages.  The state
cost combines a quadratic goal term (weight 50), six Gaussian obstacle
bumps (weight 20, covariance 0.025 I) and wall penalties (weight 5,
sigma 0.02).  The ambiguity radius is the KL divergence from a tight
goal-centered reference Gaussian (0.0001 I) to the trained model, clipped
at 100.

Obstacle centers, start positions, goal position, thresholds and the
generative-state spread are artifact defaults chosen for a desk-scale
run, all overridable through the JSON config.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .ambiguity import AmbiguitySpec
from .densities import GaussianDensity, kl_gaussian
from .errors import DegenerateRadius
from .policy import (
    ActionGrid,
    PolicyEngine,
    drfree_policy_detail,
    sample_action,
    unaware_policy_detail,
)
from .rng import Rng

TRUE_NOISE_COV = np.array([[0.001, 0.0002], [0.0002, 0.001]])


@dataclass(frozen=True)
class Workspace:
    x_min: float = -1.5
    x_max: float = 1.5
    y_min: float = -1.0
    y_max: float = 1.0
    dt: float = 0.033
    speed_clip: float = 0.2

    def __post_init__(self):
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError("workspace bounds must be ordered")
        if self.dt <= 0 or self.speed_clip <= 0:
            raise ValueError("dt and speed_clip must be positive")

    def contains(self, x) -> bool:
        return bool(
            self.x_min <= x[0] <= self.x_max and self.y_min <= x[1] <= self.y_max
        )

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.array(
            [np.clip(x[0], self.x_min, self.x_max), np.clip(x[1], self.y_min, self.y_max)]
        )

    def wall_distance(self, x) -> float:
        return float(
            min(x[0] - self.x_min, self.x_max - x[0], x[1] - self.y_min, self.y_max - x[1])
        )


DEFAULT_OBSTACLES = np.array(
    [[0.6, 0.35], [0.6, -0.35], [-0.6, 0.35], [-0.6, -0.35], [0.0, 0.5], [0.0, -0.5]]
)

DEFAULT_GOAL = np.array([0.3, 0.0])


@dataclass
class CostSpec:
    goal: np.ndarray = field(default_factory=lambda: DEFAULT_GOAL.copy())
    goal_weight: float = 50.0
    obstacles: np.ndarray = field(default_factory=lambda: DEFAULT_OBSTACLES.copy())
    obstacle_cov: float = 0.025
    obstacle_weight: float = 20.0
    boundary_sigma: float = 0.02
    boundary_weight: float = 5.0

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=np.float64)
        self.obstacles = np.atleast_2d(np.asarray(self.obstacles, dtype=np.float64))
        if self.goal_weight <= 0 or self.obstacle_weight <= 0 or self.boundary_weight <= 0:
            raise ValueError("cost weights must be positive")


def state_cost(points: np.ndarray, spec: CostSpec, ws: Workspace) -> np.ndarray:
    # Positions beyond a wall price like the wall itself: predicted states are
    # clamped into the workspace before the bump terms are evaluated, matching
    # the simulator's clamping and keeping the wall penalty one-sided.
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    pts = np.column_stack(
        [np.clip(pts[:, 0], ws.x_min, ws.x_max), np.clip(pts[:, 1], ws.y_min, ws.y_max)]
    )
    goal_term = spec.goal_weight * np.sum((pts - spec.goal) ** 2, axis=1)
    d2 = np.sum((pts[:, None, :] - spec.obstacles[None, :, :]) ** 2, axis=2)
    peaks = np.exp(-0.5 * d2 / spec.obstacle_cov) / (2.0 * np.pi * spec.obstacle_cov)
    obstacle_term = spec.obstacle_weight * peaks.sum(axis=1)
    sig = spec.boundary_sigma
    norm = sig * np.sqrt(2.0 * np.pi)
    walls_x = np.exp(-0.5 * ((pts[:, 0:1] - np.array([ws.x_min, ws.x_max])) / sig) ** 2)
    walls_y = np.exp(-0.5 * ((pts[:, 1:2] - np.array([ws.y_min, ws.y_max])) / sig) ** 2)
    boundary_term = spec.boundary_weight * (walls_x.sum(axis=1) + walls_y.sum(axis=1)) / norm
    return goal_term + obstacle_term + boundary_term


def clip_speed(u: np.ndarray, ws: Workspace) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    speed = float(np.linalg.norm(u))
    if speed > ws.speed_clip:
        return u * (ws.speed_clip / speed)
    return u


def true_model(x: np.ndarray, u: np.ndarray, ws: Workspace) -> GaussianDensity:
    u_eff = clip_speed(u, ws)
    return GaussianDensity(np.asarray(x) + u_eff * ws.dt, TRUE_NOISE_COV)


def true_step(x: np.ndarray, u: np.ndarray, ws: Workspace, rng: Rng) -> np.ndarray:
    model = true_model(x, u, ws)
    z = rng.standard_normal(2)
    nxt = model.mean + np.linalg.cholesky(model.cov) @ z
    return ws.clamp(nxt)


@dataclass
class TrainedModelSpec:
    stage: int = 3
    beta: float = 0.1
    sigma_hat: np.ndarray = field(default_factory=lambda: 0.03 * np.eye(2))

    def __post_init__(self):
        self.sigma_hat = np.atleast_2d(np.asarray(self.sigma_hat, dtype=np.float64))
        GaussianDensity(np.zeros(2), self.sigma_hat)  # validate positive definite


def trained_model(
    x: np.ndarray, u: np.ndarray, spec: TrainedModelSpec, ws: Workspace
) -> GaussianDensity:
    u_eff = clip_speed(u, ws)
    x = np.asarray(x, dtype=np.float64)
    return GaussianDensity(x + u_eff * ws.dt + spec.beta * x, spec.sigma_hat)


def radius(
    x: np.ndarray,
    u: np.ndarray,
    spec: TrainedModelSpec,
    q_x_gen: GaussianDensity,
    ws: Workspace,
    clip: float = 100.0,
) -> float:
    val = min(kl_gaussian(q_x_gen, trained_model(x, u, spec, ws)), clip)
    if val <= 0.0:
        raise DegenerateRadius("reference equals the trained model")
    return val


# ---------------------------------------------------------------------------
# Environment configuration

DEFAULT_STAGES = {
    1: {"beta": 0.1, "sigma_hat_scale": 0.002},
    2: {"beta": 0.1, "sigma_hat_scale": 0.0015},
    3: {"beta": 0.1, "sigma_hat_scale": 0.001},
}

DEFAULT_STARTS = [
    [1.05, 0.68],
    [1.05, -0.68],
    [0.95, 0.62],
    [0.95, -0.62],
    [1.15, 0.0],
    [1.1, 0.3],
    [1.1, -0.3],
    [0.75, 0.15],
    [0.75, -0.15],
    [-0.3, 0.0],
    [0.3, 0.55],
    [0.3, -0.55],
]


@dataclass
class EnvConfig:
    workspace: Workspace = field(default_factory=Workspace)
    cost: CostSpec = field(default_factory=CostSpec)
    stage: int = 3
    stages: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_STAGES.items()})
    radius_ref_cov: float = 1e-4
    radius_clip: float = 100.0
    gen_state_cov: float = 1.5e-2
    trained_equals_true: bool = False
    action_low: tuple = (-0.5, -0.5)
    action_high: tuple = (0.5, 0.5)
    action_counts: tuple = (5, 5)
    n_samples: int = 50
    success_radius: float = 0.08
    collision_radius: float = 0.08
    boundary_margin: float = 0.02
    max_steps: int = 1000
    starts: list = field(default_factory=lambda: [list(s) for s in DEFAULT_STARTS])

    def trained_spec(self) -> TrainedModelSpec:
        if self.trained_equals_true:
            return TrainedModelSpec(stage=self.stage, beta=0.0, sigma_hat=TRUE_NOISE_COV.copy())
        params = self.stages[self.stage]
        return TrainedModelSpec(
            stage=self.stage,
            beta=params["beta"],
            sigma_hat=params["sigma_hat_scale"] * np.eye(2),
        )

    def action_grid(self) -> ActionGrid:
        return ActionGrid.uniform(self.action_low, self.action_high, self.action_counts)

    def radius_reference(self) -> GaussianDensity:
        return GaussianDensity(self.cost.goal, self.radius_ref_cov * np.eye(2))

    def generative_state_model(self) -> GaussianDensity:
        return GaussianDensity(self.cost.goal, self.gen_state_cov * np.eye(2))

    def to_json(self) -> str:
        doc = {
            "workspace": asdict(self.workspace),
            "cost": {
                "goal": self.cost.goal.tolist(),
                "goal_weight": self.cost.goal_weight,
                "obstacles": self.cost.obstacles.tolist(),
                "obstacle_cov": self.cost.obstacle_cov,
                "obstacle_weight": self.cost.obstacle_weight,
                "boundary_sigma": self.cost.boundary_sigma,
                "boundary_weight": self.cost.boundary_weight,
            },
            "stage": self.stage,
            "stages": self.stages,
            "radius": {"ref_cov": self.radius_ref_cov, "clip": self.radius_clip},
            "gen_state_cov": self.gen_state_cov,
            "trained_equals_true": self.trained_equals_true,
            "actions": {
                "low": list(self.action_low),
                "high": list(self.action_high),
                "counts": list(self.action_counts),
            },
            "n_samples": self.n_samples,
            "thresholds": {
                "success_radius": self.success_radius,
                "collision_radius": self.collision_radius,
                "boundary_margin": self.boundary_margin,
                "max_steps": self.max_steps,
            },
            "starts": self.starts,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EnvConfig":
        doc = json.loads(text)
        cfg = cls()
        if "workspace" in doc:
            cfg.workspace = Workspace(**doc["workspace"])
        if "cost" in doc:
            c = doc["cost"]
            cfg.cost = CostSpec(
                goal=np.array(c.get("goal", [0.0, 0.0])),
                goal_weight=c.get("goal_weight", 50.0),
                obstacles=np.array(c.get("obstacles", DEFAULT_OBSTACLES)),
                obstacle_cov=c.get("obstacle_cov", 0.025),
                obstacle_weight=c.get("obstacle_weight", 20.0),
                boundary_sigma=c.get("boundary_sigma", 0.02),
                boundary_weight=c.get("boundary_weight", 5.0),
            )
        cfg.stage = doc.get("stage", 3)
        if "stages" in doc:
            cfg.stages = {int(k): dict(v) for k, v in doc["stages"].items()}
        if "radius" in doc:
            cfg.radius_ref_cov = doc["radius"].get("ref_cov", 1e-4)
            cfg.radius_clip = doc["radius"].get("clip", 100.0)
        cfg.gen_state_cov = doc.get("gen_state_cov", 1e-3)
        cfg.trained_equals_true = doc.get("trained_equals_true", False)
        if "actions" in doc:
            cfg.action_low = tuple(doc["actions"]["low"])
            cfg.action_high = tuple(doc["actions"]["high"])
            cfg.action_counts = tuple(doc["actions"]["counts"])
        cfg.n_samples = doc.get("n_samples", 50)
        if "thresholds" in doc:
            t = doc["thresholds"]
            cfg.success_radius = t.get("success_radius", 0.08)
            cfg.collision_radius = t.get("collision_radius", 0.12)
            cfg.boundary_margin = t.get("boundary_margin", 0.02)
            cfg.max_steps = t.get("max_steps", 1000)
        if "starts" in doc:
            cfg.starts = [list(s) for s in doc["starts"]]
        return cfg

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def build_engine(config: EnvConfig, radius_scale: float = 1.0) -> PolicyEngine:
    ws = config.workspace
    spec = config.trained_spec()
    q_ref = config.radius_reference()
    q_gen = config.generative_state_model()

    def radius_fn(x, u):
        try:
            return radius(x, u, spec, q_ref, ws, clip=config.radius_clip)
        except DegenerateRadius:
            return 1e-9

    return PolicyEngine(
        trained_model=lambda x, u: trained_model(x, u, spec, ws),
        generative_state=lambda x, u: q_gen,
        ambiguity=AmbiguitySpec(radius_fn, eta_max=config.radius_clip, scale=radius_scale),
        state_cost=lambda pts: state_cost(pts, config.cost, ws),
        grid=config.action_grid(),
        n_samples=config.n_samples,
    )


# ---------------------------------------------------------------------------
# Episodes


@dataclass
class EpisodeLog:
    states: np.ndarray  # (steps, 2): state at each decision point
    actions: np.ndarray  # (steps, 2)
    etas: np.ndarray
    kl_true: np.ndarray
    v: np.ndarray
    state_costs: np.ndarray
    steps: int
    success: bool
    reason: str  # success | obstacle | boundary | timeout

    def to_csv(self) -> str:
        lines = ["step,x,y,u_x,u_y,eta,kl_true,v,state_cost"]
        for k in range(self.steps):
            row = (
                k,
                self.states[k, 0],
                self.states[k, 1],
                self.actions[k, 0],
                self.actions[k, 1],
                self.etas[k],
                self.kl_true[k],
                self.v[k],
                self.state_costs[k],
            )
            lines.append(",".join(f"{val:.17g}" if isinstance(val, float) else str(val) for val in row))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"steps": self.steps, "success": self.success, "reason": self.reason}


def _terminal_reason(x: np.ndarray, config: EnvConfig) -> str | None:
    if np.linalg.norm(x - config.cost.goal) <= config.success_radius:
        return "success"
    if np.any(np.linalg.norm(x - config.cost.obstacles, axis=1) <= config.collision_radius):
        return "obstacle"
    if config.workspace.wall_distance(x) <= config.boundary_margin:
        return "boundary"
    return None


def run_episode(
    engine: PolicyEngine,
    config: EnvConfig,
    x0: np.ndarray,
    max_steps: int,
    rng: Rng,
    kind: str = "drfree",
) -> EpisodeLog:
    ws = config.workspace
    spec = config.trained_spec()
    x = np.asarray(x0, dtype=np.float64)
    if not ws.contains(x):
        raise ValueError(f"start {x0} outside the workspace")

    states, actions, etas, kls, vs, costs = [], [], [], [], [], []
    reason = None
    for step in range(max_steps):
        term = _terminal_reason(x, config)
        if term is not None:
            reason = term
            break
        if kind == "drfree":
            policy, info = drfree_policy_detail(engine, x, rng.child(step, 0))
        elif kind == "unaware":
            policy, info = unaware_policy_detail(engine, x, rng.child(step, 0))
        else:
            raise ValueError(f"unknown engine kind {kind!r}")
        u = sample_action(policy, rng.child(step, 1))
        idx = engine.grid.index_of(u)

        if kind == "drfree":
            eta_used = info["eta"][idx]
            v_used = info["v"][idx]
        else:
            try:
                eta_used = engine.ambiguity.value(x, u)
            except DegenerateRadius:
                eta_used = 0.0
            v_used = info["exponent"][idx]
        kl_step = kl_gaussian(true_model(x, u, ws), trained_model(x, u, spec, ws))

        states.append(x.copy())
        actions.append(np.asarray(u, dtype=np.float64))
        etas.append(eta_used)
        kls.append(kl_step)
        vs.append(v_used)
        costs.append(float(state_cost(x[None, :], config.cost, ws)[0]))

        x = true_step(x, u, ws, rng.child(step, 2))
    if reason is None:
        reason = _terminal_reason(x, config) or "timeout"

    def arr(rows, width=None):
        if rows:
            return np.array(rows)
        return np.zeros((0, width) if width else 0)

    return EpisodeLog(
        states=arr(states, 2),
        actions=arr(actions, 2),
        etas=arr(etas),
        kl_true=arr(kls),
        v=arr(vs),
        state_costs=arr(costs),
        steps=len(states),
        success=reason == "success",
        reason=reason,
    )


def run_batch(
    config: EnvConfig,
    starts,
    seeds,
    kind: str = "drfree",
    radius_scale: float = 1.0,
    max_steps: int | None = None,
) -> list[tuple[int, int, EpisodeLog]]:
    """All (start, seed) episodes, deterministic per (config, seed, start index)."""
    engine = build_engine(config, radius_scale)
    cap = max_steps if max_steps is not None else config.max_steps
    out = []
    for si, x0 in enumerate(starts):
        for seed in seeds:
            rng = Rng(int(seed)).child(si)
            out.append((si, int(seed), run_episode(engine, config, np.asarray(x0), cap, rng, kind)))
    return out


def success_rate(logs) -> float:
    if not logs:
        raise ValueError("no episodes")
    return float(np.mean([1.0 if log.success else 0.0 for _, _, log in logs]))


def radius_containment(log: EpisodeLog) -> bool:
    """True iff the true model stays inside the ambiguity ball at every step."""
    if log.steps == 0:
        return True
    return bool(np.all(log.kl_true <= log.etas + 1e-12))


def blocked_starts(config: EnvConfig, clearance: float = 0.1) -> list[int]:
    """Start indices whose straight segment to the goal passes within
    `clearance` of an obstacle center."""
    out = []
    goal = config.cost.goal
    for i, s in enumerate(config.starts):
        s = np.asarray(s, dtype=np.float64)
        seg = goal - s
        length = np.linalg.norm(seg)
        t = np.clip(((config.cost.obstacles - s) @ seg) / (length**2), 0.0, 1.0)
        closest = s + t[:, None] * seg
        dists = np.linalg.norm(config.cost.obstacles - closest, axis=1)
        if np.any(dists <= clearance):
            out.append(i)
    return out
