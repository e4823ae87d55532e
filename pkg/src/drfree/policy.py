"""Soft-max policy construction over a discrete action grid.

The robust policy weighs each grid action u by

    q_u(u) * exp(-eta(x, u) - v(x, u) - c_u(u))

where v is the scalar-dual cost of ambiguity for the total cost
c_tot = state cost + interpolated cost-to-go.  The ambiguity-unaware
baseline replaces eta + v with the plain model complexity plus expected
cost, which is exactly the vanishing-radius limit of the robust weights;
both policies are evaluated on identical per-action sample sets so they
coincide bit-for-bit when the radius scale is zero.

Normalization always happens in log space via log-sum-exp; probabilities
that underflow to exactly zero after normalization are floored at 1e-10
and the vector renormalized.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ambiguity import AmbiguitySpec, Branch, InnerProblem, cost_of_ambiguity, _prepare
from .densities import DiscreteDensity, GaussianDensity, kl_gaussian, log_sum_exp
from .errors import GridMismatch, LatticeTooCoarse, SolverFailure
from .rng import Rng

logger = logging.getLogger(__name__)

UNDERFLOW_FLOOR = 1e-10


@dataclass(frozen=True)
class ActionGrid:
    """Ordered list of action vectors on a rectangular per-axis lattice."""

    actions: np.ndarray  # (m, dim)

    def __post_init__(self):
        actions = np.atleast_2d(np.asarray(self.actions, dtype=np.float64))
        if actions.shape[0] == 0:
            raise ValueError("action grid must be non-empty")
        object.__setattr__(self, "actions", actions)

    @classmethod
    def uniform(cls, low=(-0.5, -0.5), high=(0.5, 0.5), counts=(5, 5)) -> "ActionGrid":
        axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(low, high, counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=1))

    def __len__(self) -> int:
        return self.actions.shape[0]

    def index_of(self, u: np.ndarray, tol: float = 1e-9) -> int:
        d = np.max(np.abs(self.actions - np.asarray(u, dtype=np.float64)), axis=1)
        i = int(np.argmin(d))
        if d[i] > tol:
            raise GridMismatch(f"action {u} not on the grid")
        return i


@dataclass(frozen=True)
class Policy:
    grid: ActionGrid
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64).ravel()
        if probs.shape[0] != len(self.grid):
            raise GridMismatch("probability vector does not match the grid")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("policy probabilities must be a distribution")
        object.__setattr__(self, "probs", probs)

    def argmax(self) -> int:
        return int(np.argmax(self.probs))


@dataclass
class CostToGoTable:
    """Stage cost-to-go on a rectangular state lattice, bilinear in between."""

    stage: int
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # (len(xs), len(ys))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        x, y = pts[:, 0], pts[:, 1]
        if (
            np.any(x < self.xs[0] - 1e-12)
            or np.any(x > self.xs[-1] + 1e-12)
            or np.any(y < self.ys[0] - 1e-12)
            or np.any(y > self.ys[-1] + 1e-12)
        ):
            raise LatticeTooCoarse("interpolation query outside the lattice hull")
        ix = np.clip(np.searchsorted(self.xs, x) - 1, 0, len(self.xs) - 2)
        iy = np.clip(np.searchsorted(self.ys, y) - 1, 0, len(self.ys) - 2)
        tx = np.clip((x - self.xs[ix]) / (self.xs[ix + 1] - self.xs[ix]), 0.0, 1.0)
        ty = np.clip((y - self.ys[iy]) / (self.ys[iy + 1] - self.ys[iy]), 0.0, 1.0)
        v = self.values
        return (
            v[ix, iy] * (1 - tx) * (1 - ty)
            + v[ix + 1, iy] * tx * (1 - ty)
            + v[ix, iy + 1] * (1 - tx) * ty
            + v[ix + 1, iy + 1] * tx * ty
        )


@dataclass
class PolicyEngine:
    """Everything needed to evaluate the robust or baseline policy at a state."""

    trained_model: Callable[[np.ndarray, np.ndarray], DiscreteDensity | GaussianDensity]
    generative_state: Callable[[np.ndarray, np.ndarray], DiscreteDensity | GaussianDensity]
    ambiguity: AmbiguitySpec
    state_cost: Callable[[np.ndarray], np.ndarray]
    grid: ActionGrid
    generative_action: np.ndarray | None = None  # prior over grid actions, uniform if None
    action_cost: Callable[[np.ndarray], float] | None = None
    horizon: int = 1
    n_samples: int = 50

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.generative_action is None:
            self.generative_action = np.full(len(self.grid), 1.0 / len(self.grid))
        self.generative_action = np.asarray(self.generative_action, dtype=np.float64)
        if self.generative_action.shape[0] != len(self.grid):
            raise GridMismatch("action prior does not match the grid")

    def log_action_prior(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.generative_action)

    def action_cost_at(self, u: np.ndarray) -> float:
        return 0.0 if self.action_cost is None else float(self.action_cost(u))


def _total_cost_fn(engine: PolicyEngine, cost_to_go: CostToGoTable | None):
    if cost_to_go is None:
        return engine.state_cost
    return lambda pts: np.asarray(engine.state_cost(pts)) + cost_to_go(pts)


def _normalize_log_weights(grid: ActionGrid, log_weights: np.ndarray) -> Policy:
    finite = np.isfinite(log_weights)
    if not finite.any():
        probs = np.full(len(grid), 1.0 / len(grid))
        return Policy(grid, probs)
    norm = log_sum_exp(log_weights[finite])
    probs = np.zeros(len(grid))
    probs[finite] = np.exp(np.clip(log_weights[finite] - norm, -745.0, 0.0))
    if np.any(probs == 0.0):
        probs = np.where(probs == 0.0, UNDERFLOW_FLOOR, probs)
    return Policy(grid, probs / probs.sum())


def _draw_innovations(engine: PolicyEngine, x: np.ndarray, rng: Rng) -> np.ndarray | None:
    """One standard-normal innovation block shared by every grid action.

    Using common random numbers across actions keeps the Monte-Carlo noise
    out of across-action comparisons; each action still gets its own sample
    set (the innovations are pushed through that action's trained model).
    The block is closed under flipping the last coordinate (for even sample
    counts), so mirror-symmetric engines produce exactly mirror-symmetric
    policies.  Discrete engines are exact and need no draws.
    """
    probe = engine.trained_model(x, engine.grid.actions[0])
    if not isinstance(probe, GaussianDensity):
        return None
    n, dim = engine.n_samples, probe.dim
    half = n // 2
    raw = rng.standard_normal((n - half, dim))
    flipped = raw[:half].copy()
    flipped[:, -1] *= -1.0
    return np.vstack([raw, flipped])


def _ambiguity_free_exponent(engine, x, u, total_cost, rng, z=None) -> float:
    """KL(hat_p || q_x) + E_hat_p[cost]: the vanishing-radius exponent.

    Exact sums for discrete models; closed-form KL plus a sampled cost mean
    (on the shared innovations) for Gaussians.  The unaware policy and the
    radius-scale-0 robust policy both use this, so they match exactly.
    """
    hat = engine.trained_model(x, u)
    gen = engine.generative_state(x, u)
    if isinstance(hat, GaussianDensity) and isinstance(gen, GaussianDensity):
        if z is None:
            z = rng.standard_normal((engine.n_samples, hat.dim))
        points = hat.mean + z @ hat._chol.T
        return float(kl_gaussian(hat, gen) + np.mean(np.asarray(total_cost(points))))
    prob = InnerProblem(hat, gen, total_cost, eta=1.0, n_samples=engine.n_samples)
    _, a, logw = _prepare(prob, rng)
    return float(np.sum(np.exp(logw) * a))


def drfree_policy_detail(
    engine: PolicyEngine,
    x: np.ndarray,
    rng: Rng,
    cost_to_go: CostToGoTable | None = None,
):
    """Robust policy plus per-action diagnostics (eta, v, M, branch)."""
    total_cost = _total_cost_fn(engine, cost_to_go)
    m = len(engine.grid)
    etas = np.zeros(m)
    vs = np.zeros(m)
    ms = np.full(m, np.nan)
    branches = np.empty(m, dtype=object)
    log_prior = engine.log_action_prior()
    log_weights = np.full(m, -np.inf)

    zero_scale = engine.ambiguity.scale == 0.0
    z = _draw_innovations(engine, x, rng)
    for i, u in enumerate(engine.grid.actions):
        child = rng.child(i) if z is None else None
        c_u = engine.action_cost_at(u)
        if zero_scale:
            limit = _ambiguity_free_exponent(engine, x, u, total_cost, child, z)
            etas[i], vs[i], branches[i] = 0.0, limit, Branch.AT_ZERO
            log_weights[i] = log_prior[i] - limit - c_u
            continue
        eta = engine.ambiguity.value(x, u)
        prob = InnerProblem(
            engine.trained_model(x, u),
            engine.generative_state(x, u),
            total_cost,
            eta=eta,
            n_samples=engine.n_samples,
        )
        try:
            ac = cost_of_ambiguity(prob, child, z)
        except SolverFailure as exc:
            logger.warning("dual solve failed at action %s: %s", u, exc)
            etas[i], vs[i], branches[i] = eta, np.nan, None
            continue
        etas[i], vs[i], ms[i], branches[i] = eta, ac.v, ac.m_value, ac.branch
        log_weights[i] = log_prior[i] - eta - ac.v - c_u

    policy = _normalize_log_weights(engine.grid, log_weights)
    info = {"eta": etas, "v": vs, "m": ms, "branch": branches, "log_weights": log_weights}
    return policy, info


def drfree_policy(
    engine: PolicyEngine,
    x: np.ndarray,
    rng: Rng,
    cost_to_go: CostToGoTable | None = None,
) -> Policy:
    return drfree_policy_detail(engine, x, rng, cost_to_go)[0]


def unaware_policy_detail(engine: PolicyEngine, x: np.ndarray, rng: Rng):
    """Baseline softmax with exponent -(model complexity + expected state cost)."""
    m = len(engine.grid)
    log_prior = engine.log_action_prior()
    log_weights = np.full(m, -np.inf)
    exponents = np.zeros(m)
    z = _draw_innovations(engine, x, rng)
    for i, u in enumerate(engine.grid.actions):
        child = rng.child(i) if z is None else None
        limit = _ambiguity_free_exponent(engine, x, u, engine.state_cost, child, z)
        exponents[i] = limit
        log_weights[i] = log_prior[i] - limit - engine.action_cost_at(u)
    policy = _normalize_log_weights(engine.grid, log_weights)
    return policy, {"exponent": exponents, "log_weights": log_weights}


def unaware_policy(engine: PolicyEngine, x: np.ndarray, rng: Rng) -> Policy:
    return unaware_policy_detail(engine, x, rng)[0]


def optimal_cost(
    engine: PolicyEngine,
    x: np.ndarray,
    rng: Rng,
    cost_to_go: CostToGoTable | None = None,
) -> float:
    """-ln sum_u q_u exp(-eta - v - c_u): the stage cost-to-go at x."""
    _, info = drfree_policy_detail(engine, x, rng, cost_to_go)
    lw = info["log_weights"]
    finite = np.isfinite(lw)
    if not finite.any():
        raise SolverFailure(f"no action produced a finite weight at x={x}")
    return -log_sum_exp(lw[finite])


def build_cost_to_go(
    engine: PolicyEngine,
    xs: np.ndarray,
    ys: np.ndarray,
    rng: Rng,
) -> list[CostToGoTable]:
    """Backward recursion over the state lattice.

    Returns tables[k-1] = cost-to-go consumed by the stage-k policy; the
    stage-N table is identically zero, so a reactive engine (N = 1) gets a
    single zero table.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    n_stages = engine.horizon
    tables = [CostToGoTable(n_stages, xs, ys, np.zeros((len(xs), len(ys))))]
    for k in range(n_stages - 1, 0, -1):
        nxt = tables[0]
        values = np.zeros((len(xs), len(ys)))
        for i, xv in enumerate(xs):
            for j, yv in enumerate(ys):
                node = np.array([xv, yv])
                values[i, j] = optimal_cost(engine, node, rng.child(k, i, j), nxt)
        tables.insert(0, CostToGoTable(k, xs, ys, values))
    return tables


def sample_action(p: Policy, rng: Rng) -> np.ndarray:
    """Inverse-CDF draw on the grid ordering; reproducible under the seed."""
    return p.grid.actions[rng.choice_index(p.probs)]


def policy_kl(p: Policy, q: Policy) -> float:
    if p.grid.actions.shape != q.grid.actions.shape or not np.array_equal(
        p.grid.actions, q.grid.actions
    ):
        raise GridMismatch("policies live on different grids")
    active = p.probs > 0
    if np.any(q.probs[active] <= 0):
        from .errors import AbsoluteContinuityViolation

        raise AbsoluteContinuityViolation("policy support mismatch")
    pa, qa = p.probs[active], q.probs[active]
    return float(np.sum(pa * (np.log(pa) - np.log(qa))))


def policy_heatmap_csv(p: Policy) -> str:
    lines = ["u_x,u_y,prob"]
    for u, prob in zip(p.grid.actions, p.probs):
        lines.append(f"{u[0]:.17g},{u[1]:.17g},{prob:.17g}")
    return "\n".join(lines) + "\n"


def policy_json(p: Policy, config_hash: str) -> str:
    return json.dumps(
        {
            "config_hash": config_hash,
            "actions": p.grid.actions.tolist(),
            "probs": p.probs.tolist(),
        },
        sort_keys=True,
    )
