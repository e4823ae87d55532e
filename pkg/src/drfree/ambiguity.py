"""Worst-case free energy over a KL ball, reduced to a scalar convex dual.

For a fixed (state, action) pair with trained model ``hat_p``, generative
state model ``q_x``, non-negative total cost ``c`` and radius ``eta``, the
maximum of  KL(p || q_x) + E_p[c]  over all models p with
KL(p || hat_p) <= eta equals  eta + v,  where v is the minimum over
alpha >= 0 of

    V(alpha) = alpha * ln E_hat_p[ ((hat_p / q_x) * exp(c))^(1/alpha) ] + alpha * eta

with the alpha = 0 branch equal to M = sup ln(hat_p * exp(c) / q_x).
Expectations are exact sums for discrete models and fixed-seed Monte-Carlo
means for Gaussians, so each solve minimizes a deterministic convex
function.  ``oracle_inner_max`` provides an independent brute-force check
of the same maximum by direct grid search over the probability simplex.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from . import _kernels
from .densities import (
    DiscreteDensity,
    GaussianDensity,
    kl_discrete,
    kl_gaussian,
    log_pdf,
    log_sum_exp,
    sample,
)
from .errors import (
    DegenerateRadius,
    NonFiniteRatio,
    SolverFailure,
    SupportTooLarge,
    ZeroBranch,
)
from .rng import Rng


class Branch(Enum):
    AT_ZERO = "AtZero"
    INTERIOR = "Interior"


@dataclass
class AmbiguitySpec:
    """State/action-dependent KL radius, clipped at eta_max, then scaled."""

    radius_fn: Callable[[np.ndarray, np.ndarray], float]
    eta_max: float = 100.0
    scale: float = 1.0

    def value(self, x: np.ndarray, u: np.ndarray) -> float:
        raw = float(self.radius_fn(x, u))
        clipped = min(raw, self.eta_max)
        if clipped <= 0.0:
            raise DegenerateRadius(f"radius {raw} at x={x}, u={u}")
        return clipped * self.scale


@dataclass
class InnerProblem:
    """One worst-case free-energy maximization at a fixed (state, action)."""

    hat_p: DiscreteDensity | GaussianDensity
    q_x: DiscreteDensity | GaussianDensity
    total_cost: Callable[[np.ndarray], np.ndarray]
    eta: float
    n_samples: int = 50

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass
class AmbiguityCost:
    """Result of the scalar dual minimization."""

    v: float
    alpha_star: float
    m_value: float
    branch: Branch


@dataclass
class LikelihoodRatio:
    """Worst-case likelihood ratio r* at the evaluation points."""

    points: np.ndarray
    weights: np.ndarray
    worst_case: DiscreteDensity | None = None


def _cost_at(prob: InnerProblem, points: np.ndarray) -> np.ndarray:
    c = np.asarray(prob.total_cost(points), dtype=np.float64).ravel()
    if c.shape[0] != points.shape[0]:
        raise ValueError("total_cost must return one value per point")
    if np.any(c < 0):
        raise ValueError("total_cost must be non-negative")
    return c


def _prepare(prob: InnerProblem, rng: Rng | None, z: np.ndarray | None = None):
    """Evaluation points, log-ratio-plus-cost values a_i and log weights.

    Discrete trained models use their exact support.  Gaussian ones use
    n_samples draws from the supplied rng, or — when ``z`` is given —
    pre-drawn standard-normal innovations pushed through the trained
    model (common random numbers across nearby calls).
    """
    hat_p, q_x = prob.hat_p, prob.q_x
    if isinstance(hat_p, DiscreteDensity):
        mask = hat_p.probs > 0
        points = hat_p.support[mask]
        log_hat = np.log(hat_p.probs[mask])
        if isinstance(q_x, DiscreteDensity):
            q_at = q_x.prob_at(points)
            if np.any(q_at <= 0):
                raise NonFiniteRatio("trained model has mass outside the generative support")
            log_q = np.log(q_at)
        else:
            log_q = np.asarray(log_pdf(q_x, points))
        logw = log_hat
    elif isinstance(hat_p, GaussianDensity):
        if not isinstance(q_x, GaussianDensity):
            raise NonFiniteRatio("continuous trained model requires a continuous generative model")
        if z is not None:
            points = hat_p.mean + np.asarray(z) @ hat_p._chol.T
        elif rng is not None:
            points = sample(hat_p, rng, prob.n_samples)
        else:
            raise ValueError("Gaussian inner problems need an rng or innovations")
        log_hat = np.asarray(log_pdf(hat_p, points))
        log_q = np.asarray(log_pdf(q_x, points))
        logw = np.full(points.shape[0], -math.log(points.shape[0]))
    else:
        raise TypeError(f"unsupported density {type(hat_p).__name__}")

    a = log_hat - log_q + _cost_at(prob, points)
    if not np.all(np.isfinite(a)):
        raise NonFiniteRatio("non-finite log ratio at an evaluation point")
    return points, a, logw


def eval_v_alpha(prob: InnerProblem, alpha: float, rng: Rng | None = None) -> float:
    """Dual objective V(alpha) for alpha > 0 on a fresh per-call sample set."""
    if alpha <= 0:
        raise ValueError("alpha must be positive; the alpha = 0 branch is compute_m")
    _, a, logw = _prepare(prob, rng)
    return float(_kernels.dual_value(a, logw, prob.eta, float(alpha)))


def compute_m(prob: InnerProblem, rng: Rng | None = None) -> float:
    """alpha = 0 branch: max of ln(hat_p exp(c) / q_x).

    Exact over the support for discrete models; a sampled max (a lower
    estimate of the supremum) for Gaussians.
    """
    _, a, _ = _prepare(prob, rng)
    return float(np.max(a))


def cost_of_ambiguity(
    prob: InnerProblem, rng: Rng | None = None, z: np.ndarray | None = None
) -> AmbiguityCost:
    """Minimize V over alpha >= 0; one sample set is reused for every alpha."""
    _, a, logw = _prepare(prob, rng, z)
    v, alpha_star, m, branch = _kernels.dual_solve(a, logw, prob.eta)
    if branch < 0 or not np.isfinite(v):
        raise SolverFailure("dual bracketing found no finite value (unbounded cost?)")
    return AmbiguityCost(
        v=float(v),
        alpha_star=float(alpha_star),
        m_value=float(m),
        branch=Branch.AT_ZERO if branch == _kernels.BRANCH_AT_ZERO else Branch.INTERIOR,
    )


def worst_case_ratio(prob: InnerProblem, alpha: float, rng: Rng | None = None) -> LikelihoodRatio:
    """Stationary ratio r* = ((hat_p/q_x) e^c)^(1/alpha), normalized to mean 1."""
    if alpha <= 0:
        raise ZeroBranch("worst-case ratio is defined on the interior branch only")
    points, a, logw = _prepare(prob, rng)
    log_norm = log_sum_exp(a / alpha + logw)
    log_r = a / alpha - log_norm
    r = np.exp(np.clip(log_r, -745.0, 700.0))
    worst = None
    if isinstance(prob.hat_p, DiscreteDensity):
        hat = np.exp(logw)
        worst = DiscreteDensity.from_weights(points, r * hat)
    return LikelihoodRatio(points=points, weights=r, worst_case=worst)


def zero_radius_limit(prob: InnerProblem, rng: Rng | None = None) -> float:
    """eta -> 0 limit of v: KL(hat_p || q_x) plus the expected total cost."""
    if isinstance(prob.hat_p, DiscreteDensity):
        _, a, logw = _prepare(prob, rng)
        return float(np.sum(np.exp(logw) * a))
    points, _, _ = _prepare(prob, rng)
    kl = kl_gaussian(prob.hat_p, prob.q_x)
    return float(kl + np.mean(_cost_at(prob, points)))


# ---------------------------------------------------------------------------
# Brute-force primal oracle


def _simplex_grid(resolution: int, n: int) -> np.ndarray:
    """All compositions of `resolution` into n parts, as rows summing to 1."""
    if n == 1:
        return np.array([[1.0]])
    axes = np.meshgrid(*([np.arange(resolution + 1)] * (n - 1)), indexing="ij")
    flat = np.stack([ax.ravel() for ax in axes], axis=1)
    total = flat.sum(axis=1)
    keep = total <= resolution
    flat = flat[keep]
    last = resolution - flat.sum(axis=1)
    grid = np.column_stack([flat, last]).astype(np.float64) / resolution
    return grid


def _objective_and_feasible(grid, hat_p, q, cost, eta):
    """F(p) = KL(p||q) + E_p[cost] and the KL(p||hat_p) <= eta mask."""
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(grid > 0, np.log(np.where(grid > 0, grid, 1.0)), 0.0)
        # KL(p || hat_p): +inf when p puts mass where hat_p has none
        ratio_hat = logp - np.log(np.where(hat_p > 0, hat_p, 1.0))
        kl_hat = np.where(grid > 0, grid * ratio_hat, 0.0).sum(axis=1)
        kl_hat = np.where((grid[:, hat_p <= 0] > 0).any(axis=1), np.inf, kl_hat)
        ratio_q = logp - np.log(q)
        objective = np.where(grid > 0, grid * ratio_q, 0.0).sum(axis=1) + grid @ cost
    return objective, kl_hat <= eta + 1e-15


def oracle_inner_max(
    hat_p: DiscreteDensity,
    q_x: DiscreteDensity,
    cost,
    eta: float,
    resolution: int = 200,
    refine: int = 0,
) -> float:
    return oracle_inner_max_with_error(hat_p, q_x, cost, eta, resolution, refine)[0]


def oracle_inner_max_with_error(
    hat_p: DiscreteDensity,
    q_x: DiscreteDensity,
    cost,
    eta: float,
    resolution: int = 200,
    refine: int = 0,
):
    """Grid-search the simplex for max KL(p||q_x) + E_p[cost] s.t. KL(p||hat_p) <= eta.

    Returns (max value, grid error estimate).  The search is a barycentric
    grid sweep at `resolution` subdivisions, optionally followed by `refine`
    pure local re-gridding rounds around the incumbent; the error estimate
    is the objective variation across the final local cell.  Supports of
    size > 4 are rejected (the grid blows up combinatorially).
    """
    universe = q_x.probs > 0
    n = int(universe.sum())
    if n > 4:
        raise SupportTooLarge(f"support size {n} > 4")
    if resolution < 100:
        raise ValueError("resolution must be >= 100")
    if np.any(hat_p.prob_at(q_x.support[~universe]) > 0):
        raise NonFiniteRatio("trained model has mass outside the generative support")

    q = q_x.probs[universe]
    hat = hat_p.prob_at(q_x.support[universe])
    c = np.asarray(cost, dtype=np.float64).ravel()
    if c.shape[0] == len(q_x.probs):
        c = c[universe]
    if c.shape[0] != n:
        raise ValueError("cost must align with the generative support")

    grid = _simplex_grid(resolution, n)
    # hat_p itself is always feasible (KL = 0): anchor the search with it
    grid = np.vstack([grid, hat])
    obj, feas = _objective_and_feasible(grid, hat, q, c, eta)
    if not feas.any():
        raise SolverFailure("no feasible grid point (should not happen: hat_p is feasible)")
    obj = np.where(feas, obj, -np.inf)

    # The frontier can carry several local maxima; refine around each of the
    # top coarse candidates from well-separated neighborhoods.
    order = np.argsort(obj)[::-1]
    h0 = 1.0 / resolution
    seeds: list[np.ndarray] = []
    for idx in order[: 64 * max(1, refine)]:
        if not np.isfinite(obj[idx]):
            break
        p = grid[idx]
        if all(np.max(np.abs(p - s)) > 4.0 * h0 for s in seeds):
            seeds.append(p)
        if len(seeds) >= 8:
            break

    best_f, best_p, h_final = -np.inf, seeds[0] if seeds else hat, h0
    for seed_p in seeds or [hat]:
        f_here = -np.inf
        p_here, h = seed_p, h0
        base_obj, base_feas = _objective_and_feasible(seed_p[None, :], hat, q, c, eta)
        if base_feas[0]:
            f_here = base_obj[0]
        for _ in range(refine):
            local = _local_grid(p_here, h, n)
            lobj, lfeas = _objective_and_feasible(local, hat, q, c, eta)
            lobj = np.where(lfeas, lobj, -np.inf)
            i = int(np.argmax(lobj))
            if lobj[i] > f_here:
                f_here, p_here = lobj[i], local[i]
            h = 3.0 * h / _LOCAL_STEPS
        if f_here > best_f:
            best_f, best_p, h_final = f_here, p_here, h

    err = _grid_error_estimate(best_p, best_f, h_final, n, hat, q, c, eta)
    return float(best_f), float(err)


_LOCAL_STEPS = 24


def _local_grid(center: np.ndarray, h: float, n: int) -> np.ndarray:
    """Sum-zero lattice displacements of +-1.5h around a simplex point."""
    offs = np.linspace(-1.5 * h, 1.5 * h, _LOCAL_STEPS + 1)
    axes = np.meshgrid(*([offs] * (n - 1)), indexing="ij")
    d = np.stack([ax.ravel() for ax in axes], axis=1)
    d = np.column_stack([d, -d.sum(axis=1)])
    pts = center + d
    keep = np.all(pts >= 0.0, axis=1) & np.all(pts <= 1.0, axis=1)
    return pts[keep]


def _grid_error_estimate(best_p, best_f, h, n, hat, q, c, eta):
    """Objective variation across one final-resolution cell, with 2x safety."""
    probe = _local_grid(best_p, h, n)
    pobj, pfeas = _objective_and_feasible(probe, hat, q, c, eta)
    pobj = pobj[np.isfinite(pobj)]
    if pobj.size == 0:
        return 1e-6
    spread = float(best_f - np.min(pobj))
    return 2.0 * max(spread, 0.0) + 1e-9


# ---------------------------------------------------------------------------
# Diagnostics


def dual_diagnostics(prob: InnerProblem, rng: Rng | None = None) -> dict:
    """JSON-ready record of one dual solve including an alpha trace."""
    _, a, logw = _prepare(prob, rng)
    v, alpha_star, m, branch = _kernels.dual_solve(a, logw, prob.eta)
    alphas = np.logspace(-4, 4, 33)
    if branch == _kernels.BRANCH_INTERIOR and alpha_star > 0:
        alphas = np.sort(np.append(alphas, alpha_star))
    trace = [[float(al), float(_kernels.dual_value(a, logw, prob.eta, al))] for al in alphas]
    return {
        "eta": float(prob.eta),
        "m": float(m),
        "alpha_star": float(alpha_star),
        "v": float(v),
        "branch": Branch.AT_ZERO.value if branch == _kernels.BRANCH_AT_ZERO else Branch.INTERIOR.value,
        "alpha_trace": trace,
    }


def dual_diagnostics_json(prob: InnerProblem, rng: Rng | None = None) -> str:
    return json.dumps(dual_diagnostics(prob, rng), sort_keys=True)
