"""Inverse cost reconstruction from observed state/action pairs.

The combined policy exponent is parametrized linearly by F state/action
features  phi_i(x, u) = E_p_hat[ bump_i(X') | x, u ]  (radial bumps pushed
through the trained model) plus optional G action features, and the
weights are fit by minimizing the convex negative log-likelihood of the
observed actions under the induced softmax.  Gradient descent uses the
1/(1+k) step schedule with an infinity-norm gradient stop of 1e-3 and an
iteration cap of 2000.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .densities import DiscreteDensity, GaussianDensity, log_sum_exp
from .errors import GridMismatch
from .policy import ActionGrid

logger = logging.getLogger(__name__)


@dataclass
class FeatureBasis:
    """Radial bump features evaluated in expectation under a trained model."""

    centers: np.ndarray  # (F, dim) bump centers
    width: float  # isotropic bump std dev
    trained_model: Callable[[np.ndarray, np.ndarray], GaussianDensity | DiscreteDensity]
    action_features: Callable[[np.ndarray], np.ndarray] | None = None  # u -> (G,)
    n_action_features: int = 0

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        if self.width <= 0:
            raise ValueError("bump width must be positive")

    @classmethod
    def bump_lattice(
        cls, x_range, y_range, counts, trained_model, width=None
    ) -> "FeatureBasis":
        xs = np.linspace(*x_range, counts[0])
        ys = np.linspace(*y_range, counts[1])
        mesh = np.meshgrid(xs, ys, indexing="ij")
        centers = np.stack([m.ravel() for m in mesh], axis=1)
        if width is None:
            dx = xs[1] - xs[0] if counts[0] > 1 else (x_range[1] - x_range[0])
            dy = ys[1] - ys[0] if counts[1] > 1 else (y_range[1] - y_range[0])
            width = 0.5 * (dx + dy)
        return cls(centers=centers, width=float(width), trained_model=trained_model)

    @property
    def n_state_features(self) -> int:
        return self.centers.shape[0]

    def bumps(self, x: np.ndarray) -> np.ndarray:
        """Raw bump values at one or many points: exp(-|x-c|^2 / (2 s^2))."""
        pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d2 = np.sum((pts[:, None, :] - self.centers[None]) ** 2, axis=2)
        return np.exp(-0.5 * d2 / self.width**2)

    def expected_bumps(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """phi(x, u): expectation of each bump under the trained next-state model.

        Closed form for Gaussian models (Gaussian-bump convolution);
        exact sum for discrete ones.
        """
        model = self.trained_model(np.asarray(x), np.asarray(u))
        if isinstance(model, DiscreteDensity):
            return model.probs @ self.bumps(model.support)
        s2 = self.width**2
        cov = model.cov + s2 * np.eye(model.dim)
        chol = np.linalg.cholesky(cov)
        delta = self.centers - model.mean
        w = np.linalg.solve(chol, delta.T)
        quad = np.sum(w * w, axis=0)
        det_ratio = (s2**model.dim) / np.exp(2.0 * np.sum(np.log(np.diag(chol))))
        return np.sqrt(det_ratio) * np.exp(-0.5 * quad)

    def gamma(self, u: np.ndarray) -> np.ndarray:
        if self.action_features is None:
            return np.zeros(0)
        return np.asarray(self.action_features(u), dtype=np.float64)


@dataclass
class Demonstrations:
    """Observed (state, on-grid action index) pairs."""

    states: np.ndarray  # (M, dim)
    action_idx: np.ndarray  # (M,) int

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        self.action_idx = np.asarray(self.action_idx, dtype=np.int64).ravel()
        if self.states.shape[0] != self.action_idx.shape[0]:
            raise GridMismatch("state/action counts differ")
        if self.states.shape[0] < 1:
            raise ValueError("need at least one demonstration")

    def __len__(self) -> int:
        return self.states.shape[0]

    @classmethod
    def from_pairs(cls, pairs, grid: ActionGrid) -> "Demonstrations":
        states = np.array([p[0] for p in pairs], dtype=np.float64)
        idx = np.array([grid.index_of(np.asarray(p[1])) for p in pairs])
        return cls(states, idx)

    @classmethod
    def from_episode_csv(cls, text: str, grid: ActionGrid) -> "Demonstrations":
        reader = csv.DictReader(io.StringIO(text))
        pairs = []
        for row in reader:
            x = np.array([float(row["x"]), float(row["y"])])
            u = np.array([float(row["u_x"]), float(row["u_y"])])
            pairs.append((x, u))
        if not pairs:
            raise ValueError("empty demonstration file")
        return cls.from_pairs(pairs, grid)


@dataclass
class Weights:
    w: np.ndarray  # (F,)
    v: np.ndarray  # (G,)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64).ravel()
        self.v = np.asarray(self.v, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.v))):
            raise ValueError("weights must be finite")

    def to_json(self) -> str:
        return json.dumps({"w": self.w.tolist(), "v": self.v.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Weights":
        doc = json.loads(text)
        return cls(np.array(doc["w"]), np.array(doc.get("v", [])))


class FeatureTable:
    """Precomputed phi/gamma tables for one demonstration set."""

    def __init__(self, demos: Demonstrations, basis: FeatureBasis, grid: ActionGrid):
        m, a = len(demos), len(grid)
        self.phi = np.empty((m, a, basis.n_state_features))
        for k in range(m):
            for j, u in enumerate(grid.actions):
                self.phi[k, j] = basis.expected_bumps(demos.states[k], u)
        self.gamma = np.stack([basis.gamma(u) for u in grid.actions])  # (A, G)
        self.action_idx = demos.action_idx


def _log_prior(q_u: np.ndarray | None, n_actions: int) -> np.ndarray:
    """Action-prior log weights in counting-measure normalization.

    The prior enters relative to the uniform grid weight, so a uniform
    prior contributes ln |grid| per demonstration to the objective (the
    zero-weight NLL is M ln |grid|) and non-uniform priors tilt it.
    """
    if q_u is None:
        return np.zeros(n_actions)
    q = np.asarray(q_u, dtype=np.float64).ravel()
    if q.shape[0] != n_actions:
        raise GridMismatch("action prior does not match the grid")
    with np.errstate(divide="ignore"):
        return np.log(q) + np.log(n_actions)


def _scores(weights: Weights, table: FeatureTable) -> np.ndarray:
    s = table.phi @ weights.w  # (M, A)
    if weights.v.size:
        s = s + table.gamma @ weights.v
    return s


def nll(
    weights: Weights,
    demos: Demonstrations,
    basis: FeatureBasis,
    q_u: np.ndarray | None,
    grid: ActionGrid,
    table: FeatureTable | None = None,
) -> float:
    """Negative log-likelihood of the observed actions (prior term dropped)."""
    table = table or FeatureTable(demos, basis, grid)
    scores = _scores(weights, table)
    logp = _log_prior(q_u, len(grid))
    total = 0.0
    m = scores.shape[0]
    picked = scores[np.arange(m), table.action_idx]
    z = scores + logp
    zmax = z.max(axis=1)
    norm = zmax + np.log(np.sum(np.exp(z - zmax[:, None]), axis=1))
    total = float(np.sum(-picked + norm))
    return total


def nll_gradient(
    weights: Weights,
    demos: Demonstrations,
    basis: FeatureBasis,
    q_u: np.ndarray | None,
    grid: ActionGrid,
    table: FeatureTable | None = None,
) -> Weights:
    """Analytic gradient: model expectation minus observed feature counts."""
    table = table or FeatureTable(demos, basis, grid)
    scores = _scores(weights, table)
    logp = _log_prior(q_u, len(grid))
    z = scores + logp
    zmax = z.max(axis=1, keepdims=True)
    p = np.exp(z - zmax)
    p /= p.sum(axis=1, keepdims=True)  # (M, A)
    m = scores.shape[0]
    observed_phi = table.phi[np.arange(m), table.action_idx]  # (M, F)
    expected_phi = np.einsum("ma,maf->mf", p, table.phi)
    grad_w = np.sum(expected_phi - observed_phi, axis=0)
    if weights.v.size:
        observed_g = table.gamma[table.action_idx]
        expected_g = p @ table.gamma
        grad_v = np.sum(expected_g - observed_g, axis=0)
    else:
        grad_v = np.zeros(0)
    return Weights(grad_w, grad_v)


@dataclass
class FitConfig:
    max_iterations: int = 2000
    grad_tol: float = 1e-3


@dataclass
class FitResult:
    weights: Weights
    converged: bool
    non_convergence: bool
    iterations: int
    final_nll: float
    grad_norm: float
    objective_trace: list = field(default_factory=list)


def fit_cost(
    demos: Demonstrations,
    basis: FeatureBasis,
    q_u: np.ndarray | None,
    grid: ActionGrid,
    config: FitConfig | None = None,
) -> FitResult:
    """Gradient descent with step 1/(1+k) on the convex NLL."""
    config = config or FitConfig()
    table = FeatureTable(demos, basis, grid)
    weights = Weights(np.zeros(basis.n_state_features), np.zeros(table.gamma.shape[1]))
    best = weights
    best_obj = nll(weights, demos, basis, q_u, grid, table)
    trace = [best_obj]
    grad_norm = np.inf
    iterations = 0
    for k in range(config.max_iterations):
        g = nll_gradient(weights, demos, basis, q_u, grid, table)
        grad_norm = max(
            float(np.max(np.abs(g.w))) if g.w.size else 0.0,
            float(np.max(np.abs(g.v))) if g.v.size else 0.0,
        )
        iterations = k
        if grad_norm <= config.grad_tol:
            break
        lr = 1.0 / (1.0 + k)
        weights = Weights(weights.w - lr * g.w, weights.v - lr * g.v)
        obj = nll(weights, demos, basis, q_u, grid, table)
        trace.append(obj)
        if obj <= best_obj:
            best_obj, best = obj, weights
    converged = grad_norm <= config.grad_tol
    non_convergence = (not converged) and grad_norm > 10.0 * config.grad_tol
    if non_convergence:
        logger.warning(
            "fit_cost hit the iteration cap with gradient norm %.3g (tol %.3g); "
            "returning best weights so far",
            grad_norm,
            config.grad_tol,
        )
    return FitResult(
        weights=best if not converged else weights,
        converged=converged,
        non_convergence=non_convergence,
        iterations=iterations,
        final_nll=best_obj,
        grad_norm=grad_norm,
        objective_trace=trace,
    )


def reconstructed_cost(weights: Weights, basis: FeatureBasis, x: np.ndarray) -> np.ndarray:
    """-sum_i w_i bump_i(x): the plotted reduction of the fitted exponent."""
    vals = basis.bumps(x) @ weights.w
    out = -vals
    return out if np.ndim(x) > 1 else float(out[0])


def reconstruction_csv(weights: Weights, basis: FeatureBasis, xs, ys) -> str:
    lines = ["x,y,value"]
    for xv in xs:
        pts = np.column_stack([np.full(len(ys), xv), ys])
        vals = reconstructed_cost(weights, basis, pts)
        for yv, val in zip(ys, vals):
            lines.append(f"{xv:.17g},{yv:.17g},{val:.17g}")
    return "\n".join(lines) + "\n"
