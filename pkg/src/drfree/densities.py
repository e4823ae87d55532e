"""Density algebra: discrete and Gaussian densities, KL divergences, sampling.

Probabilities are stored linearly (not in log space) so simplex invariants
stay directly checkable; log space is entered only inside the KL and
log-sum-exp routines.

Conventions: 0 * ln 0 := 0, and p_i > 0 where q_i = 0 raises
:class:`AbsoluteContinuityViolation` instead of returning +inf — models
outside the ambiguity set's support condition are configuration bugs,
not values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    AbsoluteContinuityViolation,
    DimensionMismatch,
    EmptyInput,
    NonPositiveDefinite,
)
from .rng import Rng

_SIMPLEX_TOL = 1e-12
_SYM_TOL = 1e-12
_EXP_CLAMP = 700.0


@dataclass(frozen=True)
class DiscreteDensity:
    """Probability mass function on a finite set of n-dimensional points."""

    support: np.ndarray  # (n_points, dim)
    probs: np.ndarray  # (n_points,)

    def __post_init__(self):
        support = np.atleast_2d(np.asarray(self.support, dtype=np.float64))
        probs = np.asarray(self.probs, dtype=np.float64).ravel()
        if support.shape[0] != probs.shape[0]:
            raise DimensionMismatch(
                f"{support.shape[0]} support points vs {probs.shape[0]} probabilities"
            )
        if probs.size == 0:
            raise EmptyInput("discrete density needs at least one point")
        if np.any(probs < 0):
            raise ValueError("negative probability mass")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        seen = set()
        for row in support:
            key = row.tobytes()
            if key in seen:
                raise ValueError("support points must be pairwise distinct")
            seen.add(key)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_weights(cls, support, weights) -> "DiscreteDensity":
        w = np.asarray(weights, dtype=np.float64).ravel()
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with positive sum")
        return cls(np.asarray(support, dtype=np.float64), w / w.sum())

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def index_of(self, point: np.ndarray) -> int | None:
        key = np.asarray(point, dtype=np.float64).tobytes()
        for i, row in enumerate(self.support):
            if row.tobytes() == key:
                return i
        return None

    def prob_at(self, points: np.ndarray) -> np.ndarray:
        """Mass at each query point; zero off-support."""
        lookup = {row.tobytes(): p for row, p in zip(self.support, self.probs)}
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.array([lookup.get(r.tobytes(), 0.0) for r in pts])

    def to_json(self) -> str:
        return json.dumps(
            {"type": "discrete", "support": self.support.tolist(), "probs": self.probs.tolist()}
        )


@dataclass(frozen=True)
class GaussianDensity:
    """Multivariate normal with validated symmetric positive-definite covariance."""

    mean: np.ndarray  # (dim,)
    cov: np.ndarray  # (dim, dim)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(f"mean dim {mean.size} vs cov shape {cov.shape}")
        if np.max(np.abs(cov - cov.T)) > _SYM_TOL * max(1.0, np.max(np.abs(cov))):
            raise NonPositiveDefinite("covariance not symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NonPositiveDefinite(str(exc)) from None
        if np.any(np.diag(chol) <= _SIMPLEX_TOL):
            raise NonPositiveDefinite("Cholesky pivot below tolerance")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.size

    @cached_property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def to_json(self) -> str:
        return json.dumps({"type": "gaussian", "mean": self.mean.tolist(), "cov": self.cov.tolist()})


def density_from_json(text: str):
    doc = json.loads(text)
    kind = doc.get("type")
    if kind == "gaussian":
        return GaussianDensity(np.array(doc["mean"]), np.array(doc["cov"]))
    if kind == "discrete":
        return DiscreteDensity(np.array(doc["support"]), np.array(doc["probs"]))
    raise ValueError(f"unknown density type {kind!r}")


def kl_discrete(p: DiscreteDensity, q: DiscreteDensity) -> float:
    """KL(p || q) = sum p ln(p/q) over the support of p, with 0 ln 0 = 0."""
    q_at_p = q.prob_at(p.support)
    active = p.probs > 0
    if np.any(q_at_p[active] <= 0):
        raise AbsoluteContinuityViolation("p has mass where q has none")
    pa, qa = p.probs[active], q_at_p[active]
    return float(np.sum(pa * (np.log(pa) - np.log(qa))))


def kl_gaussian(p: GaussianDensity, q: GaussianDensity) -> float:
    """Closed-form Gaussian KL(p || q)."""
    if p.dim != q.dim:
        raise DimensionMismatch(f"{p.dim} vs {q.dim}")
    d = p.dim
    lq = q._chol
    # tr(Sigma_q^{-1} Sigma_p) via two triangular solves
    y = np.linalg.solve(lq, p.cov)
    z = np.linalg.solve(lq.T, y)
    trace = float(np.trace(z))
    delta = p.mean - q.mean
    w = np.linalg.solve(lq, delta)
    quad = float(w @ w)
    val = 0.5 * (trace + quad - d + q.log_det - p.log_det)
    if -1e-10 < val < 0.0:
        val = 0.0
    return val


def log_pdf(d: GaussianDensity, x: np.ndarray) -> float | np.ndarray:
    """Gaussian log-density at one point (dim,) or many points (k, dim)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != d.dim:
        raise DimensionMismatch(f"point dim {pts.shape[1]} vs density dim {d.dim}")
    delta = pts - d.mean
    w = np.linalg.solve(d._chol, delta.T)
    quad = np.sum(w * w, axis=0)
    out = -0.5 * (d.dim * np.log(2.0 * np.pi) + d.log_det + quad)
    return float(out[0]) if single else out


def sample(d, rng: Rng, n: int) -> np.ndarray:
    """n i.i.d. draws as an (n, dim) array, reproducible under the seed."""
    if n < 1:
        raise EmptyInput("need n >= 1 samples")
    if isinstance(d, GaussianDensity):
        z = rng.standard_normal((n, d.dim))
        return d.mean + z @ d._chol.T
    if isinstance(d, DiscreteDensity):
        idx = rng.generator.choice(len(d.probs), size=n, p=d.probs)
        return d.support[idx]
    raise TypeError(f"cannot sample from {type(d).__name__}")


def log_sum_exp(values, weights=None) -> float:
    """ln sum_i w_i exp(v_i), stabilized by max subtraction.

    Exponent arguments are clamped to [-700, 700] after the reduction so the
    call never overflows for inputs up to +-700 per entry.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("log_sum_exp of empty list")
    if weights is None:
        logw = np.zeros_like(v)
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.size != v.size:
            raise DimensionMismatch(f"{v.size} values vs {w.size} weights")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        logw = np.log(w)
    z = v + logw
    m = np.max(z)
    if not np.isfinite(m):
        return float(m)
    arg = np.clip(z - m, -_EXP_CLAMP, _EXP_CLAMP)
    return float(m + np.log(np.sum(np.exp(arg))))
