"""Hot numeric kernels for the scalar dual minimization.

The inner free-energy maximization reduces, per (state, action) pair, to
minimizing the convex scalar function

    V(alpha) = alpha * ln sum_i exp(logw_i + a_i / alpha) + alpha * eta

over alpha > 0 and comparing with the alpha = 0 branch M = max_i a_i,
where a_i = ln hat_p - ln q_x + cost at a fixed point set and logw_i are
log expectation weights.  This solve runs ~25 times per simulator step, so
it is JIT-compiled with numba; a pure-numpy implementation of the same
routines is selected when numba is unavailable or when the environment
variable ``DRFREE_NO_NUMBA=1`` is set.

Bracketing starts at alpha = 1 and expands geometrically until V increases
on both sides, then golden-section search runs to absolute tolerance 1e-6
on alpha and 1e-8 on V.  Ties between M and the interior minimum within
1e-10 report the alpha = 0 branch.
"""

from __future__ import annotations

import math
import os

import numpy as np

ALPHA_TOL = 1e-6
V_TOL = 1e-8
TIE_TOL = 1e-10
ALPHA_FLOOR = 1e-9
ALPHA_CAP = 1e12

BRANCH_AT_ZERO = 0
BRANCH_INTERIOR = 1

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _dual_value_py(a, logw, eta, alpha):
    z = logw + a / alpha
    m = np.max(z)
    if not np.isfinite(m):
        return float(m)
    s = np.sum(np.exp(np.maximum(z - m, -745.0)))
    return float(alpha * (m + np.log(s)) + alpha * eta)


def _dual_solve_py(a, logw, eta):
    m_val = float(np.max(a))

    def v(alpha):
        return _dual_value_py(a, logw, eta, alpha)

    lo, hi, ok = _bracket_py(v)
    if not ok:
        return (math.nan, math.nan, m_val, -1)
    v_int, a_star = _golden_py(v, lo, hi)
    if m_val <= v_int + TIE_TOL:
        return (m_val, 0.0, m_val, BRANCH_AT_ZERO)
    return (v_int, a_star, m_val, BRANCH_INTERIOR)


def _bracket_py(v):
    v1 = v(1.0)
    if not np.isfinite(v1):
        return 0.0, 0.0, False
    # expand upward until V increases
    hi = 1.0
    v_hi = v1
    while hi < ALPHA_CAP:
        cand = hi * 2.0
        v_cand = v(cand)
        if not np.isfinite(v_cand):
            return 0.0, 0.0, False
        if v_cand >= v_hi:
            break
        hi, v_hi = cand, v_cand
    hi *= 2.0
    # expand downward until V increases (or we hit the alpha -> 0 limit)
    lo = 1.0
    v_lo = v1
    while lo > ALPHA_FLOOR:
        cand = lo * 0.5
        v_cand = v(cand)
        if not np.isfinite(v_cand):
            return 0.0, 0.0, False
        if v_cand >= v_lo:
            break
        lo, v_lo = cand, v_cand
    lo *= 0.5
    return max(lo, ALPHA_FLOOR * 0.5), hi, True


def _golden_py(v, lo, hi):
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = v(x1), v(x2)
    while (hi - lo) > ALPHA_TOL and abs(f1 - f2) > V_TOL:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = v(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = v(x2)
    if f1 <= f2:
        return f1, x1
    return f2, x2


def _dual_solve_batch_py(a2, logw2, etas):
    n = a2.shape[0]
    out_v = np.empty(n)
    out_alpha = np.empty(n)
    out_m = np.empty(n)
    out_branch = np.empty(n, dtype=np.int64)
    for j in range(n):
        v, al, m, br = _dual_solve_py(a2[j], logw2[j], etas[j])
        out_v[j], out_alpha[j], out_m[j], out_branch[j] = v, al, m, br
    return out_v, out_alpha, out_m, out_branch


def _want_numba() -> bool:
    return os.environ.get("DRFREE_NO_NUMBA", "").lower() not in ("1", "true", "yes")


USING_NUMBA = False

if _want_numba():
    try:
        from numba import njit

        @njit(cache=True)
        def _dual_value_nb(a, logw, eta, alpha):
            n = a.shape[0]
            m = -np.inf
            for i in range(n):
                z = logw[i] + a[i] / alpha
                if z > m:
                    m = z
            if not np.isfinite(m):
                return m
            s = 0.0
            for i in range(n):
                arg = logw[i] + a[i] / alpha - m
                if arg > -745.0:
                    s += math.exp(arg)
            return alpha * (m + math.log(s)) + alpha * eta

        @njit(cache=True)
        def _dual_solve_nb(a, logw, eta):
            m_val = a[0]
            for i in range(1, a.shape[0]):
                if a[i] > m_val:
                    m_val = a[i]

            v1 = _dual_value_nb(a, logw, eta, 1.0)
            if not np.isfinite(v1):
                return (np.nan, np.nan, m_val, -1)
            hi = 1.0
            v_hi = v1
            while hi < ALPHA_CAP:
                cand = hi * 2.0
                v_cand = _dual_value_nb(a, logw, eta, cand)
                if not np.isfinite(v_cand):
                    return (np.nan, np.nan, m_val, -1)
                if v_cand >= v_hi:
                    break
                hi = cand
                v_hi = v_cand
            hi *= 2.0
            lo = 1.0
            v_lo = v1
            while lo > ALPHA_FLOOR:
                cand = lo * 0.5
                v_cand = _dual_value_nb(a, logw, eta, cand)
                if not np.isfinite(v_cand):
                    return (np.nan, np.nan, m_val, -1)
                if v_cand >= v_lo:
                    break
                lo = cand
                v_lo = v_cand
            lo *= 0.5
            if lo < ALPHA_FLOOR * 0.5:
                lo = ALPHA_FLOOR * 0.5

            x1 = hi - _INVPHI * (hi - lo)
            x2 = lo + _INVPHI * (hi - lo)
            f1 = _dual_value_nb(a, logw, eta, x1)
            f2 = _dual_value_nb(a, logw, eta, x2)
            while (hi - lo) > ALPHA_TOL and abs(f1 - f2) > V_TOL:
                if f1 <= f2:
                    hi = x2
                    x2 = x1
                    f2 = f1
                    x1 = hi - _INVPHI * (hi - lo)
                    f1 = _dual_value_nb(a, logw, eta, x1)
                else:
                    lo = x1
                    x1 = x2
                    f1 = f2
                    x2 = lo + _INVPHI * (hi - lo)
                    f2 = _dual_value_nb(a, logw, eta, x2)
            if f1 <= f2:
                v_int = f1
                a_star = x1
            else:
                v_int = f2
                a_star = x2
            if m_val <= v_int + TIE_TOL:
                return (m_val, 0.0, m_val, BRANCH_AT_ZERO)
            return (v_int, a_star, m_val, BRANCH_INTERIOR)

        @njit(cache=True)
        def _dual_solve_batch_nb(a2, logw2, etas):
            n = a2.shape[0]
            out_v = np.empty(n)
            out_alpha = np.empty(n)
            out_m = np.empty(n)
            out_branch = np.empty(n, dtype=np.int64)
            for j in range(n):
                v, al, m, br = _dual_solve_nb(a2[j], logw2[j], etas[j])
                out_v[j] = v
                out_alpha[j] = al
                out_m[j] = m
                out_branch[j] = br
            return out_v, out_alpha, out_m, out_branch

        dual_value = _dual_value_nb
        dual_solve = _dual_solve_nb
        dual_solve_batch = _dual_solve_batch_nb
        USING_NUMBA = True
    except Exception:  # pragma: no cover - depends on environment
        dual_value = _dual_value_py
        dual_solve = _dual_solve_py
        dual_solve_batch = _dual_solve_batch_py
else:
    dual_value = _dual_value_py
    dual_solve = _dual_solve_py
    dual_solve_batch = _dual_solve_batch_py


def implementation_name() -> str:
    return "numba" if USING_NUMBA else "numpy"
