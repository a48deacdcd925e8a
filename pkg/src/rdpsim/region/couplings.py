"""Couplings of two fixed marginals under a conditional-entropy floor.

``min_cost_coupling(cost, a, b, h_min)`` solves

    minimize   <pi, cost>
    subject to pi 1 = a,  pi^T 1 = b,  pi >= 0,  H(pi) - H(a) >= h_min

which is convex: linear objective, linear constraints, and the superlevel set
of a concave function. Its solution is either the unconstrained transport
optimum or an entropic coupling ``exp((f_i + g_j - c_ij) / lam)`` whose
temperature puts the entropy exactly on the floor.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq, linprog
from scipy.special import logsumexp

from ..probcore import xlogx

LAM_MIN = 1e-7
LAM_MAX = 1e5


def cond_entropy_rows(pi: np.ndarray) -> float:
    """``H(B|A)`` of a joint table ``pi[a, b]``, in bits."""
    return float(-xlogx(pi).sum() + xlogx(pi.sum(axis=1)).sum())


def transport_lp(cost: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vertex solution of the unregularized transport problem."""
    k, m = cost.shape
    a_eq = np.zeros((k + m, k * m))
    for i in range(k):
        a_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        a_eq[k + j, j::m] = 1.0
    res = linprog(cost.reshape(-1), A_eq=a_eq[:-1], b_eq=np.concatenate([a, b])[:-1],
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    pi = np.clip(res.x.reshape(k, m), 0.0, None)
    return ipf(pi, a, b)


def ipf(pi: np.ndarray, a: np.ndarray, b: np.ndarray, iters: int = 200,
        tol: float = 1e-15) -> np.ndarray:
    """Iterative proportional fitting of ``pi`` to marginals ``(a, b)``.

    Ends on a row scaling, so the row marginal is exact.
    """
    pi = np.array(pi, dtype=float)
    for _ in range(iters):
        cs = pi.sum(axis=0)
        pi *= np.divide(b, cs, out=np.zeros_like(b), where=cs > 0)[None, :]
        rs = pi.sum(axis=1)
        pi *= np.divide(a, rs, out=np.zeros_like(a), where=rs > 0)[:, None]
        if np.abs(pi.sum(axis=0) - b).max() < tol:
            break
    return pi


def entropic_coupling(cost: np.ndarray, a: np.ndarray, b: np.ndarray, lam: float,
                      g0: np.ndarray | None = None, iters: int = 5000,
                      tol: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
    """Log-domain Sinkhorn. Rows with ``a_i = 0`` are carried as zero rows.

    Returns the coupling and the column potential (for warm starts).
    """
    la = np.full_like(a, -np.inf)
    la[a > 0] = np.log(a[a > 0])
    lb = np.full_like(b, -np.inf)
    lb[b > 0] = np.log(b[b > 0])
    kern = -cost / lam
    g = np.zeros(b.shape) if g0 is None else g0.copy()
    rows = a > 0
    for _ in range(iters):
        f = la - logsumexp(kern + g[None, :], axis=1)
        f[~rows] = -np.inf
        g = lb - logsumexp(kern[rows] + f[rows, None], axis=0)
        logpi = kern + f[:, None] + g[None, :]
        rs = np.exp(logsumexp(logpi, axis=1))
        if np.abs(rs - a).max() < tol:
            break
    f = la - logsumexp(kern + g[None, :], axis=1)
    pi = np.zeros_like(cost)
    pi[rows] = np.exp(kern[rows] + f[rows, None] + g[None, :])
    return pi, g


def mix_to_entropy(pi: np.ndarray, h_min: float, tol: float = 1e-13) -> np.ndarray:
    """Smallest mixture ``(1-t) pi + t a b^T`` whose ``H(B|A)`` reaches ``h_min``.

    Mixing with the product of the marginals keeps both marginals and raises
    the conditional entropy (concavity), so this is a feasibility repair.
    """
    if cond_entropy_rows(pi) >= h_min:
        return pi
    a, b = pi.sum(axis=1), pi.sum(axis=0)
    prod = np.outer(a, b)
    if cond_entropy_rows(prod) < h_min:
        return prod
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cond_entropy_rows((1 - mid) * pi + mid * prod) >= h_min:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    return (1 - hi) * pi + hi * prod


def min_cost_coupling(cost: np.ndarray, a: np.ndarray, b: np.ndarray,
                      h_min: float) -> np.ndarray:
    """Minimum-cost coupling of ``(a, b)`` with ``H(B|A) >= h_min``.

    ``a`` indexes rows (conditioning side), ``b`` columns.
    """
    cost = np.asarray(cost, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    h_top = float(-xlogx(b).sum())
    if h_min >= h_top - 1e-12:
        return np.outer(a, b)
    pi_lp = transport_lp(cost, a, b)
    if cond_entropy_rows(pi_lp) >= h_min:
        return pi_lp

    scale = max(np.abs(cost).max(), 1e-12)
    warm = {"g": None}

    def gap(log_lam: float) -> float:
        pi, warm["g"] = entropic_coupling(cost, a, b, np.exp(log_lam) * scale, warm["g"])
        return cond_entropy_rows(pi) - h_min

    lo, hi = np.log(LAM_MIN), np.log(LAM_MAX)
    if gap(lo) >= 0:
        root = lo
    else:
        root = brentq(gap, lo, hi, xtol=1e-12, rtol=1e-12, maxiter=200)
    pi, _ = entropic_coupling(cost, a, b, np.exp(root) * scale, None)
    pi = ipf(pi, a, b)
    return mix_to_entropy(pi, h_min)
