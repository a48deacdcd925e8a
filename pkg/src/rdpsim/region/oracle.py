"""Exhaustive grid search over small auxiliary variables.

Used only to cross-check the optimizer. The search enumerates ``p_V`` on a
grid (sorted descending, which removes relabelling symmetry), then every grid
choice of all conditional rows but the heaviest one. The heaviest row is
solved from the marginal constraint, so every kept point has marginals
exactly equal to the source. Since every kept point is feasible, the result
is an upper bound on the true minimum.

The same candidate set serves ``K_X|V`` and ``K_Y|V``; the pair objective for
a fixed ``p_V`` is a single matrix product, and a reversed running minimum
over candidates sorted by ``H(X|V)`` answers all rate points at once.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from ..probcore import xlogx
from .solver import INF, RegionProblem, _floors

MAX_PAIRS = 2.5e7
ENTROPY_TOL = 1e-9


class ComplexityError(ValueError):
    """The requested grid is too large for exhaustive search."""


def _simplex_grid(m: int, steps: int) -> np.ndarray:
    """All points of the ``m``-simplex with coordinates in ``{0, 1/steps, ...}``."""
    pts = [c for c in itertools.product(range(steps + 1), repeat=m - 1) if sum(c) <= steps]
    arr = np.array([list(c) + [steps - sum(c)] for c in pts], dtype=float)
    return arr / steps


def _weights(k: int, steps: int) -> list[np.ndarray]:
    out = []
    for c in itertools.product(range(steps + 1), repeat=k - 1):
        last = steps - sum(c)
        full = (*c, last)
        if last < 0 or list(full) != sorted(full, reverse=True):
            continue
        w = np.array(full, dtype=float) / steps
        out.append(w[w > 0])
    return out


def _candidates(w: np.ndarray, p: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Kernels ``(n_cand, k, m)`` with ``w @ kernel == p`` exactly."""
    k, m = len(w), len(p)
    if k == 1:
        return p[None, None, :].copy()
    idx = np.array(list(itertools.product(range(len(rows)), repeat=k - 1)))
    free = rows[idx]                                   # (n, k-1, m)
    rest = p[None, :] - np.einsum("v,nvm->nm", w[1:], free)
    head = rest / w[0]
    ok = np.all(head >= -1e-12, axis=1)
    head = np.clip(head[ok], 0.0, None)
    head /= head.sum(axis=1, keepdims=True)
    return np.concatenate([head[:, None, :], free[ok]], axis=1)


def _check(problem: RegionProblem, resolution: float) -> int:
    m = len(problem.source)
    if m > 3:
        raise ComplexityError(f"grid oracle supports |X| <= 3, got {m}")
    if problem.v_card_cap > 3:
        raise ComplexityError(f"grid oracle supports v_card_cap <= 3, got {problem.v_card_cap}")
    if resolution < 0.01:
        raise ComplexityError(f"resolution must be >= 0.01, got {resolution}")
    steps = int(round(1.0 / resolution))
    if abs(steps * resolution - 1.0) > 1e-9:
        raise ValueError("resolution must divide 1")
    n_rows = math.comb(steps + m - 1, m - 1)
    worst = n_rows ** (2 * (problem.v_card_cap - 1))
    if worst > MAX_PAIRS:
        raise ComplexityError(f"grid would need up to {worst:.3g} kernel pairs (limit {MAX_PAIRS:.3g})")
    return steps


def grid_oracle_many(problem: RegionProblem, rates: Sequence[tuple[float, float, float]],
                     resolution: float = 0.02) -> list[float]:
    """Best grid distortion for each ``(R, R_c, R_d)``; ``inf`` if no grid point is feasible."""
    steps = _check(problem, resolution)
    p = problem.source.probs
    d = problem.distortion
    bounds = np.array([_floors(problem, *r) for r in rates], dtype=float).reshape(-1, 3)
    best = np.full(len(rates), INF)
    rows = _simplex_grid(len(p), steps)
    for k in range(1, problem.v_card_cap + 1):
        for w in _weights(k, steps):
            if len(w) != k:
                continue
            cand = _candidates(w, p, rows)
            if len(cand) == 0:
                continue
            h = np.einsum("v,nv->n", w, -xlogx(cand).sum(axis=2))
            order = np.argsort(h, kind="stable")
            cand, h = cand[order], h[order]
            left = (w[None, :, None] * (cand @ d)).reshape(len(cand), -1)
            right = cand.reshape(len(cand), -1)
            f = left @ right.T                          # f[a, b] = E d for (K_X=a, K_Y=b)
            g = np.minimum.accumulate(f[::-1], axis=0)[::-1]
            for i, (lo_x, lo_y, hi_y) in enumerate(bounds):
                start = np.searchsorted(h, lo_x - ENTROPY_TOL, side="left")
                if start >= len(h):
                    continue
                cols = (h >= lo_y - ENTROPY_TOL) & (h <= hi_y + ENTROPY_TOL)
                if not cols.any():
                    continue
                val = g[start, cols].min()
                if val < best[i]:
                    best[i] = val
    return [float(b) for b in best]


def grid_oracle(problem: RegionProblem, R: float, R_c: float = INF, R_d: float = INF,
                resolution: float = 0.02) -> float:
    return grid_oracle_many(problem, [(R, R_c, R_d)], resolution)[0]
