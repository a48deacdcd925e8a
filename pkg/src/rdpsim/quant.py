"""Euclidean grid quantizers and distortion-preservation checks.

The quantizer at level ``l`` with exponent ``s`` tiles ``R^k`` with half-open
cubes of side ``l^-s`` (cell index ``floor(x / side)``). Cells whose closure
lies inside the closed ball of radius ``l`` map to their center. Cells that
straddle the sphere map to a fixed point of ``cell ∩ ball``: the center if it is
in the ball, otherwise the midpoint of the in-ball part of the segment from the
center to the cell's closest point to the origin, which keeps it off the cell
faces. Points outside the ball are first projected radially onto the sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_SNAP = 1e-9   # in units of the cell side; absorbs rounding at grid lines


@dataclass(frozen=True)
class EuclideanQuantizer:
    dim: int
    level: int
    s: float

    def __post_init__(self):
        if self.dim < 1 or self.level < 1 or self.s <= 0:
            raise ValueError("need dim >= 1, level >= 1, s > 0")

    @property
    def side(self) -> float:
        return float(self.level) ** (-self.s)

    @property
    def radius(self) -> float:
        return float(self.level)

    def _as_points(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        pts = pts.reshape(-1, self.dim) if pts.ndim <= 1 and self.dim > 1 else pts
        pts = pts.reshape(-1, 1) if pts.ndim == 1 else pts
        if pts.shape[1] != self.dim:
            raise ValueError(f"points must have dimension {self.dim}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("quantize requires finite coordinates")
        return pts

    def project(self, pts: np.ndarray) -> np.ndarray:
        """Radial projection of points outside the closed ball onto its sphere."""
        norm = np.linalg.norm(pts, axis=1)
        scale = np.where(norm > self.radius, self.radius / np.maximum(norm, 1e-300), 1.0)
        return pts * scale[:, None]

    def cell_index(self, x) -> np.ndarray:
        """Integer prism index of each point after projection, shape ``(N, dim)``."""
        pts = self.project(self._as_points(x))
        return np.floor(pts / self.side + _SNAP).astype(np.int64)

    def representative_of(self, idx: np.ndarray) -> np.ndarray:
        """Representative point of each prism index (rows of ``idx``)."""
        idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
        h, ell = self.side, self.radius
        lo, hi = idx * h, (idx + 1) * h
        center = (idx + 0.5) * h
        far = np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi)), axis=1)
        out = center.copy()
        edge = (far > ell) & (np.linalg.norm(center, axis=1) > ell)
        if np.any(edge):
            c = center[edge]
            near = np.clip(0.0, lo[edge], hi[edge])
            d = near - c
            a = np.sum(d * d, axis=1)
            b = 2 * np.sum(c * d, axis=1)
            cc = np.sum(c * c, axis=1) - ell * ell
            disc = b * b - 4 * a * cc
            with np.errstate(invalid="ignore", divide="ignore"):
                t = (-b - np.sqrt(np.maximum(disc, 0.0))) / (2 * a)
            t = np.where((disc >= 0) & np.isfinite(t), 0.5 * (t + 1.0), 1.0)
            t = np.clip(t, 0.0, 1.0)
            out[edge] = c + t[:, None] * d
        return out

    def quantize(self, x) -> np.ndarray:
        pts = self._as_points(x)
        return self.representative_of(self.cell_index(pts))

    def prism_indices(self, max_cells: int = 10**7) -> np.ndarray:
        """All prisms meeting the closed ball, i.e. the finite representative set."""
        m = int(math.ceil(self.radius / self.side))
        if (2 * m + 1) ** self.dim > max_cells:
            raise ValueError(f"{(2 * m + 1) ** self.dim} candidate prisms exceed {max_cells}")
        axis = np.arange(-m, m + 1)
        grid = np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij"), -1).reshape(-1, self.dim)
        h = self.side
        near = np.clip(0.0, grid * h, (grid + 1) * h)
        return grid[np.linalg.norm(near, axis=1) <= self.radius]

    def cell_intervals_1d(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """For ``dim == 1``: cell indices and the ``[lo, hi)`` preimage of each.

        The two outermost cells absorb the tails through the projection.
        """
        if self.dim != 1:
            raise ValueError("only defined for dim == 1")
        idx = self.prism_indices()[:, 0]
        idx = idx[(idx + 1) * self.side > -self.radius]
        idx = idx[idx * self.side <= self.radius]
        lo = idx * self.side
        hi = (idx + 1) * self.side
        lo[0], hi[-1] = -math.inf, math.inf
        return idx, lo, hi


def power_distortion(s: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    def d(x, y):
        return np.linalg.norm(np.atleast_2d(x) - np.atleast_2d(y), axis=-1) ** s
    return d


def ball_radius_for(samples: np.ndarray, tau: float) -> int:
    """Smallest integer radius whose complement holds at most a ``tau`` fraction of samples."""
    norms = np.linalg.norm(np.atleast_2d(samples).reshape(len(samples), -1), axis=1)
    r = 0
    while np.mean(norms > r) > tau:
        r += 1
    return r


@dataclass(frozen=True)
class QuantizabilityReport:
    radius: int
    inside_pairs: int
    outside_pairs: int
    max_inside_violation: float
    max_outside_violation: float
    eps: float

    @property
    def passed(self) -> bool:
        return self.max_inside_violation <= self.eps and self.max_outside_violation <= self.eps


def verify_quantizability(q: EuclideanQuantizer, s: float, x: np.ndarray, y: np.ndarray,
                          eps: float, tau: float) -> QuantizabilityReport:
    """Check distortion preservation on sample pairs ``(x_i, y_i)``.

    Inside ``B_tau^2`` the check is ``|d(x, y) - d(q(x), q(y))| <= eps``;
    for pairs with a point outside it is ``d(q(x), q(y)) <= d(x, y) + eps``.
    """
    x = q._as_points(x)
    y = q._as_points(y)
    r = ball_radius_for(np.concatenate([x, y]), tau)
    d = power_distortion(s)
    raw = d(x, y)
    quant = d(q.quantize(x), q.quantize(y))
    inside = (np.linalg.norm(x, axis=1) <= r) & (np.linalg.norm(y, axis=1) <= r)
    vin = float(np.max(np.abs(raw - quant)[inside], initial=0.0))
    vout = float(np.max((quant - raw)[~inside], initial=-math.inf))
    return QuantizabilityReport(r, int(inside.sum()), int((~inside).sum()), vin,
                                max(vout, 0.0), eps)


@dataclass(frozen=True)
class IntegrabilityProbe:
    taus: tuple
    tail_means: tuple
    squared_error_bounds: tuple | None


def uniform_integrability_probe(x: np.ndarray, d: Callable, taus: Sequence[float],
                                rng: np.random.Generator, squared_error: bool = False
                                ) -> IntegrabilityProbe:
    """Tail contribution of ``d`` on events of probability ``tau``.

    Pairs ``(x_i, x_pi(i))`` with a random permutation stand in for the
    independent coupling; for each ``tau`` the probe is the mean of
    ``d * 1{top tau fraction of d}``. With ``squared_error`` the analytic
    bound ``4 E[|X|^2 1{|X| in its top tau}]`` valid for every coupling is
    reported too. This is an estimate, not a certified supremum.
    """
    x = np.asarray(x)
    n = len(x)
    partner = x[rng.permutation(n)]
    vals = np.sort(np.asarray(d(x, partner), dtype=float).reshape(-1))[::-1]
    sq = np.sort(np.sum(np.atleast_2d(x.reshape(n, -1)) ** 2, axis=1))[::-1]
    means, bounds = [], []
    for tau in taus:
        if not 0 <= tau <= 1:
            raise ValueError("tau must lie in [0, 1]")
        top = int(math.floor(tau * n))
        means.append(float(vals[:top].sum() / n))
        bounds.append(float(4 * sq[:top].sum() / n))
    return IntegrabilityProbe(tuple(taus), tuple(means), tuple(bounds) if squared_error else None)
