"""Making an output marginal exactly equal to a target law.

Given ``P[x, u, y]`` with ``X - U - Y``, each conditional ``P(y | u)`` is scaled
by ``min(1, target(y) / P_Y(y))`` and the mass ``alpha_u`` removed from it is
spread over the deficient outputs in proportion to ``target(y) - P_Y(y)``.
Summed over ``u`` the removed mass is exactly ``delta = TVD(P_Y, target)`` and
refills exactly the deficit, so the new output marginal is the target and the
joint moves by exactly ``delta`` in TVD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, truncnorm

from .codec import InducedJoint
from .probcore import Kernel, MarkovJoint, tvd
from .quant import EuclideanQuantizer

MARKOV_TOL = 1e-9
IDENTITY_TOL = 1e-13


class PerfectRealismError(ValueError):
    pass


def adjust_conditionals(p_u: np.ndarray, cond: np.ndarray, target: np.ndarray) -> np.ndarray:
    """New ``P'(y | u)`` rows whose ``p_u``-mixture equals ``target``."""
    p_y = p_u @ cond
    if tvd(p_y, target) <= IDENTITY_TOL:
        return cond.copy()
    ratio = np.ones_like(p_y)
    pos = p_y > 0
    ratio[pos] = np.minimum(1.0, target[pos] / p_y[pos])
    deficit = np.maximum(0.0, target - p_y)
    kept = cond * ratio[None, :]
    alpha = 1.0 - kept.sum(axis=1)
    return kept + alpha[:, None] * (deficit / deficit.sum())[None, :]


def markov_residual(joint: np.ndarray) -> float:
    """Largest ``|P(y | x, u) - P(y | u)|`` over cells with positive mass."""
    xu = joint.sum(axis=2)
    u = joint.sum(axis=(0, 2))
    cond_xu = np.divide(joint, xu[..., None], out=np.zeros_like(joint), where=xu[..., None] > 0)
    cond_u = np.divide(joint.sum(axis=0), u[:, None], out=np.zeros(joint.shape[1:]),
                       where=u[:, None] > 0)
    diff = np.abs(cond_xu - cond_u[None])
    return float(np.max(np.where(xu[..., None] > 0, diff, 0.0)))


def enforce_perfect_realism(joint: np.ndarray, target: np.ndarray) -> np.ndarray:
    """``P' = P_{X,U} P'_{Y|U}`` with ``P'_Y == target`` and ``TVD(P', P) = TVD(P_Y, target)``."""
    joint = np.asarray(joint, dtype=float)
    target = np.asarray(target, dtype=float)
    if joint.ndim != 3:
        raise ValueError("joint must be indexed [x, u, y]")
    if np.any(joint < 0) or abs(joint.sum() - 1.0) > 1e-9:
        raise PerfectRealismError("joint must be a normalized pmf")
    if np.any(target < 0) or abs(target.sum() - 1.0) > 1e-12 or target.shape != joint.shape[2:]:
        raise PerfectRealismError("target must be a pmf over the output alphabet")
    res = markov_residual(joint)
    if res > MARKOV_TOL:
        raise PerfectRealismError(f"X - U - Y violated (residual {res:.3g})")
    p_xu = joint.sum(axis=2)
    p_u = p_xu.sum(axis=0)
    if tvd(joint.sum(axis=(0, 1)), target) <= IDENTITY_TOL:
        return joint.copy()
    cond = np.divide(joint.sum(axis=0), p_u[:, None], out=np.zeros(joint.shape[1:]),
                     where=p_u[:, None] > 0)
    cond[p_u <= 0] = target
    new = adjust_conditionals(p_u, cond, target)
    return p_xu[..., None] * new[None, :, :]


def enforce_on_code(ij: InducedJoint, target: np.ndarray) -> InducedJoint:
    """Apply the adjustment with ``U = (J, M)`` and return the code with the new decoder."""
    p_mj = ij.p_mj()
    flat = ij.dec.reshape(-1, ij.dec.shape[2])
    new = adjust_conditionals(p_mj.reshape(-1), flat, np.asarray(target, float))
    return ij.with_decoder(new.reshape(ij.dec.shape))


@dataclass(frozen=True)
class GaussianCells:
    """Cells of a 1-D quantizer with the standard normal mass and sampler for each."""

    quantizer: EuclideanQuantizer
    lo: np.ndarray
    hi: np.ndarray
    mass: np.ndarray
    reps: np.ndarray

    @classmethod
    def build(cls, q: EuclideanQuantizer) -> "GaussianCells":
        idx, lo, hi = q.cell_intervals_1d()
        mass = norm.cdf(hi) - norm.cdf(lo)
        keep = mass > 0
        reps = q.representative_of(idx[:, None])[:, 0]
        return cls(q, lo[keep], hi[keep], mass[keep] / mass[keep].sum(), reps[keep])

    def cell_of(self, x: np.ndarray) -> np.ndarray:
        # cells are contiguous intervals sorted by position
        return np.searchsorted(self.hi, np.asarray(x, float), side="right")

    def sample_within(self, cells: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        cells = np.asarray(cells)
        if np.any(self.mass[cells] <= 0):
            raise PerfectRealismError("cannot sample inside a cell of zero source mass")
        return truncnorm.rvs(self.lo[cells], self.hi[cells], random_state=rng)


@dataclass(frozen=True)
class QuantizedLift:
    """``X -> [X] -> V -> [Y] -> Y`` with ``Y`` drawn from the source inside cell ``[Y]``.

    ``inner`` is a single-letter scheme over cell indices: ``V`` is drawn from
    ``P(v | [x])`` and ``[Y]`` from ``K_Y|V``. When the inner output marginal
    equals the cell law exactly, ``Y`` has exactly the source law.
    """

    cells: GaussianCells
    inner: MarkovJoint

    def posterior(self) -> np.ndarray:
        vx = self.inner.joint_vx()
        col = vx.sum(axis=0)
        return np.divide(vx, col[None, :], out=np.zeros_like(vx), where=col[None, :] > 0).T

    def run(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        cx = self.cells.cell_of(x)
        post = self.posterior()[cx]
        v = (rng.random(len(cx))[:, None] >= np.cumsum(post, axis=1)).sum(axis=1)
        v = np.minimum(v, post.shape[1] - 1)
        ky = self.inner.k_YgV.matrix[v]
        cy = (rng.random(len(v))[:, None] >= np.cumsum(ky, axis=1)).sum(axis=1)
        cy = np.minimum(cy, ky.shape[1] - 1)
        return self.cells.sample_within(cy, rng)


def quantized_lift(q: EuclideanQuantizer, inner: MarkovJoint) -> QuantizedLift:
    """Assemble the lift, first making the inner output law exactly the cell law."""
    cells = GaussianCells.build(q)
    if len(inner.k_YgV.output_alphabet) != len(cells.mass):
        raise ValueError("inner scheme must be over the quantizer's cells")
    if np.abs(inner.marginal_x() - cells.mass).max() > 1e-9:
        raise ValueError("inner scheme's input law must be the source's cell law")
    new = adjust_conditionals(inner.p_V.probs, inner.k_YgV.matrix, cells.mass)
    k_y = Kernel(inner.k_YgV.input_alphabet, inner.k_YgV.output_alphabet, new)
    return QuantizedLift(cells, MarkovJoint(inner.p_V, inner.k_XgV, k_y))
