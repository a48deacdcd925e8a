"""Replacing a randomized encoder by a deterministic one.

A stochastic encoder ``P(m | x^n, j)`` is written as ``m = psi(x^n, j, U)`` with
a shared uniform variable ``U``. Fixing one draw of ``U`` per input pair gives a
deterministic encoder; several such draws are scored exactly and the best
one is kept. Since the minimum never exceeds the mean, the selected encoder
always does at least as well as a random draw.

The score of a candidate is the TVD between the joint law of
``(M, J, X_tau, V_tau)`` under the candidate and under the original encoder,
with ``tau`` a uniform position and ``V = v^n(M, J)``. Its ``(M, J)`` marginal
is the law of the transmitted pair and its ``X x V`` marginal is the average
empirical distribution, so the score bounds both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codec import Codebook, InducedJoint
from .probcore import Pmf, all_strings, entropy, tvd
from .seeding import derive_rng


class DerandError(ValueError):
    pass


@dataclass(frozen=True)
class StochasticEncoder:
    """Rows ``enc[x^n, j, :]`` over messages."""

    n: int
    x_card: int
    enc: np.ndarray

    def __post_init__(self):
        e = np.array(self.enc, dtype=float)
        if e.ndim != 3 or e.shape[0] != self.x_card ** self.n:
            raise ValueError("enc must have shape (|X|^n, J, M)")
        if np.any(e < -1e-15) or np.abs(e.sum(axis=2) - 1).max() > 1e-9:
            raise ValueError("every encoder row must be a pmf")
        e.setflags(write=False)
        object.__setattr__(self, "enc", e)

    @classmethod
    def from_joint(cls, ij: InducedJoint) -> "StochasticEncoder":
        return cls(ij.n, ij.x_card, ij.enc)

    @property
    def message_count(self) -> int:
        return self.enc.shape[2]

    @property
    def cr_count(self) -> int:
        return self.enc.shape[1]


@dataclass(frozen=True)
class DeterministicEncoder:
    """``f[x^n, j]`` is the message sent."""

    n: int
    x_card: int
    message_count: int
    f: np.ndarray

    def __post_init__(self):
        f = np.array(self.f, dtype=np.int64)
        if f.min() < 0 or f.max() >= self.message_count:
            raise ValueError("message index out of range")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    def as_rows(self) -> np.ndarray:
        rows = np.zeros(self.f.shape + (self.message_count,))
        np.put_along_axis(rows, self.f[..., None], 1.0, axis=2)
        return rows

    def __call__(self, x_index: int, j: int) -> int:
        return int(self.f[x_index, j])


@dataclass(frozen=True)
class FunctionalRep:
    """``m = psi(x, j, u)`` with ``U`` on the cells between shared CDF breakpoints."""

    cdf: np.ndarray          # (Nx, J, M) row CDFs
    breaks: np.ndarray       # right end of each U cell, last one is 1

    @property
    def p_U(self) -> Pmf:
        return Pmf.from_probs(np.diff(self.breaks, prepend=0.0))

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.breaks + np.concatenate([[0.0], self.breaks[:-1]]))

    def psi(self, x: int, j: int, u: int) -> int:
        return _invert(self.cdf[x, j], self.midpoints()[u])

    def pushforward(self) -> np.ndarray:
        """Row laws recovered by pushing ``p_U`` through ``psi``."""
        mids = self.midpoints()
        pu = self.p_U.probs
        nx, nj, nm = self.cdf.shape
        out = np.zeros((nx, nj, nm))
        for x in range(nx):
            for j in range(nj):
                ms = np.minimum(np.searchsorted(self.cdf[x, j], mids, side="right"), nm - 1)
                out[x, j] = np.bincount(ms, weights=pu, minlength=nm)
        return out


def _invert(cdf_row: np.ndarray, u: float | np.ndarray):
    idx = np.searchsorted(cdf_row, u, side="right")
    return np.minimum(idx, len(cdf_row) - 1)


def _row_cdfs(enc: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(enc, axis=2)
    cdf[..., -1] = 1.0
    return cdf


def functional_representation(enc: StochasticEncoder) -> FunctionalRep:
    """Inverse-CDF representation on the union of all rows' CDF breakpoints."""
    cdf = _row_cdfs(enc.enc)
    pts = np.unique(np.clip(cdf.reshape(-1), 0.0, 1.0))
    pts = pts[pts > 0]
    if pts[-1] != 1.0:
        pts = np.append(pts, 1.0)
    return FunctionalRep(cdf, pts)


def _joint_type_keys(cb: Codebook, x_card: int) -> np.ndarray:
    """Integer code of the joint type of ``(x^n, v^n(m, j))``, shape ``(Nx, J, M)``."""
    n, vk = cb.n, len(cb.v_alphabet)
    xs = all_strings(x_card, n)
    base = n + 1
    if (x_card * vk) * math.log2(base) > 62:
        raise DerandError("joint-type alphabet too large for integer keys")
    words = np.transpose(cb.words, (1, 0, 2))      # (J, M, n)
    key = np.zeros((len(xs),) + words.shape[:2], dtype=np.int64)
    for t in range(n):
        cell = xs[:, t][:, None, None] * vk + words[None, :, :, t]
        key += base ** cell
    return key


@dataclass(frozen=True)
class ScoreParts:
    score: float
    mj_tvd: float
    empirical_tvd: float


def _mjt_index(keys: np.ndarray, cr: int, msgs: int) -> tuple[np.ndarray, int]:
    nx = keys.shape[0]
    jm = np.broadcast_to(np.arange(cr * msgs).reshape(1, cr, msgs), keys.shape)
    stacked = np.stack([jm.reshape(-1), keys.reshape(-1)], axis=1)
    _, inv = np.unique(stacked, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return inv.reshape(nx, cr, msgs), int(inv.max()) + 1


def _type_matrix(cb: Codebook, x_card: int) -> np.ndarray:
    """``avg[x, j, m, c]``: frequency of pair ``c = x_t * |V| + v_t``."""
    n, vk = cb.n, len(cb.v_alphabet)
    xs = all_strings(x_card, n)
    words = np.transpose(cb.words, (1, 0, 2))
    out = np.zeros((len(xs),) + words.shape[:2] + (x_card * vk,))
    for t in range(n):
        cell = xs[:, t][:, None, None] * vk + words[None, :, :, t]
        out += np.eye(x_card * vk)[cell]
    return out / n


class _Scorer:
    def __init__(self, ij: InducedJoint, cb: Codebook):
        self.ij = ij
        self.w0 = ij.weights()
        self.cr = ij.cr_count
        self.types = _type_matrix(cb, ij.x_card)
        self.ref = self.law(self.w0)

    def law(self, w: np.ndarray) -> np.ndarray:
        """``P(j, m, c)`` with ``c`` the (x, v) pair at a uniform position."""
        return np.einsum("xjm,xjmc->jmc", w, self.types)

    def weights_for(self, f: np.ndarray) -> np.ndarray:
        w = np.zeros_like(self.w0)
        np.put_along_axis(w, f[..., None], (self.ij.p_xn[:, None] / self.cr)[..., None], axis=2)
        return w

    def parts(self, f: np.ndarray) -> ScoreParts:
        law = self.law(self.weights_for(f))
        return ScoreParts(tvd(law.reshape(-1), self.ref.reshape(-1)),
                          tvd(law.sum(axis=2).reshape(-1), self.ref.sum(axis=2).reshape(-1)),
                          tvd(law.sum(axis=(0, 1)), self.ref.sum(axis=(0, 1))))


@dataclass(frozen=True)
class DerandReport:
    scores: tuple
    argmin: int
    mean: float
    n: int
    R: float
    H_X: float
    mj_tvds: tuple = ()
    empirical_tvds: tuple = ()
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"scores": list(self.scores), "argmin": self.argmin, "mean": self.mean,
                "n": self.n, "R": self.R, "H_X": self.H_X,
                "mj_tvds": list(self.mj_tvds), "empirical_tvds": list(self.empirical_tvds),
                **self.extra}


def derandomize(ij: InducedJoint, cb: Codebook, p_X: Pmf, candidates: int = 32,
                seed: int = 0) -> tuple[DeterministicEncoder, DerandReport]:
    """Draw ``candidates`` deterministic encoders and keep the lowest-scoring one.

    Candidate ``c`` uses its own stream ``derive_rng(seed, c)`` to draw an
    independent ``U`` per input pair; ``psi`` then maps it to a message.
    """
    h = entropy(p_X)
    R = cb.spec.R
    if R >= h:
        raise DerandError(f"R={R} must be below H(X)={h:.6g}")
    if candidates < 1:
        raise ValueError("candidates must be >= 1")
    rep = functional_representation(StochasticEncoder.from_joint(ij))
    scorer = _Scorer(ij, cb)
    encs, parts = [], []
    for c in range(candidates):
        rng = derive_rng(seed, c)
        u = rng.random(rep.cdf.shape[:2])
        # a uniform draw lands in one breakpoint cell; inverting at u is psi at that cell
        f = np.minimum((u[..., None] >= rep.cdf).sum(axis=2), ij.message_count - 1)
        encs.append(f)
        parts.append(scorer.parts(f))
    scores = np.array([p.score for p in parts])
    best = int(np.argmin(scores))
    mean = float(scores.mean())
    assert scores[best] <= mean + 1e-15
    report = DerandReport(tuple(float(s) for s in scores), best, mean, ij.n, R, h,
                          tuple(p.mj_tvd for p in parts), tuple(p.empirical_tvd for p in parts))
    return DeterministicEncoder(ij.n, ij.x_card, ij.message_count, encs[best]), report


def apply_encoder(ij: InducedJoint, f: DeterministicEncoder) -> InducedJoint:
    """The same code with the encoder replaced by ``f``; source and decoder unchanged."""
    return InducedJoint(ij.n, ij.x_card, ij.y_card, ij.p_xn, f.as_rows(), ij.dec,
                        ij.fallback_count)


def output_law_tvd(ij: InducedJoint, f: DeterministicEncoder) -> float:
    """TVD between the laws of ``(M, J, Y^n)`` under the original and derandomized encoders."""
    new = apply_encoder(ij, f)
    a = ij.p_mj()[..., None] * ij.dec
    b = new.p_mj()[..., None] * new.dec
    return tvd(a.reshape(-1), b.reshape(-1))


@dataclass(frozen=True)
class SoftCoveringReport:
    values: np.ndarray
    probs: np.ndarray
    median: float
    exceedance: dict
    histogram: tuple


def soft_covering_diagnostic(ij: InducedJoint, cb: Codebook,
                             thresholds=(0.0, 0.1, 0.25, 0.5), bins: int = 20
                             ) -> SoftCoveringReport:
    """Law of ``log2 P(x^n) P(j) - log2 P(m, j, T)`` under the code.

    With ``V = (M, J, T)`` determined by the input and the encoder's private
    randomness, this is the information-density difference whose drift to
    ``-inf`` drives derandomization. Exceedance is reported as
    ``P(diff > -n c)`` for each threshold ``c``.
    """
    w = ij.weights()
    keys = _joint_type_keys(cb, ij.x_card)
    inv, cells = _mjt_index(keys, ij.cr_count, ij.message_count)
    pv = np.bincount(inv.reshape(-1), weights=w.reshape(-1), minlength=cells)
    pw = ij.p_xn[:, None, None] / ij.cr_count
    live = w > 0
    with np.errstate(divide="ignore"):
        diff = np.log2(np.broadcast_to(pw, w.shape)) - np.log2(pv[inv])
    vals, probs = diff[live], w[live]
    order = np.argsort(vals, kind="stable")
    vals, probs = vals[order], probs[order]
    cum = np.cumsum(probs)
    median = float(vals[np.searchsorted(cum, 0.5 * cum[-1])])
    exc = {float(c): float(probs[vals > -ij.n * c].sum()) for c in thresholds}
    hist = np.histogram(vals, bins=bins, weights=probs)
    return SoftCoveringReport(vals, probs, median, exc, (hist[0], hist[1]))
