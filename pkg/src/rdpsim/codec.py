"""Finite-blocklength random codes: codebooks, likelihood encoder, memoryless decoder.

Sequences are stored as integer index arrays over the relevant alphabet.
Strings of length ``n`` are enumerated lexicographically by
:func:`~rdpsim.probcore.all_strings`, which fixes the layout of every exact table.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .probcore import Kernel, Pmf, all_strings, tvd
from .seeding import derive_rng

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 10**8


class BudgetExceeded(RuntimeError):
    """An exact computation would exceed the table-size budget."""


def _count(n: int, rate: float) -> int:
    return int(math.floor(2.0 ** (n * rate) + 1e-9))


@dataclass(frozen=True)
class CodeSpec:
    n: int
    R: float
    R_c: float = 0.0
    R_d: float = math.inf

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not (math.isfinite(self.R) and self.R >= 0):
            raise ValueError("R must be finite and >= 0")
        if not (math.isfinite(self.R_c) and self.R_c >= 0):
            raise ValueError("R_c must be finite and >= 0 for a concrete code")
        if math.isnan(self.R_d) or self.R_d < 0:
            raise ValueError("R_d must be >= 0")

    @property
    def message_count(self) -> int:
        return _count(self.n, self.R)

    @property
    def cr_count(self) -> int:
        return _count(self.n, self.R_c)


@dataclass(frozen=True)
class Codebook:
    """Codewords ``words[m, j]`` (length-``n`` index arrays over ``v_alphabet``)."""

    spec: CodeSpec
    v_alphabet: tuple
    words: np.ndarray
    generator_seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.array(self.words, dtype=np.int64)
        if w.ndim != 3 or w.shape[2] != self.spec.n:
            raise ValueError(f"words must have shape (M, J, {self.spec.n}), got {w.shape}")
        if w.size and (w.min() < 0 or w.max() >= len(self.v_alphabet)):
            raise ValueError("codeword symbol outside the auxiliary alphabet")
        w.setflags(write=False)
        object.__setattr__(self, "words", w)
        object.__setattr__(self, "v_alphabet", tuple(self.v_alphabet))

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def message_count(self) -> int:
        return self.words.shape[0]

    @property
    def cr_count(self) -> int:
        return self.words.shape[1]

    def word(self, m: int, j: int = 0) -> np.ndarray:
        return self.words[m, j]

    def __len__(self) -> int:
        return self.message_count * self.cr_count


def sample_codebook(p_V: Pmf, spec: CodeSpec, seed: int) -> Codebook:
    """Every symbol of every codeword i.i.d. from ``p_V``."""
    rng = derive_rng(seed, 0)
    shape = (spec.message_count, spec.cr_count, spec.n)
    words = rng.choice(len(p_V), size=shape, p=p_V.probs)
    return Codebook(spec, p_V.alphabet, words, seed)


def _type_ok(word: np.ndarray, p: np.ndarray, delta: float) -> bool:
    freq = np.bincount(word, minlength=len(p)) / len(word)
    return bool(np.all(np.abs(freq - p) <= delta * p + 1e-12))


def build_circular_codebook(p_V: Pmf, n: int, R: float, delta: float, seed: int,
                            max_draws: int = 10**6) -> Codebook:
    """Type-constrained base words plus all of their cyclic shifts.

    ``floor(2^{nR})`` base words are drawn i.i.d. from ``p_V`` and kept only if
    every symbol frequency is within a factor ``1 +- delta`` of ``p_V``. Each
    kept word contributes its ``n`` rotations as separate messages, so the
    message set has ``n * floor(2^{nR})`` entries and there is no common
    randomness.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    p = p_V.probs
    if np.any(p <= 0):
        raise ValueError("p_V must have full support on its alphabet")
    spec = CodeSpec(n, R, 0.0)
    k = spec.message_count
    rng = derive_rng(seed, 0)
    base: list[np.ndarray] = []
    draws = 0
    while len(base) < k:
        if draws >= max_draws:
            raise BudgetExceeded(f"only {len(base)} of {k} words met the type constraint "
                                 f"after {draws} draws; delta={delta} is too small for n={n}")
        batch = rng.choice(len(p), size=(max(64, 2 * k), n), p=p)
        for w in batch:
            draws += 1
            if _type_ok(w, p, delta):
                base.append(w)
                if len(base) == k:
                    break
            if draws >= max_draws:
                break
    words = np.stack([np.roll(b, s) for b in base for s in range(n)])[:, None, :]
    meta = {"base_words": k, "shifts": n, "draws": draws, "accepted": k,
            "acceptance_rate": k / draws, "delta": delta}
    return Codebook(spec, p_V.alphabet, words, seed, meta)


def codeword_type_deviation(cb: Codebook, p_V: Pmf, eps: float) -> tuple[np.ndarray, float]:
    """Per-word TVD between the codeword type and ``p_V``; fraction at or above ``eps``."""
    k = len(p_V)
    flat = cb.words.reshape(-1, cb.n)
    counts = np.stack([np.bincount(w, minlength=k) for w in flat]) / cb.n
    devs = 0.5 * np.abs(counts - p_V.probs[None, :]).sum(axis=1)
    # type deviations are multiples of 1/(2n); keep exact ties on the threshold
    return devs.reshape(cb.message_count, cb.cr_count), float(np.mean(devs >= eps - 1e-12))


def _likelihoods(x: np.ndarray, j: int, cb: Codebook, k_XgV: Kernel) -> np.ndarray:
    mat = k_XgV.matrix
    return np.prod(mat[cb.words[:, j, :], x[None, :]], axis=1)


def encoder_posterior(x: np.ndarray, j: int, cb: Codebook, k_XgV: Kernel) -> tuple[np.ndarray, bool]:
    """``P(m | x^n, j)`` of the likelihood encoder and whether the uniform fallback fired."""
    lik = _likelihoods(np.asarray(x), j, cb, k_XgV)
    s = lik.sum()
    if s <= 0:
        return np.full(cb.message_count, 1.0 / cb.message_count), True
    return lik / s, False


def likelihood_encode(x, j: int, cb: Codebook, k_XgV: Kernel, rng: np.random.Generator) -> int:
    post, fell_back = encoder_posterior(np.asarray(x), j, cb, k_XgV)
    if fell_back:
        log.info("all likelihoods zero for j=%d; choosing the message uniformly", j)
    return int(rng.choice(len(post), p=post))


def memoryless_decode(m: int, j: int, cb: Codebook, k_YgV: Kernel,
                      rng: np.random.Generator) -> np.ndarray:
    rows = k_YgV.matrix[cb.words[m, j]]
    u = rng.random(cb.n)
    out = (u[:, None] >= np.cumsum(rows, axis=1)).sum(axis=1)
    return np.minimum(out, rows.shape[1] - 1)


@dataclass(frozen=True)
class InducedJoint:
    """Exact law of ``(X^n, J, M, Y^n)`` in factored form.

    ``P(x, j, m, y) = p_xn[x] / J * enc[x, j, m] * dec[j, m, y]`` with ``x`` and
    ``y`` indexing length-``n`` strings lexicographically.
    """

    n: int
    x_card: int
    y_card: int
    p_xn: np.ndarray
    enc: np.ndarray
    dec: np.ndarray
    fallback_count: int = 0

    @property
    def cr_count(self) -> int:
        return self.enc.shape[1]

    @property
    def message_count(self) -> int:
        return self.enc.shape[2]

    def weights(self) -> np.ndarray:
        """``P(x, j, m)``."""
        return self.p_xn[:, None, None] * self.enc / self.cr_count

    def p_mj(self) -> np.ndarray:
        """``P(j, m)``."""
        return self.weights().sum(axis=0)

    def p_yn(self) -> np.ndarray:
        return np.einsum("jm,jmy->y", self.p_mj(), self.dec)

    def x_marginal(self) -> np.ndarray:
        return self.weights().sum(axis=(1, 2))

    def y_position_marginals(self) -> np.ndarray:
        """``(n, |Y|)`` per-position output marginals."""
        cube = self.p_yn().reshape((self.y_card,) * self.n)
        axes = range(self.n)
        return np.stack([cube.sum(axis=tuple(a for a in axes if a != t)) for t in axes])

    def xy(self) -> np.ndarray:
        """``P(x^n, y^n)``."""
        return np.einsum("xjm,jmy->xy", self.weights(), self.dec)

    def table(self, budget: int = DEFAULT_BUDGET) -> np.ndarray:
        """Dense ``P[x, j, m, y]``."""
        size = self.enc.size * self.dec.shape[2]
        if size > budget:
            raise BudgetExceeded(f"dense table needs {size} entries (budget {budget})")
        return self.weights()[..., None] * self.dec[None, :, :, :]

    def markov_residual(self, budget: int = DEFAULT_BUDGET) -> float:
        """Largest deviation of ``P(y | x, j, m)`` from a function of ``(j, m)`` alone."""
        tab = self.table(budget)
        mass = tab.sum(axis=3)
        cond = np.divide(tab, mass[..., None], out=np.zeros_like(tab), where=mass[..., None] > 0)
        ref = self.dec[None, :, :, :]
        return float(np.max(np.where(mass[..., None] > 0, np.abs(cond - ref), 0.0)))

    def with_decoder(self, dec: np.ndarray) -> "InducedJoint":
        return InducedJoint(self.n, self.x_card, self.y_card, self.p_xn, self.enc,
                            np.asarray(dec, float), self.fallback_count)


def _product_rows(kernel: np.ndarray, words: np.ndarray, strings: np.ndarray) -> np.ndarray:
    """``out[..., s] = prod_t kernel[words[..., t], strings[s, t]]``."""
    out = np.ones(words.shape[:-1] + (len(strings),))
    for t in range(words.shape[-1]):
        out *= kernel[words[..., t]][..., strings[:, t]]
    return out


def decoder_table(cb: Codebook, k_YgV: Kernel) -> np.ndarray:
    """``dec[j, m, y^n] = prod_t K_Y|V(y_t | v_t(m, j))``."""
    ys = all_strings(len(k_YgV.output_alphabet), cb.n)
    return np.transpose(_product_rows(k_YgV.matrix, cb.words, ys), (1, 0, 2))


def induced_distribution_exact(cb: Codebook, k_XgV: Kernel, k_YgV: Kernel, p_X: Pmf,
                               budget: int = DEFAULT_BUDGET) -> InducedJoint:
    """Exact joint induced by the likelihood encoder and the memoryless decoder."""
    nx, ny = len(p_X), len(k_YgV.output_alphabet)
    size = nx ** cb.n * len(cb) * ny ** cb.n
    if size > budget:
        raise BudgetExceeded(f"exact joint needs {size:.3g} entries (budget {budget:.3g}); "
                             "use the Monte Carlo evaluator instead")
    xs = all_strings(nx, cb.n)
    lik = _product_rows(k_XgV.matrix, cb.words, xs)          # (M, J, Nx)
    lik = np.transpose(lik, (2, 1, 0))                        # (Nx, J, M)
    tot = lik.sum(axis=2, keepdims=True)
    zero = tot[..., 0] <= 0
    enc = np.divide(lik, tot, out=np.zeros_like(lik), where=tot > 0)
    enc[zero] = 1.0 / cb.message_count
    p_xn = p_X.product(cb.n)
    fallbacks = int(np.sum(zero & (p_xn[:, None] > 0)))
    if fallbacks:
        log.info("uniform fallback used for %d (x^n, j) pairs", fallbacks)
    ij = InducedJoint(cb.n, nx, ny, p_xn, enc, decoder_table(cb, k_YgV), fallbacks)
    dev = np.abs(ij.x_marginal() - p_xn).max()
    if dev > 1e-9:
        raise ArithmeticError(f"X-marginal deviates from the source product by {dev:.3g}")
    return ij


def average_distortion_matrix(d: np.ndarray, n: int) -> np.ndarray:
    """``dbar[x^n, y^n] = (1/n) sum_t d(x_t, y_t)``."""
    d = np.asarray(d, float)
    xs = all_strings(d.shape[0], n)
    ys = all_strings(d.shape[1], n)
    out = np.zeros((len(xs), len(ys)))
    for t in range(n):
        out += d[xs[:, t]][:, ys[:, t]]
    return out / n


def evaluate_strong_realism(ij: InducedJoint, p_X: Pmf) -> float:
    return tvd(ij.p_yn(), p_X.product(ij.n))


def evaluate_per_symbol_realism(ij: InducedJoint, p_X: Pmf) -> float:
    return max(tvd(row, p_X.probs) for row in ij.y_position_marginals())


def evaluate_distortion(ij: InducedJoint, d: np.ndarray) -> float:
    return float(np.sum(ij.xy() * average_distortion_matrix(d, ij.n)))


@dataclass(frozen=True)
class SampledJoint:
    """Monte Carlo draws of ``(X^n, J, M, Y^n)`` as index arrays."""

    x: np.ndarray
    j: np.ndarray
    m: np.ndarray
    y: np.ndarray
    y_card: int

    @property
    def samples(self) -> int:
        return len(self.x)


def simulate_code(cb: Codebook, k_XgV: Kernel, k_YgV: Kernel, p_X: Pmf, samples: int,
                  seed: int) -> SampledJoint:
    """Draw ``samples`` independent uses of the code, one RNG stream per use."""
    xs, js, ms, ys = [], [], [], []
    for s in range(samples):
        rng = derive_rng(seed, 1, s)
        x = rng.choice(len(p_X), size=cb.n, p=p_X.probs)
        j = int(rng.integers(cb.cr_count))
        m = likelihood_encode(x, j, cb, k_XgV, rng)
        xs.append(x); js.append(j); ms.append(m)
        ys.append(memoryless_decode(m, j, cb, k_YgV, rng))
    return SampledJoint(np.array(xs), np.array(js), np.array(ms), np.array(ys),
                        len(k_YgV.output_alphabet))


def sampled_strong_realism(sj: SampledJoint, p_X: Pmf) -> tuple[float, str]:
    """Plug-in TVD of the empirical ``Y^n`` law against ``p_X^n``.

    The plug-in estimate is biased upward (an empirical law is never closer to
    the truth in expectation), so the value is returned with a warning string.
    """
    n = sj.y.shape[1]
    idx = np.zeros(sj.samples, dtype=np.int64)
    for t in range(n):
        idx = idx * sj.y_card + sj.y[:, t]
    emp = np.bincount(idx, minlength=sj.y_card ** n) / sj.samples
    return tvd(emp, p_X.product(n)), "plug-in estimate, biased upward"


def sampled_distortion(sj: SampledJoint, d: np.ndarray) -> tuple[float, float]:
    """Sample mean of the per-letter distortion and its standard error."""
    vals = np.asarray(d, float)[sj.x, sj.y].mean(axis=1)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.inf
