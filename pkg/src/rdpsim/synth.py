"""Simulating a memoryless decoder channel with a rate-limited private seed.

For each codeword ``v^n`` a list of ``2^ceil(n r)`` outputs is drawn i.i.d.
from ``prod_t K_Y|V(. | v_t)``; at use time one entry is picked uniformly
(duplicates kept). The exact TVD between the uniform-over-list law and the
product law only needs the list's own support plus the product mass outside
it, so it is computed without enumerating ``|Y|^n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import DEFAULT_BUDGET, BudgetExceeded, Codebook, InducedJoint
from .probcore import Kernel, tvd
from .seeding import derive_rng


def seed_bits(n: int, r: float) -> int:
    """Private bits used per block: ``ceil(n r)``."""
    return max(0, math.ceil(n * r - 1e-9))


@dataclass(frozen=True)
class SynthChannel:
    """``candidates[w, l]`` is the ``l``-th stored output for word ``w``."""

    words: np.ndarray
    candidates: np.ndarray
    r: float
    seed: int
    y_card: int

    @property
    def n(self) -> int:
        return self.words.shape[1]

    @property
    def list_size(self) -> int:
        return self.candidates.shape[1]

    def sample(self, word_index: int, rng: np.random.Generator) -> np.ndarray:
        return self.candidates[word_index, rng.integers(self.list_size)]

    def output_law(self, word_index: int) -> tuple[np.ndarray, np.ndarray]:
        """Distinct candidate strings (as indices) and their list frequencies."""
        idx = _string_codes(self.candidates[word_index], self.y_card)
        vals, counts = np.unique(idx, return_counts=True)
        return vals, counts / self.list_size


def _string_codes(strings: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros(strings.shape[:-1], dtype=np.int64)
    for t in range(strings.shape[-1]):
        out = out * k + strings[..., t]
    return out


def _decode_codes(codes: np.ndarray, k: int, n: int) -> np.ndarray:
    out = np.zeros(codes.shape + (n,), dtype=np.int64)
    c = codes.copy()
    for t in range(n - 1, -1, -1):
        out[..., t] = c % k
        c //= k
    return out


def build_synth_channel(k_YgV: Kernel, words, r: float, seed: int,
                        max_list: int = 2**22) -> SynthChannel:
    if r <= 0:
        raise ValueError("r must be > 0")
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    n = words.shape[1]
    bits = seed_bits(n, r)
    size = 2**bits
    if size * words.shape[0] > max_list:
        raise BudgetExceeded(f"{words.shape[0]} lists of {size} candidates exceed {max_list}")
    mat = k_YgV.matrix
    cum = np.cumsum(mat, axis=1)
    cands = np.empty((len(words), size, n), dtype=np.int64)
    for i, w in enumerate(words):
        u = derive_rng(seed, i).random((size, n))
        cands[i] = np.minimum((u[:, :, None] >= cum[w][None, :, :]).sum(axis=2), mat.shape[1] - 1)
    return SynthChannel(words, cands, float(r), seed, mat.shape[1])


def product_prob(k_YgV: Kernel, word: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """``prod_t K(y_t | v_t)`` for each row of ``ys``."""
    mat = k_YgV.matrix
    return np.prod(mat[word[None, :], ys], axis=1)


def word_conditional_entropy(k_YgV: Kernel, word: np.ndarray) -> float:
    """``H(Y|V)`` under the word's type: the mean row entropy along the word."""
    mat = k_YgV.matrix
    safe = np.where(mat > 0, mat, 1.0)
    row_h = -np.sum(mat * np.log2(safe), axis=1)
    return float(row_h[np.asarray(word)].mean())


def verify_synthesis(sc: SynthChannel, k_YgV: Kernel, word_index: int,
                     gamma: float = 0.2) -> tuple[float, bool]:
    """Exact TVD of the synthesized law for one word, and its eligibility flag."""
    word = sc.words[word_index]
    codes, q = sc.output_law(word_index)
    p = product_prob(k_YgV, word, _decode_codes(codes, sc.y_card, sc.n))
    outside = max(0.0, 1.0 - p.sum())
    dist = 0.5 * (np.abs(q - p).sum() + outside)
    eligible = sc.r - gamma >= word_conditional_entropy(k_YgV, word) - 1e-12
    return float(min(dist, 1.0)), bool(eligible)


def synth_decoder_table(sc: SynthChannel, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """``dec[w, y^n]``: the synthesized law of each word on all ``|Y|^n`` strings."""
    total = len(sc.words) * sc.y_card ** sc.n
    if total > budget:
        raise BudgetExceeded(f"decoder table needs {total} entries (budget {budget})")
    out = np.zeros((len(sc.words), sc.y_card ** sc.n))
    for i in range(len(sc.words)):
        codes, q = sc.output_law(i)
        out[i, codes] = q
    return out


def code_words(cb: Codebook) -> np.ndarray:
    """Codewords in ``(m, j)`` order, ``m`` major, as used by :func:`attach_to_code`."""
    return cb.words.reshape(-1, cb.n)


@dataclass(frozen=True)
class AttachReport:
    joint: InducedJoint
    joint_tvd: float
    weighted_word_tvd: float


def attach_to_code(ij: InducedJoint, cb: Codebook, k_YgV: Kernel, sc: SynthChannel,
                   budget: int = DEFAULT_BUDGET) -> AttachReport:
    """Swap the memoryless decoder of ``ij`` for the synthesized channel.

    ``sc`` must be built on :func:`code_words` of ``cb``. Reports the TVD of
    the full joints and, computed separately, the ``(M, J)``-weighted mean of
    the per-word channel TVDs; the two agree because the decoder only sees
    the codeword.
    """
    if not np.array_equal(sc.words, code_words(cb)):
        raise ValueError("synth channel must be built on the code's words in (m, j) order")
    m_count, j_count = cb.message_count, cb.cr_count
    dec = synth_decoder_table(sc, budget).reshape(m_count, j_count, -1).transpose(1, 0, 2)
    new = ij.with_decoder(dec)
    joint = tvd(ij.table(budget).reshape(-1), new.table(budget).reshape(-1))
    per_word = np.array([verify_synthesis(sc, k_YgV, i)[0] for i in range(len(sc.words))])
    weights = ij.p_mj().T.reshape(-1)               # (m, j) order
    return AttachReport(new, joint, float(weights @ per_word))
