"""Finite probability objects and information measures.

All logarithms are base 2, so entropies, mutual informations and rates are in
bits. ``0 log 0`` is taken to be 0 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

PMF_ATOL = 1e-12


class AlphabetMismatch(ValueError):
    """Two objects that must share an alphabet do not."""


def _frozen(a: Any) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def xlogx(p: np.ndarray) -> np.ndarray:
    """Elementwise ``p * log2(p)`` with the convention ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log2(p[pos])
    return out


@dataclass(frozen=True)
class Pmf:
    """A probability mass function over an ordered, labeled finite alphabet."""

    alphabet: tuple
    probs: np.ndarray

    def __post_init__(self):
        alphabet = tuple(self.alphabet)
        probs = _frozen(self.probs).reshape(-1)
        if len(set(alphabet)) != len(alphabet):
            raise ValueError(f"alphabet labels must be distinct: {alphabet!r}")
        if probs.shape != (len(alphabet),):
            raise ValueError(
                f"{len(alphabet)} labels but {probs.shape[0]} probabilities")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValueError(f"probabilities must be finite and non-negative: {probs}")
        if abs(probs.sum() - 1.0) > PMF_ATOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_probs(cls, probs: Sequence[float], alphabet: Sequence[Hashable] | None = None,
                   renormalize: bool = False) -> "Pmf":
        probs = np.asarray(probs, dtype=float)
        if renormalize:
            probs = np.clip(probs, 0.0, None)
            probs = probs / probs.sum()
        if alphabet is None:
            alphabet = tuple(range(len(probs)))
        return cls(tuple(alphabet), probs)

    @classmethod
    def uniform(cls, alphabet: Sequence[Hashable] | int) -> "Pmf":
        if isinstance(alphabet, int):
            alphabet = tuple(range(alphabet))
        k = len(alphabet)
        return cls(tuple(alphabet), np.full(k, 1.0 / k))

    @classmethod
    def bernoulli(cls, p: float) -> "Pmf":
        """Pmf on ``(0, 1)`` with ``P(1) = p``."""
        return cls((0, 1), np.array([1.0 - p, p]))

    @classmethod
    def point_mass(cls, alphabet: Sequence[Hashable], symbol: Hashable) -> "Pmf":
        probs = np.zeros(len(alphabet))
        probs[list(alphabet).index(symbol)] = 1.0
        return cls(tuple(alphabet), probs)

    def __len__(self) -> int:
        return len(self.alphabet)

    def __getitem__(self, symbol: Hashable) -> float:
        return float(self.probs[self.index(symbol)])

    def index(self, symbol: Hashable) -> int:
        try:
            return self.alphabet.index(symbol)
        except ValueError:
            raise KeyError(f"symbol {symbol!r} not in alphabet") from None

    def renormalized(self) -> "Pmf":
        return Pmf.from_probs(self.probs, self.alphabet, renormalize=True)

    def product(self, n: int) -> np.ndarray:
        """Probabilities of all length-``n`` strings, lexicographic order."""
        out = np.ones(1)
        for _ in range(n):
            out = np.outer(out, self.probs).reshape(-1)
        return out

    def to_dict(self) -> dict:
        return {"alphabet": list(self.alphabet), "probs": [float(p) for p in self.probs]}

    @classmethod
    def from_dict(cls, data: dict) -> "Pmf":
        return cls(tuple(data["alphabet"]), np.asarray(data["probs"], dtype=float))


@dataclass(frozen=True)
class Kernel:
    """Row-stochastic map from ``input_alphabet`` to ``output_alphabet``.

    ``matrix[i, o]`` is the probability of output ``o`` given input ``i``.
    """

    input_alphabet: tuple
    output_alphabet: tuple
    matrix: np.ndarray

    def __post_init__(self):
        ins, outs = tuple(self.input_alphabet), tuple(self.output_alphabet)
        m = _frozen(self.matrix)
        if m.shape != (len(ins), len(outs)):
            raise ValueError(f"matrix shape {m.shape} does not match alphabets "
                             f"({len(ins)}, {len(outs)})")
        for row in range(len(ins)):
            # validates each row as a pmf
            Pmf(outs, m[row])
        object.__setattr__(self, "input_alphabet", ins)
        object.__setattr__(self, "output_alphabet", outs)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_matrix(cls, matrix, input_alphabet=None, output_alphabet=None,
                    renormalize: bool = False) -> "Kernel":
        m = np.asarray(matrix, dtype=float)
        if renormalize:
            m = np.clip(m, 0.0, None)
            m = m / m.sum(axis=1, keepdims=True)
        if input_alphabet is None:
            input_alphabet = tuple(range(m.shape[0]))
        if output_alphabet is None:
            output_alphabet = tuple(range(m.shape[1]))
        return cls(tuple(input_alphabet), tuple(output_alphabet), m)

    @classmethod
    def identity(cls, alphabet: Sequence[Hashable]) -> "Kernel":
        return cls(tuple(alphabet), tuple(alphabet), np.eye(len(alphabet)))

    @property
    def rows(self) -> list[Pmf]:
        return [Pmf(self.output_alphabet, r) for r in self.matrix]

    def row(self, symbol: Hashable) -> Pmf:
        return Pmf(self.output_alphabet, self.matrix[self.input_alphabet.index(symbol)])

    def push(self, p_in: Pmf) -> Pmf:
        """Output distribution when the input is drawn from ``p_in``."""
        _check_alphabet(p_in.alphabet, self.input_alphabet)
        return Pmf.from_probs(p_in.probs @ self.matrix, self.output_alphabet,
                              renormalize=True)

    def joint(self, p_in: Pmf) -> np.ndarray:
        """Joint table ``p_in(i) K(o|i)`` with inputs on axis 0."""
        _check_alphabet(p_in.alphabet, self.input_alphabet)
        return p_in.probs[:, None] * self.matrix

    def is_deterministic(self) -> bool:
        return bool(np.all(np.isclose(self.matrix.max(axis=1), 1.0, atol=PMF_ATOL)))

    def to_dict(self) -> dict:
        return {
            "input_alphabet": list(self.input_alphabet),
            "output_alphabet": list(self.output_alphabet),
            "rows": [[float(v) for v in r] for r in self.matrix],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Kernel":
        rows = np.asarray(data["rows"], dtype=float)
        ins = data.get("input_alphabet", list(range(rows.shape[0])))
        outs = data.get("output_alphabet", list(range(rows.shape[1])))
        return cls(tuple(ins), tuple(outs), rows)


@dataclass(frozen=True)
class EmpiricalDist:
    """Symbol counts of a finite sequence."""

    alphabet: tuple
    counts: np.ndarray
    total: int = field(init=False)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.alphabet),) or np.any(counts < 0):
            raise ValueError("counts must be non-negative, one per symbol")
        counts.setflags(write=False)
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total", int(counts.sum()))

    def to_pmf(self) -> Pmf:
        if self.total == 0:
            raise ValueError("empty sequence has no empirical distribution")
        return Pmf(self.alphabet, self.counts / self.total)


@dataclass(frozen=True)
class MarkovJoint:
    """Joint law ``p_V(v) K_X(x|v) K_Y(y|v)``, so that X - V - Y holds."""

    p_V: Pmf
    k_XgV: Kernel
    k_YgV: Kernel

    def __post_init__(self):
        _check_alphabet(self.p_V.alphabet, self.k_XgV.input_alphabet)
        _check_alphabet(self.p_V.alphabet, self.k_YgV.input_alphabet)

    @property
    def v_card(self) -> int:
        return len(self.p_V)

    def table(self) -> np.ndarray:
        """Array indexed ``[v, x, y]``."""
        w = self.p_V.probs
        return w[:, None, None] * self.k_XgV.matrix[:, :, None] * self.k_YgV.matrix[:, None, :]

    def joint_vx(self) -> np.ndarray:
        return self.k_XgV.joint(self.p_V)

    def joint_vy(self) -> np.ndarray:
        return self.k_YgV.joint(self.p_V)

    def joint_xy(self) -> np.ndarray:
        return self.table().sum(axis=0)

    def marginal_x(self) -> np.ndarray:
        return self.p_V.probs @ self.k_XgV.matrix

    def marginal_y(self) -> np.ndarray:
        return self.p_V.probs @ self.k_YgV.matrix

    def i_xv(self) -> float:
        return mutual_information(self.joint_vx())

    def i_yv(self) -> float:
        return mutual_information(self.joint_vy())

    def h_ygv(self) -> float:
        return conditional_entropy(self.k_YgV, self.p_V)

    def expected_distortion(self, d: np.ndarray) -> float:
        d = np.asarray(d, dtype=float)
        return float(np.sum(self.joint_xy() * d))

    def to_dict(self) -> dict:
        return {"p_V": self.p_V.to_dict(), "k_XgV": self.k_XgV.to_dict(),
                "k_YgV": self.k_YgV.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "MarkovJoint":
        return cls(Pmf.from_dict(data["p_V"]), Kernel.from_dict(data["k_XgV"]),
                   Kernel.from_dict(data["k_YgV"]))


def _check_alphabet(a: Iterable, b: Iterable) -> None:
    if tuple(a) != tuple(b):
        raise AlphabetMismatch(f"alphabets differ: {tuple(a)!r} vs {tuple(b)!r}")


def _as_probs(p) -> np.ndarray:
    return p.probs if isinstance(p, Pmf) else np.asarray(p, dtype=float)


def tvd(p, q) -> float:
    """Total variation distance, i.e. half the L1 distance.

    Accepts two :class:`Pmf` over the same alphabet, or two arrays of equal
    shape (joint tables are compared cell by cell).
    """
    if isinstance(p, Pmf) and isinstance(q, Pmf):
        _check_alphabet(p.alphabet, q.alphabet)
    a, b = _as_probs(p), _as_probs(q)
    if a.shape != b.shape:
        raise AlphabetMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return float(0.5 * np.abs(a - b).sum())


def entropy(p) -> float:
    """Shannon entropy in bits of a pmf or of a joint table (all cells)."""
    return float(-xlogx(_as_probs(p)).sum())


def mutual_information(joint) -> float:
    """``I(A;B)`` in bits for a 2-D joint table indexed ``[a, b]``."""
    joint = np.asarray(joint, dtype=float)
    if joint.ndim != 2:
        raise ValueError("joint must be a 2-D table")
    mi = entropy(joint.sum(axis=1)) + entropy(joint.sum(axis=0)) - entropy(joint)
    return max(mi, 0.0)


def conditional_entropy(k: Kernel, p_in: Pmf) -> float:
    """``H(Out | In)`` when ``In ~ p_in`` and ``Out | In ~ k``."""
    _check_alphabet(p_in.alphabet, k.input_alphabet)
    row_h = -xlogx(k.matrix).sum(axis=1)
    return float(p_in.probs @ row_h)


def kl_divergence(p, q) -> float:
    a, b = _as_probs(p), _as_probs(q)
    pos = a > 0
    if np.any(b[pos] == 0):
        return float("inf")
    return float(np.sum(a[pos] * np.log2(a[pos] / b[pos])))


def average_empirical(marginals: Sequence[Pmf]) -> Pmf:
    """Position-averaged marginal law of a random string."""
    if len(marginals) == 0:
        raise ValueError("need at least one marginal")
    alphabet = marginals[0].alphabet
    for m in marginals[1:]:
        _check_alphabet(alphabet, m.alphabet)
    mean = np.mean([m.probs for m in marginals], axis=0)
    return Pmf.from_probs(mean, alphabet, renormalize=True)


def information_density(joint, a: int, b: int) -> float:
    """``log2(P(a,b) / (P(a) P(b)))`` for a 2-D joint table.

    Returns ``-inf`` when the cell has zero joint mass but both marginals are
    positive. Raises if either marginal vanishes, since the ratio is then 0/0.
    """
    joint = np.asarray(joint, dtype=float)
    pa = joint[a, :].sum()
    pb = joint[:, b].sum()
    if pa <= 0 or pb <= 0:
        raise ValueError(f"information density undefined at ({a}, {b}): zero marginal")
    pab = joint[a, b]
    if pab <= 0:
        return float("-inf")
    return float(np.log2(pab / (pa * pb)))


def empirical_type(seq: Sequence[Hashable], alphabet: Sequence[Hashable]) -> EmpiricalDist:
    """Count occurrences of each alphabet symbol in ``seq``."""
    if len(seq) == 0:
        raise ValueError("empty sequence")
    index = {s: i for i, s in enumerate(alphabet)}
    counts = np.zeros(len(alphabet), dtype=np.int64)
    for s in seq:
        try:
            counts[index[s]] += 1
        except KeyError:
            raise KeyError(f"symbol {s!r} not in alphabet") from None
    return EmpiricalDist(tuple(alphabet), counts)


def binary_entropy(p: float) -> float:
    return entropy([p, 1.0 - p])


def hamming(k: int) -> np.ndarray:
    """Hamming distortion matrix on a ``k``-letter alphabet."""
    return 1.0 - np.eye(k)


def all_strings(k: int, n: int) -> np.ndarray:
    """All length-``n`` strings over ``range(k)`` in lexicographic order."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((k,) * n).reshape(n, -1).T
    return grids.astype(np.int64)


def string_index(strings: np.ndarray, k: int) -> np.ndarray:
    """Lexicographic index of each row of ``strings`` (inverse of :func:`all_strings`)."""
    strings = np.asarray(strings, dtype=np.int64)
    n = strings.shape[-1]
    weights = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return strings @ weights
