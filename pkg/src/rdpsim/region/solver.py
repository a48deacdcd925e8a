"""Minimum distortion over the auxiliary-variable region.

For a source ``p`` and rates ``(R, Rc, Rd)`` the quantity computed is

    min E[d(X, Y)]  over  p_V, K_X|V, K_Y|V  with
        X ~ p, Y ~ p, X - V - Y, |V| <= cap,
        I(X;V) <= R,  I(Y;V) <= R + Rc  (strong mode only),  H(Y|V) <= Rd.

Because both marginals are pinned to ``p``, the mutual-information
constraints are conditional-entropy floors: ``H(X|V) >= H(p) - R`` and
``H(Y|V) >= H(p) - R - Rc``.

Two regimes:

* If the ``I(Y;V)`` bound is slack for ``V = Y`` (per-symbol mode, or
  ``R + Rc >= H(p)``), data processing makes ``V = Y`` optimal and the
  problem is a convex coupling problem, solved exactly.
* Otherwise the problem is non-convex. It is solved by multi-start SLSQP on
  ``(p_V, K_X|V, K_Y|V)`` with exact constraints, followed by a feasibility
  repair and an exact re-certification of every constraint.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from ..probcore import Kernel, MarkovJoint, Pmf, entropy, xlogx
from ..seeding import derive_rng
from .couplings import cond_entropy_rows, ipf, min_cost_coupling, mix_to_entropy

log = logging.getLogger(__name__)

INF = math.inf
CERT_TOL = 1e-9      # slack allowed when certifying a witness
REPAIR_MARGIN = 1e-11
MARGINAL_TOL = 1e-9
AGREE_TOL = 1e-4     # restarts within this of the best count as agreeing
_LN2 = math.log(2.0)


class RegionError(ValueError):
    pass


@dataclass(frozen=True)
class RateTuple:
    """``(R, R_c, R_d, Delta)``; the last three may be ``math.inf``."""

    R: float
    R_c: float = INF
    R_d: float = INF
    Delta: float = INF

    def __post_init__(self):
        if not math.isfinite(self.R) or self.R < 0:
            raise ValueError(f"R must be finite and >= 0, got {self.R}")
        for name in ("R_c", "R_d", "Delta"):
            v = getattr(self, name)
            if math.isnan(v) or v < 0:
                raise ValueError(f"{name} must be >= 0 (inf allowed), got {v}")


@dataclass(frozen=True)
class RegionProblem:
    source: Pmf
    distortion: np.ndarray
    mode: str = "strong"
    v_card_cap: int | None = None

    def __post_init__(self):
        d = np.array(self.distortion, dtype=float)
        k = len(self.source)
        if d.shape != (k, k):
            raise ValueError(f"distortion must be {k}x{k}, got {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("distortion entries must be finite and >= 0")
        d.setflags(write=False)
        object.__setattr__(self, "distortion", d)
        if self.mode not in ("strong", "per_symbol"):
            raise ValueError(f"mode must be 'strong' or 'per_symbol', got {self.mode!r}")
        cap = k * k + 1 if self.v_card_cap is None else int(self.v_card_cap)
        if cap < 1:
            raise ValueError("v_card_cap must be >= 1")
        object.__setattr__(self, "v_card_cap", cap)

    @property
    def h_source(self) -> float:
        return entropy(self.source)

    def with_mode(self, mode: str) -> "RegionProblem":
        return RegionProblem(self.source, self.distortion, mode, self.v_card_cap)


@dataclass(frozen=True)
class RegionSolution:
    delta_star: float
    achieving_joint: MarkovJoint | None
    R: float
    R_c: float
    R_d: float
    solver_diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.achieving_joint is not None

    def slacks(self) -> dict:
        return self.solver_diagnostics.get("slacks", {})

    def to_dict(self) -> dict:
        def num(x):
            return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")
        return {
            "R": num(self.R), "R_c": num(self.R_c), "R_d": num(self.R_d),
            "delta_star": num(self.delta_star),
            "witness": None if self.achieving_joint is None else self.achieving_joint.to_dict(),
            "diagnostics": _jsonable(self.solver_diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _floors(problem: RegionProblem, R: float, R_c: float, R_d: float):
    """Conditional-entropy bounds ``(lo_x, lo_y, hi_y)`` implied by the rates."""
    h = problem.h_source
    lo_x = h - R
    if problem.mode == "strong" and math.isfinite(R_c):
        lo_y = h - R - R_c
    else:
        lo_y = -INF
    hi_y = R_d if math.isfinite(R_d) else INF
    return lo_x, lo_y, hi_y


def certify(joint: MarkovJoint, problem: RegionProblem, R: float, R_c: float,
            R_d: float) -> dict:
    """Recompute every constraint of the region from a witness."""
    p = problem.source.probs
    i_xv, i_yv, h_ygv = joint.i_xv(), joint.i_yv(), joint.h_ygv()
    slack = {
        "marginal_x_dev": float(np.abs(joint.marginal_x() - p).max()),
        "marginal_y_dev": float(np.abs(joint.marginal_y() - p).max()),
        "I_XV": i_xv, "I_YV": i_yv, "H_YgV": h_ygv,
        "R_minus_I_XV": R - i_xv,
        "R_plus_Rc_minus_I_YV": (R + R_c - i_yv) if problem.mode == "strong" else INF,
        "Rd_minus_H_YgV": R_d - h_ygv,
        "distortion": joint.expected_distortion(problem.distortion),
    }
    slack["feasible"] = bool(
        slack["marginal_x_dev"] <= MARGINAL_TOL
        and slack["marginal_y_dev"] <= MARGINAL_TOL
        and slack["R_minus_I_XV"] >= -CERT_TOL
        and slack["R_plus_Rc_minus_I_YV"] >= -CERT_TOL
        and slack["Rd_minus_H_YgV"] >= -CERT_TOL
        and joint.v_card <= problem.v_card_cap
    )
    return slack


def _make_joint(w: np.ndarray, kx: np.ndarray, ky: np.ndarray, x_alph) -> MarkovJoint:
    k = len(w)
    v_alph = tuple(range(k))
    return MarkovJoint(Pmf(v_alph, w), Kernel(v_alph, x_alph, kx), Kernel(v_alph, x_alph, ky))


def _repair(w, kx, ky, problem, lo_x, lo_y, hi_y):
    """Project a near-feasible point to an exactly feasible witness, or None."""
    p = problem.source.probs
    m = len(p)
    w = np.clip(np.asarray(w, float), 0.0, None)
    w[w < 1e-12] = 0.0
    if w.sum() <= 0:
        return None
    w = w / w.sum()
    live = w > 0
    w, kx, ky = w[live], np.clip(kx[live], 0, None), np.clip(ky[live], 0, None)
    kx = kx / np.maximum(kx.sum(axis=1, keepdims=True), 1e-300)
    ky = ky / np.maximum(ky.sum(axis=1, keepdims=True), 1e-300)
    prod = np.outer(w, p)
    pix = ipf((1 - 1e-12) * w[:, None] * kx + 1e-12 * prod, w, p)
    piy = ipf((1 - 1e-12) * w[:, None] * ky + 1e-12 * prod, w, p)
    pix = mix_to_entropy(pix, lo_x + REPAIR_MARGIN)
    if math.isfinite(lo_y):
        piy = mix_to_entropy(piy, lo_y + REPAIR_MARGIN)
    if cond_entropy_rows(piy) > hi_y:
        return None
    kx = pix / w[:, None]
    ky = piy / w[:, None]
    kx /= kx.sum(axis=1, keepdims=True)
    ky /= ky.sum(axis=1, keepdims=True)
    return _make_joint(w, kx, ky, problem.source.alphabet)


class _Slsqp:
    """Objective and constraints on the flat vector ``[w, K_X|V, K_Y|V]``."""

    def __init__(self, problem: RegionProblem, k: int, lo_x: float, lo_y: float, hi_y: float):
        self.p = problem.source.probs
        self.d = problem.distortion
        self.k = k
        self.m = len(self.p)
        self.lo_x, self.lo_y, self.hi_y = lo_x, lo_y, hi_y

    def unpack(self, z):
        k, m = self.k, self.m
        return z[:k], z[k:k + k * m].reshape(k, m), z[k + k * m:].reshape(k, m)

    def pack(self, w, kx, ky):
        return np.concatenate([w, kx.reshape(-1), ky.reshape(-1)])

    def objective(self, z):
        w, kx, ky = self.unpack(z)
        kyd = ky @ self.d.T
        kxd = kx @ self.d
        per_v = np.einsum("vx,vx->v", kx, kyd)
        grad = self.pack(per_v, w[:, None] * kyd, w[:, None] * kxd)
        return float(w @ per_v), grad

    def _cond_h(self, w, kk):
        safe = np.maximum(kk, 1e-300)
        row_h = -np.sum(kk * np.log2(safe), axis=1)
        dk = w[:, None] * (-np.log2(np.maximum(kk, 1e-12)) - 1.0 / _LN2)
        return float(w @ row_h), row_h, dk

    def eq(self, z):
        w, kx, ky = self.unpack(z)
        m = self.m
        return np.concatenate([
            [w.sum() - 1.0], kx.sum(axis=1) - 1.0, ky.sum(axis=1) - 1.0,
            (w @ kx - self.p)[:m - 1], (w @ ky - self.p)[:m - 1],
        ])

    def eq_jac(self, z):
        w, kx, ky = self.unpack(z)
        k, m = self.k, self.m
        n = k + 2 * k * m
        rows = 1 + 2 * k + 2 * (m - 1)
        jac = np.zeros((rows, n))
        jac[0, :k] = 1.0
        for v in range(k):
            jac[1 + v, k + v * m:k + (v + 1) * m] = 1.0
            jac[1 + k + v, k + k * m + v * m:k + k * m + (v + 1) * m] = 1.0
        base = 1 + 2 * k
        for x in range(m - 1):
            jac[base + x, :k] = kx[:, x]
            jac[base + (m - 1) + x, :k] = ky[:, x]
            for v in range(k):
                jac[base + x, k + v * m + x] = w[v]
                jac[base + (m - 1) + x, k + k * m + v * m + x] = w[v]
        return jac

    def ineq(self, z):
        w, kx, ky = self.unpack(z)
        hx = self._cond_h(w, kx)[0]
        hy = self._cond_h(w, ky)[0]
        out = [hx - self.lo_x]
        if math.isfinite(self.lo_y):
            out.append(hy - self.lo_y)
        if math.isfinite(self.hi_y):
            out.append(self.hi_y - hy)
        return np.array(out)

    def ineq_jac(self, z):
        w, kx, ky = self.unpack(z)
        k, m = self.k, self.m
        _, rhx, dkx = self._cond_h(w, kx)
        _, rhy, dky = self._cond_h(w, ky)
        zeros = np.zeros(k * m)
        rows = [np.concatenate([rhx, dkx.reshape(-1), zeros])]
        gy = np.concatenate([rhy, zeros, dky.reshape(-1)])
        if math.isfinite(self.lo_y):
            rows.append(gy)
        if math.isfinite(self.hi_y):
            rows.append(-gy)
        return np.array(rows)

    def solve(self, z0, maxiter=400):
        n = len(z0)
        res = minimize(
            self.objective, z0, jac=True, method="SLSQP", bounds=[(0.0, 1.0)] * n,
            constraints=[{"type": "eq", "fun": self.eq, "jac": self.eq_jac},
                         {"type": "ineq", "fun": self.ineq, "jac": self.ineq_jac}],
            options={"maxiter": maxiter, "ftol": 1e-12},
        )
        return res.x


def _random_start(rng: np.random.Generator, p: np.ndarray, k: int):
    m = len(p)
    w = rng.dirichlet(np.full(k, 0.7))
    w = np.maximum(w, 1e-6)
    w /= w.sum()
    pix = ipf(rng.gamma(0.5, size=(k, m)) + 1e-9, w, p)
    piy = ipf(rng.gamma(0.5, size=(k, m)) + 1e-9, w, p)
    return w, pix / w[:, None], piy / w[:, None]


def _pad(joint: MarkovJoint, k: int):
    """Embed a witness with fewer auxiliary symbols into a ``k``-symbol start."""
    kk = joint.v_card
    m = len(joint.k_XgV.output_alphabet)
    w = np.zeros(k)
    kx = np.full((k, m), 1.0 / m)
    ky = np.full((k, m), 1.0 / m)
    n = min(k, kk)
    order = np.argsort(-joint.p_V.probs)[:n]
    w[:n] = joint.p_V.probs[order]
    kx[:n] = joint.k_XgV.matrix[order]
    ky[:n] = joint.k_YgV.matrix[order]
    w /= w.sum()
    return w, kx, ky


def _structured_starts(problem: RegionProblem, k: int, lo_y: float, hi_y: float):
    """Deterministic starts: V constant, and V = Y softened to meet the floor."""
    p = problem.source.probs
    m = len(p)
    starts = []
    w = np.zeros(k)
    w[0] = 1.0
    starts.append((w, np.tile(p, (k, 1)), np.tile(p, (k, 1))))
    if k >= m:
        w = np.zeros(k)
        w[:m] = p
        ky = np.tile(p, (k, 1))
        ky[:m] = np.eye(m)
        kx = ky.copy()
        starts.append((w, kx, ky))
    return starts


def _run_start(args):
    problem, k, floors, z0 = args
    lo_x, lo_y, hi_y = floors
    sl = _Slsqp(problem, k, lo_x, lo_y, hi_y)
    try:
        z = sl.solve(z0)
    except (ValueError, np.linalg.LinAlgError):
        z = z0
    w, kx, ky = sl.unpack(z)
    return _repair(w, kx, ky, problem, lo_x, lo_y, hi_y)


def _coupling_solution(problem: RegionProblem, lo_x: float) -> MarkovJoint:
    """``V = Y`` witness: the cheapest coupling with ``I(X;Y) <= R``."""
    p = problem.source.probs
    # rows index Y (= V), columns X; cost[y, x] = d(x, y)
    pi = min_cost_coupling(problem.distortion.T, p, p, lo_x + REPAIR_MARGIN)
    live = p > 0
    w = p[live]
    kx = pi[live] / w[:, None]
    kx /= kx.sum(axis=1, keepdims=True)
    ky = np.eye(len(p))[live]
    return _make_joint(w, kx, ky, problem.source.alphabet)


def _pick(cands: list[tuple[float, float, MarkovJoint]]):
    best = min(c[0] for c in cands)
    ties = [c for c in cands if c[0] <= best + 1e-9]
    return min(ties, key=lambda c: c[1])


def min_distortion(problem: RegionProblem, R: float, R_c: float = INF, R_d: float = INF,
                   *, restarts: int = 24, seed: int = 0, workers: int = 1,
                   warm_starts: Iterable[MarkovJoint] = ()) -> RegionSolution:
    """Smallest achievable distortion at ``(R, R_c, R_d)``.

    Returns a solution with ``delta_star = inf`` and no witness when the rate
    constraints are jointly infeasible (strong mode with
    ``R + R_c + R_d < H(X)``).
    """
    h = problem.h_source
    if not (0 <= R < h):
        raise RegionError(f"R={R} outside [0, H(X)={h:.6g}); the region is only "
                          "characterised for rates below the source entropy")
    if R_c < 0 or R_d < 0:
        raise RegionError("rates must be non-negative")
    lo_x, lo_y, hi_y = _floors(problem, R, R_c, R_d)
    k = problem.v_card_cap
    m = len(problem.source)
    diag: dict = {"mode": problem.mode, "v_card_cap": k, "restarts": 0, "trace": []}

    if lo_y > hi_y + CERT_TOL:
        diag.update(method="infeasible", converged=True,
                    reason=f"need H(Y|V) >= {lo_y:.6g} but R_d = {R_d:.6g}")
        return RegionSolution(INF, None, R, R_c, R_d, diag)

    cands: list[tuple[float, float, MarkovJoint]] = []

    def consider(joint: MarkovJoint | None, tag: str):
        if joint is None:
            return None
        cert = certify(joint, problem, R, R_c, R_d)
        if cert["feasible"]:
            cands.append((cert["distortion"], cert["I_YV"], joint))
            diag["trace"].append((tag, cert["distortion"]))
            return cert["distortion"]
        diag["trace"].append((tag, INF))
        return None

    warm_starts = list(warm_starts)
    for i, ws in enumerate(warm_starts):
        consider(ws if ws.v_card <= k else None, f"warm{i}")

    if lo_y <= 0 and k >= m:
        diag["method"] = "coupling"
        consider(_coupling_solution(problem, lo_x), "coupling")
    else:
        diag["method"] = "multistart"
        floors = (lo_x, lo_y, hi_y)
        sl = _Slsqp(problem, k, *floors)
        starts = _structured_starts(problem, k, lo_y, hi_y)
        starts += [_pad(ws, k) for ws in warm_starts]
        starts += [_random_start(derive_rng(seed, i), problem.source.probs, k)
                   for i in range(restarts)]
        tasks = [(problem, k, floors, sl.pack(*s)) for s in starts]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(_run_start, tasks))
        else:
            results = [_run_start(t) for t in tasks]
        for i, joint in enumerate(results):
            consider(joint, f"start{i}")
        diag["restarts"] = len(tasks)

    if not cands:
        diag.update(converged=False, reason="no start produced a certified witness")
        log.warning("region solver found no feasible witness at R=%s Rc=%s Rd=%s", R, R_c, R_d)
        return RegionSolution(INF, None, R, R_c, R_d, diag)

    best_val, _, joint = _pick(cands)
    values = sorted(c[0] for c in cands)
    agree = sum(1 for v in values if v <= best_val + AGREE_TOL)
    diag["agreeing_starts"] = agree
    diag["converged"] = diag["method"] == "coupling" or agree >= 2
    if not diag["converged"]:
        log.info("only one start reached the best value %.6g (R=%s Rc=%s Rd=%s)",
                 best_val, R, R_c, R_d)
    diag["slacks"] = certify(joint, problem, R, R_c, R_d)
    return RegionSolution(float(best_val), joint, R, R_c, R_d, diag)


def membership(problem: RegionProblem, t: RateTuple, tol: float = 1e-6, **kw) -> str:
    """``'inside'``, ``'outside'`` or ``'boundary'`` (within ``tol`` of the minimum)."""
    sol = min_distortion(problem, t.R, t.R_c, t.R_d, **kw)
    if abs(t.Delta - sol.delta_star) <= tol:
        return "boundary"
    return "inside" if sol.delta_star <= t.Delta + tol else "outside"


def converse_slack(eps: float, alphabet_size: int) -> float:
    """``4 eps (log2 |W| + log2 (1/eps))`` for ``0 < eps < 1/4``."""
    if not (0 < eps < 0.25):
        raise ValueError(f"eps must lie in (0, 1/4), got {eps}")
    if alphabet_size < 1:
        raise ValueError("alphabet_size must be >= 1")
    return 4.0 * eps * (math.log2(alphabet_size) + math.log2(1.0 / eps))


def independent_distortion(problem: RegionProblem) -> float:
    """``E[d(X, Y)]`` with ``X, Y`` independent copies of the source."""
    p = problem.source.probs
    return float(p @ problem.distortion @ p)


@dataclass(frozen=True)
class BoundaryRow:
    R: float
    R_c: float
    R_d: float
    delta_star: float
    converged: bool
    monotone_adjusted: bool = False


def _dominates(a: tuple, b: tuple) -> bool:
    """``a`` has every rate at least as large as ``b``."""
    return all(x >= y for x, y in zip(a, b))


def trace_boundary(problem: RegionProblem, grid: Iterable[tuple[float, float, float]],
                   *, restarts: int = 24, seed: int = 0, mono_tol: float = 1e-6
                   ) -> list[BoundaryRow]:
    """Evaluate :func:`min_distortion` over a list of rate triples.

    Points are solved in increasing lexicographic order and every feasible
    witness found at a point with smaller rates is offered as a warm start, so
    results are deterministic and ordered the same as the input. Rows whose raw
    values still violate monotonicity by more than ``mono_tol`` are replaced by
    the best value at a dominated point and flagged.
    """
    grid = [tuple(float(v) for v in g) for g in grid]
    cache: dict[tuple, RegionSolution] = {}
    for key in sorted(set(grid)):
        warm = [s.achieving_joint for k, s in cache.items()
                if s.achieving_joint is not None and _dominates(key, k)]
        cache[key] = min_distortion(problem, *key, restarts=restarts, seed=seed,
                                    warm_starts=warm)
    rows = []
    for key in grid:
        sol = cache[key]
        val = sol.delta_star
        better = [cache[k].delta_star for k in cache if _dominates(key, k)]
        floor = min(better)
        adjusted = floor < val - mono_tol
        rows.append(BoundaryRow(*key, min(val, floor) if adjusted else val,
                                bool(sol.solver_diagnostics.get("converged", False)), adjusted))
    return rows


def write_boundary_csv(rows: Sequence[BoundaryRow], dest) -> None:
    """Write rows to a path or an open text stream."""
    if hasattr(dest, "write"):
        _write_rows(csv.writer(dest, lineterminator="\n"), rows)
        return
    with open(dest, "w", newline="") as fh:
        _write_rows(csv.writer(fh, lineterminator="\n"), rows)


def _write_rows(wr, rows) -> None:
    wr.writerow(["R", "R_c", "R_d", "delta_star", "converged", "monotone_adjusted"])
    for r in rows:
        wr.writerow([_fmt(r.R), _fmt(r.R_c), _fmt(r.R_d), _fmt(r.delta_star),
                     int(r.converged), int(r.monotone_adjusted)])


def _fmt(x: float) -> str:
    return "inf" if x == INF else f"{x:.10g}"
