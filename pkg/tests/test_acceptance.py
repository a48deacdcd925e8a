"""Acceptance suite: one PASS/FAIL line per criterion (shown in the terminal summary)."""

import itertools
import math
import time

import numpy as np
import pytest

from rdpsim.codec import (
    CodeSpec, average_distortion_matrix, evaluate_distortion, evaluate_strong_realism,
    induced_distribution_exact, sample_codebook,
)
from rdpsim.derand import derandomize, output_law_tvd
from rdpsim.perfect import GaussianCells, enforce_on_code, enforce_perfect_realism, quantized_lift
from rdpsim.probcore import (
    Kernel, Pmf, conditional_entropy, entropy, hamming, information_density, mutual_information,
    tvd,
)
from rdpsim.quant import EuclideanQuantizer, verify_quantizability
from rdpsim.region import RegionProblem, grid_oracle_many, min_distortion
from rdpsim.seeding import derive_rng
from rdpsim.synth import attach_to_code, build_synth_channel, code_words, verify_synthesis

INF = math.inf
BERN03 = Pmf.bernoulli(0.3)
H_03 = 0.8812908992306926          # 40-digit mpmath
I_BSC01_UNIFORM = 0.5310044064107188
BSC02 = Kernel.from_matrix([[0.8, 0.2], [0.2, 0.8]])
H_BSC02 = 0.7219280948873623       # h(0.2), 40-digit mpmath
CODE_R, CODE_RC = 0.5, 0.75
WITNESS_RC = 0.25
BLOCKS = (4, 6, 8)
SEEDS = range(8)


def bern(p, mode="strong"):
    return RegionProblem(Pmf.bernoulli(p), hamming(2), mode, 3)


def region_grid(h):
    return [(float(r), rc, rd) for r in np.linspace(0, 0.8 * h, 5)
            for rc in (0.0, 0.25, INF) for rd in (0.0, 1.0, INF)]


@pytest.fixture(scope="module")
def region_results():
    """Solver, per-symbol solver and grid oracle on the criterion-2 grid, both sources."""
    out = {}
    started = time.time()
    for p in (0.3, 0.5):
        pr = bern(p)
        grid = region_grid(pr.h_source)
        strong = [min_distortion(pr, *g) for g in grid]
        per = [min_distortion(pr.with_mode("per_symbol"), *g).delta_star for g in grid]
        oracle = grid_oracle_many(pr, grid, 0.02)
        out[p] = (grid, strong, per, oracle)
    return out, time.time() - started


@pytest.fixture(scope="module")
def code_runs():
    pr = bern(0.3)
    sol = min_distortion(pr, 0.2 * pr.h_source, WITNESS_RC)
    w = sol.achieving_joint
    runs = {}
    for n in BLOCKS:
        for s in SEEDS:
            cb = sample_codebook(w.p_V, CodeSpec(n, CODE_R, CODE_RC), s)
            ij = induced_distribution_exact(cb, w.k_XgV, w.k_YgV, BERN03, budget=10**9)
            f, rep = derandomize(ij, cb, BERN03, candidates=32, seed=s)
            runs[n, s] = {
                "tvd": evaluate_strong_realism(ij, BERN03),
                "distortion": evaluate_distortion(ij, hamming(2)),
                "report": rep,
                "output_tvd": output_law_tvd(ij, f),
            }
    return sol, runs


@pytest.mark.criterion(1, "information measures")
def test_information_measures(verdict):
    started = time.time()
    checks = [
        tvd([0.5, 0.5], [0.5, 0.5]) == 0.0,
        abs(tvd([1.0, 0.0], [0.0, 1.0]) - 1.0) <= 1e-12,
        abs(tvd([0.75, 0.25], [0.5, 0.5]) - 0.25) <= 1e-12,
        abs(entropy(Pmf.uniform(2)) - 1.0) <= 1e-12,
        entropy(Pmf.from_probs([1.0, 0.0])) == 0.0,
        abs(entropy(BERN03) - H_03) <= 1e-12,
        abs(mutual_information(np.outer([0.3, 0.7], [0.6, 0.4]))) <= 1e-12,
        abs(mutual_information(np.diag([0.5, 0.5])) - 1.0) <= 1e-12,
        abs(mutual_information(0.5 * np.array([[0.9, 0.1], [0.1, 0.9]])) - I_BSC01_UNIFORM) <= 1e-12,
        conditional_entropy(Kernel.identity((0, 1)), Pmf.uniform(2)) == 0.0,
        abs(conditional_entropy(Kernel.from_matrix([[0.5, 0.5]] * 2), BERN03) - 1.0) <= 1e-12,
        abs(information_density(np.diag([0.5, 0.5]), 0, 0) - 1.0) <= 1e-12,
        information_density(np.diag([0.5, 0.5]), 0, 1) == -INF,
    ]
    rng = np.random.default_rng(2024)
    worst = {1: -INF, 2: 0.0, 4: -INF}
    for _ in range(1000):
        a, b = rng.integers(2, 5, size=2)
        p = rng.dirichlet(np.ones(a * b)).reshape(a, b)
        q = rng.dirichlet(np.ones(a * b)).reshape(a, b)
        worst[1] = max(worst[1], tvd(p.sum(1), q.sum(1)) - tvd(p, q))
        pa, qa = p.sum(1), q.sum(1)
        k = rng.dirichlet(np.ones(b), size=a)
        worst[2] = max(worst[2], abs(tvd(pa[:, None] * k, qa[:, None] * k) - tvd(pa, qa)))
        f = rng.uniform(-5, 5, size=(a, b))
        gap = abs(np.sum(p * f) - np.sum(q * f)) - 2 * np.abs(f).max() * tvd(p, q)
        worst[4] = max(worst[4], gap)
    bounds = worst[1] <= 1e-12 and worst[2] <= 1e-12 and worst[4] <= 1e-12
    elapsed = time.time() - started
    verdict(all(checks) and bounds and elapsed < 10,
            f"{sum(checks)}/{len(checks)} identities; inequality slack "
            f"{worst[1]:.1e}/{worst[2]:.1e}/{worst[4]:.1e}; {elapsed:.2f}s")


@pytest.mark.criterion(2, "region solver vs grid oracle")
def test_region_oracle(region_results, verdict):
    res, elapsed = region_results
    worst, count = 0.0, 0
    for grid, strong, _, oracle in res.values():
        for sol, o in zip(strong, oracle):
            if sol.delta_star == INF or o == INF:
                diff = 0.0 if sol.delta_star == o else INF
            else:
                diff = abs(sol.delta_star - o)
            worst = max(worst, diff)
            count += 1
    verdict(worst <= 0.03 and elapsed < 600,
            f"max |solver - oracle| = {worst:.4f} over {count} points; {elapsed:.0f}s")


@pytest.mark.criterion(3, "forced-independence corner")
def test_forced_independence(verdict):
    cases = []
    for pr in (bern(0.5), bern(0.3),
               RegionProblem(Pmf.from_probs([0.5, 0.3, 0.2]), hamming(3), "strong", 4)):
        p = pr.source.probs
        expected = float(p @ pr.distortion @ p)
        for R_c in (0.0, 0.25, 1.0, INF):
            for R_d in (pr.h_source, 2.0, INF):
                got = min_distortion(pr, 0.0, R_c, R_d).delta_star
                cases.append(abs(got - expected))
    worst = max(cases)
    verdict(worst <= 1e-3, f"max deviation {worst:.2e} over {len(cases)} cases")


@pytest.mark.criterion(4, "region shape")
def test_region_shape(region_results, verdict):
    res, _ = region_results
    mono, dominance = 0.0, -INF
    for grid, strong, per, _ in res.values():
        vals = {g: s.delta_star for g, s in zip(grid, strong)}
        for a, b in itertools.permutations(grid, 2):
            if all(x >= y for x, y in zip(a, b)) and vals[a] != INF:
                mono = max(mono, vals[a] - vals[b])
        dominance = max(dominance, max(pp - s.delta_star for pp, s in zip(per, strong)
                                       if s.delta_star < INF))
    verdict(mono <= 1e-6 and dominance <= 1e-6,
            f"worst monotonicity violation {mono:.1e}; max per-symbol minus strong {dominance:.1e}")


@pytest.mark.criterion(5, "codec exactness")
def test_codec_exactness(witness, verdict):
    worst_x = worst_markov = worst_enc = 0.0
    kx = witness.k_XgV.matrix
    for n in (2, 4, 6):
        for s in range(3):
            cb = sample_codebook(witness.p_V, CodeSpec(n, 0.5, 0.5), s)
            ij = induced_distribution_exact(cb, witness.k_XgV, witness.k_YgV, BERN03)
            worst_x = max(worst_x, np.abs(ij.x_marginal() - BERN03.product(n)).max())
            worst_markov = max(worst_markov, ij.markov_residual())
            for xi, x in enumerate(itertools.product((0, 1), repeat=n)):
                for j in range(cb.cr_count):
                    lik = np.array([math.prod(kx[cb.words[m, j, t], x[t]] for t in range(n))
                                    for m in range(cb.message_count)])
                    worst_enc = max(worst_enc, np.abs(ij.enc[xi, j] - lik / lik.sum()).max())
    verdict(worst_x <= 1e-9 and worst_markov <= 1e-9 and worst_enc <= 1e-12,
            f"x-marginal {worst_x:.1e}, markov {worst_markov:.1e}, encoder {worst_enc:.1e}")


@pytest.mark.criterion(6, "achievability trend")
def test_achievability_trend(code_runs, verdict):
    sol, runs = code_runs
    tv = [np.mean([runs[n, s]["tvd"] for s in SEEDS]) for n in BLOCKS]
    dist8 = np.mean([runs[8, s]["distortion"] for s in SEEDS])
    ok = tv[0] >= tv[1] >= tv[2] and dist8 <= sol.delta_star + 0.05
    verdict(ok, "mean TVD " + " -> ".join(f"{v:.4f}" for v in tv)
            + f"; distortion(n=8) {dist8:.4f} <= {sol.delta_star:.4f} + 0.05")


@pytest.mark.criterion(7, "derandomization")
def test_derandomization(code_runs, verdict):
    _, runs = code_runs
    below_mean = all(r["report"].scores[r["report"].argmin] <= r["report"].mean
                     for r in runs.values())
    output_ok = all(r["output_tvd"] <= r["report"].scores[r["report"].argmin] + 1e-9
                    for r in runs.values())
    best = [np.mean([min(runs[n, s]["report"].scores) for s in SEEDS]) for n in BLOCKS]
    trend = best[0] >= best[1] >= best[2]
    verdict(below_mean and output_ok and trend,
            f"argmin<=mean on all {len(runs)} runs: {below_mean}; output TVD<=score: {output_ok}; "
            "mean argmin score " + " -> ".join(f"{v:.4f}" for v in best))


@pytest.mark.criterion(8, "perfect-realism contract")
def test_perfect_realism(witness, verdict):
    rng = np.random.default_rng(8)
    sup_dev = excess = drift_excess = 0.0
    idempotent = True
    for _ in range(300):
        nx, nu, ny = rng.integers(1, 5), rng.integers(1, 6), rng.integers(2, 6)
        joint = (rng.dirichlet(np.ones(nx * nu)).reshape(nx, nu)[..., None]
                 * rng.dirichlet(np.ones(ny) * 0.5, size=nu)[None])
        target = rng.dirichlet(np.ones(ny))
        delta = tvd(joint.sum(axis=(0, 1)), target)
        new = enforce_perfect_realism(joint, target)
        sup_dev = max(sup_dev, np.abs(new.sum(axis=(0, 1)) - target).max())
        excess = max(excess, tvd(new, joint) - delta)
        idempotent &= bool(np.array_equal(enforce_perfect_realism(new, target), new))
        d = rng.uniform(0, 2, size=(nx, ny))
        drift = abs(np.einsum("xuy,xy->", new - joint, d))
        drift_excess = max(drift_excess, drift - 2 * d.max() * delta)
    cb = sample_codebook(witness.p_V, CodeSpec(4, 0.5, 0.5), 0)
    ij = induced_distribution_exact(cb, witness.k_XgV, witness.k_YgV, BERN03)
    target = BERN03.product(4)
    delta = tvd(ij.p_yn(), target)
    new = enforce_on_code(ij, target)
    sup_dev = max(sup_dev, np.abs(new.p_yn() - target).max())
    excess = max(excess, tvd(new.table(), ij.table()) - delta)
    idempotent &= bool(np.array_equal(enforce_on_code(new, target).dec, new.dec))
    dmax = average_distortion_matrix(hamming(2), 4).max()
    drift = abs(evaluate_distortion(new, hamming(2)) - evaluate_distortion(ij, hamming(2)))
    drift_excess = max(drift_excess, drift - 2 * dmax * delta)
    verdict(sup_dev <= 1e-12 and excess <= 1e-12 and idempotent and drift_excess <= 1e-12,
            f"sup dev {sup_dev:.1e}; TVD-minus-delta {excess:.1e}; idempotent {idempotent}; "
            f"drift slack {drift_excess:.2e}")


def _word_tvds(r_offset, n):
    words = derive_rng(5, n).integers(0, 2, size=(8, n))
    sc = build_synth_channel(BSC02, words, H_BSC02 + r_offset, seed=7)
    return [verify_synthesis(sc, BSC02, i, gamma=0.2) for i in range(len(words))]


@pytest.mark.criterion(9, "channel synthesis")
def test_channel_synthesis(witness, verdict):
    res = {n: _word_tvds(0.4, n) for n in (4, 8, 12)}
    means = [np.mean([t for t, _ in res[n]]) for n in (4, 8, 12)]
    eligible = all(ok for n in res for _, ok in res[n])
    control = np.mean([t for t, _ in _word_tvds(-0.2, 12)])
    cb = sample_codebook(witness.p_V, CodeSpec(6, 0.5, 0.5), 0)
    ij = induced_distribution_exact(cb, witness.k_XgV, witness.k_YgV, BERN03)
    sc = build_synth_channel(witness.k_YgV, code_words(cb), witness.h_ygv() + 0.4, seed=3)
    rep = attach_to_code(ij, cb, witness.k_YgV, sc)
    gap = abs(rep.joint_tvd - rep.weighted_word_tvd)
    ok = means[0] >= means[1] >= means[2] and eligible and gap <= 1e-9 and control >= 0.1
    verdict(ok, "mean word TVD " + " -> ".join(f"{v:.4f}" for v in means)
            + f"; attach identity gap {gap:.1e}; control at n=12 {control:.3f}")


@pytest.mark.criterion(10, "quantizer suite")
def test_quantizer_suite(verdict):
    rng = derive_rng(10, 0)
    x, y = rng.standard_normal(10**5), rng.standard_normal(10**5)
    q = EuclideanQuantizer(1, 16, 2.0)
    once = q.quantize(x)
    idempotent = bool(np.array_equal(q.quantize(once), once))
    cells = q.cell_index(x)[:, 0]
    reps = once[:, 0]
    partition = all(np.unique(reps[cells == c]).size == 1 for c in np.unique(cells))
    q8 = EuclideanQuantizer(1, 8, 1.0)
    inside = np.abs(x) <= q8.radius - 1
    disp = float(np.abs(x - q8.quantize(x)[:, 0])[inside].max())
    bound = math.sqrt(q8.dim) * q8.side
    rep = verify_quantizability(q, 2.0, x, y, eps=0.1, tau=0.01)

    lq = EuclideanQuantizer(1, 4, 1.0)
    gc = GaussianCells.build(lq)
    d = (gc.reps[:, None] - gc.reps[None, :]) ** 2
    inner = min_distortion(RegionProblem(Pmf.from_probs(gc.mass), d, "per_symbol", len(gc.mass)),
                           1.0).achieving_joint
    lift = quantized_lift(lq, inner)
    n = 10**5
    out = lift.run(derive_rng(10, 1).standard_normal(n), derive_rng(10, 2))
    mean_ok = abs(out.mean()) <= 3 / math.sqrt(n)
    var_ok = abs(out.var() - 1.0) <= 0.05
    ok = idempotent and partition and disp <= bound and rep.passed and mean_ok and var_ok
    verdict(ok, f"idempotent {idempotent}; partition {partition}; displacement {disp:.4f} <= "
            f"{bound:.4f}; inside/outside violations {rep.max_inside_violation:.3f}/"
            f"{rep.max_outside_violation:.3f} at eps 0.1; lift mean {out.mean():+.4f}, "
            f"var {out.var():.4f}")
