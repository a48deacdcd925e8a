"""``rdpsim`` command line.

Exit codes: 0 success, 2 bad input or config, 3 budget guard, 4 numeric failure.
``RDPSIM_WORKERS`` sets the number of worker processes for region restarts.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from ..codec import (BudgetExceeded, CodeSpec, codeword_type_deviation, evaluate_distortion,
                     evaluate_per_symbol_realism, evaluate_strong_realism,
                     induced_distribution_exact, sample_codebook, sampled_distortion,
                     sampled_strong_realism, simulate_code)
from ..derand import DerandError, derandomize, output_law_tvd
from ..perfect import PerfectRealismError, enforce_perfect_realism
from ..probcore import Kernel, MarkovJoint, Pmf, hamming, tvd
from ..quant import (EuclideanQuantizer, power_distortion, uniform_integrability_probe,
                     verify_quantizability)
from ..region import (ComplexityError, RegionError, RegionProblem, grid_oracle, min_distortion,
                      trace_boundary, write_boundary_csv)
from ..seeding import derive_rng
from ..synth import build_synth_channel, verify_synthesis
from .experiment import ConfigError, emit_plotdata, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_NUMERIC = 0, 2, 3, 4
log = logging.getLogger("rdpsim")


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("RDPSIM_WORKERS", "1")))
    except ValueError as e:
        raise ConfigError("RDPSIM_WORKERS must be an integer") from e


def _floats(text: str) -> list[float]:
    out = []
    for tok in str(text).split(","):
        tok = tok.strip().lower()
        out.append(math.inf if tok in ("inf", "infinity") else float(tok))
    return out


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read {path}: {e}") from e


def _read_pmf(path: str) -> Pmf:
    return Pmf.from_dict(_read_json(path))


def _read_distortion(path: str | None, k: int) -> np.ndarray:
    if path is None or path == "hamming":
        return hamming(k)
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read distortion matrix {path}: {e}") from e


def _write_json(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _code_inputs(args):
    """Source, witness and rates from ``--spec`` and ``--joint`` plus overrides."""
    spec = _read_json(args.spec) if getattr(args, "spec", None) else {}
    source = _read_pmf(args.source) if args.source else Pmf.from_dict(spec["source"])
    joint_data = _read_json(args.joint) if args.joint else spec.get("joint")
    if joint_data is None:
        raise ConfigError("a witness joint is required (--joint or 'joint' in --spec)")
    joint = MarkovJoint.from_dict(joint_data.get("witness", joint_data))
    R = args.R if args.R is not None else spec.get("R")
    Rc = args.Rc if args.Rc is not None else spec.get("R_c", 0.0)
    if R is None:
        raise ConfigError("code rate R missing")
    return source, joint, float(R), float(Rc), spec


def cmd_region(args) -> int:
    source = _read_pmf(args.source)
    d = _read_distortion(args.distortion, len(source))
    problem = RegionProblem(source, d, "per_symbol" if args.per_symbol else "strong", args.cap)
    Rs, Rcs, Rds = _floats(args.R), _floats(args.Rc), _floats(args.Rd)
    if len(Rs) == len(Rcs) == len(Rds) == 1:
        sol = min_distortion(problem, Rs[0], Rcs[0], Rds[0], restarts=args.restarts,
                             seed=args.seed, workers=_workers())
        out = sol.to_dict()
        if args.oracle:
            out["oracle"] = grid_oracle(problem, Rs[0], Rcs[0], Rds[0], args.resolution)
        _write_json(out, args.out)
        return EXIT_OK
    grid = [(r, rc, rd) for r in Rs for rc in Rcs for rd in Rds]
    rows = trace_boundary(problem, grid, restarts=args.restarts, seed=args.seed)
    write_boundary_csv(rows, args.out or sys.stdout)
    return EXIT_OK


def cmd_simulate(args) -> int:
    source, joint, R, Rc, spec = _code_inputs(args)
    d = _read_distortion(args.distortion, len(source))
    ns = [int(n) for n in str(args.n or spec.get("n", 4)).split(",")]
    rows = []
    for n in ns:
        cb = sample_codebook(joint.p_V, CodeSpec(n, R, Rc), args.seed)
        _, exceed = codeword_type_deviation(cb, joint.p_V, args.eps)
        if args.exact:
            ij = induced_distribution_exact(cb, joint.k_XgV, joint.k_YgV, source, args.budget)
            rows.append([n, evaluate_strong_realism(ij, source),
                         evaluate_per_symbol_realism(ij, source), evaluate_distortion(ij, d), exceed])
        else:
            sj = simulate_code(cb, joint.k_XgV, joint.k_YgV, source, args.samples, args.seed)
            est, note = sampled_strong_realism(sj, source)
            log.warning("tvd_strong is a %s", note)
            rows.append([n, est, math.nan, sampled_distortion(sj, d)[0], exceed])
    with open(args.out, "w", newline="") if args.out else _stdout() as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["n", "tvd_strong", "tvd_per_symbol", "distortion", "exceedance"])
        for r in rows:
            wr.writerow([r[0]] + [f"{v:.12g}" for v in r[1:]])
    return EXIT_OK


class _stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        return False


def cmd_derand(args) -> int:
    source, joint, R, Rc, spec = _code_inputs(args)
    n = int(args.n or spec.get("n", 4))
    cb = sample_codebook(joint.p_V, CodeSpec(n, R, Rc), int(spec.get("codebook_seed", args.seed)))
    ij = induced_distribution_exact(cb, joint.k_XgV, joint.k_YgV, source, args.budget)
    f, rep = derandomize(ij, cb, source, args.candidates, args.seed)
    out = rep.to_dict()
    out["output_law_tvd"] = output_law_tvd(ij, f)
    _write_json(out, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    k = Kernel.from_dict(_read_json(args.kernel))
    words = np.asarray(_read_json(args.words), dtype=np.int64)
    if args.n is not None and words.shape[1] != args.n:
        raise ConfigError(f"words have length {words.shape[1]}, expected n={args.n}")
    sc = build_synth_channel(k, words, args.r, args.seed)
    with open(args.out, "w", newline="") if args.out else _stdout() as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["word", "list_size", "tvd", "eligible"])
        for i in range(len(words)):
            t, ok = verify_synthesis(sc, k, i, args.gamma)
            wr.writerow([i, sc.list_size, f"{t:.12g}", int(ok)])
    return EXIT_OK


def cmd_perfect(args) -> int:
    data = _read_json(args.joint)
    joint = np.asarray(data["table"] if isinstance(data, dict) else data, dtype=float)
    target_pmf = _read_pmf(args.target)
    block = round(math.log(joint.shape[2], len(target_pmf))) if len(target_pmf) > 1 else 1
    target = target_pmf.product(block) if len(target_pmf) ** block == joint.shape[2] \
        else target_pmf.probs
    new = enforce_perfect_realism(joint, target)
    out = {"delta": tvd(joint.sum(axis=(0, 1)), target),
           "joint_tvd": tvd(new.reshape(-1), joint.reshape(-1)),
           "post_check_sup_dev": float(np.abs(new.sum(axis=(0, 1)) - target).max()),
           "table": new.tolist()}
    _write_json(out, args.out)
    return EXIT_OK


def cmd_quant(args) -> int:
    q = EuclideanQuantizer(args.dim, args.level, args.s)
    rng = derive_rng(args.seed, 0)
    if args.probe != "gaussian":
        raise ConfigError("only the 'gaussian' probe source is built in")
    x = rng.standard_normal((args.samples, args.dim))
    y = rng.standard_normal((args.samples, args.dim))
    rep = verify_quantizability(q, args.s, x, y, args.eps, args.tau)
    probe = uniform_integrability_probe(x, power_distortion(2.0), [0.0, 0.001, 0.01, 0.1], rng,
                                        squared_error=True)
    _write_json({
        "dim": args.dim, "level": args.level, "s": args.s, "side": q.side,
        "ball_radius": rep.radius, "inside_pairs": rep.inside_pairs,
        "outside_pairs": rep.outside_pairs,
        "max_inside_violation": rep.max_inside_violation,
        "max_outside_violation": rep.max_outside_violation, "eps": args.eps,
        "passed": rep.passed,
        "integrability_probe": {"tau": list(probe.taus), "tail_mean": list(probe.tail_means),
                                "squared_error_bound": list(probe.squared_error_bounds)},
    }, args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = run_experiment(args.config, args.out, args.seed)
    sys.stdout.write(f"{out}\n")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    sys.stdout.write(f"{emit_plotdata(args.results, args.out)}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdpsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=0):
        sp.add_argument("--seed", type=int, default=seed)
        sp.add_argument("--out", default=None)
        return sp

    r = common(sub.add_parser("region", help="minimum distortion at given rates"))
    r.add_argument("--source", required=True, help="pmf JSON {alphabet, probs}")
    r.add_argument("--distortion", default="hamming", help="CSV matrix or 'hamming'")
    r.add_argument("--R", required=True, help="rate, or comma list for a trace")
    r.add_argument("--Rc", default="inf")
    r.add_argument("--Rd", default="inf")
    r.add_argument("--per-symbol", action="store_true")
    r.add_argument("--oracle", action="store_true", help="also run the grid oracle")
    r.add_argument("--resolution", type=float, default=0.02)
    r.add_argument("--cap", type=int, default=None, help="auxiliary alphabet size cap")
    r.add_argument("--restarts", type=int, default=24)
    r.set_defaults(func=cmd_region)

    def code_args(sp):
        sp.add_argument("--spec", help="JSON with source, joint, R, R_c, n")
        sp.add_argument("--source")
        sp.add_argument("--joint", help="witness JSON (region output or MarkovJoint)")
        sp.add_argument("--R", type=float)
        sp.add_argument("--Rc", type=float)
        sp.add_argument("--budget", type=int, default=10**8)

    s = common(sub.add_parser("simulate", help="evaluate a random code"))
    code_args(s)
    s.add_argument("--n", help="blocklength or comma list")
    s.add_argument("--distortion", default="hamming")
    s.add_argument("--exact", action="store_true")
    s.add_argument("--samples", type=int, default=10000)
    s.add_argument("--eps", type=float, default=0.1)
    s.set_defaults(func=cmd_simulate)

    d = common(sub.add_parser("derand", help="derandomize a code's encoder"))
    code_args(d)
    d.add_argument("--code", dest="spec", help="alias of --spec")
    d.add_argument("--n", type=int)
    d.add_argument("--candidates", type=int, default=32)
    d.set_defaults(func=cmd_derand)

    y = common(sub.add_parser("synth", help="channel synthesis per codeword"))
    y.add_argument("--kernel", required=True)
    y.add_argument("--words", required=True, help="JSON list of index sequences")
    y.add_argument("--r", type=float, required=True)
    y.add_argument("--gamma", type=float, default=0.2)
    y.add_argument("--n", type=int)
    y.set_defaults(func=cmd_synth)

    f = common(sub.add_parser("perfect", help="enforce an exact output marginal"))
    f.add_argument("--joint", required=True, help="JSON table indexed [x, u, y]")
    f.add_argument("--target", required=True, help="pmf JSON of one output symbol")
    f.set_defaults(func=cmd_perfect)

    q = common(sub.add_parser("quant", help="quantizer checks on Gaussian samples"))
    q.add_argument("--dim", type=int, default=1)
    q.add_argument("--level", type=int, default=8)
    q.add_argument("--s", type=float, default=2.0)
    q.add_argument("--probe", default="gaussian")
    q.add_argument("--samples", type=int, default=100000)
    q.add_argument("--eps", type=float, default=0.1)
    q.add_argument("--tau", type=float, default=0.01)
    q.set_defaults(func=cmd_quant)

    w = sub.add_parser("sweep", help="run a TOML experiment config")
    w.add_argument("--config", required=True)
    w.add_argument("--out", required=True, help="results directory")
    w.add_argument("--seed", type=int, default=None, help="override the config seed")
    w.set_defaults(func=cmd_sweep)

    t = sub.add_parser("plotdata", help="long-format CSV from a results directory")
    t.add_argument("--results", required=True)
    t.add_argument("--out", default=None)
    t.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")
    t.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BudgetExceeded, ComplexityError) as e:
        log.error("budget guard: %s", e)
        return EXIT_BUDGET
    except (ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as e:
        log.error("numeric failure: %s", e)
        return EXIT_NUMERIC
    except (ConfigError, RegionError, DerandError, PerfectRealismError, KeyError,
            ValueError, OSError) as e:
        log.error("input error: %s", e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
