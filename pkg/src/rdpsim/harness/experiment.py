"""Config-driven experiment runs with a hashed manifest.

Config schema (TOML, version 1)::

    [experiment]
    name = "..."            # used in plot data
    seed = 7                # master seed; every stream derives from it
    schema_version = 1

    [[runs]]                # zero or more
    name = "..."
    source = [0.7, 0.3]     # probabilities; alphabet is 0..k-1
    distortion = "hamming"  # or a square matrix
    witness = { R = 0.18, R_c = 0.25, R_d = "inf", v_card_cap = 3, restarts = 24 }
    code = { R = 0.5, R_c = 0.75, blocklengths = [4, 6, 8], codebook_seeds = 4 }
    derand = { candidates = 32 }
    synth = { margin = 0.4, gamma = 0.2 }

Each run solves the region at the witness rates, then for every blocklength
and codebook seed evaluates the randomized code, the derandomized code, the
code with a synthesized decoder and the code after perfect-realism
enforcement, all exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .. import __version__
from ..codec import (CodeSpec, evaluate_distortion, evaluate_per_symbol_realism,
                     evaluate_strong_realism, induced_distribution_exact, sample_codebook)
from ..derand import apply_encoder, derandomize, output_law_tvd
from ..perfect import enforce_on_code
from ..probcore import Pmf, hamming, tvd
from ..region import RegionProblem, min_distortion
from ..seeding import derive_seed
from ..synth import build_synth_channel, code_words, synth_decoder_table, verify_synthesis

SCHEMA_VERSION = 1
HEADLINE_FIELDS = [
    "run", "n", "codebook_seeds",
    "tvd_strong_randomized", "tvd_strong_derandomized",
    "tvd_per_symbol_randomized",
    "distortion_randomized", "distortion_derandomized",
    "derand_score_argmin", "derand_score_mean", "derand_output_tvd",
    "synth_rate", "synth_word_tvd", "tvd_strong_synth",
    "perfect_delta", "tvd_strong_perfect", "distortion_perfect",
    "target_delta",
]


class ConfigError(ValueError):
    pass


def _num(v) -> float:
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        raise ConfigError(f"expected a number or 'inf', got {v!r}")
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ConfigError(f"expected a number, got {v!r}")
    return float(v)


@dataclass(frozen=True)
class RunConfig:
    name: str
    source: Pmf
    distortion: np.ndarray
    witness: dict
    code: dict
    candidates: int
    synth_margin: float
    synth_gamma: float


def _parse_run(raw: dict, i: int) -> RunConfig:
    try:
        name = str(raw.get("name", f"run{i}"))
        source = Pmf.from_probs([_num(p) for p in raw["source"]])
        d = raw.get("distortion", "hamming")
        dist = hamming(len(source)) if d == "hamming" else np.asarray(d, dtype=float)
        w = raw["witness"]
        witness = {"R": _num(w["R"]), "R_c": _num(w.get("R_c", "inf")),
                   "R_d": _num(w.get("R_d", "inf")),
                   "v_card_cap": int(w.get("v_card_cap", len(source) ** 2 + 1)),
                   "restarts": int(w.get("restarts", 24))}
        c = raw["code"]
        code = {"R": _num(c["R"]), "R_c": _num(c.get("R_c", 0.0)),
                "blocklengths": [int(n) for n in c["blocklengths"]],
                "codebook_seeds": int(c.get("codebook_seeds", 1))}
        candidates = int(raw.get("derand", {}).get("candidates", 32))
        s = raw.get("synth", {})
        return RunConfig(name, source, dist, witness, code, candidates,
                         _num(s.get("margin", 0.4)), _num(s.get("gamma", 0.2)))
    except KeyError as e:
        raise ConfigError(f"run {i}: missing key {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"run {i}: {e}") from e


def load_config(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    exp = raw.get("experiment")
    if not isinstance(exp, dict) or "seed" not in exp:
        raise ConfigError("config needs an [experiment] table with a seed")
    if int(exp.get("schema_version", SCHEMA_VERSION)) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {exp.get('schema_version')}")
    runs = raw.get("runs", [])
    if not isinstance(runs, list):
        raise ConfigError("'runs' must be an array of tables")
    return {"name": str(exp.get("name", Path(path).stem)), "seed": int(exp["seed"]),
            "runs": [_parse_run(r, i) for i, r in enumerate(runs)]}


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    return "inf" if x == math.inf else f"{x:.12g}"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _evaluate(run: RunConfig, n: int, cb_seed: int, joint, master: int, run_idx: int) -> dict:
    src, d = run.source, run.distortion
    spec = CodeSpec(n, run.code["R"], run.code["R_c"])
    cb = sample_codebook(joint.p_V, spec, derive_seed(master, run_idx, n, cb_seed, 0))
    ij = induced_distribution_exact(cb, joint.k_XgV, joint.k_YgV, src, budget=10**9)
    target = src.product(n)
    f, rep = derandomize(ij, cb, src, run.candidates, derive_seed(master, run_idx, n, cb_seed, 1))
    dij = apply_encoder(ij, f)
    r = joint.h_ygv() + run.synth_margin
    sc = build_synth_channel(joint.k_YgV, code_words(cb), r,
                             derive_seed(master, run_idx, n, cb_seed, 2))
    word_tvd = np.array([verify_synthesis(sc, joint.k_YgV, i, run.synth_gamma)[0]
                         for i in range(len(sc.words))])
    sdec = synth_decoder_table(sc, budget=10**9).reshape(cb.message_count, cb.cr_count, -1)
    sij = ij.with_decoder(sdec.transpose(1, 0, 2))
    pij = enforce_on_code(ij, target)
    return {
        "tvd_strong_randomized": evaluate_strong_realism(ij, src),
        "tvd_strong_derandomized": evaluate_strong_realism(dij, src),
        "tvd_per_symbol_randomized": evaluate_per_symbol_realism(ij, src),
        "distortion_randomized": evaluate_distortion(ij, d),
        "distortion_derandomized": evaluate_distortion(dij, d),
        "derand_score_argmin": rep.scores[rep.argmin],
        "derand_score_mean": rep.mean,
        "derand_output_tvd": output_law_tvd(ij, f),
        "synth_rate": r,
        "synth_word_tvd": float(ij.p_mj().T.reshape(-1) @ word_tvd),
        "tvd_strong_synth": evaluate_strong_realism(sij, src),
        "perfect_delta": tvd(ij.p_yn(), target),
        "tvd_strong_perfect": evaluate_strong_realism(pij, src),
        "distortion_perfect": evaluate_distortion(pij, d),
    }


def run_experiment(config_path: str | Path, out_dir: str | Path,
                   seed: int | None = None) -> Path:
    """Execute every run of a config; write CSV/JSON results and ``manifest.json``."""
    started = time.time()
    cfg = load_config(config_path)
    master = cfg["seed"] if seed is None else int(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    headline, detail, witnesses = [], [], {}
    for ri, run in enumerate(cfg["runs"]):
        problem = RegionProblem(run.source, run.distortion, "strong", run.witness["v_card_cap"])
        sol = min_distortion(problem, run.witness["R"], run.witness["R_c"], run.witness["R_d"],
                             restarts=run.witness["restarts"], seed=derive_seed(master, ri))
        if not sol.feasible:
            raise ArithmeticError(f"run {run.name}: no feasible witness at the requested rates")
        witnesses[run.name] = sol.to_dict()
        for n in run.code["blocklengths"]:
            per_seed = []
            for s in range(run.code["codebook_seeds"]):
                vals = _evaluate(run, n, s, sol.achieving_joint, master, ri)
                per_seed.append(vals)
                detail.append({"run": run.name, "n": n, "codebook_seed": s, **vals})
            avg = {k: float(np.mean([v[k] for v in per_seed])) for k in per_seed[0]}
            headline.append({"run": run.name, "n": n,
                             "codebook_seeds": run.code["codebook_seeds"], **avg,
                             "target_delta": sol.delta_star})

    files = {
        "headline.csv": (HEADLINE_FIELDS, headline),
        "per_seed.csv": (["run", "n", "codebook_seed"] + HEADLINE_FIELDS[3:-1], detail),
    }
    for name, (fields, rows) in files.items():
        with open(out / name, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(fields)
            for row in rows:
                wr.writerow([_fmt(row[k]) for k in fields])
    (out / "witnesses.json").write_text(json.dumps(witnesses, indent=2, sort_keys=True) + "\n")

    manifest = {
        "experiment": cfg["name"],
        "schema_version": SCHEMA_VERSION,
        "config": str(config_path),
        "config_sha256": _sha256(Path(config_path)),
        "master_seed": master,
        "seed_derivation": "numpy default_rng(SeedSequence([master, *counters]))",
        "versions": {"rdpsim": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "started_unix": started,
        "wall_clock_seconds": time.time() - started,
        "runs": [r.name for r in cfg["runs"]],
        "files": [{"path": p, "sha256": _sha256(out / p)}
                  for p in ("headline.csv", "per_seed.csv", "witnesses.json")],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def emit_plotdata(results_dir: str | Path, out_path: str | Path | None = None) -> Path:
    """Flatten ``headline.csv`` into ``experiment,n,metric,value`` rows."""
    res = Path(results_dir)
    mpath = res / "manifest.json"
    if not mpath.exists():
        raise ConfigError(f"no manifest.json in {res}")
    manifest = json.loads(mpath.read_text())
    out = Path(out_path) if out_path is not None else res / "plotdata.csv"
    rows = []
    head = res / "headline.csv"
    if head.exists():
        with open(head, newline="") as fh:
            for rec in csv.DictReader(fh):
                for k, v in rec.items():
                    if k in ("run", "n", "codebook_seeds"):
                        continue
                    rows.append([f"{manifest['experiment']}/{rec['run']}", rec["n"], k, v])
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["experiment", "n", "metric", "value"])
        wr.writerows(rows)
    return out
