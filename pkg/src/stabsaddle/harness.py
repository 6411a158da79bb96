"""Experiment configuration, seeded sweeps and rate fitting."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import amdp, problems, solvers

log = logging.getLogger(__name__)

SCENARIOS = ("BilinearCogda", "BilinearComida", "BilinearSgdaContrast", "AmdpPlan")
TUNINGS = ("Theorem1", "Corollary1", "Theorem3", "Manual")
ALLOWED_TUNING = {
    "BilinearCogda": {"Theorem1", "Manual"},
    "BilinearComida": {"Corollary1", "Manual"},
    "BilinearSgdaContrast": {"Theorem1", "Manual"},
    "AmdpPlan": {"Theorem3", "Manual"},
}
MANUAL_KEYS = {
    "bilinear": {"eta_x", "eta_y", "rho_x", "rho_y"},
    "amdp": {"eta_v", "eta_mu", "rho_v"},
}
REQUIRED = ("scenario", "problem", "horizons", "seeds", "tuning", "output")
OPTIONAL = ("checkpoints", "gap", "gap_radius", "mu_init", "sgda_eta", "gate")
JOBS_ENV = "STABSADDLE_JOBS"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str
    problem: dict | str
    horizons: list[int]
    seeds: list[int]
    tuning: str
    output: str
    manual: dict = field(default_factory=dict)
    checkpoints: str | list[int] = "powers_of_two"
    gap: str = "restricted"
    gap_radius: float = 1.0
    mu_init: list[float] | None = None
    sgda_eta: float = 0.1
    gate: dict = field(default_factory=dict)
    base_dir: str = "."


def parse_config(source) -> ExperimentConfig:
    """Build a config from a JSON file path or an already-parsed dict."""
    base = "."
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
        base = str(Path(source).resolve().parent)
    else:
        doc = dict(source)
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(REQUIRED) - set(OPTIONAL))
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(unknown)}")
    missing = [k for k in REQUIRED if k not in doc]
    if missing:
        raise ConfigError(f"missing field(s): {', '.join(missing)}")
    scenario = doc["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    tuning, manual = doc["tuning"], {}
    if isinstance(tuning, dict):
        if list(tuning) != ["Manual"] or not isinstance(tuning["Manual"], dict):
            raise ConfigError("tuning object must be {\"Manual\": {...}}")
        manual = {k: float(v) for k, v in tuning["Manual"].items()}
        tuning = "Manual"
    if tuning not in TUNINGS:
        raise ConfigError(f"unknown tuning {tuning!r}")
    if tuning not in ALLOWED_TUNING[scenario]:
        raise ConfigError(f"tuning {tuning} does not apply to scenario {scenario}")
    if tuning == "Manual":
        need = MANUAL_KEYS["amdp" if scenario == "AmdpPlan" else "bilinear"]
        if scenario == "BilinearSgdaContrast":
            need = {"eta_x", "eta_y"}
        if set(manual) != need:
            raise ConfigError(f"manual tuning needs exactly {sorted(need)}, got {sorted(manual)}")
    horizons, seeds = doc["horizons"], doc["seeds"]
    if not isinstance(horizons, list) or not horizons or not all(isinstance(t, int) and t >= 1 for t in horizons):
        raise ConfigError("horizons must be a nonempty list of positive integers")
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a nonempty list of integers")
    checkpoints = doc.get("checkpoints", "powers_of_two")
    if checkpoints != "powers_of_two" and not (isinstance(checkpoints, list)
                                               and all(isinstance(t, int) for t in checkpoints)):
        raise ConfigError("checkpoints must be \"powers_of_two\" or a list of integers")
    gap = doc.get("gap", "restricted")
    if gap not in ("saddle", "restricted"):
        raise ConfigError("gap must be \"saddle\" or \"restricted\"")
    if not isinstance(doc["problem"], (dict, str)):
        raise ConfigError("problem must be an inline object or a file path")
    return ExperimentConfig(
        scenario=scenario, problem=doc["problem"], horizons=list(horizons), seeds=list(seeds),
        tuning=tuning, output=str(doc["output"]), manual=manual, checkpoints=checkpoints, gap=gap,
        gap_radius=float(doc.get("gap_radius", 1.0)), mu_init=doc.get("mu_init"),
        sgda_eta=float(doc.get("sgda_eta", 0.1)), gate=dict(doc.get("gate", {})), base_dir=base,
    )


# ---------------------------------------------------------------------------
# problem loading
# ---------------------------------------------------------------------------


def _noise_for(game, noise_doc):
    noise_doc = noise_doc or {}
    if "amplitudes" in noise_doc or "kind" in noise_doc:
        return problems.game_from_dict({**problems.game_to_dict(game), "noise": noise_doc})[1]
    return problems.NoiseModel.entrywise(game, float(noise_doc.get("M", 0.0)), float(noise_doc.get("b", 0.0)),
                                         float(noise_doc.get("c", 0.0)), noise_doc.get("distribution", "sign"),
                                         bool(noise_doc.get("shared", True)))


def load_problem(config: ExperimentConfig):
    """Return (game, noise) for bilinear scenarios or an MDP for AmdpPlan."""
    doc = config.problem
    if isinstance(doc, str):
        path = Path(doc)
        if not path.is_absolute():
            path = Path(config.base_dir) / path
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read problem {path}: {exc}") from exc
    try:
        gen = doc.get("generator")
        if config.scenario == "AmdpPlan":
            if gen == "random_mdp":
                return amdp.random_mdp(int(doc["S"]), int(doc["A"]), int(doc.get("seed", 0)))
            if gen is not None:
                raise ConfigError(f"unknown MDP generator {gen!r}")
            return amdp.mdp_from_dict(doc)
        if gen == "rotation":
            game = problems.rotation_game(doc.get("b", (1.0, 0.0)), doc.get("c", (0.0, 2.0)))
            return game, _noise_for(game, doc.get("noise"))
        if gen == "random_game":
            game = problems.random_game(int(doc["m"]), int(doc["n"]), int(doc.get("seed", 0)),
                                        vectors=bool(doc.get("vectors", True)))
            return game, _noise_for(game, doc.get("noise"))
        if gen is not None:
            raise ConfigError(f"unknown game generator {gen!r}")
        return problems.game_from_dict(doc)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed problem: {exc}") from exc


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepSummary:
    cells: list[dict]
    per_T: list[dict]
    slope: float | None
    intercept: float | None

    def values(self, T: int) -> np.ndarray:
        return np.array([c["value"] for c in self.cells if c["T"] == T])


def fit_rate_slope(points) -> tuple[float, float]:
    """OLS fit of log(gap) on log(T); nonpositive gaps are dropped with a warning."""
    usable = []
    for T, gap in points:
        if not (gap > 0 and math.isfinite(gap)):
            log.warning("dropping point T=%s with nonpositive gap %r", T, gap)
            continue
        usable.append((math.log(T), math.log(gap)))
    if len(usable) < 3:
        raise ValueError(f"need at least 3 usable points, got {len(usable)}")
    X = np.array(usable)
    slope, intercept = np.polyfit(X[:, 0], X[:, 1], 1)
    return float(slope), float(intercept)


def _checkpoints(config, T):
    if config.checkpoints == "powers_of_two":
        return solvers.power_of_two_checkpoints(T)
    return sorted({t for t in config.checkpoints if 1 <= t <= T} | {T})


def _gap_fn(config, game):
    if config.gap == "saddle":
        return solvers.saddle_gap_fn(game)
    saddle = problems.exact_saddle(game)
    if not saddle:
        raise ConfigError("restricted gap needs a game with a unique saddle")
    return lambda xa, ya: problems.restricted_gap(game, xa, ya, saddle, config.gap_radius)


def _write_atomic(path: Path, writer):
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _run_cell(config: ExperimentConfig, T: int, seed: int) -> dict:
    out = Path(config.output)
    cps = _checkpoints(config, T)
    prob = load_problem(config)
    if config.scenario == "AmdpPlan":
        mdp = prob
        if config.tuning == "Theorem3":
            tu = amdp.tune_theorem3(mdp.S, mdp.A, T)
            eta_v, eta_mu, rho_v = tu.eta_v, tu.eta_mu, tu.rho_v
        else:
            eta_v, eta_mu, rho_v = (config.manual[k] for k in ("eta_v", "eta_mu", "rho_v"))
        sim = amdp.GenerativeSimulator(mdp, seed)
        res = amdp.comida_mdp_run(sim, eta_v, eta_mu, rho_v, T, mu_init=config.mu_init, checkpoints=cps)
        _write_atomic(out / f"trace_T{T}_seed{seed}.csv",
                      lambda p: res.run.write_csv(p, amdp.MDP_TRACE_COLUMNS))
        return {"T": T, "seed": seed, "value": res.run.extra["suboptimality"]}

    game, noise = prob
    zx, zy = np.zeros(game.m), np.zeros(game.n)
    if config.scenario == "BilinearSgdaContrast":
        zx[0] = zy[0] = 1.0
        if config.tuning == "Manual":
            ex, ey = config.manual["eta_x"], config.manual["eta_y"]
        else:
            ex = ey = config.sgda_eta
        z1 = math.sqrt(2.0)
        sg = solvers.sgda_run(game, noise, ex, ey, T, zx, zy, rng=seed, checkpoints=cps, gap_fn=lambda a, b: 0.0)
        tu = solvers.tune_theorem1(noise.L_M, T)
        co = solvers.cogda_run(game, noise, tu.params(T, zx, zy, cps), rng=seed, gap_fn=lambda a, b: 0.0)
        _write_atomic(out / f"trace_T{T}_seed{seed}_sgda.csv", sg.write_csv)
        _write_atomic(out / f"trace_T{T}_seed{seed}_cogda.csv", co.write_csv)
        return {"T": T, "seed": seed, "value": sg.max_iterate_norm / z1,
                "cogda_value": co.max_iterate_norm / z1}

    gap_fn = _gap_fn(config, game)
    if config.scenario == "BilinearCogda":
        if config.tuning == "Theorem1":
            tu = solvers.tune_theorem1(noise.L_M, T)
        else:
            tu = solvers.Tuning(**{k: config.manual[k] for k in ("eta_x", "eta_y", "rho_x", "rho_y")})
        res = solvers.cogda_run(game, noise, tu.params(T, zx, zy, cps), rng=seed, gap_fn=gap_fn)
    else:
        problem = problems.as_sub_bilinear(game, noise)
        geom = solvers.GeometryPair.euclidean(game.m, game.n)
        if config.tuning == "Corollary1":
            tu = solvers.tune_corollary1(problem.L, geom.gamma_x, geom.gamma_y, T)
        else:
            tu = solvers.Tuning(**{k: config.manual[k] for k in ("eta_x", "eta_y", "rho_x", "rho_y")})
        res = solvers.comida_run(problem, geom, tu.params(T, zx, zy, cps), rng=seed, gap_fn=gap_fn)
    _write_atomic(out / f"trace_T{T}_seed{seed}.csv", res.write_csv)
    return {"T": T, "seed": seed, "value": res.trace[-1].gap_running_avg}


def _cell_worker(args):
    return _run_cell(*args)


def _jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def run_scenario(config: ExperimentConfig, jobs: int | None = None) -> SweepSummary:
    """Run every (T, seed) cell, write per-run traces and the summary files."""
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    load_problem(config)  # fail early on a bad problem
    cells = [(config, T, s) for T in sorted(set(config.horizons)) for s in config.seeds]
    jobs = jobs or _jobs()
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_cell_worker, cells))
    else:
        results = [_cell_worker(c) for c in cells]
    per_T = []
    for T in sorted(set(config.horizons)):
        vals = np.array([r["value"] for r in results if r["T"] == T], dtype=float)
        se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else None
        per_T.append({"T": T, "n": int(vals.size), "mean": float(vals.mean()),
                      "median": float(np.median(vals)), "stderr": se})
    slope = intercept = None
    if len(per_T) >= 3 and config.scenario != "BilinearSgdaContrast":
        try:
            slope, intercept = fit_rate_slope([(p["T"], p["mean"]) for p in per_T])
        except ValueError as exc:
            log.warning("slope not fitted: %s", exc)
    extra_cols = sorted({k for r in results for k in r} - {"T", "seed", "value"})

    def write_summary(path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T", "seed", "value", *extra_cols])
            for r in results:
                w.writerow([r["T"], r["seed"], repr(float(r["value"])), *(repr(float(r[k])) for k in extra_cols)])

    _write_atomic(out / "summary.csv", write_summary)
    meta = {"scenario": config.scenario, "per_T": per_T}
    if slope is not None:
        meta.update(slope=slope, intercept=intercept)
    _write_atomic(out / "summary.json", lambda p: Path(p).write_text(json.dumps(meta, indent=2)))
    return SweepSummary(results, per_T, slope, intercept)


def check_gate(config: ExperimentConfig, summary: SweepSummary) -> tuple[bool, str]:
    """Evaluate the config's ``gate`` thresholds against a finished sweep."""
    gate = config.gate or {"max_slope": -0.4}
    msgs, ok = [], True
    if "max_slope" in gate:
        good = summary.slope is not None and summary.slope <= gate["max_slope"]
        ok &= good
        msgs.append(f"slope {summary.slope} <= {gate['max_slope']}: {good}")
    if "max_median" in gate:
        med = summary.per_T[-1]["median"]
        good = med <= gate["max_median"]
        ok &= good
        msgs.append(f"median at T={summary.per_T[-1]['T']} {med:.4g} <= {gate['max_median']}: {good}")
    return bool(ok), "; ".join(msgs)
