"""Stabilized descent-ascent solvers, the plain SGDA baseline and tuners.

Each run returns uniform averages of the iterates x_1..x_T and a trace
sampled at checkpoints. Randomness is drawn as a stream of uniforms,
one fixed-size block per round, so the first T' rounds of a run are
identical whatever the horizon or checkpoint schedule.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from . import kernels
from .geometry import (
    ConfigurationError, DistanceGenerator, NormTag, ParameterError, Stabilizer, StabilizerKind,
    bregman_divergence, composite_prox, dual_norm,
)
from .problems import (
    BilinearGame, NoiseModel, SubBilinearProblem, duality_gap, exact_saddle,
)

CHUNK = 2048
TRACE_COLUMNS = ("t", "norm_x_dev", "norm_y_dev", "grad_x_norm", "grad_y_norm", "gap_running_avg")


def power_of_two_checkpoints(T: int) -> list[int]:
    pts = []
    p = 1
    while p <= T:
        pts.append(p)
        p *= 2
    if pts[-1] != T:
        pts.append(T)
    return pts


@dataclass
class SolverParams:
    eta_x: float
    eta_y: float
    rho_x: float
    rho_y: float
    horizon_T: int
    x_init: np.ndarray
    y_init: np.ndarray
    checkpoints: list[int] | None = None

    def __post_init__(self):
        self.x_init = np.asarray(self.x_init, dtype=np.float64).reshape(-1)
        self.y_init = np.asarray(self.y_init, dtype=np.float64).reshape(-1)
        if int(self.horizon_T) < 1:
            raise ParameterError("horizon_T must be at least 1")
        self.horizon_T = int(self.horizon_T)
        if self.eta_x < 0 or self.eta_y < 0:
            raise ParameterError("step sizes must be nonnegative")
        if self.rho_x < 0 or self.rho_y < 0:
            raise ParameterError("stabilization weights must be nonnegative")
        if self.checkpoints is None:
            self.checkpoints = power_of_two_checkpoints(self.horizon_T)
        else:
            cps = sorted({int(t) for t in self.checkpoints})
            if cps and (cps[0] < 1 or cps[-1] > self.horizon_T):
                raise ParameterError("checkpoints must lie in [1, T]")
            self.checkpoints = cps


@dataclass
class TraceRecord:
    t: int
    norm_x_dev: float
    norm_y_dev: float
    grad_x_norm: float
    grad_y_norm: float
    gap_running_avg: float
    extra: dict = field(default_factory=dict)

    def row(self, columns):
        d = asdict(self)
        d.update(d.pop("extra"))
        return [d[c] for c in columns]


@dataclass
class RunResult:
    x_avg: np.ndarray
    y_avg: np.ndarray
    trace: list[TraceRecord]
    seed: int | None
    queries: int
    x_last: np.ndarray | None = None
    y_last: np.ndarray | None = None
    max_iterate_norm: float = float("nan")
    extra: dict = field(default_factory=dict)

    def trace_column(self, name: str) -> np.ndarray:
        if name in TRACE_COLUMNS:
            return np.array([getattr(r, name) for r in self.trace], dtype=float)
        return np.array([r.extra[name] for r in self.trace], dtype=float)

    def write_csv(self, path, columns=TRACE_COLUMNS):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for rec in self.trace:
                w.writerow([repr(float(v)) if not isinstance(v, (int, np.integer)) else int(v)
                            for v in rec.row(columns)])


def make_rng(rng):
    """Return (generator, seed) for an int seed, a Generator or None."""
    if isinstance(rng, np.random.Generator):
        return rng, None
    seed = 0 if rng is None else int(rng)
    return np.random.default_rng(seed), seed


def saddle_gap_fn(game: BilinearGame) -> Callable:
    saddle = exact_saddle(game)
    if not saddle:
        return lambda xa, ya: float("nan")
    return lambda xa, ya: duality_gap(game, xa, ya, saddle)


# ---------------------------------------------------------------------------
# bilinear runs (compiled kernel)
# ---------------------------------------------------------------------------


def _run_bilinear(game, noise, params, rng, gap_fn, kernel):
    m, n = game.m, game.n
    if params.x_init.size != m or params.y_init.size != n:
        raise ValueError(f"initial points do not match the {m}x{n} game")
    gen, seed = make_rng(rng)
    gap_fn = gap_fn or saddle_gap_fn(game)
    kernel = kernel or kernels
    T = params.horizon_T
    x, y = params.x_init.copy(), params.y_init.copy()
    x1, y1 = params.x_init.copy(), params.y_init.copy()
    xs, ys = np.zeros(m), np.zeros(n)
    xp, yp = np.empty(m), np.empty(n)
    per_round = noise.uniforms_per_round(m, n)
    M = np.ascontiguousarray(game.M)
    cps = list(params.checkpoints)
    trace = []
    done = 0
    max_sq = 0.0
    while done < T:
        stop = min(done + CHUNK, T)
        if cps and cps[0] <= stop:
            stop = cps[0]
        k = stop - done
        if per_round:
            U = gen.random((k, per_round))
            xi = noise.perturbations(U, m, n)
        else:
            xi = (None, None, None, None)
        gxn, gyn, sq = kernel.bilinear_chunk(M, game.b, game.c, x, y, xs, ys, xp, yp, x1, y1,
                                             params.eta_x, params.eta_y, params.rho_x, params.rho_y,
                                             *xi, k)
        max_sq = max(max_sq, sq)
        done = stop
        if cps and cps[0] == done:
            cps.pop(0)
            xa, ya = xs / done, ys / done
            trace.append(TraceRecord(done, float(np.linalg.norm(xp - x1)), float(np.linalg.norm(yp - y1)),
                                     gxn, gyn, float(gap_fn(xa, ya))))
    return RunResult(xs / T, ys / T, trace, seed, T, x_last=xp.copy(), y_last=yp.copy(),
                     max_iterate_norm=float(np.sqrt(max_sq)))


def cogda_run(game: BilinearGame, noise: NoiseModel, params: SolverParams, rng=None,
              gap_fn: Callable | None = None, check_coupling: bool = False, kernel=None) -> RunResult:
    """Stabilized stochastic gradient descent-ascent with Euclidean stabilizers.

    ``gap_fn(x_avg, y_avg)`` is evaluated at checkpoints; it defaults to the
    exact duality gap against the unique saddle (NaN if there is none).
    """
    if check_coupling:
        L2 = noise.L_M ** 2
        if not (np.isclose(params.rho_y, 2 * params.eta_x * L2, rtol=1e-12, atol=0)
                and np.isclose(params.rho_x, 2 * params.eta_y * L2, rtol=1e-12, atol=0)):
            raise ParameterError("parameters violate the rho_y = 2 eta_x L_M^2, rho_x = 2 eta_y L_M^2 coupling")
    if params.eta_x <= 0 or params.eta_y <= 0:
        raise ParameterError("step sizes must be positive")
    return _run_bilinear(game, noise, params, rng, gap_fn, kernel)


def sgda_run(game: BilinearGame, noise: NoiseModel, eta_x: float, eta_y: float, T: int,
             x_init, y_init, rng=None, checkpoints=None, gap_fn=None, kernel=None) -> RunResult:
    """Plain simultaneous stochastic gradient descent-ascent (no stabilization)."""
    params = SolverParams(eta_x, eta_y, 0.0, 0.0, T, x_init, y_init, checkpoints)
    return _run_bilinear(game, noise, params, rng, gap_fn, kernel)


# ---------------------------------------------------------------------------
# general geometry
# ---------------------------------------------------------------------------


_DUAL_TO_STABILIZER = {NormTag.L2: StabilizerKind.L2_SQUARED, NormTag.LINF: StabilizerKind.LINF_SQUARED}


def _dual_tag(tag: NormTag) -> NormTag:
    return {NormTag.L1: NormTag.LINF, NormTag.LINF: NormTag.L1}.get(NormTag(tag), NormTag(tag))


@dataclass(frozen=True)
class GeometryPair:
    """Divergences for both players.

    The x-stabilizer is half the squared dual of the y-norm and vice versa,
    so entropy on one side puts a sup-norm stabilizer on the other.
    """

    dgf_x: DistanceGenerator
    dgf_y: DistanceGenerator

    @property
    def gamma_x(self) -> float:
        return self.dgf_x.strong_convexity_modulus

    @property
    def gamma_y(self) -> float:
        return self.dgf_y.strong_convexity_modulus

    def stabilizer_kind_x(self) -> StabilizerKind:
        dual = _dual_tag(self.dgf_y.norm_tag)
        if dual not in _DUAL_TO_STABILIZER:
            raise ConfigurationError(f"no prox for a squared {dual.value} stabilizer")
        return _DUAL_TO_STABILIZER[dual]

    def stabilizer_kind_y(self) -> StabilizerKind:
        dual = _dual_tag(self.dgf_x.norm_tag)
        if dual not in _DUAL_TO_STABILIZER:
            raise ConfigurationError(f"no prox for a squared {dual.value} stabilizer")
        return _DUAL_TO_STABILIZER[dual]

    @classmethod
    def euclidean(cls, m: int, n: int) -> "GeometryPair":
        return cls(DistanceGenerator.euclidean(np.zeros(m)), DistanceGenerator.euclidean(np.zeros(n)))


def comida_run(problem: SubBilinearProblem, geom: GeometryPair, params: SolverParams, rng=None,
               gap_fn: Callable | None = None) -> RunResult:
    """Composite-objective mirror descent-ascent in the geometry ``geom``."""
    if params.eta_x <= 0 or params.eta_y <= 0:
        raise ParameterError("step sizes must be positive")
    x1, y1 = params.x_init.copy(), params.y_init.copy()
    if x1.size != problem.dim_x or y1.size != problem.dim_y:
        raise ValueError("initial points do not match the problem dimensions")
    stab_x = Stabilizer(params.rho_x, x1, geom.stabilizer_kind_x())
    stab_y = Stabilizer(params.rho_y, y1, geom.stabilizer_kind_y())
    gen, seed = make_rng(rng)
    if gap_fn is None:
        gap_fn = saddle_gap_fn(problem.game) if problem.game is not None else (lambda a, b: float("nan"))
    T = params.horizon_T
    x, y = x1.copy(), y1.copy()
    xs, ys = np.zeros_like(x), np.zeros_like(y)
    cps = set(params.checkpoints)
    trace = []
    queries = 0
    max_sq = 0.0
    for t in range(1, T + 1):
        xs += x
        ys += y
        max_sq = max(max_sq, float(x @ x + y @ y))
        sample = problem.oracle(x, y, gen)
        queries += sample.queries_used
        gx, gy = sample.g_x_tilde, sample.g_y_tilde
        x_new = composite_prox(geom.dgf_x, x, gx, params.eta_x, stab_x)
        # ascent step for y: minimize -<y, g_y> + stabilizer + divergence
        y_new = composite_prox(geom.dgf_y, y, -gy, params.eta_y, stab_y)
        if t in cps:
            trace.append(TraceRecord(t, float(np.linalg.norm(x - x1)), float(np.linalg.norm(y - y1)),
                                     float(np.linalg.norm(gx)), float(np.linalg.norm(gy)),
                                     float(gap_fn(xs / t, ys / t))))
        x_last, y_last = x, y
        x, y = x_new, y_new
    return RunResult(xs / T, ys / T, trace, seed, queries, x_last=x_last.copy(), y_last=y_last.copy(),
                     max_iterate_norm=float(np.sqrt(max_sq)))


# ---------------------------------------------------------------------------
# tuning and certified bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tuning:
    eta_x: float
    eta_y: float
    rho_x: float
    rho_y: float

    def params(self, T: int, x_init, y_init, checkpoints=None) -> SolverParams:
        return SolverParams(self.eta_x, self.eta_y, self.rho_x, self.rho_y, T, x_init, y_init, checkpoints)


def tune_theorem1(L_M: float, T: int) -> Tuning:
    if not L_M > 0 or T < 1:
        raise ParameterError("need L_M > 0 and T >= 1")
    eta = 1.0 / (L_M * np.sqrt(T))
    return Tuning(eta, eta, 2 * eta * L_M ** 2, 2 * eta * L_M ** 2)


def tune_corollary1(L: float, gamma_x: float, gamma_y: float, T: int) -> Tuning:
    if not (L > 0 and gamma_x > 0 and gamma_y > 0) or T < 1:
        raise ParameterError("need positive L, gamma_x, gamma_y and T >= 1")
    eta = float(np.sqrt(gamma_x * gamma_y / (L * L * T)))
    return Tuning(eta, eta, eta * L * L / gamma_y, eta * L * L / gamma_x)


def theorem2_bound(geom: GeometryPair, L: float, params: SolverParams, comparator) -> float:
    """Certified bound on the expected COMIDA gap against ``comparator``."""
    gx, gy = geom.gamma_x, geom.gamma_y
    if not (np.isclose(params.rho_x, params.eta_y * L * L / gy, rtol=1e-12, atol=0)
            and np.isclose(params.rho_y, params.eta_x * L * L / gx, rtol=1e-12, atol=0)):
        raise ParameterError("parameters violate rho_x = eta_y L^2/gamma_y, rho_y = eta_x L^2/gamma_x")
    xs, ys = (np.asarray(v, dtype=np.float64) for v in comparator)
    x1, y1 = params.x_init, params.y_init
    T = params.horizon_T
    cross_y = dual_norm(ys - y1, geom.dgf_x.norm_tag)
    cross_x = dual_norm(xs - x1, geom.dgf_y.norm_tag)
    return (bregman_divergence(geom.dgf_y, ys, y1) / (params.eta_y * T)
            + params.rho_y * cross_y ** 2 / 2
            + bregman_divergence(geom.dgf_x, xs, x1) / (params.eta_x * T)
            + params.rho_x * cross_x ** 2 / 2
            + L * L * (params.eta_y / (2 * gy) + params.eta_x / (2 * gx)))


def corollary1_display(geom: GeometryPair, L: float, T: int, x_init, y_init, comparator,
                       constant: float = 8.0) -> float:
    """constant * L (D_x(x*, x1) + D_y(y*, y1) + 1) / sqrt(gamma_x gamma_y T)."""
    xs, ys = comparator
    dsum = bregman_divergence(geom.dgf_x, xs, x_init) + bregman_divergence(geom.dgf_y, ys, y_init)
    return constant * L * (dsum + 1.0) / np.sqrt(geom.gamma_x * geom.gamma_y * T)
