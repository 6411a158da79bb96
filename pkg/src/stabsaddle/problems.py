"""Bilinear games, the noisy first-order oracle and exact gap evaluation.

The objective is f(x, y) = x^T M y + b^T x - c^T y, minimized in x and
maximized in y over the whole space.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import ParameterError


@dataclass(frozen=True)
class BilinearGame:
    M: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=np.float64))
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        if M.ndim != 2 or M.shape != (b.size, c.size):
            raise ValueError(f"shapes do not match: M{M.shape}, b({b.size}), c({c.size})")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("game entries must be finite")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def m(self) -> int:
        return self.M.shape[0]

    @property
    def n(self) -> int:
        return self.M.shape[1]

    def value(self, x, y) -> float:
        x, y = self._check(x, y)
        return float(x @ self.M @ y + self.b @ x - self.c @ y)

    def _check(self, x, y):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if x.size != self.m or y.size != self.n:
            raise ValueError(f"dimension mismatch: game is {self.m}x{self.n}, got x({x.size}), y({y.size})")
        return x, y

    def operator_norm(self) -> float:
        return float(np.linalg.norm(self.M, 2))


def rotation_game(b=(1.0, 0.0), c=(0.0, 2.0)) -> BilinearGame:
    return BilinearGame(np.array([[0.0, 1.0], [-1.0, 0.0]]), b, c)


def random_game(m: int, n: int, rng, low: float = -1.0, high: float = 1.0,
                vectors: bool = True) -> BilinearGame:
    rng = np.random.default_rng(rng)
    M = rng.uniform(low, high, size=(m, n))
    if vectors:
        b = rng.uniform(low, high, size=m)
        c = rng.uniform(low, high, size=n)
    else:
        b, c = np.zeros(m), np.zeros(n)
    return BilinearGame(M, b, c)


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

_DISTRIBUTIONS = ("sign", "uniform")


@dataclass(frozen=True)
class NoiseModel:
    """Entrywise bounded perturbations of M, b and c.

    ``sign`` draws each entry as +-amplitude with equal probability,
    ``uniform`` draws it from [-amplitude, amplitude]. With ``shared`` the
    same perturbed matrix feeds both players in a round.
    """

    matrix_amplitude: float = 0.0
    b_amplitude: float = 0.0
    c_amplitude: float = 0.0
    distribution: str = "sign"
    shared: bool = True
    L_M: float = 1.0
    L_b: float = 0.0
    L_c: float = 0.0

    def __post_init__(self):
        if self.distribution not in _DISTRIBUTIONS:
            raise ParameterError(f"unknown noise distribution {self.distribution!r}")
        for name in ("matrix_amplitude", "b_amplitude", "c_amplitude", "L_b", "L_c"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")
        if not self.L_M > 0:
            raise ParameterError("L_M must be positive")

    @classmethod
    def noiseless(cls, game: BilinearGame) -> "NoiseModel":
        return cls.entrywise(game)

    @classmethod
    def entrywise(cls, game: BilinearGame, matrix: float = 0.0, b: float = 0.0, c: float = 0.0,
                  distribution: str = "sign", shared: bool = True) -> "NoiseModel":
        """Noise model with certified constants for ``game``.

        L_M = ||M||_op + a sqrt(mn) bounds the operator norm of every sample
        (the perturbation's Frobenius norm is at most a sqrt(mn)); L_b, L_c
        are the exact second moments E||b_hat||^2, E||c_hat||^2.
        """
        var = 1.0 if distribution == "sign" else 1.0 / 3.0
        L_M = game.operator_norm() + matrix * np.sqrt(game.m * game.n)
        L_b = float(game.b @ game.b) + game.m * var * b * b
        L_c = float(game.c @ game.c) + game.n * var * c * c
        return cls(matrix, b, c, distribution, shared, float(L_M), float(L_b), float(L_c))

    @property
    def kind(self) -> str:
        has_m = self.matrix_amplitude > 0
        has_v = self.b_amplitude > 0 or self.c_amplitude > 0
        if has_m and has_v:
            return "entrywise"
        if has_m:
            return "entrywise_matrix"
        if has_v:
            return "entrywise_vector"
        return "noiseless"

    @property
    def is_noiseless(self) -> bool:
        return self.kind == "noiseless"

    def uniforms_per_round(self, m: int, n: int) -> int:
        k = 0
        if self.matrix_amplitude > 0:
            k += m * n if self.shared else 2 * m * n
        if self.b_amplitude > 0:
            k += m
        if self.c_amplitude > 0:
            k += n
        return k

    def _transform(self, u, amplitude):
        if self.distribution == "sign":
            return np.where(u < 0.5, -amplitude, amplitude)
        return amplitude * (2.0 * u - 1.0)

    def perturbations(self, U, m: int, n: int):
        """Map a (rounds, uniforms_per_round) block to (Xi_x, Xi_y, xi_b, xi_c).

        Components with zero amplitude come back as ``None``.
        """
        U = np.atleast_2d(U)
        k = U.shape[0]
        pos = 0
        xi_x = xi_y = xi_b = xi_c = None
        if self.matrix_amplitude > 0:
            xi_x = self._transform(U[:, pos:pos + m * n], self.matrix_amplitude).reshape(k, m, n)
            pos += m * n
            if self.shared:
                xi_y = xi_x
            else:
                xi_y = self._transform(U[:, pos:pos + m * n], self.matrix_amplitude).reshape(k, m, n)
                pos += m * n
        if self.b_amplitude > 0:
            xi_b = self._transform(U[:, pos:pos + m], self.b_amplitude)
            pos += m
        if self.c_amplitude > 0:
            xi_c = self._transform(U[:, pos:pos + n], self.c_amplitude)
            pos += n
        return xi_x, xi_y, xi_b, xi_c


@dataclass
class GradientSample:
    g_x_tilde: np.ndarray
    g_y_tilde: np.ndarray
    queries_used: int = 1


def exact_gradients(game: BilinearGame, x, y):
    x, y = game._check(x, y)
    return game.M @ y + game.b, game.M.T @ x - game.c


def sample_oracle(game: BilinearGame, noise: NoiseModel, x, y, rng) -> GradientSample:
    """One noisy oracle round: g_x = M_hat y + b_hat, g_y = M_hat^T x - c_hat."""
    x, y = game._check(x, y)
    count = noise.uniforms_per_round(game.m, game.n)
    if count == 0:
        gx, gy = exact_gradients(game, x, y)
        return GradientSample(gx, gy)
    u = rng.random(count)
    xi_x, xi_y, xi_b, xi_c = noise.perturbations(u[None, :], game.m, game.n)
    Mx = game.M if xi_x is None else game.M + xi_x[0]
    My = game.M if xi_y is None else game.M + xi_y[0]
    bh = game.b if xi_b is None else game.b + xi_b[0]
    ch = game.c if xi_c is None else game.c + xi_c[0]
    return GradientSample(Mx @ y + bh, My.T @ x - ch)


# ---------------------------------------------------------------------------
# saddle points and gaps
# ---------------------------------------------------------------------------


class NoUniqueSaddle:
    """Returned by :func:`exact_saddle` when M is not square and invertible."""

    def __repr__(self):
        return "NoUniqueSaddle()"

    def __bool__(self):
        return False


NO_UNIQUE_SADDLE = NoUniqueSaddle()


def exact_saddle(game: BilinearGame):
    if game.m != game.n:
        return NO_UNIQUE_SADDLE
    if np.linalg.cond(game.M) > 1e12:
        return NO_UNIQUE_SADDLE
    y_star = np.linalg.solve(game.M, -game.b)
    x_star = np.linalg.solve(game.M.T, game.c)
    return x_star, y_star


def duality_gap(game: BilinearGame, x_bar, y_bar, comparator) -> float:
    """f(x_bar, y*) - f(x*, y_bar) with the exact objective."""
    x_star, y_star = comparator
    return game.value(x_bar, y_star) - game.value(x_star, y_bar)


def restricted_gap(game: BilinearGame, x_bar, y_bar, center, radius: float = 1.0) -> float:
    """Worst duality gap over comparators within ``radius`` of ``center``.

    sup_{|dx|,|dy| <= R} f(x_bar, y~ + dy) - f(x~ + dx, y_bar), in closed form.
    Unlike the gap at the saddle itself, this is positive away from the saddle.
    """
    x_bar, y_bar = game._check(x_bar, y_bar)
    xc, yc = center
    base = duality_gap(game, x_bar, y_bar, (xc, yc))
    return base + radius * (np.linalg.norm(game.M.T @ x_bar - game.c) + np.linalg.norm(game.M @ y_bar + game.b))


def _coupled(a, b):
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def theorem1_bound(game: BilinearGame, noise: NoiseModel, eta_x: float, eta_y: float,
                   rho_x: float, rho_y: float, T: int, x_init, y_init, comparator=None) -> float:
    """Certified upper bound on the expected COGDA gap against ``comparator``.

    Noiseless oracles contribute their exact squared gradients at the initial
    point; noisy ones contribute the declared second-moment bounds.
    """
    L2 = noise.L_M ** 2
    if not (_coupled(rho_y, 2 * eta_x * L2) and _coupled(rho_x, 2 * eta_y * L2)):
        raise ParameterError("stabilization weights violate rho_y = 2 eta_x L_M^2, rho_x = 2 eta_y L_M^2")
    x1, y1 = game._check(x_init, y_init)
    if comparator is None:
        comparator = exact_saddle(game)
        if not comparator:
            raise ParameterError("game has no unique saddle; pass a comparator")
    xs, ys = game._check(*comparator)
    dy, dx = ys - y1, xs - x1
    if noise.is_noiseless:
        gy1 = game.M.T @ x1 - game.c
        gx1 = game.M @ y1 + game.b
        ey, ex = float(gy1 @ gy1), float(gx1 @ gx1)
    else:
        ey = noise.L_c if not np.any(x1) else 2 * L2 * float(x1 @ x1) + 2 * noise.L_c
        ex = noise.L_b if not np.any(y1) else 2 * L2 * float(y1 @ y1) + 2 * noise.L_b
    return ((1 / (2 * eta_y * T) + eta_x * L2) * float(dy @ dy)
            + (1 / (2 * eta_x * T) + eta_y * L2) * float(dx @ dx)
            + eta_y * ey + eta_x * ex)


def theorem1_rate_display(noise: NoiseModel, x_star, y_star, T: int) -> float:
    """(L_M^2 (|x*|^2 + |y*|^2) + L_b + L_c) / (L_M sqrt T), without the O-constant."""
    L = noise.L_M
    sq = float(np.dot(x_star, x_star) + np.dot(y_star, y_star))
    return (L * L * sq + noise.L_b + noise.L_c) / (L * np.sqrt(T))


# ---------------------------------------------------------------------------
# general sub-bilinear problems
# ---------------------------------------------------------------------------


@dataclass
class SubBilinearProblem:
    """Convex-concave objective with a stochastic gradient oracle.

    ``oracle(x, y, rng)`` returns a :class:`GradientSample`; ``l`` and ``L``
    are declared growth constants and are not checked at construction.
    """

    objective: Callable
    oracle: Callable
    dim_x: int
    dim_y: int
    l: float
    L: float
    game: BilinearGame | None = field(default=None, repr=False)


def sub_bilinear_constant(game: BilinearGame, noise: NoiseModel, x_init=None, y_init=None) -> float:
    """An L with E|g_x|^2 <= L^2 (|y - y1|^2 + 1) and the mirrored condition (L2 norms)."""
    x1 = np.zeros(game.m) if x_init is None else np.asarray(x_init, float)
    y1 = np.zeros(game.n) if y_init is None else np.asarray(y_init, float)
    L2 = noise.L_M ** 2
    ex = noise.L_b if not np.any(y1) else 2 * L2 * float(y1 @ y1) + 2 * noise.L_b
    ey = noise.L_c if not np.any(x1) else 2 * L2 * float(x1 @ x1) + 2 * noise.L_c
    return float(np.sqrt(2 * max(L2, ex, ey)))


def as_sub_bilinear(game: BilinearGame, noise: NoiseModel, x_init=None, y_init=None) -> SubBilinearProblem:
    L = sub_bilinear_constant(game, noise, x_init, y_init)
    l = float(np.sqrt(2 * max(game.operator_norm() ** 2, game.b @ game.b, game.c @ game.c)))
    return SubBilinearProblem(
        objective=game.value,
        oracle=lambda x, y, rng: sample_oracle(game, noise, x, y, rng),
        dim_x=game.m, dim_y=game.n, l=max(l, 1e-300), L=L, game=game,
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def game_to_dict(game: BilinearGame, noise: NoiseModel | None = None) -> dict:
    noise = noise or NoiseModel.noiseless(game)
    return {
        "m": game.m,
        "n": game.n,
        "M": game.M.reshape(-1).tolist(),
        "b": game.b.tolist(),
        "c": game.c.tolist(),
        "noise": {
            "kind": noise.kind,
            "amplitudes": {"M": noise.matrix_amplitude, "b": noise.b_amplitude, "c": noise.c_amplitude},
            "distribution": noise.distribution,
            "shared": noise.shared,
            "L_M": noise.L_M,
            "L_b": noise.L_b,
            "L_c": noise.L_c,
        },
    }


def game_from_dict(doc: dict):
    """Inverse of :func:`game_to_dict`; missing constants are certified from the game."""
    try:
        m, n = int(doc["m"]), int(doc["n"])
        M = np.asarray(doc["M"], dtype=np.float64).reshape(m, n)
        game = BilinearGame(M, doc["b"], doc["c"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ValueError(f"malformed game document: {exc}") from exc
    nd = doc.get("noise") or {}
    amps = nd.get("amplitudes", {})
    noise = NoiseModel.entrywise(game, float(amps.get("M", 0.0)), float(amps.get("b", 0.0)),
                                 float(amps.get("c", 0.0)), nd.get("distribution", "sign"),
                                 bool(nd.get("shared", True)))
    declared = {k: float(nd[k]) for k in ("L_M", "L_b", "L_c") if k in nd}
    if declared:
        noise = NoiseModel(noise.matrix_amplitude, noise.b_amplitude, noise.c_amplitude,
                           noise.distribution, noise.shared,
                           declared.get("L_M", noise.L_M), declared.get("L_b", noise.L_b),
                           declared.get("L_c", noise.L_c))
    kind = nd.get("kind")
    if kind is not None and kind != noise.kind:
        raise ValueError(f"noise kind {kind!r} does not match amplitudes ({noise.kind})")
    return game, noise


def dump_game(path, game: BilinearGame, noise: NoiseModel | None = None):
    with open(path, "w") as fh:
        json.dump(game_to_dict(game, noise), fh, indent=2)


def load_game(path):
    with open(path) as fh:
        return game_from_dict(json.load(fh))
