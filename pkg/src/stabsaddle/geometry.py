"""Distance-generating functions, Bregman divergences and composite prox steps.

Every prox here solves a problem of the form

    argmin_x  <x, grad> + (stabilizer term) + (1/step) * D(x, current)

for one of the (divergence, stabilizer) pairs the solvers need. All functions
are pure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class GeometryError(ValueError):
    """Base class for domain and parameter errors raised by the prox layer."""


class DomainError(GeometryError):
    pass


class ParameterError(GeometryError):
    pass


class ConfigurationError(GeometryError):
    """Requested (divergence, stabilizer) pair has no implemented prox."""


class NormTag(str, Enum):
    L2 = "L2"
    L1 = "L1"
    LINF = "LInf"
    ANORM = "ANorm"


class StabilizerKind(str, Enum):
    L2_SQUARED = "L2Squared"
    LINF_SQUARED = "LInfSquared"


def _vec(a, name="vector"):
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def _same_dim(*arrays):
    dims = {a.shape[0] for a in arrays}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")


# ---------------------------------------------------------------------------
# distance-generating functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistanceGenerator:
    """A strongly convex function inducing a Bregman divergence.

    Use the constructors :meth:`euclidean`, :meth:`negative_entropy` and
    :meth:`quadratic` rather than building instances by hand.
    """

    kind: str
    dim: int
    strong_convexity_modulus: float
    norm_tag: NormTag
    center: np.ndarray | None = field(default=None, repr=False)
    matrix: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def euclidean(cls, center) -> "DistanceGenerator":
        center = _vec(center, "center")
        return cls("euclidean", center.shape[0], 1.0, NormTag.L2, center=center)

    @classmethod
    def negative_entropy(cls, dim: int) -> "DistanceGenerator":
        # Pinsker: 1-strongly convex w.r.t. L1 on the simplex
        return cls("negative_entropy", int(dim), 1.0, NormTag.L1)

    @classmethod
    def quadratic(cls, A) -> "DistanceGenerator":
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ParameterError("quadratic generator needs a square matrix")
        if not np.allclose(A, A.T, atol=1e-12):
            raise ParameterError("quadratic generator needs a symmetric matrix")
        lam_min = float(np.linalg.eigvalsh(A)[0])
        if lam_min <= 0:
            raise ParameterError("quadratic generator needs a positive-definite matrix")
        return cls("quadratic", A.shape[0], lam_min, NormTag.L2, matrix=A)

    def value(self, p) -> float:
        p = _vec(p)
        if self.kind == "euclidean":
            d = p - self.center
            return 0.5 * float(d @ d)
        if self.kind == "negative_entropy":
            _check_nonnegative(p)
            nz = p > 0
            return float(np.sum(p[nz] * np.log(p[nz])))
        return 0.5 * float(p @ self.matrix @ p)

    def in_domain(self, p) -> bool:
        p = _vec(p)
        if p.shape[0] != self.dim or not np.all(np.isfinite(p)):
            return False
        if self.kind == "negative_entropy":
            return bool(np.all(p > 0))
        return True


def _check_nonnegative(p):
    if np.any(p < 0):
        raise DomainError("negative coordinate outside the entropy domain")


def bregman_divergence(dgf: DistanceGenerator, p, q) -> float:
    """D(p || q) = w(p) - w(q) - <grad w(q), p - q>."""
    p, q = _vec(p, "p"), _vec(q, "q")
    _same_dim(p, q)
    if p.shape[0] != dgf.dim:
        raise ValueError(f"dimension mismatch: generator has {dgf.dim}, got {p.shape[0]}")
    if dgf.kind == "euclidean":
        d = p - q
        return 0.5 * float(d @ d)
    if dgf.kind == "quadratic":
        d = p - q
        return 0.5 * float(d @ dgf.matrix @ d)
    _check_nonnegative(p)
    if np.any(q <= 0):
        raise DomainError("q has a zero coordinate; relative entropy is undefined")
    nz = p > 0
    # generalized KL; reduces to sum p log(p/q) when both lie on the simplex
    val = float(np.sum(p[nz] * np.log(p[nz] / q[nz])) - p.sum() + q.sum())
    return max(val, 0.0)


def norm(v, tag: NormTag, matrix=None) -> float:
    v = _vec(v)
    tag = NormTag(tag)
    if tag is NormTag.L2:
        return float(np.linalg.norm(v))
    if tag is NormTag.L1:
        return float(np.abs(v).sum())
    if tag is NormTag.LINF:
        return float(np.abs(v).max(initial=0.0))
    if matrix is None:
        raise ParameterError("A-norm requires a matrix")
    return float(np.sqrt(max(v @ matrix @ v, 0.0)))


def dual_norm(v, tag: NormTag, matrix=None) -> float:
    """Norm dual to ``tag`` (the A-norm's dual is the inverse-A norm)."""
    tag = NormTag(tag)
    if tag is NormTag.L1:
        return norm(v, NormTag.LINF)
    if tag is NormTag.LINF:
        return norm(v, NormTag.L1)
    if tag is NormTag.ANORM:
        v = _vec(v)
        return float(np.sqrt(max(v @ np.linalg.solve(matrix, v), 0.0)))
    return norm(v, NormTag.L2)


@dataclass
class StrongConvexityReport:
    holds: bool
    violations: list[int]
    worst_slack: float

    def __bool__(self):
        return self.holds


def check_strong_convexity(dgf: DistanceGenerator, norm_tag, gamma: float, trial_pairs,
                           slack: float = 1e-10, matrix=None) -> StrongConvexityReport:
    """Check D(p||q) >= gamma/2 * ||p - q||^2 on every supplied pair."""
    violations = []
    worst = np.inf
    for i, (p, q) in enumerate(trial_pairs):
        d = bregman_divergence(dgf, p, q)
        lower = 0.5 * gamma * norm(np.asarray(p, float) - np.asarray(q, float), norm_tag, matrix) ** 2
        gap = d - lower
        worst = min(worst, gap)
        if gap < -slack:
            violations.append(i)
    return StrongConvexityReport(not violations, violations, float(worst))


# ---------------------------------------------------------------------------
# stabilizers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stabilizer:
    """``weight * 0.5 * ||x - center||^2`` in the L2 or sup norm."""

    weight: float
    center: np.ndarray
    norm_kind: StabilizerKind = StabilizerKind.L2_SQUARED

    def __post_init__(self):
        if self.weight < 0:
            raise ParameterError("stabilizer weight must be nonnegative")
        object.__setattr__(self, "center", _vec(self.center, "center"))
        object.__setattr__(self, "norm_kind", StabilizerKind(self.norm_kind))

    def value(self, x) -> float:
        d = _vec(x) - self.center
        if self.norm_kind is StabilizerKind.L2_SQUARED:
            return 0.5 * self.weight * float(d @ d)
        return 0.5 * self.weight * float(np.abs(d).max(initial=0.0)) ** 2


# ---------------------------------------------------------------------------
# prox steps
# ---------------------------------------------------------------------------


def _check_step(step):
    if not step > 0:
        raise ParameterError(f"step size must be positive, got {step}")


def prox_euclidean_composite(current, grad, step: float, stab: Stabilizer) -> np.ndarray:
    """Closed-form minimizer of <x,g> + rho/2 ||x - c||^2 + 1/(2 step) ||x - current||^2.

    The result is the convex combination of the plain gradient step and the
    stabilizer center, weighted by ``rho * step``.
    """
    current, grad = _vec(current, "current"), _vec(grad, "grad")
    _same_dim(current, grad, stab.center)
    _check_step(step)
    if stab.norm_kind is not StabilizerKind.L2_SQUARED:
        raise ConfigurationError("prox_euclidean_composite needs an L2Squared stabilizer")
    re = stab.weight * step
    return (current - step * grad) / (1.0 + re) + (re * stab.center) / (1.0 + re)


def prox_kl_simplex(current, grad, step: float) -> np.ndarray:
    """Exponentiated-gradient step: argmin_{mu in simplex} <mu,g> + KL(mu||current)/step."""
    current, grad = _vec(current, "current"), _vec(grad, "grad")
    _same_dim(current, grad)
    _check_step(step)
    if np.any(current <= 0):
        raise DomainError("current must lie strictly inside the simplex")
    if not np.all(np.isfinite(grad)):
        raise ParameterError("gradient has non-finite entries")
    # shift by min(grad) keeps every exponent <= 0
    logits = np.log(current) - step * (grad - grad.min())
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def clip_level_inf_norm_squared(z, lam: float) -> float:
    """Clipping level tau of prox_{lam ||.||_inf^2}(z) = clip(z, -tau, tau).

    Obtained from the Moreau identity prox_f(z) = z - prox_{f*}(z) with
    f* = ||.||_1^2 / (4 lam); the soft-threshold of the squared-L1 prox is
    found by sorting |z|.
    """
    u = np.sort(np.abs(z))[::-1]
    if u.size == 0 or u[0] == 0.0:
        return 0.0
    csum = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    tau = csum / (2.0 * lam + k)
    active = np.nonzero(u > tau)[0]
    return float(tau[active[-1]])


def prox_inf_norm_squared_composite(current, grad, step: float, weight: float) -> np.ndarray:
    """Exact minimizer of <v,g> + weight ||v||_inf^2 + 1/(2 step) ||v - current||_2^2."""
    current, grad = _vec(current, "current"), _vec(grad, "grad")
    _same_dim(current, grad)
    _check_step(step)
    if weight < 0:
        raise ParameterError("weight must be nonnegative")
    z = current - step * grad
    if weight == 0:
        return z
    tau = clip_level_inf_norm_squared(z, step * weight)
    return np.clip(z, -tau, tau)


def composite_prox(dgf: DistanceGenerator, current, grad, step: float, stab: Stabilizer) -> np.ndarray:
    """Dispatch argmin <x,g> + stab(x) + D(x, current)/step to the matching solver."""
    _check_step(step)
    if dgf.kind == "euclidean":
        if stab.norm_kind is StabilizerKind.L2_SQUARED:
            return prox_euclidean_composite(current, grad, step, stab)
        shifted = _vec(current) - stab.center
        return prox_inf_norm_squared_composite(shifted, grad, step, 0.5 * stab.weight) + stab.center
    if dgf.kind == "negative_entropy":
        if stab.weight != 0:
            raise ConfigurationError("entropy geometry supports only an inactive stabilizer")
        return prox_kl_simplex(current, grad, step)
    if stab.norm_kind is not StabilizerKind.L2_SQUARED:
        raise ConfigurationError("quadratic geometry supports only L2Squared stabilizers")
    current, grad = _vec(current), _vec(grad)
    _same_dim(current, grad, stab.center)
    A = dgf.matrix
    lhs = A / step + stab.weight * np.eye(A.shape[0])
    rhs = A @ current / step + stab.weight * stab.center - grad
    return np.linalg.solve(lhs, rhs)
