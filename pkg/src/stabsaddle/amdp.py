"""Average-reward tabular MDPs: exact oracles, a generative simulator and
the stabilized primal-dual planner.

State-action pairs are flattened s-major, index ``s * A + a``. The planner
solves min over v in R^S, max over mu in the simplex of

    L(mu; v) = <mu, r> + <v, P^T mu - E^T mu>

with a sup-norm-squared stabilizer on v and entropic mirror ascent on mu.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import DomainError, ParameterError, prox_inf_norm_squared_composite, prox_kl_simplex
from .solvers import CHUNK, RunResult, TraceRecord, make_rng, power_of_two_checkpoints

MDP_TRACE_COLUMNS = ("t", "norm_x_dev", "norm_y_dev", "grad_x_norm", "grad_y_norm", "gap_running_avg",
                     "rho_gap", "queries")


class ErgodicityError(ValueError):
    """The chain induced by a policy has no unique stationary distribution."""


class EnumerationGuardError(ValueError):
    pass


@dataclass(frozen=True)
class TabularMdp:
    r: np.ndarray  # (S, A), entries in [0, 1]
    P: np.ndarray  # (S, A, S), rows on the simplex

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.float64)
        P = np.asarray(self.P, dtype=np.float64)
        if r.ndim != 2 or P.shape != (r.shape[0], r.shape[1], r.shape[0]):
            raise ValueError(f"inconsistent shapes r{r.shape}, P{P.shape}")
        if np.any(r < 0) or np.any(r > 1):
            raise ValueError("rewards must lie in [0, 1]")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1) > 1e-12):
            raise ValueError("transition rows must be probability vectors")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "P", P)

    @property
    def S(self) -> int:
        return self.r.shape[0]

    @property
    def A(self) -> int:
        return self.r.shape[1]

    @property
    def r_flat(self) -> np.ndarray:
        return self.r.reshape(-1)

    @property
    def P_flat(self) -> np.ndarray:
        return self.P.reshape(self.S * self.A, self.S)

    @property
    def E(self) -> np.ndarray:
        return np.repeat(np.eye(self.S), self.A, axis=0)

    @property
    def state_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.S, dtype=np.int64), self.A)

    def transition_cdf(self) -> np.ndarray:
        """Row-wise cumulative transition table for inverse-CDF sampling.

        Entries from each row's last reachable state onward are set to 2 so
        a uniform draw never lands on an unreachable trailing state.
        """
        cdf = np.cumsum(self.P_flat, axis=1)
        for i, row in enumerate(self.P_flat):
            last = np.nonzero(row > 0)[0][-1]
            cdf[i, last:] = 2.0
        return np.ascontiguousarray(cdf)

    def validate_ergodic(self, limit: int = 10_000) -> bool:
        """Check every deterministic policy has a unique stationary distribution."""
        if self.A ** self.S > limit:
            raise EnumerationGuardError(f"{self.A}^{self.S} policies exceed the check limit {limit}")
        for pol in deterministic_policies(self.S, self.A):
            stationary_distribution(self, as_policy_table(pol, self.A))
        return True


def random_mdp(S: int, A: int, rng, floor: float = 0.01) -> TabularMdp:
    """Dirichlet(1) transitions with a ``floor / S`` mass added to every entry."""
    rng = np.random.default_rng(rng)
    P = rng.dirichlet(np.ones(S), size=(S, A)) + floor / S
    P /= P.sum(axis=2, keepdims=True)
    r = rng.uniform(0.0, 1.0, size=(S, A))
    return TabularMdp(r, P)


# ---------------------------------------------------------------------------
# policies and exact oracles
# ---------------------------------------------------------------------------


def deterministic_policies(S: int, A: int):
    return itertools.product(range(A), repeat=S)


def as_policy_table(actions, A: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    pi = np.zeros((actions.size, A))
    pi[np.arange(actions.size), actions] = 1.0
    return pi


def _policy(mdp: TabularMdp, pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (mdp.S, mdp.A):
        raise ValueError(f"policy must have shape {(mdp.S, mdp.A)}, got {pi.shape}")
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1) > 1e-10):
        raise ValueError("policy rows must be probability vectors")
    return pi


def policy_transition(mdp: TabularMdp, pi) -> np.ndarray:
    pi = _policy(mdp, pi)
    return np.einsum("sa,sat->st", pi, mdp.P)


def stationary_distribution(mdp: TabularMdp, pi) -> np.ndarray:
    """Unique nu with nu^T P_pi = nu^T and sum(nu) = 1."""
    Ppi = policy_transition(mdp, pi)
    S = mdp.S
    lhs = np.eye(S) - Ppi.T
    if np.linalg.matrix_rank(lhs, tol=1e-10) < S - 1:
        raise ErgodicityError("chain has more than one recurrent class")
    lhs[-1, :] = 1.0
    rhs = np.zeros(S)
    rhs[-1] = 1.0
    try:
        nu = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise ErgodicityError(str(exc)) from exc
    nu = np.where(np.abs(nu) < 1e-15, 0.0, nu)
    if np.any(nu < -1e-12):
        raise ErgodicityError("stationary system produced a negative mass")
    return np.clip(nu, 0.0, None) / np.clip(nu, 0.0, None).sum()


def occupancy_measure(mdp: TabularMdp, pi) -> np.ndarray:
    pi = _policy(mdp, pi)
    nu = stationary_distribution(mdp, pi)
    return (pi * nu[:, None]).reshape(-1)


@dataclass
class ValueAndGain:
    rho: float
    v: np.ndarray
    span: float
    nu: np.ndarray = field(repr=False)


def gain_and_bias(mdp: TabularMdp, pi) -> ValueAndGain:
    """Gain and bias with the normalization <nu, v> = 0.

    v = (I - P_pi + 1 nu^T)^{-1} (r_pi - rho 1); the rank-one term makes the
    system nonsingular and forces <nu, v> = 0.
    """
    pi = _policy(mdp, pi)
    nu = stationary_distribution(mdp, pi)
    Ppi = policy_transition(mdp, pi)
    r_pi = (pi * mdp.r).sum(axis=1)
    mu = (pi * nu[:, None]).reshape(-1)
    rho = float(mu @ mdp.r_flat)
    Z = np.eye(mdp.S) - Ppi + np.outer(np.ones(mdp.S), nu)
    v = np.linalg.solve(Z, r_pi - rho)
    return ValueAndGain(rho, v, float(v.max() - v.min()), nu)


def bellman_residual(mdp: TabularMdp, pi, vg: ValueAndGain) -> float:
    pi = _policy(mdp, pi)
    q = mdp.r - vg.rho + mdp.P @ vg.v
    return float(np.abs((pi * q).sum(axis=1) - vg.v).max())


@dataclass
class OptimalSolution:
    policy: np.ndarray
    rho: float
    mu: np.ndarray
    method: str
    gains: dict | None = field(default=None, repr=False)


def _batch_gains(mdp: TabularMdp, actions: np.ndarray) -> np.ndarray:
    """Gains of a batch of deterministic policies (rows of action indices)."""
    S = mdp.S
    idx = np.arange(S)
    Ppi = mdp.P[idx, actions]  # (B, S, S)
    lhs = np.eye(S) - np.transpose(Ppi, (0, 2, 1))
    lhs[:, -1, :] = 1.0
    rhs = np.zeros((actions.shape[0], S))
    rhs[:, -1] = 1.0
    nu = np.linalg.solve(lhs, rhs[..., None])[..., 0]
    return (nu * mdp.r[idx, actions]).sum(axis=1)


def policy_iteration(mdp: TabularMdp, max_iter: int = 1000) -> np.ndarray:
    """Average-reward policy iteration for unichain MDPs; returns actions."""
    actions = mdp.r.argmax(axis=1)
    for _ in range(max_iter):
        vg = gain_and_bias(mdp, as_policy_table(actions, mdp.A))
        q = mdp.r + mdp.P @ vg.v
        best = q.max(axis=1)
        keep = q[np.arange(mdp.S), actions] >= best - 1e-12
        new = np.where(keep, actions, q.argmax(axis=1))
        if np.array_equal(new, actions):
            return actions
        actions = new
    raise RuntimeError("policy iteration did not converge")


def optimal_policy_oracle(mdp: TabularMdp, guard: int = 10 ** 6,
                          policy_iteration_fallback: bool = False) -> OptimalSolution:
    """Maximal-gain deterministic policy by exhaustive enumeration.

    Instances with more than ``guard`` deterministic policies use policy
    iteration when the fallback is enabled and raise otherwise.
    """
    n_pol = mdp.A ** mdp.S
    if n_pol > guard:
        if not policy_iteration_fallback:
            raise EnumerationGuardError(f"{n_pol} deterministic policies exceed the guard {guard}")
        actions = policy_iteration(mdp)
        pi = as_policy_table(actions, mdp.A)
        return OptimalSolution(pi, gain_and_bias(mdp, pi).rho, occupancy_measure(mdp, pi), "policy_iteration")
    gains = {}
    best_rho, best = -np.inf, None
    pols = deterministic_policies(mdp.S, mdp.A)
    while True:
        batch = np.array(list(itertools.islice(pols, 4096)), dtype=int)
        if batch.size == 0:
            break
        g = _batch_gains(mdp, batch)
        for a, val in zip(map(tuple, batch), g):
            gains[a] = float(val)
        j = int(np.argmax(g))
        if g[j] > best_rho + 1e-13:
            best_rho, best = float(g[j]), batch[j]
    pi = as_policy_table(best, mdp.A)
    return OptimalSolution(pi, gain_and_bias(mdp, pi).rho, occupancy_measure(mdp, pi), "enumeration", gains)


def lagrangian(mdp: TabularMdp, mu, v) -> float:
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if mu.size != mdp.S * mdp.A or v.size != mdp.S:
        raise ValueError("dimension mismatch between mu, v and the MDP")
    flow = mdp.P_flat.T @ mu - mdp.E.T @ mu
    return float(mu @ mdp.r_flat + v @ flow)


def extract_policy(mu_bar, S: int, A: int, min_mass: float = 1e-15) -> np.ndarray:
    """pi(a|s) proportional to mu_bar(s, a); uniform rows where the state has no mass."""
    w = np.asarray(mu_bar, dtype=np.float64).reshape(S, A)
    mass = w.sum(axis=1, keepdims=True)
    empty = mass[:, 0] < min_mass
    pi = np.divide(w, mass, out=np.full_like(w, 1.0 / A), where=~empty[:, None])
    pi[empty] = 1.0 / A
    return pi


def duality_gap_identity(mdp: TabularMdp, mu_bar, v_bar, pi_bar=None, optimum: OptimalSolution | None = None):
    """Both sides of L(mu*, v_bar) - L(mu_bar, v^{pi_bar}) = rho* - rho^{pi_bar}."""
    if pi_bar is None:
        pi_bar = extract_policy(mu_bar, mdp.S, mdp.A)
    optimum = optimum or optimal_policy_oracle(mdp, policy_iteration_fallback=True)
    vg = gain_and_bias(mdp, pi_bar)
    lhs = lagrangian(mdp, optimum.mu, v_bar) - lagrangian(mdp, mu_bar, vg.v)
    rhs = optimum.rho - vg.rho
    return lhs, rhs


# ---------------------------------------------------------------------------
# generative model and gradient estimators
# ---------------------------------------------------------------------------


class GenerativeSimulator:
    """Draws s' ~ P(.|s, a) on demand and counts every draw."""

    def __init__(self, mdp: TabularMdp, rng=None):
        self.mdp = mdp
        self.rng, self.seed = make_rng(rng)
        self.query_count = 0
        self.cdf = mdp.transition_cdf()

    def next_state(self, s: int, a: int) -> int:
        self.query_count += 1
        return kernels.first_above(self.cdf[s * self.mdp.A + a], self.rng.random())


def _check_simplex_interior(mu, size):
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    if mu.size != size:
        raise ValueError(f"occupancy measure must have {size} entries")
    if np.any(mu <= 0) or abs(mu.sum() - 1) > 1e-9:
        raise DomainError("occupancy measure must lie strictly inside the simplex")
    return mu


def sample_grad_v(sim: GenerativeSimulator, mu, rng=None) -> np.ndarray:
    """e_{s'} - e_s with (s, a) ~ mu and s' ~ P(.|s, a); one query."""
    mdp = sim.mdp
    mu = _check_simplex_interior(mu, mdp.S * mdp.A)
    rng = rng or sim.rng
    u = rng.random(2)
    i = kernels.sample_index(np.cumsum(mu), u[0])
    s = i // mdp.A
    s_next = kernels.first_above(sim.cdf[i], u[1])
    sim.query_count += 1
    g = np.zeros(mdp.S)
    g[s_next] += 1.0
    g[s] -= 1.0
    return g


def sample_grad_mu(sim: GenerativeSimulator, v, rng=None) -> np.ndarray:
    """r(s,a) + v(s'_{s,a}) - v(s) with one fresh next state per pair; SA queries."""
    mdp = sim.mdp
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size != mdp.S:
        raise ValueError("value vector must have S entries")
    rng = rng or sim.rng
    u = rng.random(mdp.S * mdp.A)
    nxt = (sim.cdf > u[:, None]).argmax(axis=1)
    sim.query_count += mdp.S * mdp.A
    return mdp.r_flat + v[nxt] - v[mdp.state_of]


# ---------------------------------------------------------------------------
# planner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MdpTuning:
    eta_mu: float
    eta_v: float
    rho_v: float


def tune_theorem3(S: int, A: int, T: int, rho_v: float | None = None, eta_mu: float | None = None) -> MdpTuning:
    """eta_mu = sqrt(log(SA) / (S T)), eta_v = sqrt(SA / T), rho_v = 4 eta_mu.

    ``rho_v`` and ``eta_mu`` may be overridden.
    """
    if S < 1 or A < 1 or T < 1:
        raise ParameterError("S, A and T must be positive")
    em = float(np.sqrt(np.log(S * A) / (S * T))) if eta_mu is None else float(eta_mu)
    ev = float(np.sqrt(S * A / T))
    return MdpTuning(em, ev, 4 * em if rho_v is None else float(rho_v))


@dataclass
class MdpRunResult:
    v_avg: np.ndarray
    mu_avg: np.ndarray
    policy: np.ndarray
    run: RunResult


def comida_mdp_run(sim: GenerativeSimulator, eta_v: float, eta_mu: float, rho_v: float, T: int,
                   mu_init=None, checkpoints=None, optimum: OptimalSolution | None = None,
                   evaluate: bool = True, kernel=None) -> MdpRunResult:
    """Run the stabilized primal-dual planner for T rounds with v_1 = 0.

    Each round takes one next-state draw for the v-gradient and SA draws for
    the mu-gradient (SA + 1 queries). With ``evaluate`` the trace carries the
    exact gap rho* - rho of the running-average policy at each checkpoint.
    """
    if not (eta_v > 0 and eta_mu > 0):
        raise ParameterError("step sizes must be positive")
    if rho_v < 0:
        raise ParameterError("rho_v must be nonnegative")
    mdp = sim.mdp
    S, A = mdp.S, mdp.A
    SA = S * A
    kernel = kernel or kernels
    mu1 = np.full(SA, 1.0 / SA) if mu_init is None else _check_simplex_interior(mu_init, SA)
    v = np.zeros(S)
    logmu = np.log(mu1)
    logmu -= logmu.max() + np.log(np.exp(logmu - logmu.max()).sum())
    v_sum, mu_sum = np.zeros(S), np.zeros(SA)
    v_prev, mu_prev = np.zeros(S), mu1.copy()
    cps = sorted(set(power_of_two_checkpoints(T) if checkpoints is None else checkpoints))
    if cps and (cps[0] < 1 or cps[-1] > T):
        raise ParameterError("checkpoints must lie in [1, T]")
    if evaluate and optimum is None:
        optimum = optimal_policy_oracle(mdp, policy_iteration_fallback=True)
    r, cdf, state_of = mdp.r_flat.copy(), sim.cdf, mdp.state_of
    trace = []
    done = 0
    vmax = 0.0
    q0 = sim.query_count
    while done < T:
        stop = min(done + CHUNK, T)
        if cps and cps[0] <= stop:
            stop = cps[0]
        k = stop - done
        U = sim.rng.random((k, SA + 2))
        gv_sq, gmu_inf, vm = kernel.mdp_chunk(r, cdf, state_of, v, logmu, v_sum, mu_sum, v_prev, mu_prev,
                                              eta_v, eta_mu, rho_v, U, k)
        vmax = max(vmax, vm)
        sim.query_count += k * (SA + 1)
        done = stop
        if cps and cps[0] == done:
            cps.pop(0)
            extra = {"queries": sim.query_count - q0, "rho_gap": float("nan")}
            gap = float("nan")
            if evaluate:
                mu_avg, v_avg = mu_sum / done, v_sum / done
                try:
                    pi_bar = extract_policy(mu_avg, S, A)
                    vg = gain_and_bias(mdp, pi_bar)
                    extra["rho_gap"] = optimum.rho - vg.rho
                    gap = lagrangian(mdp, optimum.mu, v_avg) - lagrangian(mdp, mu_avg, vg.v)
                except ErgodicityError:
                    pass
            trace.append(TraceRecord(done, float(np.linalg.norm(v_prev)),
                                     float(np.linalg.norm(mu_prev - mu1)),
                                     float(np.sqrt(gv_sq)), gmu_inf, gap, extra))
    v_avg, mu_avg = v_sum / T, mu_sum / T
    pi = extract_policy(mu_avg, S, A)
    run = RunResult(v_avg, mu_avg, trace, sim.seed, sim.query_count - q0, x_last=v_prev.copy(),
                    y_last=mu_prev.copy(), max_iterate_norm=vmax)
    if evaluate:
        try:
            vg = gain_and_bias(mdp, pi)
            run.extra.update(rho_star=optimum.rho, rho_policy=vg.rho, suboptimality=optimum.rho - vg.rho,
                             bias_span=vg.span)
        except ErgodicityError:
            pass
    return MdpRunResult(v_avg, mu_avg, pi, run)


def comida_mdp_reference(sim: GenerativeSimulator, eta_v: float, eta_mu: float, rho_v: float, T: int,
                         mu_init=None):
    """Round-by-round planner built from the public estimators and prox steps.

    Consumes the simulator's stream exactly as :func:`comida_mdp_run`; used
    to cross-check the kernels.
    """
    mdp = sim.mdp
    SA = mdp.S * mdp.A
    mu = np.full(SA, 1.0 / SA) if mu_init is None else np.asarray(mu_init, dtype=np.float64)
    v = np.zeros(mdp.S)
    v_sum, mu_sum = np.zeros(mdp.S), np.zeros(SA)
    for _ in range(T):
        v_sum += v
        mu_sum += mu
        gv = sample_grad_v(sim, mu)
        v_next = prox_inf_norm_squared_composite(v, gv, eta_v, rho_v)
        gmu = sample_grad_mu(sim, v)
        mu = prox_kl_simplex(mu, -gmu, eta_mu)
        v = v_next
    return v_sum / T, mu_sum / T


# ---------------------------------------------------------------------------
# simulation oracles and serialization
# ---------------------------------------------------------------------------


def simulate_policy(mdp: TabularMdp, pi, steps: int, rng, s0: int = 0):
    """Empirical state frequencies and average reward of a long trajectory.

    The chain runs on state-action pairs: from (s, a) draw s' ~ P(.|s, a)
    and then a' ~ pi(.|s').
    """
    pi = _policy(mdp, pi)
    gen, _ = make_rng(rng)
    S, A = mdp.S, mdp.A
    K = mdp.P_flat[:, :, None] * pi[None, :, :]  # (SA, S, A)
    K = K.reshape(S * A, S * A)
    cdf = np.cumsum(K, axis=1)
    for i, row in enumerate(K):
        cdf[i, np.nonzero(row > 0)[0][-1]:] = 2.0
    a0 = kernels.first_above(np.cumsum(pi[s0]), gen.random() * pi[s0].sum())
    counts, total = kernels.simulate_chain(np.ascontiguousarray(cdf), mdp.r_flat.copy(), s0 * A + a0,
                                           gen.random(steps))
    freq = counts.reshape(S, A).sum(axis=1) / steps
    return freq, total / steps


def mdp_to_dict(mdp: TabularMdp) -> dict:
    return {"S": mdp.S, "A": mdp.A, "r": mdp.r_flat.tolist(), "P": mdp.P_flat.reshape(-1).tolist()}


def mdp_from_dict(doc: dict) -> TabularMdp:
    try:
        S, A = int(doc["S"]), int(doc["A"])
        r = np.asarray(doc["r"], dtype=np.float64).reshape(S, A)
        P = np.asarray(doc["P"], dtype=np.float64).reshape(S, A, S)
    except (KeyError, ValueError, TypeError) as exc:
        raise ValueError(f"malformed MDP document: {exc}") from exc
    return TabularMdp(r, P)


def dump_mdp(path, mdp: TabularMdp):
    with open(path, "w") as fh:
        json.dump(mdp_to_dict(mdp), fh, indent=2)


def load_mdp(path) -> TabularMdp:
    with open(path) as fh:
        return mdp_from_dict(json.load(fh))
