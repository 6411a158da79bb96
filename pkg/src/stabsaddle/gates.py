"""Named acceptance suites.

Each suite runs one end-to-end check at its stated tolerance and returns a
:class:`GateResult`; ``run_gates`` runs a selection in order.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import amdp, geometry, harness, oracles, problems, solvers

ROTATION = dict(b=(1.0, 0.0), c=(0.0, 2.0))
NOISY_GAME_SEED = 5  # first random 10x10 draw with sigma_min(M) >= 0.3
NOISE_AMPLITUDE = 0.1


@dataclass
class GateResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def noisy_game(seed: int = NOISY_GAME_SEED):
    game = problems.random_game(10, 10, seed)
    return game, problems.NoiseModel.entrywise(game, NOISE_AMPLITUDE)


def _zeros(game):
    return np.zeros(game.m), np.zeros(game.n)


def gate_noiseless_certificate():
    game = problems.rotation_game(**ROTATION)
    noise = problems.NoiseModel.noiseless(game)
    x1, y1 = _zeros(game)
    rows, ok = [], True
    for T in (10 ** 3, 10 ** 4, 10 ** 5):
        tu = solvers.tune_theorem1(noise.L_M, T)
        res = solvers.cogda_run(game, noise, tu.params(T, x1, y1, [T]), check_coupling=True)
        gap = res.trace[-1].gap_running_avg
        bound = problems.theorem1_bound(game, noise, tu.eta_x, tu.eta_y, tu.rho_x, tu.rho_y, T, x1, y1)
        ok &= gap <= bound
        rows.append(f"T={T} gap={gap:.3g} bound={bound:.3g}")
    return ok, "; ".join(rows)


def gate_stochastic_certificate(seeds=20, T=10 ** 5):
    game, noise = noisy_game()
    x1, y1 = _zeros(game)
    tu = solvers.tune_theorem1(noise.L_M, T)
    gaps = np.array([solvers.cogda_run(game, noise, tu.params(T, x1, y1, [T]), rng=s).trace[-1].gap_running_avg
                     for s in range(seeds)])
    bound = problems.theorem1_bound(game, noise, tu.eta_x, tu.eta_y, tu.rho_x, tu.rho_y, T, x1, y1)
    se = gaps.std(ddof=1) / np.sqrt(seeds)
    return gaps.mean() <= bound + 3 * se, f"mean gap={gaps.mean():.3g} se={se:.2g} bound={bound:.4g}"


def gate_divergence_contrast(T=1000, eta=0.1):
    game = problems.rotation_game((0.0, 0.0), (0.0, 0.0))
    noise = problems.NoiseModel.noiseless(game)
    x1 = y1 = np.array([1.0, 0.0])
    sg = solvers.sgda_run(game, noise, eta, eta, T, x1, y1, checkpoints=[T], gap_fn=lambda a, b: 0.0)
    zT = float(sg.x_last @ sg.x_last + sg.y_last @ sg.y_last)
    expected = 2.0 * (1 + eta ** 2) ** (T - 1)
    rel = abs(zT / expected - 1)
    ratio = np.sqrt(zT) / np.sqrt(2.0)
    tu = solvers.tune_theorem1(noise.L_M, T)
    co = solvers.cogda_run(game, noise, tu.params(T, x1, y1, [T]), gap_fn=lambda a, b: 0.0)
    cap = 10 * (np.sqrt(2.0) + 1)
    ok = rel <= 1e-6 and ratio > 100 and co.max_iterate_norm <= cap
    return ok, (f"SGDA |z_T|^2 rel.err={rel:.2e} norm ratio={ratio:.1f}; "
                f"COGDA max norm={co.max_iterate_norm:.3f} <= {cap:.3f}")


def gate_rate_shape(seeds=20, exponents=range(10, 18)):
    game, noise = noisy_game()
    saddle = problems.exact_saddle(game)
    x1, y1 = _zeros(game)
    pts = []
    gap_fn = lambda a, b: problems.restricted_gap(game, a, b, saddle)
    for T in (2 ** k for k in exponents):
        tu = solvers.tune_theorem1(noise.L_M, T)
        g = [solvers.cogda_run(game, noise, tu.params(T, x1, y1, [T]), rng=s, gap_fn=gap_fn).trace[-1].gap_running_avg
             for s in range(seeds)]
        pts.append((T, float(np.mean(g))))
    slope, _ = harness.fit_rate_slope(pts)
    return slope <= -0.4, f"slope={slope:.3f} (gap {pts[0][1]:.3g} -> {pts[-1][1]:.3g})"


def gate_cogda_comida_equivalence(T=5000):
    game, noise = noisy_game()
    x1, y1 = _zeros(game)
    tu = solvers.tune_theorem1(noise.L_M, T)
    params = tu.params(T, x1, y1)
    a = solvers.cogda_run(game, noise, params, rng=7)
    b = solvers.comida_run(problems.as_sub_bilinear(game, noise), solvers.GeometryPair.euclidean(game.m, game.n),
                           params, rng=7)
    worst = 0.0
    for ra, rb in zip(a.trace, b.trace):
        worst = max(worst, max(abs(u - v) for u, v in zip(ra.row(solvers.TRACE_COLUMNS)[1:],
                                                          rb.row(solvers.TRACE_COLUMNS)[1:])))
    worst = max(worst, float(np.abs(a.x_avg - b.x_avg).max()), float(np.abs(a.y_avg - b.y_avg).max()))
    same_t = [r.t for r in a.trace] == [r.t for r in b.trace]
    return same_t and worst <= 1e-10, f"max trace difference={worst:.2e} over {len(a.trace)} checkpoints"


def gate_prox_oracles(per_dim=100, kl_instances=1000, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for d in range(1, 6):
        for _ in range(per_dim):
            cur, g = rng.normal(size=d), rng.normal(size=d)
            step, w = rng.uniform(0.05, 2.0), rng.uniform(0.05, 2.0)
            fast = geometry.prox_inf_norm_squared_composite(cur, g, step, w)
            slow = oracles.brute_force_inf_sq_prox(cur, g, step, w)
            worst = max(worst, float(np.abs(fast - slow).max()))
    kl_sum = kl_shift = 0.0
    for _ in range(kl_instances):
        d = int(rng.integers(2, 20))
        cur = rng.dirichlet(np.ones(d))
        g = rng.normal(scale=5.0, size=d)
        step = rng.uniform(0.01, 3.0)
        p = geometry.prox_kl_simplex(cur, g, step)
        q = geometry.prox_kl_simplex(cur, g + rng.normal(scale=10.0), step)
        kl_sum = max(kl_sum, abs(p.sum() - 1))
        kl_shift = max(kl_shift, float(np.abs(p - q).max()))
    ok = worst <= 1e-6 and kl_sum <= 1e-12 and kl_shift <= 1e-12
    return ok, f"inf-prox max diff={worst:.2e}; KL |sum-1|={kl_sum:.1e} shift diff={kl_shift:.1e}"


def gate_duality_identity(n_mdps=25, T=3000):
    worst = 0.0
    for i in range(n_mdps):
        mdp = amdp.random_mdp(4, 3, 1000 + i)
        opt = amdp.optimal_policy_oracle(mdp)
        tu = amdp.tune_theorem3(4, 3, T)
        res = amdp.comida_mdp_run(amdp.GenerativeSimulator(mdp, i), tu.eta_v, tu.eta_mu, tu.rho_v, T,
                                  optimum=opt)
        lhs, rhs = amdp.duality_gap_identity(mdp, res.mu_avg, res.v_avg, optimum=opt)
        worst = max(worst, abs(lhs - rhs))
        # an arbitrary interior point and bias vector as well
        rng = np.random.default_rng(i)
        lhs, rhs = amdp.duality_gap_identity(mdp, rng.dirichlet(np.ones(12)), rng.normal(size=4), optimum=opt)
        worst = max(worst, abs(lhs - rhs))
    return worst <= 1e-8, f"max |lhs - rhs|={worst:.2e} over {n_mdps} MDPs"


def planning_suboptimality(T, seed):
    mdp = amdp.random_mdp(4, 2, 100 + seed)
    tu = amdp.tune_theorem3(4, 2, T)
    res = amdp.comida_mdp_run(amdp.GenerativeSimulator(mdp, seed), tu.eta_v, tu.eta_mu, tu.rho_v, T,
                              checkpoints=[T])
    return res.run.extra["suboptimality"]


def gate_planning_quality(seeds=10, T_short=10 ** 4, T_long=2 * 10 ** 5):
    short = np.median([planning_suboptimality(T_short, s) for s in range(seeds)])
    long = np.median([planning_suboptimality(T_long, s) for s in range(seeds)])
    return long <= 0.1 and long < short, f"median gap T={T_short}: {short:.4f}, T={T_long}: {long:.4f}"


def gate_estimators(N=10 ** 5, seed=0):
    rng = np.random.default_rng(seed)
    msgs, ok = [], True
    mdp = amdp.random_mdp(4, 3, 11)
    sim = amdp.GenerativeSimulator(mdp, seed)
    mu = rng.dirichlet(np.ones(12))
    v = rng.normal(size=4)
    q0 = sim.query_count
    gv = np.array([amdp.sample_grad_v(sim, mu) for _ in range(N)])
    gm = np.array([amdp.sample_grad_mu(sim, v) for _ in range(N)])
    exact_v = mdp.P_flat.T @ mu - mdp.E.T @ mu
    exact_mu = mdp.r_flat + mdp.P_flat @ v - mdp.E @ v
    good_v, dv, _ = oracles.mean_within(gv, exact_v)
    good_mu, dm, _ = oracles.mean_within(gm, exact_mu)
    caps = bool(np.all((gv ** 2).sum(axis=1) <= 2.0) and np.all(np.abs(gm).max(axis=1) <= 1 + 2 * np.abs(v).max()))
    queries = sim.query_count - q0 == N * 13
    ok &= good_v and good_mu and caps and queries
    msgs.append(f"g_v dev={dv.max():.1e} g_mu dev={dm.max():.1e} caps={caps}")

    game, noise = noisy_game()
    x, y = rng.normal(size=10), rng.normal(size=10)
    gen = np.random.default_rng(seed + 1)
    samples = [problems.sample_oracle(game, noise, x, y, gen) for _ in range(N)]
    gx = np.array([s.g_x_tilde for s in samples])
    gy = np.array([s.g_y_tilde for s in samples])
    ex, ey = problems.exact_gradients(game, x, y)
    good_x, dx, _ = oracles.mean_within(gx, ex)
    good_y, dy, _ = oracles.mean_within(gy, ey)
    ok &= good_x and good_y
    msgs.append(f"g_x dev={dx.max():.1e} g_y dev={dy.max():.1e}")

    T = 5000
    tu = amdp.tune_theorem3(4, 3, T)
    sim2 = amdp.GenerativeSimulator(mdp, seed)
    res = amdp.comida_mdp_run(sim2, tu.eta_v, tu.eta_mu, tu.rho_v, T, evaluate=False)
    acct = res.run.queries == T * 13 == sim2.query_count
    ok &= acct
    msgs.append(f"planner queries={res.run.queries} (expected {T * 13})")
    return bool(ok), "; ".join(msgs)


def gate_exact_oracles(steps=10 ** 6):
    rng = np.random.default_rng(3)
    worst_freq = worst_res = 0.0
    for i in range(5):
        mdp = amdp.random_mdp(4, 3, 200 + i)
        pi = rng.dirichlet(np.ones(3), size=4)
        nu = amdp.stationary_distribution(mdp, pi)
        freq, _ = amdp.simulate_policy(mdp, pi, steps, 10 + i)
        worst_freq = max(worst_freq, float(np.abs(freq - nu).max()))
        worst_res = max(worst_res, amdp.bellman_residual(mdp, pi, amdp.gain_and_bias(mdp, pi)))
    agree, checked = True, 0
    for S, A in [(2, 2), (3, 2), (4, 2), (2, 3), (3, 3), (4, 3), (5, 3), (4, 4), (8, 2), (3, 6), (2, 16)]:
        for k in range(4):
            mdp = amdp.random_mdp(S, A, 10_000 * S + 100 * A + k)
            enum = amdp.optimal_policy_oracle(mdp)
            pi = amdp.as_policy_table(amdp.policy_iteration(mdp), A)
            agree &= abs(amdp.gain_and_bias(mdp, pi).rho - enum.rho) <= 1e-10
            checked += 1
    ok = worst_freq <= 1e-2 and worst_res <= 1e-10 and agree
    return ok, (f"stationary vs simulated max diff={worst_freq:.2e}; Bellman residual={worst_res:.1e}; "
                f"policy iteration agrees on {checked} MDPs: {agree}")


GATES = {
    "noiseless_certificate": gate_noiseless_certificate,
    "stochastic_certificate": gate_stochastic_certificate,
    "divergence_contrast": gate_divergence_contrast,
    "rate_shape": gate_rate_shape,
    "cogda_comida_equivalence": gate_cogda_comida_equivalence,
    "prox_oracles": gate_prox_oracles,
    "duality_identity": gate_duality_identity,
    "planning_quality": gate_planning_quality,
    "estimators": gate_estimators,
    "exact_oracles": gate_exact_oracles,
}


def run_gate(name: str) -> GateResult:
    if name not in GATES:
        raise KeyError(f"unknown gate {name!r}; choose from {', '.join(GATES)}")
    t0 = time.perf_counter()
    ok, detail = GATES[name]()
    return GateResult(name, bool(ok), detail, time.perf_counter() - t0)


def run_gates(names=None) -> list[GateResult]:
    return [run_gate(n) for n in (names or list(GATES))]
