"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--rounds N]
"""
import argparse
import time

import numpy as np

from stabsaddle import amdp, kernels, problems, solvers


def timed(fn, repeat=3):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_bilinear(mod, T):
    g = problems.random_game(10, 10, 5)
    nm = problems.NoiseModel.entrywise(g, 0.1)
    params = solvers.tune_theorem1(nm.L_M, T).params(T, np.zeros(10), np.zeros(10), [T])
    return lambda: solvers.cogda_run(g, nm, params, rng=0, gap_fn=lambda a, b: 0.0, kernel=mod).x_avg


def bench_mdp(mod, T):
    mdp = amdp.random_mdp(4, 2, 100)
    tu = amdp.tune_theorem3(4, 2, T)
    return lambda: amdp.comida_mdp_run(amdp.GenerativeSimulator(mdp, 0), tu.eta_v, tu.eta_mu, tu.rho_v, T,
                                       checkpoints=[T], evaluate=False, kernel=mod).mu_avg


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rounds", type=int, default=50_000)
    args = ap.parse_args()
    mods = kernels.backends()
    if "cython" not in mods:
        print("compiled extension not available; only the Python backend can be timed")
    print(f"{'kernel':<10}{'backend':<10}{'seconds':>10}{'rounds/s':>14}")
    for label, make in (("bilinear", bench_bilinear), ("mdp", bench_mdp)):
        outs = {}
        for name, mod in mods.items():
            secs, outs[name] = timed(make(mod, args.rounds))
            print(f"{label:<10}{name:<10}{secs:>10.3f}{args.rounds / secs:>14.0f}")
        if len(outs) == 2:
            print(f"{label:<10}max |cython - python| = {np.abs(outs['cython'] - outs['python']).max():.2e}")


if __name__ == "__main__":
    main()
