"""Pure-Python reference kernels.

Same signatures and arithmetic as the compiled ``_kernels`` module; used
when the extension is unavailable or ``STABSADDLE_PURE_PYTHON`` is set.
"""
import numpy as np


def first_above(row, target):
    """First index with ``row[i] > target``, clamped to the last index."""
    i = int(np.searchsorted(row, target, side="right"))
    return min(i, row.shape[0] - 1)


def sample_index(cum, u):
    """First index whose cumulative weight exceeds ``u * cum[-1]``."""
    return first_above(cum, u * cum[-1])


def bilinear_chunk(M, b, c, x, y, x_sum, y_sum, x_prev, y_prev, x_center, y_center,
                   eta_x, eta_y, rho_x, rho_y, xi_x, xi_y, xi_b, xi_c, k):
    """Advance k simultaneous stabilized gradient rounds in place.

    Returns (|g_x| of the last round, |g_y| of the last round, max |z_t|^2).
    """
    rex = rho_x * eta_x
    rey = rho_y * eta_y
    cx = rex * x_center
    cy = rey * y_center
    max_sq = 0.0
    gx_norm = gy_norm = 0.0
    for t in range(k):
        x_prev[:] = x
        y_prev[:] = y
        x_sum += x
        y_sum += y
        max_sq = max(max_sq, float(x @ x + y @ y))
        Mx = M if xi_x is None else M + xi_x[t]
        My = M if xi_y is None else M + xi_y[t]
        gx = Mx @ y + b
        if xi_b is not None:
            gx += xi_b[t]
        gy = My.T @ x - c
        if xi_c is not None:
            gy -= xi_c[t]
        x[:] = (x - eta_x * gx) / (1.0 + rex) + cx / (1.0 + rex)
        y[:] = (y + eta_y * gy) / (1.0 + rey) + cy / (1.0 + rey)
        gx_norm = float(np.sqrt(gx @ gx))
        gy_norm = float(np.sqrt(gy @ gy))
    return gx_norm, gy_norm, max_sq


def inf_sq_clip_level(z, lam):
    u = np.sort(np.abs(z))[::-1]
    if u[0] == 0.0:
        return 0.0
    csum = np.cumsum(u)
    tau = csum / (2.0 * lam + np.arange(1, u.size + 1))
    return float(tau[np.nonzero(u > tau)[0][-1]])


def mdp_chunk(r, cdf, state_of, v, logmu, v_sum, mu_sum, v_prev, mu_prev, eta_v, eta_mu, rho_v, U, k):
    """Advance k COMIDA-MDP rounds in place.

    Row t of ``U`` holds SA + 2 uniforms: the (s, a) draw, the next-state
    draw for it, then one next-state draw per state-action pair.
    Returns (|g_v|^2, |g_mu|_inf, max |v_t|_inf) for the chunk.
    """
    SA = r.shape[0]
    lam = eta_v * rho_v
    gv_sq = gmu_inf = vmax = 0.0
    rows = np.arange(SA)
    for t in range(k):
        mu = np.exp(logmu)
        mu_sum += mu
        v_sum += v
        mu_prev[:] = mu
        v_prev[:] = v
        vmax = max(vmax, float(np.abs(v).max()))
        u = U[t]
        i = sample_index(np.cumsum(mu), u[0])
        s = state_of[i]
        s_next = first_above(cdf[i], u[1])
        gv = np.zeros_like(v)
        gv[s_next] += 1.0
        gv[s] -= 1.0
        z = v - eta_v * gv
        if lam > 0:
            tau = inf_sq_clip_level(z, lam)
            z = np.clip(z, -tau, tau)
        nxt = (cdf > u[2:, None]).argmax(axis=1)
        gmu = r + v[nxt] - v[state_of[rows]]
        logmu += eta_mu * gmu
        top = logmu.max()
        logmu -= top + np.log(np.exp(logmu - top).sum())
        v[:] = z
        gv_sq = float(gv @ gv)
        gmu_inf = float(np.abs(gmu).max())
    return gv_sq, gmu_inf, vmax


def simulate_chain(cdf, rewards, s0, U):
    """Run a Markov chain for len(U) steps; return visit counts and reward sum."""
    S = cdf.shape[0]
    counts = np.zeros(S, dtype=np.int64)
    total = 0.0
    s = s0
    for u in U:
        counts[s] += 1
        total += rewards[s]
        s = first_above(cdf[s], u)
    return counts, total
