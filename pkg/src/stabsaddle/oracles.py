"""Brute-force and Monte Carlo reference computations.

These deliberately avoid the closed forms used by the library so they can
serve as independent checks of them.
"""
import numpy as np


def inf_sq_objective(v, current, grad, step, weight):
    v = np.asarray(v, dtype=np.float64)
    d = v - current
    return float(v @ grad + weight * np.abs(v).max(initial=0.0) ** 2 + (d @ d) / (2 * step))


def _golden(f, lo, hi, iters=80):
    phi = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
        if b - a < 1e-15 * max(1.0, abs(a)):
            break
    return 0.5 * (a + b)


def brute_force_inf_sq_prox(current, grad, step, weight, grid=2001, sweeps=3):
    """Minimize <v,g> + weight |v|_inf^2 + |v - current|^2 / (2 step) by search.

    Stage one grids the sup-level t (for fixed t the best v is the box
    projection of z = current - step g), zooming in around the best cell.
    Stage two polishes every coordinate of v by golden-section search on
    the full objective.
    """
    current = np.asarray(current, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    z = current - step * grad
    top = float(np.abs(z).max(initial=0.0))
    f = lambda v: inf_sq_objective(v, current, grad, step, weight)
    if top == 0.0:
        return np.zeros_like(z)
    lo, hi = 0.0, top
    for _ in range(8):
        ts = np.linspace(lo, hi, grid)
        V = np.clip(z[None, :], -ts[:, None], ts[:, None])
        D = V - current
        vals = V @ grad + weight * ts ** 2 + (D * D).sum(axis=1) / (2 * step)
        j = int(np.argmin(vals))
        width = ts[1] - ts[0]
        lo, hi = max(0.0, ts[j] - width), min(top, ts[j] + width)
    v = np.clip(z, -ts[j], ts[j])
    span = max(top, 1.0)
    for _ in range(sweeps):
        for i in range(v.size):
            def fi(x, i=i):
                w = v.copy()
                w[i] = x
                return f(w)
            cand = _golden(fi, v[i] - 1e-3 * span, v[i] + 1e-3 * span)
            if fi(cand) < f(v):
                v[i] = cand
    return v


def euclidean_prox_first_order(current, grad, step, weight, center):
    """Solve g + weight (x - c) + (x - current)/step = 0 coordinatewise."""
    current, grad, center = (np.asarray(a, dtype=np.float64) for a in (current, grad, center))
    return (current / step + weight * center - grad) / (1.0 / step + weight)


def mean_within(samples, exact, sigmas=4.0):
    """True when every coordinate's sample mean is within ``sigmas`` standard errors."""
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(n)
    dev = np.abs(mean - exact)
    # zero-variance coordinates must match exactly
    ok = np.where(se > 0, dev <= sigmas * se, dev <= 1e-12)
    return bool(np.all(ok)), dev, se
