"""Pure-numpy time stepping kernels (fallback for the compiled extension).

Semantics are kept in lockstep with ``_stepper.pyx``: same step-size
rule, same clipping policy, same status codes. The 2D rectangle path
only exists here; the compiled kernel covers the 1D hot loop.
"""

from __future__ import annotations

import numpy as np

DONE = 0
BLOWUP = 1
COLLAPSE = 2
FAULT = 3
BUDGET = 4

_CLIP_FLOOR = -1e-12


def _pow(arr, e):
    if e == 1.0:
        return arr
    if e == 2.0:
        return arr * arr
    return np.power(arr, e)


def _interp_path(path_dt, path_vals, t):
    j = int(t / path_dt)
    if j >= len(path_vals) - 1:
        j = len(path_vals) - 2
    frac = t / path_dt - j
    return path_vals[j] + frac * (path_vals[j + 1] - path_vals[j])


def _stiffness(lin, k, delta, p, q, m, n, eq, ep, emn, vol, vmax, i_n):
    if vmax <= 0.0:
        return abs(lin)
    big = abs(lin)
    big += k * p * ep * vmax ** (p - 1.0)
    big += q * eq * vol * vmax ** (q - 1.0)
    if delta > 0.0:
        big += delta * emn * n * vol * vmax ** (m + n - 1.0)
        if m > 0.0 and i_n > 0.0:
            big += delta * emn * m * vmax ** (m - 1.0) * i_n
    return big


def run_block_1d(v, work, dx, lin, k, delta, p, q, m, n, aq, ap, amn,
                 path_dt, path_vals, t_start, t_end, cfl, safety,
                 v_max, dt_min, max_steps):
    """Advance v in place from t_start to t_end (or until a terminal event).

    Returns (status, t_reached, n_steps, n_clips, n_deep_clips).
    """
    nn = v.shape[0]
    vol = dx * (nn - 1)
    dt_diff = cfl * dx * dx / 2.0
    inv_dx2 = 1.0 / (dx * dx)
    t = t_start
    steps = clips = deep = 0

    inner = slice(1, nn - 1)
    while t < t_end:
        b = _interp_path(path_dt, path_vals, t)
        eq = np.exp(aq * b)
        ep = np.exp(ap * b)
        emn = np.exp(amn * b)

        vi = v[inner]
        i_q = dx * float(_pow(vi, q).sum())
        i_n = dx * float(_pow(vi, n).sum()) if delta > 0.0 else 0.0
        vmax = float(vi.max()) if nn > 2 else 0.0
        if not (np.isfinite(i_q) and np.isfinite(vmax)):
            return FAULT, t, steps, clips, deep

        big = _stiffness(lin, k, delta, p, q, m, n, eq, ep, emn, vol, vmax, i_n)
        dt_phys = dt_diff if big <= 0.0 else min(dt_diff, safety / big)
        if dt_phys < dt_min:
            return COLLAPSE, t, steps, clips, deep
        dt = min(dt_phys, t_end - t)

        lap = (v[:-2] - 2.0 * v[inner] + v[2:]) * inv_dx2
        react = eq * i_q - k * ep * _pow(vi, p)
        if delta > 0.0:
            react = react + delta * emn * _pow(vi, m) * i_n
        work[inner] = vi + dt * (lap + lin * vi + react)
        work[0] = 0.0
        work[-1] = 0.0

        wi = work[inner]
        neg = wi < 0.0
        if neg.any():
            deep_mask = wi < _CLIP_FLOOR
            deep += int(deep_mask.sum())
            clips += int(neg.sum()) - int(deep_mask.sum())
            wi[neg] = 0.0

        new_max = float(wi.max()) if nn > 2 else 0.0
        if not np.isfinite(new_max):
            return FAULT, t, steps, clips, deep
        v[:] = work
        t = t_end if dt >= t_end - t else t + dt
        steps += 1
        if new_max >= v_max:
            return BLOWUP, t, steps, clips, deep
        if steps >= max_steps:
            return BUDGET, t, steps, clips, deep
    return DONE, t, steps, clips, deep


def run_block_2d(v, work, dx, dy, lin, k, delta, p, q, m, n, aq, ap, amn,
                 path_dt, path_vals, t_start, t_end, cfl, safety,
                 v_max, dt_min, max_steps):
    """2D rectangle analogue of run_block_1d (numpy only)."""
    nx, ny = v.shape
    vol_cell = dx * dy
    dt_diff = cfl / (2.0 * (1.0 / (dx * dx) + 1.0 / (dy * dy)))
    vol = vol_cell * (nx - 1) * (ny - 1)
    inv_dx2 = 1.0 / (dx * dx)
    inv_dy2 = 1.0 / (dy * dy)
    t = t_start
    steps = clips = deep = 0

    core = (slice(1, nx - 1), slice(1, ny - 1))
    while t < t_end:
        b = _interp_path(path_dt, path_vals, t)
        eq = np.exp(aq * b)
        ep = np.exp(ap * b)
        emn = np.exp(amn * b)

        vi = v[core]
        i_q = vol_cell * float(_pow(vi, q).sum())
        i_n = vol_cell * float(_pow(vi, n).sum()) if delta > 0.0 else 0.0
        vmax = float(vi.max())
        if not (np.isfinite(i_q) and np.isfinite(vmax)):
            return FAULT, t, steps, clips, deep

        big = _stiffness(lin, k, delta, p, q, m, n, eq, ep, emn, vol, vmax, i_n)
        dt_phys = dt_diff if big <= 0.0 else min(dt_diff, safety / big)
        if dt_phys < dt_min:
            return COLLAPSE, t, steps, clips, deep
        dt = min(dt_phys, t_end - t)

        lap = ((v[:-2, 1:-1] - 2.0 * vi + v[2:, 1:-1]) * inv_dx2
               + (v[1:-1, :-2] - 2.0 * vi + v[1:-1, 2:]) * inv_dy2)
        react = eq * i_q - k * ep * _pow(vi, p)
        if delta > 0.0:
            react = react + delta * emn * _pow(vi, m) * i_n
        work[core] = vi + dt * (lap + lin * vi + react)
        work[0, :] = 0.0
        work[-1, :] = 0.0
        work[:, 0] = 0.0
        work[:, -1] = 0.0

        wi = work[core]
        neg = wi < 0.0
        if neg.any():
            deep_mask = wi < _CLIP_FLOOR
            deep += int(deep_mask.sum())
            clips += int(neg.sum()) - int(deep_mask.sum())
            wi[neg] = 0.0

        new_max = float(wi.max())
        if not np.isfinite(new_max):
            return FAULT, t, steps, clips, deep
        v[:] = work
        t = t_end if dt >= t_end - t else t + dt
        steps += 1
        if new_max >= v_max:
            return BLOWUP, t, steps, clips, deep
        if steps >= max_steps:
            return BUDGET, t, steps, clips, deep
    return DONE, t, steps, clips, deep
