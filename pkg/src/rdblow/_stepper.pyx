# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled 1D time stepping kernel (hot loop of the pathwise solver).

Semantics mirror ``_stepper_py.run_block_1d``; the parity test keeps the
two backends honest against each other.
"""

from libc.math cimport exp, pow, fabs, isfinite

DONE = 0
BLOWUP = 1
COLLAPSE = 2
FAULT = 3
BUDGET = 4

cdef int _DONE = 0
cdef int _BLOWUP = 1
cdef int _COLLAPSE = 2
cdef int _FAULT = 3
cdef int _BUDGET = 4

cdef double CLIP_FLOOR = -1e-12


cdef inline double _pw(double x, double e) nogil:
    if e == 1.0:
        return x
    if e == 2.0:
        return x * x
    return pow(x, e)


def run_block_1d(double[::1] v, double[::1] work, double dx, double lin,
                 double k, double delta, double p, double q, double m, double n,
                 double aq, double ap, double amn,
                 double path_dt, double[::1] path_vals,
                 double t_start, double t_end, double cfl, double safety,
                 double v_max, double dt_min, long max_steps):
    """Advance v in place from t_start to t_end (or until a terminal event).

    Returns (status, t_reached, n_steps, n_clips, n_deep_clips).
    """
    cdef Py_ssize_t nn = v.shape[0]
    cdef Py_ssize_t np_len = path_vals.shape[0]
    cdef double vol = dx * (nn - 1)
    cdef double dt_diff = cfl * dx * dx / 2.0
    cdef double inv_dx2 = 1.0 / (dx * dx)
    cdef double t = t_start
    cdef long steps = 0, clips = 0, deep = 0
    cdef Py_ssize_t i, j
    cdef double b, frac, eq, ep, emn, i_q, i_n, vmax, big, dt_phys, dt
    cdef double lap, react, w, new_max, vi, rem
    cdef int status = _DONE

    with nogil:
        while t < t_end:
            # driving noise, linearly interpolated to the substep
            j = <Py_ssize_t>(t / path_dt)
            if j >= np_len - 1:
                j = np_len - 2
            frac = t / path_dt - j
            b = path_vals[j] + frac * (path_vals[j + 1] - path_vals[j])
            eq = exp(aq * b)
            ep = exp(ap * b)
            emn = exp(amn * b)

            i_q = 0.0
            i_n = 0.0
            vmax = 0.0
            for i in range(1, nn - 1):
                vi = v[i]
                i_q += _pw(vi, q)
                if delta > 0.0:
                    i_n += _pw(vi, n)
                if vi > vmax:
                    vmax = vi
            i_q *= dx
            i_n *= dx
            if not (isfinite(i_q) and isfinite(vmax)):
                status = _FAULT
                break

            big = fabs(lin)
            if vmax > 0.0:
                big += k * p * ep * _pw(vmax, p - 1.0)
                big += q * eq * vol * _pw(vmax, q - 1.0)
                if delta > 0.0:
                    big += delta * emn * n * vol * _pw(vmax, m + n - 1.0)
                    if m > 0.0 and i_n > 0.0:
                        big += delta * emn * m * _pw(vmax, m - 1.0) * i_n
            dt_phys = dt_diff
            if big > 0.0 and safety / big < dt_phys:
                dt_phys = safety / big
            if dt_phys < dt_min:
                status = _COLLAPSE
                break
            rem = t_end - t
            dt = dt_phys if dt_phys < rem else rem

            new_max = 0.0
            for i in range(1, nn - 1):
                vi = v[i]
                lap = (v[i - 1] - 2.0 * vi + v[i + 1]) * inv_dx2
                react = eq * i_q - k * ep * _pw(vi, p)
                if delta > 0.0:
                    react += delta * emn * _pw(vi, m) * i_n
                w = vi + dt * (lap + lin * vi + react)
                if w < 0.0:
                    if w < CLIP_FLOOR:
                        deep += 1
                    else:
                        clips += 1
                    w = 0.0
                work[i] = w
                if w > new_max:
                    new_max = w
            work[0] = 0.0
            work[nn - 1] = 0.0

            if not isfinite(new_max):
                status = _FAULT
                break
            for i in range(nn):
                v[i] = work[i]
            if dt >= rem:
                t = t_end
            else:
                t = t + dt
            steps += 1
            if new_max >= v_max:
                status = _BLOWUP
                break
            if steps >= max_steps:
                status = _BUDGET
                break

    return status, t, steps, clips, deep
