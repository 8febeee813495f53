# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Euler-loop kernels for the four-box and six-box simulators.

Each kernel advances the full trajectory in one call, writing the diagnostic
channel rows as it goes.  Row i holds the state at time i*dt (row 0 is the
initial state); noise row i drives the step from row i to row i+1.  The
return value is -1 on success, otherwise the index of the first row whose
state violates the box-state invariants (positive pycnocline below 4000 m,
salinities inside (0, 60) psu, all values finite).

The Python fallback in boxmodel.py evaluates the same formulas in the same
order, so the two engines agree to the last bit on identical inputs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()


cdef inline double up(double flux, double s_src, double s_dst) nogil:
    return flux * (s_src if flux >= 0.0 else s_dst)


def run_fourbox(double[::1] p, double[::1] q, double[::1] t, double[::1] d,
                const double[:, ::1] noise, double[:, ::1] ch, double dt_s, double decay):
    cdef double c_hyd = p[0], area = p[1], k_v = p[2], a_gm = p[3], m_ek = p[4]
    cdef double fw_n_base = p[5], fw_s_base = p[6]
    cdef double v_n = p[7], v_s = p[8], v_tot = p[9]
    cdef double alpha = p[10], beta = p[11], rho0 = p[12], t_ref = p[13], s_ref = p[14]
    cdef double tt_n = p[15], tt_l = p[16], tt_s = p[17]
    cdef Py_ssize_t n_steps = ch.shape[0]
    cdef Py_ssize_t i
    cdef double v_l, v_d, s_n, s_l, s_s, s_d, rho_n, rho_l
    cdef double m_n, m_u, m_eddy, m_s, fw_n, fw_s
    cdef double t1, t2, t3, t4, t5
    cdef double dq_n, dq_l, dq_s, dq_d, dd
    cdef double at_n, at_l, at_s, at_d

    for i in range(n_steps):
        v_l = area * d[0]
        v_d = v_tot - v_n - v_s - v_l
        s_n = q[0] / v_n
        s_l = q[1] / v_l
        s_s = q[2] / v_s
        s_d = q[3] / v_d
        if not (d[0] > 0.0 and d[0] < 4000.0 and v_d > 0.0):
            return i
        if not (s_n > 0.0 and s_n < 60.0 and s_l > 0.0 and s_l < 60.0
                and s_s > 0.0 and s_s < 60.0 and s_d > 0.0 and s_d < 60.0):
            return i
        if not (isfinite(s_n) and isfinite(s_l) and isfinite(s_s) and isfinite(s_d)
                and isfinite(t[0]) and isfinite(t[1]) and isfinite(t[2]) and isfinite(t[3])
                and isfinite(d[0])):
            return i

        rho_n = rho0 * (1.0 - alpha * (t[0] - t_ref) + beta * (s_n - s_ref))
        rho_l = rho0 * (1.0 - alpha * (t[1] - t_ref) + beta * (s_l - s_ref))
        m_n = c_hyd * (rho_n - rho_l) * d[0] * d[0]
        m_u = k_v * area / d[0]
        m_eddy = a_gm * d[0]
        m_s = m_ek - m_eddy

        ch[i, 0] = m_n
        ch[i, 1] = m_u
        ch[i, 2] = m_eddy
        ch[i, 3] = m_s
        ch[i, 4] = d[0]
        ch[i, 5] = t[0]
        ch[i, 6] = t[1]
        ch[i, 7] = t[2]
        ch[i, 8] = s_n
        ch[i, 9] = s_l
        ch[i, 10] = s_s
        if i == n_steps - 1:
            break

        fw_n = fw_n_base + noise[i, 0]
        fw_s = fw_s_base + noise[i, 1]

        t1 = up(m_n, s_l, s_n)
        t2 = up(m_n, s_n, s_d)
        t3 = m_u * s_d
        t4 = up(m_s, s_d, s_s)
        t5 = up(m_s, s_s, s_l)

        dq_n = t1 - t2 - fw_n * s_ref
        dq_s = t4 - t5 - fw_s * s_ref
        dq_l = t3 + t5 - t1 + (fw_n + fw_s) * s_ref
        dq_d = t2 - t3 - t4
        dd = (m_u + m_s - m_n) / area

        at_n = (m_n * (t[1] - t[0]) if m_n >= 0.0 else -m_n * (t[3] - t[0])) / v_n
        at_l = m_u * (t[3] - t[1]) / v_l
        if m_s >= 0.0:
            at_l += m_s * (t[2] - t[1]) / v_l
        if m_n < 0.0:
            at_l += -m_n * (t[0] - t[1]) / v_l
        at_s = (m_s * (t[3] - t[2]) if m_s >= 0.0 else -m_s * (t[1] - t[2])) / v_s
        at_d = 0.0
        if m_n >= 0.0:
            at_d += m_n * (t[0] - t[3]) / v_d
        if m_s < 0.0:
            at_d += -m_s * (t[2] - t[3]) / v_d

        q[0] = q[0] + dt_s * dq_n
        q[1] = q[1] + dt_s * dq_l
        q[2] = q[2] + dt_s * dq_s
        q[3] = q[3] + dt_s * dq_d
        d[0] = d[0] + dt_s * dd
        t[0] = tt_n + (t[0] + dt_s * at_n - tt_n) * decay
        t[1] = tt_l + (t[1] + dt_s * at_l - tt_l) * decay
        t[2] = tt_s + (t[2] + dt_s * at_s - tt_s) * decay
        t[3] = t[3] + dt_s * at_d
    return -1


def run_sixbox(double[::1] p, double[::1] q, double[::1] t, double[::1] d,
               const double[:, ::1] noise, double[:, ::1] ch, double dt_s, double decay):
    cdef double c_a = p[0], c_p = p[1], area_a = p[2], area_p = p[3]
    cdef double k_v = p[4], a_gm = p[5], m_ek = p[6]
    cdef double frac_a = p[7], frac_p = p[8]
    cdef double fw_s_base = p[9], fw_na_base = p[10], fw_np_base = p[11], fw_ib_base = p[12]
    cdef double m_ib = p[13]
    cdef double v_na = p[14], v_np = p[15], v_s = p[16], v_tot = p[17]
    cdef double alpha = p[18], beta = p[19], rho0 = p[20], t_ref = p[21], s_ref = p[22]
    cdef double tt_na = p[23], tt_np = p[24], tt_la = p[25], tt_lp = p[26], tt_s = p[27]
    cdef Py_ssize_t n_steps = ch.shape[0]
    cdef Py_ssize_t i, b
    cdef double v_la, v_lp, v_d
    cdef double s_na, s_np, s_la, s_lp, s_so, s_d
    cdef double rho_na, rho_np, rho_la, rho_lp
    cdef double m_n_a, m_n_p, m_u_a, m_u_p, dbar, m_eddy, m_s
    cdef double fw_so, fw_na, fw_np_, fw_ib
    cdef double t1a, t2a, t1p, t2p, t3a, t3p, t4, t5a, t5p, t6
    cdef double dq_na, dq_np, dq_la, dq_lp, dq_s, dq_d, dd_a, dd_p
    cdef double at_na, at_np, at_la, at_lp, at_s, at_d

    for i in range(n_steps):
        v_la = area_a * d[0]
        v_lp = area_p * d[1]
        v_d = v_tot - v_na - v_np - v_s - v_la - v_lp
        s_na = q[0] / v_na
        s_np = q[1] / v_np
        s_la = q[2] / v_la
        s_lp = q[3] / v_lp
        s_so = q[4] / v_s
        s_d = q[5] / v_d
        if not (d[0] > 0.0 and d[0] < 4000.0 and d[1] > 0.0 and d[1] < 4000.0 and v_d > 0.0):
            return i
        if not (s_na > 0.0 and s_na < 60.0 and s_np > 0.0 and s_np < 60.0
                and s_la > 0.0 and s_la < 60.0 and s_lp > 0.0 and s_lp < 60.0
                and s_so > 0.0 and s_so < 60.0 and s_d > 0.0 and s_d < 60.0):
            return i
        if not (isfinite(s_na) and isfinite(s_np) and isfinite(s_la) and isfinite(s_lp)
                and isfinite(s_so) and isfinite(s_d) and isfinite(d[0]) and isfinite(d[1])
                and isfinite(t[0]) and isfinite(t[1]) and isfinite(t[2]) and isfinite(t[3])
                and isfinite(t[4]) and isfinite(t[5])):
            return i

        rho_na = rho0 * (1.0 - alpha * (t[0] - t_ref) + beta * (s_na - s_ref))
        rho_np = rho0 * (1.0 - alpha * (t[1] - t_ref) + beta * (s_np - s_ref))
        rho_la = rho0 * (1.0 - alpha * (t[2] - t_ref) + beta * (s_la - s_ref))
        rho_lp = rho0 * (1.0 - alpha * (t[3] - t_ref) + beta * (s_lp - s_ref))
        m_n_a = c_a * (rho_na - rho_la) * d[0] * d[0]
        m_n_p = c_p * (rho_np - rho_lp) * d[1] * d[1]
        m_u_a = k_v * area_a / d[0]
        m_u_p = k_v * area_p / d[1]
        dbar = (area_a * d[0] + area_p * d[1]) / (area_a + area_p)
        m_eddy = a_gm * dbar
        m_s = m_ek - m_eddy

        ch[i, 0] = m_n_a
        ch[i, 1] = m_n_p
        ch[i, 2] = m_u_a
        ch[i, 3] = m_u_p
        ch[i, 4] = m_eddy
        ch[i, 5] = m_s
        ch[i, 6] = m_ib
        ch[i, 7] = d[0]
        ch[i, 8] = d[1]
        for b in range(6):
            ch[i, 9 + b] = t[b]
        ch[i, 15] = s_na
        ch[i, 16] = s_np
        ch[i, 17] = s_la
        ch[i, 18] = s_lp
        ch[i, 19] = s_so
        ch[i, 20] = s_d
        if i == n_steps - 1:
            break

        fw_so = fw_s_base + noise[i, 0]
        fw_na = fw_na_base + noise[i, 1]
        fw_np_ = fw_np_base + noise[i, 2]
        fw_ib = fw_ib_base + noise[i, 3]

        t1a = up(m_n_a, s_la, s_na)
        t2a = up(m_n_a, s_na, s_d)
        t1p = up(m_n_p, s_lp, s_np)
        t2p = up(m_n_p, s_np, s_d)
        t3a = m_u_a * s_d
        t3p = m_u_p * s_d
        t4 = up(m_s, s_d, s_so)
        t5a = up(frac_a * m_s, s_so, s_la)
        t5p = up(frac_p * m_s, s_so, s_lp)
        t6 = up(m_ib, s_lp, s_la)

        dq_na = t1a - t2a - fw_na * s_ref
        dq_np = t1p - t2p - fw_np_ * s_ref
        dq_s = t4 - t5a - t5p - fw_so * s_ref
        dq_la = t3a + t5a + t6 - t1a + (fw_na + frac_a * fw_so + fw_ib) * s_ref
        dq_lp = t3p + t5p - t6 - t1p + (fw_np_ + frac_p * fw_so - fw_ib) * s_ref
        dq_d = t2a + t2p - t3a - t3p - t4
        dd_a = (m_u_a + frac_a * m_s + m_ib - m_n_a) / area_a
        dd_p = (m_u_p + frac_p * m_s - m_ib - m_n_p) / area_p

        at_na = (m_n_a * (t[2] - t[0]) if m_n_a >= 0.0 else -m_n_a * (t[5] - t[0])) / v_na
        at_np = (m_n_p * (t[3] - t[1]) if m_n_p >= 0.0 else -m_n_p * (t[5] - t[1])) / v_np
        at_la = m_u_a * (t[5] - t[2]) / v_la
        if m_s >= 0.0:
            at_la += frac_a * m_s * (t[4] - t[2]) / v_la
        if m_ib >= 0.0:
            at_la += m_ib * (t[3] - t[2]) / v_la
        if m_n_a < 0.0:
            at_la += -m_n_a * (t[0] - t[2]) / v_la
        at_lp = m_u_p * (t[5] - t[3]) / v_lp
        if m_s >= 0.0:
            at_lp += frac_p * m_s * (t[4] - t[3]) / v_lp
        if m_ib < 0.0:
            at_lp += -m_ib * (t[2] - t[3]) / v_lp
        if m_n_p < 0.0:
            at_lp += -m_n_p * (t[1] - t[3]) / v_lp
        if m_s >= 0.0:
            at_s = m_s * (t[5] - t[4]) / v_s
        else:
            at_s = -m_s * (frac_a * (t[2] - t[4]) + frac_p * (t[3] - t[4])) / v_s
        at_d = 0.0
        if m_n_a >= 0.0:
            at_d += m_n_a * (t[0] - t[5]) / v_d
        if m_n_p >= 0.0:
            at_d += m_n_p * (t[1] - t[5]) / v_d
        if m_s < 0.0:
            at_d += -m_s * (t[4] - t[5]) / v_d

        q[0] = q[0] + dt_s * dq_na
        q[1] = q[1] + dt_s * dq_np
        q[2] = q[2] + dt_s * dq_la
        q[3] = q[3] + dt_s * dq_lp
        q[4] = q[4] + dt_s * dq_s
        q[5] = q[5] + dt_s * dq_d
        d[0] = d[0] + dt_s * dd_a
        d[1] = d[1] + dt_s * dd_p
        t[0] = tt_na + (t[0] + dt_s * at_na - tt_na) * decay
        t[1] = tt_np + (t[1] + dt_s * at_np - tt_np) * decay
        t[2] = tt_la + (t[2] + dt_s * at_la - tt_la) * decay
        t[3] = tt_lp + (t[3] + dt_s * at_lp - tt_lp) * decay
        t[4] = tt_s + (t[4] + dt_s * at_s - tt_s) * decay
        t[5] = t[5] + dt_s * at_d
    return -1
