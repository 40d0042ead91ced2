# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-path kernels: trace interpolation and pairwise link scans.

Kept in lockstep with ``_kernels_py.py`` (same expression order, libm
sqrt/log10) so switching backends never changes a simulation result.
"""

from libc.math cimport sqrt, log10, INFINITY

BACKEND = "compiled"


def positions_at(const long long[::1] sample_t,
                 const double[::1] sample_x,
                 const double[::1] sample_y,
                 const long long[::1] offsets,
                 const long long[::1] counts,
                 const long long[::1] appear_ms,
                 const long long[::1] disappear_ms,
                 long long t_ms,
                 double[::1] out_x,
                 double[::1] out_y,
                 unsigned char[::1] out_active):
    """Interpolate every trace at time ``t_ms`` (fixed-point milliseconds)."""
    cdef Py_ssize_t n = offsets.shape[0]
    cdef Py_ssize_t i, base, cnt, lo, hi, mid
    cdef long long t0, t_last, ta, tb
    cdef double frac, xa, ya
    for i in range(n):
        if t_ms < appear_ms[i] or t_ms > disappear_ms[i]:
            out_active[i] = 0
            continue
        out_active[i] = 1
        base = <Py_ssize_t> offsets[i]
        cnt = <Py_ssize_t> counts[i]
        t0 = sample_t[base]
        t_last = sample_t[base + cnt - 1]
        if t_ms <= t0:
            out_x[i] = sample_x[base]
            out_y[i] = sample_y[base]
            continue
        if t_ms >= t_last:
            out_x[i] = sample_x[base + cnt - 1]
            out_y[i] = sample_y[base + cnt - 1]
            continue
        lo = base
        hi = base + cnt - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if sample_t[mid] <= t_ms:
                lo = mid
            else:
                hi = mid
        ta = sample_t[lo]
        tb = sample_t[hi]
        if t_ms == ta:
            out_x[i] = sample_x[lo]
            out_y[i] = sample_y[lo]
            continue
        frac = (<double> (t_ms - ta)) / (<double> (tb - ta))
        xa = sample_x[lo]
        ya = sample_y[lo]
        out_x[i] = xa + (sample_x[hi] - xa) * frac
        out_y[i] = ya + (sample_y[hi] - ya) * frac


def link_scan(double x0, double y0,
              const double[::1] xs,
              const double[::1] ys,
              const unsigned char[::1] active,
              double ref_dist, double ref_loss, double ploss_exp, double tx_dbm,
              double[::1] out_dist,
              double[::1] out_rssi):
    """Distance and shadowing-free RSSI from (x0, y0) to every active point."""
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t j
    cdef double dx, dy, d
    for j in range(n):
        if not active[j]:
            out_dist[j] = INFINITY
            out_rssi[j] = -INFINITY
            continue
        dx = xs[j] - x0
        dy = ys[j] - y0
        d = sqrt(dx * dx + dy * dy)
        out_dist[j] = d
        if d == 0.0:
            d = ref_dist
        out_rssi[j] = tx_dbm - (ref_loss + 10.0 * ploss_exp * log10(d / ref_dist))
