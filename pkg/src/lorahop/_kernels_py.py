"""Pure-Python fallback for the hot per-event kernels.

Mirrors ``_kernels.pyx`` operation for operation; both use libm's
``sqrt``/``log10`` on IEEE doubles with the same expression order, so the
two backends produce bit-identical results.
"""

import math

BACKEND = "pure"


def positions_at(sample_t, sample_x, sample_y, offsets, counts,
                 appear_ms, disappear_ms, t_ms,
                 out_x, out_y, out_active):
    """Interpolate every trace at time ``t_ms`` (fixed-point milliseconds).

    Devices outside their active window get ``out_active[i] = 0`` and their
    position entries are left untouched.
    """
    n = len(offsets)
    for i in range(n):
        if t_ms < appear_ms[i] or t_ms > disappear_ms[i]:
            out_active[i] = 0
            continue
        out_active[i] = 1
        base = int(offsets[i])
        cnt = int(counts[i])
        t0 = int(sample_t[base])
        t_last = int(sample_t[base + cnt - 1])
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
        # invariant: sample_t[lo] <= t_ms < sample_t[hi]
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if int(sample_t[mid]) <= t_ms:
                lo = mid
            else:
                hi = mid
        ta = int(sample_t[lo])
        tb = int(sample_t[hi])
        if t_ms == ta:
            out_x[i] = sample_x[lo]
            out_y[i] = sample_y[lo]
            continue
        frac = float(t_ms - ta) / float(tb - ta)
        xa = float(sample_x[lo])
        ya = float(sample_y[lo])
        out_x[i] = xa + (float(sample_x[hi]) - xa) * frac
        out_y[i] = ya + (float(sample_y[hi]) - ya) * frac


def link_scan(x0, y0, xs, ys, active, ref_dist, ref_loss, ploss_exp, tx_dbm,
              out_dist, out_rssi):
    """Distance and shadowing-free RSSI from (x0, y0) to every active point.

    Inactive points get distance +inf and RSSI -inf. Zero distance is
    clamped to the reference distance (co-located radios).
    """
    n = len(xs)
    inf = math.inf
    for j in range(n):
        if not active[j]:
            out_dist[j] = inf
            out_rssi[j] = -inf
            continue
        dx = float(xs[j]) - x0
        dy = float(ys[j]) - y0
        d = math.sqrt(dx * dx + dy * dy)
        out_dist[j] = d
        if d == 0.0:
            d = ref_dist
        out_rssi[j] = tx_dbm - (ref_loss + 10.0 * ploss_exp * math.log10(d / ref_dist))
