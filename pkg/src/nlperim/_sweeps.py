"""Jitted pair sweeps over (interior cell, lattice offset).

Every parallel kernel accumulates into per-cell slots only; the final
reduction over cells happens outside in a fixed order (numpy pairwise sum),
so results are bitwise deterministic regardless of thread count.

The ``safe`` variants skip per-axis bounds checks; they are valid only when
every interior cell sees the whole offset table inside the lattice (compact
kernel, adequate bounding-box margin). The ``checked`` variants bound-check
each neighbor and treat out-of-lattice neighbors as absent (their
contribution is covered by the analytic tail bound).
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True, fastmath=False)
def abs_sweep_safe(u, tagf, base, offflat, wts, out_int, out_all):
    n = base.shape[0]
    m = offflat.shape[0]
    for i in prange(n):
        acc_i = 0.0
        acc_a = 0.0
        bi = base[i]
        ui = u[bi]
        for o in range(m):
            j = bi + offflat[o]
            wd = wts[o] * abs(u[j] - ui)
            acc_a += wd
            acc_i += wd * tagf[j]
        out_int[i] = acc_i
        out_all[i] = acc_a


@njit(cache=True, parallel=True, fastmath=False)
def abs_sweep_checked(u, tagf, idx, base, shape, offs, offflat, wts, out_int, out_all):
    n = base.shape[0]
    m = offflat.shape[0]
    d = idx.shape[1]
    for i in prange(n):
        acc_i = 0.0
        acc_a = 0.0
        bi = base[i]
        ui = u[bi]
        for o in range(m):
            ok = True
            for ax in range(d):
                t = idx[i, ax] + offs[o, ax]
                if t < 0 or t >= shape[ax]:
                    ok = False
                    break
            if ok:
                j = bi + offflat[o]
                wd = wts[o] * abs(u[j] - ui)
                acc_a += wd
                acc_i += wd * tagf[j]
        out_int[i] = acc_i
        out_all[i] = acc_a


@njit(cache=True, parallel=True, fastmath=False)
def huber_sweep_safe(u, tagf, base, offflat, wts, delta, out_int, out_all, out_grad):
    n = base.shape[0]
    m = offflat.shape[0]
    inv = 1.0 / delta
    for i in prange(n):
        acc_i = 0.0
        acc_a = 0.0
        g = 0.0
        bi = base[i]
        ui = u[bi]
        for o in range(m):
            j = bi + offflat[o]
            du = u[j] - ui
            w = wts[o]
            ad = abs(du)
            t = min(ad, delta)
            hv = t * (ad - 0.5 * t) * inv
            hp = max(-1.0, min(1.0, du * inv))
            g -= w * hp
            wh = w * hv
            acc_a += wh
            acc_i += wh * tagf[j]
        out_int[i] = acc_i
        out_all[i] = acc_a
        out_grad[i] = g


@njit(cache=True, parallel=True, fastmath=False)
def huber_sweep_checked(u, tagf, idx, base, shape, offs, offflat, wts, delta, out_int, out_all, out_grad):
    n = base.shape[0]
    m = offflat.shape[0]
    d = idx.shape[1]
    inv = 1.0 / delta
    for i in prange(n):
        acc_i = 0.0
        acc_a = 0.0
        g = 0.0
        bi = base[i]
        ui = u[bi]
        for o in range(m):
            ok = True
            for ax in range(d):
                t = idx[i, ax] + offs[o, ax]
                if t < 0 or t >= shape[ax]:
                    ok = False
                    break
            if ok:
                j = bi + offflat[o]
                du = u[j] - ui
                w = wts[o]
                ad = abs(du)
                tt = min(ad, delta)
                hv = tt * (ad - 0.5 * tt) * inv
                hp = max(-1.0, min(1.0, du * inv))
                g -= w * hp
                wh = w * hv
                acc_a += wh
                acc_i += wh * tagf[j]
        out_int[i] = acc_i
        out_all[i] = acc_a
        out_grad[i] = g


@njit(cache=True, parallel=True, fastmath=False)
def signed_sweep_checked(v, datum, tagf, idx, base, shape, offs, offflat, wts, sgn,
                         out_a, out_ball, out_bint, out_b0):
    """Per-cell sums entering the calibration certificate, for offset-form zeta.

    out_a[i]    = sum_{y interior} W s (v(y) - v(x))
    out_ball[i] = sum_{y in lattice} W s
    out_bint[i] = sum_{y interior} W s
    out_b0[i]   = sum_{y exterior} W s datum(y)
    """
    n = base.shape[0]
    m = offflat.shape[0]
    d = idx.shape[1]
    for i in prange(n):
        acc_a = 0.0
        acc_ball = 0.0
        acc_bint = 0.0
        acc_b0 = 0.0
        bi = base[i]
        vi = v[bi]
        for o in range(m):
            ok = True
            for ax in range(d):
                t = idx[i, ax] + offs[o, ax]
                if t < 0 or t >= shape[ax]:
                    ok = False
                    break
            if ok:
                j = bi + offflat[o]
                ws = wts[o] * sgn[o]
                tj = tagf[j]
                acc_ball += ws
                acc_bint += ws * tj
                acc_a += ws * (v[j] - vi) * tj
                acc_b0 += ws * datum[j] * (1.0 - tj)
        out_a[i] = acc_a
        out_ball[i] = acc_ball
        out_bint[i] = acc_bint
        out_b0[i] = acc_b0


@njit(cache=True, parallel=True, fastmath=False)
def normal_sweep_checked(u, tagf, idx, base, shape, offs, offflat, wts, sgn, tol,
                         out_viol, out_tot, out_worst, out_worst_o):
    """Normal-condition defects |du| - zeta*du over kernel-support pairs.

    Pairs are (x interior, y any tag) with u(x) != u(y) and W > 0; counts are
    per ordered pair. Tracks the worst defect per cell (offset index in
    out_worst_o, -1 when no pair differs).
    """
    n = base.shape[0]
    m = offflat.shape[0]
    d = idx.shape[1]
    for i in prange(n):
        viol = 0.0
        tot = 0.0
        worst = 0.0
        worst_o = -1
        bi = base[i]
        ui = u[bi]
        for o in range(m):
            ok = True
            for ax in range(d):
                t = idx[i, ax] + offs[o, ax]
                if t < 0 or t >= shape[ax]:
                    ok = False
                    break
            if ok and wts[o] > 0.0:
                j = bi + offflat[o]
                du = u[j] - ui
                if du != 0.0:
                    tot += 1.0
                    defect = abs(du) - sgn[o] * du
                    if defect > tol:
                        viol += 1.0
                    if defect > worst:
                        worst = defect
                        worst_o = o
        out_viol[i] = viol
        out_tot[i] = tot
        out_worst[i] = worst
        out_worst_o[i] = worst_o


@njit(cache=True, fastmath=False)
def coarea_sweep_checked(lev, tagf, idx, base, shape, offs, offflat, wts, diff_int, diff_all):
    """Difference-array accumulation of Per_K({u > t}) across level gaps.

    A pair with level indices (a, b), a < b, straddles exactly the thresholds
    t in [v_a, v_b); it adds its weight on that index range. Serial: the
    scatter updates would race under prange.
    """
    n = base.shape[0]
    m = offflat.shape[0]
    d = idx.shape[1]
    for i in range(n):
        bi = base[i]
        li = lev[bi]
        for o in range(m):
            ok = True
            for ax in range(d):
                t = idx[i, ax] + offs[o, ax]
                if t < 0 or t >= shape[ax]:
                    ok = False
                    break
            if ok:
                j = bi + offflat[o]
                lj = lev[j]
                if lj != li:
                    if lj < li:
                        a = lj
                        b = li
                    else:
                        a = li
                        b = lj
                    w = wts[o]
                    diff_all[a] += w
                    diff_all[b] -= w
                    if tagf[j] == 1.0:
                        diff_int[a] += w
                        diff_int[b] -= w
