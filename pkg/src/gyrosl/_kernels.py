"""Numba kernels for cubic B-spline coefficient solves, interpolation and
conservative deposition.

Conventions shared by every kernel:
  * positions are in cell units, g = (x - x0)/dx, so node i sits at g = i;
  * coefficient arrays for bounded axes carry one ghost coefficient on each
    side (w_{-1} stored at index 0), periodic axes carry exactly N;
  * interpolation and deposition use the same 4-tap cubic weights, evaluated
    inline from the fractional offset.
"""

import numba
import numpy as np
from numba import njit

F8 = np.float64


@njit(cache=True, inline="always")
def _bw(u):
    """Cubic B-spline weights for the 4-node stencil at fractional offset u."""
    v = 1.0 - u
    b0 = v * v * v / 6.0
    b3 = u * u * u / 6.0
    b1 = 2.0 / 3.0 - u * u * (1.0 - 0.5 * u)
    b2 = 2.0 / 3.0 - v * v * (1.0 - 0.5 * v)
    return b0, b1, b2, b3


@njit(cache=True, inline="always")
def _wrap(k, n):
    if k >= n:
        return k - n
    if k < 0:
        return k + n
    return k


# ---------------------------------------------------------------------------
# tridiagonal solves (precomputed Thomas factorizations, see bspline.py)
# ---------------------------------------------------------------------------

@njit(cache=True)
def solve_lines_tridiag(rhs, lower, cp, inv_den, out):
    """Solve the factored tridiagonal system along the last axis of rhs."""
    nl, n = rhs.shape
    for l in range(nl):
        out[l, 0] = rhs[l, 0] * inv_den[0]
        for i in range(1, n):
            out[l, i] = (rhs[l, i] - lower[i] * out[l, i - 1]) * inv_den[i]
        for i in range(n - 2, -1, -1):
            out[l, i] -= cp[i] * out[l, i + 1]


@njit(cache=True)
def solve_lines_cyclic(rhs, lower, cp, inv_den, z, vy_den, out):
    """Sherman-Morrison cyclic tridiagonal solve along the last axis."""
    nl, n = rhs.shape
    for l in range(nl):
        out[l, 0] = rhs[l, 0] * inv_den[0]
        for i in range(1, n):
            out[l, i] = (rhs[l, i] - lower[i] * out[l, i - 1]) * inv_den[i]
        for i in range(n - 2, -1, -1):
            out[l, i] -= cp[i] * out[l, i + 1]
        fac = (out[l, 0] - 0.25 * out[l, n - 1]) * vy_den
        for i in range(n):
            out[l, i] -= fac * z[i]


@njit(cache=True)
def build_coeffs_2d(q, t_lower, t_cp, t_invden, t_z, t_vyden,
                    r_lower, r_cp, r_invden, r_bc, w):
    """Tensor-product cubic-spline coefficients of a 2D slice.

    q: (nr, nt) nodal values, theta periodic, r bounded.
    w: (nr + 2, nt) output coefficients with radial ghosts.
    r_bc: 1 = natural (w_-1 = 2 w_0 - w_1), 2 = clamped slope (w_-1 = w_1).
    """
    nr, nt = q.shape
    # periodic solve along theta, row by row, into the interior of w
    for i in range(nr):
        w[i + 1, 0] = q[i, 0] * t_invden[0]
        for j in range(1, nt):
            w[i + 1, j] = (q[i, j] - t_lower[j] * w[i + 1, j - 1]) * t_invden[j]
        for j in range(nt - 2, -1, -1):
            w[i + 1, j] -= t_cp[j] * w[i + 1, j + 1]
        fac = (w[i + 1, 0] - 0.25 * w[i + 1, nt - 1]) * t_vyden
        for j in range(nt):
            w[i + 1, j] -= fac * t_z[j]
    # bounded solve along r, column by column (rows 1..nr of w hold the rhs)
    for j in range(nt):
        w[1, j] = w[1, j] * r_invden[0]
        for i in range(1, nr):
            w[i + 1, j] = (w[i + 1, j] - r_lower[i] * w[i, j]) * r_invden[i]
        for i in range(nr - 2, -1, -1):
            w[i + 1, j] -= r_cp[i] * w[i + 2, j]
        if r_bc == 1:
            w[0, j] = 2.0 * w[1, j] - w[2, j]
            w[nr + 1, j] = 2.0 * w[nr, j] - w[nr - 1, j]
        else:
            w[0, j] = w[2, j]
            w[nr + 1, j] = w[nr - 1, j]


@njit(cache=True)
def build_coeffs_2d_periodic(q, t_lower, t_cp, t_invden, t_z, t_vyden,
                             r_lower, r_cp, r_invden, r_z, r_vyden, w):
    """Fully periodic variant (both axes cyclic); w has shape (nr, nt)."""
    nr, nt = q.shape
    for i in range(nr):
        w[i, 0] = q[i, 0] * t_invden[0]
        for j in range(1, nt):
            w[i, j] = (q[i, j] - t_lower[j] * w[i, j - 1]) * t_invden[j]
        for j in range(nt - 2, -1, -1):
            w[i, j] -= t_cp[j] * w[i, j + 1]
        fac = (w[i, 0] - 0.25 * w[i, nt - 1]) * t_vyden
        for j in range(nt):
            w[i, j] -= fac * t_z[j]
    for j in range(nt):
        w[0, j] = w[0, j] * r_invden[0]
        for i in range(1, nr):
            w[i, j] = (w[i, j] - r_lower[i] * w[i - 1, j]) * r_invden[i]
        for i in range(nr - 2, -1, -1):
            w[i, j] -= r_cp[i] * w[i + 1, j]
        fac = (w[0, j] - 0.25 * w[nr - 1, j]) * r_vyden
        for i in range(nr):
            w[i, j] -= fac * r_z[i]


# ---------------------------------------------------------------------------
# 1D interpolation / deposition
# ---------------------------------------------------------------------------

@njit(cache=True)
def eval_lines_periodic_shift(w, k0, u, out):
    """Evaluate each periodic line at nodes displaced by a per-line constant.

    w: (nl, n) coefficients; foot of node j on line l is g = j + k0[l] + u[l].
    """
    nl, n = w.shape
    for l in range(nl):
        b0, b1, b2, b3 = _bw(u[l])
        base = k0[l]
        for j in range(n):
            i0 = _wrap((j + base - 1) % n, n)
            i1 = _wrap(i0 + 1, n)
            i2 = _wrap(i1 + 1, n)
            i3 = _wrap(i2 + 1, n)
            out[l, j] = b0 * w[l, i0] + b1 * w[l, i1] + b2 * w[l, i2] + b3 * w[l, i3]


@njit(cache=True)
def deposit_lines_periodic_shift(w, k0, u, out):
    """Forward deposit of per-line uniformly displaced periodic coefficients."""
    nl, n = w.shape
    for l in range(nl):
        b0, b1, b2, b3 = _bw(u[l])
        base = k0[l]
        for j in range(n):
            out[l, j] = 0.0
        for k in range(n):
            q = w[l, k]
            i0 = _wrap((k + base - 1) % n, n)
            i1 = _wrap(i0 + 1, n)
            i2 = _wrap(i1 + 1, n)
            i3 = _wrap(i2 + 1, n)
            out[l, i0] += q * b0
            out[l, i1] += q * b1
            out[l, i2] += q * b2
            out[l, i3] += q * b3


@njit(cache=True)
def eval_lines_bounded(w, g, out):
    """Per-node feet on bounded lines; w: (nl, n+2) with ghosts, g: (nl, n).

    Feet outside [0, n-1] are clamped to the boundary node (constant
    continuation); returns the number of clamped evaluations.
    """
    nl, n2 = w.shape
    n = n2 - 2
    clamped = 0
    for l in range(nl):
        for j in range(n):
            x = g[l, j]
            if x < 0.0:
                x = 0.0
                clamped += 1
            elif x > n - 1.0:
                x = n - 1.0
                clamped += 1
            base = int(x)
            if base > n - 2:
                base = n - 2
            u = x - base
            b0, b1, b2, b3 = _bw(u)
            out[l, j] = (b0 * w[l, base] + b1 * w[l, base + 1]
                         + b2 * w[l, base + 2] + b3 * w[l, base + 3])
    return clamped


@njit(cache=True)
def deposit_lines_bounded(w, g, out, loss):
    """Deposit bounded-line coefficient particles (ghosts included).

    w, g: (nl, n+2) coefficient values and foot positions (cell units,
    particle k lives at g[l, k] and corresponds to coefficient index k-1);
    weight falling outside node range [0, n-1] accumulates into loss[l].
    """
    nl, n2 = w.shape
    n = n2 - 2
    for l in range(nl):
        for j in range(n):
            out[l, j] = 0.0
        loss[l] = 0.0
        for k in range(n2):
            q = w[l, k]
            x = g[l, k]
            base = int(np.floor(x))
            u = x - base
            b0, b1, b2, b3 = _bw(u)
            j0 = base - 1
            if 0 <= j0 and j0 + 3 <= n - 1:
                out[l, j0] += q * b0
                out[l, j0 + 1] += q * b1
                out[l, j0 + 2] += q * b2
                out[l, j0 + 3] += q * b3
            else:
                if 0 <= j0 <= n - 1:
                    out[l, j0] += q * b0
                else:
                    loss[l] += q * b0
                if 0 <= j0 + 1 <= n - 1:
                    out[l, j0 + 1] += q * b1
                else:
                    loss[l] += q * b1
                if 0 <= j0 + 2 <= n - 1:
                    out[l, j0 + 2] += q * b2
                else:
                    loss[l] += q * b2
                if 0 <= j0 + 3 <= n - 1:
                    out[l, j0 + 3] += q * b3
                else:
                    loss[l] += q * b3


# ---------------------------------------------------------------------------
# 2D interpolation / deposition (r bounded with ghosts, theta periodic)
# ---------------------------------------------------------------------------

@njit(cache=True)
def eval_2d_slice(w, gr, gt, out):
    """Evaluate a 2D spline at per-node feet; returns clamp count.

    w: (nr + 2, nt); gr, gt, out: (nr, nt) cell-unit positions/values.
    """
    nr = w.shape[0] - 2
    nt = w.shape[1]
    clamped = 0
    for i in range(nr):
        for j in range(nt):
            x = gr[i, j]
            if x < 0.0:
                x = 0.0
                clamped += 1
            elif x > nr - 1.0:
                x = nr - 1.0
                clamped += 1
            br = int(x)
            if br > nr - 2:
                br = nr - 2
            ur = x - br
            y = gt[i, j]
            bt = int(np.floor(y))
            ut = y - bt
            bt = _wrap(bt % nt, nt)
            a0, a1, a2, a3 = _bw(ur)
            c0, c1, c2, c3 = _bw(ut)
            j0 = _wrap(bt - 1 + nt, nt)
            j1 = _wrap(j0 + 1, nt)
            j2 = _wrap(j1 + 1, nt)
            j3 = _wrap(j2 + 1, nt)
            s = 0.0
            s += a0 * (c0 * w[br, j0] + c1 * w[br, j1] + c2 * w[br, j2] + c3 * w[br, j3])
            s += a1 * (c0 * w[br + 1, j0] + c1 * w[br + 1, j1] + c2 * w[br + 1, j2] + c3 * w[br + 1, j3])
            s += a2 * (c0 * w[br + 2, j0] + c1 * w[br + 2, j1] + c2 * w[br + 2, j2] + c3 * w[br + 2, j3])
            s += a3 * (c0 * w[br + 3, j0] + c1 * w[br + 3, j1] + c2 * w[br + 3, j2] + c3 * w[br + 3, j3])
            out[i, j] = s
    return clamped


@njit(cache=True)
def deposit_2d_slice(w, gr, gt, out):
    """Deposit 2D coefficient particles (w includes radial ghost rows).

    gr, gt: (nr + 2, nt) forward-foot positions of every coefficient particle
    (cell units; radial particle index k maps to coefficient k-1).  Returns
    the weight lost through the radial boundary.
    """
    nrc = w.shape[0]
    nt = w.shape[1]
    nr = nrc - 2
    loss = 0.0
    for i in range(nr):
        for j in range(nt):
            out[i, j] = 0.0
    for k in range(nrc):
        for m in range(nt):
            q = w[k, m]
            x = gr[k, m]
            br = int(np.floor(x))
            ur = x - br
            y = gt[k, m]
            bt = int(np.floor(y))
            ut = y - bt
            bt = _wrap(bt % nt, nt)
            a0, a1, a2, a3 = _bw(ur)
            c0, c1, c2, c3 = _bw(ut)
            j0 = _wrap(bt - 1 + nt, nt)
            j1 = _wrap(j0 + 1, nt)
            j2 = _wrap(j1 + 1, nt)
            j3 = _wrap(j2 + 1, nt)
            i0 = br - 1
            if 0 <= i0 and i0 + 3 <= nr - 1:
                out[i0, j0] += q * a0 * c0
                out[i0, j1] += q * a0 * c1
                out[i0, j2] += q * a0 * c2
                out[i0, j3] += q * a0 * c3
                out[i0 + 1, j0] += q * a1 * c0
                out[i0 + 1, j1] += q * a1 * c1
                out[i0 + 1, j2] += q * a1 * c2
                out[i0 + 1, j3] += q * a1 * c3
                out[i0 + 2, j0] += q * a2 * c0
                out[i0 + 2, j1] += q * a2 * c1
                out[i0 + 2, j2] += q * a2 * c2
                out[i0 + 2, j3] += q * a2 * c3
                out[i0 + 3, j0] += q * a3 * c0
                out[i0 + 3, j1] += q * a3 * c1
                out[i0 + 3, j2] += q * a3 * c2
                out[i0 + 3, j3] += q * a3 * c3
            else:
                ar = (a0, a1, a2, a3)
                for mr in range(4):
                    ii = i0 + mr
                    qa = q * ar[mr]
                    if 0 <= ii <= nr - 1:
                        out[ii, j0] += qa * c0
                        out[ii, j1] += qa * c1
                        out[ii, j2] += qa * c2
                        out[ii, j3] += qa * c3
                    else:
                        loss += qa
    return loss


@njit(cache=True)
def deposit_2d_slice_periodic(w, gr, gt, out):
    """Fully periodic deposit (both axes wrap); w, gr, gt: (nr, nt)."""
    nr, nt = w.shape
    for i in range(nr):
        for j in range(nt):
            out[i, j] = 0.0
    for k in range(nr):
        for m in range(nt):
            q = w[k, m]
            x = gr[k, m]
            br = int(np.floor(x))
            ur = x - br
            br = _wrap(br % nr, nr)
            y = gt[k, m]
            bt = int(np.floor(y))
            ut = y - bt
            bt = _wrap(bt % nt, nt)
            a0, a1, a2, a3 = _bw(ur)
            c0, c1, c2, c3 = _bw(ut)
            ar = (a0, a1, a2, a3)
            ct = (c0, c1, c2, c3)
            for mr in range(4):
                ii = _wrap((br - 1 + mr + nr) % nr, nr)
                qa = q * ar[mr]
                for mt in range(4):
                    jj = _wrap((bt - 1 + mt + nt) % nt, nt)
                    out[ii, jj] += qa * ct[mt]


# ---------------------------------------------------------------------------
# E x B foot construction (midpoint rule with bilinear field lookup)
# ---------------------------------------------------------------------------

@njit(cache=True)
def midpoint_feet_2d(ar_field, at_field, dt, sign, dr, dtheta, gr, gt):
    """Second-order feet of a gridded steady (r, theta) velocity field.

    Displacement is dt * alpha at the midpoint (bilinear lookup, radially
    clamped).  sign = -1 gives backward feet (BSL), +1 forward (FSL).
    Outputs gr, gt are node positions in cell units.
    """
    nr, nt = ar_field.shape
    for i in range(nr):
        for j in range(nt):
            # midpoint in cell units
            xm = i + sign * 0.5 * dt * ar_field[i, j] / dr
            ym = j + sign * 0.5 * dt * at_field[i, j] / dtheta
            if xm < 0.0:
                xm = 0.0
            elif xm > nr - 1.0:
                xm = nr - 1.0
            bi = int(xm)
            if bi > nr - 2:
                bi = nr - 2
            ux = xm - bi
            bj = int(np.floor(ym))
            uy = ym - bj
            bj = _wrap(bj % nt, nt)
            bj1 = _wrap(bj + 1, nt)
            w00 = (1.0 - ux) * (1.0 - uy)
            w01 = (1.0 - ux) * uy
            w10 = ux * (1.0 - uy)
            w11 = ux * uy
            arm = (w00 * ar_field[bi, bj] + w01 * ar_field[bi, bj1]
                   + w10 * ar_field[bi + 1, bj] + w11 * ar_field[bi + 1, bj1])
            atm = (w00 * at_field[bi, bj] + w01 * at_field[bi, bj1]
                   + w10 * at_field[bi + 1, bj] + w11 * at_field[bi + 1, bj1])
            gr[i, j] = i + sign * dt * arm / dr
            gt[i, j] = j + sign * dt * atm / dtheta


@njit(cache=True)
def eval_lines_periodic(w, g, out):
    """Per-node feet on periodic lines; w: (nl, n), g, out: (nl, n)."""
    nl, n = w.shape
    for l in range(nl):
        for j in range(n):
            x = g[l, j]
            base = int(np.floor(x))
            u = x - base
            b0, b1, b2, b3 = _bw(u)
            i0 = _wrap((base - 1) % n, n)
            i1 = _wrap(i0 + 1, n)
            i2 = _wrap(i1 + 1, n)
            i3 = _wrap(i2 + 1, n)
            out[l, j] = b0 * w[l, i0] + b1 * w[l, i1] + b2 * w[l, i2] + b3 * w[l, i3]


@njit(cache=True)
def deposit_lines_periodic(w, g, out):
    """Per-particle feet on periodic lines; one particle per coefficient."""
    nl, n = w.shape
    for l in range(nl):
        for j in range(n):
            out[l, j] = 0.0
        for k in range(n):
            q = w[l, k]
            x = g[l, k]
            base = int(np.floor(x))
            u = x - base
            b0, b1, b2, b3 = _bw(u)
            i0 = _wrap((base - 1) % n, n)
            i1 = _wrap(i0 + 1, n)
            i2 = _wrap(i1 + 1, n)
            i3 = _wrap(i2 + 1, n)
            out[l, i0] += q * b0
            out[l, i1] += q * b1
            out[l, i2] += q * b2
            out[l, i3] += q * b3


@njit(cache=True)
def vpar_feet(a_c, c_c, b, kpar, v, dt, sign, v_min, inv_dv, out):
    """Two-iteration midpoint feet along v (analytic acceleration in v).

    a_c, c_c: (nr, nt, nphi); b, kpar: (nr, nt); v: (nv); out: (nr, nt, nphi, nv)
    holds foot positions in cell units."""
    nr, nt, nphi = a_c.shape
    nv = v.shape[0]
    for i in range(nr):
        for j in range(nt):
            bb = b[i, j]
            kk = kpar[i, j]
            for k in range(nphi):
                aa = a_c[i, j, k]
                cc = c_c[i, j, k]
                for m in range(nv):
                    vv = v[m]
                    d = -dt * (aa + vv * cc) / (bb + vv * kk)
                    vm = vv + sign * 0.5 * d
                    d = -dt * (aa + vm * cc) / (bb + vm * kk)
                    out[i, j, k, m] = (vv + sign * d - v_min) * inv_dv


@njit(cache=True)
def phi_feet(brphi, inv_bstar, dt, sign, inv_dphi, out):
    """Midpoint feet along phi; speed linearly interpolated along the line.

    brphi: (nr, nt, nphi); inv_bstar: (nr, nt, nv); out: (nr, nt, nphi, nv)
    foot positions in cell units."""
    nr, nt, nphi = brphi.shape
    nv = inv_bstar.shape[2]
    for i in range(nr):
        for j in range(nt):
            for m in range(nv):
                binv = inv_bstar[i, j, m]
                for k in range(nphi):
                    u0 = brphi[i, j, k] * binv * inv_dphi
                    jm = k + sign * 0.5 * dt * u0
                    k0 = int(np.floor(jm))
                    w = jm - k0
                    k0w = _wrap(k0 % nphi, nphi)
                    k1w = _wrap(k0w + 1, nphi)
                    um = ((1.0 - w) * brphi[i, j, k0w]
                          + w * brphi[i, j, k1w]) * binv * inv_dphi
                    out[i, j, k, m] = k + sign * dt * um


def warmup():
    """Compile every kernel on token inputs (numba caches to disk)."""
    n = 8
    w1 = np.zeros((2, n))
    solve_lines_tridiag(w1, np.zeros(n), np.zeros(n), np.ones(n), np.zeros((2, n)))
    solve_lines_cyclic(w1, np.zeros(n), np.zeros(n), np.ones(n), np.zeros(n), 1.0,
                       np.zeros((2, n)))
    eval_lines_periodic_shift(w1, np.zeros(2, np.int64), np.zeros(2), np.zeros((2, n)))
    deposit_lines_periodic_shift(w1, np.zeros(2, np.int64), np.zeros(2),
                                 np.zeros((2, n)))
    wg = np.zeros((2, n + 2))
    eval_lines_bounded(wg, np.zeros((2, n)), np.zeros((2, n)))
    deposit_lines_bounded(wg, np.zeros((2, n + 2)), np.zeros((2, n)), np.zeros(2))
    q = np.zeros((n, n))
    wc = np.zeros((n + 2, n))
    zn = np.zeros(n)
    on = np.ones(n)
    build_coeffs_2d(q, zn, zn, on, zn, 1.0, zn, zn, on, 1, wc)
    build_coeffs_2d_periodic(q, zn, zn, on, zn, 1.0, zn, zn, on, zn, 1.0,
                             np.zeros((n, n)))
    g = np.zeros((n, n))
    eval_2d_slice(wc, g, g, np.zeros((n, n)))
    deposit_2d_slice(wc, np.zeros((n + 2, n)), np.zeros((n + 2, n)), np.zeros((n, n)))
    deposit_2d_slice_periodic(q, g, g, np.zeros((n, n)))
    midpoint_feet_2d(q, q, 1.0, 1.0, 1.0, 1.0, np.zeros((n, n)), np.zeros((n, n)))
    eval_lines_periodic(w1, np.zeros((2, n)), np.zeros((2, n)))
    deposit_lines_periodic(w1, np.zeros((2, n)), np.zeros((2, n)))
