"""Uniform-grid cubic B-spline interpolation and mass-conserving deposition.

Coefficient solves use precomputed Thomas factorizations of the banded
interpolation system f_i = (w_{i-1} + 4 w_i + w_{i+1})/6; the periodic case
closes the corners with a Sherman-Morrison correction.  Non-periodic axes
store two ghost coefficients fixed by the boundary condition:

  * Natural: zero second derivative, w_{-1} = 2 w_0 - w_1 (so w_0 = f_0);
  * ClampedZeroSlope: zero first derivative, w_{-1} = w_1.

Interpolation and deposition share one basis, so a deposit at unmoved feet
inverts the coefficient solve exactly.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np

from . import _kernels


class BoundaryCondition(enum.Enum):
    PERIODIC = "periodic"
    NATURAL = "natural"
    CLAMPED_ZERO_SLOPE = "clamped_zero_slope"


def basis_weights(u):
    """The four cubic B-spline stencil weights at fractional offset u (array ok)."""
    u = np.asarray(u)
    v = 1.0 - u
    return np.stack(
        [
            v**3 / 6.0,
            2.0 / 3.0 - u * u * (1.0 - 0.5 * u),
            2.0 / 3.0 - v * v * (1.0 - 0.5 * v),
            u**3 / 6.0,
        ],
        axis=-1,
    )


def cardinal_bspline(t):
    """Centered cubic B-spline S(t) on knot spacing 1: S(0) = 2/3, S(1) = 1/6."""
    t = np.abs(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    inner = t <= 1.0
    outer = (t > 1.0) & (t < 2.0)
    out[inner] = 2.0 / 3.0 - t[inner] ** 2 + 0.5 * t[inner] ** 3
    out[outer] = (2.0 - t[outer]) ** 3 / 6.0
    return out


def get_solver(n: int, bc: "BoundaryCondition") -> "SplineSolver1D":
    """Cached factorization lookup (grids are fixed within a run)."""
    return _solver_cache(n, bc)


def _thomas_factors(lower, diag, upper):
    n = len(diag)
    cp = np.zeros(n)
    inv_den = np.zeros(n)
    inv_den[0] = 1.0 / diag[0]
    cp[0] = upper[0] * inv_den[0]
    for i in range(1, n):
        inv_den[i] = 1.0 / (diag[i] - lower[i] * cp[i - 1])
        cp[i] = upper[i] * inv_den[i]
    return cp, inv_den


@dataclass(frozen=True)
class SplineSolver1D:
    """Cached factorization of the interpolation system for one axis."""

    bc: BoundaryCondition
    n: int
    lower: np.ndarray
    cp: np.ndarray
    inv_den: np.ndarray
    z: np.ndarray          # periodic only: T^-1 u for the rank-1 correction
    vy_den: float          # periodic only: 1/(1 + v . z)

    @classmethod
    def build(cls, n: int, bc: BoundaryCondition) -> "SplineSolver1D":
        if n < 4:
            raise ValueError("spline solve needs at least 4 nodes")
        sixth, third, twothird = 1.0 / 6.0, 1.0 / 3.0, 2.0 / 3.0
        if bc is BoundaryCondition.PERIODIC:
            lower = np.full(n, sixth)
            upper = np.full(n, sixth)
            diag = np.full(n, twothird)
            gamma = -twothird
            diag[0] -= gamma
            diag[-1] -= sixth * sixth / gamma
            cp, inv_den = _thomas_factors(lower, diag, upper)
            u = np.zeros(n)
            u[0] = gamma
            u[-1] = sixth
            z = np.empty(n)
            _kernels.solve_lines_tridiag(u[None, :], lower, cp, inv_den, z[None, :])
            vy_den = 1.0 / (1.0 + z[0] - 0.25 * z[-1])
            return cls(bc, n, lower, cp, inv_den, z, vy_den)
        lower = np.full(n, sixth)
        upper = np.full(n, sixth)
        diag = np.full(n, twothird)
        if bc is BoundaryCondition.NATURAL:
            diag[0] = diag[-1] = 1.0
            upper[0] = lower[-1] = 0.0
        elif bc is BoundaryCondition.CLAMPED_ZERO_SLOPE:
            upper[0] = lower[-1] = third
        else:
            raise ValueError(f"unsupported boundary condition {bc}")
        lower[0] = upper[-1] = 0.0
        cp, inv_den = _thomas_factors(lower, diag, upper)
        return cls(bc, n, lower, cp, inv_den, np.empty(0), 0.0)

    @property
    def ncoef(self) -> int:
        return self.n if self.bc is BoundaryCondition.PERIODIC else self.n + 2

    def solve_batch(self, values: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Solve for coefficients along the last axis of a (lines, n) batch."""
        values = np.ascontiguousarray(values, dtype=np.float64)
        flat = values.reshape(-1, self.n)
        if out is None:
            out = np.empty(flat.shape[:-1] + (self.ncoef,))
        if self.bc is BoundaryCondition.PERIODIC:
            _kernels.solve_lines_cyclic(
                flat, self.lower, self.cp, self.inv_den, self.z, self.vy_den, out
            )
        else:
            core = out[:, 1:-1]
            _kernels.solve_lines_tridiag(flat, self.lower, self.cp, self.inv_den, core)
            if self.bc is BoundaryCondition.NATURAL:
                out[:, 0] = 2.0 * out[:, 1] - out[:, 2]
                out[:, -1] = 2.0 * out[:, -2] - out[:, -3]
            else:
                out[:, 0] = out[:, 2]
                out[:, -1] = out[:, -3]
        return out


@functools.lru_cache(maxsize=64)
def _solver_cache(n: int, bc: BoundaryCondition) -> SplineSolver1D:
    return SplineSolver1D.build(n, bc)


def build_coeffs_2d_into(values, w, bc_r: BoundaryCondition) -> None:
    """Fill w (nr+2, ntheta) with tensor coefficients of a (nr, ntheta) slice."""
    nr, nt = values.shape
    ts = get_solver(nt, BoundaryCondition.PERIODIC)
    rs = get_solver(nr, bc_r)
    code = 1 if bc_r is BoundaryCondition.NATURAL else 2
    _kernels.build_coeffs_2d(
        values, ts.lower, ts.cp, ts.inv_den, ts.z, ts.vy_den,
        rs.lower, rs.cp, rs.inv_den, code, w,
    )


# ---------------------------------------------------------------------------
# 1D / 2D spline representations (spec surface; hot paths use the kernels)
# ---------------------------------------------------------------------------

@dataclass
class SplineRep1D:
    coeffs: np.ndarray            # (n,) periodic, (n+2,) otherwise
    bc: BoundaryCondition
    x0: float
    dx: float
    n: int

    def positions(self, x):
        return (np.asarray(x, dtype=float) - self.x0) / self.dx

    def eval(self, x):
        g = np.atleast_1d(self.positions(x))
        if self.bc is BoundaryCondition.PERIODIC:
            base = np.floor(g).astype(np.int64)
            u = g - base
            idx = (base[:, None] + np.arange(-1, 3)[None, :]) % self.n
            vals = np.einsum("pk,pk->p", self.coeffs[idx], basis_weights(u))
        else:
            gc = np.clip(g, 0.0, self.n - 1.0)
            base = np.minimum(gc.astype(np.int64), self.n - 2)
            u = gc - base
            idx = base[:, None] + np.arange(0, 4)[None, :]
            vals = np.einsum("pk,pk->p", self.coeffs[idx], basis_weights(u))
        return vals if np.ndim(x) else vals[0]


@dataclass
class SplineRep2D:
    coeffs: np.ndarray            # (nrc, ntc) with ghosts on bounded axes
    bc_r: BoundaryCondition
    bc_theta: BoundaryCondition
    r0: float
    dr: float
    nr: int
    theta0: float
    dtheta: float
    ntheta: int

    def positions(self, x, y):
        gx = (np.asarray(x, dtype=float) - self.r0) / self.dr
        gy = (np.asarray(y, dtype=float) - self.theta0) / self.dtheta
        return gx, gy


def solve_coeffs_1d(values, bc: BoundaryCondition, x0=0.0, dx=1.0) -> SplineRep1D:
    values = np.asarray(values, dtype=float)
    solver = get_solver(values.shape[-1], bc)
    coeffs = solver.solve_batch(values[None, :])[0]
    return SplineRep1D(coeffs, bc, x0, dx, values.shape[-1])


def solve_coeffs_2d(
    values,
    bc_r: BoundaryCondition = BoundaryCondition.NATURAL,
    bc_theta: BoundaryCondition = BoundaryCondition.PERIODIC,
    r0=0.0,
    dr=1.0,
    theta0=0.0,
    dtheta=1.0,
) -> SplineRep2D:
    """Tensor-product coefficients of a (nr, ntheta) slice."""
    if bc_theta is not BoundaryCondition.PERIODIC:
        raise ValueError("theta axis must be periodic")
    values = np.ascontiguousarray(values, dtype=np.float64)
    nr, nt = values.shape
    ts = get_solver(nt, BoundaryCondition.PERIODIC)
    rs = get_solver(nr, bc_r)
    if bc_r is BoundaryCondition.PERIODIC:
        w = np.empty((nr, nt))
        _kernels.build_coeffs_2d_periodic(
            values, ts.lower, ts.cp, ts.inv_den, ts.z, ts.vy_den,
            rs.lower, rs.cp, rs.inv_den, rs.z, rs.vy_den, w,
        )
    else:
        w = np.empty((nr + 2, nt))
        code = 1 if bc_r is BoundaryCondition.NATURAL else 2
        _kernels.build_coeffs_2d(
            values, ts.lower, ts.cp, ts.inv_den, ts.z, ts.vy_den,
            rs.lower, rs.cp, rs.inv_den, code, w,
        )
    return SplineRep2D(w, bc_r, bc_theta, r0, dr, nr, theta0, dtheta, nt)


def eval_2d_counted(rep: SplineRep2D, x, y):
    """Evaluate a 2D rep at arbitrary points; returns (values, n_clamped)."""
    gx, gy = rep.positions(x, y)
    shape = np.broadcast(gx, gy).shape
    gx = np.ascontiguousarray(np.broadcast_to(gx, shape), dtype=np.float64).ravel()
    gy = np.ascontiguousarray(np.broadcast_to(gy, shape), dtype=np.float64).ravel()
    nr, nt = rep.nr, rep.ntheta
    if rep.bc_r is BoundaryCondition.PERIODIC:
        bx = np.floor(gx).astype(np.int64)
        ux = gx - bx
        idx_r = (bx[:, None] + np.arange(-1, 3)) % nr
        clamped = 0
    else:
        gxc = np.clip(gx, 0.0, nr - 1.0)
        clamped = int(np.count_nonzero(gxc != gx))
        bx = np.minimum(gxc.astype(np.int64), nr - 2)
        ux = gxc - bx
        idx_r = bx[:, None] + np.arange(0, 4)
    by = np.floor(gy).astype(np.int64)
    uy = gy - by
    idx_t = (by[:, None] + np.arange(-1, 3)) % nt
    wr = basis_weights(ux)
    wt = basis_weights(uy)
    patch = rep.coeffs[idx_r[:, :, None], idx_t[:, None, :]]
    vals = np.einsum("pkl,pk,pl->p", patch, wr, wt)
    return vals.reshape(shape), clamped


def eval_2d(rep: SplineRep2D, x, y):
    """Tensor-product evaluation; out-of-domain radial points clamp to the
    boundary value."""
    vals, _ = eval_2d_counted(rep, x, y)
    return vals


def extend_feet_radial(feet_r, feet_theta):
    """Ghost-coefficient particle positions: edge displacement copied outward."""
    gr = np.empty((feet_r.shape[0] + 2, feet_r.shape[1]))
    gt = np.empty_like(gr)
    gr[1:-1] = feet_r
    gr[0] = feet_r[0] - 1.0
    gr[-1] = feet_r[-1] + 1.0
    gt[1:-1] = feet_theta
    gt[0] = feet_theta[0]
    gt[-1] = feet_theta[-1]
    return gr, gt


def deposit_2d(rep: SplineRep2D, feet_r, feet_theta):
    """Deposit one coefficient particle per basis function at its forward foot.

    feet_r, feet_theta: (nr, ntheta) positions in physical units for the
    particles launched from grid nodes; ghost particles reuse the edge-node
    displacement.  Returns (nodal array, radial boundary loss).
    """
    gr = (np.asarray(feet_r, dtype=float) - rep.r0) / rep.dr
    gt = (np.asarray(feet_theta, dtype=float) - rep.theta0) / rep.dtheta
    out = np.empty((rep.nr, rep.ntheta))
    if rep.bc_r is BoundaryCondition.PERIODIC:
        _kernels.deposit_2d_slice_periodic(
            rep.coeffs, np.ascontiguousarray(gr), np.ascontiguousarray(gt), out
        )
        return out, 0.0
    gr2, gt2 = extend_feet_radial(gr, gt)
    loss = _kernels.deposit_2d_slice(rep.coeffs, gr2, gt2, out)
    return out, float(loss)


def deposit_1d(rep: SplineRep1D, feet):
    """1D analogue of deposit_2d; returns (nodal array, boundary loss)."""
    g = rep.positions(np.asarray(feet, dtype=float))
    if rep.bc is BoundaryCondition.PERIODIC:
        out = np.zeros(rep.n)
        base = np.floor(g).astype(np.int64)
        u = g - base
        w = basis_weights(u)
        for m in range(4):
            np.add.at(out, (base - 1 + m) % rep.n, rep.coeffs * w[:, m])
        return out, 0.0
    g2 = np.empty(rep.n + 2)
    g2[1:-1] = g
    g2[0] = g[0] - 1.0
    g2[-1] = g[-1] + 1.0
    out = np.empty((1, rep.n))
    loss = np.zeros(1)
    _kernels.deposit_lines_bounded(rep.coeffs[None, :], g2[None, :], out, loss)
    return out[0], float(loss[0])


# ---------------------------------------------------------------------------
# nodal-stencil helpers (values/derivatives of a 2D rep at its own grid nodes)
# ---------------------------------------------------------------------------

def smooth_r(w):
    """Collapse the radial coefficient index onto nodes: (w_{i-1}+4w_i+w_{i+1})/6.

    Operates on axis -2 (radial, with ghosts); extra leading axes broadcast."""
    return (w[..., :-2, :] + 4.0 * w[..., 1:-1, :] + w[..., 2:, :]) / 6.0


def diff_r(w, dr):
    return (w[..., 2:, :] - w[..., :-2, :]) / (2.0 * dr)


def smooth_t(a):
    return (np.roll(a, 1, axis=-1) + 4.0 * a + np.roll(a, -1, axis=-1)) / 6.0


def diff_t(a, dtheta):
    return (np.roll(a, -1, axis=-1) - np.roll(a, 1, axis=-1)) / (2.0 * dtheta)


def nodal_gradient_2d(w, dr, dtheta):
    """(d/dr, d/dtheta) of the spline at grid nodes from coefficients w
    (radial ghosts included)."""
    return smooth_t(diff_r(w, dr)), diff_t(smooth_r(w), dtheta)


def nodal_values_2d(w):
    return smooth_t(smooth_r(w))
