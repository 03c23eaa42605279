"""Directional semi-Lagrangian advections and the Strang-split time step.

The macro step applies the sequence (v/2, phi/2, rtheta, phi/2, v/2) for each
operator.  Under the drift operator dv/dt = 0 at mu = 0, so its v shift is an
exact identity; the 2D (r, theta) displacement comes from a Taylor expansion
or a precomputed RK2 foot table.  The E x B operator derives every foot from
the frozen potential snapshot with second-order midpoint predictors.

BSL interpolates f at backward feet; FSL splines J_s B*par f, pushes one
pseudo-particle per spline coefficient forward, and deposits, which conserves
the deposited total exactly up to weight lost through the radial boundary.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, bspline
from .characteristics import (
    Direction,
    FootTable,
    GridGeometry,
    LinearFieldTable,
    exb_phi_bracket,
    exb_rtheta_brackets,
    foot_table_for_model,
    taylor_displacement,
    vpar_accel_coeffs,
)
from .geometry import Grid4D, MagneticModel, Profiles
from .qn_solver import FieldState


class Scheme(enum.Enum):
    BSL = "BSL"
    FSL = "FSL"


class FootMethod(enum.Enum):
    TAYLOR = "Taylor"
    PRECOMPUTED = "Precomputed"


class SplitMode(enum.Enum):
    DIRECT_STRANG = "DirectStrang"
    LINEAR_NONLINEAR = "LinearNonlinearSplit"


@dataclass
class SchemeConfig:
    scheme: Scheme = Scheme.BSL
    foot_method: FootMethod = FootMethod.PRECOMPUTED
    dt: float = 10.0
    substeps: int = 64
    split: SplitMode = SplitMode.LINEAR_NONLINEAR
    phi_forced_zero: bool = False
    symmetrized_split: bool = False
    dt_linear: float | None = None     # both default to dt; no sub-cycling
    dt_nonlinear: float | None = None
    zero_fields: bool = False          # debug: all advection fields off
    radial_fixed_boundary: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.substeps < 1:
            raise ValueError("M (substeps) must be >= 1")
        if self.dt_linear is None:
            self.dt_linear = self.dt
        if self.dt_nonlinear is None:
            self.dt_nonlinear = self.dt


# ---------------------------------------------------------------------------
# directional advections on the full (r, theta, phi, v) array
# ---------------------------------------------------------------------------

def advect_phi_1d(f, shift_cells, scheme: Scheme):
    """Constant-per-line periodic shift along phi (fields phi independent).

    shift_cells: (nr, ntheta, nv) foot (BSL) or target (FSL) displacement of
    each line in units of dphi."""
    nr, nt, nphi, nv = f.shape
    if nphi == 1:
        return f.copy()
    lines = np.ascontiguousarray(f.transpose(0, 1, 3, 2)).reshape(-1, nphi)
    solver = bspline.get_solver(nphi, bspline.BoundaryCondition.PERIODIC)
    w = solver.solve_batch(lines)
    s = np.ascontiguousarray(shift_cells, dtype=float).ravel()
    k0 = np.floor(s).astype(np.int64)
    u = s - k0
    out = np.empty_like(lines)
    if scheme is Scheme.BSL:
        _kernels.eval_lines_periodic_shift(w, k0, u, out)
    else:
        _kernels.deposit_lines_periodic_shift(w, k0, u, out)
    return np.ascontiguousarray(
        out.reshape(nr, nt, nv, nphi).transpose(0, 1, 3, 2)
    )


def advect_phi_1d_variable(f, foot_cells, scheme: Scheme):
    """Per-node periodic advection along phi (E x B speeds vary along the line).

    foot_cells: (nr, ntheta, nphi, nv) foot/target positions in cell units."""
    nr, nt, nphi, nv = f.shape
    if nphi == 1:
        return f.copy()
    lines = np.ascontiguousarray(f.transpose(0, 1, 3, 2)).reshape(-1, nphi)
    g = np.ascontiguousarray(foot_cells.transpose(0, 1, 3, 2)).reshape(-1, nphi)
    solver = bspline.get_solver(nphi, bspline.BoundaryCondition.PERIODIC)
    w = solver.solve_batch(lines)
    out = np.empty_like(lines)
    if scheme is Scheme.BSL:
        _kernels.eval_lines_periodic(w, g, out)
    else:
        _kernels.deposit_lines_periodic(w, g, out)
    return np.ascontiguousarray(
        out.reshape(nr, nt, nv, nphi).transpose(0, 1, 3, 2)
    )


def advect_vpar_1d(f, foot_cells, scheme: Scheme, jb=None):
    """Bounded (natural BC) advection along v_par; end values are re-pinned by
    the caller.  FSL mode transports jb*f (jb = J_s B*par, v dependent) so the
    deposited total is the mass integrand.

    Returns (f', per-line deposit loss summed over lines as (nr, ntheta, nphi)
    array; zeros for BSL)."""
    nr, nt, nphi, nv = f.shape
    if nv == 1:
        return f.copy(), np.zeros((nr, nt, nphi))
    f = np.ascontiguousarray(f)
    solver = bspline.get_solver(nv, bspline.BoundaryCondition.NATURAL)
    if scheme is Scheme.BSL:
        lines = f.reshape(-1, nv)
        w = solver.solve_batch(lines)
        out = np.empty_like(lines)
        g = np.ascontiguousarray(foot_cells, dtype=float).reshape(-1, nv)
        _kernels.eval_lines_bounded(w, g, out)
        return out.reshape(f.shape), np.zeros((nr, nt, nphi))
    q = f * jb[:, :, None, :]
    lines = q.reshape(-1, nv)
    w = solver.solve_batch(lines)
    g = np.ascontiguousarray(foot_cells, dtype=float).reshape(-1, nv)
    g2 = np.empty((g.shape[0], nv + 2))
    g2[:, 1:-1] = g
    g2[:, 0] = g[:, 0] - 1.0
    g2[:, -1] = g[:, -1] + 1.0
    out = np.empty_like(lines)
    loss = np.empty(g.shape[0])
    _kernels.deposit_lines_bounded(w, g2, out, loss)
    # close the per-line mass balance exactly (see advect_rtheta_2d_fsl)
    edge_tails = (w[:, 0] + w[:, -1]) * (5.0 / 6.0) + (w[:, 1] + w[:, -2]) / 6.0
    ring_shift = 0.5 * ((out[:, 0] - lines[:, 0]) + (out[:, -1] - lines[:, -1]))
    loss += ring_shift - edge_tails
    fp = out.reshape(f.shape) / jb[:, :, None, :]
    return fp, loss.reshape(nr, nt, nphi)


def advect_rtheta_2d_bsl(f, feet_r_cells, feet_t_cells):
    """Backward 2D advection; feet arrays are (nv, nr, ntheta) in cell units,
    shared across phi planes.  Returns (f', clamp count)."""
    nr, nt, nphi, nv = f.shape
    out = np.empty_like(f)
    q = np.empty((nr, nt))
    w = np.empty((nr + 2, nt))
    res = np.empty((nr, nt))
    clamped = 0
    for m in range(nv):
        gr = feet_r_cells[m]
        gt = feet_t_cells[m]
        for k in range(nphi):
            q[...] = f[:, :, k, m]
            bspline.build_coeffs_2d_into(q, w, bspline.BoundaryCondition.NATURAL)
            clamped += _kernels.eval_2d_slice(w, gr, gt, res)
            out[:, :, k, m] = res
    return out, clamped


def advect_rtheta_2d_fsl(f, feet_r_ext, feet_t_ext, jb):
    """Forward-deposit 2D advection; feet arrays are (nv, nr + 2, ntheta)
    coefficient-particle positions in cell units.

    Returns (f', loss per v).  The loss closes the mass balance exactly: it
    combines the deposited weight spilled past the radial nodes, the
    partition-of-unity truncation of near-edge basis functions, and the
    half-weight trapezoid correction for content moved onto boundary rings.
    """
    nr, nt, nphi, nv = f.shape
    out = np.empty_like(f)
    q = np.empty((nr, nt))
    w = np.empty((nr + 2, nt))
    res = np.empty((nr, nt))
    loss = np.zeros(nv)
    for m in range(nv):
        gr = feet_r_ext[m]
        gt = feet_t_ext[m]
        jbm = jb[:, :, m]
        for k in range(nphi):
            np.multiply(f[:, :, k, m], jbm, out=q)
            bspline.build_coeffs_2d_into(q, w, bspline.BoundaryCondition.NATURAL)
            spill = _kernels.deposit_2d_slice(w, gr, gt, res)
            # input nodal sum = coefficient sum minus the basis tails that
            # extend past the node range (5/6 of a ghost, 1/6 of an edge row)
            edge_tails = (
                (w[0].sum() + w[-1].sum()) * (5.0 / 6.0)
                + (w[1].sum() + w[-2].sum()) / 6.0
            )
            ring_shift = 0.5 * (
                (res[0] - q[0]).sum() + (res[-1] - q[-1]).sum()
            )
            loss[m] += spill - edge_tails + ring_shift
            out[:, :, k, m] = res / jbm
    return out, loss


# ---------------------------------------------------------------------------
# operator-level solver
# ---------------------------------------------------------------------------

@dataclass
class StepCounters:
    boundary_loss: float = 0.0     # net mass removed at domain boundaries
    bsl_clamped: int = 0           # out-of-domain BSL feet clamped


class VlasovSolver:
    """Applies the Strang sequences of the drift (L) and E x B (N) operators."""

    def __init__(self, model: MagneticModel, grid: Grid4D, profiles: Profiles,
                 config: SchemeConfig):
        self.model = model
        self.grid = grid
        self.profiles = profiles
        self.config = config
        self.geom = GridGeometry.sample(model, grid)
        self.bstar = self.geom.bstar_parallel(grid.vpar)      # (nr, nt, nv)
        self.inv_bstar = 1.0 / self.bstar
        self.jb = self.geom.js[:, :, None] * self.bstar
        if config.zero_fields:
            zero = np.zeros((grid.nr, grid.ntheta, grid.nv))
            self.lin_table = LinearFieldTable(
                grid, zero, zero.copy(), zero.copy(), zero.copy(), zero.copy(),
                zero.copy(), zero.copy(),
            )
        else:
            self.lin_table = LinearFieldTable.build(model, grid)
        self._feet_cache: dict = {}
        self._foot_tables: dict = {}
        self._pin_vlo = self._pin_vhi = None
        self._pin_rlo = self._pin_rhi = None
        # mass carried by one node on each boundary surface
        wt = self.grid.dtheta * self.grid.dphi
        self._wmass_v = (
            self.geom.js[:, :, None, None] * self.bstar[:, :, None, :]
            * self.grid.w_r[:, None, None, None] * wt
        )
        self._wmass_r_lo = (
            self.geom.js[0][:, None, None] * self.bstar[0][:, None, :]
            * self.grid.w_r[0] * wt * self.grid.w_v[None, None, :]
        )
        self._wmass_r_hi = (
            self.geom.js[-1][:, None, None] * self.bstar[-1][:, None, :]
            * self.grid.w_r[-1] * wt * self.grid.w_v[None, None, :]
        )

    def set_pinned_boundaries(self, f0):
        """Store the t=0 boundary values re-imposed after every advection that
        can move them (v planes after v shifts, radial rings after rtheta)."""
        if self.grid.nv > 1:
            self._pin_vlo = f0[:, :, :, 0].copy()
            self._pin_vhi = f0[:, :, :, -1].copy()
        if self.config.radial_fixed_boundary:
            self._pin_rlo = f0[0].copy()
            self._pin_rhi = f0[-1].copy()

    def _pin_v(self, f, counters: StepCounters):
        if self._pin_vlo is None:
            return
        for idx, pin, wv in ((0, self._pin_vlo, self.grid.w_v[0]),
                             (-1, self._pin_vhi, self.grid.w_v[-1])):
            delta = float(
                ((pin - f[:, :, :, idx]) * self._wmass_v[:, :, :, idx]).sum() * wv
            )
            counters.boundary_loss -= delta
            f[:, :, :, idx] = pin

    def _pin_r(self, f, counters: StepCounters):
        if self._pin_rlo is None:
            return
        for idx, pin, wm in ((0, self._pin_rlo, self._wmass_r_lo),
                             (-1, self._pin_rhi, self._wmass_r_hi)):
            delta = float(((pin - f[idx]) * wm).sum())
            counters.boundary_loss -= delta
            f[idx] = pin

    # -- feet for the drift operator ----------------------------------------

    def register_foot_table(self, table: FootTable):
        self._foot_tables[(table.dt, table.direction)] = table

    def _displacements(self, dt: float, direction: Direction):
        if self.config.zero_fields:
            z = np.zeros((self.grid.nr, self.grid.ntheta, self.grid.nv))
            return z, z
        if self.config.foot_method is FootMethod.TAYLOR:
            return taylor_displacement(self.lin_table, dt, direction)
        key = (dt, direction)
        table = self._foot_tables.get(key)
        if table is None:
            table = foot_table_for_model(
                self.model, self.grid, dt, self.config.substeps, direction
            )
            self._foot_tables[key] = table
        return table.disp_r, table.disp_t

    def linear_feet(self, dt: float, direction: Direction):
        """Cell-unit feet (nv, nr, nt); FSL feet are coefficient extended."""
        key = (dt, direction)
        feet = self._feet_cache.get(key)
        if feet is None:
            disp_r, disp_t = self._displacements(dt, direction)
            g = self.grid
            idx_r = np.arange(g.nr)[None, :, None]
            idx_t = np.arange(g.ntheta)[None, None, :]
            gr = np.ascontiguousarray(idx_r + np.moveaxis(disp_r, 2, 0) / g.dr)
            gt = np.ascontiguousarray(idx_t + np.moveaxis(disp_t, 2, 0) / g.dtheta)
            if direction is Direction.FORWARD:
                gre = np.empty((g.nv, g.nr + 2, g.ntheta))
                gte = np.empty_like(gre)
                for m in range(g.nv):
                    gre[m], gte[m] = bspline.extend_feet_radial(gr[m], gt[m])
                feet = (gre, gte)
            else:
                feet = (gr, gt)
            self._feet_cache[key] = feet
        return feet

    # -- Strang sequences ----------------------------------------------------

    def strang_linear(self, f, dt: float, counters: StepCounters):
        """(v/2, phi/2, rtheta, phi/2, v/2) with drift fields; v shift is an
        identity at mu = 0."""
        cfg = self.config
        scheme = cfg.scheme
        if self.grid.nphi > 1:
            sign = 1.0 if scheme is Scheme.FSL else -1.0
            shift = sign * self.lin_table.phi_dot * (0.5 * dt) / self.grid.dphi
            f = advect_phi_1d(f, shift, scheme)
        if scheme is Scheme.BSL:
            gr, gt = self.linear_feet(dt, Direction.BACKWARD)
            f, ncl = advect_rtheta_2d_bsl(f, gr, gt)
            counters.bsl_clamped += ncl
        else:
            gre, gte = self.linear_feet(dt, Direction.FORWARD)
            f, loss = advect_rtheta_2d_fsl(f, gre, gte, self.jb)
            counters.boundary_loss += float(
                np.dot(loss, self.grid.w_v) * self.grid.dr * self.grid.dtheta
                * self.grid.dphi
            )
        self._pin_r(f, counters)
        if self.grid.nphi > 1:
            f = advect_phi_1d(f, shift, scheme)
        return f

    # -- E x B operator -------------------------------------------------------

    def _vpar_feet(self, state_arrays, dt: float, sign: float):
        """Two-iteration midpoint feet along v; the acceleration is analytic
        in v for fixed x, so no interpolation is needed."""
        a_c, c_c = state_arrays
        g = self.grid
        out = np.empty(g.shape)
        _kernels.vpar_feet(
            a_c, c_c, self.geom.b, self.geom.kpar, g.vpar,
            dt, sign, g.v_min, 1.0 / g.dv, out,
        )
        return out

    def _phi_feet(self, brphi, dt: float, sign: float):
        """Midpoint feet along phi with linear interpolation of the speed."""
        g = self.grid
        out = np.empty(g.shape)
        _kernels.phi_feet(
            np.ascontiguousarray(brphi), self.inv_bstar, dt, sign,
            1.0 / g.dphi, out,
        )
        return out

    def _rtheta_nonlinear(self, f, state: FieldState, dt: float,
                          counters: StepCounters, extra_lin=None):
        """Per-slice midpoint feet from the potential snapshot, then BSL eval
        or FSL deposit.  extra_lin adds the drift field (DirectStrang mode)."""
        g = self.grid
        cfg = self.config
        br_r, br_t = exb_rtheta_brackets(
            self.geom, state.dphidr, state.dphidth, state.dphidphi
        )
        scheme = cfg.scheme
        sign = 1.0 if scheme is Scheme.FSL else -1.0
        out = np.empty_like(f)
        q = np.empty((g.nr, g.ntheta))
        w = np.empty((g.nr + 2, g.ntheta))
        res = np.empty((g.nr, g.ntheta))
        ar = np.empty((g.nr, g.ntheta))
        at = np.empty((g.nr, g.ntheta))
        gr = np.empty((g.nr, g.ntheta))
        gt = np.empty((g.nr, g.ntheta))
        loss_total = 0.0
        for m in range(g.nv):
            binv = self.inv_bstar[:, :, m]
            jbm = self.jb[:, :, m]
            wv = self.grid.w_v[m]
            for k in range(g.nphi):
                np.multiply(br_r[:, :, k], binv, out=ar)
                np.multiply(br_t[:, :, k], binv, out=at)
                if extra_lin is not None:
                    ar += extra_lin[0][:, :, m]
                    at += extra_lin[1][:, :, m]
                _kernels.midpoint_feet_2d(ar, at, dt, sign, g.dr, g.dtheta, gr, gt)
                if scheme is Scheme.BSL:
                    q[...] = f[:, :, k, m]
                    bspline.build_coeffs_2d_into(q, w, bspline.BoundaryCondition.NATURAL)
                    counters.bsl_clamped += _kernels.eval_2d_slice(w, gr, gt, res)
                    out[:, :, k, m] = res
                else:
                    np.multiply(f[:, :, k, m], jbm, out=q)
                    bspline.build_coeffs_2d_into(q, w, bspline.BoundaryCondition.NATURAL)
                    gre, gte = bspline.extend_feet_radial(gr, gt)
                    spill = _kernels.deposit_2d_slice(w, gre, gte, res)
                    edge_tails = (
                        (w[0].sum() + w[-1].sum()) * (5.0 / 6.0)
                        + (w[1].sum() + w[-2].sum()) / 6.0
                    )
                    ring_shift = 0.5 * (
                        (res[0] - q[0]).sum() + (res[-1] - q[-1]).sum()
                    )
                    out[:, :, k, m] = res / jbm
                    loss_total += (spill - edge_tails + ring_shift) * wv
        counters.boundary_loss += loss_total * g.dr * g.dtheta * g.dphi
        return out

    def strang_nonlinear(self, f, dt: float, state: FieldState,
                         counters: StepCounters, include_linear=False):
        cfg = self.config
        g = self.grid
        scheme = cfg.scheme
        sign = 1.0 if scheme is Scheme.FSL else -1.0
        accel_arrays = vpar_accel_coeffs(
            self.geom, state.dphidr, state.dphidth, state.dphidphi
        )
        brphi = exb_phi_bracket(self.geom, state.dphidr)

        def vstep(fin):
            if g.nv == 1:
                return fin
            feet = self._vpar_feet(accel_arrays, 0.5 * dt, sign)
            if scheme is Scheme.FSL:
                fout, loss = advect_vpar_1d(fin, feet, scheme, self.jb)
                counters.boundary_loss += float(
                    np.einsum("rtp,r->", loss, self.grid.w_r)
                    * self.grid.dtheta * self.grid.dphi * self.grid.dv
                )
            else:
                fout, _ = advect_vpar_1d(fin, feet, scheme)
            self._pin_v(fout, counters)
            return fout

        def phistep(fin):
            if g.nphi == 1:
                return fin
            feet = self._phi_feet(brphi, 0.5 * dt, sign)
            if include_linear:
                # the drift speed is constant along phi, so its exact shift
                # adds to the midpoint-corrected E x B displacement
                feet = feet + sign * self.lin_table.phi_dot[:, :, None, :] \
                    * (0.5 * dt) / g.dphi
            return advect_phi_1d_variable(fin, feet, scheme)

        extra = None
        if include_linear:
            extra = (self.lin_table.alpha_r, self.lin_table.alpha_t)
        f = vstep(f)
        f = phistep(f)
        f = self._rtheta_nonlinear(f, state, dt, counters, extra_lin=extra)
        self._pin_r(f, counters)
        f = phistep(f)
        f = vstep(f)
        return f
