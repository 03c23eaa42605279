"""Advection fields and foot finding for the 2D (r, theta) guiding-center flow.

The drift (linear) operator advects along

    dr/dt     = (m v^2 / e B*par B) [B, r]
    dtheta/dt = B_theta v / (r B*par) + (m v^2 / e B*par B) [B, theta]
    dphi/dt   = B_phi v / (R B*par) + (m v^2 / e B*par B) (mu0 J_phi / R)
              + (m v^2 / e B*par B) [B, phi]

with dv/dt = 0 (mu = 0).  Feet are found either by a second-order Taylor
expansion of the steady field (displacement dt*a - dt^2/2 (a.grad)a, field
derivatives obtained by complex-step differentiation, exact to round-off) or
by M midpoint-RK2 substeps precomputed once per run.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

import numpy as np

from .geometry import Grid4D, MagneticKind, MagneticModel

_CSTEP = 1e-30   # complex-step size; derivatives are exact, no cancellation


class Direction(enum.Enum):
    BACKWARD = -1.0
    FORWARD = 1.0

    @property
    def sign(self) -> float:
        return self.value


def linear_advection_field(model: MagneticModel, r, theta, vpar, m_s=1.0, e_s=1.0):
    """Contravariant (dr/dt, dtheta/dt, dphi/dt) of the drift operator."""
    _, btheta, bphi, b = model.field(r, theta)
    bst = b + (m_s * vpar / (e_s * b)) * model.mu0_b_dot_j(r, theta)
    rr = model.major_radius(r, theta)
    curv = m_s * vpar * vpar / (e_s * bst * b)
    rdot = curv * model.poisson_bracket_b(r, theta, "r")
    tdot = btheta * vpar / (r * bst) + curv * model.poisson_bracket_b(r, theta, "theta")
    pdot = (
        bphi * vpar / (rr * bst)
        + curv * model.mu0_j_phi(r, theta) / rr
        + curv * model.poisson_bracket_b(r, theta, "phi")
    )
    return rdot, tdot, pdot


def linear_rtheta_fn(model: MagneticModel):
    """(r, theta, v) -> (rdot, thetadot) callable for foot integration."""

    def field(r, theta, vpar):
        rdot, tdot, _ = linear_advection_field(model, r, theta, vpar)
        return rdot, tdot

    return field


@dataclass(frozen=True)
class LinearFieldTable:
    """Node-sampled drift field and its (r, theta) derivatives for Taylor feet."""

    grid: Grid4D
    alpha_r: np.ndarray      # (nr, ntheta, nv)
    alpha_t: np.ndarray
    dr_alpha_r: np.ndarray
    dt_alpha_r: np.ndarray
    dr_alpha_t: np.ndarray
    dt_alpha_t: np.ndarray
    phi_dot: np.ndarray      # (nr, ntheta, nv)

    @classmethod
    def build(cls, model: MagneticModel, grid: Grid4D) -> "LinearFieldTable":
        def rtheta(r, theta, v):
            rdot, tdot, _ = linear_advection_field(model, r, theta, v)
            return rdot, tdot

        r = grid.r[:, None, None]
        th = grid.theta[None, :, None]
        v = grid.vpar[None, None, :]
        _, _, pdot = linear_advection_field(model, r, th, v)
        return cls._from_fn(grid, rtheta, np.broadcast_to(pdot, grid.shape[:2] + (grid.nv,)).copy())

    @classmethod
    def from_callable(cls, grid: Grid4D, rtheta_fn, phi_dot=None) -> "LinearFieldTable":
        """Build from an arbitrary complex-safe (r, theta, v) -> (rdot, tdot)."""
        if phi_dot is None:
            phi_dot = np.zeros(grid.shape[:2] + (grid.nv,))
        return cls._from_fn(grid, rtheta_fn, phi_dot)

    @classmethod
    def _from_fn(cls, grid: Grid4D, fn, phi_dot) -> "LinearFieldTable":
        shape = (grid.nr, grid.ntheta, grid.nv)
        r = grid.r[:, None, None]
        th = grid.theta[None, :, None]
        v = grid.vpar[None, None, :]

        def full(rr, tt):
            ar, at = fn(rr, tt, v)
            return (np.broadcast_to(ar, shape), np.broadcast_to(at, shape))

        ar, at = full(r, th)
        h = _CSTEP
        ar_r, at_r = full(r + 1j * h, th)
        ar_t, at_t = full(r, th + 1j * h)
        return cls(
            grid,
            np.ascontiguousarray(ar, dtype=float),
            np.ascontiguousarray(at, dtype=float),
            np.ascontiguousarray(ar_r.imag / h),
            np.ascontiguousarray(ar_t.imag / h),
            np.ascontiguousarray(at_r.imag / h),
            np.ascontiguousarray(at_t.imag / h),
            np.ascontiguousarray(phi_dot, dtype=float),
        )


def taylor_displacement(table: LinearFieldTable, dt: float, direction: Direction):
    """Second-order foot displacement: sigma*dt*a + (dt^2/2) (a . grad) a.

    The foot of a node is node + displacement; BACKWARD gives the
    interpolation foot, FORWARD the deposition target.
    """
    s = direction.sign
    adv_r = table.alpha_r * table.dr_alpha_r + table.alpha_t * table.dt_alpha_r
    adv_t = table.alpha_r * table.dr_alpha_t + table.alpha_t * table.dt_alpha_t
    disp_r = s * dt * table.alpha_r + 0.5 * dt * dt * adv_r
    disp_t = s * dt * table.alpha_t + 0.5 * dt * dt * adv_t
    return disp_r, disp_t


@dataclass(frozen=True)
class FootTable:
    """Per-node (r, theta) displacement for one macro step at each v slice."""

    grid: Grid4D
    dt: float
    substeps: int
    direction: Direction
    disp_r: np.ndarray       # (nr, ntheta, nv)
    disp_t: np.ndarray
    n_frozen: int            # trajectories stopped at the radial boundary


def integrate_rk2(field_fn, r0, theta0, vpar, dt, substeps, direction: Direction,
                  r_bounds=None):
    """Midpoint-RK2 integration of dx/dt = sigma * a(x) from arbitrary starts.

    Series per substep (delta = dt/substeps):
        x_half = x^n + (delta/2) sigma a(x^n)
        x^{n+1} = x^n + delta   sigma a(x_half)

    Trajectories whose radius leaves r_bounds are clamped there and frozen.
    Returns (r, theta, frozen_mask).
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    s = direction.sign
    delta = dt / substeps
    r = np.array(r0, dtype=float, copy=True)
    th = np.array(theta0, dtype=float, copy=True)
    active = np.ones_like(r, dtype=bool)
    for _ in range(substeps):
        ar, at = field_fn(r, th, vpar)
        rh = r + 0.5 * delta * s * ar
        thh = th + 0.5 * delta * s * at
        if r_bounds is not None:
            rh = np.clip(rh, r_bounds[0], r_bounds[1])
        ar, at = field_fn(rh, thh, vpar)
        rn = r + delta * s * ar
        thn = th + delta * s * at
        if r_bounds is None:
            r, th = rn, thn
        else:
            exited = (rn < r_bounds[0]) | (rn > r_bounds[1])
            rn = np.clip(rn, r_bounds[0], r_bounds[1])
            r = np.where(active, rn, r)
            th = np.where(active, thn, th)
            active &= ~exited
    return r, th, ~active


def precompute_foot_table(field_fn, grid: Grid4D, dt: float, substeps: int,
                          direction: Direction) -> FootTable:
    """Integrate every (node, v) trajectory once; fields are time independent."""
    r = np.broadcast_to(grid.r[:, None, None], grid.shape[:2] + (grid.nv,))
    th = np.broadcast_to(grid.theta[None, :, None], r.shape)
    v = np.broadcast_to(grid.vpar[None, None, :], r.shape)
    rf, tf, frozen = integrate_rk2(
        field_fn, r, th, v, dt, substeps, direction,
        r_bounds=(grid.r_min, grid.r_max),
    )
    return FootTable(
        grid, dt, substeps, direction,
        np.ascontiguousarray(rf - r), np.ascontiguousarray(tf - th),
        int(np.count_nonzero(frozen)),
    )


def foot_table_for_model(model: MagneticModel, grid: Grid4D, dt: float,
                         substeps: int, direction: Direction) -> FootTable:
    return precompute_foot_table(linear_rtheta_fn(model), grid, dt, substeps, direction)


# ---------------------------------------------------------------------------
# foot-table cache (restart convenience)
# ---------------------------------------------------------------------------

def foot_table_key(model: MagneticModel, grid: Grid4D, dt: float, substeps: int,
                   direction: Direction) -> str:
    desc = (
        f"{model.kind.value};{model.r0!r};{model.a!r};{model.b0!r};"
        f"{model.q.q0!r};{model.q.qa!r};{model.q.exponent!r};"
        f"{grid.nr};{grid.ntheta};{grid.nphi};{grid.nv};"
        f"{grid.r_min!r};{grid.r_max!r};{grid.v_min!r};{grid.v_max!r};"
        f"{dt!r};{substeps};{direction.name}"
    )
    return hashlib.sha256(desc.encode()).hexdigest()[:16]


def save_foot_table(path, table: FootTable):
    np.savez_compressed(
        path,
        disp_r=table.disp_r,
        disp_t=table.disp_t,
        dt=table.dt,
        substeps=table.substeps,
        direction=table.direction.name,
        n_frozen=table.n_frozen,
    )


def load_foot_table(path, grid: Grid4D) -> FootTable:
    data = np.load(path)
    return FootTable(
        grid,
        float(data["dt"]),
        int(data["substeps"]),
        Direction[str(data["direction"])],
        data["disp_r"],
        data["disp_t"],
        int(data["n_frozen"]),
    )


# ---------------------------------------------------------------------------
# E x B (nonlinear) advection field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridGeometry:
    """Model fields sampled once on the (r, theta) mesh."""

    r: np.ndarray            # (nr, 1)
    rr: np.ndarray           # major radius R, (nr, ntheta)
    b: np.ndarray
    btheta: np.ndarray
    bphi: np.ndarray
    bt_unit: np.ndarray
    bp_unit: np.ndarray
    dbdr: np.ndarray
    dbdth: np.ndarray
    mu0jphi: np.ndarray
    kpar: np.ndarray         # mu0 (b.J)/B, so B*par = B + v*kpar
    js: np.ndarray

    @classmethod
    def sample(cls, model: MagneticModel, grid: Grid4D) -> "GridGeometry":
        r = grid.r[:, None]
        th = grid.theta[None, :]
        shape = (grid.nr, grid.ntheta)
        _, btheta, bphi, b = model.field(r, th)
        dbdr, dbdth = model.grad_bmag(r, th)
        bcast = lambda x: np.ascontiguousarray(np.broadcast_to(x, shape), dtype=float)
        return cls(
            r=r,
            rr=bcast(model.major_radius(r, th)),
            b=bcast(b),
            btheta=bcast(btheta),
            bphi=bcast(bphi),
            bt_unit=bcast(btheta / b),
            bp_unit=bcast(bphi / b),
            dbdr=bcast(dbdr),
            dbdth=bcast(dbdth),
            mu0jphi=bcast(model.mu0_j_phi(r, th)),
            kpar=bcast(model.mu0_b_dot_j(r, th) / b),
            js=bcast(model.jacobian_space(r, th)),
        )

    def bstar_parallel(self, vpar):
        """B*par on the mesh for each v (appends a trailing v axis)."""
        v = np.asarray(vpar)
        return self.b[..., None] + v[None, None, :] * self.kpar[..., None]


def exb_rtheta_brackets(geom: GridGeometry, dphidr, dphidth, dphidphi):
    """Poisson brackets [Phi, r] and [Phi, theta] from nodal Phi derivatives.

    Arguments broadcast over a trailing phi axis; divide by B*par to get the
    drift velocities.
    """
    br_r = geom.bt_unit[..., None] * dphidphi / geom.rr[..., None] \
        - geom.bp_unit[..., None] * dphidth / geom.r[..., None]
    br_t = geom.bp_unit[..., None] * dphidr / geom.r[..., None]
    return br_r, br_t


def exb_phi_bracket(geom: GridGeometry, dphidr):
    """[Phi, phi] = -b_theta dPhi/dr / R."""
    return -geom.bt_unit[..., None] * dphidr / geom.rr[..., None]


def bracket_b_phi(geom: GridGeometry, dphidr, dphidth, dphidphi):
    """[B, Phi] = b.(grad B x grad Phi) from nodal Phi derivatives."""
    return (
        -geom.bt_unit[..., None] * geom.dbdr[..., None] * dphidphi / geom.rr[..., None]
        + geom.bp_unit[..., None]
        * (geom.dbdr[..., None] * dphidth - geom.dbdth[..., None] * dphidr)
        / geom.r[..., None]
    )


def vpar_accel_coeffs(geom: GridGeometry, dphidr, dphidth, dphidphi,
                      m_s=1.0, e_s=1.0):
    """dv/dt = -(e_s A + v C)/(m_s B*par(v)) with x-only fields A, C.

    A = B.grad Phi;  C = m_s/e_s * (mu0 J.grad Phi + [B, Phi]) / B.
    The [B, Phi] term is -(m v/B) vE.grad B written through Eq-(8)-style
    bracket antisymmetry.
    """
    a = geom.btheta[..., None] * dphidth / geom.r[..., None] \
        + geom.bphi[..., None] * dphidphi / geom.rr[..., None]
    c = (
        geom.mu0jphi[..., None] * dphidphi / geom.rr[..., None]
        + bracket_b_phi(geom, dphidr, dphidth, dphidphi)
    ) * (m_s / e_s) / geom.b[..., None]
    return a, c
