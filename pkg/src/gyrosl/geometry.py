"""Analytic tokamak/screw-pinch magnetic equilibrium, grids, and motion invariants.

Concentric circular flux surfaces with R = R0 + r*cos(theta), B_phi = B0*R0/R,
B_theta = (r/(q*R0))*B0*R0/R.  The cylindrical variant keeps R == R0 in all
metric factors (periodic cylinder of axial length 2*pi*R0) and drops the
poloidal field, so |B| is uniform and every curvature bracket vanishes.

All evaluation routines broadcast over numpy arrays and accept complex input,
which lets callers differentiate them exactly by complex step.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class MagneticKind(enum.Enum):
    CYLINDRICAL = "cylindrical"
    TOROIDAL = "toroidal"


@dataclass(frozen=True)
class Units:
    """Normalization constants: m_s = e_s = B0 = T0 = 1, lengths in rho_s,
    times in 1/Omega."""

    rho_star: float
    m_s: float = 1.0
    e_s: float = 1.0
    B0: float = 1.0
    T0: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.rho_star <= 1.0:
            raise ValueError(f"rho_star must be in (0, 1], got {self.rho_star}")

    @property
    def v_th0(self) -> float:
        return np.sqrt(self.T0 / self.m_s)

    @property
    def omega_c(self) -> float:
        return self.e_s * self.B0 / self.m_s

    @property
    def a(self) -> float:
        """Minor radius in units of rho_s."""
        return 1.0 / self.rho_star


@dataclass(frozen=True)
class QProfile:
    """Safety factor q(r) = q0 + (qa - q0) * (r/a)**exponent."""

    q0: float
    qa: float
    exponent: float
    a: float

    def __call__(self, r):
        return self.q0 + (self.qa - self.q0) * (r / self.a) ** self.exponent

    def derivative(self, r):
        p = self.exponent
        return (self.qa - self.q0) * p * (r / self.a) ** (p - 1.0) / self.a


# 16-point Gauss-Legendre rule reused by the psi quadrature.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class MagneticModel:
    kind: MagneticKind
    r0: float                    # major radius
    a: float                     # minor radius
    q: QProfile
    b0: float = 1.0
    r_min: float = 0.0
    i_current: float | None = None   # toroidal field function in P_phi; default B0*R0

    def __post_init__(self):
        if self.kind is MagneticKind.TOROIDAL and self.a >= self.r0:
            raise ValueError("toroidal model requires r_max < R0 (a < R0)")

    @property
    def i_factor(self) -> float:
        return self.b0 * self.r0 if self.i_current is None else self.i_current

    # -- local field quantities --------------------------------------------

    def major_radius(self, r, theta):
        if self.kind is MagneticKind.CYLINDRICAL:
            return self.r0 * np.ones_like(np.asarray(r + theta))
        return self.r0 + r * np.cos(theta)

    def pitch(self, r):
        """F(r) = B_theta/B_phi = r/(q(r)*R0); zero in the cylindrical model."""
        if self.kind is MagneticKind.CYLINDRICAL:
            return np.zeros_like(np.asarray(r))
        return r / (self.q(r) * self.r0)

    def field(self, r, theta):
        """Physical components (B_r, B_theta, B_phi) and |B|."""
        if self.kind is MagneticKind.CYLINDRICAL:
            shape = np.broadcast(np.asarray(r), np.asarray(theta)).shape
            z = np.zeros(shape)
            b = np.full(shape, self.b0)
            return z, z.copy(), b, b.copy()
        rr = self.major_radius(r, theta)
        bphi = self.b0 * self.r0 / rr
        f = self.pitch(r)
        btheta = f * bphi
        bmag = bphi * np.sqrt(1.0 + f * f)
        return np.zeros_like(bphi), btheta, bphi, bmag

    def bmag(self, r, theta):
        if self.kind is MagneticKind.CYLINDRICAL:
            return self.b0 * np.ones_like(np.asarray(r + theta))
        f = self.pitch(r)
        return self.b0 * self.r0 * np.sqrt(1.0 + f * f) / self.major_radius(r, theta)

    def grad_bmag(self, r, theta):
        """Analytic (d|B|/dr, d|B|/dtheta)."""
        if self.kind is MagneticKind.CYLINDRICAL:
            z = np.zeros_like(np.asarray(r + theta))
            return z, z.copy()
        f = self.pitch(r)
        qv = self.q(r)
        fp = (qv - r * self.q.derivative(r)) / (qv * qv * self.r0)
        rr = self.major_radius(r, theta)
        b = self.bmag(r, theta)
        dbdr = b * (f * fp / (1.0 + f * f) - np.cos(theta) / rr)
        dbdth = b * r * np.sin(theta) / rr
        return dbdr, dbdth

    def mu0_j_phi(self, r, theta):
        """Toroidal component of mu0*J = curl B (the current is purely toroidal)."""
        if self.kind is MagneticKind.CYLINDRICAL:
            return np.zeros_like(np.asarray(r + theta))
        qv = self.q(r)
        rr = self.major_radius(r, theta)
        return (self.b0 / (qv * rr)) * (
            2.0 - r * self.q.derivative(r) / qv - r * np.cos(theta) / rr
        )

    def mu0_b_dot_j(self, r, theta):
        if self.kind is MagneticKind.CYLINDRICAL:
            return np.zeros_like(np.asarray(r + theta))
        f = self.pitch(r)
        return self.mu0_j_phi(r, theta) / np.sqrt(1.0 + f * f)

    def b_star_parallel(self, r, theta, vpar, m_s=1.0, e_s=1.0):
        b = self.bmag(r, theta)
        return b + (m_s * vpar / (e_s * b)) * self.mu0_b_dot_j(r, theta)

    def poisson_bracket_b(self, r, theta, target: str):
        """[|B|, x^i] = b . (grad|B| x grad x^i) for x^i in {'r','theta','phi'}."""
        if self.kind is MagneticKind.CYLINDRICAL:
            return np.zeros_like(np.asarray(r + theta))
        dbdr, dbdth = self.grad_bmag(r, theta)
        f = self.pitch(r)
        h = np.sqrt(1.0 + f * f)
        bt_unit = f / h
        bp_unit = 1.0 / h
        if target == "r":
            return -bp_unit * dbdth / r
        if target == "theta":
            return bp_unit * dbdr / r
        if target == "phi":
            return -bt_unit * dbdr / self.major_radius(r, theta)
        raise ValueError(f"unknown bracket target {target!r}")

    # -- invariants ---------------------------------------------------------

    def psi(self, r, n_segments: int = 32):
        """Poloidal flux, psi(r) = -int_{r_min}^{r} B0*s/q(s) ds, psi(r_min) = 0.

        Composite 16-point Gauss-Legendre with `n_segments` panels per target."""
        r = np.asarray(r, dtype=float)
        shape = r.shape
        rv = r.ravel()
        length = rv - self.r_min
        total = np.zeros_like(rv)
        for k in range(n_segments):
            lo = self.r_min + length * (k / n_segments)
            width = length / n_segments
            # map GL nodes to each panel
            s = lo[None, :] + (0.5 * (_GL_NODES + 1.0))[:, None] * width[None, :]
            total += 0.5 * width * np.einsum(
                "g,gp->p", _GL_WEIGHTS, self.b0 * s / self.q(s)
            )
        out = -total.reshape(shape)
        return out if shape else float(out)

    def p_phi(self, r, theta, vpar, psi_values=None):
        """Canonical toroidal momentum psi(r) + I*vpar/B(r,theta)."""
        ps = self.psi(r) if psi_values is None else psi_values
        return ps + self.i_factor * vpar / self.bmag(r, theta)

    def energy(self, r, theta, vpar, mu=0.0):
        if np.any(np.asarray(mu) < 0):
            raise ValueError("mu must be non-negative")
        return 0.5 * vpar**2 + mu * self.bmag(r, theta)

    def jacobian_space(self, r, theta):
        """Spatial Jacobian J_s: r (cylindrical) or r*R/R0 (toroidal)."""
        if self.kind is MagneticKind.CYLINDRICAL:
            return r * np.ones_like(np.asarray(theta))
        return r * self.major_radius(r, theta) / self.r0


@dataclass(frozen=True)
class Grid4D:
    """Uniform tensor grid in (r, theta, phi, v_par); theta and phi periodic."""

    nr: int
    ntheta: int
    nphi: int
    nv: int
    r_min: float
    r_max: float
    v_min: float
    v_max: float

    def __post_init__(self):
        if self.nr < 4:
            raise ValueError("Nr must be >= 4")
        if self.ntheta < 4:
            raise ValueError("Ntheta must be >= 4")
        if self.nphi != 1 and self.nphi < 4:
            raise ValueError("Nphi must be 1 or >= 4")
        if self.nv != 1 and self.nv < 4:
            raise ValueError("Nv must be 1 or >= 4")
        if not 0.0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if self.nv == 1:
            if self.v_min != self.v_max:
                raise ValueError("Nv = 1 requires v_min == v_max")
        elif self.v_min >= self.v_max:
            raise ValueError("need v_min < v_max")

    @property
    def dr(self) -> float:
        return (self.r_max - self.r_min) / (self.nr - 1)

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.ntheta

    @property
    def dphi(self) -> float:
        return 2.0 * np.pi / self.nphi

    @property
    def dv(self) -> float:
        return 0.0 if self.nv == 1 else (self.v_max - self.v_min) / (self.nv - 1)

    # node coordinates are pure functions of the index (no running sums)
    @property
    def r(self) -> np.ndarray:
        return self.r_min + np.arange(self.nr) * self.dr

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.ntheta) * self.dtheta

    @property
    def phi(self) -> np.ndarray:
        return np.arange(self.nphi) * self.dphi

    @property
    def vpar(self) -> np.ndarray:
        if self.nv == 1:
            return np.array([self.v_min])
        return self.v_min + np.arange(self.nv) * self.dv

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.nr, self.ntheta, self.nphi, self.nv)

    # quadrature weights: trapezoid on bounded axes, uniform on periodic ones,
    # unit point mass on degenerate axes
    @property
    def w_r(self) -> np.ndarray:
        w = np.full(self.nr, self.dr)
        w[0] = w[-1] = 0.5 * self.dr
        return w

    @property
    def w_theta(self) -> np.ndarray:
        return np.full(self.ntheta, self.dtheta)

    @property
    def w_phi(self) -> np.ndarray:
        return np.full(self.nphi, self.dphi)

    @property
    def w_v(self) -> np.ndarray:
        if self.nv == 1:
            return np.array([1.0])
        w = np.full(self.nv, self.dv)
        w[0] = w[-1] = 0.5 * self.dv
        return w


def _tanh_window(r, lo, hi, width):
    return 0.25 * (1.0 + np.tanh((r - lo) / width)) * (1.0 + np.tanh((hi - r) / width))


@dataclass
class Profiles:
    """Equilibrium density and temperatures on the radial grid."""

    n0: np.ndarray
    te: np.ndarray
    ti: np.ndarray

    def __post_init__(self):
        for name, arr in (("n0", self.n0), ("Te", self.te), ("Ti", self.ti)):
            if np.any(arr <= 0):
                raise ValueError(f"profile {name} must be strictly positive")

    @classmethod
    def flat(cls, grid: Grid4D) -> "Profiles":
        ones = np.ones(grid.nr)
        return cls(ones, ones.copy(), ones.copy())

    @classmethod
    def with_gradients(
        cls,
        grid: Grid4D,
        a: float,
        kappa_n: float = 0.0,
        kappa_te: float = 0.0,
        kappa_ti: float = 0.0,
        r_peak_frac: float = 0.5,
        delta_r_frac: float = 0.2,
        n_edge_floor: float = 1.0,
        edge_width_frac: float = 0.06,
    ) -> "Profiles":
        """X'(r)/X = -kappa_x * cosh^-2((r - r_p)/dr); kappas are in units of 1/a.

        `n_edge_floor` < 1 multiplies n0 by a smooth window dropping to the
        floor at both radial boundaries (keeps the distribution small where
        guiding centers cross the domain edge)."""
        r = grid.r
        rp = r_peak_frac * a
        dr = delta_r_frac * a

        def gen(kappa):
            return np.exp(-(kappa / a) * dr * np.tanh((r - rp) / dr))

        n0 = gen(kappa_n)
        if n_edge_floor < 1.0:
            w = edge_width_frac * a
            win = _tanh_window(r, grid.r_min + 3.0 * w, grid.r_max - 3.0 * w, w)
            n0 = n0 * (n_edge_floor + (1.0 - n_edge_floor) * win)
        return cls(n0, gen(kappa_te), gen(kappa_ti))
