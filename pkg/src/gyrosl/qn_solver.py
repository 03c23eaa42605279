"""Quasineutrality field solve closing the Vlasov system.

    -(1/n0) div_perp[(n0/B0) grad_perp Phi] + (Phi - <Phi>_FS)/Te = rho

Discretized by Fourier transform in (theta, phi) and a second-order
flux-form tridiagonal solve in r with Dirichlet Phi = 0 at both radial
boundaries.  The flux-surface-average term survives only in the (0,0)
mode, where it cancels the adiabatic response; that mode is solved with
the bare perpendicular operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import bspline
from .characteristics import GridGeometry
from .geometry import Grid4D, Profiles


def compute_rho(f, f_eq, profiles: Profiles, grid: Grid4D, omega_mu: float = 1.0):
    """Velocity moment of (f - f_eq)/n0 with trapezoid weights in v.

    The single mu = 0 point carries the configurable weight omega_mu."""
    f = np.asarray(f)
    f_eq = np.asarray(f_eq)
    if f.shape != grid.shape:
        raise ValueError(f"f shape {f.shape} does not match grid {grid.shape}")
    if f_eq.shape[-1] != grid.nv or f_eq.shape[0] != grid.nr:
        raise ValueError("f_eq shape does not match grid")
    delta = f - (f_eq if f_eq.ndim == 4 else f_eq[:, None, None, :])
    moment = np.tensordot(delta, grid.w_v, axes=([3], [0]))
    return omega_mu * moment / profiles.n0[:, None, None]


def flux_surface_average(phi, geom: GridGeometry, grid: Grid4D):
    """Jacobian-weighted average over (theta, phi) at fixed r."""
    phi = np.asarray(phi)
    num = np.einsum("rtp,rt->r", phi, geom.js)
    den = grid.nphi * geom.js.sum(axis=1)
    return num / den


class QNSolver:
    """Factorized per-mode radial solves; modes (m, n) share the matrix for
    equal m, so each poloidal mode number is factorized once."""

    def __init__(self, grid: Grid4D, profiles: Profiles, b0: float = 1.0):
        self.grid = grid
        self.profiles = profiles
        self.b0 = b0
        r = grid.r
        dr = grid.dr
        n0 = profiles.n0
        g = n0 / b0
        rp = r[:-1] + 0.5 * dr          # half points r_{i+1/2}
        gp = 0.5 * (g[:-1] + g[1:])
        flux = rp * gp                  # r_{i+1/2} (n0/B0)_{i+1/2}
        i = np.arange(1, grid.nr - 1)
        norm = 1.0 / (n0[i] * r[i] * dr * dr)
        self._sub = -flux[i - 1] * norm
        self._sup = -flux[i] * norm
        self._diag_perp = (flux[i] + flux[i - 1]) * norm
        self._r_in = r[i]
        self._adiab = 1.0 / profiles.te[i]
        # poloidal mode numbers as produced by fft along theta
        self._mvals = np.fft.fftfreq(grid.ntheta, d=1.0 / grid.ntheta).round().astype(int)
        self._ab_cache: dict[tuple[int, bool], np.ndarray] = {}

    def _banded(self, m: int, zonal: bool) -> np.ndarray:
        key = (abs(m), zonal)
        ab = self._ab_cache.get(key)
        if ab is None:
            diag = self._diag_perp + (m * m) / (self.b0 * self._r_in**2)
            if not zonal:
                diag = diag + self._adiab
            n = diag.size
            ab = np.zeros((3, n))
            ab[0, 1:] = self._sup[:-1]
            ab[1, :] = diag
            ab[2, :-1] = self._sub[1:]
            self._ab_cache[key] = ab
        return ab

    def solve(self, rho):
        """Solve for Phi on the (r, theta, phi) grid; Phi = 0 on r boundaries."""
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (self.grid.nr, self.grid.ntheta, self.grid.nphi):
            raise ValueError(f"rho shape {rho.shape} does not match grid")
        if not np.isfinite(rho).all():
            raise FloatingPointError("NaN or Inf in quasineutrality source")
        rho_hat = np.fft.fft2(rho, axes=(1, 2))
        phi_hat = np.zeros_like(rho_hat)
        for im, m in enumerate(self._mvals):
            rhs = rho_hat[1:-1, im, :]
            try:
                if im == 0 and self.grid.nphi >= 1:
                    # (0, 0): adiabatic term cancels against <Phi>_FS
                    col = scipy.linalg.solve_banded(
                        (1, 1), self._banded(0, True), rhs[:, :1]
                    )
                    rest = scipy.linalg.solve_banded(
                        (1, 1), self._banded(0, False), rhs[:, 1:]
                    ) if self.grid.nphi > 1 else np.zeros((rhs.shape[0], 0), complex)
                    phi_hat[1:-1, im, :] = np.hstack([col, rest])
                else:
                    phi_hat[1:-1, im, :] = scipy.linalg.solve_banded(
                        (1, 1), self._banded(m, False), rhs
                    )
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError(
                    f"singular radial system for mode m={m}"
                ) from exc
        return np.fft.ifft2(phi_hat, axes=(1, 2)).real


@dataclass
class FieldState:
    """Electric potential snapshot with the derivative fields the advections use."""

    phi: np.ndarray        # (nr, ntheta, nphi)
    rho: np.ndarray
    phi_fs: np.ndarray     # (nr,)
    coeffs: np.ndarray     # (nphi, nr+2, ntheta) per-plane spline coefficients
    dphidr: np.ndarray     # (nr, ntheta, nphi) nodal derivatives
    dphidth: np.ndarray
    dphidphi: np.ndarray

    @classmethod
    def build(cls, phi, rho, geom: GridGeometry, grid: Grid4D) -> "FieldState":
        nr, nt, nphi = phi.shape
        w = np.empty((nphi, nr + 2, nt))
        for k in range(nphi):
            bspline.build_coeffs_2d_into(
                np.ascontiguousarray(phi[:, :, k]), w[k], bspline.BoundaryCondition.NATURAL
            )
        dphidr = np.empty_like(phi)
        dphidth = np.empty_like(phi)
        gr, gt = bspline.nodal_gradient_2d(w, grid.dr, grid.dtheta)
        dphidr[...] = np.moveaxis(gr, 0, 2)
        dphidth[...] = np.moveaxis(gt, 0, 2)
        if nphi > 1:
            dphidphi = (np.roll(phi, -1, axis=2) - np.roll(phi, 1, axis=2)) / (2.0 * grid.dphi)
        else:
            dphidphi = np.zeros_like(phi)
        return cls(
            phi=phi,
            rho=rho,
            phi_fs=flux_surface_average(phi, geom, grid),
            coeffs=w,
            dphidr=dphidr,
            dphidth=dphidth,
            dphidphi=dphidphi,
        )

    @classmethod
    def zero(cls, geom: GridGeometry, grid: Grid4D) -> "FieldState":
        shape3 = (grid.nr, grid.ntheta, grid.nphi)
        return cls.build(np.zeros(shape3), np.zeros(shape3), geom, grid)
