"""Conservation diagnostics and file output.

All integrals share one quadrature: the phase-space measure J_s * B*par with
trapezoid weights on bounded axes (r, v), uniform weights on periodic ones,
and a unit point mass on degenerate single-node axes.  Numbers are printed
with 17 significant digits so every CSV round-trips bit-exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

import numpy as np

from .characteristics import GridGeometry
from .geometry import Grid4D

SERIES_HEADER = "t,u1,uinf,mass,fmax,Ekin,Epot,Etotdev,dmassL,dmassN,boundaryloss"


def fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class DiagnosticsRecord:
    t: float
    u1: float
    uinf: float
    mass: float
    fmax: float
    e_kin: float
    e_pot: float
    e_tot_dev: float
    dmass_l: float
    dmass_n: float
    boundary_loss: float

    def validate(self):
        vals = [getattr(self, f.name) for f in fields(self)]
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError(f"non-finite diagnostics record at t={self.t}")

    def row(self) -> str:
        return ",".join(
            fmt(getattr(self, f.name)) for f in fields(self)
        )


def phase_space_weights(geom: GridGeometry, grid: Grid4D, bstar: np.ndarray):
    """w(r, theta, v) = J_s B*par * w_r * w_theta * w_phi * w_v (phi collapsed:
    the weight is phi independent, the phi sum carries dphi)."""
    w = geom.js[:, :, None] * bstar
    w = w * grid.w_r[:, None, None]
    w = w * grid.w_v[None, None, :]
    return w * grid.dtheta * grid.dphi


def mass_and_max(f, weights):
    """(||f||_1 integral with the phase-space measure, sup |f|)."""
    mass = float(np.einsum("rtpv,rtv->", f, weights))
    return mass, float(np.max(np.abs(f)))


def norms_vs_initial(f, f0, weights):
    """u_1 and u_inf distances from the retained t=0 state."""
    diff = np.abs(f - f0)
    return float(np.einsum("rtpv,rtv->", diff, weights)), float(diff.max())


def kinetic_energy(f, f_eq, weights, vpar):
    delta = f - (f_eq if f_eq.ndim == 4 else f_eq[:, None, None, :])
    return float(np.einsum("rtpv,rtv,v->", delta, weights, 0.5 * vpar**2))


def potential_energy(phi, rho, n0, geom: GridGeometry, grid: Grid4D):
    w = geom.js * grid.w_r[:, None] * grid.dtheta * grid.dphi
    return 0.5 * float(np.einsum("rtp,rtp,r,rt->", phi, rho, n0, w))


def energies(f, f_eq, phi, rho, n0, geom, grid, weights, vpar, e_kin_ref=0.0):
    """(E_kin, E_pot, E_tot_dev) with E_tot_dev = (E_kin - E_kin(0)) + E_pot."""
    e_kin = kinetic_energy(f, f_eq, weights, vpar)
    e_pot = potential_energy(phi, rho, n0, geom, grid)
    return e_kin, e_pot, (e_kin - e_kin_ref) + e_pot


# ---------------------------------------------------------------------------
# file output
# ---------------------------------------------------------------------------

def write_series_csv(path, records):
    try:
        with open(path, "w") as fh:
            fh.write(SERIES_HEADER + "\n")
            for rec in records:
                fh.write(rec.row() + "\n")
    except OSError as exc:
        raise OSError(f"cannot write diagnostics series to {path}: {exc}") from exc


def read_series_csv(path):
    """Parse a diagnostics series; returns dict of column -> ndarray."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != SERIES_HEADER:
            raise ValueError(
                f"unexpected diagnostics header in {path}: {header!r}"
            )
        data = [line.split(",") for line in fh if line.strip()]
    cols = SERIES_HEADER.split(",")
    arr = np.array(data, dtype=float) if data else np.zeros((0, len(cols)))
    return {c: arr[:, i] for i, c in enumerate(cols)}


def slice_filename(field: str, t: float, phi_index: int, v_index: int) -> str:
    return f"{field}_t{t:g}_phi{phi_index}_v{v_index}.csv"


def write_slice_csv(path, matrix, coords0, coords1):
    """2D slice dump: two coordinate header lines, then one row per radius."""
    matrix = np.asarray(matrix)
    if matrix.shape != (len(coords0), len(coords1)):
        raise ValueError("slice shape does not match coordinate axes")
    try:
        with open(path, "w") as fh:
            fh.write(",".join(fmt(c) for c in coords0) + "\n")
            fh.write(",".join(fmt(c) for c in coords1) + "\n")
            for row in matrix:
                fh.write(",".join(fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write slice dump to {path}: {exc}") from exc


def read_slice_csv(path):
    with open(path) as fh:
        coords0 = np.array(fh.readline().split(","), dtype=float)
        coords1 = np.array(fh.readline().split(","), dtype=float)
        rows = [line.split(",") for line in fh if line.strip()]
    matrix = np.array(rows, dtype=float)
    if matrix.shape != (coords0.size, coords1.size):
        raise ValueError(f"malformed slice dump {path}")
    return coords0, coords1, matrix


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
