"""Initial conditions and run orchestration for the four experiment families.

case1        equilibrium preservation: f a function of the motion invariant
             P_phi alone, potential forced to zero, drift operator only.
case2        shear-flow / filamentation: the P_phi band additionally windowed
             in theta, run on a single (phi, v) slice for long times.
cylindrical  self-consistent run with the quasineutrality solve, uniform
             axial field (no drifts), temperature-gradient driven.
toroidal     self-consistent run with curvature drifts.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import diagnostics as diag
from .characteristics import Direction
from .geometry import (
    Grid4D,
    MagneticKind,
    MagneticModel,
    Profiles,
    QProfile,
    Units,
)
from .qn_solver import FieldState, QNSolver, compute_rho
from .vlasov import (
    FootMethod,
    Scheme,
    SchemeConfig,
    SplitMode,
    StepCounters,
    VlasovSolver,
)


@dataclass(frozen=True)
class Case1Params:
    pphi1: float
    pphi2: float
    m: int = 1

    def __post_init__(self):
        if not self.pphi1 < self.pphi2:
            raise ValueError("need pphi1 < pphi2")
        if self.m < 1:
            raise ValueError("window exponent m must be >= 1")

    @property
    def gamma(self) -> float:
        return 4.0 * np.pi / (self.pphi2 - self.pphi1)


@dataclass(frozen=True)
class Case2Params:
    pphi1: float
    pphi2: float
    theta1: float
    theta2: float
    m: int = 1

    def __post_init__(self):
        if not self.pphi1 < self.pphi2:
            raise ValueError("need pphi1 < pphi2")
        if not 0.0 <= self.theta1 < self.theta2 <= 2.0 * np.pi:
            raise ValueError("need 0 <= theta1 < theta2 <= 2*pi")


def case1_profile(p, params: Case1Params):
    """Window polynomial times sin(gamma * P_phi), zero outside the band."""
    p = np.asarray(p, dtype=float)
    inside = (p >= params.pphi1) & (p <= params.pphi2)
    val = (
        (p - params.pphi1) ** params.m
        * (p - params.pphi2) ** params.m
        * np.sin(params.gamma * p)
    )
    return np.where(inside, val, 0.0)


def theta_window(theta, params: Case2Params):
    inside = (theta >= params.theta1) & (theta <= params.theta2)
    val = (theta - params.theta1) ** params.m * (theta - params.theta2) ** params.m
    return np.where(inside, val, 0.0)


def select_pphi_band(model: MagneticModel, grid: Grid4D, vslice: float,
                     central_fraction: float = 0.6, guard_cells: int = 4,
                     align_phase: bool = False):
    """A P_phi interval whose preimage avoids the radial boundary bands.

    P_phi decreases with radius overall but varies with theta, so the band is
    fenced between the extreme values attained on the inner and outer guard
    rings, then shrunk to the requested central fraction.  With align_phase
    the band is shifted (within its margins) so that sin(gamma * P) vanishes
    at both edges, removing the slope discontinuity of the windowed profile.
    """
    psi = model.psi(grid.r)
    p = model.p_phi(
        grid.r[:, None], grid.theta[None, :], vslice, psi_values=psi[:, None]
    )
    inner = p[: guard_cells + 1]
    outer = p[-(guard_cells + 1):]
    if inner.mean() > outer.mean():
        hi_cap, lo_cap = inner.min(), outer.max()
    else:
        hi_cap, lo_cap = outer.min(), inner.max()
    if not lo_cap < hi_cap:
        raise ValueError(
            "cannot place a P_phi band clear of the radial boundaries: "
            f"guard bands span [{lo_cap:g}, {hi_cap:g}]"
        )
    width = hi_cap - lo_cap
    margin = 0.5 * (1.0 - central_fraction) * width
    p1, p2 = lo_cap + margin, hi_cap - margin
    if align_phase:
        gamma = 4.0 * np.pi / (p2 - p1)
        ph = (gamma * p1) % np.pi
        shift = -ph / gamma if ph / gamma <= (np.pi - ph) / gamma \
            else (np.pi - ph) / gamma
        p1, p2 = p1 + shift, p2 + shift
    return p1, p2


def init_case1(grid: Grid4D, model: MagneticModel, params: Case1Params):
    """f(t=0) as a function of P_phi alone on the full 4D grid."""
    psi = model.psi(grid.r)
    p = model.p_phi(
        grid.r[:, None, None],
        grid.theta[None, :, None],
        grid.vpar[None, None, :],
        psi_values=psi[:, None, None],
    )
    prange = (p.min(), p.max())
    if not (prange[0] < params.pphi1 and params.pphi2 < prange[1]):
        raise ValueError(
            f"P_phi band [{params.pphi1:g}, {params.pphi2:g}] is not strictly "
            f"inside the achieved range [{prange[0]:g}, {prange[1]:g}]"
        )
    f3 = case1_profile(p, params)
    if np.any(f3[0] != 0.0) or np.any(f3[-1] != 0.0):
        raise ValueError(
            "P_phi band touches a radial boundary ring; shrink the band "
            f"(achieved range [{prange[0]:g}, {prange[1]:g}])"
        )
    return np.ascontiguousarray(
        np.broadcast_to(f3[:, :, None, :], grid.shape), dtype=float
    )


def init_case2(grid: Grid4D, model: MagneticModel, params: Case2Params):
    """Theta-localized variant (no sin factor), on a single (phi, v) slice."""
    if grid.nphi != 1 or grid.nv != 1:
        raise ValueError("case2 requires Nphi = 1 and Nv = 1")
    psi = model.psi(grid.r)
    p = model.p_phi(
        grid.r[:, None], grid.theta[None, :], grid.vpar[0],
        psi_values=psi[:, None],
    )
    band = np.where(
        (p >= params.pphi1) & (p <= params.pphi2),
        (p - params.pphi1) ** params.m * (p - params.pphi2) ** params.m,
        0.0,
    )
    f2 = band * theta_window(grid.theta[None, :], params)
    if np.any(f2[0] != 0.0) or np.any(f2[-1] != 0.0):
        raise ValueError("case2 P_phi band touches a radial boundary ring")
    return np.ascontiguousarray(f2[:, :, None, None], dtype=float)


def init_maxwellian_perturbed(grid: Grid4D, model: MagneticModel,
                              profiles: Profiles, m_mode: int, n_mode: int,
                              eps: float, bump_width_frac: float = 0.12,
                              bump_center_frac: float = 0.5):
    """Local Maxwellian equilibrium with a single-mode density perturbation.

    Returns (f 4D, f_eq as (nr, nv)).  The radial envelope vanishes exactly
    on the boundary rings."""
    if eps < 0:
        raise ValueError("perturbation amplitude must be >= 0")
    ti = profiles.ti[:, None]
    f_eq = profiles.n0[:, None] / np.sqrt(2.0 * np.pi * ti) * np.exp(
        -grid.vpar[None, :] ** 2 / (2.0 * ti)
    )
    x = (grid.r - grid.r_min) / (grid.r_max - grid.r_min)
    rp = grid.r_min + bump_center_frac * (grid.r_max - grid.r_min)
    sigma = bump_width_frac * (grid.r_max - grid.r_min)
    g = np.sin(np.pi * x) ** 2 * np.exp(-((grid.r - rp) / sigma) ** 2)
    phase = np.cos(
        m_mode * grid.theta[None, :, None, None]
        + n_mode * grid.phi[None, None, :, None]
    )
    f = f_eq[:, None, None, :] * (
        1.0 + eps * g[:, None, None, None] * phase
    )
    return np.ascontiguousarray(f), f_eq


# ---------------------------------------------------------------------------
# run specification and simulation driver
# ---------------------------------------------------------------------------

@dataclass
class RunSpec:
    scenario: str
    units: Units
    model: MagneticModel
    grid: Grid4D
    profiles: Profiles
    scheme: SchemeConfig
    t_max: float
    output_period: int = 1                  # steps between diagnostics rows
    output_dir: str | None = None
    slice_times: tuple = ()
    slice_phi_index: int = 0
    slice_v_index: int = 0
    case1: Case1Params | None = None
    case2: Case2Params | None = None
    pphi_fraction: float = 0.6
    band_guard_cells: int | None = None     # default: min(nr, ntheta)//8
    window_exponent: int = 1
    theta_window: tuple = (0.5 * np.pi, 1.5 * np.pi)
    m_mode: int = 5
    n_mode: int = 3
    eps: float = 1e-4
    omega_mu: float = 1.0

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_max / self.scheme.dt))
        if abs(n * self.scheme.dt - self.t_max) > 1e-9 * max(1.0, self.t_max):
            raise ValueError("t_max must be an integer number of macro steps")
        return n


class Simulation:
    """Owns the state of one run: distribution, field, counters, diagnostics."""

    def __init__(self, spec: RunSpec):
        self.spec = spec
        self.grid = spec.grid
        self.model = spec.model
        self.profiles = spec.profiles
        self.solver = VlasovSolver(spec.model, spec.grid, spec.profiles, spec.scheme)
        self.qn = None
        if not spec.scheme.phi_forced_zero:
            self.qn = QNSolver(spec.grid, spec.profiles, b0=spec.model.b0)
        self.f, self.f_eq = self._initial_condition()
        self.f0 = self.f.copy()
        self.solver.set_pinned_boundaries(self.f0)
        self.weights = diag.phase_space_weights(
            self.solver.geom, self.grid, self.solver.bstar
        )
        self.e_kin_ref = diag.kinetic_energy(
            self.f0, self.f_eq, self.weights, self.grid.vpar
        )
        self.state = FieldState.zero(self.solver.geom, self.grid)
        self.counters = StepCounters()
        self.step_index = 0
        self.dmass_l = 0.0
        self.dmass_n = 0.0
        self.records: list[diag.DiagnosticsRecord] = []

    # -- initial conditions ---------------------------------------------------

    def _initial_condition(self):
        spec = self.spec
        guard = spec.band_guard_cells
        if guard is None:
            guard = max(4, min(spec.grid.nr, spec.grid.ntheta) // 8)
        if spec.scenario == "case1":
            if spec.case1 is None:
                p1, p2 = select_pphi_band(
                    spec.model, spec.grid, spec.grid.v_min, spec.pphi_fraction,
                    guard_cells=guard, align_phase=True,
                )
                spec.case1 = Case1Params(p1, p2, m=spec.window_exponent)
            f = init_case1(spec.grid, spec.model, spec.case1)
            return f, np.zeros((spec.grid.nr, spec.grid.nv))
        if spec.scenario == "case2":
            if spec.case2 is None:
                p1, p2 = select_pphi_band(
                    spec.model, spec.grid, spec.grid.v_min, spec.pphi_fraction,
                    guard_cells=guard,
                )
                spec.case2 = Case2Params(
                    p1, p2, spec.theta_window[0], spec.theta_window[1],
                    m=spec.window_exponent,
                )
            f = init_case2(spec.grid, spec.model, spec.case2)
            return f, np.zeros((spec.grid.nr, spec.grid.nv))
        if spec.scenario in ("cylindrical", "toroidal"):
            return init_maxwellian_perturbed(
                spec.grid, spec.model, spec.profiles,
                spec.m_mode, spec.n_mode, spec.eps,
            )
        raise ValueError(f"unknown scenario {spec.scenario!r}")

    # -- stepping ---------------------------------------------------------------

    @property
    def t(self) -> float:
        return self.step_index * self.spec.scheme.dt

    def mass(self) -> float:
        return diag.mass_and_max(self.f, self.weights)[0]

    def _refresh_field(self):
        rho = compute_rho(
            self.f, self.f_eq, self.profiles, self.grid, self.spec.omega_mu
        )
        phi = self.qn.solve(rho)
        self.state = FieldState.build(phi, rho, self.solver.geom, self.grid)

    def step(self):
        """One macro step; updates per-operator mass deltas and counters."""
        cfg = self.spec.scheme
        m0 = self.mass()
        if cfg.phi_forced_zero:
            self.f = self.solver.strang_linear(self.f, cfg.dt_linear, self.counters)
            self.dmass_l = self.mass() - m0
            self.dmass_n = 0.0
        elif cfg.split is SplitMode.LINEAR_NONLINEAR:
            if cfg.symmetrized_split:
                self.f = self.solver.strang_linear(
                    self.f, 0.5 * cfg.dt_linear, self.counters
                )
                m_half = self.mass()
                self._refresh_field()
                self.f = self.solver.strang_nonlinear(
                    self.f, cfg.dt_nonlinear, self.state, self.counters
                )
                m_n = self.mass()
                self.f = self.solver.strang_linear(
                    self.f, 0.5 * cfg.dt_linear, self.counters
                )
                m1 = self.mass()
                self.dmass_l = (m_half - m0) + (m1 - m_n)
                self.dmass_n = m_n - m_half
            else:
                self.f = self.solver.strang_linear(
                    self.f, cfg.dt_linear, self.counters
                )
                m_l = self.mass()
                self.dmass_l = m_l - m0
                self._refresh_field()
                self.f = self.solver.strang_nonlinear(
                    self.f, cfg.dt_nonlinear, self.state, self.counters
                )
                self.dmass_n = self.mass() - m_l
        else:
            self._refresh_field()
            self.f = self.solver.strang_nonlinear(
                self.f, cfg.dt, self.state, self.counters, include_linear=True
            )
            self.dmass_l = self.mass() - m0
            self.dmass_n = 0.0
        self.step_index += 1
        if not np.isfinite(self.f).all():
            raise FloatingPointError(
                f"non-finite distribution after step {self.step_index}"
            )

    def record(self) -> diag.DiagnosticsRecord:
        u1, uinf = diag.norms_vs_initial(self.f, self.f0, self.weights)
        mass, fmax = diag.mass_and_max(self.f, self.weights)
        e_kin, e_pot, e_dev = diag.energies(
            self.f, self.f_eq, self.state.phi, self.state.rho,
            self.profiles.n0, self.solver.geom, self.grid, self.weights,
            self.grid.vpar, self.e_kin_ref,
        )
        rec = diag.DiagnosticsRecord(
            t=self.t, u1=u1, uinf=uinf, mass=mass, fmax=fmax,
            e_kin=e_kin, e_pot=e_pot, e_tot_dev=e_dev,
            dmass_l=self.dmass_l, dmass_n=self.dmass_n,
            boundary_loss=self.counters.boundary_loss,
        )
        rec.validate()
        return rec

    # -- full run -----------------------------------------------------------------

    def _dump_slices(self, out_dir):
        spec = self.spec
        k = spec.slice_phi_index
        m = spec.slice_v_index
        name = diag.slice_filename("f", self.t, k, m)
        diag.write_slice_csv(
            os.path.join(out_dir, name), self.f[:, :, k, m],
            self.grid.r, self.grid.theta,
        )
        if not spec.scheme.phi_forced_zero:
            name = diag.slice_filename("Phi", self.t, k, 0)
            diag.write_slice_csv(
                os.path.join(out_dir, name), self.state.phi[:, :, k],
                self.grid.r, self.grid.theta,
            )

    def run(self):
        """Run to t_max, returning the diagnostics series (also written to
        output_dir together with slice dumps when configured)."""
        spec = self.spec
        out_dir = spec.output_dir
        if out_dir:
            diag.ensure_dir(out_dir)
        slice_steps = {
            int(round(ts / spec.scheme.dt)) for ts in spec.slice_times
        }
        try:
            if self.step_index == 0:
                self.records.append(self.record())
                if out_dir and 0 in slice_steps:
                    self._dump_slices(out_dir)
            n_steps = spec.n_steps
            while self.step_index < n_steps:
                self.step()
                if self.step_index % spec.output_period == 0 \
                        or self.step_index == n_steps:
                    self.records.append(self.record())
                if out_dir and self.step_index in slice_steps:
                    self._dump_slices(out_dir)
        finally:
            if out_dir:
                diag.write_series_csv(
                    os.path.join(out_dir, "diagnostics.csv"), self.records
                )
        return self.records

    # -- restart -----------------------------------------------------------------

    def save_state(self, path):
        np.savez_compressed(
            path,
            f=self.f, f0=self.f0, f_eq=self.f_eq,
            step_index=self.step_index,
            boundary_loss=self.counters.boundary_loss,
            bsl_clamped=self.counters.bsl_clamped,
            e_kin_ref=self.e_kin_ref,
        )

    def load_state(self, path):
        data = np.load(path)
        if data["f"].shape != self.grid.shape:
            raise ValueError("state file does not match the configured grid")
        self.f = np.ascontiguousarray(data["f"])
        self.f0 = np.ascontiguousarray(data["f0"])
        self.f_eq = np.ascontiguousarray(data["f_eq"])
        self.solver.set_pinned_boundaries(self.f0)
        self.step_index = int(data["step_index"])
        self.counters.boundary_loss = float(data["boundary_loss"])
        self.counters.bsl_clamped = int(data["bsl_clamped"])
        self.e_kin_ref = float(data["e_kin_ref"])
        if self.qn is not None and self.step_index > 0:
            self._refresh_field()


# ---------------------------------------------------------------------------
# scenario presets (tuned defaults; everything overridable via the config)
# ---------------------------------------------------------------------------

def _make_model(kind: MagneticKind, units: Units, aspect: float,
                q0: float, qa: float, q_exp: float,
                r_min_frac: float, r_max_frac: float) -> tuple[MagneticModel, float, float]:
    a = units.a
    model = MagneticModel(
        kind, r0=aspect * a, a=a, q=QProfile(q0, qa, q_exp, a),
        b0=units.B0, r_min=r_min_frac * a,
    )
    return model, r_min_frac * a, r_max_frac * a


def default_spec(scenario: str, **overrides) -> RunSpec:
    """Preset RunSpec for each experiment family (paper-scale geometry at
    desk-scale grids); keyword overrides replace preset fields."""
    if scenario in ("case1", "case2"):
        units = Units(rho_star=overrides.pop("rho_star", 0.01))
        # q chosen so the P_phi band has comparable radial and poloidal
        # structure per cell (single-direction refinement then plateaus) and
        # moderate differential rotation over the long case2 runs
        q_def = (4.5, 6.0) if scenario == "case1" else (4.0, 5.0)
        model, rmin, rmax = _make_model(
            MagneticKind.TOROIDAL, units,
            overrides.pop("aspect", 3.0), overrides.pop("q0", q_def[0]),
            overrides.pop("qa", q_def[1]), overrides.pop("q_exp", 2.0),
            overrides.pop("r_min_frac", 0.1), overrides.pop("r_max_frac", 1.0),
        )
        if scenario == "case1":
            n = overrides.pop("n_poloidal", 512)
            grid = Grid4D(
                overrides.pop("nr", n), overrides.pop("ntheta", n),
                1, 1, rmin, rmax, -3.0, -3.0,
            )
            scheme = SchemeConfig(
                scheme=Scheme.BSL,
                foot_method=FootMethod.PRECOMPUTED,
                dt=overrides.pop("dt", 10.0),
                phi_forced_zero=True,
            )
            t_max = overrides.pop("t_max", 100.0)
            window_m = overrides.pop("window_exponent", 2)
        else:
            n = overrides.pop("n_poloidal", 128)
            grid = Grid4D(
                overrides.pop("nr", n), overrides.pop("ntheta", n),
                1, 1, rmin, rmax, -3.0, -3.0,
            )
            scheme = SchemeConfig(
                scheme=Scheme.FSL,
                foot_method=FootMethod.PRECOMPUTED,
                dt=overrides.pop("dt", 10.0),
                phi_forced_zero=True,
            )
            t_max = overrides.pop("t_max", 50000.0)
            window_m = overrides.pop("window_exponent", 1)
        profiles = Profiles.flat(grid)
        spec = RunSpec(
            scenario=scenario, units=units, model=model, grid=grid,
            profiles=profiles, scheme=scheme, t_max=t_max,
            window_exponent=window_m,
            band_guard_cells=overrides.pop("band_guard_cells",
                                           16 if scenario == "case2" else None),
        )
    elif scenario == "cylindrical":
        units = Units(rho_star=overrides.pop("rho_star", 1.0 / 32.0))
        model, rmin, rmax = _make_model(
            MagneticKind.CYLINDRICAL, units,
            overrides.pop("aspect", 3.0), overrides.pop("q0", 1.5),
            overrides.pop("qa", 2.8), overrides.pop("q_exp", 2.0),
            overrides.pop("r_min_frac", 0.1), overrides.pop("r_max_frac", 1.0),
        )
        grid = Grid4D(
            overrides.pop("nr", 64), overrides.pop("ntheta", 128),
            overrides.pop("nphi", 16), overrides.pop("nv", 32),
            rmin, rmax,
            overrides.pop("v_min", -5.0), overrides.pop("v_max", 5.0),
        )
        profiles = Profiles.with_gradients(
            grid, units.a,
            kappa_n=overrides.pop("kappa_n", 0.0),
            kappa_te=overrides.pop("kappa_te", 0.0),
            kappa_ti=overrides.pop("kappa_ti", 8.0),
            r_peak_frac=overrides.pop("r_peak_frac", 0.5),
            delta_r_frac=overrides.pop("delta_r_frac", 0.15),
        )
        scheme = SchemeConfig(
            scheme=Scheme.BSL, foot_method=FootMethod.PRECOMPUTED,
            dt=overrides.pop("dt", 5.0),
            split=SplitMode.LINEAR_NONLINEAR,
        )
        spec = RunSpec(
            scenario=scenario, units=units, model=model, grid=grid,
            profiles=profiles, scheme=scheme,
            t_max=overrides.pop("t_max", 2000.0),
            m_mode=overrides.pop("m_mode", 12), n_mode=overrides.pop("n_mode", 2),
            eps=overrides.pop("eps", 1e-4),
        )
    elif scenario == "toroidal":
        units = Units(rho_star=overrides.pop("rho_star", 1.0 / 40.0))
        model, rmin, rmax = _make_model(
            MagneticKind.TOROIDAL, units,
            overrides.pop("aspect", 3.0), overrides.pop("q0", 1.5),
            overrides.pop("qa", 2.8), overrides.pop("q_exp", 2.0),
            overrides.pop("r_min_frac", 0.1), overrides.pop("r_max_frac", 1.0),
        )
        grid = Grid4D(
            overrides.pop("nr", 128), overrides.pop("ntheta", 128),
            overrides.pop("nphi", 32), overrides.pop("nv", 32),
            rmin, rmax,
            overrides.pop("v_min", -5.0), overrides.pop("v_max", 5.0),
        )
        profiles = Profiles.with_gradients(
            grid, units.a,
            kappa_n=overrides.pop("kappa_n", 0.0),
            kappa_te=overrides.pop("kappa_te", 5.0),
            kappa_ti=overrides.pop("kappa_ti", 5.0),
            r_peak_frac=overrides.pop("r_peak_frac", 0.5),
            delta_r_frac=overrides.pop("delta_r_frac", 0.15),
            n_edge_floor=overrides.pop("n_edge_floor", 1.0),
        )
        scheme = SchemeConfig(
            scheme=Scheme.BSL, foot_method=FootMethod.PRECOMPUTED,
            dt=overrides.pop("dt", 5.0),
            split=SplitMode.LINEAR_NONLINEAR,
        )
        spec = RunSpec(
            scenario=scenario, units=units, model=model, grid=grid,
            profiles=profiles, scheme=scheme,
            t_max=overrides.pop("t_max", 2000.0),
            m_mode=overrides.pop("m_mode", 5), n_mode=overrides.pop("n_mode", 3),
            eps=overrides.pop("eps", 1e-4),
        )
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    if overrides:
        spec = replace(spec, **overrides)
    return spec


def run(spec: RunSpec):
    """Build and execute a simulation; returns (Simulation, records)."""
    sim = Simulation(spec)
    records = sim.run()
    return sim, records
