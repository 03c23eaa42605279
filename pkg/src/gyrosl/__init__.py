"""gyrosl: reduced 4D gyrokinetic semi-Lagrangian Vlasov solver.

Backward/forward semi-Lagrangian advection of the guiding-center
distribution on a fixed (r, theta, phi, v_par) grid with mu = 0, a
quasineutrality field solve, and conservation diagnostics."""

from .geometry import Grid4D, MagneticKind, MagneticModel, Profiles, QProfile, Units
from .scenarios import RunSpec, Simulation, default_spec, run
from .vlasov import FootMethod, Scheme, SchemeConfig, SplitMode

__all__ = [
    "Grid4D", "MagneticKind", "MagneticModel", "Profiles", "QProfile", "Units",
    "RunSpec", "Simulation", "default_spec", "run",
    "FootMethod", "Scheme", "SchemeConfig", "SplitMode",
]

__version__ = "0.1.0"
