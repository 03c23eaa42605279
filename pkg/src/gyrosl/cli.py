"""Configuration parsing and run dispatch.

Configs are flat `key = value` text with `#` comments and dotted section
prefixes (geometry., grid., scheme., scenario., output.).  Unknown keys are
hard errors.  A fully resolved copy of the configuration is echoed into the
output directory of every run.

Exit codes: 0 success, 2 configuration error, 3 runtime failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import characteristics, diagnostics, scenarios
from .geometry import MagneticKind
from .vlasov import FootMethod, Scheme, SplitMode


class ConfigError(Exception):
    pass


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s: str):
    return tuple(float(x) for x in s.split(",") if x.strip())


def _enum_parser(enum_cls):
    def parse(s: str):
        for member in enum_cls:
            if member.value.lower() == s.lower() or member.name.lower() == s.lower():
                return member
        names = ", ".join(m.value for m in enum_cls)
        raise ValueError(f"expected one of {names}")
    return parse


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


# key -> (parser, constraint, constraint message); None constraint = any
SCHEMA = {
    "scenario": (str.lower, lambda s: s in ("case1", "case2", "cylindrical", "toroidal"),
                 "one of case1, case2, cylindrical, toroidal"),
    "geometry.kind": (_enum_parser(MagneticKind), None, ""),
    "geometry.aspect_ratio": (float, lambda x: x > 1.0, "R0/a > 1"),
    "geometry.q0": (float, _positive, "q0 > 0"),
    "geometry.qa": (float, _positive, "qa > 0"),
    "geometry.q_exponent": (float, _positive, "exponent > 0"),
    "geometry.rho_star": (float, lambda x: 0.0 < x <= 1.0, "rho_star in (0, 1]"),
    "geometry.r_min_frac": (float, lambda x: 0.0 < x < 1.0, "0 < r_min/a < 1"),
    "geometry.r_max_frac": (float, lambda x: 0.0 < x <= 1.0, "0 < r_max/a <= 1"),
    "grid.Nr": (int, lambda x: x >= 4, "Nr >= 4"),
    "grid.Ntheta": (int, lambda x: x >= 4, "Ntheta >= 4"),
    "grid.Nphi": (int, lambda x: x == 1 or x >= 4, "Nphi = 1 or >= 4"),
    "grid.Nv": (int, lambda x: x == 1 or x >= 4, "Nv = 1 or >= 4"),
    "grid.v_min": (float, None, ""),
    "grid.v_max": (float, None, ""),
    "scheme.scheme": (_enum_parser(Scheme), None, ""),
    "scheme.foot_method": (_enum_parser(FootMethod), None, ""),
    "scheme.dt": (float, _positive, "dt > 0"),
    "scheme.M": (int, lambda x: x >= 1, "M >= 1"),
    "scheme.split": (_enum_parser(SplitMode), None, ""),
    "scheme.phi_forced_zero": (_parse_bool, None, ""),
    "scheme.symmetrized_split": (_parse_bool, None, ""),
    "scheme.dt_linear": (float, _positive, "dt_linear > 0"),
    "scheme.dt_nonlinear": (float, _positive, "dt_nonlinear > 0"),
    "scheme.zero_fields": (_parse_bool, None, ""),
    "scheme.radial_fixed_boundary": (_parse_bool, None, ""),
    "scenario.t_max": (float, _positive, "t_max > 0"),
    "scenario.pphi1": (float, None, ""),
    "scenario.pphi2": (float, None, ""),
    "scenario.pphi_fraction": (float, lambda x: 0.0 < x < 1.0, "fraction in (0,1)"),
    "scenario.band_guard_cells": (int, lambda x: x >= 1, "guard cells >= 1"),
    "scenario.window_exponent": (int, lambda x: x >= 1, "window exponent >= 1"),
    "scenario.theta1": (float, _nonneg, "theta1 >= 0"),
    "scenario.theta2": (float, lambda x: x <= 2 * np.pi, "theta2 <= 2*pi"),
    "scenario.m_mode": (int, None, ""),
    "scenario.n_mode": (int, None, ""),
    "scenario.eps": (float, _nonneg, "eps >= 0"),
    "scenario.kappa_n": (float, None, ""),
    "scenario.kappa_ti": (float, None, ""),
    "scenario.kappa_te": (float, None, ""),
    "scenario.r_peak_frac": (float, lambda x: 0.0 < x < 1.0, "fraction in (0,1)"),
    "scenario.delta_r_frac": (float, _positive, "delta_r/a > 0"),
    "scenario.n_edge_floor": (float, lambda x: 0.0 < x <= 1.0, "floor in (0,1]"),
    "scenario.edge_width_frac": (float, _positive, "width/a > 0"),
    "scenario.omega_mu": (float, _positive, "omega_mu > 0"),
    "output.period": (int, lambda x: x >= 1, "period >= 1"),
    "output.dir": (str, None, ""),
    "output.slice_times": (_parse_floats, None, ""),
    "output.slice_phi_index": (int, _nonneg, "index >= 0"),
    "output.slice_v_index": (int, _nonneg, "index >= 0"),
}

# config keys forwarded as keyword overrides to scenarios.default_spec
_PRESET_KEYS = {
    "geometry.aspect_ratio": "aspect",
    "geometry.q0": "q0",
    "geometry.qa": "qa",
    "geometry.q_exponent": "q_exp",
    "geometry.rho_star": "rho_star",
    "geometry.r_min_frac": "r_min_frac",
    "geometry.r_max_frac": "r_max_frac",
    "grid.Nr": "nr",
    "grid.Ntheta": "ntheta",
    "grid.Nphi": "nphi",
    "grid.Nv": "nv",
    "grid.v_min": "v_min",
    "grid.v_max": "v_max",
    "scheme.dt": "dt",
    "scenario.t_max": "t_max",
    "scenario.kappa_n": "kappa_n",
    "scenario.kappa_ti": "kappa_ti",
    "scenario.kappa_te": "kappa_te",
    "scenario.r_peak_frac": "r_peak_frac",
    "scenario.delta_r_frac": "delta_r_frac",
    "scenario.n_edge_floor": "n_edge_floor",
    "scenario.m_mode": "m_mode",
    "scenario.n_mode": "n_mode",
    "scenario.eps": "eps",
    "scenario.window_exponent": "window_exponent",
    "scenario.band_guard_cells": "band_guard_cells",
}


@dataclass
class RunConfig:
    """Validated flat configuration (defaults resolved when building a spec)."""

    values: dict = field(default_factory=dict)

    @property
    def scenario(self) -> str:
        return self.values["scenario"]

    def build_spec(self) -> scenarios.RunSpec:
        vals = dict(self.values)
        scenario = vals.pop("scenario")
        kwargs = {}
        for key, name in _PRESET_KEYS.items():
            if key in vals:
                kwargs[name] = vals.pop(key)
        spec = scenarios.default_spec(scenario, **kwargs)
        scheme = spec.scheme
        for key, attr in (
            ("scheme.scheme", "scheme"),
            ("scheme.foot_method", "foot_method"),
            ("scheme.M", "substeps"),
            ("scheme.split", "split"),
            ("scheme.phi_forced_zero", "phi_forced_zero"),
            ("scheme.symmetrized_split", "symmetrized_split"),
            ("scheme.dt_linear", "dt_linear"),
            ("scheme.dt_nonlinear", "dt_nonlinear"),
            ("scheme.zero_fields", "zero_fields"),
            ("scheme.radial_fixed_boundary", "radial_fixed_boundary"),
        ):
            if key in vals:
                setattr(scheme, attr, vals.pop(key))
        kind = vals.pop("geometry.kind", None)
        if kind is not None and kind is not spec.model.kind:
            from dataclasses import replace as dreplace
            spec.model = dreplace(spec.model, kind=kind)
        if "scenario.pphi1" in vals or "scenario.pphi2" in vals:
            if not ("scenario.pphi1" in vals and "scenario.pphi2" in vals):
                raise ConfigError("scenario.pphi1 and scenario.pphi2 must be set together")
            p1 = vals.pop("scenario.pphi1")
            p2 = vals.pop("scenario.pphi2")
            if scenario == "case1":
                spec.case1 = scenarios.Case1Params(p1, p2, m=spec.window_exponent)
            elif scenario == "case2":
                t1, t2 = spec.theta_window
                spec.case2 = scenarios.Case2Params(
                    p1, p2, t1, t2, m=spec.window_exponent
                )
        if "scenario.theta1" in vals or "scenario.theta2" in vals:
            t1 = vals.pop("scenario.theta1", spec.theta_window[0])
            t2 = vals.pop("scenario.theta2", spec.theta_window[1])
            spec.theta_window = (t1, t2)
        for key, attr in (
            ("scenario.pphi_fraction", "pphi_fraction"),
            ("scenario.omega_mu", "omega_mu"),
            ("output.period", "output_period"),
            ("output.dir", "output_dir"),
            ("output.slice_times", "slice_times"),
            ("output.slice_phi_index", "slice_phi_index"),
            ("output.slice_v_index", "slice_v_index"),
        ):
            if key in vals:
                setattr(spec, attr, vals.pop(key))
        vals.pop("scenario.edge_width_frac", None)
        if vals:
            raise ConfigError(f"unhandled configuration keys: {sorted(vals)}")
        return spec

    def echo_text(self, spec: scenarios.RunSpec) -> str:
        """Fully resolved flat config reconstructed from the built spec."""
        g = spec.grid
        m = spec.model
        s = spec.scheme
        lines = [
            "# resolved configuration",
            f"scenario = {spec.scenario}",
            f"geometry.kind = {m.kind.value}",
            f"geometry.aspect_ratio = {m.r0 / m.a!r}",
            f"geometry.q0 = {m.q.q0!r}",
            f"geometry.qa = {m.q.qa!r}",
            f"geometry.q_exponent = {m.q.exponent!r}",
            f"geometry.rho_star = {spec.units.rho_star!r}",
            f"geometry.r_min_frac = {g.r_min / m.a!r}",
            f"geometry.r_max_frac = {g.r_max / m.a!r}",
            f"grid.Nr = {g.nr}",
            f"grid.Ntheta = {g.ntheta}",
            f"grid.Nphi = {g.nphi}",
            f"grid.Nv = {g.nv}",
            f"grid.v_min = {g.v_min!r}",
            f"grid.v_max = {g.v_max!r}",
            f"scheme.scheme = {s.scheme.value}",
            f"scheme.foot_method = {s.foot_method.value}",
            f"scheme.dt = {s.dt!r}",
            f"scheme.M = {s.substeps}",
            f"scheme.split = {s.split.value}",
            f"scheme.phi_forced_zero = {str(s.phi_forced_zero).lower()}",
            f"scheme.symmetrized_split = {str(s.symmetrized_split).lower()}",
            f"scheme.zero_fields = {str(s.zero_fields).lower()}",
            f"scheme.radial_fixed_boundary = {str(s.radial_fixed_boundary).lower()}",
            f"scenario.t_max = {spec.t_max!r}",
            f"scenario.omega_mu = {spec.omega_mu!r}",
            f"scenario.window_exponent = {spec.window_exponent}",
            f"output.period = {spec.output_period}",
        ]
        if spec.case1 is not None:
            lines.append(f"scenario.pphi1 = {spec.case1.pphi1!r}")
            lines.append(f"scenario.pphi2 = {spec.case1.pphi2!r}")
        if spec.case2 is not None:
            lines.append(f"scenario.pphi1 = {spec.case2.pphi1!r}")
            lines.append(f"scenario.pphi2 = {spec.case2.pphi2!r}")
            lines.append(f"scenario.theta1 = {spec.case2.theta1!r}")
            lines.append(f"scenario.theta2 = {spec.case2.theta2!r}")
        if spec.scenario in ("cylindrical", "toroidal"):
            lines.append(f"scenario.m_mode = {spec.m_mode}")
            lines.append(f"scenario.n_mode = {spec.n_mode}")
            lines.append(f"scenario.eps = {spec.eps!r}")
        if spec.output_dir:
            lines.append(f"output.dir = {spec.output_dir}")
        if spec.slice_times:
            lines.append(
                "output.slice_times = "
                + ",".join(f"{t:g}" for t in spec.slice_times)
            )
        return "\n".join(lines) + "\n"


def parse_pairs(pairs) -> dict:
    """Validate `key = value` pairs against the schema."""
    values = {}
    for lineno, key, raw in pairs:
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown configuration key {key!r}")
        parser, constraint, msg = SCHEMA[key]
        try:
            val = parser(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: {key} = {raw!r}: {exc}") from exc
        if constraint is not None and not constraint(val):
            raise ConfigError(f"line {lineno}: {key} = {raw!r}: must satisfy {msg}")
        values[key] = val
    return values


def parse_config(text: str) -> RunConfig:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {line!r}")
        key, _, raw = body.partition("=")
        pairs.append((lineno, key.strip(), raw.strip()))
    values = parse_pairs(pairs)
    if "scenario" not in values:
        raise ConfigError("missing required key `scenario`")
    cfg = RunConfig(values)
    cfg.build_spec()   # full validation, including cross-field constraints
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    pairs = []
    for i, ov in enumerate(overrides or ()):
        if "=" not in ov:
            raise ConfigError(f"--override expects key=value, got {ov!r}")
        key, _, raw = ov.partition("=")
        pairs.append((f"override {i + 1}", key.strip(), raw.strip()))
    merged = dict(cfg.values)
    merged.update(parse_pairs(pairs))
    out = RunConfig(merged)
    out.build_spec()
    return out


def _output_dir(cfg_path: str, cfg: RunConfig, out_flag) -> str:
    if out_flag:
        return out_flag
    if "output.dir" in cfg.values:
        return cfg.values["output.dir"]
    root = os.environ.get("GYROSL_OUT", "out")
    stem = os.path.splitext(os.path.basename(cfg_path))[0]
    return os.path.join(root, stem)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gyrosl",
        description="Reduced 4D gyrokinetic semi-Lagrangian Vlasov solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "validate", "precompute-feet"):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--override", action="append", default=[],
                       help="key=value, repeatable")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (performance only)")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args.override)
        spec = cfg.build_spec()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    if args.threads:
        try:
            import numba
            numba.set_num_threads(max(1, args.threads))
        except Exception:
            pass

    if args.command == "validate":
        sys.stdout.write(cfg.echo_text(spec))
        return 0

    try:
        out_dir = _output_dir(args.config, cfg, args.out)
        if args.command == "precompute-feet":
            diagnostics.ensure_dir(out_dir)
            for direction in (characteristics.Direction.BACKWARD,
                              characteristics.Direction.FORWARD):
                table = characteristics.foot_table_for_model(
                    spec.model, spec.grid, spec.scheme.dt,
                    spec.scheme.substeps, direction,
                )
                key = characteristics.foot_table_key(
                    spec.model, spec.grid, spec.scheme.dt,
                    spec.scheme.substeps, direction,
                )
                path = os.path.join(out_dir, f"feet_{key}.npz")
                characteristics.save_foot_table(path, table)
                print(f"wrote {path} ({table.n_frozen} frozen trajectories)")
            return 0
        # run
        spec.output_dir = out_dir
        diagnostics.ensure_dir(out_dir)
        with open(os.path.join(out_dir, "config_resolved.cfg"), "w") as fh:
            fh.write(cfg.echo_text(spec))
        sim = scenarios.Simulation(spec)
        _load_cached_feet(sim, spec, out_dir)
        records = sim.run()
        sim.save_state(os.path.join(out_dir, "state_final.npz"))
        print(f"{len(records)} diagnostics rows -> {out_dir}/diagnostics.csv")
        return 0
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:                     # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


def _load_cached_feet(sim: scenarios.Simulation, spec: scenarios.RunSpec,
                      out_dir: str):
    """Attach precomputed foot tables from a previous `precompute-feet`."""
    for direction in (characteristics.Direction.BACKWARD,
                      characteristics.Direction.FORWARD):
        key = characteristics.foot_table_key(
            spec.model, spec.grid, spec.scheme.dt, spec.scheme.substeps,
            direction,
        )
        path = os.path.join(out_dir, f"feet_{key}.npz")
        if os.path.exists(path):
            sim.solver.register_foot_table(
                characteristics.load_foot_table(path, spec.grid)
            )


def entry():
    sys.exit(main())
