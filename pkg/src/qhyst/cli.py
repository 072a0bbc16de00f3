"""Command-line entry point: ``qhyst <subcommand> [options]``.

Exit status is 0 on success, 2 for invalid input and 3 for numerical or
stability failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analysis, io
from .errors import NumericalError, QHystError, ValidationError
from .exact import min_gap_scan
from .hybrid import HybridConfig, run_protocol
from .lz import LzParams, lz_numeric_oracle, transition_probability
from .meanfield import MfaParams, SinusoidalDrive, interaction_picture_trace, run_mfa
from .spin_model import DriveProtocol, UnitSystem, apply_afm_gauge, build_grid, build_ring

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


# ---------------------------------------------------------------- config -> objects


def _lattice(config, physics):
    lat = config["lattice"]
    if lat["kind"] == "ring":
        lattice = build_ring(lat["n"], physics.j)
    else:
        lattice = build_grid(lat["width"], lat["height"], physics.j)
    return apply_afm_gauge(lattice) if lat["afm_gauge"] else lattice


def _drive(config, physics):
    drv = config["drive"]
    s_pause = config["schedule"]["s_pause"]
    if drv["kind"] == "sinusoidal":
        return SinusoidalDrive(drv["h1"] * physics.h_scale, drv["omega"], drv["periods"])
    segments = drv["segments"]
    if segments is not None:
        segments = tuple((f, a * physics.h_scale, b * physics.h_scale) for f, a, b in segments)
    return DriveProtocol(drv["h_max"] * physics.h_scale, drv["t_total"], segments, s_pause)


def _hybrid_config(config, physics, mode=None):
    hyb = config["hybrid"]
    drive = _drive(config, physics)
    if not isinstance(drive, DriveProtocol):
        raise ValidationError("the hybrid simulator needs a triangular drive")
    return HybridConfig(
        lattice=_lattice(config, physics), protocol=drive, gamma=physics.gamma, dt=hyb["dt"],
        k_sc=hyb["k_sc"], v0=hyb["v0"], omega=hyb["omega"], alpha0=hyb["alpha0"], kappa=hyb["kappa"],
        epsilon_floor=hyb["epsilon_floor"], gamma_sync=hyb["gamma_sync"], mode=mode or hyb["mode"],
        record_stride=hyb["record_stride"], seed=hyb["seed"], units=UnitSystem(physics.energy_unit),
        s_value=config["schedule"]["s_pause"] if config["schedule"]["s_pause"] is not None else float("nan"),
        record_populations=hyb["record_populations"],
    )


def _mfa_params(config, physics, gamma):
    mfa = config["mfa"]
    return MfaParams(gamma=gamma, drive=_drive(config, physics), j=physics.j,
                     coordination=mfa["coordination"], lam=mfa["lam"], beta=mfa["beta"], dt=mfa["dt"],
                     variant=mfa["variant"], record_stride=mfa["record_stride"])


def _load(args):
    if args.config is None:
        raise ValidationError("this subcommand needs --config PATH")
    config = io.load_config(args.config)
    if args.seed is not None:
        config["hybrid"]["seed"] = args.seed
        config["output"]["sample_seed"] = args.seed
    physics = io.derive_physics(config, Path(args.config).parent)
    return config, physics


def _out_dir(args, config=None):
    out = Path(args.out or (config["output"]["dir"] if config else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report(args, payload):
    if not args.quiet:
        print(json.dumps(payload, indent=2, sort_keys=True))


def _loop_summary(trace):
    summary = {}
    try:
        loop = analysis.loop_area(trace)
        summary.update(loop_area=loop.area, signed_area=loop.signed)
        summary["reversal_onset"] = analysis.reversal_onset(trace)
    except ValidationError as err:
        summary["loop"] = str(err)
    summary["final_mz"] = float(trace.mz[-1])
    return summary


# ---------------------------------------------------------------- subcommands


def _simulate(args, mode):
    config, physics = _load(args)
    out = _out_dir(args, config)
    hconf = _hybrid_config(config, physics, mode)
    n_samples = config["output"]["samples"]
    seed0 = config["output"]["sample_seed"]
    entries = []

    def observer(t, h, segment, state):
        entries.append(analysis.sample_configurations(
            state, n_samples, seed0 + len(entries), h, segment, hconf.lattice.readout_signs))

    with warnings.catch_warnings():
        if args.quiet:
            warnings.simplefilter("ignore")
        trace = run_protocol(hconf, observer if n_samples else None)
    io.write_trace_csv(trace, out / config["output"]["trace"])
    (out / "config.toml").write_text(io.dump_config(config), encoding="utf-8")
    if entries:
        io.write_sampleset_csv(analysis.SampleSet(entries), out / "samples.csv")
    _report(args, {"mode": hconf.mode, "gamma": physics.gamma, "records": len(trace),
                   "dt_over_tau_lz": trace.meta.get("dt_over_tau_lz"), **_loop_summary(trace)})


def cmd_simulate_hybrid(args):
    _simulate(args, None)


def cmd_simulate_unitary(args):
    _simulate(args, "unitary-only")


def cmd_simulate_mfa(args):
    config, physics = _load(args)
    out = _out_dir(args, config)
    gammas = config["mfa"]["gammas"]
    (out / "config.toml").write_text(io.dump_config(config), encoding="utf-8")
    if gammas is None:
        trace = run_mfa(_mfa_params(config, physics, physics.gamma))
        io.write_trace_csv(trace, out / config["output"]["trace"])
        _report(args, {"gamma": physics.gamma, **_loop_summary(trace)})
        return
    rows = []
    for k, gamma in enumerate(gammas):
        trace = run_mfa(_mfa_params(config, physics, gamma))
        io.write_trace_csv(trace, out / f"mfa_{k:03d}.csv")
        rows.append((gamma, analysis.loop_area(trace).area))
    io.write_table_csv(out / "areas.csv", ("gamma", "area"), rows)
    payload = {"areas": [list(r) for r in rows]}
    if len(rows) >= 4:
        fit = analysis.power_law_fit(*zip(*rows))
        payload.update(a=fit.a, alpha=fit.alpha, c=fit.c, residual=fit.residual)
    _report(args, payload)


def cmd_simulate_ip(args):
    config, physics = _load(args)
    out = _out_dir(args, config)
    trace = interaction_picture_trace(physics.gamma, _drive(config, physics), config["hybrid"]["dt"])
    io.write_trace_csv(trace, out / config["output"]["trace"])
    _report(args, {"gamma": physics.gamma, **_loop_summary(trace)})


def cmd_crossing_scan(args):
    out = _out_dir(args)
    grid = np.linspace(args.h_min, args.h_max, args.points)
    rows = []
    for n in args.sizes:
        for gamma in args.gammas:
            h_cross, gap = min_gap_scan(n, gamma, grid)
            rows.append((n, gamma, h_cross, gap))
    io.write_table_csv(out / "crossings.csv", ("n", "gamma", "h_crossing", "gap"), rows)
    _report(args, {"crossings": [list(r) for r in rows]})


def cmd_lz_check(args):
    out = _out_dir(args)
    exponents = np.geomspace(args.min_exponent, args.max_exponent, args.points)
    # exponent = pi gamma^2 / (2 hdot) with hdot = 1
    params = [LzParams.from_tfim(float(np.sqrt(2.0 * x / np.pi)), 1.0) for x in exponents]
    numeric = lz_numeric_oracle(params)
    formula = np.array([transition_probability(p) for p in params])
    rows = list(zip(exponents, formula, numeric, np.abs(formula - numeric)))
    io.write_table_csv(out / "lz_check.csv", ("exponent", "p_formula", "p_numeric", "abs_diff"), rows)
    _report(args, {"max_abs_diff": float(np.max(np.abs(formula - numeric)))})


def cmd_analyze(args):
    if args.what == "loop":
        traces = [io.read_trace_csv(p) for p in args.inputs]
        _report(args, {str(p): _loop_summary(tr) for p, tr in zip(args.inputs, traces)})
    elif args.what == "kinks":
        groups = {}
        for path in args.inputs:
            trace = io.read_trace_csv(path)
            rate = float(np.nanmax(np.abs(trace.hdot[trace.mask("backward")])))
            groups.setdefault(rate, []).append(trace)
        rates = sorted(groups)
        densities = [analysis.ensemble_kink_density(groups[r]) for r in rates]
        x = 1.0 / np.array(rates)
        y = np.log1p(-np.array(densities))
        fit = analysis.linear_fit(x, y)
        payload = {"hdot": rates, "n_d": densities, "slope": fit.slope, "intercept": fit.intercept,
                   "r_squared": fit.r_squared}
        if args.gamma is not None:
            payload["theoretical_slope"] = analysis.theoretical_kink_slope(args.gamma)
        _report(args, payload)
    else:
        gammas, areas = io.read_table_csv(args.inputs[0], ("gamma", "area"))
        fit = analysis.power_law_fit(gammas, areas)
        _report(args, {"a": fit.a, "alpha": fit.alpha, "c": fit.c, "residual": fit.residual})


def cmd_ssf(args):
    out = _out_dir(args)
    samples = io.load_sampleset_csv(args.samples)
    entry = samples[args.entry]
    n = entry.n_spins
    if args.width:
        if n % args.width:
            raise ValidationError(f"width {args.width} does not divide {n} spins")
        positions = [(i % args.width, i // args.width) for i in range(n)]
    else:
        positions = [(i, 0) for i in range(n)]
    heat = analysis.structure_factor(entry.configs[: args.max_configs], positions, args.size)
    axis = analysis.q_grid(args.size)
    np.savetxt(out / "ssf.csv", heat, delimiter=",", fmt="%.17g")
    np.savetxt(out / "ssf_axis.csv", axis, delimiter=",", fmt="%.17g")
    iy, ix = np.unravel_index(int(np.argmax(heat)), heat.shape)
    _report(args, {"h": entry.h, "segment": entry.segment, "peak_q": [float(axis[ix]), float(axis[iy])],
                   "peak": float(heat[iy, ix])})


# ---------------------------------------------------------------- parser


def _floats(text):
    return [float(v) for v in text.split(",")]


def _ints(text):
    return [int(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output].dir)")
    common.add_argument("--seed", type=int, metavar="N", help="random seed override")
    common.add_argument("--quiet", action="store_true", help="suppress the summary and warnings")

    parser = argparse.ArgumentParser(prog="qhyst", description="Transverse-field Ising hysteresis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    add("simulate-hybrid", cmd_simulate_hybrid, "hybrid quantum/kink-kinetics hysteresis run")
    add("simulate-unitary", cmd_simulate_unitary, "same protocol with kinetics and reweighting off")
    add("simulate-mfa", cmd_simulate_mfa, "mean-field magnetization dynamics")
    add("simulate-ip", cmd_simulate_ip, "single-spin interaction-picture baseline")
    p = add("crossing-scan", cmd_crossing_scan, "locate the first avoided crossing on rings")
    p.add_argument("--sizes", type=_ints, default=[3, 4, 5, 6, 7, 8], help="comma-separated ring sizes")
    p.add_argument("--gammas", type=_floats, default=[0.05, 0.1, 0.3, 0.5], help="comma-separated Gamma/J values")
    p.add_argument("--h-min", type=float, default=-3.0)
    p.add_argument("--h-max", type=float, default=-1.0)
    p.add_argument("--points", type=int, default=201, help="field grid points")
    p = add("lz-check", cmd_lz_check, "compare the crossing formula with direct integration")
    p.add_argument("--min-exponent", type=float, default=0.1)
    p.add_argument("--max-exponent", type=float, default=10.0)
    p.add_argument("--points", type=int, default=25, help="number of exponents, geometrically spaced")
    p = add("analyze", cmd_analyze, "loop areas, kink scaling, area power law")
    p.add_argument("what", choices=("loop", "kinks", "area-scaling"))
    p.add_argument("inputs", nargs="+", help="trace CSVs, or a gamma,area table for area-scaling")
    p.add_argument("--gamma", type=float, help="transverse field, for the theoretical kink slope")
    p = add("ssf", cmd_ssf, "spin structure factor of a sampled configuration set")
    p.add_argument("samples", help="sample-set CSV (h,segment,config)")
    p.add_argument("--entry", type=int, default=0, help="which field point to use")
    p.add_argument("--width", type=int, help="grid width; omit for a chain")
    p.add_argument("--size", type=int, default=analysis.Q_GRID_SIZE, help="q points per axis")
    p.add_argument("--max-configs", type=int, default=100, help="cap on configurations averaged")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except QHystError as err:  # pragma: no cover - every error derives from one of the two above
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
