"""Command-line interface: ``pllident {simulate,expected,fit,scan,spikes}``.

Exit codes: 0 success, 2 unreadable input or configuration, 3 numerical
failure, 4 degenerate fit (no usable identification result).
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .config import ConfigError, RegimeConfig, bundled_dir, load_configs, load_regime
from .core import ModelState, SimulationDiverged, count_spikes_per_burst, effective_params, simulate
from .identify import DegenerateSystem, fit_integrated, fit_legacy, reconstruct_f4, retained_fraction
from .io import SeriesFormatError, read_series, write_json, write_table
from .preprocess import ObservationModel, apply_observation, assemble_states, lowpass_smooth, parasite_cutoff
from .series import TimeSeries
from .shiftscan import ScanGrid, default_grid, scan

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NUMERIC = 3
EXIT_DEGENERATE = 4


class Degenerate(Exception):
    """Raised after the report is written when the fit is unusable."""


def resolve_config(spec) -> RegimeConfig:
    """Path to a regime file, or the name of a bundled regime."""
    path = Path(spec)
    if not path.exists():
        candidate = bundled_dir() / f"{spec}.cfg"
        if candidate.exists():
            path = candidate
    return load_regime(path)


def _sha256(path) -> str | None:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return None


def _clean(x):
    """Replace NaN/inf by None so reports are strict JSON."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def rel_err(est, exp):
    if est is None or exp is None or exp == 0:
        return None
    return abs(est - exp) / abs(exp)


def expected_row(cfg: RegimeConfig) -> dict:
    raw = cfg.raw_params()
    alpha = effective_params(raw.canonical())
    return {
        "regime": cfg.name,
        "t_renorm": raw.t_renorm,
        "eps1": raw.eps1,
        "eps2": raw.eps2,
        "gamma": raw.gamma,
        "neg_beta0": -alpha.alpha1,
        "beta1": alpha.alpha0,
        "beta1_e3": alpha.alpha0 * 1e3,
    }


def prepare_observable(series: TimeSeries, cfg: RegimeConfig | None, cutoff, time_units: str,
                       scale: float | None = None):
    """Smooth and scale the raw observable.

    Returns ``(eta, t_renorm, filter_settings)`` with ``eta`` multiplied by
    ``scale`` (default: the configured observation scale ``a``).
    """
    if time_units == "seconds":
        if cfg is None:
            raise ConfigError("<none>", "laboratory time needs a regime config for t_renorm")
        t_renorm = cfg.physical.omega_h / cfg.physical.n
    else:
        t_renorm = 1.0
    if cutoff == "auto":
        cutoff = None
        if time_units == "seconds":
            c = parasite_cutoff(cfg.physical.parasite_frequency, series.dt)
            cutoff = c if 0 < c < 0.5 else None
    elif cutoff in (None, "none"):
        cutoff = None
    else:
        cutoff = float(cutoff)
    if cutoff is not None:
        series = lowpass_smooth(series, cutoff)
    if scale is not None:
        a = float(scale)
    else:
        a = cfg.observation.a if cfg is not None else 1.0
    if a != 1.0:
        series = apply_observation(series, ObservationModel(a=a, b=0.0))
    return series, t_renorm, {"cutoff": cutoff, "filter": "butterworth-4-zero-phase" if cutoff else None, "a": a}


def run_fit(
    series: TimeSeries,
    cfg: RegimeConfig | None,
    b_trial="scan",
    k_order: int = 1,
    cutoff="auto",
    time_units: str = "seconds",
    grid: ScanGrid | None = None,
    method: str = "integrated",
    y_floor: float | None = None,
    workers: int | None = None,
    scale: float | None = None,
):
    """Full identification pipeline; returns ``(report, graph, scan_result)``."""
    eta, t_renorm, filt = prepare_observable(series, cfg, cutoff, time_units, scale)
    scan_result = None
    if b_trial == "scan":
        grid = grid or default_grid(eta)
        scan_result = scan(eta, grid, t_renorm, k_order, workers=workers)
        b_hat = scan_result.chosen_b
        b_used = b_hat
    else:
        b_hat = None
        b_used = float(b_trial)

    report = {
        "tool": {"name": "pllident", "version": __version__, "backend": _backend.BACKEND},
        "regime": cfg.name if cfg else None,
        "b_trial": b_used,
        "b_hat": b_hat,
    }
    if cfg is not None:
        raw = cfg.raw_params()
        alpha = effective_params(raw.canonical())
        report["dimensionless"] = {
            "eps1": raw.eps1, "eps2": raw.eps2, "gamma": raw.gamma, "t_renorm": raw.t_renorm,
        }
        report["expected"] = {"beta0": alpha.alpha1, "beta1": alpha.alpha0}
    else:
        alpha = None
    report["provenance"] = {
        "k_order": k_order,
        "time_units": time_units,
        "t_renorm_used": t_renorm,
        "grid": grid.as_dict() if grid is not None else None,
        **filt,
    }
    if scan_result is not None:
        report["scan"] = scan_result.summary()

    graph = None
    if b_used is None:
        report["estimated"] = None
        report["relative_errors"] = None
        return _clean(report), graph, scan_result

    ens = assemble_states(eta, b_used, t_renorm, need_second_derivative=method in ("legacy", "both"))
    if method in ("integrated", "both"):
        fit = fit_integrated(ens, b_used, k_order)
        report["estimated"] = fit.as_dict()
        if alpha is not None:
            report["relative_errors"] = {
                "beta0": rel_err(fit.beta0, alpha.alpha1),
                "beta1": rel_err(fit.beta1, alpha.alpha0),
            }
        if fit.valid:
            graph = reconstruct_f4(ens, b_used, fit)
    if method in ("legacy", "both"):
        shifted = assemble_states(
            eta.replace_values(eta.values + b_used), 0.0, t_renorm, need_second_derivative=True
        )
        leg = fit_legacy(shifted, y_floor)
        block = leg.as_dict()
        block["retained_fraction"] = retained_fraction(shifted, y_floor)
        if alpha is not None:
            block["relative_errors"] = {
                "alpha0": rel_err(float(leg.beta[0]), alpha.alpha0),
                "alpha1": rel_err(float(leg.beta[1]), alpha.alpha1),
            }
        report["legacy"] = block
    return _clean(report), graph, scan_result


# -- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = resolve_config(args.config)
    dp = cfg.params()
    init = ModelState(*(float(v) for v in args.init.split(",")))
    transient = args.steps // 5 if args.transient is None else args.transient
    traj = simulate(dp, init, args.dt, args.steps, transient, args.stride)
    write_table(args.out, ["t", "phi", "y", "z"],
                [traj.phi.times, traj.phi.values, traj.y.values, traj.z.values])
    print(f"wrote {len(traj.y)} rows to {args.out}")
    return EXIT_OK


def cmd_expected(args) -> int:
    rows = [expected_row(c) for c in load_configs(args.config)]
    cols = ["regime", "t_renorm", "eps1", "eps2", "gamma", "neg_beta0", "beta1_e3"]
    print(f"{'regime':>7} {'T_renorm':>10} {'eps1':>7} {'eps2':>7} {'gamma':>9} {'-beta0':>9} {'beta1*1e3':>10}")
    for r in rows:
        print(f"{r['regime']:>7} {r['t_renorm']:>10.1f} {r['eps1']:>7.3f} {r['eps2']:>7.3f} "
              f"{r['gamma']:>9.5f} {r['neg_beta0']:>9.5f} {r['beta1_e3']:>10.4f}")
    if args.out:
        _write_rows(args.out, cols, rows)
    return EXIT_OK


def _write_rows(path, cols, rows):
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(str(r[c]) if isinstance(r[c], str) else "%.17g" % r[c] for c in cols))
    from .io import atomic_write_text
    atomic_write_text(path, "\n".join(lines) + "\n")


def _grid_from_args(args):
    given = [args.grid_min, args.grid_max, args.grid_step]
    if all(v is None for v in given):
        return None
    if any(v is None for v in given):
        raise ConfigError("<args>", "--grid-min, --grid-max and --grid-step go together")
    return ScanGrid(args.grid_min, args.grid_max, args.grid_step)


def _provenance(args, cfg):
    return {
        "input": str(args.series),
        "input_sha256": _sha256(args.series),
        "config": cfg.source if cfg else None,
        "config_sha256": cfg.digest if cfg else None,
        "argv": list(args.argv),
    }


def cmd_fit(args) -> int:
    cfg = resolve_config(args.config) if args.config else None
    series = read_series(args.series, column=args.column)
    b_trial = "scan" if args.b_trial == "scan" else float(args.b_trial)
    report, graph, scan_result = run_fit(
        series, cfg, b_trial, args.k_order, args.cutoff, args.time_units,
        _grid_from_args(args), args.method, args.y_floor, args.workers, args.scale,
    )
    report["provenance"].update(_provenance(args, cfg))
    out = Path(args.out)
    write_json(out, report)
    if graph is not None:
        graph_path = Path(args.graph) if args.graph else out.with_name(out.stem + "_f4.csv")
        write_table(graph_path, ["psi", "f4"], [graph.psi_sorted, graph.f4_values])
    if scan_result is not None and args.scan_out:
        _write_scan(args.scan_out, scan_result)
    est = report.get("estimated")
    if est is None or not est.get("valid", False):
        raise Degenerate("no valid fit (see report)")
    print(f"beta = {est['beta']}  L = {est['l_value']:.6g}  b = {report['b_trial']}")
    return EXIT_OK


def _write_scan(path, res):
    write_table(path, ["b_trial", "L", "abs_beta1", "beta0", "monotonic"],
                [res.b_values, res.l_values, res.beta1_abs, res.beta0,
                 res.monotonic_flags.astype(int)])


def cmd_scan(args) -> int:
    cfg = resolve_config(args.config) if args.config else None
    series = read_series(args.series, column=args.column)
    eta, t_renorm, filt = prepare_observable(series, cfg, args.cutoff, args.time_units, args.scale)
    grid = _grid_from_args(args) or default_grid(eta)
    res = scan(eta, grid, t_renorm, args.k_order, workers=args.workers)
    out = Path(args.out)
    _write_scan(out, res)
    summary = {
        "tool": {"name": "pllident", "version": __version__, "backend": _backend.BACKEND},
        "regime": cfg.name if cfg else None,
        **res.summary(),
        "grid": grid.as_dict(),
        "k_order": args.k_order,
        "t_renorm_used": t_renorm,
        "filter": filt,
        "provenance": _provenance(args, cfg),
    }
    summary_path = Path(args.summary) if args.summary else out.with_suffix(".json")
    write_json(summary_path, _clean(summary))
    print(f"slope index {res.slope_index}, chosen b = {res.chosen_b}")
    if res.chosen_b is None:
        raise Degenerate("no admissible |beta1| minimum left of the slope")
    return EXIT_OK


def cmd_spikes(args) -> int:
    if args.series:
        y = read_series(args.series, column=args.column)
    else:
        if not args.config:
            raise ConfigError("<args>", "give --series or --config")
        cfg = resolve_config(args.config)
        transient = args.steps // 5 if args.transient is None else args.transient
        y = simulate(cfg.params(), ModelState(*(float(v) for v in args.init.split(","))),
                     args.dt, args.steps, transient, args.stride).y
    counts = count_spikes_per_burst(y, args.threshold, args.burst_gap)
    hist = {}
    for c in counts:
        hist[str(c)] = hist.get(str(c), 0) + 1
    result = {"n_bursts": len(counts), "counts": counts, "histogram": hist}
    print(f"{len(counts)} bursts; spikes per burst: {hist}")
    if args.out:
        write_json(args.out, result)
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def _sim_flags(p):
    p.add_argument("--dt", type=float, default=1e-3, help="dimensionless step")
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--transient", type=int, default=None, help="samples dropped (default: 20%%)")
    p.add_argument("--stride", type=int, default=1, help="keep every N-th sample")
    p.add_argument("--init", default="0,0.1,0", help="initial phi,y,z")


def _fit_flags(p):
    p.add_argument("--series", required=True, help="CSV with columns t,value")
    p.add_argument("--column", default="value")
    p.add_argument("--k-order", type=int, default=1)
    p.add_argument("--cutoff", default="auto", help="normalised cutoff, 'auto' or 'none'")
    p.add_argument("--time-units", choices=("seconds", "model"), default="seconds")
    p.add_argument("--grid-min", type=float)
    p.add_argument("--grid-max", type=float)
    p.add_argument("--grid-step", type=float)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--scale", type=float, default=None,
                   help="observation scale a applied to the series (default: from config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pllident", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a regime and write t,phi,y,z")
    p.add_argument("--config", required=True, help="regime file or bundled regime name")
    p.add_argument("--out", required=True)
    _sim_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("expected", help="expected beta0, beta1 from circuit values")
    p.add_argument("--config", default=None, help="regime file or directory (default: bundled)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_expected)

    p = sub.add_parser("fit", help="identify the model from an observable")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="JSON report")
    p.add_argument("--graph", help="f4 CSV (default: <out>_f4.csv)")
    p.add_argument("--scan-out", help="scan CSV when --b-trial scan")
    p.add_argument("--b-trial", default="scan", help="shift value or 'scan'")
    p.add_argument("--method", choices=("integrated", "legacy", "both"), default="integrated")
    p.add_argument("--y-floor", type=float, default=None)
    _fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("scan", help="L and |beta1| over trial shifts")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="scan CSV")
    p.add_argument("--summary", help="JSON summary (default: <out>.json)")
    _fit_flags(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("spikes", help="spikes per burst")
    p.add_argument("--series")
    p.add_argument("--column", default="y")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--burst-gap", type=float, default=None)
    _sim_flags(p)
    p.set_defaults(func=cmd_spikes)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except (ConfigError, SeriesFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SimulationDiverged, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (Degenerate, DegenerateSystem) as exc:
        print(f"degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
