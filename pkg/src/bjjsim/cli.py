"""Command-line entry point: module subcommands and scenario runs.

    bjjsim potential sweep --layout FILE --i2 1.6:3.0:0.1 --out sweep.csv
    bjjsim gpe params --potential quartic --vb-hz 2690 --x0-um 3.8 --n 6000 --out gpe.csv
    bjjsim tmm evolve --params ramp.csv --n 1300 --ti-nk 50 --tau-r-ms 10..80 --out fig2.csv
    bjjsim cfield curve --potential quartic --vb-hz 2690 --x0-um 3.8 --n 6000 \\
        --t-over-tc 0.2:2.0:0.1 --seed 7 --out curve.csv
    bjjsim stats synth --dist binomial --n 1300 --fl 0.5 --shots 10000 --seed 3 --out shots.csv
    bjjsim stats estimate --in shots.csv --bootstrap 2000 --out summary.jsonl
    bjjsim fig4 --config fig4.yaml --out runs/fig4 --seed 1

Exit codes: 0 success, 1 a scenario shape check failed, 2 bad input or a
computation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import constants as const

log = logging.getLogger("bjjsim")

EXIT_OK, EXIT_CHECKS, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def parse_range(text: str, default_step: float | None = None) -> np.ndarray:
    """Inclusive numeric ranges: ``a:b:step``, ``a..b`` (step ``default_step``), ``a..b..step``,
    comma lists, or a single number."""
    text = text.strip()
    try:
        if ":" in text or ".." in text:
            parts = text.split(":") if ":" in text else text.split("..")
            vals = [float(p) for p in parts]
            if len(vals) == 2:
                if default_step is None:
                    raise UsageError(f"range {text!r} needs a step")
                vals.append(default_step)
            if len(vals) != 3:
                raise UsageError(f"cannot parse range {text!r}")
            a, b, s = vals
            if s <= 0 or b < a:
                raise UsageError(f"range {text!r} needs step > 0 and stop >= start")
            n = int(math.floor((b - a) / s + 1e-9)) + 1
            return np.round(a + s * np.arange(n), 12)
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"cannot parse {text!r} as numbers") from exc


def _write_csv(path, header, rows):
    from .scenarios import write_csv

    if path is None or str(path) == "-":
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        from .scenarios import _fmt

        for r in rows:
            w.writerow([_fmt(v) for v in r])
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_csv(path, header, rows)


def _quartic(args):
    from .potential import DoubleWellShape

    if args.potential != "quartic":
        raise UsageError("only --potential quartic is supported here")
    return DoubleWellShape(const.joule(args.vb_hz), args.x0_um * 1e-6)


def _omega_perp(args):
    fy, fz = args.transverse_hz
    return 2 * np.pi * math.sqrt(fy * fz)


# ---------------------------------------------------------------------------
# subcommands


def cmd_potential_sweep(args):
    from . import potential
    from .scenarios import SWEEP_HEADER, sweep_rows

    layout = potential.load_layout(args.layout) if args.layout else potential.default_layout()
    currents = parse_range(args.i2) * const.MA
    box = [tuple(v * 1e-6 for v in args.box_um[i:i + 2]) for i in (0, 2, 4)]
    rows = potential.barrier_sweep(layout, currents, box, wire=args.wire)
    _write_csv(args.out, SWEEP_HEADER, sweep_rows(rows))
    return EXIT_OK


def cmd_gpe_params(args):
    from . import gpe

    shape = _quartic(args)
    grid = gpe.Grid((args.extent_um * 1e-6,), (args.points,))
    params = gpe.GpeParams(args.n, omega_perp=_omega_perp(args))
    from .potential import quartic_eval

    tm = gpe.two_mode_parameters(quartic_eval(shape, grid.x), grid, params)
    _write_csv(args.out, ["vb_Hz", "ec_Hz", "ej_Hz", "mu_Hz", "n"],
               [(args.vb_hz, const.hz(tm.E_C), const.hz(tm.E_J), const.hz(tm.mu), args.n)])
    return EXIT_OK


def read_ramp_csv(path):
    """Ramp nodes (E_C, E_J in Hz) from a ``gpe params`` style table, in row order."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"ec_Hz", "ej_Hz"} <= set(reader.fieldnames):
            raise UsageError(f"{path}: need ec_Hz and ej_Hz columns")
        rows = [(float(r["ec_Hz"]), float(r["ej_Hz"])) for r in reader]
    if not rows:
        raise UsageError(f"{path}: no rows")
    return np.array(rows)


def cmd_tmm_evolve(args):
    from . import twomode
    from .scenarios import ramp_schedule

    nodes = read_ramp_csv(args.params)
    if len(nodes) == 1:
        nodes = np.vstack([nodes, nodes])
    table = {"i2_A": np.linspace(0.0, 1.0, len(nodes)).tolist(),
             "E_C": const.joule(nodes[:, 0]).tolist(), "E_J": const.joule(nodes[:, 1]).tolist()}
    n = twomode.even_atoms(args.n)
    start = twomode.TwoModeSystem(n, table["E_C"][0], max(table["E_J"][0], 0.0))
    rho = twomode.thermal_state(start, args.ti_nk * 1e-9)
    rows = []
    for tau in parse_range(args.tau_r_ms, default_step=10.0):
        if tau == 0:
            o = twomode.observables(rho, start)
        else:
            sched = ramp_schedule(table, tau * 1e-3)
            o = twomode.observables(twomode.evolve(rho, sched, args.dt_us * 1e-6).final,
                                    sched.system(n, sched.times[-1]))
        rows.append((tau, o.xi2, o.xi2_db, o.coherence, o.metrology_gain_db))
    _write_csv(args.out, ["tau_r_ms", "xi2", "xi2_db", "coherence", "gain_db"], rows)
    return EXIT_OK


def cmd_cfield_curve(args):
    from . import classicalfield as cf
    from . import gpe

    shape = _quartic(args)
    fy, fz = args.transverse_hz
    params = gpe.GpeParams(args.n, omega_perp=_omega_perp(args))
    config = cf.SamplerConfig(1e-9, n_sweeps=args.sweeps, burn_in=args.burn_in, alpha=args.alpha, seed=args.seed,
                              transverse=(2 * np.pi * fy, 2 * np.pi * fz))
    t = parse_range(args.t_over_tc)
    rows = cf.xi2_curve(shape, params, t, config, tc_frequencies=args.tc_hz)
    _write_csv(args.out, ["t_over_tc", "xi2", "xi2_err", "n2m_frac", "xi2_tmm_ext", "validity_flag"],
               [(r.t_over_tc, r.xi2, r.xi2_err, r.n2m_frac, r.xi2_tmm_ext, int(r.valid)) for r in rows])
    return EXIT_OK


def _truth(args):
    from . import stats

    if args.dist == "binomial":
        return stats.Binomial(args.n, args.fl, args.jitter)
    if args.dist == "fock":
        return stats.fock(args.n)
    if args.dist == "uniform":
        return stats.uniform_n(args.n)
    if args.dist == "gaussian":
        if args.n2 is None:
            raise UsageError("--dist gaussian needs --n2")
        return stats.gaussian_n(args.n, args.n2)
    raise UsageError(f"unknown distribution {args.dist!r}")


def cmd_stats_synth(args):
    from . import stats

    model = None
    if not args.no_noise:
        model = stats.ImagingNoiseModel.from_file(args.noise_model) if args.noise_model else stats.ImagingNoiseModel()
    ds = stats.synthesize(_truth(args), model, args.shots, args.seed)
    if args.out in (None, "-"):
        stats._write_rows(ds, sys.stdout)
    else:
        stats.write_dataset(ds, args.out)
    return EXIT_OK


def cmd_stats_estimate(args):
    from . import stats

    ds = stats.read_dataset(getattr(args, "in"))
    est = stats.estimate(ds, bootstrap=args.bootstrap, seed=args.seed, level=args.level)
    rec = {
        "input": str(getattr(args, "in")),
        "n_shots": est.n_shots,
        "f_L": est.f_left,
        "f_R": est.f_right,
        "xi2": est.xi2,
        "xi2_db": est.xi2_db if est.xi2 > 0 else None,
        "z2": est.z2,
        "zp2": est.zp2,
        "ci_low": est.ci.low if est.ci else None,
        "ci_high": est.ci.high if est.ci else None,
        "ci_level": args.level if est.ci else None,
        "bootstrap": args.bootstrap,
        "seed": args.seed,
    }
    line = json.dumps(rec, sort_keys=True)
    if args.out in (None, "-"):
        print(line)
    else:
        with open(args.out, "a") as fh:
            fh.write(line + "\n")
    return EXIT_OK


def cmd_scenario(args):
    from . import scenarios

    cfg_path = args.config or scenarios.example_config_path(args.scenario)
    cfg = scenarios.load_config(cfg_path, tag=args.scenario, out=args.out, seed=args.seed)
    summary = scenarios.run(cfg)
    print((cfg.out_dir / "summary.txt").read_text(), end="")
    return EXIT_OK if summary.passed else EXIT_CHECKS


# ---------------------------------------------------------------------------
# parser


def _add_quartic(p, n_default):
    p.add_argument("--potential", default="quartic", choices=["quartic"])
    p.add_argument("--vb-hz", type=float, required=True, help="barrier height (Hz)")
    p.add_argument("--x0-um", type=float, required=True, help="half distance between minima (um)")
    p.add_argument("--n", type=int, default=n_default, help="atom number")
    p.add_argument("--transverse-hz", type=float, nargs=2, default=[1120.0, 1473.0], metavar=("FY", "FZ"))


def build_parser() -> argparse.ArgumentParser:
    from .scenarios import SCENARIOS

    ap = argparse.ArgumentParser(prog="bjjsim", description="Bosonic Josephson junction toolkit")
    ap.add_argument("--version", action="version", version=f"bjjsim {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    pot = sub.add_parser("potential", help="chip potentials").add_subparsers(dest="action", required=True)
    p = pot.add_parser("sweep", help="characterize the trap along the splitting current")
    p.add_argument("--layout", help="layout YAML (default: bundled stand-in chip)")
    p.add_argument("--i2", required=True, help="START:STOP:STEP in mA")
    p.add_argument("--wire", default="I2")
    p.add_argument("--box-um", type=float, nargs=6, default=[-15, 15, -5, 5, 15, 35],
                   metavar=("X0", "X1", "Y0", "Y1", "Z0", "Z1"))
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_potential_sweep)

    g = sub.add_parser("gpe", help="GPE two-mode parameters").add_subparsers(dest="action", required=True)
    p = g.add_parser("params", help="E_C, E_J and mu for a quartic double well (1D)")
    _add_quartic(p, 6000)
    p.add_argument("--extent-um", type=float, default=40.0)
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gpe_params)

    t = sub.add_parser("tmm", help="two-mode dynamics").add_subparsers(dest="action", required=True)
    p = t.add_parser("evolve", help="thermal start, ramp through the parameter table")
    p.add_argument("--params", required=True, help="CSV with ec_Hz, ej_Hz per ramp node (rows in time order)")
    p.add_argument("--n", type=int, default=1300)
    p.add_argument("--ti-nk", type=float, default=50.0, help="initial temperature (nK)")
    p.add_argument("--tau-r-ms", default="10..80", help="ramp durations; A..B steps by 10 ms")
    p.add_argument("--dt-us", type=float, default=10.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tmm_evolve)

    c = sub.add_parser("cfield", help="classical-field thermodynamics").add_subparsers(dest="action", required=True)
    p = c.add_parser("curve", help="xi^2(T) from the classical field and the extended two-mode model")
    _add_quartic(p, 6000)
    p.add_argument("--t-over-tc", required=True, help="START:STOP:STEP")
    p.add_argument("--tc-hz", type=float, nargs=3, default=[411.0, 1120.0, 1473.0])
    p.add_argument("--alpha", type=float, default=1.0, help="cutoff in k_B T above mu")
    p.add_argument("--sweeps", type=int, default=6000)
    p.add_argument("--burn-in", type=int, default=1500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cfield_curve)

    s = sub.add_parser("stats", help="shot statistics").add_subparsers(dest="action", required=True)
    p = s.add_parser("synth", help="synthetic shots")
    p.add_argument("--dist", default="binomial", choices=["binomial", "fock", "uniform", "gaussian"])
    p.add_argument("--n", type=int, default=1300)
    p.add_argument("--fl", type=float, default=0.5)
    p.add_argument("--n2", type=float, help="<n^2> for --dist gaussian")
    p.add_argument("--jitter", type=float, default=0.0, help="relative total-number drift")
    p.add_argument("--shots", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-model", help="imaging-noise YAML (default model if omitted)")
    p.add_argument("--no-noise", action="store_true", help="switch photon noise off")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats_synth)
    p = s.add_parser("estimate", help="xi^2 with photon-noise correction")
    p.add_argument("--in", required=True)
    p.add_argument("--bootstrap", type=int, default=2000)
    p.add_argument("--level", type=float, default=0.68)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="JSONL file to append to (stdout if omitted)")
    p.set_defaults(func=cmd_stats_estimate)

    for tag in SCENARIOS:
        p = sub.add_parser(tag, help=f"run the {tag} scenario")
        p.add_argument("--config", help="scenario YAML (default: the bundled example)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.set_defaults(func=cmd_scenario, scenario=tag)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    from .scenarios import ScenarioError

    try:
        return args.func(args)
    except (UsageError, ScenarioError, ValueError, OSError) as exc:
        print(f"bjjsim: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # module failures carry their own context
        print(f"bjjsim: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
