"""Command-line front end (``steklov-lab``)."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .checks import Sweep, scenario_profile
from .config import CHECKS, ConfigError, Scenario, load_scenario, scenario_from_dict
from .cross_section import parse_length
from .harness import run_scenario, summary_lines, sweep_csv, to_json, write_artifacts, write_atomic, plot_svg
from .mode_solver import ModeProblem, Resolution, build_mesh, dtn_matrix, dump_extension_csv, extension_of, \
    observed_orders, richardson
from .profiles import EpsilonRangeError, MetricFamily
from .rayleigh import BumpFamily, bump_bounds, constant_family, minmax_upper_bound, psi_family
from .spectrum import SpectrumRequest, TruncationError, steklov_spectrum

log = logging.getLogger("steklov_lab")


def _add_geometry(p: argparse.ArgumentParser, *, eps_many: bool = False) -> None:
    g = p.add_argument_group("geometry")
    g.add_argument("--config", type=Path, help="scenario TOML (overrides the geometry flags)")
    g.add_argument("--cross-section", default="circle:1",
                   help='e.g. "circle:1", "torus:2pi,2pi", "sphere:2", "torus:2pi,2pi+torus:2pi,2pi"')
    g.add_argument("--family", choices=("conformal", "warped"), default="conformal")
    g.add_argument("--profile", choices=("identity", "conf1", "conf2", "warped"), default="identity")
    if eps_many:
        g.add_argument("--eps", nargs="+", default=[], help="epsilon grid")
    else:
        g.add_argument("--eps", default=None)
    g.add_argument("-L", "--half-length", dest="L", default="1", help="cylinder is Sigma x [-L, L]")
    g.add_argument("-k", type=int, default=10, help="number of eigenvalues")
    g.add_argument("--strict-epsilon", action=argparse.BooleanOptionalAction, default=True,
                   help="enforce the admissible eps range of each construction")
    g.add_argument("--richardson", action=argparse.BooleanOptionalAction, default=True)
    g.add_argument("--per-unit", type=int, default=Resolution.per_unit)
    g.add_argument("--per-eps", type=int, default=Resolution.per_eps)
    g.add_argument("--min-elements", type=int, default=Resolution.min_elements)


def _scenario(args, checks=()) -> Scenario:
    if args.config:
        return load_scenario(args.config)
    eps = args.eps if isinstance(args.eps, list) else ([] if args.eps is None else [args.eps])
    doc = {
        "scenario": {"name": "cli", "cross_section": args.cross_section, "family": args.family,
                     "profile": args.profile, "L": args.L, "eps": eps, "k": args.k, "checks": list(checks),
                     "strict_epsilon": args.strict_epsilon, "richardson": args.richardson},
        "resolution": {"per_unit": args.per_unit, "per_eps": args.per_eps, "min_elements": args.min_elements},
    }
    return scenario_from_dict(doc)


def _single_eps(sc: Scenario):
    if len(sc.eps) > 1:
        raise ConfigError("scenario.eps", "this command takes a single eps")
    return sc.eps[0] if sc.eps else None


def cmd_spectrum(args) -> int:
    sc = _scenario(args)
    metric = MetricFamily(sc.family, sc.n, scenario_profile(sc, _single_eps(sc)))
    req = SpectrumRequest(sc.cross_section, metric, k=sc.k, problem=args.problem, depth=args.depth,
                          resolution=sc.resolution, richardson=sc.richardson)
    res = steklov_spectrum(req)
    if args.json:
        write_atomic(args.json, res.to_json() + "\n")
    if args.csv:
        write_atomic(args.csv, res.to_csv())
    print(f"# {args.problem} spectrum, {metric.family} {metric.profile.label}, "
          f"modes solved {res.certificate.modes_solved}, omitted >= {res.certificate.omitted_lower_bound:.6g}")
    print(f"{'j':>4} {'sigma':>22} {'mult':>5}  provenance")
    j = 1
    for e in res.entries:
        if j > sc.k:
            break
        prov = ", ".join(f"lam={b.lam:g} {b.parity} x{b.multiplicity}" for b in e.provenance)
        print(f"{j:>4} {e.value:>22.15g} {e.multiplicity:>5}  {prov}")
        j += e.multiplicity
    return 0


def cmd_dtn(args) -> int:
    sc = _scenario(args)
    metric = MetricFamily(sc.family, sc.n, scenario_profile(sc, _single_eps(sc)))
    interval = tuple(parse_length(v) for v in args.interval) if args.interval else metric.domain
    mp = ModeProblem(args.lam, metric, interval, args.left, args.right)
    mesh = build_mesh(metric.profile, interval, sc.resolution)
    d = dtn_matrix(mp, mesh)
    out = {"lam": args.lam, "interval": list(interval), "ends": [args.left, args.right], "nodes": mesh.size,
           "method": d.method, "matrix": d.matrix.tolist(), "eigenvalues": d.eigenvalues.tolist(),
           "eigenvectors": d.eigenvectors.tolist(), "parity": d.parity()}
    print(json.dumps(out, indent=2, sort_keys=True))
    if args.dump_extension:
        trace = np.array([float(v) for v in args.trace]) if args.trace else d.eigenvectors[:, 0]
        dump_extension_csv(args.dump_extension, mesh, metric, extension_of(mp, mesh, trace))
    return 0


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    sweep = Sweep(sc)
    sweep.warm()
    items = [(e, sweep.at(e)) for e in sweep.eps_values]
    text = sweep_csv(items, sc.k)
    out = args.out or sc.output_dir
    if out:
        out = Path(out)
        write_atomic(out / "sweep.csv", text)
        write_atomic(out / "sweep.json", to_json([{"eps": e, **r.to_dict()} for e, r in items]))
        if args.plot:
            write_atomic(out / "sigma.svg", plot_svg(items, sorted({2, sweep.b, sweep.b + 1}), sc.name))
    sys.stdout.write(text)
    return 0


def cmd_verify(args) -> int:
    status = 0
    for path in args.configs:
        sc = load_scenario(path)
        run = run_scenario(sc)
        print(f"== {sc.name} ({path})")
        for line in summary_lines(run):
            print(line)
        out = args.out / sc.name if args.out else sc.output_dir
        if out:
            for p in write_artifacts(run, out, plot=args.plot):
                log.info("wrote %s", p)
        status |= 0 if run.passed else 1
    return status


def cmd_rayleigh(args) -> int:
    if args.construction == "bumps":
        periods = tuple(parse_length(v) for v in args.periods)
        for k in args.bumps:
            fam = BumpFamily(periods, parse_length(args.L), k, parse_length(args.ball))
            for m, b in zip(args.m, bump_bounds(fam, args.m)):
                print(f"k={k} m={m:g} sigma_{k} <= {b.value:.10g} (+- {b.error:.2g})")
        return 0
    sc = _scenario(args)
    metric = MetricFamily(sc.family, sc.n, scenario_profile(sc, _single_eps(sc)))
    fam = psi_family(sc.cross_section, sc.L) if args.construction == "psi" else constant_family(sc.cross_section)
    b = minmax_upper_bound(fam, metric)
    print(f"{fam.construction}: sigma_{len(fam)} <= {b.value:.15g} (+- {b.error:.2g})")
    return 0


def cmd_convergence(args) -> int:
    sc = _scenario(args)
    metric = MetricFamily(sc.family, sc.n, scenario_profile(sc, _single_eps(sc)))
    j = args.index
    values, widths = [], []
    for lev in range(args.levels):
        res = Resolution(sc.resolution.min_elements * 2**lev, sc.resolution.per_eps * 2**lev,
                         sc.resolution.per_unit * 2**lev)
        req = SpectrumRequest(sc.cross_section, metric, k=max(j, sc.k), resolution=res, richardson=False)
        values.append(steklov_spectrum(req).sigma(j))
        widths.append(req.mesh().max_width)
    exact = args.exact if args.exact is not None else float(richardson(values[-2], values[-1]))
    orders = observed_orders(values, exact)
    print(f"{'level':>5} {'h_max':>12} {'sigma_' + str(j):>22} {'error':>12} {'order':>8}")
    for i, (h, v) in enumerate(zip(widths, values)):
        o = f"{orders[i - 1]:.3f}" if i >= 1 else ""
        print(f"{i:>5} {h:>12.4g} {v:>22.15g} {abs(v - exact):>12.3g} {o:>8}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="steklov-lab", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="one-shot Steklov or Steklov-Dirichlet eigenvalues")
    _add_geometry(p)
    p.add_argument("--problem", choices=("steklov", "steklov-dirichlet"), default="steklov")
    p.add_argument("--depth", type=parse_length, help="collar depth for steklov-dirichlet")
    p.add_argument("--json", type=Path)
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("dtn", help="per-mode Dirichlet-to-Neumann matrix")
    _add_geometry(p)
    p.add_argument("--lam", type=float, required=True, help="cross-section eigenvalue")
    p.add_argument("--left", choices=("steklov", "dirichlet", "neumann"), default="steklov")
    p.add_argument("--right", choices=("steklov", "dirichlet", "neumann"), default="steklov")
    p.add_argument("--interval", nargs=2, help="sub-interval of the profile domain")
    p.add_argument("--dump-extension", type=Path, help="CSV of (t, h, a) for a harmonic extension")
    p.add_argument("--trace", nargs="+", help="boundary data for --dump-extension")
    p.set_defaults(func=cmd_dtn)

    p = sub.add_parser("sweep", help="spectra across an eps grid")
    _add_geometry(p, eps_many=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the checks of one or more scenario files")
    p.add_argument("configs", nargs="+", type=Path)
    p.add_argument("--out", type=Path, help="artifact root (one subdirectory per scenario)")
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("rayleigh", help="min-max upper bounds from test functions")
    _add_geometry(p)
    p.add_argument("--construction", choices=("psi", "constant", "bumps"), default="psi")
    p.add_argument("--periods", nargs=2, default=["2pi", "2pi"], help="torus periods for bumps")
    p.add_argument("--bumps", nargs="+", type=int, default=[2, 3], help="numbers of bumps")
    p.add_argument("--m", nargs="+", type=float, default=[10, 100, 1000])
    p.add_argument("--ball", default="pi")
    p.set_defaults(func=cmd_rayleigh)

    p = sub.add_parser("convergence", help="mesh-refinement study of one eigenvalue")
    _add_geometry(p)
    p.add_argument("--index", type=int, default=2)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--exact", type=float)
    p.set_defaults(func=cmd_convergence)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, EpsilonRangeError, TruncationError, ValueError, OSError) as exc:
        print(f"steklov-lab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
