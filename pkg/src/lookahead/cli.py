"""Command-line entry point.

Every subcommand writes its outputs atomically (temp file + rename) together
with a ``config.txt`` echo of the resolved parameters.  Exit codes: 0 on
success, 2 for invalid input or violated preconditions, 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NumericalError, PreconditionError
from .flux import make_family_j, parse_flux, validate_hypotheses
from .kernel import parse_kernel
from .pde import EVIDENCE_RATIO, GROWTH_FACTOR, SCHEMES, simulate
from .phase import integrate_phase, parse_factor, phase_portrait
from .profiles import parse_profile
from .threshold import (
    RTOL,
    ResolutionWarning,
    build_gamma,
    build_sigma,
    classify_profile,
    gamma_closed_fj,
    sigma_closed_fj,
)

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_NUMERICAL = 3


# ---------------------------------------------------------------- output


def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows, trailer: str = "") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue() + trailer


def _num(v) -> str:
    if v is None:
        return "none"
    return repr(float(v))


class Output:
    """Resolves ``--out``: a directory (existing, or given with a trailing slash) or a file path."""

    def __init__(self, out: str, default_name: str):
        p = Path(out)
        if out.endswith(("/", os.sep)) or p.is_dir() or not default_name:
            self.dir, self.file = p, p / default_name if default_name else None
        else:
            self.dir, self.file = p.parent, p

    def path(self, name: str) -> Path:
        return self.dir / name


def _write_config(out: Output, args: argparse.Namespace) -> None:
    items = {k: v for k, v in sorted(vars(args).items()) if k != "handler"}
    lines = [f"version={__version__}"] + [f"{k}={v}" for k, v in items.items()]
    atomic_write(out.path("config.txt"), "\n".join(lines) + "\n")


def _tol(args) -> float:
    return args.tol if args.tol is not None else RTOL


# ---------------------------------------------------------------- commands


def cmd_validate_flux(args) -> int:
    flux = parse_flux(args.flux)
    report = validate_hypotheses(flux, args.samples)
    text = str(report) + "\n"
    print(text, end="")
    out = Output(args.out, "validation.txt")
    atomic_write(out.file, text)
    _write_config(out, args)
    return EXIT_OK if report.passed else EXIT_PRECONDITION


def _curve(flux, which, tol, step=1e-4):
    if which == "sigma":
        return build_sigma(flux, rho_step=step, rtol=tol)
    return build_gamma(flux, rho_step=step, rtol=tol)


def cmd_curve(args) -> int:
    flux = parse_flux(args.flux)
    curve = _curve(flux, args.which, _tol(args), args.step)
    rows = ((_num(r), _num(v)) for r, v in zip(curve.grid, curve.values))
    trailer = f"# blowup_at={_num(curve.blowup_at)}\n"
    out = Output(args.out, f"{args.which}.csv")
    atomic_write(out.file, _csv_text(("rho", "value"), rows, trailer))
    _write_config(out, args)
    return EXIT_OK


def _read_profile_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True, comments="#")
    missing = {"x", "rho", "drho"} - set(data.dtype.names or ())
    if missing:
        raise PreconditionError(f"profile CSV needs columns x,rho,drho; missing {sorted(missing)}")
    return np.atleast_1d(data["x"]), np.atleast_1d(data["rho"]), np.atleast_1d(data["drho"])


def cmd_classify(args) -> int:
    if parse_kernel(args.kernel).kind != "infinite":
        raise PreconditionError("the classifier only applies to the infinite look-ahead kernel")
    flux = parse_flux(args.flux)
    if (args.profile is None) == (args.input is None):
        raise PreconditionError("give exactly one of --profile or --input")
    if args.profile is not None:
        profile = parse_profile(args.profile)
        x = np.linspace(*profile.support_interval(), args.samples)
        rho, drho = profile.sample(x)
    else:
        x, rho, drho = _read_profile_csv(args.input)
    sigma = build_sigma(flux, rtol=_tol(args))
    gamma = build_gamma(flux, rtol=_tol(args)) if flux.rho_c < 1.0 else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        result = classify_profile(flux, sigma, gamma, x, rho, drho)
    lines = [
        f"region={result.region.value}",
        f"witness_x={_num(result.witness_x)}",
        f"margin={_num(result.margin)}",
    ] + [f"note={n}" for n in result.notes]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    out = Output(args.out, "classification.txt")
    atomic_write(out.file, text)
    _write_config(out, args)
    return EXIT_OK


def cmd_phase(args) -> int:
    flux = parse_flux(args.flux)
    traj = integrate_phase(
        flux, parse_factor(args.factor), args.rho0, args.d0,
        t_max=args.tmax, blowup_cap=args.cap, rtol=_tol(args),
    )
    rows = ((_num(t), _num(r), _num(d)) for t, r, d in zip(traj.t, traj.rho, traj.d))
    trailer = f"# terminal={traj.terminal.value}\n# t_star={_num(traj.t_star)}\n"
    out = Output(args.out, "traj.csv")
    atomic_write(out.file, _csv_text(("t", "rho", "d"), rows, trailer))
    _write_config(out, args)
    print(f"terminal={traj.terminal.value} t_star={_num(traj.t_star)}")
    return EXIT_OK


def _parse_grid(spec: str) -> tuple[int, int]:
    try:
        a, b = spec.lower().split("x")
        n_rho, n_d = int(a), int(b)
    except ValueError:
        raise PreconditionError(f"grid must look like 20x20, got {spec!r}") from None
    if n_rho < 1 or n_d < 1:
        raise PreconditionError("grid sizes must be positive")
    return n_rho, n_d


def _parse_range(spec: str) -> tuple[float, float]:
    lo, _, hi = spec.partition(",")
    return float(lo), float(hi)


def cmd_phase_portrait(args) -> int:
    flux = parse_flux(args.flux)
    n_rho, n_d = _parse_grid(args.grid)
    rho_values = np.linspace(*_parse_range(args.rho_range), n_rho)
    d_values = np.linspace(*_parse_range(args.d_range), n_d)
    rows = phase_portrait(flux, parse_factor(args.factor), rho_values, d_values, rtol=_tol(args))
    table = ((_num(r.rho0), _num(r.d0), r.region.value, r.terminal.value, _num(r.t_star)) for r in rows)
    out = Output(args.out, "portrait.csv")
    atomic_write(out.file, _csv_text(("rho0", "d0", "region", "terminal", "t_star"), table))
    _write_config(out, args)
    agree = sum(r.agrees for r in rows)
    print(f"seeds={len(rows)} agree={agree}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    flux = parse_flux(args.flux)
    kernel = parse_kernel(args.kernel)
    profile = parse_profile(args.profile)
    domain = _parse_range(args.domain) if args.domain else None
    sol, report = simulate(
        flux, kernel, profile, args.tend, n_cells=args.cells, cfl=args.cfl, domain=domain,
        snapshot_dt=args.snapshot_dt, detect=not args.no_detect, scheme=args.scheme,
        local_speed=args.local_speed, growth=args.growth, evidence=args.evidence,
    )
    out = Output(args.out if args.out.endswith(("/", os.sep)) else args.out + os.sep, "")
    x = sol.x
    snap_rows = (
        (_num(t), _num(xi), _num(ri)) for t, rho in sol.snapshots for xi, ri in zip(x, rho)
    )
    atomic_write(out.path("snapshots.csv"), _csv_text(("t", "x", "rho"), snap_rows))
    diag_rows = (
        (_num(r.t), _num(r.mass), _num(r.rho_min), _num(r.rho_max), _num(r.grad_max),
         _num(r.grad_min), _num(r.rhobar_max))
        for r in sol.history
    )
    atomic_write(
        out.path("diagnostics.csv"),
        _csv_text(("t", "mass", "rho_min", "rho_max", "grad_max", "grad_min", "rhobar_max"), diag_rows),
    )
    atomic_write(out.path("shock.txt"), "\n".join(report.as_lines()) + "\n")
    _write_config(out, args)
    bad = [r for r in sol.history if not r.ok]
    print("\n".join(report.as_lines()))
    print(f"t_final={_num(sol.t)} steps={sol.steps} bound_violations={len(bad)}")
    return EXIT_OK


def cmd_profile(args) -> int:
    profile = parse_profile(args.spec)
    lo, hi = profile.support_interval()
    x = np.linspace(lo, hi, args.cells)
    rho, drho = profile.sample(x)
    out = Output(args.out, "profile.csv")
    rows = ((_num(a), _num(b), _num(c)) for a, b, c in zip(x, rho, drho))
    atomic_write(out.file, _csv_text(("x", "rho", "drho"), rows))
    _write_config(out, args)
    return EXIT_OK


def compare_fj(J: float, rtol: float = RTOL, n: int = 4001) -> dict:
    """Max deviations of the numerical curves from the closed forms for f_J."""
    flux = make_family_j(J)
    sigma = build_sigma(flux, rtol=rtol)
    grid = np.linspace(0.01, 0.99, n)
    result = {"sigma_max_dev": float(np.max(np.abs(sigma(grid) - sigma_closed_fj(J, grid))))}
    if J > 1:
        gamma = build_gamma(flux, rtol=rtol)
        grid = np.linspace(flux.rho_c + 0.02, 0.98, n)
        result["gamma_max_dev"] = float(np.max(np.abs(gamma(grid) - gamma_closed_fj(J, grid))))
        rho_e = 4.0 * J / (J + 1.0) ** 2
        result["gamma_at_rho_e"] = float(gamma(rho_e))
    return result


def cmd_compare_fj(args) -> int:
    result = compare_fj(args.J, _tol(args))
    text = "".join(f"{k}={v:.6e}\n" for k, v in result.items())
    print(text, end="")
    out = Output(args.out, "compare_fj.txt")
    atomic_write(out.file, text)
    _write_config(out, args)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output file or directory (default: current directory)")
    common.add_argument("--tol", type=float, default=None, help=f"ODE relative tolerance (default {RTOL:g})")

    parser = argparse.ArgumentParser(
        prog="lookahead",
        description="Critical thresholds and shock formation for look-ahead traffic flow.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, handler, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(handler=handler)
        return p

    p = add("validate-flux", cmd_validate_flux, "check the admissibility hypotheses of a flux")
    p.add_argument("--flux", required=True, help="lwr, fj:<J> or table:<path>")
    p.add_argument("--samples", type=int, default=1000)

    p = add("curve", cmd_curve, "export a threshold curve as rho,value")
    p.add_argument("--flux", required=True)
    p.add_argument("--which", choices=("sigma", "gamma"), required=True)
    p.add_argument("--step", type=float, default=1e-4, help="output grid spacing in rho")

    p = add("classify", cmd_classify, "classify initial data into the trichotomy")
    p.add_argument("--flux", required=True)
    p.add_argument("--profile", help="profile spec, e.g. sech2:A=0.2,w=4")
    p.add_argument("--input", help="CSV with header x,rho,drho")
    p.add_argument("--kernel", default="infinite")
    p.add_argument("--samples", type=int, default=20001)

    p = add("phase", cmd_phase, "integrate one characteristic; emits t,rho,d")
    p.add_argument("--flux", required=True)
    p.add_argument("--rho0", type=float, required=True)
    p.add_argument("--d0", type=float, required=True)
    p.add_argument("--factor", default="one", help="one or lower:<m>")
    p.add_argument("--tmax", type=float, default=1e12)
    p.add_argument("--cap", type=float, default=1e6)

    p = add("phase-portrait", cmd_phase_portrait, "classify and integrate a grid of seeds")
    p.add_argument("--flux", default="fj:2")
    p.add_argument("--grid", default="20x20", help="<n_rho>x<n_d>")
    p.add_argument("--rho-range", default="0.05,0.9")
    p.add_argument("--d-range", default="-2,2")
    p.add_argument("--factor", default="one")

    p = add("simulate", cmd_simulate, "finite-volume run with refinement-certified shock detection")
    p.add_argument("--flux", required=True)
    p.add_argument("--kernel", default="infinite", help="infinite, indicator:<L> or linear:<L>")
    p.add_argument("--profile", required=True)
    p.add_argument("--tend", type=float, required=True)
    p.add_argument("--cells", type=int, default=400)
    p.add_argument("--cfl", type=float, default=0.4)
    p.add_argument("--domain", help="a,b (default: support plus wave travel)")
    p.add_argument("--snapshot-dt", type=float, default=0.1)
    p.add_argument("--scheme", choices=SCHEMES, default="rusanov")
    p.add_argument("--local-speed", action="store_true", help="dissipation |f'| exp(-rhobar) instead of |f'|")
    p.add_argument("--no-detect", action="store_true", help="skip the refinement companion run")
    p.add_argument("--growth", type=float, default=GROWTH_FACTOR, help="gradient growth before a shock counts")
    p.add_argument("--evidence", type=float, default=EVIDENCE_RATIO, help="fine/coarse gradient ratio needed")

    p = add("profile", cmd_profile, "sample an initial profile; emits x,rho,drho")
    p.add_argument("--spec", required=True)
    p.add_argument("--cells", type=int, default=400)

    p = add("compare-fj", cmd_compare_fj, "numerical thresholds against the closed forms for f_J")
    p.add_argument("--J", type=float, required=True)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.tol is not None and not args.tol > 0:
        parser.error("--tol must be positive")
    try:
        return args.handler(args)
    except (PreconditionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
