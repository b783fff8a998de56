"""Command line front end: ``reflected-mmbm {solve,fluid,sweep,simulate,compare}``.

Exit status 0 on success, 2 for invalid input, 3 for numerical failure.
Diagnostics go to stderr as one JSON object per line.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from . import export
from .errors import MmbmError, NumericalError, ValidationError
from .fluid import alt_solution_nullspace, collapse, density_at, finite_buffer_solution
from .limit import interior_grid, stationary_density, time_reversed_density
from .model import build_fluid_approximation, load_model
from .simulation import SimConfig, collapse_law, dkw_bound, ks_distance, simulate_fluid, \
    simulate_mmbm
from .validation import discretization_oracle, lambda_sweep

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

TOL_TIME_REVERSED = 1e-6
TOL_DISCRETIZATION = 1e-4
TOL_KS = 0.02


class UsageError(ValidationError):
    code = "UsageError"


def _diag(**doc):
    sys.stderr.write(json.dumps(doc, default=export._default) + "\n")


@dataclass
class RunManifest:
    command: str
    model: str
    parameters: dict
    outputs: list = field(default_factory=list)
    tool_version: str = __version__
    wall_time: float = 0.0

    def write(self, out_dir):
        path = os.path.join(out_dir, "manifest.json")
        # written last, atomically: its presence marks a completed run
        export.write_json(path, self.__dict__, atomic=True)
        return path


# ---------------------------------------------------------------------------
# commands


def cmd_solve(model, args, man):
    sol = stationary_density(model)
    xs = interior_grid(model.b, args.grid)
    dens = sol.density_grid(xs)
    cdf = np.array([sol.cdf(x) for x in xs])
    out = args.out_dir
    man.outputs.append(export.write_density_csv(os.path.join(out, "density.csv"), xs, dens))
    man.outputs.append(export.write_density_csv(os.path.join(out, "cdf.csv"), xs, cdf))
    man.outputs.append(export.write_json(
        os.path.join(out, "density.json"),
        export.density_sidecar(model.b, sol.mass0, sol.massb, sol.cstar)))
    d0, db = sol.edge_densities()
    summary = {
        "b": model.b,
        "alpha": model.alpha,
        "mean_drift": model.mean_drift,
        "density0": float(d0.sum()),
        "densityb": float(db.sum()),
        "density0_by_phase": d0,
        "densityb_by_phase": db,
        "nu0": sol.nu0,
        "cstar": sol.cstar,
        "K0_eigenvalues": _eig(sol.lm.K0),
        "K0star_eigenvalues": _eig(sol.lm.K0star),
        "phase_marginal": sol.phase_marginal(),
        "mass0": sol.mass0,
        "massb": sol.massb,
    }
    man.outputs.append(export.write_json(os.path.join(out, "summary.json"), summary))


def _eig(A):
    ev = np.linalg.eigvals(A)
    ev = ev[np.lexsort((ev.imag, ev.real))]
    return [[float(z.real), float(z.imag)] for z in ev]


def _need_eps(args):
    if args.eps is None:
        raise UsageError("--eps is required")
    return args.eps


def cmd_fluid(model, args, man):
    eps = _need_eps(args)
    fluid = build_fluid_approximation(model, eps)
    sol = finite_buffer_solution(fluid, model.b)
    xs = interior_grid(model.b, args.grid)
    full = np.array([density_at(sol, x)[0] for x in xs])
    out = args.out_dir
    man.outputs.append(export.write_density_csv(os.path.join(out, "density.csv"), xs, collapse(full)))
    man.outputs.append(export.write_json(
        os.path.join(out, "density.json"),
        export.density_sidecar(model.b, sol.p0_minus, sol.pb_plus, sol.c, eps=eps)))
    summary = {
        "eps": eps,
        "b": model.b,
        "p0_minus": sol.p0_minus,
        "pb_plus": sol.pb_plus,
        "c": sol.c,
        "nu": sol.nu,
        "total_mass": sol.total_mass,
        "condition_numbers": sol.cond,
    }
    if args.check_alt:
        alt = alt_solution_nullspace(fluid, model.b)
        alt_full = np.array([density_at(alt, x)[0] for x in xs])
        scale = max(np.abs(full).max(), 1.0)
        summary["discrepancy"] = float(max(
            np.abs(full - alt_full).max() / scale,
            np.abs(sol.p0_minus - alt.p0_minus).max(),
            np.abs(sol.pb_plus - alt.pb_plus).max()))
    man.outputs.append(export.write_json(os.path.join(out, "summary.json"), summary))


def _parse_eps_list(text):
    try:
        vals = [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"bad --eps-list {text!r}") from None
    if not vals:
        raise UsageError("--eps-list is empty")
    return vals


def cmd_sweep(model, args, man):
    if args.eps_list is None:
        raise UsageError("--eps-list is required")
    eps = _parse_eps_list(args.eps_list)
    rep = lambda_sweep(model, eps, n_grid=args.grid)
    out = args.out_dir
    man.outputs.append(export.write_sweep_csv(os.path.join(out, "sweep.csv"), rep))
    man.outputs.append(export.write_json(os.path.join(out, "sweep.json"), {
        "slope": rep.slope, "monotone": rep.monotone(), "points": rep.to_dict()["points"]}))


def _sim_config(args):
    return SimConfig(horizon=args.horizon, burn_in=args.burn_in, step=args.step,
                     sample_dt=args.sample_dt, seed=args.seed, grid=args.bins,
                     boundary=args.boundary)


def cmd_simulate(model, args, man):
    out = args.out_dir
    if args.mode == "fluid":
        eps = _need_eps(args)
        fluid = build_fluid_approximation(model, eps)
        cfg = _sim_config(args)
        emp = collapse_law(simulate_fluid(fluid, model.b, cfg))
        ref = finite_buffer_solution(fluid, model.b)
    else:
        cfg = _sim_config(args)
        emp = simulate_mmbm(model, cfg)
        ref = stationary_density(model)
    n_eff = emp.effective_sample_size()
    man.outputs.append(export.write_histogram_csv(os.path.join(out, "histogram.csv"), emp))
    summary = {
        "mode": args.mode,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "eps": args.eps if args.mode == "fluid" else None,
        "n_samples": emp.n_samples,
        "n_effective": n_eff,
        "boundary_fraction0": emp.frac0,
        "boundary_fractionb": emp.fracb,
        "local_time_rate0": emp.local_time_rate0,
        "local_time_rateb": emp.local_time_rateb,
        "phase_occupancy": emp.phase_occupancy,
        "ks": ks_distance(emp, ref.cdf),
        "ks_dkw_3sigma": dkw_bound(n_eff),
    }
    man.outputs.append(export.write_json(os.path.join(out, "summary.json"), summary))


def cmd_compare(model, args, man):
    sol = stationary_density(model)
    tr = time_reversed_density(model, sol.lm)
    xs = interior_grid(model.b, args.grid)
    d_tr = float(np.abs(sol.density_grid(xs) - tr.joint_density_grid(xs)).max())

    centres, disc = discretization_oracle(model, args.cells)
    d_disc = float(np.abs(disc - sol.density_grid(centres)).max())

    emp = simulate_mmbm(model, _sim_config(args))
    ks_sim = ks_distance(emp, sol.cdf)

    # discretised law as a CDF, piecewise linear inside each cell
    h = model.b / args.cells
    cum = np.vstack([np.zeros(model.m), np.cumsum(disc * h, axis=0)])
    edges = np.linspace(0.0, model.b, args.cells + 1)

    def disc_cdf(x):
        return np.array([np.interp(x, edges, cum[:, i]) for i in range(model.m)])

    ks_disc_sim = ks_distance(emp, disc_cdf)
    checks = {
        "closed_form_vs_time_reversed": {"distance": d_tr, "tolerance": TOL_TIME_REVERSED},
        "closed_form_vs_discretization": {"distance": d_disc, "tolerance": TOL_DISCRETIZATION},
        "closed_form_vs_simulation": {"distance": ks_sim, "tolerance": TOL_KS},
        "discretization_vs_simulation": {"distance": ks_disc_sim, "tolerance": TOL_KS},
    }
    for c in checks.values():
        c["pass"] = bool(c["distance"] <= c["tolerance"])
    report = {"checks": checks, "all_pass": all(c["pass"] for c in checks.values()),
              "seed": args.seed}
    man.outputs.append(export.write_json(os.path.join(args.out_dir, "compare.json"), report))


COMMANDS = {
    "solve": cmd_solve,
    "fluid": cmd_fluid,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _diag(error="UsageError", message=message)
        raise SystemExit(2)


def build_parser():
    p = _Parser(prog="reflected-mmbm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("model", help="model JSON file")
        sp.add_argument("--out-dir", default="out")
        sp.add_argument("--grid", type=int, default=1000, help="interior grid points")

    def sim_flags(sp, horizon):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--horizon", type=float, default=horizon)
        sp.add_argument("--burn-in", type=float, default=100.0)
        sp.add_argument("--step", type=float, default=1e-3)
        sp.add_argument("--sample-dt", type=float, default=1e-2)
        sp.add_argument("--bins", type=int, default=200)
        sp.add_argument("--boundary", choices=["reflect", "clamp"], default="reflect")

    sp = sub.add_parser("solve", help="closed-form MMBM stationary law")
    common(sp)
    sp = sub.add_parser("fluid", help="finite-buffer fluid approximation")
    common(sp)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--check-alt", action="store_true")
    sp = sub.add_parser("sweep", help="convergence of the fluid family")
    common(sp)
    sp.add_argument("--eps-list")
    sp = sub.add_parser("simulate", help="Monte Carlo histogram")
    common(sp)
    sp.add_argument("--mode", choices=["fluid", "mmbm"], default="mmbm")
    sp.add_argument("--eps", type=float)
    sim_flags(sp, 2e4)
    sp = sub.add_parser("compare", help="closed form against all oracles")
    common(sp)
    sp.add_argument("--cells", type=int, default=2000)
    sim_flags(sp, 2e4)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    params = {k: v for k, v in vars(args).items() if k not in ("command", "model", "out_dir")}
    man = RunManifest(args.command, os.path.abspath(args.model), params)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            model = load_model(args.model)
            os.makedirs(args.out_dir, exist_ok=True)
            COMMANDS[args.command](model, args, man)
        except OSError as exc:
            _diag(error="IOError", message=str(exc))
            return 2
        except ValidationError as exc:
            _diag(**exc.to_dict())
            return 2
        except (NumericalError, np.linalg.LinAlgError) as exc:
            doc = exc.to_dict() if isinstance(exc, MmbmError) else \
                {"error": "NumericalError", "message": str(exc)}
            _diag(**doc)
            return 3
        finally:
            for w in caught:
                _diag(warning=w.category.__name__, message=str(w.message))
    man.wall_time = time.perf_counter() - t0
    man.write(args.out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
