"""Command line entry point: ``gpchaos <subcommand> [flags]``.

Every run writes into ``<output_dir>/<subcommand>-<config hash>/`` and
prints its JSON summary on stdout.  Errors print a JSON body on stderr and
exit with 2 (invalid input) or 3 (numerical failure).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import core
from .chaos import COLUMNS, chaos_sweep
from .config import (ARTIFACT_VERSION, DEFAULTS, SPEC_VERSION, ExperimentConfig,
                     atomic_write, load_config)
from .core import Grid, ScalarField
from .diffusion import (GridDrift, ProductDrift, SimParams, interaction_radius, ou_drift,
                        path_relative_entropy, simulate, stopping_times, survival_probability,
                        zero_drift)
from .errors import GpChaosError, NumericalFailure, ValidationError
from .gp import GpProblem, minimize_gp
from .nbody import (NBodyProblem, energy_components, gaussian_pair, gp_scaled_pair,
                    ground_state, mean_field_pair, no_pair)
from .scattering import (s_hat, smooth_bump, solve_zero_energy, square_well,
                         square_well_length)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# pipelines; each returns (summary, {filename: contents})


def run_scatter(p, cfg):
    make = {"square": square_well, "bump": smooth_bump}.get(p["shape"])
    if make is None:
        raise ValidationError(f"unknown well shape {p['shape']!r}", "shape")
    v = make(p["well_depth"], p["well_radius"])
    sol = solve_zero_energy(v, p["rmax"], p["nr"])
    out = {"a": sol.scattering_length, "s_hat": s_hat(sol, v),
           "fit_residual": sol.fit_residual}
    if p["shape"] == "square":
        out["a_closed_form"] = square_well_length(p["well_depth"], p["well_radius"])
    return out, {}


def run_gp(p, cfg):
    grid = Grid(p["dim"], p["grid_L"], p["grid_n"])
    prob = GpProblem(grid, p["trap"], p["g"], stencil=p["stencil"])
    sol = minimize_gp(prob, tol=p["tol"], max_iter=p["max_iter"])
    out = {"lambda": sol.lam, "energy": sol.energy.as_dict(), "residual": sol.residual,
           "iterations": sol.iterations}
    files = {"phi.bin": core.field_bytes(sol.phi)} if p["dump_field"] else {}
    return out, files


def parse_pair(text: str):
    name, _, args = text.partition(":")
    if name == "none":
        return no_pair
    if name == "gaussian":
        try:
            amp, width = (float(x) for x in args.split(","))
        except ValueError:
            raise ValidationError(f"bad pair {text!r}, want gaussian:amp,width",
                                  "pair") from None
        return gaussian_pair(amp, width)
    raise ValidationError(f"unknown pair {text!r}", "pair")


def run_nbody(p, cfg):
    w = parse_pair(p["pair"])
    scalings = {"meanfield": mean_field_pair, "gp": gp_scaled_pair}
    if p["scaling"] not in scalings:
        raise ValidationError(f"unknown scaling {p['scaling']!r}", "scaling")
    pb = NBodyProblem(p["N"], p["d"], Grid(p["d"], p["grid_L"], p["grid_n"]), p["trap"],
                      scalings[p["scaling"]](w, p["N"]), p["stencil"], p["cap"])
    st = ground_state(pb, tol=p["tol"])
    comps = energy_components(st)
    out = {"E0": st.energy, "per_particle_energy": st.per_particle_energy,
           "components": comps, "iterations": st.iterations}
    files = {"rho.bin": core.field_bytes(st.rho)} if p["dump_field"] else {}
    return out, files


def _drift_setup(p):
    N, d = p["N"], p["d"]
    src = p["drift_from"]
    if src in ("zero", "ou"):
        b = zero_drift if src == "zero" else ou_drift(p["ou_rate"])
        return b, np.zeros((1, N * d)), zero_drift, None
    rho = core.load_field(src)
    rho = ScalarField.density_from(rho.grid, rho.values)
    if rho.grid.dim == N * d:
        joint = rho
        b = GridDrift(core.grad_log_density(joint), joint.grid)
        one = core.marginalize(joint, 1, d)
    elif rho.grid.dim == d:
        joint = ScalarField.density_from(rho.grid.with_dim(N * d),
                                         core.tensor_power(rho, N).values)
        one = rho
        b = ProductDrift(GridDrift(core.grad_log_density(rho), rho.grid), N, d)
    else:
        raise ValidationError(f"field dimension {rho.grid.dim} is neither d nor N*d", "drift_from")
    if p["reference"]:
        one = core.load_field(p["reference"])
        one = ScalarField.density_from(one.grid, one.values)
    u = ProductDrift(GridDrift(core.grad_log_density(one), one.grid), N, d)
    return b, joint, u, joint.grid.extent


def run_diffuse(p, cfg):
    N, d = p["N"], p["d"]
    b, initial, u, box = _drift_setup(p)
    params = SimParams(p["dt"], p["T"], p["paths"], cfg.seed)
    ens = simulate(b, initial, params, box=p["box"] if p["box"] is not None else box)
    survival = []
    if N >= 2:
        radius = p["radius"]
        if radius is None:
            radius = interaction_radius(N, p["delta"], d, p["radius_law"], p["radius_scale"])
        rec = stopping_times(ens, N, d, p["delta"], radius=radius, inflate=p["inflate"])
        tau = rec.tau
        for k in range(1, p["survival_points"] + 1):
            t = ens.times[ens.step_index(p["T"] * k / p["survival_points"])]
            pr, se = survival_probability(rec, t)
            survival.append({"t": float(t), "p": pr, "stderr": se})
    else:
        radius = None
        tau = np.full(p["paths"], params.T + params.dt)
    pe = path_relative_entropy(ens, None, u, params.T, N)
    out = {"survival": survival, "radius": radius,
           "relative_entropy": {"total": pe.total, "per_particle": pe.per_particle,
                                "stderr": pe.stderr, "per_particle_stderr": pe.per_particle_stderr},
           "reflections": ens.escapes}
    files = {"tau.csv": f"# config_hash={cfg.hash}\n"
             + _csv(["path", "tau"], ((i, float(t)) for i, t in enumerate(tau)))}
    return out, files


def run_chaos(p, cfg):
    sweep = cfg.sweep_config()
    run_dir = cfg.run_dir()
    done = []

    def persist(row):
        done.append(row)
        atomic_write(os.path.join(run_dir, "rows.partial.json"),
                     _dumps({"provenance": cfg.provenance(), "rows": done}))

    rep = chaos_sweep(sweep, row_callback=persist)
    prov = cfg.provenance()
    rows = [[r[c] for c in COLUMNS] for r in rep.rows]
    header = [f"# config_hash={prov['config_hash']}"]
    table = "\n".join(header) + "\n" + _csv(COLUMNS, rows)
    files = {"chaos.csv": table,
             "chaos.json": _dumps({"provenance": prov, "metadata": rep.metadata,
                                   "rows": rep.rows})}
    if cfg.emit_plot_data:
        series = [(m, r["N"], r[m]) for m in COLUMNS[1:] for r in rep.rows]
        files["plot_data.csv"] = "\n".join(header) + "\n" + _csv(["metric", "N", "value"], series)
    summary = {"rows": len(rep.rows), "failed_rows": [r["N"] for r in rep.rows if "error" in r],
               "columns": COLUMNS}
    return summary, files


PIPELINES = {"scatter": run_scatter, "gp": run_gp, "nbody": run_nbody,
             "diffuse": run_diffuse, "chaos": run_chaos}


def run(cfg: ExperimentConfig) -> dict:
    summary, files = PIPELINES[cfg.subcommand](cfg.params, cfg)
    summary = {"provenance": cfg.provenance(), "result": summary}
    run_dir = cfg.run_dir()
    atomic_write(os.path.join(run_dir, "result.json"), _dumps(summary))
    for name, data in files.items():
        atomic_write(os.path.join(run_dir, name), data)
    if cfg.subcommand == "chaos":
        partial = os.path.join(run_dir, "rows.partial.json")
        if os.path.exists(partial):
            os.unlink(partial)
    summary["output_dir"] = run_dir
    return summary


# --------------------------------------------------------------------------
# argument parsing


def _flag(name):
    return "--" + name.replace("_", "-")


# flags whose default is None carry no type of their own
NONE_TYPES = {"radius": float, "box": float, "reference": str}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpchaos", description="Gross-Pitaevskii limit and propagation of chaos experiments.")
    ap.add_argument("--version", action="version",
                    version=f"gpchaos {ARTIFACT_VERSION} (spec {SPEC_VERSION})")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name, defaults in DEFAULTS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config; flags override its values")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--output-dir")
        sp.add_argument("--emit-plot-data", action="store_true", default=None)
        for key, val in defaults.items():
            if isinstance(val, bool):
                sp.add_argument(_flag(key), dest=key, action="store_true", default=None)
            elif isinstance(val, list):
                sp.add_argument(_flag(key), dest=key, type=int, nargs="+")
            elif isinstance(val, int):
                sp.add_argument(_flag(key), dest=key, type=int)
            elif isinstance(val, float):
                sp.add_argument(_flag(key), dest=key, type=float)
            else:
                sp.add_argument(_flag(key), dest=key, type=NONE_TYPES.get(key, str))
    return ap


def config_from_args(args) -> ExperimentConfig:
    raw = load_config(args.config) if args.config else {}
    if raw.get("subcommand", args.subcommand) != args.subcommand:
        raise ValidationError(f"config is for {raw['subcommand']!r}, not {args.subcommand!r}",
                              "subcommand")
    raw["subcommand"] = args.subcommand
    params = dict(raw.get("params") or {})
    for key in DEFAULTS[args.subcommand]:
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    raw["params"] = params
    for key in ("seed", "output_dir", "emit_plot_data"):
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    return ExperimentConfig.build(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        summary = run(cfg)
    except ValidationError as exc:
        sys.stderr.write(_dumps(exc.to_dict()))
        return 2
    except NumericalFailure as exc:
        sys.stderr.write(_dumps(exc.to_dict()))
        return 3
    except GpChaosError as exc:
        sys.stderr.write(_dumps(exc.to_dict()))
        return 3
    sys.stdout.write(_dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
