"""Command-line front end: ``cdfit {fit,sweep,verify,simulate}``."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as cfgmod
from . import plotting
from . import sweep as sw
from .errors import CDError
from .kernels import KernelPlan
from .models import ErgmModel, simulate_network, write_attributes, write_edge_list
from .verify import run_suite

log = logging.getLogger("cdfit")


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def _outdir(rc):
    os.makedirs(rc.out, exist_ok=True)
    return rc.out


def _eq_spec(src, sec):
    return sw.EquilibriumSpec(
        n_chains=src.get(sec, "equilibrium_chains", int, 256),
        burn_sweeps=src.get(sec, "equilibrium_burn", int, 20),
        sample_sweeps=src.get(sec, "equilibrium_sweeps", int, 20))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_fit(rc):
    spec = cfgmod.build_model(rc)
    src = rc.source
    config = cfgmod.build_fit_config(rc, "fit")
    plan = config.plan
    pt = sw.GridPoint(plan.family if plan else "", plan.k if plan else 0,
                      plan.s if plan else None, config.method)
    eq = _eq_spec(src, "fit")
    res = sw._run_point((spec.model, spec.y_obs, pt, config, eq, (rc.seed, 1, 0)))
    out = _outdir(rc)
    write_csv(os.path.join(out, "fit.csv"), sw.COLUMNS,
              sw.point_rows(res, spec.model.names, rc.config_hash))
    write_csv(os.path.join(out, "timing.csv"), sw.TIMING_COLUMNS,
              [sw.timing_row(res, rc.config_hash)])
    if res.fit is not None and res.fit.trace and src.get("fit", "plot", cfgmod.to_bool, True):
        plotting.trace_figure(res.fit.trace, os.path.join(out, "fit_trace.png"),
                              f"{config.method} {pt.label}".strip())
    print(f"config {rc.config_hash}  method={config.method}  kernel={pt.label or '-'}"
          f"  k={pt.k if plan else '-'}")
    if res.fit is None:
        print(f"status: error ({res.error})")
        return 1
    print(f"status: {res.fit.status} after {res.fit.iterations} iterations")
    print(f"{'statistic':<14s}{'eta_hat':>14s}{'mean_value':>14s}{'se':>10s}")
    for j, name in enumerate(spec.model.names):
        print(f"{name:<14s}{res.fit.eta_hat[j]:>14.6f}{res.mean_value[j]:>14.4f}"
              f"{res.mean_value_se[j]:>10.4f}")
    print(f"wrote {os.path.join(out, 'fit.csv')}")
    return 0 if res.fit.status == "converged" else 2


def sweep_spec(rc):
    src = rc.source
    sec = "sweep"
    families = tuple(src.get(sec, "families", cfgmod.to_list, ["random_scan_gibbs", "node_s"]))
    for fam in families:
        if fam not in ("random_scan_gibbs", "sequential_scan_gibbs", "node_s"):
            src.fail(sec, "families", f"sweeps support random_scan_gibbs, "
                                      f"sequential_scan_gibbs and node_s, not {fam!r}")
    base = cfgmod.build_fit_config(rc, sec, plan=KernelPlan("random_scan_gibbs"),
                                   method=src.raw(sec, "method", "cd_newton"))
    return sw.SweepSpec(
        families=families,
        s_values=tuple(src.get(sec, "s", cfgmod.to_int_grid, [3, 8, 29])),
        k_values=tuple(src.get(sec, "k", cfgmod.to_int_grid, [2 ** e for e in range(4, 11)])),
        method=base.method, fit=base,
        reference_sweeps=src.get(sec, "reference_sweeps", int, 20),
        reference_chains=src.get(sec, "reference_chains", int, 512),
        reference_iters=src.get(sec, "reference_iters", int, 50),
        equilibrium=_eq_spec(src, sec),
        quantiles=tuple(src.get(sec, "quantiles", lambda t: cfgmod.to_list(t, float),
                                [0.05, 0.25, 0.5, 0.75, 0.95])))


def cmd_sweep(rc):
    result, checks, path = sweep_report(rc)
    print(f"config {rc.config_hash}: {len(result.points)} grid points, "
          f"{sum(p.status == 'converged' for p in result.points)} converged")
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    print(f"wrote {path}")
    return 0


def sweep_report(rc, families=None, s_values=None, k_values=None):
    """Run the configured sweep and write its CSVs and figure.

    The optional arguments restrict the grid to a subset, which reproduces
    the matching rows of the full sweep.  Returns ``(result, checks, path)``
    where ``path`` is the written sweep.csv.
    """
    spec = cfgmod.build_model(rc)
    model = spec.model
    sspec = sweep_spec(rc)
    sub = {k: tuple(v) for k, v in (("families", families), ("s_values", s_values),
                                     ("k_values", k_values)) if v is not None}
    if sub:
        sspec = replace(sspec, **sub)
    if "node_s" in sspec.families:
        n = getattr(model, "n", None)
        if n is None:
            raise CDError("node_s sweeps need a graph model")
        bad = [s for s in sspec.s_values if not 1 <= s <= n - 1]
        if bad:
            rc.source.fail("sweep", "s", f"values {bad} outside 1..{n - 1}")
    result = sw.run_sweep(model, spec.y_obs, sspec, rc.seed, jobs=rc.jobs)
    out = _outdir(rc)
    h = rc.config_hash
    everything = [result.mple, result.reference] + result.points
    rows = [r for p in everything for r in sw.point_rows(p, model.names, h)]
    write_csv(os.path.join(out, "sweep.csv"), sw.COLUMNS, rows)
    write_csv(os.path.join(out, "timing.csv"), sw.TIMING_COLUMNS,
              [sw.timing_row(p, h) for p in everything])
    qrows = [{"config_hash": h, "statistic": name, "quantile": sw.fmt(q), "value": sw.fmt(v)}
             for name, (levels, vals) in result.quantiles.items()
             for q, v in zip(levels, vals)]
    write_csv(os.path.join(out, "reference_distribution.csv"), sw.QUANTILE_COLUMNS, qrows)
    if rc.source.get("sweep", "plot", cfgmod.to_bool, True):
        grid_rows = [r for p in result.points for r in sw.point_rows(p, model.names, h)]
        baselines = {"mple": (result.mple.mean_value, result.mple.mean_value_se),
                     "reference": (result.reference.mean_value, result.reference.mean_value_se)}
        plotting.sweep_figure(grid_rows, baselines, result.quantiles, model.names,
                              os.path.join(out, "sweep.png"))
    checks = sw.analyze(result, model.n) if getattr(model, "n", None) else []
    return result, checks, os.path.join(out, "sweep.csv")


VERIFY_COLUMNS = ("config_hash", "check", "passed", "measured", "tol", "detail")


def verify_rows(checks, config_hash="default"):
    """CSV rows for verification checks; run times are left out."""
    return [{"config_hash": config_hash, "check": c.name, "passed": int(c.passed),
             "measured": sw.fmt(c.measured), "tol": sw.fmt(c.tol), "detail": c.detail}
            for c in checks]


def cmd_verify(rc, out=None):
    src = rc.source if rc is not None else None
    names = perturb = None
    kl_steps = 50
    plot = True
    if src is not None:
        names = src.get("verify", "suite", cfgmod.to_list)
        if names == ["all"]:
            names = None
        perturb = src.raw("verify", "perturb", "none")
        perturb = None if perturb == "none" else perturb
        if perturb not in (None, "equivalence"):
            src.fail("verify", "perturb", "expected none or equivalence")
        kl_steps = src.get("verify", "kl_steps", int, 50)
        plot = src.get("verify", "plot", cfgmod.to_bool, True)
    res = run_suite(names, perturb=perturb, kl_steps=kl_steps)
    for c in res.checks:
        print(c.line())
    h = rc.config_hash if rc is not None else "default"
    out = rc.out if rc is not None else out
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "verify.csv"), VERIFY_COLUMNS, verify_rows(res.checks, h))
    if res.kl_curves:
        write_csv(os.path.join(out, "kl_decay.csv"), ("config_hash", "kernel", "k", "kl"),
                  [{"config_hash": h, "kernel": name, "k": i + 1, "kl": sw.fmt(v)}
                   for name, kl in res.kl_curves.items() for i, v in enumerate(kl)])
        if plot:
            plotting.kl_figure(res.kl_curves, os.path.join(out, "kl_decay.png"))
    n_fail = sum(not c.passed for c in res.checks)
    print(f"{len(res.checks) - n_fail}/{len(res.checks)} checks passed")
    return 0 if res.passed else 1


def cmd_simulate(rc):
    src = rc.source
    sec = "simulate"
    n = src.get(sec, "n", int, 30)
    grades = src.get(sec, "grades", int, 2)
    density = src.get(sec, "density", cfgmod.to_real, 0.1)
    homophily = src.get(sec, "homophily", cfgmod.to_real, 1.0)
    cap = src.get(sec, "degree_cap", cfgmod.to_opt_int, 10)
    prefix = src.raw(sec, "prefix", "synthetic")
    rng = np.random.default_rng(np.random.SeedSequence([rc.seed, 7]))
    edges, g = simulate_network(n, grades, density, rng, homophily=homophily, degree_cap=cap)
    out = _outdir(rc)
    epath = os.path.join(out, f"{prefix}.edges")
    apath = os.path.join(out, f"{prefix}.attr")
    write_edge_list(epath, n, edges)
    write_attributes(apath, g)
    model = ErgmModel(n, grades=g, alpha=2 / 3, degree_cap=cap)
    from .models import graph_state
    stats = model.stats(graph_state(n, edges).bits[None, :])[0]
    write_csv(os.path.join(out, f"{prefix}_stats.csv"),
              ("config_hash", "statistic", "value"),
              [{"config_hash": rc.config_hash, "statistic": name, "value": sw.fmt(v)}
               for name, v in zip(model.names, stats)])
    print(f"wrote {epath} and {apath}: n={n}, {len(edges)} edges")
    print("realized statistics: " + ", ".join(f"{nm}={v:.4f}" for nm, v in
                                              zip(model.names, stats)))
    return 0


COMMANDS = {"fit": cmd_fit, "sweep": cmd_sweep, "verify": cmd_verify, "simulate": cmd_simulate}


def build_parser():
    p = argparse.ArgumentParser(prog="cdfit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="progress logging to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", ""))
        sp.add_argument("--config", required=name != "verify", help="INI run configuration")
        sp.add_argument("--seed", type=int, default=None, help="master seed (u64)")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--jobs", type=int, default=None, help="parallel grid workers")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is None:
            # only verify may run without a config: the default suite
            return cmd_verify(None, out=os.path.abspath(args.out or "results"))
        rc = cfgmod.load(args.config, seed=args.seed, out=args.out, jobs=args.jobs)
        return COMMANDS[args.command](rc)
    except CDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
