"""Kernel x chain-length sweeps on a graph model, and their summary checks.

A sweep fits the MPLE, a long-chain stochastic-approximation reference and
one CD fit per grid point.  Every fit is then mapped to mean-value
parameters mu(eta_hat) by long equilibrium runs.  The standard error of a
mean-value estimate pools the equilibrium simulation error with the Monte
Carlo error of eta_hat itself (delta method through cov_q).
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimators as est
from .errors import CDError
from .kernels import FAMILIES, KernelPlan, simulate_equilibrium

log = logging.getLogger(__name__)

COLUMNS = ("config_hash", "family", "s", "k", "method", "statistic", "eta_hat", "mu_hat",
           "mc_se", "mean_value", "mean_value_se", "iterations", "status")
TIMING_COLUMNS = ("config_hash", "family", "s", "k", "method", "wall_time")
QUANTILE_COLUMNS = ("config_hash", "statistic", "quantile", "value")


@dataclass(frozen=True)
class EquilibriumSpec:
    n_chains: int = 256
    burn_sweeps: int = 20
    sample_sweeps: int = 20


@dataclass(frozen=True)
class GridPoint:
    family: str
    k: int
    s: int | None = None
    method: str = "cd_newton"

    @property
    def label(self):
        return self.family if self.s is None else f"{self.family} s={self.s}"


@dataclass
class PointResult:
    point: GridPoint
    fit: est.FitResult | None
    mean_value: np.ndarray
    mean_value_se: np.ndarray
    seconds: float
    error: str = ""
    draws: np.ndarray | None = field(default=None, repr=False)

    @property
    def status(self):
        return "error" if self.fit is None else self.fit.status


def eta_covariance(fit: est.FitResult, n_chains: int, ridge=1e-6):
    """Monte Carlo covariance of eta_hat (see ``estimators.eta_covariance``)."""
    if fit.cov_hat is None or not np.any(fit.cov_hat):
        return None
    return est.eta_covariance(fit.jac_hat, fit.cov_hat, n_chains, ridge)


def mean_value(model, eta, y_obs, eq: EquilibriumSpec, seed, eta_cov=None):
    """mu(eta) by equilibrium simulation, with the pooled standard error."""
    mu, se, draws = simulate_equilibrium(model, eta, y_obs, n_chains=eq.n_chains,
                                         burn_sweeps=eq.burn_sweeps,
                                         sample_sweeps=eq.sample_sweeps, seed=seed)
    var = se ** 2
    if eta_cov is not None:
        cov_q = np.atleast_2d(np.cov(draws.reshape(-1, model.d), rowvar=False))
        var = var + np.clip(np.diag(cov_q @ eta_cov @ cov_q), 0, None)
    return mu, np.sqrt(var), draws


def _run_point(args):
    model, y_obs, point, config, eq, eq_seed = args
    t = time.perf_counter()
    try:
        fit = est.fit(model, y_obs, config)
        if fit.status in ("diverged", "boundary") or not np.all(np.isfinite(fit.eta_hat)):
            nan = np.full(model.d, np.nan)
            return PointResult(point, fit, nan, nan, time.perf_counter() - t)
        cov = None
        if config.method not in ("mple", "composite"):
            cov = eta_covariance(fit, config.n_chains, config.ridge)
        mu, se, draws = mean_value(model, fit.eta_hat, y_obs, eq, eq_seed, cov)
        return PointResult(point, fit, mu, se, time.perf_counter() - t, draws=draws)
    except (CDError, np.linalg.LinAlgError, ValueError) as exc:
        nan = np.full(model.d, np.nan)
        return PointResult(point, None, nan, nan, time.perf_counter() - t, error=str(exc))


@dataclass
class SweepSpec:
    families: tuple = ("random_scan_gibbs", "node_s")
    s_values: tuple = (3, 8, 29)
    k_values: tuple = tuple(2 ** e for e in range(4, 11))
    method: str = "cd_newton"
    fit: est.FitConfig | None = None
    reference_sweeps: int = 20
    reference_chains: int = 512
    reference_iters: int = 50
    equilibrium: EquilibriumSpec = EquilibriumSpec()
    quantiles: tuple = (0.05, 0.25, 0.5, 0.75, 0.95)

    def grid(self):
        pts = []
        for fam in self.families:
            if fam == "node_s":
                pts += [GridPoint(fam, k, s, self.method) for s in self.s_values
                        for k in self.k_values]
            else:
                pts += [GridPoint(fam, k, None, self.method) for k in self.k_values]
        if not pts:
            raise CDError("empty sweep grid")
        return pts


@dataclass
class SweepResult:
    mple: PointResult
    reference: PointResult
    points: list
    quantiles: dict
    names: tuple


def run_sweep(model, y_obs, spec: SweepSpec, seed: int, jobs=1) -> SweepResult:
    """Fit baselines and every grid point; results come back in grid order."""
    base = spec.fit or est.FitConfig(method=spec.method, plan=KernelPlan("random_scan_gibbs"))
    eq = spec.equilibrium
    tasks = [(model, y_obs, GridPoint("", 0, None, "mple"), est.FitConfig(method="mple"), eq,
              (seed, 1, 0))]
    ref_plan = KernelPlan("random_scan_gibbs", spec.reference_sweeps * model.m)
    ref_cfg = replace(base, method="sa_mle_reference", plan=ref_plan, gain_a=1.0,
                      n_chains=spec.reference_chains, max_iters=spec.reference_iters,
                      expectation_mode="monte_carlo", hessian="auto", seed=(seed, 0, 1))
    tasks.append((model, y_obs, GridPoint("random_scan_gibbs", ref_plan.k, None,
                                          "sa_mle_reference"), ref_cfg, eq, (seed, 1, 1)))
    for pt in spec.grid():
        plan = KernelPlan(pt.family, pt.k, s=pt.s)
        # seeds follow the point, not its position, so any sub-grid reproduces
        key = (2, FAMILIES.index(pt.family), pt.s or 0, pt.k)
        cfg = replace(base, method=pt.method, plan=plan, seed=(seed, 0, *key))
        tasks.append((model, y_obs, pt, cfg, eq, (seed, 1, *key)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = []
        for task in tasks:
            res = _run_point(task)
            log.info("%-28s k=%-6d %-16s %s (%.1fs)", res.point.label or "mple", res.point.k,
                     res.point.method, res.status, res.seconds)
            results.append(res)
    ref = results[1]
    quant = {}
    if ref.draws is not None:
        flat = ref.draws.reshape(-1, model.d)
        for j, name in enumerate(model.names):
            quant[name] = (spec.quantiles, np.quantile(flat[:, j], spec.quantiles))
    return SweepResult(results[0], ref, results[2:], quant, tuple(model.names))


# --------------------------------------------------------------------------
# rows
# --------------------------------------------------------------------------

def fmt(x):
    """Shortest round-trip text for a number; blanks for None."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def point_rows(res: PointResult, names, config_hash):
    pt = res.point
    fit = res.fit
    rows = []
    for j, name in enumerate(names):
        if fit is None:
            eta = mu = se = None
            iters = ""
        else:
            eta = fit.eta_hat[j]
            mu = fit.mu_hat[j]
            se = fit.mu_se[j] if fit.mu_se is not None else 0.0
            iters = fit.iterations
        rows.append({
            "config_hash": config_hash, "family": pt.family, "s": "" if pt.s is None else pt.s,
            "k": pt.k if pt.family else "", "method": pt.method, "statistic": name,
            "eta_hat": fmt(eta), "mu_hat": fmt(mu), "mc_se": fmt(se),
            "mean_value": fmt(res.mean_value[j]), "mean_value_se": fmt(res.mean_value_se[j]),
            "iterations": fmt(iters) if iters != "" else "", "status": res.status,
        })
    return rows


def timing_row(res: PointResult, config_hash):
    pt = res.point
    return {"config_hash": config_hash, "family": pt.family,
            "s": "" if pt.s is None else pt.s, "k": pt.k if pt.family else "",
            "method": pt.method, "wall_time": f"{res.seconds:.3f}"}


# --------------------------------------------------------------------------
# summary checks
# --------------------------------------------------------------------------

@dataclass
class SweepCheck:
    name: str
    passed: bool
    worst: float
    detail: str


def _z(a, sa, b, sb):
    return np.abs(a - b) / np.sqrt(sa ** 2 + sb ** 2)


def analyze(result: SweepResult, n_nodes: int, z_max=2.0, stat="gwesp"):
    """The three sweep checks.

    (a) random-scan mean values within ``z_max`` pooled SE of the MPLE's, for
        every k and statistic;
    (b) the ``stat`` gap to the reference is non-increasing along k (per s)
        and along s (per k), up to ``z_max`` pooled SE;
    (c) Node-Full (s = n-1) stabilizes, meaning every later successive-k
        change is within ``z_max`` pooled SE, at some k below 4 s.
    """
    names = result.names
    mp = result.mple
    ref = result.reference
    out = []
    by = {(p.point.family, p.point.s, p.point.k): p for p in result.points}

    rs = sorted((p for p in result.points if p.point.family == "random_scan_gibbs"),
                key=lambda p: p.point.k)
    if rs:
        worst, where = 0.0, ""
        for p in rs:
            z = _z(p.mean_value, p.mean_value_se, mp.mean_value, mp.mean_value_se)
            j = int(np.nanargmax(z)) if np.any(np.isfinite(z)) else 0
            zj = float(z[j]) if np.isfinite(z[j]) else np.inf
            if zj > worst:
                worst, where = zj, f"k={p.point.k} {names[j]}"
        fails = [f"k={p.point.k}" for p in rs
                 if not np.all(_z(p.mean_value, p.mean_value_se, mp.mean_value,
                                  mp.mean_value_se) <= z_max)]
        out.append(SweepCheck("random scan within 2 SE of MPLE", not fails, worst,
                              f"worst z={worst:.2f} at {where}; failing: {', '.join(fails) or 'none'}"))

    if stat in names:
        j = names.index(stat)
        s_vals = sorted({p.point.s for p in result.points if p.point.family == "node_s"})
        k_vals = sorted({p.point.k for p in result.points if p.point.family == "node_s"})
        gap = {key: (abs(p.mean_value[j] - ref.mean_value[j]), p.mean_value_se[j])
               for key, p in by.items() if key[0] == "node_s"}
        worst, viol = -np.inf, []
        seqs = [[("node_s", s, k) for k in k_vals] for s in s_vals]
        seqs += [[("node_s", s, k) for s in s_vals] for k in k_vals]
        for seq in seqs:
            for a, b in zip(seq, seq[1:]):
                if a not in gap or b not in gap:
                    continue
                (ga, sa), (gb, sb) = gap[a], gap[b]
                z = (gb - ga) / np.sqrt(sa ** 2 + sb ** 2)
                worst = max(worst, z)
                if not z <= z_max:
                    viol.append(f"s={a[1]},k={a[2]}->s={b[1]},k={b[2]} (+{z:.2f} SE)")
        out.append(SweepCheck(f"{stat} gap to reference non-increasing", not viol,
                              float(worst), "; ".join(viol) or "no increases beyond 2 SE"))

    full = n_nodes - 1
    ks = sorted(p.point.k for p in result.points
                if p.point.family == "node_s" and p.point.s == full)
    if ks:
        steps = []
        for a, b in zip(ks, ks[1:]):
            pa, pb = by[("node_s", full, a)], by[("node_s", full, b)]
            steps.append(float(np.nanmax(_z(pb.mean_value, pb.mean_value_se,
                                            pa.mean_value, pa.mean_value_se))))
        stable_at = None
        for i, k in enumerate(ks[:-1]):
            if all(z <= z_max for z in steps[i:]):
                stable_at = k
                break
        ok = stable_at is not None and stable_at < 4 * full
        detail = ("successive-k max z: " + ", ".join(f"{z:.2f}" for z in steps)
                  + f"; stable from k={stable_at} (limit < {4 * full})")
        out.append(SweepCheck("Node-Full stabilizes below 4 x block size", ok,
                              float(stable_at if stable_at is not None else np.inf), detail))
    return out
