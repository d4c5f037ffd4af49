"""Oracle verification suite on enumerable models.

Each check returns a :class:`Check` with the measured quantity and the
tolerance it was held to.  ``run_suite`` runs any subset; the CLI ``verify``
command prints one line per check and exits nonzero if any fails.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from . import estimators as est
from . import exact
from .kernels import BlockDistribution, KernelPlan
from .models import BinaryPairwiseModel, ErgmModel, graph_state

LADDER_EDGES = [(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7), (0, 4), (1, 5), (2, 6), (3, 7)]
LADDER_Y = np.array([0, 0, 0, 1, 0, 0, 1, 1], dtype=np.uint8)


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    tol: float
    detail: str = ""
    seconds: float = 0.0

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return (f"{tag}  {self.name:<44s} measured={self.measured:.3e}  "
                f"tol={self.tol:.1e}  ({self.seconds:.2f}s){extra}")


@dataclass
class SuiteResult:
    checks: list = field(default_factory=list)
    kl_curves: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


# --------------------------------------------------------------------------
# fixtures
# --------------------------------------------------------------------------

def ladder_model():
    """2 x 4 ladder with a field and a coupling statistic, plus an observation."""
    return BinaryPairwiseModel.homogeneous(8, LADDER_EDGES), LADDER_Y.copy()


def ladder_pairs():
    return BlockDistribution.uniform(LADDER_EDGES)


def ladder_ci_pairs(model):
    return BlockDistribution.uniform(
        [p for p in itertools.combinations(range(model.m), 2)
         if model.conditionally_independent(*p)])


def small_ergm(cap=2):
    """4-node ERGM (6 dyads) with every statistic and a degree cap."""
    return ErgmModel(4, ("edges", "isolates", "nodematch", "gwesp"), grades=[0, 0, 1, 1],
                     alpha=2 / 3, degree_cap=cap)


def ring_coupling(m=4):
    """One-parameter model: total coupling around a ring of m sites."""
    return BinaryPairwiseModel(m, -np.ones(m, dtype=int),
                               [(i, (i + 1) % m, 0) for i in range(m)], names=("coupling",))


# --------------------------------------------------------------------------
# checks
# --------------------------------------------------------------------------

def _timed(fn):
    def wrapper(*args, **kw):
        t = time.perf_counter()
        out = fn(*args, **kw)
        dt = time.perf_counter() - t
        for c in out:
            c.seconds = dt / len(out)
        return out
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


@_timed
def check_oracle():
    """grad log z == exact mean (central differences) and exact MLE residual."""
    out = []
    rng = np.random.default_rng(11)
    lad, y = ladder_model()
    erg = small_ergm()
    erg6 = ErgmModel(6, ("edges", "isolates", "nodematch", "gwesp"), grades=[0, 1, 0, 1, 0, 1],
                     alpha=2 / 3, degree_cap=3)
    worst = 0.0
    for model in (lad, erg, erg6):
        for _ in range(3):
            eta = rng.normal(scale=0.5, size=model.d)
            fd = _fd_grad(lambda e: exact.log_partition(model, e), eta)
            worst = max(worst, _rel(fd, exact.exact_mean_params(model, eta)))
    out.append(Check("oracle: grad log z vs exact mean", worst <= 1e-6, worst, 1e-6))
    worst = 0.0
    for model, eta_true in ((lad, np.array([-0.4, 0.6])),
                            (erg, np.array([-0.3, 0.2, 0.4, 0.1])),
                            (erg6, np.array([-0.6, 0.3, 0.5, 0.2]))):
        g_obs = exact.exact_mean_params(model, eta_true)
        eta = exact.exact_mle(model, g_obs)
        worst = max(worst, float(np.max(np.abs(exact.exact_mean_params(model, eta) - g_obs))))
    out.append(Check("oracle: exact MLE moment residual", worst <= 1e-10, worst, 1e-10))
    return out


@_timed
def check_detailed_balance():
    """q(y) P(y, y') symmetric for every single-step kernel."""
    lad, _ = ladder_model()
    eta = np.array([-0.3, 0.8])
    erg = ErgmModel(5, ("edges", "isolates", "gwesp"), alpha=2 / 3, degree_cap=3)
    eta_e = np.array([-0.5, 0.3, 0.4])
    cases = [
        ("random_scan_gibbs", lad, eta, KernelPlan("random_scan_gibbs"), None),
        ("blocked_gibbs", lad, eta, KernelPlan("blocked_gibbs", blocks=ladder_pairs()), None),
        ("ci_pair", lad, eta, KernelPlan("ci_pair", blocks=ladder_ci_pairs(lad)), None),
        ("node_s (restricted support)", erg, eta_e, KernelPlan("node_s", s=3),
         tuple(erg.incident_dyads(1)[:3])),
    ]
    out = []
    for label, model, e, plan, sel in cases:
        T = exact.kernel_step_matrix(model, e, plan, selection=sel)
        err = exact.detailed_balance_error(T, model, e)
        rows = float(np.max(np.abs(T.matrix.sum(1) - 1)))
        out.append(Check(f"detailed balance: {label}", err <= 1e-12 and rows <= 1e-12,
                         err, 1e-12, f"row-sum err {rows:.1e}"))
    return out


def kl_curves(k_max=50):
    lad, y = ladder_model()
    eta = np.array([-0.3, 0.8])
    plans = {
        "random_scan_gibbs": KernelPlan("random_scan_gibbs"),
        "blocked_gibbs": KernelPlan("blocked_gibbs", blocks=ladder_pairs()),
        "ci_pair": KernelPlan("ci_pair", blocks=ladder_ci_pairs(lad)),
    }
    return {name: exact.kl_decay_curve(lad, eta, plan, y, k_max) for name, plan in plans.items()}


@_timed
def check_kl_decay(k_max=50, curves=None):
    """KL(T^k delta_y || q) non-increasing in k."""
    curves = curves if curves is not None else kl_curves(k_max)
    out = []
    for name, kl in curves.items():
        rise = float(np.max(np.diff(kl), initial=-np.inf))
        seq = ", ".join(f"{v:.3g}" for v in kl[[0, 1, 2, 4, 9, 19, -1]])
        out.append(Check(f"KL decay: {name} (k=1..{len(kl)})", rise <= 1e-12, max(rise, 0.0),
                         1e-12, f"KL at k=1,2,3,5,10,20,{len(kl)}: {seq}"))
    return out


@_timed
def check_augmented(grid=(-1.0, -0.5, 0.0, 0.5, 1.0)):
    """d_a >= 0 on a grid, d_a(p, p) = 0 for blocked k=1, cd argmin near eta_p."""
    model = ring_coupling(4)
    rs = KernelPlan("random_scan_gibbs", 3)
    supports = list(exact.support_distribution(model, rs))
    worst = np.inf
    worst_gap = 0.0
    for ep, eq in itertools.product(grid, grid):
        for a in supports:
            three, single = exact.augmented_divergence_terms(model, model, [ep], [eq], rs, a)
            worst = min(worst, single)
            worst_gap = max(worst_gap, abs(three - single))
    out = [Check("augmented divergence: d_a >= 0 (5x5 grid)", worst >= -1e-12, worst, -1e-12,
                 f"three-term vs single-KL max gap {worst_gap:.1e}")]
    blk = KernelPlan("blocked_gibbs", 1, blocks=BlockDistribution.uniform([(0, 1), (1, 2), (2, 3)]))
    top = 0.0
    for ep in grid:
        for a in exact.support_distribution(model, blk):
            top = max(top, abs(exact.augmented_divergence(model, model, [ep], [ep], blk, a)))
    out.append(Check("augmented divergence: d_a(p, p) = 0, blocked k=1", top <= 1e-10, top,
                     1e-10))
    fine = np.round(np.arange(-2.0, 2.0001, 0.25), 10)
    miss = 0.0
    for ep in grid:
        vals = [exact.combined_divergence(model, model, [ep], [eq], rs) for eq in fine]
        miss = max(miss, abs(fine[int(np.argmin(vals))] - ep))
    out.append(Check("combined divergence: grid argmin near eta_p", miss <= 0.25 + 1e-12, miss,
                     0.25, "random-scan k=3, grid step 0.25"))
    return out


def equivalence_cases(perturb=False):
    """``[(label, plan, baseline_eta)]`` for the four CD equivalences."""
    model, y = ladder_model()
    pairs = ladder_pairs()
    comp = est.composite_fit(model, y, pairs).eta_hat
    mple = est.mple_fit(model, y).eta_hat
    ci = ladder_ci_pairs(model)
    wmple = est.mple_fit(model, y, weights=ci.site_weights(model.m)).eta_hat
    blocked = KernelPlan("blocked_gibbs", 1, blocks=pairs)
    if perturb:
        # negative control: a random-scan kernel against the composite baseline
        blocked = KernelPlan("random_scan_gibbs", 2)
    return model, y, [
        ("blocked k=1 vs composite", blocked, comp),
        ("within-block equilibrium vs composite (pi weights)",
         KernelPlan("within_block", 200, blocks=pairs), comp),
        ("sequential scan k=1 vs MPLE", KernelPlan("sequential_scan_gibbs", 1), mple),
        ("CI pair vs weighted MPLE", KernelPlan("ci_pair", 1, blocks=ci), wmple),
    ]


@_timed
def check_equivalence(perturb=False):
    """CD fixed points (exact expectations) against their likelihood baselines."""
    model, y, cases = equivalence_cases(perturb)
    out = []
    for label, plan, target in cases:
        cfg = est.FitConfig(method="cd_newton", plan=plan, expectation_mode="exact",
                            max_iters=50)
        r = est.fit(model, y, cfg)
        diff = float(np.max(np.abs(r.eta_hat - target)))
        out.append(Check(f"equivalence: {label}", diff <= 1e-6 and r.status == "converged",
                         diff, 1e-6, f"{r.status} in {r.iterations} iterations"))
    return out


@_timed
def check_learning(n_chains=4096, seed=0):
    """cd_newton, cd_sgd and Monte Carlo mode against the equivalence targets.

    Newton starts at the MPLE; SGD (gain 50 / i) starts at zero so that no
    case is solved by its starting point.  Monte Carlo fits use
    ``n_chains`` chains and are compared with the exact-mode ``mu_hat``.
    """
    model, y, cases = equivalence_cases()
    mple = est.mple_fit(model, y).eta_hat
    newton, sgd, mc = [], [], []
    for i, (label, plan, target) in enumerate(cases):
        name = label.split(" vs ")[0]
        exact_cfg = est.FitConfig("cd_newton", plan, expectation_mode="exact",
                                  eta0=tuple(mple), max_iters=50)
        r = est.fit(model, y, exact_cfg)
        plain = est.fit(model, y, est.FitConfig("cd_newton", plan, expectation_mode="exact",
                                                eta0=tuple(mple), hessian="sample",
                                                max_iters=200))
        newton.append((name, r.iterations, float(np.max(np.abs(r.eta_hat - target))),
                       r.status == "converged", plain.iterations))
        s = est.fit(model, y, est.FitConfig("cd_sgd", plan, expectation_mode="exact",
                                            eta0=(0.0,) * model.d, gain_a=50.0,
                                            max_iters=10_000, tol=1e-6))
        sgd.append((name, s.iterations, float(np.max(np.abs(s.eta_hat - target))),
                    s.status == "converged"))
        m = est.fit(model, y, est.FitConfig("cd_newton", plan, n_chains=n_chains,
                                            seed=(seed, i)))
        z = float(np.max(np.abs(m.mu_hat - r.mu_hat) / np.maximum(m.mu_se, est.SE_FLOOR)))
        # the same comparison in mean-value coordinates, delta-method SE
        S = est.eta_covariance(m.jac_hat, m.cov_hat, n_chains)
        C = exact.exact_covariance(model, m.eta_hat)
        se_mv = np.sqrt(np.diag(C @ S @ C))
        z_mv = float(np.max(np.abs(exact.exact_mean_params(model, m.eta_hat)
                                   - exact.exact_mean_params(model, r.eta_hat)) / se_mv))
        mc.append((name, z, z_mv, m.status == "converged"))
    worst_it = max(n[1] for n in newton)
    worst_diff = max(n[2] for n in newton)
    out = [Check("learning: cd_newton exact, iterations from MPLE",
                 worst_it <= 10 and worst_diff <= 1e-6 and all(n[3] for n in newton),
                 worst_it, 10,
                 f"max |eta - target| {worst_diff:.1e}; per kernel (conditional / sample "
                 "Hessian): " + ", ".join(f"{n[0]} {n[1]}/{n[4]}" for n in newton))]
    worst_it = max(t[1] for t in sgd)
    worst_diff = max(t[2] for t in sgd)
    out.append(Check("learning: cd_sgd exact, |eta - target|", worst_diff <= 1e-4
                     and worst_it <= 10_000 and all(t[3] for t in sgd), worst_diff, 1e-4,
                     "iterations: " + ", ".join(f"{t[0]} {t[1]}" for t in sgd)))
    worst = max(t[1] for t in mc)
    out.append(Check(f"learning: Monte Carlo mu_hat ({n_chains} chains), z", worst <= 4
                     and all(t[3] for t in mc), worst, 4.0,
                     "mean-value z: " + ", ".join(f"{t[0]} {t[2]:.2f}" for t in mc)))
    return out


@_timed
def check_gradients():
    """Analytic PL / composite derivatives against finite differences."""
    model, y = ladder_model()
    pairs = ladder_pairs()
    rng = np.random.default_rng(5)
    worst_g = worst_h = 0.0
    for _ in range(3):
        eta = rng.normal(scale=0.5, size=model.d)
        _, g, _ = est.pseudo_loglik(model, eta, y)
        fd = _fd_grad(lambda e: est.pseudo_loglik(model, e, y)[0], eta)
        worst_g = max(worst_g, _rel(g, fd))
        _, g, H = est.composite_loglik(model, eta, y, pairs)
        fd = _fd_grad(lambda e: est.composite_loglik(model, e, y, pairs)[0], eta)
        worst_g = max(worst_g, _rel(g, fd))
        J = np.column_stack([_fd_grad(lambda e: est.composite_loglik(model, e, y, pairs)[1][i],
                                      eta) for i in range(model.d)]).T
        worst_h = max(worst_h, _rel(H, J))
    return [Check("gradients: PL and composite vs finite differences", worst_g <= 1e-6, worst_g,
                  1e-6),
            Check("gradients: composite Hessian vs FD Jacobian", worst_h <= 1e-4, worst_h, 1e-4)]


SUITES = {
    "oracle": check_oracle,
    "detailed_balance": check_detailed_balance,
    "kl_decay": check_kl_decay,
    "augmented": check_augmented,
    "equivalence": check_equivalence,
    "learning": check_learning,
    "gradients": check_gradients,
}


def run_suite(names=None, perturb=None, kl_steps=50) -> SuiteResult:
    """Run the named checks (all by default).

    ``perturb="equivalence"`` swaps the blocked kernel for a random-scan one
    in the first equivalence, a negative control that must fail.
    """
    names = list(SUITES) if not names else list(names)
    res = SuiteResult()
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
        if name == "kl_decay":
            res.kl_curves = kl_curves(kl_steps)
            res.checks += check_kl_decay(kl_steps, res.kl_curves)
        elif name == "equivalence":
            res.checks += check_equivalence(perturb == "equivalence")
        else:
            res.checks += SUITES[name]()
    return res


__all__ = ["Check", "SuiteResult", "run_suite", "SUITES", "ladder_model", "ladder_pairs",
           "ladder_ci_pairs", "small_ergm", "ring_coupling", "equivalence_cases", "graph_state"]
