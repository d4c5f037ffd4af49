"""Fitting procedures: MPLE, composite likelihood and contrastive divergence.

CD fits replace the equilibrium expectation in the likelihood gradient by
``E_T[g]``, the expectation after a short chain started at the observed
configuration.  ``expectation_mode="exact"`` swaps the Monte Carlo estimate
for the oracle's exact chain law, which makes fixed points reproducible to
machine precision on enumerable models.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from . import exact
from .core import as_bits, as_eta, prob_one, suff_stats
from .errors import ConfigError
from .kernels import BlockDistribution, KernelPlan, _block_configs, sample_T
from .optim import newton_maximize

METHODS = ("mple", "composite", "cd_sgd", "cd_newton", "sa_mle_reference")
SE_FLOOR = 1e-8
ETA_BOUND = 1e3


@dataclass(frozen=True)
class FitConfig:
    method: str = "cd_newton"
    plan: KernelPlan | None = None
    gain_a: float = 0.5
    max_iters: int = 100
    tol: float | None = None
    ridge: float = 1e-6
    max_step: float = 1.0
    n_chains: int = 1024
    expectation_mode: str = "monte_carlo"
    seed: int = 0
    blocks: BlockDistribution | None = None
    eta0: tuple | None = None
    hessian: str = "auto"
    common_random_numbers: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.expectation_mode not in ("monte_carlo", "exact"):
            raise ConfigError("expectation_mode must be monte_carlo or exact")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.method in ("cd_sgd", "cd_newton", "sa_mle_reference") and self.plan is None:
            raise ConfigError(f"{self.method} needs a kernel plan")
        if self.hessian not in ("auto", "sample", "conditional"):
            raise ConfigError("hessian must be auto, sample or conditional")
        if self.hessian == "conditional" and self.expectation_mode != "exact":
            raise ConfigError("the conditional Hessian needs exact expectations")
        if self.gain_a <= 0 or self.max_step <= 0 or self.max_iters < 1:
            raise ConfigError("gain_a, max_step and max_iters must be positive")

    @property
    def stop_tol(self):
        if self.tol is not None:
            return self.tol
        return 1e-8 if self.expectation_mode == "exact" else 0.5


@dataclass
class FitResult:
    eta_hat: np.ndarray
    mu_hat: np.ndarray
    cov_hat: np.ndarray
    trace: list
    status: str
    mu_se: np.ndarray | None = None
    eta_se: np.ndarray | None = None
    extras: dict = field(default_factory=dict)
    jac_hat: np.ndarray | None = None

    @property
    def iterations(self):
        return len(self.trace) - 1


# --------------------------------------------------------------------------
# pseudo-likelihood and composite likelihood
# --------------------------------------------------------------------------

def site_design(model, y):
    """Change statistics and offsets for every site of ``y``: ``(X, off0, off1)``."""
    bits = as_bits(y, model.m)
    batch = model.batch(np.repeat(bits[None, :], model.m, axis=0))
    return batch.change(np.arange(model.m))


def pseudo_loglik(model, eta, y, weights=None):
    """Weighted log pseudo-likelihood with gradient and Hessian."""
    eta = as_eta(eta, model.d)
    bits = as_bits(y, model.m)
    X, off0, off1 = site_design(model, bits)
    w = np.ones(model.m) if weights is None else np.asarray(weights, dtype=float)
    p = prob_one(X @ eta, off0, off1)
    obs = bits.astype(float)
    with np.errstate(divide="ignore"):
        ll = np.where(obs == 1, np.log(p), np.log1p(-p))
    val = float(np.sum(w * ll))
    # sites pinned by the offset carry no information
    free = ~(np.isneginf(off0) | np.isneginf(off1))
    r = (obs - p) * w * free
    v = p * (1 - p) * w * free
    return val, X.T @ r, -(X.T * v) @ X


def _fit_result(model, eta, bits, status, trace, extras=None):
    g = suff_stats(model, bits)
    return FitResult(eta, g.copy(), np.zeros((model.d, model.d)), trace, status,
                     extras=extras or {})


def separated(D) -> bool:
    """True when some direction v has ``D v >= 0`` with at least one strict entry.

    Rows of ``D`` are ``g(y_obs) - g(y')`` over every alternative y' that a
    conditional likelihood compares against.  Such a v pushes the objective
    up forever, so the optimum sits at infinity.
    """
    D = np.asarray(D, dtype=float)
    D = D[np.any(D != 0, axis=1)]
    if D.size == 0:
        return False
    d = D.shape[1]
    res = linprog(-D.sum(0), A_ub=-D, b_ub=np.zeros(len(D)), bounds=[(-1, 1)] * d,
                  method="highs")
    return res.status == 0 and -res.fun > 1e-9


def mple_fit(model, y_obs, weights=None, eta0=None, tol=1e-10, max_iter=100):
    """Maximum pseudo-likelihood by Newton (logistic regression on change stats).

    Separated data (PL maximum at infinity) return status ``boundary``.
    """
    bits = as_bits(y_obs, model.m)
    if exact_offset(model, bits) == -np.inf:
        raise ConfigError("observed state is forbidden by the offset")
    X, off0, off1 = site_design(model, bits)
    free = ~(np.isneginf(off0) | np.isneginf(off1))
    w = np.ones(model.m) if weights is None else np.asarray(weights, dtype=float)
    sign = np.where(bits == 1, 1.0, -1.0)
    if separated((sign[:, None] * X)[free & (w > 0)]):
        return _fit_result(model, np.full(model.d, np.nan), bits, "boundary", [])
    x0 = np.zeros(model.d) if eta0 is None else np.asarray(eta0, dtype=float)
    res = newton_maximize(lambda e: pseudo_loglik(model, e, bits, weights), x0, tol=tol,
                          max_iter=max_iter, bound=ETA_BOUND)
    trace = [(x, gmax) for x, gmax in res.trace]
    return _fit_result(model, res.x, bits, res.status, trace, {"objective": res.value})


def exact_offset(model, bits):
    return float(model.offsets(bits[None, :])[0])


def _block_tables(model, bits, blocks):
    tables = []
    for block, r in blocks.items():
        Yc = np.repeat(bits[None, :], 2 ** len(block), axis=0)
        Yc[:, list(block)] = _block_configs(len(block))
        tables.append((r, model.stats(Yc), model.offsets(Yc)))
    return tables


def composite_loglik(model, eta, y, blocks: BlockDistribution, _tables=None):
    """sum_A r(A) log q(y_A | y_rest) with gradient and Hessian."""
    eta = as_eta(eta, model.d)
    bits = as_bits(y, model.m)
    g = suff_stats(model, bits)
    tables = _tables if _tables is not None else _block_tables(model, bits, blocks)
    val = 0.0
    grad = np.zeros(model.d)
    hess = np.zeros((model.d, model.d))
    for r, G, O in tables:
        lw = G @ eta + O
        lz = logsumexp(lw)
        p = np.exp(lw - lz)
        mu = p @ G
        D = G - mu
        val += r * (g @ eta - lz)
        grad += r * (g - mu)
        hess -= r * ((D * p[:, None]).T @ D)
    return float(val), grad, hess


def composite_fit(model, y_obs, blocks: BlockDistribution, eta0=None, tol=1e-10, max_iter=100):
    bits = as_bits(y_obs, model.m)
    KernelPlan("blocked_gibbs", 1, blocks=blocks).validate(model)
    tables = _block_tables(model, bits, blocks)
    g = suff_stats(model, bits)
    D = np.vstack([g - G[np.isfinite(O)] for r, G, O in tables if r > 0])
    if separated(D):
        return _fit_result(model, np.full(model.d, np.nan), bits, "boundary", [])
    x0 = np.zeros(model.d) if eta0 is None else np.asarray(eta0, dtype=float)
    res = newton_maximize(lambda e: composite_loglik(model, e, bits, blocks, tables), x0,
                          tol=tol, max_iter=max_iter, bound=ETA_BOUND)
    trace = [(x, gmax) for x, gmax in res.trace]
    return _fit_result(model, res.x, bits, res.status, trace, {"objective": res.value})


# --------------------------------------------------------------------------
# contrastive divergence
# --------------------------------------------------------------------------

def kernel_expectation(model, eta, y_obs, plan, mode="exact", n_chains=1024, seed=0,
                       conditional=False):
    """``(mean, cov, se, jac)`` of g after the kernel, started at ``y_obs``.

    With ``conditional`` (exact mode only) the covariance is the
    within-component one from ``exact.kernel_moments``.  ``jac`` is the
    likelihood-ratio estimate of d E_T[g] / d eta (Monte Carlo mode only).
    """
    if mode == "exact":
        mu, cov, within = exact.kernel_moments(model, eta, plan, y_obs)
        return mu, within if conditional else cov, np.zeros(model.d), None
    s = sample_T(model, eta, plan, y_obs, n_chains, seed=seed)
    return s.mean, s.cov, s.se, s.jac


def cd_fixed_point_residual(model, eta, y_obs, plan, mode="exact", n_chains=1024, seed=0):
    """g(y_obs) - E_T[g]; zero at a CD fixed point."""
    mu = kernel_expectation(model, eta, y_obs, plan, mode, n_chains, seed)[0]
    return suff_stats(model, y_obs) - mu


def _start(model, bits, config):
    if config.eta0 is not None:
        return as_eta(config.eta0, model.d)
    mp = mple_fit(model, bits)
    return mp.eta_hat if mp.status == "converged" else np.zeros(model.d)


def _scaled(resid, se, mode):
    if mode == "exact":
        return np.abs(resid)
    return np.abs(resid) / np.maximum(se, SE_FLOOR)


def _cap(step, max_step):
    nrm = np.linalg.norm(step)
    return step * (max_step / nrm) if nrm > max_step else step


def _newton_direction(cov, resid, ridge):
    d = len(resid)
    lam = ridge * max(np.trace(cov), 0.0) / d
    H = cov + lam * np.eye(d)
    try:
        step = np.linalg.solve(H, resid)
    except np.linalg.LinAlgError:
        return resid, False
    if not np.all(np.isfinite(step)):
        return resid, False
    return step, True


def _cd_loop(model, y_obs, config, update):
    bits = as_bits(y_obs, model.m)
    g = suff_stats(model, bits)
    eta = _start(model, bits, config)
    mode = config.expectation_mode
    trace = []
    status = "max_iters"
    mu = cov = se = None
    conditional = config.hessian == "conditional" or (config.hessian == "auto"
                                                      and mode == "exact")
    for it in range(1, config.max_iters + 2):
        # common random numbers: chain c reuses its stream every iteration
        seed = config.seed if config.common_random_numbers else (config.seed, it)
        mu, cov, se, jac = kernel_expectation(model, eta, bits, config.plan, mode,
                                              config.n_chains, seed=seed,
                                              conditional=conditional)
        resid = g - mu
        score = float(np.max(_scaled(resid, se, mode)))
        trace.append((eta.copy(), score))
        if score <= config.stop_tol:
            status = "converged"
            break
        if it > config.max_iters:
            break
        eta = eta + _cap(update(it, resid, cov), config.max_step)
        if not np.all(np.isfinite(eta)) or np.max(np.abs(eta)) > ETA_BOUND:
            status = "diverged"
            trace.append((eta.copy(), np.inf))
            break
    eta_se = None
    if mode == "monte_carlo" and cov is not None:
        eta_se = np.sqrt(np.clip(np.diag(eta_covariance(jac, cov, config.n_chains)), 0, None))
    return FitResult(eta, mu, cov, trace, status, mu_se=se, eta_se=eta_se, jac_hat=jac)


def eta_covariance(jac, cov, n_chains, ridge=1e-6):
    """Monte Carlo covariance of eta_hat: J^-1 (cov_T / n) J^-T.

    ``eta_hat`` solves the sample moment equation, so its error is the
    chain-average error mapped through the inverse Jacobian J of E_T[g].
    Without a Jacobian estimate J falls back to cov_T, which overstates J
    (and so understates the error) when chains are short.
    """
    J = cov if jac is None else jac
    d = J.shape[0]
    J = J + ridge * abs(np.trace(J)) / d * np.eye(d)
    Jinv = np.linalg.pinv(J)
    return Jinv @ (cov / n_chains) @ Jinv.T


def cd_sgd_fit(model, y_obs, config: FitConfig) -> FitResult:
    """Stochastic approximation: eta += (a/i) (g(y) - E_T[g])."""
    return _cd_loop(model, y_obs, config,
                    lambda i, resid, cov: (config.gain_a / i) * resid)


def cd_newton_fit(model, y_obs, config: FitConfig) -> FitResult:
    """Newton-like CD: eta += H^{-1} (g(y) - E_T[g]).

    H is the sampled ``cov_T(g)`` in Monte Carlo mode.  In exact mode it
    defaults to the within-component covariance (see
    ``exact.kernel_moments``), which matches the composite likelihood
    Hessian for mixture kernels; ``hessian="sample"`` restores ``cov_T``.
    H is ridge-regularized; a singular solve falls back to a gradient step.
    """
    def update(i, resid, cov):
        step, _ = _newton_direction(cov, resid, config.ridge)
        return step

    return _cd_loop(model, y_obs, config, update)


def sa_mle_reference(model, y_obs, config: FitConfig) -> FitResult:
    """Robbins-Monro MLE stand-in using long chains from the data.

    The residual is preconditioned by the sampled covariance and scaled by
    ``a/i``; with ``a = 1`` the first iteration is a full Newton step and
    later iterates average out the Monte Carlo noise.
    """
    def update(i, resid, cov):
        step, _ = _newton_direction(cov, resid, config.ridge)
        return (config.gain_a / i) * step

    return _cd_loop(model, y_obs, config, update)


def fit(model, y_obs, config: FitConfig) -> FitResult:
    """Dispatch on ``config.method``."""
    if config.method == "mple":
        return mple_fit(model, y_obs)
    if config.method == "composite":
        if config.blocks is None:
            raise ConfigError("composite fit needs a block distribution")
        return composite_fit(model, y_obs, config.blocks)
    return {"cd_sgd": cd_sgd_fit, "cd_newton": cd_newton_fit,
            "sa_mle_reference": sa_mle_reference}[config.method](model, y_obs, config)


def with_plan(config: FitConfig, plan: KernelPlan) -> FitConfig:
    return replace(config, plan=plan)
