"""Brute-force ground truth on enumerable state spaces.

States are addressed by their integer code ``sum(y_i << i)``.  Chain laws
are propagated as probability vectors over all 2^m codes; forbidden states
simply never receive mass.  Everything is computed in log space where it
matters and normalized with log-sum-exp.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.special import logsumexp

from .core import NEG_INF, as_bits, as_eta
from .errors import EnumerationLimitError, MLENotFoundError, UnreachableSupportError
from .kernels import KernelPlan
from .optim import newton_maximize

ENUM_LIMIT = 20
MATRIX_LIMIT = 12
SELECTION_LIMIT = 100_000


@dataclass
class ExactDistribution:
    """Normalized law over the allowed states of a model."""

    states: np.ndarray
    log_probs: np.ndarray
    codes: np.ndarray

    @property
    def probs(self):
        return np.exp(self.log_probs)


@dataclass
class TransitionMatrix:
    """Row-stochastic matrix over allowed states (ordered by ``codes``)."""

    matrix: np.ndarray
    codes: np.ndarray
    k: int = 1

    def power(self, k):
        return TransitionMatrix(np.linalg.matrix_power(self.matrix, k), self.codes, self.k * k)


@dataclass
class QStar:
    """Law of the final block values given the chain support."""

    sites: tuple
    configs: np.ndarray
    probs: np.ndarray
    pi: float


# --------------------------------------------------------------------------
# enumeration
# --------------------------------------------------------------------------

def _check_size(m, limit=ENUM_LIMIT):
    if m > limit:
        raise EnumerationLimitError(f"2^{m} states exceed the enumeration limit 2^{limit}")


def _all_states(m):
    return ((np.arange(2 ** m)[:, None] >> np.arange(m)) & 1).astype(np.uint8)


@functools.lru_cache(maxsize=16)
def _space(model):
    _check_size(model.m)
    Y = _all_states(model.m)
    return Y, model.stats(Y), model.offsets(Y)


def encode(y):
    bits = as_bits(y).astype(np.int64)
    return int((bits << np.arange(bits.size)).sum())


def log_weights(model, eta):
    _, G, O = _space(model)
    return G @ as_eta(eta, model.d) + O


def log_partition(model, eta) -> float:
    return float(logsumexp(log_weights(model, eta)))


def partition(model, eta) -> float:
    """z(eta) by full enumeration."""
    return math.exp(log_partition(model, eta))


def _probs(model, eta):
    lw = log_weights(model, eta)
    return np.exp(lw - logsumexp(lw))


def exact_distribution(model, eta) -> ExactDistribution:
    Y, _, _ = _space(model)
    lw = log_weights(model, eta)
    keep = np.isfinite(lw)
    return ExactDistribution(Y[keep], lw[keep] - logsumexp(lw), np.flatnonzero(keep))


def exact_mean_params(model, eta) -> np.ndarray:
    _, G, _ = _space(model)
    return _probs(model, eta) @ G


def exact_covariance(model, eta) -> np.ndarray:
    _, G, _ = _space(model)
    p = _probs(model, eta)
    mu = p @ G
    D = G - mu
    return (D * p[:, None]).T @ D


def _is_interior(G, g_obs):
    """True when g_obs is a strictly positive convex combination of the rows of G."""
    pts = np.unique(G, axis=0)
    N, d = pts.shape
    # variables: lambda_1..lambda_N, t ; maximize t with lambda_s >= t
    c = np.zeros(N + 1)
    c[-1] = -1.0
    A_eq = sp.hstack([sp.csr_matrix(np.vstack([pts.T, np.ones((1, N))])),
                      sp.csr_matrix((d + 1, 1))])
    b_eq = np.append(g_obs, 1.0)
    A_ub = sp.hstack([-sp.identity(N), sp.csr_matrix(np.ones((N, 1)))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(N), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * N + [(None, 1.0)], method="highs")
    return res.status == 0 and -res.fun > 1e-9


def exact_mle(model, g_obs, eta0=None, tol=1e-10, max_iter=200):
    """Exact MLE for observed statistics ``g_obs`` by damped Newton.

    Raises ``MLENotFoundError`` when ``g_obs`` is not in the relative
    interior of the achievable statistics.
    """
    _, G, O = _space(model)
    g_obs = np.asarray(g_obs, dtype=float)
    if not _is_interior(G[np.isfinite(O)], g_obs):
        raise MLENotFoundError("observed statistics lie on the boundary; MLE does not exist")

    def fun(eta):
        lw = G @ eta + O
        lz = logsumexp(lw)
        p = np.exp(lw - lz)
        mu = p @ G
        D = G - mu
        return float(eta @ g_obs - lz), g_obs - mu, -((D * p[:, None]).T @ D)

    x0 = np.zeros(model.d) if eta0 is None else np.asarray(eta0, dtype=float)
    res = newton_maximize(fun, x0, tol=tol, max_iter=max_iter)
    if res.status != "converged":
        raise MLENotFoundError(f"Newton iteration ended with status {res.status}")
    return res.x


# --------------------------------------------------------------------------
# exact kernel operators
# --------------------------------------------------------------------------

class _Propagator:
    """Applies exact Gibbs moves to probability vectors over all codes."""

    def __init__(self, model, eta):
        self.model = model
        self.m = model.m
        self.lw = log_weights(model, eta)
        self._layouts = {}

    def layout(self, sites):
        """Codes grouped by the rest: shape (2^(m-K), 2^K), and the conditional table."""
        sites = tuple(sites)
        if sites not in self._layouts:
            K = len(sites)
            mask = sum(1 << s for s in sites)
            base = np.array([c for c in range(2 ** self.m) if not c & mask], dtype=np.int64)
            cfg = ((np.arange(2 ** K)[:, None] >> np.arange(K)) & 1)
            offs = (cfg << np.array(sites)).sum(1)
            perm = base[:, None] + offs[None, :]
            lw = self.lw[perm]
            mx = lw.max(1, keepdims=True)
            dead = np.isneginf(mx[:, 0])
            w = np.exp(lw - np.where(np.isneginf(mx), 0.0, mx))
            w[dead] = 0.0
            tot = w.sum(1, keepdims=True)
            cond = np.divide(w, tot, out=np.zeros_like(w), where=tot > 0)
            self._layouts[sites] = (perm, cond)
        return self._layouts[sites]

    def joint(self, P, sites):
        perm, cond = self.layout(sites)
        out = np.empty_like(P)
        out[..., perm] = P[..., perm].sum(-1, keepdims=True) * cond
        return out

    def apply(self, P, sites, joint=True):
        if joint or len(sites) == 1:
            return self.joint(P, sites)
        for s in sites:
            P = self.joint(P, (s,))
        return P

    def step(self, P, mixture):
        out = np.zeros_like(P)
        for prob, sites, joint in mixture:
            out += prob * self.apply(P, sites, joint)
        return out


def _selections(model, plan: KernelPlan):
    """Expand a plan into ``[(weight, mixture_at(t))]``.

    A mixture is a list of ``(prob, sites, joint)`` moves; ``joint`` False
    means the sites are updated one after another.
    """
    m = model.m
    fam = plan.family
    plan.validate(model)
    if fam == "random_scan_gibbs":
        mix = [(1.0 / m, (i,), True) for i in range(m)]
        return [(1.0, lambda t: mix)]
    if fam == "sequential_scan_gibbs":
        return [(1.0 / m, (lambda t, s=s: [(1.0, ((s + t) % m,), True)])) for s in range(m)]
    if fam == "blocked_gibbs":
        mix = [(p, b, True) for b, p in plan.blocks.items()]
        return [(1.0, lambda t: mix)]
    if fam == "ci_pair":
        mix = [(p, b, False) for b, p in plan.blocks.items()]
        return [(1.0, lambda t: mix)]
    if fam == "one_and_half_pass":
        a, b = plan.pair
        return [(1.0, lambda t: [(1.0, (a if t % 2 == 0 else b,), True)])]
    if fam == "within_block":
        out = []
        for blk, p in plan.blocks.items():
            mix = [(1.0 / len(blk), (i,), True) for i in blk]
            out.append((p, lambda t, mix=mix: mix))
        return out
    # node_s: every node and every s-subset of its incident dyads
    n = model.n
    n_sub = math.comb(n - 1, plan.s)
    if n * n_sub > SELECTION_LIMIT:
        raise EnumerationLimitError("too many node-s supports to enumerate")
    w = 1.0 / (n * n_sub)
    out = []
    for u in range(n):
        for sub in itertools.combinations(model.incident_dyads(u), plan.s):
            mix = [(1.0 / plan.s, (int(i),), True) for i in sub]
            out.append((w, lambda t, mix=mix: mix))
    return out


def node_s_supports(model, s):
    """All node-s supports as sorted tuples with their selection probability."""
    n = model.n
    w = 1.0 / (n * math.comb(n - 1, s))
    return [(tuple(sorted(int(i) for i in sub)), w)
            for u in range(n) for sub in itertools.combinations(model.incident_dyads(u), s)]


def _delta(model, y0):
    v = np.zeros(2 ** model.m)
    v[encode(as_bits(y0, model.m))] = 1.0
    return v


def _law_iter(model, eta, plan, P0):
    """Yield the chain law after steps 1, 2, ... (unbounded)."""
    prop = _Propagator(model, eta)
    sels = _selections(model, plan)
    cur = [P0.copy() for _ in sels]
    t = 0
    while True:
        tot = np.zeros_like(P0)
        for s, (w, mix_at) in enumerate(sels):
            cur[s] = prop.step(cur[s], mix_at(t))
            tot += w * cur[s]
        t += 1
        yield tot


def chain_law(model, eta, plan: KernelPlan, y0) -> np.ndarray:
    """Exact law of the k-th state of a chain from ``y0``, over all codes."""
    _check_size(model.m)
    P0 = _delta(model, y0)
    if plan.k == 0:
        return P0
    for t, law in enumerate(_law_iter(model, eta, plan, P0), 1):
        if t == plan.k:
            return law


def kernel_moments(model, eta, plan: KernelPlan, y0):
    """Exact moments of g after the kernel, started at ``y0``.

    Returns ``(mean, cov, cov_within)``.  ``cov_within`` averages the
    covariance of each component of the final law, a component being one
    per-chain selection (scan start, support) together with the move made
    at the last step.  For a single-step blocked kernel it is the composite
    likelihood Hessian; ``cov`` adds the spread between component means.
    """
    _check_size(model.m)
    _, G, _ = _space(model)
    P0 = _delta(model, y0)
    if plan.k == 0:
        mu = P0 @ G
        return mu, np.zeros((model.d, model.d)), np.zeros((model.d, model.d))
    prop = _Propagator(model, eta)
    mu = np.zeros(model.d)
    second = np.zeros((model.d, model.d))
    within = np.zeros((model.d, model.d))
    for w, mix_at in _selections(model, plan):
        P = P0
        for t in range(plan.k - 1):
            P = prop.step(P, mix_at(t))
        for prob, sites, joint in mix_at(plan.k - 1):
            comp = prop.apply(P, sites, joint)
            cm = comp @ G
            D = G - cm
            cc = (D * comp[:, None]).T @ D
            wt = w * prob
            mu += wt * cm
            second += wt * (cc + np.outer(cm, cm))
            within += wt * cc
    return mu, second - np.outer(mu, mu), within


def kernel_step_matrix(model, eta, plan: KernelPlan, selection=None) -> TransitionMatrix:
    """Exact one-step matrix, averaged over the kernel's random block choices.

    ``selection`` restricts per-chain families (node_s, within_block,
    sequential scan) to one fixed support or scan start.
    """
    _check_size(model.m, MATRIX_LIMIT)
    lw = log_weights(model, eta)
    codes = np.flatnonzero(np.isfinite(lw))
    P = np.zeros((codes.size, 2 ** model.m))
    P[np.arange(codes.size), codes] = 1.0
    prop = _Propagator(model, eta)
    sels = _selections(model, plan)
    if selection is not None:
        sels = [sels[selection]] if isinstance(selection, int) else [(1.0, lambda t: [
            (1.0 / len(selection), (int(i),), True) for i in selection])]
    out = sum(w * prop.step(P, mix_at(0)) for w, mix_at in sels)
    return TransitionMatrix(out[:, codes], codes, 1)


def detailed_balance_error(T: TransitionMatrix, model, eta) -> float:
    """max |q(y) P(y,y') - q(y') P(y',y)| over allowed states."""
    q = _probs(model, eta)[T.codes]
    F = q[:, None] * T.matrix
    return float(np.max(np.abs(F - F.T)))


def kl_divergence(p, q) -> float:
    """KL(p || q) for probability vectors; +inf when p puts mass where q has none."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    on = p > 0
    if np.any(q[on] <= 0):
        return math.inf
    return float(np.sum(p[on] * (np.log(p[on]) - np.log(q[on]))))


def kl_decay_curve(model, eta, plan: KernelPlan, y0, k_max) -> np.ndarray:
    """KL(law after k steps || q) for k = 1..k_max."""
    _check_size(model.m)
    q = _probs(model, eta)
    out = np.empty(k_max)
    it = _law_iter(model, eta, plan, _delta(model, y0))
    for k in range(k_max):
        out[k] = kl_divergence(next(it), q)
    return out


# --------------------------------------------------------------------------
# chain-support conditionals and augmented divergences
# --------------------------------------------------------------------------

def _mask(sites):
    return sum(1 << int(s) for s in sites)


def support_distribution(model, plan: KernelPlan) -> dict:
    """pi(a): probability that the union of the chain's blocks equals a."""
    dist = {}
    for w, mix_at in _selections(model, plan):
        cur = {0: w}
        for t in range(plan.k):
            nxt = {}
            for u, pu in cur.items():
                for prob, sites, _ in mix_at(t):
                    nu = u | _mask(sites)
                    nxt[nu] = nxt.get(nu, 0.0) + pu * prob
            cur = nxt
        for u, pu in cur.items():
            dist[u] = dist.get(u, 0.0) + pu
    return {tuple(i for i in range(model.m) if u >> i & 1): p for u, p in dist.items() if p > 0}


def q_star_distribution(model, eta, plan: KernelPlan, y0, a) -> QStar:
    """Law of ``Y_a`` after k steps from ``y0``, given the chain's support is ``a``."""
    _check_size(model.m)
    a = tuple(sorted(int(i) for i in a))
    amask = _mask(a)
    prop = _Propagator(model, eta)
    acc = np.zeros(2 ** model.m)
    P0 = _delta(model, y0)
    for w, mix_at in _selections(model, plan):
        cur = {0: P0 * w}
        for t in range(plan.k):
            nxt = {}
            for u, vec in cur.items():
                for prob, sites, joint in mix_at(t):
                    sm = _mask(sites)
                    if sm & ~amask:
                        continue
                    nu = u | sm
                    upd = prob * prop.apply(vec, sites, joint)
                    nxt[nu] = nxt[nu] + upd if nu in nxt else upd
            cur = nxt
        if amask in cur:
            acc += cur[amask]
    pi = float(acc.sum())
    if pi <= 0:
        raise UnreachableSupportError(f"support {a} has zero probability under the kernel")
    perm, _ = prop.layout(a)
    base = encode(y0) & ~amask
    row = int(np.searchsorted(perm[:, 0], base))
    cfg = ((np.arange(2 ** len(a))[:, None] >> np.arange(len(a))) & 1).astype(np.uint8)
    return QStar(a, cfg, acc[perm[row]] / pi, pi)


def augmented_divergence_terms(model_p, model_q, eta_p, eta_q, plan, a, y0=None):
    """Both forms of d_a: ``(three_term, single_kl)``.

    Chains for q* start from ``(y0_a, y_rest)`` for every rest configuration;
    ``y0`` defaults to the all-zero state and only its ``a`` coordinates
    matter.
    """
    if model_p.m != model_q.m:
        raise ValueError("models must share a state space")
    m = model_q.m
    _check_size(m)
    a = tuple(sorted(int(i) for i in a))
    y0 = np.zeros(m, dtype=np.uint8) if y0 is None else as_bits(y0, m).copy()
    p = _probs(model_p, eta_p)
    q = _probs(model_q, eta_q)
    perm, _ = _Propagator(model_q, eta_q).layout(a)
    P, Q = p[perm], q[perm]
    p_m, q_m = P.sum(1), Q.sum(1)
    amask = _mask(a)
    start_a = encode(y0) & amask
    qstar = np.zeros_like(Q)
    Yall = _all_states(m)
    for g in range(perm.shape[0]):
        if p_m[g] == 0:
            continue
        qs = q_star_distribution(model_q, eta_q, plan, Yall[perm[g, 0] | start_a], a)
        qstar[g] = qs.probs

    with np.errstate(divide="ignore", invalid="ignore"):
        q_c = Q / q_m[:, None]
        on = P > 0
        if np.any(qstar[on] <= 0):
            single = math.inf
        else:
            single = float(np.sum(P[on] * np.log(P[on] / (qstar[on] * np.broadcast_to(
                p_m[:, None], P.shape)[on]))))
        if np.any(q_c[on] <= 0) or np.any(qstar[on] <= 0):
            three = math.inf
        else:
            cross = float(np.sum(P[on] * np.log(q_c[on] / qstar[on])))
            three = kl_divergence(p, q) - kl_divergence(p_m, q_m) + cross
    return three, single


def augmented_divergence(model_p, model_q, eta_p, eta_q, plan, a, y0=None) -> float:
    """d_a(p, q) = KL(p || q* p_m); the three-term form is computed alongside."""
    three, single = augmented_divergence_terms(model_p, model_q, eta_p, eta_q, plan, a, y0)
    if math.isfinite(three) and math.isfinite(single) and abs(three - single) > 1e-8 * max(
            1.0, abs(single)):
        raise ArithmeticError(f"d_a forms disagree: {three} vs {single}")
    return single


def combined_divergence(model_p, model_q, eta_p, eta_q, plan, y0=None) -> float:
    """cd(p, q): pi-weighted average of d_a over all reachable supports a."""
    total = 0.0
    for a, pi in support_distribution(model_q, plan).items():
        total += pi * augmented_divergence(model_p, model_q, eta_p, eta_q, plan, a, y0)
    return total


def cd_objective(model, eta, plan: KernelPlan, y) -> float:
    """E_pi[log q*(y_a | y0 = y, a)]: the chain-support likelihood of ``y``."""
    bits = as_bits(y, model.m)
    total = 0.0
    for a, pi in support_distribution(model, plan).items():
        qs = q_star_distribution(model, eta, plan, bits, a)
        code = int((bits[list(a)].astype(np.int64) << np.arange(len(a))).sum())
        total += pi * (math.log(qs.probs[code]) if qs.probs[code] > 0 else NEG_INF)
    return total


def conditional_table(model, eta, sites, y):
    """Exact q(Y_sites | y_rest) over the 2^|sites| configurations."""
    sites = tuple(int(s) for s in sites)
    prop = _Propagator(model, eta)
    perm, cond = prop.layout(sites)
    base = encode(y) & ~_mask(sites)
    return cond[int(np.searchsorted(perm[:, 0], base))]
