"""Gibbs-type transition kernels and chain runners.

Every family shares one engine that advances a stack of chains in lock-step,
so a single chain (``run_chain``) and a batch of chains (``sample_T``) follow
the same code path and consume random numbers identically: chain ``c`` draws
its per-chain selection (scan start, support set) from its own generator and
then a ``(k, 3)`` block of uniforms, one row per step.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import Model, State, as_bits, as_eta, prob_one
from .errors import (ConfigError, DegenerateConditionalError, EnumerationLimitError,
                     InvalidPairError)

FAMILIES = ("random_scan_gibbs", "sequential_scan_gibbs", "blocked_gibbs", "ci_pair",
            "one_and_half_pass", "node_s", "within_block")

BLOCK_LIMIT = 12


@dataclass(frozen=True)
class BlockDistribution:
    """A finite distribution r over index sets."""

    blocks: tuple
    probs: np.ndarray

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        probs = np.asarray(self.probs, dtype=float)
        if not blocks or probs.shape != (len(blocks),):
            raise ConfigError("need one probability per block")
        if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0, atol=1e-12):
            raise ConfigError("block probabilities must be non-negative and sum to 1")
        if any(len(b) == 0 or len(set(b)) != len(b) for b in blocks):
            raise ConfigError("blocks must be non-empty sets of distinct indices")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "probs", probs / probs.sum())

    @classmethod
    def uniform(cls, blocks):
        blocks = list(blocks)
        return cls(tuple(blocks), np.full(len(blocks), 1.0 / len(blocks)))

    @classmethod
    def singletons(cls, m):
        return cls.uniform([(i,) for i in range(m)])

    def __len__(self):
        return len(self.blocks)

    def items(self):
        return zip(self.blocks, self.probs)

    def pick(self, u):
        """Block index for uniform(s) ``u`` by inverse CDF."""
        cum = np.cumsum(self.probs)
        return np.minimum(np.searchsorted(cum, np.asarray(u) * cum[-1], side="right"),
                          len(self.blocks) - 1)

    def site_weights(self, m):
        """Total r-mass of blocks containing each site."""
        w = np.zeros(m)
        for b, p in self.items():
            w[list(b)] += p
        return w


@dataclass(frozen=True)
class KernelPlan:
    """A kernel family and its hyperparameters.

    ``blocks`` is the block distribution (blocked_gibbs), pair distribution
    (ci_pair) or support distribution (within_block).  ``pair`` names the two
    sites of the one-and-a-half-pass kernel.
    """

    family: str
    k: int = 1
    s: int | None = None
    blocks: BlockDistribution | None = None
    pair: tuple = (0, 1)
    block_limit: int = BLOCK_LIMIT

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown kernel family {self.family!r}")
        if self.k < 0:
            raise ConfigError("k must be non-negative")
        needs_blocks = self.family in ("blocked_gibbs", "ci_pair", "within_block")
        if needs_blocks != (self.blocks is not None):
            raise ConfigError(f"{self.family}: block distribution given iff required")
        if (self.family == "node_s") != (self.s is not None):
            raise ConfigError("s is required exactly for node_s")
        if self.family == "ci_pair" and any(len(b) != 2 for b in self.blocks.blocks):
            raise ConfigError("ci_pair blocks must be pairs")
        if self.family == "one_and_half_pass" and (len(self.pair) != 2
                                                   or self.pair[0] == self.pair[1]):
            raise ConfigError("one_and_half_pass needs two distinct sites")

    def with_k(self, k):
        return replace(self, k=k)

    def validate(self, model: Model):
        fam = self.family
        if self.blocks is not None:
            for b in self.blocks.blocks:
                if max(b) >= model.m:
                    raise ConfigError(f"block {b} references a site outside 0..{model.m - 1}")
        if fam == "blocked_gibbs":
            big = max(len(b) for b in self.blocks.blocks)
            if big > self.block_limit:
                raise EnumerationLimitError(
                    f"block of size {big} exceeds enumeration limit {self.block_limit}")
        if fam == "ci_pair":
            for i, j in self.blocks.blocks:
                if not model.conditionally_independent(i, j):
                    raise InvalidPairError(f"sites {i} and {j} are not conditionally independent")
        if fam == "node_s":
            n = getattr(model, "n", None)
            if n is None:
                raise ConfigError("node_s needs a graph model")
            if not 1 <= self.s <= n - 1:
                raise ConfigError(f"s must lie in 1..{n - 1}")
        if fam == "one_and_half_pass" and max(self.pair) >= model.m:
            raise ConfigError("one_and_half_pass sites out of range")


@dataclass
class ChainRecord:
    y0: State
    y_final: State
    visited_blocks: tuple
    g_final: np.ndarray


@dataclass
class Sample:
    """Chain output summary: moments of g over final states.

    ``jac`` estimates d E_T[g] / d eta (rows: statistics, columns: eta).
    """

    mean: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    g: np.ndarray = field(repr=False)
    records: list | None = field(default=None, repr=False)
    jac: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_chains(self):
        return self.g.shape[0]


def chain_rng(seed, c: int) -> np.random.Generator:
    """Generator for chain ``c`` under ``seed`` (an int or a tuple of ints)."""
    key = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    return np.random.default_rng(np.random.SeedSequence([*map(int, key), int(c)]))


# --------------------------------------------------------------------------
# engine
# --------------------------------------------------------------------------

def _gibbs(batch, eta, idx, u):
    """One single-site Gibbs update per chain; returns the transition score."""
    delta, off0, off1 = batch.change(idx)
    p1 = prob_one(delta @ eta, off0, off1)
    vals = (u < p1).astype(np.uint8)
    batch.assign(idx, vals)
    # d/d eta of log P(new value | rest) = (y_i - p1) * delta g
    return (vals - p1)[:, None] * delta


def _block_configs(K):
    return ((np.arange(2 ** K)[:, None] >> np.arange(K)) & 1).astype(np.uint8)


def _block_resample(model, eta, bits, block, u):
    """Draw y_block from its exact conditional given the rest of ``bits``."""
    block = list(block)
    Yc = np.repeat(bits[None, :], 2 ** len(block), axis=0)
    Yc[:, block] = _block_configs(len(block))
    lw = model.stats(Yc) @ eta + model.offsets(Yc)
    if np.all(np.isneginf(lw)):
        raise DegenerateConditionalError(f"every configuration of block {tuple(block)} is forbidden")
    w = np.exp(lw - lw.max())
    cum = np.cumsum(w)
    c = min(int(np.searchsorted(cum, u * cum[-1], side="right")), len(w) - 1)
    G = model.stats(Yc)
    return Yc[c], G[c] - (w / cum[-1]) @ G


def _draw_selection(model, plan, rng):
    fam = plan.family
    if fam == "sequential_scan_gibbs":
        return int(rng.integers(model.m))
    if fam == "node_s":
        u = int(rng.integers(model.n))
        return rng.choice(model.incident_dyads(u), size=plan.s, replace=False)
    if fam == "within_block":
        return np.array(plan.blocks.blocks[int(plan.blocks.pick(rng.random()))])
    return None


def _run(model, eta, plan, Y0, rngs, record=False, selections=None):
    """Advance one chain per generator from the rows of ``Y0``.

    Returns ``(Y_final, visited, score)``.  ``visited`` is a (C, k) object
    array of block tuples when ``record`` is set.  ``score`` (C, d) sums
    d/d eta log P over each chain's transitions; selections do not depend
    on eta, so it is the likelihood-ratio weight for derivatives of E_T.
    """
    eta = as_eta(eta, model.d)
    plan.validate(model)
    C = len(rngs)
    Y0 = np.array(Y0, dtype=np.uint8, ndmin=2)
    if Y0.shape[0] == 1 and C > 1:
        Y0 = np.repeat(Y0, C, axis=0)
    if selections is None:
        selections = [_draw_selection(model, plan, r) for r in rngs]
    k = plan.k
    U = np.stack([r.random((k, 3)) for r in rngs]) if k else np.zeros((C, 0, 3))
    fam = plan.family
    m = model.m
    rows = np.arange(C)
    visited = np.empty((C, k), dtype=object) if record else None
    score = np.zeros((C, model.d))

    if fam == "blocked_gibbs":
        Y = Y0.copy()
        for t in range(k):
            picks = plan.blocks.pick(U[:, t, 0])
            for c in range(C):
                block = plan.blocks.blocks[picks[c]]
                Y[c], sc = _block_resample(model, eta, Y[c], block, U[c, t, 1])
                score[c] += sc
                if record:
                    visited[c, t] = block
        return Y, visited, score

    batch = model.batch(Y0)
    if fam in ("node_s", "within_block"):
        lens = np.array([len(s) for s in selections])
        sup = np.zeros((C, lens.max()), dtype=int)
        for c, s in enumerate(selections):
            sup[c, :len(s)] = s
    elif fam == "sequential_scan_gibbs":
        start = np.array(selections, dtype=int)

    for t in range(k):
        u = U[:, t]
        if fam == "random_scan_gibbs":
            idx = np.minimum((u[:, 0] * m).astype(int), m - 1)
        elif fam == "sequential_scan_gibbs":
            idx = (start + t) % m
        elif fam == "one_and_half_pass":
            idx = np.full(C, plan.pair[t % 2])
        elif fam in ("node_s", "within_block"):
            idx = sup[rows, np.minimum((u[:, 0] * lens).astype(int), lens - 1)]
        elif fam == "ci_pair":
            pairs = np.array(plan.blocks.blocks)[plan.blocks.pick(u[:, 0])]
            score += _gibbs(batch, eta, pairs[:, 0], u[:, 1])
            score += _gibbs(batch, eta, pairs[:, 1], u[:, 2])
            if record:
                for c in range(C):
                    visited[c, t] = tuple(int(v) for v in pairs[c])
            continue
        score += _gibbs(batch, eta, idx, u[:, 1])
        if record:
            for c in range(C):
                visited[c, t] = (int(idx[c]),)
    return batch.Y.copy(), visited, score


def _records(model, Y0, Y, visited):
    Y0 = np.array(Y0, dtype=np.uint8, ndmin=2)
    if Y0.shape[0] == 1:
        Y0 = np.repeat(Y0, Y.shape[0], axis=0)
    G = model.stats(Y)
    return [ChainRecord(State(Y0[c]), State(Y[c]), tuple(visited[c]), G[c])
            for c in range(Y.shape[0])]


# --------------------------------------------------------------------------
# single-step API
# --------------------------------------------------------------------------

def _single(model, eta, plan, y, rng, selection=None):
    bits = as_bits(y, model.m)
    sel = None if selection is None else [selection]
    Y, visited, _ = _run(model, eta, plan, bits[None, :], [rng], record=True, selections=sel)
    return State(Y[0]), visited[0, 0] if plan.k else ()


def step_random_scan(model, eta, y, rng):
    """Resample one uniformly chosen coordinate.  Returns ``(y', B)``."""
    return _single(model, eta, KernelPlan("random_scan_gibbs", 1), y, rng)


def step_sequential_scan(model, eta, y, cursor, rng):
    """Resample the coordinate at ``cursor``.  Returns ``(y', B, next_cursor)``."""
    y2, B = _single(model, eta, KernelPlan("sequential_scan_gibbs", 1), y, rng,
                    selection=int(cursor))
    return y2, B, (int(cursor) + 1) % model.m


def step_blocked_gibbs(model, eta, y, blocks: BlockDistribution, rng, block_limit=BLOCK_LIMIT):
    """Draw A ~ r, then y_A exactly from its conditional.  Returns ``(y', A)``."""
    plan = KernelPlan("blocked_gibbs", 1, blocks=blocks, block_limit=block_limit)
    return _single(model, eta, plan, y, rng)


def step_ci_pair(model, eta, y, pairs: BlockDistribution, rng):
    """Pick a conditionally independent pair and resample both sites."""
    return _single(model, eta, KernelPlan("ci_pair", 1, blocks=pairs), y, rng)


def run_one_and_half_pass(model, eta, y, rng, pair=(0, 1)) -> ChainRecord:
    """Three single-site updates on ``pair`` in the order a, b, a."""
    return run_chain(model, eta, KernelPlan("one_and_half_pass", 3, pair=tuple(pair)), y, rng)


def draw_node_s_support(model, s, rng):
    """Uniform node, then a uniform s-subset of its incident dyads."""
    plan = KernelPlan("node_s", 1, s=s)
    plan.validate(model)
    return _draw_selection(model, plan, rng)


def step_node_s(model, eta, y, s, rng, support=None):
    """One random-scan update confined to a node-incident dyad subset.

    The subset is drawn at chain start when ``support`` is None and must be
    passed back in on later steps.  Returns ``(y', B, support)``.
    """
    if support is None:
        support = draw_node_s_support(model, s, rng)
    y2, B = _single(model, eta, KernelPlan("node_s", 1, s=s), y, rng,
                    selection=np.asarray(support))
    return y2, B, support


# --------------------------------------------------------------------------
# chains
# --------------------------------------------------------------------------

def run_chain(model, eta, plan: KernelPlan, y0, rng) -> ChainRecord:
    bits = as_bits(y0, model.m)
    Y, visited, _ = _run(model, eta, plan, bits[None, :], [rng], record=True)
    return _records(model, bits, Y, visited)[0]


def sample_T(model, eta, plan: KernelPlan, y0, n_chains, seed=0, records=False) -> Sample:
    """Run ``n_chains`` independent k-step chains from ``y0``.

    Chain ``c`` uses ``chain_rng(seed, c)``, so its output does not depend on
    how many other chains run alongside it.
    """
    if n_chains < 2:
        raise ConfigError("n_chains must be at least 2")
    bits = as_bits(y0, model.m)
    rngs = [chain_rng(seed, c) for c in range(n_chains)]
    Y, visited, score = _run(model, eta, plan, bits[None, :], rngs, record=records)
    G = model.stats(Y)
    cov = np.atleast_2d(np.cov(G, rowvar=False))
    se = np.sqrt(np.diag(cov) / n_chains)
    recs = _records(model, bits, Y, visited) if records else None
    # likelihood-ratio estimate of d E_T[g] / d eta: cov(g(Y_k), score)
    jac = (G - G.mean(0)).T @ score / (n_chains - 1)
    return Sample(G.mean(0), cov, se, G, recs, jac)


def simulate_equilibrium(model, eta, y0, n_chains=256, burn_sweeps=20, sample_sweeps=20,
                         seed=0):
    """Long random-scan runs for mean-value parameters at ``eta``.

    Statistics are recorded once per sweep (m steps) after burn-in.  The
    standard error treats chains as independent replicates, which accounts
    for within-chain autocorrelation.  Returns ``(mean, se, draws)`` with
    ``draws`` of shape (n_chains, sample_sweeps, d).
    """
    eta = as_eta(eta, model.d)
    bits = as_bits(y0, model.m)
    m = model.m
    rngs = [chain_rng(seed, c) for c in range(n_chains)]
    batch = model.batch(np.repeat(bits[None, :], n_chains, axis=0))
    draws = np.empty((n_chains, sample_sweeps, model.d))
    for sweep in range(burn_sweeps + sample_sweeps):
        U = np.stack([r.random((m, 2)) for r in rngs])
        for t in range(m):
            idx = np.minimum((U[:, t, 0] * m).astype(int), m - 1)
            _gibbs(batch, eta, idx, U[:, t, 1])
        if sweep >= burn_sweeps:
            draws[:, sweep - burn_sweeps] = batch.stats()
    chain_means = draws.mean(1)
    mean = chain_means.mean(0)
    se = chain_means.std(0, ddof=1) / np.sqrt(n_chains)
    return mean, se, draws
