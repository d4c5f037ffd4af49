"""Concrete models: a binary pairwise model and a small undirected ERGM.

Graph states enumerate dyads of the upper triangle row by row:
(0,1), (0,2), ..., (0,n-1), (1,2), ... so dyad ``(i, j)`` with ``i < j``
lives at ``i*n - i*(i+1)//2 + j - i - 1``.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .core import NEG_INF, ChainBatch, Model, State, as_bits
from .errors import ConfigError, DimensionError, ParseError

ERGM_STATS = ("edges", "isolates", "nodematch", "gwesp")


# --------------------------------------------------------------------------
# Binary pairwise model
# --------------------------------------------------------------------------

class BinaryPairwiseModel(Model):
    """Ising-style model on {0,1}^m with tied parameters.

    Parameters
    ----------
    m : int
        Number of sites.
    fields : sequence of int
        Statistic component receiving ``y_i`` for each site, or -1 for none.
    couplings : sequence of (i, j, component)
        Each contributes ``y_i * y_j`` to the given component.
    names : sequence of str, optional
        Statistic labels; defaults to ``s0, s1, ...``.
    """

    def __init__(self, m, fields, couplings=(), names=None):
        fields = np.asarray(fields, dtype=int)
        if fields.shape != (m,):
            raise DimensionError("fields must have one entry per site")
        couplings = [(int(a), int(b), int(c)) for a, b, c in couplings]
        for a, b, c in couplings:
            if not (0 <= a < m and 0 <= b < m) or a == b:
                raise ValueError(f"invalid coupling pair ({a}, {b})")
            if c < 0:
                raise ValueError("coupling component must be non-negative")
        comps = [c for c in fields if c >= 0] + [c for _, _, c in couplings]
        if not comps:
            raise ValueError("model needs at least one statistic")
        d = max(comps) + 1
        self.m = m
        self.d = d
        self.names = tuple(names) if names is not None else tuple(f"s{c}" for c in range(d))
        if len(self.names) != d:
            raise DimensionError("names must match the statistic dimension")
        self.fields = fields
        self.couplings = tuple(couplings)

        F = np.zeros((m, d))
        for i, c in enumerate(fields):
            if c >= 0:
                F[i, c] = 1.0
        self._F = F
        self._pa = np.array([a for a, _, _ in couplings], dtype=int)
        self._pb = np.array([b for _, b, _ in couplings], dtype=int)
        Cm = np.zeros((len(couplings), d))
        for e, (_, _, c) in enumerate(couplings):
            Cm[e, c] = 1.0
        self._C = Cm
        # J[i, other, c]: coupling weight of y_other in the change statistic of site i
        J = np.zeros((m, m, d))
        for a, b, c in couplings:
            J[a, b, c] += 1.0
            J[b, a, c] += 1.0
        self._J = J
        self._adjacent = {(min(a, b), max(a, b)) for a, b, _ in couplings}

    @classmethod
    def independent(cls, m):
        """Single statistic ``sum(y)``; sites are independent."""
        return cls(m, np.zeros(m, dtype=int), (), names=("sum",))

    @classmethod
    def homogeneous(cls, m, edges):
        """Two statistics: total field ``sum(y_i)`` and total coupling over ``edges``."""
        return cls(m, np.zeros(m, dtype=int), [(a, b, 1) for a, b in edges],
                   names=("field", "coupling"))

    @classmethod
    def full(cls, m, edges):
        """One field per site and one coupling per edge."""
        names = [f"h{i}" for i in range(m)] + [f"J{a}_{b}" for a, b in edges]
        return cls(m, np.arange(m), [(a, b, m + e) for e, (a, b) in enumerate(edges)],
                   names=names)

    def stats(self, Y):
        Y = np.asarray(Y, dtype=float).reshape(-1, self.m)
        out = Y @ self._F
        if len(self.couplings):
            out = out + (Y[:, self._pa] * Y[:, self._pb]) @ self._C
        return out

    def batch(self, Y):
        return _PairwiseBatch(self, Y)

    def conditionally_independent(self, i, j):
        return i != j and (min(i, j), max(i, j)) not in self._adjacent

    def __repr__(self):
        return f"BinaryPairwiseModel(m={self.m}, d={self.d}, couplings={len(self.couplings)})"


class _PairwiseBatch(ChainBatch):
    def change(self, idx):
        m = self.model
        idx = np.asarray(idx)
        delta = m._F[idx] + np.einsum("cod,co->cd", m._J[idx], self.Y.astype(float))
        z = np.zeros(self.n_chains)
        return delta, z, z


# --------------------------------------------------------------------------
# Graph helpers
# --------------------------------------------------------------------------

def n_from_dyads(m: int) -> int:
    n = int(round((1 + math.sqrt(1 + 8 * m)) / 2))
    if n * (n - 1) // 2 != m:
        raise DimensionError(f"{m} is not a triangular number of dyads")
    return n


def dyad_arrays(n: int):
    """Row-major upper-triangle dyad endpoints ``(dyad_i, dyad_j)``."""
    i, j = np.triu_indices(n, k=1)
    return i, j


def dyad_index(n: int, i: int, j: int) -> int:
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"no dyad ({i}, {j}) in a {n}-node graph")
    if i > j:
        i, j = j, i
    return i * n - i * (i + 1) // 2 + j - i - 1


def graph_state(n: int, edges) -> State:
    bits = np.zeros(n * (n - 1) // 2, dtype=np.uint8)
    for i, j in edges:
        bits[dyad_index(n, i, j)] = 1
    return State(bits)


def edges_of(y) -> list:
    bits = as_bits(y)
    n = n_from_dyads(bits.size)
    di, dj = dyad_arrays(n)
    on = np.flatnonzero(bits)
    return [(int(di[e]), int(dj[e])) for e in on]


def adjacency(Y, n: int) -> np.ndarray:
    """Stack of symmetric 0/1 adjacency matrices, shape (S, n, n)."""
    Y = np.asarray(Y).reshape(-1, n * (n - 1) // 2)
    di, dj = dyad_arrays(n)
    A = np.zeros((Y.shape[0], n, n), dtype=np.int32)
    A[:, di, dj] = Y
    A[:, dj, di] = Y
    return A


def _single_adj(y):
    bits = as_bits(y)
    n = n_from_dyads(bits.size)
    return adjacency(bits, n)[0], n


def ergm_edges(y) -> int:
    return int(as_bits(y).sum())


def ergm_isolates(y) -> int:
    """Number of degree-0 nodes."""
    A, _ = _single_adj(y)
    return int((A.sum(1) == 0).sum())


def ergm_nodematch(y, grades) -> int:
    A, n = _single_adj(y)
    g = np.asarray(grades)
    if g.shape != (n,):
        raise DimensionError("grades must have one entry per node")
    same = g[:, None] == g[None, :]
    return int(np.triu(A * same, 1).sum())


def gwesp_from_adjacency(A, alpha: float) -> np.ndarray:
    """GWESP for a stack of adjacency matrices.

    ``exp(alpha) * sum_edges (1 - (1 - exp(-alpha))**sp)`` with ``sp`` the
    number of shared partners of the edge's endpoints.
    """
    A = np.asarray(A)
    n = A.shape[-1]
    SP = A @ A
    di, dj = dyad_arrays(n)
    on = A[:, di, dj]
    sp = SP[:, di, dj]
    q = 1.0 - math.exp(-alpha)
    return math.exp(alpha) * (on * (1.0 - q ** sp)).sum(1)


def ergm_gwesp(y, alpha: float) -> float:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    A, _ = _single_adj(y)
    return float(gwesp_from_adjacency(A[None], alpha)[0])


def degree_cap_offset(y, cap: int) -> float:
    if cap < 0:
        raise ValueError("cap must be non-negative")
    A, _ = _single_adj(y)
    return NEG_INF if A.sum(1).max(initial=0) > cap else 0.0


# --------------------------------------------------------------------------
# ERGM
# --------------------------------------------------------------------------

class ErgmModel(Model):
    """Undirected ERGM with any ordered subset of edges, isolates, nodematch, gwesp.

    ``alpha`` is the fixed GWESP decay; ``degree_cap`` adds the hard
    constraint that no node exceeds that many connections.
    """

    def __init__(self, n, stat_set=ERGM_STATS, grades=None, alpha=None, degree_cap=None):
        stat_set = tuple(stat_set)
        if n < 2:
            raise ValueError("need at least two nodes")
        unknown = set(stat_set) - set(ERGM_STATS)
        if unknown or not stat_set or len(set(stat_set)) != len(stat_set):
            raise ValueError(f"bad statistic set {stat_set!r}")
        if ("gwesp" in stat_set) != (alpha is not None):
            raise ValueError("alpha is required exactly when gwesp is in the statistic set")
        if alpha is not None and not alpha > 0:
            raise ValueError("alpha must be positive")
        if "nodematch" in stat_set:
            if grades is None or len(grades) != n:
                raise DimensionError("nodematch needs one grade per node")
        if degree_cap is not None and degree_cap < 0:
            raise ValueError("degree cap must be non-negative")
        self.n = n
        self.m = n * (n - 1) // 2
        self.d = len(stat_set)
        self.names = stat_set
        self.grades = None if grades is None else np.asarray(grades)
        self.alpha = alpha
        self.degree_cap = degree_cap
        self.dyad_i, self.dyad_j = dyad_arrays(n)
        if self.grades is not None:
            self.same = (self.grades[self.dyad_i] == self.grades[self.dyad_j]).astype(np.int64)
        else:
            self.same = None
        if alpha is not None:
            self._qpow = (1.0 - math.exp(-alpha)) ** np.arange(n + 1)

    def index(self, i, j):
        return dyad_index(self.n, i, j)

    def nodes(self, idx):
        return int(self.dyad_i[idx]), int(self.dyad_j[idx])

    def incident_dyads(self, u):
        """Dyad indices touching node ``u``, ordered by the other endpoint."""
        return np.array([dyad_index(self.n, u, v) for v in range(self.n) if v != u])

    def stats(self, Y):
        Y = np.asarray(Y).reshape(-1, self.m).astype(np.int64)
        A = adjacency(Y, self.n)
        cols = []
        for name in self.names:
            if name == "edges":
                cols.append(Y.sum(1))
            elif name == "isolates":
                cols.append((A.sum(2) == 0).sum(1))
            elif name == "nodematch":
                cols.append(Y @ self.same)
            else:
                cols.append(gwesp_from_adjacency(A, self.alpha))
        return np.column_stack(cols).astype(float)

    def offsets(self, Y):
        Y = np.asarray(Y).reshape(-1, self.m)
        if self.degree_cap is None:
            return np.zeros(Y.shape[0])
        deg = adjacency(Y, self.n).sum(2)
        return np.where(deg.max(1) > self.degree_cap, NEG_INF, 0.0)

    def batch(self, Y):
        return _ErgmBatch(self, Y)

    def conditionally_independent(self, i, j):
        if i == j:
            return False
        # gwesp couples dyads through shared partners of nearby edges
        if "gwesp" in self.names:
            return False
        a, b = set(self.nodes(i)), set(self.nodes(j))
        if a & b and ("isolates" in self.names or self.degree_cap is not None):
            return False
        return True

    def __repr__(self):
        return (f"ErgmModel(n={self.n}, stats={self.names}, alpha={self.alpha}, "
                f"degree_cap={self.degree_cap})")


class _ErgmBatch(ChainBatch):
    """Maintains adjacency, degrees and shared-partner counts per chain."""

    def __init__(self, model, Y):
        super().__init__(model, Y)
        self.A = adjacency(self.Y, model.n)
        self.deg = self.A.sum(2)
        self.SP = self.A @ self.A

    def change(self, idx):
        md = self.model
        idx = np.asarray(idx)
        rows = np.arange(self.n_chains)
        i = md.dyad_i[idx]
        j = md.dyad_j[idx]
        cur = self.Y[rows, idx].astype(np.int64)
        di = self.deg[rows, i] - cur
        dj = self.deg[rows, j] - cur
        cols = []
        for name in md.names:
            if name == "edges":
                cols.append(np.ones(self.n_chains))
            elif name == "isolates":
                cols.append(-((di == 0).astype(float) + (dj == 0)))
            elif name == "nodematch":
                cols.append(md.same[idx].astype(float))
            else:
                common = self.A[rows, i] & self.A[rows, j]
                sp_ij = common.sum(1)
                # shared-partner counts of (i,k), (j,k) with the dyad (i,j) absent
                spi = np.clip(self.SP[rows, i] - cur[:, None], 0, None)
                spj = np.clip(self.SP[rows, j] - cur[:, None], 0, None)
                q = md._qpow
                side = ((q[spi] + q[spj]) * common).sum(1)
                cols.append(math.exp(md.alpha) * (1.0 - q[sp_ij]) + side)
        delta = np.column_stack(cols)
        if md.degree_cap is None:
            z = np.zeros(self.n_chains)
            return delta, z, z
        cap = md.degree_cap
        over = (self.deg > cap).sum(1) - (self.deg[rows, i] > cap) - (self.deg[rows, j] > cap)
        off0 = np.where((over > 0) | (di > cap) | (dj > cap), NEG_INF, 0.0)
        off1 = np.where((over > 0) | (di + 1 > cap) | (dj + 1 > cap), NEG_INF, 0.0)
        return delta, off0, off1

    def assign(self, idx, values):
        md = self.model
        idx = np.asarray(idx)
        values = np.asarray(values, dtype=np.uint8)
        rows = np.arange(self.n_chains)
        flip = self.Y[rows, idx] != values
        if not flip.any():
            return
        ch = rows[flip]
        i = md.dyad_i[idx[flip]]
        j = md.dyad_j[idx[flip]]
        v = values[flip].astype(np.int32)
        s = (2 * v - 1)[:, None]
        self.Y[ch, idx[flip]] = v
        self.A[ch, i, j] = v
        self.A[ch, j, i] = v
        self.deg[ch, i] += s[:, 0]
        self.deg[ch, j] += s[:, 0]
        rj = s * self.A[ch, j]
        ri = s * self.A[ch, i]
        self.SP[ch, i, :] += rj
        self.SP[ch, :, i] += rj
        self.SP[ch, j, :] += ri
        self.SP[ch, :, j] += ri
        # the updates above touch the diagonal twice; it holds the degree
        self.SP[ch, i, i] = self.deg[ch, i]
        self.SP[ch, j, j] = self.deg[ch, j]


# --------------------------------------------------------------------------
# Files and synthetic data
# --------------------------------------------------------------------------

def read_edge_list(path, n=None):
    """Parse an undirected edge list.  Returns ``(n, edges)``.

    ``n`` may come from the caller or a ``# nodes: N`` header comment.
    Node ids are 0-based; pairs are canonicalized to ``i < j``.
    """
    path = Path(path)
    edges = set()
    header_n = None
    raw = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                body = text[1:].strip()
                if body.lower().startswith("nodes:"):
                    try:
                        header_n = int(body.split(":", 1)[1])
                    except ValueError:
                        raise ParseError(path, lineno, "bad node-count header") from None
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ParseError(path, lineno, f"expected 'i j', got {text!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(path, lineno, f"non-integer node id in {text!r}") from None
            raw.append((lineno, a, b))
    if n is None:
        n = header_n
    if n is None:
        raise ConfigError(f"{path}: node count unknown (pass n or add a '# nodes: N' header)")
    for lineno, a, b in raw:
        if a < 0 or b < 0 or a >= n or b >= n:
            raise ParseError(path, lineno, f"node id out of range for n={n}")
        if a == b:
            raise ParseError(path, lineno, "self-loop")
        edges.add((min(a, b), max(a, b)))
    return n, sorted(edges)


def read_attributes(path, n):
    """Parse ``i grade_label`` lines into a length-n array of labels."""
    path = Path(path)
    grades = [None] * n
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ParseError(path, lineno, f"expected 'i grade', got {text!r}")
            try:
                i = int(parts[0])
            except ValueError:
                raise ParseError(path, lineno, "non-integer node id") from None
            if not 0 <= i < n:
                raise ParseError(path, lineno, f"node id out of range for n={n}")
            grades[i] = parts[1]
    missing = [i for i, g in enumerate(grades) if g is None]
    if missing:
        raise ConfigError(f"{path}: no grade for nodes {missing[:5]}")
    return np.array(grades)


def write_edge_list(path, n, edges):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# nodes: {n}\n")
        for a, b in sorted((min(e), max(e)) for e in edges):
            fh.write(f"{a} {b}\n")


def write_attributes(path, grades):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, g in enumerate(grades):
            fh.write(f"{i} {g}\n")


def simulate_network(n, n_grades, density, rng, homophily=1.0, degree_cap=None,
                     max_tries=10000):
    """Planted-grade Bernoulli graph, rejected until it respects the degree cap.

    Nodes get balanced grades ``0..n_grades-1`` in random order.  Within-grade
    dyads are ``homophily`` times as likely as between-grade ones, with the
    base rate chosen so the expected edge count is ``density * m``.

    Returns ``(edges, grades)``.
    """
    if not 2 <= n_grades <= n:
        raise ConfigError("n_grades must be between 2 and n")
    if not 0 < density < 1:
        raise ConfigError("density must lie in (0, 1)")
    if homophily <= 0:
        raise ConfigError("homophily must be positive")
    if degree_cap is not None and density * (n - 1) > degree_cap:
        raise ConfigError(f"mean degree {density * (n - 1):.2f} exceeds degree cap {degree_cap}")
    grades = rng.permutation(np.arange(n) % n_grades)
    di, dj = dyad_arrays(n)
    same = grades[di] == grades[dj]
    n_same = same.sum()
    base = density * len(di) / (len(di) - n_same + homophily * n_same)
    p = np.where(same, homophily * base, base)
    if p.max() > 1:
        raise ConfigError("homophily too large for the requested density")
    for _ in range(max_tries):
        on = rng.random(len(di)) < p
        if degree_cap is not None:
            deg = np.bincount(di[on], minlength=n) + np.bincount(dj[on], minlength=n)
            if deg.max(initial=0) > degree_cap:
                continue
        edges = [(int(a), int(b)) for a, b in zip(di[on], dj[on])]
        return edges, grades
    raise ConfigError("could not draw a network within the degree cap")
