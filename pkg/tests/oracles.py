"""Independent reference implementations used only by the tests.

Everything here is written from the definitions with plain loops and
``itertools`` so it shares no code path with the package.
"""
import itertools
import math


def dyads(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def adj_sets(n, y):
    nb = [set() for _ in range(n)]
    for (i, j), v in zip(dyads(n), y):
        if v:
            nb[i].add(j)
            nb[j].add(i)
    return nb


def naive_edges(n, y):
    return sum(int(v) for v in y)


def naive_isolates(n, y):
    nb = adj_sets(n, y)
    return sum(1 for i in range(n) if not nb[i])


def naive_nodematch(n, y, grades):
    return sum(1 for (i, j), v in zip(dyads(n), y) if v and grades[i] == grades[j])


def naive_gwesp(n, y, alpha):
    """e^a sum_i [1 - (1 - e^-a)^i] EP_i with EP_i tabulated edge by edge."""
    nb = adj_sets(n, y)
    ep = [0] * n
    for (i, j), v in zip(dyads(n), y):
        if v:
            ep[len(nb[i] & nb[j])] += 1
    r = 1.0 - math.exp(-alpha)
    return math.exp(alpha) * sum((1.0 - r ** i) * ep[i] for i in range(1, n))


def naive_ergm_stats(n, y, names, grades=None, alpha=None):
    out = []
    for name in names:
        if name == "edges":
            out.append(naive_edges(n, y))
        elif name == "isolates":
            out.append(naive_isolates(n, y))
        elif name == "nodematch":
            out.append(naive_nodematch(n, y, grades))
        elif name == "gwesp":
            out.append(naive_gwesp(n, y, alpha))
    return out


def naive_max_degree(n, y):
    return max((len(s) for s in adj_sets(n, y)), default=0)


def pairwise_stats(y, field_comp, couplings, d):
    g = [0.0] * d
    for i, c in enumerate(field_comp):
        if c >= 0:
            g[c] += y[i]
    for a, b, c in couplings:
        g[c] += y[a] * y[b]
    return g


def brute_law(m, logw):
    """Enumerate {0,1}^m; ``logw(y)`` may return -inf.  Returns (states, probs)."""
    states = list(itertools.product((0, 1), repeat=m))
    # site 0 is the least significant bit, matching integer codes
    states = [tuple(reversed(s)) for s in states]
    lw = [logw(s) for s in states]
    mx = max(v for v in lw if v != -math.inf)
    w = [0.0 if v == -math.inf else math.exp(v - mx) for v in lw]
    z = sum(w)
    return states, [v / z for v in w], mx + math.log(z)


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def pl_objective(y, eta, stats_fn, weights=None):
    """sum_i w_i log q(y_i | y_rest) by two evaluations per site."""
    total = 0.0
    for i in range(len(y)):
        y1 = list(y)
        y0 = list(y)
        y1[i], y0[i] = 1, 0
        a1 = dot(eta, stats_fn(y1))
        a0 = dot(eta, stats_fn(y0))
        mx = max(a0, a1)
        lz = mx + math.log(math.exp(a0 - mx) + math.exp(a1 - mx))
        w = 1.0 if weights is None else weights[i]
        total += w * ((a1 if y[i] else a0) - lz)
    return total


def composite_objective(y, eta, stats_fn, blocks, probs):
    """sum_A r(A) log q(y_A | y_rest) by enumerating each block."""
    total = 0.0
    for block, r in zip(blocks, probs):
        vals = []
        for cfg in itertools.product((0, 1), repeat=len(block)):
            yy = list(y)
            for s, v in zip(block, cfg):
                yy[s] = v
            vals.append(dot(eta, stats_fn(yy)))
        mx = max(vals)
        lz = mx + math.log(sum(math.exp(v - mx) for v in vals))
        total += r * (dot(eta, stats_fn(list(y))) - lz)
    return total


def gibbs_matrix_random_scan(m, logw):
    """Dense random-scan single-site Gibbs matrix over all 2^m codes."""
    size = 2 ** m
    P = [[0.0] * size for _ in range(size)]
    for c in range(size):
        y = [(c >> i) & 1 for i in range(m)]
        if logw(y) == -math.inf:
            continue
        for i in range(m):
            c0 = c & ~(1 << i)
            c1 = c | (1 << i)
            y0 = [(c0 >> t) & 1 for t in range(m)]
            y1 = [(c1 >> t) & 1 for t in range(m)]
            l0, l1 = logw(y0), logw(y1)
            if l1 == -math.inf:
                p1 = 0.0
            elif l0 == -math.inf:
                p1 = 1.0
            else:
                p1 = 1.0 / (1.0 + math.exp(l0 - l1))
            P[c][c1] += p1 / m
            P[c][c0] += (1 - p1) / m
    return P
