import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binom

import oracles
from cdfit import exact
from cdfit.core import change_stats, suff_stats
from cdfit.errors import ConfigError, ParseError
from cdfit.models import (BinaryPairwiseModel, ErgmModel, degree_cap_offset, dyad_index,
                          ergm_edges, ergm_gwesp, ergm_isolates, ergm_nodematch, graph_state,
                          n_from_dyads, read_attributes, read_edge_list, simulate_network,
                          write_attributes, write_edge_list)

ALL = ("edges", "isolates", "nodematch", "gwesp")
GW7_EDGES = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (3, 4), (4, 5), (3, 5), (5, 6), (0, 6),
             (2, 4)]
# brute-force shared-partner tabulation (tests/oracles.py), alpha = 2/3
GW7_VALUE = 10.459748642902223


def complete(n):
    return graph_state(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def star(leaves):
    return graph_state(leaves + 1, [(0, j) for j in range(1, leaves + 1)])


def test_edges():
    assert ergm_edges(graph_state(5, [])) == 0
    assert ergm_edges(complete(6)) == 15


def test_dyad_count_of_large_network():
    assert 1270 * 1269 // 2 == 805_815
    assert n_from_dyads(805_815) == 1270


def test_isolates():
    assert ergm_isolates(graph_state(5, [])) == 5
    assert ergm_isolates(complete(5)) == 0
    assert ergm_isolates(graph_state(5, [(1, 3)])) == 3


def test_nodematch():
    y = graph_state(6, [(0, 1), (1, 2), (2, 5), (3, 4)])
    assert ergm_nodematch(y, [1] * 6) == ergm_edges(y)
    assert ergm_nodematch(y, list(range(6))) == 0


def test_nodematch_two_grades_matches_double_loop(rng):
    grades = [0, 1, 0, 1, 1, 0]
    for _ in range(10):
        y = rng.integers(0, 2, 15)
        assert ergm_nodematch(graph_state(6, [d for d, v in zip(oracles.dyads(6), y) if v]),
                              grades) == oracles.naive_nodematch(6, y, grades)


def test_gwesp_small_cases():
    assert ergm_gwesp(graph_state(4, []), 2 / 3) == 0
    for alpha in (0.1, 2 / 3, 3.0):
        assert ergm_gwesp(complete(3), alpha) == pytest.approx(3.0, abs=1e-12)


def test_gwesp_seven_nodes():
    assert ergm_gwesp(graph_state(7, GW7_EDGES), 2 / 3) == pytest.approx(GW7_VALUE, abs=1e-12)


def test_gwesp_random_graphs_match_tabulation(rng):
    for _ in range(25):
        y = rng.integers(0, 2, 21)
        g = graph_state(7, [d for d, v in zip(oracles.dyads(7), y) if v])
        assert ergm_gwesp(g, 2 / 3) == pytest.approx(oracles.naive_gwesp(7, y, 2 / 3), abs=1e-12)


@given(st.lists(st.integers(0, 1), min_size=15, max_size=15), st.floats(0.05, 4.0))
def test_gwesp_nonnegative(bits, alpha):
    g = graph_state(6, [d for d, v in zip(oracles.dyads(6), bits) if v])
    assert ergm_gwesp(g, alpha) >= 0


def test_degree_cap_offset():
    assert degree_cap_offset(graph_state(12, []), 10) == 0
    assert degree_cap_offset(star(11), 10) == -math.inf
    assert degree_cap_offset(star(10), 10) == 0


def test_ergm_model_invariants():
    with pytest.raises(ValueError):
        ErgmModel(4, ("edges", "gwesp"))
    with pytest.raises(ValueError):
        ErgmModel(4, ("edges",), alpha=0.5)
    with pytest.raises(ValueError):
        ErgmModel(4, ("edges", "nodematch"), grades=[0, 1])
    m = ErgmModel(5, ALL, grades=[0, 1, 0, 1, 0], alpha=2 / 3, degree_cap=3)
    assert m.m == 10 and m.d == 4 and m.names == ALL


def test_change_stats_thousand_pairs(rng):
    model = ErgmModel(7, ALL, grades=[0, 1, 2, 0, 1, 2, 0], alpha=2 / 3, degree_cap=4)
    for _ in range(1000):
        y = (rng.random(model.m) < rng.uniform(0.1, 0.6)).astype(np.uint8)
        i = int(rng.integers(model.m))
        y1, y0 = y.copy(), y.copy()
        y1[i], y0[i] = 1, 0
        np.testing.assert_allclose(change_stats(model, y, i),
                                   suff_stats(model, y1) - suff_stats(model, y0),
                                   rtol=0, atol=1e-12)


def test_batch_incremental_state_stays_consistent(rng):
    model = ErgmModel(8, ALL, grades=[0, 1] * 4, alpha=2 / 3, degree_cap=5)
    Y = np.zeros((16, model.m), dtype=np.uint8)
    batch = model.batch(Y)
    for _ in range(300):
        idx = rng.integers(model.m, size=16)
        delta, off0, off1 = batch.change(idx)
        for c in range(16):
            y1, y0 = batch.Y[c].copy(), batch.Y[c].copy()
            y1[idx[c]], y0[idx[c]] = 1, 0
            np.testing.assert_allclose(delta[c], suff_stats(model, y1) - suff_stats(model, y0),
                                       atol=1e-12)
            assert off1[c] == model.offsets(y1[None, :])[0]
        ok = np.isfinite(off1)
        vals = np.where(ok, rng.integers(0, 2, 16), 0).astype(np.uint8)
        batch.assign(idx, vals)
    np.testing.assert_allclose(batch.stats(), model.stats(batch.Y), atol=1e-12)


def test_zero_coupling_factorizes():
    model = BinaryPairwiseModel(4, [0, 1, 2, 3], [(0, 1, 4)])
    eta = np.array([0.3, -0.5, 1.1, 0.2, 0.0])
    law = exact.exact_distribution(model, eta)
    marg = 1 / (1 + np.exp(-eta[:4]))
    prod = np.prod(np.where(law.states == 1, marg, 1 - marg), axis=1)
    np.testing.assert_allclose(law.probs, prod, atol=1e-12)


def test_pairwise_stats_match_loops(ladder, rng):
    for _ in range(20):
        y = rng.integers(0, 2, 8)
        want = oracles.pairwise_stats(list(y), [0] * 8, [(a, b, 1) for a, b, _ in
                                                         ladder.couplings], 2)
        np.testing.assert_array_equal(suff_stats(ladder, y), want)


def test_pairwise_validation():
    with pytest.raises(ValueError):
        BinaryPairwiseModel(3, [0, 0, 0], [(0, 0, 1)])
    with pytest.raises(ValueError):
        BinaryPairwiseModel(3, [-1, -1, -1])


def test_dyad_index_row_major():
    assert [dyad_index(4, i, j) for i, j in oracles.dyads(4)] == list(range(6))
    assert dyad_index(4, 3, 1) == dyad_index(4, 1, 3)


def test_incident_dyads():
    model = ErgmModel(5, ("edges",))
    for u in range(5):
        inc = model.incident_dyads(u)
        assert len(inc) == 4
        assert all(u in model.nodes(i) for i in inc)


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def test_edge_list_roundtrip(tmp_path):
    p = tmp_path / "g.edges"
    write_edge_list(p, 5, [(3, 1), (0, 4)])
    n, edges = read_edge_list(p)
    assert n == 5 and sorted(edges) == [(0, 4), (1, 3)]
    a = tmp_path / "g.attr"
    write_attributes(a, ["x", "y", "x", "z", "y"])
    g = read_attributes(a, 5)
    assert g[0] == g[2] and g[1] == g[4] and g[0] != g[3]


@pytest.mark.parametrize("body,line", [
    ("# nodes: 4\n0 1\n1 7\n", 3),
    ("# nodes: 4\n0 1\n2 2\n", 3),
    ("0 1\nfoo bar\n", 2),
])
def test_edge_list_errors_name_the_line(tmp_path, body, line):
    p = tmp_path / "bad.edges"
    p.write_text(body)
    with pytest.raises(ParseError) as err:
        read_edge_list(p)
    assert err.value.lineno == line
    assert f":{line}:" in str(err.value)


def test_attribute_errors(tmp_path):
    p = tmp_path / "bad.attr"
    p.write_text("0 a\n9 b\n")
    with pytest.raises(ParseError):
        read_attributes(p, 3)


# ---------------------------------------------------------------------------
# synthetic networks
# ---------------------------------------------------------------------------

def test_simulate_respects_cap():
    edges, grades = simulate_network(30, 2, 0.1, np.random.default_rng(3), degree_cap=10)
    y = graph_state(30, edges)
    assert degree_cap_offset(y, 10) == 0
    assert len(grades) == 30 and set(grades) == {0, 1}


def test_simulate_deterministic():
    a = simulate_network(30, 3, 0.1, np.random.default_rng(9), homophily=2.0, degree_cap=10)
    b = simulate_network(30, 3, 0.1, np.random.default_rng(9), homophily=2.0, degree_cap=10)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])


def test_simulate_edge_count_in_binomial_band():
    lo, hi = binom.interval(0.99, 435, 0.1)
    inside = 0
    for seed in range(20):
        edges, _ = simulate_network(30, 2, 0.1, np.random.default_rng(seed), degree_cap=10)
        inside += lo <= len(edges) <= hi
    # 99% band: at most one of twenty draws may fall outside by chance
    assert inside >= 19


def test_simulate_rejects_infeasible():
    with pytest.raises(ConfigError):
        simulate_network(30, 2, 0.5, np.random.default_rng(0), degree_cap=3)
