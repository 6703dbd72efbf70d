import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmsched.topology import (
    Network,
    blockage_probability,
    enumerate_simple_paths,
    generate_network,
    path_capacity,
    read_network,
    resample_blockage,
    select_paths,
    step_capacities,
    validate_path,
    widest_path,
    write_network,
)

from conftest import make_network


def test_generation_is_seeded():
    a = generate_network(15, (0, 10), (0, 250), True, seed=7)
    b = generate_network(15, (0, 10), (0, 250), True, seed=7)
    assert a == b
    buf_a, buf_b = io.StringIO(), io.StringIO()
    write_network(a, buf_a)
    write_network(b, buf_b)
    assert buf_a.getvalue() == buf_b.getvalue()


def test_generation_ranges_and_structure():
    net = generate_network(15, (0, 10), (0, 250), True, seed=7)
    caps = np.array([net.capacity[i, j] for i, j in net.links()])
    assert caps.size == 16 * 16 - 15  # (N+1)^2 ordered pairs minus N relay self-pairs
    assert caps.min() >= 0 and caps.max() <= 10
    assert not net.present[:, 0].any() and not net.present[16, :].any()
    assert not np.diag(net.present).any()
    relays = slice(1, 16)
    assert np.array_equal(net.weight[relays, relays], net.weight[relays, relays].T)
    assert net.weight.max() <= 250


def test_generation_rejects_bad_intervals():
    with pytest.raises(ValueError):
        generate_network(3, (5, 1), (0, 250), seed=0)
    with pytest.raises(ValueError):
        generate_network(3, (0, 10), (10, 0), seed=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 8), st.integers(0, 2**31 - 1), st.booleans())
def test_weights_symmetric(n, seed, full):
    net = generate_network(n, seed=seed, fully_connected=full)
    assert np.array_equal(net.weight, net.weight.T)


def test_path_capacity_examples(line_net):
    assert path_capacity(line_net, (0, 1, 2)) == 3.0
    direct = make_network(0, {(0, 1): 4.2})
    assert path_capacity(direct, (0, 1)) == 4.2
    line_net.blocked[1, 2] = line_net.blocked[2, 1] = True
    assert path_capacity(line_net, (0, 1, 2)) == 0.0
    assert line_net.capacity[1, 2] == 3.0


def test_path_validation(line_net):
    with pytest.raises(ValueError):
        path_capacity(line_net, (0, 2))
    with pytest.raises(ValueError):
        validate_path(line_net, (0, 1, 1, 2))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_path_capacity_is_a_link_minimum(n, seed):
    net = generate_network(n, seed=seed)
    rng = np.random.default_rng(seed)
    for p in select_paths(net, 3, 1, rng):
        c = path_capacity(net, p)
        link_caps = [net.capacity[i, j] for i, j in zip(p[:-1], p[1:])]
        assert c <= min(link_caps) and c in link_caps


def test_step_capacities_clamp_arithmetic():
    net = make_network(1, {(0, 1): 9.8, (1, 2): 0.3})

    class FixedDelta:
        def uniform(self, lo, hi, size):
            d = np.zeros(size)
            d[0, 1], d[1, 2] = 0.7, -0.9
            return d

    step_capacities(net, (-1, 1), (0, 10), FixedDelta())
    assert net.capacity[0, 1] == 10.0
    assert net.capacity[1, 2] == 0.0


def test_step_capacities_zero_drift_and_bounds():
    net = generate_network(6, seed=3)
    before = net.copy()
    step_capacities(net, (0, 0), (0, 10), np.random.default_rng(0))
    assert net == before
    rng = np.random.default_rng(1)
    net.blocked[1, 2] = net.blocked[2, 1] = True
    for _ in range(50):
        step_capacities(net, (-1, 1), (0, 10), rng)
    caps = net.capacity[net.present]
    assert caps.min() >= 0 and caps.max() <= 10
    assert net.blocked[1, 2] and net.blocked[2, 1]
    assert np.all(net.capacity[~net.present] == 0)


def test_blockage_edge_cases():
    net = generate_network(5, seed=0)
    rng = np.random.default_rng(0)
    resample_blockage(net, 0.0, rng)
    assert not net.blocked.any()
    net.weight[:] = 0.0
    resample_blockage(net, 1.0, rng)
    assert not net.blocked.any()
    with pytest.raises(ValueError):
        resample_blockage(net, -0.1, rng)


def test_blockage_is_symmetric_and_preserves_capacity():
    net = generate_network(6, seed=2)
    caps = net.capacity.copy()
    resample_blockage(net, 1 / 100, np.random.default_rng(4))
    assert net.blocked.any()
    assert np.array_equal(net.blocked, net.blocked.T)
    assert np.array_equal(net.capacity, caps)
    assert np.all(net.effective_capacity()[net.blocked] == 0)


def test_blockage_frequency_matches_formula():
    # Monte Carlo over 1e5 resamples of a single link with w = 250, lambda = 1/500
    net = make_network(0, {(0, 1): 1.0}, {(0, 1): 250.0})
    rng = np.random.default_rng(123)
    trials = 100_000
    hits = 0
    for _ in range(trials):
        resample_blockage(net, 1 / 500, rng)
        hits += net.blocked[0, 1]
    p = 1 - math.exp(-0.5)
    assert abs(p - 0.3935) < 1e-4
    freq = hits / trials
    assert abs(freq - p) < 0.01
    assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / trials)


def test_blockage_probability_formula():
    assert blockage_probability(0.0, 1 / 500) == 0.0
    assert blockage_probability(250.0, 0.0) == 0.0
    assert blockage_probability(250.0, 1 / 500) == pytest.approx(1 - math.exp(-0.5), rel=1e-15)


def test_select_paths_single_path():
    net = make_network(1, {(0, 1): 5.0, (1, 2): 3.0})
    assert select_paths(net, 1, 1, np.random.default_rng(0)) == [(0, 1, 2)]
    assert select_paths(net, 1, 0, np.random.default_rng(0)) == [(0, 1, 2)]


def test_select_paths_widest_in_diamond():
    # path bottlenecks: via node 1 -> 5, via node 2 -> 2
    net = make_network(2, {(0, 1): 5.0, (1, 3): 7.0, (0, 2): 2.0, (2, 3): 9.0})
    assert select_paths(net, 1, 1, np.random.default_rng(0)) == [(0, 1, 3)]
    assert select_paths(net, 2, 2, np.random.default_rng(0)) == [(0, 1, 3), (0, 2, 3)]


def test_widest_path_tie_breaks_low_index():
    net = make_network(2, {(0, 1): 4.0, (1, 3): 4.0, (0, 2): 4.0, (2, 3): 4.0})
    p, w = widest_path(net.effective_capacity(), net.present, 0, 3)
    assert p == (0, 1, 3) and w == 4.0


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 8), st.integers(0, 2**31 - 1), st.integers(1, 6), st.integers(0, 3))
def test_select_paths_structure(n, seed, k, n_widest):
    net = generate_network(n, seed=seed)
    n_widest = min(n_widest, k)
    paths = select_paths(net, k, n_widest, np.random.default_rng(seed))
    assert len(paths) == k and len(set(paths)) == k
    for p in paths:
        assert validate_path(net, p) == p


def test_widest_portion_independent_of_rng():
    net = generate_network(7, seed=11)
    a = select_paths(net, 6, 3, np.random.default_rng(0))
    b = select_paths(net, 6, 3, np.random.default_rng(99))
    assert a[:3] == b[:3]


def test_select_paths_reports_exhaustion():
    net = make_network(1, {(0, 1): 5.0, (1, 2): 3.0})
    with pytest.raises(ValueError, match="distinct simple paths"):
        select_paths(net, 2, 0, np.random.default_rng(0))


def test_enumerate_simple_paths_counts():
    # fully connected with m relays: sum over ordered relay subsets
    for m, expected in [(0, 1), (1, 2), (2, 5), (3, 16), (5, 326)]:
        net = generate_network(m, seed=0)
        paths = enumerate_simple_paths(net)
        assert len(paths) == expected
        assert len(set(paths)) == expected


def test_network_file_round_trip(tmp_path):
    net = generate_network(6, seed=5, fully_connected=False)
    resample_blockage(net, 1 / 100, np.random.default_rng(1))
    target = tmp_path / "net.txt"
    write_network(net, target)
    back = read_network(target)
    assert back == net
    first = target.read_text().splitlines()[0]
    assert first == "# mmsched-network v1"


def test_network_file_rejects_bad_header(tmp_path):
    target = tmp_path / "bad.txt"
    target.write_text("n_relays 1\n")
    with pytest.raises(ValueError):
        read_network(target)


def test_network_rejects_inadmissible_links():
    with pytest.raises(ValueError):
        make_network(1, {(1, 0): 1.0})
    with pytest.raises(ValueError):
        make_network(1, {(2, 1): 1.0})
