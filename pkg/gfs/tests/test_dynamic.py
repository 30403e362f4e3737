import math

import numpy as np
import pytest

from gfs.dynamic import (
    AvailabilityProcess,
    ExchangeConfig,
    _exchange_traces,
    cutoff_frequency,
    evolve_availability,
    exchange_sets,
    gfs_ne,
    read_availability_trace,
    screen_initial_set,
    sm_rank1_exchange,
    write_availability_trace,
)
from gfs.errors import DegenerateUpdate, InfeasibleAvailability
from gfs.graphs import Graph, build_laplacian, gen_sensor_graph
from gfs.sampler import gfs_sample
from gfs.spectral import exact_eigendecompose, lp_filter

MU = 1.0 / 99.0


def filter_instance(seed, n=32, K=5):
    L = build_laplacian(gen_sensor_graph(n, 0.35, seed=seed))
    return lp_filter(exact_eigendecompose(L), K)


def direct_trace(G, S):
    return float(np.trace(np.linalg.inv(G[np.ix_(S, S)])))


def test_initial_availability_count():
    proc = AvailabilityProcess.initial(200, 0.8, 0.02, seed=3)
    assert proc.current.sum() == 160
    assert proc.t == 0


def test_availability_extremes():
    proc = AvailabilityProcess.initial(50, 0.5, 0.0, seed=1)
    assert np.array_equal(evolve_availability(proc).current, proc.current)

    flip_all = AvailabilityProcess(p0=0.5, eps=1.0, seed=1, current=proc.current)
    assert np.array_equal(evolve_availability(flip_all).current, ~proc.current)


def test_availability_is_deterministic_in_seed_and_step():
    proc = AvailabilityProcess.initial(100, 0.8, 0.1, seed=9)
    a = evolve_availability(evolve_availability(proc))
    b = evolve_availability(evolve_availability(proc))
    assert a.t == 2
    assert np.array_equal(a.current, b.current)


def test_availability_flip_rate():
    proc = AvailabilityProcess.initial(1000, 0.8, 0.02, seed=0)
    steps = 10_000
    flips = 0
    for _ in range(steps):
        nxt = evolve_availability(proc)
        flips += int(np.sum(nxt.current != proc.current))
        proc = nxt
    mean = flips / steps
    sigma = math.sqrt(1000 * 0.02 * 0.98 / steps)
    assert abs(mean - 20.0) <= 5 * sigma


def test_availability_validation():
    with pytest.raises(ValueError):
        AvailabilityProcess(p0=1.5, eps=0.1, seed=0, current=np.ones(3, dtype=bool))


def test_exchange_sets_partition():
    mask = np.array([1, 0, 1, 1, 0, 1], dtype=bool)
    sets = exchange_sets([4, 0, 1, 3], mask)
    assert sets.sa == (0, 3)
    assert sets.su == (1, 4)
    assert sets.ua == (2, 5)
    assert set(sets.sa) | set(sets.su) == {0, 1, 3, 4}


def test_exchange_with_identical_node_leaves_inverse_unchanged():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(6, 6))
    G = A @ A.T + 6 * np.eye(6)
    j, k = 2, 5
    G[k, :] = G[j, :]
    G[:, k] = G[:, j]
    G[k, k] = G[j, j]
    S = [0, 2, 3]
    g_inv = np.linalg.inv(G[np.ix_(S, S)])
    assert np.allclose(sm_rank1_exchange(g_inv, S, j, k, G), g_inv, atol=1e-14)


def test_exchange_on_three_node_path():
    L = build_laplacian(Graph(3, ((0, 1, 1.0), (1, 2, 1.0))))
    G = lp_filter(exact_eigendecompose(L), 2).shifted(0.1)
    S = [0, 1]
    updated = sm_rank1_exchange(np.linalg.inv(G[np.ix_(S, S)]), S, 1, 2, G)
    assert np.allclose(updated, np.linalg.inv(G[np.ix_([0, 2], [0, 2])]), atol=1e-10)


def test_exchange_matches_direct_inverse_on_random_triples():
    rng = np.random.default_rng(12)
    for trial in range(100):
        filt = filter_instance(trial % 5, K=int(rng.integers(2, 8)))
        G = filt.shifted(MU)
        M = int(rng.integers(2, 15))
        S = [int(s) for s in rng.choice(32, size=M, replace=False)]
        j = S[int(rng.integers(M))]
        k = int(rng.choice(np.setdiff1d(np.arange(32), S)))
        updated = sm_rank1_exchange(np.linalg.inv(G[np.ix_(S, S)]), S, j, k, G)
        S_new = [k if s == j else s for s in S]
        assert np.linalg.norm(updated @ G[np.ix_(S_new, S_new)] - np.eye(M)) <= 1e-8


def test_exchange_rejects_degenerate_denominator():
    G = np.array([[1.0, 0.5], [0.5, 0.0]])
    with pytest.raises(DegenerateUpdate):
        sm_rank1_exchange(np.array([[1.0]]), [0], 0, 1, G)


def test_exchange_argument_checks():
    G = np.eye(3)
    with pytest.raises(ValueError):
        sm_rank1_exchange(np.eye(2), [0, 1], 2, 1, G)
    with pytest.raises(ValueError):
        sm_rank1_exchange(np.eye(2), [0, 1], 0, 1, G)


def test_exchange_trace_scores_match_direct_solves():
    filt = filter_instance(4, K=6)
    G = filt.shifted(MU)
    S = [3, 9, 14, 20, 27, 30, 1, 11]
    g_inv = np.linalg.inv(G[np.ix_(S, S)])
    candidates = np.setdiff1d(np.arange(32), S)
    scores, fallbacks = _exchange_traces(g_inv, S, 2, candidates, G)
    expected = [direct_trace(G, S[:2] + [int(c)] + S[3:]) for c in candidates]
    assert fallbacks == 0
    assert np.allclose(scores, expected, rtol=1e-9)


def test_gfs_ne_without_unavailable_samples_is_a_no_op():
    filt = filter_instance(1)
    G = filt.shifted(MU)
    state = gfs_sample(filt, MU, 8)
    avail = np.ones(32, dtype=bool)
    for k0 in (0, 50):
        out = gfs_ne(state, G, avail, ExchangeConfig(k0))
        assert out.sample_set == state.sample_set
        assert np.array_equal(out.g_inverse, state.g_inverse)
        assert out.last_exchange.replacements == []
        assert out.last_exchange.accepted_swaps == 0


def test_phase_one_picks_best_replacement():
    filt = filter_instance(7, n=16, K=4)
    G = filt.shifted(MU)
    state = gfs_sample(filt, MU, 6)
    j = state.sample_set[2]
    avail = np.ones(16, dtype=bool)
    avail[j] = False

    out = gfs_ne(state, G, avail, ExchangeConfig(0))
    candidates = [k for k in range(16) if avail[k] and k not in state.sample_set]
    traces = {k: direct_trace(G, [k if s == j else s for s in state.sample_set]) for k in candidates}
    best = min(candidates, key=lambda k: (traces[k], k))

    assert out.last_exchange.replacements == [(j, best)]
    assert out.sample_set[2] == best
    assert out.objective == pytest.approx(traces[best], rel=1e-10)


def test_gfs_ne_invariants():
    filt = filter_instance(5, n=60, K=8)
    G = filt.shifted(MU)
    state = gfs_sample(filt, MU, 14)
    rng = np.random.default_rng(2)
    avail = rng.random(60) < 0.7
    avail[state.sample_set[0]] = False
    avail[state.sample_set[5]] = False

    out = gfs_ne(state, G, avail, ExchangeConfig(50))
    report = out.last_exchange

    assert all(avail[s] for s in out.sample_set)
    assert len(set(out.sample_set)) == 14
    assert out.residual(G) <= 1e-6 * 14
    assert report.accepted_swaps <= 50
    assert np.all(np.diff(report.phase2_traces) < 0)
    assert out.objective <= report.phase1_traces[-1] + 1e-9

    # the last phase-1 replacement beat every other candidate for its slot
    last_j, last_k = report.replacements[-1]
    before = [s for s in state.sample_set]
    for (j, k) in report.replacements[:-1]:
        before[before.index(j)] = k
    for alt in np.flatnonzero(avail):
        if alt in before:
            continue
        trial = [int(alt) if s == last_j else s for s in before]
        assert report.phase1_traces[-1] <= direct_trace(G, trial) * (1 + 1e-9)


def test_swap_cap_is_respected():
    filt = filter_instance(8, n=50, K=6)
    G = filt.shifted(MU)
    state = gfs_sample(filt, MU, 10)
    avail = np.ones(50, dtype=bool)
    avail[state.sample_set[:4]] = False
    out = gfs_ne(state, G, avail, ExchangeConfig(1))
    assert out.last_exchange.accepted_swaps <= 1


def test_gfs_ne_infeasible():
    filt = filter_instance(1)
    state = gfs_sample(filt, MU, 8)
    avail = np.zeros(32, dtype=bool)
    avail[:5] = True
    with pytest.raises(InfeasibleAvailability):
        gfs_ne(state, filt.shifted(MU), avail, ExchangeConfig(5))


def test_cutoff_frequency_small_cases():
    L = build_laplacian(Graph(2, ((0, 1, 1.0),)))
    assert cutoff_frequency(L, [0, 1], 3) == math.inf
    assert cutoff_frequency(L, [0], 1) == pytest.approx(math.sqrt(2.0))
    with pytest.raises(ValueError):
        cutoff_frequency(L, [0], 0)


def test_cutoff_frequency_grows_with_the_set():
    rng = np.random.default_rng(4)
    for seed in range(50):
        L = build_laplacian(gen_sensor_graph(30, 0.4, seed=seed))
        small = list(rng.choice(30, size=8, replace=False))
        extra = [i for i in range(30) if i not in small]
        large = small + list(rng.choice(extra, size=6, replace=False))
        assert cutoff_frequency(L, small, 2) <= cutoff_frequency(L, large, 2) + 1e-10


def test_screen_accepts_full_availability():
    L = build_laplacian(gen_sensor_graph(30, 0.4, seed=1))
    result = screen_initial_set(L, np.ones(30, dtype=bool), 3, 50, 5, seed=0)
    assert result.good
    assert result.value == math.inf


def test_screen_rejects_set_missing_a_component():
    edges = [(i, i + 1, 1.0) for i in range(9)] + [(i, i + 1, 1.0) for i in range(10, 19)]
    L = build_laplacian(Graph(20, tuple(edges)))
    avail = np.zeros(20, dtype=bool)
    avail[:10] = True
    result = screen_initial_set(L, avail, 2, 50, 5, seed=7)
    assert not result.good
    assert result.value < result.threshold


def test_screen_validates_rank():
    L = build_laplacian(Graph(2, ((0, 1, 1.0),)))
    with pytest.raises(ValueError):
        screen_initial_set(L, np.ones(2, dtype=bool), 1, 3, 4, seed=0)


def test_availability_trace_csv(tmp_path):
    proc = AvailabilityProcess.initial(12, 0.5, 0.3, seed=2)
    masks = [proc.current]
    for _ in range(4):
        proc = evolve_availability(proc)
        masks.append(proc.current)
    path = tmp_path / "trace.csv"
    write_availability_trace(masks, path)
    assert path.read_text().splitlines()[0] == "t,node,state"
    back = read_availability_trace(path)
    assert len(back) == 5
    assert all(np.array_equal(a, b) for a, b in zip(masks, back))
