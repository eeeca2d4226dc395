import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mprntrack.assoc import (
    CLUTTER,
    LikelihoodTable,
    SoftAssociation,
    association_marginals,
    count_association_events,
    enumerate_marginals,
    hard_associations,
    spa_iterate,
    spa_messages,
    spatial_likelihood,
)


def _table(g, r, pd, lam):
    return LikelihoodTable([np.asarray(g, float)], np.asarray(r, float), [pd], [lam])


def test_likelihood_peak(geometry):
    x = np.array([25000.0, 1000.0, 0.0])
    rho = np.linalg.norm(x) + np.linalg.norm(x - geometry.rx_positions[2])
    pos = np.tile(x, (10, 1))
    val = spatial_likelihood(pos, np.full(10, 0.05), rho, 10.0, geometry.tx_position, geometry.rx_positions[2])
    assert val == pytest.approx(1 / (10.0 * math.sqrt(2 * math.pi)), rel=1e-12)
    far = spatial_likelihood(pos, np.full(10, 0.05), rho + 100.0, 10.0, geometry.tx_position, geometry.rx_positions[2])
    assert far <= val * math.exp(-50) * (1 + 1e-9)


def test_likelihood_two_particle_split():
    tx = rx = np.zeros(3)
    pos = np.array([[10000.0, 0, 0], [10010.0, 0, 0]])
    rho, sigma = 20010.0, 8.0
    dens = [math.exp(-0.5 * (d / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi)) for d in (10.0, -10.0)]
    assert spatial_likelihood(pos, np.array([0.3, 0.3]), rho, sigma, tx, rx) == pytest.approx(np.mean(dens), rel=1e-12)


def test_likelihood_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        spatial_likelihood(np.zeros((1, 3)), np.ones(1), 1.0, 0.0, np.zeros(3), np.zeros(3))


def test_forced_association():
    soft = spa_iterate(_table([[0.01]], [1.0], 1.0, 0.0))
    assert soft.target_probs[0][0, 1] == pytest.approx(1.0)
    assert soft.measurement_probs[0][0, 1] == pytest.approx(1.0)


@pytest.mark.parametrize("pd, g, lam", [(0.9, 0.002, 1e-4), (0.5, 1e-5, 1e-4), (0.99, 0.1, 3.0)])
def test_single_target_bayes(pd, g, lam):
    soft = spa_iterate(_table([[g]], [1.0], pd, lam))
    expected = pd * g / (pd * g + (1 - pd) * lam)
    assert soft.target_probs[0][0, 1] == pytest.approx(expected, rel=1e-12)


def test_enumeration_counts_valid_events():
    assert count_association_events(2, 2) == 7
    assert count_association_events(3, 3) == 34


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 3), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_tree_shaped_problems_are_exact(n_t, n_m, seed):
    # one target or one measurement: the factor graph is a tree and SPA is exact
    if n_t > 1 and n_m > 1:
        n_m = 1
    rng = np.random.default_rng(seed)
    g = rng.exponential(1.0, (n_t, n_m))
    t = _table(g, rng.uniform(0.05, 1.0, n_t), rng.uniform(0.3, 1.0), rng.uniform(0.1, 2.0))
    soft = spa_iterate(t, max_iters=100, tol=1e-12)
    np.testing.assert_allclose(soft.target_probs[0], enumerate_marginals(t.betas(0)), atol=1e-9)


def test_pmfs_normalised_at_every_iteration():
    rng = np.random.default_rng(1)
    beta = np.column_stack([rng.uniform(0.1, 1, 3), rng.exponential(1, (3, 4))])
    for k in range(1, 8):
        phi, nu, _, _ = spa_messages(beta, max_iters=k, tol=0.0)
        tp, mp = association_marginals(beta, phi, nu)
        np.testing.assert_allclose(tp.sum(axis=1), 1, atol=1e-9)
        np.testing.assert_allclose(mp.sum(axis=1), 1, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_measurement_permutation_equivariance(n_t, n_m, seed):
    rng = np.random.default_rng(seed)
    g = rng.exponential(1.0, (n_t, n_m))
    lam = rng.uniform(0.1, 2.0, n_m)
    r = rng.uniform(0.05, 1.0, n_t)
    perm = rng.permutation(n_m)
    a = spa_iterate(_table(g, r, 0.9, lam))
    b = spa_iterate(_table(g[:, perm], r, 0.9, lam[perm]))
    np.testing.assert_allclose(b.target_probs[0][:, 1:], a.target_probs[0][:, 1:][:, perm], atol=1e-12)
    np.testing.assert_allclose(b.measurement_probs[0], a.measurement_probs[0][perm], atol=1e-12)


@pytest.mark.parametrize("n_t, n_m", [(1, 1), (2, 3), (5, 4), (10, 20)])
def test_work_per_iteration_is_bilinear(n_t, n_m):
    rng = np.random.default_rng(0)
    t = _table(rng.exponential(1, (n_t, n_m)), np.full(n_t, 0.5), 0.9, 1.0)
    soft = spa_iterate(t, max_iters=5, tol=0.0)
    assert soft.iterations == [5]
    assert soft.n_message_updates == 2 * 5 * n_t * n_m


def test_empty_inputs():
    soft = spa_iterate(_table(np.zeros((2, 0)), [0.5, 0.5], 0.9, 1.0))
    np.testing.assert_allclose(soft.target_probs[0], [[1.0], [1.0]])
    soft = spa_iterate(LikelihoodTable([np.zeros((0, 2))], np.zeros(0), [0.9], [1.0]))
    np.testing.assert_allclose(soft.measurement_probs[0], [[1.0], [1.0]])


def _soft(mp):
    mp = np.asarray(mp, float)
    return SoftAssociation([], [mp], [])


def test_hard_association_examples():
    assert hard_associations(_soft([[0.1, 0.9]]))[0].tolist() == [0]
    assert hard_associations(_soft([[0.6, 0.4]]))[0].tolist() == [CLUTTER]
    labels = hard_associations(_soft([[0.05, 0.8, 0.15], [0.1, 0.7, 0.2]]))[0]
    assert labels.tolist() == [0, 1]


def test_hard_association_never_reuses_a_target():
    rng = np.random.default_rng(3)
    for _ in range(200):
        mp = rng.dirichlet(np.ones(4), size=5)
        labels = hard_associations(_soft(mp))[0]
        used = labels[labels >= 0]
        assert len(used) == len(set(used.tolist()))


def test_table_validation():
    with pytest.raises(ValueError):
        _table([[-1.0]], [0.5], 0.9, 1.0)
    with pytest.raises(ValueError):
        _table([[np.nan]], [0.5], 0.9, 1.0)
