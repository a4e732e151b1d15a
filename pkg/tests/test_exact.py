import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import expit

from mixchain import chains as ch
from mixchain import exact as ex
from mixchain import logmodular as lm
from mixchain import models as md
from mixchain import semigrad as sg
from mixchain.models import ModularFunction

from conftest import FAMILIES


def random_reversible(N, rng, lazy=False):
    """Metropolis chain for a random pi under a random symmetric proposal."""
    pi = rng.dirichlet(np.ones(N))
    K = rng.random((N, N))
    K = (K + K.T) / 2
    np.fill_diagonal(K, 0.0)
    K /= K.sum(axis=1).max() * 1.01
    P = K * np.minimum(1.0, pi[None, :] / pi[:, None])
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return (ex.lazify(P) if lazy else P), pi


def two_state(c, p1):
    pi = np.array([1 - p1, p1])
    return np.array([[1 - c * p1, c * p1], [c * (1 - p1), 1 - c * (1 - p1)]]), pi


# --- distributions ------------------------------------------------------------------

def test_uniform_distribution():
    t = ex.enumerate_distribution(md.Modular(ModularFunction(np.zeros(3))))
    np.testing.assert_allclose(t.probs, 1 / 8, rtol=1e-15)
    assert t.logZ == pytest.approx(3 * math.log(2), rel=1e-15)
    np.testing.assert_allclose(ex.exact_marginals(t), 0.5, rtol=1e-15)


def test_ising_symmetric_probs():
    n = 5
    t = ex.enumerate_distribution(md.IsingComplete.critical(n))
    full = (1 << n) - 1
    assert t.probs[0] == t.probs[full]
    assert np.array_equal(t.probs, t.probs[full ^ np.arange(1 << n)])
    np.testing.assert_allclose(ex.exact_marginals(t), 0.5, atol=1e-14)
    assert t.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_modular_closed_form():
    w = np.random.default_rng(0).normal(0, 1.5, 6)
    t = ex.enumerate_distribution(md.Modular(ModularFunction(w)))
    p = expit(w)
    bits = md.all_masks_bits(6)
    closed = np.prod(np.where(bits == 1, p, 1 - p), axis=1)
    np.testing.assert_allclose(t.probs, closed, rtol=1e-12)
    np.testing.assert_allclose(ex.exact_marginals(t), p, rtol=1e-12)


def test_enumeration_limit():
    with pytest.raises(md.EnumerationLimitError):
        ex.enumerate_distribution(md.IsingComplete.critical(21))


def test_tv_examples():
    assert ex.tv_distance([0.5, 0.5], [0.75, 0.25]) == 0.25
    assert ex.tv_distance([1, 0], [0, 1]) == 1.0
    assert ex.tv_distance([0.2, 0.8], [0.2, 0.8]) == 0.0
    with pytest.raises(ValueError):
        ex.tv_distance([1.0], [0.5, 0.5])


# --- transition matrices --------------------------------------------------------------

def test_gibbs_uniform_n2():
    T = ex.build_transition_matrix(md.Modular(ModularFunction(np.zeros(2))), ch.Gibbs())
    expected = np.array([[0.5, 0.25, 0.25, 0.0],
                         [0.25, 0.5, 0.0, 0.25],
                         [0.25, 0.0, 0.5, 0.25],
                         [0.0, 0.25, 0.25, 0.5]])
    np.testing.assert_allclose(T.matrix, expected, atol=1e-15)


def test_m3_target_equals_proposal():
    rng = np.random.default_rng(1)
    q = lm.MixtureProposal(rng.normal(size=3), rng.normal(size=(3, 5)))
    model = md.ExplicitTable(q.log_table())
    P = ex.build_transition_matrix(model, ch.M3(q)).matrix
    qt = np.exp(q.log_table())
    off = ~np.eye(32, dtype=bool)
    np.testing.assert_allclose(P[off], np.broadcast_to(qt, (32, 32))[off], rtol=1e-10)


def _samplers(n, rng, model):
    q, _ = sg.build_mixture(model, sg.ConstructionConfig(r=3, permutation_mode="random",
                                                         seed=int(rng.integers(1 << 30))))
    ell = n // 2
    return [ch.Gibbs(), ch.M3(q), ch.Combined(q, 0.3), ch.GibbsSwap(ell),
            ch.M3FixedSize(q, ell), ch.CombinedFixedSize(q, ell, 0.6)]


@pytest.mark.parametrize("family", sorted(FAMILIES))
def test_matrices_are_valid(family):
    rng = np.random.default_rng(5)
    model = FAMILIES[family](6, rng)
    for s in _samplers(6, rng, model):
        T = ex.build_transition_matrix(model, s)
        assert ex.row_stochastic_error(T.matrix) <= 1e-9
        assert ex.detailed_balance_check(T.matrix, T.pi) <= 1e-10
        assert ex.stationarity_error(T.matrix, T.pi) <= 1e-10
        assert T.matrix.min() >= -1e-12


def test_fixed_size_state_space():
    model = md.IsingComplete.critical(6)
    T = ex.build_transition_matrix(model, ch.GibbsSwap(2))
    assert T.matrix.shape == (15, 15)
    assert all(bin(int(s)).count("1") == 2 for s in T.states)
    # exchangeable target on a fixed size is uniform, so swap moves are 1/(2 ell (n - ell))
    off = T.matrix[~np.eye(15, dtype=bool)]
    assert set(np.round(off[off > 0], 15)) == {round(1 / 16, 15)}


def test_detailed_balance_controls():
    P = np.full((3, 3), 1 / 3)
    assert ex.detailed_balance_check(P, np.full(3, 1 / 3)) == 0.0
    T = ex.build_transition_matrix(md.IsingComplete.critical(4), ch.Gibbs())
    bad = T.matrix.copy()
    bad[0, 1] += 1e-3
    bad[0, 0] -= 1e-3
    assert ex.detailed_balance_check(bad, T.pi) > 1e-6
    with pytest.raises(ex.ReversibilityError):
        ex.spectral_gap(bad, T.pi)


def test_lazify_examples():
    np.testing.assert_array_equal(ex.lazify(np.eye(4)), np.eye(4))
    np.testing.assert_allclose(ex.lazify(np.array([[0.0, 1.0], [1.0, 0.0]])), 0.5)


@given(st.integers(0, 2**31 - 1))
def test_lazify_spectrum(seed):
    P, pi = random_reversible(6, np.random.default_rng(seed))
    a = ex.spectral_gap(P, pi).eigenvalues
    b = ex.spectral_gap(ex.lazify(P), pi).eigenvalues
    np.testing.assert_allclose(b, (1 + a) / 2, atol=1e-12)


# --- spectra -----------------------------------------------------------------------------

@given(st.floats(0.01, 1.0), st.floats(0.01, 0.99))
def test_two_state_gap(c, p1):
    P, pi = two_state(c, p1)
    assert ex.spectral_gap(P, pi).gap == pytest.approx(c, abs=1e-12)


def test_identity_gap_zero():
    assert ex.spectral_gap(np.eye(4), np.full(4, 0.25)).gap == pytest.approx(0.0, abs=1e-15)


def test_lazy_swap_gap_one():
    P = ex.lazify(np.array([[0.0, 1.0], [1.0, 0.0]]))
    rep = ex.spectral_gap(P, np.array([0.5, 0.5]))
    assert rep.gap == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(rep.eigenvalues, [1.0, 0.0], atol=1e-15)


def test_gap_range_and_order():
    P, pi = random_reversible(20, np.random.default_rng(3), lazy=True)
    rep = ex.spectral_gap(P, pi)
    assert 0 <= rep.gap <= 1
    assert np.all(np.diff(rep.eigenvalues) <= 1e-15)
    assert rep.eigenvalues[0] == pytest.approx(1.0, abs=1e-12)


def test_partial_eigensolve_matches_full():
    T = ex.build_transition_matrix(md.IsingComplete.critical(7), ch.Gibbs())
    full = ex.spectral_gap(T.matrix, T.pi, all_eigenvalues=True)
    top = ex.spectral_gap(T.matrix, T.pi, all_eigenvalues=False)
    assert top.gap == pytest.approx(full.gap, rel=1e-9)
    assert top.eigenvalues.size == 2


def test_spectral_limit():
    with pytest.raises(md.EnumerationLimitError):
        ex.spectral_gap(np.eye(16), np.full(16, 1 / 16), limit=3)


# --- mixing-time bounds ----------------------------------------------------------------------

def test_mixing_bounds_examples():
    assert ex.mixing_time_bounds(1.0, 0.1, 0.25)[0] == 0.0
    # 2 log 128 from 40-digit arithmetic
    assert ex.mixing_time_bounds(0.5, 1 / 16, 1 / 8)[1] == pytest.approx(9.704060527839234, rel=1e-14)


@given(st.floats(1e-4, 1.0), st.floats(1e-6, 0.5), st.floats(1e-3, 0.999))
def test_mixing_bounds_ordered(gamma, pi_min, eps):
    if pi_min > 2 * eps:
        return
    lo, hi = ex.mixing_time_bounds(gamma, pi_min, eps)
    assert lo <= hi + 1e-12


@pytest.mark.parametrize("args", [(0.0, 0.1, 0.1), (1.5, 0.1, 0.1), (0.5, 0.0, 0.1),
                                  (0.5, 1.5, 0.1), (0.5, 0.1, 0.0), (0.5, 0.1, 1.0)])
def test_mixing_bounds_domain(args):
    with pytest.raises(ValueError):
        ex.mixing_time_bounds(*args)


# --- projection / restriction -------------------------------------------------------------------

def test_project_single_block():
    P, pi = random_reversible(8, np.random.default_rng(0))
    Pb, pb = ex.project_chain(P, pi, np.zeros(8, dtype=int))
    np.testing.assert_allclose(Pb, [[1.0]], atol=1e-14)
    np.testing.assert_allclose(pb, [1.0], atol=1e-14)


def test_project_empty_block():
    P, pi = random_reversible(4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        ex.project_chain(P, pi, np.array([0, 0, 2, 2]))


def test_project_ising_half():
    n = 11
    T = ex.build_transition_matrix(md.IsingComplete.critical(n), ch.Gibbs())
    Pb, pb = ex.project_chain(T.matrix, T.pi, ex.ising_split_labels(T.states, n))
    assert Pb.shape == (2, 2)
    np.testing.assert_allclose(pb, [0.5, 0.5], atol=1e-12)


@given(st.integers(0, 2**31 - 1), st.integers(2, 4))
def test_project_stationary_reversible(seed, B):
    rng = np.random.default_rng(seed)
    P, pi = random_reversible(12, rng)
    labels = np.concatenate([np.arange(B), rng.integers(0, B, 12 - B)])
    Pb, pb = ex.project_chain(P, pi, labels)
    assert np.abs(pb @ Pb - pb).max() <= 1e-10
    assert ex.detailed_balance_check(Pb, pb) <= 1e-12
    np.testing.assert_allclose(Pb.sum(axis=1), 1.0, atol=1e-12)


def test_ising_split_even():
    labels = ex.ising_split_labels(np.arange(16), 4)
    sizes = np.array([bin(s).count("1") for s in range(16)])
    assert np.all(labels[sizes == 2] == 0) and np.all(labels[sizes == 3] == 1)


def test_restrict_examples():
    P, pi = random_reversible(6, np.random.default_rng(2))
    np.testing.assert_allclose(ex.restrict_chain(P, np.arange(6)), P, atol=1e-15)
    np.testing.assert_allclose(ex.restrict_chain(P, [3]), [[1.0]])
    with pytest.raises(ValueError):
        ex.restrict_chain(P, np.zeros(6, dtype=bool))


def test_restrict_ising_block():
    n = 7
    T = ex.build_transition_matrix(md.IsingComplete.critical(n), ch.Gibbs())
    block = ex.ising_split_labels(T.states, n) == 0
    Pi = ex.restrict_chain(T.matrix, block)
    pii = ex.restrict_distribution(T.pi, block)
    np.testing.assert_allclose(Pi.sum(axis=1), 1.0, atol=1e-12)
    assert ex.detailed_balance_check(Pi, pii) <= 1e-12


# --- bottleneck ---------------------------------------------------------------------------------

def test_bottleneck_examples():
    P, pi = random_reversible(5, np.random.default_rng(0))
    assert ex.bottleneck_ratio(P, pi, np.arange(5)) == 0.0
    assert ex.bottleneck_ratio(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([0.5, 0.5]), [0]) == 1.0
    with pytest.raises(ValueError):
        ex.bottleneck_ratio(P, pi, np.zeros(5, dtype=bool))


def test_bottleneck_decreases_with_n():
    phis = []
    for n in (7, 9, 11):
        T = ex.build_transition_matrix(md.IsingComplete.critical(n), ch.Gibbs())
        phis.append(ex.bottleneck_ratio(T.matrix, T.pi, ex.ising_split_labels(T.states, n) == 0))
    assert phis[0] > phis[1] > phis[2] > 0


# --- distance curves ----------------------------------------------------------------------------

def test_distance_projector():
    pi = np.random.default_rng(0).dirichlet(np.ones(5))
    np.testing.assert_allclose(ex.exact_distance_curve(np.tile(pi, (5, 1)), pi, 4), 0.0, atol=1e-15)


def test_distance_identity():
    pi = np.random.default_rng(1).dirichlet(np.ones(5))
    np.testing.assert_allclose(ex.exact_distance_curve(np.eye(5), pi, 3), 1 - pi.min(), atol=1e-15)


@given(st.integers(0, 2**31 - 1))
def test_distance_non_increasing(seed):
    P, pi = random_reversible(7, np.random.default_rng(seed))
    d = ex.exact_distance_curve(P, pi, 15)
    assert np.all(np.diff(d) <= 1e-12)


# --- comparison and decomposition bounds ----------------------------------------------------------

@pytest.mark.parametrize("n", [7, 9, 11])
def test_comparison_bounds(n):
    alpha = 0.5
    model = md.IsingComplete.critical(n)
    q = sg.handcrafted_ising_mixture(n)
    gaps, proj = {}, {}
    for name, s in (("G", ch.Gibbs()), ("M", ch.M3(q)), ("C", ch.Combined(q, alpha))):
        T = ex.build_transition_matrix(model, s)
        labels = ex.ising_split_labels(T.states, n)
        gaps[name] = ex.spectral_gap(T.matrix, T.pi).gap
        proj[name] = ex.spectral_gap(*ex.project_chain(T.matrix, T.pi, labels)).gap
    assert gaps["C"] >= alpha * gaps["G"] - 1e-9
    assert proj["C"] >= (1 - alpha) * proj["M"] - 1e-9


@pytest.mark.parametrize("n", [7, 9])
def test_decomposition_bound(n):
    model = md.IsingComplete.critical(n)
    T = ex.build_transition_matrix(model, ch.Combined(sg.handcrafted_ising_mixture(n), 0.5))
    rep = ex.decomposition(T.matrix, T.pi, ex.ising_split_labels(T.states, n))
    assert rep.gap >= rep.bound - 1e-9
    assert 0 < rep.p_max <= 1 and len(rep.gap_restrictions) == 2
    assert rep.bound == min(rep.gap_projection / 3,
                            rep.gap_projection * min(rep.gap_restrictions)
                            / (3 * rep.p_max + rep.gap_projection))
