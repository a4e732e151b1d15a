import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mixchain import chains as ch
from mixchain import diagnostics as dg
from mixchain import models as md
from mixchain import semigrad as sg


def textbook_rhat(x):
    """Gelman-Rubin R-hat for one scalar series per chain, x of shape (m, L)."""
    m, L = x.shape
    W = np.mean([np.var(c, ddof=1) for c in x])
    B = L * np.var(x.mean(axis=1), ddof=1)
    return math.sqrt((L - 1) / L + B / (L * W))


def make_trace(ind):
    c, t, _ = ind.shape
    return dg.Trace(ind, np.zeros((c, t), np.int64), np.arange(t))


def test_iid_stationary():
    rng = np.random.default_rng(0)
    x = (rng.random((20, 10**4, 8)) < 0.5).astype(np.uint8)
    assert dg.psrf(make_trace(x)).aggregate <= 1.05


def test_frozen_distinct_is_inf():
    x = np.zeros((2, 50, 3), np.uint8)
    x[1] = 1
    rep = dg.psrf(x)
    assert rep.aggregate == math.inf and np.all(np.isinf(rep.per_element))


def test_frozen_identical_is_one():
    x = np.ones((3, 20, 2), np.uint8)
    assert dg.psrf(x).aggregate == 1.0


def test_identical_nonconstant_chains():
    L = 37
    seq = (np.random.default_rng(1).random((L, 4)) < 0.4).astype(np.uint8)
    seq[0] = 1 - seq[1]  # guarantee every element varies
    x = np.broadcast_to(seq, (5, L, 4)).copy()
    np.testing.assert_allclose(dg.psrf(x).per_element, math.sqrt((L - 1) / L), rtol=1e-13)


@given(st.integers(0, 2**31 - 1), st.integers(2, 6), st.integers(4, 60))
def test_matches_textbook(seed, m, L):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(m, L, 3)) + rng.normal(size=(m, 1, 3))
    rep = dg.psrf(x)
    for v in range(3):
        assert rep.per_element[v] == pytest.approx(textbook_rhat(x[:, :, v]), rel=1e-10)
    assert rep.aggregate == rep.per_element.max()
    assert rep.mean == pytest.approx(rep.per_element.mean(), rel=1e-15)


@given(st.integers(0, 2**31 - 1))
def test_curve_prefixes_match(seed):
    rng = np.random.default_rng(seed)
    x = (rng.random((4, 80, 3)) < rng.random((4, 1, 3))).astype(np.uint8)
    cps = [5, 17, 40, 80]
    agg, per = dg.psrf_curve(x, cps, burn_in_fraction=0.25)
    for k, c in enumerate(cps):
        ref = dg.psrf(x[:, :c], burn_in_fraction=0.25)
        np.testing.assert_array_equal(per[k], ref.per_element)
    assert agg[-1] == dg.psrf(x, burn_in_fraction=0.25).aggregate


@given(st.integers(0, 2**31 - 1))
def test_chain_relabel_invariant(seed):
    rng = np.random.default_rng(seed)
    x = (rng.random((6, 30, 4)) < 0.3).astype(np.uint8)
    a = dg.psrf(x).per_element
    b = dg.psrf(x[rng.permutation(6)]).per_element
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_psrf_validation():
    x = np.zeros((2, 10, 2), np.uint8)
    with pytest.raises(ValueError):
        dg.psrf(x[:1])
    with pytest.raises(ValueError):
        dg.psrf(x[:, :3])
    with pytest.raises(ValueError):
        dg.psrf_curve(x, [8, 5])
    with pytest.raises(ValueError):
        dg.psrf_curve(x, [5, 11])


def test_split_mode():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 40, 2))
    got = dg.psrf(x, split=True).per_element
    halves = np.concatenate([x[:, :20], x[:, 20:]])
    for v in range(2):
        assert got[v] == pytest.approx(textbook_rhat(halves[:, :, v]), rel=1e-10)
    # a drifting chain looks converged without splitting but not with it
    drift = np.broadcast_to(np.linspace(0, 1, 40)[None, :, None], (3, 40, 1)).copy()
    assert dg.psrf(drift).aggregate < 1 < dg.psrf(drift, split=True).aggregate


def test_stationary_start_curve_settles():
    model = md.Modular(md.ModularFunction(np.random.default_rng(3).normal(0, 1, 6)))
    q, _ = sg.build_mixture(model, sg.ConstructionConfig(r=1))
    # q equals the target and chains start from q draws, so they begin in stationarity
    tr = ch.run_chains(model, ch.Combined(q), 20, 4000, seed=4)
    agg, _ = dg.psrf_curve(tr, [500, 1000, 2000, 4001])
    assert np.all(agg <= 1.1)


def test_empirical_marginals():
    assert dg.empirical_marginals(np.ones((2, 5, 3), np.uint8)).tolist() == [1.0, 1.0, 1.0]
    one = np.array([[[1, 0, 1]], [[1, 0, 1]]], np.uint8)
    assert dg.empirical_marginals(one).tolist() == [1.0, 0.0, 1.0]
    x = np.zeros((2, 4, 1), np.uint8)
    x[:, 2:] = 1
    assert dg.empirical_marginals(x, burn_in_fraction=0.5).tolist() == [1.0]


def test_first_crossing():
    cps = np.array([10, 20, 30, 40])
    assert dg.first_crossing([1.5, 1.05, 1.2, 1.0], cps, 1.1) == 40
    assert dg.first_crossing([1.0, 1.0, 1.0, 1.0], cps, 1.1) == 10
    assert dg.first_crossing([1.0, 1.0, 1.0, 1.3], cps, 1.1) is None


def test_default_checkpoints():
    cps = dg.default_checkpoints(1000, 50)
    assert cps[0] == 4 and cps[-1] == 1000 and np.all(np.diff(cps) > 0)
    assert dg.default_checkpoints(3).size == 0


def test_psrf_csv_schema(tmp_path):
    per = np.array([[1.5, 1.2], [1.1, 1.0]])
    dg.write_psrf_csv(tmp_path / "p.csv", [10, 20], per.max(axis=1), per)
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["checkpoint", "psrf_aggregate", "psrf_elem_0", "psrf_elem_1", "psrf_mean"]
    assert [float(v) for v in rows[2]] == [20, 1.1, 1.1, 1.0, 1.05]


def test_trace_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    tr = dg.Trace((rng.random((3, 7, 4)) < 0.5).astype(np.uint8),
                  rng.integers(0, 10**9, (3, 7)), np.arange(7) * 5)
    tr.write_csv(tmp_path / "t.csv")
    back = dg.Trace.read_csv(tmp_path / "t.csv")
    assert np.array_equal(back.indicators, tr.indicators)
    assert np.array_equal(back.wallclock_ns, tr.wallclock_ns)
    assert np.array_equal(back.steps, tr.steps)
    tr.save_npz(tmp_path / "t.npz")
    back = dg.Trace.load_npz(tmp_path / "t.npz")
    assert np.array_equal(back.indicators, tr.indicators)


def test_trace_dimension_check():
    with pytest.raises(ValueError):
        dg.Trace(np.zeros((2, 3, 1), np.uint8), np.zeros((2, 4)), np.arange(3))


def test_wallclock_axis():
    tr = dg.Trace(np.zeros((3, 4, 1), np.uint8),
                  np.array([[0, 1, 2, 3], [0, 5, 6, 7], [0, 2, 4, 9]]), np.arange(4))
    assert dg.wallclock_axis(tr, [2, 4]).tolist() == [2.0, 7.0]
