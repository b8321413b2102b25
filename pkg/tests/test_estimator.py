import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_oos
from oos_error import (
    ABSOLUTE,
    SQUARED,
    LossFunction,
    MultiSourceDataset,
    NormalSourceParams,
    cvs_estimate,
    normal_cvs_squared,
    normal_oos_squared,
    oos_estimate,
    pairwise_errors,
    proportions,
)
from oos_error.simulation import sample_dataset, table_config

value = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


@st.composite
def datasets(draw, min_k=2, max_k=5):
    k = draw(st.integers(min_k, max_k))
    return {f"s{j}": draw(st.lists(value, min_size=1, max_size=12)) for j in range(k)}


def test_pairwise_hand_example(tiny):
    pw = pairwise_errors(tiny, "mean", "squared")
    assert pw[0, 1] == 2.0
    assert pw[1, 0] == 2.0
    assert np.isnan(pw.e_hat[0, 0])
    with pytest.raises(KeyError):
        pw[0, 0]


def test_zero_loss_gives_zero_matrix(tiny):
    zero = LossFunction("zero", lambda z, d: np.zeros_like(np.asarray(z, dtype=float)))
    pw = pairwise_errors(tiny, "mean", zero)
    off = ~np.eye(2, dtype=bool)
    assert np.all(pw.e_hat[off] == 0)


@pytest.mark.parametrize("loss", ["squared", "absolute"])
def test_identical_constant_sources(loss):
    ds = MultiSourceDataset.from_groups({"a": [3.7], "b": [3.7], "c": [3.7, 3.7]})
    assert oos_estimate(ds, "mean", loss).total == 0
    # the pooled complement mean of repeated 3.7 is off by one ulp
    assert cvs_estimate(ds, "mean", loss) == pytest.approx(0, abs=1e-12)


def test_oos_hand_example(tiny):
    est = oos_estimate(tiny)
    assert est.total == 2.0
    np.testing.assert_array_equal(est.per_source, [2.0, 2.0])


def test_cvs_hand_example(tiny):
    assert cvs_estimate(tiny) == 2.0


@settings(max_examples=200, deadline=None)
@given(datasets(), st.sampled_from([SQUARED, ABSOLUTE]))
def test_matches_brute_force_and_odds_identity(groups, loss):
    ds = MultiSourceDataset.from_groups(groups)
    est = oos_estimate(ds, "mean", loss)
    scalar_loss = (lambda z, d: (z - d) ** 2) if loss is SQUARED else (lambda z, d: abs(z - d))
    total, pairwise = brute_force_oos(groups, scalar_loss)
    scale = max(1.0, abs(total))
    assert abs(est.total - total) <= 1e-10 * scale
    props = proportions(ds)
    k = ds.k
    via_odds = sum(props.od[j] * sum(props.p[l] * est.pairwise.e_hat[j, l] for l in range(k) if l != j)
                   for j in range(k))
    assert abs(est.total - via_odds) <= 1e-10 * scale
    assert abs(est.total - float(np.dot(props.p, est.per_source))) <= 1e-10 * scale
    for (a, b), e in pairwise.items():
        j, l = ds.labels.index(a), ds.labels.index(b)
        assert abs(est.pairwise.e_hat[j, l] - e) <= 1e-10 * max(1.0, e)
    assert est.total >= 0


@settings(max_examples=100, deadline=None)
@given(datasets(), st.randoms(), st.sampled_from(["squared", "absolute"]))
def test_within_source_permutation_bit_identical(groups, rnd, loss):
    shuffled = {}
    for lab, xs in groups.items():
        ys = list(xs)
        rnd.shuffle(ys)
        shuffled[lab] = ys
    a = oos_estimate(MultiSourceDataset.from_groups(groups), "mean", loss)
    b = oos_estimate(MultiSourceDataset.from_groups(shuffled), "mean", loss)
    assert a.total == b.total
    assert np.array_equal(a.per_source, b.per_source)
    assert np.array_equal(a.pairwise.e_hat, b.pairwise.e_hat, equal_nan=True)
    assert cvs_estimate(MultiSourceDataset.from_groups(groups), "mean", loss) == \
        cvs_estimate(MultiSourceDataset.from_groups(shuffled), "mean", loss)


@settings(max_examples=100, deadline=None)
@given(datasets(), st.floats(min_value=-20, max_value=20).filter(lambda c: abs(c) > 1e-3))
def test_scale_equivariance(groups, c):
    ds = MultiSourceDataset.from_groups(groups)
    scaled = MultiSourceDataset.from_groups({k: [c * x for x in v] for k, v in groups.items()})
    sq, sq_c = oos_estimate(ds).total, oos_estimate(scaled).total
    ab, ab_c = oos_estimate(ds, "mean", "absolute").total, oos_estimate(scaled, "mean", "absolute").total
    assert sq_c == pytest.approx(c * c * sq, rel=1e-9, abs=1e-9)
    assert ab_c == pytest.approx(abs(c) * ab, rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(datasets(), st.floats(min_value=-100, max_value=100))
def test_shift_invariance(groups, shift):
    ds = MultiSourceDataset.from_groups(groups)
    moved = MultiSourceDataset.from_groups({k: [x + shift for x in v] for k, v in groups.items()})
    for loss in ("squared", "absolute"):
        a, b = oos_estimate(ds, "mean", loss).total, oos_estimate(moved, "mean", loss).total
        # shifting perturbs the last bits of every residual
        assert b == pytest.approx(a, rel=1e-8, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(datasets(min_k=2, max_k=2), st.sampled_from(["squared", "absolute"]))
def test_two_sources_cvs_equals_oos(groups, loss):
    ds = MultiSourceDataset.from_groups(groups)
    assert cvs_estimate(ds, "mean", loss) == pytest.approx(oos_estimate(ds, "mean", loss).total,
                                                           rel=1e-12, abs=1e-12)


def test_unbiased_against_closed_form():
    cfg = table_config(1, n_grid=(100,))
    est = np.array([oos_estimate(sample_dataset(cfg, 100, np.random.SeedSequence(11, spawn_key=(r,)))).total
                    for r in range(2000)])
    mu_os = normal_oos_squared(NormalSourceParams.create((0, 2, 5), (9, 1, 5), (0.2, 0.3, 0.5), 100))
    se = est.std(ddof=1) / math.sqrt(est.size)
    assert abs(est.mean() - mu_os) <= 4 * se


def test_cvs_expectation_symmetric_sources():
    # balanced N(-mu,1), N(0,1), N(mu,1), n = 30
    mu = 1.5
    rng = np.random.default_rng(5)
    reps = 4000
    vals = np.empty(reps)
    for r in range(reps):
        groups = {j: rng.normal(m, 1.0, 10) for j, m in enumerate((-mu, 0.0, mu))}
        vals[r] = cvs_estimate(MultiSourceDataset.from_groups(groups))
    target = 1.05 + 1.5 * mu ** 2
    params = NormalSourceParams.create((-mu, 0, mu), (1, 1, 1), (1 / 3,) * 3, 30)
    assert normal_cvs_squared(params) == pytest.approx(target, rel=1e-12)
    assert abs(vals.mean() - target) <= 4 * vals.std(ddof=1) / math.sqrt(reps)
