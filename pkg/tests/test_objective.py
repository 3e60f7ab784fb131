import numpy as np
import pytest
from hypothesis import given, strategies as st

from memcp.expansion import exp_concave, identity_one, ratio, sigmoid
from memcp.instance import Instance
from memcp.objective import (
    CONCAVE, CONVEX, all_rows_concave, curvature_map, f_of_subset, make_context, marginal_gain, psi,
    psi_concave_on, psi_d1, psi_d2, z_of_subset,
)

from helpers import concave_instance, t1_ctx, t1_psi

CERTIFIED = [ratio(1.0), exp_concave(1.0, 1.0), exp_concave(4.0, 0.5), identity_one()]


def test_t1_closed_form():
    ctx = t1_ctx()
    for z in (1.5, 2.0, 2.5, 3.0, 10.0):
        assert psi(ctx, 0, z) == pytest.approx(t1_psi(z), rel=1e-14)
    # F({1}) with 0-based index 1 -> z = 3
    assert f_of_subset(ctx, [1]) == pytest.approx(4.0 / 9.0, rel=1e-15)
    assert f_of_subset(ctx, [0]) == pytest.approx(0.25, rel=1e-15)


def test_non_positive_z_rejected():
    ctx = t1_ctx()
    with pytest.raises(ValueError):
        psi(ctx, 0, 0.0)
    with pytest.raises(ValueError):
        ctx.row(0).f(-1.0)
    with pytest.raises(ValueError):
        ctx.psi_all(np.array([-1.0]))


@given(seed=st.integers(0, 2**32 - 1), which=st.sampled_from(CERTIFIED + [sigmoid(5.0, 4.0)]),
       s=st.floats(0.0, 1.0))
def test_derivatives_match_finite_differences(seed, which, s):
    inst = concave_instance(np.random.default_rng(seed), n_max=3)
    ctx = make_context(inst, which)
    z = ctx.bounds.L[0] + s * (ctx.bounds.U[0] - ctx.bounds.L[0]) + 0.01
    h = 1e-5 * z
    fd1 = (psi(ctx, 0, z + h) - psi(ctx, 0, z - h)) / (2 * h)
    fd2 = (psi_d1(ctx, 0, z + h) - psi_d1(ctx, 0, z - h)) / (2 * h)
    assert abs(fd1 - psi_d1(ctx, 0, z)) <= 1e-6 * max(1.0, abs(fd1))
    assert abs(fd2 - psi_d2(ctx, 0, z)) <= 1e-5 * max(1.0, abs(fd2))


@given(seed=st.integers(0, 2**32 - 1), which=st.sampled_from(CERTIFIED + [sigmoid(5.0, 4.0)]))
def test_scalar_row_matches_vector_path(seed, which):
    inst = concave_instance(np.random.default_rng(seed), n_max=3)
    ctx = make_context(inst, which)
    row = ctx.row(0)
    for z in np.linspace(ctx.bounds.L[0], ctx.bounds.U[0], 7):
        z = float(z)
        assert row.f(z) == pytest.approx(psi(ctx, 0, z), rel=1e-13, abs=1e-15)
        assert row.d1(z) == pytest.approx(psi_d1(ctx, 0, z), rel=1e-12, abs=1e-15)
        assert row.d2(z) == pytest.approx(psi_d2(ctx, 0, z), rel=1e-11, abs=1e-14)


@given(seed=st.integers(0, 2**32 - 1))
def test_marginal_gain_consistent_with_f(seed):
    rng = np.random.default_rng(seed)
    inst = concave_instance(rng, n_max=5, m_max=8)
    ctx = make_context(inst, exp_concave(1.0, 1.0))
    S = list(rng.choice(inst.n_locations, inst.budget - 1, replace=False)) if inst.budget > 1 else []
    j = int(next(k for k in range(inst.n_locations) if k not in S))
    gain, z_new = marginal_gain(ctx, S, j, z_of_subset(inst, S), check=True)
    assert gain == pytest.approx(f_of_subset(ctx, S + [j]) - f_of_subset(ctx, S), abs=1e-12)
    np.testing.assert_allclose(z_new, z_of_subset(inst, S + [j]))
    with pytest.raises(ValueError):
        marginal_gain(ctx, S + [j], j, z_new)


def test_marginal_gain_detects_stale_cache():
    ctx = t1_ctx()
    with pytest.raises(ValueError):
        marginal_gain(ctx, [], 0, np.array([5.0]), check=True)


def test_z_of_subset_index_check():
    with pytest.raises(IndexError):
        z_of_subset(t1_ctx().inst, [2])


@given(seed=st.integers(0, 2**32 - 1), which=st.sampled_from(CERTIFIED))
def test_certified_g_concave_on_recipe(seed, which):
    inst = concave_instance(np.random.default_rng(seed))
    ctx = make_context(inst, which)
    assert ctx.certified
    assert all_rows_concave(ctx, from_competitor=True)


def test_concavity_fails_near_small_competitor_mass():
    # certified g yet Psi'' > 0 just above Uc when Uc is small
    inst = Instance([[0.5, 0.6]], [0.8], [1.0], [0.0], 1)
    ctx = make_context(inst, exp_concave(1.0, 1.0))
    assert ctx.certified
    assert not psi_concave_on(ctx, 0, 0.8, 1.4)


def test_t1_curvature_map_is_single_concave_piece():
    cm = curvature_map(t1_ctx(), 0)
    assert cm.labels == [CONCAVE]
    assert cm.intervals[0][0] == 2.0 and cm.intervals[0][1] == 3.0


def test_sigmoid_curvature_map_finds_inflection():
    inst = Instance([[100.0]], [10.0], [1.0], [0.0], 1)
    ctx = make_context(inst, sigmoid(5.0, 4.0))
    cm = curvature_map(ctx, 0, lo=10.0, hi=200.0)
    assert CONVEX in cm.labels and CONCAVE in cm.labels
    assert cm.labels[0] == CONVEX
    # pieces tile the interval and alternate
    for (a0, b0, l0), (a1, b1, l1) in zip(cm.intervals, cm.intervals[1:]):
        assert b0 == a1 and l0 != l1
    for a, b, lab in cm.intervals:
        mid = 0.5 * (a + b)
        assert (psi_d2(ctx, 0, mid) > 0) == (lab == CONVEX)
    assert not cm.is_concave()
