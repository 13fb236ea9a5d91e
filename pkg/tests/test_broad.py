import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyrestrict import broad
from polyrestrict.errors import CombinatorialBlowup, ExponentRelationViolated
from polyrestrict.extension import DensityFunction, bump, evaluate_extension, grid_spacing, random_smooth_density
from polyrestrict.geometry import Subspace

R, K = 64, 8
H = grid_spacing(R)


@pytest.fixture(scope="module")
def bundles():
    rng = np.random.default_rng(21)
    g = random_smooth_density(2, H, rng, modes=4)
    h = random_smooth_density(2, H, rng, modes=4)
    bg, bh = broad.build_bundle(g, R, K), broad.build_bundle(h, R, K)
    return g, bg, bh, broad.candidate_subspaces(bg.directions, 2, "caps")


def test_caps_tile_the_ball():
    caps, corners = broad.coarse_caps(2, K)
    assert len(caps) == K
    caps3, _ = broad.coarse_caps(3, 4)
    assert len(caps3) == 16 - 4 + 4  # all 16 squares of side 1/2 meet the unit disk
    f = DensityFunction.on_ball(2, H, lambda w: np.ones(w.shape[:-1]))
    labels = broad.cap_labels(f, K, corners)
    assert np.all(labels[f.mask] >= 0)


def test_cap_pieces_sum_to_total(bundles):
    g, bg, _, _ = bundles
    sel = np.arange(0, len(bg.points), 97)
    direct = evaluate_extension(g, bg.points[sel], R).values
    assert np.abs(bg.total_field()[sel] - direct).max() < 1e-10 * np.abs(direct).max()


def test_mu_a_zero_is_plain_max():
    vals = np.array([3.0, 1.0, 2.0])
    dirs = np.eye(3)
    assert broad.mu_broad(vals, dirs, 8, 0, []) == 3.0


def test_mu_single_cap_excluded():
    V = Subspace.span([[0.0, 1.0]])
    assert broad.mu_broad(np.array([5.0]), np.array([[0.0, 1.0]]), 8, 1, [V]) == 0.0


def test_mu_three_orthogonal_caps():
    dirs = np.eye(3)
    vals = np.array([1.0, 7.0, 4.0])
    cands = broad.candidate_subspaces(dirs, 2, "caps")
    assert len(cands) == 3
    assert broad.mu_broad(vals, dirs, 8, 1, cands) == 4.0


def test_candidate_counts():
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(10, 4))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    assert len(broad.candidate_subspaces(dirs, 3, "caps")) <= 45
    assert len(broad.candidate_subspaces(dirs, 2, "caps")) == 10
    with pytest.raises(CombinatorialBlowup):
        broad.candidate_subspaces(dirs, 3, "caps", limit=10)


def test_larger_candidate_family_never_increases_mu(bundles):
    _, bg, _, cands = bundles
    more = broad.candidate_subspaces(bg.directions, 2, "random(20)", rng=np.random.default_rng(1))
    p = broad.BroadParams(2, 1, K, 3.0)
    assert broad.bl_norm_bundle(bg, p, more) <= broad.bl_norm_bundle(bg, p, cands) * (1 + 1e-12)


def test_zero_density_has_zero_norm():
    f = DensityFunction.on_ball(2, H)
    assert broad.bl_norm(f, R, broad.BroadParams(2, 1, K, 3.0)) == 0.0


def test_single_cap_density_is_excluded():
    caps, _ = broad.coarse_caps(2, K)
    c = caps[3].center[0]
    f = DensityFunction.on_ball(2, H, lambda w: bump((w[..., 0] - c) * K * 1.05))
    assert broad.bl_norm(f, R, broad.BroadParams(2, 1, K, 3.0)) <= 1e-12


def test_l2_sanity_bound(bundles):
    _, bg, _, _ = bundles
    assert broad.bl_norm_bundle(bg, broad.BroadParams(2, 0, K, 2.0), []) <= broad.lp_norm(bg, 2.0)
    nt = len(bg.caps)
    bound = broad.lp_norm(bg, 3.0) * nt ** (1 / 3)
    assert broad.bl_norm_bundle(bg, broad.BroadParams(2, 0, K, 3.0), []) <= bound


def test_homogeneity(bundles):
    _, bg, _, cands = bundles
    p = broad.BroadParams(2, 2, K, 3.0)
    a = broad.bl_norm_bundle(bg, p, cands)
    b = broad.bl_norm_bundle(bg.scaled(-2.5j), p, cands)
    assert b == pytest.approx(2.5 * a, rel=1e-12)


def test_triangle_trivial_cases(bundles):
    _, bg, bh, cands = bundles
    p = broad.BroadParams(2, 2, K, 3.0)
    zero = bh.scaled(0.0)
    assert not broad.verify_triangle(bg, zero, p, cands)["violated"]
    rep = broad.verify_triangle(bg, bg, p, cands)
    assert rep["lhs"] <= rep["constant"] * rep["rhs"]
    assert not broad.verify_triangle(bg, bh, p, cands)["violated"]
    with pytest.raises(ValueError):
        broad.verify_triangle(bg, bh, broad.BroadParams(2, 1, K, 3.0), cands)


def test_holder(bundles):
    _, bg, _, cands = bundles
    rep = broad.verify_holder(bg, 2, K, 1, 1, 3, 2, 6, Fraction(1, 2), Fraction(1, 2), cands)
    assert not rep["violated"]
    deg = broad.verify_holder(bg, 2, K, 2, 0, 3, 3, 5, 1, 0, cands)
    assert deg["ratio"] == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ExponentRelationViolated):
        broad.verify_holder(bg, 2, K, 1, 1, 3, 2, 5, Fraction(1, 2), Fraction(1, 2), cands)


def test_a_monotone(bundles):
    _, bg, _, cands = bundles
    assert broad.a_monotone(bg, 2, K, 3.0, cands)


def test_exclusion_consistency():
    # every cap direction inside one candidate: nothing survives for A >= 1
    dirs = np.array([[1.0, 0, 0], [0.0, 1.0, 0], [1.0, 1.0, 0]]) / np.array([[1], [1], [math.sqrt(2)]])
    V = Subspace.span([[1.0, 0, 0], [0, 1.0, 0]])
    assert broad.mu_broad(np.array([1.0, 2.0, 3.0]), dirs, 8, 1, [V]) == 0.0


@pytest.mark.parametrize("n", [2, 3, 4])
def test_narrow_count(n):
    rng = np.random.default_rng(n)
    for KK in (4, 8, 16):
        for k in range(2, n + 1):
            assert broad.narrow_count(n, k, KK, rng, 50, 50)["constant"] <= 10


def test_mu_csv(bundles):
    _, bg, _, cands = bundles
    val, table = broad.bl_norm_bundle(bg, broad.BroadParams(2, 1, K, 3.0), cands, return_table=True)
    text = broad.mu_csv(bg, table, cands)
    assert len(text.strip().splitlines()) == len(bg.cover) + 1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=2, max_size=6), st.integers(0, 10 ** 6))
def test_mu_nonincreasing_in_a(values, seed):
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(len(values), 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    cands = broad.candidate_subspaces(dirs, 2, "caps")
    mus = [broad.mu_broad(np.array(values), dirs, 4, A, cands) for A in range(4)]
    assert all(b <= a for a, b in zip(mus, mus[1:]))
