import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from polyrestrict import kernels
from polyrestrict.errors import ResolutionTooCoarse, SupportViolation
from polyrestrict.extension import (DensityFunction, RescaleMap, bump, evaluate_extension, evaluate_grid,
                                    grid_spacing, modulate_to_ball, parabolic_rescale,
                                    plancherel_constant, random_smooth_density, slice_l2)
from polyrestrict.geometry import Cap

R = 256
H = grid_spacing(R)


def ones(n=2, h=H):
    return DensityFunction.on_ball(n, h, lambda w: np.ones(w.shape[:-1]))


def test_zero_density_gives_zero_field():
    f = DensityFunction.on_ball(2, H)
    assert np.all(evaluate_extension(f, [[1.0, 2.0], [0, 0]], R).values == 0)
    assert slice_l2(f, R, 0.0) == (0.0, 0.0)


def test_constant_density_at_origin():
    assert evaluate_extension(ones(), [[0.0, 0.0]], R).values[0] == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("t", [1.0, 10.0])
def test_against_adaptive_quadrature(t):
    # the indicator has jump discontinuities, so use a finer grid than the default
    f = ones(h=grid_spacing(1024))
    ref = (quad(lambda w: math.cos(t * w * w), -1, 1, limit=200)[0]
           + 1j * quad(lambda w: math.sin(t * w * w), -1, 1, limit=200)[0])
    assert abs(evaluate_extension(f, [[0.0, t]], 1024).values[0] - ref) < 1e-6


def test_resolution_guard():
    with pytest.raises(ResolutionTooCoarse):
        evaluate_extension(ones(h=0.01), [[0.0, 0.0]], R)


def test_grid_path_matches_direct_and_fallback():
    rng = np.random.default_rng(0)
    f = random_smooth_density(2, H, rng)
    xs = np.linspace(-300, 300, 21)
    xn = np.linspace(-200, 200, 9)
    G = evaluate_grid(f, [xs], xn, R)
    pts = np.stack(np.meshgrid(xn, xs, indexing="ij"), -1)[..., ::-1].reshape(-1, 2)
    D = evaluate_extension(f, pts, R).values.reshape(G.shape)
    assert np.abs(G - D).max() <= 1e-10 * np.abs(D).max()
    N = kernels.extension_direct_numpy(pts, *f.active()).reshape(G.shape)
    assert np.abs(N - D).max() <= 1e-10 * np.abs(D).max()


def test_linearity():
    rng = np.random.default_rng(3)
    f, g = random_smooth_density(2, H, rng), random_smooth_density(2, H, rng)
    a, b = 0.3 - 1.2j, 2.1 + 0.4j
    X = rng.uniform(-R, R, (40, 2))
    lhs = evaluate_extension(f.scaled(a) + g.scaled(b), X, R).values
    rhs = a * evaluate_extension(f, X, R).values + b * evaluate_extension(g, X, R).values
    assert np.abs(lhs - rhs).max() < 1e-10 * max(1.0, np.abs(rhs).max())


def test_conjugation_symmetry():
    rng = np.random.default_rng(4)
    f = random_smooth_density(2, H, rng)
    fc = DensityFunction(f.n, f.h, f.lo, np.conj(f.values), f.bound, f.mask)
    X = rng.uniform(-R, R, (40, 2))
    lhs = evaluate_extension(fc, X, R).values
    rhs = np.conj(evaluate_extension(f, -X, R).values)
    assert np.abs(lhs - rhs).max() < 1e-10 * np.abs(rhs).max()


@pytest.mark.parametrize("xn", [0.0, R / 2])
def test_plancherel_slice(xn):
    f = DensityFunction.on_ball(2, H, lambda w: bump(np.linalg.norm(w, axis=-1) / 0.8))
    s, fn = slice_l2(f, R, xn)
    assert abs(s / fn - 1) <= 0.01


@pytest.mark.parametrize("RR", [64, 256])
def test_ball_l2_bound(RR):
    rng = np.random.default_rng(RR)
    h = grid_spacing(RR)
    ax = np.arange(-RR, RR) + 0.5
    X1, X2 = np.meshgrid(ax, ax)
    ball = np.hypot(X1, X2) <= RR
    worst = 0.0
    for _ in range(20):
        f = random_smooth_density(2, h, rng)
        vals = np.abs(evaluate_grid(f, [ax], ax, RR)) ** 2
        ratio = math.sqrt(vals[ball].sum() / plancherel_constant(2)) / (math.sqrt(RR) * f.norm())
        worst = max(worst, ratio)
    assert worst <= 2


def test_modulation():
    rng = np.random.default_rng(5)
    f = random_smooth_density(2, H, rng)
    assert np.array_equal(modulate_to_ball(f, [0.0, 0.0]).values, f.values)
    y = np.array([30.0, -40.0])
    fm = modulate_to_ball(f, y)
    assert abs(fm.norm() - f.norm()) < 1e-12 * f.norm()
    X = rng.uniform(-R / 2, R / 2, (100, 2))
    a = evaluate_extension(f, X, R).values
    b = evaluate_extension(fm, X - y, R).values
    assert np.abs(a - b).max() < 1e-6


def test_rescale_identity_map():
    m = RescaleMap((0.0,), 1.0)
    assert np.allclose(m.matrix, np.eye(2))


def test_rescale_modulus_identity_and_jacobian():
    rng = np.random.default_rng(6)
    K, c = 4, 0.25
    f = DensityFunction.on_ball(2, H, lambda w: bump((w[..., 0] - c) * K * 1.05)
                                * np.exp(3j * w[..., 0]) * (1 + 0.5 * np.cos(40 * w[..., 0])))
    ft, m = parabolic_rescale(f, Cap((c,), 1 / K, "coarse"), K)
    X = rng.uniform(-R / 2, R / 2, (50, 2))
    a = np.abs(evaluate_extension(f, X, R).values)
    b = np.abs(evaluate_extension(ft, m(X), R / K).values) / K
    assert np.max(np.abs(a - b) / a) < 1e-5
    assert m.jacobian == pytest.approx(K ** -3.0)
    corners = np.array([[s1 * R, s2 * R] for s1 in (-1, 1) for s2 in (-1, 1)])
    assert np.max(np.linalg.norm(m(corners), axis=1)) <= 3 * R / K


def test_rescale_rejects_mass_outside_cap():
    f = DensityFunction.on_ball(2, H, lambda w: np.ones(w.shape[:-1]))
    with pytest.raises(SupportViolation):
        parabolic_rescale(f, Cap((0.25,), 0.25, "coarse"), 4)


def test_density_json_roundtrip():
    f = random_smooth_density(2, grid_spacing(16), np.random.default_rng(7))
    g = DensityFunction.from_json(f.to_json())
    assert np.array_equal(f.values, g.values) and g.h == f.h
    json.loads(f.to_json())


def test_sampled_field_csv():
    f = random_smooth_density(2, H, np.random.default_rng(8))
    text = evaluate_extension(f, [[0.0, 1.0], [2.0, 3.0]], R).to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "x1,x2,re,im" and len(lines) == 3


@settings(max_examples=20, deadline=None)
@given(st.floats(-R, R), st.floats(-R, R))
def test_modulus_bounded_by_l1(x1, x2):
    f = random_smooth_density(2, grid_spacing(R), np.random.default_rng(9))
    l1 = float(np.sum(np.abs(f.values) * f.weights()))
    assert abs(evaluate_extension(f, [[x1, x2]], R).values[0]) <= l1 * (1 + 1e-12)
