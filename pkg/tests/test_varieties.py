import math

import numpy as np
import pytest

from polyrestrict import varieties as vm
from polyrestrict.errors import DegeneratePoint, NotOnVariety
from polyrestrict.geometry import Cap, Tube, angle_to_subspace

R = 256
R_SMALL = 64


def tube(center, R=R, delta=0.1):
    return Tube(Cap(tuple(center), R ** -0.5), (0.0,) * len(center), R ** (0.5 + delta), R, R)


def test_sphere_tangent_space():
    T = vm.tangent_space(vm.sphere(3, 1.0), [1.0, 0.0, 0.0])
    assert T.dim == 2
    assert angle_to_subspace(np.array([0.0, 1, 0]), T) == pytest.approx(0, abs=1e-12)
    assert angle_to_subspace(np.array([1.0, 0, 0]), T) == pytest.approx(math.pi / 2)
    with pytest.raises(NotOnVariety):
        vm.tangent_space(vm.sphere(3, 1.0), [0.5, 0.0, 0.0])


def test_quadric_tangent_space():
    Q = vm.quadric(10.0)
    T = vm.tangent_space(Q, [10.0, 0, 0, 0])
    assert T.dim == 3
    for e in np.eye(4)[1:]:
        assert angle_to_subspace(e, T) == pytest.approx(0, abs=1e-12)


def test_degenerate_point_detected():
    x = vm.coordinate_plane(2, 0).polys[0]
    cone = vm.VarietySystem([x * x])
    with pytest.raises(DegeneratePoint):
        vm.tangent_space(cone, [0.0, 0.3])


def test_sampler_lands_on_variety():
    Z = vm.sphere(3, 5.0)
    z = Z.sample(200, np.random.default_rng(0))
    assert len(z) > 150
    assert np.max(np.abs(np.linalg.norm(z, axis=1) - 5)) < 1e-9


def test_json_roundtrip():
    Z = vm.quadric(7.0)
    W = vm.VarietySystem.from_json(Z.to_json())
    x = np.random.default_rng(1).normal(size=(5, 4))
    assert np.allclose(Z.values(x), W.values(x))


def test_axis_tube_tangent_to_parabola():
    ok, wit = vm.is_tangent_tube(tube((0.0,)), vm.parabola_graph(R), vm.TangencyParams(R, 0.1))
    assert ok, wit


def test_plane_tangency_examples():
    plane = vm.coordinate_plane(3, 0, scale=R)
    params = vm.TangencyParams(R, 0.1)
    assert vm.is_tangent_tube(tube((0.0, 0.3)), plane, params)[0]
    ok, wit = vm.is_tangent_tube(tube((0.5, 0.0)), plane, params)
    assert not ok and wit["reason"] in ("distance", "angle")


def test_tangency_monotone_in_constant():
    plane = vm.coordinate_plane(3, 0, scale=R)
    rng = np.random.default_rng(2)
    for _ in range(5):
        t = tube(rng.uniform(-0.05, 0.05, 2))
        flags = [vm.is_tangent_tube(t, plane, vm.TangencyParams(R, 0.1, C))[0] for C in (0.5, 1, 2, 4)]
        assert all(b >= a for a, b in zip(flags, flags[1:]))


def test_classify_splits_all_tubes():
    plane = vm.coordinate_plane(3, 0, scale=R)
    tubes = [tube((0.0, 0.3)), tube((0.5, 0.0)), tube((0.0, -0.2))]
    tang, trans = vm.classify_packets(tubes, plane, [0.0, 0.0, 0.0], R / 4, vm.TangencyParams(R, 0.1))
    assert sorted(tang + trans) == [0, 1, 2]
    assert 1 in trans and 0 in tang


def test_transverse_cover_of_circle():
    t = tube((0.0,))
    rep = vm.transverse_cover(vm.sphere(2, R / 2), t, 0.5, np.random.default_rng(3))
    assert rep["samples"] > 0
    assert rep["within_bound"] and rep["covers_samples"]
    with pytest.raises(ValueError):
        vm.transverse_cover(vm.sphere(2, R / 2), t, 2.0, np.random.default_rng(3))


def test_theta_count_plane_small():
    count, caps = vm.theta_count(vm.coordinate_plane(3, 0, scale=R_SMALL), R_SMALL, 0.1)
    assert count == len(caps) > 0
    # a chord of length R drifts 2 |w_1| R / |(-2w, 1)| across the plane
    for c in caps:
        w = np.asarray(c.center)
        assert abs(w[0]) <= R_SMALL ** (-0.4) * math.sqrt(1 + 4 * w @ w) + R_SMALL ** -0.5


@pytest.mark.parametrize("dim", [1, 2])
def test_concentration_bounded(dim):
    rep = vm.concentration_check(1.0, 0.25, 10, dim, np.random.default_rng(dim))
    assert 0 < rep["constant"] <= 10
    with pytest.raises(ValueError):
        vm.concentration_check(1.0, 2.0, 1, dim, np.random.default_rng(0))


def test_transverse_equidistribution_small():
    dm = 0.1
    g = vm.tangent_packet_density(R, dm, np.random.default_rng(4))
    rep = vm.transverse_equidistribution_check(g, R, [R / 16, R / 4], dm)
    ratios = [row["ratio"] for row in rep["rows"]]
    assert ratios[0] < ratios[1] <= 1
    assert rep["slope"] < 0


def test_bezout_for_conics():
    rng = np.random.default_rng(5)
    for _ in range(10):
        Z = vm.VarietySystem([vm.random_conic(rng), vm.random_conic(rng)])
        pts = vm.intersection_points(Z, rng, seeds=400)
        assert len(pts) <= 4


def test_generic_direction_is_transverse():
    Z = vm.sphere(3, 2.0)
    z = Z.sample(50, np.random.default_rng(6))
    w = vm.generic_direction(Z, z, np.random.default_rng(7))
    assert np.linalg.norm(w) == pytest.approx(1.0)
