import math
from fractions import Fraction

import numpy as np
import pytest

from polyrestrict import sharp
from polyrestrict.errors import NotOnQuadric, ScaleInfeasible
from polyrestrict.geometry import critical_exponent


def test_predicted_exponent_examples():
    assert sharp.predicted_slab_exponent(2, 2, 2) == Fraction(1, 2)
    assert sharp.predicted_slab_exponent(2, 2, 4) == 0
    assert sharp.predicted_slab_exponent(3, 2, 4) == Fraction(-1, 8)
    with pytest.raises(ValueError):
        sharp.predicted_slab_exponent(3, 4, 4)
    with pytest.raises(ValueError):
        sharp.predicted_slab_exponent(3, 2, 1)


def test_prediction_vanishes_at_critical_exponent_when_k_equals_n():
    for n in range(2, 7):
        assert sharp.predicted_slab_exponent(n, n, critical_exponent(n, n)) == 0


def test_full_slab_fills_ball():
    ex = sharp.build_slab_example(2, 2, 64, seed=1)
    assert ex.density.norm() == pytest.approx(1.0)
    assert ex.plane.dim == 2
    stats = sharp.slab_field_stats(ex)
    assert stats["cv"] < 1.0
    assert 0.2 < stats["l2_ratio"] <= 2


def test_slab_example_deterministic():
    a = sharp.build_slab_example(2, 2, 64, seed=3)
    b = sharp.build_slab_example(2, 2, 64, seed=3)
    assert a.packets == b.packets
    assert np.array_equal(a.density.values, b.density.values)


def test_slab_too_large_rejected():
    with pytest.raises(ScaleInfeasible):
        sharp.build_slab_example(5, 2, 2 ** 14, seed=0)


def test_fit_slope_recovers_power_law():
    Rs = [64, 128, 256, 512]
    s, c, res = sharp.fit_slope(Rs, [3 * R ** -0.25 for R in Rs])
    assert s == pytest.approx(-0.25) and res < 1e-12


def test_constant_ratio_has_zero_slope():
    run = sharp.scaling_experiment(lambda R: R, [16, 32, 64], lambda obj, R: 5.0)
    assert abs(run.slope) < 1e-12
    assert len(run.to_csv().strip().splitlines()) == 4
    with pytest.raises(ValueError):
        sharp.scaling_experiment(lambda R: R, [16, 32], lambda obj, R: 1.0)


def test_quadric_lines_stay_on_quadric():
    rng = np.random.default_rng(0)
    R = 50.0
    for _ in range(5):
        fam = sharp.quadric_line_family(R, sharp.quadric_point(R, rng))
        for phi in rng.uniform(0, 2 * math.pi, 4):
            assert sharp.line_residual(fam, R, phi, np.linspace(-3 * R, 3 * R, 9)) < 1e-10
    with pytest.raises(NotOnQuadric):
        sharp.quadric_line_family(R, [1.0, 0, 0, 0])


def test_quadric_directions_are_broad():
    probe = sharp.quadric_broadness_probe(64.0, points=2, directions=32, K=8)
    assert probe["broad"] and probe["max_fraction"] <= 0.5


def test_collapsed_cone_control_is_flagged():
    ctrl = sharp.collapsed_cone_control(directions=32)
    assert ctrl["max_fraction"] == 1.0 and not ctrl["broad"]
