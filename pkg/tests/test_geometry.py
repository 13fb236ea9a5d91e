import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyrestrict import geometry as g
from polyrestrict.geometry import Cap, Subspace, Tube


def test_direction_examples():
    assert np.allclose(g.direction_of([0.0, 0.0]), [0, 0, 1])
    assert np.allclose(g.direction_of([0.5]), np.array([-1, 1]) / math.sqrt(2))
    assert np.allclose(g.direction_of([0.5, 0.0]), np.array([-1, 0, 1]) / math.sqrt(2))


def test_frequency_examples():
    assert np.allclose(g.frequency_of([0.0, 0.0]), [0, 0, 0])
    assert np.allclose(g.frequency_of([0.5]), [0.5, 0.25])
    assert np.allclose(g.frequency_of([0.6, 0.8]), [0.6, 0.8, 1.0])


def test_closed_forms_on_random_points():
    rng = np.random.default_rng(1)
    w = rng.uniform(-1, 1, (10 ** 4, 2))
    w = w[np.linalg.norm(w, axis=1) <= 1]
    G = np.array([g.direction_of(x) for x in w[:2000]])
    ref = np.hstack([-2 * w[:2000], np.ones((len(G), 1))])
    ref /= np.linalg.norm(ref, axis=1, keepdims=True)
    assert np.max(np.abs(G - ref)) < 1e-12
    xi = np.array([g.frequency_of(x) for x in w[:2000]])
    assert np.max(np.abs(xi[:, -1] - np.sum(w[:2000] ** 2, axis=1))) < 1e-12


def test_tube_membership_examples():
    R, delta = 100.0, 0.1
    t = Tube.from_packet(Cap((0.0, 0.0), R ** -0.5), (0.0, 0.0), R, delta)
    for xn in (-R, 0.0, R):
        assert g.tube_contains(t, [0.0, 0.0, xn])
    assert not g.tube_contains(t, [2 * R ** 0.6, 0.0, 0.0])
    t2 = Tube.from_packet(Cap((0.5,), R ** -0.5), (0.0,), R, delta)
    assert g.tube_contains(t2, [-50.0, 50.0])


def test_angle_examples():
    V = Subspace.span([[1.0, 0.0, 0.0]])
    assert g.angle_to_subspace(np.array([1.0, 0, 0]), V) == pytest.approx(0.0, abs=1e-12)
    assert g.angle_to_subspace(np.array([0, 0, 1.0]), V) == pytest.approx(math.pi / 2)
    assert g.angle_to_subspace(np.array([1.0, 1.0, 0]) / math.sqrt(2), V) == pytest.approx(math.pi / 4)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_angle_invariant_under_basis_change(seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(2, 4))
    Q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    vec = rng.normal(size=4)
    vec /= np.linalg.norm(vec)
    a = g.angle_to_subspace(vec, Subspace.span(B))
    b = g.angle_to_subspace(vec, Subspace.span(Q @ B))
    assert abs(a - b) < 1e-10


def test_exponent_examples():
    assert g.critical_exponent(3, 4) == Fraction(14, 5)
    assert g.restriction_exponent(4) == Fraction(14, 5)
    assert g.restriction_exponent(3) == Fraction(10, 3)
    assert g.restriction_exponent(4) == g.critical_exponent(g.choose_k(4), 4)
    assert g.broad_e(2, 3, 2) == 0
    assert g.broad_e(2, 3, 4) == Fraction(5, 8)
    assert g.regular_lower_bound(3, 4) == Fraction(14, 5)
    assert g.regular_lower_bound(2, 3) == 3
    assert g.choose_k(5) == 3
    for n in range(2, 13):
        assert g.critical_exponent(2, n) == Fraction(2 * (n + 2), n)


def test_critical_exponent_monotone():
    for n in range(2, 13):
        for k in range(2, n + 1):
            if k < n:
                assert g.critical_exponent(k + 1, n) < g.critical_exponent(k, n)
            if n < 12:
                assert g.critical_exponent(k, n + 1) < g.critical_exponent(k, n)
            assert g.broad_e(k, n, g.critical_exponent(k, n)) == Fraction(1, 2)


def test_exponent_range_errors():
    with pytest.raises(ValueError):
        g.critical_exponent(1, 3)
    with pytest.raises(ValueError):
        g.critical_exponent(4, 3)


def test_exponent_csv_has_exact_rationals():
    text = g.exponent_table_csv([4])
    assert "14/5" in text and "2.8" in text


def test_delta_hierarchy():
    h = g.build_delta_hierarchy(0.1, 3)
    assert np.allclose(h.deltas, [1e-2, 1e-4, 1e-6])
    assert h.delta == pytest.approx(1e-8)
    h2 = g.build_delta_hierarchy(0.4, 2)
    chain = [h2.eps, *h2.deltas, h2.delta]
    assert all(b < a for a, b in zip(chain, chain[1:]))
    # the power schedule gives eps*delta_{m-1}/delta_m = 1/eps
    assert h.separation_margin() == pytest.approx(10.0)
    with pytest.raises(ValueError):
        g.build_delta_hierarchy(0.6, 2)


@settings(max_examples=50, deadline=None)
@given(st.floats(10, 1e6), st.floats(0.001, 0.2), st.floats(0.001, 0.2))
def test_solve_rho_roundtrip(R, dm, dl):
    rho = g.solve_rho(R, dm, dl)
    assert abs(rho ** (0.5 + dl) / R ** (0.5 + dm) - 1) < 1e-9
