import json
import math

import numpy as np
import pytest

from polyrestrict import wavepackets as wp
from polyrestrict.errors import ScaleOrderViolation
from polyrestrict.extension import DensityFunction, bump, grid_spacing, random_smooth_density
from polyrestrict.geometry import Cap

DEFICIT = ("sum-normalized cutoffs lose square mass and the v-lattice is finer than the cap's "
           "Fourier footprint at desk scale; see the decision ledger")


@pytest.fixture(scope="module")
def small():
    R = 64
    f = random_smooth_density(2, grid_spacing(R), np.random.default_rng(11))
    return f, wp.decompose(f, R, 0.1)


@pytest.fixture(scope="module")
def medium():
    R = 256
    f = random_smooth_density(2, grid_spacing(R), np.random.default_rng(12))
    return f, wp.decompose(f, R, 0.1)


def test_zero_density_gives_empty_set():
    f = DensityFunction.on_ball(2, grid_spacing(64))
    P = wp.decompose(f, 64)
    assert len(P) == 0
    assert np.all(P.reconstruct().values == 0)
    assert P.orthogonality_factor() == 1.0


def test_single_packet_reconstruction(small):
    f, P = small
    i = int(np.argmax(P.norms()))
    one = P.reconstruct([i])
    assert np.allclose(one.values, P.packets[i].component.embed(P.template))


def test_reconstruction_error(medium):
    f, P = medium
    err, sup = wp.reconstruction_error(f, P)
    assert err <= 1e-3


def test_components_supported_in_caps(small):
    f, P = small
    for p in P.packets[::7]:
        w = p.component.mesh()[..., 0]
        nz = np.abs(p.component.values) > 0
        assert np.all(np.abs(w[nz] - p.cap.center[0]) <= p.cap.radius + 1e-12)


def test_packet_count_is_bounded(small):
    f, P = small
    R = 64
    caps = 2 / (wp.PSI_SUPPORT * R ** -0.5) + 1
    lattice = 2 * 2 * R / R ** 0.55 + 1
    v = np.abs([p.v[0] for p in P.packets])
    assert np.sum(v <= 2 * R) <= caps * lattice
    # packets beyond |v| = 2R miss B_R and carry a small share of the mass
    assert np.sum(P.norms()[v > 2 * R] ** 2) <= 1e-3 * f.norm() ** 2


def test_manifest(small):
    f, P = small
    m = json.loads(P.manifest_json())
    row = m["packets"][0]
    assert set(row) == {"theta_center", "v", "l2_norm", "tube_endpoints"}
    assert m["cutoffs"]["eta"]["radius"] == pytest.approx(64 ** 0.55)


def test_vbar_examples():
    assert np.allclose(wp.vbar([0.3, 0.1], [0, 0, 0]), [0, 0])
    assert np.allclose(wp.vbar([0.0, 0.0], [1, 2, 3]), [1, 2])
    assert np.allclose(wp.vbar([0.5, -0.5], [1, 2, 3]), [4, -1])


def test_redecompose_same_scale_is_unchanged(small):
    f, P = small
    Q = wp.redecompose_at_ball(f, [0.0, 0.0], 64, 0.1, R=64)
    assert len(Q) == len(P)
    assert np.allclose(Q.norms(), P.norms())


def test_redecompose_scale_order(small):
    f, P = small
    with pytest.raises(ScaleOrderViolation):
        wp.redecompose_at_ball(P, [0.0, 0.0], 4)
    with pytest.raises(ScaleOrderViolation):
        wp.coarse_classes(P.packets, [0.0, 0.0], 64, 128, 0.1)


def test_coarse_classes_partition_packets(small):
    f, P = small
    y = np.array([10.0, -20.0])
    classes = wp.coarse_classes(P.packets, y, 64, 32, 0.1)
    members = sorted(i for cl in classes for i in cl.members)
    assert members == list(range(len(P)))
    assert len(wp.coarse_classes(P.packets[:1], y, 64, 32, 0.1)) == 1


def test_far_packets_land_in_distinct_classes():
    R, rho, delta = 1024, 256, 0.1
    tmpl = DensityFunction.on_ball(2, grid_spacing(R))
    cap = Cap((0.0,), R ** -0.5)
    shift = 11 * R ** (0.5 + delta / 2)
    pk = [wp.WavePacket(cap, (0.0,), tmpl), wp.WavePacket(cap, (shift,), tmpl)]
    assert len(wp.coarse_classes(pk, [0.0, 0.0], R, rho, delta)) == 2


def test_angle_consistency():
    R, rho = 1024, 256
    tmpl = DensityFunction.on_ball(2, grid_spacing(R))
    cap = Cap((0.0,), R ** -0.5)
    cl = wp.coarse_classes([wp.WavePacket(cap, (0.0,), tmpl)], [0.0, 0.0], R, rho, 0.1)[0]
    assert wp.angle_consistency_check(cl, [wp.WavePacket(cap, (0.0,), tmpl)]) == 0.0


def test_localization_monotone_in_margin(medium):
    f, P = medium
    for row in wp.tube_localization_report(P, margins=(2, 3, 4), top=4):
        r = row["ratios"]
        assert r[2] >= r[3] >= r[4]


def test_zero_packet_localization():
    tmpl = DensityFunction.on_ball(2, grid_spacing(64))
    p = wp.WavePacket(Cap((0.0,), 64 ** -0.5), (0.0,), tmpl, 0.0)
    assert wp.tube_localization(p, 64, 0.1) == {2: 0.0, 3: 0.0, 4: 0.0}


@pytest.mark.xfail(strict=True, reason=DEFICIT)
def test_orthogonality_factor(medium):
    f, P = medium
    assert 0.5 <= P.orthogonality_factor() <= 2


@pytest.mark.xfail(strict=True, reason=DEFICIT)
def test_central_packet_localization():
    R = 256
    f = DensityFunction.on_ball(2, grid_spacing(R), lambda w: bump(np.abs(w[..., 0]) / 0.5))
    P = wp.decompose(f, R)
    central = [p for p in P.packets if abs(p.cap.center[0]) < 1e-12 and abs(p.v[0]) < 1e-9]
    assert wp.tube_localization(central[0], R, 0.1)[2] <= 1e-3


@pytest.mark.xfail(strict=True, reason=DEFICIT)
def test_single_cap_density_has_dominant_packet():
    R = 256
    r, L = R ** -0.5, R ** 0.55
    f = DensityFunction.on_ball(2, grid_spacing(R),
                                lambda w: bump(np.abs(w[..., 0]) / (0.5 * r)) * np.exp(2j * L * w[..., 0]))
    n2 = wp.decompose(f, R).norms() ** 2
    assert n2.max() >= 0.99 * n2.sum()


@pytest.mark.xfail(strict=True, reason=DEFICIT)
def test_frequency_localization(medium):
    f, P = medium
    top = np.argsort(-P.norms())[:5]
    assert max(wp.frequency_mass_outside(P.packets[i], 256, 0.1) for i in top) <= 1e-4
