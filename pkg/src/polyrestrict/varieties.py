"""Sampled transverse complete intersections and tube/variety geometry checks."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from scipy.spatial import cKDTree

from .errors import (DegeneratePoint, EmptyPacketSet, NotOnVariety, SamplerFailure,
                     SearchBudgetExceeded)
from .extension import DensityFunction, evaluate_grid, grid_spacing
from .geometry import Cap, Subspace, Tube, angle_to_subspace, cap_grid
from .polynomial import PolynomialND, newton_project

WEDGE_MIN = 1e-8


def wedge_norm(J: np.ndarray) -> np.ndarray:
    """||g_1 ^ ... ^ g_k|| = sqrt(det(J J^T)) for stacked gradient rows."""
    G = np.einsum("...ij,...kj->...ik", J, J)
    return np.sqrt(np.clip(np.linalg.det(G), 0.0, None))


@dataclass
class VarietySystem:
    polys: list
    seed: int = 0
    scale: float = 1.0          # typical coordinate size, used to scale tolerances
    name: str = ""

    def __post_init__(self):
        ns = {p.n for p in self.polys}
        if len(ns) != 1:
            raise ValueError("polynomials must share the ambient dimension")
        if not 1 <= len(self.polys) <= self.n:
            raise ValueError("need between 1 and n polynomials")

    @property
    def n(self) -> int:
        return self.polys[0].n

    @property
    def m(self) -> int:
        return self.n - len(self.polys)

    @property
    def degree_bound(self) -> int:
        return max(p.degree for p in self.polys)

    def values(self, x) -> np.ndarray:
        return np.stack([p(x) for p in self.polys], axis=-1)

    def jacobian(self, x) -> np.ndarray:
        return np.stack([p.gradient(x) for p in self.polys], axis=-2)

    def project(self, x, iters: int = 60):
        """Newton projection; returns (points, converged mask)."""
        z, _, ok = newton_project(self.polys, x, tol=1e-12, iters=iters, max_step=self.scale)
        return z, ok

    def sample(self, count: int, rng, center=None, radius: float | None = None,
               seeds: np.ndarray | None = None, check: bool = True) -> np.ndarray:
        """Seeded Newton-projection sampler with rejection of far or degenerate points."""
        radius = self.scale if radius is None else radius
        center = np.zeros(self.n) if center is None else np.asarray(center, float)
        if seeds is None:
            seeds = center + rng.uniform(-radius, radius, size=(count, self.n))
        z, ok = self.project(seeds)
        z = z[ok]
        if check and len(z):
            w = wedge_norm(self.jacobian(z))
            bad = w <= WEDGE_MIN
            if np.any(bad):
                raise DegeneratePoint(f"gradient wedge vanishes at sample {z[bad][0].tolist()}")
        return z

    def on_variety(self, z, tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(self.values(np.atleast_2d(z)))) < tol)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "m": self.m, "D_Z": self.degree_bound, "seed": self.seed,
                           "scale": self.scale, "name": self.name,
                           "polynomials": [p.to_dict() for p in self.polys]})

    @classmethod
    def from_json(cls, text: str) -> "VarietySystem":
        d = json.loads(text)
        return cls([PolynomialND.from_dict(p) for p in d["polynomials"]], d["seed"], d["scale"], d["name"])


# ------------------------------------------------------------ examples

def hyperplane(n: int, normal, offset: float = 0.0, scale: float = 1.0) -> VarietySystem:
    c = np.zeros((2,) * n)
    c[(0,) * n] = -offset
    for j, a in enumerate(normal):
        idx = [0] * n
        idx[j] = 1
        c[tuple(idx)] = a
    return VarietySystem([PolynomialND(c)], scale=scale, name="hyperplane")


def coordinate_plane(n: int, j: int, scale: float = 1.0) -> VarietySystem:
    e = np.zeros(n)
    e[j] = 1.0
    return hyperplane(n, e, 0.0, scale)


def sphere(n: int, radius: float, center=None) -> VarietySystem:
    center = np.zeros(n) if center is None else np.asarray(center, float)
    exps, vals = [], []
    const = float(center @ center) - radius ** 2
    exps.append([0] * n)
    vals.append(const)
    for j in range(n):
        e2 = [0] * n
        e2[j] = 2
        e1 = [0] * n
        e1[j] = 1
        exps += [e2, e1]
        vals += [1.0, -2 * center[j]]
    return VarietySystem([PolynomialND.from_terms(n, 2, exps, vals)], scale=radius, name="sphere")


def parabola_graph(R: float) -> VarietySystem:
    """{x_1 = x_2^2 / (16 R)} in the plane."""
    return VarietySystem([PolynomialND.from_terms(2, 2, [[1, 0], [0, 2]], [1.0, -1.0 / (16 * R)])],
                         scale=R, name="parabola")


def quadric(R: float) -> VarietySystem:
    """(x1/R)^2 + (x2/R)^2 - (x3/R)^2 - (x4/R)^2 = 1."""
    s = 1.0 / R ** 2
    exps = [[2, 0, 0, 0], [0, 2, 0, 0], [0, 0, 2, 0], [0, 0, 0, 2], [0, 0, 0, 0]]
    return VarietySystem([PolynomialND.from_terms(4, 2, exps, [s, s, -s, -s, -1.0])], scale=R,
                         name="quadric")


# ------------------------------------------------------------ tangent spaces

def tangent_space(Z: VarietySystem, z, tol: float = 1e-9) -> Subspace:
    z = np.asarray(z, dtype=float).reshape(1, -1)
    if np.max(np.abs(Z.values(z))) >= tol:
        raise NotOnVariety("point is not on the variety to tolerance")
    J = Z.jacobian(z)[0]
    if wedge_norm(J) <= WEDGE_MIN:
        raise DegeneratePoint("gradients are linearly dependent at this point")
    _, _, vt = np.linalg.svd(J)
    return Subspace(vt[J.shape[0]:].copy())


def tangent_angles(Z: VarietySystem, pts: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Angle between ``direction`` and T_zZ at each point (via the normal space)."""
    J = Z.jacobian(pts)                              # (N, k, n)
    q, _ = np.linalg.qr(np.swapaxes(J, -1, -2))      # normal space basis columns
    normal_part = np.linalg.norm(np.einsum("nij,i->nj", q, direction), axis=-1)
    return np.arcsin(np.clip(normal_part, 0.0, 1.0))


def generic_direction(Z: VarietySystem, pts: np.ndarray, rng, tries: int = 20) -> np.ndarray:
    """Random w with ||grad P_1 ^ ... ^ grad P_k ^ w|| above threshold on pts."""
    J = Z.jacobian(pts)
    for _ in range(tries):
        w = rng.normal(size=Z.n)
        w /= np.linalg.norm(w)
        Jw = np.concatenate([J, np.broadcast_to(w, (len(pts), 1, Z.n))], axis=1)
        if len(pts) == 0 or wedge_norm(Jw).min() > WEDGE_MIN:
            return w
    raise DegeneratePoint("no generic direction found")


# ------------------------------------------------------------ tangency

@dataclass(frozen=True)
class TangencyParams:
    R: float
    delta_m: float
    C_tan: float = 2.0
    angle_override: float | None = None

    @property
    def distance(self) -> float:
        return self.R ** (0.5 + self.delta_m)

    @property
    def angle(self) -> float:
        return self.angle_override if self.angle_override is not None else self.R ** (-0.5 + self.delta_m)


def _near_samples(Z: VarietySystem, t: Tube, spread: float, rng, count: int = 256,
                  region=None) -> tuple[np.ndarray, np.ndarray]:
    axis = t.axis_samples(64)
    if region is not None:
        c, rad = region
        axis = axis[np.linalg.norm(axis - c, axis=1) <= rad]
    if len(axis) == 0:
        return axis, np.zeros((0, t.n))
    seeds = np.concatenate([axis, axis[rng.integers(len(axis), size=count)]
                            + rng.uniform(-spread, spread, size=(count, t.n))])
    z, ok = Z.project(seeds)
    return axis, z[ok]


def is_tangent_tube(t: Tube, Z: VarietySystem, params: TangencyParams, rng=None,
                    region=None) -> tuple[bool, dict]:
    """(a) axis samples within C*R^(1/2+delta_m) of sampled Z; (b) sampled Z
    points near the tube make angle at most C*angle with G(theta)."""
    rng = np.random.default_rng(0) if rng is None else rng
    dist = params.C_tan * params.distance
    axis, z = _near_samples(Z, t, dist, rng, region=region)
    if len(axis) == 0:
        return False, {"reason": "tube misses the region"}
    if len(z) == 0:
        raise SamplerFailure("no variety samples near the tube")
    d_axis, _ = cKDTree(z).query(axis)
    far = np.nonzero(d_axis > dist)[0]
    if len(far):
        return False, {"reason": "distance", "sample": axis[far[0]].tolist(),
                       "distance": float(d_axis[far[0]]), "threshold": dist}
    near = (t.offset(z) <= t.radius + dist) & (np.linalg.norm(z, axis=1) <= t.ambient_R + dist)
    if region is not None:
        near &= np.linalg.norm(z - region[0], axis=1) <= region[1]
    zn = z[near]
    if len(zn):
        ang = tangent_angles(Z, zn, t.direction())
        bad = np.nonzero(ang > params.C_tan * params.angle)[0]
        if len(bad):
            return False, {"reason": "angle", "sample": zn[bad[0]].tolist(),
                           "angle": float(ang[bad[0]]), "threshold": params.C_tan * params.angle}
    return True, {"reason": "tangent", "max_axis_distance": float(d_axis.max()),
                  "checked_points": int(len(zn))}


def classify_packets(tubes: list[Tube], Y: VarietySystem, ball_center, ball_radius: float,
                     params: TangencyParams, rng=None) -> tuple[list, list]:
    """Split tubes into those tangent to Y inside 2B and the rest."""
    tangent, transverse = [], []
    region = (np.asarray(ball_center, float), 2 * ball_radius)
    for i, t in enumerate(tubes):
        ok, _ = is_tangent_tube(t, Y, params, np.random.default_rng(i) if rng is None else rng, region)
        (tangent if ok else transverse).append(i)
    return tangent, transverse


# ------------------------------------------------------------ transverse cover

COVER_CONSTANT = 10.0
COVER_RADIUS_FACTOR = 4.0


def transverse_cover(Z: VarietySystem, t: Tube, alpha: float, rng, samples: int = 4000) -> dict:
    if not 0 < alpha < math.pi / 2:
        raise ValueError("alpha must lie in (0, pi/2)")
    base = t.cross_section_samples(128, radial=3, angular=8)
    if len(base) == 0:
        raise SamplerFailure("tube misses the ball")
    seeds = base[rng.integers(len(base), size=samples)] + rng.normal(scale=t.radius, size=(samples, t.n))
    z, ok = Z.project(seeds)
    z = z[ok]
    z = z[t.contains(z)]
    if len(z):
        z = z[tangent_angles(Z, z, t.direction()) > alpha]
    rad = COVER_RADIUS_FACTOR * t.radius / alpha
    centers = []
    remaining = z
    while len(remaining):
        c = remaining[0]
        centers.append(c)
        remaining = remaining[np.linalg.norm(remaining - c, axis=1) > rad]
    bound = COVER_CONSTANT * Z.degree_bound ** Z.n
    covered = all(np.min(np.linalg.norm(np.array(centers) - p, axis=1)) <= rad for p in z) if len(z) else True
    return {"balls": np.array(centers).reshape(-1, Z.n), "radius": rad, "count": len(centers),
            "bound": bound, "within_bound": len(centers) <= bound, "covers_samples": covered,
            "samples": int(len(z))}


# ------------------------------------------------------------ Theta(Z)

def _distance_to(Z: VarietySystem, pts: np.ndarray) -> np.ndarray:
    z, ok = Z.project(pts)
    d = np.linalg.norm(z - pts, axis=1)
    d[~ok] = np.inf
    return d


def theta_count(Z: VarietySystem, R: float, delta: float, axis_samples: int = 17,
                budget: int = 10 ** 7) -> tuple[int, list]:
    """Caps admitting a full-length tube inside N_{R^(1/2+delta)}(Z)."""
    n = Z.n
    d = n - 1
    r = R ** -0.5
    caps = cap_grid(d, r, r)
    lv = R ** 0.5
    m = int(math.floor(2 * R / lv))
    grid = np.arange(-m, m + 1) * lv
    V = np.stack(np.meshgrid(*([grid] * d), indexing="ij"), -1).reshape(-1, d)
    thick = R ** (0.5 + delta)
    work = 0
    found = []
    for cap in caps:
        w = cap.center_array
        a = 1 + 4 * w @ w
        b = 4 * V @ w
        c = np.sum(V * V, axis=1) - R ** 2
        disc = b * b - 4 * a * c
        ok = disc > 0
        half = np.sqrt(np.where(ok, disc, 0)) / (2 * a)
        ok &= 2 * half * math.sqrt(a) >= R          # full-length tubes only
        if not np.any(ok):
            continue
        mid_t = -b[ok] / (2 * a)
        mids = np.concatenate([-2 * mid_t[:, None] * w - V[ok], mid_t[:, None]], axis=1)
        keep = _distance_to(Z, mids) <= 2 * thick
        Vk, mk, hk = V[ok][keep], mid_t[keep], half[ok][keep]
        work += len(Vk) * axis_samples
        if work > budget:
            raise SearchBudgetExceeded("lattice search exceeded budget")
        hit = False
        for v, tm, hh in zip(Vk, mk, hk):
            s = np.linspace(tm - hh, tm + hh, axis_samples)
            pts = np.concatenate([-2 * s[:, None] * w - v, s[:, None]], axis=1)
            if np.all(_distance_to(Z, pts) <= thick):
                hit = True
                break
        if hit:
            found.append(cap)
    return len(found), found


# ------------------------------------------------------------ uncertainty checks

def concentration_check(r: float, rho: float, trials: int, dim: int, rng,
                        modes_per_side: int = 4) -> dict:
    """max over trials and x0 of int_{B(x0,rho)}|G|^2 / ((rho r)^d int |G|^2) for random
    G with Fourier support in B(xi0, r), on a periodic box."""
    if rho > 1 / r:
        raise ValueError("need rho <= 1/r")
    L = 2 * math.pi * modes_per_side / r           # box side; lattice spacing r / modes_per_side
    dx = min(rho / 8, 1 / (8 * r))
    N = 1 << int(math.ceil(math.log2(L / dx)))
    dx = L / N
    k = np.fft.fftfreq(N, dx) * 2 * math.pi
    K = np.stack(np.meshgrid(*([k] * dim), indexing="ij"), -1)
    rad = np.arange(-math.ceil(rho / dx), math.ceil(rho / dx) + 1) * dx
    disk = (np.linalg.norm(np.stack(np.meshgrid(*([rad] * dim), indexing="ij"), -1), axis=-1)
            <= rho).astype(float)
    worst = 0.0
    for _ in range(trials):
        xi0 = rng.uniform(-5 * r, 5 * r, size=dim)
        support = np.linalg.norm(K - xi0, axis=-1) <= r
        coef = np.where(support, rng.normal(size=support.shape) + 1j * rng.normal(size=support.shape), 0)
        G = np.fft.ifftn(coef) * N ** dim
        dens = np.abs(G) ** 2
        total = dens.sum() * dx ** dim
        local = fftconvolve(np.pad(dens, [(len(rad),) * 2] * dim, mode="wrap"), disk, mode="same")
        local = local[tuple(slice(len(rad), -len(rad)) for _ in range(dim))] * dx ** dim
        worst = max(worst, float(local.max() / ((rho * r) ** dim * total)))
    return {"r": r, "rho": rho, "dim": dim, "trials": trials, "constant": worst}


def tangent_packet_density(R: float, delta_m: float, rng, center_v: float = 0.0) -> DensityFunction:
    """Random-sign sum of canonical packets tangent to {x_1 = 0} in the plane."""
    from .wavepackets import canonical_packet
    h = grid_spacing(R)
    r = R ** -0.5
    f = DensityFunction.on_ball(2, h)
    wmax = R ** (-0.5 + delta_m) / 2
    vmax = R ** (0.5 + delta_m)
    omegas = np.arange(-math.floor(wmax / r), math.floor(wmax / r) + 1) * r
    vs = center_v + np.arange(-math.floor(vmax / R ** 0.5), math.floor(vmax / R ** 0.5) + 1) * R ** 0.5
    vals = np.zeros(f.shape, dtype=complex)
    for w0 in omegas:
        for v in vs:
            vals += rng.choice([-1.0, 1.0]) * canonical_packet(f, (w0,), r, (v,))
    return DensityFunction(2, h, f.lo, vals, 1.0, f.mask)


def transverse_equidistribution_check(g: DensityFunction, R: float, rho_list, delta_m: float,
                                      center=(0.0, 0.0), spacing: float = 1.0) -> dict:
    """n = 2, Z = {x_1 = 0}: mass of Eg in B cap N_{rho^(1/2+delta_m)}(Z) over mass in 2B."""
    if g.norm() == 0:
        raise EmptyPacketSet("no tangent packets")
    center = np.asarray(center, float)
    rb = R ** (0.5 + delta_m)
    ax = np.arange(-2 * rb, 2 * rb + 1e-9, spacing) + spacing / 2
    x1 = center[0] + ax
    x2 = center[1] + ax
    vals = np.abs(evaluate_grid(g, [x1], x2, R)) ** 2       # (len(x2), len(x1))
    X1, X2 = np.meshgrid(x1, x2)
    dist = np.hypot(X1 - center[0], X2 - center[1])
    two_b = vals[dist <= 2 * rb].sum()
    rows = []
    for rho in rho_list:
        sel = (dist <= rb) & (np.abs(X1) <= rho ** (0.5 + delta_m))
        ratio = vals[sel].sum() / two_b
        pred = (R / rho) ** -0.5
        rows.append({"rho": rho, "ratio": float(ratio), "normalized": float(ratio / pred)})
    x = np.log([R / row["rho"] for row in rows])
    y = np.log([row["ratio"] for row in rows])
    slope = float(np.polyfit(x, y, 1)[0]) if len(rows) >= 2 else float("nan")
    return {"rows": rows, "slope": slope, "target": -0.5, "ball_radius": rb}


# ------------------------------------------------------------ Bezout

def intersection_points(Z: VarietySystem, rng, seeds: int = 2000, box: float = 3.0,
                        merge: float = 1e-6) -> np.ndarray:
    """Sampled isolated points of a zero-dimensional system (n equations in R^n)."""
    z, ok = Z.project(rng.uniform(-box, box, size=(seeds, Z.n)), iters=100)
    z = z[ok]
    out = []
    for p in z:
        if all(np.linalg.norm(p - q) > merge for q in out):
            out.append(p)
    return np.array(out).reshape(-1, Z.n)


def random_conic(rng) -> PolynomialND:
    exps = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
    return PolynomialND.from_terms(2, 2, exps, rng.normal(size=6))
