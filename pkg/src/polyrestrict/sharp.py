"""Extremal examples: the random-sign slab and the line family of a quadric in R^4."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .broad import BroadParams, bl_norm_bundle, build_bundle, candidate_subspaces
from .errors import NotOnQuadric, ScaleInfeasible
from .extension import DensityFunction, evaluate_grid, grid_spacing, plancherel_constant
from .geometry import Cap, Subspace, Tube, as_fraction
from .wavepackets import canonical_packet

MAX_DENSITY_NODES = 1 << 24


def predicted_slab_exponent(n: int, k: int, p) -> Fraction:
    """1/2 + (1/p - 1/2)(k + (n-k)/2)."""
    p = as_fraction(p)
    if p < 2:
        raise ValueError("p must be at least 2")
    if not 2 <= k <= n:
        raise ValueError("need 2 <= k <= n")
    return Fraction(1, 2) + (1 / p - Fraction(1, 2)) * (k + Fraction(n - k, 2))


@dataclass
class SlabExample:
    n: int
    k: int
    R: float
    seed: int
    plane: Subspace
    packets: list           # (cap center, v, sign)
    density: DensityFunction = field(repr=False)
    delta: float = 0.1

    def tubes(self) -> list[Tube]:
        r = self.R ** -0.5
        return [Tube.from_packet(Cap(c, r), v, self.R, self.delta) for c, v, _ in self.packets]


def build_slab_example(n: int, k: int, R: float, seed: int, delta: float = 0.1) -> SlabExample:
    """Random-sign packets along the k-plane spanned by e_1..e_{k-1} and e_n."""
    if not 2 <= k <= n:
        raise ValueError("need 2 <= k <= n")
    h = grid_spacing(R)
    if (2 / h + 1) ** (n - 1) > MAX_DENSITY_NODES:
        raise ScaleInfeasible(f"frequency grid too large for n={n}, R={R}")
    rng = np.random.default_rng(seed)
    r = R ** -0.5
    d = n - 1
    free = k - 1  # frequency coordinates allowed to vary
    m = int(math.floor((1 - r) / r))
    ax = np.arange(-m, m + 1) * r
    centers = [np.concatenate([np.array(c), np.zeros(d - free)])
               for c in itertools.product(ax, repeat=free)]
    centers = [c for c in centers if np.linalg.norm(c) <= 1 - r]
    lv = R ** 0.5
    mv = int(math.floor(2 * R / lv))
    vax = np.arange(-mv, mv + 1) * lv
    vs = [np.concatenate([np.array(v), np.zeros(d - free)]) for v in itertools.product(vax, repeat=free)]
    f = DensityFunction.on_ball(n, h)
    vals = np.zeros(f.shape, dtype=complex)
    packets = []
    for c in centers:
        cap = Cap(tuple(c), r)
        for v in vs:
            t = Tube.from_packet(cap, tuple(v), R, delta)
            iv = t.axis_interval()
            if iv is None:
                continue
            mid = t.axis_point([(iv[0] + iv[1]) / 2])[0]
            if np.linalg.norm(mid) > R:
                continue
            sgn = float(rng.choice([-1.0, 1.0]))
            vals += sgn * canonical_packet(f, c, r, v)
            packets.append((tuple(c), tuple(v), sgn))
    if not packets:
        raise ScaleInfeasible("no packets fit in the slab")
    dens = DensityFunction(n, h, f.lo, vals, 1.0, f.mask)
    dens = dens.scaled(1.0 / dens.norm())
    eye = np.eye(n)
    plane = Subspace.span(np.vstack([eye[:free], eye[-1:]]))
    return SlabExample(n, k, R, seed, plane, packets, dens, delta)


def slab_field_stats(ex: SlabExample, spacing: float = 1.0) -> dict:
    """Coefficient of variation of |Ef| on the slab and the normalized L2 mass on B_R."""
    R, n = ex.R, ex.n
    ax = np.arange(-R, R, spacing) + spacing / 2
    if n != 2:
        raise ValueError("field statistics are implemented for n = 2")
    vals = np.abs(evaluate_grid(ex.density, [ax], ax, R))
    X1, X2 = np.meshgrid(ax, ax)
    inside = np.hypot(X1, X2) <= R
    thick = R ** (0.5 + ex.delta)
    if ex.k < n:
        inside &= np.abs(X1) <= thick
    a = vals[inside]
    l2 = float(np.sum(vals[np.hypot(X1, X2) <= R] ** 2) * spacing ** n)
    return {"cv": float(a.std() / a.mean()),
            "l2_ratio": l2 / (plancherel_constant(n) * R * ex.density.norm() ** 2),
            "l2": math.sqrt(l2)}


@dataclass
class ScalingRun:
    R_list: list
    ratios: list
    slope: float
    intercept: float
    residual: float
    label: str = ""
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R", "ratio", "log_R", "log_ratio"])
        for R, q in zip(self.R_list, self.ratios):
            w.writerow([R, repr(q), repr(math.log(R)), repr(math.log(q))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"label": self.label, "slope": self.slope, "intercept": self.intercept,
                "residual": self.residual, "R": list(self.R_list), "ratios": list(self.ratios), **self.meta}


def fit_slope(R_list, ratios) -> tuple[float, float, float]:
    x = np.log(np.asarray(R_list, float))
    y = np.log(np.asarray(ratios, float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), float(coef[1]), resid


def scaling_experiment(generator, R_list, measure, label: str = "") -> ScalingRun:
    """generator(R) -> object; measure(obj, R) -> positive ratio. Fits log-log slope."""
    R_list = list(R_list)
    if len(R_list) < 3:
        raise ValueError("need at least three R values")
    ratios = [float(measure(generator(R), R)) for R in R_list]
    slope, icpt, res = fit_slope(R_list, ratios)
    return ScalingRun(R_list, ratios, slope, icpt, res, label)


def slab_scaling(p_list, R_list, K: float = 4, A: int = 0, seed: int = 0, k: int = 2, n: int = 2,
                 strategy: str = "caps") -> dict:
    """One field computation per R, shared by every p. Returns {p: ScalingRun}."""
    ratios = {p: [] for p in p_list}
    for R in R_list:
        ex = build_slab_example(n, k, R, seed)
        bundle = build_bundle(ex.density, R, K)
        cands = candidate_subspaces(bundle.directions, k, strategy) if A else []
        for p in p_list:
            val = bl_norm_bundle(bundle, BroadParams(k, A, K, float(p)), cands)
            ratios[p].append(val / ex.density.norm())
    out = {}
    for p in p_list:
        s, c, r = fit_slope(R_list, ratios[p])
        out[p] = ScalingRun(list(R_list), ratios[p], s, c, r, f"slab n={n} k={k} p={p} A={A} K={K}",
                            {"predicted": float(predicted_slab_exponent(n, k, as_fraction(p))),
                             "K": K, "A": A, "candidate_strategy": strategy})
    return out


# ------------------------------------------------------------ quadric in R^4

QUADRIC_SIGNATURE = np.array([1.0, 1.0, -1.0, -1.0])


def quadric_value(x, R: float) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, float))
    return (x * x) @ QUADRIC_SIGNATURE / R ** 2


@dataclass
class LineFamily:
    z: np.ndarray
    u: np.ndarray
    w1: np.ndarray
    w2: np.ndarray

    def direction(self, phi) -> np.ndarray:
        phi = np.atleast_1d(phi)
        d = self.u[None] + np.cos(phi)[:, None] * self.w1[None] + np.sin(phi)[:, None] * self.w2[None]
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def points(self, phi: float, t) -> np.ndarray:
        return self.z[None] + np.atleast_1d(t)[:, None] * self.direction(phi)


def quadric_line_family(R: float, z) -> LineFamily:
    """Lines {z + t d(phi)} lying in the quadric through z."""
    z = np.asarray(z, float)
    if abs(quadric_value(z, R)[0] - 1.0) > 1e-9:
        raise NotOnQuadric("point does not satisfy the quadric equation")
    M = np.diag(QUADRIC_SIGNATURE) / R ** 2
    # directions B-orthogonal to z, then diagonalize the form on that 3-space
    _, _, vt = np.linalg.svd((M @ z)[None, :])
    W = vt[1:].T
    lam, V = np.linalg.eigh(W.T @ M @ W)
    pos = np.nonzero(lam > 0)[0]
    neg = np.nonzero(lam < 0)[0]
    if len(pos) != 1 or len(neg) != 2:
        raise NotOnQuadric("unexpected signature on the tangent space")
    u = W @ V[:, pos[0]] / math.sqrt(lam[pos[0]])
    w1 = W @ V[:, neg[0]] / math.sqrt(-lam[neg[0]])
    w2 = W @ V[:, neg[1]] / math.sqrt(-lam[neg[1]])
    return LineFamily(z, u, w1, w2)


def line_residual(fam: LineFamily, R: float, phi: float, t_values) -> float:
    pts = fam.points(phi, t_values)
    return float(np.max(np.abs(quadric_value(pts, R) - 1.0)))


def quadric_point(R: float, rng) -> np.ndarray:
    """Random point on the quadric: (R cosh s cos a, R cosh s sin a, R sinh s cos b, R sinh s sin b)."""
    s = rng.uniform(-1, 1)
    a, b = rng.uniform(0, 2 * math.pi, 2)
    return R * np.array([math.cosh(s) * math.cos(a), math.cosh(s) * math.sin(a),
                         math.sinh(s) * math.cos(b), math.sinh(s) * math.sin(b)])


def plane_fractions(directions: np.ndarray, K: float) -> tuple[float, tuple]:
    """Max over 2-planes spanned by pairs of directions of the fraction of
    directions within angle 1/K of the plane."""
    dirs = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    cos_lim = math.cos(1.0 / K)
    best, arg = 0.0, ()
    for i, j in itertools.combinations(range(len(dirs)), 2):
        if abs(dirs[i] @ dirs[j]) > 1 - 1e-12:
            continue
        q, _ = np.linalg.qr(np.vstack([dirs[i], dirs[j]]).T)
        frac = float(np.mean(np.linalg.norm(dirs @ q, axis=1) >= cos_lim - 1e-15))
        if frac > best:
            best, arg = frac, (i, j)
    return best, arg


def quadric_broadness_probe(R: float, points: int = 4, directions: int = 64, K: float = 8,
                            rng=None) -> dict:
    rng = np.random.default_rng(0) if rng is None else rng
    zs = [np.array([R, 0.0, 0.0, 0.0])] + [quadric_point(R, rng) for _ in range(points - 1)]
    phis = np.linspace(0, 2 * math.pi, directions, endpoint=False)
    rows = []
    for z in zs:
        fam = quadric_line_family(R, z)
        frac, pair = plane_fractions(fam.direction(phis), K)
        rows.append({"z": z.tolist(), "max_fraction": frac, "plane_pair": list(pair)})
    worst = max(r["max_fraction"] for r in rows)
    return {"K": K, "rows": rows, "max_fraction": worst, "broad": worst <= 0.5}


def collapsed_cone_control(directions: int = 64, K: float = 8) -> dict:
    """Negative control: directions all inside one 2-plane."""
    phis = np.linspace(0, 2 * math.pi, directions, endpoint=False)
    dirs = np.stack([np.zeros_like(phis), np.cos(phis), np.sin(phis), np.zeros_like(phis)], 1)
    frac, _ = plane_fractions(dirs, K)
    return {"max_fraction": frac, "broad": frac <= 0.5}


def run_to_json(run: ScalingRun) -> str:
    return json.dumps(run.summary(), indent=1)
