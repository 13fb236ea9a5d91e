"""k-broad quantities mu_{Ef}(B_{K^2}) and the BL^p_{k,A} quasi-norm.

Coarse caps tau are the cubes of side 2/K on the lattice -1 + (2/K) Z^(n-1)
that meet the unit ball; f_tau = f * indicator(tau) with half-open cells so
the pieces sum to f exactly. Balls B_{K^2} are cubes of side K^2 centred on
K^2 Z^n; integrals are unit-spacing midpoint sums over B_R.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import CombinatorialBlowup, ExponentRelationViolated
from .extension import DensityFunction, check_resolution, evaluate_grid
from .geometry import Cap, Subspace, as_fraction, direction_of


@dataclass(frozen=True)
class BroadParams:
    k: int
    A: int
    K: float
    p: float

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if self.A < 0:
            raise ValueError("A must be nonnegative")
        if not self.K > 1:
            raise ValueError("K must exceed 1")
        if not float(self.p) >= 1:
            raise ValueError("p must be at least 1")


def coarse_caps(n: int, K: float) -> tuple[list[Cap], np.ndarray]:
    """Cube caps of side 2/K meeting the unit ball and their lower corners."""
    d = n - 1
    m = int(round(K))
    lows = -1.0 + 2.0 * np.arange(m) / K
    corners = np.stack(np.meshgrid(*([lows] * d), indexing="ij"), -1).reshape(-1, d)
    centers = corners + 1.0 / K
    nearest = np.clip(0.0, corners, corners + 2.0 / K)
    keep = np.linalg.norm(nearest, axis=1) < 1.0
    caps = []
    for c in centers[keep]:
        nc = np.linalg.norm(c)
        c = c if nc <= 1 else c / nc  # direction proxy for boundary cubes
        caps.append(Cap(tuple(c), min(1.0 / K, 1.0), "coarse"))
    return caps, corners[keep]


def cap_labels(f: DensityFunction, K: float, corners: np.ndarray) -> np.ndarray:
    """Index of the cap containing each grid node (-1 outside every cap)."""
    idx = [np.clip(np.floor((ax + 1.0) * K / 2.0 + 1e-9).astype(int), 0, int(round(K)) - 1)
           for ax in f.axes()]
    m = int(round(K))
    table = np.full((m,) * f.d, -1, dtype=int)
    key = np.round((corners + 1.0) * K / 2.0).astype(int)
    table[tuple(key.T)] = np.arange(len(corners))
    return table[np.ix_(*idx)]


@dataclass
class BallCover:
    centers: np.ndarray  # (B, n)
    side: float

    def __len__(self):
        return len(self.centers)


@dataclass
class CoarseFieldBundle:
    """Complex Ef_tau on unit-spaced midpoints of B_R, plus ball labels."""
    R: float
    K: float
    caps: list
    directions: np.ndarray            # (T, n)
    points: np.ndarray = field(repr=False)   # (P, n)
    fields: np.ndarray = field(repr=False)   # (T, P) complex
    ball_index: np.ndarray = field(repr=False)  # (P,)
    cover: BallCover = None

    def __add__(self, other: "CoarseFieldBundle") -> "CoarseFieldBundle":
        if self.fields.shape != other.fields.shape:
            raise ValueError("bundles computed on different grids")
        return CoarseFieldBundle(self.R, self.K, self.caps, self.directions, self.points,
                                 self.fields + other.fields, self.ball_index, self.cover)

    def scaled(self, c) -> "CoarseFieldBundle":
        return CoarseFieldBundle(self.R, self.K, self.caps, self.directions, self.points,
                                 self.fields * c, self.ball_index, self.cover)

    def integrals(self, p: float) -> np.ndarray:
        """(T, B) array of int_{B_{K^2}} |Ef_tau|^p (unit cells)."""
        powered = np.abs(self.fields) ** float(p)
        out = np.zeros((len(self.caps), len(self.cover)))
        for t in range(len(self.caps)):
            out[t] = np.bincount(self.ball_index, weights=powered[t], minlength=len(self.cover))
        return out

    def total_field(self) -> np.ndarray:
        return self.fields.sum(axis=0)


def ball_grid(n: int, R: float, spacing: float = 1.0) -> np.ndarray:
    m = int(round(2 * R / spacing))
    axis = -R + spacing * (np.arange(m) + 0.5)
    return axis


def build_bundle(f: DensityFunction, R: float, K: float, spacing: float = 1.0) -> CoarseFieldBundle:
    check_resolution(f.h, R)
    caps, corners = coarse_caps(f.n, K)
    labels = cap_labels(f, K, corners)
    axis = ball_grid(f.n, R, spacing)
    mesh = np.meshgrid(axis, *([axis] * (f.n - 1)), indexing="ij")  # x_n first
    pts = np.stack(mesh[1:] + mesh[:1], -1).reshape(-1, f.n)
    inside = np.linalg.norm(pts, axis=1) <= R
    pts = pts[inside]
    side = K * K
    cells = np.floor(pts / side + 0.5).astype(int)
    uniq, ball_index = np.unique(cells, axis=0, return_inverse=True)
    cover = BallCover(uniq * side, side)
    fields = np.zeros((len(caps), len(pts)), dtype=complex)
    for t in range(len(caps)):
        piece = DensityFunction(f.n, f.h, f.lo, np.where(labels == t, f.values, 0), f.bound)
        if not np.any(piece.values):
            continue
        vals = evaluate_grid(piece, [axis] * (f.n - 1), axis, R)
        fields[t] = vals.reshape(-1)[inside]
    dirs = np.array([c.direction() for c in caps])
    return CoarseFieldBundle(R, K, caps, dirs, pts, fields, ball_index.ravel(), cover)


# ----------------------------------------------------------- candidates

def _dedupe(subspaces: list[Subspace], tol: float = 1e-6) -> list[Subspace]:
    out, projs = [], []
    for V in subspaces:
        P = V.basis.T @ V.basis
        if any(np.linalg.norm(P - Q, 2) < tol for Q in projs):
            continue
        out.append(V)
        projs.append(P)
    return out


def haar_subspaces(n: int, dim: int, m: int, rng) -> list[Subspace]:
    out = []
    for _ in range(m):
        q, _ = np.linalg.qr(rng.normal(size=(n, dim)))
        out.append(Subspace(q.T.copy()))
    return out


def candidate_subspaces(directions: np.ndarray, k: int, strategy: str = "caps", rng=None,
                        limit: int = 10 ** 6) -> list[Subspace]:
    """Finite family of (k-1)-subspaces standing in for the Grassmannian."""
    directions = np.asarray(directions, dtype=float)
    n = directions.shape[1]
    dim = k - 1
    if not 1 <= dim <= n - 1:
        raise ValueError("need 1 <= k-1 <= n-1")
    caps_family = []
    if strategy == "caps" or dim == 1:
        count = math.comb(len(directions), dim)
        if strategy == "caps" and count > limit:
            raise CombinatorialBlowup(f"C({len(directions)},{dim}) = {count} exceeds {limit}")
        if count <= limit:
            for combo in itertools.combinations(range(len(directions)), dim):
                vecs = directions[list(combo)]
                if np.linalg.matrix_rank(vecs, tol=1e-9) == dim:
                    caps_family.append(Subspace.span(vecs))
    if strategy == "caps":
        return _dedupe(caps_family)
    if strategy.startswith("random"):
        m = int(strategy[strategy.index("(") + 1:strategy.index(")")])
        rng = np.random.default_rng(0) if rng is None else rng
        return _dedupe(caps_family + haar_subspaces(n, dim, m, rng))
    raise ValueError(f"unknown strategy {strategy!r}")


def near_matrix(directions: np.ndarray, candidates: list[Subspace], K: float) -> np.ndarray:
    """near[c, t]: angle between G(tau_t) and candidate c is at most 1/K."""
    out = np.zeros((len(candidates), len(directions)), dtype=bool)
    cos_lim = math.cos(1.0 / K)
    for i, V in enumerate(candidates):
        proj = np.linalg.norm(directions @ V.basis.T, axis=1)
        out[i] = np.clip(proj, -1, 1) >= cos_lim - 1e-15
    return out


# ----------------------------------------------------------- min-max

@dataclass
class MuResult:
    values: np.ndarray        # (B,)
    choices: list             # per ball: chosen candidate tuple (or ())
    excluded: list            # per ball: excluded cap indices


def mu_broad_table(integrals: np.ndarray, near: np.ndarray, A: int) -> MuResult:
    """Exact min over A-tuples of candidates of the max over non-excluded caps.

    integrals: (T, B); near: (C, T). Ties resolve to the lexicographically
    first tuple."""
    T, B = integrals.shape
    if A == 0 or T == 0:
        vals = integrals.max(axis=0, initial=0.0) if T else np.zeros(B)
        return MuResult(vals, [()] * B, [[] for _ in range(B)])
    C = near.shape[0]
    if C == 0:
        raise ValueError("candidate family must be nonempty when A >= 1")
    tuples = list(itertools.combinations_with_replacement(range(C), A))
    excl = np.zeros((len(tuples), T), dtype=bool)
    for j, tup in enumerate(tuples):
        excl[j] = np.any(near[list(tup)], axis=0)
    best = np.full(B, np.inf)
    arg = np.zeros(B, dtype=int)
    for j in range(len(tuples)):
        masked = np.where(excl[j][:, None], 0.0, integrals).max(axis=0)
        better = masked < best
        best[better] = masked[better]
        arg[better] = j
    choices = [tuples[a] for a in arg]
    excluded = [list(np.nonzero(excl[a])[0]) for a in arg]
    return MuResult(best, choices, excluded)


def mu_broad(per_cap: np.ndarray, directions: np.ndarray, K: float, A: int,
             candidates: list[Subspace]) -> float:
    """mu for a single ball from its per-cap integrals."""
    near = near_matrix(directions, candidates, K) if candidates else np.zeros((0, len(per_cap)), bool)
    return float(mu_broad_table(np.asarray(per_cap, float)[:, None], near, A).values[0])


def bl_norm_bundle(bundle: CoarseFieldBundle, params: BroadParams,
                   candidates: list[Subspace], return_table: bool = False):
    I = bundle.integrals(params.p)
    near = near_matrix(bundle.directions, candidates, params.K) if candidates else \
        np.zeros((0, len(bundle.caps)), bool)
    res = mu_broad_table(I, near, params.A)
    val = float(np.sum(res.values)) ** (1.0 / float(params.p))
    return (val, res) if return_table else val


def bl_norm(f: DensityFunction, R: float, params: BroadParams, candidates=None,
            strategy: str = "caps", spacing: float = 1.0):
    bundle = build_bundle(f, R, params.K, spacing)
    if candidates is None:
        candidates = candidate_subspaces(bundle.directions, params.k, strategy) if params.A else []
    return bl_norm_bundle(bundle, params, candidates)


def lp_norm(bundle: CoarseFieldBundle, p: float) -> float:
    return float(np.sum(np.abs(bundle.total_field()) ** float(p)) ** (1.0 / float(p)))


def mu_csv(bundle: CoarseFieldBundle, res: MuResult, candidates: list[Subspace]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ball_center", "chosen_subspaces", "excluded_caps", "mu"])
    for b, c in enumerate(bundle.cover.centers):
        bases = [candidates[i].basis.round(12).tolist() for i in res.choices[b]]
        w.writerow([" ".join(f"{x:g}" for x in c), repr(bases), " ".join(map(str, res.excluded[b])),
                    repr(float(res.values[b]))])
    return buf.getvalue()


# ----------------------------------------------------------- verifications

def triangle_constant(p: float) -> float:
    return 2.0 ** (1.0 / float(p)) * 2.0


def verify_triangle(g_bundle: CoarseFieldBundle, h_bundle: CoarseFieldBundle, params: BroadParams,
                    candidates: list[Subspace], rtol: float = 1e-12) -> dict:
    if params.A % 2:
        raise ValueError("A must be even")
    half = BroadParams(params.k, params.A // 2, params.K, params.p)
    lhs = bl_norm_bundle(g_bundle + h_bundle, params, candidates)
    rhs = bl_norm_bundle(g_bundle, half, candidates) + bl_norm_bundle(h_bundle, half, candidates)
    c = triangle_constant(params.p)
    return {"lhs": lhs, "rhs": rhs, "constant": c, "ratio": lhs / rhs if rhs > 0 else 0.0,
            "violated": bool(lhs > c * rhs * (1 + rtol) + 1e-300)}


def check_holder_exponents(p, p1, p2, a1, a2):
    p, p1, p2, a1, a2 = (as_fraction(x) for x in (p, p1, p2, a1, a2))
    if a1 + a2 != 1 or a1 < 0 or a2 < 0 or Fraction(1) / p != a1 / p1 + a2 / p2:
        raise ExponentRelationViolated(f"need a1+a2=1 and 1/p = a1/p1 + a2/p2 (got {p},{p1},{p2},{a1},{a2})")
    return p, p1, p2, a1, a2


def verify_holder(bundle: CoarseFieldBundle, k: int, K: float, A1: int, A2: int, p, p1, p2, a1, a2,
                  candidates: list[Subspace], rtol: float = 1e-12) -> dict:
    p, p1, p2, a1, a2 = check_holder_exponents(p, p1, p2, a1, a2)
    lhs = bl_norm_bundle(bundle, BroadParams(k, A1 + A2, K, float(p)), candidates)
    n1 = bl_norm_bundle(bundle, BroadParams(k, A1, K, float(p1)), candidates)
    n2 = bl_norm_bundle(bundle, BroadParams(k, A2, K, float(p2)), candidates)
    rhs = n1 ** float(a1) * n2 ** float(a2)
    return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0,
            "violated": bool(lhs > rhs * (1 + rtol) + 1e-300)}


def a_monotone(bundle: CoarseFieldBundle, k: int, K: float, p: float, candidates, A_max: int = 3) -> bool:
    vals = [bl_norm_bundle(bundle, BroadParams(k, A, K, p), candidates) for A in range(A_max + 1)]
    return all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


def narrow_count(n: int, k: int, K: float, rng, n_random: int = 200, n_cap_spans: int = 200) -> dict:
    """Max number of caps within angle 1/K of a (k-1)-subspace, over random and
    cap-spanned subspaces, and the ratio to K^(k-2)."""
    caps, _ = coarse_caps(n, K)
    dirs = np.array([c.direction() for c in caps])
    dim = k - 1
    fam = haar_subspaces(n, dim, n_random, rng)
    for _ in range(n_cap_spans):
        pick = rng.choice(len(dirs), size=dim, replace=False)
        if np.linalg.matrix_rank(dirs[pick], tol=1e-9) == dim:
            fam.append(Subspace.span(dirs[pick]))
    near = near_matrix(dirs, fam, K)
    count = int(near.sum(axis=1).max(initial=0))
    return {"n": n, "k": k, "K": K, "caps": len(caps), "max_count": count,
            "constant": count / K ** (k - 2)}


def cap_direction(center) -> np.ndarray:
    return direction_of(np.asarray(center, float))
