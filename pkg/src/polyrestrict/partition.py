"""Polynomial partitioning of discrete measures.

Each round bisects every current sign class at once with one polynomial found
in the lifted (Veronese) space. The search minimizes the worst relative
discrepancy |w(P>0) - w(P<0)| / w(piece): a smooth tanh surrogate is solved
by least squares with annealed sharpness, then refined by a seeded local
search on the exact discrepancy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import BisectFailed, DegenerateAfterPerturbation
from .geometry import Tube
from .polynomial import PolynomialND, monomial_exponents, monomial_matrix, newton_project

EPS_BISECT = 0.02
WALL = "WALL"


@dataclass
class WeightedPoints:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if len(self.points) != len(self.weights):
            raise ValueError("one weight per point required")
        if np.any(self.weights <= 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be positive and finite")

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return len(self.weights)


def ball_masses(points: np.ndarray, values: np.ndarray, p: float, side: float) -> WeightedPoints:
    """Collapse |Ef|^p samples into one weighted point per cube of the given side."""
    cells = np.floor(np.asarray(points) / side + 0.5).astype(int)
    uniq, inv = np.unique(cells, axis=0, return_inverse=True)
    mass = np.bincount(inv.ravel(), weights=np.abs(values).ravel() ** p, minlength=len(uniq))
    keep = mass > 0
    return WeightedPoints(uniq[keep] * side, mass[keep])


def minimal_degree(n_free: int, pieces: int) -> int:
    """Smallest d whose non-constant monomial count is at least the piece count."""
    d = 1
    while math.comb(n_free + d, n_free) - 1 < pieces:
        d += 1
    return d


def discrepancies(values: np.ndarray, labels: np.ndarray, weights: np.ndarray, n_pieces: int) -> np.ndarray:
    s = np.sign(values)
    signed = np.bincount(labels, weights=weights * s, minlength=n_pieces)
    tot = np.bincount(labels, weights=weights, minlength=n_pieces)
    return np.abs(signed) / tot


def _surrogate_solve(Phi, labels, weights, n_pieces, c0, sharpness):
    tot = np.bincount(labels, weights=weights, minlength=n_pieces)
    onehot = np.zeros((n_pieces, len(labels)))
    onehot[labels, np.arange(len(labels))] = weights
    onehot /= tot[:, None]

    def fun(c):
        t = np.tanh(Phi @ c / sharpness)
        return np.concatenate([onehot @ t, [c @ c - 1.0]])

    def jac(c):
        t = np.tanh(Phi @ c / sharpness)
        dt = (1 - t * t) / sharpness
        return np.vstack([(onehot * dt[None, :]) @ Phi, 2 * c[None, :]])

    res = least_squares(fun, c0, jac=jac, method="lm" if len(c0) <= n_pieces + 1 else "trf",
                        max_nfev=200)
    return res.x / np.linalg.norm(res.x)


def _local_search(Phi, labels, weights, n_pieces, c, rng, steps: int):
    best = c.copy()
    best_val = discrepancies(Phi @ best, labels, weights, n_pieces).max()
    sigma = 0.05
    for it in range(steps):
        if best_val == 0:
            break
        trial = best.copy()
        if rng.random() < 0.1:
            j = rng.integers(len(trial))
            trial[j] = -trial[j]
        else:
            trial += sigma * rng.normal(size=len(trial))
        trial /= np.linalg.norm(trial)
        val = discrepancies(Phi @ trial, labels, weights, n_pieces).max()
        if val < best_val:
            best, best_val = trial, val
            sigma = min(sigma * 1.5, 0.5)
        else:
            sigma = max(sigma * 0.97, 1e-4)
    return best, best_val


@dataclass
class BisectResult:
    polynomial: PolynomialND       # in normalized coordinates
    exponents: np.ndarray
    coefficients: np.ndarray
    discrepancies: np.ndarray
    restarts_used: int


def ham_sandwich_bisect(points: np.ndarray, weights: np.ndarray, labels: np.ndarray, degree: int,
                        rng, eps: float = EPS_BISECT, restarts: int = 12, local_steps: int = 1500,
                        variables=None, round_index: int | None = None) -> BisectResult:
    """Find one polynomial of the given degree bisecting every labelled piece.

    ``points`` are assumed already normalized to about [-1, 1]^n."""
    labels = np.asarray(labels, dtype=int)
    n_pieces = int(labels.max()) + 1 if len(labels) else 0
    n = points.shape[1]
    exps = monomial_exponents(n, degree, 0, variables)
    if len(exps) - 1 < n_pieces:
        raise BisectFailed(f"degree {degree} space too small for {n_pieces} pieces",
                           discrepancy=math.inf, round_index=round_index)
    Phi = monomial_matrix(points, exps)
    best_c, best_val, used = None, math.inf, 0
    for r in range(restarts):
        used = r + 1
        c = rng.normal(size=len(exps))
        c /= np.linalg.norm(c)
        for s in (0.3, 0.1, 0.03, 0.01):
            c = _surrogate_solve(Phi, labels, weights, n_pieces, c, s)
        c, val = _local_search(Phi, labels, weights, n_pieces, c, rng, local_steps)
        if val < best_val:
            best_c, best_val = c, val
        if best_val <= eps:
            break
    if best_val > eps:
        raise BisectFailed(f"bisection discrepancy {best_val:.4f} above {eps}",
                           discrepancy=float(best_val), round_index=round_index)
    poly = PolynomialND.from_terms(n, degree, exps, best_c)
    disc = discrepancies(Phi @ best_c, labels, weights, n_pieces)
    return BisectResult(poly, exps, best_c, disc, used)


@dataclass
class Partition:
    n: int
    D: int
    S: int
    factors: list                     # Q_s in normalized coordinates
    shift: np.ndarray
    scale: np.ndarray
    c: np.ndarray = None              # perturbations c_s
    cells: dict = field(default_factory=dict)
    wall_weight: float = 0.0
    total_weight: float = 0.0
    seed: int | None = None
    round_discrepancies: list = field(default_factory=list)
    variables: tuple | None = None

    def __post_init__(self):
        if self.c is None:
            self.c = np.zeros(len(self.factors))

    def normalize(self, x) -> np.ndarray:
        return (np.atleast_2d(np.asarray(x, dtype=float)) - self.shift) / self.scale

    def factor_values(self, x) -> np.ndarray:
        """(N, S) values of Q_s + c_s."""
        u = self.normalize(x)
        return np.stack([q(u) + cs for q, cs in zip(self.factors, self.c)], axis=1)

    def factor_gradients(self, x) -> np.ndarray:
        """(N, S, n) gradients in original coordinates."""
        u = self.normalize(x)
        return np.stack([q.gradient(u) / self.scale for q in self.factors], axis=1)

    @property
    def degree(self) -> int:
        return int(sum(q.degree for q in self.factors))

    def product(self) -> PolynomialND:
        """P = prod (Q_s + c_s) in original coordinates."""
        P = PolynomialND.constant(self.n, 1.0)
        for q, cs in zip(self.factors, self.c):
            P = P * (q + float(cs))
        return P.compose_diagonal_affine(self.shift, self.scale)

    def signs(self, x) -> np.ndarray:
        return np.sign(self.factor_values(x)).astype(int)

    def recount(self, mu: WeightedPoints):
        sg = self.signs(mu.points)
        wall = np.any(sg == 0, axis=1)
        cells: dict = {}
        for sig, w in zip(map(tuple, sg[~wall].tolist()), mu.weights[~wall].tolist()):
            cells[sig] = cells.get(sig, 0.0) + w
        self.cells = dict(sorted(cells.items()))
        self.wall_weight = float(mu.weights[wall].sum())
        self.total_weight = mu.total

    def balance_window(self, slack: int = 2) -> tuple[float, float]:
        return 2.0 ** (-self.S - slack), 2.0 ** (-self.S + slack)

    def balanced(self, slack: int = 2) -> bool:
        lo, hi = self.balance_window(slack)
        fr = np.array(list(self.cells.values())) / self.total_weight
        return bool(np.all((fr >= lo) & (fr <= hi)))

    def to_json(self) -> str:
        return json.dumps({
            "n": int(self.n), "D": int(self.D), "S": int(self.S),
            "seed": None if self.seed is None else int(self.seed),
            "normalization": {"shift": self.shift.tolist(), "scale": self.scale.tolist()},
            "factors": [q.to_dict() for q in self.factors], "c": self.c.tolist(),
            "variables": list(self.variables) if self.variables is not None else None,
            "cells": [{"sign": [int(s) for s in k], "weight": float(v)} for k, v in self.cells.items()],
            "wall_weight": self.wall_weight,
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Partition":
        d = json.loads(text)
        p = cls(d["n"], d["D"], d["S"], [PolynomialND.from_dict(q) for q in d["factors"]],
                np.array(d["normalization"]["shift"]), np.array(d["normalization"]["scale"]),
                np.array(d["c"]), seed=d["seed"],
                variables=tuple(d["variables"]) if d["variables"] is not None else None)
        p.cells = {tuple(c["sign"]): c["weight"] for c in d["cells"]}
        p.wall_weight = d["wall_weight"]
        return p


def rounds_for(n: int, D: int) -> int:
    return int(math.ceil(n * math.log2(D) - 1e-12))


def partition(mu: WeightedPoints, D: int, seed: int = 0, eps: float = EPS_BISECT,
              variables=None, restarts: int = 12) -> Partition:
    """S = ceil(m log2 D) rounds of simultaneous bisection (m = number of free variables)."""
    if len(mu) == 0:
        raise ValueError("measure is empty")
    if D < 2:
        raise ValueError("D must be at least 2")
    if len(mu) < 2:
        raise BisectFailed("a single point mass cannot be bisected", discrepancy=1.0, round_index=1)
    n = mu.points.shape[1]
    free = n if variables is None else len(variables)
    S = rounds_for(free, D)
    lo, hi = mu.points.min(axis=0), mu.points.max(axis=0)
    shift = (lo + hi) / 2
    scale = np.where(hi > lo, (hi - lo) / 2, 1.0)
    u = (mu.points - shift) / scale
    rng = np.random.default_rng(seed)
    factors, discs = [], []
    sign_code = np.zeros(len(mu), dtype=np.int64)
    alive = np.ones(len(mu), dtype=bool)
    for s in range(1, S + 1):
        codes, labels = np.unique(sign_code[alive], return_inverse=True)
        deg = minimal_degree(free, len(codes))
        res = ham_sandwich_bisect(u[alive], mu.weights[alive], labels.ravel(), deg, rng, eps,
                                  restarts, variables=variables, round_index=s)
        factors.append(res.polynomial)
        discs.append(res.discrepancies.tolist())
        vals = res.polynomial(u)
        alive &= vals != 0
        sign_code = 2 * sign_code + (vals > 0)
    part = Partition(n, D, S, factors, shift, scale, seed=seed, round_discrepancies=discs,
                     variables=None if variables is None else tuple(variables))
    part.recount(mu)
    if len(part.cells) <= 1:
        raise BisectFailed("degenerate input: all mass in one cell", discrepancy=1.0, round_index=S)
    return part


def recompute_discrepancies(part: Partition, mu: WeightedPoints) -> list[np.ndarray]:
    """Independent pass over the points: per-round discrepancies of each factor
    on the sign classes of the earlier factors."""
    vals = part.factor_values(mu.points) - part.c  # unperturbed factors
    out = []
    code = np.zeros(len(mu), dtype=np.int64)
    alive = np.ones(len(mu), dtype=bool)
    for s in range(part.S):
        _, labels = np.unique(code[alive], return_inverse=True)
        v = vals[alive, s]
        out.append(discrepancies(v, labels.ravel(), mu.weights[alive], int(labels.max()) + 1))
        alive &= vals[:, s] != 0
        code = 2 * code + (vals[:, s] > 0)
    return out


def perturb_generic(part: Partition, magnitude: float, rng, mu: WeightedPoints | None = None,
                    zero_samples: int = 400) -> Partition:
    """Add seeded constants c_s in [-magnitude, magnitude] and check that each
    perturbed factor has nonvanishing gradient on its sampled zero set."""
    new = Partition(part.n, part.D, part.S, part.factors, part.shift, part.scale,
                    rng.uniform(-magnitude, magnitude, size=len(part.factors)) if magnitude > 0
                    else np.zeros(len(part.factors)),
                    seed=part.seed, round_discrepancies=part.round_discrepancies,
                    variables=part.variables)
    for q, cs in zip(new.factors, new.c):
        qt = q + float(cs)
        seeds = rng.uniform(-1.5, 1.5, size=(zero_samples, part.n))
        z, _, ok = newton_project([qt], seeds, tol=1e-13, max_step=0.5)
        z = z[ok & np.all(np.abs(z) <= 2, axis=1)]
        if len(z) and np.linalg.norm(qt.gradient(z), axis=1).min() <= 1e-9:
            raise DegenerateAfterPerturbation("perturbed factor has a singular zero")
    if mu is not None:
        new.recount(mu)
        for sig, w in part.cells.items():
            w2 = new.cells.get(sig, 0.0)
            if not (w / 2 <= w2 <= 2 * w):
                raise DegenerateAfterPerturbation("cell weight moved by more than a dyadic factor")
    else:
        new.cells, new.wall_weight, new.total_weight = dict(part.cells), part.wall_weight, part.total_weight
    return new


def _stencil(n: int) -> np.ndarray:
    pts = [np.zeros(n)]
    eye = np.eye(n)
    for i in range(n):
        pts += [eye[i], -eye[i]]
        for j in range(i + 1, n):
            for a in (1, -1):
                for b in (1, -1):
                    pts.append((a * eye[i] + b * eye[j]) / math.sqrt(2))
    return np.array(pts)


def locate(x, part: Partition, wall_width: float = 0.0):
    """Sign vector of the perturbed factors, or WALL.

    WALL if some factor vanishes at x, or if |Q_s(x)| < w * max|grad Q_s| over
    a stencil of B(x, w) (a first-order certificate that Z(Q_s) may be within w)."""
    res = locate_many(np.atleast_2d(x), part, wall_width)
    return res[0]


def locate_many(X, part: Partition, wall_width: float = 0.0) -> list:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    vals = part.factor_values(X)
    wall = np.any(vals == 0, axis=1)
    if wall_width > 0:
        gmax = np.zeros_like(vals)
        for off in _stencil(part.n):
            g = np.linalg.norm(part.factor_gradients(X + wall_width * off), axis=-1)
            gmax = np.maximum(gmax, g)
        wall |= np.any(np.abs(vals) < wall_width * gmax, axis=1)
    sg = np.sign(vals).astype(int)
    return [WALL if w else tuple(s) for w, s in zip(wall, sg)]


def line_cell_crossings(a, b, part: Partition, samples: int = 10 ** 4 + 1) -> int:
    t = np.linspace(0.0, 1.0, samples)[:, None]
    pts = (1 - t) * np.asarray(a, float) + t * np.asarray(b, float)
    sg = part.signs(pts)
    sg = sg[np.all(sg != 0, axis=1)]
    return len({tuple(s) for s in sg})


def tube_cell_incidences(tubes: list[Tube], part: Partition, wall_width: float,
                         axis_count: int = 96) -> list[list]:
    out = []
    for t in tubes:
        if t.radius > wall_width * (1 + 1e-12):
            raise ValueError("tube radius must not exceed the wall width")
        pts = t.cross_section_samples(axis_count, radial=2, angular=8)
        cells = {c for c in locate_many(pts, part, wall_width) if c != WALL}
        out.append(sorted(cells))
    return out
