"""Caps, tubes, directions, subspace angles and exact exponent arithmetic.

Conventions
-----------
Frequencies live in the unit ball of R^{n-1}; a frequency ``w`` sits on the
paraboloid at ``(w, |w|^2)``. A wave packet with frequency cap centered at
``w`` and spatial offset ``v`` lives on the sheared tube

    { x in B_R : |x' + 2 x_n w + v| <= R^(1/2 + delta) }

whose axis points along ``direction_of(w) = (-2w, 1) / |(-2w, 1)|``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import subspace_angles

__all__ = [
    "Cap", "Tube", "Subspace", "ExponentQuery", "DeltaHierarchy",
    "direction_of", "frequency_of", "tube_contains", "angle_to_subspace",
    "critical_exponent", "restriction_exponent", "broad_e", "regular_lower_bound",
    "choose_k", "build_delta_hierarchy", "solve_rho", "exponent_table",
    "exponent_table_csv", "cap_grid", "as_fraction",
]


# ---------------------------------------------------------------- directions

def direction_of(w) -> np.ndarray:
    """Unit normal direction (-2w, 1)/|(-2w, 1)|; vectorized over leading axes."""
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        w = w[None]
    ones = np.ones(w.shape[:-1] + (1,))
    g = np.concatenate([-2.0 * w, ones], axis=-1)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def frequency_of(w) -> np.ndarray:
    """Lift a frequency to the paraboloid: (w, |w|^2)."""
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        w = w[None]
    return np.concatenate([w, np.sum(w * w, axis=-1, keepdims=True)], axis=-1)


# ---------------------------------------------------------------- caps/tubes

@dataclass(frozen=True)
class Cap:
    center: tuple
    radius: float
    scale_tag: str = "fine"

    def __post_init__(self):
        c = tuple(float(x) for x in np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)
        if not (0.0 < self.radius <= 1.0):
            raise ValueError(f"cap radius must lie in (0, 1], got {self.radius}")
        if math.hypot(*c) > 1.0 + 1e-12:
            raise ValueError("cap center outside the unit ball")
        if self.scale_tag not in ("fine", "coarse"):
            raise ValueError("scale_tag must be 'fine' or 'coarse'")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def center_array(self) -> np.ndarray:
        return np.array(self.center)

    def direction(self) -> np.ndarray:
        return direction_of(self.center_array)

    def distance(self, other: "Cap") -> float:
        return float(np.linalg.norm(self.center_array - other.center_array))


def cap_grid(dim: int, spacing: float, radius: float, scale_tag="fine",
             reach: float = 1.0) -> list[Cap]:
    """Caps centered on ``spacing * Z^dim`` whose centers lie in the closed
    ball of radius ``reach`` (clipped to the unit ball)."""
    m = int(math.floor(reach / spacing + 1e-9))
    axis = np.arange(-m, m + 1) * spacing
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    keep = np.linalg.norm(mesh, axis=1) <= min(reach, 1.0) + 1e-12
    return [Cap(tuple(c), radius, scale_tag) for c in mesh[keep]]


@dataclass(frozen=True)
class Tube:
    cap: Cap
    v: tuple
    radius: float
    length: float
    ambient_R: float

    def __post_init__(self):
        object.__setattr__(self, "v", tuple(float(x) for x in np.atleast_1d(self.v)))

    @classmethod
    def from_packet(cls, cap: Cap, v, R: float, delta: float) -> "Tube":
        return cls(cap, v, R ** (0.5 + delta), R, R)

    @property
    def n(self) -> int:
        return self.cap.dim + 1

    def direction(self) -> np.ndarray:
        return self.cap.direction()

    def offset(self, x) -> np.ndarray:
        """|x' + 2 x_n w + v| for points x (shape (..., n))."""
        x = np.asarray(x, dtype=float)
        w = self.cap.center_array
        shifted = x[..., :-1] + 2.0 * x[..., -1:] * w + np.array(self.v)
        return np.linalg.norm(shifted, axis=-1)

    def contains(self, x, margin: float = 1.0) -> np.ndarray:
        """Membership in the (margin-dilated) tube intersected with B_R."""
        x = np.asarray(x, dtype=float)
        inside_ball = np.linalg.norm(x, axis=-1) <= self.ambient_R * (1 + 1e-12)
        return inside_ball & (self.offset(x) <= margin * self.radius)

    def axis_interval(self) -> tuple[float, float] | None:
        """Range of x_n for which the axis point lies in B_R (None if it misses)."""
        w = self.cap.center_array
        v = np.array(self.v)
        a = 1.0 + 4.0 * float(w @ w)
        b = 4.0 * float(w @ v)
        c = float(v @ v) - self.ambient_R ** 2
        disc = b * b - 4 * a * c
        if disc < 0:
            return None
        s = math.sqrt(disc)
        return ((-b - s) / (2 * a), (-b + s) / (2 * a))

    def axis_point(self, xn) -> np.ndarray:
        xn = np.atleast_1d(np.asarray(xn, dtype=float))
        w = self.cap.center_array
        xp = -2.0 * xn[:, None] * w[None, :] - np.array(self.v)[None, :]
        return np.concatenate([xp, xn[:, None]], axis=1)

    def axis_samples(self, count: int = 64) -> np.ndarray:
        iv = self.axis_interval()
        if iv is None:
            return np.zeros((0, self.n))
        return self.axis_point(np.linspace(iv[0], iv[1], count))

    def axis_chord_length(self) -> float:
        iv = self.axis_interval()
        if iv is None:
            return 0.0
        w = self.cap.center_array
        return (iv[1] - iv[0]) * math.sqrt(1.0 + 4.0 * float(w @ w))

    def cross_section_samples(self, axis_count=48, radial=3, angular=8, margin=1.0) -> np.ndarray:
        """Points of the tube: axis samples plus horizontal offsets (the
        sheared inequality measures horizontal distance), clipped to B_R."""
        base = self.axis_samples(axis_count)
        if len(base) == 0:
            return base
        d = self.cap.dim
        offsets = [np.zeros(d)]
        for i in range(1, radial + 1):
            rr = margin * self.radius * i / radial
            if d == 1:
                offsets += [np.array([rr]), np.array([-rr])]
            else:
                rng = np.random.default_rng(1234 + i)
                for _ in range(angular):
                    u = rng.normal(size=d)
                    offsets.append(rr * u / np.linalg.norm(u))
        pts = []
        for off in offsets:
            p = base.copy()
            p[:, :-1] += off
            pts.append(p)
        pts = np.concatenate(pts)
        keep = np.linalg.norm(pts, axis=1) <= self.ambient_R
        return pts[keep]


def tube_contains(t: Tube, x) -> bool | np.ndarray:
    """The sheared membership inequality |x' + 2 x_n w + v| <= radius."""
    res = t.offset(x) <= t.radius
    return bool(res) if np.ndim(res) == 0 else res


# ---------------------------------------------------------------- subspaces

@dataclass(frozen=True)
class Subspace:
    basis: np.ndarray = field(repr=False)  # shape (d, n), orthonormal rows

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.basis, dtype=float))
        gram = b @ b.T
        if not np.allclose(gram, np.eye(len(b)), atol=1e-12):
            raise ValueError("subspace basis is not orthonormal")
        if not (1 <= b.shape[0] <= b.shape[1]):
            raise ValueError("subspace dimension out of range")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @classmethod
    def span(cls, vectors) -> "Subspace":
        a = np.atleast_2d(np.asarray(vectors, dtype=float))
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        rank = int(np.sum(s > 1e-12 * max(s[0], 1e-300)))
        if rank == 0:
            raise ValueError("cannot span a subspace from zero vectors")
        return cls(vt[:rank])

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[1]

    def project(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        return (g @ self.basis.T) @ self.basis

    def principal_angles(self, other: "Subspace") -> np.ndarray:
        return subspace_angles(self.basis.T, other.basis.T)

    def to_list(self):
        return self.basis.tolist()


def angle_to_subspace(g, V: Subspace):
    """Smallest angle between g and V: arccos of the projection norm.

    Accepts a single unit vector or an array of them (last axis)."""
    g = np.asarray(g, dtype=float)
    norm = np.linalg.norm(g @ V.basis.T, axis=-1)
    gn = np.linalg.norm(g, axis=-1)
    ang = np.arccos(np.clip(norm / gn, -1.0, 1.0))
    return float(ang) if np.ndim(ang) == 0 else ang


# ---------------------------------------------------------------- exponents

def as_fraction(p) -> Fraction:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, int):
        return Fraction(p)
    if isinstance(p, str):
        return Fraction(p.strip())
    if isinstance(p, float):
        return Fraction(p).limit_denominator(10**9)
    raise TypeError(f"cannot convert {p!r} to an exact rational")


@dataclass(frozen=True)
class ExponentQuery:
    n: int
    k: int
    p: Fraction

    def __post_init__(self):
        object.__setattr__(self, "p", as_fraction(self.p))
        _check_kn(self.k, self.n)

    def critical(self) -> Fraction:
        return critical_exponent(self.k, self.n)

    def e(self) -> Fraction:
        return broad_e(self.k, self.n, self.p)


def _check_kn(k, n):
    if not (isinstance(k, int) and isinstance(n, int)):
        raise TypeError("k and n must be integers")
    if n < 2 or k < 2 or k > n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")


def critical_exponent(k: int, n: int) -> Fraction:
    """2(n+k)/(n+k-2)."""
    _check_kn(k, n)
    return Fraction(2 * (n + k), n + k - 2)


def restriction_exponent(n: int) -> Fraction:
    """Restriction exponent threshold: parity-dependent closed form."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if n % 2:
        return Fraction(2 * (3 * n + 1), 3 * n - 3)
    return Fraction(2 * (3 * n + 2), 3 * n - 2)


def broad_e(k: int, n: int, p) -> Fraction:
    """e = (1/2)(1/2 - 1/p)(n + k)."""
    p = as_fraction(p)
    if p < 2:
        raise ValueError("p must be at least 2")
    return Fraction(1, 2) * (Fraction(1, 2) - 1 / p) * (n + k)


def regular_lower_bound(k: int, n: int) -> Fraction:
    """2(2n-k+2)/(2n-k)."""
    _check_kn(k, n)
    return Fraction(2 * (2 * n - k + 2), 2 * n - k)


def choose_k(n: int) -> int:
    if n < 2:
        raise ValueError("n must be at least 2")
    return n // 2 + 1 if n % 2 == 0 else (n + 1) // 2


def exponent_table(n_values: Iterable[int]) -> list[dict]:
    rows = []
    for n in n_values:
        k = choose_k(n)
        rows.append({
            "n": n,
            "choose_k": k,
            "restriction_exponent": restriction_exponent(n),
            "critical_at_choose_k": critical_exponent(k, n),
            "regular_lower_bound": regular_lower_bound(k, n),
            "critical_k2": critical_exponent(2, n),
            "critical_kn": critical_exponent(n, n),
        })
    return rows


def exponent_table_csv(n_values: Iterable[int]) -> str:
    """CSV with exact rational strings plus decimal approximations."""
    rows = exponent_table(n_values)
    buf = io.StringIO()
    keys = ["restriction_exponent", "critical_at_choose_k", "regular_lower_bound", "critical_k2", "critical_kn"]
    header = ["n", "choose_k"] + [h for key in keys for h in (key, key + "_decimal")]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        line = [r["n"], r["choose_k"]]
        for key in keys:
            line += [str(r[key]), f"{float(r[key]):.12g}"]
        w.writerow(line)
    return buf.getvalue()


# ---------------------------------------------------------------- scales

@dataclass(frozen=True)
class DeltaHierarchy:
    eps: float
    deltas: tuple  # delta_0 ... delta_{n-1}
    delta: float

    def __post_init__(self):
        d = list(self.deltas)
        chain = [self.eps] + d + [self.delta]
        if any(x <= 0 for x in chain):
            raise ValueError("all scale parameters must be positive")
        for a, b in zip(chain, chain[1:]):
            if not b < a:
                raise ValueError("scale parameters must strictly decrease")
        for prev, cur in zip(d, d[1:] + [self.delta]):
            if not cur < self.eps * prev:
                raise ValueError("delta_m < eps * delta_{m-1} violated")

    @property
    def n(self) -> int:
        return len(self.deltas)

    def separation_margin(self) -> float:
        """Smallest ratio eps*delta_{m-1}/delta_m; values above 10 mean the
        stronger separation delta_m < eps*delta_{m-1}/10 holds."""
        d = list(self.deltas) + [self.delta]
        return min(self.eps * a / b for a, b in zip(d, d[1:]))


def build_delta_hierarchy(eps: float, n: int) -> DeltaHierarchy:
    """Power schedule delta_m = eps^(2m+2), delta = eps^(2n+2)."""
    if not (0.0 < eps < 0.5):
        raise ValueError("eps must lie in (0, 1/2)")
    if n < 1:
        raise ValueError("n must be positive")
    return DeltaHierarchy(eps, tuple(eps ** (2 * m + 2) for m in range(n)), eps ** (2 * n + 2))


def solve_rho(R: float, delta_m: float, delta_l: float) -> float:
    """Scale rho with rho^(1/2 + delta_l) = R^(1/2 + delta_m)."""
    if R <= 0:
        raise ValueError("R must be positive")
    return float(np.exp(np.log(R) * (0.5 + delta_m) / (0.5 + delta_l)))
