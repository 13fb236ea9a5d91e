"""Extension operator for the paraboloid evaluated by trapezoid quadrature.

    Ef(x) = int_{B^{n-1}} exp(i (x'.w + x_n |w|^2)) f(w) dw

Densities are sampled on a uniform grid aligned to the lattice ``lo + h Z``.
Sub-grids (for example wave packet components) share the lattice of their
parent so they can be summed exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import GridMismatch, ResolutionTooCoarse, SupportViolation
from .geometry import Cap

C_QUAD = 0.25

__all__ = [
    "DensityFunction", "SampledField", "RescaleMap", "grid_spacing", "bump",
    "smooth_step", "evaluate_extension", "evaluate_grid", "slice_l2",
    "modulate_to_ball", "parabolic_rescale", "random_smooth_density",
    "check_resolution", "plancherel_constant",
]


def bump(t):
    """exp(-1/(1-t^2)) on |t| < 1, zero elsewhere."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1
    out[m] = np.exp(-1.0 / (1.0 - t[m] ** 2))
    return out


def smooth_step(t):
    """C-infinity step: 1 for t <= 0, 0 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = np.where(t < 1, np.exp(-1.0 / np.clip(1 - t, 1e-300, None)), 0.0)
    b = np.where(t > 0, np.exp(-1.0 / np.clip(t, 1e-300, None)), 0.0)
    return a / (a + b)


def grid_spacing(R: float, c_quad: float = C_QUAD) -> float:
    """Largest dyadic spacing satisfying h <= c_quad / R."""
    return 2.0 ** (-math.ceil(math.log2(R / c_quad) - 1e-12))


def plancherel_constant(n: int) -> float:
    """int |Ef(., x_n)|^2 dx' = (2 pi)^(n-1) ||f||^2 for this unnormalized E."""
    return (2 * math.pi) ** (n - 1)


def check_resolution(h: float, R: float, c_quad: float = C_QUAD):
    if h > c_quad / R * (1 + 1e-12):
        raise ResolutionTooCoarse(
            f"grid spacing {h:g} exceeds c_quad/R = {c_quad / R:g}; phases would alias")


@dataclass
class DensityFunction:
    """Complex samples of f on the box lo + h * [0, shape) (per axis)."""
    n: int
    h: float
    lo: tuple
    values: np.ndarray = field(repr=False)
    bound: float = 1.0
    mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        self.lo = tuple(float(x) for x in np.atleast_1d(self.lo))
        if self.values.ndim != self.n - 1 or len(self.lo) != self.n - 1:
            raise ValueError("density grid dimension must be n-1")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density samples must be finite")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.values.shape:
                raise ValueError("mask shape differs from grid")
            self.values = np.where(self.mask, self.values, 0)

    # -- construction
    @classmethod
    def on_ball(cls, n: int, h: float, func=None, bound: float = 1.0) -> "DensityFunction":
        """Full grid covering [-bound, bound]^(n-1), masked to the unit ball."""
        d = n - 1
        m = int(round(2 * bound / h))
        if abs(m * h - 2 * bound) > 1e-9 * h:
            raise GridMismatch("grid spacing must divide the domain width")
        axis = -bound + h * np.arange(m + 1)
        mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1)
        ball = np.linalg.norm(mesh, axis=-1) <= bound + 1e-12
        vals = np.zeros(mesh.shape[:-1], dtype=complex)
        if func is not None:
            vals = np.asarray(func(mesh), dtype=complex) * ball
        return cls(n, h, (-bound,) * d, vals, bound, ball)

    @classmethod
    def zeros_like(cls, other: "DensityFunction") -> "DensityFunction":
        return cls(other.n, other.h, other.lo, np.zeros_like(other.values), other.bound, other.mask)

    # -- geometry of the grid
    @property
    def d(self) -> int:
        return self.n - 1

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def axes(self) -> list[np.ndarray]:
        return [lo + self.h * np.arange(s) for lo, s in zip(self.lo, self.shape)]

    def mesh(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def axis_weights(self) -> list[np.ndarray]:
        out = []
        for ax in self.axes():
            w = np.ones_like(ax)
            w[np.isclose(np.abs(ax), self.bound, atol=1e-9 * self.h, rtol=0)] = 0.5
            out.append(w)
        return out

    def weights(self) -> np.ndarray:
        w = self.h ** self.d
        for k, aw in enumerate(self.axis_weights()):
            shape = [1] * self.d
            shape[k] = -1
            w = w * aw.reshape(shape)
        return np.broadcast_to(w, self.shape)

    def index_offset(self, other: "DensityFunction") -> np.ndarray:
        """Integer offset of other's origin in this grid (GridMismatch if unaligned)."""
        if self.n != other.n or not math.isclose(self.h, other.h, rel_tol=1e-12):
            raise GridMismatch("grids differ in dimension or spacing")
        off = (np.array(other.lo) - np.array(self.lo)) / self.h
        r = np.round(off)
        if np.any(np.abs(off - r) > 1e-6):
            raise GridMismatch("grid origins are not lattice aligned")
        return r.astype(int)

    # -- norms and algebra
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.weights() * np.abs(self.values) ** 2)))

    def inner(self, other: "DensityFunction") -> complex:
        a, b = _common_box(self, other)
        return complex(np.sum(a.weights() * a.values * np.conj(b.values)))

    def scaled(self, c) -> "DensityFunction":
        return DensityFunction(self.n, self.h, self.lo, self.values * c, self.bound, self.mask)

    def __add__(self, other: "DensityFunction") -> "DensityFunction":
        a, b = _common_box(self, other)
        return DensityFunction(self.n, self.h, a.lo, a.values + b.values, self.bound)

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def embed(self, target: "DensityFunction") -> np.ndarray:
        """Values of self placed on target's grid (zero elsewhere)."""
        off = target.index_offset(self)
        out = np.zeros(target.shape, dtype=complex)
        src, dst = [], []
        for o, s, t in zip(off, self.shape, target.shape):
            a, b = max(o, 0), min(o + s, t)
            if b <= a:
                return out
            dst.append(slice(a, b))
            src.append(slice(a - o, b - o))
        out[tuple(dst)] = self.values[tuple(src)]
        lost = np.sum(np.abs(self.values) ** 2) - np.sum(np.abs(self.values[tuple(src)]) ** 2)
        if lost > 1e-24 * max(1.0, np.sum(np.abs(self.values) ** 2)):
            raise GridMismatch("component extends beyond the target grid")
        return out

    def crop(self, center, radius: float) -> "DensityFunction":
        """Sub-grid covering the cube of half-width radius around center."""
        lo_idx, hi_idx = [], []
        for ax, c in zip(self.axes(), np.atleast_1d(center)):
            lo_idx.append(int(np.searchsorted(ax, c - radius - 1e-12)))
            hi_idx.append(int(np.searchsorted(ax, c + radius + 1e-12, side="right")))
        sl = tuple(slice(a, b) for a, b in zip(lo_idx, hi_idx))
        lo = tuple(ax[a] if a < len(ax) else ax[-1] for ax, a in zip(self.axes(), lo_idx))
        mask = None if self.mask is None else self.mask[sl]
        return DensityFunction(self.n, self.h, lo, self.values[sl].copy(), self.bound, mask)

    def active(self, tol: float = 0.0):
        """(nodes, |w|^2, weight*value) restricted to nonzero samples."""
        vals = self.values
        sel = np.abs(vals) > tol
        nodes = self.mesh()[sel]
        sq = np.sum(nodes * nodes, axis=-1)
        fw = (self.weights() * vals)[sel]
        return nodes, sq, fw

    # -- serialization
    def to_json(self) -> str:
        inter = np.empty(self.values.size * 2)
        flat = self.values.ravel()
        inter[0::2], inter[1::2] = flat.real, flat.imag
        return json.dumps({
            "format": "density/v1", "n": self.n, "h_omega": self.h,
            "bounds": [[lo, lo + self.h * (s - 1)] for lo, s in zip(self.lo, self.shape)],
            "shape": list(self.shape), "domain_bound": self.bound,
            "data": inter.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "DensityFunction":
        obj = json.loads(text)
        inter = np.asarray(obj["data"], dtype=float)
        vals = (inter[0::2] + 1j * inter[1::2]).reshape(obj["shape"])
        lo = tuple(b[0] for b in obj["bounds"])
        return cls(obj["n"], obj["h_omega"], lo, vals, obj.get("domain_bound", 1.0))


def _common_box(a: DensityFunction, b: DensityFunction):
    """Embed two aligned densities in their joint bounding box."""
    off = a.index_offset(b)
    lo_idx = np.minimum(0, off)
    hi_idx = np.maximum(np.array(a.shape), off + np.array(b.shape))
    lo = tuple(np.array(a.lo) + lo_idx * a.h)
    box = DensityFunction(a.n, a.h, lo, np.zeros(tuple(hi_idx - lo_idx), dtype=complex), a.bound)
    ea = DensityFunction(a.n, a.h, lo, a.embed(box), a.bound)
    eb = DensityFunction(a.n, a.h, lo, b.embed(box), a.bound)
    return ea, eb


@dataclass
class SampledField:
    points: np.ndarray = field(repr=False)  # (N, n) or None for a structured grid
    values: np.ndarray = field(repr=False)
    R: float
    grid_axes: list | None = field(default=None, repr=False)  # [x'_1, ..., x'_{n-1}, x_n]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.points is not None and len(self.points) != self.values.size:
            raise ValueError("one value per point required")

    def point_array(self) -> np.ndarray:
        if self.points is not None:
            return np.asarray(self.points)
        xn = self.grid_axes[-1]
        mesh = np.meshgrid(xn, *self.grid_axes[:-1], indexing="ij")
        pts = np.stack(mesh[1:] + mesh[:1], axis=-1)
        return pts.reshape(-1, len(self.grid_axes))

    def to_csv(self) -> str:
        pts = self.point_array()
        vals = self.values.ravel()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = pts.shape[1]
        w.writerow([f"x{i + 1}" for i in range(n)] + ["re", "im"])
        for p, v in zip(pts, vals):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v.real)), repr(float(v.imag))])
        return buf.getvalue()


def evaluate_extension(f: DensityFunction, X, R: float, c_quad: float = C_QUAD,
                       nthreads: int | None = None) -> SampledField:
    """Trapezoid-rule Ef at arbitrary points (direct summation baseline)."""
    check_resolution(f.h, R, c_quad)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != f.n:
        raise ValueError("evaluation points must have n coordinates")
    nodes, sq, fw = f.active()
    if len(fw) == 0:
        return SampledField(X, np.zeros(len(X), dtype=complex), R)
    vals = kernels.extension_direct(X, nodes, sq, fw, nthreads or kernels.default_threads())
    return SampledField(X, vals, R)


def evaluate_grid(f: DensityFunction, xp_axes, xn, R: float, c_quad: float = C_QUAD,
                  max_block: int = 1 << 24) -> np.ndarray:
    """Structured-grid fast path.

    Returns an array of shape (len(xn), len(xp_axes[0]), ...). The phase is
    separable across coordinates, so the sum factors into one dense matrix
    product per frequency axis. Agrees with the direct sum up to rounding.
    """
    check_resolution(f.h, R, c_quad)
    xn = np.atleast_1d(np.asarray(xn, dtype=float))
    xp_axes = [np.atleast_1d(np.asarray(a, dtype=float)) for a in xp_axes]
    out_shape = (len(xn),) + tuple(len(a) for a in xp_axes)
    nz = np.nonzero(np.abs(f.values) > 0)
    if len(nz[0]) == 0:
        return np.zeros(out_shape, dtype=complex)
    sl = tuple(slice(ix.min(), ix.max() + 1) for ix in nz)
    axes = [ax[s] for ax, s in zip(f.axes(), sl)]
    fw = (f.weights() * f.values)[sl]
    sq = sum(np.meshgrid(*[a * a for a in axes], indexing="ij"))
    phis = [np.exp(1j * np.outer(xa, wa)) for xa, wa in zip(xp_axes, axes)]
    out = np.empty(out_shape, dtype=complex)
    if f.d == 1:
        rows = max(1, max_block // max(len(axes[0]), 1))
        for s in range(0, len(xn), rows):
            g = fw[None, :] * np.exp(1j * xn[s:s + rows, None] * sq[None, :])
            out[s:s + rows] = g @ phis[0].T
        return out
    for r, t in enumerate(xn):
        g = fw * np.exp(1j * t * sq)
        for k, phi in enumerate(phis):
            # contract frequency axis k (kept at position k) with phi
            g = np.moveaxis(np.tensordot(phi, g, axes=([1], [k])), 0, k)
        out[r] = g
    return out


def slice_l2(f: DensityFunction, R: float, xn: float, width: float | None = None,
             c_quad: float = C_QUAD) -> tuple[float, float]:
    """(normalized L2 norm of Ef on the hyperplane {x_n}, ||f||_2).

    The slice integral uses unit-spaced midpoints over a cube of side
    ``width`` (default 8R); it is divided by the Plancherel constant
    (2 pi)^(n-1) so that the two numbers agree."""
    width = 8.0 * R if width is None else float(width)
    fn = f.norm()
    if fn == 0:
        check_resolution(f.h, R, c_quad)
        return 0.0, 0.0
    m = int(math.ceil(width))
    axis = -width / 2 + 0.5 + np.arange(m) * (width / m)
    cell = (width / m) ** f.d
    if f.d == 1:
        vals = evaluate_grid(f, [axis], [xn], R, c_quad)
        total = float(np.sum(np.abs(vals) ** 2) * cell)
    else:
        total = 0.0
        for a in np.array_split(axis, max(1, len(axis) // 64)):
            vals = evaluate_grid(f, [a] + [axis] * (f.d - 1), [xn], R, c_quad)
            total += float(np.sum(np.abs(vals) ** 2) * cell)
    return math.sqrt(total / plancherel_constant(f.n)), fn


def modulate_to_ball(f: DensityFunction, y) -> DensityFunction:
    """f~(w) = exp(i (y'.w + y_n |w|^2)) f(w), so that Ef(x) = Ef~(x - y)."""
    y = np.asarray(y, dtype=float)
    if y.shape != (f.n,):
        raise ValueError("y must have n coordinates")
    w = f.mesh()
    phase = w @ y[:-1] + y[-1] * np.sum(w * w, axis=-1)
    return DensityFunction(f.n, f.h, f.lo, f.values * np.exp(1j * phase), f.bound, f.mask)


@dataclass(frozen=True)
class RescaleMap:
    """x -> x~ with x~_j = (x_j + 2 w_j x_n)/K and x~_n = x_n / K^2."""
    center: tuple
    K: float

    @property
    def matrix(self) -> np.ndarray:
        d = len(self.center)
        A = np.zeros((d + 1, d + 1))
        A[:d, :d] = np.eye(d) / self.K
        A[:d, d] = 2.0 * np.array(self.center) / self.K
        A[d, d] = 1.0 / self.K ** 2
        return A

    @property
    def jacobian(self) -> float:
        return float(np.linalg.det(self.matrix))

    def __call__(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.matrix.T

    def phase(self, x) -> np.ndarray:
        """Unimodular factor: Ef(x) = exp(i phase) K^-(n-1) Ef~(x~)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        w = np.array(self.center)
        return x[:, :-1] @ w + x[:, -1] * float(w @ w)


def parabolic_rescale(f: DensityFunction, tau: Cap, K: float, support_tol: float = 1e-9):
    """Map a density supported in the cap tau (radius 1/K) to the full ball.

    Returns (f~, RescaleMap) with f~(w~) = f(w_tau + w~/K) sampled on the grid
    of spacing K*h, so both quadratures share their nodes exactly."""
    if not math.isclose(tau.radius, 1.0 / K, rel_tol=1e-9):
        raise ValueError("cap radius must equal 1/K")
    c = tau.center_array
    mesh = f.mesh()
    outside = np.linalg.norm(mesh - c, axis=-1) > tau.radius * (1 + 1e-9)
    total = np.sum(np.abs(f.values) ** 2)
    if total > 0 and np.sum(np.abs(f.values[outside]) ** 2) > support_tol ** 2 * total:
        raise SupportViolation("density has mass outside the cap")
    ht = K * f.h
    m = int(round(2.0 / ht))
    if abs(m * ht - 2.0) > 1e-9:
        raise GridMismatch("K * h must divide the unit-ball width")
    # node j of the new grid maps to w = c - 1/K + j h in the old grid
    start = (c - 1.0 / K - np.array(f.lo)) / f.h
    if np.any(np.abs(start - np.round(start)) > 1e-6):
        raise GridMismatch("cap center is not aligned with the density grid")
    start = np.round(start).astype(int)
    vals = np.zeros((m + 1,) * f.d, dtype=complex)
    src, dst = [], []
    for s0, size in zip(start, f.shape):
        a, b = max(s0, 0), min(s0 + m + 1, size)
        src.append(slice(a, b))
        dst.append(slice(a - s0, b - s0))
    vals[tuple(dst)] = f.values[tuple(src)]
    axis = -1.0 + ht * np.arange(m + 1)
    tmesh = np.stack(np.meshgrid(*([axis] * f.d), indexing="ij"), axis=-1)
    ball = np.linalg.norm(tmesh, axis=-1) <= 1 + 1e-12
    ft = DensityFunction(f.n, ht, (-1.0,) * f.d, vals * ball, 1.0, ball)
    return ft, RescaleMap(tuple(c), float(K))


def random_smooth_density(n: int, h: float, rng, modes: int = 3, radius: float = 0.9,
                          center=None) -> DensityFunction:
    """Smooth bump times a random low-order trigonometric polynomial."""
    d = n - 1
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    ks = np.stack(np.meshgrid(*([np.arange(-modes, modes + 1)] * d), indexing="ij"), -1).reshape(-1, d)
    coef = rng.normal(size=len(ks)) + 1j * rng.normal(size=len(ks))

    def func(w):
        env = bump(np.linalg.norm(w - center, axis=-1) / radius)
        phase = np.exp(1j * np.pi * np.tensordot(w, ks.T, axes=([-1], [0])))
        return env * (phase @ coef)

    return DensityFunction.on_ball(n, h, func)
