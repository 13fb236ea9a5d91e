"""Dense multivariate polynomials and a batched Newton projection onto zero sets."""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.signal import convolve


def monomial_exponents(n: int, D: int, min_degree: int = 0, variables=None) -> np.ndarray:
    """Exponent vectors with min_degree <= |alpha| <= D, graded then lexicographic.

    If ``variables`` is given, only those coordinates may carry positive powers."""
    allowed = set(range(n)) if variables is None else set(variables)
    out = [a for a in itertools.product(range(D + 1), repeat=n)
           if min_degree <= sum(a) <= D and all(x == 0 or j in allowed for j, x in enumerate(a))]
    out.sort(key=lambda a: (sum(a), a))
    return np.array(out, dtype=int).reshape(-1, n)


def power_table(x: np.ndarray, D: int) -> np.ndarray:
    """(N, n, D+1) array of x_j^a."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.empty(x.shape + (D + 1,))
    out[..., 0] = 1.0
    for a in range(1, D + 1):
        out[..., a] = out[..., a - 1] * x
    return out


def monomial_matrix(x: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """(N, M) matrix of x^alpha for the exponent list exps."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    D = int(exps.max(initial=0))
    pw = power_table(x, D)
    M = np.ones((len(x), len(exps)))
    for j in range(x.shape[1]):
        M *= pw[:, j, exps[:, j]]
    return M


class PolynomialND:
    """sum_alpha c_alpha x^alpha with coefficients stored densely, shape (D+1,)*n."""

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim == 0 or len(set(c.shape)) != 1:
            raise ValueError("coefficient array must be a cube of side D+1")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        self.coeffs = c
        self._grad = None

    # -- construction
    @classmethod
    def from_terms(cls, n: int, D: int, exps, values) -> "PolynomialND":
        c = np.zeros((D + 1,) * n)
        for a, v in zip(np.atleast_2d(exps), values):
            c[tuple(a)] += v
        return cls(c)

    @classmethod
    def constant(cls, n: int, value: float) -> "PolynomialND":
        return cls(np.full((1,) * n, float(value)))

    @classmethod
    def coordinate(cls, n: int, j: int) -> "PolynomialND":
        c = np.zeros((2,) * n)
        idx = [0] * n
        idx[j] = 1
        c[tuple(idx)] = 1.0
        return cls(c)

    # -- shape
    @property
    def n(self) -> int:
        return self.coeffs.ndim

    @property
    def D(self) -> int:
        return self.coeffs.shape[0] - 1

    def terms(self):
        idx = np.argwhere(self.coeffs != 0)
        return idx, self.coeffs[tuple(idx.T)]

    @property
    def degree(self) -> int:
        idx, _ = self.terms()
        return int(idx.sum(axis=1).max(initial=0)) if len(idx) else 0

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def coefficient_scale(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def _padded(self, D: int) -> np.ndarray:
        out = np.zeros((D + 1,) * self.n)
        out[tuple(slice(0, self.D + 1) for _ in range(self.n))] = self.coeffs
        return out

    # -- evaluation
    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx, vals = self.terms()
        if len(idx) == 0:
            return np.zeros(len(x))
        return monomial_matrix(x, idx) @ vals

    def derivative(self, j: int) -> "PolynomialND":
        if self.D == 0:
            return PolynomialND(np.zeros_like(self.coeffs))
        c = np.moveaxis(self.coeffs, j, 0)[1:] * np.arange(1, self.D + 1).reshape((-1,) + (1,) * (self.n - 1))
        c = np.moveaxis(c, 0, j)
        pad = [(0, 0)] * self.n
        pad[j] = (0, 1)
        return PolynomialND(np.pad(c, pad))

    def gradient(self, x) -> np.ndarray:
        if self._grad is None:
            self._grad = [self.derivative(j) for j in range(self.n)]
        return np.stack([g(x) for g in self._grad], axis=-1)

    # -- algebra
    def __add__(self, other):
        if np.isscalar(other):
            c = self.coeffs.copy()
            c[(0,) * self.n] += other
            return PolynomialND(c)
        D = max(self.D, other.D)
        return PolynomialND(self._padded(D) + other._padded(D))

    __radd__ = __add__

    def __mul__(self, other):
        if np.isscalar(other):
            return PolynomialND(self.coeffs * other)
        return PolynomialND(convolve(self.coeffs, other.coeffs, method="direct"))

    __rmul__ = __mul__

    def compose_diagonal_affine(self, shift, scale) -> "PolynomialND":
        """Q(x) = P((x - shift) / scale) expanded in powers of x."""
        c = self.coeffs
        D = self.D
        for j in range(self.n):
            T = np.zeros((D + 1, D + 1))
            for a in range(D + 1):
                for b in range(a + 1):
                    T[a, b] = math.comb(a, b) * (-shift[j]) ** (a - b) / scale[j] ** a
            c = np.moveaxis(np.tensordot(T, c, axes=([0], [j])), 0, j)
        return PolynomialND(c)

    def to_dict(self) -> dict:
        idx, vals = self.terms()
        return {"n": self.n, "D": self.D, "exponents": idx.tolist(), "coefficients": vals.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PolynomialND":
        return cls.from_terms(d["n"], d["D"], d["exponents"], d["coefficients"])

    def __repr__(self):
        return f"PolynomialND(n={self.n}, degree={self.degree})"


def newton_project(polys, x0, tol: float = 1e-12, iters: int = 50, max_step: float | None = None):
    """Gauss-Newton (minimum-norm step) projection of points onto the common
    zero set of ``polys``. Returns (points, residual max |P_i|, converged mask)."""
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    for _ in range(iters):
        F = np.stack([p(x) for p in polys], axis=1)          # (N, k)
        if np.all(np.abs(F) < tol):
            break
        J = np.stack([p.gradient(x) for p in polys], axis=1)  # (N, k, n)
        step = np.einsum("nij,nj->ni", np.linalg.pinv(J, rcond=1e-12), F)
        if max_step is not None:
            norm = np.linalg.norm(step, axis=1, keepdims=True)
            step *= np.minimum(1.0, max_step / np.maximum(norm, 1e-300))
        x -= step
        x[~np.all(np.isfinite(x), axis=1)] = np.nan
    F = np.stack([p(x) for p in polys], axis=1)
    res = np.max(np.abs(F), axis=1)
    ok = np.isfinite(res) & (res < max(tol * 1e3, 1e-9))
    return x, res, ok
