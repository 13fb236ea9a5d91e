"""Wave packet decomposition f = sum f_{theta,v} + Err and its bookkeeping.

Construction per fine cap theta (radius r = R^-1/2):

* psi_theta: bump of radius 0.8 r on the lattice 0.8 r Z^(n-1), divided by
  the sum of all bumps, so sum_theta psi_theta = 1.
* eta_v: bump of radius L = R^((1+delta)/2) around v in L Z^(n-1), divided
  by the sum over the lattice; applied as a Fourier multiplier on a
  zero-padded local FFT of psi_theta f.
* psitilde_theta: 1 on radius 0.9 r, smooth step to 0 at radius r.

With these conventions Ef_{theta,v} concentrates on
{|x' + 2 x_n w_theta + v| <= R^(1/2+delta)}.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyPacketSet, ResolutionTooCoarse, ScaleOrderViolation
from .extension import DensityFunction, bump, evaluate_grid, modulate_to_ball, smooth_step
from .geometry import Cap, Tube, direction_of

TOL_RAPDEC = 1e-6
PSI_SUPPORT = 0.8      # bump radius and lattice spacing of psi, in units of r
PSITILDE_FLAT = 0.9    # psitilde == 1 on this radius, in units of r
BOX_HALF_WIDTH = 4.0   # local FFT box half-width, in units of r
CLASS_CONSTANT = 2.0   # constant in the coarse membership conditions


def vbar(omega, y) -> np.ndarray:
    """Gradient in w of the phase y'.w + y_n |w|^2, i.e. y' + 2 y_n w."""
    y = np.asarray(y, dtype=float)
    omega = np.asarray(omega, dtype=float)
    return y[:-1] + 2.0 * y[-1] * omega


@dataclass
class WavePacket:
    cap: Cap
    v: tuple
    component: DensityFunction = field(repr=False)
    norm: float = 0.0

    def tube(self, R: float, delta: float) -> Tube:
        return Tube.from_packet(self.cap, self.v, R, delta)


@dataclass
class PacketSet:
    R: float
    delta: float
    packets: list
    template: DensityFunction = field(repr=False)  # grid of the decomposed density
    f_norm: float = 0.0
    cutoffs: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.packets)

    def reconstruct(self, subset=None) -> DensityFunction:
        out = np.zeros(self.template.shape, dtype=complex)
        items = self.packets if subset is None else [self.packets[i] for i in subset]
        for p in items:
            out += p.component.embed(self.template)
        return DensityFunction(self.template.n, self.template.h, self.template.lo, out,
                               self.template.bound)

    def norms(self) -> np.ndarray:
        return np.array([p.norm for p in self.packets])

    def orthogonality_factor(self) -> float:
        """sum ||f_P||^2 / ||f||^2."""
        if self.f_norm == 0:
            return 1.0
        return float(np.sum(self.norms() ** 2) / self.f_norm ** 2)

    def manifest_json(self) -> str:
        rows = []
        for p in self.packets:
            ends = p.tube(self.R, self.delta).axis_samples(2)
            rows.append({"theta_center": list(p.cap.center), "v": list(p.v), "l2_norm": p.norm,
                         "tube_endpoints": ends.tolist()})
        return json.dumps({"R": self.R, "delta": self.delta, "cutoffs": self.cutoffs,
                           "f_norm": self.f_norm, "packets": rows}, indent=1)


def _lattice(spacing: float, lo, hi) -> np.ndarray:
    """Points of spacing * Z^d inside the box [lo, hi]."""
    axes = [np.arange(math.ceil(a / spacing - 1e-9), math.floor(b / spacing + 1e-9) + 1) * spacing
            for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


def _box_slices(f: DensityFunction, center, half: float):
    sl = []
    for ax, c in zip(f.axes(), center):
        a = int(np.searchsorted(ax, c - half - 1e-12))
        b = int(np.searchsorted(ax, c + half + 1e-12, side="right"))
        sl.append(slice(a, b))
    return tuple(sl)


def _radial(mesh, center) -> np.ndarray:
    return np.linalg.norm(mesh - np.asarray(center), axis=-1)


def decompose(f: DensityFunction, R: float, delta: float = 0.1,
              tol_rapdec: float = TOL_RAPDEC) -> PacketSet:
    d = f.d
    r = R ** -0.5
    if r / f.h < 8:
        raise ResolutionTooCoarse(f"need >= 8 samples across R^-1/2, have {r / f.h:.2f}")
    a = PSI_SUPPORT * r
    L = R ** ((1 + delta) / 2)
    cutoffs = {"psi": {"profile": "exp(-1/(1-t^2))", "radius": a, "lattice": a,
                       "normalization": "sum"},
               "psitilde": {"flat_radius": PSITILDE_FLAT * r, "zero_radius": r},
               "eta": {"radius": L, "lattice": L}, "tol_rapdec": tol_rapdec}
    fn = f.norm()
    empty = PacketSet(R, delta, [], DensityFunction.zeros_like(f), fn, cutoffs)
    nz = np.nonzero(np.abs(f.values) > 0)
    if fn == 0 or len(nz[0]) == 0:
        return empty
    axes = f.axes()
    lo = [ax[ix.min()] for ax, ix in zip(axes, nz)]
    hi = [ax[ix.max()] for ax, ix in zip(axes, nz)]
    centers = _lattice(a, np.array(lo) - a, np.array(hi) + a)
    centers = centers[np.linalg.norm(centers, axis=1) <= 1.0]
    thresh = tol_rapdec * fn
    packets = []
    offsets = np.array(list(itertools.product((-1, 0, 1), repeat=d)))
    for c in centers:
        sl = _box_slices(f, c, BOX_HALF_WIDTH * r)
        box_axes = [ax[s] for ax, s in zip(axes, sl)]
        mesh = np.stack(np.meshgrid(*box_axes, indexing="ij"), axis=-1)
        # partition of unity restricted to the box (neighbours within 2a suffice)
        near = centers[np.linalg.norm(centers - c, axis=1) < 2 * a + 1e-12]
        total = sum(bump(_radial(mesh, c2) / a) for c2 in near)
        psi = np.divide(bump(_radial(mesh, c) / a), total, out=np.zeros(mesh.shape[:-1]),
                        where=total > 0)
        g = psi * f.values[sl]
        if not np.any(g):
            continue
        shape = g.shape
        N = [1 << int(math.ceil(math.log2(2 * s))) for s in shape]
        G = np.fft.fftn(g, s=N, axes=tuple(range(d)))
        xi = np.stack(np.meshgrid(*[2 * np.pi * np.fft.fftfreq(m, f.h) for m in N],
                                  indexing="ij"), axis=-1)
        base = np.round(xi / L).astype(int)
        eta_sum = np.zeros(xi.shape[:-1])
        for o in offsets:
            eta_sum += bump(np.linalg.norm(xi - L * (base + o), axis=-1) / L)
        power = np.abs(G) ** 2
        scale = f.h ** d / np.prod(N)  # Parseval: ||g||^2 = scale * sum |G|^2
        sig = power > 1e-3 * thresh ** 2 / scale / power.size
        cand = {tuple(b + o) for b in np.unique(base[sig], axis=0) for o in offsets}
        ptilde = smooth_step((_radial(mesh, c) / r - PSITILDE_FLAT) / (1 - PSITILDE_FLAT))
        cap = Cap(tuple(c), r, "fine")
        for m in sorted(cand):
            v = L * np.array(m, dtype=float)
            eta = bump(np.linalg.norm(xi - v, axis=-1) / L) / eta_sum
            if scale * np.sum(eta ** 2 * power) < thresh ** 2:
                continue
            piece = np.fft.ifftn(G * eta)[tuple(slice(0, s) for s in shape)]
            comp = DensityFunction(f.n, f.h, tuple(ax[0] for ax in box_axes),
                                   piece * ptilde, f.bound)
            comp = comp.crop(c, r)
            nrm = comp.norm()
            if nrm >= thresh:
                packets.append(WavePacket(cap, tuple(v), comp, nrm))
    return PacketSet(R, delta, packets, DensityFunction.zeros_like(f), fn, cutoffs)


def reconstruct(P: PacketSet) -> DensityFunction:
    return P.reconstruct()


def reconstruction_error(f: DensityFunction, P: PacketSet) -> tuple[float, float]:
    """(relative L2 error, sup error / ||f||_2) of the reconstruction."""
    rec = P.reconstruct()
    diff = f - rec
    fn = f.norm()
    if fn == 0:
        return 0.0, 0.0
    return diff.norm() / fn, float(np.max(np.abs(diff.values))) / fn


def parseval_subset_ratios(P: PacketSet, rng, trials: int = 20) -> np.ndarray:
    """||sum_S f_P||^2 / sum_S ||f_P||^2 over random subsets S."""
    out = []
    m = len(P.packets)
    if m == 0:
        return np.ones(0)
    for _ in range(trials):
        S = np.nonzero(rng.random(m) < 0.5)[0]
        if len(S) == 0:
            continue
        num = P.reconstruct(S).norm() ** 2
        out.append(num / np.sum(P.norms()[S] ** 2))
    return np.array(out)


def packet_field(packet: WavePacket, R: float, x_spacing: float = 1.0, rows: int = 65):
    """|Ef_P| on a grid over B_R: returns (points (..., n), |values|)."""
    n = packet.component.n
    xp = np.arange(-R, R + 1e-9, x_spacing)
    xn = np.linspace(-R, R, rows)
    vals = np.abs(evaluate_grid(packet.component, [xp] * (n - 1), xn, R))
    mesh = np.meshgrid(xn, *([xp] * (n - 1)), indexing="ij")
    pts = np.stack(mesh[1:] + mesh[:1], axis=-1)
    return pts, vals


def tube_localization(packet: WavePacket, R: float, delta: float, margins=(2, 3, 4),
                      x_spacing: float | None = None, rows: int = 65) -> dict:
    """max |Ef_P| outside the margin-dilated tube over its in-tube peak, per margin."""
    if packet.norm == 0:
        return {m: 0.0 for m in margins}
    n = packet.component.n
    x_spacing = x_spacing or (1.0 if n == 2 else max(1.0, R / 64))
    pts, vals = packet_field(packet, R, x_spacing, rows)
    tube = packet.tube(R, delta)
    inside_ball = np.linalg.norm(pts, axis=-1) <= R
    off = tube.offset(pts)
    peak = vals[inside_ball & (off <= tube.radius)].max(initial=0.0)
    out = {}
    for m in margins:
        outside = inside_ball & (off > m * tube.radius)
        out[m] = float(vals[outside].max(initial=0.0) / peak) if peak > 0 else math.inf
    return out


def tube_localization_report(P: PacketSet, margins=(2, 3, 4), top: int | None = 8,
                             **kw) -> list[dict]:
    """Localization ratios for the packets of largest norm (all if top is None)."""
    order = np.argsort(-P.norms(), kind="stable")
    if top is not None:
        order = order[:top]
    rows = []
    for i in order:
        p = P.packets[i]
        rows.append({"theta_center": list(p.cap.center), "v": list(p.v), "norm": p.norm,
                     "ratios": tube_localization(p, P.R, P.delta, margins, **kw)})
    return rows


def frequency_mass_outside(packet: WavePacket, R: float, delta: float) -> float:
    """Fraction of the discrete Fourier mass of exp(-i v.w) f_P outside radius
    R^(1/2+delta/2) log R."""
    comp = packet.component
    w = comp.mesh()
    demod = comp.values * np.exp(-1j * (w @ np.array(packet.v)))
    N = [1 << int(math.ceil(math.log2(4 * s))) for s in demod.shape]
    G = np.abs(np.fft.fftn(demod, s=N, axes=tuple(range(demod.ndim)))) ** 2
    xi = np.stack(np.meshgrid(*[2 * np.pi * np.fft.fftfreq(m, comp.h) for m in N],
                              indexing="ij"), axis=-1)
    far = np.linalg.norm(xi, axis=-1) > R ** (0.5 + delta / 2) * math.log(R)
    tot = G.sum()
    return float(G[far].sum() / tot) if tot > 0 else 0.0


# ------------------------------------------------------------ smaller balls

def redecompose_at_ball(source, y, rho: float, delta: float | None = None,
                        R: float | None = None, tol_rapdec: float = TOL_RAPDEC) -> PacketSet:
    """Decompose modulate_to_ball(f, y) into packets adapted to B_rho."""
    if isinstance(source, PacketSet):
        f = source.reconstruct()
        R = source.R if R is None else R
        delta = source.delta if delta is None else delta
    else:
        f = source
        if R is None:
            raise ValueError("R is required when decomposing a bare density")
    delta = 0.1 if delta is None else delta
    if not (math.sqrt(R) < rho <= R):
        raise ScaleOrderViolation(f"need R^1/2 < rho <= R, got rho={rho}, R={R}")
    return decompose(modulate_to_ball(f, y), rho, delta, tol_rapdec)


def in_ttilde(fine: WavePacket, coarse: WavePacket, y, R: float, rho: float, delta: float,
              constant: float = CLASS_CONSTANT) -> bool:
    """Membership of a rho-packet in the set attached to a fine packet."""
    if coarse.cap.distance(fine.cap) > constant * rho ** -0.5:
        return False
    shift = np.array(fine.v) + vbar(fine.cap.center_array, y) - np.array(coarse.v)
    return bool(np.linalg.norm(shift) <= constant * R ** (0.5 + delta / 2))


def ttilde_mass_report(fine: WavePacket, y, R: float, rho: float, delta: float,
                       constant: float = CLASS_CONSTANT) -> dict:
    """How much of the modulated fine packet is carried by its attached rho-packets."""
    ft = modulate_to_ball(fine.component, y)
    Q = decompose(ft, rho, delta)
    if not Q.packets:
        raise EmptyPacketSet("fine packet produced no rho-packets")
    member = [in_ttilde(fine, q, y, R, rho, delta, constant) for q in Q.packets]
    idx = [i for i, m in enumerate(member) if m]
    captured = Q.reconstruct(idx) if idx else DensityFunction.zeros_like(ft)
    fn = ft.norm()
    residual = (ft - captured).norm() / fn
    sq = Q.norms() ** 2
    return {"residual_fraction": residual ** 2, "captured_fraction": 1 - residual ** 2,
            "square_sum_fraction": float(sq[idx].sum() / sq.sum()) if idx else 0.0,
            "members": idx, "coarse": Q}


def hausdorff_distance(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 or len(b) == 0:
        return math.inf
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))


def tube_hausdorff(fine: WavePacket, coarse: WavePacket, y, R: float, rho: float,
                   delta: float) -> float:
    """Sampled Hausdorff distance between T_{coarse} (in B_rho around y) and
    T_{fine} intersected with B(y, rho), both in coordinates centred at y."""
    shifted = Tube(fine.cap, tuple(np.array(fine.v) + vbar(fine.cap.center_array, y)),
                   R ** (0.5 + delta), rho, rho)
    small = Tube(coarse.cap, coarse.v, rho ** (0.5 + delta), rho, rho)
    return hausdorff_distance(shifted.cross_section_samples(96, 3),
                              small.cross_section_samples(96, 3))


@dataclass
class CoarsePacketClass:
    theta: Cap
    w: tuple
    members: list
    tube: Tube

    def field(self, packets: list, template: DensityFunction) -> DensityFunction:
        out = np.zeros(template.shape, dtype=complex)
        for i in self.members:
            out += packets[i].component.embed(template)
        return DensityFunction(template.n, template.h, template.lo, out, template.bound)


def coarse_classes(packets: list, y, R: float, rho: float, delta: float) -> list[CoarsePacketClass]:
    """Group fine packets by nearest coarse cap and nearest point of the
    R^(1/2+delta/2) lattice to v + vbar. Disjoint by construction."""
    if not (math.sqrt(R) < rho <= R):
        raise ScaleOrderViolation(f"need R^1/2 < rho <= R, got rho={rho}, R={R}")
    rc = rho ** -0.5
    lw = R ** (0.5 + delta / 2)
    groups: dict = {}
    for i, p in enumerate(packets):
        c = p.cap.center_array
        ct = np.round(c / rc) * rc
        if np.linalg.norm(ct) > 1:
            ct = ct * (1 / np.linalg.norm(ct))
        w = np.round((np.array(p.v) + vbar(c, y)) / lw) * lw
        key = (tuple(np.round(ct / rc).astype(int)), tuple(np.round(w / lw).astype(int)))
        groups.setdefault(key, (ct, w, []))[2].append(i)
    out = []
    for key in sorted(groups):
        ct, w, mem = groups[key]
        cap = Cap(tuple(ct), min(rc, 1.0), "fine")
        out.append(CoarsePacketClass(cap, tuple(w), mem, Tube(cap, tuple(w), R ** (0.5 + delta), rho, rho)))
    return out


def class_orthogonality(classes: list, packets: list, template: DensityFunction) -> float:
    """sum over classes ||g_class||^2 / ||g||^2 with g the sum of all members."""
    total = np.zeros(template.shape, dtype=complex)
    s = 0.0
    for cl in classes:
        g = cl.field(packets, template)
        s += g.norm() ** 2
        total += g.values
    gn = DensityFunction(template.n, template.h, template.lo, total, template.bound).norm()
    return float(s / gn ** 2) if gn > 0 else 1.0


def angle_consistency_check(cl: CoarsePacketClass, packets: list) -> float:
    if not cl.members:
        raise EmptyPacketSet("class has no members")
    gt = cl.theta.direction()
    worst = 0.0
    for i in cl.members:
        g = packets[i].cap.direction()
        worst = max(worst, float(np.arccos(np.clip(g @ gt, -1.0, 1.0))))
    return worst


def angle_between_caps(a: Cap, b: Cap) -> float:
    return float(np.arccos(np.clip(direction_of(a.center_array) @ direction_of(b.center_array), -1, 1)))


def canonical_packet(template: DensityFunction, center, radius: float, v) -> np.ndarray:
    """Values of bump(|w - c| / radius) exp(i v.w) on the template grid; its
    extension concentrates on the tube through -v with direction G(c)."""
    w = template.mesh()
    vals = bump(_radial(w, center) / radius) * np.exp(1j * (w @ np.asarray(v, float)))
    if template.mask is not None:
        vals = vals * template.mask
    return vals
