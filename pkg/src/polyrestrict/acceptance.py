"""Acceptance suite: one function per criterion, shared by the CLI and the tests.

Each function returns a CriterionResult with the measured quantities, the
thresholds they were compared against and the wall-clock time.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import broad, geometry, partition as part_mod, sharp, varieties, wavepackets
from .config import derive_rng, derive_seed
from .extension import (DensityFunction, bump, evaluate_extension, grid_spacing, parabolic_rescale,
                        random_smooth_density, slice_l2)
from .geometry import Cap, Tube

PROFILES = {
    "default": {"plancherel": 0.01, "recon": 1e-3, "localization": 1e-3, "orth": 2.0,
                "ttilde": 0.99, "hausdorff": 4.0, "angle": 4.0, "narrow": 10.0,
                "slope4": 0.1, "slope3": 0.08, "theta_slope": 0.2, "heis": 10.0,
                "equid_slope": 0.2, "rescale": 1e-5, "quadric": 1e-6, "broadness": 0.5},
    "strict": {"plancherel": 0.005, "recon": 5e-4, "localization": 1e-3, "orth": 2.0,
               "ttilde": 0.99, "hausdorff": 3.0, "angle": 3.0, "narrow": 5.0,
               "slope4": 0.05, "slope3": 0.05, "theta_slope": 0.15, "heis": 5.0,
               "equid_slope": 0.15, "rescale": 1e-7, "quadric": 1e-9, "broadness": 0.4},
}

BUDGETS = {1: 1, 2: 60, 3: 300, 4: 600, 5: 600, 6: 600, 7: 1800, 8: 1200, 9: 900, 10: 120, 11: 60}


@dataclass
class Check:
    name: str
    value: float | str
    threshold: str
    passed: bool


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0
    budget: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and self.seconds <= self.budget

    def add(self, name, value, threshold, passed):
        self.checks.append(Check(name, value if isinstance(value, str) else float(value), threshold,
                                 bool(passed)))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = [f"{c.name}={_fmt(c.value)} ({c.threshold}){'' if c.passed else ' !'}" for c in self.checks]
        return (f"[{status}] criterion {self.number}: {self.title} | " + "; ".join(parts)
                + f" | {self.seconds:.1f}s (budget {self.budget:.0f}s)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _fmt(v):
    return v if isinstance(v, str) else f"{v:.4g}"


def _timed(number, title):
    def deco(fn):
        def wrapper(seed: int = 0, profile: str = "default"):
            res = CriterionResult(number, title, budget=BUDGETS[number])
            t0 = time.perf_counter()
            fn(res, seed, PROFILES[profile])
            res.seconds = time.perf_counter() - t0
            return res
        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        wrapper.number = number
        return wrapper
    return deco


# ------------------------------------------------------------------ 1
@_timed(1, "exact exponent identities")
def exponent_identities(res, seed, tol):
    ok = geometry.restriction_exponent(4) == Fraction(14, 5)
    res.add("restriction exponent(4)", str(geometry.restriction_exponent(4)), "= 14/5", ok)
    ok = all(geometry.critical_exponent(n, n) == Fraction(2 * n, n - 1) for n in range(2, 13))
    res.add("critical(n,n)=2n/(n-1), n<=12", "all" if ok else "mismatch", "exact", ok)
    ok = all(geometry.broad_e(k, n, geometry.critical_exponent(k, n)) == Fraction(1, 2)
             for n in range(2, 13) for k in range(2, n + 1))
    res.add("e(k,n,critical)=1/2", "all" if ok else "mismatch", "exact", ok)
    ok = all(geometry.regular_lower_bound(geometry.choose_k(n), n)
             == geometry.critical_exponent(geometry.choose_k(n), n) for n in range(2, 13, 2))
    res.add("regular bound = critical, even n<=12", "all" if ok else "mismatch", "exact", ok)
    ok = all(sharp.predicted_slab_exponent(n, k, geometry.critical_exponent(k, n)) == 0
             for n in range(2, 9) for k in range(2, n + 1))
    res.add("slab exponent zero at critical, n<=8", "all" if ok else "mismatch", "exact", ok)


# ------------------------------------------------------------------ 2
@_timed(2, "Plancherel on slices (n=2, R=256)")
def plancherel_slices(res, seed, tol):
    R = 256
    rng = derive_rng(seed, "plancherel")
    h = grid_spacing(R)
    ratios = []
    for _ in range(5):
        f = random_smooth_density(2, h, rng)
        for xn in (0.0, R / 2):
            s, fn = slice_l2(f, R, xn)
            ratios.append(s / fn)
    worst = max(abs(r - 1) for r in ratios)
    res.add("max |ratio-1|", worst, f"<= {tol['plancherel']}", worst <= tol["plancherel"])
    res.details["ratios"] = ratios


# ------------------------------------------------------------------ 3
@_timed(3, "wave packets (n=2, R=256, delta=0.1)")
def wave_packets(res, seed, tol):
    R, delta = 256, 0.1
    rng = derive_rng(seed, "wavepackets")
    f = random_smooth_density(2, grid_spacing(R), rng)
    P = wavepackets.decompose(f, R, delta)
    err, sup = wavepackets.reconstruction_error(f, P)
    res.add("reconstruction rel L2", err, f"<= {tol['recon']}", err <= tol["recon"])
    orth = P.orthogonality_factor()
    c = tol["orth"]
    res.add("orthogonality factor", orth, f"in [1/{c:g}, {c:g}]", 1 / c <= orth <= c)
    rep = wavepackets.tube_localization_report(P, margins=(2, 3, 4), top=8)
    worst = max(r["ratios"][2] for r in rep)
    res.add("localization ratio @margin 2", worst, f"<= {tol['localization']}", worst <= tol["localization"])
    mono = all(r["ratios"][2] >= r["ratios"][3] >= r["ratios"][4] for r in rep)
    res.add("ratio nonincreasing in margin", "yes" if mono else "no", "m=2,3,4", mono)
    subs = wavepackets.parseval_subset_ratios(P, rng, 10)
    res.details.update({"packets": len(P), "sup_error": sup, "subset_ratios": subs.tolist(),
                        "localization": [r["ratios"] for r in rep]})


# ------------------------------------------------------------------ 4
@_timed(4, "re-decomposition at B(y, rho) (R=1024, rho=256)")
def redecomposition(res, seed, tol):
    R, rho, delta = 1024, 256, 0.1
    rng = derive_rng(seed, "redecompose")
    f = random_smooth_density(2, grid_spacing(R), rng)
    P = wavepackets.decompose(f, R, delta)
    norms = P.norms()
    big = np.nonzero(norms >= 1e-2 * norms.max())[0]
    tested = rng.choice(big, size=min(12, len(big)), replace=False)
    captured, haus = [], []
    for i in tested:
        p = P.packets[i]
        tube = p.tube(R, delta)
        iv = tube.axis_interval()
        y = tube.axis_point([rng.uniform(0.5 * iv[0], 0.5 * iv[1])])[0]
        rep = wavepackets.ttilde_mass_report(p, y, R, rho, delta)
        captured.append(rep["captured_fraction"])
        Q = rep["coarse"]
        qn = Q.norms()
        sig = [j for j in rep["members"] if qn[j] >= 0.05 * qn.max()]
        haus.append(max(wavepackets.tube_hausdorff(p, Q.packets[j], y, R, rho, delta) for j in sig)
                    / R ** (0.5 + delta))
    res.add("min mass fraction in attached set", min(captured), f">= {tol['ttilde']}",
            min(captured) >= tol["ttilde"])
    res.add("Hausdorff constant", max(haus), f"<= {tol['hausdorff']}", max(haus) <= tol["hausdorff"])
    pick = rng.choice(len(P.packets), size=min(50, len(P.packets)), replace=False)
    pk = [P.packets[i] for i in pick]
    y = rng.uniform(-R / 4, R / 4, size=2)
    classes = wavepackets.coarse_classes(pk, y, R, rho, delta)
    orth = wavepackets.class_orthogonality(classes, pk, P.template)
    c = tol["orth"]
    res.add("class orthogonality factor", orth, f"in [1/{c:g}, {c:g}]", 1 / c <= orth <= c)
    ang = max(wavepackets.angle_consistency_check(cl, pk) for cl in classes) * math.sqrt(rho)
    res.add("angle constant", ang, f"<= {tol['angle']}", ang <= tol["angle"])
    res.details.update({"captured": captured, "hausdorff": haus, "classes": len(classes)})


# ------------------------------------------------------------------ 5
@_timed(5, "broad-norm algebra (n=2, K=8, k=2)")
def broad_algebra(res, seed, tol):
    R, K, k = 64, 8, 2
    rng = derive_rng(seed, "broad")
    h = grid_spacing(R)
    tri = hol = mono = 0
    worst_tri = worst_hol = 0.0
    cands = None
    for _ in range(100):
        g = random_smooth_density(2, h, rng, modes=4)
        hh = random_smooth_density(2, h, rng, modes=4).scaled(rng.uniform(0.2, 5))
        bg, bh = broad.build_bundle(g, R, K), broad.build_bundle(hh, R, K)
        if cands is None:
            cands = broad.candidate_subspaces(bg.directions, k, "caps")
        t = broad.verify_triangle(bg, bh, broad.BroadParams(k, 2, K, 3.0), cands)
        tri += t["violated"]
        worst_tri = max(worst_tri, t["ratio"] / t["constant"])
        hres = broad.verify_holder(bg, k, K, 1, 1, 3, 2, 6, Fraction(1, 2), Fraction(1, 2), cands)
        hol += hres["violated"]
        worst_hol = max(worst_hol, hres["ratio"])
        mono += not broad.a_monotone(bg, k, K, 3.0, cands)
    res.add("triangle violations", tri, "= 0", tri == 0)
    res.add("Holder violations", hol, "= 0", hol == 0)
    res.add("A-monotonicity failures", mono, "= 0", mono == 0)
    nrng = derive_rng(seed, "narrow")
    worst = max(broad.narrow_count(n, kk, KK, nrng)["constant"]
                for n in (2, 3, 4) for kk in range(2, n + 1) for KK in (4, 8, 16))
    res.add("narrow-count constant", worst, f"<= {tol['narrow']}", worst <= tol["narrow"])
    res.details.update({"max_triangle_ratio_over_constant": worst_tri, "max_holder_ratio": worst_hol})


# ------------------------------------------------------------------ 6
def _random_tubes(R, delta, count, rng):
    r = R ** -0.5
    tubes = []
    while len(tubes) < count:
        c = np.round(rng.uniform(-0.9, 0.9) / r) * r
        v = rng.uniform(-R, R)
        t = Tube.from_packet(Cap((c,), r), (v,), R, delta)
        if t.axis_interval() is not None:
            tubes.append(t)
    return tubes


@_timed(6, "polynomial partitioning (n=2, D in {2,3,4})")
def partitioning(res, seed, tol):
    balance_fail = cross_fail = tube_fail = 0
    worst_cross = worst_tube = 0
    fractions = []
    for D in (2, 3, 4):
        for s in range(10):
            rng = derive_rng(seed, f"partition-{D}-{s}")
            mu = part_mod.WeightedPoints(rng.uniform(-1, 1, (10 ** 4, 2)), rng.uniform(0.5, 1.5, 10 ** 4))
            P = part_mod.partition(mu, D, seed=derive_seed(seed, f"bisect-{D}-{s}"))
            fr = np.array(list(P.cells.values())) / P.total_weight * 2 ** P.S
            fractions += [float(fr.min()), float(fr.max())]
            balance_fail += not P.balanced()
            for _ in range(100):
                a, b = rng.uniform(-1.5, 1.5, (2, 2))
                c = part_mod.line_cell_crossings(a, b, P)
                worst_cross = max(worst_cross, c - P.degree - 1)
                cross_fail += c > P.degree + 1
        # tubes against a partition of a ball measure at scale R
        R, delta = 64, 0.1
        rng = derive_rng(seed, f"tubes-{D}")
        pts = rng.uniform(-R, R, (4 * 10 ** 4, 2))
        pts = pts[np.linalg.norm(pts, axis=1) <= R][:10 ** 4]
        mu = part_mod.WeightedPoints(pts, rng.uniform(0.5, 1.5, len(pts)))
        P = part_mod.partition(mu, D, seed=derive_seed(seed, f"tube-bisect-{D}"))
        tubes = _random_tubes(R, delta, 200, rng)
        inc = part_mod.tube_cell_incidences(tubes, P, R ** (0.5 + delta))
        counts = [len(c) for c in inc]
        worst_tube = max(worst_tube, max(counts) - P.degree - 1)
        tube_fail += sum(c > P.degree + 1 for c in counts)
    res.add("cells outside window", balance_fail, "= 0 of 30 partitions", balance_fail == 0)
    res.add("line crossing violations", cross_fail, "= 0 of 3000 lines", cross_fail == 0)
    res.add("tube incidence violations", tube_fail, "= 0 of 600 tubes", tube_fail == 0)
    res.details.update({"normalized_cell_weight_range": [min(fractions), max(fractions)],
                        "max_crossings_minus_bound": worst_cross, "max_tube_minus_bound": worst_tube})


# ------------------------------------------------------------------ 7
@_timed(7, "slab scaling (n=2, k=2, R=64..512)")
def slab_scaling(res, seed, tol):
    runs = sharp.slab_scaling([4, 3], [64, 128, 256, 512], K=4, A=0, seed=derive_seed(seed, "slab"))
    s4, s3 = runs[4].slope, runs[3].slope
    res.add("slope p=4", s4, f"0 +- {tol['slope4']}", abs(s4) <= tol["slope4"])
    res.add("slope p=3", s3, f"1/6 +- {tol['slope3']}", abs(s3 - 1 / 6) <= tol["slope3"])
    runs_a2 = sharp.slab_scaling([4], [64, 128, 256], K=4, A=2, seed=derive_seed(seed, "slab"))
    res.details.update({"p4": runs[4].summary(), "p3": runs[3].summary(),
                        "A2_p4": runs_a2[4].summary()})


# ------------------------------------------------------------------ 8
@_timed(8, "Theta(Z) for a 2-plane in R^3")
def theta_plane(res, seed, tol):
    counts = {}
    for R in (64, 256):
        counts[R], _ = varieties.theta_count(varieties.coordinate_plane(3, 0, scale=R), R, 0.1)
    slope = math.log(counts[256] / counts[64]) / math.log(4)
    res.add("log-log slope", slope, f"1/2 +- {tol['theta_slope']}", abs(slope - 0.5) <= tol["theta_slope"])
    res.details["counts"] = counts


# ------------------------------------------------------------------ 9
@_timed(9, "uncertainty and transverse equidistribution")
def uncertainty(res, seed, tol):
    rng = derive_rng(seed, "heis")
    c1 = varieties.concentration_check(1.0, 0.25, 50, 1, rng)["constant"]
    c2 = varieties.concentration_check(1.0, 0.25, 50, 2, rng)["constant"]
    res.add("concentration constant (1-D)", c1, f"<= {tol['heis']}", c1 <= tol["heis"])
    res.add("concentration constant (2-D)", c2, f"<= {tol['heis']}", c2 <= tol["heis"])
    R, dm = 1024, 0.1
    g = varieties.tangent_packet_density(R, dm, derive_rng(seed, "equid"))
    rep = varieties.transverse_equidistribution_check(g, R, [64, 256], dm)
    res.add("equidistribution slope", rep["slope"], f"-1/2 +- {tol['equid_slope']}",
            abs(rep["slope"] + 0.5) <= tol["equid_slope"])
    bound = 20 * R ** (4 * dm)
    worst = max(r["normalized"] for r in rep["rows"])
    res.add("normalized ratio", worst, f"<= 20 R^(4 delta_m) = {bound:.3g}", worst <= bound)
    res.details["equidistribution"] = rep


# ------------------------------------------------------------------ 10
@_timed(10, "parabolic rescaling (n=2, K in {2,4})")
def rescaling(res, seed, tol):
    R = 256
    rng = derive_rng(seed, "rescale")
    h = grid_spacing(R)
    worst = 0.0
    for K, center in ((2, 0.5), (4, 0.25)):
        tau = Cap((center,), 1.0 / K, "coarse")
        coef = rng.normal(size=3) + 1j * rng.normal(size=3)
        f = DensityFunction.on_ball(2, h, lambda w: bump((w[..., 0] - center) * K * 1.05)
                                    * (coef[0] + coef[1] * np.exp(5j * w[..., 0]) + coef[2] * np.exp(-9j * w[..., 0])))
        ft, amap = parabolic_rescale(f, tau, K)
        X = rng.uniform(-R / 2, R / 2, size=(50, 2))
        a = np.abs(evaluate_extension(f, X, R).values)
        b = np.abs(evaluate_extension(ft, amap(X), R / K).values) / K
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(a, 1e-300))))
    res.add("max relative modulus error", worst, f"<= {tol['rescale']}", worst <= tol["rescale"])


# ------------------------------------------------------------------ 11
@_timed(11, "quadric line family and broadness")
def quadric(res, seed, tol):
    rng = derive_rng(seed, "quadric")
    R = 256.0
    worst = 0.0
    for z in [np.array([R, 0, 0, 0])] + [sharp.quadric_point(R, rng) for _ in range(9)]:
        fam = sharp.quadric_line_family(R, z)
        for phi in rng.uniform(0, 2 * math.pi, 5):
            worst = max(worst, sharp.line_residual(fam, R, phi, np.linspace(-2 * R, 2 * R, 10)))
    res.add("max line residual", worst, f"<= {tol['quadric']}", worst <= tol["quadric"])
    probe = sharp.quadric_broadness_probe(R, points=4, directions=64, K=8, rng=rng)
    res.add("max plane fraction", probe["max_fraction"], f"<= {tol['broadness']}",
            probe["max_fraction"] <= tol["broadness"])
    ctrl = sharp.collapsed_cone_control()
    res.add("collapsed-cone control flagged", "yes" if not ctrl["broad"] else "no", "fraction 1", not ctrl["broad"])


CRITERIA = [exponent_identities, plancherel_slices, wave_packets, redecomposition, broad_algebra,
            partitioning, slab_scaling, theta_plane, uncertainty, rescaling, quadric]


def run_all(seed: int = 0, profile: str = "default", only=None, log=print) -> list[CriterionResult]:
    out = []
    for fn in CRITERIA:
        if only and fn.number not in only:
            continue
        r = fn(seed, profile)
        if log:
            log(r.line())
        out.append(r)
    return out
