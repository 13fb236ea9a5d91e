"""Command-line entry point: one subcommand per experiment family.

Primary outputs (CSV and JSON) are byte-identical for a given config and seed.
Wall-clock data goes only to metadata.json.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENTS, ExperimentConfig, derive_rng, derive_seed
from .errors import PolyRestrictError


class Run:
    """Output directory plus provenance stamped into every artifact."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.hash = cfg.hash()
        self.dir = Path(cfg.out) / cfg.experiment / self.hash[:12]
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def stamp(self) -> dict:
        return {"config_hash": self.hash, "seed": self.cfg.seed, "experiment": self.cfg.experiment}

    def write_json(self, name: str, payload: dict):
        body = {**self.stamp(), **payload}
        text = json.dumps(_plain(body), indent=1, sort_keys=True) + "\n"
        (self.dir / name).write_text(text)
        self.files.append(name)

    def write_csv(self, name: str, text: str):
        head = f"# config_hash={self.hash} seed={self.cfg.seed}\n"
        (self.dir / name).write_text(head + text)
        self.files.append(name)


def _plain(x):
    """JSON-safe copy: Fractions as strings, numpy scalars as Python numbers."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


# ------------------------------------------------------------ experiments

def run_exponents(run: Run):
    from .geometry import exponent_table, exponent_table_csv
    ns = range(2, max(12, run.cfg.n) + 1)
    run.write_csv("exponents.csv", exponent_table_csv(ns))
    run.write_json("exponents.json", {"rows": exponent_table(ns)})
    return 0


def run_wavepackets(run: Run):
    from . import wavepackets as wp
    from .extension import grid_spacing, random_smooth_density
    cfg = run.cfg
    f = random_smooth_density(cfg.n, grid_spacing(cfg.R, cfg.c_quad), derive_rng(cfg.seed, "wavepackets"))
    P = wp.decompose(f, cfg.R, cfg.delta)
    err, sup = wp.reconstruction_error(f, P)
    rep = wp.tube_localization_report(P, margins=(2, 3, 4), top=8)
    run.write_json("manifest.json", json.loads(P.manifest_json()))
    run.write_json("report.json", {
        "packets": len(P), "reconstruction_rel_l2": err, "reconstruction_sup": sup,
        "orthogonality_factor": P.orthogonality_factor(),
        "subset_ratios": wp.parseval_subset_ratios(P, derive_rng(cfg.seed, "subsets"), 10),
        "localization": [{**r, "ratios": {str(k): v for k, v in r["ratios"].items()}} for r in rep]})
    return 0


def run_broadnorm(run: Run):
    from . import broad
    from .extension import grid_spacing, random_smooth_density
    cfg = run.cfg
    rng = derive_rng(cfg.seed, "broadnorm")
    h = grid_spacing(cfg.R, cfg.c_quad)
    g = random_smooth_density(cfg.n, h, rng)
    other = random_smooth_density(cfg.n, h, rng)
    bg, bo = broad.build_bundle(g, cfg.R, cfg.K), broad.build_bundle(other, cfg.R, cfg.K)
    cands = broad.candidate_subspaces(bg.directions, cfg.k, "caps")
    rows = []
    for p in cfg.p_fractions():
        params = broad.BroadParams(cfg.k, cfg.A, cfg.K, float(p))
        val, table = broad.bl_norm_bundle(bg, params, cands, return_table=True)
        run.write_csv(f"mu_p{str(p).replace('/', '_')}.csv", broad.mu_csv(bg, table, cands))
        rows.append({"p": p, "bl_norm": val, "lp_norm": broad.lp_norm(bg, float(p)),
                     "a_monotone": broad.a_monotone(bg, cfg.k, cfg.K, float(p), cands)})
    tri = broad.verify_triangle(bg, bo, broad.BroadParams(cfg.k, 2 * (cfg.A // 2), cfg.K, 3.0), cands)
    hol = broad.verify_holder(bg, cfg.k, cfg.K, 1, 1, 3, 2, 6, Fraction(1, 2), Fraction(1, 2), cands)
    run.write_json("broadnorm.json", {"norms": rows, "triangle": tri, "holder": hol,
                                      "caps": len(bg.caps), "balls": len(bg.cover),
                                      "candidates": len(cands)})
    return 0


def run_partition(run: Run):
    from . import partition as pm
    cfg = run.cfg
    summary = []
    for D in cfg.D:
        rng = derive_rng(cfg.seed, f"partition-{D}")
        mu = pm.WeightedPoints(rng.uniform(-1, 1, (10 ** 4, cfg.n)), rng.uniform(0.5, 1.5, 10 ** 4))
        kw = {} if cfg.eps is None else {"eps": cfg.eps}
        P = pm.partition(mu, int(D), seed=derive_seed(cfg.seed, f"bisect-{D}"), **kw)
        lines = [pm.line_cell_crossings(*rng.uniform(-1.5, 1.5, (2, cfg.n)), P) for _ in range(100)]
        run.write_json(f"partition_D{D}.json", json.loads(P.to_json()))
        fr = np.array(list(P.cells.values())) / P.total_weight
        summary.append({"D": D, "S": P.S, "degree": P.degree, "cells": len(P.cells),
                        "balanced": P.balanced(), "window": P.balance_window(),
                        "min_fraction": fr.min(), "max_fraction": fr.max(),
                        "max_line_cells": max(lines), "line_bound": P.degree + 1})
    run.write_json("partition.json", {"partitions": summary})
    return 0


def run_varieties(run: Run):
    from . import varieties as vm
    from .geometry import Cap, Tube
    cfg = run.cfg
    R = cfg.R
    rng = derive_rng(cfg.seed, "varieties")
    r = R ** -0.5
    thick = R ** (0.5 + cfg.delta)
    params = vm.TangencyParams(R, cfg.delta_m)
    plane = vm.coordinate_plane(3, 0, scale=R)
    tang = {}
    for name, Z, tube in [
            ("parabola_axis_tube", vm.parabola_graph(R), Tube(Cap((0.0,), r), (0.0,), thick, R, R)),
            ("plane_inplane_tube", plane, Tube(Cap((0.0, 0.3), r), (0.0, 0.0), thick, R, R)),
            ("plane_crossing_tube", plane, Tube(Cap((0.5, 0.0), r), (0.0, 0.0), thick, R, R))]:
        ok, wit = vm.is_tangent_tube(tube, Z, params, rng)
        tang[name] = {"tangent": ok, "witness": wit}
    cover = vm.transverse_cover(vm.sphere(2, R / 2), Tube(Cap((0.0,), r), (0.0,), thick, R, R), 0.5, rng)
    count, _ = vm.theta_count(plane, R, cfg.delta)
    g = vm.tangent_packet_density(R, cfg.delta_m, rng)
    eq = vm.transverse_equidistribution_check(g, R, [R / 16, R / 4], cfg.delta_m)
    run.write_json("varieties.json", {
        "tangency": tang, "sphere_cover": {k: v for k, v in cover.items() if k != "balls"},
        "theta_count_plane": count, "concentration_1d": vm.concentration_check(1.0, 0.25, 10, 1, rng),
        "equidistribution": eq})
    return 0


def run_slab(run: Run):
    from .sharp import slab_scaling
    cfg = run.cfg
    runs = slab_scaling([float(p) for p in cfg.p_fractions()], cfg.R_list, K=cfg.K, A=cfg.A,
                        seed=derive_seed(cfg.seed, "slab"), k=cfg.k, n=cfg.n)
    for p, sr in runs.items():
        run.write_csv(f"slab_p{p:g}.csv", sr.to_csv())
    run.write_json("slab.json", {"runs": [{"p": str(fp), **sr.summary()}
                                          for fp, sr in zip(cfg.p_fractions(), runs.values())]})
    return 0


def run_verify_all(run: Run):
    from .acceptance import run_all
    results = run_all(run.cfg.seed, run.cfg.tolerance_profile, log=lambda s: print(s, flush=True))
    timing = {r.number: r.seconds for r in results}
    rows = []
    for r in results:
        d = r.to_dict()
        d.pop("seconds")    # wall clock lives in metadata.json
        rows.append(d)
    run.write_json("acceptance.json", {"profile": run.cfg.tolerance_profile, "criteria": rows,
                                       "all_passed": all(r.passed for r in results)})
    run.timing = timing
    return 0 if all(r.passed for r in results) else 1


RUNNERS = {"exponents": run_exponents, "wavepackets": run_wavepackets, "broadnorm": run_broadnorm,
           "partition": run_partition, "varieties": run_varieties, "slab": run_slab,
           "verify-all": run_verify_all}


# ------------------------------------------------------------ plumbing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyrestrict", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="root seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory (default runs/)")
    common.add_argument("--threads", type=int, help="threads for compiled kernels")
    common.add_argument("--tolerance-profile", choices=["default", "strict"])
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common])
    return parser


def load_config(args) -> ExperimentConfig:
    overrides = {"seed": args.seed, "out": args.out, "threads": args.threads,
                 "tolerance_profile": args.tolerance_profile, "experiment": args.experiment}
    if args.config:
        cfg = ExperimentConfig.from_file(args.config, **overrides)
    else:
        cfg = ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if cfg.threads:
            os.environ["POLYRESTRICT_THREADS"] = str(cfg.threads)
        run = Run(cfg)
        started = datetime.now(timezone.utc).isoformat()
        t0 = time.perf_counter()
        code = RUNNERS[cfg.experiment](run)
        from .kernels import BACKEND
        meta = {"started": started, "seconds": time.perf_counter() - t0, "backend": BACKEND,
                "version": __version__, "threads": cfg.threads, "config": cfg.canonical(),
                "config_hash": run.hash, "files": run.files}
        if hasattr(run, "timing"):
            meta["criterion_seconds"] = run.timing
        (run.dir / "metadata.json").write_text(json.dumps(_plain(meta), indent=1, sort_keys=True) + "\n")
        print(json.dumps({"status": "ok" if code == 0 else "failed", "output": str(run.dir)}))
        return code
    except PolyRestrictError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
