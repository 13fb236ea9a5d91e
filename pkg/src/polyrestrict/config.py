"""Experiment configuration, hashing and labelled seed derivation."""
from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError

EXPERIMENTS = ("exponents", "wavepackets", "broadnorm", "partition", "varieties", "slab", "verify-all")


def derive_rng(seed: int, label: str) -> np.random.Generator:
    """Independent stream per (root seed, label)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2 ** 64 - 1), zlib.crc32(label.encode())]))


def derive_seed(seed: int, label: str) -> int:
    return int(derive_rng(seed, label).integers(2 ** 31))


@dataclass
class ExperimentConfig:
    experiment: str = "verify-all"
    n: int = 2
    k: int = 2
    K: float = 4
    A: int = 0
    p: list = field(default_factory=lambda: ["4", "3"])
    R: float = 256
    R_list: list = field(default_factory=lambda: [64, 128, 256, 512])
    delta: float = 0.1
    delta_m: float = 0.1
    eps: float | None = None
    D: list = field(default_factory=lambda: [2, 3, 4])
    seed: int = 0
    c_quad: float = 0.25
    tolerance_profile: str = "default"
    threads: int | None = None
    out: str = "runs"

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if not 2 <= self.k <= self.n:
            raise ConfigError("k must satisfy 2 <= k <= n")
        if self.K <= 1:
            raise ConfigError("K must exceed 1")
        if self.A < 0:
            raise ConfigError("A must be nonnegative")
        try:
            ps = [Fraction(str(x)) for x in self.p]
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"p values must be exact rationals: {exc}") from None
        if any(x < 1 for x in ps):
            raise ConfigError("p must be at least 1")
        if self.R <= 1 or any(r <= 1 for r in self.R_list):
            raise ConfigError("R values must exceed 1")
        if not 0 < self.delta < 0.5 or not 0 < self.delta_m < 0.5:
            raise ConfigError("delta values must lie in (0, 1/2)")
        if self.eps is not None and not 0 < self.eps < 0.5:
            raise ConfigError("eps must lie in (0, 1/2)")
        if any(int(d) < 2 for d in self.D):
            raise ConfigError("partition degrees must be at least 2")
        if not 0 < self.c_quad <= 1:
            raise ConfigError("c_quad must lie in (0, 1]")
        if self.tolerance_profile not in ("default", "strict"):
            raise ConfigError("tolerance profile must be default or strict")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return self

    def p_fractions(self) -> list[Fraction]:
        return [Fraction(str(x)) for x in self.p]

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out")       # output location does not change results
        d.pop("threads")   # nor does the thread count
        d["p"] = [str(Fraction(str(x))) for x in self.p]
        return d

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_file(cls, path: str, **overrides) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)
