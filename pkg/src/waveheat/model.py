"""Plant configuration: geometry, reaction coefficient, coupling profile, damping.

The coupling profile beta is either piecewise constant or sampled on a
uniform grid (linear interpolation between samples).  Validation enforces
the non-resonance margin between the parabolic spectrum shifted by the
boundary-damping decay rate rho(alpha) and the reaction coefficient.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["BetaSpec", "PlantConfig", "ValidationReport", "validate", "rho",
           "load_config", "EPS_ALPHA"]

EPS_ALPHA = 1e-6


@dataclass(frozen=True)
class BetaSpec:
    """Coupling profile on [0, L].

    kind "piecewise": pieces = tuple of (x_lo, x_hi, value), sorted,
    non-overlapping.  kind "sampled": values on a uniform grid over [0, L]
    (>= 64 points), linearly interpolated.
    """

    kind: str
    pieces: tuple = ()
    samples: tuple = ()
    L: float = 1.0

    @staticmethod
    def indicator(beta0: float, a: float, b: float, L: float) -> "BetaSpec":
        return BetaSpec(kind="piecewise", pieces=((a, b, beta0),), L=L)

    @staticmethod
    def constant(beta0: float, L: float) -> "BetaSpec":
        return BetaSpec(kind="piecewise", pieces=((0.0, L, beta0),), L=L)

    @staticmethod
    def sampled(values, L: float) -> "BetaSpec":
        return BetaSpec(kind="sampled", samples=tuple(float(v) for v in values), L=L)

    def __post_init__(self):
        if self.kind not in ("piecewise", "sampled"):
            raise ValueError(f"unknown beta kind {self.kind!r}")
        if self.kind == "piecewise":
            prev = 0.0
            for lo, hi, _ in self.pieces:
                if lo < -1e-12 or hi > self.L + 1e-12 or hi <= lo:
                    raise ValueError("beta piece outside [0, L] or empty")
                if lo < prev - 1e-12:
                    raise ValueError("beta pieces overlap or unsorted")
                prev = hi
        else:
            if len(self.samples) < 64:
                raise ValueError("sampled beta needs >= 64 grid points")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sampled":
            grid = np.linspace(0.0, self.L, len(self.samples))
            return np.interp(x, grid, np.asarray(self.samples))
        out = np.zeros_like(x)
        for lo, hi, val in self.pieces:
            out = out + val * ((x >= lo) & (x <= hi))
        return out

    @property
    def breakpoints(self) -> tuple:
        if self.kind == "sampled":
            return ()
        pts = set()
        for lo, hi, _ in self.pieces:
            pts.add(lo)
            pts.add(hi)
        return tuple(sorted(p for p in pts if 0.0 < p < self.L))

    def is_zero(self) -> bool:
        if self.kind == "piecewise":
            return all(v == 0.0 for _, _, v in self.pieces) or not self.pieces
        return all(v == 0.0 for v in self.samples)


@dataclass(frozen=True)
class PlantConfig:
    L: float
    c: float
    beta: BetaSpec
    alpha: float | None = None
    eps_alpha: float = EPS_ALPHA

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("L must be positive")

    @property
    def damped(self) -> bool:
        return self.alpha is not None

    def with_alpha(self, alpha: float) -> "PlantConfig":
        return PlantConfig(self.L, self.c, self.beta, alpha, self.eps_alpha)


@dataclass
class ValidationReport:
    ok: bool
    failures: list = field(default_factory=list)

    def add(self, message: str):
        self.ok = False
        self.failures.append(message)


def rho(alpha: float, L: float = 1.0) -> float:
    """Real part of the boundary-damped wave eigenvalues."""
    if alpha <= 1.0:
        raise ValueError("damping gain must exceed 1")
    return math.log((alpha - 1.0) / (alpha + 1.0)) / (2.0 * L)


def validate(config: PlantConfig) -> ValidationReport:
    report = ValidationReport(ok=True)
    if config.L <= 0:
        report.add("L must be positive")
        return report
    if abs(config.beta.L - config.L) > 1e-12:
        report.add("beta profile length disagrees with L")
    if config.alpha is not None:
        if config.alpha <= 1.0:
            report.add(f"alpha = {config.alpha} must exceed 1")
            return report
        r = rho(config.alpha, config.L)
        # resonance would put a parabolic eigenvalue exactly on the damped
        # wave abscissa, degenerating the dual-basis denominators
        n_star = config.L * math.sqrt(max(config.c - r, 0.0)) / math.pi
        lo = max(1, int(n_star) - 3)
        for n in range(lo, int(n_star) + 4):
            gap = abs(config.c - r - (n * math.pi / config.L) ** 2)
            if gap < config.eps_alpha:
                report.add(
                    f"resonance margin violated at n={n}: |c - rho - (n pi/L)^2|"
                    f" = {gap:.3e} < {config.eps_alpha:.1e}"
                )
    return report


def _beta_from_dict(d: dict, L: float) -> BetaSpec:
    kind = d.get("kind")
    if kind == "piecewise":
        pieces = tuple((float(p[0]), float(p[1]), float(p[2])) for p in d["pieces"])
        return BetaSpec(kind="piecewise", pieces=pieces, L=L)
    if kind == "sampled":
        return BetaSpec.sampled(d["values"], L)
    raise ValueError(f"unknown beta kind {kind!r}")


def load_config(path: str) -> PlantConfig:
    """Read a config from JSON or TOML (keys L, c, alpha, beta)."""
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib

        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    else:
        with open(path) as fh:
            raw = json.load(fh)
    L = float(raw["L"])
    alpha = raw.get("alpha")
    return PlantConfig(
        L=L,
        c=float(raw["c"]),
        beta=_beta_from_dict(raw["beta"], L),
        alpha=None if alpha is None else float(alpha),
    )
