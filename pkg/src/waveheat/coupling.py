"""Coupling coefficients, measurement coefficients, and controllability weights.

gamma_n couples the n-th parabolic mode to the wave through beta.  Its
magnitude grows like e^{|lambda_1n| L}, so everything here is carried in
signed log form (see logscale) and converted to floats only when safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .logscale import SignedLog, log_abs_sinh, log_cosh, slog, slog_add, slog_mul
from .model import BetaSpec, PlantConfig
from .quadrature import composite_gauss, integrate
from .spectral import (Branch, Mode, Variant, ZERO_LAMBDA_TOL, _parabolic_dual,
                       dual_eigenvalue, eigenvalue, phi, phi1_prime, psi)

__all__ = ["CoefficientTable", "WeightSequence", "Measurement", "gamma",
           "gamma_slog", "gamma_indicator", "gamma_indicator_slog",
           "gamma_constant_slog", "find_gamma_zero", "genericity_scan",
           "output_coeffs", "input_coeffs", "beta_modal", "v_weight",
           "build_table", "extend_table", "ControllabilityLost"]


class ControllabilityLost(RuntimeError):
    pass


@dataclass(frozen=True)
class Measurement:
    kind: str  # "distributed" | "dirichlet" | "neumann"
    c_o: object = None  # callable for distributed
    xi: float | None = None

    def __post_init__(self):
        if self.kind not in ("distributed", "dirichlet", "neumann"):
            raise ValueError(f"unknown measurement kind {self.kind!r}")

    @staticmethod
    def distributed(c_o) -> "Measurement":
        return Measurement("distributed", c_o=c_o)

    @staticmethod
    def dirichlet(xi: float) -> "Measurement":
        return Measurement("dirichlet", xi=xi)

    @staticmethod
    def neumann(xi: float) -> "Measurement":
        return Measurement("neumann", xi=xi)


@dataclass
class CoefficientTable:
    config: PlantConfig
    n_max: int
    m_max: int
    lam1: dict = field(default_factory=dict)   # n -> real
    lam2: dict = field(default_factory=dict)   # m -> complex (damped)
    gamma_log: dict = field(default_factory=dict)  # n -> SignedLog
    a1: dict = field(default_factory=dict)
    b1: dict = field(default_factory=dict)
    c1: dict = field(default_factory=dict)
    a2: dict = field(default_factory=dict)
    b2: dict = field(default_factory=dict)
    c2: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class WeightSequence:
    nu: float
    log_weights: tuple  # parabolic log-domain weights, index n-1
    space: str


# ---------------------------------------------------------------------------
# gamma


def _parabolic_lambda(n: int, L: float, c: float) -> float:
    return c - (n * math.pi / L) ** 2


def gamma_slog(n: int, config: PlantConfig) -> SignedLog:
    """Coupling integral of beta against the n-th sine/sinh profile,
    adaptive quadrature in scaled form."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if config.beta.is_zero():
        return SignedLog(0, float("-inf"))
    lam = _parabolic_lambda(n, config.L, config.c)
    if abs(lam) < ZERO_LAMBDA_TOL:
        k = n * math.pi / config.L
        f = lambda s: config.beta(s) * np.sin(k * np.asarray(s)) * np.asarray(s)
        val = integrate(f, 0.0, config.L,
                        breakpoints=config.beta.breakpoints, rtol=1e-12)
        return slog(float(np.real(val)))
    pd = _parabolic_dual(n, config,
                         Variant.DAMPED if config.damped else Variant.UNDAMPED)
    core = pd.gamma_core()
    if core == 0.0:
        return SignedLog(0, float("-inf"))
    sign = int(pd.sig) * (1 if core > 0 else -1)
    return SignedLog(sign, pd.mu * config.L - math.log(2.0) + math.log(abs(core)))


def gamma(n: int, config: PlantConfig) -> float:
    return gamma_slog(n, config).to_float()


def gamma_indicator_slog(n: int, L: float, c: float, beta0: float, a: float,
                         b: float) -> SignedLog:
    """Closed form for beta = beta0 on [a, b], signed log output."""
    if not (0.0 <= a < b <= L):
        raise ValueError("need 0 <= a < b <= L")
    k = n * math.pi / L
    lam = c - k * k
    if abs(lam) < ZERO_LAMBDA_TOL:
        v = beta0 * (L * L / (n * n * math.pi ** 2)) \
            * (math.sin(k * b) - math.sin(k * a)) \
            - beta0 * (L / (n * math.pi)) \
            * (b * math.cos(k * b) - a * math.cos(k * a))
        return slog(v)

    def sinh_s(xarg: float) -> SignedLog:
        if xarg == 0.0:
            return SignedLog(0, float("-inf"))
        s = 1 if lam * xarg > 0 else -1
        return SignedLog(s, log_abs_sinh(lam * xarg))

    def cosh_s(xarg: float) -> SignedLog:
        return SignedLog(1, log_cosh(lam * xarg))

    total = SignedLog(0, float("-inf"))
    terms = (
        slog_mul(slog(-k * math.cos(k * b)), sinh_s(b)),
        slog_mul(slog(k * math.cos(k * a)), sinh_s(a)),
        slog_mul(slog(lam * math.sin(k * b)), cosh_s(b)),
        slog_mul(slog(-lam * math.sin(k * a)), cosh_s(a)),
    )
    for t in terms:
        total = slog_add(total, t)
    return slog_mul(slog(beta0 / (lam * lam + k * k)), total)


def gamma_indicator(n: int, L: float, c: float, beta0: float, a: float,
                    b: float) -> float:
    return gamma_indicator_slog(n, L, c, beta0, a, b).to_float()


def gamma_constant_slog(n: int, L: float, c: float, beta0: float) -> SignedLog:
    """Closed form for beta identically beta0 on [0, L]."""
    k = n * math.pi / L
    q = k * k - c
    if abs(q) < ZERO_LAMBDA_TOL:
        return gamma_indicator_slog(n, L, c, beta0, 0.0, L)
    pref = ((-1) ** n) * beta0 * k / (q * q + k * k)
    s = (1 if q > 0 else -1)
    return slog_mul(slog(pref), SignedLog(s, log_abs_sinh(q * L)))


def find_gamma_zero(n: int, L: float, c: float, beta0: float, a: float,
                    b_lo: float, b_hi: float, *, num: int = 400,
                    gtol: float = 1e-10, xtol: float = 1e-9) -> list:
    """Zeros of b -> gamma_n(beta0 1_[a,b]) located by sweep + bisection.

    A bracket is refined until the scaled |gamma| drops below gtol or the
    bracket is narrower than xtol; gtol is measured on the exponential-free
    core (gamma / e^{|lambda| b}) so it is meaningful for every n.
    """
    lam = _parabolic_lambda(n, L, c)
    mu = abs(lam)

    def val(b):
        return gamma_indicator_slog(n, L, c, beta0, a, b)

    def small(sl: SignedLog, b) -> bool:
        return sl.sign == 0 or (sl.log - mu * max(b, 1e-30)) < math.log(gtol)

    bs = np.linspace(max(b_lo, a + 1e-12), b_hi, num)
    vals = [val(b) for b in bs]
    zeros = []
    for i in range(len(bs) - 1):
        s0, s1 = vals[i].sign, vals[i + 1].sign
        if s0 == 0:
            continue
        if s0 * s1 < 0:
            lo, hi = bs[i], bs[i + 1]
            flo = vals[i]
            while hi - lo > xtol:
                mid = 0.5 * (lo + hi)
                fm = val(mid)
                if small(fm, mid):
                    lo = hi = mid
                    break
                if fm.sign == flo.sign:
                    lo = mid
                    flo = fm
                else:
                    hi = mid
            zeros.append(0.5 * (lo + hi))
    return zeros


def genericity_scan(L: float, c: float, beta0: float, n_max: int, *,
                    grid: int = 100):
    """min_{n <= n_max} log|gamma_n| over the triangle {0 <= a < b <= L}.

    Returns (a_grid, b_grid, min_log) with +inf-free entries; cells with
    a >= b hold nan.
    """
    a_grid = np.linspace(0.0, L, grid, endpoint=False)
    b_grid = np.linspace(L / grid, L, grid)
    out = np.full((grid, grid), np.nan)
    for i, a in enumerate(a_grid):
        for j, b in enumerate(b_grid):
            if b <= a + 1e-12:
                continue
            best = math.inf
            for n in range(1, n_max + 1):
                sl = gamma_indicator_slog(n, L, c, beta0, a, b)
                lv = -math.inf if sl.sign == 0 else sl.log
                best = min(best, lv)
            out[i, j] = best
    return a_grid, b_grid, out


# ---------------------------------------------------------------------------
# measurement and input coefficients


def output_coeffs(measurement: Measurement, modes, config: PlantConfig):
    """Modal measurement coefficients; parabolic dict keyed by n, hyperbolic
    by m."""
    c1, c2 = {}, {}
    bps = config.beta.breakpoints
    for mode in modes:
        if measurement.kind == "distributed":
            f1 = phi(mode, config).f
            g = lambda x: np.asarray(measurement.c_o(x)) * np.asarray(f1(x))
            # composite rule: the adaptive driver would chase the closed
            # form's cancellation noise (~e^{Re r L} eps) below tolerance
            val = complex(composite_gauss(g, 0.0, config.L, breakpoints=bps,
                                          panels=4 * abs(mode.index) + 16,
                                          npts=12))
        else:
            xi = measurement.xi
            if xi is None or not (0.0 <= xi <= config.L):
                raise ValueError("pointwise measurement needs xi in [0, L]")
            if measurement.kind == "dirichlet":
                val = complex(np.asarray(phi(mode, config).f(xi)))
            else:
                val = complex(np.asarray(phi1_prime(mode, config)(xi)))
        if mode.branch is Branch.PARABOLIC:
            c1[mode.index] = val.real
        else:
            c2[mode.index] = val
    return c1, c2


def _b_quadrature(psi3, config: PlantConfig) -> complex:
    """-(1/(alpha L)) int x conj(psi3(x)) dx with point doubling."""
    alpha, L = config.alpha, config.L
    f = lambda x: np.asarray(x) * np.conj(psi3(np.asarray(x)))
    bps = config.beta.breakpoints
    prev = None
    panels = 8
    for _ in range(6):
        cur = composite_gauss(f, 0.0, L, breakpoints=bps, panels=panels,
                              npts=16)
        if prev is not None and abs(cur - prev) <= 1e-8 * max(1.0, abs(cur)):
            prev = cur
            break
        prev = cur
        panels *= 2
    return -complex(prev) / (alpha * L)


def input_coeffs(modes, config: PlantConfig):
    """Coefficients of the integrator lift a(x) = (0, x/(alpha L), 0) and its
    derivative companion b(x) = (0, 0, -x/(alpha L)) in the damped dual basis.

    The b-integral int x conj(psi3) dx is reduced by parts using
    psi3 = -(psi2)''/lambda to boundary values of psi2; the raw quadrature
    (available as _b_quadrature) loses too many digits to cancellation at
    large n to be usable as the product path.
    """
    if not config.damped:
        raise ValueError("input coefficients require the damped configuration")
    a1, b1, a2, b2 = {}, {}, {}, {}
    inv = 1.0 / (config.alpha * config.L)
    for mode in modes:
        fld = psi(mode, config)
        g_at_L = complex(np.asarray(fld.g(config.L)))
        aval = inv * g_at_L.conjugate()
        lam_dual = dual_eigenvalue(mode, config)
        if abs(lam_dual) < ZERO_LAMBDA_TOL:
            bval = _b_quadrature(fld.h, config)
        else:
            dg_at_L = complex(np.asarray(fld.dg(config.L)))
            bval = (config.L * dg_at_L.conjugate() - g_at_L.conjugate()) \
                / (config.alpha * config.L * lam_dual.conjugate())
        if mode.branch is Branch.PARABOLIC:
            a1[mode.index] = aval.real
            b1[mode.index] = bval.real
        else:
            a2[mode.index] = aval
            b2[mode.index] = bval
    return a1, b1, a2, b2


def beta_modal(mode: Mode, config: PlantConfig):
    """Two readings of the boundary identity for a + lambda b.

    Returns (direct, from_dg, from_h): the coefficient combination
    a + lambda b computed from the projections, (1/alpha) conj(psi2'(L)),
    and conj(psi3(L)).  For the damped dual the adjoint domain makes the
    last two coincide.
    """
    a1, b1, a2, b2 = input_coeffs([mode], config)
    lam = eigenvalue(mode, config).lam
    if mode.branch is Branch.PARABOLIC:
        direct = a1[mode.index] + lam * b1[mode.index]
    else:
        direct = a2[mode.index] + lam * b2[mode.index]
    fld = psi(mode, config)
    from_dg = complex(np.asarray(fld.dg(config.L))).conjugate() / config.alpha
    from_h = complex(np.asarray(fld.h(config.L))).conjugate()
    return direct, from_dg, from_h


# ---------------------------------------------------------------------------
# controllability-space weights


def v_weight(n: int, T: float, space: str, config: PlantConfig) -> float:
    """log-domain weight of the n-th parabolic coefficient in the V (or V0)
    norm; hyperbolic weights are identically 1."""
    if space not in ("V", "V0"):
        raise ValueError("space must be 'V' or 'V0'")
    nu = 2.0 * math.pi ** 2 / config.L
    if space == "V":
        nu *= 1.0 + T / config.L
    gl = gamma_slog(n, config)
    lam = _parabolic_lambda(n, config.L, config.c)
    core_log = gl.log - abs(lam) * config.L
    if gl.sign == 0 or core_log < math.log(1e-30):
        raise ControllabilityLost(f"controllability lost at mode n={n}")
    return 4.0 * math.log(n) - 2.0 * gl.log + nu * n * n


def weight_sequence(n_max: int, T: float, space: str,
                    config: PlantConfig) -> WeightSequence:
    nu = 2.0 * math.pi ** 2 / config.L
    if space == "V":
        nu *= 1.0 + T / config.L
    logs = tuple(v_weight(n, T, space, config) for n in range(1, n_max + 1))
    return WeightSequence(nu=nu, log_weights=logs, space=space)


# ---------------------------------------------------------------------------
# table assembly


def build_table(config: PlantConfig, measurement: Measurement, n_max: int,
                m_max: int) -> CoefficientTable:
    """All modal coefficients needed by reduction/synthesis/simulation."""
    table = CoefficientTable(config=config, n_max=n_max, m_max=m_max)
    variant = Variant.DAMPED if config.damped else Variant.UNDAMPED
    par = [Mode(Branch.PARABOLIC, n, variant) for n in range(1, n_max + 1)]
    hyp = [Mode(Branch.HYPERBOLIC, m, variant) for m in range(-m_max, m_max + 1)]
    for mode in par:
        table.lam1[mode.index] = eigenvalue(mode, config).lam.real
        table.gamma_log[mode.index] = gamma_slog(mode.index, config)
    for mode in hyp:
        table.lam2[mode.index] = eigenvalue(mode, config).lam
    c1, c2 = output_coeffs(measurement, par + hyp, config)
    table.c1.update(c1)
    table.c2.update(c2)
    if config.damped:
        a1, b1, a2, b2 = input_coeffs(par + hyp, config)
        table.a1.update(a1)
        table.b1.update(b1)
        table.a2.update(a2)
        table.b2.update(b2)
    table.provenance["gamma"] = "quadrature"
    table.provenance["measurement"] = measurement.kind
    return table


def extend_table(table: CoefficientTable, measurement: Measurement,
                 n_max: int, m_max: int) -> CoefficientTable:
    """Grow a coefficient table in place to larger cutoffs, reusing existing
    entries (the hyperbolic measurement coefficients are the expensive part)."""
    config = table.config
    variant = Variant.DAMPED if config.damped else Variant.UNDAMPED
    par = [Mode(Branch.PARABOLIC, n, variant)
           for n in range(1, n_max + 1) if n not in table.lam1]
    hyp = [Mode(Branch.HYPERBOLIC, m, variant)
           for m in range(-m_max, m_max + 1) if m not in table.lam2]
    for mode in par:
        table.lam1[mode.index] = eigenvalue(mode, config).lam.real
        table.gamma_log[mode.index] = gamma_slog(mode.index, config)
    for mode in hyp:
        table.lam2[mode.index] = eigenvalue(mode, config).lam
    if par or hyp:
        c1, c2 = output_coeffs(measurement, par + hyp, config)
        table.c1.update(c1)
        table.c2.update(c2)
        if config.damped:
            a1, b1, a2, b2 = input_coeffs(par + hyp, config)
            table.a1.update(a1)
            table.b1.update(b1)
            table.a2.update(a2)
            table.b2.update(b2)
    table.n_max = max(table.n_max, n_max)
    table.m_max = max(table.m_max, m_max)
    return table
