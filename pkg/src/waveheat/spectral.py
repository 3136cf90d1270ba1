"""Eigenstructure of the cascade operator and of its adjoint.

Two operator variants are handled: the undamped generator (no boundary
damping, hyperbolic eigenvalues on the imaginary axis) and the damped one
obtained after the preliminary boundary feedback with gain alpha > 1
(hyperbolic eigenvalues shifted to Re = rho < 0).

Parabolic eigenvalues grow like -n^2 pi^2 / L^2, so every sinh/cosh in the
dual closed forms overflows floats long before the mode counts used in
practice.  The evaluators below rewrite those closed forms so that only
decaying exponentials appear; see _ParabolicDual for the rearrangement.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .model import PlantConfig, rho
from .quadrature import composite_gauss, integrate

__all__ = ["Branch", "Variant", "Mode", "EigenData", "VectorField3",
           "eigenvalue", "phi", "psi", "biorthogonality_check",
           "SpectralError", "ZERO_LAMBDA_TOL"]

ZERO_LAMBDA_TOL = 1e-9
# beyond this argument magnitude sinh/cosh are evaluated in scaled form
_EXP_CUTOFF = 30.0


class SpectralError(RuntimeError):
    pass


class Branch(Enum):
    PARABOLIC = "parabolic"
    HYPERBOLIC = "hyperbolic"


class Variant(Enum):
    UNDAMPED = "undamped"
    DAMPED = "damped"


@dataclass(frozen=True)
class Mode:
    branch: Branch
    index: int
    variant: Variant = Variant.UNDAMPED

    def __post_init__(self):
        if self.branch is Branch.PARABOLIC and self.index < 1:
            raise ValueError("parabolic index must be >= 1")


@dataclass(frozen=True)
class EigenData:
    lam: complex
    r: complex | None = None
    A_norm: float | None = None
    mu: float | None = None


@dataclass(frozen=True)
class VectorField3:
    """Three-component field (f, g, h) with the analytic derivative of g."""

    f: object
    g: object
    h: object
    dg: object

    def __call__(self, x):
        return self.f(x), self.g(x), self.h(x)


def _as_array(x):
    return np.asarray(x, dtype=float)


def eigenvalue(mode: Mode, config: PlantConfig) -> EigenData:
    L = config.L
    if mode.branch is Branch.PARABOLIC:
        lam = config.c - (mode.index * math.pi / L) ** 2
        mu = None
        if mode.variant is Variant.DAMPED:
            _require_alpha(mode, config)
            mu = -rho(config.alpha, L)
        return EigenData(lam=complex(lam), mu=mu)
    m = mode.index
    if mode.variant is Variant.UNDAMPED:
        lam = 1j * (2 * m + 1) * math.pi / (2.0 * L)
        A = abs(2 * m + 1) * math.pi / (2.0 * math.sqrt(L))
        mu = None
    else:
        _require_alpha(mode, config)
        rr = rho(config.alpha, L)
        mu = -rr
        lam = complex(rr, m * math.pi / L)
        A = math.sqrt((mu * mu * L * L + m * m * math.pi ** 2)
                      * math.sinh(2.0 * mu * L)) / (L * math.sqrt(2.0 * mu))
    r = cmath.sqrt(lam - config.c)
    if r.real < 0 or (r.real == 0 and r.imag < 0):
        r = -r
    return EigenData(lam=lam, r=r, A_norm=A, mu=mu)


def _require_alpha(mode: Mode, config: PlantConfig):
    if config.alpha is None:
        raise SpectralError(f"damped variant needs alpha in config (mode {mode})")


def _alpha_eff(mode: Mode, config: PlantConfig) -> float:
    if mode.variant is Variant.DAMPED:
        _require_alpha(mode, config)
        return float(config.alpha)
    return 0.0


# ---------------------------------------------------------------------------
# parabolic dual machinery


class _ParabolicDual:
    """Stable evaluator for the parabolic dual components.

    Writing mu = |lambda|, sig = sign(lambda), B(s) = beta(s) sin(n pi s / L),
    the closed forms combine terms of size e^{mu L} that cancel down to O(1).
    Collecting exponentials leaves only the one-sided convolutions

        Km(x) = int_0^x B(s) e^{-mu (x-s)} ds,
        Jm(x) = int_x^L B(s) e^{-mu (s-x)} ds,

    and explicitly decaying exponentials:

      lam * psi3(x) / c0 = sig * ( (Km(x)+Jm(x))/2
          + (Km(L)(1-sig a)/(2 d)) (e^{-mu(L-x)} - e^{-mu(L+x)})
          - (q(x)/(2 d)) e^{-mu x} Jm(0) ),

    d = (1+sig a) + (1-sig a) e^{-2 mu L},
    q(x) = (1+sig a) + (1-sig a) e^{-2 mu (L-x)}, a = alpha (0 if undamped),
    c0 = sqrt(2/L).  psi2 follows from psi2 = (c0 W(x) - psi3(x)) / lam with
    W(x) = int_0^L B(s) min(s, x) ds.
    """

    def __init__(self, n: int, config: PlantConfig, variant: Variant):
        self.n = n
        self.config = config
        self.variant = variant
        L = config.L
        self.L = L
        self.k = n * math.pi / L
        self.lam = config.c - self.k ** 2
        self.alpha = _alpha_eff(Mode(Branch.PARABOLIC, n, variant), config)
        self.c0 = math.sqrt(2.0 / L)
        self.mu = abs(self.lam)
        self.sig = 1.0 if self.lam >= 0 else -1.0
        self.zero_branch = abs(self.lam) < ZERO_LAMBDA_TOL
        self._bp = config.beta.breakpoints
        if not self.zero_branch:
            e2 = math.exp(-2.0 * self.mu * L)
            self.d = (1.0 + self.sig * self.alpha) \
                + (1.0 - self.sig * self.alpha) * e2
            if abs(self.d) < 1e-13:
                raise SpectralError(
                    f"degenerate dual denominator at n={n} (resonant alpha)")
            self.Km_L = self._Km(L)
            self.Jm_0 = self._Jm(0.0)

    def _B(self, s):
        return self.config.beta(s) * np.sin(self.k * np.asarray(s, dtype=float))

    def _conv(self, x: float, forward: bool) -> float:
        """Km(x) if forward else Jm(x); exponential one-sided convolution."""
        mu = self.mu
        span = x if forward else self.L - x
        if span <= 0.0:
            return 0.0
        reach = span if mu * span <= 45.0 else 45.0 / mu
        if forward:
            f = lambda t: self._B(x - t) * np.exp(-mu * t)
            bps = [x - b for b in self._bp if 0.0 < x - b < reach]
        else:
            f = lambda t: self._B(x + t) * np.exp(-mu * t)
            bps = [b - x for b in self._bp if 0.0 < b - x < reach]
        return float(np.real(integrate(f, 0.0, reach, breakpoints=bps,
                                       rtol=1e-12)))

    # one-sided convolutions; closed forms for piecewise-constant beta,
    # adaptive quadrature otherwise -----------------------------------------

    @property
    def _piecewise(self):
        return self.config.beta.kind == "piecewise"

    def _Km(self, x):
        """Km(x) = int_0^x B(s) e^{-mu (x-s)} ds, array-capable."""
        x = np.asarray(x, dtype=float)
        if not self._piecewise:
            out = np.array([self._conv(float(v), True) for v in x.ravel()])
            return out.reshape(x.shape) if x.ndim else float(out[0])
        mu, k = self.mu, self.k
        den = mu * mu + k * k
        out = np.zeros_like(x)
        for lo0, hi0, bj in self.config.beta.pieces:
            lo = np.clip(np.minimum(lo0, x), 0.0, None)
            hi = np.clip(np.minimum(hi0, x), 0.0, None)
            anti = lambda s: np.exp(mu * (s - x)) \
                * (mu * np.sin(k * s) - k * np.cos(k * s))
            out = out + np.where(hi > lo, bj / den * (anti(hi) - anti(lo)),
                                 0.0)
        return out if x.ndim else float(out)

    def _Jm(self, x):
        """Jm(x) = int_x^L B(s) e^{-mu (s-x)} ds, array-capable."""
        x = np.asarray(x, dtype=float)
        if not self._piecewise:
            out = np.array([self._conv(float(v), False) for v in x.ravel()])
            return out.reshape(x.shape) if x.ndim else float(out[0])
        mu, k = self.mu, self.k
        den = mu * mu + k * k
        out = np.zeros_like(x)
        for lo0, hi0, bj in self.config.beta.pieces:
            lo = np.maximum(lo0, x)
            hi = np.maximum(hi0, x)
            anti = lambda s: -np.exp(-mu * (s - x)) \
                * (mu * np.sin(k * s) + k * np.cos(k * s))
            out = out + np.where(hi > lo, bj / den * (anti(hi) - anti(lo)),
                                 0.0)
        return out if x.ndim else float(out)

    def W(self, x):
        """W(x) = int_0^L B(s) min(s, x) ds, array-capable."""
        x = np.asarray(x, dtype=float)
        if not self._piecewise:
            def one(v):
                f = lambda s: self._B(s) * np.minimum(np.asarray(s), v)
                pts = list(self._bp) + [v]
                return float(np.real(integrate(f, 0.0, self.L,
                                               breakpoints=pts, rtol=1e-12)))
            out = np.array([one(float(v)) for v in x.ravel()])
            return out.reshape(x.shape) if x.ndim else float(out[0])
        k = self.k
        out = x * self.Wp(x)
        for lo0, hi0, bj in self.config.beta.pieces:
            lo = np.clip(np.minimum(lo0, x), 0.0, None)
            hi = np.clip(np.minimum(hi0, x), 0.0, None)
            anti = lambda s: (np.sin(k * s) - k * s * np.cos(k * s)) / (k * k)
            out = out + np.where(hi > lo, bj * (anti(hi) - anti(lo)), 0.0)
        return out if x.ndim else float(out)

    def Wp(self, x):
        """W'(x) = int_x^L B(s) ds, array-capable."""
        x = np.asarray(x, dtype=float)
        if not self._piecewise:
            out = np.array([
                float(np.real(integrate(self._B, float(v), self.L,
                                        breakpoints=self._bp, rtol=1e-12)))
                for v in x.ravel()])
            return out.reshape(x.shape) if x.ndim else float(out[0])
        k = self.k
        out = np.zeros_like(x)
        for lo0, hi0, bj in self.config.beta.pieces:
            lo = np.maximum(lo0, x)
            hi = np.maximum(hi0, x)
            out = out + np.where(
                hi > lo, bj * (np.cos(k * lo) - np.cos(k * hi)) / k, 0.0)
        return out if x.ndim else float(out)

    def gamma_core(self) -> float:
        """G with gamma_n = sig * (e^{mu L}/2) * G (nonzero-lambda branch)."""
        return self.Km_L - math.exp(-self.mu * self.L) * self.Jm_0

    # scalar evaluators -----------------------------------------------------

    def psi3(self, x):
        if self.zero_branch:
            return self.c0 * self.W(x)
        x = np.asarray(x, dtype=float)
        mu, L, sig, a, d = self.mu, self.L, self.sig, self.alpha, self.d
        q = (1.0 + sig * a) + (1.0 - sig * a) * np.exp(-2.0 * mu * (L - x))
        core = 0.5 * (self._Km(x) + self._Jm(x)) \
            + (self.Km_L * (1.0 - sig * a) / (2.0 * d)) \
            * (np.exp(-mu * (L - x)) - np.exp(-mu * (L + x))) \
            - (q / (2.0 * d)) * np.exp(-mu * x) * self.Jm_0
        out = self.c0 * sig * core / self.lam
        return out if x.ndim else float(out)

    def dpsi3(self, x):
        if self.zero_branch:
            return self.c0 * self.Wp(x)
        x = np.asarray(x, dtype=float)
        mu, L, sig, a, d = self.mu, self.L, self.sig, self.alpha, self.d
        qt = (1.0 + sig * a) - (1.0 - sig * a) * np.exp(-2.0 * mu * (L - x))
        core = 0.5 * mu * (self._Jm(x) - self._Km(x)) \
            + (self.Km_L * (1.0 - sig * a) * mu / (2.0 * d)) \
            * (np.exp(-mu * (L - x)) + np.exp(-mu * (L + x))) \
            + (qt * mu / (2.0 * d)) * np.exp(-mu * x) * self.Jm_0
        out = self.c0 * sig * core / self.lam
        return out if x.ndim else float(out)

    def psi2(self, x):
        if self.zero_branch:
            if self.alpha == 0.0:
                return np.zeros_like(np.asarray(x, dtype=float))
            return self.alpha * self.W(self.L) * self.c0 \
                * np.asarray(x, dtype=float)
        return (self.c0 * self.W(x) - self.psi3(x)) / self.lam

    def dpsi2(self, x):
        if self.zero_branch:
            if self.alpha == 0.0:
                return np.zeros_like(np.asarray(x, dtype=float))
            return self.alpha * self.W(self.L) * self.c0 \
                * np.ones_like(np.asarray(x, dtype=float))
        return (self.c0 * self.Wp(x) - self.dpsi3(x)) / self.lam

    def psi3_at_L(self) -> float:
        return self.psi3(self.L)

    def psi2_at_L(self) -> float:
        return self.psi2(self.L)


@lru_cache(maxsize=4096)
def _parabolic_dual(n: int, config: PlantConfig, variant: Variant) -> _ParabolicDual:
    return _ParabolicDual(n, config, variant)


# ---------------------------------------------------------------------------
# hyperbolic primal first component


class _HyperbolicPrimal:
    def __init__(self, m: int, config: PlantConfig, variant: Variant):
        self.config = config
        mode = Mode(Branch.HYPERBOLIC, m, variant)
        ed = eigenvalue(mode, config)
        self.lam = ed.lam
        self.r = ed.r
        self.A = ed.A_norm
        self.L = config.L
        self._bp = config.beta.breakpoints
        self.K = self._integral(lambda s: np.sinh(self.r * s), 0.0, self.L)

    def _integral(self, kernel, lo, hi):
        f = lambda s: self.config.beta(s) * np.sinh(self.lam * np.asarray(s)) \
            * kernel(np.asarray(s))
        return complex(integrate(f, lo, hi, breakpoints=self._bp, rtol=1e-11))

    def f(self, x: float) -> complex:
        I1 = self._integral(lambda s: np.sinh(self.r * (x - s)), x, self.L)
        ratio = _sinh_ratio(self.r, self.L - x, self.L)
        return I1 / (self.A * self.r) + ratio * self.K / (self.A * self.r)

    def df(self, x: float) -> complex:
        I1 = self._integral(lambda s: np.cosh(self.r * (x - s)), x, self.L)
        ratio = _cosh_over_sinh(self.r, self.L - x, self.L)
        return I1 / self.A - ratio * self.K / self.A

    # vectorized closed forms for piecewise-constant beta -------------------

    @property
    def _has_closed_form(self):
        p1, p2 = self.lam - self.r, self.lam + self.r
        return (self.config.beta.kind == "piecewise"
                and min(abs(p1), abs(p2)) > 1e-8
                and abs(self.r.real) * self.L < _EXP_CUTOFF)

    def _I1_closed(self, x, deriv: bool):
        """int_x^L beta(s) sinh(lam s) {sinh|cosh}(r (x - s)) ds by
        product-to-sum antiderivatives (piecewise-constant beta only)."""
        lam, r = self.lam, self.r
        p1, p2 = lam - r, lam + r
        x = np.asarray(x, dtype=float)
        tot = np.zeros(x.shape, dtype=complex)
        for lo0, hi0, bj in self.config.beta.pieces:
            lo = np.maximum(lo0, x)
            hi = np.maximum(hi0, x)
            if deriv:
                anti = lambda s: 0.5 * (np.cosh(p1 * s + r * x) / p1
                                        + np.cosh(p2 * s - r * x) / p2)
            else:
                anti = lambda s: 0.5 * (np.sinh(p1 * s + r * x) / p1
                                        - np.sinh(p2 * s - r * x) / p2)
            tot = tot + np.where(hi > lo, bj * (anti(hi) - anti(lo)), 0.0)
        return tot

    def f_vec(self, x):
        x = np.asarray(x, dtype=float)
        if not self._has_closed_form:
            out = np.array([self.f(float(v)) for v in x.ravel()])
            return out.reshape(x.shape) if x.ndim else complex(out[0])
        I1 = self._I1_closed(x, deriv=False)
        ratio = np.sinh(self.r * (self.L - x)) / np.sinh(self.r * self.L)
        out = (I1 + ratio * self.K) / (self.A * self.r)
        return out if x.ndim else complex(out)

    def df_vec(self, x):
        x = np.asarray(x, dtype=float)
        if not self._has_closed_form:
            out = np.array([self.df(float(v)) for v in x.ravel()])
            return out.reshape(x.shape) if x.ndim else complex(out[0])
        I1 = self._I1_closed(x, deriv=True)
        ratio = np.cosh(self.r * (self.L - x)) / np.sinh(self.r * self.L)
        out = (I1 - ratio * self.K) / self.A
        return out if x.ndim else complex(out)


def _sinh_ratio(r: complex, num_arg: float, den_arg: float) -> complex:
    """sinh(r * num_arg) / sinh(r * den_arg), scaled against overflow."""
    a, b = r * num_arg, r * den_arg
    if abs(b.real) < _EXP_CUTOFF:
        return cmath.sinh(a) / cmath.sinh(b)
    # factor e^{Re b} out of both sinh
    s = 1.0 if b.real > 0 else -1.0
    ea = cmath.exp(a - s * b.real) - cmath.exp(-a - s * b.real)
    eb = cmath.exp(b - s * b.real) - cmath.exp(-b - s * b.real)
    return ea / eb


def _cosh_over_sinh(r: complex, num_arg: float, den_arg: float) -> complex:
    a, b = r * num_arg, r * den_arg
    if abs(b.real) < _EXP_CUTOFF:
        return cmath.cosh(a) / cmath.sinh(b)
    s = 1.0 if b.real > 0 else -1.0
    ea = cmath.exp(a - s * b.real) + cmath.exp(-a - s * b.real)
    eb = cmath.exp(b - s * b.real) - cmath.exp(-b - s * b.real)
    return ea / eb


@lru_cache(maxsize=4096)
def _hyperbolic_primal(m: int, config: PlantConfig, variant: Variant) -> _HyperbolicPrimal:
    return _HyperbolicPrimal(m, config, variant)


# ---------------------------------------------------------------------------
# public evaluators


def _vectorize(fn):
    def wrapped(x):
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            return fn(float(arr))
        return np.array([fn(float(v)) for v in arr.ravel()]).reshape(arr.shape)

    return wrapped


def phi(mode: Mode, config: PlantConfig) -> VectorField3:
    """Primal eigenfunction (f, g, h) with dg analytic."""
    L = config.L
    if mode.branch is Branch.PARABOLIC:
        k = mode.index * math.pi / L
        c0 = math.sqrt(2.0 / L)
        zero = lambda x: np.zeros_like(_as_array(x))
        return VectorField3(
            f=lambda x: c0 * np.sin(k * _as_array(x)),
            g=zero, h=zero, dg=zero,
        )
    hp = _hyperbolic_primal(mode.index, config, mode.variant)
    lam, A = hp.lam, hp.A
    return VectorField3(
        f=hp.f_vec,
        g=lambda x: np.sinh(lam * _as_array(x)) / A,
        h=lambda x: lam * np.sinh(lam * _as_array(x)) / A,
        dg=lambda x: lam * np.cosh(lam * _as_array(x)) / A,
    )


def phi1_prime(mode: Mode, config: PlantConfig):
    """Analytic derivative of the first primal component."""
    L = config.L
    if mode.branch is Branch.PARABOLIC:
        k = mode.index * math.pi / L
        c0 = math.sqrt(2.0 / L)
        return lambda x: c0 * k * np.cos(k * _as_array(x))
    hp = _hyperbolic_primal(mode.index, config, mode.variant)
    return hp.df_vec


def psi(mode: Mode, config: PlantConfig) -> VectorField3:
    """Dual eigenfunction (f, g, h) with dg analytic."""
    L = config.L
    if mode.branch is Branch.PARABOLIC:
        pd = _parabolic_dual(mode.index, config, mode.variant)
        k = mode.index * math.pi / L
        c0 = math.sqrt(2.0 / L)
        return VectorField3(
            f=lambda x: c0 * np.sin(k * _as_array(x)),
            g=pd.psi2,
            h=pd.psi3,
            dg=pd.dpsi2,
        )
    ed = eigenvalue(mode, config)
    lam, A = ed.lam, ed.A_norm
    zero = lambda x: np.zeros_like(_as_array(x))
    if mode.variant is Variant.UNDAMPED:
        den = L * abs(lam) ** 2
        return VectorField3(
            f=zero,
            g=lambda x: A * np.sinh(lam * _as_array(x)) / den,
            h=lambda x: A * lam * np.sinh(lam * _as_array(x)) / den,
            dg=lambda x: A * lam * np.cosh(lam * _as_array(x)) / den,
        )
    lb = lam.conjugate()
    return VectorField3(
        f=zero,
        g=lambda x: A * np.sinh(lb * _as_array(x)) / (L * lb * lb),
        h=lambda x: -A * np.sinh(lb * _as_array(x)) / (L * lb),
        dg=lambda x: A * np.cosh(lb * _as_array(x)) / (L * lb),
    )


def dual_eigenvalue(mode: Mode, config: PlantConfig) -> complex:
    """Eigenvalue of the adjoint associated with psi(mode)."""
    lam = eigenvalue(mode, config).lam
    if mode.branch is Branch.PARABOLIC:
        return lam
    return lam.conjugate()


def inner_h0(field_a: VectorField3, field_b: VectorField3, L: float, *,
             breakpoints=(), panels: int = 24, npts: int = 12) -> complex:
    """State-space inner product <a, b> = int f_a conj(f_b) + g'_a conj(g'_b)
    + h_a conj(h_b)."""

    def integrand(x):
        return (np.asarray(field_a.f(x)) * np.conj(field_b.f(x))
                + np.asarray(field_a.dg(x)) * np.conj(field_b.dg(x))
                + np.asarray(field_a.h(x)) * np.conj(field_b.h(x)))

    return complex(composite_gauss(integrand, 0.0, L, breakpoints=breakpoints,
                                   panels=panels, npts=npts))


def biorthogonality_check(modes, config: PlantConfig, quad_points: int = 24):
    """Gram matrix <phi_i, psi_j> over the given modes; identity if exact."""
    phis = [phi(m, config) for m in modes]
    psis = [psi(m, config) for m in modes]
    bps = config.beta.breakpoints
    max_idx = max(abs(m.index) for m in modes)
    panels = max(quad_points, 4 * max_idx + 8)
    G = np.zeros((len(modes), len(modes)), dtype=complex)
    for i, fa in enumerate(phis):
        for j, fb in enumerate(psis):
            if modes[i].branch is Branch.PARABOLIC \
                    and modes[j].branch is Branch.HYPERBOLIC:
                continue  # exact zero: parabolic primal has g = h = 0, psi1 = 0
            G[i, j] = inner_h0(fa, fb, config.L, breakpoints=bps,
                               panels=panels, npts=12)
    return G
