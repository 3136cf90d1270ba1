"""Finite-dimensional truncated models and controllability/observability tests.

The retained parabolic block (modes 1..N0) is augmented with the control
integrator into the pair (A1, B1); the residual simulated-but-uncontrolled
modes (parabolic N0+1..N, hyperbolic |m| <= M) form the diagonal A2 with
input rows Ba1/Bb1 and measurement row C1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .coupling import CoefficientTable
from .logscale import SignedLog, log_cosh
from .model import PlantConfig
from .spectral import Branch, Mode, Variant, eigenvalue, psi

__all__ = ["ReducedModel", "build_reduced", "hyperbolic_order",
           "kalman_controllable", "kalman_observable",
           "truncated_observability_gramian", "GramianReport"]

RANK_TOL = 1e-10


def hyperbolic_order(M: int) -> list:
    """Index order of the hyperbolic residual block: 0, -1, 1, -2, 2, ..."""
    order = [0]
    for k in range(1, M + 1):
        order.extend((-k, k))
    return order


@dataclass
class ReducedModel:
    N0: int
    N: int
    M: int
    A0: np.ndarray
    Ba0: np.ndarray
    Bb0: np.ndarray
    C0: np.ndarray
    A1: np.ndarray
    B1: np.ndarray
    A2: np.ndarray  # diagonal entries, complex
    Ba1: np.ndarray
    Bb1: np.ndarray
    C1: np.ndarray
    residual_modes: list = field(default_factory=list)


def build_reduced(N0: int, N: int, M: int, tables: CoefficientTable,
                  config: PlantConfig) -> ReducedModel:
    if N < N0 + 1 or M < 0:
        raise ValueError("need N >= N0+1 and M >= 0")

    def need(d, k, name):
        if k not in d:
            raise KeyError(f"coefficient table missing {name}[{k}]")
        return d[k]

    lam1 = [need(tables.lam1, n, "lam1") for n in range(1, N0 + 1)]
    A0 = np.diag(np.array(lam1, dtype=float))
    Ba0 = np.array([need(tables.a1, n, "a1") for n in range(1, N0 + 1)])
    Bb0 = np.array([need(tables.b1, n, "b1") for n in range(1, N0 + 1)])
    C0 = np.array([need(tables.c1, n, "c1") for n in range(1, N0 + 1)])

    A1 = np.zeros((N0 + 1, N0 + 1))
    A1[1:, 0] = Ba0
    A1[1:, 1:] = A0
    B1 = np.concatenate(([1.0], Bb0))

    residual = [("p", n) for n in range(N0 + 1, N + 1)] \
        + [("h", m) for m in hyperbolic_order(M)]
    A2 = np.array(
        [tables.lam1[i] if kind == "p" else tables.lam2[i]
         for kind, i in residual], dtype=complex)
    Ba1 = np.array(
        [need(tables.a1, i, "a1") if kind == "p" else need(tables.a2, i, "a2")
         for kind, i in residual], dtype=complex)
    Bb1 = np.array(
        [need(tables.b1, i, "b1") if kind == "p" else need(tables.b2, i, "b2")
         for kind, i in residual], dtype=complex)
    C1 = np.array(
        [need(tables.c1, i, "c1") if kind == "p" else need(tables.c2, i, "c2")
         for kind, i in residual], dtype=complex)
    return ReducedModel(N0=N0, N=N, M=M, A0=A0, Ba0=Ba0, Bb0=Bb0, C0=C0,
                        A1=A1, B1=B1, A2=A2, Ba1=Ba1, Bb1=Bb1, C1=C1,
                        residual_modes=residual)


def _krylov_rank(A: np.ndarray, B: np.ndarray, tol: float) -> int:
    n = A.shape[0]
    cols = []
    v = B.reshape(n)
    for _ in range(n):
        cols.append(v)
        v = A @ v
    K = np.column_stack(cols)
    norms = np.linalg.norm(K, axis=0)
    norms[norms == 0.0] = 1.0
    K = K / norms
    s = np.linalg.svd(K, compute_uv=False)
    return int(np.sum(s > tol * s[0])) if s[0] > 0 else 0


def _hautus_min(A: np.ndarray, B: np.ndarray) -> float:
    """min over eigenvalues of sigma_min([A - lam I, B]), scale-normalized."""
    n = A.shape[0]
    scale = max(np.linalg.norm(A, 2), np.linalg.norm(B), 1.0)
    worst = math.inf
    for lam in np.linalg.eigvals(A):
        Mx = np.hstack([A - lam * np.eye(n), B.reshape(n, 1)])
        s = np.linalg.svd(Mx, compute_uv=False)
        worst = min(worst, s[-1] / scale)
    return worst


def kalman_controllable(A1: np.ndarray, B1: np.ndarray,
                        tol: float = RANK_TOL) -> dict:
    rank = _krylov_rank(A1, B1, tol)
    n = A1.shape[0]
    hautus = _hautus_min(A1, B1)
    return {"rank": rank, "controllable": rank == n and hautus > tol,
            "hautus_min": hautus}


def kalman_observable(A0: np.ndarray, C0: np.ndarray,
                      tol: float = RANK_TOL) -> dict:
    res = kalman_controllable(A0.T, C0.reshape(-1), tol)
    return {"rank": res["rank"], "observable": res["controllable"],
            "hautus_min": res["hautus_min"]}


# ---------------------------------------------------------------------------
# observability surrogate


@dataclass
class GramianReport:
    min_eig: float
    max_eig: float
    ratio: float
    conditioning_warning: bool
    gramian: object  # mpmath matrix


def _parabolic_amplitude(n: int, T: float, config: PlantConfig,
                         gamma_sign: int) -> SignedLog:
    """Signed log of psi3_{1,n}(L) / sqrt(V' weight).

    The gamma factor cancels between the boundary value and the weight, so
    only its sign survives; a gamma forced to zero is handled by the caller
    via amplitude overrides.
    """
    L = config.L
    lam = config.c - (n * math.pi / L) ** 2
    nu = 2.0 * math.pi ** 2 / L * (1.0 + T / L)
    if abs(lam) < 1e-9:
        # psi3(L) = gamma * sqrt(2/L); weight sqrt = |gamma| e^{-nu n^2/2}/n^2
        lg = 0.5 * math.log(2.0 / L) + 2.0 * math.log(n) + 0.5 * nu * n * n
        return SignedLog(gamma_sign, lg)
    lg = 0.5 * math.log(2.0 / L) - math.log(abs(lam)) - log_cosh(lam * L) \
        + 2.0 * math.log(n) + 0.5 * nu * n * n
    sign = gamma_sign * (1 if lam > 0 else -1)
    return SignedLog(sign, lg)


def truncated_observability_gramian(parabolic_n, hyperbolic_m, T: float,
                                    config: PlantConfig, *,
                                    zero_parabolic=(),
                                    dps_extra: int = 30) -> GramianReport:
    """Gramian of the weighted boundary-output exponential family of the
    undamped adjoint, entries in closed form and eigenvalues in extended
    precision (the V'-normalized parabolic amplitudes span hundreds of
    orders of magnitude)."""
    from .coupling import gamma_slog

    L = config.L
    exps = []   # dual exponents
    amps = []   # SignedLog or complex amplitudes
    for n in parabolic_n:
        lam = config.c - (n * math.pi / L) ** 2
        gs = gamma_slog(n, config)
        if n in zero_parabolic or gs.sign == 0:
            amp = SignedLog(0, float("-inf"))
        else:
            amp = _parabolic_amplitude(n, T, config, gs.sign)
        exps.append(complex(lam))
        amps.append(amp)
    for m in hyperbolic_m:
        mode = Mode(Branch.HYPERBOLIC, m, Variant.UNDAMPED)
        lam = eigenvalue(mode, config).lam
        fld = psi(mode, config)
        amp = complex(np.asarray(fld.h(L)))  # O(1), hyperbolic V' weight is 1
        exps.append(lam.conjugate())
        amps.append(amp)

    max_log = max((a.log for a in amps if isinstance(a, SignedLog)
                   and a.sign != 0), default=0.0)
    mpmath.mp.dps = dps_extra + int(2.2 * max(max_log, 0.0) / math.log(10.0))
    amps_mp = []
    for a in amps:
        if isinstance(a, SignedLog):
            amps_mp.append(mpmath.mpc(0) if a.sign == 0
                           else a.sign * mpmath.exp(mpmath.mpf(a.log)))
        else:
            amps_mp.append(mpmath.mpc(a))
    k = len(exps)
    G = mpmath.zeros(k, k)
    for i in range(k):
        for j in range(k):
            z = complex(exps[i]).conjugate() + complex(exps[j])
            zm = mpmath.mpc(z)
            if abs(z) < 1e-12:
                integral = mpmath.mpf(T)
            else:
                integral = (mpmath.exp(zm * T) - 1) / zm
            G[i, j] = mpmath.conj(amps_mp[i]) * amps_mp[j] * integral
    eigs = mpmath.mp.eighe(G, eigvals_only=True)
    eigs = sorted(float(mpmath.re(e)) for e in eigs)
    min_eig, max_eig = eigs[0], eigs[-1]
    ratio = min_eig / max_eig if max_eig > 0 else float("nan")
    return GramianReport(min_eig=min_eig, max_eig=max_eig, ratio=ratio,
                        conditioning_warning=bool(min_eig < 1e-14 * max_eig),
                        gramian=G)
