"""Controller synthesis: structure selection, pole placement, and the
Lyapunov feasibility certificate.

The certificate checks three scalar/matrix margins for a candidate
truncation (N, M): the reduced Hermitian form Theta (spillover vs. the
Lyapunov matrix P of the closed-loop reduced dynamics), Gamma1 at mode
N+1 (residual parabolic modes), and Gamma2 (residual hyperbolic modes).
All three must be nonpositive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .coupling import CoefficientTable, Measurement, build_table, extend_table
from .model import PlantConfig, rho, validate
from .reduction import ReducedModel, build_reduced, kalman_controllable, \
    kalman_observable

__all__ = ["DesignSpec", "CertifiedController", "FeasibilityReport",
           "DesignError", "choose_structure", "place_poles", "observer_gain",
           "tail_sums", "solve_lyapunov", "feasibility", "theta_direct",
           "auto_tune"]

ALPHA_LADDER = (1.5, 2.0, 3.0, 5.0, 10.0)
GAMMA_THRESHOLD = 1e-12


class DesignError(RuntimeError):
    pass


@dataclass(frozen=True)
class DesignSpec:
    delta: float
    epsilon: float | None = None   # floor; enlarged if the Gamma2 budget needs it
    N_max: int = 64
    M_max: int = 128
    space: str = "H1"              # "H0" | "H1" (norm tracked for the tails)

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.space not in ("H0", "H1"):
            raise ValueError("space must be 'H0' or 'H1'")


@dataclass
class FeasibilityReport:
    N: int
    M: int
    feasible: bool
    theta_max_eig: float
    Gamma1_Np1: float
    Gamma2_M: float
    eta1: float
    eta2: float
    S_a: float
    S_b: float
    S_c1: float
    S_c2: float
    P: np.ndarray
    P_norm: float
    lyap_residual: float


@dataclass
class CertifiedController:
    alpha: float
    N0: int
    N: int
    M: int
    delta: float
    epsilon: float
    K: np.ndarray
    L_gain: np.ndarray
    P: np.ndarray
    margins: FeasibilityReport
    reduced: ReducedModel
    measurement: Measurement
    pole_targets_K: tuple
    pole_targets_L: tuple
    history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# structure selection


def _alpha_for_rho(target_rho: float, L: float) -> float:
    """Invert rho(alpha) = (1/2L) log((alpha-1)/(alpha+1))."""
    t = math.exp(2.0 * L * target_rho)
    return (1.0 + t) / (1.0 - t)


def choose_structure(delta: float, config: PlantConfig,
                     eps: float | None = None) -> dict:
    """Smallest retained parabolic count N0 with lambda_{1,N0+1} < -delta,
    and a damping gain alpha from a coarse ladder with rho(alpha) below the
    required margin (-delta, or -(delta + 1/eps) when eps is fixed)."""
    L, c = config.L, config.c
    lam = lambda n: c - (n * math.pi / L) ** 2
    N0 = 1
    while lam(N0 + 1) >= -delta:
        N0 += 1
    threshold = delta + (1.0 / eps if eps else 0.0)
    alpha = None
    for cand in ALPHA_LADDER:
        if rho(cand, L) < -threshold:
            alpha = cand
            break
    if alpha is None:
        alpha = _alpha_for_rho(-1.25 * threshold, L)
    return {"N0": N0, "alpha": alpha}


# ---------------------------------------------------------------------------
# pole placement (single-input Ackermann)


def place_poles(A: np.ndarray, B: np.ndarray, targets) -> np.ndarray:
    """Single-input state feedback K with eig(A + B K) = targets."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(-1)
    n = A.shape[0]
    targets = np.atleast_1d(np.asarray(targets, dtype=complex))
    if targets.size != n:
        raise ValueError("need one target pole per state")
    ctrb = np.column_stack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
    norms = np.linalg.norm(ctrb, axis=0)
    s = np.linalg.svd(ctrb / np.where(norms == 0, 1.0, norms),
                      compute_uv=False)
    if s[-1] < 1e-10 * s[0]:
        raise DesignError(
            "uncontrollable pair: a retained coupling coefficient gamma_n "
            "vanishes (or is below threshold); control authority is lost")
    coeffs = np.real(np.poly(targets))          # desired char poly, monic
    acker = np.zeros_like(A)
    for k, ck in enumerate(coeffs):             # ck multiplies A^(n-k)
        acker += ck * np.linalg.matrix_power(A, n - k)
    e_last = np.zeros(n)
    e_last[-1] = 1.0
    K = -(e_last @ np.linalg.solve(ctrb, acker))
    got = np.sort_complex(np.linalg.eigvals(A + np.outer(B, K)))
    want = np.sort_complex(targets)
    scale = max(1.0, float(np.max(np.abs(want))))
    if np.max(np.abs(got - want)) > 1e-6 * scale:
        raise DesignError("pole placement failed to converge to targets")
    return K.reshape(1, n)


def observer_gain(A0: np.ndarray, C0: np.ndarray, targets) -> np.ndarray:
    """Observer gain L with eig(A0 - L C0) = targets (dual placement)."""
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    C0 = np.asarray(C0, dtype=float).reshape(-1)
    obs = kalman_observable(A0, C0)
    if not obs["observable"]:
        raise DesignError(
            "unobservable pair: a retained measurement coefficient c_{1,n} "
            "vanishes; the observer cannot reconstruct that mode")
    K = place_poles(A0.T, C0, targets)   # eig(A0^T + C0^T K) = targets
    L = -K.reshape(-1)
    got = np.sort_complex(np.linalg.eigvals(A0 - np.outer(L, C0)))
    want = np.sort_complex(np.asarray(targets, dtype=complex))
    if np.max(np.abs(got - want)) > 1e-6 * max(1.0, np.max(np.abs(want))):
        raise DesignError("observer placement failed to converge to targets")
    return L


def default_targets(delta: float, count: int, open_poles=None) -> tuple:
    """Real target poles -delta*(1.1, 1.2, ...); when the open-loop poles are
    supplied, any pole already deeper than its ladder slot is kept in place
    (moving a fast stable pole through a weak input channel needs a huge gain
    and wrecks the conditioning of the Lyapunov certificate)."""
    ladder = [-delta * (1.1 + 0.1 * k) for k in range(count)]
    if open_poles is None:
        return tuple(ladder)
    poles = sorted((float(np.real(p)) for p in np.atleast_1d(open_poles)),
                   reverse=True)
    return tuple(p if p < slot else slot for p, slot in zip(poles, ladder))


# ---------------------------------------------------------------------------
# tail sums


def _hyperbolic_tail_bound(terms: dict, m_cut: int) -> float:
    """Bound sum_{|m| > m_cut} |x_m|^2 assuming |x_m| <= C/|m|."""
    C = 0.0
    for m, v in terms.items():
        if abs(m) >= max(2, m_cut // 2):
            C = max(C, abs(m) * abs(v))
    return 2.0 * C * C / m_cut


def _parabolic_tail_bound(seq: list) -> float:
    """Geometric extrapolation of a super-polynomially decaying positive
    sequence from its last decade."""
    tail = [s for s in seq[-10:] if s > 0.0]
    if len(tail) < 2:
        return 0.0
    r = (tail[-1] / tail[0]) ** (1.0 / (len(tail) - 1))
    if r >= 0.999:
        r = 0.999
    return tail[-1] * r / (1.0 - r)


def _sc1_term(c1val: float, k: int, measurement: Measurement,
              space: str) -> float:
    """Per-mode contribution to S_{c,1,N} for the active measurement/norm."""
    if measurement.kind == "distributed":
        return abs(c1val) ** 2          # both H0 and H1 framings
    if measurement.kind == "dirichlet":
        return abs(c1val) ** 2 / k ** 2
    return abs(c1val) ** 2 / k ** 3.5   # neumann


def tail_sums(N: int, M: int, tables: CoefficientTable, config: PlantConfig,
              measurement: Measurement, space: str = "H1") -> dict:
    """Residual coefficient energies S_a, S_b, S_c1, S_c2: partial sums to
    the table cutoffs plus analytic tail bounds (1/m hyperbolic decay,
    geometric extrapolation for the super-polynomial parabolic decay)."""
    n_cut, m_cut = tables.n_max, tables.m_max
    if n_cut < 4 * N or m_cut < 4 * M:
        raise ValueError("tables must extend to at least (4N, 4M)")

    par_a = [abs(tables.a1[n]) ** 2 for n in range(N + 1, n_cut + 1)]
    par_b = [abs(tables.b1[n]) ** 2 for n in range(N + 1, n_cut + 1)]
    par_c = [_sc1_term(tables.c1[n], n, measurement, space)
             for n in range(N + 1, n_cut + 1)]
    hyp_idx = [m for m in tables.a2 if abs(m) > M]
    hyp_a = {m: tables.a2[m] for m in hyp_idx}
    hyp_b = {m: tables.b2[m] for m in hyp_idx}
    hyp_c = {m: tables.c2[m] for m in hyp_idx}

    def total(par_terms, hyp_terms):
        partial = sum(par_terms) + sum(abs(v) ** 2 for v in hyp_terms.values())
        bound = _parabolic_tail_bound(par_terms) \
            + _hyperbolic_tail_bound(hyp_terms, m_cut)
        return partial, bound

    Sa_p, Sa_b = total(par_a, hyp_a)
    Sb_p, Sb_b = total(par_b, hyp_b)
    Sc2_partial = sum(abs(v) ** 2 for v in hyp_c.values())
    Sc2_bound = _hyperbolic_tail_bound(hyp_c, m_cut)
    Sc1_partial = sum(par_c)
    Sc1_bound = _parabolic_tail_bound(par_c)
    # distributed H0/H1 c1 terms decay like 1/k^2, not super-polynomially:
    # bound their tail by C^2/n_cut instead
    if measurement.kind == "distributed":
        C = max((math.sqrt(t) * k for k, t in
                 zip(range(N + 1, n_cut + 1), par_c)), default=0.0)
        Sc1_bound = C * C / n_cut
    return {"S_a": Sa_p + Sa_b, "S_b": Sb_p + Sb_b,
            "S_c1": Sc1_partial + Sc1_bound, "S_c2": Sc2_partial + Sc2_bound,
            "partial": {"S_a": Sa_p, "S_b": Sb_p, "S_c1": Sc1_partial,
                        "S_c2": Sc2_partial},
            "bound": {"S_a": Sa_b, "S_b": Sb_b, "S_c1": Sc1_bound,
                      "S_c2": Sc2_bound}}


# ---------------------------------------------------------------------------
# Lyapunov certificate


def assemble_F(rm: ReducedModel, K: np.ndarray, L_gain: np.ndarray):
    """Closed-loop matrix F on X = col(W1_hat, E1, W2_hat, E2) and the
    spillover injection vector script-L = col(L_tilde, -L, 0, 0)."""
    N0 = rm.N0
    n1 = N0 + 1
    n2 = rm.A2.size
    d = n1 + N0 + 2 * n2
    K = np.asarray(K, dtype=float).reshape(-1)
    L_gain = np.asarray(L_gain, dtype=float).reshape(-1)
    Ltil = np.concatenate(([0.0], L_gain))
    F = np.zeros((d, d), dtype=complex)
    s1 = slice(0, n1)
    s2 = slice(n1, n1 + N0)
    s3 = slice(n1 + N0, n1 + N0 + n2)
    s4 = slice(n1 + N0 + n2, d)
    F[s1, s1] = rm.A1 + np.outer(rm.B1, K)
    F[s1, s2] = np.outer(Ltil, rm.C0)
    F[s1, s4] = np.outer(Ltil, rm.C1)
    F[s2, s2] = rm.A0 - np.outer(L_gain, rm.C0)
    F[s2, s4] = -np.outer(L_gain, rm.C1)
    E_row = np.zeros(n1)
    E_row[0] = 1.0
    F[s3, s1] = np.outer(rm.Ba1, E_row) + np.outer(rm.Bb1, K)
    F[s3, s3] = np.diag(rm.A2)
    F[s4, s4] = np.diag(rm.A2)
    scriptL = np.zeros(d, dtype=complex)
    scriptL[s1] = Ltil
    scriptL[s2] = -L_gain
    return F, scriptL


def solve_lyapunov(G: np.ndarray) -> np.ndarray:
    """Hermitian P > 0 with G^H P + P G = -I; Kronecker vectorization for
    small systems, Schur (Bartels-Stewart) above dimension 60."""
    d = G.shape[0]
    I = np.eye(d)
    if d < 60:
        A = np.kron(I, G.conj().T) + np.kron(G.T, I)
        P = np.linalg.solve(A, -I.reshape(-1, order="F")).reshape(
            (d, d), order="F")
    else:
        P = scipy.linalg.solve_continuous_lyapunov(G.conj().T, -I)
    P = 0.5 * (P + P.conj().T)
    return P


def gamma1(n: int, lam1n: float, eps: float, delta: float, eta1: float,
           S_c1: float, measurement: Measurement, space: str) -> float:
    """Residual parabolic margin at mode n."""
    if space == "H0" and measurement.kind == "distributed":
        return 2.0 * (lam1n + 1.0 / eps + delta) + eta1 * S_c1
    base = 2.0 * (lam1n + n ** 2 / eps + delta)
    if measurement.kind == "distributed":        # H1 framing
        return base + eta1 * S_c1 / n ** 2
    if measurement.kind == "dirichlet":
        return base + eta1 * S_c1
    return base + n ** 1.5 * eta1 * S_c1         # neumann


def theta_direct(F, scriptL, P, K, eps, S_a, S_b, eta1, eta2, delta):
    """Full 3-block Hermitian Theta (cross-check for the reduced form)."""
    d = F.shape[0]
    E = np.zeros(d)
    E[0] = 1.0
    Ktil = np.zeros(d)
    Ktil[: np.asarray(K).size] = np.asarray(K).reshape(-1)
    Th11 = F.conj().T @ P + P @ F + 2.0 * delta * P \
        + eps * S_a * np.outer(E, E) + eps * S_b * np.outer(Ktil, Ktil)
    PL = (P @ scriptL).reshape(d, 1)
    top = np.hstack([Th11, PL, PL])
    row2 = np.hstack([PL.conj().T, [[-eta1, 0.0]]])
    row3 = np.hstack([PL.conj().T, [[0.0, -eta2]]])
    Th = np.vstack([top, row2, row3])
    return 0.5 * (Th + Th.conj().T)


def feasibility(N: int, M: int, K: np.ndarray, L_gain: np.ndarray,
                eps: float, tables: CoefficientTable, config: PlantConfig,
                delta: float, measurement: Measurement,
                space: str = "H1") -> FeasibilityReport:
    rm = build_reduced(np.asarray(K).size - 1, N, M, tables, config)
    F, scriptL = assemble_F(rm, K, L_gain)
    G = F + delta * np.eye(F.shape[0])
    eigs = np.linalg.eigvals(G)
    if np.max(eigs.real) >= 0.0:
        raise DesignError("F + delta I is not Hurwitz; gains invalid")
    P = solve_lyapunov(G)
    I = np.eye(F.shape[0])
    resid = np.linalg.norm(G.conj().T @ P + P @ G + I, 2)
    P_norm = float(np.linalg.norm(P, 2))
    if resid > 1e-8 * P_norm:
        raise DesignError(f"Lyapunov solve residual too large: {resid:.3e}")

    S = tail_sums(N, M, tables, config, measurement, space)
    S_a, S_b, S_c1, S_c2 = S["S_a"], S["S_b"], S["S_c1"], S["S_c2"]
    eta1 = 1.0 / math.sqrt(S_c1) if S_c1 > 0 else float(N)
    eta2 = 1.0 / math.sqrt(S_c2) if S_c2 > 0 else float(M)

    d = F.shape[0]
    E = np.zeros(d)
    E[0] = 1.0
    Ktil = np.zeros(d)
    Ktil[: np.asarray(K).size] = np.asarray(K).reshape(-1)
    PL = P @ scriptL
    theta_red = -I + eps * S_a * np.outer(E, E) \
        + eps * S_b * np.outer(Ktil, Ktil) \
        + (1.0 / eta1 + 1.0 / eta2) * np.outer(PL, PL.conj())
    theta_red = 0.5 * (theta_red + theta_red.conj().T)
    theta_max = float(np.max(np.linalg.eigvalsh(theta_red)))

    lam_Np1 = config.c - ((N + 1) * math.pi / config.L) ** 2
    g1 = gamma1(N + 1, lam_Np1, eps, delta, eta1, S_c1, measurement, space)
    g2 = 2.0 * (rho(config.alpha, config.L) + 1.0 / eps + delta) + eta2 * S_c2
    feasible = theta_max <= 0.0 and g1 <= 0.0 and g2 <= 0.0
    return FeasibilityReport(N=N, M=M, feasible=feasible,
                             theta_max_eig=theta_max, Gamma1_Np1=g1,
                             Gamma2_M=g2, eta1=eta1, eta2=eta2, S_a=S_a,
                             S_b=S_b, S_c1=S_c1, S_c2=S_c2, P=P,
                             P_norm=P_norm, lyap_residual=float(resid))


# ---------------------------------------------------------------------------
# end-to-end tuning


def effective_epsilon(requested: float | None, delta: float, alpha: float,
                      config: PlantConfig) -> float:
    """Enlarge epsilon so that both structural constraints hold with margin:
    eps > L^2/pi^2 (residual parabolic budget) and rho + 1/eps + delta < 0
    (residual hyperbolic budget).  The requested value acts as a floor."""
    L = config.L
    floor = 1.01 * L * L / math.pi ** 2
    gap = -rho(alpha, L) - delta
    if gap <= 0:
        raise DesignError("alpha gives rho >= -delta; no hyperbolic margin")
    need = 1.0 / (0.9 * gap)
    eps = max(requested or 0.0, floor, need)
    return eps


def auto_tune(spec: DesignSpec, config: PlantConfig,
              measurement: Measurement,
              tables: CoefficientTable | None = None) -> CertifiedController:
    """Design gains at the coarse structure, then double (N, M) until the
    Lyapunov certificate passes or the caps are exhausted."""
    structure = choose_structure(spec.delta, config)
    N0, alpha = structure["N0"], structure["alpha"]
    if config.alpha is not None:
        alpha = config.alpha
        if rho(alpha, config.L) >= -spec.delta:
            raise DesignError("configured alpha gives rho >= -delta")
    cfg = config.with_alpha(alpha)
    report = validate(cfg)
    if not report.ok:
        raise DesignError(f"configuration invalid: {report.failures}")
    eps = effective_epsilon(spec.epsilon, spec.delta, alpha, cfg)

    N, M = N0 + 1, 2
    if tables is None:
        tables = build_table(cfg, measurement, 4 * N, 4 * M)
    else:
        extend_table(tables, measurement, 4 * N, 4 * M)

    min_gamma = min(abs(tables.gamma_log[n].to_float())
                    if tables.gamma_log[n].log < 700 else math.inf
                    for n in range(1, N0 + 1))
    if min_gamma <= GAMMA_THRESHOLD:
        raise DesignError(
            "a coupling coefficient gamma_n vanishes for n <= N0; the "
            "retained block is uncontrollable")

    rm0 = build_reduced(N0, N0 + 1, 0, tables, cfg)
    tK = default_targets(spec.delta, N0 + 1, np.linalg.eigvals(rm0.A1))
    tL = default_targets(spec.delta, N0, np.diag(rm0.A0))
    K = place_poles(rm0.A1, rm0.B1, tK)
    L_gain = observer_gain(rm0.A0, rm0.C0, tL)

    history = []
    while True:
        extend_table(tables, measurement, 4 * N, 4 * M)
        rep = feasibility(N, M, K, L_gain, eps, tables, cfg, spec.delta,
                          measurement, spec.space)
        history.append(rep)
        if rep.feasible:
            rm = build_reduced(N0, N, M, tables, cfg)
            return CertifiedController(
                alpha=alpha, N0=N0, N=N, M=M, delta=spec.delta, epsilon=eps,
                K=np.asarray(K).reshape(-1), L_gain=np.asarray(L_gain),
                P=rep.P, margins=rep, reduced=rm, measurement=measurement,
                pole_targets_K=tK, pole_targets_L=tL, history=history)
        if 2 * N > spec.N_max and 2 * M > spec.M_max:
            margins = [(r.N, r.M, r.theta_max_eig, r.Gamma1_Np1, r.Gamma2_M)
                       for r in history]
            raise DesignError(
                f"infeasible at caps (N_max={spec.N_max}, M_max={spec.M_max}); "
                f"margin trajectory {margins}")
        N = min(2 * N, spec.N_max) if N < spec.N_max else N
        M = min(2 * M, spec.M_max) if M < spec.M_max else M
