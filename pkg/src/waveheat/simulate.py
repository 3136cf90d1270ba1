"""Closed-loop modal simulation.

The plant is truncated at (N_sim, M_sim) modes, well beyond the
controller's (N, M): the measurement the controller sees includes all
simulated modes, so observation spillover is exercised.  Time stepping is
classical fixed-step RK4 on the stacked complex state

    u = [w_par (N_sim), w_hyp (2 M_sim + 1), v, what_par (N), what_hyp (2M+1)]

with the hyperbolic blocks ordered 0, -1, 1, -2, 2, ...  The Lyapunov
channel V = X^H P X + weighted tail sums is evaluated every step so the
discrete descent inequality can be checked pointwise in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .coupling import CoefficientTable, Measurement, build_table, extend_table
from .model import PlantConfig
from .quadrature import composite_gauss
from .reduction import hyperbolic_order
from .spectral import Branch, Mode, Variant, phi, psi

__all__ = ["InitialData", "SimProblem", "ClosedLoopTrajectory",
           "project_initial", "build_problem", "dt_rule", "step_closed_loop",
           "run_closed_loop", "norms", "reconstruct_field", "decay_rate_fit",
           "DivergenceError"]

OVERFLOW_LIMIT = 1e15


class DivergenceError(RuntimeError):
    pass


@dataclass
class InitialData:
    y0: object          # callable on [0, L]
    z0: object
    z1: object
    v0: float = 0.0

    def compatibility_errors(self, L: float, grid: int = 256) -> list:
        xs = np.linspace(0.0, L, grid)
        errs = []
        tol = 1e-6 * (1.0 + max(np.max(np.abs(self.y0(xs))),
                                np.max(np.abs(self.z0(xs)))))
        if abs(float(self.y0(np.array(0.0)))) > tol \
                or abs(float(self.y0(np.array(L)))) > tol:
            errs.append("y0 must vanish at both ends")
        if abs(float(self.z0(np.array(0.0)))) > tol:
            errs.append("z0 must vanish at x = 0")
        return errs


@dataclass
class SimProblem:
    config: PlantConfig
    N_sim: int
    M_sim: int
    N0: int
    N: int
    M: int
    space: str
    dt: float
    # plant arrays
    lam: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    # observer arrays
    lamo: np.ndarray
    ao: np.ndarray
    bo: np.ndarray
    co: np.ndarray
    lvec: np.ndarray
    kv: float
    kw: np.ndarray
    # Lyapunov channel
    P: np.ndarray
    iA: np.ndarray
    sA: np.ndarray
    iB: np.ndarray
    sB: np.ndarray
    tail_w: np.ndarray      # per-plant-mode tail weight entering V
    h1_w: np.ndarray        # per-plant-mode weight of the H1 channel
    delta: float
    controller: object = None
    measurement: object = None

    @property
    def n_plant(self):
        return self.N_sim + 2 * self.M_sim + 1

    @property
    def n_obs(self):
        return self.N + 2 * self.M + 1 if self.N else 0

    @property
    def size(self):
        return self.n_plant + 1 + self.n_obs


@dataclass
class ClosedLoopTrajectory:
    t: np.ndarray
    V: np.ndarray
    H0: np.ndarray
    H1: np.ndarray
    v: np.ndarray
    vd: np.ndarray
    yo: np.ndarray
    u_final: np.ndarray
    problem: SimProblem
    snapshots_t: np.ndarray = field(default=None)
    snapshots_u: np.ndarray = field(default=None)


def dt_rule(N_sim: int, M_sim: int, config: PlantConfig) -> float:
    """Explicit-RK stability-driven step: parabolic stiffness caps dt at
    0.2/|lambda_max|; the wave band caps it at L/(8 pi M_sim)."""
    lam_max = abs(config.c - (N_sim * math.pi / config.L) ** 2)
    hyper = config.L / (8.0 * math.pi * max(M_sim, 1))
    return min(0.2 / max(lam_max, 1.0), hyper)


# ---------------------------------------------------------------------------
# projection of initial data


def project_initial(data: InitialData, N_sim: int, M_sim: int,
                    config: PlantConfig) -> np.ndarray:
    """Modal coordinates of W(0) = (y0, z0, z1 - (x/(alpha L)) v0) against
    the dual family under the natural inner product (first and third
    components pointwise, second through derivatives)."""
    if not config.damped:
        raise ValueError("simulation uses the damped modal family")
    L, alpha = config.L, config.alpha
    errs = data.compatibility_errors(L)
    if errs:
        raise ValueError("; ".join(errs))
    bps = config.beta.breakpoints

    # z0' by spectral-accuracy finite differences on a fine grid
    fine = np.linspace(0.0, L, 4097)
    z0f = np.asarray(data.z0(fine), dtype=float)
    dz0 = np.gradient(z0f, fine)

    def dz0_interp(x):
        return np.interp(x, fine, dz0)

    def w3(x):
        return np.asarray(data.z1(x), dtype=float) \
            - x / (alpha * L) * data.v0

    out = np.zeros(N_sim + 2 * M_sim + 1, dtype=complex)
    modes = [Mode(Branch.PARABOLIC, n, Variant.DAMPED)
             for n in range(1, N_sim + 1)] \
        + [Mode(Branch.HYPERBOLIC, m, Variant.DAMPED)
           for m in hyperbolic_order(M_sim)]
    for i, mode in enumerate(modes):
        fld = psi(mode, config)
        osc = max(abs(mode.index), 1)

        def integrand(x):
            return (np.asarray(data.y0(x)) * np.conj(fld.f(x))
                    + dz0_interp(x) * np.conj(fld.dg(x))
                    + w3(x) * np.conj(fld.h(x)))

        out[i] = composite_gauss(integrand, 0.0, L, breakpoints=bps,
                                 panels=4 * osc + 16, npts=12)
    return out


# ---------------------------------------------------------------------------
# problem assembly


def _mode_list(config, n_count, m_count):
    return [Mode(Branch.PARABOLIC, n, Variant.DAMPED)
            for n in range(1, n_count + 1)] \
        + [Mode(Branch.HYPERBOLIC, m, Variant.DAMPED)
           for m in hyperbolic_order(m_count)]


def build_problem(controller, config: PlantConfig, *, N_sim: int = 60,
                  M_sim: int = 60, space: str = "H0", dt: float = None,
                  tables: CoefficientTable = None,
                  measurement: Measurement = None) -> SimProblem:
    """Pack plant/observer coefficient arrays for the RK4 kernel.

    controller may be None (open loop: zero gains, no observer)."""
    if controller is not None:
        config = config if config.damped else config.with_alpha(controller.alpha)
        measurement = controller.measurement
        N0, N, M = controller.N0, controller.N, controller.M
        delta = controller.delta
    else:
        if not config.damped:
            raise ValueError("open-loop simulation still needs alpha set")
        N0 = N = 0
        M = -1
        delta = 0.0
        if measurement is None:
            measurement = Measurement.distributed(lambda x: np.ones_like(x))
    if tables is None:
        tables = build_table(config, measurement, N_sim, M_sim)
    else:
        extend_table(tables, measurement, N_sim, M_sim)

    def arrays(n_count, m_count):
        idx_p = list(range(1, n_count + 1))
        idx_h = hyperbolic_order(m_count) if m_count >= 0 else []
        lam = np.array([tables.lam1[n] for n in idx_p]
                       + [tables.lam2[m] for m in idx_h], dtype=complex)
        a = np.array([tables.a1[n] for n in idx_p]
                     + [tables.a2[m] for m in idx_h], dtype=complex)
        b = np.array([tables.b1[n] for n in idx_p]
                     + [tables.b2[m] for m in idx_h], dtype=complex)
        c = np.array([tables.c1[n] for n in idx_p]
                     + [tables.c2[m] for m in idx_h], dtype=complex)
        return lam, a, b, c

    lam, a, b, c = arrays(N_sim, M_sim)
    n_plant = lam.size
    if controller is not None:
        lamo, ao, bo, co = arrays(N, M)
        n_obs = lamo.size
        lvec = np.zeros(n_obs, dtype=float)
        lvec[:N0] = controller.L_gain
        kv = float(controller.K[0])
        kw = np.zeros(n_obs, dtype=float)
        kw[:N0] = controller.K[1:]
        P = np.asarray(controller.P, dtype=complex)
    else:
        lamo = ao = bo = co = np.zeros(0, dtype=complex)
        lvec = kw = np.zeros(0, dtype=float)
        kv = 0.0
        P = np.zeros((1, 1), dtype=complex)

    # X = col(v, what_1..N0, e_1..N0, what_rest, e_rest); entries are
    # sA*u[iA] + sB*u[iB] with iB < 0 meaning absent
    iv = n_plant
    iA, sA, iB, sB = [], [], [], []

    def add(i1, s1, i2=-1, s2=0.0):
        iA.append(i1)
        sA.append(s1)
        iB.append(i2)
        sB.append(s2)

    if controller is not None:
        add(iv, 1.0)
        for j in range(N0):                     # What_0
            add(iv + 1 + j, 1.0)
        for j in range(N0):                     # E_1 = w - what
            add(j, 1.0, iv + 1 + j, -1.0)
        rest_obs = list(range(N0, N)) + list(range(N, N + 2 * M + 1))
        rest_plant = list(range(N0, N)) \
            + [N_sim + j for j in range(2 * M + 1)]
        for j in rest_obs:                      # What_2
            add(iv + 1 + j, 1.0)
        for jo, jp in zip(rest_obs, rest_plant):  # E_2
            add(jp, 1.0, iv + 1 + jo, -1.0)
    else:
        add(iv, 1.0)

    sigma = 2.0 if space == "H1" else 0.0
    h1_w = np.concatenate([np.arange(1, N_sim + 1, dtype=float) ** 2,
                           np.ones(2 * M_sim + 1)])
    tail_w = np.concatenate([
        np.where(np.arange(1, N_sim + 1) > N,
                 np.arange(1, N_sim + 1, dtype=float) ** sigma, 0.0),
        np.array([1.0 if abs(m) > M else 0.0
                  for m in hyperbolic_order(M_sim)])])
    if dt is None:
        dt = dt_rule(N_sim, M_sim, config)
    return SimProblem(config=config, N_sim=N_sim, M_sim=M_sim, N0=N0, N=N,
                      M=M, space=space, dt=dt, lam=lam, a=a, b=b, c=c,
                      lamo=lamo, ao=ao, bo=bo, co=co, lvec=lvec, kv=kv,
                      kw=kw, P=P, iA=np.array(iA, dtype=np.int64),
                      sA=np.array(sA), iB=np.array(iB, dtype=np.int64),
                      sB=np.array(sB), tail_w=tail_w, h1_w=h1_w, delta=delta,
                      controller=controller, measurement=measurement)


# ---------------------------------------------------------------------------
# RK4 kernel


@numba.njit(cache=True)
def _rhs(u, du, n_plant, lam, a, b, c, lamo, ao, bo, co, lvec, kv, kw):
    iv = n_plant
    n_obs = lamo.size
    v = u[iv]
    vd = kv * v
    for j in range(n_obs):
        vd += kw[j] * u[iv + 1 + j]
    yo = 0.0 + 0.0j
    for j in range(n_plant):
        yo += c[j] * u[j]
    yhat = 0.0 + 0.0j
    for j in range(n_obs):
        yhat += co[j] * u[iv + 1 + j]
    innov = yhat - yo
    for j in range(n_plant):
        du[j] = lam[j] * u[j] + a[j] * v + b[j] * vd
    du[iv] = vd
    for j in range(n_obs):
        du[iv + 1 + j] = lamo[j] * u[iv + 1 + j] + ao[j] * v + bo[j] * vd \
            - lvec[j] * innov
    return vd, yo


@numba.njit(cache=True)
def _lyap_value(u, n_plant, P, iA, sA, iB, sB, tail_w):
    nX = iA.size
    X = np.zeros(nX, dtype=np.complex128)
    for k in range(nX):
        X[k] = sA[k] * u[iA[k]]
        if iB[k] >= 0:
            X[k] += sB[k] * u[iB[k]]
    V = 0.0
    for i in range(nX):
        acc = 0.0 + 0.0j
        for j in range(nX):
            acc += P[i, j] * X[j]
        V += (np.conj(X[i]) * acc).real
    for j in range(n_plant):
        if tail_w[j] > 0.0:
            V += tail_w[j] * (u[j].real ** 2 + u[j].imag ** 2)
    return V


@numba.njit(cache=True)
def _rk4_loop(u, nsteps, dt, n_plant, lam, a, b, c, lamo, ao, bo, co, lvec,
              kv, kw, P, iA, sA, iB, sB, tail_w, h1_w):
    n = u.size
    k1 = np.zeros(n, dtype=np.complex128)
    k2 = np.zeros(n, dtype=np.complex128)
    k3 = np.zeros(n, dtype=np.complex128)
    k4 = np.zeros(n, dtype=np.complex128)
    tmp = np.zeros(n, dtype=np.complex128)
    V = np.zeros(nsteps + 1)
    H0 = np.zeros(nsteps + 1)
    H1 = np.zeros(nsteps + 1)
    vs = np.zeros(nsteps + 1)
    vds = np.zeros(nsteps + 1)
    yos = np.zeros(nsteps + 1)

    def _channels(state, idx):
        V[idx] = _lyap_value(state, n_plant, P, iA, sA, iB, sB, tail_w)
        h0 = 0.0
        h1 = 0.0
        for j in range(n_plant):
            m2 = state[j].real ** 2 + state[j].imag ** 2
            h0 += m2
            h1 += h1_w[j] * m2
        H0[idx] = h0
        H1[idx] = h1

    vd0, yo0 = _rhs(u, k1, n_plant, lam, a, b, c, lamo, ao, bo, co, lvec,
                    kv, kw)
    vs[0] = u[n_plant].real
    vds[0] = vd0.real
    yos[0] = yo0.real
    _channels(u, 0)
    status = 0
    done = 0
    for step in range(nsteps):
        _rhs(u, k1, n_plant, lam, a, b, c, lamo, ao, bo, co, lvec, kv, kw)
        for j in range(n):
            tmp[j] = u[j] + 0.5 * dt * k1[j]
        _rhs(tmp, k2, n_plant, lam, a, b, c, lamo, ao, bo, co, lvec, kv, kw)
        for j in range(n):
            tmp[j] = u[j] + 0.5 * dt * k2[j]
        _rhs(tmp, k3, n_plant, lam, a, b, c, lamo, ao, bo, co, lvec, kv, kw)
        for j in range(n):
            tmp[j] = u[j] + dt * k3[j]
        _rhs(tmp, k4, n_plant, lam, a, b, c, lamo, ao, bo, co, lvec, kv, kw)
        big = 0.0
        for j in range(n):
            u[j] = u[j] + (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j]
                                        + k4[j])
            mag = abs(u[j].real) + abs(u[j].imag)
            if mag > big:
                big = mag
        done = step + 1
        vd_now, yo_now = _rhs(u, k1, n_plant, lam, a, b, c, lamo, ao, bo,
                              co, lvec, kv, kw)
        vs[done] = u[n_plant].real
        vds[done] = vd_now.real
        yos[done] = yo_now.real
        _channels(u, done)
        if big > OVERFLOW_LIMIT:
            status = 1
            break
    return status, done, V, H0, H1, vs, vds, yos


def step_closed_loop(problem: SimProblem, u: np.ndarray,
                     dt: float = None) -> np.ndarray:
    """One RK4 step; returns the new stacked state."""
    dt = problem.dt if dt is None else dt
    u = np.array(u, dtype=complex)
    status, done, *_ = _rk4_loop(
        u, 1, dt, problem.n_plant, problem.lam, problem.a, problem.b,
        problem.c, problem.lamo, problem.ao, problem.bo, problem.co,
        problem.lvec, problem.kv, problem.kw, problem.P, problem.iA,
        problem.sA, problem.iB, problem.sB, problem.tail_w, problem.h1_w)
    if status:
        raise DivergenceError("state overflow during time step")
    return u


def initial_state(problem: SimProblem, data: InitialData) -> np.ndarray:
    w = project_initial(data, problem.N_sim, problem.M_sim, problem.config)
    u = np.zeros(problem.size, dtype=complex)
    u[: problem.n_plant] = w
    u[problem.n_plant] = data.v0
    return u


def run_closed_loop(problem: SimProblem, data_or_state,
                    tfinal: float) -> ClosedLoopTrajectory:
    if isinstance(data_or_state, InitialData):
        u = initial_state(problem, data_or_state)
    else:
        u = np.array(data_or_state, dtype=complex)
    dt = problem.dt
    nsteps = int(math.ceil(tfinal / dt))
    status, done, V, H0, H1, vs, vds, yos = _rk4_loop(
        u, nsteps, dt, problem.n_plant, problem.lam, problem.a, problem.b,
        problem.c, problem.lamo, problem.ao, problem.bo, problem.co,
        problem.lvec, problem.kv, problem.kw, problem.P, problem.iA,
        problem.sA, problem.iB, problem.sB, problem.tail_w, problem.h1_w)
    if status:
        raise DivergenceError(
            f"state overflow at t = {done * dt:.6g} (|w| > {OVERFLOW_LIMIT:g})")
    t = dt * np.arange(done + 1)
    return ClosedLoopTrajectory(t=t, V=V[: done + 1], H0=H0[: done + 1],
                                H1=H1[: done + 1], v=vs[: done + 1],
                                vd=vds[: done + 1], yo=yos[: done + 1],
                                u_final=u, problem=problem)


# ---------------------------------------------------------------------------
# diagnostics


def norms(u: np.ndarray, space: str, problem: SimProblem) -> float:
    """Scalar norm channel of a stacked state: H0 and H1 are plant modal
    energies; the Lyapunov variants add X^H P X and truncate the sums to
    the modes beyond the controller."""
    n_plant = problem.n_plant
    w = u[:n_plant]
    if space == "H0":
        return float(np.sum(np.abs(w) ** 2))
    if space == "H1":
        return float(np.sum(problem.h1_w * np.abs(w) ** 2))
    if space in ("LyapunovH0", "LyapunovH1"):
        return float(_lyap_value(np.asarray(u, dtype=complex), n_plant,
                                 problem.P, problem.iA, problem.sA,
                                 problem.iB, problem.sB, problem.tail_w))
    raise ValueError(f"unknown norm space {space!r}")


def reconstruct_field(u: np.ndarray, x_grid: np.ndarray, which: str,
                      problem: SimProblem) -> np.ndarray:
    """Physical fields from modal coordinates: y (heat), z (wave position,
    from the g-components), zt (wave velocity, h-components plus the
    (x/(alpha L)) v lift)."""
    config = problem.config
    x = np.asarray(x_grid, dtype=float)
    comp = {"y": "f", "z": "g", "zt": "h"}[which]
    total = np.zeros(x.shape, dtype=complex)
    modes = _mode_list(config, problem.N_sim, problem.M_sim)
    for i, mode in enumerate(modes):
        wi = u[i]
        if wi == 0.0:
            continue
        if mode.branch is Branch.PARABOLIC and comp != "f":
            continue  # parabolic primal modes carry only the heat component
        if mode.branch is Branch.HYPERBOLIC and comp == "f":
            fld_val = phi(mode, config).f(x)
        else:
            fld_val = getattr(phi(mode, config), comp)(x)
        total = total + wi * np.asarray(fld_val)
    if which == "zt":
        v = float(np.real(u[problem.n_plant]))
        total = total + x / (config.alpha * config.L) * v
    return total


def measurement_of_field(problem: SimProblem, u: np.ndarray) -> float:
    """Quadrature cross-check of the modal measurement sum (distributed)."""
    meas = problem.measurement
    if meas is None or meas.kind != "distributed":
        raise ValueError("only the distributed measurement is quadratured")
    xs_f = lambda x: meas.c_o(x) * reconstruct_field(u, x, "y", problem)
    val = composite_gauss(xs_f, 0.0, problem.config.L,
                          breakpoints=problem.config.beta.breakpoints,
                          panels=4 * problem.N_sim + 16, npts=12)
    return float(np.real(val))


def decay_rate_fit(t: np.ndarray, channel: np.ndarray, window) -> dict:
    """Least-squares slope of log(channel) on the window; the reported rate
    is the negated slope."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(channel, dtype=float)
    t0, t1 = window
    mask = (t >= t0) & (t <= t1)
    if not np.any(mask) or np.any(y[mask] <= 0.0):
        raise ValueError("channel must be positive on the fit window")
    ts, ys = t[mask], np.log(y[mask])
    A = np.vstack([ts, np.ones_like(ts)]).T
    coef, res, *_ = np.linalg.lstsq(A, ys, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"rate": -float(coef[0]), "r_squared": r2}
