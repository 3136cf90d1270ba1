"""Command-line front end.

Subcommands cover the full pipeline: spectra and eigenfunctions, coupling
coefficients, controllability weights, model reduction, certified design,
closed-loop simulation, an invariant self-check, and the one-shot
coupling-zero sweep.  Every run writes a JSON manifest next to its outputs
listing the command, a hash of the configuration, the parameters, and the
produced files, so artifacts are traceable and byte-reproducible.

Exit codes: 0 success, 2 invalid configuration, 3 infeasible or
uncontrollable design, 4 numeric failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .model import PlantConfig, BetaSpec, load_config, validate, rho
from .quadrature import QuadratureError
from .spectral import (Branch, Mode, SpectralError, Variant, eigenvalue, phi,
                       psi, biorthogonality_check)
from .coupling import (Measurement, build_table, gamma, gamma_slog,
                       find_gamma_zero, weight_sequence, ControllabilityLost)
from .reduction import (build_reduced, kalman_controllable, kalman_observable,
                        truncated_observability_gramian)
from .synthesis import DesignSpec, DesignError, auto_tune
from .simulate import (DivergenceError, InitialData, build_problem,
                       initial_state, run_closed_loop, reconstruct_field,
                       decay_rate_fit)

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERIC = 4
EXIT_USAGE = 64

_FMT = "%.12e"


def _fmt(x) -> str:
    return _FMT % float(x)


def _cplx(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _json_default(obj):
    if isinstance(obj, complex):
        return _cplx(obj)
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return [[_cplx(z) for z in row] for row in np.atleast_2d(obj)] \
                if obj.ndim > 1 else [_cplx(z) for z in obj]
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)!r}")


def _dump_json(path: str, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_json_default, sort_keys=True)
        fh.write("\n")


def _config_hash(config: PlantConfig) -> str:
    blob = json.dumps({
        "L": config.L, "c": config.c, "alpha": config.alpha,
        "beta": {"kind": config.beta.kind, "pieces": config.beta.pieces,
                 "samples": config.beta.samples},
    }, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_manifest(out_prefix: str, command: str, config, params: dict,
                    outputs: list, t0: float):
    manifest = {
        "command": command,
        "config_hash": None if config is None else _config_hash(config),
        "parameters": params,
        "outputs": outputs,
        "version": __version__,
        "wall_time_s": round(time.time() - t0, 3),
    }
    path = out_prefix + ".manifest.json"
    _dump_json(path, manifest)
    return path


def _write_csv(path: str, header: list, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) if not isinstance(x, str) else x
                              for x in row) + "\n")


def _measurement_from_args(args) -> Measurement:
    kind = getattr(args, "measurement", "distributed")
    if kind == "distributed":
        return Measurement.distributed(
            lambda x: np.ones_like(np.asarray(x, dtype=float)))
    return Measurement(kind, xi=args.xi)


def _default_config() -> PlantConfig:
    return PlantConfig(L=1.0, c=0.0, beta=BetaSpec.constant(1.0, 1.0),
                       alpha=1.5)


def _load_or_default(args) -> PlantConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return _default_config()


# ---------------------------------------------------------------------------
# subcommands


def _cmd_spectrum(args) -> int:
    cfg = _load_or_default(args)
    variant = Variant.DAMPED if cfg.damped else Variant.UNDAMPED
    rows = []
    for n in range(1, args.nmax + 1):
        lam = eigenvalue(Mode(Branch.PARABOLIC, n, variant), cfg).lam
        rows.append(["parabolic", "%d" % n, _fmt(lam.real), _fmt(lam.imag)])
    if cfg.damped:
        order = [0] + [s * k for k in range(1, args.mmax + 1)
                       for s in (-1, 1)]
    else:
        order = list(range(1, args.mmax + 1))
    for m in order:
        lam = eigenvalue(Mode(Branch.HYPERBOLIC, m, variant), cfg).lam
        rows.append(["hyperbolic", "%d" % m, _fmt(lam.real), _fmt(lam.imag)])
    path = args.out
    with open(path, "w") as fh:
        fh.write("branch,index,re,im\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    man = _write_manifest(path, "spectrum", cfg,
                          {"nmax": args.nmax, "mmax": args.mmax},
                          [path], args._t0)
    print(f"wrote {path} ({len(rows)} eigenvalues); manifest {man}")
    return EXIT_OK


def _cmd_eigenfun(args) -> int:
    cfg = _load_or_default(args)
    branch = Branch.PARABOLIC if args.branch == "parabolic" else Branch.HYPERBOLIC
    variant = Variant.DAMPED if cfg.damped else Variant.UNDAMPED
    mode = Mode(branch, args.index, variant)
    fam = psi(mode, cfg) if args.dual else phi(mode, cfg)
    x = np.linspace(0.0, cfg.L, args.points)
    cols = [("f1", fam.f), ("f2", fam.g), ("f3", fam.h)]
    data = {name: np.asarray(fn(x), dtype=complex) for name, fn in cols}
    path = args.out
    header = ["x"] + [f"{n}_{p}" for n, _ in cols for p in ("re", "im")]
    rows = []
    for i, xi in enumerate(x):
        row = [xi]
        for name, _ in cols:
            row += [data[name][i].real, data[name][i].imag]
        rows.append(row)
    _write_csv(path, header, rows)
    man = _write_manifest(path, "eigenfun", cfg,
                          {"branch": args.branch, "index": args.index,
                           "dual": args.dual, "points": args.points},
                          [path], args._t0)
    print(f"wrote {path}; manifest {man}")
    return EXIT_OK


def _cmd_gamma(args) -> int:
    cfg = _load_or_default(args)
    path = args.out
    if args.sweep:
        # indicator-profile sweep of the right endpoint b for one index
        rows = []
        bs = np.linspace(0.0, cfg.L, args.points + 1)[1:]
        for b in bs:
            sweep_cfg = PlantConfig(
                L=cfg.L, c=cfg.c, alpha=cfg.alpha,
                beta=BetaSpec.indicator(args.beta0, args.a, float(b), cfg.L))
            rows.append([b, gamma(args.n, sweep_cfg)])
        _write_csv(path, ["b", "gamma"], rows)
        params = {"sweep": True, "n": args.n, "a": args.a,
                  "beta0": args.beta0, "points": args.points}
    else:
        rows = []
        for n in range(1, args.nmax + 1):
            s = gamma_slog(n, cfg)
            rows.append([n, gamma(n, cfg), s.sign, s.log])
        _write_csv(path, ["n", "gamma", "sign", "log_abs"], rows)
        params = {"sweep": False, "nmax": args.nmax}
    man = _write_manifest(path, "gamma", cfg, params, [path], args._t0)
    print(f"wrote {path}; manifest {man}")
    return EXIT_OK


def _cmd_weights(args) -> int:
    cfg = _load_or_default(args)
    ws = weight_sequence(args.nmax, args.T, args.space, cfg)
    rows = [[n + 1, lw] for n, lw in enumerate(ws.log_weights)]
    _write_csv(args.out, ["n", "log_weight"], rows)
    man = _write_manifest(args.out, "weights", cfg,
                          {"nmax": args.nmax, "T": args.T,
                           "space": args.space}, [args.out], args._t0)
    print(f"wrote {args.out}; manifest {man}")
    return EXIT_OK


def _cmd_reduce(args) -> int:
    cfg = _load_or_default(args)
    if not cfg.damped:
        print("reduce requires a damped configuration (alpha set)",
              file=sys.stderr)
        return EXIT_CONFIG
    meas = _measurement_from_args(args)
    tables = build_table(cfg, meas, max(args.N, args.nmax_table),
                         max(args.M, args.nmax_table))
    rm = build_reduced(args.N0, args.N, args.M, tables, cfg)
    ctrl = kalman_controllable(rm.A1, rm.B1)
    obs = kalman_observable(rm.A0, rm.C0)
    payload = {
        "N0": rm.N0, "N": rm.N, "M": rm.M,
        "A0": rm.A0, "A1": rm.A1, "B1": rm.B1, "C0": rm.C0,
        "A2_diag": rm.A2, "C1": rm.C1,
        "controllable": ctrl, "observable": obs,
    }
    _dump_json(args.out, payload)
    man = _write_manifest(args.out, "reduce", cfg,
                          {"N0": args.N0, "N": args.N, "M": args.M,
                           "measurement": meas.kind, "xi": meas.xi},
                          [args.out], args._t0)
    print(f"wrote {args.out}; controllable={ctrl['controllable']} "
          f"observable={obs['observable']}; manifest {man}")
    return EXIT_OK if ctrl["controllable"] else EXIT_INFEASIBLE


def _controller_payload(ctrl) -> dict:
    m = ctrl.margins
    return {
        "alpha": ctrl.alpha, "N0": ctrl.N0, "N": ctrl.N, "M": ctrl.M,
        "delta": ctrl.delta, "epsilon": ctrl.epsilon,
        "K": ctrl.K, "L_gain": ctrl.L_gain, "P": ctrl.P,
        "pole_targets_K": list(ctrl.pole_targets_K),
        "pole_targets_L": list(ctrl.pole_targets_L),
        "measurement": {"kind": ctrl.measurement.kind,
                        "xi": ctrl.measurement.xi},
        "certificate": {
            "theta_max_eig": m.theta_max_eig, "Gamma1_Np1": m.Gamma1_Np1,
            "Gamma2_M": m.Gamma2_M, "eta1": m.eta1, "eta2": m.eta2,
            "S_a": m.S_a, "S_b": m.S_b, "S_c1": m.S_c1, "S_c2": m.S_c2,
            "P_norm": m.P_norm, "lyapunov_residual": m.lyap_residual,
        },
    }


class _LoadedController:
    """Duck-typed controller rebuilt from a gains JSON file."""

    def __init__(self, d: dict):
        self.alpha = float(d["alpha"])
        self.N0, self.N, self.M = int(d["N0"]), int(d["N"]), int(d["M"])
        self.delta = float(d["delta"])
        self.epsilon = float(d["epsilon"])
        self.K = np.array(d["K"], dtype=float)
        self.L_gain = np.array(d["L_gain"], dtype=float)
        self.P = np.array([[complex(re, im) for re, im in row]
                           for row in d["P"]])
        mk = d["measurement"]
        if mk["kind"] == "distributed":
            self.measurement = Measurement.distributed(
                lambda x: np.ones_like(np.asarray(x, dtype=float)))
        else:
            self.measurement = Measurement(mk["kind"], xi=mk["xi"])


def _cmd_design(args) -> int:
    cfg = _load_or_default(args)
    rep = validate(cfg)
    if not rep.ok:
        print("invalid configuration: " + "; ".join(rep.failures),
              file=sys.stderr)
        return EXIT_CONFIG
    meas = _measurement_from_args(args)
    spec = DesignSpec(delta=args.delta, epsilon=args.epsilon,
                      space=args.space)
    ctrl = auto_tune(spec, cfg, meas)
    _dump_json(args.out, _controller_payload(ctrl))
    man = _write_manifest(args.out, "design", cfg,
                          {"delta": args.delta, "epsilon": args.epsilon,
                           "space": args.space, "measurement": meas.kind,
                           "xi": meas.xi}, [args.out], args._t0)
    m = ctrl.margins
    print(f"certified (N, M) = ({ctrl.N}, {ctrl.M}); "
          f"theta_max = {m.theta_max_eig:.3e}, Gamma1 = {m.Gamma1_Np1:.3e}, "
          f"Gamma2 = {m.Gamma2_M:.3e}; wrote {args.out}; manifest {man}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _load_or_default(args)
    controller = None
    if args.gains:
        with open(args.gains) as fh:
            controller = _LoadedController(json.load(fh))
    data = InitialData(
        y0=lambda x: np.asarray(x) * (cfg.L - np.asarray(x)),
        z0=lambda x: np.sin(np.pi * np.asarray(x) / (2.0 * cfg.L)),
        z1=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        v0=0.0)
    prob = build_problem(controller, cfg, N_sim=args.nsim, M_sim=args.msim,
                         space=args.space, dt=args.dt)
    u0 = initial_state(prob, data)
    traj = run_closed_loop(prob, u0, args.tfinal)
    stride = max(1, len(traj.t) // args.samples)
    path = args.out
    rows = zip(traj.t[::stride], traj.V[::stride], traj.H0[::stride],
               traj.H1[::stride], traj.v[::stride], traj.yo[::stride])
    _write_csv(path, ["t", "V", "H0", "H1", "v", "y_o"], rows)
    outputs = [path]
    if args.snapshots:
        x = np.linspace(0.0, cfg.L, 201)
        yf = reconstruct_field(traj.u_final, x, "y", prob)
        zf = reconstruct_field(traj.u_final, x, "z", prob)
        ztf = reconstruct_field(traj.u_final, x, "zt", prob)
        snap = path.rsplit(".", 1)[0] + "_field.csv"
        _write_csv(snap, ["x", "y", "z", "zt"],
                   zip(x, yf.real, zf.real, ztf.real))
        outputs.append(snap)
    man = _write_manifest(path, "simulate", cfg,
                          {"tfinal": args.tfinal, "nsim": args.nsim,
                           "msim": args.msim, "space": args.space,
                           "dt": prob.dt, "gains": args.gains},
                          outputs, args._t0)
    if controller is not None:
        fit = decay_rate_fit(traj.t, traj.V,
                             (min(2.0, 0.25 * args.tfinal), args.tfinal))
        print(f"fitted Lyapunov decay rate {fit['rate']:.4f} "
              f"(r^2 = {fit['r_squared']:.5f})")
    print(f"wrote {path}; manifest {man}")
    return EXIT_OK


def _cmd_check(args) -> int:
    """Fast invariant suite over a small damped configuration."""
    cfg = _default_config()
    failures = []

    def check(name, ok):
        print(("PASS " if ok else "FAIL ") + name)
        if not ok:
            failures.append(name)

    rep = validate(cfg)
    check("configuration validates", rep.ok)
    modes = [Mode(Branch.PARABOLIC, n, Variant.DAMPED) for n in range(1, 5)] \
        + [Mode(Branch.HYPERBOLIC, m, Variant.DAMPED) for m in (0, -1, 1, -2, 2)]
    gram = biorthogonality_check(modes, cfg)
    check("biorthogonality Gram within 1e-6 of identity",
          np.max(np.abs(gram - np.eye(len(modes)))) < 1e-6)
    g = [gamma(n, cfg) for n in range(1, 5)]
    check("coupling coefficients nonzero for n <= 4",
          min(abs(v) for v in g) > 1e-12)
    meas = Measurement.distributed(
        lambda x: np.ones_like(np.asarray(x, dtype=float)))
    tables = build_table(cfg, meas, 8, 8)
    rm = build_reduced(2, 3, 2, tables, cfg)
    check("reduced pair controllable",
          kalman_controllable(rm.A1, rm.B1)["controllable"])
    rep_g = truncated_observability_gramian([1, 2, 3], [0, -1, 1, -2, 2],
                                            2.5 * cfg.L, cfg)
    check("truncated Gramian positive definite", rep_g.min_eig > 0.0)
    return EXIT_OK if not failures else EXIT_NUMERIC


def _cmd_fig1(args) -> int:
    L, c, a, beta0 = 1.0, 50.0, 0.0, 1.0
    bs = np.linspace(0.0, L, args.points + 1)[1:]
    rows = []
    vals = []
    for b in bs:
        cfg = PlantConfig(L=L, c=c,
                          beta=BetaSpec.indicator(beta0, a, float(b), L))
        g = gamma(2, cfg)
        vals.append(g)
        rows.append([b, g])
    _write_csv(args.out, ["b", "gamma_2"], rows)
    crossings = [(bs[i], bs[i + 1]) for i in range(len(bs) - 1)
                 if vals[i] * vals[i + 1] < 0]
    zero = None
    if len(crossings) == 1:
        zeros = find_gamma_zero(2, L, c, beta0, a,
                                crossings[0][0], crossings[0][1])
        zero = zeros[0] if zeros else None
    man = _write_manifest(args.out, "fig1", None,
                          {"points": args.points}, [args.out], args._t0)
    if zero is None:
        print(f"expected exactly one sign change, found {len(crossings)}",
              file=sys.stderr)
        return EXIT_NUMERIC
    print(f"gamma_2 sign change at b = {zero:.6f}; wrote {args.out}; "
          f"manifest {man}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    p = _Parser(prog="waveheat",
                description="cascade plant analysis, certified synthesis, "
                            "and closed-loop simulation")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for randomized subtasks (default 0)")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallelism bound for sweeps (default 1)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="plant config JSON/TOML")
        sp.add_argument("--out", default=f"{name}.csv",
                        help="output path")
        return sp

    sp = add("spectrum", _cmd_spectrum, help="eigenvalue table")
    sp.add_argument("--nmax", type=int, default=20)
    sp.add_argument("--mmax", type=int, default=20)

    sp = add("eigenfun", _cmd_eigenfun, help="sample one eigenfunction")
    sp.add_argument("--branch", choices=["parabolic", "hyperbolic"],
                    required=True)
    sp.add_argument("--index", type=int, required=True)
    sp.add_argument("--dual", action="store_true",
                    help="sample the biorthogonal dual family instead")
    sp.add_argument("--points", type=int, default=201)

    sp = add("gamma", _cmd_gamma, help="coupling coefficients")
    sp.add_argument("--nmax", type=int, default=20)
    sp.add_argument("--sweep", action="store_true",
                    help="sweep indicator endpoint b for one index")
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--a", type=float, default=0.0)
    sp.add_argument("--beta0", type=float, default=1.0)
    sp.add_argument("--points", type=int, default=400)

    sp = add("weights", _cmd_weights, help="controllability-space weights")
    sp.add_argument("--nmax", type=int, default=12)
    sp.add_argument("--T", type=float, default=2.5)
    sp.add_argument("--space", choices=["V", "V0"], default="V")

    sp = add("reduce", _cmd_reduce, help="reduced model + rank tests")
    sp.add_argument("--N0", type=int, default=2)
    sp.add_argument("--N", type=int, default=4)
    sp.add_argument("--M", type=int, default=2)
    sp.add_argument("--nmax-table", type=int, default=8)
    sp.add_argument("--measurement",
                    choices=["distributed", "dirichlet", "neumann"],
                    default="distributed")
    sp.add_argument("--xi", type=float, default=None)

    sp = add("design", _cmd_design, help="certified controller synthesis")
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--space", choices=["H0", "H1"], default="H1")
    sp.add_argument("--measurement",
                    choices=["distributed", "dirichlet", "neumann"],
                    default="distributed")
    sp.add_argument("--xi", type=float, default=None)

    sp = add("simulate", _cmd_simulate, help="closed- or open-loop run")
    sp.add_argument("--gains", help="gains JSON from the design subcommand")
    sp.add_argument("--tfinal", type=float, default=8.0)
    sp.add_argument("--nsim", type=int, default=60)
    sp.add_argument("--msim", type=int, default=60)
    sp.add_argument("--space", choices=["H0", "H1"], default="H0")
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--samples", type=int, default=2000,
                    help="max CSV rows (time decimation)")
    sp.add_argument("--snapshots", action="store_true",
                    help="also write final field profiles")

    add("check", _cmd_check, help="fast invariant self-check")

    sp = add("fig1", _cmd_fig1, help="coupling-zero sweep (gamma_2 vs b)")
    sp.add_argument("--points", type=int, default=400)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args._t0 = time.time()
    np.random.seed(args.seed)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DesignError, ControllabilityLost) as exc:
        print(f"design infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SpectralError, QuadratureError, DivergenceError,
            np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
