"""Command-line entry point: ``etop verify | integrate | table``.

Exit codes: 0 when every check passes, 1 when a check or diagnostic fails,
2 for configuration or schema errors.  Reports are deterministic JSON
(sorted keys, no timestamps) and always carry the seed and resolved config.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from . import checks as C
from . import flows as F
from . import kernel as K
from . import rmatrix as Rm
from . import tops as T
from .errors import ConstraintViolation, EtopError, SchemaError, UnknownIdentity

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

RMATRIX_SUITE = [k for k in Rm.CATALOGUE if not k.startswith("EXT-")]
EXT_SUITE = [k for k in Rm.CATALOGUE if k.startswith("EXT-")]
SUITES = {
    "kernel": ("kernel", list(C.KERNEL_CATALOGUE)),
    "rmatrix": ("rmatrix", RMATRIX_SUITE),
    "ext": ("rmatrix", EXT_SUITE),
    "lax": ("model", list(C.MODEL_CATALOGUE)),
}

TABLE_FUNCTIONS = ("theta", "E1", "E2", "wp", "wp_prime", "kronecker", "phi_alpha", "f_alpha")


class ConfigError(Exception):
    pass


def parse_complex(text):
    """Parse ``a+bi`` / ``a-bi`` / ``bi`` / ``a`` (no spaces)."""
    if isinstance(text, complex):
        return text
    s = str(text).strip().replace(" ", "")
    if not s:
        raise argparse.ArgumentTypeError("empty complex number")
    try:
        return complex(s.replace("i", "j"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"cannot parse complex number {text!r}") from exc


def parse_alpha(text):
    try:
        a1, a2 = (int(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"alpha must be 'a1,a2', got {text!r}") from exc
    return a1, a2


def parse_grid(text):
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must be 'lo:hi:count', got {text!r}") from exc
    if count < 1 or not hi >= lo:
        raise argparse.ArgumentTypeError("grid needs count >= 1 and hi >= lo")
    return lo, hi, count


def _cjson(z):
    return [float(np.real(z)), float(np.imag(z))]


def _default_seed():
    raw = os.environ.get("ETOP_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"ETOP_SEED must be an integer, got {raw!r}")


def _emit(doc, path):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _err(msg):
    print(f"etop: {msg}", file=sys.stderr)


# ------------------------------------------------------------------ verify


def _resolve_suite(name):
    key = name.lower()
    if key == "all":
        return [(kind, ident) for kind, ids in SUITES.values() for ident in ids]
    if key in SUITES:
        kind, ids = SUITES[key]
        return [(kind, ident) for ident in ids]
    upper = name.upper()
    if upper in Rm.CATALOGUE:
        return [("rmatrix", upper)]
    if upper in C.KERNEL_CATALOGUE:
        return [("kernel", upper)]
    if upper in C.MODEL_CATALOGUE:
        return [("model", upper)]
    raise ConfigError(f"unknown suite or identity {name!r}")


def cmd_verify(args):
    if args.samples < 1:
        raise ConfigError("--samples must be >= 1")
    if not args.tol > 0:
        raise ConfigError("--tol must be positive")
    if args.N < 1 or args.M < 1:
        raise ConfigError("--N and --M must be positive")
    tau = K.check_tau(args.tau)
    plan = _resolve_suite(args.suite)
    spec = Rm.RMatrixSpec(args.N, args.M, tau)
    records = []
    for kind, ident in plan:
        if kind == "kernel":
            rep = C.verify_kernel_identity(ident, tau, args.samples, min(args.tol, 1e-10), args.seed)
        elif kind == "rmatrix":
            rep = Rm.verify_identity(ident, spec, args.samples, args.tol, args.seed)
        else:
            rep = C.verify_model_identity(ident, args.N, args.M, tau, args.samples, args.tol, args.seed)
        rec = rep.to_dict()
        extra = {k: v for k, v in rep.details.items() if k != "retries"}
        if extra:
            rec["details"] = extra
        records.append(rec)
        status = "ok  " if rep.passed else "FAIL"
        print(f"{status} {ident:<18} N={rep.n} M={rep.m} residual={rep.max_rel_residual:.3e}",
              file=sys.stderr)
    report = {
        "suite": args.suite,
        "identities": records,
        "all_passed": all(r["passed"] for r in records),
        "version": __version__,
        "config": {"N": args.N, "M": args.M, "tau": _cjson(tau), "samples": args.samples,
                   "tol": args.tol, "seed": args.seed},
    }
    _emit(report, args.out)
    return EXIT_OK if report["all_passed"] else EXIT_FAIL


# ------------------------------------------------------------------ integrate


def _load_state(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read state file: {exc}") from exc
    return doc


def _scalar_pvi(doc, args):
    for key in ("u0", "udot0", "nu"):
        if key not in doc:
            raise SchemaError(f"pvi-scalar state needs {key!r}")
    u0 = T._cparse(doc["u0"], "u0")
    udot0 = T._cparse(doc["udot0"], "udot0")
    nu = [T._cparse(v, "nu") for v in doc["nu"]]
    if len(nu) != 4:
        raise SchemaError("nu must hold four constants")
    path = F.TauPath(args.tau0, args.tau1)
    traj = F.pvi_scalar(u0, udot0, nu, path, args.ds)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s_or_t", "u_re", "u_im", "udot_re", "udot_im", "energy_re", "energy_im"])
            for s, y, d in zip(traj.times, traj.states, traj.diagnostics):
                w.writerow([repr(float(s))] + [repr(float(x)) for x in
                           (y[0].real, y[0].imag, y[1].real, y[1].imag, d["energy"].real, d["energy"].imag)])
    energy = [d["energy"] for d in traj.diagnostics]
    summary = {"model": "pvi-scalar", "steps": len(traj.times) - 1,
               "final": {"u": _cjson(traj.final[0]), "udot": _cjson(traj.final[1])},
               "energy_change": float(abs(energy[-1] - energy[0])), "passed": True}
    return summary, True


def cmd_integrate(args):
    doc = _load_state(args.state)
    model = doc.get("model") if isinstance(doc, dict) else None
    if args.model and model and args.model != model:
        raise ConfigError(f"--model {args.model} does not match state file model {model}")
    config = {"model": model, "state": os.path.basename(args.state), "seed": args.seed}
    iso = args.tau0 is not None or args.tau1 is not None
    if iso and (args.tau0 is None or args.tau1 is None):
        raise ConfigError("--tau0 and --tau1 must be given together")
    if model == "pvi-scalar":
        if not iso:
            raise ConfigError("pvi-scalar integrates along a tau path; give --tau0 and --tau1")
        summary, ok = _scalar_pvi(doc, args)
        config.update({"tau0": _cjson(args.tau0), "tau1": _cjson(args.tau1), "ds": args.ds})
    else:
        state = T.state_from_dict(doc)
        if iso:
            if isinstance(state, (T.RelTopState,)) or getattr(state, "eta", None) is not None:
                raise ConfigError("relativistic models have no isomonodromic flow here")
            if args.ds <= 0:
                raise ConfigError("--ds must be positive")
            path = F.TauPath(args.tau0, args.tau1)
            probes = args.probe_z or [0.31 + 0.17j]
            traj = F.integrate_isomonodromic(state, path, args.ds, w_samples=probes)
            worst = traj.max_diagnostic("residual")
            tol = args.tol if args.tol is not None else 1e-8
            ok = worst < tol
            summary = {"model": model, "steps": len(traj.times) - 1,
                       "max_monodromy_residual": worst, "tolerance": tol, "passed": ok}
            config.update({"tau0": _cjson(args.tau0), "tau1": _cjson(args.tau1), "ds": args.ds,
                           "probe_w": [_cjson(w) for w in probes]})
        else:
            if args.dt <= 0:
                raise ConfigError("--dt must be positive")
            probes = args.probe_z or [0.31 + 0.17j]
            traj = F.integrate_autonomous(state, args.t0, args.t1, args.dt, probe_z=probes)
            drift = traj.drift("inv")
            tol = args.tol if args.tol is not None else 1e-6
            ok = drift < tol
            summary = {"model": model, "steps": len(traj.times) - 1,
                       "max_invariant_drift": drift, "max_z2_defect": traj.max_diagnostic("z2"),
                       "tolerance": tol, "passed": ok}
            config.update({"t0": args.t0, "t1": args.t1, "dt": args.dt,
                           "probe_z": [_cjson(z) for z in probes]})
        if args.out:
            F.write_trajectory_csv(traj, args.out)
        summary["final_state"] = T.state_to_dict(traj.final)
    summary["version"] = __version__
    summary["config"] = config
    _emit(summary, args.summary)
    if not ok:
        _err("diagnostic tolerance exceeded")
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------------------ table


def _table_fn(args, tau):
    name = args.fn
    if name == "theta":
        return lambda z: K.theta(z, tau)
    if name == "E1":
        return lambda z: K.e1(z, tau)
    if name == "E2":
        return lambda z: K.e2(z, tau)
    if name == "wp":
        return lambda z: K.wp(z, tau)
    if name == "wp_prime":
        return lambda z: K.wp_prime(z, tau)
    if name == "kronecker":
        return lambda z: K.kronecker(z, args.u, tau)
    if args.alpha is None:
        raise ConfigError(f"--fn {name} needs --alpha")
    if name == "phi_alpha":
        return lambda z: K.phi_alpha(args.hbar, z, args.alpha, args.N, tau)
    return lambda z: K.f_alpha(z, args.alpha, args.N, tau, args.hbar)


def cmd_table(args):
    tau = K.check_tau(args.tau)
    fn = _table_fn(args, tau)
    lo, hi, count = args.grid
    axis = np.linspace(lo, hi, count)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    poles = 0
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["x", "y", "z_re", "z_im", "value_re", "value_im"])
        for x in axis:
            for y in axis:
                z = x + y * tau
                try:
                    v = complex(fn(z))
                    cells = [repr(v.real), repr(v.imag)]
                except EtopError:
                    poles += 1
                    cells = ["nan", "nan"]
                w.writerow([repr(float(x)), repr(float(y)), repr(float(z.real)), repr(float(z.imag))] + cells)
    finally:
        if args.out:
            out.close()
    if poles:
        _err(f"warning: {poles} grid cells lie on or next to a pole")
    return EXIT_OK


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _err(message)
        sys.exit(EXIT_CONFIG)


def build_parser():
    p = _Parser(prog="etop", description="Elliptic tops: identity checks, flows and tables.")
    p.add_argument("--version", action="version", version=f"etop {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="run identity suites and write a JSON report")
    v.add_argument("--suite", default="all",
                   help="all, kernel, rmatrix, ext, lax, or a single identity id")
    v.add_argument("--N", type=int, default=2)
    v.add_argument("--M", type=int, default=1)
    v.add_argument("--tau", type=parse_complex, default=1j)
    v.add_argument("--samples", type=int, default=100)
    v.add_argument("--tol", type=float, default=1e-9)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--out", help="report path (stdout when omitted)")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("integrate", help="integrate a model from a state file")
    g.add_argument("--model", choices=T.MODELS)
    g.add_argument("--state", required=True)
    g.add_argument("--t0", type=float, default=0.0)
    g.add_argument("--t1", type=float, default=1.0)
    g.add_argument("--dt", type=float, default=1e-3)
    g.add_argument("--tau0", type=parse_complex)
    g.add_argument("--tau1", type=parse_complex)
    g.add_argument("--ds", type=float, default=1e-3)
    g.add_argument("--probe-z", type=parse_complex, action="append", dest="probe_z")
    g.add_argument("--tol", type=float)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", help="trajectory CSV path")
    g.add_argument("--summary", help="summary JSON path (stdout when omitted)")
    g.set_defaults(func=cmd_integrate)

    t = sub.add_parser("table", help="tabulate a kernel function on a grid x + y tau")
    t.add_argument("--fn", required=True, choices=TABLE_FUNCTIONS)
    t.add_argument("--tau", type=parse_complex, default=1j)
    t.add_argument("--grid", type=parse_grid, default=(0.1, 0.9, 9))
    t.add_argument("--alpha", type=parse_alpha)
    t.add_argument("--N", type=int, default=2)
    t.add_argument("--u", type=parse_complex, default=0.3 + 0.1j)
    t.add_argument("--hbar", type=parse_complex, default=0j)
    t.add_argument("--out")
    t.set_defaults(func=cmd_table)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        return args.func(args)
    except (ConfigError, SchemaError, ConstraintViolation, UnknownIdentity, ValueError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
