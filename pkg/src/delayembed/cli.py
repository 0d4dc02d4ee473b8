"""Command-line front end: certify, repair, find-orbit, surgery, eval-field, pipeline.

Every run writes a manifest (default manifest.json in the output directory)
with the effective parameters, the tool version, the artifacts produced and,
on failure, the failing stage. Exit codes:

    0  success                 10  no periodic orbit found
    2  usage or input error    11  repair failed
    3  embedding refuted       12  surgery failed
    4  inconclusive            13  verification failed
"""

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .certify import DelayParameters, certify
from .fields import field_from_spec
from .io import (load_orbit, load_signal, read_json, read_points_csv, save_orbit, save_signal, signal_from_csv,
                 write_csv, write_json)
from .monotonicity import DegenerateSignalError, critical_points
from .orbit import uniform_tube
from .perturb import RegularizationError, RepairError, regularize, repair
from .shooting import (OrbitNotFoundError, ShootingProblem, find_orbit, find_shortest_orbit, floquet,
                       solution_residual)
from .surgery import (SurgeryError, build_perturbed_field, epsilon_terms, exterior_samples, lift_signal,
                      perturbed_field_from_manifest, verify_surgery)

__all__ = ["main", "build_parser", "EXIT"]

logger = logging.getLogger("delayembed")

EXIT = {
    "ok": 0,
    "usage": 2,
    "refuted": 3,
    "inconclusive": 4,
    "orbit": 10,
    "repair": 11,
    "surgery": 12,
    "verification": 13,
}
VERDICT_EXIT = {"certified": 0, "refuted": 3, "inconclusive": 4}

RESIDUAL_TOL = 1e-8
CLOSURE_TOL = 1e-6


class StageError(Exception):
    def __init__(self, stage, message, code):
        super().__init__(message)
        self.stage = stage
        self.code = code


class Run:
    """Collects parameters and artifacts and writes the manifest."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.artifacts = {}
        self.params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}

    def path(self, name):
        return self.out / name

    def json(self, name, obj, kind):
        write_json(self.path(name), obj, kind)
        self.artifacts[kind if kind not in self.artifacts else f"{kind}:{name}"] = name

    def record(self, key, name):
        self.artifacts[key] = name

    def finish(self, code, failure=None, extra=None):
        manifest = {
            "tool": "delayembed",
            "version": __version__,
            "command": self.args.command,
            "parameters": self.params,
            "artifacts": self.artifacts,
            "status": "ok" if code == 0 else "failed",
            "exit_code": code,
            "failure": failure,
        }
        if extra:
            manifest.update(extra)
        write_json(self.path(self.args.manifest), manifest, "manifest")
        return code


# ---------------------------------------------------------------- helpers


def _parse_tau(text):
    if text == "auto":
        return "auto"
    try:
        tau = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("tau must be a positive number or 'auto'")
    if not tau > 0 or not math.isfinite(tau):
        raise argparse.ArgumentTypeError("tau must be positive")
    return tau


def _parse_vector(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _resolve_tau(tau, signal):
    """--tau auto picks mu/24 from the signal's monotonicity profile."""
    if tau != "auto":
        return float(tau)
    prof = critical_points(signal)
    if not prof.regular:
        raise StageError("tau", "cannot choose tau automatically: signal is not regular", EXIT["usage"])
    return prof.mu / 24.0


def _load_input_signal(args):
    if args.signal:
        return load_signal(args.signal)
    if args.samples:
        return signal_from_csv(args.samples, args.period, args.modes)
    raise StageError("input", "one of --signal or --samples is required", EXIT["usage"])


def _field_spec(args):
    spec = {"name": args.field}
    if args.field == "lorenz":
        spec.update(sigma=args.sigma, rho=args.rho, beta=args.beta)
    elif args.field == "linear":
        if not args.matrix:
            raise StageError("input", "--matrix is required for the linear field", EXIT["usage"])
        vals = args.matrix
        d = int(round(math.sqrt(len(vals))))
        if d * d != len(vals):
            raise StageError("input", "--matrix needs d*d entries", EXIT["usage"])
        spec["matrix"] = np.reshape(vals, (d, d)).tolist()
    if getattr(args, "drift", None):
        spec["drift"] = args.drift
    return spec


def _curve_rows(signal, tau, n):
    t = np.arange(n) * (signal.period / n)
    lags = (0.0, tau, 2 * tau)
    cols = [signal(t - lag) for lag in lags]
    return [[float(t[i])] + [float(c[i]) for c in cols] for i in range(n)]


def _certificate_summary(cert):
    w = "none" if cert.witness is None else f"({cert.witness[0]:.12g}, {cert.witness[1]:.12g})"
    return (f"verdict: {cert.verdict}\n"
            f"tau: {cert.tau:.12g}\n"
            f"injectivity_margin: {cert.injectivity_margin:.6g}\n"
            f"immersion_margin: {cert.immersion_margin:.6g}\n"
            f"witness: {w}")


def _find_orbit(field, args):
    if args.x0 is not None:
        x0 = np.asarray(args.x0, dtype=float)
        if args.period_guess is None:
            raise StageError("find-orbit", "--period-guess is required with --x0", EXIT["usage"])
        point, normal = field.section if field.section is not None else (x0, field(x0))
        if args.section_normal is not None:
            point, normal = x0, np.asarray(args.section_normal, dtype=float)
        return find_orbit(ShootingProblem(field, point, normal, x0, args.period_guess))
    return find_shortest_orbit(field, threshold=args.return_threshold, t_total=args.scan_time)


def _verify_checks(report, shifted, speed, size):
    """Pass/fail flags; residual and closure tolerances scale with orbit speed and size."""
    checks = {
        "on_orbit_residual": report["on_orbit_residual"] < RESIDUAL_TOL * max(1.0, speed),
        "closure": report.get("closure_error", 0.0) < CLOSURE_TOL * max(1.0, size),
        "exterior_zero": report.get("exterior_max", 0.0) == 0.0,
    }
    if shifted:
        checks["linear_decay"] = all(r["ratio"] is not None and 0.4 <= r["ratio"] <= 0.6
                                      for r in report["scaling"][1:])
    return checks


# --------------------------------------------------------------- commands


def cmd_certify(args, run):
    signal = _load_input_signal(args)
    tau = _resolve_tau(args.tau, signal)
    run.params["tau_effective"] = tau
    cert = certify(signal, DelayParameters(tau))
    run.json("certificate.json", cert.to_dict(), "certificate")
    try:
        run.json("profile.json", critical_points(signal).to_dict(), "profile")
    except DegenerateSignalError:
        pass
    if args.curve:
        write_csv(run.path(args.curve), ["t", "x", "y", "z"], _curve_rows(signal, tau, args.curve_points))
        run.record("curve", args.curve)
    print(_certificate_summary(cert))
    return VERDICT_EXIT[cert.verdict]


def _repair_signal(signal, tau, args, run):
    try:
        prof = critical_points(signal)
        regular = prof.regular
    except DegenerateSignalError:
        regular = False
    if not regular:
        try:
            signal = regularize(signal, args.regularize_budget, order=args.order)
        except RegularizationError as err:
            raise StageError("regularize", str(err), EXIT["repair"])
        save_signal(run.path("regularized_signal.json"), signal)
        run.record("regularized_signal", "regularized_signal.json")
    tau = _resolve_tau(tau, signal)
    run.params["tau_effective"] = tau
    try:
        res = repair(signal, DelayParameters(tau), args.budget, args.max_iters, seed=args.seed, order=args.order)
    except RepairError as err:
        run.json("repair_trace.json", {"trace": err.trace}, "repair")
        raise StageError("repair", str(err), EXIT["repair"])
    return signal, tau, res


def cmd_repair(args, run):
    signal = _load_input_signal(args)
    _, tau, res = _repair_signal(signal, args.tau, args, run)
    save_signal(run.path("repaired_signal.json"), res.signal)
    run.record("repaired_signal", "repaired_signal.json")
    run.json("certificate.json", res.certificate.to_dict(), "certificate")
    run.json("repair_trace.json", res.to_dict(), "repair")
    print(_certificate_summary(res.certificate))
    print(f"iterations: {res.iterations}")
    return 0


def cmd_find_orbit(args, run):
    field = field_from_spec(_field_spec(args))
    try:
        orbit = _find_orbit(field, args)
        report = floquet(field, orbit)
    except OrbitNotFoundError as err:
        raise StageError("find-orbit", str(err), EXIT["orbit"])
    save_orbit(run.path("orbit.json"), orbit)
    run.record("orbit", "orbit.json")
    fl = report.to_dict()
    fl["solution_residual"] = solution_residual(field, orbit)
    fl["period"] = orbit.period
    fl["shooting"] = orbit.meta
    run.json("floquet.json", fl, "floquet")
    t, P = orbit.sample(args.csv_points)
    write_csv(run.path("orbit.csv"), ["t"] + [f"x{i}" for i in range(orbit.dim)],
              [[float(t[i])] + [float(v) for v in P[i]] for i in range(len(t))])
    run.record("orbit_csv", "orbit.csv")
    print(f"period: {orbit.period:.15g}\nresidual: {fl['solution_residual']:.3g}\n"
          f"hyperbolic: {report.hyperbolic}")
    return 0


def _surgery_and_verify(field, orbit, o_old, o_new, a, args, run):
    tube = uniform_tube(orbit)
    run.json("tube.json", tube.to_dict(), "tube")
    try:
        p_new = lift_signal(orbit, o_old, o_new, a)
        pf = build_perturbed_field(field, p_new, epsilon_terms(field, orbit, p_new), tube)
    except (SurgeryError, ValueError) as err:
        raise StageError("surgery", str(err), EXIT["surgery"])
    save_orbit(run.path("lifted_orbit.json"), p_new)
    run.record("lifted_orbit", "lifted_orbit.json")
    run.json("perturbed_field.json", pf.manifest(), "perturbed-field")
    rng = np.random.default_rng(args.seed)
    report = verify_surgery(pf, samples=args.samples_verify, seed=args.seed)
    ext = exterior_samples(pf, args.exterior_points, rng)
    report["exterior_points"] = len(ext)
    report["exterior_max"] = float(np.max(np.abs(pf.delta_f(ext)))) if len(ext) else 0.0
    shifted = report["eps_norms"]["total"] > 0
    speed = float(pf.tube.meta["speed_max"])
    size = float(np.max(np.abs(pf.orbit.sample(1024)[1])))
    report["tolerances"] = {"residual": RESIDUAL_TOL * max(1.0, speed), "closure": CLOSURE_TOL * max(1.0, size)}
    report["checks"] = _verify_checks(report, shifted, speed, size)
    report["passed"] = all(report["checks"].values())
    run.json("surgery_report.json", report, "surgery-report")
    print(f"on-orbit residual: {report['on_orbit_residual']:.3g}\n"
          f"closure error: {report.get('closure_error', float('nan')):.3g}\n"
          f"hyperbolic under f': {report.get('floquet', {}).get('hyperbolic')}\n"
          f"verification: {'passed' if report['passed'] else 'FAILED'}")
    if not report["passed"]:
        raise StageError("verify", "surgery verification failed: "
                         + ", ".join(k for k, v in report["checks"].items() if not v), EXIT["verification"])
    return pf, report


def cmd_surgery(args, run):
    field = field_from_spec(_field_spec(args))
    orbit = load_orbit(args.orbit)
    a = np.asarray(args.a, dtype=float)
    if a.shape != (orbit.dim,):
        raise StageError("input", f"--a needs {orbit.dim} entries", EXIT["usage"])
    o_old = orbit.project(a)
    o_new = load_signal(args.repaired)
    _surgery_and_verify(field, orbit, o_old, o_new, a, args, run)
    return 0


def cmd_eval_field(args, run):
    pf = perturbed_field_from_manifest(read_json(args.field_manifest, "perturbed-field"))
    X = read_points_csv(args.points, pf.dim)
    F = pf(X)
    D = pf.delta_f(X)
    header = [f"x{i}" for i in range(pf.dim)] + [f"f{i}" for i in range(pf.dim)] + [f"df{i}" for i in range(pf.dim)]
    write_csv(run.path(args.output), header, [list(X[i]) + list(F[i]) + list(D[i]) for i in range(len(X))])
    run.record("values", args.output)
    print(f"evaluated {len(X)} points")
    return 0


def cmd_pipeline(args, run):
    spec = _field_spec(args)
    field = field_from_spec(spec)
    try:
        orbit = _find_orbit(field, args)
        fl = floquet(field, orbit)
    except OrbitNotFoundError as err:
        raise StageError("find-orbit", str(err), EXIT["orbit"])
    save_orbit(run.path("orbit.json"), orbit)
    run.record("orbit", "orbit.json")
    run.json("floquet.json", fl.to_dict(), "floquet")
    a = np.asarray(args.a, dtype=float)
    if a.shape != (orbit.dim,):
        raise StageError("input", f"--a needs {orbit.dim} entries", EXIT["usage"])
    o_old = orbit.project(a)
    save_signal(run.path("observed_signal.json"), o_old)
    run.record("observed_signal", "observed_signal.json")

    signal = o_old
    try:
        regular = critical_points(signal).regular
    except DegenerateSignalError:
        regular = False
    if not regular:
        try:
            signal = regularize(signal, args.regularize_budget, order=args.order)
        except RegularizationError as err:
            raise StageError("regularize", str(err), EXIT["repair"])
        save_signal(run.path("regularized_signal.json"), signal)
        run.record("regularized_signal", "regularized_signal.json")
    tau = _resolve_tau(args.tau, signal)
    run.params["tau_effective"] = tau
    cert = certify(signal, DelayParameters(tau))
    run.json("initial_certificate.json", cert.to_dict(), "certificate")
    if not cert.certified:
        try:
            res = repair(signal, DelayParameters(tau), args.budget, args.max_iters, seed=args.seed,
                         order=args.order)
        except RepairError as err:
            run.json("repair_trace.json", {"trace": err.trace}, "repair")
            raise StageError("repair", str(err), EXIT["repair"])
        run.json("repair_trace.json", res.to_dict(), "repair")
        signal = res.signal
    save_signal(run.path("repaired_signal.json"), signal)
    run.record("repaired_signal", "repaired_signal.json")

    pf, report = _surgery_and_verify(field, orbit, o_old, signal, a, args, run)
    final = certify(pf.orbit.project(a), DelayParameters(tau))
    run.json("certificate.json", final.to_dict(), "certificate")
    print(_certificate_summary(final))
    if not final.certified:
        raise StageError("certify", f"lifted orbit observation is {final.verdict}", VERDICT_EXIT[final.verdict])
    return 0


# ----------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="delayembed", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--manifest", default="manifest.json")
        sp.add_argument("--log-level", default="WARNING")

    def signal_input(sp):
        sp.add_argument("--signal", help="signal JSON {period, modes, bumps}")
        sp.add_argument("--samples", help="CSV of samples over one period")
        sp.add_argument("--period", type=float, help="period for value-only CSV samples")
        sp.add_argument("--modes", type=int, help="mode cap for CSV ingestion")

    def field_args(sp, required=True):
        sp.add_argument("--field", required=required, choices=["lorenz", "hopf3d", "linear"])
        sp.add_argument("--sigma", type=float, default=10.0)
        sp.add_argument("--rho", type=float, default=28.0)
        sp.add_argument("--beta", type=float, default=8.0 / 3.0)
        sp.add_argument("--matrix", type=_parse_vector, help="row-major entries for --field linear")
        sp.add_argument("--drift", type=_parse_vector, help="constant vector added to the field")

    def orbit_search(sp):
        sp.add_argument("--x0", type=_parse_vector, help="initial point for shooting")
        sp.add_argument("--period-guess", type=float)
        sp.add_argument("--section-normal", type=_parse_vector)
        sp.add_argument("--return-threshold", type=float, default=1e-2)
        sp.add_argument("--scan-time", type=float, default=600.0)

    def repair_args(sp):
        sp.add_argument("--budget", type=float, default=0.05)
        sp.add_argument("--regularize-budget", type=float, default=1e-2)
        sp.add_argument("--max-iters", type=int, default=200)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--order", type=int, default=2, help="derivative order of the budget distance")

    def verify_args(sp):
        sp.add_argument("--samples-verify", type=int, default=1000)
        sp.add_argument("--exterior-points", type=int, default=2000)

    sp = sub.add_parser("certify", help="certify the delay embedding of a signal")
    common(sp)
    signal_input(sp)
    sp.add_argument("--tau", type=_parse_tau, required=True)
    sp.add_argument("--curve", help="write the delay curve (t, x, y, z) to this CSV")
    sp.add_argument("--curve-points", type=int, default=1024)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("repair", help="perturb a signal until its delay map embeds")
    common(sp)
    signal_input(sp)
    sp.add_argument("--tau", type=_parse_tau, required=True)
    repair_args(sp)
    sp.set_defaults(func=cmd_repair)

    sp = sub.add_parser("find-orbit", help="locate a periodic orbit and its Floquet multipliers")
    common(sp)
    field_args(sp)
    orbit_search(sp)
    sp.add_argument("--csv-points", type=int, default=2048)
    sp.set_defaults(func=cmd_find_orbit)

    sp = sub.add_parser("surgery", help="build f' making the lifted orbit a solution")
    common(sp)
    field_args(sp)
    sp.add_argument("--orbit", required=True)
    sp.add_argument("--repaired", required=True, help="repaired signal JSON")
    sp.add_argument("--a", type=_parse_vector, required=True, help="observation vector")
    sp.add_argument("--seed", type=int, default=0)
    verify_args(sp)
    sp.set_defaults(func=cmd_surgery)

    sp = sub.add_parser("eval-field", help="evaluate f' at points from a CSV")
    common(sp)
    sp.add_argument("--field-manifest", required=True, help="perturbed_field.json from surgery")
    sp.add_argument("--points", required=True)
    sp.add_argument("--output", default="field_values.csv")
    sp.set_defaults(func=cmd_eval_field)

    sp = sub.add_parser("pipeline", help="find orbit, observe, certify, repair, lift, surgery, verify")
    common(sp)
    field_args(sp)
    orbit_search(sp)
    sp.add_argument("--a", type=_parse_vector, required=True)
    sp.add_argument("--tau", type=_parse_tau, default="auto")
    repair_args(sp)
    verify_args(sp)
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    run = Run(args)
    try:
        run.out.mkdir(parents=True, exist_ok=True)
        code = args.func(args, run)
        return run.finish(code, None if code == 0 else {"stage": args.command, "message": "see artifacts"})
    except StageError as err:
        print(f"error [{err.stage}]: {err}", file=sys.stderr)
        return run.finish(err.code, {"stage": err.stage, "message": str(err)})
    except (OSError, ValueError, KeyError) as err:
        print(f"error [input]: {err}", file=sys.stderr)
        return run.finish(EXIT["usage"], {"stage": "input", "message": str(err)})


if __name__ == "__main__":
    sys.exit(main())
