"""Command-line entry point: `wermerlab <group> <command> [options]`."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .pipeline import (EXIT_AUDIT, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, PLOT_SCHEMAS, RunConfig, StageError,
                       build_domain, emit_plot_data, manifest)

logger = logging.getLogger("wermerlab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}")


def _cvec(text: str) -> list[complex]:
    return [_complex(t) for t in text.split(",")]


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",")]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable({k: getattr(obj, k) for k in obj.__dataclass_fields__})
    return obj


def _write_out(args, name: str, text: str) -> None:
    """Write `text` to <out>/<name> together with a manifest of the command line and seed."""
    if not args.out:
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8", newline="\n")
    command = list(sys.argv[1:]) if args.argv is None else list(args.argv)
    man = {"command": command, "seed": args.seed, "version": __version__}
    (out / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n", encoding="utf-8",
                                       newline="\n")


def _emit(args, record: dict, name: str = "result.json") -> None:
    text = json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n"
    _write_out(args, name, text)
    sys.stdout.write(text)


def _schedule(args):
    from .pipeline import load_schedule
    from .wermer import build_schedule
    if getattr(args, "run", None):
        return load_schedule(str(Path(args.run) / "schedule.json"))
    return build_schedule(args.m)


def _params(args):
    from .potential import DomainParams
    from .profile import ConvexProfile
    sched = _schedule(args)
    profile = None
    if getattr(args, "run", None):
        profile = ConvexProfile.from_json((Path(args.run) / "profile.json").read_text())
    return DomainParams(sched, profile)


# ---------------------------------------------------------------- handlers

def cmd_lattice_spiral(args):
    from .lattice import spiral_points
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "re", "im"])
    for i, p in enumerate(spiral_points(args.n), start=1):
        w.writerow([i, int(p.real), int(p.imag)])
    _write_out(args, "spiral.csv", buf.getvalue())
    sys.stdout.write(buf.getvalue())


def cmd_wermer_schedule(args):
    from .wermer import build_schedule, certify
    s = build_schedule(args.m, args.safety, args.circle_samples)
    _emit(args, {"schedule": s.to_dict(), "certification": certify(s).to_dict()}, "schedule.json")


def cmd_wermer_alpha(args):
    from .wermer import alpha_bound, q0_from_alphas
    s = _schedule(args)
    res = {n: alpha_bound(s, n, args.density).alpha for n in range(1, args.n + 1)}
    _emit(args, {"alpha": res, "q0": q0_from_alphas(res), "grid_density": args.density})


def cmd_wermer_shift(args):
    from .wermer import shift_error
    s = _schedule(args)
    val = shift_error(s.truncated(args.p), args.p, args.delta)
    ref = 2 * s.eps[args.p - 1] * math.sqrt(s.radius(args.p))
    _emit(args, {"p": args.p, "delta": args.delta, "shift_error": val, "two_eps_sqrt_r": ref})


def cmd_potential_phi(args):
    from .potential import phi_m
    s = _schedule(args)
    _emit(args, {"z": args.z, "w": args.w, "m": s.m, "phi": float(phi_m(s, args.z, args.w))})


def cmd_potential_psi(args):
    from .potential import psi
    p = _params(args)
    val, flag = psi(p, args.z, args.w, return_flag=True)
    _emit(args, {"z": args.z, "w": args.w, "psi": float(val), "overflow": bool(flag)})


def cmd_domain_contains(args):
    from .potential import omega_contains
    p = _params(args)
    _emit(args, {"z": args.z, "w": args.w, "zeta": args.zeta, "inside": bool(omega_contains(p, args.z, args.w, args.zeta))})


def cmd_calibrate_q(args):
    from .potential import DomainParams, calibrate_q, kappa_region
    s = _schedule(args)
    kap = args.kappa if args.kappa is not None else kappa_region(s, args.n, tail="level-min")
    _emit(args, calibrate_q(DomainParams(s), args.n, kap, args.z_spacing, args.theta_samples).to_dict())


def cmd_calibrate_c(args):
    from .potential import calibrate_c
    _emit(args, {"n": args.n, "c": calibrate_c(args.q, args.n, args.q0, args.q_tilde)})


def cmd_rho_build(args):
    from .profile import build_rho1
    prof = build_rho1(args.c, args.N)
    _emit(args, prof.to_dict(), "profile.json")


def _profile(args):
    from .profile import ConvexProfile
    return ConvexProfile.from_json(Path(args.profile).read_text())


def cmd_rho_eval(args):
    from .profile import rho1_eval, rho_eval
    prof = _profile(args)
    _emit(args, {"t": args.t, "rho": [float(rho_eval(prof, t)) for t in args.t],
                 "rho1": [float(rho1_eval(prof, t)) for t in args.t]})


def cmd_rho_check(args):
    from .profile import rho_check
    _emit(args, rho_check(_profile(args), args.c, args.N).to_dict())


def cmd_disks_beta(args):
    from .disks import DiskSample
    sample = DiskSample(_schedule(args), args.n, args.count, args.seed, args.grid_density)
    _emit(args, {"n": args.n, "delta": args.delta, "beta": sample.beta(args.delta), "disks_sampled": args.count,
                 "seed": args.seed, "grid_density": args.grid_density, "bound": "sampled lower bound"})


def cmd_disks_delta_n(args):
    from .disks import delta_n
    _emit(args, delta_n(_schedule(args), args.n, args.count, args.seed, args.safety, args.grid_density).to_dict())


def cmd_disks_exclude(args):
    from .disks import disk_exclusion_search
    rep = disk_exclusion_search(_params(args), args.d, args.r, args.trials, args.seed)
    _emit(args, rep.to_dict())


def cmd_disks_harnack(args):
    from .disks import harnack_localize, random_omega_disk
    params = _params(args)
    rng = np.random.default_rng(args.seed)
    bad = 0
    for _ in range(args.trials):
        disk = random_omega_disk(params, rng, radius=float(rng.uniform(0.2, 3.0)))
        bad += not harnack_localize(disk, params).ok
    _emit(args, {"trials": args.trials, "violations": bad, "seed": args.seed})
    return EXIT_OK if bad == 0 else EXIT_AUDIT


def _domain(name: str, param: float):
    from .kobayashi import ball, half_plane, omega_eps, unit_disk
    table = {"disk": lambda: unit_disk, "ball": lambda: ball(param), "omega-eps": lambda: omega_eps(param),
             "half-plane": lambda: half_plane}
    if name not in table:
        raise UsageError(f"unknown domain {name!r}")
    return table[name]()


def cmd_kob_upper(args):
    from .kobayashi import kobayashi_upper
    member = _domain(args.domain, args.param)
    est = kobayashi_upper(member, args.point, args.dir, trials=args.trials, seed=args.seed)
    _emit(args, est)


def cmd_kob_lower(args):
    from .kobayashi import kobayashi_lower_projection
    if len(args.point) != 3 or len(args.dir) != 3:
        raise UsageError("--point and --dir need three coordinates (z, w, zeta)")
    _emit(args, {"lower": kobayashi_lower_projection(_params(args), args.point, args.dir), "method": "projection"})


def cmd_hm_estimate(args):
    from .kobayashi import SlitDisk, harmonic_measure
    arcs = "circle" if args.arc == "circle" else [tuple(_floats(args.arc))]
    _emit(args, harmonic_measure(SlitDisk(args.k), arcs, 0j, args.walkers, args.seed))


def _slits(text: str | None):
    if not text:
        return ()
    return tuple(tuple(_complex(p) for p in seg.split(":")) for seg in text.split(";"))


def cmd_hm_sh93(args):
    from .kobayashi import sh93_bound_check
    rep = sh93_bound_check(args.k, _slits(args.slits), args.walkers, args.seed)
    _emit(args, {"k": rep.k, "omega": rep.omega, "distance": rep.distance, "bound": rep.bound,
                 "tolerance": rep.tolerance, "ok": rep.ok})
    return EXIT_OK if rep.ok else EXIT_AUDIT


def cmd_antipeak_check(args):
    from .kobayashi import antipeak_check, half_plane, omega_eps
    if args.domain == "omega-eps" and args.phi == "inv-z":
        rep = antipeak_check(omega_eps(args.param), lambda p: 1 / np.abs(p[0]), 2, args.radii, seed=args.seed)
    elif args.domain == "half-plane" and args.phi == "exp-neg":
        rep = antipeak_check(half_plane, None, 1, args.radii, witness=lambda p: np.exp(-p[0]), seed=args.seed)
    else:
        raise UsageError("supported pairs: omega-eps/inv-z and half-plane/exp-neg")
    _emit(args, rep)


def cmd_mvcert_run(args):
    from .kobayashi import exponential_disk, mean_value_certificate, omega_eps
    eps = args.param
    rep = mean_value_certificate(exponential_disk(args.z0), omega_eps(eps), lambda p: 1 / np.abs(p[0]), args.k,
                                 args.R, 1 / eps, math.sqrt(2) / args.R, args.walkers, args.seed,
                                 require_into=False)
    _emit(args, rep)


def cmd_pipeline(args):
    cfg = RunConfig.from_dict(json.loads(Path(args.config).read_text())) if args.config else RunConfig()
    if args.m is not None:
        cfg.m = args.m
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.out = args.out or cfg.out
    if args.schedule_file:
        cfg.schedule_file = args.schedule_file
    res = build_domain(cfg)
    sys.stdout.write(json.dumps({"ok": res.ok, "q0": res.q0, "files": res.files}, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if res.ok else EXIT_AUDIT


def cmd_plot(args):
    path = emit_plot_data(args.kind, args.run, args.out, n=args.n)
    sys.stdout.write(f"{path}\n")


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    # suppressed defaults let the options appear before or after the subcommand
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    sched = _Parser(add_help=False)
    sched.add_argument("--m", type=int, default=6, help="truncation level")
    sched.add_argument("--run", help="directory of a built run (schedule.json, profile.json)")

    p = _Parser(prog="wermerlab", description=__doc__, parents=[common])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    groups = p.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def group(name):
        g = groups.add_parser(name)
        return g.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(sub, name, fn, parents=(common,)):
        c = sub.add_parser(name, parents=list(parents))
        c.set_defaults(func=fn)
        return c

    g = group("lattice")
    c = cmd(g, "spiral", cmd_lattice_spiral)
    c.add_argument("--n", type=int, required=True)

    g = group("wermer")
    c = cmd(g, "schedule", cmd_wermer_schedule)
    c.add_argument("--m", type=int, default=12)
    c.add_argument("--safety", type=float, default=0.5)
    c.add_argument("--circle-samples", type=int, default=2048)
    c = cmd(g, "alpha", cmd_wermer_alpha, (common, sched))
    c.add_argument("--n", type=int, default=12)
    c.add_argument("--density", type=int, default=32)
    c = cmd(g, "shift", cmd_wermer_shift, (common, sched))
    c.add_argument("--p", type=int, required=True)
    c.add_argument("--delta", type=float, default=0.0)

    g = group("potential")
    for name, fn in (("phi", cmd_potential_phi), ("psi", cmd_potential_psi)):
        c = cmd(g, name, fn, (common, sched))
        c.add_argument("--z", type=_complex, required=True)
        c.add_argument("--w", type=_complex, required=True)

    g = group("domain")
    c = cmd(g, "contains", cmd_domain_contains, (common, sched))
    c.add_argument("--z", type=_complex, required=True)
    c.add_argument("--w", type=_complex, required=True)
    c.add_argument("--zeta", type=_complex, required=True)

    g = group("calibrate")
    c = cmd(g, "q", cmd_calibrate_q, (common, sched))
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--kappa", type=float)
    c.add_argument("--z-spacing", type=float, default=0.25)
    c.add_argument("--theta-samples", type=int, default=16)
    c = cmd(g, "c", cmd_calibrate_c)
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--q", type=float, required=True)
    c.add_argument("--q0", type=int, required=True)
    c.add_argument("--q-tilde", type=float)

    g = group("rho")
    c = cmd(g, "build", cmd_rho_build)
    c.add_argument("--c", type=_floats, required=True, help="comma-separated c(0..N)")
    c.add_argument("--N", type=int, required=True)
    c = cmd(g, "eval", cmd_rho_eval)
    c.add_argument("--profile", required=True)
    c.add_argument("--t", type=_floats, required=True)
    c = cmd(g, "check", cmd_rho_check)
    c.add_argument("--profile", required=True)
    c.add_argument("--c", type=_floats, required=True)
    c.add_argument("--N", type=int, required=True)

    g = group("disks")
    c = cmd(g, "beta", cmd_disks_beta, (common, sched))
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--delta", type=float, required=True)
    c.add_argument("--count", type=int, default=50)
    c.add_argument("--grid-density", type=int, default=40)
    c = cmd(g, "delta-n", cmd_disks_delta_n, (common, sched))
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--count", type=int, default=50)
    c.add_argument("--safety", type=float, default=0.5)
    c.add_argument("--grid-density", type=int, default=40)
    c = cmd(g, "exclude", cmd_disks_exclude, (common, sched))
    c.add_argument("--d", type=float, required=True)
    c.add_argument("--r", type=float, default=1.0)
    c.add_argument("--trials", type=int, default=40)
    c = cmd(g, "harnack", cmd_disks_harnack, (common, sched))
    c.add_argument("--trials", type=int, default=100)

    g = group("kob")
    c = cmd(g, "upper", cmd_kob_upper)
    c.add_argument("--domain", default="disk", help="disk, ball, omega-eps or half-plane")
    c.add_argument("--param", type=float, default=1.0, help="ball radius or eps")
    c.add_argument("--point", type=_cvec, required=True)
    c.add_argument("--dir", type=_cvec, required=True)
    c.add_argument("--trials", type=int, default=16)
    c = cmd(g, "lower", cmd_kob_lower, (common, sched))
    c.add_argument("--point", type=_cvec, required=True)
    c.add_argument("--dir", type=_cvec, required=True)

    g = group("hm")
    c = cmd(g, "estimate", cmd_hm_estimate)
    c.add_argument("--k", type=float, default=1.0)
    c.add_argument("--arc", default="circle", help="'circle' or 'start,length' in radians")
    c.add_argument("--walkers", type=int, default=100_000)
    c = cmd(g, "sh93", cmd_hm_sh93)
    c.add_argument("--k", type=float, default=1.0)
    c.add_argument("--slits", help="segments 'a:b;c:d' with complex endpoints")
    c.add_argument("--walkers", type=int, default=100_000)

    g = group("antipeak")
    c = cmd(g, "check", cmd_antipeak_check)
    c.add_argument("--domain", default="omega-eps")
    c.add_argument("--phi", default="inv-z")
    c.add_argument("--param", type=float, default=0.1)
    c.add_argument("--radii", type=_floats, default=[1, 4, 16, 64, 256])

    g = group("mvcert")
    c = cmd(g, "run", cmd_mvcert_run)
    c.add_argument("--k", type=float, required=True)
    c.add_argument("--R", type=float, required=True)
    c.add_argument("--z0", type=_complex, default=2.0)
    c.add_argument("--param", type=float, default=0.1, help="eps of the test domain")
    c.add_argument("--walkers", type=int, default=20_000)

    c = groups.add_parser("pipeline", parents=[common])
    c.set_defaults(func=cmd_pipeline)
    c.add_argument("--m", type=int)
    c.add_argument("--schedule-file")

    c = groups.add_parser("plot", parents=[common])
    c.set_defaults(func=cmd_plot)
    c.add_argument("--kind", choices=sorted(PLOT_SCHEMAS), required=True)
    c.add_argument("--run", required=True)
    c.add_argument("--n", type=int, default=3)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    for key in ("config", "seed", "out"):
        if not hasattr(args, key):
            setattr(args, key, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.func is not cmd_pipeline and args.seed is None:
        args.seed = 0
    if args.config and args.func is not cmd_pipeline:
        for key, value in json.loads(Path(args.config).read_text()).items():
            setattr(args, key.replace("-", "_"), value)
    try:
        code = args.func(args)
    except StageError as exc:
        sys.stderr.write(f"wermerlab: stage {exc.stage} failed: {exc}\n")
        return exc.exit_code
    except (UsageError, FileNotFoundError) as exc:
        sys.stderr.write(f"wermerlab: {exc}\n")
        return EXIT_USAGE
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        sys.stderr.write(f"wermerlab: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
