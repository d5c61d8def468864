"""End-to-end construction of Omega_Psi with persisted, replayable artifacts."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import csv
import hashlib
import io
import json
import logging
import math
import platform
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .disks import DiskSample, threshold_delta
from .potential import (DomainParams, ShellTable, audit_fd_inclusion, audit_sublevel, calibrate_c,
                        check_increasing, kappa_region)
from .profile import ConvexProfile, build_rho1, rho_check
from .wermer import EpsilonSchedule, ScheduleError, alpha_bound, build_schedule, certify, q0_from_alphas

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_AUDIT, EXIT_NUMERIC = 0, 1, 2, 3

# c(n) shift fed to build_rho1 so that rho >= c(n) holds on the whole window [n-1, n+2]
C_SHIFT = 2


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str, exit_code: int):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.exit_code = exit_code


@dataclass
class RunConfig:
    m: int = 6
    safety: float = 0.5
    circle_samples: int = 2048
    horizon: int = 10
    alpha_density: int = 32
    z_spacing: float = 0.25
    theta_samples: int = 16
    q_margin: float = 0.25
    beta_disks: int = 8
    beta_grid: int = 20
    delta_safety: float = 0.5
    c_step: float = 0.5
    audit_samples: int = 2000
    audit_ns: tuple[int, ...] = (2, 3, 4, 5, 6)
    audit_d: float = 1.0
    seed: int = 0
    schedule_file: str | None = None
    out: str = "run"

    def validate(self) -> None:
        positive = ["m", "circle_samples", "horizon", "alpha_density", "theta_samples", "beta_disks",
                    "beta_grid", "audit_samples"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ["z_spacing", "q_margin", "delta_safety", "c_step", "audit_d"]:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.safety < 1:
            raise ValueError("safety must lie in (0, 1)")
        if self.m < 2:
            raise ValueError("the construction needs m >= 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["audit_ns"] = list(self.audit_ns)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        data = dict(data)
        if "audit_ns" in data:
            data["audit_ns"] = tuple(int(n) for n in data["audit_ns"])
        return cls(**data)

    def digest(self) -> str:
        body = {k: v for k, v in self.to_dict().items() if k != "out"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


@dataclass
class BuildResult:
    config: RunConfig
    schedule: EpsilonSchedule
    profile: ConvexProfile
    rows: list[dict]
    q0: int
    audit: dict
    files: dict[str, str] = field(default_factory=dict)

    @property
    def params(self) -> DomainParams:
        return DomainParams(self.schedule, self.profile)

    @property
    def ok(self) -> bool:
        return bool(self.audit["ok"])


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def manifest(config: RunConfig, stage_seeds: dict[str, int]) -> dict:
    # the output directory is left out so that replays into another directory match byte for byte
    body = {k: v for k, v in config.to_dict().items() if k != "out"}
    return {"config": body, "config_hash": config.digest(), "seeds": stage_seeds,
            "versions": {"wermerlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()}}


def load_schedule(path: str) -> EpsilonSchedule:
    try:
        sched = EpsilonSchedule.from_json(Path(path).read_text())
    except (KeyError, TypeError, ValueError) as exc:
        raise StageError("schedule", f"unreadable schedule file: {exc}", EXIT_AUDIT) from exc
    return sched


def build_domain(config: RunConfig, write: bool = True) -> BuildResult:
    """schedule -> alpha/q0 -> kappa(n) -> q(n) -> delta(n), q~(n) -> c(n) -> rho -> audits."""
    config.validate()
    N, top = config.horizon, config.horizon + C_SHIFT
    # schedule
    try:
        if config.schedule_file:
            sched = load_schedule(config.schedule_file)
        else:
            sched = build_schedule(config.m, config.safety, config.circle_samples)
        cert = certify(sched)
    except ScheduleError as exc:
        raise StageError("schedule", str(exc), EXIT_AUDIT) from exc
    logger.info("schedule m=%d certified, min margin %.3g", sched.m, cert.min_margin)
    params0 = DomainParams(sched)

    # horizontal estimate alpha(n) and q0
    alphas = {n: alpha_bound(sched, n, config.alpha_density).alpha for n in range(1, N + 1)}
    q0 = q0_from_alphas(alphas)
    if q0 is None:
        raise StageError("alpha", "alpha(n) never drops below 1/2 on the horizon", EXIT_NUMERIC)

    # kappa(n), q(n)
    rows = []
    tables: dict[float, ShellTable] = {}

    def table(kappa):
        if kappa not in tables:
            tables[kappa] = ShellTable(sched, kappa, top, config.z_spacing, config.theta_samples)
        return tables[kappa]

    for n in range(1, top + 1):
        kap = kappa_region(sched, n, tail="level-min")
        qc = table(kap).calibrate(n, config.q_margin)
        rows.append({"n": n, "kappa": kap, "q_raw": qc.q, "alpha": alphas.get(n, math.nan)})

    # delta(n) and q~(n) for n >= q0
    cache: dict[int, DiskSample] = {}
    for row in rows:
        n = row["n"]
        row.update(delta_star=math.nan, delta=math.nan, q_tilde=math.nan)
        if n < q0:
            continue
        ks = [k for k in range(n - 1, n + 3) if k >= 1]
        for k in ks:
            if k not in cache:
                cache[k] = DiskSample(params0, k, config.beta_disks, config.seed, config.beta_grid)
        star = threshold_delta([cache[k] for k in ks])
        if not star > 0:
            raise StageError("delta", f"no delta with beta < 1/2 at n={n}", EXIT_NUMERIC)
        delta = config.delta_safety * star
        if delta >= row["kappa"]:
            # E^kappa is inside E^delta, so q(n) already gives the delta inclusion
            q_tilde = row["q_raw"]
        else:
            q_tilde = max(row["q_raw"], table(delta).calibrate(n, config.q_margin).q)
        row.update(delta_star=star, delta=delta, q_tilde=q_tilde)

    # c(n): raise q only (which keeps every inclusion) until c is strictly increasing
    prev = -math.inf
    for row in rows:
        n = row["n"]
        base = row["q_raw"] if n < q0 else row["q_tilde"]
        raw = calibrate_c(row["q_raw"], n, q0, None if n < q0 else row["q_tilde"])
        q = base + max(0.0, prev + config.c_step - raw)
        row.update(c_raw=raw, q=q, c=q + n)
        prev = row["c"]
    c_map = {r["n"]: r["c"] for r in rows}
    if check_increasing(c_map):
        raise StageError("calibrate_c", "c(n) is not strictly increasing", EXIT_NUMERIC)

    # rho
    c_shift = [c_map[min(j + C_SHIFT, top)] if j + C_SHIFT >= 1 else c_map[1] for j in range(N + 1)]
    profile = build_rho1(c_shift, N)
    window = {n: c_map[n] for n in range(1, N + 1)}
    rho_rep = rho_check(profile, c_shift, N, window_c=window)
    params = DomainParams(sched, profile)

    # audits
    subl, fd = [], []
    for n in config.audit_ns:
        row = rows[n - 1]
        subl.append(audit_sublevel(params0, n, row["q"], row["kappa"], config.audit_samples,
                                   config.seed + n).to_dict())
        if 2 * config.audit_d / math.exp(n) < 1:
            fd.append({**audit_fd_inclusion(params, n, config.audit_d, row["kappa"], config.audit_samples,
                                            config.seed + 100 + n).to_dict(), "d": config.audit_d})
    audit = {
        "schedule": cert.to_dict(),
        "q0": q0,
        "alpha_nonincreasing": all(alphas[n + 1] <= alphas[n] for n in range(1, N)),
        "c_increasing": True,
        "rho": rho_rep.to_dict(),
        "sublevel": subl,
        "fd_inclusion": fd,
    }
    audit["ok"] = bool(audit["alpha_nonincreasing"] and rho_rep.ok and all(a["ok"] for a in subl)
                       and all(a["ok"] for a in fd))
    result = BuildResult(config, sched, profile, rows, q0, audit)
    if write:
        persist(result)
    return result


CALIBRATION_COLUMNS = ["n", "alpha", "kappa", "q_raw", "delta_star", "delta", "q_tilde", "c_raw", "c", "q"]


def persist(result: BuildResult) -> dict[str, str]:
    out = Path(result.config.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = {"beta_disks": result.config.seed,
             "audits": [result.config.seed + n for n in result.config.audit_ns]}
    files = {
        "schedule.json": _json(result.schedule.to_dict()),
        "profile.json": _json(result.profile.to_dict()),
        "audit.json": _json(result.audit),
        "manifest.json": _json(manifest(result.config, seeds)),
    }
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8", newline="\n")
    write_csv(out / "calibration.csv", CALIBRATION_COLUMNS,
              [[r[c] for c in CALIBRATION_COLUMNS] for r in result.rows])
    result.files = {name: str(out / name) for name in [*files, "calibration.csv"]}
    return result.files


PLOT_SCHEMAS = {
    "alpha": ["n", "alpha", "grid_density"],
    "beta": ["n", "delta", "beta", "disks_sampled"],
    "branches": ["re_z", "im_z", "re_w", "im_w", "signature"],
    "exclusion": ["d", "best_radius", "trials"],
}

PLOT_SCRIPTS = {
    "alpha": "import pandas as pd, matplotlib.pyplot as plt\n"
             "df = pd.read_csv('alpha.csv'); plt.semilogy(df.n, df.alpha, 'o-'); plt.axhline(0.5, ls='--')\n"
             "plt.xlabel('n'); plt.ylabel('alpha(n)'); plt.savefig('alpha.png')\n",
    "beta": "import pandas as pd, matplotlib.pyplot as plt\n"
            "df = pd.read_csv('beta.csv')\n"
            "for n, g in df.groupby('n'): plt.semilogx(g.delta, g.beta, label=f'n={n}')\n"
            "plt.axhline(0.5, ls='--'); plt.legend(); plt.xlabel('delta'); plt.ylabel('beta'); plt.savefig('beta.png')\n",
    "branches": "import pandas as pd, matplotlib.pyplot as plt\n"
                "df = pd.read_csv('branches.csv')\n"
                "plt.scatter(df.re_w, df.im_w, c=df.signature, s=1); plt.xlabel('Re w'); plt.ylabel('Im w')\n"
                "plt.savefig('branches.png')\n",
    "exclusion": "import pandas as pd, matplotlib.pyplot as plt\n"
                 "df = pd.read_csv('exclusion.csv'); plt.plot(df.d, df.best_radius, 'o-')\n"
                 "plt.xlabel('d'); plt.ylabel('r(d)'); plt.savefig('exclusion.png')\n",
}


def emit_plot_data(kind: str, run_dir: str | Path, out: str | Path | None = None, n: int = 3,
                   per_side: int = 32, deltas=None, d_values=(0.5, 1.0, 2.0), trials: int = 12) -> Path:
    """Write <kind>.csv (header row names the columns) and <kind>_plot.py for a built run."""
    from .disks import DiskSample, disk_exclusion_search
    from .lattice import RegionId, boundary_samples
    from .wermer import branch_values

    if kind not in PLOT_SCHEMAS:
        raise ValueError(f"unknown plot kind {kind!r}")
    run_dir = Path(run_dir)
    needed = ["schedule.json", "calibration.csv", "manifest.json", "profile.json"]
    missing = [f for f in needed if not (run_dir / f).exists()]
    if missing:
        raise FileNotFoundError(f"missing artifacts in {run_dir}: {missing}")
    sched = EpsilonSchedule.from_json((run_dir / "schedule.json").read_text())
    cfg = RunConfig.from_dict(json.loads((run_dir / "manifest.json").read_text())["config"])
    with open(run_dir / "calibration.csv", encoding="utf-8") as fh:
        calib = list(csv.DictReader(fh))
    out = Path(out) if out is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    rows: list[list] = []
    if kind == "alpha":
        rows = [[int(r["n"]), float(r["alpha"]), cfg.alpha_density] for r in calib if not math.isnan(float(r["alpha"]))]
    elif kind == "beta":
        deltas = list(deltas) if deltas is not None else list(np.geomspace(1e-4, 1.0, 17))
        for k in (n, n + 1):
            sample = DiskSample(sched, k, cfg.beta_disks, cfg.seed, cfg.beta_grid)
            rows += [[k, float(dl), sample.beta(float(dl)), cfg.beta_disks] for dl in deltas]
    elif kind == "branches":
        zs = boundary_samples(RegionId("S", n), per_side)
        for z in zs:
            for s, w in enumerate(branch_values(sched, z)):
                rows.append([float(z.real), float(z.imag), float(w.real), float(w.imag), s])
    else:
        params = DomainParams(sched, ConvexProfile.from_json((run_dir / "profile.json").read_text()))
        for d in d_values:
            rep = disk_exclusion_search(params, float(d), 1.0, trials=trials, seed=cfg.seed)
            rows.append([float(d), rep.best_radius, trials])
    path = out / f"{kind}.csv"
    write_csv(path, PLOT_SCHEMAS[kind], rows)
    (out / f"{kind}_plot.py").write_text(PLOT_SCRIPTS[kind], encoding="utf-8", newline="\n")
    return path
