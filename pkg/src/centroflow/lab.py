"""Experiment configuration, random bodies and the run / verify / sweep drivers."""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .affine import CenteredEllipse, ellipse_body
from .body import SupportBody
from .errors import ConvexityViolation, GenerationError
from .field import PeriodicField, nodes
from .flow import FlowSpec, Trajectory, run, run_many
from .plots import trajectory_plots
from . import verify

OUT_ENV = "CENTROFLOW_OUT"


@dataclass(frozen=True)
class RandomBodySpec:
    seed: int = 0
    k_max: int = 4
    amplitude: float = 0.1
    decay: float = 3.0
    delta: float = 0.1
    max_tries: int = 1000

    def __post_init__(self):
        if self.k_max < 0:
            raise ValueError("k_max must be >= 0")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")


def generate_random_body(spec: RandomBodySpec, n: int = 256) -> SupportBody:
    """s = 1 + sum over k <= k_max of a cos 2k theta + b sin 2k theta, with min r >= delta.

    Coefficients are uniform on [-1, 1] scaled by amplitude * k^(-decay);
    draws failing the convexity margin are rejected.
    """
    rng = np.random.default_rng(spec.seed)
    th = nodes(n)
    k = np.arange(1, spec.k_max + 1)
    scale = spec.amplitude * k ** (-float(spec.decay))
    for _ in range(spec.max_tries):
        a = rng.uniform(-1.0, 1.0, k.size) * scale
        b = rng.uniform(-1.0, 1.0, k.size) * scale
        s = 1.0 + np.cos(np.outer(th, 2 * k)) @ a + np.sin(np.outer(th, 2 * k)) @ b
        try:
            body = SupportBody(PeriodicField(s, symmetric=True), convexity_floor=spec.delta)
        except ConvexityViolation:
            continue
        return body
    raise GenerationError(f"no body with min r >= {spec.delta} after {spec.max_tries} draws; lower the amplitude")


def parse_builtin(source: str, n: int = 256) -> SupportBody:
    """'circle[:R]', 'ellipse:a:b[:phi]' or 'fourier:a2,b2,a4,b4,...' (s = 1 + sum of even modes)."""
    name, _, rest = source.partition(":")
    args = [x for x in rest.split(":")] if rest else []
    try:
        if name == "circle":
            if len(args) > 1:
                raise ValueError
            return SupportBody.circle(float(args[0]) if args else 1.0, n)
        if name == "ellipse":
            if len(args) not in (2, 3):
                raise ValueError
            return ellipse_body(CenteredEllipse(*map(float, args)), n)
        if name == "fourier":
            coeffs = [float(c) for c in rest.split(",") if c.strip()]
            if len(coeffs) % 2:
                raise ValueError
            th = nodes(n)
            s = np.ones(n)
            for j in range(len(coeffs) // 2):
                s = s + coeffs[2 * j] * np.cos(2 * (j + 1) * th) + coeffs[2 * j + 1] * np.sin(2 * (j + 1) * th)
            return SupportBody(PeriodicField(s, symmetric=True))
    except ConvexityViolation as exc:
        raise ValueError(f"body source {source!r} is not strictly convex: {exc}") from None
    except ValueError:
        raise ValueError(f"malformed body source {source!r}") from None
    raise ValueError(f"unknown body source {source!r}")


# -- configuration ---------------------------------------------------------

TRAJECTORY_CHECKS = (
    "monotone_ratio",
    "min_speed",
    "area_identity",
    "omega_evolution",
    "omega_general",
    "sigma_evolution",
    "strong_isoperimetric",
    "santalo_monotone",
    "decay_diagnostics",
)
RUN_CHECKS = ("duality", "convergence")
CHECK_NAMES = TRAJECTORY_CHECKS + RUN_CHECKS


@dataclass
class BodyConfig:
    source: str = "circle"
    n: int = 256
    random: RandomBodySpec = field(default_factory=RandomBodySpec)

    def build(self, seed: int | None = None) -> SupportBody:
        if self.source == "random":
            spec = self.random if seed is None else RandomBodySpec(**{**asdict(self.random), "seed": seed})
            return generate_random_body(spec, self.n)
        if self.source.startswith("file:"):
            path = self.source[5:]
            with open(path, encoding="utf-8") as fh:
                body = SupportBody.from_json(fh.read())
            if body.n != self.n:
                raise ValueError(f"body file has n={body.n} but the config asks for n={self.n}")
            return body
        return parse_builtin(self.source, self.n)


@dataclass
class CheckConfig:
    names: tuple = ()
    tolerance: float | None = None  # overrides every check's own tolerance
    l_values: tuple = (1.0, 3.0)
    duality_horizon: float = 0.5  # fraction of the estimated extinction time
    convergence_tau_max: float = 40.0

    def __post_init__(self):
        names = ("all",) if self.names == "all" else tuple(self.names)
        if "all" in names:
            names = CHECK_NAMES
        unknown = [x for x in names if x not in CHECK_NAMES]
        if unknown:
            raise ValueError(f"unknown check(s): {', '.join(unknown)}")
        self.names = names
        self.l_values = tuple(float(x) for x in self.l_values)


@dataclass
class SweepConfig:
    p_values: tuple = ()
    seeds: tuple = ()
    radii: tuple = ()
    workers: int = 1

    def __post_init__(self):
        self.p_values = tuple(float(x) for x in self.p_values)
        self.seeds = tuple(int(x) for x in self.seeds)
        self.radii = tuple(float(x) for x in self.radii)
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class OutputConfig:
    dir: str = "centroflow_out"
    plots: bool = True


SECTIONS = {"flow": FlowSpec, "body": BodyConfig, "checks": CheckConfig, "sweep": SweepConfig, "output": OutputConfig}


@dataclass
class ExperimentConfig:
    flow: FlowSpec = field(default_factory=FlowSpec)
    body: BodyConfig = field(default_factory=BodyConfig)
    checks: CheckConfig = field(default_factory=CheckConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        body = asdict(self.body)
        return {
            "flow": self.flow.to_dict(),
            "body": body,
            "checks": {**asdict(self.checks), "names": list(self.checks.names), "l_values": list(self.checks.l_values)},
            "sweep": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.sweep).items()},
            "output": asdict(self.output),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ValueError(f"unknown config section(s): {sorted(unknown)}")
        flow = FlowSpec.from_dict(d.get("flow", {}))
        body_d = dict(d.get("body", {}))
        _reject_unknown("body", body_d, BodyConfig)
        if "random" in body_d:
            _reject_unknown("body.random", body_d["random"], RandomBodySpec)
            body_d["random"] = RandomBodySpec(**body_d["random"])
        parts = {}
        for name in ("checks", "sweep", "output"):
            sub = dict(d.get(name, {}))
            _reject_unknown(name, sub, SECTIONS[name])
            parts[name] = SECTIONS[name](**sub)
        return cls(flow=flow, body=BodyConfig(**body_d), **parts)

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def with_overrides(self, out: str | None = None, seed: int | None = None) -> ExperimentConfig:
        """Apply --out / --seed and the output-directory environment override (--out wins)."""
        cfg = copy.deepcopy(self)
        env = os.environ.get(OUT_ENV)
        if out is not None:
            cfg.output.dir = out
        elif env:
            cfg.output.dir = env
        if seed is not None:
            cfg.body.random = RandomBodySpec(**{**asdict(cfg.body.random), "seed": int(seed)})
        return cfg


def _reject_unknown(section, d, cls):
    known = {f.name for f in fields(cls)}
    bad = set(d) - known
    if bad:
        raise ValueError(f"unknown setting(s) in [{section}]: {sorted(bad)}")


# -- checks ----------------------------------------------------------------


def _tol(cfg: CheckConfig, default: float) -> float:
    return default if cfg.tolerance is None else cfg.tolerance


def circle_extinction_time(p: float, R: float = 1.0) -> float:
    return (p + 2.0) / (4.0 * p) * R ** (4.0 * p / (p + 2.0))


def estimate_extinction(body: SupportBody, p: float) -> float:
    """Extinction time of the circle with the same area (a scale for choosing horizons)."""
    return circle_extinction_time(p, math.sqrt(body.area / math.pi))


def trajectory_checks(traj: Trajectory, cfg: CheckConfig) -> list:
    """Reports of every configured check that applies to the trajectory's family."""
    spec = traj.spec
    contracting = spec.family == "contracting"
    reports = []
    for name in cfg.names:
        if name == "santalo_monotone":
            reports.append(verify.check_santalo_monotone(traj, _tol(cfg, 1e-8)))
        if not contracting:
            continue
        if name == "monotone_ratio":
            reports.append(verify.check_monotone_ratio(traj, _tol(cfg, 1e-8)))
        elif name == "min_speed":
            for q in sorted({0.0, 1.0, 2.0 * spec.p / (spec.p + 1.0)}):
                reports.append(verify.check_min_speed_monotone(traj, q, _tol(cfg, 1e-7)))
        elif name == "area_identity":
            reports.append(verify.check_area_identity(traj, _tol(cfg, 1e-4)))
        elif name == "omega_evolution":
            reports.append(verify.check_omega_evolution(traj, None, _tol(cfg, 1e-3)))
        elif name == "omega_general":
            for l in cfg.l_values:
                if l == spec.p and "omega_evolution" in cfg.names:
                    continue
                reports.append(verify.check_omega_evolution(traj, l, _tol(cfg, 1e-3)))
        elif name == "sigma_evolution":
            reports.append(verify.check_sigma_evolution(traj, _tol(cfg, 1e-2)))
        elif name == "strong_isoperimetric":
            reports.append(verify.check_strong_isoperimetric(traj, _tol(cfg, 1e-4)))
        elif name == "decay_diagnostics":
            reports.append(verify.check_decay_diagnostics(traj, tolerance=_tol(cfg, 1e-2)))
    return reports


def run_checks(body: SupportBody, spec: FlowSpec, cfg: CheckConfig) -> list:
    """Checks that run their own flows from the initial body."""
    reports = []
    if "duality" in cfg.names:
        horizon = cfg.duality_horizon * estimate_extinction(body, spec.p)
        reports.append(verify.check_duality(body, spec.p, horizon, tolerance=_tol(cfg, 1e-4)))
    if "convergence" in cfg.names and spec.p > 1.0:
        r = verify.check_convergence(body, spec.p, tau_max=cfg.convergence_tau_max)
        if cfg.tolerance is not None:
            r.tolerance = cfg.tolerance
            r.passed = r.worst_margin >= -cfg.tolerance
        reports.append(r)
    return reports


def needs_snapshots(cfg: CheckConfig) -> bool:
    return any(x in cfg.names for x in ("omega_evolution", "omega_general", "sigma_evolution", "strong_isoperimetric"))


def spec_for_checks(spec: FlowSpec, cfg: CheckConfig) -> FlowSpec:
    """Ensure the recording density the configured checks need."""
    changes = {}
    if needs_snapshots(cfg) and spec.snapshot_every == 0:
        changes["snapshot_every"] = 1000
    if spec.record_every != 1 and any(x in cfg.names for x in TRAJECTORY_CHECKS):
        changes["record_every"] = 1
    return FlowSpec.from_dict({**spec.to_dict(), **changes}) if changes else spec


# -- persistence -----------------------------------------------------------


def write_outputs(traj: Trajectory, out: Path, plots: bool = True) -> list:
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "trajectory.csv"]
    traj.to_csv(written[0])
    for st in traj.snapshots:
        path = out / f"body_{st.step_count}.json"
        path.write_text(st.body.to_json(), encoding="utf-8")
        written.append(path)
    if plots:
        for name, svg in trajectory_plots(traj).items():
            path = out / f"plot_{name}.svg"
            path.write_text(svg, encoding="utf-8")
            written.append(path)
    return written


def write_report(path: Path, summary: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")


def experiment(cfg: ExperimentConfig, out: Path | None = None, seed: int | None = None, p: float | None = None) -> dict:
    """Run one trajectory with its checks; write outputs if `out` is given.  Returns the summary."""
    spec = spec_for_checks(cfg.flow, cfg.checks)
    if p is not None:
        spec = FlowSpec.from_dict({**spec.to_dict(), "p": p})
    body = cfg.body.build(seed)
    traj = run(body, spec)
    reports = trajectory_checks(traj, cfg.checks) + run_checks(body, spec, cfg.checks)
    summary = verify.suite_summary(reports)
    final = traj.records[-1]
    summary.update(
        termination=traj.termination,
        message=traj.message,
        extinction_estimate=traj.extinction_estimate,
        final={"t": final.t, "tau": final.tau, "A": final.A, "santalo": final.santalo, "hausdorff_circle": final.hausdorff_circle},
        steps=final.step,
        p=spec.p,
        seed=seed,
    )
    if out is not None:
        write_outputs(traj, out, cfg.output.plots)
        write_report(out / "report.json", summary)
    return summary


SWEEP_FIELDS = (
    "p", "seed", "radius", "termination", "steps", "t_final", "A_final", "extinction_estimate",
    "hausdorff_circle", "santalo", "n_failed", "worst_check", "worst_margin", "error",
)


def _sweep_cell(args) -> dict:
    cfg, out, p, seed, radius = args
    row = dict.fromkeys(SWEEP_FIELDS, "")
    row.update(p=p, seed="" if seed is None else seed, radius="" if radius is None else radius)
    try:
        if radius is not None:
            cfg = copy.deepcopy(cfg)
            cfg.body.source = f"circle:{radius!r}"
        summary = experiment(cfg, out, seed=seed, p=p)
    except Exception as exc:  # recorded per cell, never fatal to the sweep
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    worst = min(summary["checks"], key=lambda c: float(c["worst_margin"]), default=None)
    row.update(
        termination=summary["termination"],
        steps=summary["steps"],
        t_final=repr(summary["final"]["t"]),
        A_final=repr(summary["final"]["A"]),
        extinction_estimate="" if summary["extinction_estimate"] is None else repr(summary["extinction_estimate"]),
        hausdorff_circle=repr(summary["final"]["hausdorff_circle"]),
        santalo=repr(summary["final"]["santalo"]),
        n_failed=summary["n_failed"],
        worst_check="" if worst is None else worst["name"],
        worst_margin="" if worst is None else repr(float(worst["worst_margin"])),
    )
    return row


def sweep_cells(cfg: ExperimentConfig):
    ps = cfg.sweep.p_values or (cfg.flow.p,)
    if cfg.sweep.radii:
        return [(p, None, R) for p in ps for R in cfg.sweep.radii]
    seeds = cfg.sweep.seeds or (None,)
    return [(p, s, None) for p in ps for s in seeds]


def cell_dir(root: Path, p, seed, radius) -> Path:
    tag = f"p{p:g}"
    if seed is not None:
        tag += f"_seed{seed}"
    if radius is not None:
        tag += f"_R{radius:g}"
    return root / tag


def sweep(cfg: ExperimentConfig, root: Path | None = None) -> list:
    """Run every cell of the sweep grid, in parallel when workers > 1.  Returns summary rows."""
    cells = sweep_cells(cfg)
    jobs = [(cfg, None if root is None else cell_dir(root, *c), *c) for c in cells]
    if cfg.sweep.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.sweep.workers) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(j) for j in jobs]
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)
        (root / "sweep.csv").write_text(sweep_csv(rows), encoding="utf-8")
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def fit_power_law(x, y) -> tuple[float, float]:
    """Least-squares (exponent, prefactor) of y = c x^e in log-log coordinates."""
    e, logc = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(e), float(math.exp(logc))


def battery(p_values, seeds, body_cfg: BodyConfig, spec: FlowSpec) -> dict:
    """Contracting trajectories for every (p, seed) pair, batched per p."""
    out = {}
    for p in p_values:
        s = FlowSpec.from_dict({**spec.to_dict(), "p": p})
        bodies = [body_cfg.build(seed) for seed in seeds]
        for seed, traj in zip(seeds, run_many(bodies, s)):
            out[(p, seed)] = traj
    return out
