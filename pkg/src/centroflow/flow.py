"""Time integration of the contracting, expanding and area-normalised p-flows.

All three families act on the support function s(theta) of a body in K_sym:

    contracting   ds/dt   = -s^(1-3a) r^(-a)
    expanding     ds/dt   = +s^(1+3a) r^(a)
    normalized    ds/dtau = -s kappa0^a + s Omega_p / (2 pi)

with a = p / (p + 2) and r = s'' + s.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import __version__
from .body import SupportBody, area, dual_area
from .errors import ConvexityViolation
from .field import PeriodicField, integrate_values, polished_extrema, radius_values, symmetrize_values

FAMILIES = ("contracting", "expanding", "normalized")
TERMINATIONS = ("extinction", "blowup", "max_steps", "convexity_failure", "horizon")
HALVINGS = 10


def exponent(p: float) -> float:
    return p / (p + 2.0)


def distinguished_l(p: float) -> float:
    """The exponent l = (2p + 2)/(p + 3) used for the length-decay argument."""
    return (2.0 * p + 2.0) / (p + 3.0)


@dataclass(frozen=True)
class FlowSpec:
    family: str = "contracting"
    p: float = 1.0
    dt_safety: float = 0.4
    area_floor: float = 1e-4 * math.pi
    area_ceiling: float = 1e4 * math.pi
    max_steps: int = 1_000_000
    record_every: int = 1
    snapshot_every: int = 0
    convexity_floor: float = 1e-10
    q_values: tuple = ()
    t_max: float | None = None
    record_times: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown flow family {self.family!r}")
        if not self.p >= 1.0:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not 0.0 < self.dt_safety <= 1.0:
            raise ValueError(f"dt_safety must lie in (0, 1], got {self.dt_safety}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        object.__setattr__(self, "q_values", tuple(float(q) for q in self.q_values))
        object.__setattr__(self, "record_times", tuple(sorted(float(t) for t in self.record_times)))

    @property
    def watch_q(self) -> tuple:
        """q exponents whose min of s^q kappa0^a is recorded."""
        qs = [0.0, 1.0, 2.0 * self.p / (self.p + 1.0), *self.q_values]
        out = []
        for q in qs:
            if all(abs(q - o) > 1e-12 for o in out):
                out.append(q)
        return tuple(out)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["q_values"] = list(self.q_values)
        d["record_times"] = list(self.record_times)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> FlowSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown flow settings: {sorted(unknown)}")
        d = dict(d)
        for key in ("q_values", "record_times"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class FlowState:
    body: SupportBody
    t: float = 0.0
    tau: float = 0.0
    step_count: int = 0
    # log of the unnormalised scale; only advanced by the normalized family
    log_scale: float = 0.0


@dataclass
class FunctionalRecord:
    t: float
    tau: float
    dt: float
    A: float
    A_dual: float
    L: float
    omega_p: float
    omega_1: float
    k0_min: float
    k0_max: float
    sigma_min: float
    sigma_max: float
    santalo: float
    p_ratio: float
    omega_l: float
    kappa_max: float
    s_min: float
    hausdorff_circle: float
    step: int
    min_speed: dict = field(default_factory=dict)

    BASE = (
        "t", "tau", "dt", "A", "A_dual", "L", "omega_p", "omega_1", "k0_min", "k0_max",
        "sigma_min", "sigma_max", "santalo", "p_ratio", "omega_l", "kappa_max", "s_min",
        "hausdorff_circle", "step",
    )

    def row(self, qs) -> list:
        vals = [getattr(self, k) for k in self.BASE]
        vals += [self.min_speed[q] for q in qs]
        return vals


def q_column(q: float) -> str:
    return f"minq_{q:.6g}"


@dataclass
class Trajectory:
    spec: FlowSpec
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    termination: str | None = None
    extinction_estimate: float | None = None
    message: str = ""

    def column(self, name: str) -> np.ndarray:
        if name.startswith("minq_"):
            q = float(name[5:])
            key = min(self.spec.watch_q, key=lambda x: abs(x - q))
            return np.array([r.min_speed[key] for r in self.records])
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def final(self) -> FlowState:
        return self.snapshots[-1]

    def header(self) -> list:
        return list(FunctionalRecord.BASE) + [q_column(q) for q in self.spec.watch_q]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# centroflow {__version__}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        qs = self.spec.watch_q
        for rec in self.records:
            w.writerow([repr(float(v)) if not isinstance(v, int) else str(v) for v in rec.row(qs)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def _contracting_rate(s, r, a):
    return s ** (1.0 - 3.0 * a) * r ** (-a)


def _rates(s, r, p, family):
    """d s / d(time) for a stack of support arrays (rows) with radii r."""
    a = exponent(p)
    if family == "expanding":
        return s ** (1.0 + 3.0 * a) * r**a
    F = _contracting_rate(s, r, a)
    if family == "contracting":
        return -F
    omega = np.sum(r * F, axis=-1, keepdims=True) * (2.0 * math.pi / s.shape[-1])
    return -F + s * (omega / (2.0 * math.pi))


def _admissible(s, r, floor):
    """Row mask: positive support, radius above floor, all finite (NaN compares false)."""
    return (s.min(axis=-1) > 0.0) & (r.min(axis=-1) > floor)


def speed_contracting(b: SupportBody, p: float) -> PeriodicField:
    """Inward normal speed s^(1-3a) r^(-a) = s kappa0^a (positive)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return PeriodicField(_contracting_rate(b.values, b.r, exponent(p)), symmetric=True)


def speed_expanding(b: SupportBody, p: float) -> PeriodicField:
    if p < 1:
        raise ValueError("p must be >= 1")
    a = exponent(p)
    return PeriodicField(b.values ** (1.0 + 3.0 * a) * b.r**a, symmetric=True)


def speed_normalized(b: SupportBody, p: float, rtol: float = 1e-8) -> PeriodicField:
    """Signed d s / d tau of the area-pi normalised flow."""
    if p < 1:
        raise ValueError("p must be >= 1")
    A = area(b)
    if abs(A / math.pi - 1.0) > rtol:
        raise ValueError(f"normalized speed needs area pi, got {A!r}")
    return PeriodicField(_rates(b.values, b.r, p, "normalized"), symmetric=True)


def _diffusion(s, r, p, family):
    a = exponent(p)
    if family == "expanding":
        D = a * s ** (1.0 + 3.0 * a) * r ** (a - 1.0)
    else:
        D = a * s ** (1.0 - 3.0 * a) * r ** (-a - 1.0)
    return D.max(axis=-1)


def diffusion_max(b: SupportBody, spec: FlowSpec) -> float:
    """Largest linearised diffusion coefficient d(ds/dt)/dr over the nodes."""
    return float(_diffusion(b.values, b.r, spec.p, spec.family))


def _stable_dt(s, r, spec):
    kmax = s.shape[-1] // 2
    return spec.dt_safety * 2.0 / (_diffusion(s, r, spec.p, spec.family) * kmax**2)


def stable_dt(b: SupportBody, spec: FlowSpec) -> float:
    return float(_stable_dt(b.values, b.r, spec))


def normalize_body(b: SupportBody) -> SupportBody:
    """Rescale to enclose area pi."""
    return b.scaled(math.sqrt(math.pi / area(b)))


def _areas(s, r):
    return 0.5 * np.sum(s * r, axis=-1) * (2.0 * math.pi / s.shape[-1])


def _omegas(s, r, p):
    a = exponent(p)
    return np.sum(s ** (1.0 - 3.0 * a) * r ** (1.0 - a), axis=-1) * (2.0 * math.pi / s.shape[-1])


def _rk4(s, r, dt, spec):
    """One RK4 step for every row; returns (s_new, r_new, ok_mask)."""
    p, fam, floor = spec.p, spec.family, spec.convexity_floor
    h = dt[:, None]
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        k1 = _rates(s, r, p, fam)
        s2 = s + 0.5 * h * k1
        r2 = radius_values(s2)
        ok = _admissible(s2, r2, floor)
        k2 = _rates(s2, r2, p, fam)
        s3 = s + 0.5 * h * k2
        r3 = radius_values(s3)
        ok &= _admissible(s3, r3, floor)
        k3 = _rates(s3, r3, p, fam)
        s4 = s + h * k3
        r4 = radius_values(s4)
        ok &= _admissible(s4, r4, floor)
        k4 = _rates(s4, r4, p, fam)
        s_new = symmetrize_values(s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        r_new = radius_values(s_new)
        ok &= _admissible(s_new, r_new, floor)
        if fam == "normalized":
            c = np.sqrt(math.pi / _areas(s_new, r_new))[:, None]
            s_new = s_new * c
            r_new = r_new * c
        ok &= np.isfinite(s_new).all(axis=-1)
    return s_new, r_new, ok


class ConvexityFailure(ConvexityViolation):
    pass


class _Stack:
    """Rows of independent flow states advanced together, one RK4 step each."""

    def __init__(self, states, spec):
        self.spec = spec
        self.s = np.array([st.body.values for st in states], dtype=float)
        self.r = np.array([st.body.r for st in states], dtype=float)
        self.t = np.array([st.t for st in states], dtype=float)
        self.tau = np.array([st.tau for st in states], dtype=float)
        self.log_scale = np.array([st.log_scale for st in states], dtype=float)
        self.steps = np.array([st.step_count for st in states], dtype=int)
        self.A = _areas(self.s, self.r)

    def clock(self):
        return self.tau if self.spec.family == "normalized" else self.t

    def advance(self, max_dt=None, dt=None):
        """Step every row; returns (dt_taken, failed_mask).  Failed rows are left untouched."""
        spec = self.spec
        h = _stable_dt(self.s, self.r, spec) if dt is None else np.broadcast_to(np.asarray(dt, float), self.t.shape).copy()
        if max_dt is not None:
            h = np.minimum(h, max_dt)
        h_min = h * 2.0**-HALVINGS
        s_new, r_new, ok = _rk4(self.s, self.r, h, spec)
        todo = ~ok
        while todo.any():
            h[todo] *= 0.5
            dead = todo & (h < h_min)
            todo &= ~dead
            ok &= ~dead
            if not todo.any():
                break
            idx = np.flatnonzero(todo)
            sn, rn, okn = _rk4(self.s[idx], self.r[idx], h[idx], spec)
            s_new[idx], r_new[idx] = sn, rn
            ok[idx] = okn
            todo[idx] = ~okn
        failed = ~ok
        live = ok
        A_new = _areas(s_new, r_new)
        if spec.family == "normalized":
            # d log(scale)/d tau = -Omega/(2 pi);  dt/dtau = scale^(4a)
            a4 = 4.0 * exponent(spec.p)
            om0 = _omegas(self.s, self.r, spec.p)
            om1 = _omegas(s_new, r_new, spec.p)
            log1 = self.log_scale - 0.5 * h * (om0 + om1) / (2.0 * math.pi)
            t1 = self.t + 0.5 * h * (np.exp(a4 * self.log_scale) + np.exp(a4 * log1))
            tau1 = self.tau + h
        else:
            a2 = 2.0 * exponent(spec.p)
            with np.errstate(invalid="ignore", divide="ignore"):
                tau1 = self.tau + 0.5 * h * ((math.pi / self.A) ** a2 + (math.pi / A_new) ** a2)
            t1 = self.t + h
            log1 = self.log_scale
        if live.all():
            self.s, self.r, self.A, self.t, self.tau, self.log_scale = s_new, r_new, A_new, t1, tau1, log1
            self.steps += 1
            return h, failed
        self.s[live], self.r[live], self.A[live] = s_new[live], r_new[live], A_new[live]
        self.t[live], self.tau[live] = t1[live], tau1[live]
        if spec.family == "normalized":
            self.log_scale[live] = log1[live]
        self.steps[live] += 1
        return h, failed

    def state(self, i) -> FlowState:
        body = SupportBody._trusted(self.s[i].copy(), self.r[i].copy())
        return FlowState(body, float(self.t[i]), float(self.tau[i]), int(self.steps[i]), float(self.log_scale[i]))


def step(state: FlowState, spec: FlowSpec, max_dt: float | None = None, dt: float | None = None) -> FlowState:
    """Advance by one RK4 step of size min(stable_dt, max_dt), or exactly `dt` if given.

    Steps that lose convexity at any stage are retried with half the size,
    at most HALVINGS times, then ConvexityFailure is raised.
    """
    stack = _Stack([state], spec)
    _, failed = stack.advance(max_dt=max_dt, dt=dt)
    if failed[0]:
        raise ConvexityFailure(
            np.flatnonzero(state.body.r <= spec.convexity_floor),
            f"convexity lost near t={state.t:.6g} after {HALVINGS} step halvings",
        )
    return stack.state(0)


def _omega_raw(s, r, p):
    a = exponent(p)
    return integrate_values(s ** (1.0 - 3.0 * a) * r ** (1.0 - a))


def _measure_rows(s, r, t, tau, steps, dts, spec: FlowSpec) -> list:
    """FunctionalRecords for a stack of states given as rows of s and r."""
    p = spec.p
    a = exponent(p)
    w = 2.0 * math.pi / s.shape[-1]
    k0 = 1.0 / (r * s**3)
    A = 0.5 * np.sum(s * r, axis=-1) * w
    Ad = 0.5 * np.sum(s**-2.0, axis=-1) * w
    L = np.sum(r, axis=-1) * w
    om_p = _omegas(s, r, p)
    om_1 = _omegas(s, r, 1.0)
    om_l = _omegas(s, r, distinguished_l(p))
    k0a = k0**a
    qs = spec.watch_q
    m = s.shape[0]
    # one vectorised polish for every extremum of every row
    blocks = [k0, k0, r, s, *[s**q * k0a for q in qs]]
    signs = np.repeat([1.0, -1.0, 1.0, 1.0, *([1.0] * len(qs))], m)
    ext = polished_extrema(np.vstack(blocks), signs).reshape(len(blocks), m)
    hd = np.max(np.abs(np.sqrt(math.pi / A)[:, None] * s - 1.0), axis=-1)
    out = []
    for j in range(m):
        k0_min, k0_max = float(ext[0, j]), float(ext[1, j])
        out.append(
            FunctionalRecord(
                t=float(t[j]),
                tau=float(tau[j]),
                dt=float(dts[j]),
                A=float(A[j]),
                A_dual=float(Ad[j]),
                L=float(L[j]),
                omega_p=float(om_p[j]),
                omega_1=float(om_1[j]),
                k0_min=k0_min,
                k0_max=k0_max,
                sigma_min=k0_max ** (-1.0 / 3.0),
                sigma_max=k0_min ** (-1.0 / 3.0),
                santalo=float(A[j] * Ad[j]),
                p_ratio=float(om_p[j] ** (2.0 + p) / A[j] ** (2.0 - p)),
                omega_l=float(om_l[j]),
                kappa_max=1.0 / float(ext[2, j]),
                s_min=float(ext[3, j]),
                hausdorff_circle=float(hd[j]),
                step=int(steps[j]),
                min_speed={q: float(ext[4 + i, j]) for i, q in enumerate(qs)},
            )
        )
    return out


def measure(state: FlowState, spec: FlowSpec, dt: float = 0.0) -> FunctionalRecord:
    b = state.body
    return _measure_rows(
        b.values[None, :], b.r[None, :], [state.t], [state.tau], [state.step_count], [dt], spec
    )[0]


def extinction_estimate(times, areas, p: float) -> float | None:
    """Extrapolate the extinction time from late (t, A) samples.

    A^(2a) is asymptotically linear in t.  Linear fits over the window
    y <= Y and y <= Y/2 (y = A^(2a)) give intercepts whose error scales with
    the window, so one Richardson step removes the leading term.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(areas, dtype=float) ** (2.0 * exponent(p))
    if t.size < 6:
        return None

    def intercept(mask):
        tt, yy = t[mask], y[mask]
        if tt.size < 3 or np.ptp(yy) == 0.0:
            return None
        slope, icpt = np.polyfit(yy, tt, 1)
        return icpt

    Y = y.max()
    T1 = intercept(y <= Y)
    T2 = intercept(y <= 0.5 * Y)
    if T1 is None:
        return None
    if T2 is None:
        return float(T1)
    return float(2.0 * T2 - T1)


def run(initial: SupportBody, spec: FlowSpec) -> Trajectory:
    """Integrate one body until a stop condition; see `run_many`."""
    return run_many([initial], spec)[0]


def run_many(initials, spec: FlowSpec) -> list:
    """Integrate independent bodies under one spec, each with its own step sizes.

    Rows are stacked only to share numpy call overhead; every trajectory is
    the same as a solo run.
    """
    bodies = list(initials)
    for b in bodies:
        if not isinstance(b, SupportBody):
            raise ValueError("initial bodies must be SupportBody instances")
    if len({b.n for b in bodies}) > 1:
        raise ValueError("all initial bodies must share one grid")
    if spec.family == "normalized":
        bodies = [normalize_body(b) for b in bodies]
    states = [FlowState(b) for b in bodies]
    trajs = [Trajectory(spec) for _ in bodies]
    tails = [deque(maxlen=512) for _ in bodies]
    pending = [[x for x in spec.record_times if x > 0.0] for _ in bodies]
    for st, tr, tail in zip(states, trajs, tails):
        tr.records.append(measure(st, spec))
        tr.snapshots.append(st)
        tail.append((st.t, st.body.area))
    stack = _Stack(states, spec)
    rows = list(range(len(bodies)))  # trajectory index of each live stack row
    last_dt = np.zeros(len(bodies))
    eps = 1e-14

    def finish(k, i, why, msg=""):
        trajs[i].termination = why
        trajs[i].message = msg
        st = stack.state(k)
        if trajs[i].records[-1].step != st.step_count:
            trajs[i].records.append(measure(st, spec, float(last_dt[i])))
        if trajs[i].snapshots[-1].step_count != st.step_count:
            trajs[i].snapshots.append(st)

    while rows:
        now = stack.clock()
        keep = []
        for k, i in enumerate(rows):
            A = stack.A[k]
            why = None
            if spec.family == "contracting" and A < spec.area_floor:
                why = "extinction"
            elif spec.family == "expanding" and A > spec.area_ceiling:
                why = "blowup"
            elif stack.steps[k] >= spec.max_steps:
                why = "max_steps"
            elif spec.t_max is not None and now[k] >= spec.t_max * (1.0 - eps):
                why = "horizon"
            if why:
                finish(k, i, why)
            else:
                keep.append(k)
        if len(keep) < len(rows):
            if not keep:
                break
            idx = np.array(keep)
            for name in ("s", "r", "t", "tau", "log_scale", "steps", "A"):
                setattr(stack, name, getattr(stack, name)[idx])
            rows = [rows[k] for k in keep]
            now = stack.clock()

        budget = np.full(len(rows), np.inf)
        for k, i in enumerate(rows):
            if pending[i]:
                budget[k] = pending[i][0] - now[k]
        if spec.t_max is not None:
            budget = np.minimum(budget, spec.t_max - now)
        before = now.copy()
        h, failed = stack.advance(max_dt=budget)
        after = stack.clock()

        dropped = []
        to_record = []
        for k, i in enumerate(rows):
            if failed[k]:
                finish(k, i, "convexity_failure", f"convexity lost near clock={before[k]:.6g}")
                dropped.append(k)
                continue
            last_dt[i] = after[k] - before[k]
            tails[i].append((stack.t[k], stack.A[k]))
            hit = False
            while pending[i] and after[k] >= pending[i][0] * (1.0 - eps):
                pending[i].pop(0)
                hit = True
            steps = stack.steps[k]
            if hit or steps % spec.record_every == 0:
                to_record.append(k)
            if hit or (spec.snapshot_every and steps % spec.snapshot_every == 0):
                trajs[i].snapshots.append(stack.state(k))
        if to_record:
            idx = np.array(to_record)
            recs = _measure_rows(
                stack.s[idx], stack.r[idx], stack.t[idx], stack.tau[idx], stack.steps[idx],
                last_dt[[rows[k] for k in to_record]], spec,
            )
            for k, rec in zip(to_record, recs):
                trajs[rows[k]].records.append(rec)
        if dropped:
            idx = np.array([k for k in range(len(rows)) if k not in dropped], dtype=int)
            for name in ("s", "r", "t", "tau", "log_scale", "steps", "A"):
                setattr(stack, name, getattr(stack, name)[idx])
            rows = [rows[k] for k in idx]

    if spec.family == "contracting":
        for tr, tail in zip(trajs, tails):
            if tr.termination == "extinction":
                ts, As = zip(*tail)
                tr.extinction_estimate = extinction_estimate(ts, As, spec.p)
    return trajs


def with_spec(spec: FlowSpec, **changes) -> FlowSpec:
    return replace(spec, **changes)
