"""Executable checks of the monotone quantities, evolution identities and
inequalities satisfied by the p-flows.

Every check returns a CheckReport whose worst_margin is signed: negative
values are violations, and the check passes when worst_margin >= -tolerance.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .affine import min_length_normalize
from .body import SupportBody, area, dual_area, polar_dual
from .errors import ConvexityViolation, NumericError
from .field import deriv_values, field_max, field_min, integrate_values
from .flow import FlowSpec, FlowState, exponent, normalize_body, run, stable_dt, step, with_spec

PI2 = math.pi**2


@dataclass
class CheckReport:
    name: str
    passed: bool
    worst_margin: float
    location: float | None
    tolerance: float
    details: dict = field(default_factory=dict)

    @classmethod
    def from_margins(cls, name, margins, locations, tolerance, **details) -> CheckReport:
        margins = np.asarray(margins, dtype=float)
        if margins.size == 0:
            return cls(name, False, -math.inf, None, tolerance, {"error": "nothing to check", **details})
        bad = ~np.isfinite(margins)
        margins = np.where(bad, -math.inf, margins)
        i = int(np.argmin(margins))
        worst = float(margins[i])
        return cls(name, worst >= -tolerance, worst, _num(locations[i]), tolerance, details)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_margin"] = _json_float(self.worst_margin)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _num(x):
    return None if x is None else float(x)


def _json_float(x):
    # JSON has no infinities; report them as strings
    return x if math.isfinite(x) else repr(x)


def suite_summary(reports) -> dict:
    reports = list(reports)
    return {
        "passed": all(r.passed for r in reports),
        "n_checks": len(reports),
        "n_failed": sum(not r.passed for r in reports),
        "checks": [r.to_dict() for r in reports],
    }


def _require_contracting(traj):
    if traj.spec.family != "contracting":
        raise ValueError(f"check needs a contracting trajectory, got {traj.spec.family}")


def _increments(values):
    v = np.asarray(values, dtype=float)
    return (v[1:] - v[:-1]) / np.abs(v[:-1])


def check_monotone_ratio(traj, tolerance: float = 1e-8, expect_constant: bool = False) -> CheckReport:
    """Omega_p^(2+p) / A^(2-p) never decreases (per-record relative steps).

    With expect_constant (ellipse data) the margin is instead the total
    relative drift from the initial ratio, at tolerance 1e-6.
    """
    R = traj.column("p_ratio")
    t = traj.column("t")
    if expect_constant:
        drift = np.abs(R / R[0] - 1.0)
        return CheckReport.from_margins("monotone_ratio", -drift, t, 1e-6, mode="constant")
    return CheckReport.from_margins("monotone_ratio", _increments(R), t[1:], tolerance)


def admissible_q(p: float, q: float) -> bool:
    return q == 0.0 or 1.0 - 1e-12 <= q <= 2.0 * p / (p + 1.0) + 1e-12


def check_min_speed_monotone(traj, q: float, tolerance: float = 1e-7) -> CheckReport:
    """min over theta of s^q kappa0^(p/(p+2)) never decreases."""
    p = traj.spec.p
    if not admissible_q(p, q):
        raise ValueError(f"q={q} is not admissible for p={p}: need q = 0 or 1 <= q <= {2 * p / (p + 1):.6g}")
    recorded = [x for x in traj.spec.watch_q if abs(x - q) <= 1e-12]
    if not recorded:
        raise ValueError(f"q={q} was not recorded; add it to FlowSpec.q_values")
    m = np.array([r.min_speed[recorded[0]] for r in traj.records])
    t = traj.column("t")
    return CheckReport.from_margins(f"min_speed_monotone[q={q:.6g}]", _increments(m), t[1:], tolerance, q=q)


def check_area_identity(traj, tolerance: float = 1e-4, min_area_fraction: float = 0.01) -> CheckReport:
    """dA/dt = -Omega_p, with dA/dt from a three-point difference on the (non-uniform) record times."""
    _require_contracting(traj)
    t, A, om = traj.column("t"), traj.column("A"), traj.column("omega_p")
    if t.size < 3:
        raise ValueError("area identity needs at least three records")
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    ok = (h1 > 0) & (h2 > 0)
    h1, h2 = np.where(ok, h1, 1.0), np.where(ok, h2, 1.0)
    dA = (-h2 / (h1 * (h1 + h2))) * A[:-2] + ((h2 - h1) / (h1 * h2)) * A[1:-1] + (h1 / (h2 * (h1 + h2))) * A[2:]
    keep = ok & (A[1:-1] >= min_area_fraction * A[0])
    err = np.abs(dA + om[1:-1]) / om[1:-1]
    return CheckReport.from_margins("area_identity", -err[keep], t[1:-1][keep], tolerance)


# -- identities evaluated at snapshots ------------------------------------


def _probe(state: FlowState, spec: FlowSpec, fraction: float = 0.5):
    """States at t, t + h, t + 2h from fixed steps of size h."""
    h = fraction * stable_dt(state.body, spec)
    s1 = step(state, spec, dt=h)
    s2 = step(s1, spec, dt=h)
    return h, state, s1, s2


def _sigma_parts(b: SupportBody):
    """sigma, sigma_s, sigma_ss and the affine arclength density g on the nodes."""
    sig = b.sigma
    g = b.r ** (2.0 / 3.0)
    sig_s = deriv_values(sig, 1) / g
    sig_ss = deriv_values(sig_s, 1) / g
    return sig, sig_s, sig_ss, g


def omega_l_rate(b: SupportBody, p: float, l: float) -> tuple[float, float, float]:
    """Right side of the Omega_l evolution under the p-flow: (total, first term, second term)."""
    a, c = exponent(p), l / (l + 2.0)
    sig, sig_s, _, g = _sigma_parts(b)
    I0 = integrate_values(sig ** (1.0 - 3.0 * a - 3.0 * c) * g)
    I2 = integrate_values(sig ** (-3.0 * a - 3.0 * c) * sig_s**2 * g)
    t0 = 2.0 * (l - 2.0) / (l + 2.0) * I0
    t2 = 18.0 * p * l / ((l + 2.0) ** 2 * (p + 2.0)) * I2
    return t0 + t2, t0, t2


def _omega(b: SupportBody, l: float) -> float:
    c = exponent(l)
    return integrate_values(b.values ** (1.0 - 3.0 * c) * b.r ** (1.0 - c))


def _snapshots(traj, min_area_fraction):
    A0 = area(traj.snapshots[0].body)
    return [st for st in traj.snapshots if area(st.body) >= min_area_fraction * A0]


def check_omega_evolution(traj, l: float | None = None, tolerance: float = 1e-3, min_area_fraction: float = 0.01) -> CheckReport:
    """Centred difference of Omega_l against its evolution formula at each snapshot."""
    _require_contracting(traj)
    spec = traj.spec
    l = spec.p if l is None else float(l)
    if l < 1:
        raise ValueError("l must be >= 1")
    margins, where = [], []
    for st in _snapshots(traj, min_area_fraction):
        try:
            h, s0, s1, s2 = _probe(st, spec)
        except ConvexityViolation:
            continue
        lhs = (_omega(s2.body, l) - _omega(s0.body, l)) / (2.0 * h)
        rhs, t0, t2 = omega_l_rate(s1.body, spec.p, l)
        floor = 1e-6 * _omega(s1.body, l) * _omega(s1.body, spec.p) / area(s1.body)
        scale = max(abs(lhs), abs(t0) + abs(t2), floor)
        margins.append(-abs(lhs - rhs) / scale)
        where.append(s1.t)
    return CheckReport.from_margins(f"omega_evolution[l={l:.6g}]", margins, where, tolerance, l=l)


def sigma_rate(b: SupportBody, p: float, fixed_angle: bool = True) -> np.ndarray:
    """d sigma / dt under the p-flow.

    The closed form holds along the material parametrisation in which the
    boundary moves by sigma^(1-3a) times the affine normal.  At a fixed
    normal angle the tangential drift of that parametrisation adds
    -sigma_theta * theta_t.
    """
    a = exponent(p)
    sig, sig_s, sig_ss, g = _sigma_parts(b)
    F = sig ** (1.0 - 3.0 * a)
    rate = F * (-4.0 / 3.0 + (a + 1.0) * (1.0 - 3.0 * a) * sig_s**2 / sig + a * sig_ss)
    if not fixed_angle:
        return rate
    r = b.r
    s_t = -F * r ** (-1.0 / 3.0)
    v_tan = F * r ** (-4.0 / 3.0) * deriv_values(r, 1) / 3.0
    theta_t = (v_tan - deriv_values(s_t, 1)) / r
    return rate - deriv_values(sig, 1) * theta_t


def check_sigma_evolution(traj, tolerance: float = 1e-2, min_area_fraction: float = 0.01) -> CheckReport:
    """Nodewise centred difference of sigma at fixed normal angle against its evolution formula."""
    _require_contracting(traj)
    spec = traj.spec
    margins, where = [], []
    for st in _snapshots(traj, min_area_fraction):
        try:
            h, s0, s1, s2 = _probe(st, spec)
        except ConvexityViolation:
            continue
        lhs = (s2.body.sigma - s0.body.sigma) / (2.0 * h)
        rhs = sigma_rate(s1.body, spec.p)
        margins.append(-float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs))))
        where.append(s1.t)
    return CheckReport.from_margins("sigma_evolution", margins, where, tolerance)


def strong_constant(p: float) -> float:
    if p <= 2.0:
        return 18.0 * (p - 1.0) * p**2 / (p + 2.0) ** 3
    return 18.0 * p**2 / (p + 2.0) ** 3


def sharp_l_constant(l: float) -> float:
    """Coefficient of the sigma_s^2 term in the Omega_l inequality along the p = 1 flow."""
    if l <= 2.0:
        return 2.0 * (l - 1.0) * (4.0 * l**2 + 3.0 * l + 2.0) / (l + 2.0) ** 3
    return 6.0 * l / (l + 2.0) ** 2


def strong_rhs(b: SupportBody, p: float) -> float:
    a = exponent(p)
    sig, sig_s, _, g = _sigma_parts(b)
    om = _omega(b, p)
    I2 = integrate_values(sig ** (-6.0 * a) * sig_s**2 * g)
    return (p - 2.0) / (p + 2.0) * om**2 / area(b) + strong_constant(p) * I2


def sharp_l_rhs(b: SupportBody, l: float) -> float:
    c = exponent(l)
    sig, sig_s, _, g = _sigma_parts(b)
    I2 = integrate_values(sig ** (-1.0 - 3.0 * c) * sig_s**2 * g)
    return (l - 2.0) / (l + 2.0) * _omega(b, l) * _omega(b, 1.0) / area(b) + sharp_l_constant(l) * I2


def check_strong_isoperimetric(
    traj,
    tolerance: float = 1e-4,
    l_values=(1.0, 1.5, 2.0, 3.0),
    min_area_fraction: float = 0.01,
    expect_equality: bool = False,
) -> CheckReport:
    """dOmega_p/dt >= ((p-2)/(p+2)) Omega_p^2/A + c(p) * integral of sigma^(-6a) sigma_s^2.

    Margins are scaled by Omega_p^2/A.  For p = 1 the Omega_l inequalities
    are checked as well.  With expect_equality (ellipse data) the margin is
    minus the absolute gap, at tolerance 1e-6.
    """
    _require_contracting(traj)
    spec = traj.spec
    p = spec.p
    margins, where, labels = [], [], []
    for st in _snapshots(traj, min_area_fraction):
        try:
            h, s0, s1, s2 = _probe(st, spec)
        except ConvexityViolation:
            continue
        b = s1.body
        scale = _omega(b, p) ** 2 / area(b)
        lhs = (_omega(s2.body, p) - _omega(s0.body, p)) / (2.0 * h)
        gap = (lhs - strong_rhs(b, p)) / scale
        margins.append(-abs(gap) if expect_equality else gap)
        where.append(s1.t)
        labels.append(f"p={p:.6g}")
        if p == 1.0:
            for l in l_values:
                scale_l = _omega(b, l) * _omega(b, 1.0) / area(b)
                lhs_l = (_omega(s2.body, l) - _omega(s0.body, l)) / (2.0 * h)
                gap = (lhs_l - sharp_l_rhs(b, l)) / scale_l
                margins.append(-abs(gap) if expect_equality else gap)
                where.append(s1.t)
                labels.append(f"l={l:.6g}")
    report = CheckReport.from_margins(
        "strong_isoperimetric", margins, where, 1e-6 if expect_equality else tolerance
    )
    if margins:
        report.details["worst_case"] = labels[int(np.argmin(margins))]
    return report


# -- checks that run their own flows ---------------------------------------


def check_duality(
    initial: SupportBody,
    p: float,
    horizon: float,
    samples: int = 8,
    tolerance: float = 1e-4,
    dt_safety: float = 0.4,
) -> CheckReport:
    """Polar of the contracting flow against the expanding flow of the polar, at equal times."""
    times = tuple(horizon * (k + 1) / samples for k in range(samples))
    common = dict(p=p, dt_safety=dt_safety, t_max=horizon, record_times=times, record_every=10**9)
    con = run(initial, FlowSpec(family="contracting", snapshot_every=0, **common))
    exp = run(polar_dual(initial), FlowSpec(family="expanding", **common))

    def at_times(traj):
        out = {}
        for st in traj.snapshots:
            for x in times:
                if abs(st.t - x) <= 1e-12 * max(1.0, x):
                    out[x] = st
        return out

    c_states, e_states = at_times(con), at_times(exp)
    shared = [x for x in times if x in c_states and x in e_states]
    margins = [-float(np.max(np.abs(polar_dual(c_states[x].body).values - e_states[x].body.values))) for x in shared]
    report = CheckReport.from_margins("duality", margins, shared, tolerance, p=p, horizon=horizon)
    report.details["window"] = shared[-1] if shared else 0.0
    report.details["shortened"] = len(shared) < len(times)
    report.details["terminations"] = [con.termination, exp.termination]
    return report


@dataclass
class ConvergenceMetrics:
    tau: float
    hausdorff: float
    sigma_dev: float
    santalo_gap: float

    THRESHOLDS = (1e-3, 1e-2, 1e-4)

    def margin(self) -> float:
        vals = (self.hausdorff, self.sigma_dev, self.santalo_gap)
        return min((thr - v) / thr for thr, v in zip(self.THRESHOLDS, vals))


def convergence_metrics(b: SupportBody, tau: float = 0.0) -> ConvergenceMetrics:
    _, nb = min_length_normalize(b)
    hd = float(np.max(np.abs(nb.values - 1.0)))
    sig_dev = max(abs(field_max(b.sigma) - 1.0), abs(1.0 - field_min(b.sigma)))
    return ConvergenceMetrics(tau, hd, sig_dev, PI2 - area(b) * dual_area(b))


def check_convergence(
    initial: SupportBody,
    p: float,
    tau_chunk: float = 1.0,
    tau_max: float = 40.0,
    max_steps: int = 2_000_000,
    dt_safety: float = 0.4,
) -> CheckReport:
    """Run the normalised flow until the body is within thresholds of the unit circle modulo SL(2).

    Thresholds: Hausdorff 1e-3 after length-minimising normalisation,
    max |sigma - 1| 1e-2 and pi^2 - A A° 1e-4.  The margin is the smallest
    relative slack among the three.
    """
    if not p > 1.0:
        raise ValueError("convergence check needs p > 1")
    spec = FlowSpec(family="normalized", p=p, dt_safety=dt_safety, record_every=10**9, max_steps=max_steps)
    body = normalize_body(initial)
    tau, steps = 0.0, 0
    history = []
    status = "budget"
    while True:
        m = convergence_metrics(body, tau)
        history.append(m)
        if m.margin() >= 0.0:
            status = "converged"
            break
        if tau >= tau_max or steps >= max_steps:
            break
        traj = run(body, with_spec(spec, t_max=tau_chunk, max_steps=max_steps - steps))
        if traj.termination not in ("horizon", "max_steps"):
            status = traj.termination
            break
        body = traj.final.body
        steps += traj.final.step_count
        tau += traj.final.tau
    final = history[-1]
    report = CheckReport.from_margins("convergence", [final.margin()], [final.tau], 0.0, p=p)
    report.details.update(
        status=status,
        tau=final.tau,
        steps=steps,
        hausdorff=final.hausdorff,
        sigma_dev=final.sigma_dev,
        santalo_gap=final.santalo_gap,
    )
    return report


def check_santalo_monotone(traj, tolerance: float = 1e-8) -> CheckReport:
    """A A° never decreases and never exceeds pi^2."""
    P = traj.column("santalo")
    t = traj.column("t") if traj.spec.family != "normalized" else traj.column("tau")
    inc = _increments(P)
    cap = PI2 - P
    margins = np.concatenate([inc, cap])
    where = np.concatenate([t[1:], t])
    return CheckReport.from_margins("santalo_monotone", margins, where, tolerance)


def check_decay_diagnostics(traj, fraction: float = 0.05, tolerance: float = 1e-2) -> CheckReport:
    """Length and Omega_l shrink to a small fraction; curvature stays bounded while the inradius does.

    l = (2p + 2)/(p + 3).  The curvature bound is 4/rho with rho = (min s at
    t = 0)/2, monitored while min s >= rho.  The homothetic (2, 1/2) ellipse
    attains it at the end of the window.
    """
    _require_contracting(traj)
    L, Om = traj.column("L"), traj.column("omega_l")
    smin, kmax, t = traj.column("s_min"), traj.column("kappa_max"), traj.column("t")
    decay_L = (fraction - L[-1] / L[0]) / fraction
    decay_O = (fraction - Om[-1] / Om[0]) / fraction
    rho = 0.5 * smin[0]
    bound = 4.0 / rho
    window = smin >= rho
    speed = 1.0 - kmax[window] / bound
    margins = [decay_L, decay_O, *speed]
    where = [t[-1], t[-1], *t[window]]
    report = CheckReport.from_margins("decay_diagnostics", margins, where, tolerance)
    report.details.update(
        length_ratio=float(L[-1] / L[0]),
        omega_l_ratio=float(Om[-1] / Om[0]),
        kappa_bound=bound,
        kappa_max=float(kmax[window].max()),
    )
    return report
