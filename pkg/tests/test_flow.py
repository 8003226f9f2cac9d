import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from centroflow.body import SupportBody, area, p_affine_length
from centroflow.errors import ConvexityViolation
from centroflow.field import deriv_values, nodes
from centroflow.flow import (
    FlowSpec,
    FlowState,
    Trajectory,
    distinguished_l,
    extinction_estimate,
    measure,
    normalize_body,
    run,
    run_many,
    speed_contracting,
    speed_expanding,
    speed_normalized,
    stable_dt,
    step,
    with_spec,
)
from oracles import (
    circle_extinction_time,
    contracting_radius,
    ellipse_support,
    expanding_radius,
    expanding_radius_closed,
)

PI = math.pi


def ellipse(a=2.0, b=0.5, phi=0.0, n=128):
    return SupportBody.from_function(lambda t: ellipse_support(a, b, phi, t), n)


def wavy(n=128, eps=0.08, phase=0.3):
    return SupportBody.from_function(lambda t: 1 + eps * np.cos(2 * t) + 0.3 * eps * np.sin(4 * t + phase), n)


def test_spec_validation():
    with pytest.raises(ValueError):
        FlowSpec(p=0.5)
    with pytest.raises(ValueError):
        FlowSpec(family="shrinking")
    with pytest.raises(ValueError):
        FlowSpec(dt_safety=0.0)
    with pytest.raises(ValueError):
        FlowSpec(dt_safety=1.5)
    with pytest.raises(ValueError):
        FlowSpec.from_dict({"p": 1.0, "bogus": 1})


def test_spec_round_trip():
    spec = FlowSpec(p=1.5, q_values=(0.0, 1.0), record_times=(0.2, 0.1))
    assert FlowSpec.from_dict(spec.to_dict()) == spec
    assert spec.record_times == (0.1, 0.2)


def test_distinguished_l():
    assert distinguished_l(1.0) == pytest.approx(1.0)
    assert distinguished_l(3.0) == pytest.approx(4 / 3)


@pytest.mark.parametrize("p", [1.0, 2.0, 5.0])
def test_speeds_on_unit_circle(p):
    c = SupportBody.circle(1.0, 64)
    assert np.allclose(speed_contracting(c, p).values, 1.0)
    assert np.allclose(speed_expanding(c, p).values, 1.0)
    assert np.abs(speed_normalized(c, p).values).max() <= 1e-14


def test_speed_examples():
    assert np.allclose(speed_contracting(SupportBody.circle(8.0, 64), 1.0).values, 0.5, rtol=1e-14)
    assert np.allclose(speed_expanding(SupportBody.circle(2.0, 64), 1.0).values, 2 ** (7 / 3), rtol=1e-14)
    e = ellipse(n=256)
    for p in (1.0, 3.0):
        assert speed_contracting(e, p).values[0] == pytest.approx(2.0, abs=1e-9)
        assert speed_expanding(e, p).values[0] == pytest.approx(2.0, abs=1e-9)


@pytest.mark.parametrize("p", [1.0, 2.0, 5.0])
def test_normalized_speed_vanishes_on_ellipse(p):
    assert np.abs(speed_normalized(ellipse(1.6, 1 / 1.6, 0.7, n=256), p).values).max() <= 1e-10


def test_normalized_speed_keeps_area():
    b = normalize_body(wavy(eps=0.1))
    v = speed_normalized(b, 2.0).values
    assert v.min() < 0 < v.max()
    assert abs(np.sum(b.r * v) * 2 * PI / b.n) <= 1e-8


def test_normalized_speed_needs_area_pi():
    with pytest.raises(ValueError):
        speed_normalized(SupportBody.circle(2.0, 64), 1.0)


def test_stable_dt_examples():
    c = SupportBody.circle(1.0, 256)
    dt1 = stable_dt(c, FlowSpec(p=1.0))
    assert dt1 == pytest.approx(0.4 * 2 / ((1 / 3) * 128**2), rel=1e-14)
    assert dt1 == pytest.approx(1.4648e-4, rel=1e-4)
    dt5 = stable_dt(c, FlowSpec(p=5.0))
    assert dt5 / dt1 == pytest.approx((1 / 3) / (5 / 7), rel=1e-14)
    # at p=2, D_max of a radius-2 circle is 2^(-1/2) 2^(-3/2) = 1/4 of the unit circle's
    assert stable_dt(SupportBody.circle(2.0, 256), FlowSpec(p=2.0)) == pytest.approx(4 * stable_dt(c, FlowSpec(p=2.0)))


def test_one_step_on_circle_follows_ode():
    spec = FlowSpec(p=1.0)
    st1 = step(FlowState(SupportBody.circle(1.0, 256)), spec)
    s = st1.body.values
    assert np.ptp(s) <= 1e-13
    assert st1.t == pytest.approx(stable_dt(SupportBody.circle(1.0, 256), spec))
    assert s[0] == pytest.approx(contracting_radius(1.0, st1.t), abs=1e-12)
    # against 1 - dt the gap is the dt^2 / 6 curvature of R(t)
    assert abs(s[0] - (1 - st1.t)) == pytest.approx(st1.t**2 / 6, rel=1e-3)


def test_step_respects_max_dt_and_fixed_dt():
    spec = FlowSpec(p=2.0)
    st0 = FlowState(wavy())
    assert step(st0, spec, max_dt=1e-6).t == pytest.approx(1e-6)
    assert step(st0, spec, dt=3e-5).t == pytest.approx(3e-5)


def test_normalized_step_fixed_point():
    e = ellipse(1.5, 1 / 1.5, 0.4, n=128)
    st1 = step(FlowState(e), FlowSpec(family="normalized", p=2.0))
    assert np.abs(st1.body.values - e.values).max() <= 1e-10
    # tau advances by the step; t is the unnormalised time, scale^(4a) d tau with log scale = -tau here
    h = stable_dt(e, FlowSpec(family="normalized", p=2.0))
    assert st1.tau == pytest.approx(h, rel=1e-14)
    assert st1.log_scale == pytest.approx(-h, rel=1e-8)
    assert st1.t == pytest.approx(0.5 * h * (1 + math.exp(-2 * h)), rel=1e-12)


def test_step_convexity_failure():
    # a body with nearly vanishing curvature radius cannot take an oversized step
    b = SupportBody.from_function(lambda t: 1 + 0.33 * np.cos(2 * t), 64)
    with pytest.raises(ConvexityViolation):
        step(FlowState(b), FlowSpec(p=1.0), dt=0.5)


def test_nested_circles_one_step():
    spec = FlowSpec(p=1.0)
    small = step(FlowState(SupportBody.circle(1.0, 64)), spec, dt=1e-4)
    big = step(FlowState(SupportBody.circle(2.0, 64)), spec, dt=1e-4)
    assert np.all(small.body.values <= big.body.values)


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_circle_extinction(p):
    tr = run(SupportBody.circle(1.0, 64), FlowSpec(p=p))
    assert tr.termination == "extinction"
    assert tr.records[-1].A < tr.spec.area_floor
    assert tr.extinction_estimate == pytest.approx(circle_extinction_time(p), rel=1e-2)


def test_circle_radius_matches_ode():
    tr = run(SupportBody.circle(1.0, 64), FlowSpec(p=1.5, t_max=0.3, record_times=(0.1, 0.2)))
    assert tr.termination == "horizon"
    for t in (0.1, 0.2, 0.3):
        rec = next(r for r in tr.records if abs(r.t - t) < 1e-12)
        assert math.sqrt(rec.A / PI) == pytest.approx(contracting_radius(1.5, t), rel=1e-8)


def test_expanding_circle():
    tr = run(SupportBody.circle(1.0, 64), FlowSpec(family="expanding", p=1.0, t_max=0.5))
    R = math.sqrt(tr.records[-1].A / PI)
    assert tr.records[-1].t == pytest.approx(0.5, abs=1e-12)
    assert expanding_radius(1.0, 0.5) == pytest.approx(expanding_radius_closed(1.0, 0.5), rel=1e-9)
    assert R == pytest.approx(expanding_radius_closed(1.0, 0.5), rel=1e-2)


def test_expanding_blowup_terminates():
    tr = run(SupportBody.circle(1.0, 32), FlowSpec(family="expanding", p=2.0, area_ceiling=100 * PI))
    assert tr.termination == "blowup"
    assert tr.records[-1].A > 100 * PI


def test_max_steps_termination():
    tr = run(wavy(64), FlowSpec(p=1.0, max_steps=7))
    assert tr.termination == "max_steps"
    assert tr.final.step_count == 7
    assert len(tr.records) == 8


def test_normalize_body_examples():
    assert np.allclose(normalize_body(SupportBody.circle(2.0, 64)).values, 1.0)
    e = ellipse(n=256)
    assert np.abs(normalize_body(e).values - e.values).max() <= 1e-9
    b = wavy().scaled(1.7)
    nb = normalize_body(b)
    assert area(nb) == pytest.approx(PI, rel=1e-10)
    assert np.allclose(nb.kappa0, (area(b) / PI) ** 2 * b.kappa0, rtol=1e-9)


def test_records_and_csv():
    tr = run(wavy(64), FlowSpec(p=2.0, max_steps=20, q_values=(0.0, 4 / 3), snapshot_every=10))
    header = tr.header()
    assert header[:14] == [
        "t", "tau", "dt", "A", "A_dual", "L", "omega_p", "omega_1",
        "k0_min", "k0_max", "sigma_min", "sigma_max", "santalo", "p_ratio",
    ]
    lines = tr.to_csv().splitlines()
    assert lines[0].startswith("# centroflow")
    assert lines[1].split(",") == header
    assert len(lines) == 2 + len(tr.records)
    assert [s.step_count for s in tr.snapshots] == [0, 10, 20]
    ts = tr.column("t")
    assert np.all(np.diff(ts) > 0)
    assert np.all(np.diff(tr.column("tau")) > 0)
    for rec in tr.records:
        assert all(math.isfinite(v) for v in rec.row(tr.spec.watch_q))


def test_run_is_deterministic():
    spec = FlowSpec(p=1.5, max_steps=30)
    assert run(wavy(64), spec).to_csv() == run(wavy(64), spec).to_csv()


def test_run_many_matches_solo_runs():
    spec = FlowSpec(p=2.0, max_steps=40, t_max=0.01)
    bodies = [wavy(64), wavy(64, eps=0.05, phase=1.0), SupportBody.circle(1.3, 64)]
    batch = run_many(bodies, spec)
    for b, tr in zip(bodies, batch):
        solo = run(b, spec)
        assert tr.termination == solo.termination
        assert np.array_equal(tr.column("A"), solo.column("A"))
        assert np.array_equal(tr.final.body.values, solo.final.body.values)


def test_run_many_rejects_mixed_grids():
    with pytest.raises(ValueError):
        run_many([SupportBody.circle(1.0, 32), SupportBody.circle(1.0, 64)], FlowSpec())


def test_tau_for_circle():
    # tau = integral of (pi/A)^(2a) dt; at p=2 the circle has R^2 = 1 - 2t, so tau = -log(1 - 2t)/2
    tr = run(SupportBody.circle(1.0, 64), FlowSpec(p=2.0, t_max=0.2))
    assert contracting_radius(2.0, 0.2) ** 2 == pytest.approx(0.6, rel=1e-10)
    # trapezoid quadrature in t carries an O(dt^2) error, about 2e-6 here
    assert tr.records[-1].tau == pytest.approx(-0.5 * math.log(0.6), rel=1e-5)


def test_extinction_estimate_on_exact_data():
    p = 2.0
    T = circle_extinction_time(p)
    t = np.linspace(0.3, T - 1e-4, 300)
    R = (1 - t / T) ** (1 / (4 * p / (p + 2)))
    assert extinction_estimate(t, PI * R**2, p) == pytest.approx(T, rel=1e-8)
    assert extinction_estimate(t[:3], PI * R[:3] ** 2, p) is None


def test_area_decay_rate_matches_omega():
    """Central differences of recorded A against -Omega_p."""
    tr = run(wavy(128), FlowSpec(p=1.5, max_steps=400))
    t, A, Om = tr.column("t"), tr.column("A"), tr.column("omega_p")
    h0, h1 = t[1:-1] - t[:-2], t[2:] - t[1:-1]
    dA = (A[2:] * h0**2 - A[:-2] * h1**2 - A[1:-1] * (h0**2 - h1**2)) / (h0 * h1 * (h0 + h1))
    assert np.abs(dA + Om[1:-1]).max() / np.abs(Om).max() <= 1e-4


def test_radius_equation_consistency():
    """dr/dt from two fixed steps against -(F'' + F) with F the contracting speed."""
    spec = FlowSpec(p=2.0)
    b = wavy(128)
    h = 0.5 * stable_dt(b, spec)
    st1 = step(FlowState(b), spec, dt=h)
    st2 = step(st1, spec, dt=h)
    lhs = (st2.body.r - b.r) / (2 * h)
    F = speed_contracting(st1.body, 2.0).values
    rhs = -(deriv_values(F, 2) + F)
    assert np.abs(lhs - rhs).max() / np.abs(rhs).max() <= 1e-3


def test_symmetry_and_convexity_along_run():
    tr = run(wavy(64, eps=0.12), FlowSpec(p=1.0, snapshot_every=50, area_floor=0.3 * PI))
    for st_ in tr.snapshots:
        v = st_.body.values
        assert np.array_equal(v[:32], v[32:])
        assert st_.body.r.min() >= tr.spec.convexity_floor


def test_containment_of_nested_bodies():
    outer = wavy(64, eps=0.1)
    inner = outer.scaled(0.7)
    spec = FlowSpec(p=1.0, record_times=tuple(np.linspace(0.02, 0.2, 10)), t_max=0.2, snapshot_every=10**9)
    a, b = run_many([inner, outer], spec)
    snaps_a = {round(s.t, 12): s for s in a.snapshots}
    shared = 0
    for s in b.snapshots:
        key = round(s.t, 12)
        if key in snaps_a and key > 0:
            assert np.all(snaps_a[key].body.values <= s.body.values + 1e-9)
            shared += 1
    assert shared == 10


def test_ellipse_is_homothetic():
    # the (2, 1/2) ellipse at n=256 is the acceptance run; a milder one keeps this quick
    tr = run(ellipse(1.5, 1 / 1.5, 0.5, n=128), FlowSpec(p=1.0, area_floor=0.1 * PI))
    k0_min, k0_max = tr.column("k0_min"), tr.column("k0_max")
    assert np.max(k0_max / k0_min - 1.0) <= 1e-7


def test_omega_ratio_constant_on_circle():
    p = 1.5
    tr = run(SupportBody.circle(1.0, 64), FlowSpec(p=p, area_floor=0.05 * PI))
    ratio = tr.column("p_ratio")
    assert np.allclose(ratio, 2 ** (2 + p) * PI ** (2 * p), rtol=1e-8)


def test_with_spec():
    spec = with_spec(FlowSpec(), p=3.0, t_max=1.0)
    assert spec.p == 3.0 and spec.t_max == 1.0


def test_measure_matches_body_functionals():
    b = wavy(128)
    rec = measure(FlowState(b), FlowSpec(p=2.0))
    assert rec.A == pytest.approx(area(b), rel=1e-14)
    assert rec.omega_p == pytest.approx(p_affine_length(b, 2.0), rel=1e-13)
    assert rec.k0_min <= b.kappa0.min() + 1e-14
    assert rec.k0_max >= b.kappa0.max() - 1e-14
    assert rec.hausdorff_circle >= 0.0


@settings(max_examples=10, deadline=None)
@given(st.floats(0.5, 3.0), st.sampled_from([1.0, 2.0, 5.0]))
def test_property_circle_step_stays_circle(R, p):
    st1 = step(FlowState(SupportBody.circle(R, 32)), FlowSpec(p=p))
    assert np.ptp(st1.body.values) <= 1e-13 * R
    assert st1.body.values[0] == pytest.approx(contracting_radius(p, st1.t, R), rel=1e-10)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.02, 0.12), st.floats(0, math.pi))
def test_property_area_decreases(eps, phase):
    tr = run(wavy(64, eps=eps, phase=phase), FlowSpec(p=2.0, max_steps=25))
    assert np.all(np.diff(tr.column("A")) < 0)


def test_trajectory_column_unknown_q():
    tr = Trajectory(FlowSpec(q_values=(1.0,)))
    assert tr.header()[-1].startswith("minq_")


def test_nodes_shared():
    assert np.array_equal(wavy(64).s.nodes, nodes(64))
