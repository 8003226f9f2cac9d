"""Closed-form and ODE oracles for circles and centered ellipses.

Kept independent of the flow engine: a circle of radius R (or an ellipse
c*E with ab = 1) moves by dR/dt = -R^(1 - 4a) under the contracting flow and
dR/dt = +R^(1 + 4a) under the expanding one, a = p/(p+2).
"""

import math

import numpy as np
from scipy.integrate import quad, solve_ivp


def exponent(p):
    return p / (p + 2.0)


def circle_extinction_time(p, R0=1.0):
    return (p + 2.0) / (4.0 * p) * R0 ** (4.0 * p / (p + 2.0))


def contracting_radius(p, t, R0=1.0):
    """R(t) from the ODE, integrated numerically rather than by formula."""
    a = exponent(p)
    sol = solve_ivp(lambda _, R: -R ** (1.0 - 4.0 * a), (0.0, float(t)), [R0], rtol=1e-12, atol=1e-14)
    return float(sol.y[0, -1])


def expanding_radius(p, t, R0=1.0):
    a = exponent(p)
    sol = solve_ivp(lambda _, R: R ** (1.0 + 4.0 * a), (0.0, float(t)), [R0], rtol=1e-12, atol=1e-14)
    return float(sol.y[0, -1])


def expanding_radius_closed(p, t):
    a = exponent(p)
    return (1.0 - 4.0 * a * t) ** (-1.0 / (4.0 * a))


def ellipse_support(a, b, phi, theta):
    c, s = np.cos(theta - phi), np.sin(theta - phi)
    return np.sqrt(a * a * c * c + b * b * s * s)


def ellipse_radius(a, b, theta):
    """Radius of curvature of the axis-aligned ellipse at normal angle theta."""
    c, s = np.cos(theta), np.sin(theta)
    return (a * b) ** 2 / (a * a * c * c + b * b * s * s) ** 1.5


def ellipse_perimeter(a, b):
    val, _ = quad(lambda t: math.sqrt(a * a * math.sin(t) ** 2 + b * b * math.cos(t) ** 2), 0.0, 2.0 * math.pi, limit=200, epsabs=1e-13)
    return val


def min_area_ellipse_area(points):
    """Area of the smallest centered ellipse {x : x^T Q x <= 1} containing the points.

    Maximises log det Q over the linear constraints with SLSQP, a direct convex
    formulation independent of the Khachiyan iteration.
    """
    from scipy.optimize import minimize

    X = np.asarray(points, dtype=float)
    xx, xy, yy = X[:, 0] ** 2, 2 * X[:, 0] * X[:, 1], X[:, 1] ** 2

    def unpack(q):
        return q[0], q[1], q[2]

    def objective(q):
        a, b, c = unpack(q)
        return -math.log(max(a * c - b * b, 1e-300))

    r2 = np.max(xx + yy)
    res = minimize(
        objective,
        [1.0 / r2, 0.0, 1.0 / r2],
        method="SLSQP",
        constraints=[{"type": "ineq", "fun": lambda q: 1.0 - (q[0] * xx + q[1] * xy + q[2] * yy)}],
        options={"ftol": 1e-15, "maxiter": 500},
    )
    a, b, c = unpack(res.x)
    return math.pi / math.sqrt(a * c - b * b)
