"""Linear maps acting on support bodies, centred ellipses and ellipse fitting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .body import SupportBody, _golden_max, boundary_points, polar_dual
from .errors import NumericError
from .field import PeriodicField, eval_values, field_max, field_min, nodes, upsample_values

INCLUSION_TOL = 1e-7
DET_TOL = 1e-10


def _rotation(phi):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class CenteredEllipse:
    """Ellipse with semi-axes a >= b > 0, major axis at angle phi in [0, pi)."""

    a: float
    b: float
    phi: float = 0.0

    def __post_init__(self):
        a, b, phi = float(self.a), float(self.b), float(self.phi)
        if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
            raise ValueError(f"semi-axes must be positive, got {a}, {b}")
        if a < b:
            a, b, phi = b, a, phi + 0.5 * math.pi
        phi = math.fmod(phi, math.pi)
        if phi < 0:
            phi += math.pi
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "phi", phi)

    def support(self, theta):
        th = np.asarray(theta, dtype=float) - self.phi
        return np.sqrt((self.a * np.cos(th)) ** 2 + (self.b * np.sin(th)) ** 2)

    def shape_matrix(self) -> np.ndarray:
        """Symmetric P with E = P(unit disk)."""
        R = _rotation(self.phi)
        return R @ np.diag([self.a, self.b]) @ R.T

    @classmethod
    def from_shape_matrix(cls, P) -> CenteredEllipse:
        P = 0.5 * (np.asarray(P, dtype=float) + np.asarray(P, dtype=float).T)
        w, V = np.linalg.eigh(P)
        if w[0] <= 0:
            raise ValueError("shape matrix must be positive definite")
        major = V[:, 1]
        return cls(w[1], w[0], math.atan2(major[1], major[0]))

    @property
    def kappa0(self) -> float:
        return 1.0 / (self.a * self.b) ** 2

    @property
    def area(self) -> float:
        return math.pi * self.a * self.b

    def scaled(self, c: float) -> CenteredEllipse:
        return CenteredEllipse(c * self.a, c * self.b, self.phi)

    def polar(self) -> CenteredEllipse:
        return CenteredEllipse(1.0 / self.b, 1.0 / self.a, self.phi + 0.5 * math.pi)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "phi": self.phi}

    @classmethod
    def from_dict(cls, d: dict) -> CenteredEllipse:
        return cls(d["a"], d["b"], d.get("phi", 0.0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> CenteredEllipse:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class UnimodularMap:
    m11: float
    m12: float
    m21: float
    m22: float

    def __post_init__(self):
        det = self.m11 * self.m22 - self.m12 * self.m21
        if abs(det - 1.0) > DET_TOL:
            raise ValueError(f"map is not unimodular: det = {det!r}")

    @classmethod
    def identity(cls) -> UnimodularMap:
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def stretch(cls, lam: float, phi: float) -> UnimodularMap:
        """R(phi) diag(e^lam, e^-lam) R(-phi)."""
        R = _rotation(phi)
        M = R @ np.diag([math.exp(lam), math.exp(-lam)]) @ R.T
        # fix the determinant exactly against roundoff
        M = M / math.sqrt(np.linalg.det(M))
        return cls.from_matrix(M)

    @classmethod
    def from_matrix(cls, M) -> UnimodularMap:
        M = np.asarray(M, dtype=float)
        return cls(M[0, 0], M[0, 1], M[1, 0], M[1, 1])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])

    def to_json(self) -> str:
        return json.dumps(self.matrix.tolist())

    @classmethod
    def from_json(cls, text: str) -> UnimodularMap:
        return cls.from_matrix(json.loads(text))


def _as_matrix(M) -> np.ndarray:
    if isinstance(M, UnimodularMap):
        return M.matrix
    M = np.asarray(M, dtype=float)
    if M.shape != (2, 2):
        raise ValueError(f"expected a 2x2 map, got shape {M.shape}")
    return M


def apply_map(b: SupportBody, M) -> SupportBody:
    """Support function of M(K): s'(u) = s(M^T u), extended 1-homogeneously."""
    M = _as_matrix(M)
    det = float(np.linalg.det(M))
    if not math.isfinite(det) or abs(det) < 1e-14 * max(1.0, float(np.abs(M).max()) ** 2):
        raise ValueError("map is singular")
    th = nodes(b.n)
    u = np.vstack([np.cos(th), np.sin(th)])
    w = M.T @ u
    norm = np.hypot(w[0], w[1])
    ang = np.arctan2(w[1], w[0])
    return SupportBody(PeriodicField(norm * eval_values(b.values, ang), symmetric=True))


def ellipse_body(E: CenteredEllipse, n: int = 256) -> SupportBody:
    return SupportBody(PeriodicField(E.support(nodes(n)), symmetric=True))


def _khachiyan(points, tol=1e-2, max_rounds=20_000):
    """Minimum-volume centred ellipse {x : x^T Q x <= 1} around a cloud.

    Khachiyan's multiplicative update with Todd-Yildirim away steps, which
    keeps convergence linear once the active contact set has been found.
    """
    X = np.asarray(points, dtype=float)
    m, d = X.shape
    u = np.full(m, 1.0 / m)
    for _ in range(max_rounds):
        S = (X * u[:, None]).T @ X
        g = np.einsum("ij,jk,ik->i", X, np.linalg.inv(S), X)
        j = int(np.argmax(g))
        live = np.flatnonzero(u > 0)
        k = live[int(np.argmin(g[live]))]
        if g[j] <= d * (1.0 + tol):
            return np.linalg.inv(S) / d
        if g[j] - d >= d - g[k]:
            step = (g[j] - d) / (d * (g[j] - 1.0))
            u *= 1.0 - step
            u[j] += step
        else:
            # away step, clipped so the weight of k stays nonnegative
            step = min((d - g[k]) / (d * (g[k] - 1.0)), u[k] / (1.0 - u[k]))
            u *= 1.0 + step
            u[k] -= step
            u[k] = max(u[k], 0.0)
    raise NumericError(f"ellipse fit did not converge in {max_rounds} rounds")


class _RatioMax:
    """max over theta of s(theta) / |P u(theta)| for the body on a refined grid."""

    def __init__(self, b: SupportBody, refine: int = 8):
        self.values = b.values
        self.fine = upsample_values(b.values, refine)
        self.th = nodes(self.fine.size)
        self.cos, self.sin = np.cos(self.th), np.sin(self.th)
        self.h = self.th[1]

    def __call__(self, P, polish=False):
        pu0 = P[0, 0] * self.cos + P[0, 1] * self.sin
        pu1 = P[1, 0] * self.cos + P[1, 1] * self.sin
        ratio = self.fine / np.hypot(pu0, pu1)
        j = int(np.argmax(ratio))
        best = ratio[j]
        if not polish:
            return best

        def f(x):
            x = np.atleast_1d(x)
            q = P @ np.vstack([np.cos(x), np.sin(x)])
            return eval_values(self.values, x) / np.hypot(q[0], q[1])

        _, val = _golden_max(f, [self.th[j] - self.h], [self.th[j] + self.h])
        return max(best, float(val[0]))


def _shape(lam, phi):
    R = _rotation(phi)
    return R @ np.diag([math.exp(lam), math.exp(-lam)]) @ R.T


def _shape_xy(x):
    # exp of the traceless symmetric matrix [[x0, x1], [x1, -x0]]; smooth at the identity
    lam = math.hypot(x[0], x[1])
    return _shape(lam, 0.5 * math.atan2(x[1], x[0]))


def _xy(lam, phi):
    return np.array([lam * math.cos(2.0 * phi), lam * math.sin(2.0 * phi)])


def lowner_ellipse(b: SupportBody, max_rounds: int = 20_000) -> CenteredEllipse:
    """Minimal-area centred ellipse containing b.

    Khachiyan's iteration on a dense symmetric boundary cloud gives the shape.
    A short simplex polish of the circumscribing scale over unimodular shapes
    removes the bias of sampling the boundary, and the final scale makes the
    ellipse contain b at every node.
    """
    pts = boundary_points(b, refine=4)
    pts = np.vstack([pts, -pts])
    Q = _khachiyan(pts, max_rounds=max_rounds)
    w, V = np.linalg.eigh(Q)
    E0 = CenteredEllipse.from_shape_matrix(V @ np.diag(w**-0.5) @ V.T)
    ratio = _RatioMax(b)
    x0 = _xy(0.5 * math.log(E0.a / E0.b), E0.phi)
    res = minimize(
        lambda x: ratio(_shape_xy(x)),
        x0,
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000, "initial_simplex": [x0, x0 + [1e-4, 0], x0 + [0, 1e-4]]},
    )
    x = res.x if res.fun <= ratio(_shape_xy(x0)) else x0
    P = _shape_xy(x)
    c = ratio(P, polish=True)
    return CenteredEllipse.from_shape_matrix(c * P)


def john_ellipse(b: SupportBody) -> CenteredEllipse:
    """Maximal-area centred ellipse inside b, via the Löwner ellipse of the polar."""
    E = lowner_ellipse(polar_dual(b)).polar()
    # the polar transform is only accurate to ~1e-7; refit the scale against b itself
    E = E.scaled(field_min(b.values / E.support(nodes(b.n))))
    s_E = E.support(nodes(b.n))
    worst_in = float(np.max(s_E - b.values))
    worst_out = float(np.max(b.values - math.sqrt(2.0) * s_E))
    if worst_in > INCLUSION_TOL or worst_out > INCLUSION_TOL:
        raise NumericError(f"John inclusions fail by {max(worst_in, worst_out):.3e}", best=E)
    return E


def ellipse_sandwich(b: SupportBody) -> tuple[CenteredEllipse, CenteredEllipse]:
    """Ellipses E_in inside b and E_out around b with kappa0 equal to max and min of b's."""
    M = field_max(b.kappa0)
    m = field_min(b.kappa0)
    EJ, EL = john_ellipse(b), lowner_ellipse(b)
    E_in = EJ.scaled((EJ.kappa0 / M) ** 0.25)
    E_out = EL.scaled((EL.kappa0 / m) ** 0.25)
    th = nodes(b.n)
    gap = max(float(np.max(E_in.support(th) - b.values)), float(np.max(b.values - E_out.support(th))))
    if gap > INCLUSION_TOL:
        raise NumericError(f"sandwich inclusion fails by {gap:.3e}; grid may be under-resolved", best=(E_in, E_out))
    return E_in, E_out


def _length_under(b: SupportBody):
    """L(MK) = integral of r |M z_perp| over the normal angle, as a function of M's coordinates."""
    th = nodes(b.n)
    zp0, zp1 = -np.sin(th), np.cos(th)
    w = b.r * (2.0 * math.pi / b.n)

    def length(x):
        P = _shape_xy(x)
        return float(np.sum(w * np.hypot(P[0, 0] * zp0 + P[0, 1] * zp1, P[1, 0] * zp0 + P[1, 1] * zp1)))

    return length


def _canonical(x):
    """(lam, phi) with lam >= 0 and phi in [0, pi); phi = 0 for the identity."""
    lam = math.hypot(x[0], x[1])
    if lam < 1e-9:
        return 0.0, 0.0
    phi = 0.5 * math.atan2(x[1], x[0])
    if phi < 0:
        phi += math.pi
    return lam, phi


def min_length_normalize(b: SupportBody, rtol: float = 1e-10) -> tuple[UnimodularMap, SupportBody]:
    """Unimodular stretch R(phi) diag(e^lam, e^-lam) R(-phi) minimising the length of the image.

    The search starts from the identity and from the map rounding the Löwner
    ellipse. Ties between minimisers are broken by the smaller |lam|, then
    the smaller phi.
    """
    length = _length_under(b)
    starts = [np.zeros(2)]
    try:
        EL = lowner_ellipse(b)
        starts.append(_xy(-0.5 * math.log(EL.a / EL.b), EL.phi))
    except NumericError:
        pass
    L0 = length(starts[0])
    cands = []
    for x0 in starts:
        res = minimize(
            length,
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": rtol * L0, "maxiter": 4000,
                     "initial_simplex": [x0, x0 + [0.05, 0], x0 + [0, 0.05]]},
        )
        lam, phi = _canonical(res.x)
        cands.append((float(res.fun), lam, phi, bool(res.success) and lam <= 3.0))
    best_L = min(c[0] for c in cands)
    ties = [c for c in cands if c[0] <= best_L * (1.0 + rtol)]
    Lmin, lam, phi, ok = min(ties, key=lambda c: (c[1], c[2]))
    if not ok:
        raise NumericError("length minimisation did not converge", best=(lam, phi, Lmin))
    if L0 <= Lmin:
        lam, phi = 0.0, 0.0
    T = UnimodularMap.stretch(lam, phi)
    return T, apply_map(b, T)
