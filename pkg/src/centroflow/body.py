"""Origin-symmetric strictly convex bodies given by their support functions."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np

from .errors import ConvexityViolation
from .field import (
    PeriodicField,
    deriv_values,
    eval_values,
    field_max,
    field_min,
    integrate_values,
    nodes,
    radius_values,
    symmetrize_values,
    upsample_values,
)

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class SupportBody:
    """A body in K_sym: s > 0 and r = s'' + s > 0 at every node.

    Derived node arrays (r, kappa0, sigma) are cached on first use.
    """

    def __init__(self, s, convexity_floor: float = 0.0):
        if not isinstance(s, PeriodicField):
            s = PeriodicField(s, symmetric=True)
        elif not s.symmetric:
            s = PeriodicField(s.values, symmetric=True)
        self.s = s
        if not s.values.min() > 0.0:
            bad = np.flatnonzero(~(s.values > 0.0))
            raise ConvexityViolation(bad, f"support function not positive at {bad.size} node(s)")
        if not self.r.min() > convexity_floor:
            raise ConvexityViolation(np.flatnonzero(~(self.r > convexity_floor)))

    @classmethod
    def _trusted(cls, s: np.ndarray, r: np.ndarray) -> SupportBody:
        # arrays already validated by the caller (flow engine hot path)
        self = object.__new__(cls)
        self.s = PeriodicField._trusted(s, True)
        self.__dict__["r"] = r
        r.setflags(write=False)
        return self

    @classmethod
    def from_values(cls, values) -> SupportBody:
        return cls(PeriodicField(values, symmetric=True))

    @classmethod
    def circle(cls, radius: float = 1.0, n: int = 256) -> SupportBody:
        return cls(PeriodicField(np.full(n, float(radius)), symmetric=True))

    @classmethod
    def from_function(cls, func, n: int = 256) -> SupportBody:
        return cls(PeriodicField(func(nodes(n)), symmetric=True))

    @property
    def n(self) -> int:
        return self.s.n

    @property
    def values(self) -> np.ndarray:
        return self.s.values

    @property
    def symmetric(self) -> bool:
        return True

    @cached_property
    def r(self) -> np.ndarray:
        return radius_values(self.s.values)

    @cached_property
    def area(self) -> float:
        return 0.5 * integrate_values(self.s.values * self.r)

    @cached_property
    def kappa0(self) -> np.ndarray:
        s = self.s.values
        return 1.0 / (self.r * s**3)

    @cached_property
    def sigma(self) -> np.ndarray:
        return self.kappa0 ** (-1.0 / 3.0)

    def scaled(self, c: float) -> SupportBody:
        return SupportBody(PeriodicField(c * self.s.values, symmetric=True))

    def __repr__(self):
        return f"SupportBody(n={self.n}, area={self.area:.6g})"

    def to_dict(self) -> dict:
        return self.s.to_dict()

    @classmethod
    def from_dict(cls, data: dict) -> SupportBody:
        return cls(PeriodicField.from_dict(data))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> SupportBody:
        return cls.from_dict(json.loads(text))


def radius_of_curvature(b: SupportBody) -> PeriodicField:
    return PeriodicField(b.r, symmetric=True)


def centro_affine_curvature(b: SupportBody) -> PeriodicField:
    return PeriodicField(b.kappa0, symmetric=True)


def area(b: SupportBody) -> float:
    return b.area


def dual_area(b: SupportBody) -> float:
    """Area of the polar body, 1/2 of the integral of s^-2."""
    return 0.5 * integrate_values(b.s.values ** -2.0)


def euclid_length(b: SupportBody) -> float:
    return integrate_values(b.r)


def p_affine_length(b: SupportBody, p: float) -> float:
    if p < 1:
        raise ValueError(f"p-affine length needs p >= 1, got {p}")
    return _omega(b.s.values, b.r, p)


def _omega(s, r, p):
    # s r kappa0^(p/(p+2)) = s^(1-3a) r^(1-a), a = p/(p+2)
    a = p / (p + 2.0)
    return integrate_values(s ** (1.0 - 3.0 * a) * r ** (1.0 - a))


def mixed_volume(s: PeriodicField, h: PeriodicField) -> float:
    if s.n != h.n:
        raise ValueError("mixed volume needs fields on the same grid")
    return integrate_values(s.values * radius_values(h.values))


def affine_support(b: SupportBody) -> PeriodicField:
    return PeriodicField(b.sigma, symmetric=True)


def affine_arclength_density(b: SupportBody) -> np.ndarray:
    return b.r ** (2.0 / 3.0)


def affine_derivative(b: SupportBody, values: np.ndarray) -> np.ndarray:
    """d/ds of node values along affine arclength (d/dtheta divided by r^(2/3))."""
    return deriv_values(values, 1) / affine_arclength_density(b)


def affine_curvature(b: SupportBody) -> PeriodicField:
    """mu = (1 - sigma_ss) / sigma."""
    sig = b.sigma
    sig_ss = affine_derivative(b, affine_derivative(b, sig))
    return PeriodicField((1.0 - sig_ss) / sig, symmetric=True)


def _golden_max(func, lo, hi, iters=64):
    """Vectorised golden-section maximisation on brackets [lo, hi]."""
    a, b = np.array(lo, dtype=float), np.array(hi, dtype=float)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(iters):
        left = fc > fd  # maximum lies in [a, d]
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        new_c = np.where(left, b - GOLDEN * (b - a), d)
        new_d = np.where(left, c, a + GOLDEN * (b - a))
        fx = func(np.where(left, new_c, new_d))
        fc, fd = np.where(left, fx, fd), np.where(left, fc, fx)
        c, d = new_c, new_d
    x = 0.5 * (a + b)
    return x, func(x)


def polar_support_values(s: np.ndarray, refine: int = 4) -> np.ndarray:
    """Support values of the polar body: max over theta of cos(theta - phi_j) / s(theta)."""
    n = s.size
    phi = nodes(n)
    fine = upsample_values(s, refine)
    th = nodes(n * refine)
    obj = np.cos(th[None, :] - phi[:, None]) / fine[None, :]
    j = np.argmax(obj, axis=1)
    best = obj[np.arange(n), j]
    centre = th[j]
    h = 2.0 * np.pi / (n * refine)

    coeff = np.fft.rfft(s) / n
    k = np.arange(n // 2 + 1)
    w = np.full(k.size, 2.0)
    w[0] = 1.0
    w[-1] = 0.0
    wc = w * coeff
    nyq = np.real(coeff[-1])

    def s_at(x):
        return np.real(np.exp(1j * np.multiply.outer(x, k)) @ wc) + nyq * np.cos(0.5 * n * x)

    def objective(x):
        return np.cos(x - phi) / s_at(x)

    _, polished = _golden_max(objective, centre - h, centre + h)
    return np.maximum(polished, best)


def polar_dual(b: SupportBody) -> SupportBody:
    return SupportBody(PeriodicField(symmetrize_values(polar_support_values(b.s.values)), symmetric=True))


def boundary_point(b: SupportBody, theta: float) -> tuple[float, float]:
    """Gauss parametrisation gamma = s z + s_theta z_perp at normal angle theta."""
    s = float(eval_values(b.s.values, theta))
    ds = float(eval_values(b.s.values, theta, 1))
    c, si = np.cos(theta), np.sin(theta)
    return (s * c - ds * si, s * si + ds * c)


def boundary_points(b: SupportBody, refine: int = 4) -> np.ndarray:
    """Boundary cloud at `refine * n` uniform normal angles, shape (m, 2)."""
    fine = upsample_values(b.s.values, refine)
    ds = deriv_values(fine, 1)
    th = nodes(fine.size)
    c, si = np.cos(th), np.sin(th)
    return np.column_stack([fine * c - ds * si, fine * si + ds * c])


def hausdorff_distance(b1: SupportBody, b2: SupportBody) -> float:
    if b1.n != b2.n:
        raise ValueError(f"grid mismatch: {b1.n} vs {b2.n}")
    return float(np.max(np.abs(b1.s.values - b2.s.values)))


@dataclass(frozen=True)
class BodySummary:
    area: float
    dual_area: float
    length: float
    omega_p: float
    kappa0_min: float
    kappa0_max: float
    sigma_min: float
    sigma_max: float

    FIELDS = ("area", "dual_area", "length", "omega_p", "kappa0_min", "kappa0_max", "sigma_min", "sigma_max")

    def csv_header(self) -> str:
        return ",".join(self.FIELDS)

    def csv_row(self) -> str:
        d = asdict(self)
        return ",".join(repr(float(d[k])) for k in self.FIELDS)


def summarize(b: SupportBody, p: float = 1.0) -> BodySummary:
    k0_min, k0_max = field_min(b.kappa0), field_max(b.kappa0)
    return BodySummary(
        area=area(b),
        dual_area=dual_area(b),
        length=euclid_length(b),
        omega_p=p_affine_length(b, p),
        kappa0_min=k0_min,
        kappa0_max=k0_max,
        sigma_min=k0_max ** (-1.0 / 3.0),
        sigma_max=k0_min ** (-1.0 / 3.0),
    )
