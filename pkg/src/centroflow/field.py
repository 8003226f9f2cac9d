"""Spectral calculus for 2*pi-periodic scalar fields sampled on a uniform grid."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TAIL_WARN = 1e-8


@dataclass(frozen=True)
class AngularGrid:
    n: int

    def __post_init__(self):
        if self.n < 16 or self.n % 2:
            raise ValueError(f"grid size must be even and >= 16, got {self.n}")

    @property
    def nodes(self) -> np.ndarray:
        return nodes(self.n)

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / self.n


@lru_cache(maxsize=None)
def _nodes(n):
    th = 2.0 * np.pi * np.arange(n) / n
    th.setflags(write=False)
    return th


def nodes(n: int) -> np.ndarray:
    return _nodes(int(n))


@lru_cache(maxsize=None)
def _ik(n, order):
    # Nyquist mode cos(n theta / 2) is kept for even orders (it is an
    # eigenfunction there) and dropped for odd ones.
    k = np.arange(n // 2 + 1, dtype=float)
    mult = (1j * k) ** order
    if order % 2:
        mult[-1] = 0.0
    mult.setflags(write=False)
    return mult


@lru_cache(maxsize=None)
def _radius_mult(n):
    k = np.arange(n // 2 + 1, dtype=float)
    mult = 1.0 - k**2
    mult.setflags(write=False)
    return mult


def deriv_values(values: np.ndarray, order: int = 1) -> np.ndarray:
    """Spectral derivative of raw node values (no validation, hot path)."""
    n = values.shape[-1]
    return np.fft.irfft(np.fft.rfft(values) * _ik(n, order), n)


def radius_values(s: np.ndarray) -> np.ndarray:
    """r = s'' + s on raw node values, in a single spectral pass."""
    return np.fft.irfft(np.fft.rfft(s) * _radius_mult(s.shape[-1]), s.shape[-1])


def integrate_values(values: np.ndarray) -> float:
    return float(np.sum(values, axis=-1) * (2.0 * np.pi / values.shape[-1]))


def symmetrize_values(values: np.ndarray) -> np.ndarray:
    h = values.shape[-1] // 2
    out = np.empty_like(values)
    half = 0.5 * (values[..., :h] + values[..., h:])
    out[..., :h] = half
    out[..., h:] = half
    return out


def upsample_values(values: np.ndarray, factor: int) -> np.ndarray:
    """Trigonometric interpolant of `values` sampled on a grid `factor` times finer."""
    n = values.shape[-1]
    m = n * factor
    c = np.fft.rfft(values)
    c[-1] *= 0.5  # split the Nyquist term evenly between +-n/2
    padded = np.zeros(m // 2 + 1, dtype=complex)
    padded[: n // 2 + 1] = c
    return np.fft.irfft(padded, m) * factor


def eval_values(values: np.ndarray, angles, order: int = 0) -> np.ndarray:
    """Evaluate the trigonometric interpolant (or a derivative) at arbitrary angles."""
    n = values.shape[-1]
    c = np.fft.rfft(values) / n
    x = np.asarray(angles, dtype=float)
    k = np.arange(n // 2 + 1)
    weights = np.full(k.size, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    phase = np.exp(1j * np.multiply.outer(x, k))
    nyq = np.real(c[-1])
    if order:
        c = c * (1j * k) ** order
        nyq = 0.0 if order % 2 else nyq * (-0.25 * n * n) ** (order // 2)
    # Nyquist term is real cos(n x / 2) so node values are reproduced exactly.
    terms = phase[..., :-1] @ (weights[:-1] * c[:-1])
    return np.real(terms) + nyq * np.cos(0.5 * n * x)


class PeriodicField:
    """Node values of a periodic function on S^1; immutable."""

    __slots__ = ("_values", "symmetric")

    def __init__(self, values, symmetric: bool = False):
        v = np.array(values, dtype=float)
        if v.ndim != 1:
            raise ValueError("field values must be one-dimensional")
        AngularGrid(v.size)
        if symmetric:
            v = symmetrize_values(v)
        v.setflags(write=False)
        self._values = v
        self.symmetric = bool(symmetric)

    @classmethod
    def _trusted(cls, values: np.ndarray, symmetric: bool) -> PeriodicField:
        # caller guarantees a fresh 1-d float array already satisfying `symmetric`
        self = object.__new__(cls)
        values.setflags(write=False)
        self._values = values
        self.symmetric = symmetric
        return self

    @classmethod
    def from_function(cls, func, n: int, symmetric: bool = False) -> PeriodicField:
        return cls(func(nodes(n)), symmetric=symmetric)

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def n(self) -> int:
        return self._values.size

    @property
    def grid(self) -> AngularGrid:
        return AngularGrid(self.n)

    @property
    def nodes(self) -> np.ndarray:
        return nodes(self.n)

    def coefficients(self) -> np.ndarray:
        """Complex Fourier coefficients c_k, k = 0..n/2, with f = sum c_k e^{ik theta}."""
        return np.fft.rfft(self._values) / self.n

    def spectral_tail(self) -> float:
        """Fraction of energy in the top third of resolved wavenumbers."""
        e = np.abs(self.coefficients()) ** 2
        total = e.sum()
        if total == 0.0:
            return 0.0
        cut = (2 * e.size) // 3
        return float(e[cut:].sum() / total)

    def with_values(self, values) -> PeriodicField:
        return PeriodicField(values, symmetric=self.symmetric)

    def __repr__(self):
        return f"PeriodicField(n={self.n}, symmetric={self.symmetric})"

    def to_dict(self) -> dict:
        return {"n": self.n, "symmetric": self.symmetric, "values": self._values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> PeriodicField:
        values = data["values"]
        if len(values) != int(data["n"]):
            raise ValueError(f"field declares n={data['n']} but has {len(values)} values")
        return cls(values, symmetric=bool(data.get("symmetric", False)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> PeriodicField:
        return cls.from_dict(json.loads(text))


def differentiate(f: PeriodicField, order: int = 1) -> PeriodicField:
    if int(order) != order or order <= 0:
        raise ValueError(f"derivative order must be a positive integer, got {order}")
    return PeriodicField(deriv_values(f.values, int(order)), symmetric=f.symmetric)


def integrate(f: PeriodicField) -> float:
    """Integral over the circle by the uniform-node rule."""
    return integrate_values(f.values)


def interpolate(f: PeriodicField, angle, order: int = 0):
    """Fourier interpolant of `f` (or its `order`-th derivative) at `angle`."""
    out = eval_values(f.values, angle, order)
    return float(out) if np.ndim(out) == 0 else out


def symmetrize(f: PeriodicField) -> PeriodicField:
    return PeriodicField(symmetrize_values(f.values), symmetric=True)


def parseval_energy(f: PeriodicField) -> float:
    """2*pi times the sum of |c_k|^2 over the full two-sided spectrum."""
    c = f.coefficients()
    e = np.abs(c) ** 2
    return float(2.0 * np.pi * (e[0] + 2.0 * e[1:-1].sum() + e[-1]))


def check_resolution(f: PeriodicField, label: str = "field") -> float:
    tail = f.spectral_tail()
    if tail > TAIL_WARN:
        warnings.warn(f"{label} under-resolved: spectral tail {tail:.2e}", RuntimeWarning, stacklevel=2)
    return tail


def _phases(x, K):
    # e^{i k x} for k < K by repeated multiplication (much cheaper than exp)
    z = np.empty((x.size, K), dtype=complex)
    z[:, 0] = 1.0
    z[:, 1:] = np.exp(1j * x)[:, None]
    return np.cumprod(z, axis=1)


def polished_extrema(values: np.ndarray, signs) -> np.ndarray:
    """Extrema of the trigonometric interpolants of the rows of `values`.

    signs[j] = +1 asks for the minimum of row j, -1 for the maximum.  From the
    best node, one Newton step uses spectral derivatives at the nodes, two
    more use the interpolant itself, and the value is corrected to second
    order in the last update.  A row falls back to its node value if Newton
    leaves the neighbouring cells or meets the wrong curvature.
    """
    v = np.atleast_2d(np.asarray(values, dtype=float))
    sg = np.broadcast_to(np.asarray(signs, dtype=float), v.shape[:1])
    m, n = v.shape
    h = 2.0 * np.pi / n
    rows = np.arange(m)
    i = np.argmin(sg[:, None] * v, axis=1)
    node_val = v[rows, i]
    c = np.fft.rfft(v, axis=1)
    k = np.arange(n // 2 + 1)
    d1 = np.fft.irfft(c * _ik(n, 1), n)[rows, i]
    d2 = np.fft.irfft(c * _ik(n, 2), n)[rows, i]
    c = c / n
    w = np.full(k.size, 2.0)
    w[0] = 1.0
    w[-1] = 0.0
    c0 = w * c
    c1 = c0 * (1j * k)
    c2 = c0 * (-(k**2.0))
    x0 = h * i
    ok = sg * d2 > 0.0
    x = x0 + np.where(ok, -d1 / np.where(ok, d2, 1.0), 0.0)
    for last in (False, True):
        ok &= np.abs(x - x0) <= h
        e = _phases(x, k.size)
        d1 = np.einsum("ij,ij->i", e, c1).real
        d2 = np.einsum("ij,ij->i", e, c2).real
        ok &= sg * d2 > 0.0
        dx = np.where(ok, -d1 / np.where(ok, d2, 1.0), 0.0)
        if last:
            val = np.einsum("ij,ij->i", e, c0).real + np.real(c[:, -1]) * np.cos(0.5 * n * x)
            val = val + d1 * dx + 0.5 * d2 * dx * dx
        x = x + dx
    ok &= np.abs(x - x0) <= h
    best = np.where(sg > 0, np.minimum(val, node_val), np.maximum(val, node_val))
    return np.where(ok, best, node_val)


def field_min(values: np.ndarray) -> float:
    """Minimum of the trigonometric interpolant, polished from the best node."""
    return float(polished_extrema(values, 1.0)[0])


def field_max(values: np.ndarray) -> float:
    return float(polished_extrema(values, -1.0)[0])
