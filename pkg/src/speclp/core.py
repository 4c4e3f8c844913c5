"""Grids, quadrature, the continuous Fourier transform and the potential zoo."""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .config import DEFAULT, Settings

POTENTIAL_KINDS = ("free", "square", "well", "poschl_teller", "bump", "gauss")
POTENTIAL_CLASSES = ("free", "compact-smooth", "schwartz", "characteristic")


class DivergentIntegralError(ArithmeticError):
    """Raised when a weighted integral fails to settle over expanding windows."""


# --------------------------------------------------------------------------
# grids and sampled functions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Uniform grid on ``[xmin, xmax]``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 8:
            raise ValueError("a grid needs at least 8 points")
        d = np.diff(pts)
        if not np.all(d > 0):
            raise ValueError("grid points must be strictly increasing")
        h = (pts[-1] - pts[0]) / (pts.size - 1)
        # float rounding of x0 + i*h is bounded by a few ulps of max|x|
        tol = 1e-12 * h + 8 * np.finfo(float).eps * np.max(np.abs(pts))
        if np.max(np.abs(d - h)) > tol:
            raise ValueError("grid spacing is not uniform")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_count(cls, xmin: float, xmax: float, n: int) -> "Grid1D":
        if not xmin < xmax:
            raise ValueError("need xmin < xmax")
        return cls(np.linspace(xmin, xmax, int(n)))

    @classmethod
    def from_spacing(cls, xmin: float, xmax: float, h: float) -> "Grid1D":
        if h <= 0:
            raise ValueError("spacing must be positive")
        n = int(round((xmax - xmin) / h)) + 1
        return cls.from_count(xmin, xmin + (n - 1) * h, n)

    @property
    def spacing(self) -> float:
        return float((self.points[-1] - self.points[0]) / (self.points.size - 1))

    @property
    def bounds(self) -> tuple[float, float]:
        return float(self.points[0]), float(self.points[-1])

    @property
    def size(self) -> int:
        return int(self.points.size)

    def __len__(self):
        return self.size

    def same_as(self, other: "Grid1D", rtol: float = 1e-12) -> bool:
        return self.size == other.size and np.allclose(
            self.points, other.points, rtol=0, atol=rtol * max(1.0, abs(self.points).max())
        )

    def weights(self) -> np.ndarray:
        return simpson_weights(self.size, self.spacing)


@dataclass(eq=False)
class SampledFunction:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.grid.size,):
            raise ValueError("value count must equal grid point count")
        if not np.all(np.isfinite(vals)):
            raise ValueError("sampled values must be finite")
        self.values = vals

    @property
    def x(self) -> np.ndarray:
        return self.grid.points

    def norm(self, p: float = 2.0) -> float:
        return lp_norm(self, p)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        real = np.all(self.values.imag == 0)
        writer.writerow(["x", "re"] if real else ["x", "re", "im"])
        for x, v in zip(self.grid.points, self.values):
            row = [repr(float(x)), repr(float(v.real))]
            if not real:
                row.append(repr(float(v.imag)))
            writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SampledFunction":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        data = np.array([[float(c) for c in r] for r in body])
        vals = data[:, 1].astype(complex)
        if len(header) == 3:
            vals = vals + 1j * data[:, 2]
        return cls(Grid1D(data[:, 0]), vals)


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights; a 3/8 panel closes an odd interval count."""
    if n < 3:
        raise ValueError("Simpson quadrature needs at least 3 points")
    w = np.zeros(n)
    if n % 2 == 1:
        w[0:-1:2] += 1.0
        w[1::2] += 4.0
        w[2::2] += 1.0
        return w * (h / 3.0)
    m = n - 3  # points covered by the 1/3 rule, odd
    if m >= 3:
        w[: m - 1 : 2] += 1.0
        w[1 : m : 2] += 4.0
        w[2:m:2] += 1.0
        w[:m] *= h / 3.0
    w[m - 1 : m + 3] += np.array([1.0, 3.0, 3.0, 1.0]) * (3.0 * h / 8.0)
    return w


def integrate(f: SampledFunction) -> complex:
    """Simpson quadrature of ``f`` over its grid."""
    w = simpson_weights(f.grid.size, f.grid.spacing)
    val = complex(np.dot(w, f.values))
    return val


def lp_norm(f: SampledFunction, p: float) -> float:
    a = np.abs(f.values)
    if math.isinf(p):
        return float(a.max())
    w = simpson_weights(f.grid.size, f.grid.spacing)
    return float(np.dot(w, a**p) ** (1.0 / p))


def continuous_fourier(f: SampledFunction, kgrid: Grid1D, chunk: int = 256) -> SampledFunction:
    """``k -> integral f(x) exp(-i k x) dx`` by Simpson quadrature."""
    x = f.grid.points
    if max(abs(f.values[0]), abs(f.values[-1])) > 1e-10:
        warnings.warn("function has not decayed at the grid ends", RuntimeWarning, stacklevel=2)
    wf = simpson_weights(x.size, f.grid.spacing) * f.values
    k = kgrid.points
    out = np.empty(k.size, dtype=complex)
    for s in range(0, k.size, chunk):
        kk = k[s : s + chunk]
        out[s : s + chunk] = np.exp(-1j * np.outer(kk, x)) @ wf
    return SampledFunction(kgrid, out)


# --------------------------------------------------------------------------
# finite differences
# --------------------------------------------------------------------------


def fd_weights(order: int, offsets) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative on integer offsets."""
    offsets = np.asarray(offsets, dtype=float)
    n = offsets.size
    A = np.vander(offsets, n, increasing=True).T
    b = np.zeros(n)
    b[order] = math.factorial(order)
    return np.linalg.solve(A, b)


def _central_offsets(order: int) -> np.ndarray:
    # 4th-order accurate central stencil
    half = (order + 1) // 2 + 1
    return np.arange(-half, half + 1)


def fd_derivative(func: Callable, x, order: int, h: float = 1e-3) -> np.ndarray:
    if order == 0:
        return np.asarray(func(np.asarray(x, float)), dtype=float)
    offs = _central_offsets(order)
    w = fd_weights(order, offs)
    x = np.asarray(x, dtype=float)
    acc = np.zeros_like(x)
    for o, c in zip(offs, w):
        if c != 0:
            acc = acc + c * func(x + o * h)
    return acc / h**order


# --------------------------------------------------------------------------
# potentials
# --------------------------------------------------------------------------


@dataclass(eq=False)
class Potential:
    """A real potential ``V`` with support/class metadata."""

    kind: str
    params: dict
    evaluator: Callable[[np.ndarray], np.ndarray]
    support: Optional[tuple[float, float]]
    vclass: str
    derivative_fn: Optional[Callable[[np.ndarray, int], np.ndarray]] = None
    reflected_from: Optional["Potential"] = field(default=None, repr=False)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(self.evaluator(x), dtype=float)
        if self.support is not None:
            a, b = self.support
            v = np.where((x < a) | (x > b), 0.0, v)
        return v

    @property
    def is_free(self) -> bool:
        return self.vclass == "free"

    @property
    def smooth(self) -> bool:
        return self.vclass in ("free", "compact-smooth", "schwartz")

    def derivative(self, x, n: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if n == 0:
            return self(x)
        if self.vclass == "characteristic":
            raise ValueError("characteristic potentials have distributional derivatives")
        if self.is_free:
            return np.zeros_like(x)
        if self.derivative_fn is not None:
            out = self.derivative_fn(x, n)
            if out is not None:
                return out
        return fd_derivative(self, x, n)

    def effective_support(self, settings: Settings = DEFAULT) -> tuple[float, float]:
        """Interval outside which ``|V| < tail_eps``; exact for compact support."""
        if self.support is not None:
            return self.support
        lo, hi = settings.x_window
        span = max(abs(lo), abs(hi))
        x = np.linspace(-4 * span, 4 * span, 160001)
        big = np.nonzero(np.abs(self(x)) >= settings.tail_eps)[0]
        if big.size == 0:
            return (0.0, 0.0)
        h = settings.volterra_spacing
        a = math.floor(x[big[0]] / h) * h
        b = math.ceil(x[big[-1]] / h) * h
        return (float(a), float(b))

    def reflected(self) -> "Potential":
        """``x -> V(-x)``."""
        if self.reflected_from is not None:
            return self.reflected_from
        ev = self.evaluator
        dfn = self.derivative_fn
        sup = None if self.support is None else (-self.support[1], -self.support[0])
        refl_d = None
        if dfn is not None:
            def refl_d(x, n, _d=dfn):
                out = _d(-np.asarray(x), n)
                return None if out is None else (-1) ** n * out
        r = Potential(self.kind, dict(self.params), lambda x: ev(-np.asarray(x)), sup,
                      self.vclass, refl_d)
        r.params["reflected"] = 1.0
        r.reflected_from = self
        return r

    # plain-text record -----------------------------------------------------

    def to_record(self) -> str:
        lines = [f"kind = {self.kind}"]
        for k in sorted(self.params):
            if k == "reflected":
                continue
            lines.append(f"param.{k} = {self.params[k]!r}")
        if self.support is not None:
            lines.append(f"support = {self.support[0]!r}, {self.support[1]!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_record(cls, text: str) -> "Potential":
        kind, params = None, {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key == "kind":
                kind = val
            elif key.startswith("param."):
                params[key[6:]] = float(val)
        if kind is None:
            raise ValueError("record has no kind")
        return make_potential(kind, **params)


def _sech(x):
    return 1.0 / np.cosh(x)


def make_potential(kind: str, **params) -> Potential:
    """Build one of the built-in potentials.

    kinds: ``free``; ``square(c, a, b)``; ``well(V0, L)``; ``poschl_teller(nu)``;
    ``bump(A, a, b)``; ``gauss(A, sigma)``.
    """
    p = {k: float(v) for k, v in params.items()}
    if kind == "free":
        return Potential("free", {}, lambda x: np.zeros_like(np.asarray(x, float)), (0.0, 0.0), "free")
    if kind == "square":
        c, a, b = p.get("c", 1.0), p.get("a", 0.0), p.get("b", 1.0)
        if not b > a:
            raise ValueError("square needs a positive width")
        return Potential("square", dict(c=c, a=a, b=b),
                         lambda x: np.full_like(np.asarray(x, float), c), (a, b), "characteristic")
    if kind == "well":
        v0, L = p.get("V0", 1.0), p.get("L", 1.0)
        if L <= 0:
            raise ValueError("well needs a positive width")
        return Potential("well", dict(V0=v0, L=L),
                         lambda x: np.full_like(np.asarray(x, float), -v0), (0.0, L), "characteristic")
    if kind == "poschl_teller":
        nu = p.get("nu", 1.0)
        if nu <= 0:
            raise ValueError("poschl_teller needs nu > 0")
        s = nu * (nu + 1)

        def d_pt(x, n):
            t, sh2 = np.tanh(x), _sech(x) ** 2
            if n == 1:
                return 2 * s * sh2 * t
            if n == 2:
                return 2 * s * sh2 * (1 - 3 * t**2)
            return None

        return Potential("poschl_teller", dict(nu=nu), lambda x: -s * _sech(x) ** 2, None,
                         "schwartz", d_pt)
    if kind == "bump":
        A, a, b = p.get("A", 1.0), p.get("a", -1.0), p.get("b", 1.0)
        if not b > a:
            raise ValueError("bump needs a positive width")

        def ev(x):
            u = (2 * np.asarray(x, float) - a - b) / (b - a)
            inside = np.abs(u) < 1
            out = np.zeros_like(u)
            out[inside] = A * np.exp(-1.0 / (1.0 - u[inside] ** 2))
            return out

        return Potential("bump", dict(A=A, a=a, b=b), ev, (a, b), "compact-smooth")
    if kind == "gauss":
        A, sig = p.get("A", 1.0), p.get("sigma", 1.0)
        if sig <= 0:
            raise ValueError("gauss needs sigma > 0")

        def d_g(x, n):
            g = A * np.exp(-(x**2) / sig**2)
            if n == 1:
                return -2 * x / sig**2 * g
            if n == 2:
                return (4 * x**2 / sig**4 - 2 / sig**2) * g
            return None

        return Potential("gauss", dict(A=A, sigma=sig), lambda x: A * np.exp(-np.asarray(x) ** 2 / sig**2),
                         None, "schwartz", d_g)
    raise ValueError(f"unknown potential kind {kind!r}; expected one of {POTENTIAL_KINDS}")


def _weighted_piece(V: Potential, gamma: float, order: int, lo: float, hi: float, per_unit: int) -> float:
    n = max(9, int(per_unit * (hi - lo)) | 1)
    x = np.linspace(lo, hi, n)
    y = (1 + np.abs(x)) ** gamma * np.abs(V.derivative(x, order))
    return float(np.dot(simpson_weights(n, (hi - lo) / (n - 1)), y))


def _weighted_integral(V: Potential, gamma: float, order: int, lo: float, hi: float, per_unit: int) -> float:
    cuts = {lo, hi}
    if lo < 0 < hi:
        cuts.add(0.0)
    if V.support is not None:
        cuts.update(c for c in V.support if lo < c < hi)
    cuts = sorted(cuts)
    return sum(_weighted_piece(V, gamma, order, a, b, per_unit) for a, b in zip(cuts[:-1], cuts[1:]))


def weighted_norm(V: Potential, gamma: float, n: int = 0, per_unit: int = 2000) -> float:
    """``max_{i<=n} integral (1+|y|)^gamma |V^{(i)}(y)| dy``."""
    if gamma < 0 or n < 0:
        raise ValueError("need gamma >= 0 and n >= 0")
    if V.is_free:
        return 0.0
    if V.vclass == "characteristic" and n >= 1:
        return math.inf
    best = 0.0
    for i in range(n + 1):
        if V.support is not None:
            a, b = V.support
            val = _weighted_integral(V, gamma, i, a, b, per_unit)
        else:
            partial = []
            for R in (10.0, 20.0, 40.0, 80.0, 160.0):
                partial.append(_weighted_integral(V, gamma, i, -R, R, per_unit))
            diffs = np.abs(np.diff(partial))
            if not diffs[-1] <= 1e-10 * max(1.0, partial[-1]):
                raise DivergentIntegralError(
                    f"weighted integral of order {i} did not settle: partial sums {partial}")
            val = partial[-1]
        best = max(best, val)
    return best
