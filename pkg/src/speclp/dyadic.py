"""Smooth dyadic partitions of the spectral line."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import fd_weights

MOTHERS = ("partition", "partition-sq", "bump")


class DyadicInvariantError(ValueError):
    pass


def smooth_step(u, power: int = 1) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 1, 1.0, 0.0)
    mid = (u > 0) & (u < 1)
    if np.any(mid):
        um = u[mid]
        a = np.exp(-1.0 / um**power)
        b = np.exp(-1.0 / (1 - um) ** power)
        out[mid] = a / (a + b)
    return out


def cutoff(x, power: int = 1) -> np.ndarray:
    """``psi``: 1 on [-1/2, 1/2], 0 outside [-1, 1]."""
    return smooth_step(2 - 2 * np.abs(np.asarray(x, float)), power)


def _partition_mother(power: int) -> Callable:
    def phi(x):
        x = np.asarray(x, float)
        return cutoff(x, power) - cutoff(2 * x, power)
    return phi


def _bump_mother(x):
    x = np.abs(np.asarray(x, float))
    out = np.zeros_like(x)
    inside = (x > 0.25) & (x < 1.0)
    v = np.log2(x[inside]) + 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - v * v))
    return out


@dataclass(eq=False)
class DyadicSystem:
    mother: Callable[[np.ndarray], np.ndarray]
    jrange: tuple[int, int]
    homogeneous: bool = True
    Phi: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "partition"

    @property
    def js(self) -> list[int]:
        lo, hi = self.jrange
        if not self.homogeneous:
            lo = max(lo, 1)
        return list(range(lo, hi + 1))

    def phi(self, j: int, x) -> np.ndarray:
        return self.mother(np.asarray(x, float) * 2.0 ** (-j))

    def phi_fn(self, j: int) -> Callable:
        return lambda x: self.phi(j, x)

    @staticmethod
    def band(j: int) -> tuple[float, float]:
        """``|lambda|`` range with ``lambda^2`` in ``supp phi_j``."""
        return 2.0 ** ((j - 2) / 2), 2.0 ** (j / 2)

    def covered_energies(self) -> tuple[float, float]:
        """Energy interval where the partition sums to its nominal value."""
        lo, hi = self.jrange
        return (0.0 if not self.homogeneous else 2.0 ** (lo - 1)), 2.0 ** (hi - 1)

    def low_cap(self, x) -> Optional[np.ndarray]:
        """``sum_{j < jmin} phi_j`` in closed form (partition mothers only)."""
        if self.name not in ("partition", "partition-sq"):
            return None
        power = 1 if self.name == "partition" else 2
        return cutoff(np.asarray(x, float) * 2.0 ** (1 - self.jrange[0]), power)

    def cap_band(self) -> tuple[float, float]:
        return 0.0, 2.0 ** ((self.jrange[0] - 1) / 2)

    def total(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        s = sum(np.abs(self.phi(j, x)) for j in self.js)
        if not self.homogeneous and self.Phi is not None:
            s = s + np.abs(self.Phi(x))
        return s

    # -- verification ---------------------------------------------------------

    def verify(self, samples: int = 4001) -> dict:
        lo, hi = self.jrange
        report = {}
        # support in the dyadic annulus
        u = np.linspace(-1.5, 1.5, samples)
        out_of_support = (np.abs(u) < 0.25) | (np.abs(u) > 1.0)
        leak = float(np.max(np.abs(self.mother(u[out_of_support]))))
        report["support_leak"] = leak
        if leak > 0:
            raise DyadicInvariantError("mother is not supported in 1/4 <= |x| <= 1")
        # scale-covariant derivative bounds: 2^{kj} sup |phi_j^(k)| is j-independent
        consts = {}
        for order in range(1, 5):
            vals = []
            for j in (lo, 0, hi):
                h = 2.0**j * 1e-3
                x = 2.0**j * np.linspace(0.2, 1.05, 2001)
                offs = np.arange(-3, 4)
                w = fd_weights(order, offs)
                d = sum(c * self.phi(j, x + o * h) for o, c in zip(offs, w)) / h**order
                vals.append(2.0 ** (order * j) * float(np.max(np.abs(d))))
            consts[order] = vals
            if max(vals) > 1.01 * min(vals) + 1e-6:
                raise DyadicInvariantError(f"derivative bound of order {order} is not scale invariant")
        report["derivative_constants"] = {k: max(v) for k, v in consts.items()}
        # partition of unity up to a factor 2
        if self.homogeneous:
            e0, e1 = 2.0 ** (lo - 1), 2.0 ** (hi - 1)
            grid = np.geomspace(e0, e1, samples)
        else:
            grid = np.linspace(-2.0 ** (hi - 1), 2.0 ** (hi - 1), samples)
        tot = self.total(np.concatenate([grid, -grid]))
        report["sum_range"] = (float(tot.min()), float(tot.max()))
        if tot.min() < 0.5 or tot.max() > 2.0:
            raise DyadicInvariantError("sum of |phi_j| leaves [1/2, 2] on the covered range")
        return report


def make_dyadic_system(jmin: int, jmax: int, homogeneous: bool = True, mother: str = "partition") -> DyadicSystem:
    """Dyadic system from the partition pair ``psi(x) - psi(2x)`` (or an alternative mother)."""
    if jmin > jmax:
        raise ValueError("need jmin <= jmax")
    if mother == "partition":
        m, Phi = _partition_mother(1), (lambda x: cutoff(x, 1))
    elif mother == "partition-sq":
        m, Phi = _partition_mother(2), (lambda x: cutoff(x, 2))
    elif mother == "bump":
        m, Phi = _bump_mother, None
        if not homogeneous:
            raise ValueError("the bump mother has no matching low-energy cap")
    else:
        raise ValueError(f"unknown mother {mother!r}; expected one of {MOTHERS}")
    sys_ = DyadicSystem(m, (jmin, jmax), homogeneous, None if homogeneous else Phi, mother)
    sys_.report = sys_.verify()
    return sys_
