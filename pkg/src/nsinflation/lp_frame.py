"""Dyadic Littlewood--Paley frame and the unit-cube frequency partition.

The dyadic blocks are ``phihat_j(xi) = psi(2^{-j}|xi|) - psi(2^{-j+1}|xi|)``
with ``psi`` the smooth radial cutoff of :mod:`nsinflation.profile`, so the
partition of unity telescopes exactly.  The cube partition uses the
tensor-product bump ``chi(xi) = prod_l chi1(xi_l)`` with
``chi1(s) = S(s) S(2 - s)``; it is supported in ``[0, 2)^d`` and its integer
translates sum to one.

Both objects are immutable.  Projections act on any field type that offers
``multiply_symbol(fn)``, where ``fn`` receives the list of broadcastable
frequency coordinate arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .profile import annulus, cutoff, radial_profile, smooth_step

__all__ = [
    "LPFrame",
    "CubePartition",
    "build_lp_frame",
    "build_cube_partition",
    "lp_project",
    "cube_project",
    "frequency_norm",
    "chi1",
]

PROFILE_NAME = "telescoped cutoff, exp(-1/t) transition on [1, 2]"


def frequency_norm(xis: Sequence[np.ndarray]) -> np.ndarray:
    """Euclidean norm of a broadcastable list of frequency coordinates."""
    total = 0.0
    for x in xis:
        total = total + np.asarray(x, dtype=float) ** 2
    return np.sqrt(total)


def _dyadic(x, j: int):
    """Exact multiplication by ``2^j``."""
    return np.ldexp(np.asarray(x, dtype=float), j)


@dataclass(frozen=True)
class LPFrame:
    """Homogeneous dyadic partition restricted to bands ``j_min..j_max``.

    Attributes
    ----------
    j_min, j_max : int
        Inclusive band range.
    d : int
        Spatial dimension.
    profile : str
        Name of the cutoff construction.
    """

    j_min: int
    j_max: int
    d: int
    profile: str = PROFILE_NAME

    def __post_init__(self):
        if int(self.j_min) != self.j_min or int(self.j_max) != self.j_max:
            raise TypeError("band indices must be integers")
        if self.j_min > self.j_max:
            raise ValueError(f"j_min={self.j_min} exceeds j_max={self.j_max}")
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")

    @property
    def bands(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def check_band(self, j: int) -> None:
        if not self.j_min <= j <= self.j_max:
            raise ValueError(
                f"band {j} outside frame range [{self.j_min}, {self.j_max}]")

    def symbol(self, j: int, xi_abs) -> np.ndarray:
        """``phihat_j(|xi|) = phihat0(2^{-j}|xi|)``."""
        self.check_band(j)
        return annulus(_dyadic(xi_abs, -j))

    def low_pass(self, xi_abs, j: int = 0) -> np.ndarray:
        """Cumulative cutoff ``psi(2^{-j}|xi|)``: one below ``2^j``, zero above ``2^{j+1}``."""
        return cutoff(_dyadic(xi_abs, -j))

    def partition_sum(self, xi_abs) -> np.ndarray:
        """Sum of all frame symbols; exactly one on ``[2^{j_min}, 2^{j_max}]``."""
        xi_abs = np.asarray(xi_abs, dtype=float)
        return sum(annulus(_dyadic(xi_abs, -j)) for j in self.bands)

    @staticmethod
    def annulus_bounds(j: int) -> tuple[float, float]:
        """Support ``[2^{j-1}, 2^{j+1}]`` of band ``j``."""
        return math.ldexp(1.0, j - 1), math.ldexp(1.0, j + 1)

    def bands_meeting(self, rmin: float, rmax: float) -> list[int]:
        """Frame bands whose open annulus meets ``[rmin, rmax]``."""
        out = []
        for j in self.bands:
            lo, hi = self.annulus_bounds(j)
            if hi > rmin and lo < rmax:
                out.append(j)
        return out

    def kernel(self, j: int, r) -> np.ndarray:
        """Real-space kernel ``phi_j(x) = 2^{dj} phi0(2^j x)`` at radii ``r``."""
        self.check_band(j)
        prof = radial_profile(self.d)
        return _dyadic(prof(_dyadic(r, j)), self.d * j)


def build_lp_frame(j_min: int, j_max: int, d: int) -> LPFrame:
    """Construct an :class:`LPFrame` for bands ``j_min..j_max`` in dimension ``d``."""
    return LPFrame(int(j_min), int(j_max), int(d))


def chi1(s) -> np.ndarray:
    """One-dimensional cube bump supported in ``[0, 2]`` with unit integer sums."""
    s = np.asarray(s, dtype=float)
    return smooth_step(s) * smooth_step(2.0 - s)


@dataclass(frozen=True)
class CubePartition:
    """Unit-lattice partition ``{chi(. - k)}`` over an integer cube range.

    Attributes
    ----------
    d : int
        Dimension.
    lo, hi : tuple of int
        Inclusive lattice bounds of the admissible ``k``.  The covered
        frequency box is ``[lo + 1, hi + 1]`` per axis.
    """

    d: int
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != self.d or len(self.hi) != self.d:
            raise ValueError("cube range must have one bound per axis")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError("empty cube range")

    def contains(self, k: Sequence[int]) -> bool:
        return all(a <= int(x) <= b for a, x, b in zip(self.lo, k, self.hi))

    def check_cube(self, k: Sequence[int]) -> None:
        if not self.contains(k):
            raise ValueError(f"cube {tuple(int(x) for x in k)} outside partition range "
                             f"{self.lo}..{self.hi}")

    def weight(self, k: Sequence[int], xis: Sequence[np.ndarray]) -> np.ndarray:
        """``chi(xi - k)`` on broadcastable frequency coordinates."""
        out = 1.0
        for kl, x in zip(k, xis):
            out = out * chi1(np.asarray(x, dtype=float) - kl)
        return out

    def cubes(self) -> Iterator[tuple]:
        """All lattice points of the range in lexicographic order."""
        grids = [range(a, b + 1) for a, b in zip(self.lo, self.hi)]
        return iter(np.array(np.meshgrid(*grids, indexing="ij")).reshape(self.d, -1).T
                    .tolist())

    def partition_sum(self, xis: Sequence[np.ndarray]) -> np.ndarray:
        """``sum_k chi(xi - k)`` over the range (one on the covered box)."""
        total = 0.0
        for k in self.cubes():
            total = total + self.weight(k, xis)
        return total


def build_cube_partition(lo_freq: Sequence[float], hi_freq: Sequence[float]) -> CubePartition:
    """Cube partition covering the frequency box ``[lo_freq, hi_freq]``."""
    lo = tuple(int(math.floor(a)) - 1 for a in lo_freq)
    hi = tuple(int(math.floor(b)) for b in hi_freq)
    return CubePartition(len(lo), lo, hi)


def lp_project(field, j: int, frame: LPFrame):
    """Return the field with transform ``phihat_j(xi) fhat(xi)``."""
    frame.check_band(j)
    return field.multiply_symbol(lambda xis: frame.symbol(j, frequency_norm(xis)))


def cube_project(field, k: Sequence[int], part: CubePartition):
    """Return the field with transform ``chi(xi - k) fhat(xi)``."""
    part.check_cube(k)
    k = tuple(int(x) for x in k)
    return field.multiply_symbol(lambda xis: part.weight(k, xis))
