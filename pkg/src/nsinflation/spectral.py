"""Sparse-spectrum fields on periodic boxes.

A :class:`Box` is a periodic cell of side ``2 pi n_l`` along axis ``l``
centred at an integer point ``b``.  Its frequency lattice is
``xi_l = m_l / n_l`` with integer ``m_l``, so every integer frequency (in
particular the carrier ``2^N e_1`` and every unit-cube corner) is a lattice
point.

A :class:`SpectralField` stores the Fourier coefficients of a box-periodic
field as a short list of dense *windows*: rectangular blocks of lattice
coefficients placed at integer offsets.  The field value at ``x = b + y`` is

    f(b + y) = sum_windows sum_m c[m] exp(i (offset + m) / n . y),

so the coefficient of a whole-space function ``g`` is
``ghat(xi) / |box|`` (with ``ghat(xi) = int g(x) exp(-i x.xi) dx``).
Carrier-modulated fields need only two small windows around ``+-2^N e_1``
however large ``2^N`` is, and products are exact linear convolutions of
windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import mpmath
import numpy as np
import scipy.fft as sfft
from scipy.signal import fftconvolve

__all__ = [
    "Box",
    "SpectralField",
    "exact_angle",
    "lattice_phase",
    "fft_workers",
    "set_fft_workers",
]

_FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    """Set the thread count used by all FFTs in the package."""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


def fft_workers() -> int:
    return _FFT_WORKERS


def exact_angle(numerator: int, denominator: int = 1) -> float:
    """``(numerator / denominator) mod 2 pi`` reduced in extended precision.

    Parameters
    ----------
    numerator, denominator : int
        Exact integers; the angle in radians is their quotient.
    """
    with mpmath.workdps(60):
        a = mpmath.mpf(int(numerator)) / int(denominator)
        return float(a - 2 * mpmath.pi * mpmath.floor(a / (2 * mpmath.pi)))


def lattice_phase(indices: np.ndarray, shift: int, period: int) -> np.ndarray:
    """``exp(-i m shift / period)`` for integer lattice indices ``m``, exactly reduced.

    Uses ``m shift mod (period * 2 pi)``: the integer product is formed
    exactly and only its residue is converted to floating point.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if shift == 0:
        return np.ones(indices.shape, dtype=complex)
    out = np.empty(indices.shape, dtype=complex)
    for pos, m in np.ndenumerate(indices):
        out[pos] = complex(np.exp(-1j * exact_angle(int(m) * int(shift), period)))
    return out


@dataclass(frozen=True)
class Box:
    """Periodic box centred at an integer point.

    Attributes
    ----------
    center : tuple of int
        Physical coordinates of the box centre.
    periods : tuple of int
        ``n_l``; the side along axis ``l`` is ``2 pi n_l``.
    """

    center: tuple
    periods: tuple

    def __post_init__(self):
        if len(self.center) != len(self.periods):
            raise ValueError("center and periods must have equal length")
        if any(int(p) != p or p < 1 for p in self.periods):
            raise ValueError("periods must be positive integers")
        object.__setattr__(self, "center", tuple(int(c) for c in self.center))
        object.__setattr__(self, "periods", tuple(int(p) for p in self.periods))

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def lengths(self) -> tuple:
        return tuple(2.0 * math.pi * n for n in self.periods)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def grid_coords(self, counts: Sequence[int]) -> list:
        """Local coordinates ``y_l = L_l (i / M_l - 1/2)`` of a uniform grid."""
        return [L * (np.arange(M) / M - 0.5) for L, M in zip(self.lengths, counts)]

    @classmethod
    def around(cls, lo: Sequence[float], hi: Sequence[float]) -> "Box":
        """Smallest box with integer centre containing ``[lo, hi]``."""
        center = tuple(int(round(0.5 * (a + b))) for a, b in zip(lo, hi))
        periods = tuple(
            max(1, int(math.ceil(max(c - a, b - c) / math.pi)))
            for a, b, c in zip(lo, hi, center))
        return cls(center, periods)


def _freq_axes(offset, shape, periods):
    d = len(shape)
    axes = []
    for l in range(d):
        v = (offset[l] + np.arange(shape[l])) / periods[l]
        sh = [1] * d
        sh[l] = shape[l]
        axes.append(v.reshape(sh))
    return axes


class SpectralField:
    """Box-periodic field stored as sparse dense coefficient windows.

    Parameters
    ----------
    box : Box
        Periodic cell.
    windows : list of (offset, coef)
        ``offset`` is a tuple of integer lattice indices of ``coef[:, 0, ..., 0]``;
        ``coef`` has shape ``(ncomp, S_1, ..., S_d)``.
    ncomp : int
        Number of components (1 for scalars, ``d`` for vector fields).
    """

    def __init__(self, box: Box, windows=(), ncomp: int = 1):
        self.box = box
        self.ncomp = int(ncomp)
        self.windows = []
        for off, coef in windows:
            coef = np.asarray(coef, dtype=complex)
            if coef.ndim != box.d + 1 or coef.shape[0] != self.ncomp:
                raise ValueError("window array must have shape (ncomp, S_1, ..., S_d)")
            self.windows.append((tuple(int(o) for o in off), coef))

    # -- construction ----------------------------------------------------------
    @classmethod
    def zeros(cls, box: Box, ncomp: int = 1) -> "SpectralField":
        return cls(box, [], ncomp)

    def copy(self) -> "SpectralField":
        return SpectralField(self.box, [(o, c.copy()) for o, c in self.windows], self.ncomp)

    @property
    def d(self) -> int:
        return self.box.d

    def freqs(self, offset, shape) -> list:
        """Broadcastable absolute frequency axes of a window."""
        return _freq_axes(offset, shape, self.box.periods)

    def is_zero(self) -> bool:
        return all(not np.any(c) for _, c in self.windows)

    # -- linear algebra --------------------------------------------------------
    def scaled(self, a) -> "SpectralField":
        return SpectralField(self.box, [(o, a * c) for o, c in self.windows], self.ncomp)

    def __mul__(self, a):
        if isinstance(a, SpectralField):
            return product(self, a)
        return self.scaled(a)

    __rmul__ = __mul__

    def __neg__(self):
        return self.scaled(-1.0)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.box, self.windows + other.windows, self.ncomp).coalesced()

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self + (-other)

    def _check_compatible(self, other):
        if other.box != self.box:
            raise ValueError("fields live on different boxes")
        if other.ncomp != self.ncomp:
            raise ValueError("component counts differ")

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.box, [(o, c[i:i + 1]) for o, c in self.windows], 1)

    @staticmethod
    def stack(fields: Sequence["SpectralField"]) -> "SpectralField":
        """Stack scalar fields into one multi-component field."""
        box = fields[0].box
        parts = []
        for i, f in enumerate(fields):
            for o, c in f.windows:
                block = np.zeros((len(fields),) + c.shape[1:], dtype=complex)
                block[i] = c[0]
                parts.append((o, block))
        return SpectralField(box, parts, len(fields)).coalesced()

    # -- window bookkeeping ----------------------------------------------------
    def coalesced(self) -> "SpectralField":
        """Merge overlapping windows so every lattice point appears at most once."""
        wins = [(np.array(o), c) for o, c in self.windows if c.size]
        changed = True
        while changed and len(wins) > 1:
            changed = False
            n = len(wins)
            parent = list(range(n))

            def find(i):
                while parent[i] != i:
                    parent[i] = parent[parent[i]]
                    i = parent[i]
                return i

            for a in range(n):
                oa, ca = wins[a]
                ea = oa + np.array(ca.shape[1:])
                for b in range(a + 1, n):
                    ob, cb = wins[b]
                    eb = ob + np.array(cb.shape[1:])
                    if np.all(np.maximum(oa, ob) < np.minimum(ea, eb)):
                        ra, rb = find(a), find(b)
                        if ra != rb:
                            parent[rb] = ra
                            changed = True
            if not changed:
                break
            groups: dict = {}
            for i in range(n):
                groups.setdefault(find(i), []).append(i)
            merged = []
            for members in groups.values():
                if len(members) == 1:
                    merged.append(wins[members[0]])
                    continue
                lo = np.min([wins[i][0] for i in members], axis=0)
                hi = np.max([wins[i][0] + np.array(wins[i][1].shape[1:]) for i in members],
                            axis=0)
                block = np.zeros((self.ncomp,) + tuple(int(x) for x in hi - lo), dtype=complex)
                for i in members:
                    o, c = wins[i]
                    sl = tuple(slice(int(a - b), int(a - b) + s)
                               for a, b, s in zip(o, lo, c.shape[1:]))
                    block[(slice(None),) + sl] += c
                merged.append((lo, block))
            wins = merged
        return SpectralField(self.box, [(tuple(int(x) for x in o), c) for o, c in wins],
                             self.ncomp)

    def pruned(self, rel_tol: float = 0.0) -> "SpectralField":
        """Drop windows whose coefficients are all at or below ``rel_tol * max``."""
        peak = self.max_abs()
        keep = [(o, c) for o, c in self.windows if c.size and np.max(np.abs(c)) > rel_tol * peak]
        return SpectralField(self.box, keep, self.ncomp)

    def trimmed(self, rel_tol: float) -> "SpectralField":
        """Crop windows to the coefficients above ``rel_tol`` times the peak.

        Each window is first split at empty slabs along the first axis (so a
        real carrier field falls into its two conjugate clusters), then every
        piece is shrunk to its bounding block.
        """
        peak = self.max_abs()
        out = []
        for o, c in self.windows:
            mask = np.any(np.abs(c) > rel_tol * peak, axis=0)
            if not mask.any():
                continue
            rows = np.any(mask.reshape(mask.shape[0], -1), axis=1)
            idx0 = np.nonzero(rows)[0]
            breaks = np.nonzero(np.diff(idx0) > 1)[0]
            starts = np.concatenate([[idx0[0]], idx0[breaks + 1]])
            stops = np.concatenate([idx0[breaks], [idx0[-1]]]) + 1
            for a0, b0 in zip(starts, stops):
                sub = mask[a0:b0]
                idx = np.nonzero(sub)
                lo = [int(a0)] + [int(i.min()) for i in idx[1:]]
                hi = [int(b0)] + [int(i.max()) + 1 for i in idx[1:]]
                sl = tuple(slice(a, b) for a, b in zip(lo, hi))
                out.append((tuple(oo + a for oo, a in zip(o, lo)),
                            c[(slice(None),) + sl].copy()))
        return SpectralField(self.box, out, self.ncomp)

    def max_abs(self) -> float:
        vals = [float(np.max(np.abs(c))) for _, c in self.windows if c.size]
        return max(vals) if vals else 0.0

    def index_bounds(self):
        """Smallest and largest lattice index per axis over all windows."""
        if not self.windows:
            return None
        lo = np.min([np.array(o) for o, _ in self.windows], axis=0)
        hi = np.max([np.array(o) + np.array(c.shape[1:]) - 1 for o, c in self.windows], axis=0)
        return lo, hi

    def frequency_extent(self) -> float:
        """Largest ``|xi|`` carried by any stored coefficient box."""
        ext = 0.0
        for o, c in self.windows:
            corners = []
            for l in range(self.d):
                a = o[l] / self.box.periods[l]
                b = (o[l] + c.shape[l + 1] - 1) / self.box.periods[l]
                corners.append(max(abs(a), abs(b)))
            ext = max(ext, math.sqrt(sum(x * x for x in corners)))
        return ext

    # -- multipliers -----------------------------------------------------------
    def multiply_symbol(self, fn: Callable[[list], np.ndarray]) -> "SpectralField":
        """Multiply every coefficient by the scalar symbol ``fn(xi)``.

        ``fn`` receives the broadcastable frequency axes of a window and may
        return an array of the window shape or ``(ncomp, ...)``.  Windows on
        which the symbol vanishes identically are dropped.
        """
        out = []
        for o, c in self.windows:
            sym = fn(self.freqs(o, c.shape[1:]))
            new = c * sym
            if np.any(new):
                out.append((o, new))
        return SpectralField(self.box, out, self.ncomp)

    def apply_matrix(self, fn, nout: int) -> "SpectralField":
        """Apply a matrix symbol ``fn(xi)`` of shape ``(nout, ncomp, ...)``."""
        out = []
        for o, c in self.windows:
            mat = fn(self.freqs(o, c.shape[1:]))
            mat = np.broadcast_to(mat, (nout, self.ncomp) + c.shape[1:])
            new = np.einsum("ij...,j...->i...", mat, c)
            if np.any(new):
                out.append((o, new))
        return SpectralField(self.box, out, nout)

    def partial(self, axis: int) -> "SpectralField":
        return self.multiply_symbol(lambda xis: 1j * xis[axis])

    def gradient(self) -> "SpectralField":
        """Gradient of a scalar field as a ``d``-component field."""
        if self.ncomp != 1:
            raise ValueError("gradient expects a scalar field")
        d = self.d

        def mat(xis):
            return np.stack([1j * np.broadcast_to(x, np.broadcast(*xis).shape) for x in xis]
                            )[:, None]

        return self.apply_matrix(mat, d)

    def divergence(self) -> "SpectralField":
        if self.ncomp != self.d:
            raise ValueError("divergence expects a d-component field")

        def mat(xis):
            shape = np.broadcast(*xis).shape
            return np.stack([1j * np.broadcast_to(x, shape) for x in xis])[None]

        return self.apply_matrix(mat, 1)

    # -- evaluation ------------------------------------------------------------
    def l2_squared(self) -> np.ndarray:
        """Per-component ``int |f_c|^2`` over the box (Parseval)."""
        f = self.coalesced()
        tot = np.zeros(self.ncomp)
        for _, c in f.windows:
            tot += np.sum(np.abs(c.reshape(self.ncomp, -1)) ** 2, axis=1)
        return tot * self.box.volume

    def sample(self, counts: Sequence[int], real: bool = True) -> np.ndarray:
        """Point values on the uniform box grid of :meth:`Box.grid_coords`.

        Values at the grid points are exact for any grid size: coefficients
        whose lattice index exceeds the grid are folded onto their alias,
        which leaves the samples unchanged.
        """
        counts = tuple(int(m) for m in counts)
        acc = np.zeros((self.ncomp,) + counts, dtype=complex)
        for o, c in self.windows:
            idx = []
            for l in range(self.d):
                idx.append((o[l] + np.arange(c.shape[l + 1])) % counts[l])
            # np.add.at handles folded duplicates.
            np.add.at(acc, (slice(None),) + np.ix_(*idx), c)
        # grid starts at y = -L/2: phase exp(i m (-pi)) = (-1)^m folded into a shift
        for l in range(self.d):
            m = np.fft.fftfreq(counts[l], 1.0 / counts[l]).astype(np.int64)
            sh = [1] * (self.d + 1)
            sh[l + 1] = counts[l]
            sign = np.where(m % 2 == 0, 1.0, -1.0)
            # absolute index congruent to m mod M: parity of the true index is
            # needed; it is only well defined when M is even.
            if counts[l] % 2:
                raise ValueError("grid counts must be even")
            acc *= sign.reshape(sh)
        vals = sfft.ifftn(acc, axes=tuple(range(1, self.d + 1)), norm="forward",
                          workers=_FFT_WORKERS)
        return vals.real if real else vals

    def evaluate(self, points: np.ndarray, real: bool = True) -> np.ndarray:
        """Direct evaluation at local coordinates ``points`` of shape ``(npts, d)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((self.ncomp, points.shape[0]), dtype=complex)
        for o, c in self.windows:
            for p_i, y in enumerate(points):
                val = c
                for l in range(self.d):
                    ph = np.exp(1j * (o[l] + np.arange(c.shape[l + 1])) / self.box.periods[l]
                                * y[l])
                    val = np.tensordot(val, ph, axes=([1], [0]))
                out[:, p_i] += val
        return out.real if real else out

    def conj_reflected(self) -> "SpectralField":
        """Coefficients of ``conj(f)``: ``c'(m) = conj(c(-m))``."""
        out = []
        for o, c in self.windows:
            flipped = np.conj(c[(slice(None),) + (slice(None, None, -1),) * self.d])
            off = tuple(-(oo + s - 1) for oo, s in zip(o, c.shape[1:]))
            out.append((off, flipped))
        return SpectralField(self.box, out, self.ncomp)

    def realness_defect(self) -> float:
        """Max coefficient mismatch between ``f`` and ``conj(f)``, relative."""
        peak = self.max_abs()
        if peak == 0:
            return 0.0
        diff = (self - self.conj_reflected()).coalesced()
        return diff.max_abs() / peak


def _conv(a: np.ndarray, b: np.ndarray, d: int) -> np.ndarray:
    axes = tuple(range(1, d + 1))
    if a.shape[1:] == (1,) * d or b.shape[1:] == (1,) * d:
        return a * b
    return fftconvolve(a, b, mode="full", axes=axes)


def _mirror_index(f: SpectralField):
    """Map window ``i`` to the window holding its conjugate reflection (or ``None``)."""
    keys = {}
    for i, (o, c) in enumerate(f.windows):
        keys[(tuple(o), c.shape[1:])] = i
    out = []
    for o, c in f.windows:
        mo = tuple(-a - s + 1 for a, s in zip(o, c.shape[1:]))
        m = keys.get((mo, c.shape[1:]))
        if m is None:
            return None
        out.append(m)
    return out


def _reflect(o, c):
    """Conjugate reflection ``c(-xi)^*`` of one window."""
    shape = c.shape[1:]
    axes = tuple(range(1, c.ndim))
    return tuple(-a - s + 1 for a, s in zip(o, shape)), np.conj(np.flip(c, axis=axes))


def product(f: SpectralField, g: SpectralField, real: bool = False) -> SpectralField:
    """Pointwise product (componentwise; a scalar factor broadcasts).

    Parameters
    ----------
    f, g : SpectralField
    real : bool
        Declare both factors real-valued.  Window pairs whose result is the
        conjugate reflection of an already computed pair are then obtained
        by reflection instead of a convolution.  A square (``f is g``) also
        reuses the symmetric pair ``(b, a)`` of ``(a, b)``.
    """
    if f.box != g.box:
        raise ValueError("fields live on different boxes")
    if f.ncomp != g.ncomp and 1 not in (f.ncomp, g.ncomp):
        raise ValueError("component counts are incompatible")
    ncomp = max(f.ncomp, g.ncomp)
    nf, ng = len(f.windows), len(g.windows)
    mf = _mirror_index(f) if real else None
    mg = _mirror_index(g) if real else None
    square = f is g
    done: dict = {}
    out = []
    for i1 in range(nf):
        o1, c1 = f.windows[i1]
        for i2 in range(ng):
            o2, c2 = g.windows[i2]
            key = (i1, i2)
            if square and (i2, i1) in done:
                out.append(done[(i2, i1)])
                continue
            if mf is not None and mg is not None:
                mkey = (mf[i1], mg[i2])
                if square and mkey not in done:
                    mkey = (mkey[1], mkey[0]) if (mkey[1], mkey[0]) in done else mkey
                if mkey in done and mkey != key:
                    win = _reflect(*done[mkey])
                    done[key] = win
                    out.append(win)
                    continue
            win = (tuple(a + b for a, b in zip(o1, o2)), _conv(c1, c2, f.d))
            done[key] = win
            out.append(win)
    return SpectralField(f.box, out, ncomp).coalesced()


def dot(u: SpectralField, v: SpectralField) -> SpectralField:
    """Pointwise Euclidean inner product of two vector fields."""
    total = None
    for i in range(u.ncomp):
        term = product(u.component(i), v.component(i))
        total = term if total is None else total + term
    return total


def sum_fields(fields: Iterable[SpectralField]) -> SpectralField:
    fields = list(fields)
    box, ncomp = fields[0].box, fields[0].ncomp
    wins = []
    for f in fields:
        wins.extend(f.windows)
    return SpectralField(box, wins, ncomp).coalesced()
