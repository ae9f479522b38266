"""Modulated bump atoms, multi-patch fields and dense grid fields.

An atom is ``A * phi_j(x - c) * sin(omega x_1)`` (or ``cos``) carried by one
velocity component, with an exact integer centre ``c`` and an integer
modulation ``omega``.  Two representations are provided:

* :class:`PatchField` (fast path): atoms whose truncated supports intersect
  are grouped into one *patch*, a periodic box around the group on which the
  field is stored as a :class:`~nsinflation.spectral.SpectralField`.  The
  coefficients are written down in closed form from the annulus symbol, so a
  patch costs only its two carrier windows regardless of ``omega``.
* :class:`GridField` (oracle path): dense real samples on a uniform grid of
  one box, produced by evaluating the real-space kernel directly
  (:func:`atom_to_grid`, :func:`render_global`).

Phases are never formed from large floating-point products: the carrier
phase ``omega * c_1`` and every lattice phase are reduced modulo ``2 pi`` in
extended precision or exact integer arithmetic.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np

from .lp_frame import frequency_norm
from .profile import annulus, radial_profile
from .spectral import Box, SpectralField, exact_angle, lattice_phase

__all__ = [
    "BumpAtom",
    "GridSpec",
    "Patch",
    "PatchField",
    "GridField",
    "MemoryCapExceeded",
    "atom_to_grid",
    "assemble_patchfield",
    "render_global",
    "memory_cap_bytes",
    "MEMORY_CAP_ENV",
]

MEMORY_CAP_ENV = "NSINFLATION_MEMORY_CAP"
_DEFAULT_MEMORY_CAP = 2 * 1024**3


def memory_cap_bytes() -> int:
    """Memory cap for dense grids; override with ``NSINFLATION_MEMORY_CAP`` (bytes,
    or with a ``K``/``M``/``G`` suffix)."""
    raw = os.environ.get(MEMORY_CAP_ENV)
    if not raw:
        return _DEFAULT_MEMORY_CAP
    raw = raw.strip().upper()
    scale = {"K": 1024, "M": 1024**2, "G": 1024**3}.get(raw[-1], 1)
    if raw[-1] in "KMG":
        raw = raw[:-1]
    return int(float(raw) * scale)


class MemoryCapExceeded(MemoryError):
    """A dense grid would exceed the configured memory cap."""


@dataclass(frozen=True)
class BumpAtom:
    """One translated, modulated dyadic bump.

    Attributes
    ----------
    j : int
        Scale index; the bump is ``phi_j(x) = 2^{dj} phi0(2^j x)``.
    center : tuple of int
        Exact integer centre.
    amplitude : float
        Non-negative real amplitude.
    omega : int
        Integer modulation frequency along ``e_1`` (``0`` for no carrier).
    parity : {"sin", "cos"}
        Carrier ``sin(omega x_1)`` or ``cos(omega x_1)``.
    component : int
        Index of the vector component carrying the bump.
    d : int
        Dimension.
    """

    j: int
    center: tuple
    amplitude: float
    omega: int = 0
    parity: str = "sin"
    component: int = 0
    d: int = 2

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if len(self.center) != self.d:
            raise ValueError("center must have d entries")
        if any(int(c) != c for c in self.center):
            raise ValueError("atom centres must be integers")
        object.__setattr__(self, "center", tuple(int(c) for c in self.center))
        if int(self.j) != self.j:
            raise ValueError("scale index must be an integer")
        object.__setattr__(self, "j", int(self.j))
        if int(self.omega) != self.omega or self.omega < 0:
            raise ValueError("modulation must be a non-negative integer")
        object.__setattr__(self, "omega", int(self.omega))
        if self.parity not in ("sin", "cos"):
            raise ValueError("parity must be 'sin' or 'cos'")
        if not (self.amplitude >= 0 and math.isfinite(self.amplitude)):
            raise ValueError("amplitude must be finite and non-negative")
        if not 0 <= self.component < self.d:
            raise ValueError("component index out of range")

    # -- geometry ------------------------------------------------------------
    def radius(self, tail_tol: float) -> float:
        """Truncation radius: ``|phi_j| < tail_tol * max|phi_j|`` beyond it."""
        return math.ldexp(radial_profile(self.d).truncation_radius(tail_tol), -self.j)

    def bandwidth(self) -> float:
        """Radius ``2^{j+1}`` of the envelope spectrum."""
        return math.ldexp(1.0, self.j + 1)

    def carrier_phase(self) -> float:
        """``omega * center_1 mod 2 pi`` in extended precision."""
        return exact_angle(self.omega * self.center[0])

    def scaled(self, a: float) -> "BumpAtom":
        return BumpAtom(self.j, self.center, self.amplitude * a, self.omega, self.parity,
                        self.component, self.d)

    # -- direct evaluation -----------------------------------------------------
    def evaluate(self, points: np.ndarray, offset: Sequence[int] | None = None) -> np.ndarray:
        """Value of the carrying component at points ``offset + points``.

        Parameters
        ----------
        points : ndarray, shape (npts, d)
            Coordinates relative to ``offset`` (default: the atom centre).
        offset : sequence of int, optional
            Integer reference point; phases are reduced exactly relative to it.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        offset = self.center if offset is None else tuple(int(o) for o in offset)
        shift = np.array([o - c for o, c in zip(offset, self.center)], dtype=float)
        rel = points + shift
        r = np.sqrt(np.sum(rel**2, axis=1))
        env = math.ldexp(1.0, self.d * self.j) * radial_profile(self.d)(np.ldexp(r, self.j))
        theta = exact_angle(self.omega * offset[0])
        arg = theta + self.omega * points[:, 0]
        carrier = np.sin(arg) if self.parity == "sin" else np.cos(arg)
        if self.omega == 0 and self.parity == "sin":
            carrier = np.zeros_like(arg)
        return self.amplitude * env * carrier

    # -- spectral coefficients ---------------------------------------------------
    def spectral(self, box: Box) -> SpectralField:
        """Coefficients of the box-periodised atom as a ``d``-component field."""
        d = self.d
        delta = [c - b for c, b in zip(self.center, box.center)]
        n = box.periods
        theta = self.carrier_phase()
        bw = self.bandwidth()
        windows = []
        signs = (+1, -1) if self.omega > 0 else (0,)
        for s in signs:
            if self.omega == 0:
                weight = 1.0 if self.parity == "cos" else 0.0
            elif self.parity == "sin":
                weight = s * np.exp(1j * s * theta) / 2j
            else:
                weight = np.exp(1j * s * theta) / 2.0
            if weight == 0 or self.amplitude == 0:
                continue
            lo, axes = [], []
            for l in range(d):
                ctr = s * self.omega if l == 0 else 0
                a = int(math.ceil((ctr - bw) * n[l]))
                b = int(math.floor((ctr + bw) * n[l]))
                idx = np.arange(a, b + 1)
                lo.append(a)
                axes.append(idx)
            xis = []
            for l in range(d):
                sh = [1] * d
                sh[l] = axes[l].size
                xis.append((axes[l] / n[l]).reshape(sh))
            shifted = [xis[0] - s * self.omega] + xis[1:]
            sym = annulus(np.ldexp(frequency_norm(shifted), -self.j))
            phase = 1.0
            for l in range(d):
                sh = [1] * d
                sh[l] = axes[l].size
                phase = phase * lattice_phase(axes[l], delta[l], n[l]).reshape(sh)
            # shift phase of the carrier relative to the box centre
            coef = (self.amplitude / box.volume) * weight * sym * phase
            block = np.zeros((d,) + coef.shape, dtype=complex)
            block[self.component] = coef
            windows.append((tuple(lo), block))
        return SpectralField(box, windows, d)


@dataclass(frozen=True)
class GridSpec:
    """Resolution and truncation controls shared by the patch and grid paths.

    Attributes
    ----------
    tail_tol : float
        Relative kernel tail level defining the truncated atom support.
    samples_per_wavelength : float
        Minimum samples per shortest carrier wavelength for dense rendering.
    oversample : float
        Grid points per lattice index span used by L^p quadrature.
    memory_cap : int or None
        Bytes allowed for a dense grid (``None``: environment / default).
    """

    tail_tol: float = 1e-6
    samples_per_wavelength: float = 4.0
    oversample: float = 6.0
    memory_cap: int | None = None

    def __post_init__(self):
        if not 0 < self.tail_tol < 1:
            raise ValueError("tail_tol must lie in (0, 1)")
        if self.samples_per_wavelength < 2:
            raise ValueError("samples_per_wavelength must be at least 2")
        if self.oversample < 1:
            raise ValueError("oversample must be at least 1")

    def cap(self) -> int:
        return memory_cap_bytes() if self.memory_cap is None else int(self.memory_cap)


def _box_for_atoms(atoms: Sequence[BumpAtom], tail_tol: float) -> Box:
    d = atoms[0].d
    lo = [min(a.center[l] - a.radius(tail_tol) for a in atoms) for l in range(d)]
    hi = [max(a.center[l] + a.radius(tail_tol) for a in atoms) for l in range(d)]
    return Box.around(lo, hi)


@dataclass
class Patch:
    """A periodic box holding the spectral field of a group of atoms."""

    atom_indices: tuple
    box: Box
    field: SpectralField


@dataclass
class PatchField:
    """Sum of bump atoms stored as disjoint periodic patches.

    Attributes
    ----------
    atoms : list of BumpAtom
    patches : list of Patch
        Atoms with intersecting truncated supports share a patch.
    overlaps : list of (int, int)
        Index pairs of atoms whose truncated supports intersect.
    spec : GridSpec
    d : int
    """

    atoms: list
    patches: list
    overlaps: list
    spec: GridSpec
    d: int

    @property
    def ncomp(self) -> int:
        return self.d

    def evaluate(self, points: np.ndarray, offset: Sequence[int] | None = None) -> np.ndarray:
        """Direct sum of atom values, shape ``(d, npts)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((self.d, points.shape[0]))
        off = offset if offset is not None else (0,) * self.d
        for a in self.atoms:
            out[a.component] += a.evaluate(points, off)
        return out

    def scaled(self, a: float) -> "PatchField":
        atoms = [at.scaled(a) for at in self.atoms]
        patches = [Patch(p.atom_indices, p.box, p.field.scaled(a)) for p in self.patches]
        return PatchField(atoms, patches, list(self.overlaps), self.spec, self.d)

    def fields(self) -> list:
        """Spectral fields of the patches."""
        return [p.field for p in self.patches]

    def map_fields(self, fn) -> "PatchField":
        """New patch collection with ``fn`` applied to every patch field."""
        patches = [Patch(p.atom_indices, p.box, fn(p.field)) for p in self.patches]
        return PatchField(self.atoms, patches, self.overlaps, self.spec, self.d)


def assemble_patchfield(atoms: Sequence[BumpAtom], spec: GridSpec = GridSpec()) -> PatchField:
    """Group atoms into patches and write their spectral coefficients.

    Atoms ``a, b`` overlap when ``|c_a - c_b| < r_a + r_b`` with ``r`` the
    truncation radius; overlap components become one patch.
    """
    atoms = list(atoms)
    if not atoms:
        raise ValueError("at least one atom is required")
    d = atoms[0].d
    if any(a.d != d for a in atoms):
        raise ValueError("atoms must share one dimension")
    n = len(atoms)
    radii = [a.radius(spec.tail_tol) for a in atoms]
    overlaps = []
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a in range(n):
        for b in range(a + 1, n):
            dist = math.sqrt(sum((x - y) ** 2 for x, y in zip(atoms[a].center, atoms[b].center)))
            if dist < radii[a] + radii[b]:
                overlaps.append((a, b))
                parent[find(b)] = find(a)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    patches = []
    for members in sorted(groups.values()):
        group = [atoms[i] for i in members]
        box = _box_for_atoms(group, spec.tail_tol)
        parts = [a.spectral(box) for a in group]
        wins = []
        for p in parts:
            wins.extend(p.windows)
        patches.append(Patch(tuple(members), box, SpectralField(box, wins, d).coalesced()))
    return PatchField(atoms, patches, overlaps, spec, d)


# -- dense grid fields ---------------------------------------------------------------
@dataclass
class GridField:
    """Real samples on the uniform grid of a periodic box.

    Attributes
    ----------
    box : Box
    values : ndarray, shape (ncomp, M_1, ..., M_d)
        Samples at ``x = box.center + y`` with ``y_l = L_l (i / M_l - 1/2)``.
    """

    box: Box
    values: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != self.box.d + 1:
            raise ValueError("values must have shape (ncomp, M_1, ..., M_d)")
        for m in self.values.shape[1:]:
            if m < 2 or m & (m - 1):
                raise ValueError("sample counts must be powers of two")

    @property
    def counts(self) -> tuple:
        return self.values.shape[1:]

    @property
    def ncomp(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.box.d

    @property
    def spacing(self) -> tuple:
        return tuple(L / m for L, m in zip(self.box.lengths, self.counts))

    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coords(self) -> list:
        return self.box.grid_coords(self.counts)

    # -- spectral view -----------------------------------------------------------
    def spectral(self) -> SpectralField:
        """Coefficients of the trigonometric interpolant as one window."""
        d = self.d
        M = self.counts
        coef = np.fft.fftn(self.values, axes=tuple(range(1, d + 1))) / np.prod(M)
        # undo the (-1)^m factor from the grid origin at y = -L/2
        for l in range(d):
            m = np.fft.fftfreq(M[l], 1.0 / M[l]).astype(np.int64)
            sh = [1] * (d + 1)
            sh[l + 1] = M[l]
            coef *= np.where(m % 2 == 0, 1.0, -1.0).reshape(sh)
        coef = np.fft.fftshift(coef, axes=tuple(range(1, d + 1)))
        off = tuple(-(m // 2) for m in M)
        return SpectralField(self.box, [(off, coef)], self.ncomp)

    @classmethod
    def from_spectral(cls, field: SpectralField, counts: Sequence[int]) -> "GridField":
        return cls(field.box, field.sample(counts, real=True))

    def roundtrip_error(self) -> float:
        """Relative max deviation of samples after transform and inverse."""
        back = self.spectral().sample(self.counts, real=True)
        scale = max(float(np.max(np.abs(self.values))), 1e-300)
        return float(np.max(np.abs(back - self.values)) / scale)

    def scaled(self, a: float) -> "GridField":
        return GridField(self.box, a * self.values, dict(self.meta))

    def __add__(self, other: "GridField") -> "GridField":
        if other.box != self.box or other.values.shape != self.values.shape:
            raise ValueError("grid fields are not compatible")
        return GridField(self.box, self.values + other.values, dict(self.meta))

    # -- binary layout -------------------------------------------------------------
    def dump(self, path: str | Path) -> Path:
        """Write ``path`` (binary) and ``path.json`` (sidecar).

        Binary layout: int64 header ``[d, ncomp, center_1..d, periods_1..d,
        counts_1..d]`` followed by float64 samples, component by component,
        with axis 1 varying fastest.
        """
        path = Path(path)
        header = np.array([self.d, self.ncomp, *self.box.center, *self.box.periods,
                           *self.counts], dtype="<i8")
        with open(path, "wb") as fh:
            fh.write(header.tobytes())
            for c in range(self.ncomp):
                fh.write(np.asarray(self.values[c], dtype="<f8").ravel(order="F").tobytes())
        sidecar = {
            "format": "nsinflation-grid",
            "version": 1,
            "dimension": self.d,
            "components": self.ncomp,
            "center": list(self.box.center),
            "periods": list(self.box.periods),
            "lengths": list(self.box.lengths),
            "counts": list(self.counts),
            "order": "axis-1-fastest",
            "coordinates": "x_l = center_l + L_l (i_l / M_l - 1/2), L_l = 2 pi periods_l",
            "meta": self.meta,
        }
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "GridField":
        raw = Path(path).read_bytes()
        d, ncomp = np.frombuffer(raw[:16], dtype="<i8")
        d, ncomp = int(d), int(ncomp)
        hdr = np.frombuffer(raw[16:16 + 24 * d], dtype="<i8")
        center, periods, counts = hdr[:d], hdr[d:2 * d], hdr[2 * d:]
        payload = np.frombuffer(raw[16 + 24 * d:], dtype="<f8")
        size = int(np.prod(counts))
        vals = np.stack([payload[c * size:(c + 1) * size].reshape(tuple(counts), order="F")
                         for c in range(ncomp)])
        meta = {}
        side = Path(str(path) + ".json")
        if side.exists():
            meta = json.loads(side.read_text()).get("meta", {})
        return cls(Box(tuple(center), tuple(periods)), vals.copy(), meta)


def _pow2_at_least(x: float) -> int:
    return 1 << max(1, int(math.ceil(math.log2(max(x, 2.0)))))


def _required_spacing(atoms: Sequence[BumpAtom], spec: GridSpec) -> float:
    """Sample spacing demanded by the carriers and envelopes."""
    h = math.inf
    for a in atoms:
        if a.omega > 0:
            wavelength = 2.0 * math.pi / (2.0 * a.omega)
            h = min(h, wavelength / spec.samples_per_wavelength)
        h = min(h, math.ldexp(1.0, -a.j) / 8.0)
        # never coarser than the Nyquist spacing of the full atom spectrum
        h = min(h, 0.9 * math.pi / (a.omega + a.bandwidth()))
    return h


def _carrier_samples(omega: int, center: int, period: int, count: int, parity: str):
    """``sin/cos(omega x_1)`` on the grid ``x_1 = center + L (i/M - 1/2)``, exactly reduced."""
    i = np.arange(count, dtype=np.int64)
    # omega * L (i/M - 1/2) = 2 pi * omega * period * (2 i - M) / (2 M)
    num = (omega * period * (2 * i - count)) % (2 * count)
    theta = exact_angle(omega * center)
    arg = theta + 2.0 * math.pi * num / (2 * count)
    return np.sin(arg) if parity == "sin" else np.cos(arg)


def _sample_atoms(atoms: Sequence[BumpAtom], box: Box, counts: Sequence[int]) -> np.ndarray:
    d = box.d
    vals = np.zeros((d,) + tuple(counts))
    coords = box.grid_coords(counts)
    prof = radial_profile(d)
    for a in atoms:
        if a.amplitude == 0:
            continue
        shift = [b - c for b, c in zip(box.center, a.center)]
        r2 = 0.0
        for l in range(d):
            sh = [1] * d
            sh[l] = counts[l]
            r2 = r2 + ((coords[l] + shift[l]) ** 2).reshape(sh)
        r = np.sqrt(r2)
        env = math.ldexp(1.0, d * a.j) * prof(np.ldexp(r, a.j))
        if a.omega == 0:
            car = np.ones(counts[0]) if a.parity == "cos" else np.zeros(counts[0])
        else:
            car = _carrier_samples(a.omega, box.center[0], box.periods[0], counts[0], a.parity)
        sh = [1] * d
        sh[0] = counts[0]
        vals[a.component] += a.amplitude * env * car.reshape(sh)
    return vals


def atom_to_grid(atom: BumpAtom, spec: GridSpec = GridSpec(), frame=None,
                 spacing: float | None = None) -> GridField:
    """Sample one atom on its own box by direct kernel evaluation.

    Parameters
    ----------
    atom : BumpAtom
    spec : GridSpec
    frame : LPFrame, optional
        Accepted for interface symmetry; the kernel is the frame's ``phi_j``.
    spacing : float, optional
        Requested sample spacing; must not exceed the carrier safety limit.
    """
    need = _required_spacing([atom], spec)
    if spacing is not None and spacing > need * (1 + 1e-12):
        raise ValueError(f"sample spacing {spacing:.6g} too coarse: at most {need:.6g} "
                         f"required ({spec.samples_per_wavelength:g} samples per carrier "
                         "wavelength)")
    h = need if spacing is None else spacing
    box = _box_for_atoms([atom], spec.tail_tol)
    counts = tuple(_pow2_at_least(L / h) for L in box.lengths)
    _check_memory(counts, 1, spec)
    vals = _sample_atoms([atom], box, counts)
    return GridField(box, vals, {"atoms": 1})


def _check_memory(counts, ncomp, spec: GridSpec):
    need = 8 * ncomp * int(np.prod(counts)) * 3  # samples plus transform workspace
    cap = spec.cap()
    if need > cap:
        raise MemoryCapExceeded(
            f"dense grid of {tuple(counts)} x {ncomp} components needs about "
            f"{need / 1024**2:.0f} MiB, above the cap of {cap / 1024**2:.0f} MiB; "
            f"use the patch path or raise {MEMORY_CAP_ENV}")


def global_box(field: PatchField) -> Box:
    """Box covering every patch of ``field``."""
    lo = [min(p.box.center[l] - math.pi * p.box.periods[l] for p in field.patches)
          for l in range(field.d)]
    hi = [max(p.box.center[l] + math.pi * p.box.periods[l] for p in field.patches)
          for l in range(field.d)]
    return Box.around(lo, hi)


def render_global(field: PatchField, spec: GridSpec | None = None,
                  counts: Sequence[int] | None = None, box: Box | None = None,
                  method: str = "spectral") -> GridField:
    """Dense oracle rendering of a patch field on one global box.

    Parameters
    ----------
    field : PatchField
        Field to render.
    spec : GridSpec, optional
        Resolution controls (defaults to the field's own).
    counts : sequence of int, optional
        Grid sizes; chosen automatically when omitted.
    box : Box, optional
        Global box; the smallest box covering every patch by default.
    method : {"spectral", "kernel"}
        ``"spectral"`` sums the closed-form coefficients of every atom on the
        global box (the exact periodisation, band-limited, so the grid is
        alias-free at the Nyquist-safe size).  ``"kernel"`` samples the
        real-space kernel directly at the spacing rule of ``spec``; it is
        independent of the coefficient formulas but carries a truncation
        floor from the box edges.
    """
    spec = field.spec if spec is None else spec
    if box is None:
        box = global_box(field) if field.patches else Box((0,) * field.d, (1,) * field.d)
    if method == "spectral":
        total = SpectralField.zeros(box, field.d)
        for atom in field.atoms:
            total = total + atom.spectral(box)
        total = total.coalesced()
        if counts is None:
            if total.is_zero():
                counts = (2,) * field.d
            else:
                lo, hi = total.index_bounds()
                counts = tuple(_pow2_at_least(2 * max(abs(a), abs(b)) + 2)
                               for a, b in zip(lo, hi))
        _check_memory(counts, field.d, spec)
        out = GridField.from_spectral(total, counts)
        return GridField(box, out.values, {"atoms": len(field.atoms), "method": method})
    if method != "kernel":
        raise ValueError(f"unknown render method {method!r}")
    if counts is None:
        h = _required_spacing(field.atoms, spec) if field.atoms else 1.0
        counts = tuple(_pow2_at_least(L / h) for L in box.lengths)
    _check_memory(counts, field.d, spec)
    vals = _sample_atoms(field.atoms, box, counts)
    return GridField(box, vals, {"atoms": len(field.atoms), "method": method})


def empty_patchfield(d: int, spec: GridSpec = GridSpec()) -> PatchField:
    """A patch field with no atoms (identically zero)."""
    return PatchField([], [], [], spec, d)
