"""Lebesgue, homogeneous Besov and modulation norms with error reports.

Fields may be :class:`~nsinflation.spectral.SpectralField`,
:class:`~nsinflation.field_rep.PatchField` or
:class:`~nsinflation.field_rep.GridField`.  Vector fields are measured with
the pointwise Euclidean norm across components.

L^p quadrature
    ``p = 2`` uses Parseval.  Otherwise the trigonometric interpolant is
    sampled on an oversampled box grid and ``|f|^p`` summed; the error then
    decays like the fourth power of the spacing (the kinks of ``|f|^p`` at
    zeros of ``f`` limit the order).  Fields whose dense grid would be too
    large but that consist of two conjugate carrier clusters are handled by a
    *two-scale* rule: ``f = 2 Re(exp(i kappa x_1) G)`` with ``G`` slowly
    varying, and ``|f|^p`` is averaged over the fast phase.  The method used
    is recorded in every report.

Patches are treated as disjoint: p-th powers add over patches.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .field_rep import GridField, PatchField
from .lp_frame import (CubePartition, LPFrame, build_cube_partition, chi1, frequency_norm,
                       lp_project)
from .spectral import SpectralField, fft_workers, sum_fields

__all__ = [
    "NormReport",
    "lp_norm",
    "lp_report",
    "besov_norm",
    "modulation_norm",
    "bilinear_constant_probe",
    "maximal_regularity_probe",
    "MaximalRegularityCurve",
    "default_oversample",
    "DENSE_POINT_LIMIT",
]

DENSE_POINT_LIMIT = 1 << 24


def default_oversample(d: int) -> float:
    """Grid points per spectral index span used for ``|f|^p`` quadrature."""
    return 6.0 if d == 2 else 3.0


@dataclass
class NormReport:
    """Result of a norm computation.

    Attributes
    ----------
    kind : str
        ``"Lp"``, ``"Besov"`` or ``"Modulation"``.
    total : float
        The norm.
    per_band : dict
        Contribution per band, cube or patch (keys are ints or tuples).
    truncation_estimate : float
        Estimate of the part of the norm missed outside the computed range.
    q : float
        Aggregation exponent: ``total = (sum per_band**q)**(1/q)``.
    params : dict
        Norm parameters (``s``, ``p``, ``q``, band range, ...).
    method : str
        Quadrature method used.
    warning : bool
        True when ``truncation_estimate`` exceeds 1% of ``total``.
    """

    kind: str
    total: float
    per_band: dict
    truncation_estimate: float = 0.0
    q: float = 1.0
    params: dict = dc_field(default_factory=dict)
    method: str = ""
    warning: bool = False

    def recompute_total(self) -> float:
        vals = np.array([self.per_band[k] for k in sorted(self.per_band)], dtype=float)
        if vals.size == 0:
            return 0.0
        if math.isinf(self.q):
            return float(vals.max())
        return float(np.sum(vals**self.q) ** (1.0 / self.q))

    def argmax(self):
        if not self.per_band:
            return None
        return max(sorted(self.per_band), key=lambda k: self.per_band[k])

    def to_json(self) -> str:
        def key(k):
            return list(k) if isinstance(k, tuple) else k
        data = {
            "kind": self.kind,
            "total": self.total,
            "per_band": [[key(k), self.per_band[k]] for k in sorted(self.per_band)],
            "truncation_estimate": self.truncation_estimate,
            "q": self.q if math.isfinite(self.q) else "inf",
            "params": self.params,
            "method": self.method,
            "warning": self.warning,
        }
        return json.dumps(data, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NormReport":
        data = json.loads(text)
        per = {}
        for k, v in data["per_band"]:
            per[tuple(k) if isinstance(k, list) else k] = v
        q = math.inf if data["q"] == "inf" else data["q"]
        return cls(data["kind"], data["total"], per, data["truncation_estimate"], q,
                   data["params"], data["method"], data["warning"])


# -- helpers ---------------------------------------------------------------------------------
def _spectral_parts(field) -> list:
    """The spectral fields making up ``field`` (one per patch)."""
    if isinstance(field, SpectralField):
        return [field]
    if isinstance(field, PatchField):
        return [p.field for p in field.patches]
    if isinstance(field, GridField):
        return [_grid_to_spectral(field)]
    raise TypeError(f"unsupported field type {type(field).__name__}")


def _grid_to_spectral(g: GridField, rel_floor: float = 1e-13) -> SpectralField:
    """Spectral view of a grid field cropped to coefficients above ``rel_floor``."""
    return g.spectral().trimmed(rel_floor)


def _euclid_pow(vals: np.ndarray, p: float) -> np.ndarray:
    if vals.shape[0] == 1:
        return np.abs(vals[0]) ** p
    return np.sum(np.abs(vals) ** 2, axis=0) ** (p / 2.0)


def _counts_for(f: SpectralField, oversample: float, shift0: int = 0) -> tuple:
    lo, hi = f.index_bounds()
    counts = []
    for l in range(f.d):
        a, b = lo[l], hi[l]
        if l == 0:
            a, b = a - shift0, b - shift0
        span = 2 * max(abs(int(a)), abs(int(b))) + 1
        m = int(math.ceil(oversample * span))
        m = sfft.next_fast_len(m + (m % 2))
        if m % 2:
            m += 1
        counts.append(max(m, 2))
    return tuple(counts)


def _dense_power_sum(f: SpectralField, p: float, oversample: float) -> tuple:
    counts = _counts_for(f, oversample)
    vals = f.sample(counts, real=True)
    cell = f.box.volume / np.prod(counts)
    if math.isinf(p):
        return float(np.max(np.sqrt(np.sum(vals**2, axis=0)))), "grid-max"
    return float(np.sum(_euclid_pow(vals, p)) * cell), "grid"


def _carrier_split(f: SpectralField):
    """Split windows into positive / negative / central groups along axis 1."""
    pos, neg, mid = [], [], []
    n1 = f.box.periods[0]
    for o, c in f.windows:
        a, b = o[0], o[0] + c.shape[1] - 1
        if a > 0:
            pos.append((o, c))
        elif b < 0:
            neg.append((o, c))
        else:
            mid.append((o, c))
    return pos, neg, mid, n1


def _two_scale_power_sum(f: SpectralField, p: float, oversample: float, nphase: int = 32):
    pos, neg, mid, n1 = _carrier_split(f.coalesced())
    if mid or not pos:
        raise ValueError("two-scale rule needs two conjugate carrier clusters")
    lo = min(o[0] for o, _ in pos)
    hi = max(o[0] + c.shape[1] - 1 for o, c in pos)
    kappa_idx = int(round(0.5 * (lo + hi) / n1)) * n1
    g = SpectralField(f.box, [((o[0] - kappa_idx,) + o[1:], c) for o, c in pos], f.ncomp)
    counts = _counts_for(g, oversample)
    G = g.sample(counts, real=False)
    cell = f.box.volume / np.prod(counts)
    if math.isinf(p):
        return float(2.0 * np.max(np.sqrt(np.sum(np.abs(G) ** 2, axis=0)))), "two-scale"
    acc = 0.0
    for th in np.arange(nphase) * (math.pi / nphase):
        vals = 2.0 * np.real(np.exp(1j * th) * G)
        acc += float(np.sum(_euclid_pow(vals, p)))
    return acc / nphase * cell, "two-scale"


def _power_sum(f: SpectralField, p: float, oversample: float, method: str = "auto"):
    """``int |f|^p`` over the box (or the max for ``p = inf``)."""
    if not f.windows:
        return 0.0, "empty"
    if p == 2 and method in ("auto", "parseval"):
        return float(np.sum(f.l2_squared())), "parseval"
    if method == "auto":
        counts = _counts_for(f, oversample)
        method = "grid" if np.prod(counts) * f.ncomp <= DENSE_POINT_LIMIT else "two-scale"
    if method == "grid":
        return _dense_power_sum(f, p, oversample)
    if method == "two-scale":
        return _two_scale_power_sum(f, p, oversample)
    raise ValueError(f"unknown quadrature method {method!r}")


# -- L^p ------------------------------------------------------------------------------------
def lp_report(field, p: float, oversample: float | None = None, method: str = "auto") -> NormReport:
    """``||f||_p`` with per-patch contributions."""
    p = float(p)
    if not (p >= 1):
        raise ValueError("p must lie in [1, inf]")
    parts = _spectral_parts(field)
    d = parts[0].d if parts else getattr(field, "d", 2)
    os_ = default_oversample(d) if oversample is None else oversample
    per, methods = {}, set()
    for i, f in enumerate(parts):
        val, m = _power_sum(f, p, os_, method)
        methods.add(m)
        per[i] = val if math.isinf(p) else val ** (1.0 / p)
    q = math.inf if math.isinf(p) else p
    rep = NormReport("Lp", 0.0, per, 0.0, q, {"p": p}, "+".join(sorted(methods)))
    rep.total = rep.recompute_total()
    return rep


def lp_norm(field, p: float, oversample: float | None = None, method: str = "auto") -> float:
    """``||f||_{L^p}``; see :func:`lp_report`."""
    return lp_report(field, p, oversample, method).total


# -- Besov ----------------------------------------------------------------------------------
def _outside_energy(parts, frame: LPFrame, bands) -> tuple:
    inside = 0.0
    outside = 0.0
    for f in parts:
        def rest(xis):
            r = frequency_norm(xis)
            return 1.0 - sum(frame.symbol(j, r) for j in bands)
        outside += float(np.sum(f.multiply_symbol(rest).l2_squared()))
        inside += float(np.sum(f.l2_squared()))
    return inside, outside


def besov_norm(field, s: float, p: float, q: float, bands: Sequence[int] | None = None,
               frame: LPFrame | None = None, oversample: float | None = None,
               method: str = "auto") -> NormReport:
    """Homogeneous Besov norm ``(sum_j (2^{sj} ||phi_j * f||_p)^q)^{1/q}``.

    Parameters
    ----------
    field : field
    s, p, q : float
        Regularity, integrability and summability indices.
    bands : sequence of int, optional
        Bands to include (default: all bands of ``frame``).
    frame : LPFrame
        Dyadic frame; ``bands`` must lie within it.

    Notes
    -----
    ``truncation_estimate`` scales the total by the relative L^2 spectral
    mass of ``f`` not covered by the band symbols; the report is flagged
    when it exceeds 1% of the total.
    """
    if frame is None:
        raise ValueError("a frame is required")
    bands = list(frame.bands) if bands is None else [int(j) for j in bands]
    for j in bands:
        frame.check_band(j)
    parts = _spectral_parts(field)
    d = frame.d
    os_ = default_oversample(d) if oversample is None else oversample
    per, methods = {}, set()
    for j in bands:
        acc = 0.0
        for f in parts:
            piece = lp_project(f, j, frame)
            val, m = _power_sum(piece, p, os_, method)
            if piece.windows:
                methods.add(m)
            acc = max(acc, val) if math.isinf(p) else acc + val
        norm_j = acc if math.isinf(p) else acc ** (1.0 / p)
        per[j] = math.ldexp(norm_j, 0) * 2.0 ** (s * j)
    rep = NormReport("Besov", 0.0, per, 0.0, q,
                     {"s": s, "p": p, "q": q, "bands": [min(bands), max(bands)] if bands else []},
                     "+".join(sorted(methods)))
    rep.total = rep.recompute_total()
    inside, outside = _outside_energy(parts, frame, bands)
    rel = math.sqrt(outside / inside) if inside > 0 else 0.0
    rep.truncation_estimate = rep.total * rel
    rep.warning = rep.truncation_estimate > 0.01 * rep.total
    if rep.warning:
        warnings.warn(f"Besov truncation estimate {rep.truncation_estimate:.3g} exceeds 1% of "
                      f"the total {rep.total:.3g}; widen the band range", RuntimeWarning)
    return rep


# -- modulation M_{3,1} ------------------------------------------------------------------------
def _cube_weights(periods) -> list:
    """``chi1(r / n)`` for ``r = 0..2n`` on each axis (identical for every cube)."""
    return [chi1(np.arange(2 * n + 1) / n) for n in periods]


def _cube_pieces(f: SpectralField, part: CubePartition | None):
    """Yield ``(k, block)`` with block the demodulated chi-weighted coefficients."""
    n = f.box.periods
    d = f.d
    wts = _cube_weights(n)
    wfull = wts[0]
    for l in range(1, d):
        wfull = np.multiply.outer(wfull, wts[l])
    for o, c in f.coalesced().windows:
        shape = c.shape[1:]
        ranges = []
        for l in range(d):
            first = o[l]
            last = o[l] + shape[l] - 1
            # cube k meets the window if (k n, (k+2) n) intersects [first, last]
            kmin = int(math.floor(first / n[l])) - 1
            kmax = int(math.floor(last / n[l]))
            ranges.append(range(kmin, kmax + 1))
        for k in np.array(np.meshgrid(*ranges, indexing="ij")).reshape(d, -1).T:
            k = tuple(int(x) for x in k)
            if part is not None and not part.contains(k):
                yield k, None, (o, c)
                continue
            block = np.zeros((f.ncomp,) + tuple(2 * nl + 1 for nl in n), dtype=complex)
            src, dst = [], []
            for l in range(d):
                a = k[l] * n[l]
                lo = max(a, o[l])
                hi = min(a + 2 * n[l], o[l] + shape[l] - 1)
                if lo > hi:
                    break
                src.append(slice(lo - o[l], hi - o[l] + 1))
                dst.append(slice(lo - a, hi - a + 1))
            else:
                block[(slice(None),) + tuple(dst)] = c[(slice(None),) + tuple(src)]
                block *= wfull
                yield k, block, None


def _block_l3(blocks: list, box, oversample: float, p: float = 3.0) -> np.ndarray:
    """L^p norms of demodulated cube pieces, batched through one FFT."""
    if not blocks:
        return np.zeros(0)
    n = box.periods
    d = box.d
    counts = []
    for nl in n:
        m = sfft.next_fast_len(int(math.ceil(oversample * (2 * nl + 1))))
        counts.append(m + (m % 2))
    stack = np.stack(blocks)  # (B, ncomp, 2n+1, ...)
    B, ncomp = stack.shape[:2]
    grid = np.zeros((B, ncomp) + tuple(counts), dtype=complex)
    idx = [np.arange(-nl, nl + 1) % m for nl, m in zip(n, counts)]
    grid[(slice(None), slice(None)) + np.ix_(*idx)] = stack
    vals = sfft.ifftn(grid, axes=tuple(range(2, d + 2)), norm="forward", workers=fft_workers())
    cell = box.volume / np.prod(counts)
    mag2 = np.sum(np.abs(vals) ** 2, axis=1)
    return (np.sum(mag2 ** (p / 2.0), axis=tuple(range(1, d + 1))) * cell) ** (1.0 / p)


def modulation_norm(field, part: CubePartition | None = None, oversample: float | None = None,
                    energy_floor: float = 1e-24, batch: int = 64) -> NormReport:
    """``sum_k ||F^{-1}[chi(xi - k) fhat]||_3`` with per-cube contributions.

    Cubes whose coefficient energy is below ``energy_floor`` times the
    field energy are skipped; their L^2 mass and any mass outside ``part``
    are accumulated in ``truncation_estimate`` (as an L^2 proxy).
    """
    parts = _spectral_parts(field)
    d = parts[0].d if parts else 2
    os_ = (2.0 if d == 2 else 1.5) if oversample is None else oversample
    per: dict = {}
    skipped = 0.0
    outside = 0.0
    for f in parts:
        energy = float(np.sum(f.l2_squared()))
        if energy == 0:
            continue
        pending_k, pending_b = [], []

        def flush():
            if not pending_b:
                return
            norms = _block_l3(pending_b, f.box, os_)
            for kk, v in zip(pending_k, norms):
                per[kk] = float((per.get(kk, 0.0) ** 3 + v**3) ** (1.0 / 3.0))
            pending_k.clear()
            pending_b.clear()

        for k, block, excess in _cube_pieces(f, part):
            if block is None:
                o, c = excess
                outside += float(np.sum(np.abs(c) ** 2)) * f.box.volume
                continue
            e = float(np.sum(np.abs(block) ** 2)) * f.box.volume
            if e <= energy_floor * energy:
                skipped += e
                continue
            pending_k.append(k)
            pending_b.append(block)
            if len(pending_b) >= batch:
                flush()
        flush()
    rep = NormReport("Modulation", 0.0, per, math.sqrt(skipped + outside), 1.0,
                     {"p": 3, "q": 1}, "cube-grid")
    rep.total = rep.recompute_total()
    rep.warning = rep.truncation_estimate > 0.01 * rep.total if rep.total > 0 else False
    return rep


# -- probes ---------------------------------------------------------------------------------------
def _as_single(field) -> SpectralField:
    parts = _spectral_parts(field)
    if len(parts) != 1:
        raise ValueError("probes expect a field on a single box")
    return parts[0]


def bilinear_constant_probe(f, g, part: CubePartition | None = None,
                            oversample: float | None = None) -> float:
    """``||f g||_M / (||f||_M ||g||_M)`` with the product formed exactly in frequency."""
    from .spectral import product

    f, g = _as_single(f), _as_single(g)
    nf = modulation_norm(f, part, oversample).total
    ng = modulation_norm(g, part, oversample).total
    if nf == 0 or ng == 0:
        raise ZeroDivisionError("bilinear probe needs non-zero factors")
    return modulation_norm(product(f, g), part, oversample).total / (nf * ng)


@dataclass
class MaximalRegularityCurve:
    """Normalised ``||L e^{tL} f||_{L^1(0,T; M)} / ||f||_M`` against ``T``.

    Attributes
    ----------
    T : ndarray
    values : ndarray
    fit_a : float
        Least-squares coefficient of the model ``a sqrt(log(e + T))``.
    fit_residual : float
        Relative L^2 residual of the fit.
    """

    T: np.ndarray
    values: np.ndarray
    fit_a: float
    fit_residual: float


def maximal_regularity_probe(f, T_list: Sequence[float], params=None, quad=None,
                             part: CubePartition | None = None,
                             oversample: float | None = None) -> MaximalRegularityCurve:
    """Integrate ``t -> ||L e^{tL} f||_M`` over ``[0, T]`` for each ``T`` in ``T_list``.

    ``L`` is the Lame operator for ``d``-component fields and ``kappa Lap``
    for scalars.  The time integral uses Gauss--Legendre panels between
    consecutive ``T`` values (geometrically subdivided toward ``t = 0``),
    doubled until the relative change is below ``quad.rel_tol``.
    """
    from .multipliers import (PhysicalParams, QuadratureError, QuadratureSpec,
                              apply_generator, apply_heat, apply_lame)

    params = PhysicalParams() if params is None else params
    quad = QuadratureSpec(nodes=6, max_refine=6, rel_tol=1e-4) if quad is None else quad
    f = _as_single(f)
    T = np.asarray(sorted(float(t) for t in T_list))
    if np.any(T <= 0):
        raise ValueError("times must be positive")
    base = modulation_norm(f, part, oversample).total
    if base == 0:
        return MaximalRegularityCurve(T, np.zeros_like(T), 0.0, 0.0)
    kind = "lame" if f.ncomp == f.d else "heat"
    Lf = apply_generator(f, kind, params)
    cache: dict = {}

    def integrand(t):
        if t not in cache:
            ev = apply_lame(Lf, t, params) if kind == "lame" else apply_heat(Lf, t, params)
            cache[t] = modulation_norm(ev, part, oversample).total
        return cache[t]

    x, w = np.polynomial.legendre.leggauss(quad.nodes)

    def panel_integral(a, b, panels):
        edges = np.geomspace(max(a, 1e-300), b, panels + 1) if a > 0 else \
            np.concatenate([[0.0], np.geomspace(b * 2.0**-panels, b, panels)])
        tot = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            tot += half * sum(wi * integrand(mid + half * xi) for xi, wi in zip(x, w))
        return tot

    values = []
    acc = 0.0
    prev_T = 0.0
    for t_end in T:
        panels = 2
        prev = panel_integral(prev_T, t_end, panels)
        for _ in range(quad.max_refine):
            panels *= 2
            cur = panel_integral(prev_T, t_end, panels)
            if abs(cur - prev) <= quad.rel_tol * max(abs(cur), 1e-300):
                break
            prev = cur
        else:
            raise QuadratureError("maximal-regularity quadrature did not converge",
                                  abs(cur - prev))
        acc += cur
        values.append(acc / base)
        prev_T = t_end
    values = np.array(values)
    model = np.sqrt(np.log(math.e + T))
    a = float(np.dot(values, model) / np.dot(model, model))
    resid = float(np.linalg.norm(values - a * model) / max(np.linalg.norm(values), 1e-300))
    return MaximalRegularityCurve(T, values, a, resid)
