"""The norm-inflation data family and the quantities that certify it.

The initial velocity of the family is a sum of dyadic bumps placed far apart
along the first axis and modulated by a common carrier,

.. math::

    u_{0,N}(x) = R N^{-1/d} \\sum_{j=-\\lfloor \\delta N \\rfloor}^{0}
        2^{-(d-1) j} \\phi_j(x - 2^{|j| + 2N} e_1) \\sin(2^N x_1) \\, e_1,

with ``R = 1 / log N``.  This module builds the family as a
:class:`~nsinflation.field_rep.PatchField`, measures its critical Besov norm,
evaluates the cross-term sums that couple different bumps, and computes the
low-frequency size of the quadratic model term at the observation time
``T_N = eps0 2^{-2N}``.

Cross terms are computed in real space.  Products of two bumps are
concentrated near the bump centres (the kernels decay like
``exp(-c sqrt(r))``, so the product is largest at the end points of the
segment joining the centres); the relevant regions are located with the
monotone envelope of ``|phi0|`` and sampled on boxes whose spacing resolves
the band limit of the integrand, which makes the Fourier and trapezoid
steps exact up to the truncation level.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field as dc_field
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .field_rep import BumpAtom, GridSpec, PatchField, assemble_patchfield
from .lp_frame import LPFrame, build_lp_frame, frequency_norm
from .multipliers import (PhysicalParams, QuadratureSpec, _grad_energy, apply_lame, duhamel)
from .norms import besov_norm
from .profile import RadialTable, annulus, cutoff, log_envelope, radial_profile
from .spectral import Box, SpectralField, fft_workers, product

__all__ = [
    "DataFamilyParams",
    "CrossTermReport",
    "CrossTermSweep",
    "Theta2LowerReport",
    "build_initial_data",
    "initial_besov_check",
    "cross_term_report",
    "cross_term_sweep",
    "model_term",
    "diagonal_profile_norm",
    "theta2_lower_report",
]

LN2 = math.log(2.0)
#: kernel level at which convolution boxes are padded against wrap-around
PAD_TOL = 1e-8


# -- parameters ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DataFamilyParams:
    """Parameters of the data family.

    Attributes
    ----------
    N : int
        Frequency exponent (carrier ``2^N``), at least 2.
    delta : float
        Fraction of scales used, ``0 < delta < 1``.
    d : int
        Dimension, 2 or 3.
    eps0 : float
        Observation-time coefficient, ``0 < eps0 <= 0.5``.
    R : float, optional
        Amplitude; defaults to ``1 / log N``.  Passing ``R = 0`` gives the
        zero family.
    """

    N: int
    delta: float
    d: int = 2
    eps0: float = 0.1
    R: float | None = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if not 0.0 < self.eps0 <= 0.5:
            raise ValueError(f"eps0 must lie in (0, 0.5], got {self.eps0}")
        if self.R is None:
            object.__setattr__(self, "R", 1.0 / math.log(self.N))
        if not (self.R >= 0.0 and math.isfinite(self.R)):
            raise ValueError(f"R must be finite and non-negative, got {self.R}")

    @property
    def T_N(self) -> float:
        """Observation time ``eps0 2^{-2N}``."""
        return math.ldexp(self.eps0, -2 * self.N)

    @property
    def n_scales(self) -> int:
        """``floor(delta N)``; bumps use ``j = -n_scales .. 0``."""
        return int(math.floor(self.delta * self.N + 1e-12))

    @property
    def scales(self) -> range:
        return range(-self.n_scales, 1)

    @property
    def certified(self) -> bool:
        """Whether ``delta < 1/2`` (the regime where every cross-term envelope decays)."""
        return self.delta < 0.5

    def center(self, j: int) -> int:
        """First coordinate ``2^{|j| + 2N}`` of the bump of scale ``j``."""
        return 1 << (abs(j) + 2 * self.N)

    def amplitude(self, j: int) -> float:
        """``R N^{-1/d} 2^{-(d-1) j}``."""
        return self.R * self.N ** (-1.0 / self.d) * 2.0 ** (-(self.d - 1) * j)

    def with_(self, **kw) -> "DataFamilyParams":
        data = asdict(self)
        data.update(kw)
        if "N" in kw and "R" not in kw:
            data["R"] = None
        return DataFamilyParams(**data)


def build_initial_data(params: DataFamilyParams, spec: GridSpec = GridSpec()) -> PatchField:
    """The family member ``u_{0,N}`` as a patch field (only component 0 is non-zero).

    The density and temperature data of the family are identically zero and
    therefore not represented.
    """
    d = params.d
    atoms = []
    for j in params.scales:
        center = (params.center(j),) + (0,) * (d - 1)
        atoms.append(BumpAtom(j, center, params.amplitude(j), 1 << params.N, "sin", 0, d))
    return assemble_patchfield(atoms, spec)


def _besov_bands(params: DataFamilyParams) -> tuple[int, int]:
    return -params.n_scales - 2, params.N + 2


def initial_besov_check(params: DataFamilyParams, spec: GridSpec = GridSpec(),
                        oversample: float | None = None) -> tuple[float, float]:
    """Critical Besov norm ``||u_{0,N}||_{B^0_{d,1}}`` and its ratio to ``R delta^{1/d}``.

    Bands ``-floor(delta N) - 2 .. N + 2`` are summed; they cover the whole
    spectrum of the data (two clusters of radius at most 2 around
    ``+-2^N e_1``).
    """
    if params.R == 0:
        return 0.0, 0.0
    u0 = build_initial_data(params, spec)
    lo, hi = _besov_bands(params)
    frame = build_lp_frame(lo, hi, params.d)
    value = besov_norm(u0, 0.0, params.d, 1.0, None, frame, oversample).total
    return value, value / (params.R * params.delta ** (1.0 / params.d))


# -- kernel evaluation helpers -------------------------------------------------------------
def _phi(d: int, j: int, r: np.ndarray) -> np.ndarray:
    """``phi_j(r) = 2^{dj} phi0(2^j r)`` through a local radial table."""
    s = np.ldexp(np.abs(np.asarray(r, dtype=float)), j)
    if s.size == 0:
        return np.zeros(s.shape)
    if s.size <= 2048:
        return np.ldexp(radial_profile(d)(s), d * j)
    table = RadialTable(d, float(s.min()), float(s.max()))
    return np.ldexp(table(s), d * j)


def _log_phi_env(d: int, j: int, r: np.ndarray) -> np.ndarray:
    """Log of a monotone envelope of ``|phi_j|`` at radius ``r``."""
    return d * j * LN2 + log_envelope(d)(np.ldexp(np.abs(r), j))


def _radius(d: int, j: int, tol: float) -> float:
    """Radius beyond which ``|phi_j| <= tol * max |phi_j|``."""
    return math.ldexp(radial_profile(d).truncation_radius(tol), -j)


@dataclass(frozen=True)
class _Factor:
    """One radial factor ``phi_j(x - c e_1)^power`` of a product."""

    j: int
    c: float
    power: int = 1


def _active_intervals(d: int, factors: Sequence[_Factor], rel_tol: float,
                      merge_gap: float) -> list[tuple[float, float]]:
    """First-axis intervals where the product envelope exceeds ``rel_tol`` of its maximum."""
    reach = max(_radius(d, f.j, rel_tol) for f in factors)
    lo = min(f.c for f in factors) - reach
    hi = max(f.c for f in factors) + reach
    step = 0.25 * min(math.ldexp(1.0, -f.j) for f in factors)
    n = int(math.ceil((hi - lo) / step)) + 1
    x = lo + step * np.arange(n)
    logv = np.zeros(n)
    for f in factors:
        logv += f.power * _log_phi_env(d, f.j, x - f.c)
    keep = logv >= logv.max() + math.log(rel_tol)
    idx = np.flatnonzero(keep)
    runs = []
    start = prev = idx[0]
    for i in idx[1:]:
        if (i - prev) * step > merge_gap:
            runs.append((x[start] - step, x[prev] + step))
            start = i
        prev = i
    runs.append((x[start] - step, x[prev] + step))
    return runs


def _fast_even(m: float) -> int:
    m = max(int(math.ceil(m)), 2)
    m = sfft.next_fast_len(m + (m % 2))
    return m + (m % 2)


def _conv_norm_boxes(d: int, jconv: int, factors: Sequence[_Factor], band: float,
                     rel_tol: float, global_box: bool = False) -> float:
    """``||phi_jconv * (prod factors)||_{L^d(R^d)}`` by boxed sampling and FFT.

    The product is sampled on boxes around the regions where it is
    non-negligible, padded by the convolution kernel radius; the spacing
    resolves the product band limit ``band`` so the discrete transform is
    exact up to the truncation level.
    """
    pad = _radius(d, jconv, max(rel_tol, PAD_TOL))
    reach = max(_radius(d, f.j, rel_tol) for f in factors)
    if global_box:
        lo = min(f.c for f in factors) - reach
        hi = max(f.c for f in factors) + reach
        runs = [(lo, hi)]
        perp_half = [reach]
    else:
        runs = _active_intervals(d, factors, rel_tol, 2.0 * pad)
        perp_half = [min(0.5 * (b - a), reach) for a, b in runs]
    bw_conv = math.ldexp(2.0, jconv)
    os_norm = 1.0 if d == 2 else 4.0
    h = math.pi / max(band / 0.9, os_norm * bw_conv)
    pieces = []
    for (a, b), ph in zip(runs, perp_half):
        lengths = [b - a + 2 * pad] + [2 * (ph + pad)] * (d - 1)
        counts = [_fast_even(L / h) for L in lengths]
        axes = [a - pad + h * np.arange(counts[0])]
        for l in range(1, d):
            axes.append(-(ph + pad) + h * np.arange(counts[l]))
        mesh = np.meshgrid(*axes, indexing="ij", sparse=True)
        perp2 = sum(m**2 for m in mesh[1:])
        vals = 1.0
        for f in factors:
            r = np.sqrt((mesh[0] - f.c) ** 2 + perp2)
            vals = vals * _phi(d, f.j, r) ** f.power
        scale = float(np.max(np.abs(vals)))
        if scale == 0.0:
            continue
        spec_ = sfft.rfftn(vals / scale, workers=fft_workers())
        freqs = [2 * math.pi * np.fft.fftfreq(m, h) for m in counts[:-1]]
        freqs.append(2 * math.pi * np.fft.rfftfreq(counts[-1], h))
        xis = np.meshgrid(*freqs, indexing="ij", sparse=True)
        sym = annulus(np.ldexp(frequency_norm(xis), -jconv))
        spec_ *= sym
        g = sfft.irfftn(spec_, s=counts, workers=fft_workers())
        pieces.append((scale, float(np.sum(np.abs(g) ** d) * h**d)))
    if not pieces:
        return 0.0
    top = max(s for s, _ in pieces)
    total = sum((s / top) ** d * v for s, v in pieces)
    return top * total ** (1.0 / d)


def _radial_conv_values(d: int, jconv: int, k: int, ck: float, radii: np.ndarray,
                        toward: float, rel_tol: float) -> np.ndarray:
    """``g(r) = (phi_jconv * phi_k(. - c_k)^2)(c_k + r e)`` for radii ``r``.

    ``g`` is radial about ``c_k``; points are taken on the first axis in
    direction ``toward`` (+1 or -1).  The integral over ``y`` is a trapezoid
    sum with spacing below ``2 pi / B``, ``B`` the band limit of
    ``y -> phi_jconv(x - y) phi_k(y)^2``, which is exact for band-limited
    integrands; the sum runs over the boxes where the integrand envelope is
    non-negligible.
    """
    radii = np.asarray(radii, dtype=float)
    band = math.ldexp(2.0, jconv) + math.ldexp(4.0, k)
    h = 0.9 * 2.0 * math.pi / band
    out = np.zeros(radii.size)
    xs = ck + toward * radii
    # union of the active regions over all target points
    regions = []
    for x in (float(xs.min()), float(xs.max())):
        regions.extend(_active_intervals(d, [_Factor(jconv, x), _Factor(k, ck, 2)],
                                         rel_tol, 0.0))
    regions.sort()
    merged = [list(regions[0])]
    for a, b in regions[1:]:
        if a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    reach_perp = max(_radius(d, jconv, rel_tol), _radius(d, k, math.sqrt(rel_tol)))
    terms = []
    for a, b in merged:
        ph = min(0.5 * (b - a) + abs(float(xs.max() - xs.min())), reach_perp)
        n1 = _fast_even((b - a) / h)
        nperp = _fast_even(2 * ph / h)
        y1 = a + h * (np.arange(n1) + 0.5)
        yp = -ph + h * (np.arange(nperp) + 0.5)
        if d == 2:
            Y1, Y2 = np.meshgrid(y1, yp, indexing="ij")
            perp2 = Y2**2
        else:
            Y1, Y2, Y3 = np.meshgrid(y1, yp, yp, indexing="ij")
            perp2 = Y2**2 + Y3**2
        hk = _phi(d, k, np.sqrt((Y1 - ck) ** 2 + perp2)) ** 2
        mask = hk != 0
        y1m, p2m, hm = Y1[mask], perp2[mask], hk[mask]
        rr = np.sqrt((xs[:, None] - y1m[None, :]) ** 2 + p2m[None, :])
        terms.append(_phi(d, jconv, rr) @ hm * h**d)
    for t in terms:
        out += t
    return out


def _ball_integral(d: int, g_of_r, D: float, rho: float, p: float, nodes: int = 16) -> float:
    """``||g(|x - c_k|)||_{L^p(B(c, rho))}`` with ``|c - c_k| = D``.

    Uses the measure of the sphere ``|x - c_k| = r`` inside the ball and the
    substitution ``r = D - rho cos(theta)`` (or plain radial quadrature when
    ``D = 0``).
    """
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    if D == 0.0:
        r = 0.5 * rho * (xg + 1.0)
        w = 0.5 * rho * wg
        sphere = 2.0 * math.pi if d == 2 else 4.0 * math.pi
        vals = g_of_r(r)
        scale = float(np.max(np.abs(vals))) or 1.0
        integral = sphere * np.sum(w * np.abs(vals / scale) ** p * r ** (d - 1))
        return scale * float(integral) ** (1.0 / p)
    if rho >= D:
        raise ValueError("ball must not contain the radial centre")
    theta = 0.5 * math.pi * (xg + 1.0)
    wt = 0.5 * math.pi * wg
    r = D - rho * np.cos(theta)
    dr = rho * np.sin(theta) * wt
    cosang = np.clip((r**2 + D**2 - rho**2) / (2 * r * D), -1.0, 1.0)
    if d == 2:
        meas = 2.0 * r * np.arccos(cosang)
    else:
        meas = 2.0 * math.pi * r**2 * (1.0 - cosang)
    vals = g_of_r(r)
    scale = float(np.max(np.abs(vals)))
    if scale == 0.0:
        return 0.0
    return scale * float(np.sum(dr * meas * np.abs(vals / scale) ** p)) ** (1.0 / p)


def _check_carrier_separation(params: DataFamilyParams) -> None:
    """``sin^2`` may be replaced by its mean when the doubled carrier clears every band."""
    if 2.0 ** (params.N + 1) <= 3 * 2.0 + 2.0:
        raise ValueError("carrier too low for the mean-value reduction (need N >= 3)")


# -- cross terms ----------------------------------------------------------------------------
@dataclass
class CrossTermReport:
    """Cross-term sums between distinct bumps of one family member.

    Attributes
    ----------
    params : DataFamilyParams
    sum_pair : float
        ``sum_j sum_{k != j} 2^{-j} 2^{-(d-1)j} 2^{-(d-1)k}
        ||phi_j * (phi_j phi_k sin^2)||_d`` (bump ``j`` times bump ``k``).
    sum_triple : float
        ``sum_j sum_{k != j} sum_{l != j, l != k} 2^{-j} 2^{-(d-1)(k+l)}
        ||phi_j * (phi_k phi_l sin^2)||_d``; the ``l = k`` terms are added
        when ``include_diagonal`` is set.
    sum_far : float
        ``sum_j sum_{k != j} 2^{-j} 2^{-2(d-1)k} ||phi_j * (phi_k^2 sin^2)||_{L^d(A_j)}``
        with ``A_j`` the ball of radius ``2^{-j}`` about the centre of bump ``j``.
    predicted_envelopes : dict
        ``C N 2^{-d(1-delta)N}``, ``C N^2 2^{-d(1-delta)N}`` and
        ``C 2^{-d(1-2 delta)N}`` with the constants fitted over a sweep.
    terms : dict
        Individual weighted terms keyed by kind and scale indices.
    include_diagonal : bool
    """

    params: DataFamilyParams
    sum_pair: float = 0.0
    sum_triple: float = 0.0
    sum_far: float = 0.0
    predicted_envelopes: dict = dc_field(default_factory=dict)
    terms: dict = dc_field(default_factory=dict)
    include_diagonal: bool = False

    def __post_init__(self):
        if min(self.sum_pair, self.sum_triple, self.sum_far) < 0:
            raise ValueError("cross-term sums are non-negative")

    def total(self) -> float:
        """Cross contribution in the units of the diagonal term: ``2 pair + triple + far``."""
        return 2.0 * self.sum_pair + self.sum_triple + self.sum_far

    def to_json(self) -> str:
        return json.dumps({
            "params": asdict(self.params), "sum_pair": self.sum_pair,
            "sum_triple": self.sum_triple, "sum_far": self.sum_far,
            "predicted_envelopes": self.predicted_envelopes,
            "terms": {"|".join(map(str, k)): v for k, v in self.terms.items()},
            "include_diagonal": self.include_diagonal})


def envelope_shapes(N: int, delta: float, d: int) -> dict:
    """Decay shapes (without constants) bounding the three cross-term sums."""
    return {"pair": N * 2.0 ** (-d * (1 - delta) * N),
            "triple": N**2 * 2.0 ** (-d * (1 - delta) * N),
            "far": 2.0 ** (-d * (1 - 2 * delta) * N)}


def cross_term_report(params: DataFamilyParams, rel_tol: float = 1e-9,
                      include_diagonal: bool = False, global_box: bool = False) -> CrossTermReport:
    """Evaluate the three cross-term sums of one family member.

    Parameters
    ----------
    params : DataFamilyParams
    rel_tol : float
        Relative truncation level for the sampled regions.
    include_diagonal : bool
        Include ``l = k`` in the triple sum.  Those terms do not decay with
        ``N`` (they are single-bump self-interactions), so the decaying
        bound only applies to the off-diagonal sum.
    global_box : bool
        Sample every product on one box covering all factors instead of the
        located regions (oracle path; slower).

    Notes
    -----
    The carrier factor ``sin^2(2^N x_1) = (1 - cos(2^{N+1} x_1)) / 2`` is
    reduced to its mean: the oscillating half has spectrum near
    ``+-2^{N+1} e_1``, outside the support of every ``phi_j`` with
    ``j <= 0`` once ``N >= 3``.
    """
    d = params.d
    rep = CrossTermReport(params, include_diagonal=include_diagonal)
    scales = list(params.scales)
    if params.R == 0 or len(scales) < 2:
        return rep
    _check_carrier_separation(params)
    c = {j: float(params.center(j)) for j in scales}
    for j in scales:
        for k in scales:
            if k == j:
                continue
            band = math.ldexp(2.0, j) + math.ldexp(2.0, k)
            nrm = 0.5 * _conv_norm_boxes(d, j, [_Factor(j, c[j]), _Factor(k, c[k])], band,
                                         rel_tol, global_box)
            w = 2.0 ** (-j - (d - 1) * j - (d - 1) * k)
            rep.terms[("pair", j, k)] = w * nrm
            # far-field self-interaction of bump k seen on the ball A_j
            D = abs(c[k] - c[j])
            rho = math.ldexp(1.0, -j)
            toward = math.copysign(1.0, c[j] - c[k])
            g = lambda r, j=j, k=k, toward=toward: _radial_conv_values(
                d, j, k, c[k], r, toward, rel_tol)
            far = 0.5 * _ball_integral(d, g, D, rho, d)
            rep.terms[("far", j, k)] = 2.0 ** (-j - 2 * (d - 1) * k) * far
            for l in scales:
                if l == j or (l == k and not include_diagonal):
                    continue
                band = math.ldexp(2.0, k) + math.ldexp(2.0, l)
                factors = ([_Factor(k, c[k], 2)] if l == k
                           else [_Factor(k, c[k]), _Factor(l, c[l])])
                nrm = 0.5 * _conv_norm_boxes(d, j, factors, band, rel_tol, global_box)
                rep.terms[("triple", j, k, l)] = 2.0 ** (-j - (d - 1) * (k + l)) * nrm
    rep.sum_pair = float(sum(v for key, v in rep.terms.items() if key[0] == "pair"))
    rep.sum_far = float(sum(v for key, v in rep.terms.items() if key[0] == "far"))
    rep.sum_triple = float(sum(v for key, v in rep.terms.items() if key[0] == "triple"))
    return rep


@dataclass
class CrossTermSweep:
    """Cross-term reports over ``N`` with fitted log2-slopes and envelope constants."""

    reports: list
    slopes: dict
    constants: dict

    def sums(self, kind: str) -> list:
        return [getattr(r, "sum_" + kind) for r in self.reports]


def _log2_slope(Ns: Sequence[int], values: Sequence[float]) -> float:
    """Least-squares slope of ``log2(value)`` against ``N`` over the positive values.

    Returns ``-inf`` when every value is zero (the sum vanishes identically)
    and ``nan`` when fewer than two positive values are available otherwise.
    """
    pts = [(n, math.log2(v)) for n, v in zip(Ns, values) if v > 0]
    if not pts:
        return -math.inf
    if len(pts) < 2:
        return math.nan
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def cross_term_sweep(Ns: Sequence[int], delta: float, d: int = 2, eps0: float = 0.1,
                     rel_tol: float = 1e-9, include_diagonal: bool = False) -> CrossTermSweep:
    """Reports for every ``N`` plus slopes and the smallest dominating envelope constants."""
    Ns = [int(n) for n in Ns]
    reports = [cross_term_report(DataFamilyParams(n, delta, d, eps0), rel_tol, include_diagonal)
               for n in Ns]
    slopes, consts = {}, {}
    for kind in ("pair", "triple", "far"):
        vals = [getattr(r, "sum_" + kind) for r in reports]
        slopes[kind] = _log2_slope(Ns, vals)
        consts[kind] = max((v / envelope_shapes(n, delta, d)[kind]
                            for n, v in zip(Ns, vals)), default=0.0)
    for n, r in zip(Ns, reports):
        shapes = envelope_shapes(n, delta, d)
        r.predicted_envelopes = {k: consts[k] * shapes[k] for k in shapes}
    return CrossTermSweep(reports, slopes, consts)


# -- the quadratic model term ---------------------------------------------------------------
def model_term(u0: PatchField, t: float, params: PhysicalParams = PhysicalParams(),
               quad: QuadratureSpec = QuadratureSpec()) -> PatchField:
    """``int_0^t e^{(t-s) kappa Lap} |grad e^{s L} u0|^2 ds`` patch by patch.

    ``L`` is the Lame operator of ``params``; the outer flow is the heat flow
    with diffusivity ``kappa``.  Patches are separated by more than the
    truncation radius, so products never couple different patches.
    """
    def per_patch(f: SpectralField) -> SpectralField:
        if f.is_zero():
            return SpectralField.zeros(f.box, 1)
        val, _ = duhamel(lambda s: _grad_energy(apply_lame(f, s, params)), t, "heat",
                         params, quad)
        return val
    return u0.map_fields(per_patch)


def _low_pass(f: SpectralField) -> SpectralField:
    """Cutoff ``psi(2|xi|)``: keeps ``|xi| <= 1/2``, removes ``|xi| >= 1``."""
    return f.multiply_symbol(lambda xis: cutoff(2.0 * frequency_norm(xis)))


@dataclass
class Theta2LowerReport:
    """Low-frequency size of the model term at the observation time.

    Attributes
    ----------
    params : DataFamilyParams
    main_F : float
        Diagonal main term ``(eps0/2)(R N^{-1/d})^2 sum_j 2^{-j} 2^{-2(d-1)j}
        ||phi_j * (phi_j^2 / 2)||_{L^d(A_j)}``.
    oscillation : float
        The same sum for the ``cos(2^{N+1} x_1)`` half of ``sin^2``; zero by
        spectral support for ``N >= 3``, computed from the spectral data.
    lowfreq : float
        ``sum_{j=-floor(delta N)}^{0} 2^{-j} ||phi_j * psi(2D) Theta(T_N)||_d``
        of the computed model term.
    full_band : float
        ``B^{-1}_{d,1}`` sum of the unfiltered model term over bands
        ``-floor(delta N) - 2 .. N + 3`` (at least ``lowfreq``).
    normaliser : float
        ``eps0 delta R^2 N^{1-2/d}``.
    cross_total : float or None
        ``(eps0/2)(R N^{-1/d})^2`` times the cross-term total, when supplied.
    """

    params: DataFamilyParams
    main_F: float
    oscillation: float
    lowfreq: float
    full_band: float
    normaliser: float
    cross_total: float | None = None

    @property
    def ratio_F(self) -> float:
        return self.main_F / self.normaliser if self.normaliser else 0.0

    @property
    def ratio_lowfreq(self) -> float:
        return self.lowfreq / self.normaliser if self.normaliser else 0.0

    @property
    def dominance(self) -> float:
        """``main_F / cross_total`` (infinite when the cross terms vanish)."""
        if self.cross_total is None:
            return math.nan
        return math.inf if self.cross_total == 0 else self.main_F / self.cross_total

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(ratio_F=self.ratio_F, ratio_lowfreq=self.ratio_lowfreq,
                   dominance=self.dominance)
        return out


def diagonal_profile_norm(d: int, rel_tol: float = 1e-12) -> float:
    """``||phi0 * phi0^2||_{L^d(B_1)}``, the scale-free constant of the diagonal term."""
    g = lambda r: _radial_conv_values(d, 0, 0, 0.0, r, 1.0, rel_tol)
    return _ball_integral(d, g, 0.0, 1.0, d)


def _main_term(params: DataFamilyParams, rel_tol: float) -> float:
    d = params.d
    pref = 0.5 * params.eps0 * (params.R * params.N ** (-1.0 / d)) ** 2
    total = 0.0
    for j in params.scales:
        rho = math.ldexp(1.0, -j)
        g = lambda r, j=j: _radial_conv_values(d, j, j, 0.0, r, 1.0, rel_tol)
        val = 0.5 * _ball_integral(d, g, 0.0, rho, d)
        total += 2.0 ** (-j - 2 * (d - 1) * j) * val
    return pref * total


def theta2_lower_report(params: DataFamilyParams, phys: PhysicalParams = PhysicalParams(),
                        spec: GridSpec = GridSpec(), quad: QuadratureSpec = QuadratureSpec(),
                        cross: CrossTermReport | None = None, rel_tol: float = 1e-12,
                        oversample: float | None = None) -> Theta2LowerReport:
    """Diagonal main term, oscillation part and low-frequency norm of the model term."""
    d = params.d
    norm_ = params.eps0 * params.delta * params.R**2 * params.N ** (1.0 - 2.0 / d)
    pref = 0.5 * params.eps0 * (params.R * params.N ** (-1.0 / d)) ** 2
    cross_total = None if cross is None else pref * cross.total()
    if params.R == 0:
        return Theta2LowerReport(params, 0.0, 0.0, 0.0, 0.0, norm_,
                                 None if cross is None else 0.0)
    main = _main_term(params, rel_tol)
    u0 = build_initial_data(params, spec)
    theta = model_term(u0, params.T_N, phys, quad)
    # oscillating half: the doubled-carrier part of |grad u|^2 seen by the bands j <= 0
    lo_j = -params.n_scales
    frame = build_lp_frame(lo_j - 2, params.N + 3, d)
    carrier = float(2 ** params.N)
    high = theta.map_fields(lambda f: f.multiply_symbol(
        lambda xis: (frequency_norm(xis) > carrier).astype(float)))
    osc = besov_norm(high, -1.0, d, 1.0, list(params.scales), frame, oversample).total
    low = theta.map_fields(_low_pass)
    with warnings.catch_warnings():
        # both sums are partial on purpose: the restricted one drops the
        # high bands, and no finite band range exhausts the mean of Theta
        warnings.simplefilter("ignore", RuntimeWarning)
        lowfreq = besov_norm(low, -1.0, d, 1.0, list(params.scales), frame, oversample).total
        full = besov_norm(theta, -1.0, d, 1.0, None, frame, oversample).total
    return Theta2LowerReport(params, main, osc, lowfreq, full, norm_, cross_total)
