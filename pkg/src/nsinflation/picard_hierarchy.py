"""Order-by-order expansion of the compressible system around zero data.

For data ``(0, u0, 0)`` the solution is expanded as ``rho = sum_k P_k``,
``u = sum_k U_k``, ``theta = sum_k Theta_k`` where the order-``k`` terms are
``k``-linear in ``u0``:

* ``U_1(t) = e^{tL} u0``, ``Theta_1 = 0``, ``P_1 = -int_0^t div U_1``;
* ``Theta_k`` (``k >= 2``) solves the heat equation with source
  ``-sum (U.grad)Theta - sum P (U.grad)Theta - (sum Theta div U + sum P Theta div U)
  - sum P d_t Theta + sum D~(U):D~(U)``;
* ``U_k`` (``k >= 2``) solves the Lame equation with source
  ``-sum (U.grad)U - sum P (U.grad)U - grad(Theta_k + sum P Theta) - sum P d_t U``;
* ``P_k = -int_0^t (div U_k + sum div(P U))``.

Pair sums run over ``k1 = 1..k-1`` and triple sums over
``k1 + k2 + k3 = k`` with ``k3 >= 0`` (``P_0 = 0``); a triple sum is the
pair sum of order ``k - k3`` multiplied by ``P_{k3}``, so pair sums are
cached per order.

The data are a sum of envelopes modulated by ``e^{+-i omega x_1}``, so the
order-``k`` field of a patch is a sum of harmonics
``e^{i m omega x_1} g_m(x)`` with ``|m| <= k`` and ``m = k (mod 2)``, whose
envelopes ``g_m`` are band limited to ``k`` times the envelope band of the
data.  Each envelope is stored by its Fourier coefficients on a grid that
resolves exactly that band, so the cost does not grow with the carrier
frequency.  Products convolve the harmonic index and multiply envelopes
pointwise on the grid of the product order, which is free of aliasing.
Time dependence is represented on Chebyshev--Lobatto collocation nodes in
``[0, T]``; Duhamel integrals use the exact propagator per frequency against
the polynomial interpolant of the source, evaluated with Gauss--Legendre
quadrature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
import scipy.fft as sfft
from scipy.optimize import linprog

from .field_rep import MemoryCapExceeded, Patch, PatchField, memory_cap_bytes
from .lp_frame import build_lp_frame, frequency_norm
from .multipliers import PhysicalParams
from .norms import besov_norm, modulation_norm
from .profile import cutoff
from .spectral import Box, SpectralField, fft_workers

__all__ = [
    "HierarchyState",
    "BoundFit",
    "chebyshev_lobatto",
    "compute_hierarchy",
    "fit_order_bounds",
    "combinatorial_maximum",
    "theta_lower_total",
    "ThetaLowerTotal",
    "u_equation_residual",
]

FIELD_NAMES = ("U", "Theta", "P", "dU", "dTheta")


def chebyshev_lobatto(T: float, q: int = 9) -> np.ndarray:
    """``q`` Chebyshev--Lobatto points on ``[0, T]`` in increasing order."""
    if q < 2:
        raise ValueError("need at least two time nodes")
    k = np.arange(q)
    return 0.5 * T * (1.0 - np.cos(math.pi * k / (q - 1)))


def _bary_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    return w / np.max(np.abs(w))


def _lagrange_matrix(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``L[g, l] = ell_l(x_g)`` for the Lagrange basis on ``nodes``."""
    w = _bary_weights(nodes)
    diff = x[:, None] - nodes[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    basis = w / diff
    basis /= basis.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    basis[rows] = exact[rows].astype(float)
    return basis


def _fast_even(m: int) -> int:
    m = sfft.next_fast_len(int(m) + (int(m) % 2))
    return m + (m % 2)


# -- grids -------------------------------------------------------------------------------------
def _comp(c, l, d):
    """Component ``l`` of an array laid out as ``(..., ncomp, H, *grid)``."""
    return c[(Ellipsis, l) + (slice(None),) * (d + 1)]


class _Level:
    """Harmonic-envelope grid of one patch resolving order-``k`` fields.

    An array ``c`` of shape ``(..., ncomp, H, M_1, ..., M_d)`` represents
    ``f(y) = sum_h exp(i m_h W y_1 / n_1) sum_q c[..., h, q] exp(i q.y / n)``
    with ``W = omega n_1`` the carrier lattice index and ``q`` in FFT layout,
    for local coordinates ``y`` (box centre at the origin) as in
    :class:`SpectralField`.  The lattice index of ``c[h, q]`` is
    ``q + m_h W e_1``.
    """

    def __init__(self, box: Box, order: int, support: Sequence[int], carrier_index: int):
        self.box = box
        self.order = int(order)
        self.d = box.d
        self.W = int(carrier_index)
        self.ms = tuple(range(-self.order, self.order + 1, 2))
        self.hindex = {m: i for i, m in enumerate(self.ms)}
        self.support = tuple(int(s) for s in support)
        self.counts = tuple(_fast_even(2 * s + 2) for s in self.support)
        n = box.periods
        H = len(self.ms)
        xis = []
        for l, M in enumerate(self.counts):
            q = np.fft.fftfreq(M, 1.0 / M)
            sh = [1] * (self.d + 1)
            sh[l + 1] = M
            if l == 0:
                lat = q[None, :] + np.array(self.ms, dtype=float)[:, None] * self.W
                sh[0] = H
                xis.append((lat / n[0]).reshape(sh))
            else:
                xis.append((q / n[l]).reshape(sh))
        self.xis = xis
        self.xi2 = sum(x**2 for x in xis)
        self.shape = (H,) + tuple(self.counts)
        self.norm = float(np.prod(self.counts))

    @property
    def nbytes(self) -> int:
        return 16 * int(np.prod(self.shape))

    def zeros(self, lead=()) -> np.ndarray:
        return np.zeros(tuple(lead) + self.shape, dtype=complex)

    # transforms of envelopes (last d axes)
    def to_real(self, c: np.ndarray) -> np.ndarray:
        axes = tuple(range(c.ndim - self.d, c.ndim))
        return sfft.ifftn(c, axes=axes, norm="forward", workers=fft_workers())

    def to_coef(self, v: np.ndarray) -> np.ndarray:
        axes = tuple(range(v.ndim - self.d, v.ndim))
        return sfft.fftn(v, axes=axes, norm="forward", workers=fft_workers())

    def embed(self, c: np.ndarray, src: "_Level") -> np.ndarray:
        """Envelope coefficients of a ``src``-level array on this level's grid.

        The harmonic axis of ``src`` is kept; only the envelope grid changes.
        """
        if src.counts == self.counts:
            return c
        lead = c.shape[: c.ndim - self.d]
        out = np.zeros(lead + tuple(self.counts), dtype=complex)
        parts = [[]]
        for l in range(self.d):
            s = src.support[l]
            Ms, Md = src.counts[l], self.counts[l]
            opts = [(slice(0, s + 1), slice(0, s + 1))]
            if s > 0:
                opts.append((slice(Ms - s, Ms), slice(Md - s, Md)))
            parts = [p + [o] for p in parts for o in opts]
        for p in parts:
            out[(Ellipsis,) + tuple(o[1] for o in p)] = c[(Ellipsis,) + tuple(o[0] for o in p)]
        return out

    # differential operators on coefficient arrays
    def grad(self, c: np.ndarray) -> np.ndarray:
        """Gradient of a scalar array ``(..., H, grid)`` -> ``(..., d, H, grid)``."""
        return np.stack([1j * x * c for x in self.xis], axis=-self.d - 2)

    def div(self, c: np.ndarray) -> np.ndarray:
        """Divergence of ``(..., d, H, grid)`` -> ``(..., H, grid)``."""
        return sum(1j * self.xis[l] * _comp(c, l, self.d) for l in range(self.d))

    def parallel(self, c: np.ndarray) -> np.ndarray:
        """Longitudinal projection ``xi xi^T / |xi|^2`` of a vector array."""
        xi2 = np.where(self.xi2 == 0, 1.0, self.xi2)
        dot = sum(self.xis[l] * _comp(c, l, self.d) for l in range(self.d)) / xi2
        return np.stack([self.xis[l] * dot for l in range(self.d)], axis=-self.d - 2)

    def lame(self, c: np.ndarray, params: PhysicalParams) -> np.ndarray:
        """``L c`` for a vector coefficient array."""
        par = self.parallel(c)
        return -(params.rate_parallel * self.xi2 * par
                 + params.rate_perpendicular * self.xi2 * (c - par))

    def to_spectral(self, c: np.ndarray, ncomp: int) -> SpectralField:
        """:class:`SpectralField` with one window per harmonic (``c``: ``(ncomp, H, grid)``)."""
        c = c.reshape((ncomp,) + self.shape)
        wins = []
        axes = tuple(range(1, self.d + 1))
        for h, m in enumerate(self.ms):
            block = np.fft.fftshift(c[:, h], axes=axes)
            off = [-(M // 2) for M in self.counts]
            off[0] += m * self.W
            wins.append((tuple(off), block))
        sf = SpectralField(self.box, wins, ncomp).coalesced()
        return sf.trimmed(1e-15) if sf.max_abs() > 0 else SpectralField.zeros(self.box, ncomp)


def _hmul(out: np.ndarray, out_level: _Level, x: np.ndarray, mx, y: np.ndarray, my,
          scale: float = 1.0) -> None:
    """Accumulate the harmonic product ``x * y`` (real-space envelopes) into ``out``."""
    for i, a in enumerate(mx):
        for j, b in enumerate(my):
            h = out_level.hindex[a + b]
            if scale == 1.0:
                out[h] += x[i] * y[j]
            else:
                out[h] += scale * x[i] * y[j]


# -- state -------------------------------------------------------------------------------------
@dataclass
class _PatchHierarchy:
    """All orders of one patch: coefficient arrays ``(Q, ncomp, H, grid)`` per field and order."""

    box: Box
    levels: dict
    fields: dict
    carrier: float

    def get(self, name: str, k: int) -> np.ndarray:
        return self.fields[(name, k)]


@dataclass
class HierarchyState:
    """Expansion fields of every patch on the collocation times ``t_grid``.

    Attributes
    ----------
    K : int
        Highest order computed.
    t_grid : ndarray
        Collocation times (Chebyshev--Lobatto on ``[0, T]`` by default).
    patches : list of _PatchHierarchy
    params : PhysicalParams
    template : PatchField
        The data; supplies atoms and patch layout for norm evaluation.
    family : DataFamilyParams, optional
        Data-family parameters when the data came from the construction.
    """

    K: int
    t_grid: np.ndarray
    patches: list
    params: PhysicalParams
    template: PatchField
    family: object = None

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    @property
    def d(self) -> int:
        return self.template.d

    def ncomp(self, name: str) -> int:
        return self.d if name in ("U", "dU") else 1

    def coefficients(self, name: str, k: int, node: int = -1, patch: int = 0) -> np.ndarray:
        """Raw harmonic-envelope coefficients ``(ncomp, H, grid)``."""
        ph = self.patches[patch]
        if (name, k) not in ph.fields:
            raise KeyError(f"{name}_{k} not stored")
        return ph.fields[(name, k)][node]

    def _as_patchfield(self, arrays) -> PatchField:
        tpl = self.template
        patches = [Patch(p.atom_indices, p.box, sf) for p, sf in zip(tpl.patches, arrays)]
        return PatchField(tpl.atoms, patches, tpl.overlaps, tpl.spec, tpl.d)

    def field(self, name: str, k: int, node: int = -1) -> PatchField:
        """Order-``k`` field at collocation node ``node`` as a patch field."""
        return self._as_patchfield(
            ph.levels[k].to_spectral(ph.fields[(name, k)][node], self.ncomp(name))
            for ph in self.patches)

    def generator_field(self, name: str, k: int, node: int = -1) -> PatchField:
        """``L U_k`` (``name='U'``) or ``kappa Lap Theta_k`` (``name='Theta'``)."""
        out = []
        for ph in self.patches:
            lev = ph.levels[k]
            c = ph.fields[(name, k)][node]
            if name == "U":
                g = lev.lame(c, self.params)
            elif name == "Theta":
                g = -self.params.kappa * lev.xi2 * c
            else:
                raise ValueError("generator defined for U and Theta only")
            out.append(lev.to_spectral(g, self.ncomp(name)))
        return self._as_patchfield(out)

    def support_defect(self, name: str, k: int) -> float:
        """Largest relative spectral mass outside ``|xi| <= k 2^{N+1}`` over nodes and patches."""
        worst = 0.0
        for ph in self.patches:
            lev = ph.levels[k]
            c = ph.fields[(name, k)]
            mag = np.abs(c) ** 2
            tot = float(np.sum(mag))
            if tot == 0:
                continue
            outside = np.sqrt(lev.xi2) > k * 2.0 * ph.carrier
            worst = max(worst, float(np.sum(mag * outside)) / tot)
        return worst

    def field_at(self, name: str, k: int, t: float, patch: int = 0) -> np.ndarray:
        """Coefficients of ``U_k`` or ``Theta_k`` at an arbitrary time ``t``.

        The Duhamel formula is re-evaluated at ``t`` with the collocated
        source (recovered as ``d_t f - A f`` on the nodes); the result is
        consistent with the evolution form ``d_t f = A f + source``.
        """
        if name not in ("U", "Theta"):
            raise ValueError("field_at supports U and Theta")
        ph = self.patches[patch]
        lev = ph.levels[k]
        f = ph.fields[(name, k)]
        df = ph.fields[("d" + name, k)]
        if name == "U":
            if k == 1:
                return _lame_flow(lev, f[0], t, self.params)
            src = df - lev.lame(f, self.params)
            return _duhamel_at(lev, src, self.t_grid, t, "lame", self.params)
        if k < 2:
            return np.zeros_like(f[0])
        src = df + self.params.kappa * lev.xi2 * f
        return _duhamel_at(lev, src, self.t_grid, t, "heat", self.params)

    def summary(self) -> dict:
        """JSON-ready coefficient l2 sizes per order at every collocation time."""
        out = {"K": self.K, "t_grid": [float(t) for t in self.t_grid], "orders": {}}
        for k in range(1, self.K + 1):
            out["orders"][str(k)] = {
                name: [float(math.sqrt(sum(
                    float(np.sum(np.abs(ph.fields[(name, k)][i]) ** 2)) for ph in self.patches)))
                    for i in range(self.t_grid.size)]
                for name in FIELD_NAMES}
        return out

    def dump_fields(self, directory) -> list:
        """Write every field at the final time in the grid binary format."""
        from pathlib import Path

        from .field_rep import GridField

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for pi, ph in enumerate(self.patches):
            for (name, k), arr in sorted(ph.fields.items()):
                sf = ph.levels[k].to_spectral(arr[-1], self.ncomp(name))
                if sf.is_zero():
                    continue
                lo, hi = sf.index_bounds()
                counts = [1 << (2 * max(abs(int(a)), abs(int(b))) + 1).bit_length()
                          for a, b in zip(lo, hi)]
                g = GridField(sf.box, sf.sample(counts, real=True),
                              {"name": name, "order": k, "patch": pi, "t": self.T})
                paths.append(g.dump(directory / f"{name}_{k}_patch{pi}"))
        return paths


# -- propagators -------------------------------------------------------------------------------
def _lame_flow(lev: _Level, c: np.ndarray, t: float, params: PhysicalParams) -> np.ndarray:
    par = lev.parallel(c)
    return (np.exp(-t * params.rate_parallel * lev.xi2) * par
            + np.exp(-t * params.rate_perpendicular * lev.xi2) * (c - par))


_GL_NODES = 20


def _duhamel_at(lev: _Level, src: np.ndarray, nodes: np.ndarray, t: float, kind: str,
                params: PhysicalParams, gl: int = _GL_NODES) -> np.ndarray:
    """``int_0^t e^{(t-s)A} S(s) ds`` with ``S`` the polynomial interpolant of ``src`` on ``nodes``."""
    out = np.zeros(src.shape[1:], dtype=complex)
    if t <= 0:
        return out
    x, w = np.polynomial.legendre.leggauss(gl)
    s = 0.5 * t * (x + 1.0)
    wt = 0.5 * t * w
    Lm = _lagrange_matrix(nodes, s)
    if kind == "identity":
        return np.tensordot(wt @ Lm, src, axes=1)
    for g in range(gl):
        Sg = np.tensordot(Lm[g], src, axes=1)
        if kind == "heat":
            out += wt[g] * np.exp(-(t - s[g]) * params.kappa * lev.xi2) * Sg
        else:
            out += wt[g] * _lame_flow(lev, Sg, t - s[g], params)
    return out


def _duhamel_nodes(lev, src, nodes, kind, params, gl=_GL_NODES):
    return np.stack([_duhamel_at(lev, src, nodes, t, kind, params, gl) for t in nodes])


# -- the recursion -----------------------------------------------------------------------------
def _split_harmonics(sf: SpectralField, W: int):
    """Envelope index bounds of the two carrier clusters of the data."""
    b = [0] * sf.d
    for o, c in sf.windows:
        idx0 = np.arange(o[0], o[0] + c.shape[1])
        if np.any(idx0 == 0) and np.any(np.abs(c[:, idx0 == 0]) > 0):
            raise ValueError("data must vanish at zero first-axis frequency")
        for m in (1, -1):
            sel = (idx0 * m) > 0
            if not np.any(sel):
                continue
            q0 = idx0[sel] - m * W
            b[0] = max(b[0], int(np.max(np.abs(q0))))
        for l in range(1, sf.d):
            b[l] = max(b[l], abs(o[l]), abs(o[l] + c.shape[l + 1] - 1))
    if b[0] >= W:
        raise ValueError("carrier clusters of the data overlap; the carrier is too low")
    return b


def _scatter(sf: SpectralField, lev: _Level) -> np.ndarray:
    """Harmonic-envelope coefficients ``(ncomp, H, grid)`` of order-one data."""
    out = lev.zeros((sf.ncomp,))
    for o, c in sf.windows:
        idx = [np.arange(a, a + s) for a, s in zip(o, c.shape[1:])]
        for m in (1, -1):
            sel = (idx[0] * m) > 0
            if not np.any(sel):
                continue
            q0 = np.mod(idx[0][sel] - m * lev.W, lev.counts[0])
            rest = [np.mod(ix, M) for ix, M in zip(idx[1:], lev.counts[1:])]
            h = lev.hindex[m]
            sub = c[:, sel]
            out[(slice(None), h) + np.ix_(q0, *rest)] += sub
    return out


def _estimate_bytes(levels: dict, q: int, d: int) -> int:
    per_order = (2 * d + 3) + (2 * d + 2)
    return sum(per_order * q * lev.nbytes for lev in levels.values())


def _compute_patch(sf: SpectralField, K: int, nodes: np.ndarray, params: PhysicalParams,
                   carrier: float, cap: int, gl: int = _GL_NODES) -> _PatchHierarchy:
    d = sf.d
    box = sf.box
    W = int(round(carrier * box.periods[0]))
    if abs(W - carrier * box.periods[0]) > 1e-9:
        raise ValueError("the carrier must sit on the patch lattice")
    base = _split_harmonics(sf, W)
    levels = {k: _Level(box, k, [k * b for b in base], W) for k in range(1, K + 1)}
    need = _estimate_bytes(levels, nodes.size, d)
    if need > cap:
        raise MemoryCapExceeded(
            f"hierarchy of order {K} needs about {need / 1024**2:.0f} MiB on one patch, above "
            f"the cap of {cap / 1024**2:.0f} MiB; reduce K or the truncation accuracy")
    Q = nodes.size
    F: dict = {}
    cache: dict = {}
    L1 = levels[1]
    u0 = _scatter(sf, L1)
    U1 = np.stack([_lame_flow(L1, u0, t, params) for t in nodes])
    F[("U", 1)] = U1
    F[("dU", 1)] = L1.lame(U1, params)
    F[("Theta", 1)] = L1.zeros((Q, 1))
    F[("dTheta", 1)] = L1.zeros((Q, 1))
    F[("P", 1)] = _duhamel_nodes(L1, -L1.div(U1)[:, None], nodes, "identity", params, gl)

    for k in range(2, K + 1):
        Lk = levels[k]
        srcTh = Lk.zeros((Q, 1))
        srcU_part = Lk.zeros((Q, d))
        advU_k = Lk.zeros((Q, d))
        advTh_k = Lk.zeros((Q, 1))
        ThdivU_k = Lk.zeros((Q, 1))
        PU_k = Lk.zeros((Q, d))
        for i in range(Q):
            real: dict = {}

            def R(name, a, comp=0, deriv=None):
                """Real-space envelopes ``(H_a, grid_k)`` of a stored order-``a`` quantity."""
                key = (name, a, comp, deriv)
                if key not in real:
                    la = levels[a]
                    src = F[(name, a)][i] if (name, a) in F else cache[(name, a)][i]
                    c = src[comp]
                    if deriv is not None:
                        c = 1j * la.xis[deriv] * c
                    real[key] = Lk.to_real(Lk.embed(c, la))
                return real[key]

            def ms(a):
                return levels[a].ms

            adv = Lk.zeros((d,))
            advth = Lk.zeros()
            thdiv = Lk.zeros()
            dd = Lk.zeros()
            for a in range(1, k):
                b = k - a
                for m in range(d):
                    ua = R("U", a, m)
                    for c_ in range(d):
                        _hmul(adv[c_], Lk, ua, ms(a), R("U", b, c_, m), ms(b))
                    if b >= 2:
                        _hmul(advth, Lk, ua, ms(a), R("Theta", b, 0, m), ms(b))
                if a >= 2:
                    divb = sum(R("U", b, m, m) for m in range(d))
                    _hmul(thdiv, Lk, R("Theta", a, 0), ms(a), divb, ms(b))
                for l in range(d):
                    for m in range(l, d):
                        Da = 0.5 * (R("U", a, m, l) + R("U", a, l, m))
                        Db = 0.5 * (R("U", b, m, l) + R("U", b, l, m))
                        _hmul(dd, Lk, Da, ms(a), Db, ms(b),
                              2.0 * params.mu * (1.0 if l == m else 2.0))
                if params.lam != 0.0:
                    diva = sum(R("U", a, m, m) for m in range(d))
                    divb = sum(R("U", b, m, m) for m in range(d))
                    _hmul(dd, Lk, diva, ms(a), divb, ms(b), params.lam)
            # triple sums: P_c times pair sums (and fields) of order k - c
            p_adv = Lk.zeros((d,))
            p_du = Lk.zeros((d,))
            p_u = Lk.zeros((d,))
            p_scal = Lk.zeros()  # P (adv Theta + Theta div U + d_t Theta)
            p_th = Lk.zeros()
            for c in range(1, k):
                m_ = k - c
                pc = R("P", c)
                for l in range(d):
                    if m_ >= 2:
                        _hmul(p_adv[l], Lk, pc, ms(c), R("advU", m_, l), ms(m_))
                    _hmul(p_du[l], Lk, pc, ms(c), R("dU", m_, l), ms(m_))
                    _hmul(p_u[l], Lk, pc, ms(c), R("U", m_, l), ms(m_))
                if m_ >= 2:
                    _hmul(p_scal, Lk, pc, ms(c),
                          R("advTh", m_) + R("ThdivU", m_) + R("dTheta", m_), ms(m_))
                    _hmul(p_th, Lk, pc, ms(c), R("Theta", m_), ms(m_))
            advU_c = Lk.to_coef(adv)
            advTh_c = Lk.to_coef(advth)
            ThdivU_c = Lk.to_coef(thdiv)
            advU_k[i] = advU_c
            advTh_k[i, 0] = advTh_c
            ThdivU_k[i, 0] = ThdivU_c
            srcTh[i, 0] = -advTh_c - ThdivU_c - Lk.to_coef(p_scal) + Lk.to_coef(dd)
            srcU_part[i] = (-advU_c - Lk.to_coef(p_adv) - Lk.grad(Lk.to_coef(p_th))
                            - Lk.to_coef(p_du))
            PU_k[i] = Lk.to_coef(p_u)
        cache[("advU", k)] = advU_k
        cache[("advTh", k)] = advTh_k
        cache[("ThdivU", k)] = ThdivU_k
        # Theta_k, then U_k (needs grad Theta_k), then P_k (needs U_k)
        Th = _duhamel_nodes(Lk, srcTh, nodes, "heat", params, gl)
        F[("Theta", k)] = Th
        F[("dTheta", k)] = -params.kappa * Lk.xi2 * Th + srcTh
        srcU = srcU_part - Lk.grad(Th[:, 0])
        U = _duhamel_nodes(Lk, srcU, nodes, "lame", params, gl)
        F[("U", k)] = U
        F[("dU", k)] = Lk.lame(U, params) + srcU
        F[("P", k)] = _duhamel_nodes(Lk, -Lk.div(U + PU_k)[:, None], nodes, "identity",
                                     params, gl)
    return _PatchHierarchy(box, levels, F, carrier)


def compute_hierarchy(u0: PatchField, K: int, t_grid: np.ndarray | None = None,
                      params: PhysicalParams = PhysicalParams(), quad=None,
                      T: float | None = None, family=None) -> HierarchyState:
    """Compute ``P_k, U_k, Theta_k`` (and ``d_t U_k``, ``d_t Theta_k``) for ``k <= K``.

    Parameters
    ----------
    u0 : PatchField
        Initial velocity built from atoms sharing one carrier ``omega``;
        patches are treated independently (they are separated by more than
        the truncation radius, so products between patches vanish to that
        level).
    K : int
        Highest order, at least 1.
    t_grid : ndarray, optional
        Collocation times, increasing from 0; defaults to nine
        Chebyshev--Lobatto points on ``[0, T]``.
    params : PhysicalParams
    quad : QuadratureSpec, optional
        ``quad.nodes`` sets the Gauss--Legendre count of the Duhamel
        integrals (at least 20 are used).
    T : float, optional
        Final time when ``t_grid`` is omitted (default ``family.T_N``).
    family : DataFamilyParams, optional
        Recorded on the state; supplies ``T_N`` when ``T`` is omitted.

    Raises
    ------
    MemoryCapExceeded
        When the stored fields of a patch would exceed the memory cap.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if t_grid is None:
        if T is None:
            if family is None:
                raise ValueError("give t_grid, T or family")
            T = family.T_N
        t_grid = chebyshev_lobatto(T)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must start at 0 and increase strictly")
    if family is not None and t_grid[-1] > family.T_N * (1 + 1e-12):
        raise ValueError("t_grid exceeds the observation time T_N")
    omegas = {a.omega for a in u0.atoms}
    if len(omegas) != 1:
        raise ValueError("all atoms must share one carrier frequency")
    gl = _GL_NODES if quad is None else max(_GL_NODES, int(quad.nodes))
    cap = u0.spec.cap()
    carrier = float(omegas.pop())
    patches = [_compute_patch(p.field.coalesced(), K, t_grid, params, carrier, cap, gl)
               for p in u0.patches]
    return HierarchyState(K, t_grid, patches, params, u0, family)


def u_equation_residual(state: HierarchyState, order: int = 3, node: int = -1,
                        patch: int = 0) -> float:
    """L^2 size of the velocity-equation residual of the truncated expansion.

    With ``rho, u, theta`` the sums of the orders ``<= order`` the residual is
    ``(1 + rho)(d_t u + (u.grad)u) - L u + grad((1 + rho) theta)``, formed
    without aliasing on a grid resolving all triple products.  Each order
    solves its own equation exactly, so the residual is of degree
    ``order + 1`` and higher in the data amplitude.
    """
    if order > state.K:
        raise ValueError("order exceeds the computed hierarchy")
    ph = state.patches[patch]
    d = state.d
    L1 = ph.levels[1]
    top = 3 * order
    grid = _Level(ph.box, top, [top * b for b in L1.support], L1.W)
    ms_all = tuple(range(-top, top + 1))
    H = len(ms_all)
    hidx = {m: i for i, m in enumerate(ms_all)}

    def real(name, k, comp=0, deriv=None, gen=False):
        lev = ph.levels[k]
        c = ph.fields[(name, k)][node]
        if gen:
            c = lev.lame(c, state.params)
        c = c[comp]
        if deriv is not None:
            c = 1j * lev.xis[deriv] * c
        out = np.zeros((H,) + grid.counts, dtype=complex)
        vals = grid.to_real(grid.embed(c, lev))
        for h, m in enumerate(lev.ms):
            out[hidx[m]] = vals[h]
        return out

    def total(name, comp=0, deriv=None, start=1, gen=False):
        return sum(real(name, k, comp, deriv, gen) for k in range(start, order + 1))

    def mul(x, y):
        out = np.zeros_like(x)
        for i, a in enumerate(ms_all):
            if not np.any(x[i]):
                continue
            for j, b in enumerate(ms_all):
                if abs(a + b) <= top and np.any(y[j]):
                    out[hidx[a + b]] += x[i] * y[j]
        return out

    rho = total("P")
    one_rho = rho.copy()
    one_rho[hidx[0]] += 1.0
    theta = total("Theta", start=2) if order >= 2 else np.zeros_like(rho)
    u = [total("U", l) for l in range(d)]
    press = mul(one_rho, theta)
    press_c = grid.to_coef(press)
    q = np.fft.fftfreq(grid.counts[0], 1.0 / grid.counts[0])
    kx = [((q[None, :] + np.array(ms_all, dtype=float)[:, None] * grid.W) / ph.box.periods[0])
          .reshape((H, grid.counts[0]) + (1,) * (d - 1))]
    for l in range(1, d):
        sh = [1] * (d + 1)
        sh[l + 1] = grid.counts[l]
        kx.append((np.fft.fftfreq(grid.counts[l], 1.0 / grid.counts[l]) / ph.box.periods[l])
                  .reshape(sh))
    res = []
    for c in range(d):
        acc = total("dU", c)
        for m in range(d):
            acc = acc + mul(u[m], total("U", c, m))
        r = mul(one_rho, acc) - total("U", c, gen=True) + grid.to_real(1j * kx[c] * press_c)
        res.append(grid.to_coef(r))
    # Parseval over the lattice: sum harmonics onto their absolute indices
    wins = []
    arr = np.stack(res)
    for h, m in enumerate(ms_all):
        block = np.fft.fftshift(arr[:, h], axes=tuple(range(1, d + 1)))
        off = [-(M // 2) for M in grid.counts]
        off[0] += m * grid.W
        wins.append((tuple(off), block))
    sf = SpectralField(ph.box, wins, d).coalesced()
    return math.sqrt(float(np.sum(sf.l2_squared())))


# -- bounds ------------------------------------------------------------------------------------
def _clenshaw_curtis_weights(nodes: np.ndarray) -> np.ndarray:
    """Interpolatory weights for ``int_0^T`` on the given nodes."""
    T = nodes[-1]
    x, w = np.polynomial.legendre.leggauss(max(32, 2 * nodes.size))
    s = 0.5 * T * (x + 1.0)
    return (0.5 * T * w) @ _lagrange_matrix(nodes, s)


@dataclass
class BoundFit:
    """Fitted constants of the geometric order-``k`` bounds.

    Attributes
    ----------
    c1, c2 : float
        Smallest constants (``>= 1``, minimising ``c1 c2``) making every
        margin at most one.
    margins : dict
        ``(k, kind) -> measured / bound`` with kinds ``P``, ``U``, ``Theta``.
    measured : dict
        ``(k, kind) -> measured left-hand side``.
    per_order : dict
        ``k -> max_kind margin``.
    ratios : dict
        ``k -> per_order[k+1] / per_order[k]``.
    geometric : bool
        Whether the ratios are below one for every ``k >= 3``.
    bilinear_constant : float or None
        Measured modulation-space product constant, when probed.
    """

    c1: float
    c2: float
    margins: dict
    measured: dict
    per_order: dict
    ratios: dict
    geometric: bool
    bilinear_constant: float | None = None

    def to_json(self) -> str:
        return json.dumps({
            "c1": self.c1, "c2": self.c2,
            "margins": {f"{k}|{kind}": v for (k, kind), v in self.margins.items()},
            "measured": {f"{k}|{kind}": v for (k, kind), v in self.measured.items()},
            "per_order": self.per_order, "ratios": self.ratios, "geometric": self.geometric,
            "bilinear_constant": self.bilinear_constant})


def _bound_shape(kind: str, k: int, t: float, N: int, R: float):
    """``(a1, a2, rest)`` with bound ``c1^a1 c2^a2 rest``."""
    base = R**k * (1.0 + k) ** -4
    if kind == "P":
        return k - 1, k, t**k * 2.0 ** (k * N) * base
    if kind == "U":
        # the order-one bound carries one factor c2 (otherwise no constant is free)
        return k - 1, max(k - 1, 1), t ** (k - 1) * 2.0 ** ((k - 1) * N) * base
    return k - 1, k, t ** (k - 1) * 2.0 ** (k * N) * base


def fit_order_bounds(state: HierarchyState, N: int | None = None, R: float | None = None,
                     oversample: float | None = None) -> BoundFit:
    """Measure the order-``k`` quantities at the final time and fit ``(c1, c2)``.

    ``U``: ``||U_k(T)||_M + ||d_t U_k||_{L^1(0,T;M)} + ||L U_k||_{L^1(0,T;M)}``;
    ``Theta``: the analogue with ``kappa Lap``; ``P``: ``||P_k(T)||_M``; all
    in the modulation norm ``M_{3,1}``.
    """
    fam = state.family
    N = fam.N if N is None and fam is not None else N
    R = fam.R if R is None and fam is not None else R
    if N is None or R is None:
        raise ValueError("N and R are required")
    T = state.T
    w = _clenshaw_curtis_weights(state.t_grid)
    M = lambda f: modulation_norm(f, oversample=oversample).total
    measured = {}
    for k in range(1, state.K + 1):
        measured[(k, "P")] = M(state.field("P", k))
        uk = M(state.field("U", k))
        du = sum(wi * M(state.field("dU", k, i)) for i, wi in enumerate(w) if wi != 0)
        lu = sum(wi * M(state.generator_field("U", k, i)) for i, wi in enumerate(w) if wi != 0)
        measured[(k, "U")] = uk + du + lu
        if k >= 2:
            th = M(state.field("Theta", k))
            dth = sum(wi * M(state.field("dTheta", k, i)) for i, wi in enumerate(w) if wi != 0)
            lth = sum(wi * M(state.generator_field("Theta", k, i))
                      for i, wi in enumerate(w) if wi != 0)
            measured[(k, "Theta")] = th + dth + lth
    # linear program in (log c1, log c2) >= 0: minimise log c1 + log c2
    A, b = [], []
    for (k, kind), val in measured.items():
        if val <= 0:
            continue
        a1, a2, rest = _bound_shape(kind, k, T, N, R)
        A.append([-a1, -a2])
        b.append(-math.log(val / rest))
    if A:
        res = linprog([1.0, 1.0], A_ub=np.array(A), b_ub=np.array(b),
                      bounds=[(0, None), (0, None)], method="highs")
        if res.status != 0:
            raise RuntimeError(f"bound fit infeasible: {res.message}")
        x1, x2 = res.x
    else:
        x1 = x2 = 0.0
    c1, c2 = math.exp(x1), math.exp(x2)
    margins = {}
    for (k, kind), val in measured.items():
        a1, a2, rest = _bound_shape(kind, k, T, N, R)
        margins[(k, kind)] = val / (c1**a1 * c2**a2 * rest)
    per_order = {k: max(v for (kk, _), v in margins.items() if kk == k)
                 for k in range(1, state.K + 1)}
    ratios = {k: per_order[k + 1] / per_order[k]
              for k in range(1, state.K) if per_order[k] > 0}
    geometric = all(r < 1.0 for k, r in ratios.items() if k >= 3)
    return BoundFit(c1, c2, margins, measured, per_order, ratios, geometric)


def combinatorial_maximum(kmax: int = 10_000) -> tuple[float, int]:
    """``max_{2 <= k <= kmax} (1+k)^4/(k-1) sum_{k1+k2=k} k1 k2 (1+k1)^-4 (1+k2)^-4``.

    Returns the maximum and the maximising ``k``; the pair sums are a
    discrete self-convolution computed in one deterministic pass.
    """
    m = np.arange(kmax + 1, dtype=float)
    a = m * (1.0 + m) ** -4
    a[0] = 0.0
    conv = np.convolve(a, a)[: kmax + 1]
    k = np.arange(2, kmax + 1, dtype=float)
    vals = (1.0 + k) ** 4 / (k - 1.0) * conv[2:]
    i = int(np.argmax(vals))
    return float(vals[i]), int(k[i])


# -- net lower bound ---------------------------------------------------------------------------
@dataclass
class ThetaLowerTotal:
    """Lower-bound decomposition for the low-frequency temperature size.

    Attributes
    ----------
    theta2 : float
        Restricted low-frequency norm of ``Theta_2(T)``.
    higher : dict
        ``k -> restricted norm of Theta_k(T)`` for ``3 <= k <= K``.
    tail : float
        Geometric extrapolation of the orders above ``K``.
    tail_ratio : float
        Ratio used for the extrapolation.
    net : float
        ``theta2 - sum(higher) - tail``.
    """

    theta2: float
    higher: dict
    tail: float
    tail_ratio: float
    net: float
    construction: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"theta2": self.theta2, "higher": self.higher, "tail": self.tail,
                "tail_ratio": self.tail_ratio, "net": self.net,
                "construction": self.construction}


def _restricted_lowfreq(field: PatchField, scales: Sequence[int], d: int, N: int) -> float:
    import warnings

    frame = build_lp_frame(min(scales) - 2, N + 3, d)
    low = field.map_fields(lambda f: f.multiply_symbol(
        lambda xis: cutoff(2.0 * frequency_norm(xis))))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return besov_norm(low, -1.0, d, 1.0, list(scales), frame).total


def theta_lower_total(state: HierarchyState, fit: BoundFit, construction_report=None,
                      eps0: float | None = None) -> ThetaLowerTotal:
    """Net lower bound ``||Theta_2|| - sum_{3<=k<=K} ||Theta_k|| - tail`` (restricted norms).

    The restricted norm is ``sum_{j=-floor(delta N)}^{0} 2^{-j} ||phi_j * psi(2D) f||_d``.
    The tail ratio is the last measured margin ratio, floored at the
    structural ratio ``c1 c2 eps0 R 2^{-N}``; the tail is the last measured
    term times ``r / (1 - r)`` (infinite when ``r >= 1``).
    """
    fam = state.family
    if fam is None:
        raise ValueError("theta_lower_total needs the data-family parameters")
    d, N = state.d, fam.N
    eps0 = fam.eps0 if eps0 is None else eps0
    scales = list(fam.scales)
    if fam.R == 0 or state.K < 2:
        return ThetaLowerTotal(0.0, {}, 0.0, 0.0, 0.0)
    th2 = _restricted_lowfreq(state.field("Theta", 2), scales, d, N)
    higher = {k: _restricted_lowfreq(state.field("Theta", k), scales, d, N)
              for k in range(3, state.K + 1)}
    structural = fit.c1 * fit.c2 * eps0 * fam.R * 2.0 ** (-N)
    measured_ratio = fit.ratios.get(state.K - 1, 0.0) if state.K >= 2 else 0.0
    r = max(measured_ratio, structural)
    # odd orders carry no low-frequency mass, so the last two orders are both consulted
    last = max([higher.get(state.K, 0.0), higher.get(state.K - 1, 0.0)]) if higher else th2
    tail = math.inf if r >= 1.0 else last * r / (1.0 - r)
    net = th2 - sum(higher.values()) - tail
    extra = {}
    if construction_report is not None:
        extra = {"main_F": construction_report.main_F, "lowfreq": construction_report.lowfreq}
    return ThetaLowerTotal(th2, higher, tail, r, net, extra)
