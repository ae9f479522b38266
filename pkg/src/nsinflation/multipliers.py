"""Heat and Lame semigroups, Duhamel integrals and the dissipation form.

All operators act on :class:`~nsinflation.spectral.SpectralField` objects and,
by lifting, on :class:`~nsinflation.field_rep.PatchField` (patch by patch)
and :class:`~nsinflation.field_rep.GridField` (through its spectral view).

The Lame operator ``L = mu Lap + (lambda + mu) grad div`` is diagonalised by
the Helmholtz split: on ``xi != 0`` the component of ``uhat`` along ``xi``
decays at rate ``(2 mu + lambda)|xi|^2`` and the orthogonal part at rate
``mu |xi|^2``; the ``xi = 0`` mode is left unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .field_rep import GridField, PatchField
from .lp_frame import frequency_norm
from .spectral import SpectralField, product, sum_fields

__all__ = [
    "PhysicalParams",
    "QuadratureSpec",
    "QuadratureError",
    "apply_heat",
    "apply_lame",
    "apply_generator",
    "duhamel",
    "m_factor",
    "theta2_symbol",
    "theta2_direct",
    "gradient_energy_quadrature",
    "gradient_energy_symbol",
    "dissipation_form",
    "advection",
]


@dataclass(frozen=True)
class PhysicalParams:
    """Lame constants ``mu, lambda`` and heat conductivity ``kappa``."""

    mu: float = 1.0
    lam: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not 2 * self.mu + self.lam > 0:
            raise ValueError("2 mu + lambda must be positive")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    @property
    def rate_parallel(self) -> float:
        return 2.0 * self.mu + self.lam

    @property
    def rate_perpendicular(self) -> float:
        return self.mu


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss--Legendre rule with panel doubling.

    Attributes
    ----------
    nodes : int
        Gauss--Legendre nodes per panel.
    max_refine : int
        Maximum number of panel doublings.
    rel_tol : float
        Convergence tolerance on the relative L^2 change between refinements.
    """

    nodes: int = 8
    max_refine: int = 8
    rel_tol: float = 1e-8

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("at least two nodes per panel are required")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_refine < 0:
            raise ValueError("max_refine must be non-negative")


class QuadratureError(RuntimeError):
    """Panel doubling did not converge; ``distance`` holds the last change."""

    def __init__(self, message, distance):
        super().__init__(message)
        self.distance = distance


# -- lifting helpers -------------------------------------------------------------------
def _lift(obj, fn: Callable[[SpectralField], SpectralField]):
    if isinstance(obj, SpectralField):
        return fn(obj)
    if isinstance(obj, PatchField):
        return obj.map_fields(fn)
    if isinstance(obj, GridField):
        return GridField.from_spectral(fn(obj.spectral()), obj.counts)
    raise TypeError(f"unsupported field type {type(obj).__name__}")


def _check_time(t):
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")


def _sq(xis):
    total = 0.0
    for x in xis:
        total = total + x * x
    return total


# -- semigroups ---------------------------------------------------------------------------
def apply_heat(f, t: float, params: PhysicalParams = PhysicalParams(),
               diffusivity: float | None = None):
    """Multiply ``fhat`` by ``exp(-kappa t |xi|^2)``; ``t = 0`` returns ``f`` itself."""
    _check_time(t)
    if t == 0:
        return f
    nu = params.kappa if diffusivity is None else diffusivity
    return _lift(f, lambda g: g.multiply_symbol(lambda xis: np.exp(-nu * t * _sq(xis))))


def _lame_window(c: np.ndarray, xis, t: float, params: PhysicalParams) -> np.ndarray:
    k2 = _sq(xis)
    k2 = np.broadcast_to(k2, c.shape[1:])
    e_perp = np.exp(-params.rate_perpendicular * t * k2)
    e_par = np.exp(-params.rate_parallel * t * k2)
    safe = np.where(k2 > 0, k2, 1.0)
    proj = sum(np.broadcast_to(x, c.shape[1:]) * c[i] for i, x in enumerate(xis)) / safe
    out = e_perp * c
    diff = np.where(k2 > 0, e_par - e_perp, 0.0)
    for i, x in enumerate(xis):
        out[i] = out[i] + diff * proj * x
    return out


def apply_lame(u, t: float, params: PhysicalParams = PhysicalParams()):
    """Lame semigroup ``exp(t L)`` on a ``d``-component field."""
    _check_time(t)
    if t == 0:
        return u

    def fn(g: SpectralField) -> SpectralField:
        if g.ncomp != g.d:
            raise ValueError("the Lame semigroup acts on d-component fields")
        wins = [(o, _lame_window(c, g.freqs(o, c.shape[1:]), t, params)) for o, c in g.windows]
        return SpectralField(g.box, wins, g.ncomp)

    return _lift(u, fn)


def apply_generator(f, kind: str, params: PhysicalParams = PhysicalParams()):
    """Apply the generator itself: ``L u`` (``kind='lame'``) or ``kappa Lap f`` (``'heat'``)."""
    if kind == "heat":
        return _lift(f, lambda g: g.multiply_symbol(lambda xis: -params.kappa * _sq(xis)))
    if kind == "lame":
        def fn(g):
            wins = []
            for o, c in g.windows:
                xis = g.freqs(o, c.shape[1:])
                k2 = np.broadcast_to(_sq(xis), c.shape[1:])
                dot = sum(np.broadcast_to(x, c.shape[1:]) * c[i] for i, x in enumerate(xis))
                out = -params.mu * k2 * c
                for i, x in enumerate(xis):
                    out[i] = out[i] - (params.lam + params.mu) * x * dot
                wins.append((o, out))
            return SpectralField(g.box, wins, g.ncomp)
        return _lift(f, fn)
    raise ValueError(f"unknown generator kind {kind!r}")


def _propagator(kind: str, params: PhysicalParams):
    if kind == "heat":
        return lambda f, tau: apply_heat(f, tau, params)
    if kind == "lame":
        return lambda f, tau: apply_lame(f, tau, params)
    if kind == "identity":
        return lambda f, tau: f
    raise ValueError(f"unknown propagator kind {kind!r}")


# -- Duhamel integrals --------------------------------------------------------------------
def _l2(f) -> float:
    if isinstance(f, SpectralField):
        return float(math.sqrt(np.sum(f.l2_squared())))
    if isinstance(f, PatchField):
        return float(math.sqrt(sum(np.sum(p.field.l2_squared()) for p in f.patches)))
    if isinstance(f, GridField):
        return float(math.sqrt(np.sum(f.values**2) * f.cell_volume()))
    raise TypeError(type(f).__name__)


def _combine(terms):
    first = terms[0][1]
    if isinstance(first, SpectralField):
        return sum_fields([f.scaled(w) for w, f in terms])
    if isinstance(first, GridField):
        vals = sum(w * f.values for w, f in terms)
        return GridField(first.box, vals)
    if isinstance(first, PatchField):
        out = first.scaled(terms[0][0])
        for w, f in terms[1:]:
            out = PatchField(out.atoms, [
                type(p)(p.atom_indices, p.box, p.field + q.field.scaled(w))
                for p, q in zip(out.patches, f.patches)], out.overlaps, out.spec, out.d)
        return out
    raise TypeError(type(first).__name__)


def _difference_norm(a, b) -> float:
    if isinstance(a, SpectralField):
        return _l2(a - b)
    if isinstance(a, GridField):
        return _l2(GridField(a.box, a.values - b.values))
    return math.sqrt(sum(np.sum((p.field - q.field).l2_squared())
                         for p, q in zip(a.patches, b.patches)))


def duhamel(source: Callable[[float], object], t: float, kind: str = "heat",
            params: PhysicalParams = PhysicalParams(), quad: QuadratureSpec = QuadratureSpec()):
    """``int_0^t exp((t - s) A) source(s) ds`` by composite Gauss--Legendre.

    Parameters
    ----------
    source : callable
        ``source(s)`` returns a field at time ``s``.
    t : float
        Final time.
    kind : {"heat", "lame", "identity"}
        Generator ``A``: ``kappa Lap``, ``L`` or ``0``.

    Returns
    -------
    value : field
    err : float
        L^2 distance between the last two refinements.
    """
    _check_time(t)
    prop = _propagator(kind, params)
    x, w = np.polynomial.legendre.leggauss(quad.nodes)

    def rule(panels):
        edges = np.linspace(0.0, t, panels + 1)
        terms = []
        for a, b in zip(edges[:-1], edges[1:]):
            for xi, wi in zip(x, w):
                s = 0.5 * (a + b) + 0.5 * (b - a) * xi
                terms.append((0.5 * (b - a) * wi, prop(source(s), t - s)))
        return _combine(terms)

    if t == 0:
        zero = source(0.0)
        return _combine([(0.0, zero)]), 0.0
    prev = rule(1)
    panels = 1
    for _ in range(quad.max_refine):
        panels *= 2
        cur = rule(panels)
        dist = _difference_norm(cur, prev)
        scale = _l2(cur)
        if dist <= quad.rel_tol * scale or scale == 0.0:
            return cur, dist
        prev = cur
    raise QuadratureError(
        f"Duhamel quadrature did not reach rel_tol={quad.rel_tol:g} after "
        f"{quad.max_refine} doublings (last change {dist:.3e})", dist)


# -- the Theta_2 symbol -------------------------------------------------------------------
def m_factor(z, t):
    """``(1 - exp(-t z)) / z`` with its removable singularity at ``z = 0``.

    For ``|t z| < 1e-4`` the series ``t (1 - tz/2 + (tz)^2/6 - (tz)^3/24)`` is used.
    """
    z = np.asarray(z, dtype=float)
    t = float(t)
    tz = t * z
    small = np.abs(tz) < 1e-4
    safe = np.where(small, 1.0, z)
    direct = -np.expm1(-t * safe) / safe
    series = t * (1.0 - tz / 2.0 + tz**2 / 6.0 - tz**3 / 24.0)
    return np.where(small, series, direct)


def theta2_symbol(xi, eta, t):
    """``i(xi - eta) . i eta * (1 - exp(-t z)) / z`` with ``z = |xi-eta|^2 + |eta|^2 - |xi|^2``.

    Parameters
    ----------
    xi, eta : array_like, shape (..., d)
        Frequencies (broadcastable).
    t : float
        Time, ``t >= 0``.
    """
    _check_time(t)
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    a = xi - eta
    pref = -np.sum(a * eta, axis=-1)
    z = np.sum(a * a, axis=-1) + np.sum(eta * eta, axis=-1) - np.sum(xi * xi, axis=-1)
    return pref * m_factor(z, t)


# -- nonlinear forms ----------------------------------------------------------------------
def _sym_grad(u: SpectralField):
    d = u.d
    grads = [[u.component(b).partial(a) for b in range(d)] for a in range(d)]
    return [[(grads[a][b] + grads[b][a]).scaled(0.5) for b in range(d)] for a in range(d)]


def dissipation_form(u: SpectralField, v: SpectralField,
                     params: PhysicalParams = PhysicalParams()) -> SpectralField:
    """``2 mu tr(D(u) D(v)^T) + lambda div u div v`` with ``D`` the symmetric gradient."""
    d = u.d
    du, dv = _sym_grad(u), _sym_grad(v)
    terms = []
    for a in range(d):
        for b in range(d):
            terms.append(product(du[a][b], dv[a][b], real=True).scaled(2.0 * params.mu))
    if params.lam != 0.0:
        terms.append(product(u.divergence(), v.divergence(), real=True).scaled(params.lam))
    return sum_fields(terms)


def advection(u: SpectralField, f: SpectralField) -> SpectralField:
    """``(u . grad) f`` for a scalar or vector field ``f``."""
    terms = []
    for a in range(u.d):
        terms.append(product(u.component(a), f.multiply_symbol(
            lambda xis, a=a: 1j * xis[a])))
    return sum_fields(terms)


def theta2_direct(u1: Callable[[float], SpectralField], t: float,
                  params: PhysicalParams = PhysicalParams(),
                  quad: QuadratureSpec = QuadratureSpec()):
    """``Theta_2(t) = int_0^t exp((t-s) kappa Lap) D(U_1):D(U_1)(s) ds``.

    Returns the value and the quadrature error estimate.
    """
    return duhamel(lambda s: dissipation_form(u1(s), u1(s), params), t, "heat", params, quad)


def _grad_energy(v: SpectralField) -> SpectralField:
    terms = []
    for b in range(v.ncomp):
        comp = v.component(b)
        for a in range(v.d):
            g = comp.partial(a)
            terms.append(product(g, g, real=True))
    return sum_fields(terms)


def gradient_energy_quadrature(u0: SpectralField, t: float, diffusivity: float = 1.0,
                               quad: QuadratureSpec = QuadratureSpec()):
    """Model term ``int_0^t e^{(t-s) nu Lap} |grad e^{s nu Lap} u0|^2 ds`` by time quadrature."""
    params = PhysicalParams(kappa=diffusivity)
    return duhamel(lambda s: _grad_energy(apply_heat(u0, s, params)), t, "heat", params, quad)


def gradient_energy_symbol(u0: SpectralField, t: float, diffusivity: float = 1.0) -> SpectralField:
    """The same model term by direct summation over frequency pairs with :func:`theta2_symbol`.

    Every pair of stored coefficients ``(xi - eta, eta)`` contributes
    ``c(xi - eta) c(eta) theta2_symbol(xi, eta, nu t) exp(-nu t |xi|^2)``
    summed over components; diffusivity enters through the time rescaling
    ``t -> nu t``.
    """
    tau = diffusivity * t
    f = u0.coalesced()
    box, d = f.box, f.d
    out_windows = []
    for oa, ca in f.windows:
        xa = f.freqs(oa, ca.shape[1:])
        xa_full = [np.broadcast_to(x, ca.shape[1:]).ravel() for x in xa]
        flat_a = ca.reshape(f.ncomp, -1)
        for ob, cb in f.windows:
            xb = [np.broadcast_to(x, cb.shape[1:]) for x in f.freqs(ob, cb.shape[1:])]
            shape_out = tuple(sa + sb - 1 for sa, sb in zip(ca.shape[1:], cb.shape[1:]))
            acc = np.zeros(shape_out, dtype=complex)
            idx_a = np.array(np.unravel_index(np.arange(flat_a.shape[1]), ca.shape[1:]))
            nb2 = _sq(xb)
            for p in range(flat_a.shape[1]):
                amp = flat_a[:, p]
                if not np.any(amp):
                    continue
                xi_a = [x[p] for x in xa_full]
                # xi = xi_a + xi_b ; eta = xi_b ; xi - eta = xi_a
                dot = sum(xi_a[l] * xb[l] for l in range(d))
                na2 = sum(v * v for v in xi_a)
                xi2 = na2 + nb2 + 2.0 * dot
                z = -2.0 * dot
                sym = -dot * m_factor(z, tau) * np.exp(-tau * xi2)
                pair = np.tensordot(amp, cb, axes=(0, 0))
                sl = tuple(slice(int(i), int(i) + s) for i, s in zip(idx_a[:, p], cb.shape[1:]))
                acc[sl] += sym * pair
            off = tuple(a + b for a, b in zip(oa, ob))
            out_windows.append((off, acc[None] / diffusivity))
    return SpectralField(box, out_windows, 1).coalesced()
