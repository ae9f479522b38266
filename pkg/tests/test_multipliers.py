"""Heat and Lame semigroups, Duhamel integrals and the model temperature term."""

import mpmath
import numpy as np
import pytest

from _oracles import (gaussian_field, gaussian_heat_closed_form, helmholtz_heat,
                      random_band_field, rel_l2)
from nsinflation.construction import DataFamilyParams, build_initial_data
from nsinflation.field_rep import GridSpec
from nsinflation.multipliers import (PhysicalParams, QuadratureError, QuadratureSpec,
                                     apply_generator, apply_heat, apply_lame, duhamel,
                                     gradient_energy_quadrature, gradient_energy_symbol, m_factor,
                                     theta2_symbol)
from nsinflation.spectral import SpectralField


def test_heat_flow_of_gaussian():
    f = gaussian_field(a=1.0, n=4)
    pts = np.random.default_rng(0).uniform(-6, 6, (30, 2))
    for t, kappa in [(0.1, 1.0), (0.7, 2.5)]:
        got = apply_heat(f, t, PhysicalParams(kappa=kappa)).evaluate(pts)[0]
        np.testing.assert_allclose(got, gaussian_heat_closed_form(pts, 1.0, t, kappa, 2),
                                   atol=1e-8)


def test_zero_time_returns_input():
    f = gaussian_field()
    assert apply_heat(f, 0.0) is f
    u = gaussian_field(weights=(1.0, -0.5))
    assert apply_lame(u, 0.0) is u


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        apply_heat(gaussian_field(), -1.0)


@pytest.mark.parametrize("mu,lam", [(1.0, 0.0), (0.7, 1.3), (2.0, -1.0)])
def test_lame_equals_helmholtz_split(mu, lam):
    u = random_band_field(np.random.default_rng(1), ncomp=2)
    params = PhysicalParams(mu=mu, lam=lam)
    assert rel_l2(apply_lame(u, 0.3, params), helmholtz_heat(u, 0.3, mu, lam)) < 1e-12


def test_semigroup_composition():
    u = random_band_field(np.random.default_rng(2), ncomp=2)
    params = PhysicalParams(mu=1.0, lam=0.5)
    two = apply_lame(apply_lame(u, 0.2, params), 0.35, params)
    assert rel_l2(two, apply_lame(u, 0.55, params)) < 1e-12
    f = random_band_field(np.random.default_rng(3))
    assert rel_l2(apply_heat(apply_heat(f, 0.1), 0.4), apply_heat(f, 0.5)) < 1e-12


def test_generator_norm_decreases_in_time():
    u = random_band_field(np.random.default_rng(4), ncomp=2)
    Lu = apply_generator(u, "lame")
    vals = [np.sum(apply_lame(Lu, t).l2_squared()) for t in (0.0, 0.1, 0.5, 2.0)]
    assert all(np.isfinite(vals)) and np.all(np.diff(vals) < 0)


def _constant_source_closed_form(f, t, kappa):
    out = []
    for o, c in f.windows:
        xi2 = sum(x * x for x in f.freqs(o, c.shape[1:]))
        z = kappa * np.broadcast_to(xi2, c.shape[1:])
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(z == 0, t, -np.expm1(-t * z) / z)
        out.append((o, fac * c))
    return SpectralField(f.box, out, f.ncomp)


def test_constant_source_duhamel():
    f = random_band_field(np.random.default_rng(5))
    for t in (0.05, 0.8):
        val, err = duhamel(lambda s: f, t, "heat", PhysicalParams(kappa=1.5))
        assert rel_l2(val, _constant_source_closed_form(f, t, 1.5)) < 1e-8
        assert err < 1e-8 * np.sqrt(np.sum(val.l2_squared()))


def test_identity_duhamel_integrates_polynomials():
    f = random_band_field(np.random.default_rng(6))
    val, _ = duhamel(lambda s: f.scaled(3 * s * s), 2.0, "identity")
    assert rel_l2(val, f.scaled(8.0)) < 1e-13


def test_quadrature_failure_reports_distance():
    f = random_band_field(np.random.default_rng(7))
    quad = QuadratureSpec(nodes=2, max_refine=1, rel_tol=1e-14)
    with pytest.raises(QuadratureError) as exc:
        duhamel(lambda s: f.scaled(np.sin(50 * s)), 1.0, "heat", quad=quad)
    assert exc.value.distance > 0


def test_m_factor_branches_agree():
    mpmath.mp.prec = 200
    t = 1.0
    for z in (0.99999e-4, 1.00001e-4, -0.99999e-4, -1.00001e-4, 0.0):
        ref = t if z == 0 else float(-mpmath.expm1(-t * mpmath.mpf(z)) / mpmath.mpf(z))
        assert float(m_factor(z, t)) == pytest.approx(ref, rel=1e-14)


def test_theta2_symbol_zero_time_and_orthogonal_pair():
    xi = np.array([1.0, 2.0])
    assert theta2_symbol(xi, np.array([0.5, -1.0]), 0.0) == 0.0
    # a = xi - eta orthogonal to eta gives a vanishing prefactor
    assert theta2_symbol(np.array([1.0, 1.0]), np.array([1.0, 0.0]), 0.3) == 0.0


def test_model_term_dual_paths():
    p = DataFamilyParams(3, 0.5, 2)
    u0 = build_initial_data(p, GridSpec(tail_tol=1e-3))
    for patch in u0.patches:
        quad_path, _ = gradient_energy_quadrature(patch.field, p.T_N)
        symbol_path = gradient_energy_symbol(patch.field, p.T_N)
        assert rel_l2(quad_path, symbol_path) < 1e-6
