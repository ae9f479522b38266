"""Dyadic frame and unit-cube partition."""

import numpy as np
import pytest

from nsinflation.field_rep import GridSpec, render_global
from nsinflation.construction import DataFamilyParams, build_initial_data
from nsinflation.norms import modulation_norm
from nsinflation.lp_frame import (build_cube_partition, build_lp_frame, chi1, cube_project,
                                  frequency_norm, lp_project)
from nsinflation.profile import radial_profile
from nsinflation.spectral import Box, SpectralField

# ||phi_0||_{L^3(R^3)} from an independent radial inverse transform
# (400-point Gauss-Legendre in |xi| over the annulus, 30-point panels in r up to 400)
PHI0_L3_R3 = 0.0973487253789


def _band_field(rng, n=8, lo=2.2, hi=3.8):
    """Random real scalar field on a box with spectrum inside lo <= |xi| <= hi."""
    box = Box((0.0, 0.0), (n, n))
    m = int(np.ceil(hi * n)) + 1
    ks = np.arange(-m, m + 1)
    kx, ky = np.meshgrid(ks, ks, indexing="ij")
    r = np.hypot(kx, ky) / n
    c = rng.standard_normal(kx.shape) + 1j * rng.standard_normal(kx.shape)
    c = np.where((r >= lo) & (r <= hi), c, 0)
    c = 0.5 * (c + np.conj(c[::-1, ::-1]))
    return SpectralField(box, [((-m, -m), c[None])], 1)


def _dense(f, n=64):
    return f.sample((n,) * f.d)


def test_partition_sum_at_unit_frequency():
    frame = build_lp_frame(-4, 4, 3)
    assert frame.partition_sum(frequency_norm([1.0, 0.0, 0.0])) == pytest.approx(1.0, abs=1e-15)


def test_band_vanishes_outside_annulus():
    frame = build_lp_frame(-4, 4, 3)
    assert frame.symbol(2, 16.0) == 0.0
    r = np.linspace(0, 40, 4001)
    for j in frame.bands:
        lo, hi = frame.annulus_bounds(j)
        outside = (r < lo) | (r > hi)
        assert np.all(frame.symbol(j, r[outside]) == 0.0)


def test_partition_of_unity_on_sample():
    frame = build_lp_frame(-6, 6, 2)
    rng = np.random.default_rng(1)
    r = 2.0 ** rng.uniform(-6, 6, 10_000)
    assert np.max(np.abs(frame.partition_sum(r) - 1.0)) < 1e-10


def test_dilation_identity_of_symbols():
    frame = build_lp_frame(-5, 5, 3)
    r = np.linspace(0.0, 3.0, 3001)
    for j in frame.bands:
        assert np.array_equal(frame.symbol(j, np.ldexp(r, j)), frame.symbol(0, r))


def test_kernel_dilation_covariance():
    frame = build_lp_frame(-2, 3, 2)
    r = np.linspace(0.0, 10.0, 501)
    for j in range(-2, 3):
        np.testing.assert_allclose(frame.kernel(j + 1, r), 4.0 * frame.kernel(j, 2 * r),
                                   rtol=1e-12, atol=1e-12 * abs(frame.kernel(j + 1, 0.0)))


def test_kernel_l3_norm_matches_radial_oracle():
    assert radial_profile(3).lp_norm(3) == pytest.approx(PHI0_L3_R3, rel=1e-9)


def test_rejects_bad_range_and_band():
    with pytest.raises(ValueError):
        build_lp_frame(3, 1, 2)
    frame = build_lp_frame(0, 2, 2)
    with pytest.raises(ValueError, match="band 5"):
        frame.symbol(5, 1.0)


def test_adjacent_bands_reproduce_band_limited_field():
    rng = np.random.default_rng(2)
    f = _band_field(rng)  # 2.2 <= |xi| <= 3.8 sits in the support of bands 1..2
    frame = build_lp_frame(-2, 5, 2)
    total = sum(_dense(lp_project(f, j, frame)) for j in (0, 1, 2, 3))
    ref = _dense(f)
    np.testing.assert_allclose(total, ref, atol=1e-10 * np.abs(ref).max())


def test_far_bands_annihilate_and_projection_is_linear():
    rng = np.random.default_rng(3)
    f, g = _band_field(rng), _band_field(rng)
    frame = build_lp_frame(-2, 5, 2)
    twice = lp_project(lp_project(f, 1, frame), 3, frame)
    assert twice.max_abs() == 0.0
    lhs = _dense(lp_project(SpectralField(f.box, f.windows + g.windows, 1), 2, frame))
    rhs = _dense(lp_project(f, 2, frame)) + _dense(lp_project(g, 2, frame))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * np.abs(rhs).max())
    zero = lp_project(SpectralField.zeros(f.box), 1, frame)
    assert zero.is_zero()


def test_data_spectrum_sits_around_carrier():
    p = DataFamilyParams(4, 0.5, 2)
    f = render_global(build_initial_data(p, GridSpec(tail_tol=1e-4))).spectral()
    frame = build_lp_frame(-1, 7, 2)
    energy = float(np.sum(f.l2_squared()))
    for j in [*range(-1, p.N - 1), p.N + 2, p.N + 3]:
        assert float(np.sum(lp_project(f, j, frame).l2_squared())) < 1e-10 * energy


def test_cube_partition_of_unity_and_support():
    part = build_cube_partition((-3.0, -3.0), (3.0, 3.0))
    rng = np.random.default_rng(4)
    xi = rng.uniform(-3, 3, (2, 10_000))
    assert np.max(np.abs(part.partition_sum([xi[0], xi[1]]) - 1)) < 1e-10
    s = np.linspace(-1, 3, 4001)
    assert np.all(chi1(s[(s <= 0) | (s >= 2)]) == 0)


def test_cube_projections_sum_to_field_and_respect_supports():
    rng = np.random.default_rng(5)
    f = _band_field(rng, lo=0.0, hi=2.5)
    part = build_cube_partition((-3.0, -3.0), (3.0, 3.0))
    acc = sum(_dense(cube_project(f, k, part)) for k in part.cubes())
    ref = _dense(f)
    np.testing.assert_allclose(acc, ref, atol=1e-10 * np.abs(ref).max())
    with pytest.raises(ValueError):
        cube_project(f, (40, 0), part)


def test_cube_count_of_rendered_data():
    p = DataFamilyParams(4, 0.5, 2)
    f = render_global(build_initial_data(p, GridSpec(tail_tol=1e-4))).spectral()
    rep = modulation_norm(f)
    assert 0 < len(rep.per_band) <= 2 * 5 ** 2
