"""Data family, its Besov size, cross terms and the model temperature term."""

import math

import numpy as np
import pytest

from nsinflation.construction import (DataFamilyParams, build_initial_data, cross_term_report,
                                      cross_term_sweep, initial_besov_check, theta2_lower_report)
from nsinflation.field_rep import GridSpec, render_global

SPEC = GridSpec(tail_tol=1e-4)


def test_family_parameters():
    p = DataFamilyParams(4, 0.5, 3)
    assert p.R == pytest.approx(1 / math.log(4))
    assert p.T_N == pytest.approx(0.1 * 2.0 ** -8)
    assert list(p.scales) == [-2, -1, 0]
    assert p.certified is False and DataFamilyParams(4, 0.25).certified is True
    with pytest.raises(ValueError):
        DataFamilyParams(1, 0.5)
    with pytest.raises(ValueError):
        DataFamilyParams(4, 1.0)


def test_atoms_of_three_dimensional_family():
    p = DataFamilyParams(4, 0.5, 3)
    u0 = build_initial_data(p, SPEC)
    by_j = {a.j: a for a in u0.atoms}
    assert sorted(by_j) == [-2, -1, 0]
    base = p.R * 4 ** (-1 / 3)
    for j, factor in ((-2, 2 ** 4), (-1, 2 ** 2), (0, 1)):
        a = by_j[j]
        assert a.amplitude == pytest.approx(base * factor, rel=1e-15)
        assert a.center == (2 ** (abs(j) + 8), 0, 0)
        assert a.omega == 16 and a.parity == "sin" and a.component == 0


def test_data_is_real_first_component_and_two_clustered():
    p = DataFamilyParams(3, 0.5, 2)
    f = render_global(build_initial_data(p, SPEC)).spectral()
    assert f.realness_defect() < 1e-12
    total = near = 0.0
    for off, c in f.windows:
        assert np.all(c[1] == 0)
        xi = f.freqs(off, c.shape[1:])
        mass = np.abs(c[0]) ** 2
        dist = np.minimum(np.hypot(xi[0] - 8, xi[1]), np.hypot(xi[0] + 8, xi[1]))
        total += mass.sum()
        near += mass[dist <= 2].sum()
    assert near >= (1 - 1e-10) * total


def test_besov_ratio_small_delta_and_zero_family():
    small, r_small = initial_besov_check(DataFamilyParams(20, 0.1, 2))
    _, r_half = initial_besov_check(DataFamilyParams(8, 0.5, 2))
    assert small > 0 and 1 / 3 <= r_small / r_half <= 3
    assert initial_besov_check(DataFamilyParams(3, 0.5, 2, R=0.0)) == (0.0, 0.0)


def test_single_atom_family_has_no_cross_terms():
    rep = cross_term_report(DataFamilyParams(3, 0.25, 2))
    assert rep.sum_pair == rep.sum_far == rep.sum_triple == 0.0


def test_cross_terms_patch_path_matches_global_box():
    p = DataFamilyParams(3, 0.5, 2)
    a, b = cross_term_report(p), cross_term_report(p, global_box=True)
    for name in ("sum_pair", "sum_far", "sum_triple"):
        assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-6, abs=1e-300)


def test_cross_term_sweep_reports_slopes():
    sweep = cross_term_sweep([3, 4, 5], 0.25, 2)
    assert set(sweep.slopes) == {"pair", "far", "triple"}
    assert len(sweep.reports) == 3
    assert sweep.slopes["pair"] < 0


def test_theta2_quantities_scale_quadratically():
    p = DataFamilyParams(3, 0.5, 2)
    r1 = theta2_lower_report(p)
    r2 = theta2_lower_report(p.with_(R=2 * p.R))
    for name in ("main_F", "lowfreq", "full_band"):
        assert getattr(r2, name) == pytest.approx(4 * getattr(r1, name), rel=1e-10)
    assert r1.lowfreq <= r1.full_band
    zero = theta2_lower_report(p.with_(R=0.0))
    assert zero.main_F == zero.lowfreq == zero.full_band == 0.0
