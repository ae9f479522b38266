"""Lebesgue, Besov and modulation norms and the measured-constant probes."""

import numpy as np
import pytest

from _oracles import random_band_field
from nsinflation.field_rep import BumpAtom, GridSpec, assemble_patchfield, render_global
from nsinflation.lp_frame import build_lp_frame
from nsinflation.norms import (NormReport, besov_norm, bilinear_constant_probe, lp_norm,
                               maximal_regularity_probe, modulation_norm)
from nsinflation.spectral import Box, SpectralField, sum_fields

SPEC = GridSpec(tail_tol=1e-8)


def _bump(j, amplitude=1.0, omega=0, d=2):
    return assemble_patchfield([BumpAtom(j, (0,) * d, amplitude, omega, "cos", 0, d)], SPEC)


def test_zero_field_norms_vanish():
    z = SpectralField.zeros(Box((0, 0), (2, 2)))
    assert lp_norm(z, 3) == 0.0
    assert besov_norm(z, 0, 2, 1, None, build_lp_frame(-2, 2, 2)).total == 0.0
    assert modulation_norm(z).total == 0.0


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_lp_dyadic_ratio(p):
    a, b = lp_norm(_bump(0), p), lp_norm(_bump(1), p)
    assert b / a == pytest.approx(2 ** (2 * (1 - 1 / p)), rel=1e-8)


def test_lp_homogeneity():
    f = random_band_field(np.random.default_rng(0))
    assert lp_norm(f.scaled(-2.5), 3) == pytest.approx(2.5 * lp_norm(f, 3), rel=1e-13)


def test_besov_single_annulus_frame_bounds():
    rng = np.random.default_rng(1)
    f = random_band_field(rng, n=8, K=1)
    f = f.multiply_symbol(lambda xis: ((np.hypot(*xis) >= 0.6) & (np.hypot(*xis) <= 0.95))
                          .astype(float))
    rep = besov_norm(f, 0, 3, 1, None, build_lp_frame(-3, 2, 2))
    top = max(rep.per_band.values())
    assert top <= rep.total <= 3 * top
    assert sum(v > 0 for v in rep.per_band.values()) <= 3


def test_besov_dilation_covariance():
    frame = build_lp_frame(-4, 4, 2)
    for p in (2.0, 3.0):
        f = besov_norm(_bump(0), 0, p, 1, None, frame).total
        g = besov_norm(_bump(1, amplitude=0.25), 0, p, 1, None, frame).total  # f(2x)
        assert g == pytest.approx(2 ** (-2 / p) * f, rel=1e-10)


def test_report_total_recomputes_and_argmax_is_scale_invariant():
    frame = build_lp_frame(-4, 4, 2)
    f = _bump(0)
    rep = besov_norm(f, 0.5, 3, 1, None, frame)
    assert rep.recompute_total() == pytest.approx(rep.total, rel=1e-12)
    assert all(v >= 0 for v in rep.per_band.values())
    scaled = besov_norm(f.scaled(3.0), 0.5, 3, 1, None, frame)
    assert scaled.argmax() == rep.argmax()
    for j, v in rep.per_band.items():
        assert scaled.per_band[j] == pytest.approx(3 * v, rel=1e-12)
    back = NormReport.from_json(rep.to_json())
    assert back.total == rep.total and back.per_band == rep.per_band


def test_modulation_norm_shift_covariance():
    f = random_band_field(np.random.default_rng(2), n=2, K=1)
    base = modulation_norm(f).total
    (o, c), = f.windows
    shifted = SpectralField(f.box, [((o[0] + 2 * 3, o[1] - 2 * 1), c)], 1)  # xi -> xi + (3, -1)
    assert modulation_norm(shifted).total == pytest.approx(base, rel=1e-12)


def test_triangle_inequality_for_all_kinds():
    rng = np.random.default_rng(3)
    frame = build_lp_frame(-2, 3, 2)
    kinds = [lambda x: lp_norm(x, 3), lambda x: besov_norm(x, 0, 3, 1, None, frame).total,
             lambda x: modulation_norm(x).total]
    for _ in range(3):
        f, g = (random_band_field(rng).multiply_symbol(lambda xis: np.hypot(*xis) > 0)
                for _ in range(2))
        s = sum_fields([f, g])
        for norm in kinds:
            assert norm(s) <= norm(f) + norm(g) + 1e-10


def test_modulation_dominates_l3():
    rng = np.random.default_rng(4)
    ratios = [modulation_norm(f).total / lp_norm(f, 3)
              for f in (random_band_field(rng) for _ in range(5))]
    assert min(ratios) >= 1.0 - 1e-6


def test_patch_and_global_paths_agree():
    atoms = [BumpAtom(j, (2 ** (abs(j) + 6), 0), 2.0 ** -j, 8, "sin", 0, 2) for j in (-1, 0)]
    pf = assemble_patchfield(atoms, GridSpec(tail_tol=1e-6))
    g = render_global(pf)
    frame = build_lp_frame(-4, 6, 2)
    assert lp_norm(g, 3) == pytest.approx(lp_norm(pf, 3), rel=1e-6)
    assert besov_norm(g, 0, 2, 1, None, frame).total == pytest.approx(
        besov_norm(pf, 0, 2, 1, None, frame).total, rel=1e-6)


def test_bilinear_probe_identity_element():
    f = random_band_field(np.random.default_rng(5))
    one = SpectralField(f.box, [((0, 0), np.ones((1, 1, 1), dtype=complex))], 1)
    assert bilinear_constant_probe(f, one) == pytest.approx(1 / modulation_norm(one).total,
                                                            rel=1e-10)
    with pytest.raises(ZeroDivisionError):
        bilinear_constant_probe(f, SpectralField.zeros(f.box))


def test_maximal_regularity_zero_and_shape():
    zero = SpectralField.zeros(Box((0, 0), (2, 2)), ncomp=2)
    curve = maximal_regularity_probe(zero, [0.1, 1.0])
    assert np.all(curve.values == 0)
    f = _bump(0)
    curve = maximal_regularity_probe(f, [0.1, 1.0, 10.0, 100.0])
    assert np.all(np.diff(curve.values) >= 0)
    # a single annulus dissipates on an O(1) time scale: the curve plateaus
    assert curve.values[-1] / curve.values[-2] - 1 < 0.01
    assert np.isfinite(curve.fit_a) and curve.fit_residual >= 0
