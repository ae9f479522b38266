"""Atoms, patch fields, dense rendering and the grid file format."""

import math

import mpmath
import numpy as np
import pytest

from nsinflation.construction import DataFamilyParams, build_initial_data
from nsinflation.field_rep import (BumpAtom, GridField, GridSpec, MemoryCapExceeded,
                                   assemble_patchfield, atom_to_grid, render_global)
from nsinflation.lp_frame import build_lp_frame
from nsinflation.norms import besov_norm
from nsinflation.profile import radial_profile


def test_zero_amplitude_atom_renders_zero():
    g = atom_to_grid(BumpAtom(0, (0, 0), 0.0, 8, "sin", 0, 2), GridSpec(tail_tol=1e-4))
    assert np.all(g.values == 0)


def test_unmodulated_atom_peak_matches_profile():
    g = atom_to_grid(BumpAtom(0, (0, 0), 1.0, 0, "cos", 0, 2), GridSpec(tail_tol=1e-6))
    peak = radial_profile(2)(np.array([0.0]))[0]
    assert np.max(np.abs(g.values)) == pytest.approx(peak, rel=1e-10)


def test_coarse_spacing_is_rejected():
    with pytest.raises(ValueError, match="spacing"):
        atom_to_grid(BumpAtom(0, (0, 0), 1.0, 16, "sin", 0, 2), spacing=1.0)


def test_atom_spectrum_stays_in_shifted_annulus():
    p = DataFamilyParams(4, 0.5, 3)
    atom = build_initial_data(p, GridSpec(tail_tol=1e-4)).atoms[0]
    assert atom.j == -2
    f = assemble_patchfield([atom], GridSpec(tail_tol=1e-4)).patches[0].field.coalesced()
    total = outside = 0.0
    for off, c in f.windows:
        xi = f.freqs(off, c.shape[1:])
        mass = np.sum(np.abs(c) ** 2, axis=0)
        dist = np.minimum(np.sqrt((xi[0] - 16) ** 2 + xi[1] ** 2 + xi[2] ** 2),
                          np.sqrt((xi[0] + 16) ** 2 + xi[1] ** 2 + xi[2] ** 2))
        total += mass.sum()
        outside += mass[(dist < 2.0 ** -3) | (dist > 2.0)].sum()
    assert outside < 1e-10 * total


def test_family_patch_counts_and_overlaps():
    spec = GridSpec(tail_tol=1e-4)
    single = assemble_patchfield([BumpAtom(0, (256, 0), 1.0, 16, "sin", 0, 2)], spec)
    assert len(single.patches) == 1 and single.overlaps == []
    assert len(build_initial_data(DataFamilyParams(4, 0.5, 2), spec).patches) == 3


def test_overlap_flag_matches_box_intersection():
    spec = GridSpec(tail_tol=1e-6)
    a = BumpAtom(0, (2 ** 8, 0), 1.0, 16, "sin", 0, 2)
    b = BumpAtom(-1, (2 ** 9, 0), 1.0, 16, "sin", 0, 2)
    pf = assemble_patchfield([a, b], spec)
    intersect = abs(b.center[0] - a.center[0]) < a.radius(spec.tail_tol) + b.radius(spec.tail_tol)
    assert bool(pf.overlaps) == intersect


def test_patch_evaluation_is_sum_of_atoms():
    p = DataFamilyParams(3, 0.5, 2)
    pf = build_initial_data(p, GridSpec(tail_tol=1e-6))
    rng = np.random.default_rng(0)
    for patch in pf.patches:
        pts = rng.uniform(-5, 5, (50, 2))
        sample = patch.field.evaluate(pts + np.array(patch.box.center) - patch.box.center)
        direct = sum(pf.atoms[i].evaluate(pts, patch.box.center) for i in patch.atom_indices)
        scale = max(abs(pf.atoms[i].amplitude) for i in patch.atom_indices)
        np.testing.assert_allclose(sample[pf.atoms[0].component], direct,
                                   atol=1e-6 * scale)  # tail truncation at 1e-6


def test_linearity_of_assembly():
    spec = GridSpec(tail_tol=1e-6)
    A = [BumpAtom(0, (64, 0), 1.0, 8, "sin", 0, 2)]
    B = [BumpAtom(-1, (128, 0), 0.5, 8, "sin", 0, 2)]
    pts = np.random.default_rng(1).uniform(0, 200, (40, 2))
    both = assemble_patchfield(A + B, spec).evaluate(pts, (0, 0))
    sep = assemble_patchfield(A, spec).evaluate(pts, (0, 0)) + \
        assemble_patchfield(B, spec).evaluate(pts, (0, 0))
    np.testing.assert_allclose(both, sep, atol=1e-12)


def test_exact_carrier_phase_against_high_precision():
    rng = np.random.default_rng(2)
    mpmath.mp.prec = 256
    for _ in range(100):
        N = int(rng.integers(2, 9))
        j = -int(rng.integers(0, N // 2 + 1))
        atom = BumpAtom(j, (2 ** (abs(j) + 2 * N), 0), 1.0, 2 ** N, "sin", 0, 2)
        ref = float(mpmath.sin(mpmath.mpf(2 ** N) * atom.center[0]))
        assert math.sin(atom.carrier_phase()) == pytest.approx(ref, abs=1e-15)


def test_render_matches_patchwork_besov_norm():
    p = DataFamilyParams(2, 0.5, 2)
    pf = build_initial_data(p, GridSpec())
    frame = build_lp_frame(-3, 4, 2)
    a = besov_norm(pf, 0, 2, 1, None, frame).total
    b = besov_norm(render_global(pf).spectral(), 0, 2, 1, None, frame).total
    assert b == pytest.approx(a, rel=1e-6)


def test_render_is_linear_and_roundtrips(tmp_path):
    pf = build_initial_data(DataFamilyParams(2, 0.5, 2), GridSpec(tail_tol=1e-4))
    g1 = render_global(pf)
    g2 = render_global(pf.scaled(2.0))
    np.testing.assert_allclose(g2.values, 2 * g1.values, atol=1e-12 * np.abs(g1.values).max())
    assert g1.roundtrip_error() < 1e-12
    path = g1.dump(tmp_path / "u0.grid")
    back = GridField.load(path)
    assert back.box == g1.box and np.array_equal(back.values, g1.values)


def test_render_respects_memory_cap():
    pf = build_initial_data(DataFamilyParams(2, 0.5, 2), GridSpec(tail_tol=1e-4, memory_cap=1000))
    with pytest.raises(MemoryCapExceeded, match="patch path"):
        render_global(pf)
