import math

import numpy as np
import pytest

from phaselab.biphoton import adequate_grid, eval_dg, eval_phase_state, fedorov_analytic, z_phase
from phaselab.fields import ComplexField2D, Grid
from phaselab.optics import (AliasingError, SlitSpec, apply_lens_fold, double_slit_mask,
                             fresnel_propagate, fresnel_propagate_1d_axis, interference_density,
                             lens_cascade, lens_fold_map, max_safe_z, quadratic_phase, relay_4f,
                             scale_field, zbar_for_z)
from phaselab.recon import fedorov_from_jpd

UM, MM, NM = 1e-6, 1e-3, 1e-9
LAM = 810 * NM


def gaussian_field(n=1024, half=2 * MM, w0=100 * UM, w2=None):
    g = Grid.centered(n, half)
    x1, x2 = g.mesh()
    w2 = w0 if w2 is None else w2
    return ComplexField2D(g, np.exp(-x1 ** 2 / w0 ** 2 - x2 ** 2 / w2 ** 2)).normalized()


def rms_width(field, axis):
    rho = np.abs(field.values) ** 2
    marg = rho.sum(axis=1 if axis == 1 else 0)
    x = field.grid.coords(axis)
    mean = np.dot(x, marg) / marg.sum()
    return math.sqrt(np.dot((x - mean) ** 2, marg) / marg.sum())


def test_zero_distance_is_identity():
    f = gaussian_field(256)
    out = fresnel_propagate_1d_axis(f, 1, 0.0, LAM)
    assert np.abs(out.values - f.values).max() < 1e-14


def test_gaussian_beam_width():
    w0 = 100 * UM
    f = gaussian_field(1024, 2 * MM, w0)
    z = 30 * MM
    out = fresnel_propagate_1d_axis(f, 1, z, LAM)
    # the rms width of |E|^2 is w / 2 for E = exp(-x^2 / w^2)
    expect = w0 * math.sqrt(1 + (LAM * z / (math.pi * w0 ** 2)) ** 2) / 2
    assert rms_width(out, 1) == pytest.approx(expect, rel=5e-3)
    assert rms_width(out, 2) == pytest.approx(w0 / 2, rel=1e-9)


def test_axes_commute():
    f = gaussian_field(256, 2 * MM, 120 * UM, 80 * UM)
    a = fresnel_propagate_1d_axis(fresnel_propagate_1d_axis(f, 1, 10 * MM, LAM), 2, 10 * MM, LAM)
    b = fresnel_propagate_1d_axis(fresnel_propagate_1d_axis(f, 2, 10 * MM, LAM), 1, 10 * MM, LAM)
    assert np.abs(a.values - b.values).max() < 1e-12 * np.abs(a.values).max()


def test_propagation_composes():
    f = gaussian_field(512, 2 * MM, 100 * UM)
    a = fresnel_propagate(fresnel_propagate(f, 7 * MM, LAM), 5 * MM, LAM)
    b = fresnel_propagate(f, 12 * MM, LAM)
    assert np.abs(a.values - b.values).max() < 1e-10 * np.abs(b.values).max()


def test_aliasing_guard_names_safe_distance():
    f = gaussian_field(64, 0.2 * MM, 10 * UM)
    safe = max_safe_z(f, 1, LAM)
    with pytest.raises(AliasingError) as exc:
        fresnel_propagate_1d_axis(f, 1, 10 * safe, LAM)
    assert exc.value.max_safe_z == pytest.approx(safe)
    assert "m" in str(exc.value)
    with pytest.raises(AliasingError):
        fresnel_propagate_1d_axis(f, 1, 2 * safe, LAM, guard="nyquist")


@pytest.mark.parametrize("zf", [0.5, 1.0, 2.0])
def test_numerical_propagation_matches_closed_form(src, zf):
    z = zf * z_phase(src)
    g = adequate_grid(src, z, n=512)
    num = fresnel_propagate(eval_dg(src, g, 0.0), z, src.wavelength)
    exact = eval_dg(src, g, z).values
    # the transfer function drops a global phase; compare after aligning it
    ph = np.vdot(exact, num.values)
    aligned = num.values * np.conj(ph) / abs(ph)
    err = np.linalg.norm(aligned - exact) / np.linalg.norm(exact)
    assert err < 1e-3


def test_quadratic_phase_properties(src):
    f = eval_dg(src, adequate_grid(src, 0.0, n=256))
    assert np.array_equal(quadratic_phase(f, 1, 0.0, LAM).values, f.values)
    q = quadratic_phase(f, 2, 1 / (37 * MM), LAM)
    assert np.allclose(np.abs(q.values), np.abs(f.values), rtol=1e-12, atol=1e-14 * np.abs(f.values).max())
    assert fedorov_from_jpd(q.density()) == pytest.approx(fedorov_from_jpd(f.density()), rel=1e-12)


def test_lens_focuses_plane_wave():
    g = Grid.centered(2048, 2 * MM)
    x1, x2 = g.mesh()
    # soft-edged plane wave along x1, a narrow Gaussian along x2
    plane = ComplexField2D(g, np.exp(-(x1 / (1.2 * MM)) ** 16 - x2 ** 2 / (20 * UM) ** 2))
    f = 50 * MM
    out = fresnel_propagate_1d_axis(quadratic_phase(plane, 1, -1 / f, LAM), 1, f, LAM, guard="off")

    def peak_ratio(field):
        m = (np.abs(field.values) ** 2).sum(axis=1)
        return m.max() / m.sum()

    assert peak_ratio(out) >= 100 * peak_ratio(plane)


def test_scale_field_properties(src):
    f = eval_dg(src, adequate_grid(src, 0.3 * z_phase(src), n=128), 0.3 * z_phase(src))
    same = scale_field(f, 1, 1.0)
    assert same.grid == f.grid and np.array_equal(same.values, f.values)
    twice = scale_field(scale_field(f, 1, -1.0), 1, -1.0)
    assert np.allclose(twice.values, f.values, atol=0)
    assert twice.grid.x1 == pytest.approx(f.grid.x1, abs=1e-18)
    for s in (-3.0, -0.4, 0.25, 7.0):
        assert scale_field(f, 2, s).norm2() == pytest.approx(f.norm2(), abs=1e-12)
    with pytest.raises(ValueError):
        scale_field(f, 1, 0.0)


def test_lens_fold_map_values():
    m = lens_fold_map(60 * MM, 40 * MM, 120 * MM)
    assert m.z == pytest.approx(0.0, abs=1e-15)
    assert m.s == pytest.approx(-0.5, rel=1e-14)
    assert m.c == pytest.approx(1 / (80 * MM), rel=1e-14)
    assert lens_fold_map(60 * MM, 40 * MM, 80 * MM).z == pytest.approx(-20 * MM, rel=1e-12)
    assert lens_fold_map(60 * MM, 40 * MM, 40.0001 * MM).z < -10.0
    with pytest.raises(ValueError):
        lens_fold_map(60 * MM, 40 * MM, 40 * MM)


def test_zbar_for_z_inverts_fold(src):
    zb = zbar_for_z(60 * MM, 40 * MM, -z_phase(src))
    assert zb / MM == pytest.approx(87.48, abs=0.01)
    assert lens_fold_map(60 * MM, 40 * MM, zb).z == pytest.approx(-z_phase(src), rel=1e-12)


def test_folded_state_matches_free_propagation(src):
    u, f, zb = 60 * MM, 40 * MM, 100 * MM
    fold = lens_fold_map(u, f, zb)
    z = fold.z
    g = adequate_grid(src, z, n=512)
    detected = apply_lens_fold(eval_dg(src, g, z), fold, src.wavelength)
    assert fedorov_from_jpd(detected.density()) == pytest.approx(fedorov_analytic(src, z), abs=1e-3)
    # density after the fold equals the propagated density on rescaled axes
    assert np.allclose(np.sort(detected.density().values.ravel()),
                       np.sort(eval_dg(src, g, z).density().values.ravel()), atol=1e-15)


def test_lens_cascade_matches_fold_density():
    g = Grid.centered(2048, 6 * MM)
    x1, x2 = g.mesh()
    psi = ComplexField2D(g, np.exp(-(x1 - x2) ** 2 / (4 * (60 * UM) ** 2)
                                   - (x1 + x2) ** 2 / (4 * (300 * UM) ** 2))).normalized()
    u, f, zb = 60 * MM, 40 * MM, 120 * MM
    out = lens_cascade(psi, u, f, zb, LAM)
    # imaging plane: inverted copy with magnification 2
    fold = lens_fold_map(u, f, zb)
    ref = apply_lens_fold(psi, fold, LAM)
    assert fedorov_from_jpd(out.density()) == pytest.approx(fedorov_from_jpd(ref.density()), rel=1e-3)


def test_double_slit_mask_values():
    slit = SlitSpec(400 * UM, 150 * UM)
    assert double_slit_mask(0.0, slit) == 0
    assert double_slit_mask(200 * UM, slit) == 1
    assert double_slit_mask(-200 * UM, slit) == 1
    assert double_slit_mask(280 * UM, slit) == 0
    assert double_slit_mask(275 * UM, slit) == 1  # closed edge
    with pytest.raises(ValueError):
        SlitSpec(100 * UM, 150 * UM)


def ds_input(src, z):
    g = Grid.centered(1024, 1536 * UM)
    return relay_4f(eval_dg(src, g, z), 75 * MM, 150 * MM)


def test_relay_magnifies_and_inverts(src_ds):
    psi = ds_input(src_ds, 0.0)
    assert psi.grid.dx1 == pytest.approx(2 * 3 * UM)
    assert psi.norm2() == pytest.approx(1.0, abs=1e-12)


def test_interference_density_mass_and_symmetry(src_ds):
    slit = SlitSpec(400 * UM, 150 * UM)
    for z in (0.0, z_phase(src_ds)):
        rho = interference_density(ds_input(src_ds, z), slit, 125 * MM, LAM)
        assert rho.mass == pytest.approx(1.0, abs=1e-12)
        assert np.abs(rho.values - rho.values.T).max() < 1e-12 * rho.values.max()
        assert rho.grid.dx1 == pytest.approx(LAM * 125 * MM / (1024 * 6 * UM))


def test_interference_fringe_period(src_ds):
    slit = SlitSpec(400 * UM, 150 * UM)
    rho = interference_density(ds_input(src_ds, z_phase(src_ds)), slit, 125 * MM, LAM)
    m = rho.values.sum(axis=1)
    spec = np.abs(np.fft.rfft(m - m.mean()))
    freqs = np.fft.rfftfreq(m.size, rho.grid.dx1)
    period = LAM * 125 * MM / (400 * UM)
    band = (freqs > 0.5 / period) & (freqs < 2 / period)
    k = np.flatnonzero(band)[np.argmax(spec[band])]
    assert 1 / freqs[k] == pytest.approx(LAM * 125 * MM / (400 * UM), rel=0.07)
    assert LAM * 125 * MM / (400 * UM) / UM == pytest.approx(253.1, abs=0.1)


def test_interference_requires_resolved_slit(src_ds):
    g = Grid.centered(64, 1536 * UM)
    psi = eval_dg(src_ds, g, 0.0, check=False)
    with pytest.raises(ValueError, match="samples"):
        interference_density(psi, SlitSpec(400 * UM, 150 * UM), 125 * MM, LAM)


def test_phase_state_unaffected_by_quadratic_phase(src):
    g = adequate_grid(src, z_phase(src), n=256)
    psi = eval_phase_state(src, g)
    q = quadratic_phase(quadratic_phase(psi, 1, 3.0, LAM), 2, -1.5, LAM)
    assert np.array_equal(q.density().values, psi.density().values) or \
        np.abs(q.density().values - psi.density().values).max() < 1e-16
