import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phaselab.analysis import delta_g2
from phaselab.biphoton import DGSource, eval_dg, widths_at, z_phase
from phaselab.camera import CameraModel, DGPairs, GridPairs, UncorrelatedPairs, render_frames
from phaselab.denoise import (BloomBaseline, bloom_baseline, bloom_shape, butterworth_bandpass,
                              butterworth_response, clean_pipeline, dwt2, idwt2, kde_smooth,
                              marginal_cutoff, marginal_highpass, subtract_baseline, tv_denoise,
                              _radial_freq)
from phaselab.fields import Grid, JPD2
from phaselab.fitting import dg_model, fit_gaussian_1d
from phaselab.optics import SlitSpec, interference_density, lens_fold_map, relay_4f
from phaselab.recon import gamma_4d, reduce_x

PITCH = 16e-6


def pixel_grid(n):
    return Grid(n, n, 1.0, 1.0, -n / 2 + 0.5, -n / 2 + 0.5)


# --------------------------------------------------------------------------- Butterworth

def test_butterworth_dc_removed():
    img = np.random.default_rng(0).random((32, 32)) + 5.0
    out = butterworth_bandpass(img, 0.05, 0.4)
    assert abs(out.mean()) < 1e-12
    assert out.dtype == np.float64


def test_butterworth_sinusoid_at_band_centre():
    n = 128
    f = 16 / n
    f_lo, f_hi = f / 2, 2 * f  # geometric centre is f
    i = np.arange(n)[:, None]
    img = np.cos(2 * np.pi * f * i) * np.ones((1, n))
    out = butterworth_bandpass(img, f_lo, f_hi, order=3)
    h = 1 / (1 + 0.5 ** 6) ** 2
    assert float(butterworth_response(f, f_lo, f_hi, 3)) == pytest.approx(h, abs=1e-15)
    assert np.abs(out - h * img).max() < 1e-6


def test_butterworth_constant_passes_without_low_cut():
    img = np.full((16, 20), 3.25)
    assert np.abs(butterworth_bandpass(img, 0.0, 0.5) - img).max() < 1e-12


@pytest.mark.parametrize("band", [(0.3, 0.2), (-0.1, 0.2), (0.1, 0.6), (0.2, 0.2)])
def test_butterworth_invalid_band(band):
    with pytest.raises(ValueError):
        butterworth_bandpass(np.zeros((4, 4)), *band)


# --------------------------------------------------------------------------- wavelets

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(17, 60), st.integers(17, 60), st.integers(1, 2))
def test_wavelet_perfect_reconstruction(seed, n1, n2, levels):
    img = np.random.default_rng(seed).normal(size=(n1, n2))
    assert np.abs(idwt2(dwt2(img, levels)) - img).max() < 1e-12


def test_wavelet_constant_has_no_details():
    pyr = dwt2(np.full((32, 32), 2.5), 2)
    for lvl in pyr.details:
        for d in lvl:
            assert np.abs(d).max() < 1e-12


def test_wavelet_parseval(rng):
    img = rng.normal(size=(64, 48))
    pyr = dwt2(img, 3)
    energy = np.sum(pyr.approx ** 2) + sum(np.sum(d ** 2) for lvl in pyr.details for d in lvl)
    assert energy == pytest.approx(np.sum(img ** 2), abs=1e-10)


# --------------------------------------------------------------------------- marginal high-pass

def gaussian_marginal(n=64, s=6.0):
    x = np.arange(n) - n / 2
    g = np.exp(-0.5 * (x / s) ** 2)
    return g / g.sum()


def test_marginal_product_removed():
    g = gaussian_marginal()
    img = np.outer(g, g)
    out = marginal_highpass(img, g)
    assert np.sum(out ** 2) < 0.02 * np.sum(img ** 2)


def test_fringes_above_cutoff_preserved():
    n = 64
    g = gaussian_marginal(n)
    cut = marginal_cutoff(g)
    f = 16 / n
    assert f > 2 * cut
    fringe = np.cos(2 * np.pi * f * np.arange(n))[:, None] * np.ones((1, n))
    out = marginal_highpass(fringe, g)
    amp = np.abs(np.fft.fft2(out))[16, 0] / np.abs(np.fft.fft2(fringe))[16, 0]
    assert amp == pytest.approx(1.0, abs=0.05)


def test_zero_image_stays_zero():
    assert np.array_equal(marginal_highpass(np.zeros((16, 16)), gaussian_marginal(16, 2.0)),
                          np.zeros((16, 16)))


def test_flat_marginal_needs_manual_cutoff():
    with pytest.raises(ValueError, match="cutoff"):
        marginal_highpass(np.ones((16, 16)), np.ones(16))
    out = marginal_highpass(np.ones((16, 16)), cutoff=0.1)
    assert np.abs(out).max() < 1e-12


# --------------------------------------------------------------------------- TV

def test_tv_zero_weight_identity(rng):
    img = rng.normal(size=(16, 16))
    assert np.array_equal(tv_denoise(img, 0.0), img)


def test_tv_constant_fixed_point():
    img = np.full((20, 20), 1.5)
    assert np.abs(tv_denoise(img, 0.3) - img).max() < 1e-12


def test_tv_step_edge(rng):
    n = 64
    clean = np.zeros((n, n))
    clean[:, 32:] = 1.0
    noisy = clean + rng.normal(0, 0.1, clean.shape)
    res = tv_denoise(noisy, return_history=True)
    out = res.image
    assert np.var(noisy - clean) >= 4 * np.var(out - clean)
    edge = np.argmax(np.abs(np.diff(out.mean(axis=0))))
    assert abs(edge - 31) <= 1
    assert np.all(np.diff(res.objective) <= 1e-9 * res.objective[0])


def test_tv_rejects_negative_weight():
    with pytest.raises(ValueError):
        tv_denoise(np.zeros((4, 4)), -1.0)


# --------------------------------------------------------------------------- kernel smoothing

def test_kde_delta_limit(rng):
    rho = JPD2(pixel_grid(16), rng.random((16, 16)))
    assert np.abs(kde_smooth(rho, 0.05).values - rho.values).max() < 1e-6


def test_kde_mass_preserved(rng):
    rho = JPD2(pixel_grid(32), rng.random((32, 32)))
    assert kde_smooth(rho, 1.7).mass == pytest.approx(rho.mass, abs=1e-12)


def test_kde_point_mass_width():
    v = np.zeros((65, 65))
    v[32, 32] = 1.0
    out = kde_smooth(JPD2(pixel_grid(65), v), 3.0).values
    prof = out.sum(axis=1)
    x = np.arange(65) - 32
    assert np.sqrt(np.dot(x ** 2, prof) / prof.sum()) == pytest.approx(3.0, rel=0.01)


def test_kde_needs_positive_bandwidth():
    with pytest.raises(ValueError):
        kde_smooth(JPD2(pixel_grid(4), np.ones((4, 4))), 0.0)


# --------------------------------------------------------------------------- bloom baseline

def test_bloom_shape_structure():
    rho = JPD2(pixel_grid(96), np.ones((96, 96)))
    shape = bloom_shape(rho, 1.9, 48.3, center=0.0)
    assert np.all(np.diag(shape) == 0)
    i = np.arange(96)
    # first off-diagonal: offset 1 across the diagonal, beam profile along it
    ridge = np.array([shape[k + 1, k] for k in range(95)])
    centre = 0.5 * (2 * i[:95] + 1) - 47.5
    expected = np.exp(-0.5 / 1.9 ** 2 - 0.5 * (centre / 48.3) ** 2)
    assert np.allclose(ridge, expected, rtol=1e-12)


def test_bloom_free_input_is_left_alone(rng):
    g = pixel_grid(48)
    x1, x2 = g.mesh()
    signal = dg_model(x1, x2, 1.0, 3.0, 30.0)  # anti-diagonal
    noisy = signal + rng.normal(0, 1e-3, signal.shape)
    v = np.abs(x1 + x2)
    base = bloom_baseline(JPD2(g, noisy), 1.9, 12.0, exclude=v <= 12.0)
    out = subtract_baseline(JPD2(g, noisy), base)
    assert abs(base.amplitude) < 5e-3
    assert np.abs(out.values - noisy).max() < 5e-3


def test_bloom_weight_recovered(rng):
    g = pixel_grid(64)
    x1, x2 = g.mesh()
    signal = dg_model(x1, x2, 1.0, 2.5, 25.0)
    rho = JPD2(g, signal)
    bloom = 0.4 * bloom_shape(rho, 1.9, 15.0, center=0.0)
    base = bloom_baseline(JPD2(g, signal + bloom), 1.9, 15.0, center=0.0,
                          exclude=np.abs(x1 + x2) <= 6 * 2.5)
    assert base.amplitude == pytest.approx(0.4, rel=1e-3)
    cleaned = subtract_baseline(JPD2(g, signal + bloom), base)
    assert np.abs(cleaned.values - signal).max() < 1e-3


def test_bloom_overlapping_bands_warn():
    rho = JPD2(pixel_grid(16), np.ones((16, 16)))
    with pytest.warns(RuntimeWarning):
        with pytest.raises(ValueError, match="weight"):
            bloom_baseline(rho, 1.0, 5.0, signal_halfwidth=10.0)
    with pytest.warns(RuntimeWarning):
        base = bloom_baseline(rho, 1.0, 5.0, signal_halfwidth=10.0, weight=0.2)
    assert base.amplitude == 0.2
    with pytest.raises(ValueError):
        BloomBaseline(0.0, 1.0, 1.0, rho)


def test_subtract_baseline_grid_check():
    a = JPD2(pixel_grid(8), np.ones((8, 8)))
    b = JPD2(pixel_grid(9), np.ones((9, 9)))
    with pytest.raises(ValueError):
        subtract_baseline(a, b)


# --------------------------------------------------------------------------- pipeline

def test_pipeline_deterministic_and_reports(rng):
    g = pixel_grid(32)
    x1, x2 = g.mesh()
    rho = JPD2(g, dg_model(x1, x2, 1.0, 12.0, 2.0) + rng.normal(0, 0.02, (32, 32)))
    for profile in ("propagation", "interference"):
        a = clean_pipeline(rho, profile, report=True)
        b = clean_pipeline(rho, profile, report=True)
        assert np.array_equal(a.jpd.values, b.jpd.values)
        assert a.stages[0] == ("input", rho.mass)
        assert len(a.stages) >= 2
    with pytest.raises(ValueError, match="profile"):
        clean_pipeline(rho, "median")


@pytest.mark.parametrize("profile", ["propagation", "interference"])
@pytest.mark.parametrize("sp,sm", [(14.0, 2.5), (2.5, 14.0)])
def test_pipeline_keeps_ridge_orientation(rng, profile, sp, sm):
    g = pixel_grid(48)
    x1, x2 = g.mesh()
    rho = JPD2(g, dg_model(x1, x2, 1.0, sp, sm) + rng.normal(0, 0.05, (48, 48)))
    out = clean_pipeline(rho, profile, ridge_width_px=max(sp, sm)).values
    diag = np.trace(out)
    anti = np.trace(out[:, ::-1])
    assert (diag > anti) == (sm < sp)


def ridge_snr(est, truth):
    t = truth / truth.max()
    return est[t > 0.5].mean() / est[t < 1e-3].std()


def beam_width_px(stack):
    prof = stack.mean_occupancy().mean(axis=0)
    return fit_gaussian_1d(np.arange(prof.size), prof).std


def simulated_rho(pairs, frames, width=48, **cam_kw):
    from phaselab.camera import pairs_for_occupancy
    geo = CameraModel(width=width, height=width)
    cam = CameraModel(width=width, height=width, mu=pairs_for_occupancy(pairs, geo, 0.05), **cam_kw)
    stack = render_frames(pairs, cam, frames, workers=4)
    rho = reduce_x(gamma_4d(stack, cam.eta, cam.mu, workers=4))
    x1, x2 = np.meshgrid(rho.grid.x1, rho.grid.x1, indexing="ij")
    return stack, rho, dg_model(x1, x2, 1.0, pairs.sigma_plus, pairs.sigma_minus)


def test_clean_focal_plane_with_bloom(src):
    """Focal-plane anti-correlation with bloom and background: bloom subtraction then band-pass."""
    pairs = DGPairs.far_field(src, 40e-3)
    stack, rho, truth = simulated_rho(pairs, 20_000, bloom_prob=0.3, bg_rate=2.0, seed=3)
    narrow = pairs.sigma_plus / PITCH
    n = rho.n1
    i = np.arange(n)
    crossing = np.abs(i[:, None] + i[None, :] - (n - 1)) <= 6 * narrow
    base = bloom_baseline(rho, 1.9, beam_width_px(stack), exclude=crossing)
    out = clean_pipeline(rho, "propagation", bloom=base, ridge_width_px=pairs.sigma_minus / PITCH,
                         f_hi=0.5 / narrow)
    assert ridge_snr(out.values, truth) >= 5 * ridge_snr(rho.values, truth)


def test_clean_propagation_plane(src):
    """Intermediate plane (zbar = 100 mm): band-pass only."""
    pairs = DGPairs.folded(src, lens_fold_map(60e-3, 40e-3, 100e-3))
    _, rho, truth = simulated_rho(pairs, 10_000, bg_rate=2.0, seed=3)
    narrow = min(pairs.sigma_plus, pairs.sigma_minus) / PITCH
    wide = max(pairs.sigma_plus, pairs.sigma_minus) / PITCH
    out = clean_pipeline(rho, "propagation", ridge_width_px=wide, f_hi=0.5 / narrow)
    assert ridge_snr(out.values, truth) >= 5 * ridge_snr(rho.values, truth)


def test_clean_interference(src_ds):
    """Phase-state double-slit density: wavelet, marginal high-pass, TV and kde."""
    z = z_phase(src_ds)
    w = widths_at(src_ds, z)
    grid = Grid.centered(1024, 2.5 * (w.sigma_plus_z + w.sigma_minus_z))
    psi = relay_4f(eval_dg(src_ds, grid, z), 75e-3, 150e-3)
    dens = interference_density(psi, SlitSpec(400e-6, 150e-6), 125e-3, src_ds.wavelength)
    n = 64
    # noise-free density binned onto the pixels
    edges = (np.arange(n + 1) - n / 2) * PITCH
    idx = np.searchsorted(edges, dens.grid.x1) - 1
    ok = (idx >= 0) & (idx < n)
    truth = np.zeros((n, n))
    np.add.at(truth, (idx[ok][:, None], idx[ok][None, :]), dens.values[np.ix_(ok, ok)])

    cam = CameraModel(width=n, height=n, mu=14.3, seed=2)  # peak occupancy ~0.05
    stack = render_frames(GridPairs(dens), cam, 20_000, workers=4)
    rho = reduce_x(gamma_4d(stack, cam.eta, cam.mu, workers=4))
    out = clean_pipeline(rho, "interference", bandwidth=1.0)

    spec = np.abs(np.fft.fft2(truth))
    spec[0, 0] = 0
    support = spec > 0.01 * spec.max()
    fringes = support & (_radial_freq(truth.shape) >= 2 * marginal_cutoff(truth.sum(axis=1)))

    def fringe_snr(img):
        f = np.abs(np.fft.fft2(img))
        return np.sqrt(np.mean(f[fringes] ** 2)) / np.sqrt(np.mean(f[~support] ** 2))

    assert fringe_snr(out.values) >= 5 * fringe_snr(rho.values)
