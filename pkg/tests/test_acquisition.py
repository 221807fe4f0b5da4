import numpy as np
import pytest

import afbrecon as ab
from helpers import random_complex


# ---------------------------------------------------------------- phantom

def test_phantom_shape_scale_and_determinism():
    img = ab.make_phantom(ab.PhantomSpec(size=64))
    assert img.shape == (64, 64)
    assert img.dtype == np.complex128
    assert np.all(img.imag == 0.0)
    assert np.abs(img).max() == 1.0
    assert img.real.min() >= -1e-12
    again = ab.make_phantom(ab.PhantomSpec(size=64))
    assert np.array_equal(img, again)


def test_phantom_has_structure():
    img = np.abs(ab.make_phantom(ab.PhantomSpec(size=32)))
    # dark background with several distinct interior intensity levels
    assert img[0, 0] == 0.0
    assert len(np.unique(np.round(img, 6))) > 4


def test_phantom_spec_validation():
    with pytest.raises(ab.ParameterError):
        ab.PhantomSpec(size=7)
    with pytest.raises(ab.ParameterError):
        ab.PhantomSpec(size=16, coils=0)
    with pytest.raises(ab.ParameterError):
        ab.PhantomSpec(size=16, noise_sigma=-0.1)
    with pytest.raises(ab.ParameterError):
        ab.PhantomSpec(size=16, noise_sigma=np.inf)


# ---------------------------------------------------------------- coil maps

def test_coil_maps_are_sos_normalized():
    cs = ab.make_coil_maps(32, 8)
    assert cs.maps.shape == (8, 32, 32)
    assert cs.kspace is None
    sos = np.sum(np.abs(cs.maps) ** 2, axis=0)
    assert np.max(np.abs(sos - 1.0)) <= 1e-12


def test_single_coil_map_has_unit_modulus():
    cs = ab.make_coil_maps(16, 1)
    assert np.max(np.abs(np.abs(cs.maps[0]) - 1.0)) <= 1e-12


def test_coil_maps_distinct_and_smooth():
    cs = ab.make_coil_maps(24, 4)
    for c in range(1, 4):
        assert not np.allclose(cs.maps[0], cs.maps[c])
    # neighbouring pixels vary slowly
    assert np.abs(np.diff(np.abs(cs.maps), axis=1)).max() < 0.2


def test_coilset_requires_coil_axis():
    with pytest.raises(ab.DimensionError):
        ab.CoilSet(maps=np.ones((4, 4), dtype=np.complex128))
    with pytest.raises(ab.DimensionError):
        ab.CoilSet(maps=np.ones((2, 4, 4), dtype=np.complex128),
                   kspace=np.ones((2, 4, 5), dtype=np.complex128))


# ---------------------------------------------------------------- masks

@pytest.mark.parametrize("kind,ratio", [
    ("uniform-cartesian", 0.5156),
    ("uniform-cartesian", 0.2125),
    ("random-cartesian", 0.3188),
    ("random-cartesian", 0.0938),
    ("radial", 0.5439),
    ("radial", 0.3129),
    ("radial", 0.0914),
])
def test_mask_ratio_within_band(kind, ratio):
    m = ab.make_mask(kind, 64, ratio, seed=3)
    assert m.shape == (64, 64)
    assert m.kept.dtype == np.bool_
    assert m.kind == kind
    assert m.target_ratio == ratio
    assert abs(m.ratio_measured - ratio) <= 0.01


def test_mask_measured_ratio_is_exact_count():
    m = ab.make_mask("uniform-cartesian", 32, 0.5)
    assert m.ratio_measured == int(m.kept.sum()) / m.kept.size


@pytest.mark.parametrize("kind", ["uniform-cartesian", "random-cartesian"])
def test_cartesian_masks_keep_whole_rows_and_acs_band(kind):
    size, ratio = 64, 0.4
    m = ab.make_mask(kind, size, ratio, seed=5)
    full = m.kept.all(axis=1)
    empty = ~m.kept.any(axis=1)
    assert np.all(full | empty)
    assert int(full.sum()) == round(ratio * size)
    acs = size // 8
    start = size // 2 - acs // 2
    assert full[start:start + acs].all()


def test_default_acs_shrinks_to_row_budget():
    # at 8.75% of 64 rows only 6 rows fit, fewer than the usual 8-row band
    m = ab.make_mask("uniform-cartesian", 64, 0.0875)
    assert int(m.kept.all(axis=1).sum()) == round(0.0875 * 64)
    assert abs(m.ratio_measured - 0.0875) <= 0.01


def test_explicit_acs_beyond_budget_is_an_error():
    with pytest.raises(ab.ParameterError):
        ab.make_mask("uniform-cartesian", 64, 0.0875, acs_lines=8)


def test_uniform_mask_ignores_seed():
    a = ab.make_mask("uniform-cartesian", 64, 0.3156, seed=0)
    b = ab.make_mask("uniform-cartesian", 64, 0.3156, seed=99)
    assert np.array_equal(a.kept, b.kept)


def test_random_mask_seed_behaviour():
    a = ab.make_mask("random-cartesian", 64, 0.3188, seed=1)
    b = ab.make_mask("random-cartesian", 64, 0.3188, seed=1)
    c = ab.make_mask("random-cartesian", 64, 0.3188, seed=2)
    assert np.array_equal(a.kept, b.kept)
    assert not np.array_equal(a.kept, c.kept)


def test_radial_mask_geometry():
    m = ab.make_mask("radial", 64, 0.3129)
    assert bool(m.kept[32, 32])  # every spoke passes through the centre
    ratios = [ab.make_mask("radial", 64, r).ratio_measured for r in (0.1, 0.2, 0.3, 0.5)]
    assert all(b >= a for a, b in zip(ratios, ratios[1:]))


def test_full_ratio_keeps_everything():
    for kind in ab.MASK_KINDS:
        m = ab.make_mask(kind, 16, 1.0)
        assert m.kept.all()
        assert m.ratio_measured == 1.0


def test_mask_parameter_validation():
    with pytest.raises(ab.ParameterError):
        ab.make_mask("spiral", 32, 0.5)
    with pytest.raises(ab.ParameterError):
        ab.make_mask("radial", 32, 0.0)
    with pytest.raises(ab.ParameterError):
        ab.make_mask("radial", 32, 1.5)
    with pytest.raises(ab.ParameterError):
        ab.make_mask("uniform-cartesian", 32, 0.5, acs_lines=-1)
    with pytest.raises(ab.ParameterError):
        ab.make_mask("uniform-cartesian", 32, 0.5, acs_lines=32)


def test_mask_shifted_matches_centered_pattern():
    m = ab.make_mask("random-cartesian", 16, 0.5, seed=0)
    shifted = m.shifted()
    assert shifted.dtype == np.float64
    assert set(np.unique(shifted)) <= {0.0, 1.0}
    assert np.array_equal(np.fft.fftshift(shifted).astype(bool), m.kept)


def test_mask_apply_zeroes_dropped_locations():
    rng = np.random.default_rng(7)
    m = ab.make_mask("uniform-cartesian", 16, 0.5, seed=0)
    stack = random_complex(rng, (3, 16, 16))
    out = m.apply(stack)
    centered = np.fft.fftshift(out, axes=(-2, -1))
    assert np.all(centered[:, ~m.kept] == 0.0)
    assert np.array_equal(m.apply(stack[0]), out[0])
    with pytest.raises(ab.DimensionError):
        m.apply(np.zeros((3, 8, 8), dtype=np.complex128))


# ---------------------------------------------------------------- simulation

def test_noiseless_simulation_is_masked_coil_fft():
    truth = ab.make_phantom(ab.PhantomSpec(size=32))
    cs = ab.make_coil_maps(32, 4)
    m = ab.make_mask("uniform-cartesian", 32, 0.5, seed=0)
    acq = ab.simulate_acquisition(truth, cs, m, 0.0, 0)
    expected = m.apply(np.stack([ab.fft2(cs.maps[c] * truth) for c in range(4)]))
    assert np.array_equal(acq.kspace, expected)
    assert np.array_equal(acq.maps, cs.maps)


def test_simulation_noise_is_seeded_and_masked():
    truth = ab.make_phantom(ab.PhantomSpec(size=32))
    cs = ab.make_coil_maps(32, 2)
    m = ab.make_mask("random-cartesian", 32, 0.4, seed=0)
    a = ab.simulate_acquisition(truth, cs, m, 0.05, seed=11)
    b = ab.simulate_acquisition(truth, cs, m, 0.05, seed=11)
    c = ab.simulate_acquisition(truth, cs, m, 0.05, seed=12)
    assert np.array_equal(a.kspace, b.kspace)
    assert not np.array_equal(a.kspace, c.kspace)
    centered = np.fft.fftshift(a.kspace, axes=(-2, -1))
    assert np.all(centered[:, ~m.kept] == 0.0)


def test_simulation_noise_energy_matches_model():
    # complex noise with std sigma per component carries 2 sigma^2 per sample
    truth = ab.make_phantom(ab.PhantomSpec(size=64))
    cs = ab.make_coil_maps(64, 4)
    m = ab.make_mask("radial", 64, 1.0)
    sigma = 0.1
    clean = ab.simulate_acquisition(truth, cs, m, 0.0, 0)
    noisy = ab.simulate_acquisition(truth, cs, m, sigma, 0)
    measured = ab.norm2(noisy.kspace - clean.kspace) ** 2
    expected = 2.0 * sigma**2 * int(m.kept.sum()) * cs.coils
    assert abs(measured / expected - 1.0) <= 0.1


def test_simulation_validation():
    truth = ab.make_phantom(ab.PhantomSpec(size=16))
    cs = ab.make_coil_maps(16, 2)
    m = ab.make_mask("uniform-cartesian", 16, 0.5)
    with pytest.raises(ab.ParameterError):
        ab.simulate_acquisition(truth, cs, m, -0.5, 0)
    with pytest.raises(ab.DimensionError):
        ab.simulate_acquisition(truth[:8], cs, m, 0.0, 0)
    wrong = ab.make_mask("uniform-cartesian", 32, 0.5)
    with pytest.raises(ab.DimensionError):
        ab.simulate_acquisition(truth, cs, wrong, 0.0, 0)
