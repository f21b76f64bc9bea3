import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from nlosmedia.core import DomainError, MediumParams, ReconstructionVolume
from nlosmedia.postprocess import (
    extinction_factor,
    extinction_filter,
    image_rows,
    max_intensity_projection,
    normalize_image,
    read_pgm,
    write_pgm,
)

# mpmath, 30 digits: (1 - 0.83 e^{-1.66}) / e^{-2}
K_D2_MU1_A083 = 6.222949598762867


def volume(data, lo=(-1, -1, 1), hi=(1, 1, 3)):
    return ReconstructionVolume(lo, hi, np.asarray(data, float), wavelength=0.3, cycles=4)


def test_filter_scalar_value():
    assert extinction_factor(2.0, MediumParams(1.0, 0.83)) == pytest.approx(K_D2_MU1_A083, rel=1e-14)


@given(st.floats(0, 1 - 1e-12))
def test_filter_at_wall_center(a):
    assert extinction_factor(0.0, MediumParams(1.0, a)) == pytest.approx(1 - a, rel=1e-15, abs=1e-300)


def test_vacuum_filter_is_identity(rng):
    v = volume(rng.random((5, 4, 3)))
    out = extinction_filter(v, MediumParams(), (0, 0, 0))
    assert out.data.tobytes() == v.data.tobytes()
    assert out.filtered and not v.filtered


def test_filter_matches_independent_per_voxel_gain(rng):
    v = volume(rng.random((10, 10, 10)))
    m = MediumParams(1.3, 0.67)
    c = np.array([0.1, -0.2, 0.0])
    out = extinction_filter(v, m, c)
    xs, ys, zs = v.axes()
    for i, j, k in [(0, 0, 0), (3, 7, 9), (9, 9, 9), (5, 1, 4)]:
        d = math.dist((xs[i], ys[j], zs[k]), c)
        gain = (1 - 0.67 * math.exp(-d * 0.67)) / math.exp(-d * 1.3)
        assert out.data[i, j, k] == pytest.approx(v.data[i, j, k] * gain, rel=1e-12)


def test_filter_does_not_mutate(rng):
    data = rng.random((3, 3, 3))
    v = volume(data.copy())
    extinction_filter(v, MediumParams(2.0, 0.5), (0, 0, 0))
    np.testing.assert_array_equal(v.data, data)


@given(st.floats(0, 1 - 1e-9), st.floats(0, 5), st.floats(0, 20))
def test_filter_gain_positive(a, mu, d):
    assert extinction_factor(d, MediumParams(mu, a)) > 0


def test_filter_gain_monotone_on_sweep_grid():
    d = np.linspace(0, 4, 401)
    for mu in (0.5, 1.0, 2.0):
        for a in (0.15, 0.33, 0.5, 0.67, 0.83):
            if mu >= a * a:
                assert np.all(np.diff(extinction_factor(d, MediumParams(mu, a))) >= 0)


@given(st.floats(1e-3, 1e3))
def test_filter_commutes_with_scaling(s):
    v = volume(np.arange(27.0).reshape(3, 3, 3) + 1)
    m = MediumParams(1.0, 0.5)
    a = extinction_filter(v.with_data(v.data * s), m, (0, 0, 0)).data
    b = extinction_filter(v, m, (0, 0, 0)).data * s
    np.testing.assert_allclose(a, b, rtol=1e-13)


# --- projections ----------------------------------------------------------------


def test_constant_volume_projects_to_constant():
    v = volume(np.full((4, 5, 6), 2.5))
    assert max_intensity_projection(v, "front").shape == (4, 5)
    assert max_intensity_projection(v, "lateral").shape == (5, 6)
    assert max_intensity_projection(v, "top").shape == (4, 6)
    for view in ("front", "lateral", "top"):
        assert np.all(max_intensity_projection(v, view) == 2.5)


def test_hot_voxel_lands_in_every_view():
    data = np.zeros((4, 5, 6))
    data[1, 3, 2] = 7.0
    v = volume(data)
    assert np.argwhere(max_intensity_projection(v, "front")).tolist() == [[1, 3]]
    assert np.argwhere(max_intensity_projection(v, "lateral")).tolist() == [[3, 2]]
    assert np.argwhere(max_intensity_projection(v, "top")).tolist() == [[1, 2]]


@given(hnp.arrays(float, (3, 4, 5), elements=st.floats(0, 1e6)), st.sampled_from(["front", "lateral", "top"]))
def test_projection_max_is_global_max(data, view):
    assert max_intensity_projection(volume(data), view).max() == data.max()


def test_projection_idempotent(rng):
    v = volume(rng.random((4, 5, 6)))
    once = max_intensity_projection(v, "front")
    again = max_intensity_projection(v.with_data(once[:, :, None]), "front")
    np.testing.assert_array_equal(once, again)


def test_unknown_view():
    with pytest.raises(DomainError, match="front"):
        max_intensity_projection(volume(np.ones((2, 2, 2))), "perspective")


# --- 8-bit images -----------------------------------------------------------------


def test_normalize_examples():
    np.testing.assert_array_equal(normalize_image([0.0, 0.5, 1.0]), [0, 128, 255])
    np.testing.assert_array_equal(normalize_image(np.zeros(4)), 0)
    assert normalize_image([3.0, 7.0]).dtype == np.uint8


@given(hnp.arrays(float, st.integers(1, 50), elements=st.floats(0, 1e9)))
def test_normalize_range(x):
    out = normalize_image(x)
    if x.max() > 0:
        assert out.max() == 255
        assert np.all(out[x == 0] == 0)
    else:
        assert not out.any()


def test_normalize_extreme_peaks():
    np.testing.assert_array_equal(normalize_image([5e-324, 0.0]), [255, 0])
    np.testing.assert_array_equal(normalize_image([1e308, 5e307, 0.0]), [255, 128, 0])


def test_pgm_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (7, 3)).astype(np.uint8)
    write_pgm(tmp_path / "a.pgm", img, "view=front wavelength=0.3")
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n# view=front wavelength=0.3\n7 3\n255\n")
    back, comments = read_pgm(tmp_path / "a.pgm")
    np.testing.assert_array_equal(back, img)
    assert comments == ["view=front wavelength=0.3"]


def test_pgm_orientation():
    img = np.zeros((3, 2), np.uint8)
    img[2, 1] = 255  # right column, top row
    rows = image_rows(img)
    assert rows.shape == (2, 3) and rows[0, 2] == 255
