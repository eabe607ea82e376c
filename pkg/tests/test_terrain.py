import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from terrainopt.errors import DegenerateCloud
from terrainopt.terrain import (ElevationCloud, PlaneTerrain, TerrainModel, design_matrix, fit_terrain,
                                frequency_dictionary, read_cloud_csv, synth_terrain, write_cloud_csv)


def disc_cloud(fn, radius=5.0, spacing=0.25):
    t = np.arange(-radius, radius + 1e-9, spacing)
    X, Y = np.meshgrid(t, t)
    m = X**2 + Y**2 <= radius**2
    x, y = X[m], Y[m]
    return ElevationCloud(np.column_stack([x, y, fn(x, y)]), (0.0, 0.0), radius)


def test_dictionary_is_deterministic_and_bounded():
    a = frequency_dictionary(100, 7.0, seed=3)
    b = frequency_dictionary(100, 7.0, seed=3)
    assert np.array_equal(a, b)
    assert np.all(a[0] == 0)
    w_max = 2 * np.pi * 4 / 7.0
    assert a[:, [0, 2]].min() >= 0 and a[:, [0, 2]].max() <= w_max
    assert np.abs(a[:, [1, 3]]).max() <= w_max
    assert not np.array_equal(a, frequency_dictionary(100, 7.0, seed=4))


def test_flat_cloud_fits_to_constant():
    model = fit_terrain(disc_cloud(lambda x, y: 0 * x + 0.4), 20)
    assert model.fit_rmse < 1e-6
    assert np.allclose(model.height([0.3, -1.0], [2.0, 1.5]), 0.4, atol=1e-6)


def test_representable_target_recovered():
    freqs = frequency_dictionary(30, 5.0, seed=1)
    rng = np.random.default_rng(0)
    w = rng.normal(size=60) * 0.1
    truth = lambda x, y: design_matrix(freqs, x, y) @ w  # noqa: E731
    model = fit_terrain(disc_cloud(truth), frequencies=freqs)
    assert model.fit_rmse < 1e-6
    pts = rng.uniform(-3, 3, size=(50, 2))
    assert np.allclose(model.height(pts[:, 0], pts[:, 1]), truth(pts[:, 0], pts[:, 1]), atol=1e-6)


def test_gradient_and_hessian_match_finite_differences(wavy):
    rng = np.random.default_rng(5)
    x, y = rng.uniform(-4, 4, size=(2, 40))
    h = 1e-6
    fx, fy = wavy.gradient(x, y)
    assert np.allclose(fx, (wavy.height(x + h, y) - wavy.height(x - h, y)) / (2 * h), atol=1e-6)
    assert np.allclose(fy, (wavy.height(x, y + h) - wavy.height(x, y - h)) / (2 * h), atol=1e-6)
    fxx, fxy, fyy = wavy.hessian(x, y)
    gxp, gyp = wavy.gradient(x + h, y)
    gxm, gym = wavy.gradient(x - h, y)
    assert np.allclose(fxx, (gxp - gxm) / (2 * h), atol=1e-5)
    assert np.allclose(fxy, (gyp - gym) / (2 * h), atol=1e-5)
    f, (gx, gy) = wavy.height_and_gradient(x, y)
    assert np.allclose(f, wavy.height(x, y)) and np.allclose(gx, fx) and np.allclose(gy, fy)
    assert fyy.shape == x.shape


def test_too_few_points_is_degenerate():
    pts = np.random.default_rng(0).uniform(-1, 1, size=(30, 3))
    with pytest.raises(DegenerateCloud):
        fit_terrain(ElevationCloud.from_points(pts), n_frequencies=100)


def test_collinear_points_are_degenerate():
    t = np.linspace(-3, 3, 400)
    pts = np.column_stack([t, 2 * t, np.sin(t)])
    with pytest.raises(DegenerateCloud):
        fit_terrain(ElevationCloud.from_points(pts), n_frequencies=10)


def test_non_finite_cloud_rejected():
    pts = np.zeros((10, 3))
    pts[3, 2] = np.nan
    with pytest.raises(ValueError):
        ElevationCloud.from_points(pts)


def test_model_round_trip(tmp_path, wavy):
    path = tmp_path / "model.json"
    wavy.save(path)
    back = TerrainModel.load(path)
    assert np.array_equal(back.frequencies, wavy.frequencies)
    assert np.array_equal(back.weights, wavy.weights)
    assert back.fit_rmse == wavy.fit_rmse
    assert set(json.loads(path.read_text())) == {"n", "center", "frequencies", "weights", "fit_rmse"}


def test_cloud_csv_round_trip(tmp_path):
    cloud = synth_terrain("hills", extent=6.0, sample_spacing=0.5, seed=2)
    path = tmp_path / "c.csv"
    write_cloud_csv(cloud, path)
    back = read_cloud_csv(path, center=(0.0, 0.0), radius=3.0)
    assert np.array_equal(back.points, cloud.points)


def test_plane_terrain():
    p = PlaneTerrain(0.2, -0.1, 0.5)
    assert np.isclose(p.height(1.0, 2.0), 0.5)
    gx, gy = p.gradient(np.zeros(3), np.zeros(3))
    assert np.all(gx == 0.2) and np.all(gy == -0.1)


@given(st.integers(0, 10_000), st.floats(0.05, 1.0))
@settings(max_examples=15, deadline=None)
def test_fit_is_linear_in_heights(seed, scale):
    # weights solve a fixed linear least-squares problem, so scaling z scales them
    cloud = synth_terrain("hills", extent=8.0, sample_spacing=0.5, seed=seed)
    scaled = ElevationCloud(cloud.points * [1, 1, scale], cloud.patch_center, cloud.patch_radius)
    a = fit_terrain(cloud, 30, seed=1)
    b = fit_terrain(scaled, 30, seed=1)
    assert np.allclose(b.weights, scale * a.weights, atol=1e-8 * max(1.0, np.abs(a.weights).max()))


def test_synth_points_inside_disc():
    cloud = synth_terrain("sinusoidal", extent=10.0)
    r = np.hypot(cloud.x, cloud.y)
    assert r.max() <= 5.0 + 1e-9
