import numpy as np
import numpy.testing as npt
import pytest

from topogen.displacement import cellular_displacement, cellular_noise
from topogen.errors import DisplacementError
from topogen.intersect import has_self_intersection
from topogen.mesh import euler_characteristic, subdivide, transform
from topogen.seeds import make_genus_g_seed


@pytest.fixture
def plate():
    return transform(subdivide(make_genus_g_seed(2)), scale=0.25)


def test_noise_is_bounded_and_seeded():
    pts = np.random.default_rng(1).uniform(-2, 2, (500, 3))
    a = cellular_noise(pts, 0.3, 7)
    assert a.min() >= 0 and a.max() <= 1
    npt.assert_array_equal(a, cellular_noise(pts, 0.3, 7))
    assert not np.array_equal(a, cellular_noise(pts, 0.3, 8))


def test_noise_is_continuous():
    p = np.array([[0.123, 0.456, 0.789]])
    a = cellular_noise(p, 0.1, 3)
    b = cellular_noise(p + 1e-7, 0.1, 3)
    assert abs(a[0] - b[0]) < 1e-4


def test_zero_intensity_is_identity(plate):
    assert cellular_displacement(plate, 0.0, 0.1, 1) is plate


def test_displacement_moves_along_normals(plate):
    out = cellular_displacement(plate, 0.01, 0.05, 4)
    moved = out.vertices - plate.vertices
    assert np.abs(moved).max() > 0
    assert np.abs(moved).max() <= 0.005 + 1e-12
    cross = np.cross(moved, plate.vertex_normals)
    npt.assert_allclose(cross, 0.0, atol=1e-12)
    assert euler_characteristic(out) == euler_characteristic(plate)
    assert not has_self_intersection(out)


def test_displacement_is_seeded(plate):
    a = cellular_displacement(plate, 0.01, 0.05, 4)
    b = cellular_displacement(plate, 0.01, 0.05, 4)
    npt.assert_array_equal(a.vertices, b.vertices)


def test_huge_intensity_is_attenuated_or_refused(plate):
    try:
        out = cellular_displacement(plate, 50.0, 0.05, 4, max_attenuations=12)
    except DisplacementError:
        return
    moved = np.linalg.norm(out.vertices - plate.vertices, axis=1)
    assert moved.max() < 25.0
    assert not has_self_intersection(out)


def test_refusal_without_attenuation(plate):
    with pytest.raises(DisplacementError):
        cellular_displacement(plate, 50.0, 0.05, 4, max_attenuations=0)


@pytest.mark.parametrize("intensity, feature", [(-0.1, 0.1), (0.1, 0.0)])
def test_bad_arguments(plate, intensity, feature):
    with pytest.raises(ValueError):
        cellular_displacement(plate, intensity, feature, 0)
