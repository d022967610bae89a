import numpy as np
import numpy.testing as npt
import pytest
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation

from topogen import energy as energy_mod
from topogen.energy import (
    check_exponents,
    tangent_point_energy,
    tangent_point_energy_and_gradient,
    tangent_point_gradient,
)
from topogen.errors import SingularConfigurationError
from topogen.mesh import TriangleMesh, box_mesh, transform
from topogen.seeds import make_genus_g_seed


def _pairwise_energy(mesh, alpha, beta):
    c, n, A = mesh.face_centroids, mesh.face_normals, mesh.face_areas
    faces = [set(f) for f in mesh.faces.tolist()]
    total = 0.0
    for s in range(mesh.face_count):
        for t in range(mesh.face_count):
            if faces[s] & faces[t]:
                continue
            d = c[t] - c[s]
            total += abs(n[s] @ d) ** alpha / np.linalg.norm(d) ** beta * A[s] * A[t]
    return total


@pytest.fixture
def wobbly_box():
    box = box_mesh((-1, -1, -1), (1, 1, 1))
    rng = np.random.default_rng(3)
    return box.with_vertices(box.vertices + rng.uniform(-0.1, 0.1, box.vertices.shape))


def test_matches_pairwise_sum(wobbly_box, torus):
    for mesh in (wobbly_box, torus):
        for exps in ((2.0, 8.0), (3.0, 6.5)):
            npt.assert_allclose(tangent_point_energy(mesh, exps), _pairwise_energy(mesh, *exps), rtol=1e-10)


def test_row_blocks_do_not_change_the_result(torus, monkeypatch):
    e, g = tangent_point_energy_and_gradient(torus)
    monkeypatch.setattr(energy_mod, "BLOCK_ELEMENTS", 7 * torus.face_count)
    e2, g2 = tangent_point_energy_and_gradient(torus)
    npt.assert_allclose(e2, e)
    npt.assert_allclose(g2, g, atol=1e-12 * np.abs(g).max())


@pytest.mark.parametrize("s", [0.5, 2.0, 3.7])
def test_scaling_law(torus, s):
    alpha, beta = 2.0, 8.0
    e = tangent_point_energy(torus, (alpha, beta))
    npt.assert_allclose(tangent_point_energy(transform(torus, scale=s), (alpha, beta)), s ** (alpha - beta + 4) * e, rtol=1e-9)


def test_rigid_motion_invariance(wobbly_box):
    e = tangent_point_energy(wobbly_box)
    moved = transform(wobbly_box, rotation=(0.4, -1.2, 2.2), translation=(5, -3, 1))
    npt.assert_allclose(tangent_point_energy(moved), e, rtol=1e-9)


def _random_hull(seed, points):
    rng = np.random.default_rng(seed)
    hull = ConvexHull(rng.normal(size=(points, 3)))
    faces = hull.simplices.copy()
    p = hull.points[faces]
    inward = np.einsum("fd,fd->f", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), hull.equations[:, :3]) < 0
    faces[inward] = faces[inward][:, ::-1]
    used, faces = np.unique(faces, return_inverse=True)
    return TriangleMesh(hull.points[used], faces.reshape(-1, 3))


def _finite_difference_gradient(mesh, exps=(2.0, 8.0), h=1e-6):
    fd = np.zeros_like(mesh.vertices)
    for i in range(mesh.vertex_count):
        for k in range(3):
            v = mesh.vertices.copy()
            v[i, k] += h
            plus = tangent_point_energy(mesh.with_vertices(v), exps)
            v[i, k] -= 2 * h
            minus = tangent_point_energy(mesh.with_vertices(v), exps)
            fd[i, k] = (plus - minus) / (2 * h)
    return fd


@pytest.mark.parametrize("seed", range(10))
def test_gradient_on_small_random_meshes(seed):
    mesh = _random_hull(seed, 6 + seed % 8)
    assert mesh.face_count <= 30
    exps = (2.0, 8.0) if seed % 2 else (3.0, 6.5)
    grad = tangent_point_gradient(mesh, exps)
    fd = _finite_difference_gradient(mesh, exps)
    assert np.abs(grad - fd).max() <= 1e-4 * max(np.abs(fd).max(), 1.0)


@pytest.mark.parametrize("seed", [0, 4, 7])
def test_scaling_derivative(seed):
    alpha, beta = 2.0, 8.0
    mesh = _random_hull(seed, 12)
    e = tangent_point_energy(mesh, (alpha, beta))
    ds = 1e-5
    dE = (
        tangent_point_energy(transform(mesh, scale=1 + ds), (alpha, beta))
        - tangent_point_energy(transform(mesh, scale=1 - ds), (alpha, beta))
    ) / (2 * ds)
    npt.assert_allclose(dE, (alpha - beta + 4) * e, rtol=1e-6)
    # Euler: the gradient contracted with the positions gives the same derivative
    grad = tangent_point_gradient(mesh, (alpha, beta))
    npt.assert_allclose(np.sum(grad * mesh.vertices), (alpha - beta + 4) * e, rtol=1e-8)


def test_gradient_matches_finite_differences(wobbly_box):
    grad = tangent_point_gradient(wobbly_box)
    fd = _finite_difference_gradient(wobbly_box)
    assert np.abs(grad - fd).max() <= 1e-4 * max(np.abs(fd).max(), 1.0)


def test_gradient_is_translation_free(torus):
    grad = tangent_point_gradient(torus)
    npt.assert_allclose(grad.sum(axis=0), 0.0, atol=1e-9 * np.abs(grad).max())


def test_gradient_rotates_with_the_mesh(wobbly_box):
    r = Rotation.from_euler("xyz", (0.3, 0.2, -0.7))
    grad = tangent_point_gradient(wobbly_box)
    rotated = transform(wobbly_box, rotation=(0.3, 0.2, -0.7))
    npt.assert_allclose(tangent_point_gradient(rotated), grad @ r.as_matrix().T, atol=1e-10 * np.abs(grad).max())


def test_cutoff(torus):
    full = tangent_point_energy(torus)
    assert tangent_point_energy(torus, cutoff=1e-6) == 0.0
    npt.assert_allclose(tangent_point_energy(torus, cutoff=1e6), full)
    assert tangent_point_energy(torus, cutoff=1.5) < full


def test_coincident_faces_are_singular(tetrahedron):
    twin = TriangleMesh(
        np.vstack([tetrahedron.vertices, tetrahedron.vertices]),
        np.vstack([tetrahedron.faces, tetrahedron.faces + 4]),
    )
    with pytest.raises(SingularConfigurationError):
        tangent_point_energy(twin)


@pytest.mark.parametrize("exps", [(2.0, 4.0), (0.0, 8.0), (2.0, -1.0), (3.0, 5.0)])
def test_exponent_validation(exps):
    with pytest.raises(ValueError):
        check_exponents(exps)


def test_squashing_raises_energy():
    seed = make_genus_g_seed(2)
    squashed = transform(seed, scale=(1.0, 1.0, 0.5))
    assert tangent_point_energy(squashed) > tangent_point_energy(seed)
