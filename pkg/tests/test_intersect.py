import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from topogen.intersect import (
    build_bvh,
    has_self_intersection,
    self_candidate_pairs,
    self_intersecting_pairs,
    triangles_hit_boxes,
    triangles_intersect,
)
from topogen.mesh import TriangleMesh, box_mesh
from topogen.seeds import make_genus_g_seed


def _segment_hits_triangle(a, b, tri):
    """Moller-Trumbore on the segment a -> b."""
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    d = b - a
    h = np.cross(d, e2)
    det = e1 @ h
    if abs(det) < 1e-14:
        return False
    s = a - tri[0]
    u = (s @ h) / det
    q = np.cross(s, e1)
    v = (d @ q) / det
    t = (e2 @ q) / det
    return 0 <= u <= 1 and 0 <= v and u + v <= 1 and 0 <= t <= 1


def _brute_force(p, q):
    for tri, other in ((p, q), (q, p)):
        for k in range(3):
            if _segment_hits_triangle(tri[k], tri[(k + 1) % 3], other):
                return True
    return False


def test_crossing_and_separated_triangles():
    p = np.array([[0, 0, 0], [2, 0, 0], [0, 2, 0]], dtype=float)
    crossing = np.array([[0.5, 0.5, -1], [0.5, 0.5, 1], [1.5, 0.5, 1]], dtype=float)
    above = crossing + [0, 0, 2]
    assert triangles_intersect(p[None], crossing[None]).tolist() == [True]
    assert triangles_intersect(p[None], above[None]).tolist() == [False]


def test_coplanar_triangles():
    p = np.array([[0, 0, 0], [2, 0, 0], [0, 2, 0]], dtype=float)
    overlapping = p + [0.5, 0.5, 0]
    apart = p + [3, 3, 0]
    out = triangles_intersect(np.stack([p, p]), np.stack([overlapping, apart]))
    assert out.tolist() == [True, False]


def test_random_pairs_match_segment_oracle():
    rng = np.random.default_rng(7)
    p = rng.uniform(-1, 1, (2000, 3, 3))
    q = rng.uniform(-1, 1, (2000, 3, 3)) + rng.uniform(-1, 1, (2000, 1, 3))
    got = triangles_intersect(p, q)
    expected = np.array([_brute_force(a, b) for a, b in zip(p, q)])
    assert got.any() and not got.all()
    np.testing.assert_array_equal(got, expected)


def test_triangle_box():
    tris = np.array(
        [
            [[0.5, 0.5, 0.5], [0.6, 0.5, 0.5], [0.5, 0.6, 0.5]],  # inside
            [[-1, -1, 0.5], [3, -1, 0.5], [-1, 3, 0.5]],  # slices through
            [[2, 2, 2], [3, 2, 2], [2, 3, 2]],  # apart
            [[1.5, -0.6, 0], [1.5, 1.5, 0], [-0.6, 1.5, 0]],  # bounds overlap, plane misses the corner
        ],
        dtype=float,
    )
    lo = np.zeros((4, 3))
    hi = np.ones((4, 3))
    lo[3] = [0, 0, -1]
    hi[3] = [0.3, 0.3, 1]
    assert triangles_hit_boxes(tris, lo, hi).tolist() == [True, True, False, False]


@given(
    arrays(np.float64, (40, 3), elements=st.floats(-10, 10)),
    arrays(np.float64, (40, 3), elements=st.floats(0, 3)),
)
@settings(max_examples=50, deadline=None)
def test_bvh_candidates_cover_every_overlap(lo, size):
    hi = lo + size
    pairs = {tuple(p) for p in self_candidate_pairs(build_bvh(lo, hi, leaf_size=3)).tolist()}
    i, j = np.triu_indices(len(lo), k=1)
    overlap = np.all(lo[i] <= hi[j], axis=1) & np.all(lo[j] <= hi[i], axis=1)
    for a, b in zip(i[overlap], j[overlap]):
        assert (int(a), int(b)) in pairs


def test_closed_surfaces_do_not_self_intersect(unit_cube):
    assert not has_self_intersection(unit_cube)
    assert not has_self_intersection(make_genus_g_seed(6))


def test_pushed_through_surface_self_intersects():
    # the (1, 1, 1) corner pushed down through the bottom face
    cube = box_mesh((0, 0, 0), (1, 1, 1))
    v = cube.vertices.copy()
    v[7] = [0.5, 0.5, -1.0]
    bent = cube.with_vertices(v)
    assert len(self_intersecting_pairs(bent)) > 0
    assert has_self_intersection(bent)


def test_two_interlocked_boxes_intersect():
    a = box_mesh((0, 0, 0), (2, 2, 2))
    b = box_mesh((1, 1, 1), (3, 3, 3))
    both = TriangleMesh(np.vstack([a.vertices, b.vertices]), np.vstack([a.faces, b.faces + 8]))
    assert has_self_intersection(both)


def test_single_leaf_tree():
    lo = np.zeros((1, 3))
    assert self_candidate_pairs(build_bvh(lo, lo + 1)).shape == (0, 2)


def test_empty_tree():
    assert self_candidate_pairs(build_bvh(np.empty((0, 3)), np.empty((0, 3)))).shape == (0, 2)
