import numpy as np
import pytest
from pydantic import ValidationError
from scipy.ndimage import generate_binary_structure, label

from topogen.errors import OracleRefusalError
from topogen.seeds import make_genus_g_seed
from topogen.topology import (
    BettiTriple,
    betti_voxel,
    cubical_counts,
    homology_oracle,
    slice_betti,
    surface_betti,
    verify_sample,
)
from topogen.voxels import VoxelGrid


def _grid(shape, filled=(), empty=()):
    occ = np.zeros(shape, dtype=bool)
    for sl in filled:
        occ[sl] = True
    for sl in empty:
        occ[sl] = False
    return occ


SINGLE = _grid((3, 3, 3), [(1, 1, 1)])
SOLID = _grid((5, 5, 5), [np.s_[1:4, 1:4, 1:4]])
HOLLOW = _grid((5, 5, 5), [np.s_[1:4, 1:4, 1:4]], [(2, 2, 2)])
RING = _grid((3, 5, 5), [np.s_[1, 1:4, 1:4]], [(1, 2, 2)])
TWO_RINGS = _grid((3, 5, 7), [np.s_[1, 1:4, 1:6]], [(1, 2, 2), (1, 2, 4)])
CORNER_PAIR = _grid((4, 4, 4), [(1, 1, 1), (2, 2, 2)])
APART = _grid((5, 5, 5), [(0, 0, 0), (4, 4, 4)])

CASES = [
    (np.zeros((4, 4, 4), dtype=bool), (0, 0, 0)),
    (SINGLE, (1, 0, 0)),
    (SOLID, (1, 0, 0)),
    (HOLLOW, (1, 0, 1)),
    (RING, (1, 1, 0)),
    (TWO_RINGS, (1, 2, 0)),
    (CORNER_PAIR, (1, 0, 0)),
    (APART, (2, 0, 0)),
]


@pytest.mark.parametrize("occ, expected", CASES)
def test_betti_voxel_fixtures(occ, expected):
    assert betti_voxel(occ).as_tuple() == expected


@pytest.mark.parametrize("occ, expected", CASES)
def test_oracle_fixtures(occ, expected):
    assert homology_oracle(occ).as_tuple() == expected


def test_single_cube_cell_counts():
    counts = cubical_counts(SINGLE)
    assert (counts.vertices, counts.edges, counts.squares, counts.cubes) == (8, 12, 6, 1)
    assert counts.euler == 1


def test_oracle_agrees_on_random_grids():
    rng = np.random.default_rng(2024)
    for density in np.linspace(0.2, 0.8, 100):
        occ = rng.random((5, 5, 5)) < density
        assert homology_oracle(occ) == betti_voxel(occ)


def test_face_connectivity_never_merges_more():
    rng = np.random.default_rng(5)
    six = generate_binary_structure(3, 1)
    for _ in range(50):
        occ = rng.random((8, 8, 8)) < 0.3
        assert betti_voxel(occ).beta0 <= label(occ, structure=six)[1]


def test_oracle_refuses_large_grids():
    with pytest.raises(OracleRefusalError):
        homology_oracle(np.zeros((17, 4, 4), dtype=bool))


def test_accepts_voxel_grid_objects():
    assert betti_voxel(VoxelGrid(HOLLOW)).as_tuple() == (1, 0, 1)


def test_rejects_flat_arrays():
    with pytest.raises(ValueError):
        betti_voxel(np.zeros((4, 4), dtype=bool))


class TestVerifySample:

    def test_ring_is_genus_one(self):
        report = verify_sample(RING, 1)
        assert report.passed
        assert report.expected.as_tuple() == (1, 1, 0)
        assert all(report.passes.values())

    def test_wrong_label(self):
        report = verify_sample(RING, 2)
        assert not report.passed
        assert report.passes == {"beta0": True, "beta1": False, "beta2": True}

    def test_cavity_fails_beta2(self):
        report = verify_sample(HOLLOW, 0)
        assert not report.passes["beta2"]


@pytest.mark.parametrize("g", range(21))
def test_surface_betti_of_seeds(g):
    b = surface_betti(make_genus_g_seed(g))
    assert b.as_tuple() == (1, 2 * g, 1)
    assert b.chi == 2 - 2 * g


def test_betti_triple_checks_chi():
    with pytest.raises(ValidationError):
        BettiTriple(beta0=1, beta1=0, beta2=0, chi=2)
    with pytest.raises(ValidationError):
        BettiTriple.of(-1, 0, 0)


def test_slice_with_six_holes_across_four_objects():
    img = np.zeros((20, 30), dtype=bool)
    img[1:4, 1:6] = True
    img[2, 2] = img[2, 4] = False
    img[1:4, 8:11] = True
    img[2, 9] = False
    img[6:9, 1:8] = True
    img[7, 2] = img[7, 4] = img[7, 6] = False
    img[12:15, 12:15] = True
    st = slice_betti(img)
    assert (st.components, st.holes) == (4, 6)


def test_slice_diagonal_contact_is_one_object():
    img = np.zeros((4, 4), dtype=bool)
    img[1, 1] = img[2, 2] = True
    st = slice_betti(img)
    assert (st.components, st.holes) == (1, 0)
