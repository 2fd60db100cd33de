import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from offgrid.domain import (DiscreteMeasure, Domain, GridTooLargeError, covering_grid,
                            min_separation, partition, random_separated_positions, tv_norm)


def euclid_to_grid(domain, probes, grid_pts):
    """Smallest Euclidean (wrapped on the torus) distance from each probe to the grid."""
    out = np.empty(probes.shape[0])
    for i in range(0, probes.shape[0], 500):
        t = domain.displacement(probes[i:i + 500, None, :], grid_pts[None, :, :])
        out[i:i + 500] = np.sqrt((t ** 2).sum(-1)).min(axis=1)
    return out


# -- min_separation ---------------------------------------------------------

def test_min_separation_torus_wrap():
    dom = Domain.torus(1)
    mu = DiscreteMeasure([0.1, 0.4, 0.8], [1.0, 1.0, 1.0], dom)
    # brute force over pairs with wrap-around
    xs = [0.1, 0.4, 0.8]
    brute = min(min(abs(a - b), 1 - abs(a - b)) for i, a in enumerate(xs) for b in xs[i + 1:])
    assert brute == pytest.approx(0.3)
    assert min_separation(mu) == pytest.approx(brute, abs=1e-15)


def test_min_separation_single_atom_and_coincident():
    dom = Domain.torus(1)
    assert min_separation(DiscreteMeasure([0.3], [1.0], dom)) == math.inf
    assert min_separation(DiscreteMeasure([0.3, 0.3], [1.0, 2.0], dom)) == 0.0


def test_min_separation_empty():
    with pytest.raises(ValueError, match="empty measure"):
        min_separation(DiscreteMeasure.empty(Domain.torus(1)))


def test_tv_norm():
    dom = Domain.box(1, 2.0)
    assert tv_norm(DiscreteMeasure([0.0, 0.5, 1.0], [1.0, -2.0, 0.5], dom)) == 3.5
    assert tv_norm(DiscreteMeasure.empty(dom)) == 0.0
    assert tv_norm(DiscreteMeasure([0.1], [-1.0], dom)) == 1.0


def test_measure_rejects_outside_points():
    with pytest.raises(ValueError):
        DiscreteMeasure([3.0], [1.0], Domain.box(1, 1.0))


def test_measure_json_roundtrip():
    dom = Domain.box(2, 1.5)
    mu = DiscreteMeasure([[0.1, -0.2], [1.0, 1.2]], [0.5, -1.0], dom)
    back = DiscreteMeasure.from_json(mu.to_json(), Domain.from_json(dom.to_json()))
    assert np.array_equal(back.positions, mu.positions)
    assert np.array_equal(back.amplitudes, mu.amplitudes)


def test_normalized_drops_zero_atoms():
    mu = DiscreteMeasure([0.1, 0.2], [0.0, 1.0], Domain.torus(1)).normalized()
    assert mu.s == 1


# -- partition ---------------------------------------------------------------

def test_partition_classify_examples():
    part = partition([0.2, 0.7], 0.1, Domain.torus(1))
    assert part.classify([0.25, 0.5, 0.7]).tolist() == [0, -1, 1]
    assert not part.overlap


def test_partition_overlap_flag():
    assert partition([0.2, 0.3], 0.1, Domain.torus(1)).overlap


def test_partition_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        partition([0.2], 0.0, Domain.torus(1))


@pytest.mark.parametrize("dom", [Domain.torus(1), Domain.torus(2), Domain.box(2, 1.0)])
def test_partition_completeness(dom):
    rng = np.random.default_rng(0)
    centers = random_separated_positions(dom, 3, 0.32, rng)
    part = partition(centers, 0.15, dom)
    x = dom.sample(10_000, rng)
    lab = part.classify(x)
    assert lab.shape == (10_000,)
    assert set(np.unique(lab)) <= {-1, 0, 1, 2}
    for j in range(3):
        assert np.all(dom.distance(x[lab == j], centers[j]) <= 0.15)
    # far points are outside every ball
    far = x[lab == -1]
    for c in centers:
        assert np.all(dom.distance(far, c) > 0.15)


# -- torus metric --------------------------------------------------------------

@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_torus_distance_symmetric_and_bounded(a, b):
    dom = Domain.torus(1)
    dab = float(dom.distance(np.array([a]), np.array([b])))
    dba = float(dom.distance(np.array([b]), np.array([a])))
    assert dab == dba
    assert 0.0 <= dab <= 0.5


# -- covering grids ------------------------------------------------------------

def test_covering_far_torus_audit():
    dom = Domain.torus(1)
    part = partition([0.5], 0.1, dom)
    grid = covering_grid(part, "far", 0.05)
    # dense audit of the far region at spacing 0.005
    probe = np.arange(0, 1, 0.005).reshape(-1, 1)
    probe = probe[part.classify(probe) == -1]
    assert euclid_to_grid(dom, probe, grid.points).max() <= 0.05


@pytest.mark.parametrize("dom,spacing", [(Domain.torus(2), 0.04), (Domain.box(2, 1.0), 0.08),
                                         (Domain.box(1, 3.0), 0.01)])
def test_covering_random_probe_audit(dom, spacing):
    rng = np.random.default_rng(3)
    centers = random_separated_positions(dom, 2, 0.42, rng, margin=0.2 if dom.kind == "box" else 0)
    part = partition(centers, 0.2, dom)
    x = dom.sample(10_000, rng)
    lab = part.classify(x)
    far = covering_grid(part, "far", spacing)
    assert euclid_to_grid(dom, x[lab == -1], far.points).max() <= spacing
    for j in range(2):
        near = covering_grid(part, j, spacing)
        assert euclid_to_grid(dom, x[lab == j], near.points).max() <= spacing


def test_covering_far_size_within_bound():
    dom = Domain.box(2, 1.0)
    part = partition([[0.0, 0.0]], 0.2, dom)
    grid = covering_grid(part, "far", 0.1)
    assert len(grid) <= (1 + 4 * dom.half_width / 0.1) ** 2


def test_covering_coarse_spacing_one_point():
    dom = Domain.torus(1)
    part = partition(np.zeros((0, 1)), 0.1, dom)
    assert len(covering_grid(part, "far", 2.0)) == 1


def test_covering_near_ball_center_suffices():
    dom = Domain.torus(1)
    part = partition([0.3], 0.05, dom)
    grid = covering_grid(part, 0, 0.1)
    assert len(grid) == 1
    assert grid.points[0, 0] == pytest.approx(0.3)


def test_covering_cap():
    part = partition([[0.5, 0.5]], 0.1, Domain.torus(2))
    with pytest.raises(GridTooLargeError, match="grid too large"):
        covering_grid(part, "far", 1e-3, cap=1000)


def test_covering_rejects_bad_spacing():
    with pytest.raises(ValueError):
        covering_grid(partition([0.5], 0.1, Domain.torus(1)), "far", 0.0)


# -- placement ---------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_random_positions_separated(s, seed):
    dom = Domain.box(1, 1.0)
    x = random_separated_positions(dom, s, 0.2, np.random.default_rng(seed), margin=0.05)
    assert x.shape == (s, 1)
    assert np.all(np.abs(x) <= 0.95)
    if s > 1:
        mu = DiscreteMeasure(x, np.ones(s), dom)
        assert min_separation(mu) >= 0.2
