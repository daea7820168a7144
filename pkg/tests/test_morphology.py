import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uois.core import BinaryMask, ImageGrid, InvariantError
from uois.morphology import (
    StructuringElement,
    close,
    closest_component,
    connected_components,
    dilate,
    erode,
    imp_process,
    inner_boundary,
    open,
)

import oracles

masks = st.integers(1, 14).flatmap(
    lambda h: st.integers(1, 14).flatmap(lambda w: arrays(bool, (h, w)))
)
elements = st.builds(StructuringElement, st.sampled_from(["square", "disk"]), st.integers(1, 3))


def test_element_invariants():
    with pytest.raises(InvariantError):
        StructuringElement("cross", 1)
    with pytest.raises(InvariantError):
        StructuringElement("disk", 0)


def test_disk_footprint_is_union_of_rectangles():
    for r in range(1, 8):
        se = StructuringElement("disk", r)
        fp = np.zeros_like(se.footprint)
        for hh, hw in se.rectangles():
            fp[r - hh:r + hh + 1, r - hw:r + hw + 1] = True
        assert np.array_equal(fp, se.footprint)


def test_default_size_tracks_diagonal():
    assert StructuringElement.default_for(ImageGrid(480, 640)).radius == 2
    assert StructuringElement.default_for(ImageGrid(8, 8)).radius == 1
    assert StructuringElement.default_for(ImageGrid(480, 640), 0.01, "square") == StructuringElement("square", 8)


@given(masks, elements)
def test_erode_dilate_match_window_oracle(m, se):
    assert np.array_equal(erode(BinaryMask(m), se).pixels, oracles.erode(m, se.footprint))
    assert np.array_equal(dilate(BinaryMask(m), se).pixels, oracles.dilate(m, se.footprint))


@given(masks, elements)
def test_opening_and_closing_laws(m, se):
    bm = BinaryMask(m)
    o, c = open(bm, se), close(bm, se)
    assert not (o.pixels & ~m).any()
    assert not (m & ~c.pixels).any()
    assert open(o, se) == o
    assert close(c, se) == c


def test_closing_is_extensive_at_the_border():
    m = np.zeros((6, 6), bool)
    m[0, :] = True
    m[:, 0] = True
    se = StructuringElement("square", 2)
    assert not (m & ~close(BinaryMask(m), se).pixels).any()


def test_closing_fills_a_small_hole():
    m = np.ones((9, 9), bool)
    m[4, 4] = False
    assert close(BinaryMask(m), StructuringElement("disk", 1)).pixels.all()


def test_opening_removes_thin_spur():
    m = np.zeros((12, 12), bool)
    m[2:9, 2:9] = True
    m[5, 9:12] = True
    o = open(BinaryMask(m), StructuringElement("square", 1)).pixels
    assert not o[5, 10:].any()
    assert o[2:9, 2:9].all()


@given(masks, st.sampled_from([4, 8]))
def test_components_match_flood_fill(m, conn):
    got = connected_components(BinaryMask(m), conn)
    want = oracles.flood_components(m, conn)
    assert len(got) == len(want)
    assert {c.pixels.tobytes() for c in got} == {c.tobytes() for c in want}
    union = np.zeros_like(m)
    for c in got:
        assert not (union & c.pixels).any()
        union |= c.pixels
    assert np.array_equal(union, m)
    sizes = [c.area for c in got]
    assert sizes == sorted(sizes, reverse=True)


def test_diagonal_touch_depends_on_connectivity():
    m = np.eye(4, dtype=bool)
    assert len(connected_components(BinaryMask(m), 8)) == 1
    assert len(connected_components(BinaryMask(m), 4)) == 4
    with pytest.raises(ValueError):
        connected_components(BinaryMask(m), 6)


@given(masks)
def test_inner_boundary_matches_oracle(m):
    assert np.array_equal(inner_boundary(m), oracles.boundary(m))


def test_closest_component_prefers_near_then_large():
    m = np.zeros((10, 20), bool)
    m[1:3, 1:3] = True
    m[1:8, 12:19] = True
    assert closest_component(BinaryMask(m), (2, 2)).area == 4
    assert closest_component(BinaryMask(m), (4, 15)).area == 49
    # equidistant: the larger one wins
    assert closest_component(BinaryMask(m), (2, 7)).area == 49
    assert not closest_component(BinaryMask(np.zeros((3, 3), bool)), (1, 1))


def _imp_reference(m, center, so, sc, conn):
    return closest_component(close(open(BinaryMask(m), so), sc), center, conn)


@given(
    arrays(bool, st.tuples(st.integers(4, 40), st.integers(4, 40))),
    elements,
    elements,
    st.sampled_from([4, 8]),
    st.tuples(st.integers(0, 39), st.integers(0, 39)),
)
def test_grouped_imp_equals_full_raster(m, so, sc, conn, center):
    assert imp_process(BinaryMask(m), center, so, sc, conn) == _imp_reference(m, center, so, sc, conn)


def test_grouped_imp_on_scattered_blobs():
    rng = np.random.default_rng(3)
    for _ in range(40):
        m = np.zeros((60, 80), bool)
        for _ in range(rng.integers(1, 8)):
            r, c = rng.integers(0, 60), rng.integers(0, 80)
            m[r:r + rng.integers(1, 12), c:c + rng.integers(1, 12)] = True
        m ^= rng.random(m.shape) < 0.03
        so = StructuringElement("disk", int(rng.integers(1, 4)))
        sc = StructuringElement("square", int(rng.integers(1, 4)))
        center = (float(rng.uniform(0, 60)), float(rng.uniform(0, 80)))
        assert imp_process(BinaryMask(m), center, so, sc) == _imp_reference(m, center, so, sc, 8)


def test_imp_of_empty_mask_is_empty():
    se = StructuringElement("disk", 1)
    assert not imp_process(BinaryMask(np.zeros((5, 5), bool)), (2, 2), se, se)
