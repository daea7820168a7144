import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uois.core import DirectionField, ImageGrid, InstanceLabelMap, InvariantError, SemanticLabels
from uois.geometry import gt_direction_field
from uois.metrics import overlap_prf
from uois.voting import (
    CenterScores,
    VotingParams,
    assign_pixels,
    center_scores,
    direction_bins,
    hough_vote,
    hough_vote_with_centers,
    select_centers,
)

import oracles
from oracles import random_instances


def noisy_case(seed, h, w, k, sigma=0.4):
    rng = np.random.default_rng(seed)
    lab = random_instances(rng, h, w, k)
    inst = InstanceLabelMap(lab)
    d = gt_direction_field(inst).dirs
    a = rng.normal(0, sigma, size=(h, w))
    d = np.stack([np.cos(a) * d[..., 0] - np.sin(a) * d[..., 1], np.sin(a) * d[..., 0] + np.cos(a) * d[..., 1]], -1)
    return inst, SemanticLabels.from_instances(inst), DirectionField(d)


def test_params_invariants():
    for bad in ({"num_bins": 3}, {"score_threshold": 1.5}, {"nms_radius": 0.5}, {"assign_angle_tol": 180}):
        with pytest.raises(InvariantError):
            VotingParams(**bad)


def test_nms_radius_scales_with_diagonal():
    p = VotingParams(nms_radius=40.0)
    assert p.scaled_to(ImageGrid(480, 640)).nms_radius == pytest.approx(40.0)
    assert p.scaled_to(ImageGrid(240, 320)).nms_radius == pytest.approx(20.0)


def test_direction_bins_boundaries():
    m = 8
    # exact sector boundaries belong to the sector they open
    for k in range(m):
        a = 2 * np.pi * k / m
        assert direction_bins(np.sin(a), np.cos(a), m) == k
    assert direction_bins(0.0, -1.0, m) == direction_bins(-0.0, -1.0, m) == 4


def test_perfect_field_peaks_at_centroid():
    lab = np.zeros((9, 9), int)
    lab[2:7, 2:7] = 2
    inst = InstanceLabelMap(lab)
    s = center_scores(SemanticLabels.from_instances(inst), gt_direction_field(inst), VotingParams(num_bins=8))
    assert np.unravel_index(np.argmax(s.score), s.score.shape) == (4, 4)
    assert s.score[4, 4] == s.score.max()


def test_no_object_pixels_scores_zero():
    sem = SemanticLabels(np.ones((4, 4), int))
    d = DirectionField(np.tile([1.0, 0.0], (4, 4, 1)))
    assert (center_scores(sem, d).score == 0).all()


def test_grid_mismatch_raises():
    with pytest.raises(InvariantError):
        center_scores(SemanticLabels(np.zeros((3, 3), int)), DirectionField(np.tile([1.0, 0.0], (3, 4, 1))))


@pytest.mark.parametrize("method", ["exact", "fast"])
def test_scores_equal_double_loop(method):
    inst, sem, dirs = noisy_case(2, 32, 32, 2, sigma=0.6)
    want = oracles.scores(sem.labels, dirs.dirs, 8)
    got = center_scores(sem, dirs, VotingParams(num_bins=8), method=method).score
    np.testing.assert_array_equal(got, want)


def test_scores_zero_off_objects_and_in_unit_interval():
    inst, sem, dirs = noisy_case(4, 20, 25, 3)
    s = center_scores(sem, dirs).score
    assert (s[sem.labels != 2] == 0).all()
    assert s.min() >= 0 and s.max() <= 1


def test_select_centers_threshold_and_suppression():
    s = np.zeros((10, 10))
    s[2, 2] = 0.04
    assert select_centers(CenterScores(s), VotingParams(score_threshold=0.05)) == []
    s[2, 2], s[2, 5] = 0.9, 0.8
    assert select_centers(CenterScores(s), VotingParams(score_threshold=0.05, nms_radius=10)) == [(2, 2)]


def test_select_centers_tie_break_is_row_major():
    s = np.zeros((6, 6))
    s[4, 1] = s[1, 4] = s[1, 2] = 0.5
    assert select_centers(CenterScores(s), VotingParams(score_threshold=0.1, nms_radius=1)) == [(1, 2), (1, 4), (4, 1)]


def test_five_separated_maxima():
    rng = np.random.default_rng(9)
    s = rng.uniform(0, 0.05, size=(60, 60))
    peaks = [(5, 5), (5, 50), (30, 28), (52, 8), (50, 50)]
    for k, (r, c) in enumerate(peaks):
        s[r, c] = 0.5 + 0.1 * k
    p = VotingParams(score_threshold=0.1, nms_radius=8)
    got = select_centers(CenterScores(s), p)
    assert sorted(got) == sorted(peaks)
    assert got == oracles.greedy_nms(s, 0.1, 8)


@given(st.integers(0, 10_000), st.floats(1.0, 6.0), st.floats(0.0, 0.5))
def test_select_centers_matches_greedy_oracle(seed, radius, thr):
    rng = np.random.default_rng(seed)
    s = rng.choice([0.0, 0.1, 0.2, 0.5, 0.7, 1.0], size=(9, 11))
    p = VotingParams(score_threshold=thr, nms_radius=radius)
    assert select_centers(CenterScores(s), p) == oracles.greedy_nms(s, thr, radius)


def test_single_center_perfect_field_recovers_mask():
    lab = np.zeros((12, 12), int)
    lab[3:9, 2:10] = 2
    lab[0, :] = 1
    inst = InstanceLabelMap(lab)
    sem = SemanticLabels.from_instances(inst)
    out = assign_pixels(sem, gt_direction_field(inst), [(5, 5)])
    assert out == inst


def test_no_centers_gives_background_and_table():
    inst, sem, dirs = noisy_case(1, 12, 12, 2)
    out = assign_pixels(sem, dirs, [])
    assert set(np.unique(out.labels)) <= {0, 1}
    np.testing.assert_array_equal(out.labels == 1, sem.labels == 1)


@pytest.mark.parametrize("seed", range(5))
def test_assignment_matches_exhaustive_oracle(seed):
    inst, sem, dirs = noisy_case(seed, 16, 18, 2, sigma=0.8)
    rng = np.random.default_rng(seed)
    centers = [tuple(int(v) for v in rng.integers(0, 16, 2)) for _ in range(3)]
    p = VotingParams(assign_angle_tol=25.0)
    got = assign_pixels(sem, dirs, centers, p).labels
    np.testing.assert_array_equal(got, oracles.assign(sem.labels, dirs.dirs, centers, 25.0))


def test_invalid_direction_goes_to_nearest_center():
    lab = np.full((1, 9), 2)
    d = np.tile([0.0, 1.0], (1, 9, 1))
    valid = np.ones((1, 9), bool)
    valid[0, 1] = False
    out = assign_pixels(SemanticLabels(lab), DirectionField(d, valid), [(0, 0), (0, 8)])
    assert out.labels[0, 1] == out.labels[0, 0]


def test_gt_inputs_three_objects_overlap_100():
    # odd sides put each centroid on a pixel
    lab = np.zeros((40, 60), int)
    lab[5:16, 5:16] = 2
    lab[20:35, 10:21] = 3
    lab[10:31, 35:56] = 4
    inst = InstanceLabelMap(lab)
    p = VotingParams(score_threshold=0.1, nms_radius=5)
    out = hough_vote(SemanticLabels.from_instances(inst), gt_direction_field(inst), p)
    assert overlap_prf(out, inst).fmeasure == 100.0


def test_coincident_centroids_merge():
    # a disk inside a ring: both centroids sit on the same pixel
    rr, cc = np.indices((31, 31))
    d2 = (rr - 15) ** 2 + (cc - 15) ** 2
    lab = np.zeros((31, 31), int)
    lab[d2 <= 9] = 2
    lab[(d2 >= 100) & (d2 < 169)] = 3
    inst = InstanceLabelMap(lab)
    p = VotingParams(score_threshold=0.1, nms_radius=8)
    out = hough_vote(SemanticLabels.from_instances(inst), gt_direction_field(inst), p)
    assert out.num_instances == 1


@pytest.mark.parametrize("seed", range(3))
def test_pipeline_equals_composed_oracles(seed):
    inst, sem, dirs = noisy_case(100 + seed, 64, 64, 4, sigma=0.3)
    p = VotingParams(num_bins=36, score_threshold=0.05, nms_radius=10)
    s = oracles.scores(sem.labels, dirs.dirs, 36)
    centers = oracles.greedy_nms(s, 0.05, 10)
    want = oracles.assign(sem.labels, dirs.dirs, centers, p.assign_angle_tol)
    np.testing.assert_array_equal(hough_vote(sem, dirs, p).labels, want)


def test_deterministic_and_centers_match_instances():
    inst, sem, dirs = noisy_case(5, 30, 30, 3)
    p = VotingParams(nms_radius=6)
    a, ca = hough_vote_with_centers(sem, dirs, p)
    b, cb = hough_vote_with_centers(sem, dirs, p)
    assert a == b and ca == cb
    assert len(ca) == a.num_instances
    assert a == hough_vote(sem, dirs, p)


@pytest.mark.parametrize("seed", range(4))
def test_half_turn_symmetry_of_scores(seed):
    inst, sem, dirs = noisy_case(200 + seed, 20, 24, 3)
    p = VotingParams(num_bins=12)
    s = center_scores(sem, dirs, p).score
    rot_sem = SemanticLabels(sem.labels[::-1, ::-1])
    rot_dirs = DirectionField(-dirs.dirs[::-1, ::-1])
    np.testing.assert_array_equal(center_scores(rot_sem, rot_dirs, p).score, s[::-1, ::-1])


def test_half_turn_symmetry_of_output_without_ties():
    lab = np.zeros((40, 40), int)
    lab[4:15, 5:18] = 2
    lab[22:37, 20:33] = 3
    inst = InstanceLabelMap(lab)
    sem, dirs = SemanticLabels.from_instances(inst), gt_direction_field(inst)
    p = VotingParams(num_bins=60, score_threshold=0.1, nms_radius=8)
    out = hough_vote(sem, dirs, p)
    rot = hough_vote(SemanticLabels(sem.labels[::-1, ::-1]), DirectionField(-dirs.dirs[::-1, ::-1]), p)
    assert out.num_instances == 2
    # ids may be renumbered; compare partitions
    assert overlap_prf(rot, InstanceLabelMap.compact(out.labels[::-1, ::-1])).fmeasure == 100.0
