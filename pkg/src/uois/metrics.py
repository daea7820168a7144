"""Overlap and Boundary precision/recall/F-measure with Hungarian matching.

Objects are instance ids >= 2; the table label is ignored. Numbers are
reported on a 0-100 scale. When neither map has objects every number is
100; when exactly one does, every number is 0.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .core import FIRST_INSTANCE, BinaryMask, ImageGrid, InstanceLabelMap, present_values
from .morphology import inner_boundary as boundary

COLUMNS = ("overlap_p", "overlap_r", "overlap_f", "boundary_p", "boundary_r", "boundary_f")

def default_slack_radius(grid: ImageGrid) -> int:
    return max(1, int(round(0.0075 * grid.diagonal)))


def _f(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    fmeasure: float

    @classmethod
    def from_pr(cls, p: float, r: float) -> "PRF":
        return cls(p, r, _f(p, r))


@dataclass(frozen=True)
class Matching:
    pairs: list[tuple[int, int]]
    unmatched_pred: list[int]
    unmatched_gt: list[int]


@dataclass
class Counts:
    """Numerators and denominators behind one P/R pair (for micro averaging)."""

    tp_p: float = 0.0
    pred_total: float = 0.0
    tp_r: float = 0.0
    gt_total: float = 0.0
    pred_empty: bool = True
    gt_empty: bool = True

    def prf(self) -> PRF:
        if self.pred_empty and self.gt_empty:
            return PRF(100.0, 100.0, 100.0)
        if self.pred_empty or self.gt_empty:
            return PRF(0.0, 0.0, 0.0)
        p = 100.0 * self.tp_p / self.pred_total if self.pred_total else 0.0
        r = 100.0 * self.tp_r / self.gt_total if self.gt_total else 0.0
        return PRF.from_pr(p, r)


def pairwise_f(pred_mask: BinaryMask, gt_mask: BinaryMask) -> float:
    a, b = _pix(pred_mask), _pix(gt_mask)
    inter = float(np.logical_and(a, b).sum())
    na, nb = float(a.sum()), float(b.sum())
    if inter == 0 or na == 0 or nb == 0:
        return 0.0
    return _f(inter / na, inter / nb)


def _pix(m) -> np.ndarray:
    return m.pixels if isinstance(m, BinaryMask) else np.asarray(m, bool)


def _labels(m) -> np.ndarray:
    return m.labels if isinstance(m, InstanceLabelMap) else np.asarray(m, dtype=np.int64)


def _ids(lab: np.ndarray) -> np.ndarray:
    ids = present_values(lab)
    return ids[ids >= FIRST_INSTANCE]


def _contingency(pred: np.ndarray, gt: np.ndarray, pred_ids, gt_ids):
    """Intersection counts and sizes for every (pred id, gt id) pair."""
    pi = np.searchsorted(pred_ids, pred)
    gi = np.searchsorted(gt_ids, gt)
    pin = (pred >= FIRST_INSTANCE)
    gin = (gt >= FIRST_INSTANCE)
    both = pin & gin
    n, m = len(pred_ids), len(gt_ids)
    inter = np.bincount(pi[both] * m + gi[both], minlength=n * m).reshape(n, m).astype(np.float64)
    psize = np.bincount(pi[pin], minlength=n).astype(np.float64)
    gsize = np.bincount(gi[gin], minlength=m).astype(np.float64)
    return inter, psize, gsize


def f_matrix(inter: np.ndarray, psize: np.ndarray, gsize: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        p = inter / psize[:, None]
        r = inter / gsize[None, :]
        f = np.where(inter > 0, 2 * p * r / (p + r), 0.0)
    return f


def _match(fm: np.ndarray, pred_ids, gt_ids) -> Matching:
    if fm.size == 0:
        return Matching([], [int(i) for i in pred_ids], [int(j) for j in gt_ids])
    rows, cols = linear_sum_assignment(fm, maximize=True)
    pairs = [(int(pred_ids[r]), int(gt_ids[c])) for r, c in zip(rows, cols)]
    mp = {p for p, _ in pairs}
    mg = {g for _, g in pairs}
    return Matching(
        pairs,
        [int(i) for i in pred_ids if int(i) not in mp],
        [int(j) for j in gt_ids if int(j) not in mg],
    )


def match_instances(pred: InstanceLabelMap, gt: InstanceLabelMap) -> Matching:
    """One-to-one matching maximizing the total pairwise F-measure."""
    p, g = _labels(pred), _labels(gt)
    if p.shape != g.shape:
        raise ValueError("prediction and ground truth grids differ")
    pid, gid = _ids(p), _ids(g)
    inter, ps, gs = _contingency(p, g, pid, gid)
    return _match(f_matrix(inter, ps, gs), pid, gid)


def _overlap_counts(p, g, pid, gid, inter, ps, gs, matching: Matching) -> Counts:
    pidx = {int(v): k for k, v in enumerate(pid)}
    gidx = {int(v): k for k, v in enumerate(gid)}
    tp = sum(inter[pidx[a], gidx[b]] for a, b in matching.pairs)
    return Counts(tp, ps.sum(), tp, gs.sum(), len(pid) == 0, len(gid) == 0)


def _grow(box, pad: int, shape) -> tuple[slice, slice]:
    rs, cs = box
    return (
        slice(max(0, rs.start - pad), min(shape[0], rs.stop + pad)),
        slice(max(0, cs.start - pad), min(shape[1], cs.stop + pad)),
    )


def _boundaries(lab: np.ndarray, ids) -> dict:
    """Boundary pixel coordinates of each instance, computed on padded crops."""
    boxes = ndimage.find_objects(lab)
    out = {}
    for i in ids:
        i = int(i)
        win = _grow(boxes[i - 1], 1, lab.shape)
        b = boundary(lab[win] == i)
        rr, cc = np.nonzero(b)
        out[i] = (rr + win[0].start, cc + win[1].start)
    return out


def _slack_hits(src, dst, radius: int, shape=None) -> float:
    """Number of ``src`` boundary pixels within Euclidean ``radius`` of a ``dst`` boundary pixel."""
    if src[0].size == 0 or dst[0].size == 0:
        return 0.0
    tree = cKDTree(np.column_stack(dst))
    d, _ = tree.query(np.column_stack(src), k=1, distance_upper_bound=radius + 0.5)
    # coordinates are integers, so squared distances are exact integers
    return float(np.count_nonzero(np.rint(d * d) <= radius * radius))


def _boundary_counts(p, g, pid, gid, matching: Matching, radius: int) -> Counts:
    pred_b = _boundaries(p, pid)
    gt_b = _boundaries(g, gid)
    tp_p = tp_r = 0.0
    for a, b in matching.pairs:
        tp_p += _slack_hits(pred_b[a], gt_b[b], radius, p.shape)
        tp_r += _slack_hits(gt_b[b], pred_b[a], radius, p.shape)
    pred_total = float(sum(v[0].size for v in pred_b.values()))
    gt_total = float(sum(v[0].size for v in gt_b.values()))
    return Counts(tp_p, pred_total, tp_r, gt_total, len(pid) == 0, len(gid) == 0)


@dataclass
class ImageScore:
    image_id: str
    overlap: PRF
    boundary: PRF
    overlap_counts: Counts = field(repr=False, default_factory=Counts)
    boundary_counts: Counts = field(repr=False, default_factory=Counts)

    def row(self) -> list:
        o, b = self.overlap, self.boundary
        return [self.image_id, o.precision, o.recall, o.fmeasure, b.precision, b.recall, b.fmeasure]


def evaluate_pair(pred: InstanceLabelMap, gt: InstanceLabelMap, slack_radius: int | None = None, image_id: str = "") -> ImageScore:
    """Overlap and Boundary P/R/F for one image, sharing a single matching."""
    p, g = _labels(pred), _labels(gt)
    if p.shape != g.shape:
        raise ValueError("prediction and ground truth grids differ")
    if slack_radius is None:
        slack_radius = default_slack_radius(ImageGrid.of(p))
    pid, gid = _ids(p), _ids(g)
    inter, ps, gs = _contingency(p, g, pid, gid)
    matching = _match(f_matrix(inter, ps, gs), pid, gid)
    oc = _overlap_counts(p, g, pid, gid, inter, ps, gs, matching)
    bc = _boundary_counts(p, g, pid, gid, matching, slack_radius)
    return ImageScore(image_id, oc.prf(), bc.prf(), oc, bc)


def overlap_prf(pred: InstanceLabelMap, gt: InstanceLabelMap) -> PRF:
    return evaluate_pair(pred, gt, slack_radius=0).overlap


def boundary_prf(pred: InstanceLabelMap, gt: InstanceLabelMap, slack_radius: int | None = None) -> PRF:
    return evaluate_pair(pred, gt, slack_radius).boundary


@dataclass
class ScoreReport:
    rows: list[ImageScore]
    mean: dict
    averaging: str = "macro"

    def summary(self) -> dict:
        return {"averaging": self.averaging, "num_images": len(self.rows), **self.mean}


def aggregate(scores: list[ImageScore], averaging: str = "macro") -> ScoreReport:
    """Dataset-level numbers: per-image mean ("macro") or pooled counts ("micro")."""
    if averaging not in ("macro", "micro"):
        raise ValueError("averaging must be 'macro' or 'micro'")
    if not scores:
        return ScoreReport([], {k: float("nan") for k in COLUMNS}, averaging)
    if averaging == "macro":
        table = np.array([s.row()[1:] for s in scores], dtype=np.float64)
        mean = dict(zip(COLUMNS, table.mean(axis=0).tolist()))
    else:
        mean = {}
        for prefix, attr in (("overlap", "overlap_counts"), ("boundary", "boundary_counts")):
            pooled = Counts(
                sum(getattr(s, attr).tp_p for s in scores),
                sum(getattr(s, attr).pred_total for s in scores),
                sum(getattr(s, attr).tp_r for s in scores),
                sum(getattr(s, attr).gt_total for s in scores),
                all(getattr(s, attr).pred_empty for s in scores),
                all(getattr(s, attr).gt_empty for s in scores),
            )
            prf = pooled.prf()
            mean.update({f"{prefix}_p": prf.precision, f"{prefix}_r": prf.recall, f"{prefix}_f": prf.fmeasure})
    return ScoreReport(list(scores), mean, averaging)


def prf_dict(prf: PRF) -> dict:
    return asdict(prf)
