"""Built-in consistency checks: loss gradients, oracle equivalences, determinism.

Every check draws its cases from a seeded substream, so a report depends
only on ``(seed, trials)``. Reports carry no timings for the same reason.
"""

from __future__ import annotations

import hashlib
import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .augment import AugmentConfig, augment_mask
from .core import (
    FIRST_INSTANCE,
    NUM_CLASSES,
    BinaryMask,
    DirectionField,
    InstanceLabelMap,
    SemanticLabels,
)
from .geometry import backproject, gt_direction_field
from .losses import direction_loss, rrn_loss, semantic_loss
from .metrics import evaluate_pair, f_matrix
from .morphology import StructuringElement, close, connected_components, dilate, erode, open
from .pipeline import OraclePredictor, SegmentParams, segment_cloud
from .rng import substream
from .scenegen import SceneConfig, generate_scene
from .voting import VotingParams, hough_vote

FAULTS = ("semantic", "direction", "rrn")
GRAD_TOL = 1e-5
FD_STEP = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    return float(np.abs(a - b).max(initial=0.0) / scale) if scale > 0 else 0.0


def central_difference(f, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = f(x)
        flat[i] = keep - h
        down = f(x)
        flat[i] = keep
        gflat[i] = (up - down) / (2 * h)
    return g


def _softmax_probs(rng, shape, c):
    z = rng.normal(size=shape + (c,))
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _unit_dirs(rng, shape):
    a = rng.uniform(0, 2 * np.pi, size=shape)
    return np.stack([np.sin(a), np.cos(a)], axis=-1)


def _random_instances(rng, h, w, k) -> InstanceLabelMap:
    lab = rng.integers(0, 2, size=(h, w))
    for iid in range(FIRST_INSTANCE, FIRST_INSTANCE + k):
        r, c = rng.integers(0, h), rng.integers(0, w)
        lab[max(0, r - 2):r + 3, max(0, c - 2):c + 3] = iid
    return InstanceLabelMap.compact(lab)


def check_gradients(seed: int, trials: int, fault: str | None = None) -> list[CheckResult]:
    results = []
    worst = {name: 0.0 for name in FAULTS}
    zero = {name: 0.0 for name in FAULTS}
    for t in range(trials):
        rng = substream(seed, 10_000 + t)
        h, w = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        inst = _random_instances(rng, h, w, int(rng.integers(0, 3)))
        sem = SemanticLabels.from_instances(inst)

        p = _softmax_probs(rng, (h, w), NUM_CLASSES)
        _, g = semantic_loss(p, sem, _fault=fault == "semantic")
        fd = central_difference(lambda x: semantic_loss(x, sem)[0], p.copy())
        worst["semantic"] = max(worst["semantic"], relative_error(g, fd))
        zero["semantic"] = max(zero["semantic"], abs(semantic_loss(np.eye(NUM_CLASSES)[sem.labels], sem)[0]))

        gt_dirs = gt_direction_field(inst)
        v = _unit_dirs(rng, (h, w))
        _, g = direction_loss(v, gt_dirs, inst, _fault=fault == "direction")
        fd = central_difference(lambda x: direction_loss(x, gt_dirs, inst)[0], v.copy())
        worst["direction"] = max(worst["direction"], relative_error(g, fd))
        perfect = np.where((inst.labels >= FIRST_INSTANCE)[..., None], gt_dirs.dirs, np.array([-1.0, 0.0]))
        zero["direction"] = max(zero["direction"], abs(direction_loss(perfect, gt_dirs, inst)[0]))

        fg = BinaryMask(rng.random((h, w)) < 0.4)
        q = _softmax_probs(rng, (h, w), 2)
        _, g = rrn_loss(q, fg, _fault=fault == "rrn")
        fd = central_difference(lambda x: rrn_loss(x, fg)[0], q.copy())
        worst["rrn"] = max(worst["rrn"], relative_error(g, fd))
        zero["rrn"] = max(zero["rrn"], abs(rrn_loss(np.eye(2)[fg.pixels.astype(int)], fg)[0]))
    for name in FAULTS:
        ok = worst[name] <= GRAD_TOL and zero[name] <= 1e-9
        results.append(CheckResult(
            f"gradient {name} loss", ok,
            f"max relative error {worst[name]:.2e} (tol {GRAD_TOL:.0e}), perfect-prediction loss {zero[name]:.1e}",
        ))
    return results


def random_vote_case(rng, max_side: int = 24):
    """Blob scene with noisy gt directions, or pure noise, on a small grid."""
    h, w = int(rng.integers(2, max_side + 1)), int(rng.integers(2, max_side + 1))
    if rng.random() < 0.5:
        inst = _random_instances(rng, h, w, int(rng.integers(1, 5)))
        sem = SemanticLabels.from_instances(inst)
        d = gt_direction_field(inst).dirs
        a = rng.normal(0, 0.3, size=(h, w))
        d = np.stack([np.cos(a) * d[..., 0] - np.sin(a) * d[..., 1], np.sin(a) * d[..., 0] + np.cos(a) * d[..., 1]], -1)
    else:
        sem = SemanticLabels(rng.choice(3, size=(h, w), p=[0.2, 0.2, 0.6]))
        d = _unit_dirs(rng, (h, w))
    params = VotingParams(num_bins=int(rng.choice([8, 12, 36, 60])),
                          score_threshold=float(rng.uniform(0.0, 0.3)),
                          nms_radius=float(rng.uniform(1, 8)))
    return sem, DirectionField(d), params


def check_voting(seed: int, trials: int) -> list[CheckResult]:
    results = []
    for name, k in _kernels.backends().items():
        bad = 0
        for t in range(trials):
            sem, dirs, params = random_vote_case(substream(seed, 20_000 + t))
            if hough_vote(sem, dirs, params, "fast", k) != hough_vote(sem, dirs, params, "exact"):
                bad += 1
        results.append(CheckResult(f"voting fast ({name}) == exact", bad == 0, f"{trials - bad}/{trials} grids identical"))
    return results


def _shift_all(m: np.ndarray, se: StructuringElement, reduce_and: bool) -> np.ndarray:
    h, w = m.shape
    r = se.radius
    pad = np.pad(m, r, constant_values=False)
    out = np.ones_like(m) if reduce_and else np.zeros_like(m)
    for dy, dx in zip(*np.nonzero(se.footprint)):
        win = pad[dy:dy + h, dx:dx + w]
        out = (out & win) if reduce_and else (out | win)
    return out


def flood_fill_components(m: np.ndarray, connectivity: int) -> list[np.ndarray]:
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    seen = np.zeros_like(m)
    comps = []
    h, w = m.shape
    for r, c in zip(*np.nonzero(m)):
        if seen[r, c]:
            continue
        comp = np.zeros_like(m)
        queue = deque([(r, c)])
        seen[r, c] = True
        while queue:
            y, x = queue.popleft()
            comp[y, x] = True
            for dy, dx in steps:
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w and m[yy, xx] and not seen[yy, xx]:
                    seen[yy, xx] = True
                    queue.append((yy, xx))
        comps.append(comp)
    return comps


def check_morphology(seed: int, trials: int) -> list[CheckResult]:
    failures = {"erode/dilate": 0, "laws": 0, "components": 0}
    for t in range(trials):
        rng = substream(seed, 30_000 + t)
        h, w = int(rng.integers(1, 24)), int(rng.integers(1, 24))
        m = rng.random((h, w)) < rng.uniform(0.1, 0.9)
        se = StructuringElement(str(rng.choice(["square", "disk"])), int(rng.integers(1, 4)))
        bm = BinaryMask(m)
        if not (np.array_equal(erode(bm, se).pixels, _shift_all(m, se, True))
                and np.array_equal(dilate(bm, se).pixels, _shift_all(m, se, False))):
            failures["erode/dilate"] += 1
        o, c = open(bm, se).pixels, close(bm, se).pixels
        laws = (not (o & ~m).any() and not (m & ~c).any()
                and np.array_equal(open(BinaryMask(o), se).pixels, o)
                and np.array_equal(close(BinaryMask(c), se).pixels, c))
        failures["laws"] += not laws
        conn = int(rng.choice([4, 8]))
        ours = sorted(x.pixels.tobytes() for x in connected_components(bm, conn))
        ref = sorted(x.tobytes() for x in flood_fill_components(m, conn))
        failures["components"] += ours != ref
    return [
        CheckResult("morphology erode/dilate == shifted-window oracle", failures["erode/dilate"] == 0,
                    f"{trials - failures['erode/dilate']}/{trials} masks"),
        CheckResult("morphology open/close laws", failures["laws"] == 0, f"{trials - failures['laws']}/{trials} masks"),
        CheckResult("connected components == flood fill", failures["components"] == 0,
                    f"{trials - failures['components']}/{trials} masks"),
    ]


def best_permutation_total(fm: np.ndarray) -> float:
    n, m = fm.shape
    if n == 0 or m == 0:
        return 0.0
    if n > m:
        fm, n, m = fm.T, m, n
    return max(sum(fm[i, p[i]] for i in range(n)) for p in itertools.permutations(range(m), n))


def check_hungarian(seed: int, trials: int) -> list[CheckResult]:
    bad = 0
    for t in range(trials):
        rng = substream(seed, 40_000 + t)
        n, m = int(rng.integers(0, 7)), int(rng.integers(0, 7))
        inter = rng.integers(0, 20, size=(n, m)).astype(np.float64) * (rng.random((n, m)) < 0.6)
        ps = inter.sum(axis=1) + rng.integers(1, 10, size=n)
        gs = inter.sum(axis=0) + rng.integers(1, 10, size=m)
        fm = f_matrix(inter, ps, gs)
        if fm.size:
            r, c = linear_sum_assignment(fm, maximize=True)
            got = float(fm[r, c].sum())
        else:
            got = 0.0
        bad += abs(got - best_permutation_total(fm)) > 1e-9
    return [CheckResult("Hungarian matching == exhaustive search", bad == 0, f"{trials - bad}/{trials} cases")]


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def _determinism_run(seed: int, n: int) -> str:
    cfg = SceneConfig(resolution=(96, 72), object_count_range=(2, 5))
    parts = []
    for i in range(n):
        s = generate_scene(cfg, substream(seed, 50_000 + i))
        cloud = backproject(s.depth, s.camera, s.valid)
        inst, _ = segment_cloud(cloud, OraclePredictor(s.instances, 5.0, 0.01, seed=i), SegmentParams())
        score = evaluate_pair(inst, s.instances)
        parts.append(_digest(s.depth, s.instances.labels, inst.labels))
        parts.append(f"{score.overlap.fmeasure:.12f}")
        if s.instances.num_instances:
            aug = augment_mask(BinaryMask(s.instances.labels == FIRST_INSTANCE), AugmentConfig(), substream(seed, 60_000 + i))
            parts.append(_digest(aug.pixels))
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


def check_determinism(seed: int, trials: int) -> list[CheckResult]:
    n = max(1, min(trials, 10))
    a, b = _determinism_run(seed, n), _determinism_run(seed, n)
    return [CheckResult("determinism (scene, segment, augment reruns)", a == b, f"digest {a}" if a == b else f"{a} != {b}")]


def run_selfcheck(seed: int = 0, trials: int = 100, fault: str | None = None) -> list[CheckResult]:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"fault must be one of {FAULTS}")
    return [
        *check_gradients(seed, trials, fault),
        *check_voting(seed, trials),
        *check_morphology(seed, trials),
        *check_hungarian(seed, trials),
        *check_determinism(seed, trials),
    ]
