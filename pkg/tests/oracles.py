"""Slow reference implementations written straight from the definitions."""

import itertools
import math
from collections import deque

import numpy as np


def sector(drow, dcol, m):
    t = math.atan2(drow, dcol) * m / (2 * math.pi)
    return int(math.floor(t + 1e-9)) % m


def votes(labels, dirs, m, valid=None):
    """Per-pixel count of other object pixels whose predicted sector contains the offset to it."""
    h, w = labels.shape
    obj = [(r, c) for r in range(h) for c in range(w) if labels[r, c] == 2]
    out = np.zeros((h, w), dtype=np.int64)
    for (qr, qc) in obj:
        if valid is not None and not valid[qr, qc]:
            continue
        b = sector(dirs[qr, qc, 0], dirs[qr, qc, 1], m)
        for (pr, pc) in obj:
            if (pr, pc) != (qr, qc) and sector(pr - qr, pc - qc, m) == b:
                out[pr, pc] += 1
    return out


def scores(labels, dirs, m):
    n = int((labels == 2).sum())
    v = votes(labels, dirs, m)
    return v / (n - 1) if n > 1 else np.zeros(labels.shape)


def greedy_nms(score, threshold, radius):
    h, w = score.shape
    cands = [(-score[r, c], r, c) for r in range(h) for c in range(w) if score[r, c] >= threshold and score[r, c] > 0]
    kept = []
    for _, r, c in sorted(cands):
        if all((r - kr) ** 2 + (c - kc) ** 2 > radius * radius for kr, kc in kept):
            kept.append((r, c))
    return kept


def assign(labels, dirs, centers, tol_deg):
    """Nearest pointed-to center, else least angular deviation; ties to the earlier center."""
    h, w = labels.shape
    cos_tol = math.cos(math.radians(tol_deg))
    owner = np.full((h, w), -1)
    for r in range(h):
        for c in range(w):
            if labels[r, c] != 2 or not centers:
                continue
            d = dirs[r, c]
            info = []
            for k, (cr, cc) in enumerate(centers):
                dist = math.hypot(cr - r, cc - c)
                cos = 1.0 if dist == 0 else (d[0] * (cr - r) + d[1] * (cc - c)) / dist
                info.append((k, dist, cos))
            pointed = [(dist, k) for k, dist, cos in info if dist == 0 or cos >= cos_tol]
            if pointed:
                owner[r, c] = min(pointed)[1]
            else:
                owner[r, c] = min((-cos, k) for k, _, cos in info)[1]
    out = np.where(labels == 1, 1, 0)
    used = sorted(set(owner[owner >= 0].tolist()))
    for new, k in enumerate(used, start=2):
        out[owner == k] = new
    return out


def erode(m, footprint):
    h, w = m.shape
    r = footprint.shape[0] // 2
    out = np.zeros_like(m)
    for y in range(h):
        for x in range(w):
            ok = True
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    if footprint[dy + r, dx + r]:
                        yy, xx = y + dy, x + dx
                        if not (0 <= yy < h and 0 <= xx < w and m[yy, xx]):
                            ok = False
            out[y, x] = ok
    return out


def dilate(m, footprint):
    h, w = m.shape
    r = footprint.shape[0] // 2
    out = np.zeros_like(m)
    for y in range(h):
        for x in range(w):
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy, xx = y + dy, x + dx
                    if footprint[dy + r, dx + r] and 0 <= yy < h and 0 <= xx < w and m[yy, xx]:
                        out[y, x] = True
    return out


def flood_components(m, connectivity):
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    h, w = m.shape
    seen = np.zeros_like(m, dtype=bool)
    comps = []
    for r in range(h):
        for c in range(w):
            if not m[r, c] or seen[r, c]:
                continue
            comp = np.zeros_like(m, dtype=bool)
            q = deque([(r, c)])
            seen[r, c] = True
            while q:
                y, x = q.popleft()
                comp[y, x] = True
                for dy, dx in steps:
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and m[yy, xx] and not seen[yy, xx]:
                        seen[yy, xx] = True
                        q.append((yy, xx))
            comps.append(comp)
    return comps


def boundary(m):
    h, w = m.shape
    out = np.zeros_like(m, dtype=bool)
    for y in range(h):
        for x in range(w):
            if not m[y, x]:
                continue
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy, xx = y + dy, x + dx
                    if not (0 <= yy < h and 0 <= xx < w) or not m[yy, xx]:
                        out[y, x] = True
    return out


def disk_dilate(m, radius):
    h, w = m.shape
    pts = list(zip(*np.nonzero(m)))
    out = np.zeros_like(m, dtype=bool)
    for y in range(h):
        for x in range(w):
            out[y, x] = any((y - py) ** 2 + (x - px) ** 2 <= radius * radius for py, px in pts)
    return out


def pairwise_f(a, b):
    inter = int((a & b).sum())
    if inter == 0:
        return 0.0
    p, r = inter / a.sum(), inter / b.sum()
    return 2 * p * r / (p + r)


def best_matching(pred, gt):
    """Exhaustive search over one-to-one matchings maximizing total pairwise F."""
    pid = sorted(set(pred[pred >= 2].tolist()))
    gid = sorted(set(gt[gt >= 2].tolist()))
    f = {(a, b): pairwise_f(pred == a, gt == b) for a in pid for b in gid}
    best, best_pairs = -1.0, []
    if len(pid) <= len(gid):
        for perm in itertools.permutations(gid, len(pid)):
            pairs = list(zip(pid, perm))
            tot = sum(f[p] for p in pairs)
            if tot > best + 1e-12:
                best, best_pairs = tot, pairs
    else:
        for perm in itertools.permutations(pid, len(gid)):
            pairs = list(zip(perm, gid))
            tot = sum(f[p] for p in pairs)
            if tot > best + 1e-12:
                best, best_pairs = tot, pairs
    return max(best, 0.0), best_pairs


def prf(tp_p, n_p, tp_r, n_r):
    p = 100.0 * tp_p / n_p if n_p else 0.0
    r = 100.0 * tp_r / n_r if n_r else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def overlap_and_boundary(pred, gt, slack):
    """Both metrics straight from the set formulas, using a given optimal matching."""
    pid = sorted(set(pred[pred >= 2].tolist()))
    gid = sorted(set(gt[gt >= 2].tolist()))
    if not pid and not gid:
        return (100.0,) * 3, (100.0,) * 3
    if not pid or not gid:
        return (0.0,) * 3, (0.0,) * 3
    _, pairs = best_matching(pred, gt)
    tp = sum(int(((pred == a) & (gt == b)).sum()) for a, b in pairs)
    ov = prf(tp, int((pred >= 2).sum()), tp, int((gt >= 2).sum()))
    bp = {a: boundary(pred == a) for a in pid}
    bg = {b: boundary(gt == b) for b in gid}
    tpp = sum(int((bp[a] & disk_dilate(bg[b], slack)).sum()) for a, b in pairs)
    tpr = sum(int((disk_dilate(bp[a], slack) & bg[b]).sum()) for a, b in pairs)
    bd = prf(tpp, sum(int(v.sum()) for v in bp.values()), tpr, sum(int(v.sum()) for v in bg.values()))
    return ov, bd


def central_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        keep = x[idx]
        x[idx] = keep + h
        up = f(x)
        x[idx] = keep - h
        down = f(x)
        x[idx] = keep
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    scale = max(np.abs(a).max(initial=0), np.abs(b).max(initial=0))
    return float(np.abs(a - b).max(initial=0) / scale) if scale else 0.0


def random_instances(rng, h, w, k, size=3):
    lab = rng.integers(0, 2, size=(h, w))
    for iid in range(2, 2 + k):
        r, c = rng.integers(0, h), rng.integers(0, w)
        lab[max(0, r - size):r + size + 1, max(0, c - size):c + size + 1] = iid
    vals = sorted(set(lab[lab >= 2].tolist()))
    out = lab.copy()
    for new, old in enumerate(vals, start=2):
        out[lab == old] = new
    return out
