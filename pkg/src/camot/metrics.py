"""CLEAR-MOT and IDF1 over ground-truth / result track sets.

Both inputs are mappings ``frame -> [(id, BBox), ...]`` as returned by
:func:`camot.io.read_tracks`. Ground-truth rows whose confidence column is 0
are "do not consider" rows and are dropped before scoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError
from .geometry import BBox
from .tracker import iou_matrix

Tracks = Mapping[int, Sequence[tuple[int, BBox]]]


@dataclass(frozen=True)
class FrameStats:
    frame: int
    num_gt: int
    num_pred: int
    matches: int
    fp: int
    fn: int
    idsw: int


@dataclass
class EvalReport:
    mota: float
    fp: int
    fn: int
    idsw: int
    num_gt: int
    num_pred: int
    matches: int
    idf1: float = float("nan")
    idtp: int = 0
    frames: list[FrameStats] = field(default_factory=list)

    def row(self) -> dict[str, float]:
        return {
            "mota": self.mota,
            "idf1": self.idf1,
            "fp": self.fp,
            "fn": self.fn,
            "idsw": self.idsw,
            "num_gt": self.num_gt,
            "num_pred": self.num_pred,
        }


def _clean(tracks: Tracks, is_gt: bool, name: str) -> dict[int, tuple[list[int], list[BBox]]]:
    out = {}
    for frame, rows in tracks.items():
        if is_gt:
            rows = [(i, b) for i, b in rows if b.conf > 0]
        ids = [int(i) for i, _ in rows]
        if len(set(ids)) != len(ids):
            raise InvalidInputError(f"duplicate {name} id in frame {frame}")
        out[int(frame)] = (ids, [b for _, b in rows])
    return out


def _iou(gb: list[BBox], pb: list[BBox]) -> np.ndarray:
    if not gb or not pb:
        return np.zeros((len(gb), len(pb)))
    return iou_matrix(gb, pb)


def clear_mot(gt: Tracks, pred: Tracks, iou_gate: float = 0.5) -> EvalReport:
    """CLEAR-MOT counts with carry-over of last frame's correspondences.

    A gt object keeps its previous partner if that prediction is present and
    still overlaps by at least ``iou_gate``; everything else is matched by a
    Hungarian solve on IoU. An identity switch is counted when a gt object is
    matched to a different prediction id than at its last match.
    """
    if not 0.0 < iou_gate <= 1.0:
        raise InvalidInputError("iou_gate must lie in (0, 1]")
    g, p = _clean(gt, True, "ground-truth"), _clean(pred, False, "prediction")
    last: dict[int, int] = {}  # gt id -> pred id of its latest match
    prev: dict[int, int] = {}  # correspondences of the previous frame
    fp = fn = idsw = matches = num_gt = num_pred = 0
    frames = []
    for frame in sorted(set(g) | set(p)):
        gids, gb = g.get(frame, ([], []))
        pids, pb = p.get(frame, ([], []))
        iou = _iou(gb, pb)
        pidx = {pid: j for j, pid in enumerate(pids)}
        cur: dict[int, int] = {}
        used_g, used_p = set(), set()
        for i, gid in enumerate(gids):
            j = pidx.get(prev.get(gid, -10**18))
            if j is not None and j not in used_p and iou[i, j] >= iou_gate:
                cur[gid] = pids[j]
                used_g.add(i)
                used_p.add(j)
        rest_g = [i for i in range(len(gids)) if i not in used_g]
        rest_p = [j for j in range(len(pids)) if j not in used_p]
        if rest_g and rest_p:
            sub = iou[np.ix_(rest_g, rest_p)]
            r, c = linear_sum_assignment(np.where(sub >= iou_gate, -sub, 1.0))
            for a, b in zip(r, c):
                if sub[a, b] >= iou_gate:
                    cur[gids[rest_g[a]]] = pids[rest_p[b]]
        sw = sum(1 for gid, pid in cur.items() if gid in last and last[gid] != pid)
        for gid, pid in cur.items():
            last[gid] = pid
        prev = cur
        m = len(cur)
        stats = FrameStats(frame, len(gids), len(pids), m, len(pids) - m, len(gids) - m, sw)
        frames.append(stats)
        fp += stats.fp
        fn += stats.fn
        idsw += sw
        matches += m
        num_gt += len(gids)
        num_pred += len(pids)
    if num_gt == 0:
        raise InvalidInputError("ground truth holds no boxes; MOTA is undefined")
    mota = 1.0 - (fp + fn + idsw) / num_gt
    return EvalReport(mota, fp, fn, idsw, num_gt, num_pred, matches, frames=frames)


def identity_overlaps(gt: Tracks, pred: Tracks, iou_gate: float = 0.5):
    """Per identity pair, the number of frames where the boxes overlap >= gate.

    Returns ``(gt_ids, pred_ids, counts, gt_sizes, pred_sizes)``.
    """
    g, p = _clean(gt, True, "ground-truth"), _clean(pred, False, "prediction")
    gt_ids = sorted({i for ids, _ in g.values() for i in ids})
    pred_ids = sorted({i for ids, _ in p.values() for i in ids})
    gi = {v: k for k, v in enumerate(gt_ids)}
    pi = {v: k for k, v in enumerate(pred_ids)}
    counts = np.zeros((len(gt_ids), len(pred_ids)), dtype=np.int64)
    gsize = np.zeros(len(gt_ids), dtype=np.int64)
    psize = np.zeros(len(pred_ids), dtype=np.int64)
    for frame, (gids, gb) in g.items():
        for i in gids:
            gsize[gi[i]] += 1
        pids, pb = p.get(frame, ([], []))
        hit = _iou(gb, pb) >= iou_gate
        for a, b in zip(*np.nonzero(hit)):
            counts[gi[gids[a]], pi[pids[b]]] += 1
    for pids, _ in p.values():
        for i in pids:
            psize[pi[i]] += 1
    return gt_ids, pred_ids, counts, gsize, psize


def idf1(gt: Tracks, pred: Tracks, iou_gate: float = 0.5) -> float:
    """IDF1 under the globally optimal one-to-one identity matching."""
    return _idf1_parts(gt, pred, iou_gate)[0]


def _idf1_parts(gt, pred, iou_gate):
    _, _, counts, gsize, psize = identity_overlaps(gt, pred, iou_gate)
    total = int(gsize.sum() + psize.sum())
    if total == 0:
        return 1.0, 0
    idtp = 0
    if counts.size:
        r, c = linear_sum_assignment(-counts)
        idtp = int(counts[r, c].sum())
    # 2 IDTP / (2 IDTP + IDFP + IDFN) with IDFP + IDFN = total - 2 IDTP
    return 2.0 * idtp / total, idtp


def evaluate(gt: Tracks, pred: Tracks, iou_gate: float = 0.5) -> EvalReport:
    rep = clear_mot(gt, pred, iou_gate)
    rep.idf1, rep.idtp = _idf1_parts(gt, pred, iou_gate)
    return rep
