"""Detection metrics over temporal segment predictions.

Average precision pools predictions across clips, greedily matches each
prediction (in score order) to the best still-unmatched ground-truth
segment of its clip with IoU >= tau, and integrates the all-point
interpolated precision-recall curve. Average recall truncates each clip to
a fixed proposal budget and averages recall over IoU thresholds
0.50, 0.55, ..., 0.95.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .data import Segment
from .inference import ScoredProposal

AP_TAUS = (0.5, 0.75, 0.95)
AR_BUDGETS = (50, 20, 10)
AR_TAUS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))

Predictions = dict[str, list[ScoredProposal]]
GroundTruth = dict[str, list[Segment]]


@dataclass
class EvalReport:
    ap: dict[float, float]
    ar: dict[int, float]
    per_clip: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ap": {f"{tau:g}": v for tau, v in self.ap.items()},
            "ar": {str(n): v for n, v in self.ar.items()},
            "per_clip": self.per_clip,
        }

    def csv_row(self) -> tuple[str, str]:
        header = ",".join(
            [f"ap_{tau:g}" for tau in self.ap] + [f"ar_{n}" for n in self.ar]
        )
        values = ",".join(
            [repr(self.ap[tau]) for tau in self.ap] + [repr(self.ar[n]) for n in self.ar]
        )
        return header, values


def segment_iou(a: Segment, b: Segment) -> float:
    inter = max(0, min(a.end, b.end) - max(a.start, b.start))
    union = a.length + b.length - inter
    return inter / union


def _check_clip_ids(preds: Predictions, gts: GroundTruth) -> None:
    unknown = set(preds) - set(gts)
    if unknown:
        raise ValueError(f"predictions reference unknown clip ids: {sorted(unknown)}")


def _sorted_clip_preds(proposals: list[ScoredProposal]) -> list[ScoredProposal]:
    return sorted(proposals, key=lambda p: (-p.score, p.segment.start, p.segment.end))


def _greedy_match(preds: list[ScoredProposal], gts: list[Segment], tau: float,
                  taken: list[bool]) -> list[bool]:
    """Flags each prediction TP/FP; mutates `taken` as ground truths are used."""
    flags = []
    for pred in preds:
        best_iou, best_idx = 0.0, -1
        for k, gt in enumerate(gts):
            if taken[k]:
                continue
            iou = segment_iou(pred.segment, gt)
            if iou >= tau and iou > best_iou:
                best_iou, best_idx = iou, k
        if best_idx >= 0:
            taken[best_idx] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(preds: Predictions, gts: GroundTruth, tau: float) -> float:
    _check_clip_ids(preds, gts)
    npos = sum(len(v) for v in gts.values())
    if npos == 0:
        return 0.0
    # Pool across clips; ties break on clip id then segment for determinism.
    pooled = sorted(
        ((clip_id, p) for clip_id, plist in preds.items() for p in plist),
        key=lambda cp: (-cp[1].score, cp[0], cp[1].segment.start, cp[1].segment.end),
    )
    taken = {clip_id: [False] * len(segs) for clip_id, segs in gts.items()}
    tp = 0
    fp = 0
    precisions = []
    recalls = []
    for clip_id, pred in pooled:
        flags = _greedy_match([pred], gts[clip_id], tau, taken[clip_id])
        if flags[0]:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / npos)
    if not precisions:
        return 0.0
    # All-point interpolation: monotone precision envelope from the right,
    # integrated over recall steps.
    mpre = [0.0] + precisions + [0.0]
    mrec = [0.0] + recalls + [recalls[-1]]
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    ap = 0.0
    for i in range(1, len(mrec)):
        ap += (mrec[i] - mrec[i - 1]) * mpre[i]
    return ap


def recall_at(preds: Predictions, gts: GroundTruth, tau: float, budget: int) -> float:
    _check_clip_ids(preds, gts)
    npos = sum(len(v) for v in gts.values())
    if npos == 0:
        return 0.0
    matched = 0
    for clip_id, segs in gts.items():
        clip_preds = _sorted_clip_preds(preds.get(clip_id, []))[:budget]
        taken = [False] * len(segs)
        flags = _greedy_match(clip_preds, segs, tau, taken)
        matched += sum(flags)
    return matched / npos


def average_recall(preds: Predictions, gts: GroundTruth, budget: int) -> float:
    if budget < 1:
        raise ValueError(f"average_recall: budget must be >= 1, got {budget}")
    return sum(recall_at(preds, gts, tau, budget) for tau in AR_TAUS) / len(AR_TAUS)


def evaluate(
    preds: Predictions,
    gts: GroundTruth,
    ap_taus: tuple[float, ...] = AP_TAUS,
    ar_budgets: tuple[int, ...] = AR_BUDGETS,
) -> EvalReport:
    _check_clip_ids(preds, gts)
    report = EvalReport(
        ap={tau: average_precision(preds, gts, tau) for tau in ap_taus},
        ar={n: average_recall(preds, gts, n) for n in ar_budgets},
    )
    for clip_id, segs in sorted(gts.items()):
        clip_preds = _sorted_clip_preds(preds.get(clip_id, []))
        taken = [False] * len(segs)
        flags = _greedy_match(clip_preds, segs, 0.5, taken)
        report.per_clip[clip_id] = {
            "gt_count": len(segs),
            "pred_count": len(clip_preds),
            "matched_at_0.5": sum(flags),
        }
    return report
