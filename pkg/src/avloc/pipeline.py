"""Dataset-level orchestration shared by the CLI and the experiment scripts."""

from __future__ import annotations

from .data import Clip, StreamAnnotation
from .inference import (
    InferenceConfig,
    ScoredProposal,
    fuse_bidirectional,
    score_proposals,
    soft_nms,
)
from .labels import ProbTriplet, merge_segments
from .model import Model


def _to_numpy_triplet(probs) -> ProbTriplet:
    return ProbTriplet(
        start=probs.start.data.copy(),
        end=probs.end.data.copy(),
        content=probs.content.data.copy(),
        direction=probs.direction,
    )


def predict_clip(
    model: Model, clip: Clip, infer_cfg: InferenceConfig, fusion: str = "both"
) -> list[ScoredProposal]:
    """Forward pass, direction fusion, scoring, and Soft-NMS for one clip.

    fusion="forward" skips the backward direction at scoring time (ablation
    hook); the model still runs both directions.
    """
    if fusion not in ("both", "forward"):
        raise ValueError(f"unknown fusion mode {fusion!r}")
    stream, _ = clip
    out = model.forward_full(stream)
    fwd = _to_numpy_triplet(out.probs_fwd)
    if fusion == "both":
        probs = fuse_bidirectional(fwd, _to_numpy_triplet(out.probs_bwd))
    else:
        probs = fwd
    proposals = score_proposals(out.boundary_map.data, probs)
    return soft_nms(
        proposals,
        sigma=infer_cfg.sigma,
        score_floor=infer_cfg.score_floor,
        top_k=infer_cfg.top_k,
    )


def predict_dataset(
    model: Model, clips: list[Clip], infer_cfg: InferenceConfig, fusion: str = "both"
) -> dict[str, list[ScoredProposal]]:
    return {ann.id: predict_clip(model, (stream, ann), infer_cfg, fusion)
            for stream, ann in clips}


def ground_truth_segments(annotations: list[StreamAnnotation]) -> dict[str, list]:
    """Union-merged fake segments per clip id (the evaluation ground truth)."""
    return {ann.id: merge_segments(ann) for ann in annotations}


def fake_fraction(annotations: list[StreamAnnotation]) -> float:
    """Dataset-level fraction of frames covered by any fake segment."""
    fake = sum(sum(s.length for s in merge_segments(a)) for a in annotations)
    total = sum(a.num_frames for a in annotations)
    return fake / total if total else 0.0
