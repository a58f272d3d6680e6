"""Toy bidirectional two-stream localization model.

Per-modality conv encoders, audio<->visual cross-attention, linear fusion
with a frame classifier, then two heads on the fused per-frame features:

* a boundary-map head that softly samples every candidate segment
  (start j, duration i+1) with a fixed interpolation mask, collapses the
  sample axis with learned weights, and scores the [L, T] grid with a small
  2-d conv stack;
* a frame-probability head, a 2-level U-Net over time producing per-frame
  start / end / content probabilities.

The whole model runs on the forward stream and on the time-reversed stream;
the boundary-map head sees only the forward features.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import FeatureStream

CHECKPOINT_MAGIC = b"HBMP"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is malformed or does not match the active config."""


@dataclass(frozen=True)
class ModelConfig:
    num_frames: int = 128   # T, must be divisible by 4 (two pool/upsample stages)
    d_audio: int = 16
    d_visual: int = 16
    channels: int = 32      # C, shared embedding width
    max_duration: int = 40  # L, longest candidate segment in frames
    num_samples: int = 16   # N, sample points per candidate segment

    def __post_init__(self):
        if self.num_frames <= 0 or self.num_frames % 4 != 0:
            raise ValueError("model.num_frames: must be positive and divisible by 4")
        if self.d_audio <= 0 or self.d_visual <= 0:
            raise ValueError("model.d_audio/d_visual: must be positive")
        if self.channels <= 0:
            raise ValueError("model.channels: must be positive")
        if not (1 <= self.max_duration <= self.num_frames):
            raise ValueError("model.max_duration: must be in [1, num_frames]")
        if self.num_samples < 2:
            raise ValueError("model.num_samples: must be >= 2")

    @property
    def fused_channels(self) -> int:
        """Fused feature width: C channels plus the frame-probability channel."""
        return self.channels + 1


@dataclass
class BMSamplingMask:
    """Interpolation weights that soft-sample per-frame features per candidate.

    Stored as [N, L, T, T_src]; `weights` exposes the conventional
    (N, T_src, L, T_start) layout as a view. For an in-range candidate
    (i, j), sample point n sits at j + n * i / (N - 1) and splits its unit
    weight linearly between the two neighbouring frames. Out-of-range
    candidates are all-zero.
    """

    array: np.ndarray  # [N, L, T, T_src]

    @property
    def weights(self) -> np.ndarray:
        return self.array.transpose(0, 3, 1, 2)

    def stacked(self) -> np.ndarray:
        n, l, t, t_src = self.array.shape
        return self.array.reshape(n, l * t, t_src)


def build_sampling_mask(max_duration: int, num_frames: int, num_samples: int) -> BMSamplingMask:
    if num_samples < 2:
        raise ValueError(f"num_samples must be >= 2, got {num_samples}")
    l, t, n = max_duration, num_frames, num_samples
    arr = np.zeros((n, l, t, t))
    for i in range(l):
        num_valid = t - i  # starts j with j + i + 1 <= t
        if num_valid <= 0:
            continue
        j = np.arange(num_valid)
        # Offsets within [0, duration-1]; clamp and snap to kill float drift
        # so integer sample positions stay exactly one-hot.
        rel = np.minimum(np.arange(n) * i / (n - 1), float(i))
        for k in range(n):
            base = int(np.floor(rel[k]))
            frac = rel[k] - base
            if frac < 1e-9:
                frac = 0.0
            elif frac > 1.0 - 1e-9:
                base += 1
                frac = 0.0
            arr[k, i, j, j + base] += 1.0 - frac
            if frac > 0.0:
                arr[k, i, j, j + base + 1] += frac
    return BMSamplingMask(array=arr)


# Parameter table: name -> shape builder. Order is fixed so that seeded
# initialization and checkpoints are deterministic.
def _param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    c = cfg.channels
    cf = cfg.fused_channels
    return {
        "enc_audio.w": (3, cfg.d_audio, c),
        "enc_audio.b": (c,),
        "enc_visual.w": (3, cfg.d_visual, c),
        "enc_visual.b": (c,),
        "att_av.q": (c, c),
        "att_av.k": (c, c),
        "att_av.v": (c, c),
        "att_va.q": (c, c),
        "att_va.k": (c, c),
        "att_va.v": (c, c),
        "fusion.w": (2 * c, c),
        "fusion.b": (c,),
        "frame_cls.w": (c, 1),
        "frame_cls.b": (1,),
        "map_head.sample_w": (cfg.num_samples,),
        "map_head.conv_w": (3, 3, cf, c),
        "map_head.conv_b": (c,),
        "map_head.out_w": (c, 1),
        "map_head.out_b": (1,),
        "frame_head.enc1_w": (3, cf, c),
        "frame_head.enc1_b": (c,),
        "frame_head.enc2_w": (3, c, c),
        "frame_head.enc2_b": (c,),
        "frame_head.dec1_w": (3, 2 * c, c),
        "frame_head.dec1_b": (c,),
        "frame_head.dec2_w": (3, 2 * c, c),
        "frame_head.dec2_b": (c,),
        "frame_head.out_w": (1, c, 3),
        "frame_head.out_b": (3,),
    }


def parameter_count(cfg: ModelConfig) -> int:
    """Total scalar parameter count implied by the config."""
    return sum(int(np.prod(s)) for s in _param_shapes(cfg).values())


def init_params(cfg: ModelConfig, seed: int) -> dict[str, Tensor]:
    """Weights uniform in [-0.1, 0.1] from a seeded RNG; biases zero."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in _param_shapes(cfg).items():
        if name.endswith(".b") or name.endswith("_b"):
            data = np.zeros(shape)
        else:
            data = rng.uniform(-0.1, 0.1, size=shape)
        params[name] = Tensor(data, requires_grad=True)
    return params


def parameter_group(name: str) -> str:
    return name.split(".", 1)[0]


@dataclass
class EncodeOutput:
    """Fused per-frame features and intermediates for one direction."""

    fused: Tensor        # [T, C+1]
    f_av: Tensor         # [T, C] audio-queried cross-attention output
    f_va: Tensor         # [T, C] visual-queried cross-attention output
    frame_probs: Tensor  # [T, 1] frame-level fake probability


@dataclass
class FrameProbs:
    """Predicted start / end / content probability sequences, one direction."""

    start: Tensor    # [T]
    end: Tensor      # [T]
    content: Tensor  # [T]
    direction: str = "forward"


@dataclass
class ForwardOutput:
    frame_probs: Tensor        # [T, 1], forward direction
    boundary_map: Tensor       # [L, T], forward direction
    probs_fwd: FrameProbs
    probs_bwd: FrameProbs
    f_av_fwd: Tensor = field(repr=False, default=None)
    f_va_fwd: Tensor = field(repr=False, default=None)
    f_av_bwd: Tensor = field(repr=False, default=None)
    f_va_bwd: Tensor = field(repr=False, default=None)


def _cross_attention(query_feat: Tensor, kv_feat: Tensor, wq: Tensor, wk: Tensor,
                     wv: Tensor) -> Tensor:
    c = wq.shape[1]
    q = ad.matmul(query_feat, wq)
    k = ad.matmul(kv_feat, wk)
    v = ad.matmul(kv_feat, wv)
    scores = ad.scalar_mul(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(c))
    return ad.matmul(ad.softmax(scores, axis=1), v)


class Model:
    """Parameter container plus the forward passes of every sub-network."""

    def __init__(self, cfg: ModelConfig, seed: int = 0,
                 params: dict[str, Tensor] | None = None):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, seed)
        expected = _param_shapes(cfg)
        if set(self.params) != set(expected):
            raise CheckpointError("parameter table does not match the model config")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise CheckpointError(
                    f"parameter {name!r} has shape {self.params[name].shape}, "
                    f"config requires {shape}"
                )
        self.mask = build_sampling_mask(cfg.max_duration, cfg.num_frames, cfg.num_samples)
        self._mask_stack = Tensor(self.mask.stacked())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def encode_and_fuse(self, stream: FeatureStream, direction: str = "forward") -> EncodeOutput:
        if stream.num_frames != self.cfg.num_frames:
            raise ValueError(
                f"stream has {stream.num_frames} frames, model expects {self.cfg.num_frames}"
            )
        if direction not in ("forward", "backward"):
            raise ValueError(f"unknown direction {direction!r}")
        audio, visual = stream.audio, stream.visual
        if direction == "backward":
            audio = audio[::-1]
            visual = visual[::-1]
        p = self.params
        f_a = ad.relu(ad.add(ad.conv1d(Tensor(audio), p["enc_audio.w"]), p["enc_audio.b"]))
        f_v = ad.relu(ad.add(ad.conv1d(Tensor(visual), p["enc_visual.w"]), p["enc_visual.b"]))
        f_av = _cross_attention(f_a, f_v, p["att_av.q"], p["att_av.k"], p["att_av.v"])
        f_va = _cross_attention(f_v, f_a, p["att_va.q"], p["att_va.k"], p["att_va.v"])
        fused = ad.add(ad.matmul(ad.concat([f_av, f_va], axis=1), p["fusion.w"]), p["fusion.b"])
        frame_probs = ad.sigmoid(ad.add(ad.matmul(fused, p["frame_cls.w"]), p["frame_cls.b"]))
        full = ad.concat([fused, frame_probs], axis=1)
        return EncodeOutput(fused=full, f_av=f_av, f_va=f_va, frame_probs=frame_probs)

    def boundary_map_head(self, fused: Tensor) -> Tensor:
        """Score every candidate segment: [T, C+1] fused features -> [L, T] map."""
        cfg = self.cfg
        p = self.params
        # Collapsing the sample axis with learned weights commutes with the
        # (constant) sampling matmul, so fold the weights into the mask first.
        combined = ad.weighted_sum(self._mask_stack, p["map_head.sample_w"])  # [L*T, T]
        sampled = ad.matmul(combined, fused)  # [L*T, C+1]
        grid = ad.reshape(sampled, (cfg.max_duration, cfg.num_frames, cfg.fused_channels))
        hidden = ad.relu(ad.add(ad.conv2d(grid, p["map_head.conv_w"]), p["map_head.conv_b"]))
        flat = ad.reshape(hidden, (cfg.max_duration * cfg.num_frames, cfg.channels))
        out = ad.sigmoid(ad.add(ad.matmul(flat, p["map_head.out_w"]), p["map_head.out_b"]))
        return ad.reshape(out, (cfg.max_duration, cfg.num_frames))

    def frame_prob_head(self, fused: Tensor, direction: str = "forward") -> FrameProbs:
        """2-level U-Net over time: [T, C+1] -> three [T] probability sequences."""
        cfg = self.cfg
        p = self.params
        e1 = ad.relu(ad.add(ad.conv1d(fused, p["frame_head.enc1_w"]), p["frame_head.enc1_b"]))
        p1 = ad.max_pool1d(e1)
        e2 = ad.relu(ad.add(ad.conv1d(p1, p["frame_head.enc2_w"]), p["frame_head.enc2_b"]))
        p2 = ad.max_pool1d(e2)
        u1 = ad.upsample1d(p2)
        d1 = ad.relu(ad.add(
            ad.conv1d(ad.concat([u1, e2], axis=1), p["frame_head.dec1_w"]),
            p["frame_head.dec1_b"],
        ))
        u2 = ad.upsample1d(d1)
        d2 = ad.relu(ad.add(
            ad.conv1d(ad.concat([u2, e1], axis=1), p["frame_head.dec2_w"]),
            p["frame_head.dec2_b"],
        ))
        out = ad.sigmoid(ad.add(ad.conv1d(d2, p["frame_head.out_w"]), p["frame_head.out_b"]))
        t = cfg.num_frames
        return FrameProbs(
            start=ad.reshape(ad.slice_axis(out, 1, 0, 1), (t,)),
            end=ad.reshape(ad.slice_axis(out, 1, 1, 2), (t,)),
            content=ad.reshape(ad.slice_axis(out, 1, 2, 3), (t,)),
            direction=direction,
        )

    def forward_full(self, stream: FeatureStream) -> ForwardOutput:
        fwd = self.encode_and_fuse(stream, "forward")
        bwd = self.encode_and_fuse(stream, "backward")
        return ForwardOutput(
            frame_probs=fwd.frame_probs,
            boundary_map=self.boundary_map_head(fwd.fused),
            probs_fwd=self.frame_prob_head(fwd.fused, "forward"),
            probs_bwd=self.frame_prob_head(bwd.fused, "backward"),
            f_av_fwd=fwd.f_av,
            f_va_fwd=fwd.f_va,
            f_av_bwd=bwd.f_av,
            f_va_bwd=bwd.f_va,
        )


def save_checkpoint(path: Path, model: Model) -> None:
    with open(Path(path), "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(model.params)))
        for name in sorted(model.params):
            tensor = model.params[name]
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.data.ndim))
            fh.write(struct.pack(f"<{tensor.data.ndim}I", *tensor.data.shape))
            fh.write(tensor.data.astype("<f8").tobytes())


def load_checkpoint(path: Path, cfg: ModelConfig) -> Model:
    buf = Path(path).read_bytes()
    if len(buf) < 12:
        raise CheckpointError(f"{path}: truncated header at byte {len(buf)}")
    if buf[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    version, count = struct.unpack("<II", buf[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 12
    params: dict[str, Tensor] = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", buf, offset)
            offset += 2
            name = buf[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", buf, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, offset)
            offset += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(buf, dtype="<f8", count=size, offset=offset)
            offset += 8 * size
        except struct.error as exc:
            raise CheckpointError(f"{path}: truncated at byte {offset}") from exc
        params[name] = Tensor(data.reshape(shape).astype(np.float64), requires_grad=True)
    expected = _param_shapes(cfg)
    missing = set(expected) - set(params)
    extra = set(params) - set(expected)
    if missing or extra:
        raise CheckpointError(
            f"{path}: parameter names do not match config "
            f"(missing {sorted(missing)}, unexpected {sorted(extra)})"
        )
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise CheckpointError(
                f"{path}: parameter {name!r} has shape {params[name].shape}, "
                f"config requires {shape}"
            )
    return Model(cfg, params=params)
