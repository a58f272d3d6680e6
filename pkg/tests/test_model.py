import numpy as np
import pytest

from avloc import autodiff as ad
from avloc.autodiff import Tensor
from avloc.data import FeatureStream, SynthConfig, generate_clip
from avloc.labels import in_range_mask
from avloc.model import (
    CheckpointError,
    Model,
    ModelConfig,
    build_sampling_mask,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
)

TINY = ModelConfig(num_frames=16, d_audio=4, d_visual=4, channels=4,
                   max_duration=4, num_samples=4)


def tiny_stream(seed=0, t=16, d=4):
    rng = np.random.default_rng(seed)
    return FeatureStream(audio=rng.normal(size=(t, d)), visual=rng.normal(size=(t, d)))


def test_num_frames_must_divide_by_four():
    with pytest.raises(ValueError, match="divisible by 4"):
        ModelConfig(num_frames=18, d_audio=4, d_visual=4, channels=4,
                    max_duration=4, num_samples=4)


def test_parameter_count_matches_formula():
    cfg = TINY
    c, cf, n = cfg.channels, cfg.fused_channels, cfg.num_samples
    expected = (
        (3 * cfg.d_audio * c + c) + (3 * cfg.d_visual * c + c)  # encoders
        + 6 * c * c                                             # attention projections
        + (2 * c * c + c)                                       # fusion
        + (c + 1)                                               # frame classifier
        + n + (9 * cf * c + c) + (c + 1)                        # map head
        + (3 * cf * c + c) + (3 * c * c + c)                    # frame head encoder
        + 2 * (3 * 2 * c * c + c)                               # frame head decoder
        + (c * 3 + 3)                                           # frame head output
    )
    assert parameter_count(cfg) == expected == sum(
        p.data.size for p in Model(cfg).params.values()
    )


def test_init_is_deterministic_and_bounded():
    a = Model(TINY, seed=3)
    b = Model(TINY, seed=3)
    for name in a.params:
        assert np.array_equal(a.params[name].data, b.params[name].data)
        assert np.all(np.abs(a.params[name].data) <= 0.1)
    assert np.all(a.params["fusion.b"].data == 0.0)


# -- sampling mask ----------------------------------------------------------

def test_mask_rows_sum_to_one_in_range():
    mask = build_sampling_mask(4, 12, 5)
    valid = in_range_mask(4, 12)
    sums = mask.array.sum(axis=3)  # [N, L, T]
    for n in range(5):
        np.testing.assert_allclose(sums[n][valid], 1.0, atol=1e-12)
        assert np.all(sums[n][~valid] == 0.0)
    assert np.all(mask.array >= 0.0)


def test_mask_duration_one_is_point_sample():
    mask = build_sampling_mask(3, 8, 4)
    for n in range(4):
        for j in range(8):
            row = mask.array[n, 0, j]
            assert row[j] == 1.0 and row.sum() == 1.0


def test_mask_two_samples_hit_span_endpoints():
    # Candidate [2, 6): duration index 3, samples at frames 2.0 and 5.0.
    mask = build_sampling_mask(4, 8, 2)
    first, last = mask.array[0, 3, 2], mask.array[1, 3, 2]
    assert first[2] == 1.0 and first.sum() == 1.0
    assert last[5] == 1.0 and last.sum() == 1.0


def test_mask_conventional_layout_view():
    mask = build_sampling_mask(3, 6, 4)
    assert mask.weights.shape == (4, 6, 3, 6)  # (N, T_src, L, T_start)
    assert mask.weights[1, :, 2, 1].sum() == pytest.approx(1.0)


# -- encoder / fusion -------------------------------------------------------

def test_zeroed_classifier_outputs_half():
    model = Model(TINY, seed=0)
    model.params["frame_cls.w"].data[:] = 0.0
    out = model.encode_and_fuse(tiny_stream())
    np.testing.assert_allclose(out.frame_probs.data, 0.5)


def test_fused_channel_count():
    model = Model(TINY, seed=0)
    out = model.encode_and_fuse(tiny_stream())
    assert out.fused.shape == (TINY.num_frames, TINY.channels + 1)


def test_identical_streams_with_shared_weights_are_symmetric():
    model = Model(TINY, seed=0)
    for side in ("q", "k", "v"):
        model.params[f"att_va.{side}"].data = model.params[f"att_av.{side}"].data.copy()
    model.params["enc_visual.w"].data = model.params["enc_audio.w"].data.copy()
    rng = np.random.default_rng(8)
    frames = rng.normal(size=(16, 4))
    out = model.encode_and_fuse(FeatureStream(audio=frames, visual=frames.copy()))
    np.testing.assert_array_equal(out.f_av.data, out.f_va.data)


def test_attention_rows_are_distributions():
    scores = ad.softmax(Tensor(np.random.default_rng(0).normal(size=(16, 16))), axis=1)
    np.testing.assert_allclose(scores.data.sum(axis=1), 1.0, atol=1e-12)


# -- heads ------------------------------------------------------------------

def test_map_head_shape_and_zero_projection():
    model = Model(TINY, seed=0)
    model.params["map_head.out_w"].data[:] = 0.0
    fused = model.encode_and_fuse(tiny_stream()).fused
    bmap = model.boundary_map_head(fused)
    assert bmap.shape == (TINY.max_duration, TINY.num_frames)
    np.testing.assert_allclose(bmap.data, 0.5)


def test_frame_head_shapes_and_zero_head():
    model = Model(TINY, seed=0)
    model.params["frame_head.out_w"].data[:] = 0.0
    probs = model.frame_prob_head(model.encode_and_fuse(tiny_stream()).fused)
    for seq in (probs.start, probs.end, probs.content):
        assert seq.shape == (TINY.num_frames,)
        np.testing.assert_allclose(seq.data, 0.5)


def test_frame_head_gradient_matches_finite_differences():
    model = Model(TINY, seed=1)
    stream = tiny_stream(seed=2)
    for name in ("frame_head.enc1_w", "frame_head.enc2_w", "frame_head.dec1_w",
                 "frame_head.out_w", "enc_audio.w"):
        param = model.params[name]

        def f(t, name=name, param=param):
            saved = param.data
            param.data = t.data
            try:
                probs = model.frame_prob_head(model.encode_and_fuse(stream).fused)
                return ad.mean(ad.concat([
                    ad.reshape(probs.start, (16, 1)),
                    ad.reshape(probs.end, (16, 1)),
                    ad.reshape(probs.content, (16, 1)),
                ], axis=1))
            finally:
                param.data = saved

        # Gradient w.r.t. the parameter, via a fresh leaf substituted in place.
        leaf = Tensor(param.data.copy(), requires_grad=True)
        saved = param.data
        model.params[name] = leaf
        probs = model.frame_prob_head(model.encode_and_fuse(stream).fused)
        loss = ad.mean(ad.concat([
            ad.reshape(probs.start, (16, 1)),
            ad.reshape(probs.end, (16, 1)),
            ad.reshape(probs.content, (16, 1)),
        ], axis=1))
        loss.backward()
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        model.params[name] = param
        param.data = saved

        flat = param.data.copy().ravel()
        h = 1e-5
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(Tensor(flat.reshape(param.data.shape))).item()
            flat[i] = orig - h
            fm = f(Tensor(flat.reshape(param.data.shape))).item()
            flat[i] = orig
            numeric = (fp - fm) / (2 * h)
            a = analytic.ravel()[i]
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
        assert worst <= 1e-4, f"{name}: {worst:.3e}"


# -- full forward -----------------------------------------------------------

def test_forward_full_deterministic():
    model = Model(TINY, seed=0)
    stream = tiny_stream(seed=4)
    a = model.forward_full(stream)
    b = model.forward_full(stream)
    assert np.array_equal(a.boundary_map.data, b.boundary_map.data)
    assert np.array_equal(a.probs_bwd.content.data, b.probs_bwd.content.data)


def test_forward_full_outputs_in_unit_interval():
    model = Model(TINY, seed=0)
    out = model.forward_full(tiny_stream(seed=5))
    for t in (out.frame_probs, out.boundary_map, out.probs_fwd.start,
              out.probs_bwd.end, out.probs_fwd.content):
        assert np.all(t.data > 0.0) and np.all(t.data < 1.0)


def test_palindromic_input_gives_identical_directions():
    model = Model(TINY, seed=0)
    rng = np.random.default_rng(6)
    half = rng.normal(size=(8, 4))
    audio = np.vstack([half, half[::-1]])
    visual = np.vstack([half * 0.5, (half * 0.5)[::-1]])
    out = model.forward_full(FeatureStream(audio=audio, visual=visual))
    # Reversing a palindromic stream is a no-op, so the raw backward pass
    # must equal the raw forward pass bit for bit.
    np.testing.assert_array_equal(out.probs_bwd.start.data, out.probs_fwd.start.data)
    np.testing.assert_array_equal(out.probs_bwd.end.data, out.probs_fwd.end.data)
    np.testing.assert_array_equal(out.probs_bwd.content.data, out.probs_fwd.content.data)


def test_wrong_frame_count_rejected():
    model = Model(TINY, seed=0)
    with pytest.raises(ValueError, match="frames"):
        model.encode_and_fuse(tiny_stream(t=20))


# -- checkpoints ------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    model = Model(TINY, seed=9)
    clip = generate_clip(
        SynthConfig(count=1, num_frames=16, d_audio=4, d_visual=4,
                    min_segments=1, max_segments=1, min_len=2, max_len=4),
        np.random.default_rng(0), "c",
    )
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    loaded = load_checkpoint(path, TINY)
    for name in model.params:
        assert np.array_equal(model.params[name].data, loaded.params[name].data)
    a = model.forward_full(clip[0]).boundary_map.data
    b = loaded.forward_full(clip[0]).boundary_map.data
    assert np.array_equal(a, b)


def test_checkpoint_rejects_config_mismatch(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, Model(TINY, seed=0))
    bigger = ModelConfig(num_frames=16, d_audio=4, d_visual=4, channels=8,
                         max_duration=4, num_samples=4)
    with pytest.raises(CheckpointError, match="shape"):
        load_checkpoint(path, bigger)


def test_checkpoint_rejects_truncation(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, Model(TINY, seed=0))
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 40])
    with pytest.raises(CheckpointError):
        load_checkpoint(path, TINY)
