"""Run configuration: one JSON file covering data synthesis, model dims,
losses, optimization, and inference.

Reference values from the original full-scale setting (not the toy
defaults below): 512 frames per clip, max candidate duration 60,
contrastive weight 0.1, Adam at 1e-4 with halving after a 3-epoch
validation plateau, 40 epochs, batch size 8.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .data import SynthConfig
from .inference import InferenceConfig
from .losses import LossConfig
from .model import ModelConfig
from .train import OptimConfig


class ConfigError(ValueError):
    """Configuration file is invalid; message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    model: ModelConfig = ModelConfig()
    synth: SynthConfig = SynthConfig()  # synth.count is the train-split size
    val_clips: int = 25
    test_clips: int = 50
    loss: LossConfig = LossConfig()
    optim: OptimConfig = OptimConfig()
    infer: InferenceConfig = InferenceConfig()

    def __post_init__(self):
        if self.val_clips < 0 or self.test_clips < 0:
            raise ConfigError("synth.val_clips/test_clips: must be >= 0")
        for field_name in ("num_frames", "d_audio", "d_visual"):
            mv = getattr(self.model, field_name)
            sv = getattr(self.synth, field_name)
            if mv != sv:
                raise ConfigError(
                    f"model.{field_name}={mv} does not match synth.{field_name}={sv}"
                )


def _build_section(section: str, cls, obj: dict, renames: dict[str, str] | None = None):
    if not isinstance(obj, dict):
        raise ConfigError(f"{section}: expected a JSON object")
    renames = renames or {}
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in obj.items():
        name = renames.get(key, key)
        if name not in known:
            raise ConfigError(f"{section}.{key}: unknown field")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def run_config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root: expected a JSON object")
    known = {"seed", "model", "synth", "loss", "optim", "infer"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown top-level field")
    seed = raw.get("seed", 42)
    if not isinstance(seed, int):
        raise ConfigError("seed: expected an integer")

    synth_raw = dict(raw.get("synth", {}))
    val_clips = synth_raw.pop("val_clips", 25)
    test_clips = synth_raw.pop("test_clips", 50)
    if not isinstance(val_clips, int) or not isinstance(test_clips, int):
        raise ConfigError("synth.val_clips/test_clips: expected integers")

    try:
        return RunConfig(
            seed=seed,
            model=_build_section("model", ModelConfig, raw.get("model", {})),
            synth=_build_section("synth", SynthConfig, synth_raw,
                                 renames={"train_clips": "count"}),
            val_clips=val_clips,
            test_clips=test_clips,
            loss=_build_section("loss", LossConfig, raw.get("loss", {})),
            optim=_build_section("optim", OptimConfig, raw.get("optim", {})),
            infer=_build_section("infer", InferenceConfig, raw.get("infer", {})),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_run_config(path: Path) -> RunConfig:
    try:
        with open(Path(path)) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at byte {exc.pos}") from exc
    return run_config_from_dict(raw)


def run_config_to_dict(cfg: RunConfig) -> dict:
    synth = dataclasses.asdict(cfg.synth)
    synth["train_clips"] = synth.pop("count")
    synth["val_clips"] = cfg.val_clips
    synth["test_clips"] = cfg.test_clips
    return {
        "seed": cfg.seed,
        "model": dataclasses.asdict(cfg.model),
        "synth": synth,
        "loss": dataclasses.asdict(cfg.loss),
        "optim": dataclasses.asdict(cfg.optim),
        "infer": dataclasses.asdict(cfg.infer),
    }
