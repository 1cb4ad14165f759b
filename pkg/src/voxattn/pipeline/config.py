"""Flat key=value training configuration.

One ``key = value`` per line, ``#`` starts a comment, unknown keys are
errors. Tuples are comma separated. Stage schedule values set to ``auto``
take the stage default, which for stage 2 depends on the head mode.

``absent_parts_empty`` trains the decoder output of absent parts toward an
empty grid. With it off, absent parts are masked out of the part loss and
their unconstrained output enters the assembled union.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from ..losses import LossWeights
from ..model.heads import HEAD_MODES
from ..model.network import ModelConfig

AUTO = "auto"

# stage -> (lr, decay ratio, decay every, epochs)
STAGE_DEFAULTS = {
    1: (1e-3, 0.8, 50, 250),
    "2-attention": (1e-4, 1.0, 1, 1500),
    "2-simple_mlp": (1e-3, 0.8, 100, 500),
    3: (1e-5, 0.8, 250, 500),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StageSchedule:
    lr: float
    decay_ratio: float
    decay_every: int
    epochs: int


@dataclass
class TrainConfig:
    category: str = "chair"
    n_parts: int = 4
    resolution: int = 32
    head_mode: str = "part_attention"
    layer_indices: tuple[int, ...] = (0, 3, 5)
    d_a: int = 256
    heads: int = 8
    blocks: int = 3
    ff_mult: int = 4
    head_hidden: int = 256
    mlp_hidden: tuple[int, ...] = (1024, 256)
    enc_channels: tuple[int, ...] = (64, 128, 256)
    latent_dim: int = 256
    bank_noise: float = 0.01
    apply_ac_loss: bool = True
    absent_parts_empty: bool = True
    w_pi: float = 1.0
    w_part: float = 1.0
    w_trans: float = 10.0
    w_ac: float = 1.0
    w_shape: float = 10.0
    w_trans_s2: float = 1.0
    w_ac_s2: float = 1.0
    gamma: float = 0.6
    s1_lr: float | None = None
    s1_decay: float | None = None
    s1_decay_every: int | None = None
    s1_epochs: int | None = None
    s2_lr: float | None = None
    s2_decay: float | None = None
    s2_decay_every: int | None = None
    s2_epochs: int | None = None
    s3_lr: float | None = None
    s3_decay: float | None = None
    s3_decay_every: int | None = None
    s3_epochs: int | None = None
    batch_size: int = 8
    seed: int = 0
    manifest: str = ""
    data_dir: str = ""
    eval_every: int = 10
    eval_split: str = "test"
    dtype: str = "f32"

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            n_parts=self.n_parts,
            resolution=self.resolution,
            enc_channels=self.enc_channels,
            latent_dim=self.latent_dim,
            head_mode=self.head_mode,
            layer_indices=self.layer_indices,
            d_a=self.d_a,
            heads=self.heads,
            blocks=self.blocks,
            ff_mult=self.ff_mult,
            head_hidden=self.head_hidden,
            mlp_hidden=self.mlp_hidden,
            bank_noise=self.bank_noise,
            dtype=self.dtype,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            self.w_pi, self.w_part, self.w_trans, self.w_ac, self.w_shape, self.w_trans_s2, self.w_ac_s2, self.gamma
        )

    def schedule(self, stage: int) -> StageSchedule:
        if stage not in (1, 2, 3):
            raise ConfigError(f"stage must be 1, 2 or 3, got {stage}")
        key = stage
        if stage == 2:
            key = "2-simple_mlp" if self.head_mode == "simple_mlp" else "2-attention"
        values = []
        for name, default in zip(("lr", "decay", "decay_every", "epochs"), STAGE_DEFAULTS[key]):
            val = getattr(self, f"s{stage}_{name}")
            values.append(default if val is None else val)
        return StageSchedule(*values)

    @property
    def apply_ac(self) -> bool:
        return self.apply_ac_loss and self.head_mode != "simple_mlp" and len(self.layer_indices) > 1

    def validate(self) -> None:
        if self.head_mode not in HEAD_MODES:
            raise ConfigError(f"head_mode must be one of {HEAD_MODES}, got {self.head_mode!r}")
        if self.dtype not in ("f32", "f64"):
            raise ConfigError(f"dtype must be f32 or f64, got {self.dtype!r}")
        if self.eval_split not in ("train", "test"):
            raise ConfigError(f"eval_split must be train or test, got {self.eval_split!r}")
        for name in ("batch_size", "eval_every", "n_parts", "heads", "blocks"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        try:
            self.model_config().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str, base: "TrainConfig | None" = None) -> "TrainConfig":
        cfg = dataclasses.replace(base) if base is not None else cls()
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected key = value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {n}: unknown key {key!r}")
            try:
                setattr(cfg, key, _parse(val, types[key]))
            except ValueError as exc:
                raise ConfigError(f"line {n}: bad value for {key!r}: {exc}") from None
        return cfg

    @classmethod
    def load(cls, path, base: "TrainConfig | None" = None) -> "TrainConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), base)

    def override(self, **kw) -> "TrainConfig":
        unknown = set(kw) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        return dataclasses.replace(self, **kw)


def _format(v) -> str:
    if v is None:
        return AUTO
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(val: str, typ: str):
    if typ.endswith("| None"):
        if val == AUTO:
            return None
        typ = typ[: -len("| None")].strip()
    if typ == "bool":
        low = val.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {val!r}")
        return low in ("true", "1", "yes")
    if typ == "int":
        return int(val)
    if typ == "float":
        return float(val)
    if typ.startswith("tuple"):
        return tuple(int(x) for x in val.split(",") if x.strip())
    return val
