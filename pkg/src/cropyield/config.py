"""Run configuration: every tunable knob in one flat dataclass.

Configs live on disk as flat ``key=value`` text. Unknown keys are rejected
rather than ignored, and the fully resolved config (defaults + file +
command-line overrides) is snapshotted verbatim into each run directory so
a run can be reproduced from the snapshot and nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .attention import ATTENTION_MODES, CONV_MODES, RESERVED_ATTENTION_MODES
from .eo import FEATURE_SELECTORS, RESERVED_SELECTORS
from .errors import ConfigError


@dataclass
class RunConfig:
    seed: int = 0
    # synthetic data
    source: str = "S2"
    n_plots: int = 60
    t_steps: int = 6
    height: int = 10
    width: int = 10
    yield_noise: float = 0.05
    preprocess: str = "laplacian"  # laplacian | none
    # diffusion augmentation
    diff_steps: int = 10
    beta_start: float = 0.95
    beta_end: float = 0.30
    lambda_consistency: float = 0.1
    augment_depth: int = 1
    sigma_scale: float = 0.1
    denoiser_hidden: int = 8
    denoiser_epochs: int = 8
    denoiser_lr: float = 0.001
    # recurrent encoder
    kernel_size: int = 3
    hidden_channels: int = 8
    # attention fusion
    se_reduction: int = 2
    shuffle_groups: int = 2
    experts: int = 2
    history: int = 2
    attention_mode: str = "senet_shuffle"
    conv_mode: str = "conv_condconv"
    # contrastive pre-training
    temperature: float = 0.22
    embed_dim: int = 16
    pretrain_epochs: int = 20
    pretrain_lr: float = 0.01
    batch_size: int = 8
    # feature selection
    feature_selector: str = "eo"  # eo | none (golden_ratio, sailfish reserved)
    eo_particles: int = 20
    eo_iters: int = 100
    eo_alpha: float = 0.5
    eo_lambda: float = 1.0
    ridge_penalty: float = 0.01
    sparsity_weight: float = 0.01
    # final training: head-only warm-up, then optional joint fine-tune
    head_activation: str = "identity"  # identity | relu
    train_epochs: int = 600
    train_lr: float = 0.3
    finetune_encoder: bool = True
    finetune_epochs: int = 100
    finetune_lr: float = 0.05
    patience: int = 8
    head_bias_only: bool = False
    # reporting
    percent: bool = False

    def validate(self) -> "RunConfig":
        if self.source not in ("S1", "S2", "L8"):
            raise ConfigError(f"source must be S1, S2 or L8, got {self.source!r}")
        if self.preprocess not in ("laplacian", "none"):
            raise ConfigError(f"preprocess must be laplacian or none, got {self.preprocess!r}")
        if self.attention_mode in RESERVED_ATTENTION_MODES:
            raise ConfigError(
                f"attention_mode {self.attention_mode!r} is a reserved tag without an implementation"
            )
        if self.attention_mode not in ATTENTION_MODES:
            raise ConfigError(f"unknown attention_mode {self.attention_mode!r}")
        if self.conv_mode not in CONV_MODES:
            raise ConfigError(f"unknown conv_mode {self.conv_mode!r}")
        if self.feature_selector in RESERVED_SELECTORS:
            raise ConfigError(
                f"feature_selector {self.feature_selector!r} is a reserved tag without an implementation"
            )
        if self.feature_selector not in FEATURE_SELECTORS:
            raise ConfigError(f"unknown feature_selector {self.feature_selector!r}")
        if self.head_activation not in ("identity", "relu"):
            raise ConfigError(f"head_activation must be identity or relu, got {self.head_activation!r}")
        if self.t_steps < self.history + 1:
            raise ConfigError(
                f"t_steps={self.t_steps} too short for history={self.history} (need history+1)"
            )
        if not 0 <= self.augment_depth <= self.diff_steps:
            raise ConfigError(
                f"augment_depth={self.augment_depth} outside 0..diff_steps={self.diff_steps}"
            )
        if self.hidden_channels % self.se_reduction or self.hidden_channels % self.shuffle_groups:
            raise ConfigError(
                "se_reduction and shuffle_groups must divide hidden_channels"
            )
        return self


_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELDS[key]
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"bad boolean for {key}: {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad {kind} for {key}: {raw!r}") from None
    return raw


def parse_overrides(text: str) -> dict:
    """key=value lines -> typed dict; '#' starts a comment; unknown keys rejected."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the config file, then explicit overrides; validated."""
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_overrides(fh.read()))
    for key, value in (overrides or {}).items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value if not isinstance(value, str) else _coerce(key, value)
    return RunConfig(**values).validate()


def config_text(cfg: RunConfig) -> str:
    lines = [f"{f.name}={getattr(cfg, f.name)}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"
