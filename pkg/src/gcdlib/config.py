"""Run configuration: one flat record covering model, loss and trainer knobs.

The on-disk form is canonical key=value text (UTF-8, one pair per line,
sorted keys, '#' starts a comment). Unknown keys are rejected so typos fail
loudly. A handful of run-defining keys are required in config files passed
to `train`; everything else falls back to the defaults below.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from gcdlib.errors import ConfigError

# Keys a training config file must spell out explicitly.
REQUIRED_KEYS = ("epochs", "batch_size", "lr", "seed")


@dataclass
class Config:
    # classifier temperatures
    student_temp: float = 0.1
    teacher_temp_start: float = 0.07
    teacher_temp_end: float = 0.04
    teacher_warmup_epochs: int = 30
    ova_temp: float = 0.1
    debias_temp: float = 0.1
    contrast_temp_unsup: float = 0.07
    contrast_temp_sup: float = 0.07
    # loss weights
    mean_entropy_weight: float = 2.0
    cls_balance: float = 0.35
    sdl_weight: float = 0.01
    adl_weight: float = 1.0
    debias_threshold: float = 0.85
    # projector widths (hidden layers reuse the input width)
    rep_dim: int = 256
    sdl_dim: int = 256
    # optimisation
    epochs: int = 200
    iters_per_epoch: int = 0  # 0 = ceil(n_unlabelled / (batch_size / 2))
    batch_size: int = 128
    labelled_fraction: float = 0.5
    lr: float = 0.1
    lr_floor: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 5e-5
    # augmentation
    aug_noise_sigma: float = 0.05
    aug_dropout: float = 0.1
    aug_renormalize: bool = True
    # run control
    seed: int = 1
    eval_every: int = 10
    # branch switches
    enable_gcd: bool = True
    enable_sdl: bool = True
    enable_adl: bool = True
    enable_distribution_guidance: bool = True
    debias_on_gcd_classifier: bool = False
    symmetric_distillation: bool = True

    def validate(self) -> "Config":
        positive = (
            "student_temp", "teacher_temp_start", "teacher_temp_end", "ova_temp",
            "debias_temp", "contrast_temp_unsup", "contrast_temp_sup", "lr",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not (0 <= self.cls_balance <= 1):
            raise ConfigError("cls_balance must lie in [0, 1]")
        if not (0 < self.debias_threshold < 1):
            raise ConfigError("debias_threshold must lie in (0, 1)")
        if self.sdl_weight < 0 or self.adl_weight < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.epochs < 1 or self.batch_size < 2:
            raise ConfigError("need epochs >= 1 and batch_size >= 2")
        if self.iters_per_epoch < 0:
            raise ConfigError("iters_per_epoch must be >= 0 (0 = auto)")
        if not (0 < self.labelled_fraction < 1):
            raise ConfigError("labelled_fraction must lie in (0, 1)")
        if self.teacher_warmup_epochs < 1:
            raise ConfigError("teacher_warmup_epochs must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.mean_entropy_weight < 0:
            raise ConfigError("mean_entropy_weight must be >= 0")
        if self.rep_dim < 1 or self.sdl_dim < 1:
            raise ConfigError("projector output dims must be >= 1")
        if self.enable_distribution_guidance and not self.enable_sdl:
            raise ConfigError("distribution guidance needs enable_sdl=true")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _parse_value(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    if ftype == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"key {key!r}: expected a boolean, got {raw!r}")
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: {exc}") from None
    raise ConfigError(f"key {key!r} has unsupported type {ftype}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def config_to_text(cfg: Config, extra: dict[str, int] | None = None) -> str:
    """Canonical text form: sorted key=value lines, one per line."""
    pairs = {f.name: getattr(cfg, f.name) for f in fields(Config)}
    if extra:
        overlap = set(extra) & set(pairs)
        if overlap:
            raise ConfigError(f"extra config keys shadow fields: {sorted(overlap)}")
        pairs.update(extra)
    return "".join(f"{k}={_format_value(pairs[k])}\n" for k in sorted(pairs))


def parse_config_text(text: str, require: tuple[str, ...] = (),
                      extra_keys: tuple[str, ...] = ()) -> tuple[Config, dict[str, int]]:
    """Parse key=value text into a Config plus any requested extra int keys."""
    values: dict[str, object] = {}
    extras: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key in extra_keys:
            extras[key] = int(raw)
        elif key in _FIELD_TYPES:
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            values[key] = _parse_value(key, raw)
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
    missing = [k for k in require if k not in values]
    if missing:
        raise ConfigError(f"missing required config key(s): {', '.join(missing)}")
    cfg = Config(**values).validate()
    return cfg, extras


def load_config_file(path) -> Config:
    with open(path, "r", encoding="utf-8") as f:
        cfg, _ = parse_config_text(f.read(), require=REQUIRED_KEYS)
    return cfg
