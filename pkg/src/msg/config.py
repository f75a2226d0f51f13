"""Training / model configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .corpus import BatchLimits

AGGREGATION_MODES = ("merge", "last", "uniform")
GATE_MODES = ("sigmoid", "softmax")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    # optimisation
    lr: float = 0.15
    init_acc: float = 0.1
    dropout: float = 0.5
    batch_size: int = 32
    init_range: float = 0.05
    phase1_epochs: int = 20
    phase2_epochs: int = 5
    lambda_cov: float = 0.1
    grad_clip: float = 2.0
    seed: int = 1
    dtype: str = "float32"
    # data
    vocab_size: int = 50_000
    max_question_len: int = 30
    max_sentences: int = 25
    max_sentence_len: int = 40
    max_answer_len: int = 50
    # model
    emb_dim: int = 300
    hidden: int = 256
    dec_hidden: int = 256
    attn_dim: int = 256
    hops: int = 3
    lambda_mar: float = 0.5
    # ablations
    mar_unit: bool = True
    aggregation: str = "merge"
    gate: str = "sigmoid"
    question_pointer: bool = True
    mvc: bool = True
    refine: bool = True
    # decoding
    beam_size: int = 4

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("lr", "init_acc", "init_range", "batch_size", "emb_dim", "hidden",
                     "dec_hidden", "attn_dim", "beam_size", "vocab_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lambda_cov", "lambda_mar", "dropout"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.dropout >= 1.0:
            raise ConfigError("dropout must be < 1")
        if self.hops < 1:
            raise ConfigError(f"hops must be >= 1, got {self.hops}")
        if self.phase1_epochs < 0 or self.phase2_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.aggregation not in AGGREGATION_MODES:
            raise ConfigError(f"aggregation must be one of {AGGREGATION_MODES}, got {self.aggregation!r}")
        if self.gate not in GATE_MODES:
            raise ConfigError(f"gate must be one of {GATE_MODES}, got {self.gate!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def limits(self) -> BatchLimits:
        return BatchLimits(self.max_question_len, self.max_sentences, self.max_sentence_len, self.max_answer_len)

    @property
    def epochs(self) -> int:
        return self.phase1_epochs + self.phase2_epochs

    def replace(self, **overrides) -> "TrainConfig":
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    # -- flat text file -------------------------------------------------------

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path, **overrides) -> "TrainConfig":
        values = parse_config_text(Path(path).read_text(encoding="utf-8"))
        values.update(overrides)
        return cls.from_dict(values)


def _coerce(name: str, raw: str, typ):
    raw = raw.strip()
    if typ in (bool, "bool"):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {typ}") from exc
    return raw


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def coerce_value(name: str, raw):
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key: {name}")
    if not isinstance(raw, str):
        return raw
    return _coerce(name, raw, _FIELD_TYPES[name])


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = coerce_value(key, value)
    return out
