from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.core.enums import MaskPolicy, Mode, PredictedPosition
from src.core.errors import ConfigError


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env", env_prefix="BATFILL_", extra="ignore"
    )

    THREADS: int = Field(default=1, ge=1)
    LOG_LEVEL: str = "INFO"
    LOG_FILE: str | None = None
    DTYPE: Literal["float32", "float64"] = "float32"


settings = Settings()


MODEL_PRESETS: dict[str, dict[str, int]] = {
    "tiny": {"d_model": 32, "n_heads": 2, "n_layers": 2, "mlp_ratio": 4},
    "small": {"d_model": 64, "n_heads": 4, "n_layers": 4, "mlp_ratio": 4},
    "full": {"d_model": 256, "n_heads": 8, "n_layers": 8, "mlp_ratio": 4},
}


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, use_enum_values=False)

    mode: Mode = Mode.bat
    preset: Literal["tiny", "small", "full"] = "tiny"
    lr: float = Field(default=3e-4, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.95, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    weight_decay: float = Field(default=0.01, ge=0)
    batch_size: int = Field(default=8, ge=1)
    steps: int = Field(default=1000, ge=0)
    warmup_frac: float = Field(default=0.02, ge=0, lt=1)
    final_lr_frac: float = Field(default=0.1, ge=0, le=1)
    clip_norm: float | None = Field(default=None, gt=0)
    seed: int = 0
    mask_lo: float = Field(default=0.4, ge=0, le=1)
    mask_hi: float = Field(default=0.6, ge=0, le=1)
    mask_policy: MaskPolicy = MaskPolicy.irregular
    log_every: int = Field(default=50, ge=1)
    predicted_position: PredictedPosition = PredictedPosition.target

    @model_validator(mode="before")
    @classmethod
    def _parse_mode(cls, data: Any) -> Any:
        if isinstance(data, dict) and isinstance(data.get("mode"), str):
            try:
                data = {**data, "mode": Mode.parse(data["mode"])}
            except ValueError:
                pass  # left for the field validator to report
        return data

    @model_validator(mode="after")
    def _check_bucket(self) -> "TrainConfig":
        if not self.mask_lo < self.mask_hi:
            raise ValueError(f"mask bucket [{self.mask_lo}, {self.mask_hi}] is empty")
        return self


class SampleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    top_k: int = Field(default=50, ge=1)
    temperature: float = Field(default=1.0, gt=0)
    n_samples: int = Field(default=1, ge=1)
    seed: int = 0
    gibbs_sweeps: int = Field(default=2, ge=1)

    def check_vocab(self, vocab_size: int) -> "SampleConfig":
        if self.top_k > vocab_size:
            raise ConfigError(f"top_k={self.top_k} exceeds vocabulary size {vocab_size}")
        return self


class AblationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    sample: SampleConfig = SampleConfig(top_k=1)
    gibbs_sweeps: int = Field(default=1, ge=1)
    n_eval_samples: int = Field(default=4, ge=1)
    mask_policy: MaskPolicy = MaskPolicy.irregular


def parse_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing key")
        values[key] = value
    return values


def _line_of(text: str, key: str) -> int | None:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if "=" in line and line.split("=", 1)[0].strip() == key:
            return lineno
    return None


def load_train_config(path: str | Path, **overrides: Any) -> TrainConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: not a text file") from None
    raw: dict[str, Any] = parse_key_values(text, str(path))
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return build_train_config(raw, source=str(path), text=text)


def build_train_config(raw: dict[str, Any], source: str = "<flags>", text: str = "") -> TrainConfig:
    if raw.get("clip_norm") in ("", "none", "None"):
        raw = {**raw, "clip_norm": None}
    try:
        return TrainConfig.model_validate(raw)
    except ValidationError as e:
        error = e.errors()[0]
        key = str(error["loc"][0]) if error["loc"] else "?"
        where = _line_of(text, key) if text else None
        prefix = f"{source}:{where}" if where else source
        if error["type"] == "extra_forbidden":
            raise ConfigError(f"{prefix}: unknown key '{key}'") from None
        raise ConfigError(f"{prefix}: invalid value for '{key}': {error['msg']}") from None
    except ValueError as e:
        raise ConfigError(f"{source}: {e}") from None


def dump_train_config(cfg: TrainConfig) -> str:
    lines = []
    for key, value in cfg.model_dump(mode="json").items():
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
