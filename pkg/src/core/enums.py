from enum import Enum


class Mode(str, Enum):
    ar = "AR"
    mlm = "MLM"
    bat = "BAT"

    @classmethod
    def parse(cls, value: "str | Mode") -> "Mode":
        if isinstance(value, Mode):
            return value
        normalized = value.strip().upper().replace("_", "-")
        if normalized in ("MLM-GIBBS", "GIBBS"):
            normalized = "MLM"
        try:
            return cls(normalized)
        except ValueError:
            raise ValueError(f"Invalid mode: {value}")


class DatasetKind(str, Enum):
    stripes = "stripes"
    gradients = "gradients"
    two_pattern = "two-pattern"


class MaskPolicy(str, Enum):
    irregular = "irregular"
    top_block = "top-block"


class PredictedPosition(str, Enum):
    """Which raster position a predicted-part slot carries."""

    target = "target"
    content = "content"


class MaskBucket(str, Enum):
    tiny = "0-20"
    low = "20-40"
    mid = "40-60"
    random = "20-60"

    @property
    def bounds(self) -> tuple[float, float]:
        lo, hi = self.value.split("-")
        return int(lo) / 100, int(hi) / 100
