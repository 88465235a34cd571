import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, ValidationError

from src.core.repositories.base import BaseRepository, sha256_file


class RunManifest(BaseModel):
    subcommand: str
    argv: list[str]
    config: dict[str, Any] = Field(default_factory=dict)
    seed: int | None = None
    inputs: dict[str, str] = Field(default_factory=dict)
    outputs: dict[str, str] = Field(default_factory=dict)
    hashes: dict[str, str] = Field(default_factory=dict)

    def record_outputs(self, **paths: Path) -> "RunManifest":
        for key, path in paths.items():
            self.outputs[key] = str(path)
            self.hashes[key] = sha256_file(path)
        return self

    def verify(self) -> list[str]:
        """Output keys whose file is missing or differs from the recorded hash."""
        stale = []
        for key, path in self.outputs.items():
            if not Path(path).exists() or sha256_file(path) != self.hashes.get(key):
                stale.append(key)
        return stale


class ManifestRepository(BaseRepository):
    FILENAME = "manifest.json"

    def write(self, directory, manifest: RunManifest, filename: str | None = None) -> Path:
        path = self._prepare(Path(directory) / (filename or self.FILENAME))
        payload = manifest.model_dump(mode="json")
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def read(self, path) -> RunManifest:
        path = self.resolve(path)
        if path.is_dir():
            path = path / self.FILENAME
        try:
            return RunManifest.model_validate_json(self._read_text(path, "utf-8"))
        except ValidationError as e:
            raise self._error(path, f"invalid manifest: {e.errors()[0]['msg']}") from None
