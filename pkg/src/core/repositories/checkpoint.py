import struct

import numpy as np

from src.core.repositories.base import BaseRepository
from src.engine import numerics as nx
from src.engine.model import ModelConfig, ModelParams, parameter_shapes

MAGIC = b"BATF"
VERSION = 1


class CheckpointRepository(BaseRepository):
    """Binary checkpoint: header, ModelConfig, tensor directory, then float32 data."""

    def dumps(self, params: ModelParams) -> bytes:
        fields = params.config.as_fields()
        parts = [MAGIC, struct.pack("<I", VERSION), struct.pack(f"<{len(fields)}I", *fields)]
        parts.append(struct.pack("<I", len(params)))
        for name, tensor in params.items():
            encoded = name.encode("utf-8")
            parts.append(struct.pack("<I", len(encoded)) + encoded)
            parts.append(struct.pack(f"<I{tensor.data.ndim}I", tensor.data.ndim, *tensor.shape))
        for tensor in params.values():
            parts.append(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
        return b"".join(parts)

    def loads(self, blob: bytes, source="<bytes>", dtype=np.float32) -> ModelParams:
        view = memoryview(blob)
        offset = 0

        def take(fmt: str):
            nonlocal offset
            size = struct.calcsize(fmt)
            self._expect(offset + size <= len(view), source, "truncated checkpoint")
            values = struct.unpack_from(fmt, view, offset)
            offset += size
            return values

        self._expect(bytes(view[:4]) == MAGIC, source, "not a BATF checkpoint")
        offset = 4
        (version,) = take("<I")
        self._expect(version == VERSION, source, f"unsupported checkpoint version {version}")
        n_fields = len(ModelConfig(vocab_size=2).as_fields())
        config = ModelConfig(*take(f"<{n_fields}I"))
        (count,) = take("<I")
        directory = []
        for _ in range(count):
            (length,) = take("<I")
            self._expect(offset + length <= len(view), source, "truncated tensor name")
            name = bytes(view[offset : offset + length]).decode("utf-8")
            offset += length
            (rank,) = take("<I")
            directory.append((name, take(f"<{rank}I")))

        expected = parameter_shapes(config)
        self._expect(
            [n for n, _ in directory] == list(expected), source, "tensor directory does not match config"
        )
        tensors = {}
        for name, shape in directory:
            self._expect(tuple(shape) == expected[name], source, f"{name} has shape {shape}")
            size = int(np.prod(shape)) * 4
            self._expect(offset + size <= len(view), source, f"truncated data for {name}")
            data = np.frombuffer(view[offset : offset + size], dtype="<f4").reshape(shape)
            offset += size
            tensors[name] = nx.parameter(data.astype(dtype), name=name)
        self._expect(offset == len(view), source, "trailing bytes after tensor data")
        params = ModelParams(config, tensors)
        self._expect(params.all_finite(), source, "checkpoint holds non-finite parameters")
        return params

    def write(self, path, params: ModelParams):
        self._prepare(path).write_bytes(self.dumps(params))

    def read(self, path, dtype=np.float32) -> ModelParams:
        path = self.resolve(path)
        return self.loads(path.read_bytes(), source=path, dtype=dtype)
