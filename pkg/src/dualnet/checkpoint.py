"""Single-file checkpoints.

Byte layout (all integers little-endian)::

    offset   size  field
    0        8     magic  b"DUALNET\\0"
    8        2     format version, uint16 (currently 1)
    10       4     header length H, uint32
    14       H     header, UTF-8 JSON with sorted keys and compact separators
    14+H     ...   tensor payloads, back to back in header order, each the
                   row-major little-endian bytes of one tensor
    end-32   32    SHA-256 of every preceding byte

The header holds the architecture config and its SHA-256, one record per
tensor (``name``, ``kind`` = param|buffer, ``dtype``, ``shape``, ``nbytes``),
and optional ``preprocessor``, ``history``, ``class_names``,
``feature_names`` and ``groups`` entries.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ArchitectureConfig
from .exceptions import CheckpointError, UnsupportedVersionError
from .network import Network
from .tensor import precision

MAGIC = b"DUALNET\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sHI")
_DIGEST = 32


@dataclass
class Checkpoint:
    architecture: ArchitectureConfig
    params: dict
    buffers: dict
    preprocessor: dict | None = None
    history: dict | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: Network, preprocessor=None, history=None, **extra) -> "Checkpoint":
        return cls(
            model.cfg,
            {k: t.data.copy() for k, t in model.named_parameters()},
            {k: v.copy() for k, v in model.named_buffers()},
            preprocessor,
            history,
            {k: v for k, v in extra.items() if v is not None},
        )

    def build(self) -> Network:
        dtype = next(iter(self.params.values())).dtype if self.params else np.float64
        with precision("single" if dtype == np.float32 else "double"):
            net = Network(self.architecture)
        expected = dict(net.named_parameters())
        if set(expected) != set(self.params):
            raise CheckpointError("checkpoint parameters do not match the architecture")
        for name, t in expected.items():
            if t.shape != self.params[name].shape:
                raise CheckpointError(f"parameter {name}: shape {self.params[name].shape} != {t.shape}")
            t.data[...] = self.params[name]
        for name, value in self.buffers.items():
            net.set_buffer(name, value)
        return net

    def to_bytes(self) -> bytes:
        records, payload = [], []
        for kind, tensors in (("param", self.params), ("buffer", self.buffers)):
            for name, arr in tensors.items():
                arr = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
                raw = arr.tobytes(order="C")
                records.append({"name": name, "kind": kind, "dtype": arr.dtype.str,
                                "shape": list(arr.shape), "nbytes": len(raw)})
                payload.append(raw)
        header = {
            "architecture": self.architecture.to_dict(),
            "architecture_sha256": self.architecture.fingerprint(),
            "tensors": records,
            "preprocessor": self.preprocessor,
            "history": self.history,
            **self.extra,
        }
        hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(hbytes)) + hbytes + b"".join(payload)
        return body + hashlib.sha256(body).digest()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        if len(blob) < _PREFIX.size + _DIGEST:
            raise CheckpointError("checkpoint is truncated")
        magic, version, hlen = _PREFIX.unpack_from(blob)
        if magic != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"unsupported checkpoint format version {version}")
        body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
        if hashlib.sha256(body).digest() != digest:
            raise CheckpointError("checkpoint is truncated or corrupt (checksum mismatch)")
        try:
            header = json.loads(body[_PREFIX.size:_PREFIX.size + hlen])
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise CheckpointError(f"unreadable checkpoint header: {err}") from None
        arch = ArchitectureConfig.from_dict(header.pop("architecture"))
        if header.pop("architecture_sha256") != arch.fingerprint():
            raise CheckpointError("architecture config does not match its recorded hash")
        params, buffers = {}, {}
        pos = _PREFIX.size + hlen
        for rec in header.pop("tensors"):
            end = pos + rec["nbytes"]
            if end > len(body):
                raise CheckpointError(f"tensor {rec['name']} runs past the end of the file")
            arr = np.frombuffer(body[pos:end], dtype=np.dtype(rec["dtype"])).reshape(rec["shape"]).copy()
            (params if rec["kind"] == "param" else buffers)[rec["name"]] = arr
            pos = end
        if pos != len(body):
            raise CheckpointError("trailing bytes after the last tensor")
        return cls(arch, params, buffers, header.pop("preprocessor", None), header.pop("history", None), header)


def save_checkpoint(path, model: Network, preprocessor=None, history=None, **extra) -> Checkpoint:
    ckpt = Checkpoint.from_model(model, preprocessor, history, **extra)
    Path(path).write_bytes(ckpt.to_bytes())
    return ckpt


def load_checkpoint(path, expected: ArchitectureConfig | None = None) -> tuple[Network, Checkpoint]:
    """Read and validate the whole file, then build the model; nothing is built on error."""
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err.strerror}") from None
    ckpt = Checkpoint.from_bytes(blob)
    if expected is not None and expected.fingerprint() != ckpt.architecture.fingerprint():
        raise CheckpointError("checkpoint architecture does not match the expected config")
    return ckpt.build(), ckpt
