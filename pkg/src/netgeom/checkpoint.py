"""Checkpoint files: a JSON manifest header plus a raw float32 payload.

Layout: 4-byte magic ``NGC1``, little-endian uint32 manifest length, the
manifest (UTF-8 JSON, sorted keys), then every layer's parameters as raw
little-endian float32 (rows contiguous; latent weights for binary layers,
signs reconstructed on load; per-layer bias vectors follow all weight
blocks). The manifest carries a CRC32 of the payload, so truncation and
corruption are distinguishable. Byte-level output depends only on the
network and metadata passed in.
"""

import json
import zlib
from pathlib import Path

import numpy as np

from .errors import (ChecksumError, CheckpointError, PayloadLengthError,
                     SchemaVersionError, ShapeError)
from .nets import LayerSpec, Network

MAGIC = b"NGC1"
SCHEMA_VERSION = 1


def _layer_dict(spec: LayerSpec) -> dict:
    return {"fan_in": spec.fan_in, "fan_out": spec.fan_out,
            "activation": spec.activation, "has_bias": spec.has_bias,
            "weights_binary": spec.weights_binary, "frozen": spec.frozen}


def _payload_bytes(net: Network) -> bytes:
    parts = []
    for spec, w, g in zip(net.layers, net.weights, net.latent):
        src = g if spec.weights_binary else w
        parts.append(np.ascontiguousarray(src, dtype="<f4").tobytes())
    for b in net.biases:
        if b is not None:
            parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(net: Network, path, metadata=None, seed_lineage=None) -> Path:
    """Write a network to ``path``; returns the path."""
    if net.dtype != np.float32:
        raise ShapeError("checkpoints store float32 networks only")
    payload = _payload_bytes(net)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "layers": [_layer_dict(s) for s in net.layers],
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(payload),
        "seed_lineage": seed_lineage,
        "training": metadata,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        fh.write(payload)
    return path


def load_checkpoint(path) -> Network:
    """Read a network back; bit-exact round trip, latent weights included."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a netgeom checkpoint")
    mlen = int.from_bytes(raw[4:8], "little")
    if len(raw) < 8 + mlen:
        raise CheckpointError(f"{path}: truncated manifest")
    manifest = json.loads(raw[8:8 + mlen].decode("utf-8"))
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"{path}: schema version {manifest.get('schema_version')} "
            f"(supported: {SCHEMA_VERSION})")
    layers = tuple(LayerSpec(**d) for d in manifest["layers"])
    expected = 0
    for spec in layers:
        expected += spec.fan_out * spec.fan_in * 4
        if spec.has_bias:
            expected += spec.fan_out * 4
    if manifest["payload_bytes"] != expected:
        raise PayloadLengthError(
            f"{path}: manifest architecture needs {expected} payload bytes, "
            f"manifest declares {manifest['payload_bytes']}")
    payload = raw[8 + mlen:]
    if len(payload) != expected:
        raise PayloadLengthError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}")
    if zlib.crc32(payload) != manifest["payload_crc32"]:
        raise ChecksumError(f"{path}: payload checksum mismatch")

    pos = 0
    weights, latent = [], []
    for spec in layers:
        n = spec.fan_out * spec.fan_in
        block = np.frombuffer(payload, dtype="<f4", count=n, offset=pos)
        pos += n * 4
        block = block.reshape(spec.fan_out, spec.fan_in).copy()
        if spec.weights_binary:
            latent.append(block)
            weights.append(np.where(block >= 0, 1, -1).astype(np.float32))
        else:
            latent.append(None)
            weights.append(block)
    biases = []
    for spec in layers:
        if spec.has_bias:
            b = np.frombuffer(payload, dtype="<f4", count=spec.fan_out,
                              offset=pos).copy()
            pos += spec.fan_out * 4
            biases.append(b)
        else:
            biases.append(None)
    return Network(layers, tuple(weights), tuple(biases), tuple(latent))


def read_manifest(path) -> dict:
    """Just the manifest, without materializing the parameters."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a netgeom checkpoint")
        mlen = int.from_bytes(fh.read(4), "little")
        return json.loads(fh.read(mlen).decode("utf-8"))
