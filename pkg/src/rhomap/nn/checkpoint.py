"""Checkpoint format: JSON manifest + raw little-endian float64 payload.

The manifest records node layer kinds/configs/wiring plus parameter and
buffer shapes in payload order; the payload is the concatenation of those
arrays. Round-trips are exact (float64 in, float64 out).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import layer_from_config
from .network import Network

MANIFEST_SUFFIX = ".json"
PAYLOAD_SUFFIX = ".bin"


def _base(path) -> Path:
    path = Path(path)
    if path.suffix in (MANIFEST_SUFFIX, PAYLOAD_SUFFIX):
        path = path.with_suffix("")
    return path


def save_network(net: Network, path, optimizer=None, extra=None) -> Path:
    base = _base(path)
    base.parent.mkdir(parents=True, exist_ok=True)
    nodes = []
    chunks = []
    for layer, inputs in net.nodes:
        entry = {
            "kind": layer.kind,
            "config": layer.config(),
            "inputs": list(inputs),
            "params": [],
            "buffers": [],
        }
        for p in layer.params():
            entry["params"].append({"name": p.name, "shape": list(p.data.shape)})
            chunks.append(np.ascontiguousarray(p.data, dtype="<f8"))
        for name, buf in layer.buffers():
            entry["buffers"].append({"name": name, "shape": list(buf.shape)})
            chunks.append(np.ascontiguousarray(buf, dtype="<f8"))
        nodes.append(entry)
    manifest = {
        "format": "rhomap-net",
        "version": 1,
        "nodes": nodes,
        "optimizer": optimizer.state_scalars() if optimizer is not None else None,
        "extra": extra or {},
    }
    base.with_suffix(MANIFEST_SUFFIX).write_text(json.dumps(manifest, sort_keys=True, indent=1))
    payload = b"".join(c.tobytes(order="C") for c in chunks)
    base.with_suffix(PAYLOAD_SUFFIX).write_bytes(payload)
    return base.with_suffix(MANIFEST_SUFFIX)


def load_network(path):
    """Rebuild (network, manifest) from a checkpoint base or manifest path."""
    base = _base(path)
    try:
        manifest = json.loads(base.with_suffix(MANIFEST_SUFFIX).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed checkpoint manifest {base}: {exc}") from exc
    if manifest.get("format") != "rhomap-net":
        raise ValueError(f"not a network checkpoint: {base}")
    raw = base.with_suffix(PAYLOAD_SUFFIX).read_bytes()
    flat = np.frombuffer(raw, dtype="<f8")

    net = Network()
    offset = 0

    def take(shape):
        nonlocal offset
        n = int(np.prod(shape)) if shape else 1
        if offset + n > flat.size:
            raise ValueError("payload size mismatch in checkpoint")
        out = flat[offset : offset + n].reshape(shape).astype(np.float64)
        offset += n
        return out

    for entry in manifest["nodes"]:
        layer = layer_from_config(entry["kind"], entry["config"])
        declared = {p.name: p for p in layer.params()}
        for pinfo in entry["params"]:
            declared[pinfo["name"]].data = take(pinfo["shape"])
        buffers = dict(layer.buffers())
        for binfo in entry["buffers"]:
            value = take(binfo["shape"])
            if binfo["name"] not in buffers:
                raise ValueError(f"unknown buffer {binfo['name']!r} for {entry['kind']}")
            setattr(layer, binfo["name"], value)
        net.add(layer, tuple(entry["inputs"]))
    if offset != flat.size:
        raise ValueError("payload size mismatch in checkpoint")
    return net, manifest
