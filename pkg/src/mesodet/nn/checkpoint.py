"""Checkpoint format: a JSON header followed by raw parameter bytes.

Layout: u32 little-endian header length, then that many bytes of UTF-8
JSON ({"config": ..., "epoch": ..., "metrics": ..., "manifest": [...]})
and finally the concatenated float32 little-endian arrays in declaration
order. Each manifest entry records (name, shape, byte offset into the
blob), so single arrays can be read without loading the rest.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import ModelConfig, Network


def save_checkpoint(path, net: Network, epoch: int = 0, metrics: dict | None = None) -> None:
    entries = net.state_arrays()
    manifest = []
    offset = 0
    blobs = []
    for name, arr in entries:
        a = np.ascontiguousarray(arr, dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps(
        {
            "config": net.config_dict(),
            "in_channels": net.in_channels,
            "epoch": epoch,
            "metrics": metrics or {},
            "manifest": manifest,
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_checkpoint(path, dtype=np.float32) -> tuple:
    """Returns (network, epoch, metrics) with weights restored."""
    with open(path, "rb") as fh:
        raw = fh.read()
    (hlen,) = struct.unpack_from("<I", raw, 0)
    header = json.loads(raw[4 : 4 + hlen].decode("utf-8"))
    net = Network(ModelConfig(**header["config"]), in_channels=header["in_channels"], dtype=dtype)
    base = 4 + hlen
    by_name = dict(net.state_arrays())
    for entry in header["manifest"]:
        arr = by_name.get(entry["name"])
        if arr is None:
            raise ValueError(f"checkpoint names unknown parameter {entry['name']!r}")
        shape = tuple(entry["shape"])
        if arr.shape != shape:
            raise ValueError(f"{entry['name']}: checkpoint shape {shape} != model shape {arr.shape}")
        n = int(np.prod(shape)) if shape else 1
        vals = np.frombuffer(raw, dtype="<f4", count=n, offset=base + entry["offset"]).reshape(shape)
        arr[...] = vals.astype(dtype)
    return net, header["epoch"], header["metrics"]
