"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic      8 bytes  b"QMAPCKPT"
    version    u16
    header_len u32
    header     UTF-8 JSON: topology, frozen flag, meta, seed, adam step, tensor count
    tensors    repeated: u16 name_len | name | u8 dtype (0=f4, 1=f8) | u8 ndim |
               u32 * ndim shape | raw little-endian data

Tensor names are ``param/<node>/<key>``, ``buffer/<node>/<key>``,
``adam_m/<node>/<key>`` and ``adam_v/<node>/<key>``.
"""

from __future__ import annotations

import io
import json
import os
import struct

import numpy as np

from ..errors import CheckpointError
from .graph import ComputeGraph, Node
from .optim import AdamState

MAGIC = b"QMAPCKPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def _tensors(graph: ComputeGraph, state: AdamState | None):
    stores = [("param", graph.params), ("buffer", graph.buffers)]
    if state is not None:
        stores += [("adam_m", state.m), ("adam_v", state.v)]
    for prefix, store in stores:
        for node in sorted(store):
            for key in sorted(store[node]):
                yield f"{prefix}/{node}/{key}", store[node][key]


def dumps_checkpoint(graph: ComputeGraph, state: AdamState | None = None,
                     seed: int | None = None) -> bytes:
    tensors = list(_tensors(graph, state))
    header = {
        "topology": graph.topology(),
        "frozen": graph.frozen,
        "meta": graph.meta,
        "seed": seed,
        "adam_step": None if state is None else state.step,
        "tensor_count": len(tensors),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<HI", VERSION, len(blob)))
    out.write(blob)
    for name, arr in tensors:
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        raw_name = name.encode("utf-8")
        out.write(struct.pack("<H", len(raw_name)))
        out.write(raw_name)
        out.write(struct.pack("<BB", code, arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return out.getvalue()


def save_checkpoint(path: str | os.PathLike, graph: ComputeGraph,
                    state: AdamState | None = None, seed: int | None = None) -> None:
    data = dumps_checkpoint(graph, state, seed)
    with open(os.fspath(path), "wb") as fh:
        fh.write(data)


def _read(buf: io.BytesIO, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def loads_checkpoint(data: bytes) -> tuple[ComputeGraph, AdamState | None, int | None]:
    buf = io.BytesIO(data)
    if _read(buf, 8) != MAGIC:
        raise CheckpointError("not a qmap checkpoint (bad magic)")
    version, header_len = struct.unpack("<HI", _read(buf, 6))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(_read(buf, header_len).decode("utf-8"))
    stores: dict[str, dict[str, dict[str, np.ndarray]]] = {
        "param": {}, "buffer": {}, "adam_m": {}, "adam_v": {}
    }
    for _ in range(header["tensor_count"]):
        (name_len,) = struct.unpack("<H", _read(buf, 2))
        name = _read(buf, name_len).decode("utf-8")
        code, ndim = struct.unpack("<BB", _read(buf, 2))
        if code not in _DTYPES:
            raise CheckpointError(f"{name}: unknown dtype code {code}")
        shape = struct.unpack(f"<{ndim}I", _read(buf, 4 * ndim))
        dtype = _DTYPES[code]
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(_read(buf, count * dtype.itemsize), dtype=dtype).reshape(shape)
        prefix, node, key = name.split("/", 2)
        stores[prefix].setdefault(node, {})[key] = arr.astype(dtype.newbyteorder("="))
    if buf.read(1):
        raise CheckpointError("trailing bytes after the last tensor")

    topo = header["topology"]
    nodes = [Node(n["name"], n["kind"], tuple(n["inputs"]), n["attrs"]) for n in topo["nodes"]]
    graph = ComputeGraph(
        inputs=dict(topo["inputs"]),
        nodes=nodes,
        output=topo["output"],
        params=stores["param"],
        buffers=stores["buffer"],
        dtype=topo["dtype"],
        frozen=header["frozen"],
        meta=header["meta"],
    )
    state = None
    if header["adam_step"] is not None:
        state = AdamState(step=header["adam_step"], m=stores["adam_m"], v=stores["adam_v"])
    return graph, state, header["seed"]


def load_checkpoint(path: str | os.PathLike) -> tuple[ComputeGraph, AdamState | None, int | None]:
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc.strerror})") from exc
    return loads_checkpoint(data)
